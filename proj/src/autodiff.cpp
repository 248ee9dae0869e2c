#include "gskit/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace gskit::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

const Tensor& Var::value() const { return graph->value(id); }
const Tensor& Var::grad() const { return graph->grad(id); }
bool Var::requires_grad() const { return graph->requires_grad(id); }

Var Graph::constant(Tensor value) { return record(std::move(value), false, nullptr); }
Var Graph::variable(Tensor value) { return record(std::move(value), true, nullptr); }

Var Graph::record(Tensor value, bool requires_grad, Rule rule) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor& Graph::grad(int id) {
  Node& n = *nodes_[static_cast<std::size_t>(id)];
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::seed(Var v, const Tensor& g) {
  if (v.graph != this) throw std::invalid_argument("seed: variable belongs to another graph");
  if (g.shape() != value(v.id).shape()) {
    throw std::invalid_argument("seed: gradient " + shape_string(g.shape()) + " does not match value " +
                                shape_string(value(v.id).shape()));
  }
  grad(v.id).array() += g.array();
}

void Graph::backward() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.requires_grad || !n.rule || n.grad.size() != n.value.size() || n.grad.empty()) continue;
    n.rule(n.grad);
  }
}

namespace {

void require_rank(const Tensor& t, Index rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_string(t.shape()));
  }
}

Graph& graph_of(std::initializer_list<Var> vars) {
  Graph* g = nullptr;
  for (const Var& v : vars) {
    if (!v.graph) throw std::invalid_argument("operation on an unbound variable");
    if (g && g != v.graph) throw std::invalid_argument("operands belong to different graphs");
    g = v.graph;
  }
  return *g;
}

bool any_grad(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.requires_grad()) return true;
  }
  return false;
}

// Output columns [lo, hi) whose input column ox * stride - pad + kx lies in [0, w).
std::pair<Index, Index> valid_range(Index w, int stride, int pad, int kx, Index wo) {
  const Index off = kx - pad;
  const Index lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  const Index hi = w - off <= 0 ? 0 : std::min(wo, (w - off - 1) / stride + 1);
  return {std::min(lo, hi), hi};
}

void im2col(const double* x, Index ci, Index h, Index w, int k, int stride, int pad, Index ho, Index wo, double* cols) {
  const Index p = ho * wo;
  for (Index c = 0; c < ci; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + ((c * k + ky) * k + kx) * p;
        const auto [lo, hi] = valid_range(w, stride, pad, kx, wo);
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          double* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = x + (c * h + iy) * w + kx - pad;
          std::fill(dst, dst + lo, 0.0);
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (Index ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + wo, 0.0);
        }
      }
    }
  }
}

void col2im(const double* cols, Index ci, Index h, Index w, int k, int stride, int pad, Index ho, Index wo, double* x) {
  const Index p = ho * wo;
  for (Index c = 0; c < ci; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + ((c * k + ky) * k + kx) * p;
        const auto [lo, hi] = valid_range(w, stride, pad, kx, wo);
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = x + (c * h + iy) * w + kx - pad;
          const double* src = row + oy * wo;
          for (Index ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  Graph& g = graph_of({x, w, b});
  const Tensor& X = x.value();
  const Tensor& Wt = w.value();
  require_rank(X, 4, "conv2d input");
  require_rank(Wt, 4, "conv2d kernel");
  const Index n = X.dim(0), ci = X.dim(1), h = X.dim(2), wd = X.dim(3);
  const Index co = Wt.dim(0);
  const int k = static_cast<int>(Wt.dim(2));
  if (Wt.dim(1) != ci) {
    throw std::invalid_argument("conv2d: kernel expects " + std::to_string(Wt.dim(1)) + " input channels, got " +
                                std::to_string(ci));
  }
  if (Wt.dim(3) != k || b.value().size() != co) throw std::invalid_argument("conv2d: malformed kernel or bias");
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: invalid stride or padding");
  const Index ho = (h + 2 * pad - k) / stride + 1;
  const Index wo = (wd + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: kernel larger than padded input");
  const Index kk = ci * k * k;
  const Index p = ho * wo;
  const bool direct = k == 1 && stride == 1 && pad == 0;

  Tensor Y({n, co, ho, wo});
  const ConstMatMap Wm(Wt.data(), co, kk);
  const Eigen::Map<const Eigen::VectorXd> bias(b.value().data(), co);
  // Columns are rebuilt per sample in both passes so the buffer stays in cache.
  RowMat cols(direct ? 0 : kk, direct ? 0 : p);
  for (Index s = 0; s < n; ++s) {
    const double* xs = X.data() + s * ci * h * wd;
    if (!direct) im2col(xs, ci, h, wd, k, stride, pad, ho, wo, cols.data());
    MatMap ys(Y.data() + s * co * p, co, p);
    ys.noalias() = Wm * ConstMatMap(direct ? xs : cols.data(), kk, p);
    ys.colwise() += bias;
  }

  const bool rg = any_grad({x, w, b});
  return g.record(std::move(Y), rg, [=, &g](const Tensor& dy) {
    const Tensor& Xv = g.value(x.id);
    const Tensor& Wv = g.value(w.id);
    const ConstMatMap Wm2(Wv.data(), co, kk);
    RowMat cols2(direct ? 0 : kk, direct ? 0 : p);
    RowMat dcols;
    for (Index s = 0; s < n; ++s) {
      const double* xs = Xv.data() + s * ci * h * wd;
      const ConstMatMap dys(dy.data() + s * co * p, co, p);
      if (w.requires_grad()) {
        if (!direct) im2col(xs, ci, h, wd, k, stride, pad, ho, wo, cols2.data());
        MatMap(g.grad(w.id).data(), co, kk).noalias() += dys * ConstMatMap(direct ? xs : cols2.data(), kk, p).transpose();
      }
      if (b.requires_grad()) Eigen::Map<Eigen::VectorXd>(g.grad(b.id).data(), co) += dys.rowwise().sum();
      if (x.requires_grad()) {
        double* dx = g.grad(x.id).data() + s * ci * h * wd;
        if (direct) {
          MatMap(dx, kk, p).noalias() += Wm2.transpose() * dys;
        } else {
          dcols.noalias() = Wm2.transpose() * dys;
          col2im(dcols.data(), ci, h, wd, k, stride, pad, ho, wo, dx);
        }
      }
    }
  });
}

Var relu(Var x) {
  Graph& g = graph_of({x});
  Tensor y(x.shape());
  y.array() = x.value().array().max(0.0);
  return g.record(std::move(y), x.requires_grad(), [x, &g](const Tensor& dy) {
    g.grad(x.id).array() += (g.value(x.id).array() > 0).select(dy.array(), 0.0);
  });
}

namespace {

// Standardizes groups of a N x C x H x W tensor. Group (s, c) spans the H x W
// plane for instance statistics; batch statistics pool every s for a c.
struct Standardized {
  Tensor xhat;
  Eigen::VectorXd inv_std;  // per group
  Index groups = 0;
};

Standardized standardize(const Tensor& x, bool per_sample, double eps) {
  const Index n = x.dim(0), c = x.dim(1);
  const Index m = x.size() / (n * c);
  Standardized st;
  st.xhat = Tensor(x.shape());
  st.groups = per_sample ? n * c : c;
  st.inv_std.resize(st.groups);
  for (Index gidx = 0; gidx < st.groups; ++gidx) {
    const Index ch = per_sample ? gidx % c : gidx;
    const Index s0 = per_sample ? gidx / c : 0;
    const Index s1 = per_sample ? s0 + 1 : n;
    const double count = static_cast<double>((s1 - s0) * m);
    double mean = 0;
    for (Index s = s0; s < s1; ++s) mean += Eigen::Map<const Eigen::ArrayXd>(x.data() + (s * c + ch) * m, m).sum();
    mean /= count;
    double var = 0;
    for (Index s = s0; s < s1; ++s) var += (Eigen::Map<const Eigen::ArrayXd>(x.data() + (s * c + ch) * m, m) - mean).square().sum();
    var /= count;
    const double inv = 1.0 / std::sqrt(var + eps);
    st.inv_std[gidx] = inv;
    for (Index s = s0; s < s1; ++s) {
      Eigen::Map<Eigen::ArrayXd>(st.xhat.data() + (s * c + ch) * m, m) =
          (Eigen::Map<const Eigen::ArrayXd>(x.data() + (s * c + ch) * m, m) - mean) * inv;
    }
  }
  return st;
}

// dx for standardization given dxhat: inv * (dxhat - mean(dxhat) - xhat mean(dxhat xhat)).
void standardize_backward(const Standardized& st, const Tensor& dxhat, bool per_sample, Index n, Index c, Tensor& dx) {
  const Index m = dxhat.size() / (n * c);
  for (Index gidx = 0; gidx < st.groups; ++gidx) {
    const Index ch = per_sample ? gidx % c : gidx;
    const Index s0 = per_sample ? gidx / c : 0;
    const Index s1 = per_sample ? s0 + 1 : n;
    const double count = static_cast<double>((s1 - s0) * m);
    double mean_d = 0, mean_dx = 0;
    for (Index s = s0; s < s1; ++s) {
      const Index off = (s * c + ch) * m;
      const Eigen::Map<const Eigen::ArrayXd> d(dxhat.data() + off, m);
      mean_d += d.sum();
      mean_dx += (d * Eigen::Map<const Eigen::ArrayXd>(st.xhat.data() + off, m)).sum();
    }
    mean_d /= count;
    mean_dx /= count;
    for (Index s = s0; s < s1; ++s) {
      const Index off = (s * c + ch) * m;
      Eigen::Map<Eigen::ArrayXd>(dx.data() + off, m) +=
          st.inv_std[gidx] * (Eigen::Map<const Eigen::ArrayXd>(dxhat.data() + off, m) - mean_d -
                              Eigen::Map<const Eigen::ArrayXd>(st.xhat.data() + off, m) * mean_dx);
    }
  }
}

}  // namespace

Var normalize(Var x, Var gamma, Var beta, NormKind kind, double eps) {
  Graph& g = graph_of({x, gamma, beta});
  require_rank(x.value(), 4, "normalize");
  const Index n = x.dim(0), c = x.dim(1);
  const Index m = x.value().size() / (n * c);
  if (gamma.value().size() != c || beta.value().size() != c) throw std::invalid_argument("normalize: affine size mismatch");
  const bool per_sample = kind == NormKind::instance;
  auto st = std::make_shared<Standardized>(standardize(x.value(), per_sample, eps));
  Tensor y(x.shape());
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * m;
      Eigen::Map<Eigen::ArrayXd>(y.data() + off, m) =
          gamma.value().data()[ch] * Eigen::Map<const Eigen::ArrayXd>(st->xhat.data() + off, m) + beta.value().data()[ch];
    }
  }
  return g.record(std::move(y), any_grad({x, gamma, beta}), [=, &g](const Tensor& dy) {
    const double* gm = g.value(gamma.id).data();
    Tensor dxhat(dy.shape());
    for (Index s = 0; s < n; ++s) {
      for (Index ch = 0; ch < c; ++ch) {
        const Index off = (s * c + ch) * m;
        const Eigen::Map<const Eigen::ArrayXd> d(dy.data() + off, m);
        if (gamma.requires_grad()) g.grad(gamma.id).data()[ch] += (d * Eigen::Map<const Eigen::ArrayXd>(st->xhat.data() + off, m)).sum();
        if (beta.requires_grad()) g.grad(beta.id).data()[ch] += d.sum();
        Eigen::Map<Eigen::ArrayXd>(dxhat.data() + off, m) = d * gm[ch];
      }
    }
    if (x.requires_grad()) standardize_backward(*st, dxhat, per_sample, n, c, g.grad(x.id));
  });
}

Var adain(Var x, Var style, double eps) {
  Graph& g = graph_of({x, style});
  require_rank(x.value(), 4, "adain content");
  require_rank(style.value(), 2, "adain style");
  const Index n = x.dim(0), c = x.dim(1);
  const Index m = x.value().size() / (n * c);
  if (style.dim(0) != n || style.dim(1) != 2 * c) {
    throw std::invalid_argument("adain: style must be N x 2C, got " + shape_string(style.shape()));
  }
  auto st = std::make_shared<Standardized>(standardize(x.value(), true, eps));
  Tensor y(x.shape());
  const double* sv = style.value().data();
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * m;
      Eigen::Map<Eigen::ArrayXd>(y.data() + off, m) =
          sv[s * 2 * c + ch] * Eigen::Map<const Eigen::ArrayXd>(st->xhat.data() + off, m) + sv[s * 2 * c + c + ch];
    }
  }
  return g.record(std::move(y), any_grad({x, style}), [=, &g](const Tensor& dy) {
    const double* sv2 = g.value(style.id).data();
    Tensor dxhat(dy.shape());
    for (Index s = 0; s < n; ++s) {
      for (Index ch = 0; ch < c; ++ch) {
        const Index off = (s * c + ch) * m;
        const Eigen::Map<const Eigen::ArrayXd> d(dy.data() + off, m);
        if (style.requires_grad()) {
          double* gs = g.grad(style.id).data();
          gs[s * 2 * c + ch] += (d * Eigen::Map<const Eigen::ArrayXd>(st->xhat.data() + off, m)).sum();
          gs[s * 2 * c + c + ch] += d.sum();
        }
        Eigen::Map<Eigen::ArrayXd>(dxhat.data() + off, m) = d * sv2[s * 2 * c + ch];
      }
    }
    if (x.requires_grad()) standardize_backward(*st, dxhat, true, n, c, g.grad(x.id));
  });
}

Eigen::MatrixXd upsample_matrix(Index in, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
  const Index out = in * factor;
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(out, in);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const Index i0 = static_cast<Index>(std::floor(src));
    const Index i1 = std::min<Index>(i0 + 1, in - 1);
    const double f = src - static_cast<double>(i0);
    u(o, i0) += 1 - f;
    u(o, i1) += f;
  }
  return u;
}

Var upsample_bilinear(Var x, int factor) {
  Graph& g = graph_of({x});
  require_rank(x.value(), 4, "upsample_bilinear");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (factor == 1) {
    return g.record(x.value(), x.requires_grad(), [x, &g](const Tensor& dy) { g.grad(x.id).array() += dy.array(); });
  }
  const RowMat uh = upsample_matrix(h, factor);
  const RowMat uw = upsample_matrix(w, factor);
  const Index ho = h * factor, wo = w * factor;
  Tensor y({n, c, ho, wo});
  RowMat tmp;
  for (Index pl = 0; pl < n * c; ++pl) {
    tmp.noalias() = ConstMatMap(x.value().data() + pl * h * w, h, w) * uw.transpose();
    MatMap(y.data() + pl * ho * wo, ho, wo).noalias() = uh * tmp;
  }
  return g.record(std::move(y), x.requires_grad(), [=, &g](const Tensor& dy) {
    RowMat t;
    Tensor& dx = g.grad(x.id);
    for (Index pl = 0; pl < n * c; ++pl) {
      t.noalias() = uh.transpose() * ConstMatMap(dy.data() + pl * ho * wo, ho, wo);
      MatMap(dx.data() + pl * h * w, h, w).noalias() += t * uw;
    }
  });
}

namespace {

struct Bilinear {
  Index j0, j1, k0, k1;
  double w00, w01, w10, w11;
};

Bilinear bilinear_weights(double x, double y, Index h, Index w) {
  if (!(x >= 0 && y >= 0 && x <= static_cast<double>(w - 1) && y <= static_cast<double>(h - 1))) {
    throw std::out_of_range("feature point (" + std::to_string(x) + ", " + std::to_string(y) + ") outside " +
                            std::to_string(h) + " x " + std::to_string(w) + " feature map");
  }
  Bilinear b;
  b.k0 = static_cast<Index>(std::floor(x));
  b.j0 = static_cast<Index>(std::floor(y));
  b.k1 = std::min<Index>(b.k0 + 1, w - 1);
  b.j1 = std::min<Index>(b.j0 + 1, h - 1);
  const double fx = x - static_cast<double>(b.k0);
  const double fy = y - static_cast<double>(b.j0);
  b.w00 = (1 - fy) * (1 - fx);
  b.w01 = (1 - fy) * fx;
  b.w10 = fy * (1 - fx);
  b.w11 = fy * fx;
  return b;
}

}  // namespace

Var extract_at(Var x, const std::vector<FeaturePoint>& points) {
  Graph& g = graph_of({x});
  require_rank(x.value(), 4, "extract_at");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index P = static_cast<Index>(points.size());
  std::vector<Bilinear> weights;
  weights.reserve(points.size());
  for (const auto& pt : points) {
    if (pt.batch < 0 || pt.batch >= n) throw std::out_of_range("extract_at: batch index out of range");
    weights.push_back(bilinear_weights(pt.x, pt.y, h, w));
  }
  Tensor y({P, c});
  const double* xv = x.value().data();
  for (Index p = 0; p < P; ++p) {
    const auto& b = weights[static_cast<std::size_t>(p)];
    for (Index ch = 0; ch < c; ++ch) {
      const double* pl = xv + (points[static_cast<std::size_t>(p)].batch * c + ch) * h * w;
      y(p, ch) = b.w00 * pl[b.j0 * w + b.k0] + b.w01 * pl[b.j0 * w + b.k1] + b.w10 * pl[b.j1 * w + b.k0] +
                 b.w11 * pl[b.j1 * w + b.k1];
    }
  }
  return g.record(std::move(y), x.requires_grad(), [=, &g](const Tensor& dy) {
    double* dx = g.grad(x.id).data();
    for (Index p = 0; p < P; ++p) {
      const auto& b = weights[static_cast<std::size_t>(p)];
      for (Index ch = 0; ch < c; ++ch) {
        double* pl = dx + (points[static_cast<std::size_t>(p)].batch * c + ch) * h * w;
        const double d = dy(p, ch);
        pl[b.j0 * w + b.k0] += b.w00 * d;
        pl[b.j0 * w + b.k1] += b.w01 * d;
        pl[b.j1 * w + b.k0] += b.w10 * d;
        pl[b.j1 * w + b.k1] += b.w11 * d;
      }
    }
  });
}

Var gather(Var x, const std::vector<Index>& index) {
  Graph& g = graph_of({x});
  const Tensor& xv = x.value();
  if (xv.rank() < 1) throw std::invalid_argument("gather needs rank >= 1");
  const Index n = xv.dim(0);
  const Index slab = n == 0 ? 0 : xv.size() / n;
  Shape shape = xv.shape();
  shape[0] = static_cast<Index>(index.size());
  Tensor y(shape);
  for (std::size_t p = 0; p < index.size(); ++p) {
    if (index[p] < 0 || index[p] >= n) throw std::out_of_range("gather: index out of range");
    std::copy_n(xv.data() + index[p] * slab, slab, y.data() + static_cast<Index>(p) * slab);
  }
  return g.record(std::move(y), x.requires_grad(), [=, &g](const Tensor& dy) {
    double* dx = g.grad(x.id).data();
    for (std::size_t p = 0; p < index.size(); ++p) {
      Eigen::Map<Eigen::ArrayXd>(dx + index[p] * slab, slab) +=
          Eigen::Map<const Eigen::ArrayXd>(dy.data() + static_cast<Index>(p) * slab, slab);
    }
  });
}

Var concat_channels(Var a, Var b) {
  Graph& g = graph_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 2 || av.rank() != bv.rank() || av.dim(0) != bv.dim(0)) {
    throw std::invalid_argument("concat_channels: shape mismatch: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  for (Index ax = 2; ax < av.rank(); ++ax) {
    if (av.dim(ax) != bv.dim(ax)) {
      throw std::invalid_argument("concat_channels: shape mismatch: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    }
  }
  const Index n = av.dim(0);
  const Index sa = av.size() / std::max<Index>(n, 1);
  const Index sb = bv.size() / std::max<Index>(n, 1);
  Shape shape = av.shape();
  shape[1] += bv.dim(1);
  Tensor y(shape);
  for (Index s = 0; s < n; ++s) {
    std::copy_n(av.data() + s * sa, sa, y.data() + s * (sa + sb));
    std::copy_n(bv.data() + s * sb, sb, y.data() + s * (sa + sb) + sa);
  }
  return g.record(std::move(y), any_grad({a, b}), [=, &g](const Tensor& dy) {
    for (Index s = 0; s < n; ++s) {
      if (a.requires_grad()) {
        Eigen::Map<Eigen::ArrayXd>(g.grad(a.id).data() + s * sa, sa) += Eigen::Map<const Eigen::ArrayXd>(dy.data() + s * (sa + sb), sa);
      }
      if (b.requires_grad()) {
        Eigen::Map<Eigen::ArrayXd>(g.grad(b.id).data() + s * sb, sb) +=
            Eigen::Map<const Eigen::ArrayXd>(dy.data() + s * (sa + sb) + sa, sb);
      }
    }
  });
}

Var linear(Var x, Var w, Var b) {
  Graph& g = graph_of({x, w, b});
  require_rank(x.value(), 2, "linear input");
  require_rank(w.value(), 2, "linear weight");
  const Index n = x.dim(0), ci = x.dim(1), co = w.dim(0);
  if (w.dim(1) != ci || b.value().size() != co) throw std::invalid_argument("linear: weight shape mismatch");
  Tensor y({n, co});
  MatMap ym(y.data(), n, co);
  ym.noalias() = ConstMatMap(x.value().data(), n, ci) * ConstMatMap(w.value().data(), co, ci).transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), co);
  return g.record(std::move(y), any_grad({x, w, b}), [=, &g](const Tensor& dy) {
    const ConstMatMap d(dy.data(), n, co);
    if (x.requires_grad()) MatMap(g.grad(x.id).data(), n, ci).noalias() += d * ConstMatMap(g.value(w.id).data(), co, ci);
    if (w.requires_grad()) MatMap(g.grad(w.id).data(), co, ci).noalias() += d.transpose() * ConstMatMap(g.value(x.id).data(), n, ci);
    if (b.requires_grad()) Eigen::Map<Eigen::RowVectorXd>(g.grad(b.id).data(), co) += d.colwise().sum();
  });
}

Var softmax(Var x) {
  Graph& g = graph_of({x});
  const Tensor& xv = x.value();
  if (xv.rank() != 2 && xv.rank() != 4) throw std::invalid_argument("softmax expects N x C or N x C x H x W");
  const Index n = xv.dim(0), c = xv.dim(1);
  const Index m = xv.size() / std::max<Index>(n * c, 1);
  Tensor y(xv.shape());
  for (Index s = 0; s < n; ++s) {
    const ConstMatMap in(xv.data() + s * c * m, c, m);
    MatMap out(y.data() + s * c * m, c, m);
    const Eigen::RowVectorXd mx = in.colwise().maxCoeff();
    out = (in.rowwise() - mx).array().exp().matrix();
    const Eigen::RowVectorXd sum = out.colwise().sum();
    out.array().rowwise() /= sum.array();
    out = out.cwiseMax(1e-300);
  }
  const int self = static_cast<int>(g.size());
  return g.record(std::move(y), x.requires_grad(), [=, &g](const Tensor& dy) {
    const Tensor& yv = g.value(self);
    Tensor& dx = g.grad(x.id);
    for (Index s = 0; s < n; ++s) {
      const ConstMatMap ys(yv.data() + s * c * m, c, m);
      const ConstMatMap ds(dy.data() + s * c * m, c, m);
      const Eigen::RowVectorXd dot = ys.cwiseProduct(ds).colwise().sum();
      MatMap(dx.data() + s * c * m, c, m).array() += ys.array() * (ds.rowwise() - dot).array();
    }
  });
}

}  // namespace gskit::ad
