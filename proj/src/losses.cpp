#include "gskit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gskit {

void LossWeights::validate() const {
  if (!(grasp >= 0) || !(sem >= 0) || !(inst >= 0)) throw std::invalid_argument("loss weights must be non-negative");
}

double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1 ? 0.5 * d * d : a - 0.5;
}

double smooth_l1_grad(double d) { return std::clamp(d, -1.0, 1.0); }

namespace {

double floored_log(double p, bool& floored) {
  if (p < kLogFloor) {
    floored = true;
    return std::log(kLogFloor);
  }
  return std::log(p);
}

struct PlaneDims {
  Index lead = 0;  // N or 1
  Index channels = 0;
  Index pixels = 0;
};

PlaneDims plane_dims(const Tensor& t) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1) * t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2) * t.dim(3)};
  throw std::invalid_argument("expected C x H x W or N x C x H x W, got " + shape_string(t.shape()));
}

}  // namespace

MatrixLoss loss_box(const OffsetMatrix& pred, const OffsetMatrix& target) {
  if (pred.rows() != target.rows()) throw std::invalid_argument("loss_box: prediction and target counts differ");
  MatrixLoss out;
  out.grad = LogitMatrix::Zero(pred.rows(), 4);
  if (pred.rows() == 0) return out;
  const double inv = 1.0 / static_cast<double>(pred.rows());
  for (Index r = 0; r < pred.rows(); ++r) {
    for (Index c = 0; c < 4; ++c) {
      const double d = pred(r, c) - target(r, c);
      out.value += smooth_l1(d);
      out.grad(r, c) = smooth_l1_grad(d) * inv;
    }
  }
  out.value *= inv;
  return out;
}

MatrixLoss loss_rot(const LogitMatrix& logits, std::span<const int> classes) {
  if (logits.rows() != static_cast<Index>(classes.size())) throw std::invalid_argument("loss_rot: logit and class counts differ");
  MatrixLoss out;
  out.grad = LogitMatrix::Zero(logits.rows(), logits.cols());
  if (logits.rows() == 0) return out;
  const double inv = 1.0 / static_cast<double>(logits.rows());
  for (Index r = 0; r < logits.rows(); ++r) {
    const int c = classes[static_cast<std::size_t>(r)];
    if (c < 0 || c >= logits.cols()) throw std::invalid_argument("loss_rot: class index out of range");
    const double m = logits.row(r).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(r).array() - m).exp().matrix();
    e /= e.sum();
    out.value -= floored_log(e[c], out.floored);
    e[c] -= 1.0;
    out.grad.row(r) = e * inv;
  }
  out.value *= inv;
  return out;
}

namespace {

std::vector<Index> hardest_quarter(const Eigen::Ref<const Eigen::VectorXd>& q) {
  const Index n = q.size();
  const Index k = n / 4;
  if (k == 0) throw std::invalid_argument("loss_sem needs at least 4 pixels");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto less = [&](Index a, Index b) { return q[a] < q[b] || (q[a] == q[b] && a < b); };
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), less);
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

void check_labels(const LabelImage& labels, Index classes, Index pixels) {
  if (labels.size() != pixels) throw std::invalid_argument("loss_sem: label map does not match prediction extents");
  if (labels.size() > 0 && (labels.minCoeff() < 0 || labels.maxCoeff() >= classes)) {
    throw std::invalid_argument("loss_sem: label outside [0, N)");
  }
}

}  // namespace

SemLoss loss_sem(const Tensor& probs, const LabelImage& labels, const std::vector<Index>* fixed_selection) {
  const auto dims = plane_dims(probs);
  if (dims.lead != 1) throw std::invalid_argument("loss_sem expects one N x H x W image");
  check_labels(labels, dims.channels, dims.pixels);
  const Index n = dims.pixels;
  Eigen::VectorXd q(n);
  for (Index i = 0; i < n; ++i) q[i] = probs.data()[labels.data()[i] * n + i];

  SemLoss out;
  if (fixed_selection) {
    out.selected = *fixed_selection;
    for (Index i : out.selected) {
      if (i < 0 || i >= n) throw std::invalid_argument("loss_sem: fixed selection outside the image");
    }
  } else {
    out.selected = hardest_quarter(q);
  }
  out.grad = Tensor(probs.shape());
  const double w = 1.0 / static_cast<double>(out.selected.size());
  for (Index i : out.selected) {
    const double p = q[i];
    out.value -= w * floored_log(p, out.floored);
    out.grad.data()[labels.data()[i] * n + i] = -w / std::max(p, kLogFloor);
  }
  return out;
}

SemLoss loss_sem_logits(const Tensor& logits, const LabelImage& labels) {
  const auto dims = plane_dims(logits);
  if (dims.lead != 1) throw std::invalid_argument("loss_sem expects one N x H x W image");
  check_labels(labels, dims.channels, dims.pixels);
  const Tensor probs = softmax_channels(logits);
  const Index n = dims.pixels;
  Eigen::VectorXd q(n);
  for (Index i = 0; i < n; ++i) q[i] = probs.data()[labels.data()[i] * n + i];

  SemLoss out;
  out.selected = hardest_quarter(q);
  out.grad = Tensor(logits.shape());
  const double w = 1.0 / static_cast<double>(out.selected.size());
  for (Index i : out.selected) {
    out.value -= w * floored_log(q[i], out.floored);
    for (Index c = 0; c < dims.channels; ++c) {
      const double target = c == labels.data()[i] ? 1.0 : 0.0;
      out.grad.data()[c * n + i] = w * (probs.data()[c * n + i] - target);
    }
  }
  return out;
}

TensorLoss loss_nfl(const Tensor& logits, const MaskImage& mask, double gamma, double fixed_normalizer,
                    double* normalizer) {
  if (!(gamma >= 0)) throw std::invalid_argument("focal gamma must be non-negative");
  const auto dims = plane_dims(logits);
  if (dims.lead != 1 || dims.channels != 2) throw std::invalid_argument("loss_nfl expects 2 x H x W logits");
  if (mask.size() != dims.pixels) throw std::invalid_argument("loss_nfl: mask does not match logit extents");
  const Index n = dims.pixels;
  const double* z0 = logits.data();
  const double* z1 = logits.data() + n;

  // Q = sigmoid(z_correct - z_other) and log Q, computed stably.
  Eigen::VectorXd q(n), one_minus(n), log_q(n);
  for (Index i = 0; i < n; ++i) {
    const double d = mask.data()[i] ? z1[i] - z0[i] : z0[i] - z1[i];
    const double e = std::exp(-std::abs(d));
    const double l = std::log1p(e);
    if (d >= 0) {
      q[i] = 1.0 / (1.0 + e);
      one_minus[i] = e / (1.0 + e);
      log_q[i] = -l;
    } else {
      q[i] = e / (1.0 + e);
      one_minus[i] = 1.0 / (1.0 + e);
      log_q[i] = d - l;
    }
  }

  TensorLoss out;
  out.grad = Tensor(logits.shape());
  Eigen::VectorXd weight;
  if (gamma == 0) {
    weight = Eigen::VectorXd::Ones(n);
  } else if (gamma == 1) {
    weight = one_minus;
  } else if (gamma == 2) {
    weight = one_minus.cwiseAbs2();
  } else {
    weight = one_minus.array().pow(gamma).matrix();
  }
  const double z = fixed_normalizer > 0 ? fixed_normalizer : weight.sum();
  if (normalizer) *normalizer = z;
  if (!(z > 0)) return out;
  const double inv = 1.0 / z;
  const double log_floor = std::log(kLogFloor);
  for (Index i = 0; i < n; ++i) {
    double logq = log_q[i];
    if (logq < log_floor) {
      logq = log_floor;
      out.floored = true;
    }
    out.value -= weight[i] * logq;
    // d/dd of -(1-Q)^g log Q with dQ/dd = Q (1 - Q), Z held fixed.
    const double dd = -inv * (one_minus[i] * weight[i] - gamma * weight[i] * q[i] * logq);
    double* g_correct = out.grad.data() + (mask.data()[i] ? n + i : i);
    double* g_other = out.grad.data() + (mask.data()[i] ? i : n + i);
    *g_correct = dd;
    *g_other = -dd;
  }
  out.value *= inv;
  return out;
}

double nfl_value(const Image& q, double gamma) {
  if (!(gamma >= 0)) throw std::invalid_argument("focal gamma must be non-negative");
  double num = 0;
  double z = 0;
  bool floored = false;
  for (Index i = 0; i < q.size(); ++i) {
    const double p = q.data()[i];
    const double w = gamma == 0 ? 1.0 : std::pow(1.0 - p, gamma);
    num -= w * floored_log(p, floored);
    z += w;
  }
  return z > 0 ? num / z : 0.0;
}

LossBundle composite(const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  LossBundle b;
  b.terms = terms;
  b.total = weights.grasp * (terms.box + terms.rot) + weights.sem * terms.sem + weights.inst * terms.inst;
  return b;
}

Tensor softmax_channels(const Tensor& logits) {
  const auto dims = plane_dims(logits);
  Tensor out(logits.shape());
  const Index n = dims.pixels;
  const Index c = dims.channels;
  for (Index b = 0; b < dims.lead; ++b) {
    const double* in = logits.data() + b * c * n;
    double* o = out.data() + b * c * n;
    for (Index i = 0; i < n; ++i) {
      double m = in[i];
      for (Index k = 1; k < c; ++k) m = std::max(m, in[k * n + i]);
      double s = 0;
      for (Index k = 0; k < c; ++k) s += (o[k * n + i] = std::exp(in[k * n + i] - m));
      for (Index k = 0; k < c; ++k) o[k * n + i] /= s;
    }
  }
  return out;
}

}  // namespace gskit
