#include "gskit/coordconv.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace gskit {

void CoordConvVariants::validate() const {
  if (dist25 && !(rel && depth_dist)) throw std::invalid_argument("dist25 requires rel and depth_dist");
}

std::vector<std::string> CoordConvVariants::names() const {
  std::vector<std::string> out;
  if (rel) out.emplace_back("rel");
  if (depth_dist) out.emplace_back("depth_dist");
  if (dist25) out.emplace_back("dist25");
  if (depth_sim) out.emplace_back("depth_sim");
  if (hha) out.emplace_back("hha");
  return out;
}

CoordConvVariants CoordConvVariants::parse(const std::vector<std::string>& names) {
  CoordConvVariants v;
  for (const auto& raw : names) {
    std::stringstream ss(raw);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (name.empty()) continue;
      if (name == "rel") {
        v.rel = true;
      } else if (name == "depth_dist") {
        v.depth_dist = true;
      } else if (name == "dist25") {
        v.dist25 = true;
      } else if (name == "depth_sim") {
        v.depth_sim = true;
      } else if (name == "hha") {
        v.hha = true;
      } else {
        throw std::invalid_argument("unknown coordconv variant '" + name + "'");
      }
    }
  }
  v.validate();
  return v;
}

CameraIntrinsics CameraIntrinsics::centered(Index height, Index width) {
  const double f = static_cast<double>(std::max(height, width));
  return {f, f, (static_cast<double>(width) - 1) / 2, (static_cast<double>(height) - 1) / 2};
}

CameraIntrinsics CameraIntrinsics::scaled(double factor) const {
  // Pixel centers map as (u + 0.5) * factor - 0.5.
  return {fx * factor, fy * factor, (cx + 0.5) * factor - 0.5, (cy + 0.5) * factor - 0.5};
}

CoordConvConfig CoordConvConfig::defaults_for(Index height, Index width, CoordConvVariants variants) {
  CoordConvConfig cfg;
  cfg.R = static_cast<double>(std::max(height, width)) / 2;
  cfg.variants = variants;
  return cfg;
}

void CoordConvConfig::validate() const {
  if (!(R > 0)) throw std::invalid_argument("R must be positive");
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
  if (!(gravity.norm() > 0)) throw std::invalid_argument("gravity must be non-zero");
  variants.validate();
}

void check_proposal(PointProposal p, Index height, Index width) {
  if (!(p.x >= 0 && p.y >= 0 && p.x <= static_cast<double>(width - 1) && p.y <= static_cast<double>(height - 1))) {
    std::ostringstream os;
    os << "point proposal (" << p.x << ", " << p.y << ") outside " << height << " x " << width << " image";
    throw std::out_of_range(os.str());
  }
}

void check_normalized(const Image& image, const char* what) {
  if (image.size() == 0) throw std::invalid_argument(std::string(what) + " is empty");
  if (!image.allFinite() || image.minCoeff() < 0 || image.maxCoeff() > 1) {
    throw std::invalid_argument(std::string(what) + " must be normalized to [0, 1]");
  }
}

namespace {

Image min_max(const Image& v) {
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  if (!(hi > lo)) return Image::Zero(v.rows(), v.cols());
  return ((v.array() - lo) / (hi - lo)).matrix();
}

}  // namespace

HHARaw hha_raw(const Image& depth, const CameraIntrinsics& K, const Eigen::Vector3d& gravity) {
  check_normalized(depth, "depth");
  if (!(K.fx > 0) || !(K.fy > 0)) throw std::invalid_argument("focal lengths must be positive");
  const Index H = depth.rows();
  const Index W = depth.cols();
  const Eigen::Vector3d g = gravity.normalized();
  constexpr double eps = 1e-6;

  HHARaw out;
  out.disparity = depth.array().max(eps).inverse().matrix();

  // Back-projected points.
  std::vector<Eigen::Vector3d> pts(static_cast<std::size_t>(H * W));
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k) {
      const double z = std::max(depth(j, k), eps);
      pts[static_cast<std::size_t>(j * W + k)] = {(static_cast<double>(k) - K.cx) * z / K.fx,
                                                  (static_cast<double>(j) - K.cy) * z / K.fy, z};
    }
  }
  auto at = [&](Index j, Index k) -> const Eigen::Vector3d& { return pts[static_cast<std::size_t>(j * W + k)]; };

  // Ground plane: least squares z = a x + b y + c over the deepest pixels.
  const double deepest = depth.maxCoeff();
  std::vector<Index> ground;
  for (Index i = 0; i < H * W; ++i) {
    if (depth.data()[i] >= deepest - 0.02) ground.push_back(i);
  }
  Eigen::Vector3d normal = g;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  bool fitted = false;
  if (ground.size() >= 3) {
    Eigen::MatrixXd A(static_cast<Index>(ground.size()), 3);
    Eigen::VectorXd b(static_cast<Index>(ground.size()));
    for (std::size_t r = 0; r < ground.size(); ++r) {
      const auto& p = pts[static_cast<std::size_t>(ground[r])];
      A.row(static_cast<Index>(r)) << p.x(), p.y(), 1.0;
      b[static_cast<Index>(r)] = p.z();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() == 3) {
      const Eigen::Vector3d coef = qr.solve(b);
      normal = Eigen::Vector3d(-coef[0], -coef[1], 1.0).normalized();  // points away from the camera
      if (normal.dot(g) < 0) normal = -normal;
      origin = Eigen::Vector3d(0, 0, coef[2]);
      fitted = true;
    }
  }
  if (!fitted) {
    out.fallback_plane = true;
    normal = g;
    Index deepest_idx = 0;
    depth.reshaped<Eigen::RowMajor>().maxCoeff(&deepest_idx);
    origin = pts[static_cast<std::size_t>(deepest_idx)];
  }

  out.height.resize(H, W);
  out.angle.resize(H, W);
  const Eigen::Vector3d up = -g;
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k) {
      out.height(j, k) = normal.dot(origin - at(j, k));
      const Index kl = std::max<Index>(k - 1, 0), kr = std::min<Index>(k + 1, W - 1);
      const Index ju = std::max<Index>(j - 1, 0), jd = std::min<Index>(j + 1, H - 1);
      const Eigen::Vector3d tx = at(j, kr) - at(j, kl);
      const Eigen::Vector3d ty = at(jd, k) - at(ju, k);
      Eigen::Vector3d n = tx.cross(ty);
      double cosang = 1.0;
      if (n.norm() > 0) {
        n.normalize();
        if (n.z() > 0) n = -n;  // face the camera
        cosang = std::clamp(n.dot(up), -1.0, 1.0);
      }
      out.angle(j, k) = std::acos(cosang) / std::numbers::pi;
    }
  }
  return out;
}

HHAEncoding hha_encode(const Image& depth, const CameraIntrinsics& intrinsics, const Eigen::Vector3d& gravity) {
  const HHARaw raw = hha_raw(depth, intrinsics, gravity);
  HHAEncoding hha;
  hha.channels = Tensor({3, depth.rows(), depth.cols()});
  hha.channels.plane(0) = min_max(raw.disparity);
  hha.channels.plane(1) = min_max(raw.height);
  hha.channels.plane(2) = raw.angle.cwiseMax(0.0).cwiseMin(1.0);
  return hha;
}

std::array<Image, 3> hha_dist(const HHAEncoding& hha, PointProposal p, double alpha) {
  if (hha.channels.rank() != 3 || hha.channels.dim(0) != 3) throw std::invalid_argument("HHA encoding must be 3 x H x W");
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  const Index H = hha.channels.dim(1);
  const Index W = hha.channels.dim(2);
  check_proposal(p, H, W);
  std::array<Image, 3> out;
  for (Index c = 0; c < 3; ++c) {
    const auto ch = hha.channels.plane(c);
    const double at_p = sample_bilinear(ch, p.x, p.y);
    out[static_cast<std::size_t>(c)] = clamp_unit(alpha * (ch.array() - at_p)).matrix();
  }
  return out;
}

std::vector<const Image*> CoordConvMaps::ordered() const {
  std::vector<const Image*> out;
  for (const Image* m : {&x_rel, &y_rel, &d_dist, &f_25d, &d_sim, &h_dist[0], &h_dist[1], &h_dist[2]}) {
    if (m->size() > 0) out.push_back(m);
  }
  return out;
}

std::vector<std::string> CoordConvMaps::ordered_names() const {
  static const char* names[] = {"x_rel", "y_rel", "d_dist", "f_25d", "d_sim", "h_dist_1", "h_dist_2", "h_dist_3"};
  const Image* maps[] = {&x_rel, &y_rel, &d_dist, &f_25d, &d_sim, &h_dist[0], &h_dist[1], &h_dist[2]};
  std::vector<std::string> out;
  for (int i = 0; i < 8; ++i) {
    if (maps[i]->size() > 0) out.emplace_back(names[i]);
  }
  return out;
}

Tensor CoordConvMaps::stack() const {
  const auto maps = ordered();
  if (maps.empty()) return Tensor({0, 0, 0});
  Tensor out({static_cast<Index>(maps.size()), maps[0]->rows(), maps[0]->cols()});
  for (std::size_t i = 0; i < maps.size(); ++i) out.plane(static_cast<Index>(i)) = *maps[i];
  return out;
}

CoordConvMaps encode(const Image& depth, PointProposal p, const CoordConvConfig& cfg) {
  return encode(depth, p, cfg, nullptr);
}

CoordConvMaps encode(const Image& depth, PointProposal p, const CoordConvConfig& cfg, const HHAEncoding* hha) {
  cfg.validate();
  if (cfg.variants.empty()) throw std::invalid_argument("coordconv variant set is empty");
  const Index H = depth.rows();
  const Index W = depth.cols();
  check_proposal(p, H, W);
  check_normalized(depth, "depth");
  const auto& v = cfg.variants;

  CoordConvMaps maps;
  Image raw_x, raw_y, raw_d;
  if (v.rel) {
    std::tie(raw_x, raw_y) = detail::raw_rel_coords<double>(H, W, p, cfg.R);
    maps.x_rel = clamp_unit(raw_x.array()).matrix();
    maps.y_rel = clamp_unit(raw_y.array()).matrix();
  }
  if (v.depth_dist) {
    raw_d = detail::raw_depth_dist(depth, p, cfg.alpha);
    maps.d_dist = clamp_unit(raw_d.array()).matrix();
  }
  if (v.dist25) maps.f_25d = dist_2p5d(raw_x, raw_y, raw_d);
  if (v.depth_sim) maps.d_sim = depth_sim(depth, p, cfg.beta);
  if (v.hha) {
    HHAEncoding local;
    if (!hha) {
      local = hha_encode(depth, cfg.intrinsics.value_or(CameraIntrinsics::centered(H, W)), cfg.gravity);
      hha = &local;
    }
    maps.h_dist = hha_dist(*hha, p, cfg.alpha);
  }
  return maps;
}

}  // namespace gskit
