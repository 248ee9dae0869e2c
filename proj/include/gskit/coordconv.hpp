// Depth-aware CoordConv: positional prior maps for a point proposal.
//
// Every map is computed from offsets relative to the proposal p and then
// saturated to [-1, 1]. The 2.5D distance map is formed from the unclamped
// relative-coordinate and depth-distance maps and clamped last.

#pragma once

#include "gskit/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace gskit {

/// Proposal position in pixel units: x is the column, y the row. Fractional
/// positions are allowed (proposals rescaled to a feature stride).
struct PointProposal {
  double x = 0;
  double y = 0;
};

struct CoordConvVariants {
  bool rel = false;         // X_rel, Y_rel
  bool depth_dist = false;  // D_dist
  bool dist25 = false;      // F_2.5D, requires rel and depth_dist
  bool depth_sim = false;   // D_sim
  bool hha = false;         // H_dist (3 channels)

  int channel_count() const { return 2 * rel + depth_dist + dist25 + depth_sim + 3 * hha; }
  bool empty() const { return channel_count() == 0; }
  void validate() const;
  std::vector<std::string> names() const;

  /// Parses a comma-separated list or a JSON-style list of names from
  /// {rel, depth_dist, dist25, depth_sim, hha}.
  static CoordConvVariants parse(const std::vector<std::string>& names);
  friend bool operator==(const CoordConvVariants&, const CoordConvVariants&) = default;
};

struct CameraIntrinsics {
  double fx = 64;
  double fy = 64;
  double cx = 31.5;
  double cy = 31.5;

  /// Focal length max(H, W), principal point at the image center.
  static CameraIntrinsics centered(Index height, Index width);
  CameraIntrinsics scaled(double factor) const;
};

struct CoordConvConfig {
  double R = 32;      // max-object-size divisor in pixels
  double alpha = 2;   // depth scaling
  double beta = 1;    // depth-similarity scaling
  CoordConvVariants variants;
  std::optional<CameraIntrinsics> intrinsics;  // default: centered
  Eigen::Vector3d gravity{0, 0, 1};            // along the optical axis

  /// R = max(H, W) / 2, alpha = 2, beta = 1.
  static CoordConvConfig defaults_for(Index height, Index width, CoordConvVariants variants = {});
  void validate() const;
};

void check_proposal(PointProposal p, Index height, Index width);
void check_normalized(const Image& image, const char* what);

/// Bilinear read; exact at integer positions. Position must be in bounds.
template <typename Derived>
typename Derived::Scalar sample_bilinear(const Eigen::MatrixBase<Derived>& image, double x, double y) {
  using Scalar = typename Derived::Scalar;
  const Index k0 = std::clamp<Index>(static_cast<Index>(std::floor(x)), 0, image.cols() - 1);
  const Index j0 = std::clamp<Index>(static_cast<Index>(std::floor(y)), 0, image.rows() - 1);
  const Index k1 = std::min<Index>(k0 + 1, image.cols() - 1);
  const Index j1 = std::min<Index>(j0 + 1, image.rows() - 1);
  const Scalar fx = static_cast<Scalar>(x - static_cast<double>(k0));
  const Scalar fy = static_cast<Scalar>(y - static_cast<double>(j0));
  if (fx == Scalar(0) && fy == Scalar(0)) return image(j0, k0);
  const Scalar top = (1 - fx) * image(j0, k0) + fx * image(j0, k1);
  const Scalar bottom = (1 - fx) * image(j1, k0) + fx * image(j1, k1);
  return (1 - fy) * top + fy * bottom;
}

namespace detail {

template <typename Scalar>
std::pair<ImageT<Scalar>, ImageT<Scalar>> raw_rel_coords(Index height, Index width, PointProposal p, double R) {
  ImageT<Scalar> x(height, width), y(height, width);
  for (Index j = 0; j < height; ++j) {
    for (Index k = 0; k < width; ++k) {
      x(j, k) = static_cast<Scalar>((static_cast<double>(k) - p.x) / R);
      y(j, k) = static_cast<Scalar>((static_cast<double>(j) - p.y) / R);
    }
  }
  return {std::move(x), std::move(y)};
}

template <typename Derived>
auto raw_depth_dist(const Eigen::MatrixBase<Derived>& depth, PointProposal p, double alpha) {
  using Scalar = typename Derived::Scalar;
  const Scalar at_p = sample_bilinear(depth, p.x, p.y);
  return ImageT<Scalar>((static_cast<Scalar>(alpha) * (depth.array() - at_p)).matrix());
}

}  // namespace detail

/// X_rel = clamp((k - p.x) / R), Y_rel = clamp((j - p.y) / R).
template <typename Scalar = double>
std::pair<ImageT<Scalar>, ImageT<Scalar>> rel_coords(Index height, Index width, PointProposal p, double R) {
  check_proposal(p, height, width);
  if (!(R > 0)) throw std::invalid_argument("R must be positive");
  auto [x, y] = detail::raw_rel_coords<Scalar>(height, width, p, R);
  return {clamp_unit(x.array()).matrix(), clamp_unit(y.array()).matrix()};
}

/// D_dist = clamp(alpha * (D - D(p))); D must be normalized to [0, 1].
template <typename Derived>
auto depth_dist(const Eigen::MatrixBase<Derived>& depth, PointProposal p, double alpha) {
  using Scalar = typename Derived::Scalar;
  check_proposal(p, depth.rows(), depth.cols());
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  check_normalized(depth.template cast<double>(), "depth");
  return ImageT<Scalar>(clamp_unit(detail::raw_depth_dist(depth, p, alpha).array()).matrix());
}

/// F_2.5D = clamp(sqrt(X^2 + Y^2 + D^2)).
template <typename DX, typename DY, typename DD>
auto dist_2p5d(const Eigen::MatrixBase<DX>& x_rel, const Eigen::MatrixBase<DY>& y_rel, const Eigen::MatrixBase<DD>& d_dist) {
  using Scalar = typename DX::Scalar;
  if (x_rel.rows() != y_rel.rows() || x_rel.cols() != y_rel.cols() || x_rel.rows() != d_dist.rows() ||
      x_rel.cols() != d_dist.cols()) {
    throw std::invalid_argument("dist_2p5d: map shapes differ");
  }
  ImageT<Scalar> f =
      (x_rel.array().square() + y_rel.array().square() + d_dist.array().square()).sqrt().min(Scalar(1)).matrix();
  return f;
}

/// D_sim = clamp(exp(beta * |D - D(p)|) - 1).
template <typename Derived>
auto depth_sim(const Eigen::MatrixBase<Derived>& depth, PointProposal p, double beta) {
  using Scalar = typename Derived::Scalar;
  check_proposal(p, depth.rows(), depth.cols());
  if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
  check_normalized(depth.template cast<double>(), "depth");
  const Scalar at_p = sample_bilinear(depth, p.x, p.y);
  return ImageT<Scalar>(
      clamp_unit(((static_cast<Scalar>(beta) * (depth.array() - at_p).abs()).exp() - Scalar(1))).matrix());
}

/// Three-channel depth re-encoding: horizontal disparity, height above the
/// fitted ground plane, angle between surface normal and up (over pi).
/// Each channel is min-max normalized to [0, 1]; a constant channel maps
/// to 0 (the angle channel is already in [0, 1] and is not rescaled).
struct HHAEncoding {
  Tensor channels;  // 3 x H x W

  Image channel(Index c) const { return channels.plane(c); }
};

struct HHARaw {
  Image disparity;
  Image height;  // signed distance above the ground plane
  Image angle;   // radians / pi
  bool fallback_plane = false;
};

/// Unnormalized HHA channels. Ground candidates are pixels within 0.02 of
/// the maximum depth; a rank-deficient fit falls back to the plane
/// orthogonal to gravity through the deepest point.
HHARaw hha_raw(const Image& depth, const CameraIntrinsics& intrinsics, const Eigen::Vector3d& gravity);
HHAEncoding hha_encode(const Image& depth, const CameraIntrinsics& intrinsics,
                       const Eigen::Vector3d& gravity = Eigen::Vector3d(0, 0, 1));

/// H_dist^c = clamp(alpha * (H^c - H^c(p))) for each channel.
std::array<Image, 3> hha_dist(const HHAEncoding& hha, PointProposal p, double alpha);

/// Configured maps; absent variants stay empty.
struct CoordConvMaps {
  Image x_rel;
  Image y_rel;
  Image d_dist;
  Image f_25d;
  Image d_sim;
  std::array<Image, 3> h_dist;

  /// Present maps in fixed order X_rel, Y_rel, D_dist, F_2.5D, D_sim, H_dist^1..3.
  std::vector<const Image*> ordered() const;
  std::vector<std::string> ordered_names() const;
  /// Stacked C x H x W tensor of ordered().
  Tensor stack() const;
};

CoordConvMaps encode(const Image& depth, PointProposal p, const CoordConvConfig& cfg);
/// As above with the image-level HHA encoding computed once by the caller.
CoordConvMaps encode(const Image& depth, PointProposal p, const CoordConvConfig& cfg, const HHAEncoding* hha);

}  // namespace gskit
