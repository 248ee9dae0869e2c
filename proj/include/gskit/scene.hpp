// Deterministic synthetic RGB-D clutter scenes with modal instance masks and
// grasp annotations, plus the on-disk scene container.

#pragma once

#include "gskit/grasp.hpp"
#include "gskit/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gskit {

enum class ShapeKind { rectangle, ellipse, capsule };

/// Planar object at a constant normalized depth (smaller = nearer).
/// Pixel (row j, col k) has its center at image coordinates (x = k, y = j).
struct SceneObject {
  ShapeKind kind = ShapeKind::rectangle;
  double cx = 0;
  double cy = 0;
  double a = 1;    // major half-extent
  double b = 1;    // minor half-extent, b <= a
  double phi = 0;  // major-axis orientation in degrees
  double depth = 0.5;
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);

  bool covers(double x, double y) const;
};

/// Footprint of `object` sampled at pixel centers.
MaskImage rasterize(const SceneObject& object, Index height, Index width);

struct GenConfig {
  Index height = 64;
  Index width = 64;
  int min_objects = 2;
  int max_objects = 5;
  double min_major = 8;       // range of the major half-extent a
  double max_major = 16;
  double min_aspect = 0.35;   // b / a
  double max_aspect = 0.7;
  double min_minor = 3;
  double depth_noise = 0;     // Gaussian sigma, result clipped to [0, 1]
  double rgb_noise = 0;
  double background_depth = 0.95;
  Eigen::Vector3d background_color{0.35, 0.40, 0.30};
  Eigen::Vector3d base_color{0.5, 0.5, 0.5};
  double color_spread = 0.8;  // albedo = base + spread * U(-0.5, 0.5)
  std::vector<double> depth_planes;  // empty: depth ~ U(0.1, 0.85)
  int min_distinct_planes = 1;
  double min_pair_overlap = 0;  // each later object overlaps an earlier one by this fraction of the smaller footprint
  double max_pair_overlap = 1;
  double min_gap = -1;          // >= 0: footprints keep at least this many pixels apart
  int min_visible_pixels = 1;
  double plate_ratio = 1.0;     // ground-truth grasp w = plate_ratio * b
  std::uint64_t seed = 0;

  void validate() const;
};

/// Objects on >= 3 depth planes that overlap heavily and share similar
/// albedo, so only depth separates neighbouring instances.
GenConfig depth_separated_preset(Index height = 64, Index width = 64);
/// Objects whose footprints keep a clear gap between each other.
GenConfig well_separated_preset(Index height = 64, Index width = 64);

struct SceneBackground {
  double depth = 0.95;
  Eigen::Vector3d color{0.35, 0.40, 0.30};
};

struct Scene {
  Tensor rgb;               // 3 x H x W in [0, 1]
  Image depth;              // H x W in [0, 1]
  LabelImage instances;     // 0 = background, 1..K visible instances
  std::vector<AnnotatedGrasp> gt_grasps;
  std::uint64_t seed = 0;
  // In-memory extras: the visible objects in id order (objects[i] has id
  // i + 1) and the background plane. Not part of the on-disk container;
  // objects is empty for scenes read from disk.
  std::vector<SceneObject> objects;
  SceneBackground background;

  Index height() const { return depth.rows(); }
  Index width() const { return depth.cols(); }
  int num_instances() const { return instances.size() == 0 ? 0 : instances.maxCoeff(); }
  MaskImage instance_mask(int id) const { return (instances.array() == id).cast<std::uint8_t>(); }
};

/// Renders the given objects with nearer-wins occlusion (ties go to the later
/// object); objects left with fewer than cfg.min_visible_pixels visible
/// pixels are dropped and ids compacted. Noise is drawn from `seed`.
Scene render_scene(std::vector<SceneObject> objects, const GenConfig& cfg, std::uint64_t seed);

/// Throws std::runtime_error after 100 placement attempts without a visible
/// object.
Scene generate_scene(const GenConfig& cfg, std::uint64_t seed);

/// Ground-truth grasp across the minor axis at the visible centroid (snapped
/// into the mask when the centroid falls outside it).
GraspCandidate ground_truth_grasp(const SceneObject& object, const MaskImage& visible, double plate_ratio);

struct SceneTransform {
  double angle_deg = 0;  // rotation about the image center
  double tx = 0;         // translation in columns
  double ty = 0;         // translation in rows
};

/// Rotates then translates every layer with nearest-neighbour resampling.
/// Vanished instances are dropped and ids compacted; grasps whose centers
/// leave the image are dropped.
Scene transform_scene(const Scene& scene, const SceneTransform& t);

struct AugmentConfig {
  double max_rotation_deg = 360;
  double max_translation = 50;
};

Scene augment(const Scene& scene, std::uint64_t seed, const AugmentConfig& cfg = {});

/// The scene as it reads back from disk: rgb on 8 bits, depth on 16 bits.
Scene quantized(const Scene& scene);

void write_scene(const Scene& scene, const std::filesystem::path& dir);
Scene read_scene(const std::filesystem::path& dir);

/// Scene containers in `dir`, in lexicographic subdirectory order.
std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& dir);
std::vector<Scene> read_dataset(const std::filesystem::path& dir);

std::uint16_t quantize_depth(double v);

/// Pixel containing image point (x, y).
PixelIndex nearest_pixel(double x, double y);

/// grasps.jsonl: one {"x","y","w","h","theta_deg","instance_id"} object per
/// line, plus an optional confidence "s" (default 1).
std::vector<AnnotatedGrasp> read_grasps(const std::filesystem::path& path);
void write_grasps(const std::filesystem::path& path, const std::vector<AnnotatedGrasp>& grasps, bool with_scores = false);

}  // namespace gskit
