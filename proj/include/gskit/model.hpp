// Desk-scale segmentation and grasp network: convolutional encoder,
// semantic head, point-proposal instance head with CoordConv inputs and
// AdaIN conditioning, and a dense grid grasp head.

#pragma once

#include "gskit/autodiff.hpp"
#include "gskit/coordconv.hpp"
#include "gskit/grasp.hpp"
#include "gskit/scene.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gskit {

struct ModelConfig {
  Index height = 64;
  Index width = 64;
  std::vector<int> encoder_widths{8, 16, 32};  // first stage stride 1, later stages stride 2
  bool depth_input = false;                    // append raw depth to the RGB input
  int semantic_classes = 2;
  int coordconv_slots = 8;  // fixed instance-head input width for positional maps
  int inst_channels = 16;
  int style_hidden = 0;     // hidden width of the AdaIN projection; 0 = feature width
  int grasp_stride = 8;
  double anchor_scale = 2;  // anchor side = anchor_scale * grasp_stride
  ad::NormKind norm = ad::NormKind::instance;
  CoordConvVariants variants;
  double R = 0;  // 0 = max(H, W) / 2
  double alpha = 2;
  double beta = 1;
  double focal_gamma = 2;
  double iou_pos = 0.4;
  double iou_neg = 0.2;

  int feature_stride() const { return 1 << (static_cast<int>(encoder_widths.size()) - 1); }
  int feature_width() const { return encoder_widths.back(); }
  Index feature_height() const { return height / feature_stride(); }
  Index feature_cols() const { return width / feature_stride(); }
  double effective_R() const { return R > 0 ? R : static_cast<double>(std::max(height, width)) / 2; }
  /// Coordconv settings at feature resolution.
  CoordConvConfig feature_coordconv() const;
  void validate() const;
};

nlohmann::ordered_json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// Named parameter tensors in registration order.
struct ModelParams {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  void add(std::string name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t size() const { return values.size(); }
  /// Total number of scalars.
  Index count() const;
  bool all_finite() const;
};

/// He-uniform kernels, zero biases, identity affine terms, neutral AdaIN.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct Model {
  ModelConfig config;
  ModelParams params;

  static Model create(const ModelConfig& config, std::uint64_t seed);
};

/// Point proposal on image `image` of the batch, in pixel coordinates.
struct QueryPoint {
  Index image = 0;
  PointProposal p;
};

struct ForwardPass {
  std::vector<ad::Var> params;  // aligned with Model::params
  ad::Var features;
  ad::Var sem_probs;    // B x N x H x W
  ad::Var inst_logits;  // P x 2 x H x W (unset without queries)
  ad::Var grasp_raw;    // B x (4 + 19) x Gh x Gw
};

/// Builds the network on `graph`. Parameters become variables when
/// `with_grad`, constants otherwise.
ForwardPass forward(ad::Graph& graph, const Model& model, std::span<const Scene* const> scenes,
                    std::span<const QueryPoint> queries, bool with_grad);

/// Positional maps for each query at feature resolution, zero-padded to
/// coordconv_slots channels: P x slots x Hf x Wf.
Tensor coordconv_inputs(const ModelConfig& cfg, std::span<const Scene* const> scenes, std::span<const QueryPoint> queries);

/// Average pooling by an integer factor.
Image pool_depth(const Image& depth, int factor);
/// Pixel position to feature coordinates, clamped into the feature map.
PointProposal to_feature(const ModelConfig& cfg, PointProposal p);

/// Grid anchors in row-major cell order.
std::vector<AxisBox> grasp_anchors(const ModelConfig& cfg);
/// Candidates for every cell of one image's raw grasp output
/// ((4 + 19) x Gh x Gw): offsets decoded against the anchor, confidence
/// 1 - p(invalid), orientation at the midpoint of the best orientation class.
std::vector<GraspCandidate> decode_grasps(const ModelConfig& cfg, const Tensor& raw);

struct Prediction {
  Image foreground;                  // semantic foreground probability
  std::vector<Image> instance_probs;  // one per proposal
  std::vector<GraspCandidate> grasps;  // every grid cell
};

Prediction predict(const Model& model, const Scene& scene, std::span<const PointProposal> proposals);

/// Greedy non-maximum suppression by oriented IoU, highest confidence first.
std::vector<GraspCandidate> suppress(std::vector<GraspCandidate> grasps, double min_score, double max_iou);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes, const std::string& name = "checkpoint");

}  // namespace gskit
