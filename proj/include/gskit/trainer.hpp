// SGD training, evaluation and the CoordConv ablation runner.

#pragma once

#include "gskit/losses.hpp"
#include "gskit/model.hpp"
#include "gskit/scene.hpp"
#include "gskit/util.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gskit {

/// none, relcc, depthcc, depthsim, hha.
CoordConvVariants variant_set(const std::string& name);
const std::vector<std::string>& variant_names();

struct TrainConfig {
  double lr = 0.02;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  bool nesterov = true;
  int batch_size = 4;
  int epochs = 30;
  bool cosine_decay = false;  // anneal lr to 0 over all steps
  int proposals_per_image = 9;
  LossWeights weights;
  std::uint64_t seed = 1;
  std::string variant = "depthcc";
  bool augment = true;
  AugmentConfig augmentation{360, 8};
  ModelConfig model;  // variants are taken from `variant`

  ModelConfig resolved_model() const;
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct ProposalSample {
  PointProposal p;
  int instance_id = 0;
};

/// Each proposal picks an instance uniformly, then a pixel of its visible
/// mask uniformly.
std::vector<ProposalSample> sample_proposals(const Scene& scene, int n, Rng& rng);

struct SgdState {
  std::vector<Tensor> velocity;
};

/// g = grad + decay * p; v = mu v + g; p -= lr (g + mu v) with Nesterov,
/// lr v without. Returns false (parameters untouched) when any gradient is
/// non-finite.
bool sgd_step(ModelParams& params, const std::vector<Tensor>& grads, SgdState& state, const TrainConfig& cfg);

/// Images and point proposals for one optimization step.
struct TrainingBatch {
  std::vector<Scene> scenes;
  std::vector<QueryPoint> queries;
  std::vector<int> query_instances;  // target instance id per query
};

/// Hardest-pixel selections and focal normalizers of a loss evaluation;
/// passing them back evaluates the surrogate the gradient differentiates.
struct FrozenTerms {
  std::vector<std::vector<Index>> sem_selection;
  std::vector<double> nfl_normalizer;
};

struct BatchResult {
  LossBundle loss;
  std::vector<Tensor> grads;  // aligned with the parameters; empty without gradients
  FrozenTerms frozen;
  int positives = 0;
  int negatives = 0;
  bool floored = false;
};

BatchResult batch_loss(const Model& model, const TrainingBatch& batch, const LossWeights& weights, bool with_grad,
                       const FrozenTerms* frozen = nullptr);

struct EpochLog {
  int epoch = 0;
  LossTerms terms;
  double total = 0;
  int steps = 0;
  int skipped_steps = 0;
  double wall_time = 0;
};

nlohmann::ordered_json to_json(const EpochLog& e);

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Throws std::invalid_argument on an empty training set.
TrainResult train(const std::vector<Scene>& scenes, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

enum class ProposalSource { ground_truth, grasp_centers };

struct SceneEval {
  int scene = 0;
  double instance_iou = 0;  // percent, mean over this scene's proposals
  double semantic_iou = 0;  // percent
  int proposals = 0;
};

struct EvalReport {
  double instance_iou = 0;  // percent, mean over all proposals
  double semantic_iou = 0;  // percent, mean over scenes of the fg/bg mean IoU
  double grasp_accuracy = 0;
  int num_proposals = 0;
  std::vector<int> excluded_scenes;  // no grasp predictions
  std::vector<SceneEval> per_scene;
  std::string variant;
  std::uint64_t seed = 0;
  std::string proposal_source;
};

nlohmann::ordered_json to_json(const EvalReport& r);

struct EvalConfig {
  ProposalSource source = ProposalSource::ground_truth;
  std::uint64_t seed = 0;
  double mask_threshold = 0.5;
  double min_grasp_score = 0.5;
  double nms_iou = 0.3;
  int jobs = 1;
};

/// IoU of two binary masks in [0, 1]; two empty masks give 1.
double mask_iou(const MaskImage& a, const MaskImage& b);

EvalReport evaluate(const Model& model, const std::vector<Scene>& scenes, const EvalConfig& cfg);

/// Image-wise seeded split; `train_fraction` of the images (rounded) go to
/// training. Disjoint and exhaustive.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
DatasetSplit split_dataset(std::size_t n, double train_fraction, std::uint64_t seed);

struct AblationCell {
  std::string variant;
  std::uint64_t seed = 0;
  double instance_iou = 0;
  double final_loss = 0;
};

struct AblationRow {
  std::string variant;
  std::vector<std::string> maps;
  std::vector<double> instance_iou;  // per seed
  double median = 0;
  std::optional<double> reference;  // published value for the full-scale setting
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds;
};

std::optional<double> reference_iou(const std::string& variant);

AblationTable run_ablation(const std::vector<Scene>& train_set, const std::vector<Scene>& test_set, const TrainConfig& base,
                           const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds, int jobs = 1,
                           const std::function<void(const AblationCell&)>& on_cell = {});

nlohmann::ordered_json to_json(const AblationTable& t);
/// Aligned text rendering with pairwise deltas between consecutive rows.
std::string format_table(const AblationTable& t);

double median(std::vector<double> values);

}  // namespace gskit
