#include "gskit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gskit {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"none", "relcc", "depthcc", "depthsim", "hha"};
  return names;
}

CoordConvVariants variant_set(const std::string& name) {
  CoordConvVariants v;
  if (name == "none") return v;
  v.rel = true;
  if (name == "relcc") return v;
  if (name == "depthcc") {
    v.depth_dist = true;
    v.dist25 = true;
    return v;
  }
  if (name == "depthsim") {
    v.depth_sim = true;
    return v;
  }
  if (name == "hha") {
    v.hha = true;
    return v;
  }
  throw std::invalid_argument("unknown ablation variant '" + name + "' (expected none, relcc, depthcc, depthsim or hha)");
}

ModelConfig TrainConfig::resolved_model() const {
  ModelConfig m = model;
  m.variants = variant_set(variant);
  return m;
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(weight_decay >= 0)) throw std::invalid_argument("weight decay must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (proposals_per_image < 1) throw std::invalid_argument("proposals per image must be at least 1");
  if (augmentation.max_translation < 0 || augmentation.max_rotation_deg < 0) {
    throw std::invalid_argument("augmentation ranges must be non-negative");
  }
  weights.validate();
  resolved_model().validate();
}

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["momentum"] = c.momentum;
  j["nesterov"] = c.nesterov;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["cosine_decay"] = c.cosine_decay;
  j["proposals_per_image"] = c.proposals_per_image;
  j["lambda_grasp"] = c.weights.grasp;
  j["lambda_sem"] = c.weights.sem;
  j["lambda_inst"] = c.weights.inst;
  j["seed"] = c.seed;
  j["variant"] = c.variant;
  j["augment"] = c.augment;
  j["max_rotation_deg"] = c.augmentation.max_rotation_deg;
  j["max_translation"] = c.augmentation.max_translation;
  j["model"] = to_json(c.resolved_model());
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("momentum", c.momentum);
  get("nesterov", c.nesterov);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("cosine_decay", c.cosine_decay);
  get("proposals_per_image", c.proposals_per_image);
  get("lambda_grasp", c.weights.grasp);
  get("lambda_sem", c.weights.sem);
  get("lambda_inst", c.weights.inst);
  get("seed", c.seed);
  get("variant", c.variant);
  get("augment", c.augment);
  get("max_rotation_deg", c.augmentation.max_rotation_deg);
  get("max_translation", c.augmentation.max_translation);
  if (j.contains("model")) {
    json m = j.at("model");
    m.erase("variants");
    c.model = model_config_from_json(m, c.model);
  }
  c.validate();
  return c;
}

std::vector<ProposalSample> sample_proposals(const Scene& scene, int n, Rng& rng) {
  const int k = scene.num_instances();
  if (k < 1) throw std::invalid_argument("cannot sample point proposals from a scene without instances");
  std::vector<std::vector<PixelIndex>> pixels(static_cast<std::size_t>(k));
  for (Index j = 0; j < scene.height(); ++j) {
    for (Index c = 0; c < scene.width(); ++c) {
      const int id = scene.instances(j, c);
      if (id > 0) pixels[static_cast<std::size_t>(id - 1)].push_back({j, c});
    }
  }
  std::uniform_int_distribution<int> pick_instance(1, k);
  std::vector<ProposalSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int id = pick_instance(rng);
    const auto& px = pixels[static_cast<std::size_t>(id - 1)];
    std::uniform_int_distribution<std::size_t> pick_pixel(0, px.size() - 1);
    const PixelIndex p = px[pick_pixel(rng)];
    out.push_back({{static_cast<double>(p.col), static_cast<double>(p.row)}, id});
  }
  return out;
}

bool sgd_step(ModelParams& params, const std::vector<Tensor>& grads, SgdState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size()) throw std::invalid_argument("gradient count does not match parameter count");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.values[i].shape()) throw std::invalid_argument("gradient shape mismatch for " + params.names[i]);
    if (!grads[i].array().isFinite().all()) {
      log(LogLevel::error, "non-finite gradient in " + params.names[i] + "; step skipped");
      return false;
    }
  }
  if (state.velocity.size() != params.size()) {
    state.velocity.clear();
    for (const auto& v : params.values) state.velocity.emplace_back(v.shape());
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = params.values[i].array();
    auto& v = state.velocity[i].array();
    const Tensor::Array g = grads[i].array() + cfg.weight_decay * p;
    v = cfg.momentum * v + g;
    if (cfg.nesterov) {
      p -= cfg.lr * (g + cfg.momentum * v);
    } else {
      p -= cfg.lr * v;
    }
  }
  return true;
}

namespace {

Tensor slice(const Tensor& t, Index lead) {
  Shape shape(t.shape().begin() + 1, t.shape().end());
  const Index n = element_count(shape);
  Tensor out(shape);
  std::copy_n(t.data() + lead * n, n, out.data());
  return out;
}

void put_slice(Tensor& t, Index lead, const Tensor& part, double scale) {
  Eigen::Map<Eigen::ArrayXd>(t.data() + lead * part.size(), part.size()) += scale * part.array();
}

}  // namespace

BatchResult batch_loss(const Model& model, const TrainingBatch& batch, const LossWeights& weights, bool with_grad,
                       const FrozenTerms* frozen) {
  const ModelConfig& cfg = model.config;
  if (batch.queries.size() != batch.query_instances.size()) throw std::invalid_argument("query and target counts differ");
  ad::Graph g;
  std::vector<const Scene*> ptrs;
  for (const auto& s : batch.scenes) ptrs.push_back(&s);
  const ForwardPass fp = forward(g, model, ptrs, batch.queries, with_grad);
  const Index B = static_cast<Index>(ptrs.size());
  const Index P = static_cast<Index>(batch.queries.size());

  BatchResult res;
  LossTerms terms;

  // Semantic head.
  Tensor sem_grad(fp.sem_probs.shape());
  for (Index b = 0; b < B; ++b) {
    const LabelImage labels = (ptrs[static_cast<std::size_t>(b)]->instances.array() > 0).cast<int>();
    const SemLoss l = loss_sem(slice(fp.sem_probs.value(), b), labels,
                               frozen ? &frozen->sem_selection.at(static_cast<std::size_t>(b)) : nullptr);
    terms.sem += l.value / static_cast<double>(B);
    put_slice(sem_grad, b, l.grad, 1.0 / static_cast<double>(B));
    res.frozen.sem_selection.push_back(l.selected);
    res.floored |= l.floored;
  }

  // Instance head.
  Tensor inst_grad;
  if (P > 0) {
    inst_grad = Tensor(fp.inst_logits.shape());
    for (Index q = 0; q < P; ++q) {
      const auto& query = batch.queries[static_cast<std::size_t>(q)];
      const MaskImage mask = ptrs[static_cast<std::size_t>(query.image)]->instance_mask(batch.query_instances[static_cast<std::size_t>(q)]);
      double z = 0;
      const TensorLoss l = loss_nfl(slice(fp.inst_logits.value(), q), mask, cfg.focal_gamma,
                                    frozen ? frozen->nfl_normalizer.at(static_cast<std::size_t>(q)) : 0.0, &z);
      terms.inst += l.value / static_cast<double>(P);
      put_slice(inst_grad, q, l.grad, 1.0 / static_cast<double>(P));
      res.frozen.nfl_normalizer.push_back(z);
      res.floored |= l.floored;
    }
  }

  // Grasp head.
  const Tensor& raw = fp.grasp_raw.value();
  const Index cells = raw.dim(2) * raw.dim(3);
  const Index ch = raw.dim(1);
  const auto anchors = grasp_anchors(cfg);
  std::vector<std::pair<Index, Index>> pos_at, cls_at;
  std::vector<int> classes;
  std::vector<BoxOffsets> box_targets;
  for (Index b = 0; b < B; ++b) {
    std::vector<GraspCandidate> gts;
    for (const auto& a : ptrs[static_cast<std::size_t>(b)]->gt_grasps) gts.push_back(a.grasp);
    const auto targets = make_targets(anchors, gts, cfg.iou_pos, cfg.iou_neg);
    for (Index i = 0; i < cells; ++i) {
      const auto& t = targets[static_cast<std::size_t>(i)];
      if (t.label == ProposalLabel::ignored) continue;
      cls_at.emplace_back(b, i);
      classes.push_back(t.target_class);
      if (t.label == ProposalLabel::positive) {
        pos_at.emplace_back(b, i);
        box_targets.push_back(t.target);
        ++res.positives;
      } else {
        ++res.negatives;
      }
    }
  }
  OffsetMatrix pred(static_cast<Index>(pos_at.size()), 4), tgt(static_cast<Index>(pos_at.size()), 4);
  for (std::size_t r = 0; r < pos_at.size(); ++r) {
    const auto [b, i] = pos_at[r];
    for (Index k = 0; k < 4; ++k) pred(static_cast<Index>(r), k) = raw.data()[(b * ch + k) * cells + i];
    tgt.row(static_cast<Index>(r)) = box_targets[r].transpose();
  }
  LogitMatrix logits(static_cast<Index>(cls_at.size()), kNumGraspClasses);
  for (std::size_t r = 0; r < cls_at.size(); ++r) {
    const auto [b, i] = cls_at[r];
    for (Index k = 0; k < kNumGraspClasses; ++k) logits(static_cast<Index>(r), k) = raw.data()[(b * ch + 4 + k) * cells + i];
  }
  const MatrixLoss lbox = loss_box(pred, tgt);
  const MatrixLoss lrot = loss_rot(logits, classes);
  terms.box = lbox.value;
  terms.rot = lrot.value;
  res.floored |= lrot.floored;
  res.loss = composite(terms, weights);

  if (with_grad) {
    Tensor grasp_grad(raw.shape());
    for (std::size_t r = 0; r < pos_at.size(); ++r) {
      const auto [b, i] = pos_at[r];
      for (Index k = 0; k < 4; ++k) grasp_grad.data()[(b * ch + k) * cells + i] += weights.grasp * lbox.grad(static_cast<Index>(r), k);
    }
    for (std::size_t r = 0; r < cls_at.size(); ++r) {
      const auto [b, i] = cls_at[r];
      for (Index k = 0; k < kNumGraspClasses; ++k) {
        grasp_grad.data()[(b * ch + 4 + k) * cells + i] += weights.grasp * lrot.grad(static_cast<Index>(r), k);
      }
    }
    g.seed(fp.grasp_raw, grasp_grad);
    sem_grad.array() *= weights.sem;
    g.seed(fp.sem_probs, sem_grad);
    if (P > 0) {
      inst_grad.array() *= weights.inst;
      g.seed(fp.inst_logits, inst_grad);
    }
    g.backward();
    for (const auto& v : fp.params) res.grads.push_back(v.grad());
  }
  return res;
}

ordered_json to_json(const EpochLog& e) {
  ordered_json j;
  j["epoch"] = e.epoch;
  j["loss_box"] = e.terms.box;
  j["loss_rot"] = e.terms.rot;
  j["loss_sem"] = e.terms.sem;
  j["loss_inst"] = e.terms.inst;
  j["loss_total"] = e.total;
  j["steps"] = e.steps;
  j["skipped_steps"] = e.skipped_steps;
  j["wall_time"] = e.wall_time;
  return j;
}

TrainResult train(const std::vector<Scene>& scenes, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (scenes.empty()) throw std::invalid_argument("training set is empty");
  keep_heap_buffers();
  TrainResult result{Model::create(cfg.resolved_model(), cfg.seed), {}};
  const ModelConfig& mc = result.model.config;
  for (const auto& s : scenes) {
    if (s.height() != mc.height || s.width() != mc.width) throw std::invalid_argument("training scene extents do not match the model");
  }
  Rng rng = make_rng(cfg.seed, 0x7a1);
  SgdState state;
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto start = std::chrono::steady_clock::now();
  const std::size_t per_epoch = (scenes.size() + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
  const double total_steps = static_cast<double>(per_epoch) * cfg.epochs;
  double step_index = 0;
  TrainConfig step_cfg = cfg;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log_entry;
    log_entry.epoch = epoch;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch_size)) {
      TrainingBatch batch;
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = first; i < last; ++i) {
        const Scene& src = scenes[order[i]];
        const std::uint64_t aug_seed = rng();
        Scene s = cfg.augment ? augment(src, aug_seed, cfg.augmentation) : src;
        if (s.num_instances() == 0) s = src;
        if (s.num_instances() == 0) continue;
        const Index img = static_cast<Index>(batch.scenes.size());
        for (const auto& p : sample_proposals(s, cfg.proposals_per_image, rng)) {
          batch.queries.push_back({img, p.p});
          batch.query_instances.push_back(p.instance_id);
        }
        batch.scenes.push_back(std::move(s));
      }
      if (cfg.cosine_decay) step_cfg.lr = 0.5 * cfg.lr * (1 + std::cos(std::numbers::pi * step_index / total_steps));
      ++step_index;
      if (batch.scenes.empty()) continue;
      const BatchResult r = batch_loss(result.model, batch, cfg.weights, true);
      if (!std::isfinite(r.loss.total) || !sgd_step(result.model.params, r.grads, state, step_cfg)) {
        ++log_entry.skipped_steps;
        continue;
      }
      log_entry.terms.box += r.loss.terms.box;
      log_entry.terms.rot += r.loss.terms.rot;
      log_entry.terms.sem += r.loss.terms.sem;
      log_entry.terms.inst += r.loss.terms.inst;
      log_entry.total += r.loss.total;
      ++log_entry.steps;
    }
    if (log_entry.steps > 0) {
      const double inv = 1.0 / log_entry.steps;
      log_entry.terms.box *= inv;
      log_entry.terms.rot *= inv;
      log_entry.terms.sem *= inv;
      log_entry.terms.inst *= inv;
      log_entry.total *= inv;
    }
    log_entry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log(LogLevel::debug, "epoch " + std::to_string(epoch) + " loss " + std::to_string(log_entry.total));
    result.log.push_back(log_entry);
    if (on_epoch) on_epoch(log_entry);
  }
  return result;
}

double mask_iou(const MaskImage& a, const MaskImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("mask_iou: mask extents differ");
  const auto A = a.array() != 0;
  const auto Bm = b.array() != 0;
  const Index inter = (A && Bm).count();
  const Index uni = (A || Bm).count();
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ordered_json to_json(const EvalReport& r) {
  ordered_json j;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["proposal_source"] = r.proposal_source;
  j["instance_iou_percent"] = r.instance_iou;
  j["semantic_iou_percent"] = r.semantic_iou;
  j["grasp_accuracy_percent"] = r.grasp_accuracy;
  j["num_proposals"] = r.num_proposals;
  j["num_scenes"] = r.per_scene.size();
  j["excluded_scenes"] = r.excluded_scenes;
  ordered_json scenes = ordered_json::array();
  for (const auto& s : r.per_scene) {
    scenes.push_back({{"scene", s.scene},
                      {"instance_iou_percent", s.instance_iou},
                      {"semantic_iou_percent", s.semantic_iou},
                      {"proposals", s.proposals}});
  }
  j["per_scene"] = std::move(scenes);
  return j;
}

namespace {

struct SceneOutcome {
  std::vector<double> ious;
  double semantic_iou = 0;
  std::vector<AnnotatedGrasp> grasps;
};

int instance_at(const Scene& scene, double x, double y) {
  const PixelIndex p = nearest_pixel(x, y);
  return contains(scene.instances, p) ? scene.instances(p.row, p.col) : 0;
}

SceneOutcome evaluate_scene(const Model& model, const Scene& scene, std::size_t index, const EvalConfig& cfg) {
  SceneOutcome out;
  const int k = scene.num_instances();
  Rng rng = make_rng(mix_seed(cfg.seed, index), 0xe7a1);
  std::vector<PointProposal> proposals;
  std::vector<int> targets;
  if (cfg.source == ProposalSource::ground_truth && k > 0) {
    for (int id = 1; id <= k; ++id) {
      std::vector<PixelIndex> px;
      for (Index j = 0; j < scene.height(); ++j) {
        for (Index c = 0; c < scene.width(); ++c) {
          if (scene.instances(j, c) == id) px.push_back({j, c});
        }
      }
      std::uniform_int_distribution<std::size_t> pick(0, px.size() - 1);
      const PixelIndex p = px[pick(rng)];
      proposals.push_back({static_cast<double>(p.col), static_cast<double>(p.row)});
      targets.push_back(id);
    }
  }

  Prediction pred = predict(model, scene, proposals);
  const auto kept = suppress(pred.grasps, cfg.min_grasp_score, cfg.nms_iou);
  for (const auto& g : kept) out.grasps.push_back({g, instance_at(scene, g.x, g.y)});

  if (cfg.source == ProposalSource::grasp_centers && k > 0) {
    // Highest-confidence surviving candidate per object; objects without one score 0.
    std::vector<int> missing;
    for (int id = 1; id <= k; ++id) {
      const auto it = std::find_if(out.grasps.begin(), out.grasps.end(), [&](const AnnotatedGrasp& a) { return a.instance_id == id; });
      if (it == out.grasps.end()) {
        missing.push_back(id);
        continue;
      }
      const PixelIndex p = nearest_pixel(it->grasp.x, it->grasp.y);
      proposals.push_back({static_cast<double>(p.col), static_cast<double>(p.row)});
      targets.push_back(id);
    }
    if (!proposals.empty()) pred.instance_probs = predict(model, scene, proposals).instance_probs;
    for (std::size_t i = 0; i < missing.size(); ++i) out.ious.push_back(0.0);
  }

  for (std::size_t q = 0; q < proposals.size(); ++q) {
    const MaskImage predicted = (pred.instance_probs[q].array() > cfg.mask_threshold).cast<std::uint8_t>();
    out.ious.push_back(mask_iou(predicted, scene.instance_mask(targets[q])));
  }

  const MaskImage fg_pred = (pred.foreground.array() > cfg.mask_threshold).cast<std::uint8_t>();
  const MaskImage fg_true = (scene.instances.array() > 0).cast<std::uint8_t>();
  const MaskImage bg_pred = (fg_pred.array() == 0).cast<std::uint8_t>();
  const MaskImage bg_true = (fg_true.array() == 0).cast<std::uint8_t>();
  out.semantic_iou = 0.5 * (mask_iou(fg_pred, fg_true) + mask_iou(bg_pred, bg_true));
  return out;
}

}  // namespace

EvalReport evaluate(const Model& model, const std::vector<Scene>& scenes, const EvalConfig& cfg) {
  for (const auto& s : scenes) {
    if (s.height() != model.config.height || s.width() != model.config.width) {
      throw std::invalid_argument("scene resolution " + std::to_string(s.height()) + " x " + std::to_string(s.width()) +
                                  " does not match the checkpoint's " + std::to_string(model.config.height) + " x " +
                                  std::to_string(model.config.width));
    }
  }
  keep_heap_buffers();
  std::vector<SceneOutcome> outcomes(scenes.size());
  parallel_for(scenes.size(), cfg.jobs, [&](std::size_t i) { outcomes[i] = evaluate_scene(model, scenes[i], i, cfg); });

  EvalReport r;
  r.seed = cfg.seed;
  r.proposal_source = cfg.source == ProposalSource::ground_truth ? "ground-truth" : "grasp-centers";
  double iou_sum = 0;
  double sem_sum = 0;
  std::vector<std::vector<AnnotatedGrasp>> preds, gts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& o = outcomes[i];
    SceneEval se;
    se.scene = static_cast<int>(i);
    se.proposals = static_cast<int>(o.ious.size());
    const double s = std::accumulate(o.ious.begin(), o.ious.end(), 0.0);
    se.instance_iou = o.ious.empty() ? 0.0 : 100.0 * s / static_cast<double>(o.ious.size());
    se.semantic_iou = 100.0 * o.semantic_iou;
    iou_sum += s;
    sem_sum += o.semantic_iou;
    r.num_proposals += se.proposals;
    r.per_scene.push_back(se);
    preds.push_back(o.grasps);
    gts.push_back(scenes[i].gt_grasps);
  }
  r.instance_iou = r.num_proposals == 0 ? 0.0 : 100.0 * iou_sum / r.num_proposals;
  r.semantic_iou = scenes.empty() ? 0.0 : 100.0 * sem_sum / static_cast<double>(scenes.size());
  const GraspAccuracy acc = grasp_accuracy(preds, gts);
  r.grasp_accuracy = acc.percent;
  r.excluded_scenes = acc.excluded_scenes;
  return r;
}

DatasetSplit split_dataset(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0 && train_fraction <= 1)) throw std::invalid_argument("train fraction must lie in [0, 1]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0x5b1);
  std::shuffle(order.begin(), order.end(), rng);
  const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  DatasetSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::optional<double> reference_iou(const std::string& variant) {
  static const std::map<std::string, double> refs{
      {"none", 83.01}, {"relcc", 85.63}, {"depthcc", 91.27}, {"depthsim", 90.91}, {"hha", 89.68}};
  const auto it = refs.find(variant);
  if (it == refs.end()) return std::nullopt;
  return it->second;
}

AblationTable run_ablation(const std::vector<Scene>& train_set, const std::vector<Scene>& test_set, const TrainConfig& base,
                           const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds, int jobs,
                           const std::function<void(const AblationCell&)>& on_cell) {
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  if (variants.empty()) throw std::invalid_argument("ablation needs at least one variant");
  for (const auto& v : variants) variant_set(v);

  AblationTable table;
  table.seeds = seeds;
  table.cells.resize(variants.size() * seeds.size());
  std::mutex mu;
  parallel_for(table.cells.size(), jobs, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.variant = variants[i / seeds.size()];
    cfg.seed = seeds[i % seeds.size()];
    const TrainResult tr = train(train_set, cfg);
    EvalConfig ec;
    ec.seed = cfg.seed;
    const EvalReport rep = evaluate(tr.model, test_set, ec);
    AblationCell cell{cfg.variant, cfg.seed, rep.instance_iou, tr.log.empty() ? 0.0 : tr.log.back().total};
    table.cells[i] = cell;
    if (on_cell) {
      std::lock_guard lock(mu);
      on_cell(cell);
    }
  });

  for (std::size_t v = 0; v < variants.size(); ++v) {
    AblationRow row;
    row.variant = variants[v];
    row.maps = variant_set(variants[v]).names();
    for (std::size_t s = 0; s < seeds.size(); ++s) row.instance_iou.push_back(table.cells[v * seeds.size() + s].instance_iou);
    row.median = median(row.instance_iou);
    row.reference = reference_iou(variants[v]);
    table.rows.push_back(std::move(row));
  }
  return table;
}

ordered_json to_json(const AblationTable& t) {
  ordered_json j;
  j["seeds"] = t.seeds;
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    ordered_json row;
    row["variant"] = r.variant;
    row["maps"] = r.maps;
    row["instance_iou_percent"] = r.instance_iou;
    row["median_instance_iou_percent"] = r.median;
    row["reference_instance_iou_percent"] = r.reference ? json(*r.reference) : json(nullptr);
    if (i > 0) row["delta_vs_previous"] = r.median - t.rows[i - 1].median;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  ordered_json deltas = ordered_json::object();
  for (std::size_t a = 0; a < t.rows.size(); ++a) {
    for (std::size_t b = a + 1; b < t.rows.size(); ++b) {
      deltas[t.rows[b].variant + "-" + t.rows[a].variant] = t.rows[b].median - t.rows[a].median;
    }
  }
  j["pairwise_deltas"] = std::move(deltas);
  return j;
}

std::string format_table(const AblationTable& t) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "variant" << std::setw(30) << "maps" << std::right << std::setw(12) << "median IoU"
     << std::setw(10) << "delta" << std::setw(12) << "reference" << "  per-seed\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    std::string maps;
    for (const auto& m : r.maps) maps += (maps.empty() ? "" : "+") + m;
    if (maps.empty()) maps = "-";
    os << std::left << std::setw(10) << r.variant << std::setw(30) << maps << std::right << std::fixed << std::setprecision(2)
       << std::setw(12) << r.median;
    if (i > 0) {
      os << std::setw(10) << std::showpos << r.median - t.rows[i - 1].median << std::noshowpos;
    } else {
      os << std::setw(10) << "";
    }
    if (r.reference) {
      os << std::setw(12) << *r.reference;
    } else {
      os << std::setw(12) << "-";
    }
    os << " ";
    for (double v : r.instance_iou) os << " " << v;
    os << "\n";
  }
  return os.str();
}

}  // namespace gskit
