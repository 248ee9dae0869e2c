#include "gskit/pick.hpp"

#include "gskit/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gskit {

using nlohmann::ordered_json;

NetworkModel::NetworkModel(Model model, double nms_iou, double mask_threshold)
    : model_(std::move(model)), nms_iou_(nms_iou), mask_threshold_(mask_threshold) {}

std::vector<GraspCandidate> NetworkModel::grasps(const Scene& scene) const {
  std::vector<GraspCandidate> out;
  const double xmax = static_cast<double>(scene.depth.cols() - 1), ymax = static_cast<double>(scene.depth.rows() - 1);
  for (const auto& g : suppress(predict(model_, scene, {}).grasps, 0.0, nms_iou_)) {
    if (g.x >= 0 && g.y >= 0 && g.x <= xmax && g.y <= ymax) out.push_back(g);
  }
  return out;
}

MaskImage NetworkModel::segment(const Scene& scene, PointProposal p) const {
  const Prediction pred = predict(model_, scene, std::span<const PointProposal>(&p, 1));
  return (pred.instance_probs.front().array() > mask_threshold_).cast<std::uint8_t>();
}

std::vector<GraspCandidate> OracleModel::grasps(const Scene& scene) const {
  std::vector<GraspCandidate> out;
  for (const auto& a : scene.gt_grasps) {
    GraspCandidate g = a.grasp;
    g.s = 1.0;
    out.push_back(g);
  }
  return out;
}

MaskImage OracleModel::segment(const Scene& scene, PointProposal p) const {
  const PixelIndex px = nearest_pixel(p.x, p.y);
  if (!contains(scene.instances, px) || scene.instances(px.row, px.col) == 0) {
    return MaskImage::Zero(scene.height(), scene.width());
  }
  return scene.instance_mask(scene.instances(px.row, px.col));
}

void PickConfig::validate() const {
  if (!(min_confidence >= 0 && min_confidence <= 1)) throw std::invalid_argument("min confidence must lie in [0, 1]");
  if (!(margin >= 0)) throw std::invalid_argument("gripper margin must be non-negative");
  if (!(plate_thickness > 0)) throw std::invalid_argument("plate thickness must be positive");
  if (connectivity != 4 && connectivity != 8) throw std::invalid_argument("connectivity must be 4 or 8");
  if (!(continuity_ratio >= 0 && continuity_ratio <= 1)) throw std::invalid_argument("continuity ratio must lie in [0, 1]");
  if (iteration_factor < 1) throw std::invalid_argument("iteration factor must be at least 1");
}

std::string to_string(PickDecision d) {
  switch (d) {
    case PickDecision::success:
      return "success";
    case PickDecision::failure:
      return "failure";
    case PickDecision::skipped_discontinuous:
      return "skipped_discontinuous";
    case PickDecision::skipped_mask_mismatch:
      return "skipped_mask_mismatch";
  }
  return "unknown";
}

namespace {

ordered_json grasp_json(const GraspCandidate& g) {
  return {{"x", g.x}, {"y", g.y}, {"w", g.w}, {"h", g.h}, {"theta_deg", g.theta}, {"s", g.s}};
}

bool same_candidate(const GraspCandidate& a, const GraspCandidate& b) {
  return a.x == b.x && a.y == b.y && a.w == b.w && a.h == b.h && a.theta == b.theta && a.s == b.s;
}

}  // namespace

ordered_json to_json(const PickAttempt& a) {
  ordered_json j;
  j["iteration"] = a.iteration;
  j["candidate"] = grasp_json(a.candidate);
  j["refined"] = a.refined ? grasp_json(*a.refined) : ordered_json(nullptr);
  j["centroid_offset"] = a.centroid_offset ? ordered_json::array({a.centroid_offset->x(), a.centroid_offset->y()}) : ordered_json(nullptr);
  j["target_instance"] = a.target_instance;
  j["plate_collision"] = a.plate_collision;
  j["decision"] = to_string(a.decision);
  return j;
}

ordered_json to_json(const PickOutcome& o) {
  ordered_json j;
  j["attempts"] = o.attempts;
  j["skipped"] = o.skipped;
  j["successes"] = o.successes;
  j["failures"] = o.failures;
  j["success_rate_percent"] = o.success_rate();
  j["initial_objects"] = o.initial_objects;
  j["remaining_objects"] = o.remaining_objects;
  j["iterations"] = o.iterations;
  return j;
}

MaskImage plate_footprint(const GraspCandidate& g, Index height, Index width, double thickness) {
  MaskImage out = MaskImage::Zero(height, width);
  const Point2 along = unit_direction(g.theta);
  const Point2 across = unit_direction(g.theta + 90.0);
  const Point2 c(g.x, g.y);
  for (const double side : {-1.0, 1.0}) {
    const Point2 pc = c + side * 0.5 * g.h * across;
    for (Index j = 0; j < height; ++j) {
      for (Index k = 0; k < width; ++k) {
        const Point2 d = Point2(static_cast<double>(k), static_cast<double>(j)) - pc;
        if (std::abs(d.dot(along)) <= 0.5 * g.w && std::abs(d.dot(across)) <= 0.5 * thickness) out(j, k) = 1;
      }
    }
  }
  return out;
}

Scene remove_instance(const Scene& scene, int id) {
  if (id < 1 || id > scene.num_instances()) throw std::out_of_range("no instance " + std::to_string(id) + " to remove");
  Scene out = scene;
  const bool known = static_cast<int>(scene.objects.size()) == scene.num_instances();
  for (Index j = 0; j < out.height(); ++j) {
    for (Index k = 0; k < out.width(); ++k) {
      int& v = out.instances(j, k);
      if (v == id) {
        // Nearest remaining object under the removed one, if any (ties go to
        // the later object, as in rendering).
        int below = 0;
        if (known) {
          for (int i = 1; i <= scene.num_instances(); ++i) {
            const SceneObject& o = scene.objects[static_cast<std::size_t>(i - 1)];
            if (i == id || !o.covers(static_cast<double>(k), static_cast<double>(j))) continue;
            if (below == 0 || o.depth <= scene.objects[static_cast<std::size_t>(below - 1)].depth) below = i;
          }
        }
        if (below) {
          const SceneObject& o = scene.objects[static_cast<std::size_t>(below - 1)];
          v = below > id ? below - 1 : below;
          out.depth(j, k) = o.depth;
          for (Index ch = 0; ch < 3; ++ch) out.rgb(ch, j, k) = o.color[ch];
        } else {
          v = 0;
          out.depth(j, k) = scene.background.depth;
          for (Index ch = 0; ch < 3; ++ch) out.rgb(ch, j, k) = scene.background.color[ch];
        }
      } else if (v > id) {
        --v;
      }
    }
  }
  out.gt_grasps.clear();
  for (const auto& a : scene.gt_grasps) {
    if (a.instance_id == id) continue;
    AnnotatedGrasp b = a;
    if (b.instance_id > id) --b.instance_id;
    out.gt_grasps.push_back(b);
  }
  if (static_cast<int>(out.objects.size()) >= id) out.objects.erase(out.objects.begin() + (id - 1));
  return out;
}

PickOutcome simulate_picking(const Scene& scene, const PickModel& model, const PickConfig& cfg) {
  cfg.validate();
  PickOutcome out;
  out.initial_objects = scene.num_instances();
  Scene cur = scene;
  std::vector<GraspCandidate> tried;  // rejected in the current scene state
  const int cap = cfg.iteration_factor * out.initial_objects;

  for (int it = 0; it < cap; ++it) {
    std::vector<GraspCandidate> cands;
    for (const auto& g : model.grasps(cur)) {
      if (g.s < cfg.min_confidence) continue;
      if (std::any_of(tried.begin(), tried.end(), [&](const GraspCandidate& t) { return same_candidate(t, g); })) continue;
      cands.push_back(g);
    }
    if (cands.empty()) break;
    std::stable_sort(cands.begin(), cands.end(), [](const GraspCandidate& a, const GraspCandidate& b) { return a.s > b.s; });
    ++out.iterations;

    PickAttempt at;
    at.iteration = it;
    at.candidate = cands.front();
    const GraspCandidate& g = at.candidate;
    const PixelIndex c = nearest_pixel(g.x, g.y);
    at.target_instance = contains(cur.instances, c) ? cur.instances(c.row, c.col) : 0;

    const MaskImage mask = model.segment(cur, {g.x, g.y});
    if (!contains(mask, c) || !mask(c.row, c.col)) {
      at.decision = PickDecision::skipped_mask_mismatch;
    } else if (!continuity_check(mask, cfg.connectivity, cfg.continuity_ratio)) {
      at.decision = PickDecision::skipped_discontinuous;
    }
    if (at.decision == PickDecision::skipped_mask_mismatch || at.decision == PickDecision::skipped_discontinuous) {
      ++out.skipped;
      tried.push_back(g);
      out.trace.push_back(at);
      continue;
    }

    const GraspCandidate refined = expand_gripper_width(g, mask, cfg.margin);
    at.refined = refined;
    at.centroid_offset = centroid_offset(mask, g);

    int matched = 0;
    double best_iou = -1;
    for (const auto& a : cur.gt_grasps) {
      if (!is_valid_grasp(refined, a.grasp, cfg.criteria)) continue;
      const double iou = oriented_iou(refined, a.grasp);
      if (iou > best_iou) {
        best_iou = iou;
        matched = a.instance_id;
      }
    }
    if (matched > 0) {
      const MaskImage plates = plate_footprint(refined, cur.height(), cur.width(), cfg.plate_thickness);
      at.plate_collision = ((plates.array() != 0) && (cur.instances.array() > 0) && (cur.instances.array() != matched)).any();
    }

    ++out.attempts;
    if (matched > 0 && !at.plate_collision) {
      at.decision = PickDecision::success;
      ++out.successes;
      cur = remove_instance(cur, matched);
      tried.clear();
    } else {
      at.decision = PickDecision::failure;
      ++out.failures;
      tried.push_back(g);
    }
    out.trace.push_back(at);
  }
  out.remaining_objects = cur.num_instances();
  return out;
}

}  // namespace gskit
