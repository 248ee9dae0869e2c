// Simulated sequential bin picking: detect, segment, check, refine, grasp,
// remove, repeat.

#pragma once

#include "gskit/coordconv.hpp"
#include "gskit/grasp.hpp"
#include "gskit/model.hpp"
#include "gskit/scene.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gskit {

/// What the picking loop needs from a detector.
class PickModel {
 public:
  virtual ~PickModel() = default;
  /// Grasp candidates for the current scene, any order.
  virtual std::vector<GraspCandidate> grasps(const Scene& scene) const = 0;
  /// Binary instance mask for a point proposal.
  virtual MaskImage segment(const Scene& scene, PointProposal p) const = 0;
};

/// Trained network: NMS-filtered grid candidates centered inside the image,
/// masks at threshold 0.5.
class NetworkModel final : public PickModel {
 public:
  explicit NetworkModel(Model model, double nms_iou = 0.3, double mask_threshold = 0.5);
  std::vector<GraspCandidate> grasps(const Scene& scene) const override;
  MaskImage segment(const Scene& scene, PointProposal p) const override;

 private:
  Model model_;
  double nms_iou_;
  double mask_threshold_;
};

/// Ground truth standing in for the network: the annotated grasps at full
/// confidence and the visible mask of the instance under the proposal.
class OracleModel final : public PickModel {
 public:
  std::vector<GraspCandidate> grasps(const Scene& scene) const override;
  MaskImage segment(const Scene& scene, PointProposal p) const override;
};

struct PickConfig {
  double min_confidence = 0.5;
  double margin = 2;           // gripper clearance per side, pixels
  double plate_thickness = 2;  // plate footprint across the opening direction
  int connectivity = 8;
  double continuity_ratio = 0.95;
  int iteration_factor = 3;  // cap = factor x initial object count
  GraspCriteria criteria;

  void validate() const;
};

enum class PickDecision { success, failure, skipped_discontinuous, skipped_mask_mismatch };
std::string to_string(PickDecision d);

struct PickAttempt {
  int iteration = 0;
  GraspCandidate candidate;
  std::optional<GraspCandidate> refined;
  std::optional<Point2> centroid_offset;
  int target_instance = 0;  // ground-truth id under the candidate center
  bool plate_collision = false;
  PickDecision decision = PickDecision::failure;
};

struct PickOutcome {
  int attempts = 0;
  int skipped = 0;
  int successes = 0;
  int failures = 0;
  int initial_objects = 0;
  int remaining_objects = 0;
  int iterations = 0;
  std::vector<PickAttempt> trace;

  double success_rate() const { return attempts ? 100.0 * successes / attempts : 0.0; }
};

nlohmann::ordered_json to_json(const PickAttempt& a);
/// Summary without the trace.
nlohmann::ordered_json to_json(const PickOutcome& o);

/// Pixels under the two plates of `g` (centers at +-h/2 across the opening
/// direction, length w along theta, `thickness` across).
MaskImage plate_footprint(const GraspCandidate& g, Index height, Index width, double thickness);

/// Clears instance `id`: its pixels show the nearest remaining object whose
/// footprint covers them (when the scene carries its objects) or else the
/// background plane. Its grasps are dropped and the remaining ids are
/// compacted.
Scene remove_instance(const Scene& scene, int id);

PickOutcome simulate_picking(const Scene& scene, const PickModel& model, const PickConfig& cfg = {});

}  // namespace gskit
