// Planar grasp rectangles, orientation classes, oriented IoU and the
// rectangle-metric grasp accuracy.

#pragma once

#include <Eigen/Core>

#include <array>
#include <span>
#include <vector>

namespace gskit {

using Point2 = Eigen::Vector2d;

/// Oriented grasp rectangle (x, y, w, h, theta) with confidence s.
///
/// w runs along the gripper plates (direction theta), h is the opening
/// direction. theta is in degrees and kept in [0, 180): a parallel-plate
/// grasp is unchanged by a half turn.
struct GraspCandidate {
  double x = 0;
  double y = 0;
  double w = 1;
  double h = 1;
  double theta = 0;
  double s = 1;
};

/// Grasp plus the (ground-truth or predicted) object it belongs to.
struct AnnotatedGrasp {
  GraspCandidate grasp;
  int instance_id = 0;
};

double wrap_half_turn(double degrees);

/// Builds a candidate, wrapping theta; throws std::invalid_argument unless
/// w > 0, h > 0 and s in [0, 1].
GraspCandidate make_grasp(double x, double y, double w, double h, double theta, double s = 1.0);
bool is_well_formed(const GraspCandidate& g);

/// (cos, sin) of an angle in degrees; exact at multiples of 90.
Point2 unit_direction(double degrees);

// Orientation codebook: 18 bins of 10 degrees over [0, 180). Class 0 is the
// invalid-proposal class, 1..18 are orientation bins.
inline constexpr int kOrientationBins = 18;
inline constexpr double kOrientationBinWidth = 180.0 / kOrientationBins;
inline constexpr int kNullClass = 0;
inline constexpr int kNumGraspClasses = kOrientationBins + 1;

int theta_to_class(double theta);
/// Bin midpoint in degrees for class in 1..18.
double class_to_theta(int cls);

/// Corners in counter-clockwise order (positive shoelace area in x/y).
std::array<Point2, 4> rect_corners(const GraspCandidate& g);

double polygon_area(std::span<const Point2> polygon);

/// Clips a convex polygon by every edge half-plane of a counter-clockwise
/// convex clipper (Sutherland-Hodgman).
std::vector<Point2> clip_convex(std::vector<Point2> subject, std::span<const Point2> clipper);

/// Exact intersection-over-union of two oriented rectangles.
double oriented_iou(const GraspCandidate& a, const GraspCandidate& b);

/// Smallest angle between two grasp orientations, in [0, 90].
double angle_diff(double theta_a, double theta_b);

struct GraspCriteria {
  double max_angle_deg = 30.0;  // inclusive
  double min_iou = 0.25;        // strict
};

/// Angle difference within the limit and IoU strictly above the threshold.
bool meets_criteria(double angle_deg, double iou, const GraspCriteria& criteria = {});
bool is_valid_grasp(const GraspCandidate& pred, const GraspCandidate& gt, const GraspCriteria& criteria = {});

struct GraspAccuracy {
  double percent = 0;
  int matched = 0;
  int total = 0;
  int num_scenes = 0;
  std::vector<int> excluded_scenes;  // scenes with no predictions
};

/// Reduces predictions to one top-confidence candidate per predicted object
/// (grouped by instance_id; ids <= 0 are singleton objects).
std::vector<GraspCandidate> top_candidate_per_object(std::span<const AnnotatedGrasp> predictions);

/// Greedy confidence-descending matching of per-object top candidates to
/// not-yet-matched ground-truth objects. Accuracy is pooled over scenes.
GraspAccuracy grasp_accuracy(std::span<const std::vector<AnnotatedGrasp>> predictions,
                             std::span<const std::vector<AnnotatedGrasp>> ground_truth,
                             const GraspCriteria& criteria = {});

// -- proposal targets -------------------------------------------------------

/// Axis-aligned box in center form.
struct AxisBox {
  double x = 0;
  double y = 0;
  double w = 1;
  double h = 1;
};

AxisBox axis_aligned_hull(const GraspCandidate& g);
double box_iou(const AxisBox& a, const AxisBox& b);

using BoxOffsets = Eigen::Vector4d;  // (t_x, t_y, t_w, t_h)

/// t_x = (x - x_r) / w_r, t_y = (y - y_r) / h_r, t_w = ln(w / w_r), t_h = ln(h / h_r).
BoxOffsets encode_offsets(const AxisBox& proposal, const GraspCandidate& target);
/// Inverse of encode_offsets: returns (x, y, w, h) as an AxisBox.
AxisBox decode_offsets(const AxisBox& proposal, const BoxOffsets& t);

enum class ProposalLabel { positive, negative, ignored };

struct Proposal {
  AxisBox box;
  ProposalLabel label = ProposalLabel::negative;
  BoxOffsets target = BoxOffsets::Zero();
  int target_class = kNullClass;
  int matched_gt = -1;
};

std::vector<Proposal> make_targets(std::span<const AxisBox> proposals, std::span<const GraspCandidate> ground_truth,
                                   double iou_pos, double iou_neg);

}  // namespace gskit
