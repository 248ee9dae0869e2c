// Mask-driven grasp checks: connected components, gripper-opening
// refinement and mask centroids.

#pragma once

#include "gskit/grasp.hpp"
#include "gskit/tensor.hpp"

#include <vector>

namespace gskit {

struct Components {
  LabelImage labels;         // 0 = outside the mask, 1..n component ids
  std::vector<Index> areas;  // areas[i] is the pixel count of component i + 1
};

/// Connectivity 4 or 8; anything else throws std::invalid_argument.
Components label_components(const MaskImage& mask, int connectivity = 8);

/// True iff the largest component holds at least `ratio` of the mask area.
/// Throws std::invalid_argument on an empty mask.
bool continuity_check(const MaskImage& mask, int connectivity = 8, double ratio = 0.95);

/// Distances from (x, y) along `direction` until the ray leaves the mask,
/// measured to the far edge of the last mask pixel crossed (pixels are unit
/// squares around their centers). The starting pixel must be in the mask.
double march_to_edge(const MaskImage& mask, double x, double y, const Point2& direction);

/// Widens the gripper opening h to the mask extent through the grasp center
/// plus `margin` on each side, capped at the image border. h never shrinks;
/// x, y, w, theta and s are kept. Throws std::invalid_argument when the center
/// pixel is outside the mask or margin < 0.
GraspCandidate expand_gripper_width(const GraspCandidate& g, const MaskImage& mask, double margin);

/// Mean (x, y) of the mask pixels; throws std::invalid_argument when empty.
Point2 mask_centroid(const MaskImage& mask);
/// mask_centroid(mask) - (g.x, g.y).
Point2 centroid_offset(const MaskImage& mask, const GraspCandidate& g);

}  // namespace gskit
