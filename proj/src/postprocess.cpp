#include "gskit/postprocess.hpp"

#include "gskit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gskit {

Components label_components(const MaskImage& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("connectivity must be 4 or 8, got " + std::to_string(connectivity));
  }
  const Index H = mask.rows(), W = mask.cols();
  Components out;
  out.labels = LabelImage::Zero(H, W);
  std::vector<PixelIndex> stack;
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k) {
      if (!mask(j, k) || out.labels(j, k)) continue;
      const int id = static_cast<int>(out.areas.size()) + 1;
      Index area = 0;
      out.labels(j, k) = id;
      stack.push_back({j, k});
      while (!stack.empty()) {
        const PixelIndex p = stack.back();
        stack.pop_back();
        ++area;
        for (Index dj = -1; dj <= 1; ++dj) {
          for (Index dk = -1; dk <= 1; ++dk) {
            if ((dj == 0 && dk == 0) || (connectivity == 4 && dj != 0 && dk != 0)) continue;
            const PixelIndex q{p.row + dj, p.col + dk};
            if (!contains(mask, q) || !mask(q.row, q.col) || out.labels(q.row, q.col)) continue;
            out.labels(q.row, q.col) = id;
            stack.push_back(q);
          }
        }
      }
      out.areas.push_back(area);
    }
  }
  return out;
}

bool continuity_check(const MaskImage& mask, int connectivity, double ratio) {
  if (!(ratio >= 0 && ratio <= 1)) throw std::invalid_argument("continuity ratio must lie in [0, 1]");
  const Components c = label_components(mask, connectivity);
  if (c.areas.empty()) throw std::invalid_argument("continuity_check: empty mask");
  Index total = 0;
  for (Index a : c.areas) total += a;
  const Index largest = *std::max_element(c.areas.begin(), c.areas.end());
  return static_cast<double>(largest) >= ratio * static_cast<double>(total);
}

namespace {

// Ray parameter at which (x, y) + t * d crosses the next pixel edge along one
// axis, for a pixel spanning [center - 0.5, center + 0.5].
double first_crossing(double pos, Index cell, double d) {
  if (d > 0) return (static_cast<double>(cell) + 0.5 - pos) / d;
  if (d < 0) return (static_cast<double>(cell) - 0.5 - pos) / d;
  return std::numeric_limits<double>::infinity();
}

double border_distance(Index rows, Index cols, double x, double y, const Point2& d) {
  auto axis = [](double pos, double lo, double hi, double v) {
    if (v > 0) return (hi - pos) / v;
    if (v < 0) return (lo - pos) / v;
    return std::numeric_limits<double>::infinity();
  };
  return std::min(axis(x, -0.5, static_cast<double>(cols) - 0.5, d.x()),
                  axis(y, -0.5, static_cast<double>(rows) - 0.5, d.y()));
}

}  // namespace

double march_to_edge(const MaskImage& mask, double x, double y, const Point2& direction) {
  const double len = direction.norm();
  if (!(len > 0)) throw std::invalid_argument("march_to_edge: zero direction");
  const Point2 d = direction / len;
  PixelIndex p = nearest_pixel(x, y);
  if (!contains(mask, p) || !mask(p.row, p.col)) throw std::invalid_argument("march_to_edge: start outside the mask");

  const Index step_x = d.x() > 0 ? 1 : (d.x() < 0 ? -1 : 0);
  const Index step_y = d.y() > 0 ? 1 : (d.y() < 0 ? -1 : 0);
  double next_x = first_crossing(x, p.col, d.x());
  double next_y = first_crossing(y, p.row, d.y());
  const double delta_x = step_x ? 1.0 / std::abs(d.x()) : 0.0;
  const double delta_y = step_y ? 1.0 / std::abs(d.y()) : 0.0;
  for (;;) {
    double t;
    if (next_x < next_y) {
      t = next_x;
      p.col += step_x;
      next_x += delta_x;
    } else {
      t = next_y;
      p.row += step_y;
      next_y += delta_y;
    }
    if (!contains(mask, p) || !mask(p.row, p.col)) return std::max(t, 0.0);
  }
}

GraspCandidate expand_gripper_width(const GraspCandidate& g, const MaskImage& mask, double margin) {
  if (!(margin >= 0)) throw std::invalid_argument("gripper margin must be non-negative");
  const PixelIndex c = nearest_pixel(g.x, g.y);
  if (!contains(mask, c) || !mask(c.row, c.col)) {
    throw std::invalid_argument("grasp center (" + std::to_string(g.x) + ", " + std::to_string(g.y) +
                                ") lies outside the instance mask");
  }
  // Opening direction, perpendicular to the plates.
  const Point2 n = unit_direction(g.theta + 90.0);
  double reach = 0;
  for (const Point2& d : {n, Point2(-n)}) {
    const double edge = march_to_edge(mask, g.x, g.y, d);
    reach += std::min(edge + margin, border_distance(mask.rows(), mask.cols(), g.x, g.y, d));
  }
  GraspCandidate out = g;
  out.h = std::max(g.h, reach);
  return out;
}

Point2 mask_centroid(const MaskImage& mask) {
  double sx = 0, sy = 0;
  Index n = 0;
  for (Index j = 0; j < mask.rows(); ++j) {
    for (Index k = 0; k < mask.cols(); ++k) {
      if (!mask(j, k)) continue;
      sx += static_cast<double>(k);
      sy += static_cast<double>(j);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("mask_centroid: empty mask");
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

Point2 centroid_offset(const MaskImage& mask, const GraspCandidate& g) { return mask_centroid(mask) - Point2(g.x, g.y); }

}  // namespace gskit
