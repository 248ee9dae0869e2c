#include "gskit/grasp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace gskit {

double wrap_half_turn(double degrees) {
  if (!std::isfinite(degrees)) throw std::invalid_argument("non-finite grasp angle");
  double t = std::fmod(degrees, 180.0);
  if (t < 0) t += 180.0;
  if (t >= 180.0) t -= 180.0;
  return t;
}

GraspCandidate make_grasp(double x, double y, double w, double h, double theta, double s) {
  if (!(w > 0) || !(h > 0)) throw std::invalid_argument("grasp extents must be positive");
  if (!(s >= 0 && s <= 1)) throw std::invalid_argument("grasp confidence must lie in [0, 1]");
  return {x, y, w, h, wrap_half_turn(theta), s};
}

bool is_well_formed(const GraspCandidate& g) {
  return std::isfinite(g.x) && std::isfinite(g.y) && g.w > 0 && g.h > 0 && std::isfinite(g.w) && std::isfinite(g.h) &&
         g.theta >= 0 && g.theta < 180 && g.s >= 0 && g.s <= 1;
}

Point2 unit_direction(double degrees) {
  double t = std::fmod(degrees, 360.0);
  if (t < 0) t += 360.0;
  if (t == 0) return {1, 0};
  if (t == 90) return {0, 1};
  if (t == 180) return {-1, 0};
  if (t == 270) return {0, -1};
  const double r = t * std::numbers::pi / 180.0;
  return {std::cos(r), std::sin(r)};
}

int theta_to_class(double theta) {
  const int bin = static_cast<int>(std::floor(wrap_half_turn(theta) / kOrientationBinWidth));
  return std::min(bin, kOrientationBins - 1) + 1;
}

double class_to_theta(int cls) {
  if (cls < 1 || cls > kOrientationBins) throw std::invalid_argument("orientation class out of range");
  return (cls - 0.5) * kOrientationBinWidth;
}

std::array<Point2, 4> rect_corners(const GraspCandidate& g) {
  const Point2 c(g.x, g.y);
  const Point2 dir = unit_direction(g.theta);
  const Point2 u = dir * (g.w / 2);
  const Point2 v = Point2(-dir.y(), dir.x()) * (g.h / 2);
  return {c - u - v, c + u - v, c + u + v, c - u + v};
}

double polygon_area(std::span<const Point2> polygon) {
  double twice = 0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point2& p = polygon[i];
    const Point2& q = polygon[(i + 1) % polygon.size()];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return twice / 2;
}

namespace {

double cross(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

std::vector<Point2> clip_convex(std::vector<Point2> subject, std::span<const Point2> clipper) {
  for (std::size_t e = 0; e < clipper.size() && !subject.empty(); ++e) {
    const Point2& a = clipper[e];
    const Point2 edge = clipper[(e + 1) % clipper.size()] - a;
    std::vector<Point2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Point2& p = subject[i];
      const Point2& q = subject[(i + 1) % subject.size()];
      const double dp = cross(edge, p - a);
      const double dq = cross(edge, q - a);
      if (dp >= 0) out.push_back(p);
      if ((dp >= 0) != (dq >= 0)) {
        const double t = dp / (dp - dq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

double oriented_iou(const GraspCandidate& a, const GraspCandidate& b) {
  const auto ca = rect_corners(a);
  const auto cb = rect_corners(b);
  const auto clipped = clip_convex({ca.begin(), ca.end()}, cb);
  const double inter = clipped.size() < 3 ? 0.0 : std::max(0.0, polygon_area(clipped));
  const double uni = a.w * a.h + b.w * b.h - inter;
  if (uni <= 0) return 0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double angle_diff(double theta_a, double theta_b) {
  const double d = wrap_half_turn(theta_a - theta_b);
  return std::min(d, 180.0 - d);
}

bool meets_criteria(double angle_deg, double iou, const GraspCriteria& criteria) {
  return angle_deg <= criteria.max_angle_deg && iou > criteria.min_iou;
}

bool is_valid_grasp(const GraspCandidate& pred, const GraspCandidate& gt, const GraspCriteria& criteria) {
  return meets_criteria(angle_diff(pred.theta, gt.theta), oriented_iou(pred, gt), criteria);
}

std::vector<GraspCandidate> top_candidate_per_object(std::span<const AnnotatedGrasp> predictions) {
  std::vector<GraspCandidate> out;
  std::map<int, std::size_t> slot;
  for (const auto& p : predictions) {
    if (p.instance_id <= 0) {
      out.push_back(p.grasp);
      continue;
    }
    auto [it, inserted] = slot.try_emplace(p.instance_id, out.size());
    if (inserted) {
      out.push_back(p.grasp);
    } else if (p.grasp.s > out[it->second].s) {
      out[it->second] = p.grasp;
    }
  }
  return out;
}

GraspAccuracy grasp_accuracy(std::span<const std::vector<AnnotatedGrasp>> predictions,
                             std::span<const std::vector<AnnotatedGrasp>> ground_truth, const GraspCriteria& criteria) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("prediction and ground-truth scene counts differ");
  }
  GraspAccuracy acc;
  acc.num_scenes = static_cast<int>(predictions.size());
  for (std::size_t scene = 0; scene < predictions.size(); ++scene) {
    auto preds = top_candidate_per_object(predictions[scene]);
    if (preds.empty()) {
      acc.excluded_scenes.push_back(static_cast<int>(scene));
      continue;
    }
    std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.s > b.s; });

    // Ground-truth objects keyed by instance id, each with all its grasps.
    std::map<int, std::vector<GraspCandidate>> objects;
    int singleton = -1;
    for (const auto& g : ground_truth[scene]) objects[g.instance_id > 0 ? g.instance_id : singleton--].push_back(g.grasp);
    std::map<int, bool> matched;

    for (const auto& p : preds) {
      int best_object = 0;
      double best_iou = -1;
      bool found = false;
      for (const auto& [id, grasps] : objects) {
        if (matched[id]) continue;
        for (const auto& g : grasps) {
          if (!is_valid_grasp(p, g, criteria)) continue;
          const double iou = oriented_iou(p, g);
          if (iou > best_iou) {
            best_iou = iou;
            best_object = id;
            found = true;
          }
        }
      }
      if (found) {
        matched[best_object] = true;
        ++acc.matched;
      }
      ++acc.total;
    }
  }
  acc.percent = acc.total == 0 ? 0.0 : 100.0 * acc.matched / acc.total;
  return acc;
}

AxisBox axis_aligned_hull(const GraspCandidate& g) {
  const auto c = rect_corners(g);
  double x0 = c[0].x(), x1 = c[0].x(), y0 = c[0].y(), y1 = c[0].y();
  for (const auto& p : c) {
    x0 = std::min(x0, p.x());
    x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y());
    y1 = std::max(y1, p.y());
  }
  return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

double box_iou(const AxisBox& a, const AxisBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w / 2, b.x + b.w / 2) - std::max(a.x - a.w / 2, b.x - b.w / 2));
  const double iy = std::max(0.0, std::min(a.y + a.h / 2, b.y + b.h / 2) - std::max(a.y - a.h / 2, b.y - b.h / 2));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

BoxOffsets encode_offsets(const AxisBox& r, const GraspCandidate& g) {
  return {(g.x - r.x) / r.w, (g.y - r.y) / r.h, std::log(g.w / r.w), std::log(g.h / r.h)};
}

AxisBox decode_offsets(const AxisBox& r, const BoxOffsets& t) {
  return {r.x + t[0] * r.w, r.y + t[1] * r.h, r.w * std::exp(t[2]), r.h * std::exp(t[3])};
}

std::vector<Proposal> make_targets(std::span<const AxisBox> proposals, std::span<const GraspCandidate> ground_truth,
                                   double iou_pos, double iou_neg) {
  if (iou_neg > iou_pos) throw std::invalid_argument("make_targets requires iou_neg <= iou_pos");
  std::vector<AxisBox> hulls;
  hulls.reserve(ground_truth.size());
  for (const auto& g : ground_truth) hulls.push_back(axis_aligned_hull(g));

  std::vector<Proposal> out;
  out.reserve(proposals.size());
  for (const auto& box : proposals) {
    if (!(box.w > 0) || !(box.h > 0)) throw std::invalid_argument("proposal extents must be positive");
    Proposal p;
    p.box = box;
    double best = -1;
    for (std::size_t i = 0; i < hulls.size(); ++i) {
      const double iou = box_iou(box, hulls[i]);
      if (iou > best) {
        best = iou;
        p.matched_gt = static_cast<int>(i);
      }
    }
    if (p.matched_gt >= 0 && best >= iou_pos) {
      const auto& g = ground_truth[static_cast<std::size_t>(p.matched_gt)];
      p.label = ProposalLabel::positive;
      p.target = encode_offsets(box, g);
      p.target_class = theta_to_class(g.theta);
    } else if (p.matched_gt < 0 || best < iou_neg) {
      p.label = ProposalLabel::negative;
      p.target_class = kNullClass;
    } else {
      p.label = ProposalLabel::ignored;
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace gskit
