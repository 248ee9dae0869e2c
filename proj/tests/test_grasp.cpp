#include "gskit/grasp.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace gskit;

namespace {

std::set<std::pair<long, long>> corner_set(const GraspCandidate& g) {
  std::set<std::pair<long, long>> out;
  for (const auto& c : rect_corners(g)) out.insert({std::lround(c.x() * 1e9), std::lround(c.y() * 1e9)});
  return out;
}

}  // namespace

TEST_CASE("candidate construction") {
  CHECK(make_grasp(0, 0, 1, 1, 190).theta == doctest::Approx(10));
  CHECK(make_grasp(0, 0, 1, 1, -30).theta == doctest::Approx(150));
  CHECK(make_grasp(0, 0, 1, 1, 180).theta == 0);
  CHECK_THROWS_AS(make_grasp(0, 0, 0, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_grasp(0, 0, 1, -1, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_grasp(0, 0, 1, 1, 0, 1.5), std::invalid_argument);
}

TEST_CASE("orientation classes") {
  CHECK(theta_to_class(94) == 10);
  CHECK(theta_to_class(0) == 1);
  CHECK(class_to_theta(1) == 5);
  CHECK(theta_to_class(185) == 1);
  CHECK(theta_to_class(179.9) == 18);
  CHECK(class_to_theta(10) == 95);
  CHECK_THROWS(class_to_theta(0));
}

TEST_CASE("rectangle corners") {
  const auto sq = corner_set({0, 0, 2, 2, 0});
  CHECK(sq == std::set<std::pair<long, long>>{{-1000000000, -1000000000}, {1000000000, -1000000000},
                                              {1000000000, 1000000000}, {-1000000000, 1000000000}});
  CHECK(corner_set({0, 0, 2, 2, 90}) == sq);
  CHECK(corner_set({0, 0, 4, 2, 90}) == corner_set({0, 0, 2, 4, 0}));
  const auto c = rect_corners({3, 4, 5, 2, 33});
  CHECK(polygon_area(c) == doctest::Approx(10));
}

TEST_CASE("oriented IoU") {
  const GraspCandidate a{2, 1, 4, 2, 0};
  CHECK(oriented_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oriented_iou(a, {3, 1, 4, 2, 0}) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(oriented_iou({0, 0, 10, 10, 0}, {1000, 0, 10, 10, 45}) == 0);
  // Square rotated 45 degrees inside a larger square: ratio of areas.
  CHECK(oriented_iou({0, 0, 4, 4, 0}, {0, 0, 2, 2, 45}) == doctest::Approx(4.0 / 16.0).epsilon(1e-12));
  const GraspCandidate b{1, 2, 6, 3, 20}, c{2, 1, 5, 4, 70};
  CHECK(oriented_iou(b, c) == doctest::Approx(oriented_iou(c, b)).epsilon(1e-12));
}

TEST_CASE("angle difference") {
  CHECK(angle_diff(170, 5) == doctest::Approx(15));
  CHECK(angle_diff(42, 42) == 0);
  CHECK(angle_diff(0, 90) == 90);
  CHECK(angle_diff(179, 1) == doctest::Approx(2));
}

TEST_CASE("validity criterion") {
  const GraspCandidate gt{0, 0, 10, 10, 0};
  CHECK(is_valid_grasp({0, 0, 10, 10, 30}, gt));
  CHECK_FALSE(is_valid_grasp({0, 0, 10, 10, 31}, gt));
  // IoU exactly 0.25: a 10 x 2.5 strip inside the 10 x 10 ground truth.
  CHECK_FALSE(is_valid_grasp({0, -3.75, 10, 2.5, 0}, gt));
  CHECK(is_valid_grasp({0, -3.7, 10, 2.6, 0}, gt));
}

TEST_CASE("grasp accuracy counting") {
  const std::vector<std::vector<AnnotatedGrasp>> gt{{{{10, 10, 4, 4, 0}, 1}, {{30, 30, 4, 4, 90}, 2}}};
  CHECK(grasp_accuracy(gt, gt).percent == 100);
  std::vector<std::vector<AnnotatedGrasp>> half{{{{10, 10, 4, 4, 0, 0.9}, 1}, {{50, 50, 4, 4, 0, 0.8}, 2}}};
  const GraspAccuracy acc = grasp_accuracy(half, gt);
  CHECK(acc.percent == 50);
  CHECK(acc.matched == 1);
  CHECK(acc.total == 2);

  // Two predictions for the same ground-truth object: only one can match.
  std::vector<std::vector<AnnotatedGrasp>> dup{{{{10, 10, 4, 4, 0, 0.9}, 1}, {{10, 10, 4, 4, 0, 0.8}, 2}}};
  CHECK(grasp_accuracy(dup, gt).percent == 50);

  // A scene without predictions is excluded, not scored.
  std::vector<std::vector<AnnotatedGrasp>> none{{}};
  const GraspAccuracy e = grasp_accuracy(none, gt);
  CHECK(e.total == 0);
  CHECK(e.excluded_scenes == std::vector<int>{0});
}

TEST_CASE("top candidate per object") {
  const std::vector<AnnotatedGrasp> p{{{0, 0, 1, 1, 0, 0.2}, 1}, {{1, 0, 1, 1, 0, 0.7}, 1}, {{5, 5, 1, 1, 0, 0.4}, 2},
                                      {{9, 9, 1, 1, 0, 0.1}, 0}};
  const auto top = top_candidate_per_object(p);
  REQUIRE(top.size() == 3);
  CHECK(std::count_if(top.begin(), top.end(), [](const GraspCandidate& g) { return g.s == 0.7; }) == 1);
  CHECK(std::count_if(top.begin(), top.end(), [](const GraspCandidate& g) { return g.s == 0.2; }) == 0);
}

TEST_CASE("box offsets") {
  const AxisBox r{10, 10, 8, 6};
  const GraspCandidate same{10, 10, 8, 6, 0};
  CHECK(encode_offsets(r, same).isZero());
  const BoxOffsets t = encode_offsets({14, 10, 8, 6}, same);
  CHECK(t[0] == doctest::Approx(-0.5));
  const AxisBox back = decode_offsets(r, BoxOffsets(0.25, -0.5, std::log(2.0), 0));
  CHECK(back.x == doctest::Approx(12));
  CHECK(back.y == doctest::Approx(7));
  CHECK(back.w == doctest::Approx(16));
  CHECK(back.h == doctest::Approx(6));
}

TEST_CASE("proposal labelling") {
  const std::vector<GraspCandidate> gt{{20, 20, 8, 4, 94}};
  const AxisBox hull = axis_aligned_hull(gt[0]);
  const std::vector<AxisBox> boxes{hull, {21, 20, hull.w, hull.h}, {60, 60, 8, 8}, {20 + 0.6 * hull.w, 20, hull.w, hull.h}};
  const auto t = make_targets(boxes, gt, 0.5, 0.2);
  CHECK(t[0].label == ProposalLabel::positive);
  CHECK(t[0].target.head<2>().isZero(1e-12));
  CHECK(t[0].target_class == 10);
  CHECK(t[1].label == ProposalLabel::positive);
  CHECK(t[2].label == ProposalLabel::negative);
  CHECK(t[2].target_class == kNullClass);
  CHECK(t[3].label == ProposalLabel::ignored);
  CHECK(box_iou(hull, hull) == doctest::Approx(1));
}
