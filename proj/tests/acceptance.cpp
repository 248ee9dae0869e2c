// Acceptance run: one PASS/FAIL line per criterion.
//
//   gskit_acceptance            all criteria
//   gskit_acceptance 2 6        selected criteria

#include "gskit/coordconv.hpp"
#include "gskit/grasp.hpp"
#include "gskit/losses.hpp"
#include "gskit/model.hpp"
#include "gskit/pick.hpp"
#include "gskit/postprocess.hpp"
#include "gskit/scene.hpp"
#include "gskit/trainer.hpp"

#include "fd.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace gskit;
namespace fs = std::filesystem;

namespace {

struct Result {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// -- 1 ----------------------------------------------------------------------

Result gradient_fidelity() {
  const auto t0 = Clock::now();
  Result r;
  double worst_op = 0;
  std::string worst_name;
  auto op = [&](const std::string& name, double err) {
    if (err > worst_op) {
      worst_op = err;
      worst_name = name;
    }
  };

  Rng rng = make_rng(11);
  using test::random_tensor;

  for (auto [stride, pad, k] : std::vector<std::array<int, 3>>{{1, 1, 3}, {2, 1, 3}, {1, 0, 1}, {2, 0, 3}}) {
    const std::vector<Tensor> in{random_tensor({2, 3, 7, 7}, rng), random_tensor({4, 3, k, k}, rng), random_tensor({4}, rng)};
    op("conv2d", test::graph_gradient_error(
                     [=](ad::Graph&, const std::vector<ad::Var>& v) { return ad::conv2d(v[0], v[1], v[2], stride, pad); }, in, 1));
  }
  for (auto kind : {ad::NormKind::instance, ad::NormKind::batch}) {
    const std::vector<Tensor> in{random_tensor({3, 4, 5, 5}, rng), random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng)};
    op("normalize", test::graph_gradient_error(
                        [=](ad::Graph&, const std::vector<ad::Var>& v) { return ad::normalize(v[0], v[1], v[2], kind); }, in, 2));
  }
  {
    const std::vector<Tensor> in{random_tensor({2, 3, 5, 5}, rng), random_tensor({2, 6}, rng)};
    op("adain", test::graph_gradient_error([](ad::Graph&, const std::vector<ad::Var>& v) { return ad::adain(v[0], v[1]); }, in, 3));
  }
  {
    const std::vector<Tensor> in{random_tensor({2, 3, 4, 5}, rng)};
    op("bilinear_upsample",
       test::graph_gradient_error([](ad::Graph&, const std::vector<ad::Var>& v) { return ad::upsample_bilinear(v[0], 4); }, in, 4));
  }
  {
    const std::vector<Tensor> in{random_tensor({2, 3, 6, 6}, rng)};
    const std::vector<ad::FeaturePoint> pts{{0, 1.3, 2.7}, {1, 4.9, 0.2}, {1, 0, 5}, {0, 2.5, 2.5}};
    op("extract_feature_at",
       test::graph_gradient_error([&](ad::Graph&, const std::vector<ad::Var>& v) { return ad::extract_at(v[0], pts); }, in, 5));
  }

  // Losses, each against its own analytic gradient.
  {
    const Tensor p = random_tensor({5, 4}, rng, -2, 2), t = random_tensor({5, 4}, rng, -2, 2);
    const OffsetMatrix pm = Eigen::Map<const OffsetMatrix>(p.data(), 5, 4), tm = Eigen::Map<const OffsetMatrix>(t.data(), 5, 4);
    const MatrixLoss l = loss_box(pm, tm);
    auto f = [&](const Eigen::ArrayXd& x) { return loss_box(Eigen::Map<const OffsetMatrix>(x.data(), 5, 4), tm).value; };
    op("loss_box", test::scalar_gradient_error(f, p.array(), Eigen::Map<const Eigen::ArrayXd>(l.grad.data(), l.grad.size())));
  }
  {
    const Tensor z = random_tensor({4, kNumGraspClasses}, rng, -2, 2);
    const std::vector<int> cls{0, 3, kNullClass, 11};
    const LogitMatrix zm = Eigen::Map<const LogitMatrix>(z.data(), 4, kNumGraspClasses);
    const MatrixLoss l = loss_rot(zm, cls);
    auto f = [&](const Eigen::ArrayXd& x) {
      return loss_rot(Eigen::Map<const LogitMatrix>(x.data(), 4, kNumGraspClasses), cls).value;
    };
    op("loss_rot", test::scalar_gradient_error(f, z.array(), Eigen::Map<const Eigen::ArrayXd>(l.grad.data(), l.grad.size())));
  }
  {
    const Tensor probs_logits = random_tensor({2, 6, 6}, rng, -2, 2);
    const Tensor probs = softmax_channels(probs_logits);
    LabelImage labels(6, 6);
    for (Index i = 0; i < 36; ++i) labels.data()[i] = static_cast<int>((i * 7) % 3 == 0);
    const SemLoss l = loss_sem(probs, labels);
    auto f = [&](const Eigen::ArrayXd& x) { return loss_sem(Tensor({2, 6, 6}, x), labels, &l.selected).value; };
    op("loss_sem", test::scalar_gradient_error(f, probs.array(), l.grad.array()));
  }
  for (double gamma : {0.0, 2.0}) {
    const Tensor z = random_tensor({2, 5, 5}, rng, -2, 2);
    MaskImage mask(5, 5);
    for (Index i = 0; i < 25; ++i) mask.data()[i] = static_cast<std::uint8_t>(i % 3 == 1);
    double Z = 0;
    const TensorLoss l = loss_nfl(z, mask, gamma, 0, &Z);
    auto f = [&](const Eigen::ArrayXd& x) { return loss_nfl(Tensor({2, 5, 5}, x), mask, gamma, Z).value; };
    op("loss_nfl", test::scalar_gradient_error(f, z.array(), l.grad.array()));
  }

  // End to end through the full network on 32 x 32 inputs.
  ModelConfig mc;
  mc.height = mc.width = 32;
  mc.variants = variant_set("depthcc");
  const Model model = Model::create(mc, 5);
  GenConfig gc;
  gc.height = gc.width = 32;
  gc.min_major = 5;
  gc.max_major = 9;
  gc.min_minor = 2;
  gc.depth_noise = 0.01;
  gc.rgb_noise = 0.02;
  TrainingBatch batch;
  Rng prng = make_rng(6);
  for (int i = 0; i < 2; ++i) {
    batch.scenes.push_back(generate_scene(gc, mix_seed(21, static_cast<std::uint64_t>(i))));
    for (const auto& s : sample_proposals(batch.scenes.back(), 2, prng)) {
      batch.queries.push_back({i, s.p});
      batch.query_instances.push_back(s.instance_id);
    }
  }
  const LossWeights w{1, 1, 1};
  const BatchResult ref = batch_loss(model, batch, w, true);
  std::vector<std::pair<std::size_t, Index>> coords;
  Rng crng = make_rng(7);
  for (std::size_t t = 0; t < model.params.size(); ++t) {
    const Index n = model.params.values[t].size();
    for (int c = 0; c < 3; ++c) coords.emplace_back(t, std::uniform_int_distribution<Index>(0, n - 1)(crng));
  }
  Eigen::ArrayXd analytic(static_cast<Index>(coords.size())), numeric(static_cast<Index>(coords.size()));
  const double step = 1e-6;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto [t, c] = coords[i];
    Model m = model;
    m.params.values[t].data()[c] += step;
    const double up = batch_loss(m, batch, w, false, &ref.frozen).loss.total;
    m.params.values[t].data()[c] -= 2 * step;
    const double down = batch_loss(m, batch, w, false, &ref.frozen).loss.total;
    numeric[static_cast<Index>(i)] = (up - down) / (2 * step);
    analytic[static_cast<Index>(i)] = ref.grads[t].data()[c];
  }
  const double e2e = test::relative_error(analytic, numeric);
  const double elapsed = seconds_since(t0);

  r.pass = worst_op <= 1e-4 && e2e <= 1e-3 && elapsed < 120;
  r.detail = "worst op " + worst_name + " " + fmt(worst_op) + " (<= 1e-4), end-to-end " + fmt(e2e) + " over " +
             std::to_string(coords.size()) + " parameters (<= 1e-3), " + fmt(elapsed) + " s";
  return r;
}

// -- 2 ----------------------------------------------------------------------

// Point-in-rectangle from the center frame, independent of the corner code.
bool inside(const GraspCandidate& g, double x, double y) {
  const double t = g.theta * M_PI / 180;
  const double dx = x - g.x, dy = y - g.y;
  const double u = dx * std::cos(t) + dy * std::sin(t);
  const double v = -dx * std::sin(t) + dy * std::cos(t);
  return std::abs(u) <= g.w / 2 && std::abs(v) <= g.h / 2;
}

double monte_carlo_iou(const GraspCandidate& a, const GraspCandidate& b, Rng& rng, int side) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& g : {a, b}) {
    const double r = std::hypot(g.w, g.h) / 2;
    x0 = std::min(x0, g.x - r);
    x1 = std::max(x1, g.x + r);
    y0 = std::min(y0, g.y - r);
    y1 = std::max(y1, g.y + r);
  }
  std::uniform_real_distribution<double> u(0, 1);
  long both = 0, either = 0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double x = x0 + (x1 - x0) * (i + u(rng)) / side;
      const double y = y0 + (y1 - y0) * (j + u(rng)) / side;
      const bool ia = inside(a, x, y), ib = inside(b, x, y);
      both += ia && ib;
      either += ia || ib;
    }
  }
  return either == 0 ? 0 : static_cast<double>(both) / static_cast<double>(either);
}

Result oriented_iou_oracle() {
  Rng rng = make_rng(12);
  std::uniform_real_distribution<double> size(2, 12), angle(0, 180), shift(-4, 4);
  double worst = 0;
  int overlapping = 0;
  for (int i = 0; i < 100; ++i) {
    const GraspCandidate a = make_grasp(0, 0, size(rng), size(rng), angle(rng));
    const GraspCandidate b = make_grasp(shift(rng), shift(rng), size(rng), size(rng), angle(rng));
    const double exact = oriented_iou(a, b);
    overlapping += exact > 0;
    worst = std::max(worst, std::abs(exact - monte_carlo_iou(a, b, rng, 1000)));
  }
  // Axis-aligned closed forms.
  struct Case {
    GraspCandidate a, b;
    double iou;
  };
  const std::vector<Case> cases{
      {make_grasp(0, 0, 4, 4, 0), make_grasp(1, 0, 4, 4, 0), 12.0 / 20.0},
      {make_grasp(0, 0, 4, 2, 0), make_grasp(0, 0, 4, 2, 0), 1.0},
      {make_grasp(0, 0, 4, 4, 0), make_grasp(0, 0, 2, 2, 0), 4.0 / 16.0},
      {make_grasp(0, 0, 4, 4, 0), make_grasp(10, 0, 4, 4, 0), 0.0},
      {make_grasp(0, 0, 6, 2, 0), make_grasp(0, 0, 6, 2, 90), 4.0 / 20.0},
      {make_grasp(0, 0, 4, 4, 0), make_grasp(2, 2, 4, 4, 0), 4.0 / 28.0},
  };
  double worst_closed = 0;
  for (const auto& c : cases) worst_closed = std::max(worst_closed, std::abs(oriented_iou(c.a, c.b) - c.iou));
  Result r;
  r.pass = worst <= 3e-3 && worst_closed <= 1e-12 && overlapping >= 90;
  r.detail = "max |exact - MC| " + fmt(worst) + " over 100 pairs (" + std::to_string(overlapping) +
             " overlapping, 10^6 samples each), closed-form error " + fmt(worst_closed);
  return r;
}

// -- 3 ----------------------------------------------------------------------

Result loss_closed_forms() {
  Result r;
  std::vector<std::string> notes;

  Tensor p({2, 8, 8}, 0.5);
  LabelImage labels(8, 8);
  for (Index i = 0; i < 64; ++i) labels.data()[i] = static_cast<int>((i * 5) % 7 < 3);
  const SemLoss sem = loss_sem(p, labels);
  // d/dP of -w log P is -w / P, so each weight is -grad * P.
  double weight_sum = 0;
  for (Index j = 0; j < 8; ++j) {
    for (Index k = 0; k < 8; ++k) weight_sum += -sem.grad(labels(j, k), j, k) * p(labels(j, k), j, k);
  }
  const double sem_err = std::abs(sem.value - std::log(2.0));
  const double w_err = std::abs(weight_sum - 1);

  double nfl_err = 0;
  for (double q : {0.2, 0.5, 0.9}) {
    for (double gamma : {0.0, 1.0, 2.0}) {
      MaskImage mask(6, 6);
      for (Index i = 0; i < 36; ++i) mask.data()[i] = static_cast<std::uint8_t>(i % 2);
      Tensor z({2, 6, 6});
      const double l = std::log(q / (1 - q));
      for (Index j = 0; j < 6; ++j) {
        for (Index k = 0; k < 6; ++k) z(mask(j, k) ? 1 : 0, j, k) = l;
      }
      nfl_err = std::max(nfl_err, std::abs(loss_nfl(z, mask, gamma).value + std::log(q)));
      nfl_err = std::max(nfl_err, std::abs(nfl_value(Image::Constant(6, 6, q), gamma) + std::log(q)));
    }
  }

  // Two proposals: class 7 predicted at 0.8, the null class at 0.9.
  LogitMatrix z(2, kNumGraspClasses);
  z.row(0).setConstant(std::log(0.2 / (kNumGraspClasses - 1)));
  z(0, 7) = std::log(0.8);
  z.row(1).setConstant(std::log(0.1 / (kNumGraspClasses - 1)));
  z(1, kNullClass) = std::log(0.9);
  const std::vector<int> cls{7, kNullClass};
  const double rot = loss_rot(z, cls).value;

  r.pass = sem_err <= 1e-12 && w_err <= 1e-12 && nfl_err <= 1e-12 && std::abs(rot - 0.1643) <= 1e-4;
  r.detail = "L_sem - ln2 " + fmt(sem_err) + ", weight sum - 1 " + fmt(w_err) + ", NFL + ln q " + fmt(nfl_err) + ", L_rot " +
             fmt(rot);
  return r;
}

// -- 4 ----------------------------------------------------------------------

Image shifted(const Image& src, Index dy, Index dx, double fill) {
  Image out = Image::Constant(src.rows(), src.cols(), fill);
  for (Index j = 0; j < src.rows(); ++j) {
    for (Index k = 0; k < src.cols(); ++k) {
      const Index jj = j + dy, kk = k + dx;
      if (jj >= 0 && kk >= 0 && jj < src.rows() && kk < src.cols()) out(jj, kk) = src(j, k);
    }
  }
  return out;
}

Result coordconv_contract() {
  Result r;
  Rng rng = make_rng(13);
  std::uniform_real_distribution<double> Rd(4, 64), ad(0.25, 8), bd(0.25, 8), noise(0, 0.05);
  std::uniform_int_distribution<int> preset_pick(0, 2), shift(-12, 12);
  int range_fail = 0, zero_fail = 0, equiv_fail = 0;
  const std::vector<GenConfig> presets{GenConfig{}, depth_separated_preset(), well_separated_preset()};

  CoordConvVariants all;
  all.rel = all.depth_dist = all.dist25 = all.depth_sim = all.hha = true;
  for (int i = 0; i < 1000; ++i) {
    GenConfig gc = presets[static_cast<std::size_t>(preset_pick(rng))];
    gc.depth_noise = noise(rng);
    const Scene s = generate_scene(gc, mix_seed(31, static_cast<std::uint64_t>(i)));
    const Index H = s.height(), W = s.width();
    const PointProposal p{static_cast<double>(std::uniform_int_distribution<Index>(0, W - 1)(rng)),
                          static_cast<double>(std::uniform_int_distribution<Index>(0, H - 1)(rng))};
    CoordConvConfig cfg = CoordConvConfig::defaults_for(H, W, all);
    cfg.R = Rd(rng);
    cfg.alpha = ad(rng);
    cfg.beta = bd(rng);
    const CoordConvMaps maps = encode(s.depth, p, cfg);
    for (const Image* m : maps.ordered()) {
      if (m->minCoeff() < -1 || m->maxCoeff() > 1) ++range_fail;
    }
    const Index pj = static_cast<Index>(p.y), pk = static_cast<Index>(p.x);
    for (const Image* m : {&maps.x_rel, &maps.y_rel, &maps.d_dist, &maps.f_25d, &maps.d_sim}) {
      if ((*m)(pj, pk) != 0) ++zero_fail;
    }

    // Shift the depth and the proposal together; maps agree where both exist.
    const Index dy = shift(rng), dx = shift(rng);
    if (pj + dy < 0 || pk + dx < 0 || pj + dy >= H || pk + dx >= W) continue;
    CoordConvConfig plain = cfg;
    plain.variants.hha = false;
    const Image moved = shifted(s.depth, dy, dx, s.background.depth);
    const CoordConvMaps a = encode(s.depth, p, plain);
    const CoordConvMaps b = encode(moved, {p.x + static_cast<double>(dx), p.y + static_cast<double>(dy)}, plain);
    const auto ma = a.ordered(), mb = b.ordered();
    for (std::size_t c = 0; c < ma.size(); ++c) {
      for (Index j = std::max<Index>(0, -dy); j < std::min(H, H - dy); ++j) {
        for (Index k = std::max<Index>(0, -dx); k < std::min(W, W - dx); ++k) {
          if ((*ma[c])(j, k) != (*mb[c])(j + dy, k + dx)) {
            ++equiv_fail;
            j = H;
            break;
          }
        }
      }
    }
  }

  std::vector<Index> counts;
  for (const auto& v : variant_names()) {
    ModelConfig mc;
    mc.variants = variant_set(v);
    counts.push_back(Model::create(mc, 1).params.count());
  }
  const bool same = std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) == counts.end();

  r.pass = range_fail == 0 && zero_fail == 0 && equiv_fail == 0 && same;
  r.detail = "out of range " + std::to_string(range_fail) + ", nonzero at p " + std::to_string(zero_fail) +
             ", equivariance breaks " + std::to_string(equiv_fail) + ", parameter counts " +
             (same ? "equal (" + std::to_string(counts.front()) + ")" : "differ");
  return r;
}

// -- 5 ----------------------------------------------------------------------

Result ablation_ordering() {
  const auto t0 = Clock::now();
  const GenConfig gc = depth_separated_preset();
  std::vector<Scene> all;
  for (std::uint64_t i = 0; i < 250; ++i) all.push_back(generate_scene(gc, mix_seed(0, i)));
  const DatasetSplit split = split_dataset(all.size(), 0.8, 0);
  std::vector<Scene> train_set, test_set;
  for (auto i : split.train) train_set.push_back(all[i]);
  for (auto i : split.test) test_set.push_back(all[i]);

  TrainConfig base;
  base.epochs = 30;
  base.weights.grasp = 0;  // backbone + segmentation branch
  const AblationTable table = run_ablation(train_set, test_set, base, {"none", "relcc", "depthcc"}, {1, 2, 3}, 1,
                                           [](const AblationCell& c) {
                                             std::cerr << "  " << c.variant << " seed " << c.seed << " instance IoU "
                                                       << fmt(c.instance_iou) << "\n";
                                           });
  std::map<std::string, double> med;
  for (const auto& row : table.rows) med[row.variant] = row.median;
  const double elapsed = seconds_since(t0);
  Result r;
  r.pass = train_set.size() == 200 && test_set.size() == 50 && med["depthcc"] >= med["relcc"] + 2 &&
           med["relcc"] >= med["none"] + 1 && elapsed < 1800;
  r.detail = "median IoU none " + fmt(med["none"]) + ", relcc " + fmt(med["relcc"]) + ", depthcc " + fmt(med["depthcc"]) +
             " (need depthcc >= relcc + 2, relcc >= none + 1), " + fmt(elapsed / 60) + " min";
  return r;
}

// -- 6 ----------------------------------------------------------------------

// Largest number of valid one-to-one matches over every assignment.
int best_assignment(const std::vector<GraspCandidate>& preds, const std::vector<GraspCandidate>& gts, std::size_t i,
                    std::vector<bool>& used) {
  if (i == preds.size()) return 0;
  int best = best_assignment(preds, gts, i + 1, used);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (used[g] || !is_valid_grasp(preds[i], gts[g])) continue;
    used[g] = true;
    best = std::max(best, 1 + best_assignment(preds, gts, i + 1, used));
    used[g] = false;
  }
  return best;
}

Result grasp_metric() {
  Result r;
  std::vector<std::string> bad;
  if (!meets_criteria(25, 0.30)) bad.push_back("(25, 0.30)");
  if (meets_criteria(35, 0.90)) bad.push_back("(35, 0.90)");
  if (meets_criteria(0, 0.25)) bad.push_back("(0, 0.25)");

  // Geometric versions: a strip of a quarter of the area at equal angle.
  const GraspCandidate gt = make_grasp(0, 0, 4, 4, 0);
  if (oriented_iou(gt, make_grasp(0, 0, 4, 1, 0)) != 0.25 || is_valid_grasp(make_grasp(0, 0, 4, 1, 0), gt)) {
    bad.push_back("strip IoU 0.25");
  }
  // A square rotated by 25 degrees, sized so its IoU with the ground truth is 0.30.
  double lo = 0.5, hi = 4;
  for (int i = 0; i < 200; ++i) {
    const double mid = (lo + hi) / 2;
    (oriented_iou(gt, make_grasp(0, 0, mid, mid, 25)) < 0.30 ? lo : hi) = mid;
  }
  if (!is_valid_grasp(make_grasp(0, 0, hi, hi, 25), gt)) bad.push_back("rotated square IoU 0.30");
  if (is_valid_grasp(make_grasp(0, 0, 4, 4, 35), gt)) bad.push_back("35 degree square");

  // Ten scenes with one ground-truth object each; seven predictions are
  // built to match.
  std::vector<std::vector<AnnotatedGrasp>> preds(10), gts(10);
  for (int s = 0; s < 10; ++s) gts[static_cast<std::size_t>(s)].push_back({make_grasp(10, 10, 12, 6, 15 * s), 1});
  // Valid: a shifted copy in scenes 0-6.
  for (int s = 0; s < 7; ++s) {
    auto g = gts[static_cast<std::size_t>(s)][0].grasp;
    g.x += 1;
    g.s = 0.9;
    preds[static_cast<std::size_t>(s)].push_back({g, 1});
  }
  // Lower-confidence candidates of the same predicted object are not scored.
  for (int s = 0; s < 3; ++s) {
    auto g = gts[static_cast<std::size_t>(s)][0].grasp;
    g.theta = wrap_half_turn(g.theta + 60);
    g.s = 0.5;
    preds[static_cast<std::size_t>(s)].push_back({g, 1});
  }
  // Misses: wrong place, too small, crossed.
  preds[7].push_back({make_grasp(50, 50, 12, 6, 0), 1});
  preds[8].push_back({make_grasp(10, 10, 3, 2, 15 * 8), 1});
  preds[9].push_back({make_grasp(10, 10, 12, 6, 15 * 9 + 90, 0.4), 1});

  const GraspAccuracy acc = grasp_accuracy(preds, gts);
  int oracle_matched = 0, oracle_total = 0;
  for (int s = 0; s < 10; ++s) {
    const auto top = top_candidate_per_object(preds[static_cast<std::size_t>(s)]);
    std::vector<GraspCandidate> g;
    for (const auto& a : gts[static_cast<std::size_t>(s)]) g.push_back(a.grasp);
    std::vector<bool> used(g.size(), false);
    oracle_matched += best_assignment(top, g, 0, used);
    oracle_total += static_cast<int>(top.size());
  }
  const double oracle = 100.0 * oracle_matched / oracle_total;
  r.pass = bad.empty() && acc.total == 10 && acc.percent == 70.0 && std::abs(acc.percent - oracle) < 1e-12;
  r.detail = "fixtures " + (bad.empty() ? std::string("ok") : "wrong: " + bad.front()) + ", accuracy " + fmt(acc.percent) +
             "% (" + std::to_string(acc.matched) + "/" + std::to_string(acc.total) + "), exhaustive oracle " + fmt(oracle) + "%";
  return r;
}

// -- 7 ----------------------------------------------------------------------

MaskImage random_blob(Rng& rng, Index H, Index W) {
  MaskImage m = MaskImage::Zero(H, W);
  std::uniform_real_distribution<double> cx(12, W - 12.0), cy(12, H - 12.0), ax(2, 9), ang(0, M_PI);
  const int parts = std::uniform_int_distribution<int>(1, 3)(rng);
  double x0 = cx(rng), y0 = cy(rng);
  for (int i = 0; i < parts; ++i) {
    const double a = ax(rng), b = ax(rng), t = ang(rng);
    for (Index j = 0; j < H; ++j) {
      for (Index k = 0; k < W; ++k) {
        const double dx = static_cast<double>(k) - x0, dy = static_cast<double>(j) - y0;
        const double u = dx * std::cos(t) + dy * std::sin(t), v = -dx * std::sin(t) + dy * std::cos(t);
        if ((u * u) / (a * a) + (v * v) / (b * b) <= 1) m(j, k) = 1;
      }
    }
    x0 += std::uniform_real_distribution<double>(-3, 3)(rng);
    y0 += std::uniform_real_distribution<double>(-3, 3)(rng);
  }
  return m;
}

Result postprocess_properties() {
  Result r;
  Rng rng = make_rng(17);
  const Index H = 48, W = 48;
  int idem_fail = 0, mono_fail = 0, centroid_fail = 0, cont_fail = 0;

  for (int i = 0; i < 100; ++i) {
    const MaskImage m = random_blob(rng, H, W);
    // Grasp centered on a random mask pixel.
    std::vector<PixelIndex> px;
    for (Index j = 0; j < H; ++j) {
      for (Index k = 0; k < W; ++k) {
        if (m(j, k)) px.push_back({j, k});
      }
    }
    const PixelIndex c = px[std::uniform_int_distribution<std::size_t>(0, px.size() - 1)(rng)];
    const double theta = std::uniform_real_distribution<double>(0, 180)(rng);
    const double margin = std::uniform_real_distribution<double>(0, 4)(rng);
    double prev_out = 0;
    for (double h : {1.0, 3.0, 6.0, 10.0, 20.0, 40.0}) {
      const GraspCandidate g = make_grasp(static_cast<double>(c.col), static_cast<double>(c.row), 6, h, theta);
      const GraspCandidate e1 = expand_gripper_width(g, m, margin);
      const GraspCandidate e2 = expand_gripper_width(e1, m, margin);
      if (std::abs(e2.h - e1.h) > 1) ++idem_fail;
      if (e1.h < g.h || e1.h < prev_out) ++mono_fail;
      prev_out = e1.h;
    }

    double sx = 0, sy = 0;
    for (const auto& p : px) {
      sx += static_cast<double>(p.col);
      sy += static_cast<double>(p.row);
    }
    const Point2 cen = mask_centroid(m);
    if (std::abs(cen.x() - sx / static_cast<double>(px.size())) > 1e-9 ||
        std::abs(cen.y() - sy / static_cast<double>(px.size())) > 1e-9) {
      ++centroid_fail;
    }

    // Single components: the blob itself when connected.
    if (label_components(m, 8).areas.size() == 1 && !continuity_check(m)) ++cont_fail;
    // Two equal squares, apart.
    MaskImage two = MaskImage::Zero(H, W);
    const Index side = std::uniform_int_distribution<Index>(2, 10)(rng);
    const Index j0 = std::uniform_int_distribution<Index>(0, H - side)(rng);
    const Index k0 = std::uniform_int_distribution<Index>(0, W / 2 - side - 1)(rng);
    const Index j1 = std::uniform_int_distribution<Index>(0, H - side)(rng);
    const Index k1 = std::uniform_int_distribution<Index>(W / 2 + 1, W - side)(rng);
    two.block(j0, k0, side, side).setOnes();
    two.block(j1, k1, side, side).setOnes();
    if (continuity_check(two)) ++cont_fail;
    MaskImage one = MaskImage::Zero(H, W);
    one.block(j0, k0, side, side + 3).setOnes();
    if (!continuity_check(one)) ++cont_fail;
  }

  int pick_fail = 0, scenes = 0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Scene scene = generate_scene(well_separated_preset(), mix_seed(41, s));
    const PickOutcome o = simulate_picking(scene, OracleModel{});
    ++scenes;
    if (o.successes != o.initial_objects || o.remaining_objects != 0 || o.iterations > 3 * o.initial_objects) ++pick_fail;
  }

  r.pass = idem_fail == 0 && mono_fail == 0 && centroid_fail == 0 && cont_fail == 0 && pick_fail == 0;
  r.detail = "idempotence " + std::to_string(idem_fail) + ", monotonicity " + std::to_string(mono_fail) + ", centroid " +
             std::to_string(centroid_fail) + ", continuity " + std::to_string(cont_fail) + " failures; oracle picking " +
             std::to_string(scenes - pick_fail) + "/" + std::to_string(scenes) + " scenes fully cleared";
  return r;
}

// -- 8 ----------------------------------------------------------------------

void drop_wall_time(nlohmann::json& j) {
  if (j.is_object()) {
    j.erase("wall_time");
    for (auto& [k, v] : j.items()) drop_wall_time(v);
  } else if (j.is_array()) {
    for (auto& v : j) drop_wall_time(v);
  }
}

// File contents with timing fields removed from JSON and JSON lines.
std::string comparable(const fs::path& p) {
  std::string text = read_file(p);
  const auto ext = p.extension();
  if (ext == ".json") {
    auto j = nlohmann::json::parse(text);
    drop_wall_time(j);
    return j.dump();
  }
  if (ext == ".jsonl") {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      drop_wall_time(j);
      out += j.dump() + "\n";
    }
    return out;
  }
  return text;
}

std::vector<std::string> differences(const fs::path& a, const fs::path& b) {
  std::vector<std::string> diff;
  std::map<std::string, fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) fa[fs::relative(e.path(), a).string()] = e.path();
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) fb[fs::relative(e.path(), b).string()] = e.path();
  }
  for (const auto& [name, path] : fa) {
    if (!fb.count(name)) {
      diff.push_back(name + " missing");
    } else if (comparable(path) != comparable(fb[name])) {
      diff.push_back(name);
    }
  }
  for (const auto& [name, path] : fb) {
    if (!fa.count(name)) diff.push_back(name + " extra");
  }
  return diff;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + GSKIT_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Result reproducibility() {
  Result r;
  const fs::path root = fs::temp_directory_path() / ("gskit_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = (root / "data").string();

  struct Step {
    std::string name, args, out;
  };
  const std::vector<Step> steps{
      {"gen", "gen --num 8 --seed 4 --preset depth-separated --out " + data, data},
      {"train", "train --data " + data + " --epochs 2 --seed 2 --variant depthcc --out " + (root / "train").string(),
       (root / "train").string()},
      {"ablate", "ablate --num 10 --epochs 1 --variants none,relcc,depthcc --seeds 1,2 --seed 3 --out " +
                     (root / "ablate").string(),
       (root / "ablate").string()},
  };
  std::vector<std::string> notes;
  bool ok = true;
  for (const auto& s : steps) {
    if (run_cli(s.args) != 0) {
      ok = false;
      notes.push_back(s.name + " exited nonzero");
      continue;
    }
    const fs::path first = root / (s.name + "_first");
    fs::copy(s.out, first, fs::copy_options::recursive);
    fs::remove_all(s.out);
    if (run_cli(s.args) != 0) {
      ok = false;
      notes.push_back(s.name + " rerun exited nonzero");
      continue;
    }
    const auto d = differences(first, s.out);
    if (!d.empty()) {
      ok = false;
      notes.push_back(s.name + " differs in " + d.front());
    } else {
      notes.push_back(s.name + " identical");
    }
  }
  fs::remove_all(root);
  r.pass = ok;
  for (std::size_t i = 0; i < notes.size(); ++i) r.detail += (i ? ", " : "") + notes[i];
  r.detail += " (wall_time fields ignored)";
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"oriented IoU oracle", oriented_iou_oracle},
      {"loss closed forms", loss_closed_forms},
      {"CoordConv contract", coordconv_contract},
      {"ablation ordering", ablation_ordering},
      {"grasp metric conformance", grasp_metric},
      {"post-processing properties", postprocess_properties},
      {"reproducibility", reproducibility},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty()) {
    selected.resize(criteria.size());
    std::iota(selected.begin(), selected.end(), 1);
  }
  int failed = 0;
  for (int n : selected) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion " << n << "\n";
      return 2;
    }
    const auto& [name, fn] = criteria[static_cast<std::size_t>(n - 1)];
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("threw: ") + e.what();
    }
    failed += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << n << " " << name << ": " << r.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
