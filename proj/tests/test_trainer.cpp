#include "gskit/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace gskit;

namespace {

SceneObject rect(double cx, double cy, double a, double b, double depth) {
  SceneObject o;
  o.cx = cx;
  o.cy = cy;
  o.a = a;
  o.b = b;
  o.depth = depth;
  return o;
}

GenConfig small_gen() {
  GenConfig g = depth_separated_preset(32, 32);
  g.min_major = 5;
  g.max_major = 8;
  g.min_minor = 2;
  return g;
}

TrainConfig small_train(const std::string& variant, int epochs) {
  TrainConfig c;
  c.model.height = c.model.width = 32;
  c.variant = variant;
  c.epochs = epochs;
  c.batch_size = 2;
  c.proposals_per_image = 3;
  return c;
}

}  // namespace

TEST_CASE("variant sets") {
  CHECK(variant_set("none").empty());
  CHECK(variant_set("relcc").channel_count() == 2);
  CHECK(variant_set("depthcc").channel_count() == 4);
  CHECK(variant_set("depthsim").depth_sim);
  CHECK(variant_set("hha").hha);
  CHECK_THROWS_AS(variant_set("bogus"), std::invalid_argument);
}

TEST_CASE("proposal sampling") {
  GenConfig cfg;
  const Scene one = render_scene({rect(30, 30, 10, 5, 0.4)}, cfg, 0);
  Rng rng = make_rng(1);
  for (const auto& s : sample_proposals(one, 50, rng)) {
    CHECK(s.instance_id == 1);
    CHECK(one.instances(nearest_pixel(s.p.x, s.p.y).row, nearest_pixel(s.p.x, s.p.y).col) == 1);
  }

  // Unequal areas: selection is per instance, not per pixel.
  const Scene two = render_scene({rect(15, 15, 12, 8, 0.4), rect(48, 48, 4, 3, 0.4)}, cfg, 0);
  REQUIRE(two.num_instances() == 2);
  const auto many = sample_proposals(two, 10000, rng);
  int first = 0;
  for (const auto& s : many) {
    first += s.instance_id == 1;
    CHECK(two.instances(nearest_pixel(s.p.x, s.p.y).row, nearest_pixel(s.p.x, s.p.y).col) == s.instance_id);
  }
  CHECK(std::abs(first / 10000.0 - 0.5) < 0.02);

  Scene empty = one;
  empty.instances.setZero();
  CHECK_THROWS_AS(sample_proposals(empty, 1, rng), std::invalid_argument);
}

TEST_CASE("sgd step") {
  ModelParams p;
  p.add("w", Tensor({1}, {1.0}));
  TrainConfig c;
  c.lr = 0.1;
  c.momentum = 0;
  c.weight_decay = 0;
  SgdState st;
  CHECK(sgd_step(p, {Tensor({1}, {0.0})}, st, c));
  CHECK(p.values[0].at({0}) == 1.0);
  CHECK(sgd_step(p, {Tensor({1}, {1.0})}, st, c));
  CHECK(p.values[0].at({0}) == doctest::Approx(0.9).epsilon(1e-15));

  // Two Nesterov steps with decay against the hand recursion.
  ModelParams q;
  q.add("w", Tensor({2}, {1.0, -2.0}));
  c.momentum = 0.9;
  c.weight_decay = 0.01;
  SgdState s2;
  const double g1[2] = {0.5, -0.25}, g2[2] = {-0.3, 0.7};
  sgd_step(q, {Tensor({2}, {g1[0], g1[1]})}, s2, c);
  sgd_step(q, {Tensor({2}, {g2[0], g2[1]})}, s2, c);
  for (int i = 0; i < 2; ++i) {
    double w = i == 0 ? 1.0 : -2.0, v = 0;
    for (const double* g : {g1, g2}) {
      const double d = g[i] + 0.01 * w;
      v = 0.9 * v + d;
      w -= 0.1 * (d + 0.9 * v);
    }
    CHECK(std::abs(q.values[0].at({i}) - w) < 1e-12);
  }

  const Tensor before = q.values[0];
  CHECK_FALSE(sgd_step(q, {Tensor({2}, {NAN, 0.0})}, s2, c));
  CHECK(q.values[0] == before);
  CHECK_THROWS_AS(sgd_step(q, {Tensor({3})}, s2, c), std::invalid_argument);
}

TEST_CASE("training reduces the loss and is deterministic") {
  std::vector<Scene> data;
  for (std::uint64_t i = 0; i < 8; ++i) data.push_back(generate_scene(small_gen(), mix_seed(5, i)));
  const TrainConfig c = small_train("depthcc", 6);
  const TrainResult a = train(data, c);
  REQUIRE(a.log.size() == 6);
  CHECK(a.log.front().total > a.log.back().total);
  const TrainResult b = train(data, c);
  CHECK(encode_checkpoint(a.model) == encode_checkpoint(b.model));
  CHECK_THROWS_AS(train({}, c), std::invalid_argument);
}

TEST_CASE("mask IoU") {
  MaskImage a = MaskImage::Zero(4, 4), b = MaskImage::Zero(4, 4);
  a.block(0, 0, 2, 2).setOnes();
  CHECK(mask_iou(a, a) == 1);
  CHECK(mask_iou(b, a) == 0);
  b.block(1, 1, 2, 2).setOnes();
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 7));
  CHECK(mask_iou(MaskImage::Zero(2, 2), MaskImage::Zero(2, 2)) == 1);
}

TEST_CASE("evaluation on a hand-built fixture") {
  // Constant heads: every pixel is instance and foreground.
  TrainConfig c = small_train("relcc", 0);
  Model m = Model::create(c.resolved_model(), 1);
  m.params.at("inst.logits.weight").array() = 0;
  m.params.at("inst.logits.bias") = Tensor({2}, {-5.0, 5.0});
  m.params.at("sem.logits.weight").array() = 0;
  m.params.at("sem.logits.bias") = Tensor({2}, {-5.0, 5.0});

  GenConfig g = small_gen();
  const Scene s0 = render_scene({rect(8, 8, 4, 2, 0.3)}, g, 0);
  const Scene s1 = render_scene({rect(8, 8, 6, 3, 0.3), rect(22, 22, 5, 4, 0.5)}, g, 0);
  REQUIRE(s0.num_instances() == 1);
  REQUIRE(s1.num_instances() == 2);
  auto area = [](const Scene& s, int id) { return static_cast<double>(s.instance_mask(id).cast<int>().sum()); };
  const double n = 32 * 32;
  const double inst = 100 * (area(s0, 1) + area(s1, 1) + area(s1, 2)) / n / 3;
  const double fg0 = area(s0, 1) / n, fg1 = (area(s1, 1) + area(s1, 2)) / n;
  const double sem = 100 * (0.5 * fg0 + 0.5 * fg1) / 2;

  const EvalReport r = evaluate(m, {s0, s1}, {});
  CHECK(r.num_proposals == 3);
  CHECK(r.instance_iou == doctest::Approx(inst).epsilon(1e-12));
  CHECK(r.semantic_iou == doctest::Approx(sem).epsilon(1e-12));
  CHECK(r.per_scene[0].instance_iou == doctest::Approx(100 * area(s0, 1) / n).epsilon(1e-12));

  const EvalReport again = evaluate(m, {s0, s1}, {});
  CHECK(to_json(again).dump() == to_json(r).dump());

  std::vector<Scene> wrong{generate_scene(GenConfig{}, 1)};
  CHECK_THROWS_AS(evaluate(m, wrong, {}), std::invalid_argument);
}

TEST_CASE("grasp-center proposals score missing objects as zero") {
  TrainConfig c = small_train("relcc", 0);
  Model m = Model::create(c.resolved_model(), 1);
  // No cell is confident: no candidates, every object misses.
  m.params.at("grasp.out.weight").array() = 0;
  Tensor bias({4 + kNumGraspClasses});
  bias.data()[4 + kNullClass] = 20;
  m.params.at("grasp.out.bias") = bias;
  const Scene s = generate_scene(small_gen(), 3);
  EvalConfig ec;
  ec.source = ProposalSource::grasp_centers;
  const EvalReport r = evaluate(m, {s}, ec);
  CHECK(r.num_proposals == s.num_instances());
  CHECK(r.instance_iou == 0);
  CHECK(r.excluded_scenes == std::vector<int>{0});
}

TEST_CASE("dataset split") {
  const DatasetSplit s = split_dataset(250, 0.8, 0);
  CHECK(s.train.size() == 200);
  CHECK(s.test.size() == 50);
  std::vector<bool> seen(250, false);
  for (auto i : s.train) seen[i] = true;
  for (auto i : s.test) {
    CHECK_FALSE(seen[i]);
    seen[i] = true;
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
  CHECK(split_dataset(250, 0.8, 0).test == s.test);
  CHECK(split_dataset(250, 0.8, 1).test != s.test);
}

TEST_CASE("median and references") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS(median({}));
  CHECK(*reference_iou("none") == 83.01);
  CHECK(*reference_iou("relcc") == 85.63);
  CHECK(*reference_iou("depthcc") == 91.27);
  CHECK(*reference_iou("depthsim") == 90.91);
  CHECK(*reference_iou("hha") == 89.68);
}

TEST_CASE("ablation table layout") {
  std::vector<Scene> data;
  for (std::uint64_t i = 0; i < 4; ++i) data.push_back(generate_scene(small_gen(), mix_seed(9, i)));
  const TrainConfig c = small_train("none", 1);
  const AblationTable t = run_ablation(data, data, c, {"none", "relcc", "depthcc"}, {1, 2});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].variant == "none");
  CHECK(t.rows[1].maps == std::vector<std::string>{"rel"});
  CHECK(t.rows[2].maps == std::vector<std::string>{"rel", "depth_dist", "dist25"});
  CHECK(t.rows[2].instance_iou.size() == 2);
  CHECK(t.rows[2].median == doctest::Approx(median(t.rows[2].instance_iou)));
  CHECK(*t.rows[1].reference == 85.63);
  const std::string text = format_table(t);
  CHECK(text.find("depthcc") != std::string::npos);
  const auto j = to_json(t);
  CHECK(j.at("rows").size() == 3);
}

TEST_CASE("train config JSON round trip") {
  TrainConfig c = small_train("hha", 7);
  c.lr = 0.005;
  const TrainConfig r = train_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(r.lr == 0.005);
  CHECK(r.epochs == 7);
  CHECK(r.variant == "hha");
  CHECK(r.model.height == 32);
  CHECK_THROWS(train_config_from_json(nlohmann::json::parse(R"({"lr": -1})")));
}
