#include "gskit/cli.hpp"

#include "gskit/coordconv.hpp"
#include "gskit/grasp.hpp"
#include "gskit/model.hpp"
#include "gskit/pick.hpp"
#include "gskit/pnm.hpp"
#include "gskit/scene.hpp"
#include "gskit/trainer.hpp"
#include "gskit/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace gskit::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  int jobs = 1;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool with_jobs) {
  app->add_option("--seed", c.seed, "Seed for all randomness");
  app->add_option("--config", c.config, "JSON config file (overridden by flags)");
  if (with_jobs) app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "Output directory")->required();
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw UsageError("--config: file " + path + " does not exist");
  try {
    json j = json::parse(read_file(path));
    if (!j.is_object()) throw UsageError("--config: " + path + " must hold a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw UsageError("--config: " + path + " is not valid JSON (" + e.what() + ")");
  }
}

void require_dir(const std::string& flag, const std::string& path) {
  if (!fs::is_directory(path)) throw UsageError(flag + ": directory " + path + " does not exist");
}

void require_file(const std::string& flag, const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError(flag + ": file " + path + " does not exist");
}

template <typename T>
void take(const CLI::App* app, const char* flag, const T& value, T& field) {
  if (app->count(flag) > 0) field = value;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Manifest {
 public:
  Manifest(std::string subcommand, const std::vector<std::string>& args) : start_(std::chrono::steady_clock::now()) {
    j_["subcommand"] = std::move(subcommand);
    j_["tool_version"] = kVersion;
    j_["argv"] = args;
  }
  ordered_json& operator[](const char* key) { return j_[key]; }
  void write(const fs::path& dir) {
    j_["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file_atomic(dir / "run_manifest.json", j_.dump(2) + "\n");
  }

 private:
  ordered_json j_;
  std::chrono::steady_clock::time_point start_;
};

ordered_json to_json(const GenConfig& c) {
  ordered_json j;
  j["height"] = c.height;
  j["width"] = c.width;
  j["min_objects"] = c.min_objects;
  j["max_objects"] = c.max_objects;
  j["min_major"] = c.min_major;
  j["max_major"] = c.max_major;
  j["min_aspect"] = c.min_aspect;
  j["max_aspect"] = c.max_aspect;
  j["min_minor"] = c.min_minor;
  j["depth_noise"] = c.depth_noise;
  j["rgb_noise"] = c.rgb_noise;
  j["background_depth"] = c.background_depth;
  j["depth_planes"] = c.depth_planes;
  j["min_distinct_planes"] = c.min_distinct_planes;
  j["min_pair_overlap"] = c.min_pair_overlap;
  j["max_pair_overlap"] = c.max_pair_overlap;
  j["min_gap"] = c.min_gap;
  j["min_visible_pixels"] = c.min_visible_pixels;
  j["plate_ratio"] = c.plate_ratio;
  j["color_spread"] = c.color_spread;
  return j;
}

GenConfig preset(const std::string& name, Index h, Index w) {
  if (name == "depth-separated") return depth_separated_preset(h, w);
  if (name == "well-separated") return well_separated_preset(h, w);
  if (name == "default") {
    GenConfig c;
    c.height = h;
    c.width = w;
    return c;
  }
  throw UsageError("--preset: unknown preset '" + name + "' (expected depth-separated, well-separated or default)");
}

GenConfig gen_config_from_json(const json& j, GenConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("height", c.height);
  get("width", c.width);
  get("min_objects", c.min_objects);
  get("max_objects", c.max_objects);
  get("min_major", c.min_major);
  get("max_major", c.max_major);
  get("min_aspect", c.min_aspect);
  get("max_aspect", c.max_aspect);
  get("min_minor", c.min_minor);
  get("depth_noise", c.depth_noise);
  get("rgb_noise", c.rgb_noise);
  get("background_depth", c.background_depth);
  get("depth_planes", c.depth_planes);
  get("min_distinct_planes", c.min_distinct_planes);
  get("min_pair_overlap", c.min_pair_overlap);
  get("max_pair_overlap", c.max_pair_overlap);
  get("min_gap", c.min_gap);
  get("min_visible_pixels", c.min_visible_pixels);
  get("plate_ratio", c.plate_ratio);
  get("color_spread", c.color_spread);
  return c;
}

std::vector<Scene> generate_many(const GenConfig& cfg, std::uint64_t seed, int num, int jobs) {
  std::vector<Scene> scenes(static_cast<std::size_t>(num));
  parallel_for(scenes.size(), jobs, [&](std::size_t i) { scenes[i] = generate_scene(cfg, seed + i); });
  return scenes;
}

std::string scene_name(std::size_t i) {
  std::ostringstream os;
  os << "scene_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

// -- gen --------------------------------------------------------------------

struct GenArgs {
  Common common;
  int num = 10;
  std::string preset = "depth-separated";
  Index height = 64;
  Index width = 64;
  double depth_noise = 0;
};

void cmd_gen(const CLI::App* app, const GenArgs& a, const std::vector<std::string>& argv) {
  Manifest m("gen", argv);
  GenConfig cfg = gen_config_from_json(load_config(a.common.config), preset(a.preset, a.height, a.width));
  take(app, "--height", a.height, cfg.height);
  take(app, "--width", a.width, cfg.width);
  take(app, "--depth-noise", a.depth_noise, cfg.depth_noise);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--config/--height/--width: ") + e.what());
  }
  const fs::path out(a.common.out);
  fs::create_directories(out);
  const auto scenes = generate_many(cfg, a.common.seed, a.num, a.common.jobs);
  parallel_for(scenes.size(), a.common.jobs, [&](std::size_t i) { write_scene(scenes[i], out / scene_name(i)); });
  log(LogLevel::info, "wrote " + std::to_string(scenes.size()) + " scenes to " + out.string());
  m["seed"] = a.common.seed;
  m["config"] = to_json(cfg);
  m["config"]["preset"] = a.preset;
  m["config"]["num"] = a.num;
  m["inputs"] = ordered_json::object();
  m["outputs"] = {{"scenes", out.string()}};
  m.write(out);
}

// -- encode -----------------------------------------------------------------

struct EncodeArgs {
  Common common;
  std::string scene;
  std::string point;
  std::string variants;
  double R = 0;
  double alpha = 0;
  double beta = 0;
};

CoordConvVariants parse_variants(const std::string& flag, const std::vector<std::string>& names) {
  try {
    CoordConvVariants v = CoordConvVariants::parse(names);
    v.validate();
    return v;
  } catch (const std::invalid_argument& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

void cmd_encode(const CLI::App* app, const EncodeArgs& a, const std::vector<std::string>& argv) {
  Manifest m("encode", argv);
  require_dir("--scene", a.scene);
  const auto xy = split_list(a.point);
  PointProposal p;
  try {
    if (xy.size() != 2) throw std::invalid_argument("");
    p = {std::stod(xy[0]), std::stod(xy[1])};
  } catch (const std::exception&) {
    throw UsageError("--point: expected x,y in pixels, got '" + a.point + "'");
  }
  const Scene scene = read_scene(a.scene);
  CoordConvConfig cfg = CoordConvConfig::defaults_for(scene.height(), scene.width());
  cfg.variants = CoordConvVariants{true, true, true, true, true};
  const json j = load_config(a.common.config);
  if (j.contains("R")) cfg.R = j.at("R").get<double>();
  if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
  if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
  if (j.contains("variants")) cfg.variants = parse_variants("--config variants", j.at("variants").get<std::vector<std::string>>());
  take(app, "--R", a.R, cfg.R);
  take(app, "--alpha", a.alpha, cfg.alpha);
  take(app, "--beta", a.beta, cfg.beta);
  if (app->count("--variants")) cfg.variants = parse_variants("--variants", split_list(a.variants));
  try {
    cfg.validate();
    check_proposal(p, scene.height(), scene.width());
  } catch (const std::out_of_range& e) {
    throw UsageError(std::string("--point: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--config/--R/--alpha/--beta: ") + e.what());
  }

  const CoordConvMaps maps = encode(scene.depth, p, cfg);
  const fs::path out(a.common.out);
  fs::create_directories(out);
  const auto images = maps.ordered();
  const auto names = maps.ordered_names();
  ordered_json files = ordered_json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    pnm::Raster r;
    r.width = img.cols();
    r.height = img.rows();
    r.maxval = 65535;
    r.samples.resize(static_cast<std::size_t>(img.size()));
    for (Index jj = 0; jj < img.rows(); ++jj) {
      for (Index k = 0; k < img.cols(); ++k) {
        const double v = std::clamp(img(jj, k), -1.0, 1.0);
        r.samples[static_cast<std::size_t>(jj * img.cols() + k)] = static_cast<std::uint16_t>(std::lround((v + 1.0) * 0.5 * 65535.0));
      }
    }
    const std::string file = names[i] + ".pgm";
    pnm::write(out / file, r);
    files.push_back({{"name", names[i]}, {"file", file}});
  }
  ordered_json side;
  side["mapping"] = {{"value_min", -1.0}, {"value_max", 1.0}, {"stored_min", 0}, {"stored_max", 65535},
                     {"decode", "value = stored / 65535 * 2 - 1"}};
  side["point"] = {{"x", p.x}, {"y", p.y}};
  side["R"] = cfg.R;
  side["alpha"] = cfg.alpha;
  side["beta"] = cfg.beta;
  side["variants"] = cfg.variants.names();
  side["maps"] = files;
  write_file_atomic(out / "maps.json", side.dump(2) + "\n");

  m["seed"] = a.common.seed;
  m["config"] = {{"R", cfg.R}, {"alpha", cfg.alpha}, {"beta", cfg.beta}, {"variants", cfg.variants.names()},
                 {"point", {p.x, p.y}}};
  m["inputs"] = {{"scene", a.scene}};
  m["outputs"] = {{"maps", out.string()}};
  m.write(out);
}

// -- train ------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data;
  std::string variant;
  int epochs = 0;
  double lr = 0;
  double weight_decay = 0;
  double momentum = 0;
  bool no_nesterov = false;
  bool no_augment = false;
  int batch_size = 0;
  int proposals = 0;
  double lambda_grasp = 0, lambda_sem = 0, lambda_inst = 0;
};

void add_train_flags(CLI::App* app, TrainArgs& a) {
  app->add_option("--variant", a.variant, "CoordConv variant: none, relcc, depthcc, depthsim, hha");
  app->add_option("--epochs", a.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  app->add_option("--lr", a.lr, "Learning rate")->check(CLI::PositiveNumber);
  app->add_option("--weight-decay", a.weight_decay, "Weight decay")->check(CLI::NonNegativeNumber);
  app->add_option("--momentum", a.momentum, "Momentum")->check(CLI::Range(0.0, 0.999999));
  app->add_flag("--no-nesterov", a.no_nesterov, "Plain momentum");
  app->add_flag("--no-augment", a.no_augment, "Disable rotation and translation augmentation");
  app->add_option("--batch-size", a.batch_size, "Images per step")->check(CLI::PositiveNumber);
  app->add_option("--proposals", a.proposals, "Point proposals per image")->check(CLI::PositiveNumber);
  app->add_option("--lambda-grasp", a.lambda_grasp, "Grasp loss weight")->check(CLI::NonNegativeNumber);
  app->add_option("--lambda-sem", a.lambda_sem, "Semantic loss weight")->check(CLI::NonNegativeNumber);
  app->add_option("--lambda-inst", a.lambda_inst, "Instance loss weight")->check(CLI::NonNegativeNumber);
}

TrainConfig resolve_train(const CLI::App* app, const TrainArgs& a) {
  TrainConfig cfg;
  try {
    cfg = train_config_from_json(load_config(a.common.config), cfg);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("--config: ") + e.what());
  }
  take(app, "--seed", a.common.seed, cfg.seed);
  take(app, "--variant", a.variant, cfg.variant);
  take(app, "--epochs", a.epochs, cfg.epochs);
  take(app, "--lr", a.lr, cfg.lr);
  take(app, "--weight-decay", a.weight_decay, cfg.weight_decay);
  take(app, "--momentum", a.momentum, cfg.momentum);
  if (a.no_nesterov) cfg.nesterov = false;
  if (a.no_augment) cfg.augment = false;
  take(app, "--batch-size", a.batch_size, cfg.batch_size);
  take(app, "--proposals", a.proposals, cfg.proposals_per_image);
  take(app, "--lambda-grasp", a.lambda_grasp, cfg.weights.grasp);
  take(app, "--lambda-sem", a.lambda_sem, cfg.weights.sem);
  take(app, "--lambda-inst", a.lambda_inst, cfg.weights.inst);
  try {
    variant_set(cfg.variant);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--variant: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--config: ") + e.what());
  }
  return cfg;
}

std::vector<Scene> read_data(const std::string& dir) {
  require_dir("--data", dir);
  std::vector<Scene> scenes = read_dataset(dir);
  if (scenes.empty()) throw UsageError("--data: no scene containers in " + dir);
  return scenes;
}

void cmd_train(const CLI::App* app, const TrainArgs& a, const std::vector<std::string>& argv) {
  Manifest m("train", argv);
  const TrainConfig cfg = resolve_train(app, a);
  const std::vector<Scene> scenes = read_data(a.data);
  for (const auto& s : scenes) {
    if (s.height() != cfg.model.height || s.width() != cfg.model.width) {
      throw UsageError("--data: scenes are " + std::to_string(s.height()) + " x " + std::to_string(s.width()) +
                       " but the model is configured for " + std::to_string(cfg.model.height) + " x " +
                       std::to_string(cfg.model.width) + " (set model.height/width in --config)");
    }
  }
  const fs::path out(a.common.out);
  fs::create_directories(out);
  std::string log_lines;
  const TrainResult r = train(scenes, cfg, [&](const EpochLog& e) {
    log_lines += to_json(e).dump() + "\n";
    log(LogLevel::info, "epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.total));
  });
  save_checkpoint(r.model, out / "checkpoint.gskit");
  write_file_atomic(out / "train_log.jsonl", log_lines);
  m["seed"] = cfg.seed;
  m["config"] = to_json(cfg);
  m["inputs"] = {{"data", a.data}, {"num_scenes", scenes.size()}};
  m["outputs"] = {{"checkpoint", (out / "checkpoint.gskit").string()}, {"log", (out / "train_log.jsonl").string()}};
  m.write(out);
}

// -- eval -------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string source = "ground-truth";
  double threshold = 0.5;
};

ProposalSource parse_source(const std::string& s) {
  if (s == "ground-truth") return ProposalSource::ground_truth;
  if (s == "grasp-centers") return ProposalSource::grasp_centers;
  throw UsageError("--proposals: expected ground-truth or grasp-centers, got '" + s + "'");
}

void cmd_eval(const CLI::App*, const EvalArgs& a, const std::vector<std::string>& argv) {
  Manifest m("eval", argv);
  EvalConfig ec;
  ec.source = parse_source(a.source);
  ec.seed = a.common.seed;
  ec.jobs = a.common.jobs;
  ec.mask_threshold = a.threshold;
  require_file("--checkpoint", a.checkpoint);
  const std::vector<Scene> scenes = read_data(a.data);
  const Model model = load_checkpoint(a.checkpoint);
  for (const auto& s : scenes) {
    if (s.height() != model.config.height || s.width() != model.config.width) {
      throw UsageError("--data: scene resolution " + std::to_string(s.height()) + " x " + std::to_string(s.width()) +
                       " does not match the checkpoint's " + std::to_string(model.config.height) + " x " +
                       std::to_string(model.config.width));
    }
  }
  EvalReport rep = evaluate(model, scenes, ec);
  rep.variant = [&] {
    for (const auto& name : variant_names()) {
      if (variant_set(name) == model.config.variants) return name;
    }
    return std::string("custom");
  }();
  const fs::path out(a.common.out);
  fs::create_directories(out);
  write_file_atomic(out / "eval_report.json", to_json(rep).dump(2) + "\n");
  std::cout << "instance IoU " << rep.instance_iou << "%  fg/bg IoU " << rep.semantic_iou << "%  grasp accuracy "
            << rep.grasp_accuracy << "%\n";
  m["seed"] = a.common.seed;
  m["config"] = {{"proposals", a.source}, {"mask_threshold", a.threshold}, {"jobs", a.common.jobs}};
  m["inputs"] = {{"checkpoint", a.checkpoint}, {"data", a.data}};
  m["outputs"] = {{"report", (out / "eval_report.json").string()}};
  m.write(out);
}

// -- ablate -----------------------------------------------------------------

struct AblateArgs {
  TrainArgs train;
  std::string variants = "none,relcc,depthcc";
  std::string seeds = "1,2,3";
  int num = 250;
  double train_fraction = 0.8;
  std::string preset = "depth-separated";
};

void cmd_ablate(const CLI::App* app, const AblateArgs& a, const std::vector<std::string>& argv) {
  Manifest m("ablate", argv);
  const std::vector<std::string> variants = split_list(a.variants);
  if (variants.empty()) throw UsageError("--variants: empty list");
  for (const auto& v : variants) {
    try {
      variant_set(v);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--variants: ") + e.what());
    }
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(a.seeds)) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw UsageError("--seeds: '" + s + "' is not a non-negative integer");
    }
  }
  if (seeds.empty()) throw UsageError("--seeds: at least one seed is required");
  const TrainConfig base = resolve_train(app, a.train);
  const std::uint64_t data_seed = a.train.common.seed;

  std::vector<Scene> all;
  ordered_json data_info;
  if (!a.train.data.empty()) {
    all = read_data(a.train.data);
    data_info = {{"data", a.train.data}};
  } else {
    const GenConfig gc = preset(a.preset, base.model.height, base.model.width);
    all = generate_many(gc, data_seed, a.num, a.train.common.jobs);
    data_info = {{"preset", a.preset}, {"num", a.num}, {"generator", to_json(gc)}};
  }
  const DatasetSplit split = split_dataset(all.size(), a.train_fraction, data_seed);
  std::vector<Scene> train_set, test_set;
  for (auto i : split.train) train_set.push_back(all[i]);
  for (auto i : split.test) test_set.push_back(all[i]);
  if (train_set.empty() || test_set.empty()) throw UsageError("--train-fraction: split leaves an empty train or test set");

  const AblationTable table = run_ablation(train_set, test_set, base, variants, seeds, a.train.common.jobs, [](const AblationCell& c) {
    log(LogLevel::info, "variant " + c.variant + " seed " + std::to_string(c.seed) + " instance IoU " + std::to_string(c.instance_iou));
  });
  const fs::path out(a.train.common.out);
  fs::create_directories(out);
  const std::string text = format_table(table);
  write_file_atomic(out / "ablation.json", to_json(table).dump(2) + "\n");
  write_file_atomic(out / "ablation.txt", text);
  std::cout << text;
  m["seed"] = data_seed;
  m["config"] = to_json(base);
  m["config"]["variants"] = variants;
  m["config"]["seeds"] = seeds;
  m["config"]["train_fraction"] = a.train_fraction;
  m["inputs"] = data_info;
  m["inputs"]["num_train"] = train_set.size();
  m["inputs"]["num_test"] = test_set.size();
  m["outputs"] = {{"table", (out / "ablation.json").string()}, {"text", (out / "ablation.txt").string()}};
  m.write(out);
}

// -- grasp-eval -------------------------------------------------------------

struct GraspEvalArgs {
  Common common;
  std::string pred;
  std::string gt;
};

// A .jsonl file is one scene; a directory holds one scene per *.jsonl file
// or per subdirectory with a grasps.jsonl, in lexicographic order.
std::vector<fs::path> grasp_files(const std::string& flag, const std::string& path) {
  if (fs::is_regular_file(path)) return {path};
  require_dir(flag, path);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") out.push_back(e.path());
    if (e.is_directory() && fs::is_regular_file(e.path() / "grasps.jsonl")) out.push_back(e.path() / "grasps.jsonl");
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw UsageError(flag + ": no grasps.jsonl files under " + path);
  return out;
}

void cmd_grasp_eval(const CLI::App*, const GraspEvalArgs& a, const std::vector<std::string>& argv) {
  Manifest m("grasp-eval", argv);
  const auto pf = grasp_files("--pred", a.pred);
  const auto gf = grasp_files("--gt", a.gt);
  if (pf.size() != gf.size()) {
    throw UsageError("--pred/--gt: " + std::to_string(pf.size()) + " prediction scenes but " + std::to_string(gf.size()) +
                     " ground-truth scenes");
  }
  std::vector<std::vector<AnnotatedGrasp>> preds, gts;
  for (const auto& p : pf) preds.push_back(read_grasps(p));
  for (const auto& g : gf) gts.push_back(read_grasps(g));
  const GraspAccuracy acc = grasp_accuracy(preds, gts);
  ordered_json j;
  j["grasp_accuracy_percent"] = acc.percent;
  j["num_scenes"] = acc.num_scenes;
  j["excluded_scenes"] = acc.excluded_scenes;
  j["matched"] = acc.matched;
  j["total"] = acc.total;
  const fs::path out(a.common.out);
  fs::create_directories(out);
  write_file_atomic(out / "grasp_eval.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
  m["seed"] = a.common.seed;
  m["config"] = {{"max_angle_deg", GraspCriteria{}.max_angle_deg}, {"min_iou", GraspCriteria{}.min_iou}};
  m["inputs"] = {{"pred", a.pred}, {"gt", a.gt}};
  m["outputs"] = {{"report", (out / "grasp_eval.json").string()}};
  m.write(out);
}

// -- pick -------------------------------------------------------------------

struct PickArgs {
  Common common;
  std::string scene;
  std::string checkpoint;
  bool oracle = false;
  double margin = 2;
  double min_confidence = 0.5;
};

void cmd_pick(const CLI::App*, const PickArgs& a, const std::vector<std::string>& argv) {
  Manifest m("pick", argv);
  require_dir("--scene", a.scene);
  if (a.oracle == !a.checkpoint.empty()) throw UsageError("--checkpoint/--oracle: give exactly one of them");
  PickConfig pc;
  pc.margin = a.margin;
  pc.min_confidence = a.min_confidence;
  const Scene scene = read_scene(a.scene);
  PickOutcome o;
  if (a.oracle) {
    o = simulate_picking(scene, OracleModel{}, pc);
  } else {
    require_file("--checkpoint", a.checkpoint);
    Model model = load_checkpoint(a.checkpoint);
    if (scene.height() != model.config.height || scene.width() != model.config.width) {
      throw UsageError("--scene: resolution does not match the checkpoint");
    }
    o = simulate_picking(scene, NetworkModel(std::move(model)), pc);
  }
  const fs::path out(a.common.out);
  fs::create_directories(out);
  std::string trace;
  for (const auto& t : o.trace) trace += to_json(t).dump() + "\n";
  write_file_atomic(out / "pick_outcome.json", to_json(o).dump(2) + "\n");
  write_file_atomic(out / "pick_trace.jsonl", trace);
  std::cout << to_json(o).dump() << "\n";
  m["seed"] = a.common.seed;
  m["config"] = {{"margin", pc.margin}, {"min_confidence", pc.min_confidence}, {"oracle", a.oracle},
                 {"plate_thickness", pc.plate_thickness}, {"continuity_ratio", pc.continuity_ratio},
                 {"connectivity", pc.connectivity}, {"iteration_factor", pc.iteration_factor}};
  m["inputs"] = {{"scene", a.scene}, {"checkpoint", a.checkpoint}};
  m["outputs"] = {{"outcome", (out / "pick_outcome.json").string()}, {"trace", (out / "pick_trace.jsonl").string()}};
  m.write(out);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"gskit: depth-aware CoordConv segmentation and grasp toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate synthetic RGB-D scenes");
  add_common(g, gen.common, true);
  g->add_option("--num", gen.num, "Number of scenes")->check(CLI::NonNegativeNumber);
  g->add_option("--preset", gen.preset, "depth-separated, well-separated or default");
  g->add_option("--height", gen.height, "Image height")->check(CLI::PositiveNumber);
  g->add_option("--width", gen.width, "Image width")->check(CLI::PositiveNumber);
  g->add_option("--depth-noise", gen.depth_noise, "Gaussian depth noise sigma")->check(CLI::NonNegativeNumber);

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Export CoordConv maps for one point proposal");
  add_common(e, enc.common, false);
  e->add_option("--scene", enc.scene, "Scene container directory")->required();
  e->add_option("--point", enc.point, "Proposal as x,y in pixels")->required();
  e->add_option("--variants", enc.variants, "Comma-separated maps: rel, depth_dist, dist25, depth_sim, hha");
  e->add_option("--R", enc.R, "Coordinate normalizer in pixels")->check(CLI::PositiveNumber);
  e->add_option("--alpha", enc.alpha, "Depth scaling")->check(CLI::PositiveNumber);
  e->add_option("--beta", enc.beta, "Depth-similarity scaling")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a scene directory");
  add_common(t, tr.common, true);
  t->add_option("--data", tr.data, "Dataset directory")->required();
  add_train_flags(t, tr);

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(v, ev.common, true);
  v->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  v->add_option("--data", ev.data, "Dataset directory")->required();
  v->add_option("--proposals", ev.source, "ground-truth or grasp-centers");
  v->add_option("--threshold", ev.threshold, "Mask threshold")->check(CLI::Range(0.0, 1.0));

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Train and evaluate CoordConv variants over seeds");
  add_common(b, ab.train.common, true);
  b->add_option("--data", ab.train.data, "Dataset directory (default: generate the preset)");
  add_train_flags(b, ab.train);
  b->add_option("--variants", ab.variants, "Comma-separated variants");
  b->add_option("--seeds", ab.seeds, "Comma-separated training seeds");
  b->add_option("--num", ab.num, "Scenes to generate without --data")->check(CLI::PositiveNumber);
  b->add_option("--preset", ab.preset, "Generator preset without --data");
  b->add_option("--train-fraction", ab.train_fraction, "Image-wise train share")->check(CLI::Range(0.0, 1.0));

  GraspEvalArgs ge;
  auto* q = app.add_subcommand("grasp-eval", "Score predicted grasps against ground truth");
  add_common(q, ge.common, false);
  q->add_option("--pred", ge.pred, "Predictions: grasps.jsonl or a directory of them")->required();
  q->add_option("--gt", ge.gt, "Ground truth: grasps.jsonl or a directory of them")->required();

  PickArgs pk;
  auto* p = app.add_subcommand("pick", "Simulate sequential picking on one scene");
  add_common(p, pk.common, false);
  p->add_option("--scene", pk.scene, "Scene container directory")->required();
  p->add_option("--checkpoint", pk.checkpoint, "Checkpoint file");
  p->add_flag("--oracle", pk.oracle, "Use ground truth instead of a network");
  p->add_option("--margin", pk.margin, "Gripper clearance per side in pixels")->check(CLI::NonNegativeNumber);
  p->add_option("--min-confidence", pk.min_confidence, "Stop when no candidate reaches this score")->check(CLI::Range(0.0, 1.0));

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    if (code == 0) return 0;
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*g) cmd_gen(g, gen, args);
    if (*e) cmd_encode(e, enc, args);
    if (*t) cmd_train(t, tr, args);
    if (*v) cmd_eval(v, ev, args);
    if (*b) cmd_ablate(b, ab, args);
    if (*q) cmd_grasp_eval(q, ge, args);
    if (*p) cmd_pick(p, pk, args);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}

int run(int argc, const char* const* argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace gskit::cli
