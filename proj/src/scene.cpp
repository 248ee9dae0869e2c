#include "gskit/scene.hpp"

#include "gskit/pnm.hpp"
#include "gskit/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gskit {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

bool SceneObject::covers(double x, double y) const {
  const Point2 dir = unit_direction(phi);
  const double dx = x - cx;
  const double dy = y - cy;
  const double u = dx * dir.x() + dy * dir.y();
  const double v = -dx * dir.y() + dy * dir.x();
  switch (kind) {
    case ShapeKind::rectangle: return std::abs(u) <= a && std::abs(v) <= b;
    case ShapeKind::ellipse: return (u / a) * (u / a) + (v / b) * (v / b) <= 1.0;
    case ShapeKind::capsule: {
      const double du = std::max(std::abs(u) - (a - b), 0.0);
      return du * du + v * v <= b * b;
    }
  }
  return false;
}

MaskImage rasterize(const SceneObject& object, Index height, Index width) {
  MaskImage mask = MaskImage::Zero(height, width);
  const double reach = object.a + 1;
  const Index j0 = std::max<Index>(0, static_cast<Index>(std::floor(object.cy - reach)));
  const Index j1 = std::min<Index>(height - 1, static_cast<Index>(std::ceil(object.cy + reach)));
  const Index k0 = std::max<Index>(0, static_cast<Index>(std::floor(object.cx - reach)));
  const Index k1 = std::min<Index>(width - 1, static_cast<Index>(std::ceil(object.cx + reach)));
  for (Index j = j0; j <= j1; ++j) {
    for (Index k = k0; k <= k1; ++k) {
      if (object.covers(static_cast<double>(k), static_cast<double>(j))) mask(j, k) = 1;
    }
  }
  return mask;
}

void GenConfig::validate() const {
  if (height < 32 || width < 32) throw std::invalid_argument("scene extents must be at least 32 x 32");
  if (min_objects < 1 || max_objects < min_objects) throw std::invalid_argument("object count range must satisfy 1 <= min <= max");
  if (max_objects > 255) throw std::invalid_argument("at most 255 objects per scene");
  if (!(min_major > 0) || max_major < min_major) throw std::invalid_argument("invalid major extent range");
  if (!(min_aspect > 0) || max_aspect > 1 || max_aspect < min_aspect) throw std::invalid_argument("invalid aspect range");
  if (depth_noise < 0 || rgb_noise < 0) throw std::invalid_argument("noise sigma must be non-negative");
  for (double d : depth_planes) {
    if (!(d > 0 && d < 1)) throw std::invalid_argument("depth planes must lie in (0, 1)");
  }
  if (!depth_planes.empty() && min_distinct_planes > static_cast<int>(depth_planes.size())) {
    throw std::invalid_argument("more distinct planes requested than configured");
  }
  if (!(background_depth >= 0 && background_depth <= 1)) throw std::invalid_argument("background depth must lie in [0, 1]");
}

GenConfig depth_separated_preset(Index height, Index width) {
  GenConfig cfg;
  cfg.height = height;
  cfg.width = width;
  cfg.min_objects = 3;
  cfg.max_objects = 5;
  cfg.depth_planes = {0.2, 0.35, 0.5, 0.65, 0.8};
  cfg.min_distinct_planes = 3;
  cfg.min_pair_overlap = 0.4;
  cfg.max_pair_overlap = 0.75;
  cfg.base_color = {0.55, 0.42, 0.28};
  cfg.color_spread = 0.12;
  cfg.rgb_noise = 0.02;
  cfg.depth_noise = 0.005;
  cfg.min_visible_pixels = 20;
  return cfg;
}

GenConfig well_separated_preset(Index height, Index width) {
  GenConfig cfg;
  cfg.height = height;
  cfg.width = width;
  cfg.min_objects = 2;
  cfg.max_objects = 4;
  cfg.min_major = 6;
  cfg.max_major = 11;
  cfg.min_aspect = 0.4;
  cfg.max_aspect = 0.7;
  cfg.min_gap = 6;
  cfg.min_visible_pixels = 20;
  return cfg;
}

PixelIndex nearest_pixel(double x, double y) {
  return {static_cast<Index>(std::floor(y + 0.5)), static_cast<Index>(std::floor(x + 0.5))};
}

GraspCandidate ground_truth_grasp(const SceneObject& object, const MaskImage& visible, double plate_ratio) {
  double sx = 0, sy = 0;
  Index n = 0;
  for (Index j = 0; j < visible.rows(); ++j) {
    for (Index k = 0; k < visible.cols(); ++k) {
      if (visible(j, k)) {
        sx += static_cast<double>(k);
        sy += static_cast<double>(j);
        ++n;
      }
    }
  }
  if (n == 0) throw std::invalid_argument("ground-truth grasp needs a non-empty visible mask");
  double x = sx / static_cast<double>(n);
  double y = sy / static_cast<double>(n);
  const PixelIndex p = nearest_pixel(x, y);
  if (!contains(visible, p) || !visible(p.row, p.col)) {
    double best = std::numeric_limits<double>::infinity();
    double bx = x, by = y;
    for (Index j = 0; j < visible.rows(); ++j) {
      for (Index k = 0; k < visible.cols(); ++k) {
        if (!visible(j, k)) continue;
        const double d = (static_cast<double>(k) - x) * (static_cast<double>(k) - x) +
                         (static_cast<double>(j) - y) * (static_cast<double>(j) - y);
        if (d < best) {
          best = d;
          bx = static_cast<double>(k);
          by = static_cast<double>(j);
        }
      }
    }
    x = bx;
    y = by;
  }
  return make_grasp(x, y, std::max(1.0, plate_ratio * object.b), 2 * object.b, object.phi);
}

Scene render_scene(std::vector<SceneObject> objects, const GenConfig& cfg, std::uint64_t seed) {
  const Index H = cfg.height;
  const Index W = cfg.width;
  std::vector<MaskImage> footprints;
  for (const auto& o : objects) footprints.push_back(rasterize(o, H, W));

  ImageT<int> owner;
  for (;;) {
    owner = ImageT<int>::Constant(H, W, -1);
    Image nearest = Image::Constant(H, W, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < objects.size(); ++i) {
      for (Index j = 0; j < H; ++j) {
        for (Index k = 0; k < W; ++k) {
          if (footprints[i](j, k) && objects[i].depth <= nearest(j, k)) {
            nearest(j, k) = objects[i].depth;
            owner(j, k) = static_cast<int>(i);
          }
        }
      }
    }
    std::vector<Index> counts(objects.size(), 0);
    for (Index j = 0; j < H; ++j) {
      for (Index k = 0; k < W; ++k) {
        if (owner(j, k) >= 0) ++counts[static_cast<std::size_t>(owner(j, k))];
      }
    }
    std::vector<SceneObject> kept;
    std::vector<MaskImage> kept_fp;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      if (counts[i] >= std::max(1, cfg.min_visible_pixels)) {
        kept.push_back(objects[i]);
        kept_fp.push_back(std::move(footprints[i]));
      }
    }
    const bool stable = kept.size() == objects.size();
    objects = std::move(kept);
    footprints = std::move(kept_fp);
    if (stable) break;
  }

  Scene scene;
  scene.seed = seed;
  scene.background = {cfg.background_depth, cfg.background_color};
  scene.objects = objects;
  scene.instances = owner.array() + 1;
  scene.depth.resize(H, W);
  scene.rgb = Tensor({3, H, W});

  Rng rng = make_rng(seed, 0x5eed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k) {
      const int o = owner(j, k);
      const double d = o >= 0 ? objects[static_cast<std::size_t>(o)].depth : cfg.background_depth;
      const Eigen::Vector3d c = o >= 0 ? objects[static_cast<std::size_t>(o)].color : cfg.background_color;
      const double nd = cfg.depth_noise > 0 ? cfg.depth_noise * gauss(rng) : 0.0;
      scene.depth(j, k) = std::clamp(d + nd, 0.0, 1.0);
      for (Index ch = 0; ch < 3; ++ch) {
        const double nc = cfg.rgb_noise > 0 ? cfg.rgb_noise * gauss(rng) : 0.0;
        scene.rgb(ch, j, k) = std::clamp(c[ch] + nc, 0.0, 1.0);
      }
    }
  }

  for (std::size_t i = 0; i < objects.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    scene.gt_grasps.push_back({ground_truth_grasp(objects[i], scene.instance_mask(id), cfg.plate_ratio), id});
  }
  return scene;
}

namespace {

double overlap_fraction(const MaskImage& a, const MaskImage& b) {
  const double na = static_cast<double>(a.cast<int>().sum());
  const double nb = static_cast<double>(b.cast<int>().sum());
  if (na == 0 || nb == 0) return 0;
  const double both = static_cast<double>((a.array() * b.array()).cast<int>().sum());
  return both / std::min(na, nb);
}

MaskImage dilate(const MaskImage& m, double radius) {
  if (radius <= 0) return m;
  MaskImage out = m;
  const Index r = static_cast<Index>(std::ceil(radius));
  for (Index j = 0; j < m.rows(); ++j) {
    for (Index k = 0; k < m.cols(); ++k) {
      if (!m(j, k)) continue;
      for (Index dj = -r; dj <= r; ++dj) {
        for (Index dk = -r; dk <= r; ++dk) {
          const Index jj = j + dj, kk = k + dk;
          if (jj < 0 || kk < 0 || jj >= m.rows() || kk >= m.cols()) continue;
          if (static_cast<double>(dj * dj + dk * dk) <= radius * radius) out(jj, kk) = 1;
        }
      }
    }
  }
  return out;
}

SceneObject random_object(const GenConfig& cfg, Rng& rng, double cx, double cy) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneObject o;
  o.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  o.cx = cx;
  o.cy = cy;
  o.a = cfg.min_major + (cfg.max_major - cfg.min_major) * unit(rng);
  o.b = std::min(o.a, std::max(cfg.min_minor, o.a * (cfg.min_aspect + (cfg.max_aspect - cfg.min_aspect) * unit(rng))));
  o.phi = 180.0 * unit(rng);
  for (int c = 0; c < 3; ++c) {
    o.color[c] = std::clamp(cfg.base_color[c] + cfg.color_spread * (unit(rng) - 0.5), 0.0, 1.0);
  }
  return o;
}

}  // namespace

Scene generate_scene(const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Index H = cfg.height;
  const Index W = cfg.width;
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng = make_rng(seed, attempt);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = std::uniform_int_distribution<int>(cfg.min_objects, cfg.max_objects)(rng);

    std::vector<double> depths(static_cast<std::size_t>(n));
    if (cfg.depth_planes.empty()) {
      for (auto& d : depths) d = 0.1 + 0.75 * unit(rng);
    } else {
      std::vector<std::size_t> order(cfg.depth_planes.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (int i = 0; i < n; ++i) {
        const std::size_t plane = i < cfg.min_distinct_planes
                                      ? order[static_cast<std::size_t>(i)]
                                      : std::uniform_int_distribution<std::size_t>(0, cfg.depth_planes.size() - 1)(rng);
        depths[static_cast<std::size_t>(i)] = cfg.depth_planes[plane];
      }
    }

    std::vector<SceneObject> objects;
    std::vector<MaskImage> footprints;
    MaskImage blocked = MaskImage::Zero(H, W);
    bool failed = false;
    for (int i = 0; i < n && !failed; ++i) {
      bool placed = false;
      for (int tries = 0; tries < 60 && !placed; ++tries) {
        double cx = (static_cast<double>(W) - 1) * unit(rng);
        double cy = (static_cast<double>(H) - 1) * unit(rng);
        if (i > 0 && cfg.min_pair_overlap > 0) {
          const auto& anchor = objects[std::uniform_int_distribution<std::size_t>(0, objects.size() - 1)(rng)];
          const double reach = anchor.a;
          cx = std::clamp(anchor.cx + reach * (2 * unit(rng) - 1), 0.0, static_cast<double>(W) - 1);
          cy = std::clamp(anchor.cy + reach * (2 * unit(rng) - 1), 0.0, static_cast<double>(H) - 1);
        }
        SceneObject o = random_object(cfg, rng, cx, cy);
        o.depth = depths[static_cast<std::size_t>(i)];
        MaskImage fp = rasterize(o, H, W);
        if (fp.cast<int>().sum() == 0) continue;
        if (cfg.min_gap >= 0 && (fp.array() * blocked.array()).cast<int>().sum() > 0) continue;
        if (!footprints.empty() && (cfg.min_pair_overlap > 0 || cfg.max_pair_overlap < 1)) {
          bool enough = cfg.min_pair_overlap <= 0;
          bool too_much = false;
          for (const auto& other : footprints) {
            const double f = overlap_fraction(fp, other);
            if (f >= cfg.min_pair_overlap) enough = true;
            if (f > cfg.max_pair_overlap) too_much = true;
          }
          if (!enough || too_much) continue;
        }
        if (cfg.min_gap >= 0) blocked = (blocked.array() + dilate(fp, cfg.min_gap).array()).min(1).matrix();
        objects.push_back(o);
        footprints.push_back(std::move(fp));
        placed = true;
      }
      failed = !placed;
    }
    if (failed || static_cast<int>(objects.size()) < cfg.min_objects) continue;

    Scene scene = render_scene(std::move(objects), cfg, mix_seed(seed, attempt));
    if (scene.num_instances() == 0) continue;
    scene.seed = seed;
    return scene;
  }
  throw std::runtime_error("no visible object after 100 placement attempts (seed " + std::to_string(seed) + ")");
}

Scene transform_scene(const Scene& scene, const SceneTransform& t) {
  const Index H = scene.height();
  const Index W = scene.width();
  const Point2 ctr((static_cast<double>(W) - 1) / 2, (static_cast<double>(H) - 1) / 2);
  const Point2 dir = unit_direction(t.angle_deg);
  const double c = dir.x(), s = dir.y();
  const Point2 shift(t.tx, t.ty);

  Scene out;
  out.seed = scene.seed;
  out.background = scene.background;
  out.rgb = Tensor({3, H, W});
  out.depth.resize(H, W);
  LabelImage raw(H, W);
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k) {
      const Point2 d = Point2(static_cast<double>(k), static_cast<double>(j)) - ctr - shift;
      const Point2 src(c * d.x() + s * d.y() + ctr.x(), -s * d.x() + c * d.y() + ctr.y());
      const PixelIndex p = nearest_pixel(src.x(), src.y());
      if (contains(scene.depth, p)) {
        out.depth(j, k) = scene.depth(p.row, p.col);
        raw(j, k) = scene.instances(p.row, p.col);
        for (Index ch = 0; ch < 3; ++ch) out.rgb(ch, j, k) = scene.rgb(ch, p.row, p.col);
      } else {
        out.depth(j, k) = scene.background.depth;
        raw(j, k) = 0;
        for (Index ch = 0; ch < 3; ++ch) out.rgb(ch, j, k) = scene.background.color[ch];
      }
    }
  }

  // Compact ids in increasing order of the surviving originals.
  const int k_old = scene.num_instances();
  std::vector<int> remap(static_cast<std::size_t>(k_old) + 1, 0);
  std::vector<bool> present(static_cast<std::size_t>(k_old) + 1, false);
  for (Index i = 0; i < raw.size(); ++i) present[static_cast<std::size_t>(raw.data()[i])] = true;
  int next = 0;
  for (int id = 1; id <= k_old; ++id) {
    if (!present[static_cast<std::size_t>(id)]) continue;
    remap[static_cast<std::size_t>(id)] = ++next;
    if (static_cast<std::size_t>(id) <= scene.objects.size()) {
      SceneObject o = scene.objects[static_cast<std::size_t>(id) - 1];
      const Point2 q = Point2(o.cx, o.cy) - ctr;
      o.cx = c * q.x() - s * q.y() + ctr.x() + t.tx;
      o.cy = s * q.x() + c * q.y() + ctr.y() + t.ty;
      o.phi = wrap_half_turn(o.phi + t.angle_deg);
      out.objects.push_back(o);
    }
  }
  if (!out.objects.empty() && static_cast<int>(out.objects.size()) != next) out.objects.clear();
  out.instances = raw.unaryExpr([&](int id) { return remap[static_cast<std::size_t>(id)]; });

  for (const auto& ag : scene.gt_grasps) {
    const int id = ag.instance_id >= 0 && ag.instance_id <= k_old ? remap[static_cast<std::size_t>(ag.instance_id)] : 0;
    if (id == 0) continue;
    const Point2 q = Point2(ag.grasp.x, ag.grasp.y) - ctr;
    double x = c * q.x() - s * q.y() + ctr.x() + t.tx;
    double y = s * q.x() + c * q.y() + ctr.y() + t.ty;
    if (x < -0.5 || y < -0.5 || x >= static_cast<double>(W) - 0.5 || y >= static_cast<double>(H) - 0.5) continue;
    const PixelIndex p = nearest_pixel(x, y);
    if (out.instances(p.row, p.col) != id) {
      double best = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < H; ++j) {
        for (Index k = 0; k < W; ++k) {
          if (out.instances(j, k) != id) continue;
          const double d2 = (static_cast<double>(k) - x) * (static_cast<double>(k) - x) +
                            (static_cast<double>(j) - y) * (static_cast<double>(j) - y);
          if (d2 < best) {
            best = d2;
            x = static_cast<double>(k);
            y = static_cast<double>(j);
          }
        }
      }
    }
    GraspCandidate g = ag.grasp;
    g.x = x;
    g.y = y;
    g.theta = wrap_half_turn(g.theta + t.angle_deg);
    out.gt_grasps.push_back({g, id});
  }
  return out;
}

Scene augment(const Scene& scene, std::uint64_t seed, const AugmentConfig& cfg) {
  Rng rng = make_rng(seed, 0xA06);
  SceneTransform t;
  t.angle_deg = std::uniform_real_distribution<double>(0.0, cfg.max_rotation_deg)(rng);
  const auto max_t = static_cast<long>(std::floor(cfg.max_translation));
  std::uniform_int_distribution<long> shift(-max_t, max_t);
  t.tx = static_cast<double>(shift(rng));
  t.ty = static_cast<double>(shift(rng));
  return transform_scene(scene, t);
}

std::uint16_t quantize_depth(double v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

namespace {

std::uint8_t quantize_8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

Scene quantized(const Scene& scene) {
  Scene q = scene;
  q.rgb.array() = scene.rgb.array().unaryExpr([](double v) { return quantize_8(v) / 255.0; });
  q.depth = scene.depth.unaryExpr([](double v) { return quantize_depth(v) / 65535.0; });
  return q;
}

std::vector<AnnotatedGrasp> read_grasps(const fs::path& path) {
  const std::string name = path.filename().string();
  if (!fs::exists(path)) throw std::runtime_error("missing file " + name);
  std::istringstream in(read_file(path));
  std::vector<AnnotatedGrasp> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      AnnotatedGrasp g;
      g.grasp = make_grasp(j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
                           j.at("h").get<double>(), j.at("theta_deg").get<double>(), j.value("s", 1.0));
      g.instance_id = j.value("instance_id", 0);
      out.push_back(g);
    } catch (const std::exception& e) {
      throw std::runtime_error(name + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_grasps(const fs::path& path, const std::vector<AnnotatedGrasp>& grasps, bool with_scores) {
  std::string out;
  for (const auto& g : grasps) {
    ordered_json j;
    j["x"] = g.grasp.x;
    j["y"] = g.grasp.y;
    j["w"] = g.grasp.w;
    j["h"] = g.grasp.h;
    j["theta_deg"] = g.grasp.theta;
    j["instance_id"] = g.instance_id;
    if (with_scores) j["s"] = g.grasp.s;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

void write_scene(const Scene& scene, const fs::path& dir) {
  const Index H = scene.height();
  const Index W = scene.width();
  if (scene.num_instances() > 255) throw std::invalid_argument("instances.pgm stores at most 255 instances");
  fs::create_directories(dir);

  pnm::Raster rgb{W, H, 3, 255, {}};
  rgb.samples.reserve(static_cast<std::size_t>(3 * H * W));
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k) {
      for (Index ch = 0; ch < 3; ++ch) rgb.samples.push_back(quantize_8(scene.rgb(ch, j, k)));
    }
  }
  pnm::write(dir / "rgb.ppm", rgb);

  pnm::Raster depth{W, H, 1, 65535, {}};
  pnm::Raster inst{W, H, 1, 255, {}};
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k) {
      depth.samples.push_back(quantize_depth(scene.depth(j, k)));
      inst.samples.push_back(static_cast<std::uint16_t>(scene.instances(j, k)));
    }
  }
  pnm::write(dir / "depth.pgm", depth);
  pnm::write(dir / "instances.pgm", inst);
  write_grasps(dir / "grasps.jsonl", scene.gt_grasps);

  ordered_json manifest;
  manifest["height"] = H;
  manifest["width"] = W;
  manifest["seed"] = scene.seed;
  manifest["num_instances"] = scene.num_instances();
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Scene read_scene(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw std::runtime_error("missing file manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("manifest.json: ") + e.what());
  }
  Index H = 0, W = 0;
  int K = 0;
  Scene scene;
  try {
    H = manifest.at("height").get<Index>();
    W = manifest.at("width").get<Index>();
    K = manifest.at("num_instances").get<int>();
    scene.seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("manifest.json: ") + e.what());
  }

  auto check = [&](const pnm::Raster& r, const char* name, int channels) {
    if (r.width != W || r.height != H || r.channels != channels) {
      throw std::runtime_error(std::string(name) + ": extents or channels disagree with manifest.json");
    }
  };
  const auto rgb = pnm::read(dir / "rgb.ppm");
  check(rgb, "rgb.ppm", 3);
  const auto depth = pnm::read(dir / "depth.pgm");
  check(depth, "depth.pgm", 1);
  if (depth.maxval != 65535) throw std::runtime_error("depth.pgm: expected 16-bit samples");
  const auto inst = pnm::read(dir / "instances.pgm");
  check(inst, "instances.pgm", 1);

  scene.rgb = Tensor({3, H, W});
  scene.depth.resize(H, W);
  scene.instances.resize(H, W);
  std::size_t i = 0;
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k, ++i) {
      for (Index ch = 0; ch < 3; ++ch) scene.rgb(ch, j, k) = rgb.samples[3 * i + static_cast<std::size_t>(ch)] / 255.0;
      scene.depth(j, k) = depth.samples[i] / 65535.0;
      scene.instances(j, k) = inst.samples[i];
    }
  }
  if (scene.num_instances() != K) throw std::runtime_error("instances.pgm: instance count disagrees with manifest.json");
  scene.gt_grasps = read_grasps(dir / "grasps.jsonl");

  std::vector<double> bg;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  for (Index j = 0; j < H; ++j) {
    for (Index k = 0; k < W; ++k) {
      if (scene.instances(j, k) != 0) continue;
      bg.push_back(scene.depth(j, k));
      for (Index ch = 0; ch < 3; ++ch) color[ch] += scene.rgb(ch, j, k);
    }
  }
  if (!bg.empty()) {
    std::nth_element(bg.begin(), bg.begin() + static_cast<long>(bg.size() / 2), bg.end());
    scene.background.depth = bg[bg.size() / 2];
    scene.background.color = color / static_cast<double>(bg.size());
  } else {
    scene.background.depth = scene.depth.maxCoeff();
  }
  return scene;
}

std::vector<fs::path> list_scene_dirs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Scene> read_dataset(const fs::path& dir) {
  std::vector<Scene> scenes;
  for (const auto& d : list_scene_dirs(dir)) scenes.push_back(read_scene(d));
  return scenes;
}

}  // namespace gskit
