#include "gskit/model.hpp"

#include "gskit/losses.hpp"
#include "gskit/util.hpp"

#include <bit>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace gskit {

using nlohmann::json;
using nlohmann::ordered_json;

CoordConvConfig ModelConfig::feature_coordconv() const {
  const int s = feature_stride();
  CoordConvConfig cc;
  cc.R = effective_R() / s;
  cc.alpha = alpha;
  cc.beta = beta;
  cc.variants = variants;
  cc.intrinsics = CameraIntrinsics::centered(height, width).scaled(1.0 / s);
  return cc;
}

void ModelConfig::validate() const {
  if (height < 8 || width < 8) throw std::invalid_argument("model extents must be at least 8 x 8");
  if (encoder_widths.empty()) throw std::invalid_argument("encoder_widths must not be empty");
  for (int w : encoder_widths) {
    if (w < 1) throw std::invalid_argument("encoder widths must be positive");
  }
  const int s = feature_stride();
  if (height % s != 0 || width % s != 0) throw std::invalid_argument("feature stride must divide the image extents");
  if (grasp_stride < s || grasp_stride % s != 0) throw std::invalid_argument("grasp_stride must be a multiple of the feature stride");
  if (height % grasp_stride != 0 || width % grasp_stride != 0) throw std::invalid_argument("grasp_stride must divide the image extents");
  if (semantic_classes < 2) throw std::invalid_argument("semantic_classes must be at least 2");
  if (coordconv_slots < variants.channel_count()) throw std::invalid_argument("coordconv_slots smaller than the variant channel count");
  if (inst_channels < 1 || style_hidden < 0) throw std::invalid_argument("instance head widths must be positive");
  if (feature_width() / 2 < 1) throw std::invalid_argument("feature width must be at least 2");
  if (!(anchor_scale > 0) || !(alpha > 0) || !(beta > 0) || R < 0 || !(focal_gamma >= 0)) {
    throw std::invalid_argument("invalid model scale parameters");
  }
  if (iou_neg > iou_pos) throw std::invalid_argument("iou_neg must not exceed iou_pos");
  variants.validate();
}

ordered_json to_json(const ModelConfig& c) {
  ordered_json j;
  j["height"] = c.height;
  j["width"] = c.width;
  j["encoder_widths"] = c.encoder_widths;
  j["depth_input"] = c.depth_input;
  j["semantic_classes"] = c.semantic_classes;
  j["coordconv_slots"] = c.coordconv_slots;
  j["inst_channels"] = c.inst_channels;
  j["style_hidden"] = c.style_hidden;
  j["grasp_stride"] = c.grasp_stride;
  j["anchor_scale"] = c.anchor_scale;
  j["norm"] = c.norm == ad::NormKind::instance ? "instance" : "batch";
  j["variants"] = c.variants.names();
  j["R"] = c.R;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["focal_gamma"] = c.focal_gamma;
  j["iou_pos"] = c.iou_pos;
  j["iou_neg"] = c.iou_neg;
  return j;
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("height", c.height);
  get("width", c.width);
  get("encoder_widths", c.encoder_widths);
  get("depth_input", c.depth_input);
  get("semantic_classes", c.semantic_classes);
  get("coordconv_slots", c.coordconv_slots);
  get("inst_channels", c.inst_channels);
  get("style_hidden", c.style_hidden);
  get("grasp_stride", c.grasp_stride);
  get("anchor_scale", c.anchor_scale);
  if (j.contains("norm")) {
    const auto n = j.at("norm").get<std::string>();
    if (n == "instance") {
      c.norm = ad::NormKind::instance;
    } else if (n == "batch") {
      c.norm = ad::NormKind::batch;
    } else {
      throw std::invalid_argument("unknown norm kind '" + n + "'");
    }
  }
  if (j.contains("variants")) c.variants = CoordConvVariants::parse(j.at("variants").get<std::vector<std::string>>());
  get("R", c.R);
  get("alpha", c.alpha);
  get("beta", c.beta);
  get("focal_gamma", c.focal_gamma);
  get("iou_pos", c.iou_pos);
  get("iou_neg", c.iou_neg);
  c.validate();
  return c;
}

void ModelParams::add(std::string name, Tensor value) {
  for (const auto& n : names) {
    if (n == name) throw std::invalid_argument("duplicate parameter " + name);
  }
  names.push_back(std::move(name));
  values.push_back(std::move(value));
}

Tensor& ModelParams::at(const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw std::out_of_range("no parameter named " + name);
}

const Tensor& ModelParams::at(const std::string& name) const { return const_cast<ModelParams*>(this)->at(name); }

Index ModelParams::count() const {
  Index n = 0;
  for (const auto& v : values) n += v.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& v : values) {
    if (!v.array().isFinite().all()) return false;
  }
  return true;
}

namespace {

int style_hidden_width(const ModelConfig& c) { return c.style_hidden > 0 ? c.style_hidden : c.feature_width(); }
int reduced_width(const ModelConfig& c) { return c.feature_width() / 2; }
int input_channels(const ModelConfig& c) { return 3 + (c.depth_input ? 1 : 0); }

struct ParamBuilder {
  ModelParams& params;
  Rng& rng;

  void conv(const std::string& name, Index co, Index ci, Index k) {
    const double bound = std::sqrt(6.0 / static_cast<double>(ci * k * k));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w({co, ci, k, k});
    for (auto& v : w.values()) v = u(rng);
    params.add(name + ".weight", std::move(w));
    params.add(name + ".bias", Tensor({co}));
  }
  void norm(const std::string& name, Index c) {
    params.add(name + ".gamma", Tensor({c}, 1.0));
    params.add(name + ".beta", Tensor({c}));
  }
  void fc(const std::string& name, Index co, Index ci) {
    const double bound = std::sqrt(6.0 / static_cast<double>(ci));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w({co, ci});
    for (auto& v : w.values()) v = u(rng);
    params.add(name + ".weight", std::move(w));
    params.add(name + ".bias", Tensor({co}));
  }
};

}  // namespace

ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  ModelParams params;
  Rng rng = make_rng(seed, 0x1417);
  ParamBuilder b{params, rng};

  int prev = input_channels(c);
  for (std::size_t i = 0; i < c.encoder_widths.size(); ++i) {
    const std::string name = "enc" + std::to_string(i);
    b.conv(name, c.encoder_widths[i], prev, 3);
    b.norm(name + ".norm", c.encoder_widths[i]);
    prev = c.encoder_widths[i];
  }
  const int f = c.feature_width();
  b.conv("enc_out", f, f, 3);
  b.norm("enc_out.norm", f);

  b.conv("sem.logits", c.semantic_classes, f, 1);

  const int r = reduced_width(c);
  const int ic = c.inst_channels;
  b.conv("inst.reduce", r, f, 1);
  b.conv("inst.conv0", ic, r + c.coordconv_slots, 3);
  b.norm("inst.conv0.norm", ic);
  b.conv("inst.conv1", ic, ic, 3);
  b.norm("inst.conv1.norm", ic);
  b.conv("inst.conv2", ic, ic, 3);
  b.norm("inst.conv2.norm", ic);
  b.fc("inst.style0", style_hidden_width(c), f);
  params.add("inst.style1.weight", Tensor({2 * ic, style_hidden_width(c)}));
  Tensor style_bias({2 * ic});
  for (int i = 0; i < ic; ++i) style_bias.data()[i] = 1.0;
  params.add("inst.style1.bias", std::move(style_bias));
  b.conv("inst.conv3", ic, ic, 3);
  b.norm("inst.conv3.norm", ic);
  b.conv("inst.logits", 2, ic, 1);

  b.conv("grasp.conv", f, f, 3);
  b.norm("grasp.conv.norm", f);
  b.conv("grasp.out", 4 + kNumGraspClasses, f, 1);
  return params;
}

Model Model::create(const ModelConfig& config, std::uint64_t seed) { return {config, init_params(config, seed)}; }

Image pool_depth(const Image& depth, int factor) {
  if (factor < 1 || depth.rows() % factor != 0 || depth.cols() % factor != 0) {
    throw std::invalid_argument("pooling factor must divide the depth extents");
  }
  const Index h = depth.rows() / factor, w = depth.cols() / factor;
  Image out(h, w);
  for (Index j = 0; j < h; ++j) {
    for (Index k = 0; k < w; ++k) out(j, k) = depth.block(j * factor, k * factor, factor, factor).mean();
  }
  return out;
}

PointProposal to_feature(const ModelConfig& cfg, PointProposal p) {
  const double s = cfg.feature_stride();
  const double fx = (p.x + 0.5) / s - 0.5;
  const double fy = (p.y + 0.5) / s - 0.5;
  return {std::clamp(fx, 0.0, static_cast<double>(cfg.feature_cols() - 1)),
          std::clamp(fy, 0.0, static_cast<double>(cfg.feature_height() - 1))};
}

Tensor coordconv_inputs(const ModelConfig& cfg, std::span<const Scene* const> scenes, std::span<const QueryPoint> queries) {
  const Index hf = cfg.feature_height(), wf = cfg.feature_cols();
  const Index slots = cfg.coordconv_slots;
  Tensor out({static_cast<Index>(queries.size()), slots, hf, wf});
  if (cfg.variants.empty() || queries.empty()) return out;
  const CoordConvConfig cc = cfg.feature_coordconv();
  std::vector<Image> pooled(scenes.size());
  std::vector<HHAEncoding> hha(scenes.size());
  std::vector<bool> ready(scenes.size(), false);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto idx = static_cast<std::size_t>(queries[q].image);
    if (idx >= scenes.size()) throw std::out_of_range("query refers to a missing batch image");
    if (!ready[idx]) {
      pooled[idx] = pool_depth(scenes[idx]->depth, cfg.feature_stride());
      if (cfg.variants.hha) hha[idx] = hha_encode(pooled[idx], *cc.intrinsics, cc.gravity);
      ready[idx] = true;
    }
    const CoordConvMaps maps = encode(pooled[idx], to_feature(cfg, queries[q].p), cc, cfg.variants.hha ? &hha[idx] : nullptr);
    const auto ordered = maps.ordered();
    for (std::size_t c = 0; c < ordered.size(); ++c) out.plane(static_cast<Index>(q) * slots + static_cast<Index>(c)) = *ordered[c];
  }
  return out;
}

ForwardPass forward(ad::Graph& g, const Model& model, std::span<const Scene* const> scenes,
                    std::span<const QueryPoint> queries, bool with_grad) {
  const ModelConfig& c = model.config;
  if (scenes.empty()) throw std::invalid_argument("forward needs at least one image");
  const Index B = static_cast<Index>(scenes.size());
  const int cin = input_channels(c);
  Tensor input({B, cin, c.height, c.width});
  for (Index b = 0; b < B; ++b) {
    const Scene& s = *scenes[static_cast<std::size_t>(b)];
    if (s.height() != c.height || s.width() != c.width) {
      throw std::invalid_argument("scene is " + std::to_string(s.height()) + " x " + std::to_string(s.width()) +
                                  " but the model expects " + std::to_string(c.height) + " x " + std::to_string(c.width));
    }
    for (Index ch = 0; ch < 3; ++ch) input.plane(b * cin + ch) = s.rgb.plane(ch);
    if (c.depth_input) input.plane(b * cin + 3) = s.depth;
  }

  ForwardPass fp;
  for (const auto& v : model.params.values) fp.params.push_back(with_grad ? g.variable(v) : g.constant(v));
  auto P = [&](const std::string& name) {
    for (std::size_t i = 0; i < model.params.names.size(); ++i) {
      if (model.params.names[i] == name) return fp.params[i];
    }
    throw std::out_of_range("no parameter named " + name);
  };
  auto conv = [&](ad::Var x, const std::string& name, int stride, int pad) {
    return ad::conv2d(x, P(name + ".weight"), P(name + ".bias"), stride, pad);
  };
  auto conv_norm_relu = [&](ad::Var x, const std::string& name, int stride) {
    return ad::relu(ad::normalize(conv(x, name, stride, 1), P(name + ".norm.gamma"), P(name + ".norm.beta"), c.norm));
  };
  // Rectifying before normalizing keeps proposal-relative offsets, which a
  // per-sample standardization of the raw ramps would subtract.
  auto conv_relu_norm = [&](ad::Var x, const std::string& name) {
    return ad::normalize(ad::relu(conv(x, name, 1, 1)), P(name + ".norm.gamma"), P(name + ".norm.beta"), c.norm);
  };

  ad::Var x = g.constant(std::move(input));
  for (std::size_t i = 0; i < c.encoder_widths.size(); ++i) x = conv_norm_relu(x, "enc" + std::to_string(i), i == 0 ? 1 : 2);
  ad::Var feat = conv_norm_relu(x, "enc_out", 1);
  fp.features = feat;

  const int s = c.feature_stride();
  fp.sem_probs = ad::upsample_bilinear(ad::softmax(conv(feat, "sem.logits", 1, 0)), s);

  ad::Var gfeat = conv_norm_relu(feat, "grasp.conv", c.grasp_stride / s);
  if (gfeat.dim(2) != c.height / c.grasp_stride || gfeat.dim(3) != c.width / c.grasp_stride) {
    throw std::logic_error("grasp grid size mismatch");
  }
  fp.grasp_raw = conv(gfeat, "grasp.out", 1, 0);

  if (!queries.empty()) {
    std::vector<Index> index;
    std::vector<ad::FeaturePoint> points;
    for (const auto& q : queries) {
      if (q.image < 0 || q.image >= B) throw std::out_of_range("query refers to a missing batch image");
      check_proposal(q.p, c.height, c.width);
      index.push_back(q.image);
      const PointProposal f = to_feature(c, q.p);
      points.push_back({q.image, f.x, f.y});
    }
    ad::Var reduced = ad::gather(conv(feat, "inst.reduce", 1, 0), index);
    ad::Var cc = g.constant(coordconv_inputs(c, scenes, queries));
    ad::Var h = ad::concat_channels(reduced, cc);
    h = conv_relu_norm(h, "inst.conv0");
    h = conv_relu_norm(h, "inst.conv1");
    h = conv_relu_norm(h, "inst.conv2");
    ad::Var desc = ad::extract_at(feat, points);
    ad::Var style = ad::linear(ad::relu(ad::linear(desc, P("inst.style0.weight"), P("inst.style0.bias"))),
                               P("inst.style1.weight"), P("inst.style1.bias"));
    h = ad::adain(h, style);
    h = conv_relu_norm(h, "inst.conv3");
    fp.inst_logits = ad::upsample_bilinear(conv(h, "inst.logits", 1, 0), s);
  }
  return fp;
}

std::vector<AxisBox> grasp_anchors(const ModelConfig& cfg) {
  const int gs = cfg.grasp_stride;
  const Index gh = cfg.height / gs, gw = cfg.width / gs;
  const double side = cfg.anchor_scale * gs;
  std::vector<AxisBox> out;
  out.reserve(static_cast<std::size_t>(gh * gw));
  for (Index j = 0; j < gh; ++j) {
    for (Index k = 0; k < gw; ++k) {
      out.push_back({(static_cast<double>(k) + 0.5) * gs - 0.5, (static_cast<double>(j) + 0.5) * gs - 0.5, side, side});
    }
  }
  return out;
}

std::vector<GraspCandidate> decode_grasps(const ModelConfig& cfg, const Tensor& raw) {
  const Index gh = cfg.height / cfg.grasp_stride, gw = cfg.width / cfg.grasp_stride;
  if (raw.shape() != Shape{4 + kNumGraspClasses, gh, gw}) {
    throw std::invalid_argument("raw grasp output has shape " + shape_string(raw.shape()));
  }
  const auto anchors = grasp_anchors(cfg);
  const Index cells = gh * gw;
  std::vector<GraspCandidate> out;
  out.reserve(static_cast<std::size_t>(cells));
  for (Index i = 0; i < cells; ++i) {
    BoxOffsets t;
    for (Index k = 0; k < 4; ++k) t[k] = std::clamp(raw.data()[k * cells + i], -8.0, 8.0);
    Eigen::VectorXd z(kNumGraspClasses);
    for (Index k = 0; k < kNumGraspClasses; ++k) z[k] = raw.data()[(4 + k) * cells + i];
    z = (z.array() - z.maxCoeff()).exp().matrix();
    z /= z.sum();
    Index best = 1;
    z.segment(1, kOrientationBins).maxCoeff(&best);
    const AxisBox box = decode_offsets(anchors[static_cast<std::size_t>(i)], t);
    out.push_back({box.x, box.y, box.w, box.h, class_to_theta(static_cast<int>(best) + 1), std::clamp(1.0 - z[0], 0.0, 1.0)});
  }
  return out;
}

Prediction predict(const Model& model, const Scene& scene, std::span<const PointProposal> proposals) {
  ad::Graph g;
  const Scene* scenes[] = {&scene};
  std::vector<QueryPoint> queries;
  for (const auto& p : proposals) queries.push_back({0, p});
  const ForwardPass fp = forward(g, model, scenes, queries, false);
  Prediction pred;
  pred.foreground = fp.sem_probs.value().plane(1);
  if (!queries.empty()) {
    const Tensor probs = softmax_channels(fp.inst_logits.value());
    for (std::size_t q = 0; q < queries.size(); ++q) pred.instance_probs.push_back(probs.plane(static_cast<Index>(q) * 2 + 1));
  }
  const Tensor& raw = fp.grasp_raw.value();
  pred.grasps = decode_grasps(model.config, raw.reshaped({raw.dim(1), raw.dim(2), raw.dim(3)}));
  return pred;
}

std::vector<GraspCandidate> suppress(std::vector<GraspCandidate> grasps, double min_score, double max_iou) {
  std::erase_if(grasps, [&](const GraspCandidate& g) { return g.s < min_score; });
  std::stable_sort(grasps.begin(), grasps.end(), [](const auto& a, const auto& b) { return a.s > b.s; });
  std::vector<GraspCandidate> kept;
  for (const auto& g : grasps) {
    bool keep = true;
    for (const auto& k : kept) {
      if (oriented_iou(g, k) > max_iou) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(g);
  }
  return kept;
}

namespace {

constexpr std::string_view kMagic = "GSKIT1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_checkpoint(const Model& model) {
  ordered_json header;
  header["format"] = "gskit-checkpoint";
  header["version"] = 1;
  header["config"] = to_json(model.config);
  ordered_json entries = ordered_json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const Tensor& t = model.params.values[i];
    entries.push_back({{"name", model.params.names[i]}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size()) * 8;
  }
  header["params"] = std::move(entries);
  const std::string text = header.dump();

  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const Tensor& t : model.params.values) {
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Model decode_checkpoint(std::string_view bytes, const std::string& name) {
  auto fail = [&](const std::string& why) { return std::runtime_error(name + ": " + why); };
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) throw fail("not a GSKIT1 checkpoint");
  const std::uint64_t len = get_u64(bytes, kMagic.size());
  const std::size_t data_start = kMagic.size() + 8 + len;
  if (len > bytes.size() || data_start > bytes.size()) throw fail("truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(kMagic.size() + 8, len));
  } catch (const json::exception& e) {
    throw fail(std::string("corrupt header: ") + e.what());
  }
  Model m;
  m.config = model_config_from_json(header.at("config"));
  for (const auto& e : header.at("params")) {
    const Shape shape = e.at("shape").get<Shape>();
    const std::uint64_t off = e.at("offset").get<std::uint64_t>();
    Tensor t(shape);
    if (data_start + off + static_cast<std::uint64_t>(t.size()) * 8 > bytes.size()) throw fail("truncated parameter data");
    for (Index i = 0; i < t.size(); ++i) {
      t.data()[i] = std::bit_cast<double>(get_u64(bytes, data_start + off + static_cast<std::size_t>(i) * 8));
    }
    m.params.add(e.at("name").get<std::string>(), std::move(t));
  }
  const ModelParams expected = init_params(m.config, 0);
  if (expected.names != m.params.names) throw fail("parameter layout does not match its config");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected.values[i].shape() != m.params.values[i].shape()) throw fail("parameter " + expected.names[i] + " has the wrong shape");
  }
  return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) { write_file_atomic(path, encode_checkpoint(model)); }

Model load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing checkpoint " + path.string());
  return decode_checkpoint(read_file(path), path.filename().string());
}

}  // namespace gskit
