#include <cmath>
#include <set>

#include "json.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/pipeline.hpp"

namespace wafertopo::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Field-by-field reader over one JSON object; finish() rejects keys that no
// getter asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config: " + name() + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: " + name(key) + " has the wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  std::string name(const char* key = nullptr) const {
    std::string n = path_.empty() ? "<root>" : path_;
    if (key) n = path_.empty() ? std::string(key) : path_ + "." + key;
    return n;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ValidationError("config: unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string resize_name(ingest::ResizeMode m) { return m == ingest::ResizeMode::Nearest ? "nearest" : "bilinear"; }

ingest::ResizeMode resize_from(const std::string& s) {
  if (s == "nearest") return ingest::ResizeMode::Nearest;
  if (s == "bilinear") return ingest::ResizeMode::Bilinear;
  throw ValidationError("config: ingest.resize must be nearest or bilinear, got '" + s + "'");
}

std::string optimizer_name(sslnet::OptimizerKind k) { return k == sslnet::OptimizerKind::Adam ? "adam" : "sgd"; }

sslnet::OptimizerKind optimizer_from(const std::string& s) {
  if (s == "sgd") return sslnet::OptimizerKind::Sgd;
  if (s == "adam") return sslnet::OptimizerKind::Adam;
  throw ValidationError("config: train.optimizer must be sgd or adam, got '" + s + "'");
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

void read_dataset(const json& j, DatasetSection& d, const fs::path& base) {
  Reader r(j, "dataset");
  r.get("kind", d.kind);
  r.get("seed", d.seed);
  r.get("per_class", d.per_class);
  r.get("count", d.count);
  r.get("faulty_fraction", d.faulty_fraction);
  std::string m = d.manifest;
  r.get("manifest", m);
  if (r.has("manifest")) m = resolve(m, base);
  d.manifest = m;
  r.finish();
}

void read_ingest(const json& j, IngestSection& s) {
  Reader r(j, "ingest");
  std::string t;
  r.get("size", t);
  if (!t.empty()) s.size = ingest::parse_size(t);
  std::string rm = resize_name(s.resize);
  r.get("resize", rm);
  s.resize = resize_from(rm);
  r.finish();
}

void read_tda(const json& j, TdaSection& t) {
  Reader r(j, "tda");
  r.get("enabled", t.enabled);
  r.get("mode", t.mode);
  std::string scheme = vectorize::to_string(t.params.scheme);
  r.get("scheme", scheme);
  t.params.scheme = vectorize::scheme_from_string(scheme);
  if (const json* l = r.sub("landscape")) {
    Reader lr(*l, "tda.landscape");
    lr.get("levels", t.params.landscape.levels);
    lr.get("samples", t.params.landscape.samples);
    lr.finish();
  }
  if (const json* p = r.sub("pimage")) {
    Reader pr(*p, "tda.pimage");
    pr.get("rows", t.params.pimage.rows);
    pr.get("cols", t.params.pimage.cols);
    pr.get("sigma", t.params.pimage.sigma);
    pr.get("sigma_fraction", t.params.pimage.sigma_fraction);
    pr.finish();
  }
  r.finish();
}

void read_augmentation(const json& j, sslnet::AugmentationSpec& a) {
  Reader r(j, "train.augmentation");
  r.get("h_flip", a.h_flip);
  r.get("v_flip", a.v_flip);
  if (r.has("rotation_deg")) {
    std::array<double, 2> rot{};
    r.get("rotation_deg", rot);
    a.rotation_lo = rot[0];
    a.rotation_hi = rot[1];
  } else {
    r.sub("rotation_deg");
  }
  if (r.has("crop")) {
    const json* c = r.sub("crop");
    if (!c) {
      a.crop.reset();
    } else {
      sslnet::CropSpec spec = a.crop.value_or(sslnet::CropSpec{});
      Reader cr(*c, "train.augmentation.crop");
      cr.get("min_area_fraction", spec.min_area_fraction);
      cr.finish();
      a.crop = spec;
    }
  } else {
    r.sub("crop");
  }
  if (r.has("fill_value")) {
    const json* f = r.sub("fill_value");
    if (!f || (f->is_string() && f->get<std::string>() == "corner"))
      a.fill_value = std::nan("");
    else if (f->is_number())
      a.fill_value = f->get<double>();
    else
      throw ValidationError("config: train.augmentation.fill_value must be a number or \"corner\"");
  } else {
    r.sub("fill_value");
  }
  r.finish();
}

void read_train(const json& j, TrainSection& t, const fs::path& base) {
  Reader r(j, "train");
  auto& c = t.config;
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  r.get("final_lr_fraction", c.final_lr_fraction);
  r.get("temperature", c.temperature);
  std::string opt = optimizer_name(c.optimizer);
  r.get("optimizer", opt);
  c.optimizer = optimizer_from(opt);
  r.get("momentum", c.momentum);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("eps", c.eps);
  r.get("weight_decay", c.weight_decay);
  r.get("tda_noise", c.tda_noise);
  r.get("seed", c.seed);
  if (const json* a = r.sub("augmentation")) read_augmentation(*a, t.augmentation);
  if (const json* a = r.sub("arch")) {
    Reader ar(*a, "train.arch");
    ar.get("filters", t.filters);
    ar.get("hidden", t.hidden);
    ar.get("out_dim", t.out_dim);
    ar.finish();
  }
  std::string src = sslnet::to_string(t.embed_source);
  r.get("embed_source", src);
  try {
    t.embed_source = sslnet::embed_source_from_string(src);
  } catch (const Error&) {
    throw ValidationError("config: train.embed_source must be head or backbone, got '" + src + "'");
  }
  if (r.has("checkpoint")) {
    const json* k = r.sub("checkpoint");
    if (!k) {
      t.checkpoint.clear();
    } else if (k->is_string()) {
      t.checkpoint = resolve(k->get<std::string>(), base);
    } else {
      throw ValidationError("config: train.checkpoint must be a path or null");
    }
  } else {
    r.sub("checkpoint");
  }
  r.finish();
}

void read_map(const json& j, MapSection& m) {
  Reader r(j, "map");
  r.get("beta", m.betas);
  if (r.has("metric")) {
    std::vector<std::string> names;
    r.get("metric", names);
    m.metrics.clear();
    for (const auto& n : names) m.metrics.push_back(tdamap::metric_from_string(n));
  } else {
    r.sub("metric");
  }
  r.get("lens_bins", m.base.lens_bins);
  r.get("overlap", m.base.overlap);
  r.get("min_node_size", m.base.min_node_size);
  r.get("min_cluster_fraction", m.base.min_cluster_fraction);
  r.finish();
}

void read_eval(const json& j, EvalSection& e) {
  Reader r(j, "eval");
  r.get("name_threshold", e.name_threshold);
  r.get("merge", e.merge);
  r.finish();
}

json tda_json(const TdaSection& t) {
  return {{"enabled", t.enabled},
          {"mode", t.mode},
          {"scheme", vectorize::to_string(t.params.scheme)},
          {"landscape", {{"levels", t.params.landscape.levels}, {"samples", t.params.landscape.samples}}},
          {"pimage",
           {{"rows", t.params.pimage.rows},
            {"cols", t.params.pimage.cols},
            {"sigma", t.params.pimage.sigma},
            {"sigma_fraction", t.params.pimage.sigma_fraction}}}};
}

json ingest_json(const IngestSection& s) {
  return {{"size", std::to_string(s.size.width) + "x" + std::to_string(s.size.height)}, {"resize", resize_name(s.resize)}};
}

json train_json(const TrainSection& t) {
  const auto& c = t.config;
  json a = {{"h_flip", t.augmentation.h_flip},
            {"v_flip", t.augmentation.v_flip},
            {"rotation_deg", {t.augmentation.rotation_lo, t.augmentation.rotation_hi}}};
  a["crop"] = t.augmentation.crop ? json{{"min_area_fraction", t.augmentation.crop->min_area_fraction}} : json(nullptr);
  a["fill_value"] = std::isnan(t.augmentation.fill_value) ? json("corner") : json(t.augmentation.fill_value);
  json j = {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"final_lr_fraction", c.final_lr_fraction},
            {"temperature", c.temperature},
            {"optimizer", optimizer_name(c.optimizer)},
            {"momentum", c.momentum},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"weight_decay", c.weight_decay},
            {"tda_noise", c.tda_noise},
            {"seed", c.seed},
            {"augmentation", a},
            {"arch", {{"filters", t.filters}, {"hidden", t.hidden}, {"out_dim", t.out_dim}}},
            {"embed_source", sslnet::to_string(t.embed_source)}};
  j["checkpoint"] = t.checkpoint.empty() ? json(nullptr) : json(t.checkpoint);
  return j;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
}

std::string read_text(const fs::path& p) {
  std::vector<std::uint8_t> b;
  try {
    b = read_file(p);
  } catch (const Error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return {b.begin(), b.end()};
}

}  // namespace

// ------------------------------------------------------------ validation

void DatasetSection::validate() const {
  if (kind == "swed") {
    if (per_class <= 0) throw ValidationError("config: dataset.per_class must be positive");
  } else if (kind == "spvd") {
    if (count <= 0) throw ValidationError("config: dataset.count must be positive");
    if (!(faulty_fraction >= 0.0 && faulty_fraction <= 1.0))
      throw ValidationError("config: dataset.faulty_fraction must be in [0,1]");
  } else if (kind == "manifest") {
    if (manifest.empty()) throw ValidationError("config: dataset.manifest is required for kind manifest");
  } else {
    throw ValidationError("config: dataset.kind must be swed, spvd or manifest, got '" + kind + "'");
  }
}

void IngestSection::validate() const {
  if (size.width < 4 || size.height < 4) throw ValidationError("config: ingest.size must be at least 4x4");
}

void TdaSection::validate() const {
  if (mode != "auto") persist::filtration_mode_from_string(mode);
  params.landscape.validate();
  params.pimage.validate();
}

void TrainSection::validate() const {
  config.validate();
  augmentation.validate();
  for (int f : filters)
    if (f <= 0) throw ValidationError("config: train.arch.filters must be positive");
  if (hidden <= 0 || out_dim <= 0) throw ValidationError("config: train.arch hidden and out_dim must be positive");
}

void MapSection::validate() const {
  if (betas.empty()) throw ValidationError("config: map.beta must not be empty");
  if (metrics.empty()) throw ValidationError("config: map.metric must not be empty");
  for (double b : betas)
    if (!(b > 0.0)) throw ValidationError("config: map.beta values must be positive");
  base.validate();
}

void EvalSection::validate() const {
  if (!(name_threshold > 0.0 && name_threshold <= 1.0)) throw ValidationError("config: eval.name_threshold must be in (0,1]");
}

void PipelineConfig::validate() const {
  dataset.validate();
  ingest.validate();
  tda.validate();
  train.validate();
  map.validate();
  eval.validate();
}

// ------------------------------------------------------------ presets

std::vector<std::string> preset_names() { return {"table2", "table3", "table4", "table5", "swed-small"}; }

PipelineConfig preset(const std::string& name) {
  PipelineConfig c;
  c.preset = name;
  auto& t = c.train;
  t.config.learning_rate = 0.12;
  if (name == "table2") {
    // WM-811K: 35x35, flips + rotation (0,45), 600 epochs, batch 512
    c.dataset.kind = "manifest";
    c.ingest.size = {35, 35};
    t.config.epochs = 600;
    t.config.batch_size = 512;
    t.augmentation.h_flip = t.augmentation.v_flip = true;
    t.augmentation.rotation_hi = 45;
    c.map.betas = {3.5, 10.0, 20.0};
  } else if (name == "table3") {
    // Mixed WM38: 32x32, flips + crop + rotation (0,180), 1000 epochs, batch 256
    c.dataset.kind = "manifest";
    c.ingest.size = {32, 32};
    t.config.epochs = 1000;
    t.config.batch_size = 256;
    t.augmentation.h_flip = t.augmentation.v_flip = true;
    t.augmentation.crop = sslnet::CropSpec{};
    t.augmentation.rotation_hi = 180;
    c.map.betas = {3.5, 10.0};
    c.map.metrics = {tdamap::Metric::Euclidean};
  } else if (name == "table4") {
    // SPVD: crop + rotation (0,45), 100 epochs, batch 256; desk-scale size
    c.dataset.kind = "spvd";
    c.ingest.size = {64, 64};
    c.tda.mode = "sublevel";
    t.config.epochs = 100;
    t.config.batch_size = 256;
    t.augmentation.crop = sslnet::CropSpec{};
    t.augmentation.rotation_hi = 45;
    c.map.betas = {1.5, 3.5};
  } else if (name == "table5" || name == "swed-small") {
    // SWED: crop + rotation (0,45), 100 epochs, batch 256; desk-scale size
    c.dataset.kind = "swed";
    c.ingest.size = {32, 32};
    c.tda.mode = "distance";
    t.config.epochs = 100;
    t.config.batch_size = 256;
    t.augmentation.crop = sslnet::CropSpec{};
    t.augmentation.rotation_hi = 45;
    c.map.betas = {3.5, 10.0, 20.0};
    if (name == "swed-small") {
      c.dataset.per_class = 50;
      t.config.epochs = 30;
    }
  } else {
    std::string all;
    for (const auto& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
    throw ValidationError("config: unknown preset '" + name + "' (known: " + all + ")");
  }
  return c;
}

// ------------------------------------------------------------ parse / dump

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
  const json j = parse_json(text);
  Reader r(j, "");
  std::string name;
  r.get("preset", name);
  PipelineConfig c = name.empty() ? PipelineConfig{} : preset(name);
  if (const json* s = r.sub("dataset")) read_dataset(*s, c.dataset, base_dir);
  if (const json* s = r.sub("ingest")) read_ingest(*s, c.ingest);
  if (const json* s = r.sub("tda")) read_tda(*s, c.tda);
  if (const json* s = r.sub("train")) read_train(*s, c.train, base_dir);
  if (const json* s = r.sub("map")) read_map(*s, c.map);
  if (const json* s = r.sub("eval")) read_eval(*s, c.eval);
  r.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) { return parse_config(read_text(path), path.parent_path()); }

std::string config_json(const PipelineConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["dataset"] = {{"kind", c.dataset.kind},
                  {"seed", c.dataset.seed},
                  {"per_class", c.dataset.per_class},
                  {"count", c.dataset.count},
                  {"faulty_fraction", c.dataset.faulty_fraction},
                  {"manifest", c.dataset.manifest}};
  j["ingest"] = ingest_json(c.ingest);
  j["tda"] = tda_json(c.tda);
  j["train"] = train_json(c.train);
  std::vector<std::string> metrics;
  for (auto m : c.map.metrics) metrics.push_back(tdamap::to_string(m));
  j["map"] = {{"beta", c.map.betas},
              {"metric", metrics},
              {"lens_bins", c.map.base.lens_bins},
              {"overlap", c.map.base.overlap},
              {"min_node_size", c.map.base.min_node_size},
              {"min_cluster_fraction", c.map.base.min_cluster_fraction}};
  j["eval"] = {{"name_threshold", c.eval.name_threshold}, {"merge", c.eval.merge}};
  return j.dump();
}

// ------------------------------------------------------------ pretraining config

void PretrainConfig::validate() const {
  if (!spvd && !swed && variants.count == 0)
    throw ValidationError("config: pretraining needs a generation section with spvd, swed or variants");
  if (spvd) spvd->validate();
  if (swed) swed->validate();
  if (variants.count < 0) throw ValidationError("config: generation.variants.count must be non-negative");
  ingest.validate();
  tda.validate();
  if (tda.mode == "distance") throw ValidationError("config: pretraining mixes image kinds; tda.mode must be sublevel");
  train.validate();
  if (!train.checkpoint.empty()) throw ValidationError("config: train.checkpoint is not used by pretraining");
}

PretrainConfig pretrain_preset(const std::string& name) {
  if (name != "foundational") throw ValidationError("config: unknown pretraining preset '" + name + "'");
  PretrainConfig c;
  c.spvd = synth::SpvdConfig{};
  c.spvd->image_count = 400;
  c.spvd->seed = 1001;
  c.swed = synth::SwedConfig{};
  c.swed->per_class_count = 100;
  c.swed->seed = 1002;
  c.variants.count = 700;
  c.variants.seed = 1003;
  c.ingest.size = {64, 64};
  c.tda.mode = "sublevel";
  c.train.config.epochs = 50;
  c.train.config.batch_size = 256;
  c.train.config.learning_rate = 0.12;
  c.train.augmentation.crop = sslnet::CropSpec{};
  c.train.augmentation.rotation_hi = 45;
  return c;
}

PretrainConfig parse_pretrain_config(const std::string& text) {
  const json j = parse_json(text);
  Reader r(j, "");
  std::string name;
  r.get("preset", name);
  PretrainConfig c = name.empty() ? PretrainConfig{} : pretrain_preset(name);
  const json* g = r.sub("generation");
  if (!g && name.empty()) throw ValidationError("config: missing generation section");
  if (g) {
    c.spvd.reset();
    c.swed.reset();
    c.variants = {};
    Reader gr(*g, "generation");
    if (const json* s = gr.sub("spvd")) {
      synth::SpvdConfig sc;
      Reader sr(*s, "generation.spvd");
      sr.get("count", sc.image_count);
      sr.get("faulty_fraction", sc.faulty_fraction);
      sr.get("seed", sc.seed);
      sr.finish();
      c.spvd = sc;
    }
    if (const json* s = gr.sub("swed")) {
      synth::SwedConfig sc;
      Reader sr(*s, "generation.swed");
      sr.get("per_class", sc.per_class_count);
      sr.get("seed", sc.seed);
      sr.finish();
      c.swed = sc;
    }
    if (const json* s = gr.sub("variants")) {
      Reader vr(*s, "generation.variants");
      vr.get("count", c.variants.count);
      vr.get("seed", c.variants.seed);
      vr.finish();
    }
    gr.finish();
  }
  if (const json* s = r.sub("ingest")) read_ingest(*s, c.ingest);
  if (const json* s = r.sub("tda")) read_tda(*s, c.tda);
  if (const json* s = r.sub("train")) read_train(*s, c.train, {});
  r.finish();
  c.validate();
  return c;
}

PretrainConfig load_pretrain_config(const fs::path& path) { return parse_pretrain_config(read_text(path)); }

std::string pretrain_config_json(const PretrainConfig& c) {
  json g = json::object();
  if (c.spvd)
    g["spvd"] = {{"count", c.spvd->image_count}, {"faulty_fraction", c.spvd->faulty_fraction}, {"seed", c.spvd->seed}};
  if (c.swed) g["swed"] = {{"per_class", c.swed->per_class_count}, {"seed", c.swed->seed}};
  g["variants"] = {{"count", c.variants.count}, {"seed", c.variants.seed}};
  json j;
  j["generation"] = g;
  j["ingest"] = ingest_json(c.ingest);
  j["tda"] = tda_json(c.tda);
  j["train"] = train_json(c.train);
  return j.dump();
}

}  // namespace wafertopo::pipeline
