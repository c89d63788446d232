#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/pipeline.hpp"

namespace wafertopo::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kCacheVersion = "wafertopo-cache-1";

std::string key_of(std::initializer_list<std::string_view> parts) {
  Fnv1a h;
  h.update(kCacheVersion);
  for (auto p : parts) {
    const std::uint64_t n = p.size();
    h.update(&n, sizeof n);
    h.update(p);
  }
  return hex64(h.digest());
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

// One directory per stage under workdir/cache with a stamp recording the input
// key and the hash of every output file. A stamp whose key differs, or whose
// outputs no longer hash to the recorded values, is stale.
class StageCache {
 public:
  StageCache(fs::path root, const ProgressFn& progress, std::vector<StageRecord>& records)
      : root_(std::move(root)), progress_(progress), records_(records) {}

  fs::path dir(const std::string& stage) const { return root_ / stage; }

  bool lookup(const std::string& stage, const std::string& key) {
    const fs::path stamp = dir(stage) / "stamp.json";
    bool hit = false;
    if (fs::exists(stamp)) {
      const auto bytes = read_file(stamp);
      const json j = json::parse(bytes.begin(), bytes.end(), nullptr, false);
      if (!j.is_discarded() && j.is_object() && j.value("key", "") == key && j.contains("outputs")) {
        hit = true;
        for (const auto& [name, h] : j["outputs"].items()) {
          const fs::path p = dir(stage) / name;
          if (!fs::exists(p) || hex64(hash_file(p)) != h.get<std::string>()) {
            hit = false;
            break;
          }
        }
      }
    }
    records_.push_back({stage, key, hit});
    if (progress_) progress_({stage, hit ? "cached" : "start", 0, 0, 0.0, key});
    if (!hit) {
      std::error_code ec;
      fs::remove_all(dir(stage), ec);
      fs::create_directories(dir(stage));
    }
    return hit;
  }

  void commit(const std::string& stage, const std::string& key, const std::vector<std::string>& outputs) {
    json j;
    j["stage"] = stage;
    j["key"] = key;
    j["outputs"] = json::object();
    for (const auto& o : outputs) j["outputs"][o] = hex64(hash_file(dir(stage) / o));
    write_text_atomic(dir(stage) / "stamp.json", j.dump(2) + "\n");
    if (progress_) progress_({stage, "done", 0, 0, 0.0, key});
  }

 private:
  fs::path root_;
  const ProgressFn& progress_;
  std::vector<StageRecord>& records_;
};

template <typename F>
auto in_stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<std::string> manifest_outputs(const DatasetManifest& m, const std::string& prefix) {
  std::vector<std::string> out{prefix + "manifest.csv"};
  for (const auto& e : m.entries) out.push_back(prefix + e.path);
  return out;
}

// Generated datasets are cached; external manifests are keyed by content.
struct DatasetStage {
  DatasetManifest manifest;
  std::string key;
};

DatasetStage generated_dataset(StageCache& cache, const std::string& stage, const std::string& spec,
                               const std::function<DatasetManifest(const fs::path&)>& gen) {
  DatasetStage d;
  d.key = key_of({"dataset", spec});
  const fs::path out = cache.dir(stage) / "data";
  if (cache.lookup(stage, d.key)) {
    d.manifest = read_manifest(out / "manifest.csv");
  } else {
    d.manifest = gen(out);
    cache.commit(stage, d.key, manifest_outputs(d.manifest, "data/"));
  }
  return d;
}

DatasetStage dataset_stage(StageCache& cache, const DatasetSection& ds) {
  return in_stage("dataset", [&] {
    if (ds.kind == "swed") {
      synth::SwedConfig sc;
      sc.per_class_count = ds.per_class;
      sc.seed = ds.seed;
      const std::string spec = "swed/" + std::to_string(sc.per_class_count) + "/" + std::to_string(sc.seed);
      return generated_dataset(cache, "dataset", spec, [&](const fs::path& p) { return synth::gen_swed_dataset(sc, p); });
    }
    if (ds.kind == "spvd") {
      synth::SpvdConfig sc;
      sc.image_count = ds.count;
      sc.faulty_fraction = ds.faulty_fraction;
      sc.seed = ds.seed;
      const std::string spec = "spvd/" + std::to_string(sc.image_count) + "/" + num(sc.faulty_fraction) + "/" +
                               std::to_string(sc.seed);
      return generated_dataset(cache, "dataset", spec, [&](const fs::path& p) { return synth::gen_spvd_dataset(sc, p); });
    }
    DatasetStage d;
    d.manifest = read_manifest(ds.manifest);
    Fnv1a h;
    const auto mbytes = read_file(ds.manifest);
    h.update(mbytes.data(), mbytes.size());
    for (const auto& e : d.manifest.entries) {
      const fs::path p = d.manifest.resolve(e);
      const std::uint64_t v = fs::exists(p) ? hash_file(p) : 0;
      h.update(&v, sizeof v);
    }
    d.key = key_of({"manifest", hex64(h.digest())});
    cache.lookup("dataset", d.key);
    cache.commit("dataset", d.key, {});
    return d;
  });
}

struct CorpusStage {
  ingest::Corpus corpus;
  std::string key;
};

CorpusStage ingest_stage(StageCache& cache, const std::string& stage, const DatasetStage& data, const IngestSection& s,
                         const ProgressFn& progress) {
  return in_stage(stage, [&] {
    CorpusStage c;
    c.key = key_of({stage, data.key, std::to_string(s.size.width), std::to_string(s.size.height),
                    s.resize == ingest::ResizeMode::Nearest ? "nearest" : "bilinear"});
    const fs::path out = cache.dir(stage) / "corpus.wtc";
    if (cache.lookup(stage, c.key)) {
      c.corpus = ingest::read_corpus(out);
      return c;
    }
    auto loaded = ingest::load_corpus(data.manifest, s.size, s.resize);
    for (const auto& e : loaded.errors)
      if (progress) progress({stage, "warning", 0, 0, 0.0, "skipped " + e.id + ": " + e.message});
    if (loaded.corpus.empty()) throw Error("no readable items in the manifest");
    c.corpus = std::move(loaded.corpus);
    ingest::save_corpus(out, c.corpus);
    cache.commit(stage, c.key, {"corpus.wtc"});
    return c;
  });
}

std::string resolve_mode(const TdaSection& t, const ingest::Corpus& corpus) {
  if (t.mode != "auto") return t.mode;
  for (const auto& it : corpus.items)
    if (!it.grid) return "sublevel";
  return "distance";
}

std::string tda_spec(const TdaSection& t, const std::string& mode) {
  json j = {{"enabled", t.enabled},
            {"mode", mode},
            {"scheme", vectorize::to_string(t.params.scheme)},
            {"levels", t.params.landscape.levels},
            {"samples", t.params.landscape.samples},
            {"rows", t.params.pimage.rows},
            {"cols", t.params.pimage.cols},
            {"sigma", t.params.pimage.sigma},
            {"sigma_fraction", t.params.pimage.sigma_fraction}};
  return j.dump();
}

struct FeatureStage {
  vectorize::FeatureSet features;
  std::string key;
};

vectorize::FeatureSet empty_features(const ingest::Corpus& corpus) {
  vectorize::FeatureSet f;
  f.matrix = LabeledMatrix(corpus.ids(), 0);
  return f;
}

// reference: featurize with a checkpoint's recorded parameters instead of the section
FeatureStage tda_stage(StageCache& cache, const std::string& stage, const CorpusStage& corpus, const TdaSection& t,
                       const std::optional<vectorize::FeatureSet>& reference, const std::string& reference_key) {
  return in_stage(stage, [&] {
    FeatureStage f;
    const bool use_ref = !reference_key.empty();
    const bool enabled = use_ref ? reference.has_value() : t.enabled;
    const std::string spec = use_ref ? "reference/" + reference_key : tda_spec(t, resolve_mode(t, corpus.corpus));
    f.key = key_of({stage, corpus.key, spec});
    const fs::path out = cache.dir(stage) / "features.wte";
    if (cache.lookup(stage, f.key)) {
      f.features = enabled ? vectorize::load_features(out) : empty_features(corpus.corpus);
      return f;
    }
    if (!enabled) {
      f.features = empty_features(corpus.corpus);
      cache.commit(stage, f.key, {});
      return f;
    }
    if (use_ref) {
      f.features = vectorize::featurize_with(corpus.corpus, *reference);
    } else {
      const auto mode = persist::filtration_mode_from_string(resolve_mode(t, corpus.corpus));
      f.features = vectorize::featurize_corpus(corpus.corpus, mode, t.params);
    }
    vectorize::save_features(out, f.features);
    cache.commit(stage, f.key, {"features.wte", "features.wte.json"});
    return f;
  });
}

std::string train_spec(const TrainSection& t) {
  json j = json::parse(config_json([&] {
    PipelineConfig c;
    c.train = t;
    c.train.checkpoint.clear();
    c.train.embed_source = sslnet::EmbedSource::Head;
    return c;
  }()));
  return j["train"].dump();
}

sslnet::TrainOptions train_options(const TrainSection& t, const ingest::Corpus& corpus, const std::string& stage,
                                   const ProgressFn& progress) {
  sslnet::TrainOptions opt;
  opt.arch.width = corpus.target_size.width;
  opt.arch.height = corpus.target_size.height;
  opt.arch.filters = t.filters;
  opt.arch.hidden = t.hidden;
  opt.arch.out_dim = t.out_dim;
  opt.augmentation = t.augmentation;
  opt.config = t.config;
  if (progress)
    opt.progress = [&progress, stage](const sslnet::ProgressEvent& e) {
      progress({stage, "epoch", e.epoch, e.epochs, e.loss, ""});
    };
  return opt;
}

struct ModelStage {
  sslnet::Checkpoint ckpt;
  std::string key;
  fs::path path;
};

ModelStage train_stage(StageCache& cache, const std::string& stage, const CorpusStage& corpus, const FeatureStage& tda,
                       const TrainSection& t, const std::string& provenance, const ProgressFn& progress) {
  return in_stage(stage, [&] {
    ModelStage m;
    m.key = key_of({stage, corpus.key, tda.key, train_spec(t), provenance});
    m.path = cache.dir(stage) / "model.wtk";
    if (cache.lookup(stage, m.key)) {
      m.ckpt = sslnet::load_checkpoint(m.path);
      return m;
    }
    auto opt = train_options(t, corpus.corpus, stage, progress);
    opt.provenance_json = provenance;
    m.ckpt = sslnet::train_ssl(corpus.corpus, tda.features, opt);
    sslnet::save_checkpoint(m.path, m.ckpt);
    cache.commit(stage, m.key, {"model.wtk"});
    return m;
  });
}

std::map<std::string, std::string> label_map(const ingest::Corpus& corpus) {
  std::map<std::string, std::string> m;
  for (const auto& it : corpus.items) m[it.id] = it.label && !it.label->empty() ? *it.label : "unlabelled";
  return m;
}

std::string grid_csv(const tdamap::GridResult& g) {
  std::string out = format_csv_row({"beta", "metric", "score", "db", "n_clusters", "noise_fraction", "selected"});
  for (std::size_t i = 0; i < g.table.size(); ++i) {
    const auto& e = g.table[i];
    out += format_csv_row({num(e.beta), tdamap::to_string(e.metric), num(e.score), num(e.db), std::to_string(e.n_clusters),
                           num(e.noise_fraction), i == g.best_index ? "1" : "0"});
  }
  return out;
}

tdamap::GridResult parse_grid_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  tdamap::GridResult g;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 7) throw FormatError("grid.csv: bad row");
    tdamap::GridEntry e;
    e.beta = parse_num(r[0]);
    e.metric = tdamap::metric_from_string(r[1]);
    e.score = parse_num(r[2]);
    e.db = parse_num(r[3]);
    e.n_clusters = std::stoul(r[4]);
    e.noise_fraction = parse_num(r[5]);
    if (r[6] == "1") g.best_index = g.table.size();
    g.table.push_back(e);
  }
  if (g.table.empty()) throw FormatError("grid.csv: no rows");
  return g;
}

std::string text_of(const fs::path& p) {
  const auto b = read_file(p);
  return {b.begin(), b.end()};
}

void copy_out(const fs::path& from, const fs::path& to) { write_file_atomic(to, read_file(from)); }

}  // namespace

RunResult run_pipeline(const PipelineConfig& config, const fs::path& workdir, const ProgressFn& progress) {
  config.validate();
  try {
    fs::create_directories(workdir / "cache");
  } catch (const fs::filesystem_error& e) {
    throw ValidationError(std::string("workdir is not writable: ") + e.what());
  }
  RunResult res;
  StageCache cache(workdir / "cache", progress, res.stages);

  const DatasetStage data = dataset_stage(cache, config.dataset);
  const CorpusStage corpus = ingest_stage(cache, "ingest", data, config.ingest, progress);

  // frozen checkpoint: zero-shot path
  std::optional<sslnet::Checkpoint> frozen;
  std::string frozen_key;
  std::optional<vectorize::FeatureSet> reference;
  if (!config.train.checkpoint.empty()) {
    in_stage("train", [&] {
      frozen = sslnet::load_checkpoint(config.train.checkpoint);
      frozen_key = hex64(hash_file(config.train.checkpoint));
      reference = sslnet::reference_features(*frozen);
      if (frozen->arch.tda_dim > 0 && !reference)
        throw Error("checkpoint has a TDA input but records no featurization parameters");
      return 0;
    });
  }

  const FeatureStage tda = tda_stage(cache, "tda", corpus, config.tda, reference, frozen_key);

  ModelStage model;
  if (frozen) {
    model.ckpt = *frozen;
    model.key = key_of({"frozen", frozen_key});
    model.path = config.train.checkpoint;
    res.stages.push_back({"train", model.key, true});
    if (progress) progress({"train", "cached", 0, 0, 0.0, "frozen checkpoint"});
  } else {
    model = train_stage(cache, "train", corpus, tda, config.train, "{}", progress);
  }
  res.checkpoint_path = model.path;

  const std::string emb_key = key_of({"embed", model.key, corpus.key, tda.key, sslnet::to_string(config.train.embed_source)});
  const LabeledMatrix emb = in_stage("embed", [&] {
    const fs::path out = cache.dir("embed") / "embeddings.wte";
    if (cache.lookup("embed", emb_key)) return load_matrix(out);
    LabeledMatrix m = sslnet::embed_corpus(model.ckpt, corpus.corpus, tda.features, config.train.embed_source);
    save_matrix(out, m);
    cache.commit("embed", emb_key, {"embeddings.wte"});
    return m;
  });

  const auto labels = label_map(corpus.corpus);
  const json cfg_json = json::parse(config_json(config));
  const std::string map_key = key_of({"map", emb_key, cfg_json["map"].dump()});
  in_stage("map", [&] {
    const fs::path dir = cache.dir("map");
    if (cache.lookup("map", map_key)) {
      res.grid = parse_grid_csv(text_of(dir / "grid.csv"));
      const auto parsed = tdamap::parse_assignments_csv(text_of(dir / "assignments.csv"));
      res.ids = parsed.first;
      res.assignments = parsed.second;
      return 0;
    }
    res.grid = tdamap::grid_search(emb, config.map.betas, config.map.metrics, config.map.base);
    res.ids = res.grid.best.ids;
    res.assignments = res.grid.best.assignments;
    write_text_atomic(dir / "grid.csv", grid_csv(res.grid));
    write_text_atomic(dir / "assignments.csv", tdamap::assignments_csv(res.grid.best.ids, res.grid.best.assignments));
    write_text_atomic(dir / "map.graphml", tdamap::to_graphml(res.grid.best, &labels));
    cache.commit("map", map_key, {"grid.csv", "assignments.csv", "map.graphml"});
    return 0;
  });

  in_stage("eval", [&] {
    const auto& best = res.grid.table[res.grid.best_index];
    json echo;
    echo["pipeline"] = cfg_json;
    // the checkpoint is identified by content, so the report does not depend on where it lives
    if (frozen) {
      echo["pipeline"]["train"].erase("checkpoint");
      echo["frozen_checkpoint"] = frozen_key;
    }
    echo["selected"] = {{"beta", best.beta}, {"metric", tdamap::to_string(best.metric)}, {"score", num(best.score)}};
    json grid = json::array();
    for (const auto& e : res.grid.table)
      grid.push_back({{"beta", e.beta},
                      {"metric", tdamap::to_string(e.metric)},
                      {"score", num(e.score)},
                      {"n_clusters", e.n_clusters},
                      {"noise_fraction", e.noise_fraction}});
    echo["grid"] = grid;
    json stages = json::object();
    for (const auto& s : res.stages) stages[s.name] = s.key;
    echo["stages"] = stages;
    if (!config.eval.merge.empty()) echo["ari_label_merge"] = config.eval.merge;

    res.report = evalrep::make_report(res.ids, res.assignments, labels, best.db, echo.dump(), config.eval.name_threshold);
    std::vector<std::string> merged;
    for (const auto& id : res.ids) {
      const std::string& l = labels.at(id);
      const auto it = config.eval.merge.find(l);
      merged.push_back(it == config.eval.merge.end() ? l : it->second);
      res.labels.push_back(l);
    }
    res.report.metrics.ari = evalrep::ari_excluding_noise(res.assignments, evalrep::encode_labels(merged));

    const auto tab = evalrep::crosstab(res.ids, res.assignments, labels);
    res.report_path = workdir / "report.json";
    const std::string js = evalrep::report_json(res.report);
    evalrep::validate_report_json(js);
    write_text_atomic(res.report_path, js);
    write_text_atomic(workdir / "histogram.csv", evalrep::histogram_csv(tab));
    write_text_atomic(workdir / "histogram.svg", evalrep::histogram_svg(tab, evalrep::name_clusters(tab, config.eval.name_threshold)));
    for (const char* f : {"grid.csv", "assignments.csv", "map.graphml"}) copy_out(cache.dir("map") / f, workdir / f);
    if (progress) progress({"eval", "done", 0, 0, 0.0, res.report_path.string()});
    return 0;
  });
  return res;
}

// ------------------------------------------------------------ pretraining

sslnet::Checkpoint pretrain_foundational(const PretrainConfig& config, const fs::path& workdir, const ProgressFn& progress) {
  config.validate();
  try {
    fs::create_directories(workdir / "cache");
  } catch (const fs::filesystem_error& e) {
    throw ValidationError(std::string("workdir is not writable: ") + e.what());
  }
  std::vector<StageRecord> records;
  StageCache cache(workdir / "cache", progress, records);

  struct Part {
    std::string name;
    DatasetStage data;
  };
  std::vector<Part> parts;
  in_stage("generate", [&] {
    if (config.spvd) {
      const auto sc = *config.spvd;
      const std::string spec = "spvd/" + std::to_string(sc.image_count) + "/" + num(sc.faulty_fraction) + "/" +
                               std::to_string(sc.seed);
      parts.push_back({"spvd", generated_dataset(cache, "pretrain-spvd", spec,
                                                 [&](const fs::path& p) { return synth::gen_spvd_dataset(sc, p); })});
    }
    if (config.swed) {
      const auto sc = *config.swed;
      const std::string spec = "swed/" + std::to_string(sc.per_class_count) + "/" + std::to_string(sc.seed);
      parts.push_back({"swed", generated_dataset(cache, "pretrain-swed", spec,
                                                 [&](const fs::path& p) { return synth::gen_swed_dataset(sc, p); })});
    }
    if (config.variants.count > 0) {
      const auto v = config.variants;
      const std::string spec = "variants/" + std::to_string(v.count) + "/" + std::to_string(v.seed);
      parts.push_back({"variants", generated_dataset(cache, "pretrain-variants", spec, [&](const fs::path& p) {
                         return synth::gen_variant_dataset(v.count, v.seed, p);
                       })});
    }
    return 0;
  });

  std::vector<ingest::Corpus> corpora;
  std::vector<std::string> part_keys;
  for (const auto& p : parts) {
    CorpusStage c = ingest_stage(cache, "pretrain-ingest-" + p.name, p.data, config.ingest, progress);
    for (auto& it : c.corpus.items) {
      it.id = p.name + "/" + it.id;
      it.grid.reset();  // sublevel features only; the kinds differ
    }
    part_keys.push_back(c.key);
    corpora.push_back(std::move(c.corpus));
  }
  CorpusStage combined;
  combined.corpus = in_stage("ingest", [&] { return ingest::concat(std::move(corpora)); });
  Fnv1a h;
  for (const auto& k : part_keys) h.update(k);
  combined.key = key_of({"pretrain-corpus", hex64(h.digest())});

  TdaSection tda = config.tda;
  if (tda.mode == "auto") tda.mode = "sublevel";
  const FeatureStage features = tda_stage(cache, "pretrain-tda", combined, tda, std::nullopt, "");

  json prov;
  prov["foundational"] = true;
  prov["corpus_size"] = combined.corpus.size();
  prov["config"] = json::parse(pretrain_config_json(config));
  const ModelStage m =
      train_stage(cache, "pretrain-train", combined, features, config.train, prov.dump(), progress);
  return m.ckpt;
}

}  // namespace wafertopo::pipeline
