#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/evalrep.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/parallel.hpp"
#include "wafertopo/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace wafertopo;

namespace {

bool g_progress = false;

void emit(const json& j) {
  if (!g_progress) return;
  std::cout << j.dump() << '\n' << std::flush;
}

pipeline::ProgressFn progress_fn() {
  return [](const pipeline::Progress& p) {
    if (p.event == "epoch") {
      if (p.epoch == p.epochs || p.epoch % 10 == 0) spdlog::info("{}: epoch {}/{} loss {:.4f}", p.stage, p.epoch, p.epochs, p.loss);
      emit({{"stage", p.stage}, {"event", "epoch"}, {"epoch", p.epoch}, {"epochs", p.epochs}, {"loss", p.loss}});
      return;
    }
    if (p.event == "warning")
      spdlog::warn("{}: {}", p.stage, p.detail);
    else
      spdlog::info("{}: {}", p.stage, p.event);
    emit({{"stage", p.stage}, {"event", p.event}, {"detail", p.detail}});
  };
}

sslnet::ProgressFn train_progress() {
  auto fn = progress_fn();
  return [fn](const sslnet::ProgressEvent& e) { fn({e.stage.empty() ? "train" : e.stage, "epoch", e.epoch, e.epochs, e.loss, ""}); };
}

template <typename T>
std::vector<T> split_list(const std::string& s, const std::function<T(const std::string&)>& conv) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(conv(item));
  if (out.empty()) throw ValidationError("empty list '" + s + "'");
  return out;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("not a number: '" + s + "'");
}

std::string safe_name(const std::string& id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out;
}

vectorize::FeatureSet load_tda_or_empty(const std::string& path, const ingest::Corpus& corpus) {
  if (!path.empty()) return vectorize::load_features(path);
  vectorize::FeatureSet f;
  f.matrix = LabeledMatrix(corpus.ids(), 0);
  return f;
}

// ---------------------------------------------------------------- commands

struct GenArgs {
  std::string kind, out;
  std::uint64_t seed = 42;
  int count = 200, per_class = 200;
};

void cmd_gen(const GenArgs& a) {
  DatasetManifest m;
  if (a.kind == "spvd") {
    synth::SpvdConfig c;
    c.seed = a.seed;
    c.image_count = a.count;
    m = synth::gen_spvd_dataset(c, a.out);
  } else if (a.kind == "swed") {
    synth::SwedConfig c;
    c.seed = a.seed;
    c.per_class_count = a.per_class;
    m = synth::gen_swed_dataset(c, a.out);
  } else {
    throw ValidationError("--kind must be spvd or swed");
  }
  spdlog::info("gen: wrote {} images to {}", m.entries.size(), a.out);
}

struct IngestArgs {
  std::string manifest, size = "32x32", resize = "bilinear", out;
};

void cmd_ingest(const IngestArgs& a) {
  const auto size = ingest::parse_size(a.size);
  const auto mode = a.resize == "nearest" ? ingest::ResizeMode::Nearest : ingest::ResizeMode::Bilinear;
  const auto manifest = read_manifest(a.manifest);
  auto r = ingest::load_corpus(manifest, size, mode);
  for (const auto& e : r.errors) {
    spdlog::warn("ingest: skipped {}: {}", e.id, e.message);
    emit({{"stage", "ingest"}, {"event", "warning"}, {"detail", e.id + ": " + e.message}});
  }
  if (r.corpus.empty()) throw Error("no readable items");
  ingest::save_corpus(a.out, r.corpus);
  spdlog::info("ingest: {} items, {} skipped", r.corpus.size(), r.errors.size());
}

struct PersistArgs {
  std::string corpus, mode = "sublevel", scheme = "landscape", out;
};

void cmd_persist(const PersistArgs& a) {
  const auto corpus = ingest::read_corpus(a.corpus);
  const auto mode = persist::filtration_mode_from_string(a.mode);
  std::vector<persist::TdaSignature> sigs(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { sigs[i] = persist::tda_signature(corpus.items[i], mode); });
  fs::create_directories(fs::path(a.out) / "diagrams");
  std::string index = format_csv_row({"id", "file", "min_value", "max_value"});
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    const std::string file = "diagrams/" + std::to_string(i) + "_" + safe_name(corpus.items[i].id) + ".csv";
    write_text_atomic(fs::path(a.out) / file, persist::format_diagram_csv(sigs[i].diagrams));
    char lo[32], hi[32];
    std::snprintf(lo, sizeof lo, "%.17g", sigs[i].min_value);
    std::snprintf(hi, sizeof hi, "%.17g", sigs[i].max_value);
    index += format_csv_row({corpus.items[i].id, file, lo, hi});
  }
  write_text_atomic(fs::path(a.out) / "index.csv", index);
  vectorize::FeatureParams params;
  params.scheme = vectorize::scheme_from_string(a.scheme);
  const auto features = vectorize::featurize_signatures(corpus.ids(), sigs, mode, params);
  vectorize::save_features(fs::path(a.out) / "features.wte", features);
  spdlog::info("persist: {} diagrams, features {}x{} in {}", sigs.size(), features.matrix.rows(), features.matrix.cols, a.out);
}

struct TrainArgs {
  std::string corpus, tda, config, out;
};

void cmd_train(const TrainArgs& a) {
  const auto cfg = a.config.empty() ? pipeline::preset("table5") : pipeline::load_config(a.config);
  const auto corpus = ingest::read_corpus(a.corpus);
  const auto tda = load_tda_or_empty(a.tda, corpus);
  sslnet::TrainOptions opt;
  opt.arch.filters = cfg.train.filters;
  opt.arch.hidden = cfg.train.hidden;
  opt.arch.out_dim = cfg.train.out_dim;
  opt.augmentation = cfg.train.augmentation;
  opt.config = cfg.train.config;
  opt.progress = train_progress();
  const auto ckpt = sslnet::train_ssl(corpus, tda, opt);
  sslnet::save_checkpoint(a.out, ckpt);
  spdlog::info("train: final loss {:.4f}, wrote {}", ckpt.loss_curve.empty() ? 0.0 : ckpt.loss_curve.back(), a.out);
}

struct EmbedArgs {
  std::string ckpt, corpus, tda, out, source = "head";
};

void cmd_embed(const EmbedArgs& a) {
  const auto ckpt = sslnet::load_checkpoint(a.ckpt);
  const auto corpus = ingest::read_corpus(a.corpus);
  vectorize::FeatureSet tda;
  if (!a.tda.empty()) {
    tda = vectorize::load_features(a.tda);
  } else if (auto ref = sslnet::reference_features(ckpt); ref && ckpt.arch.tda_dim > 0) {
    spdlog::info("embed: featurizing with the checkpoint's recorded TDA parameters");
    tda = vectorize::featurize_with(corpus, *ref);
  } else {
    tda = load_tda_or_empty("", corpus);
  }
  const auto m = sslnet::embed_corpus(ckpt, corpus, tda, sslnet::embed_source_from_string(a.source));
  save_matrix(a.out, m);
  spdlog::info("embed: {}x{} -> {}", m.rows(), m.cols, a.out);
}

struct DistillArgs {
  std::string teacher, corpus, tda, config, out;
};

void cmd_distill(const DistillArgs& a) {
  const auto teacher = load_matrix(a.teacher);
  const auto corpus = ingest::read_corpus(a.corpus);
  const auto tda = load_tda_or_empty(a.tda, corpus);
  sslnet::DistillOptions opt;
  if (!a.config.empty()) opt.config = pipeline::load_config(a.config).train.config;
  opt.progress = train_progress();
  const auto ckpt = sslnet::distill(teacher, corpus, tda, opt);
  sslnet::save_checkpoint(a.out, ckpt);
  spdlog::info("distill: loss {:.4f}, wrote {}", sslnet::distill_loss(ckpt, teacher, corpus, tda), a.out);
}

struct MapArgs {
  std::string emb, betas = "3.5,10,20", metrics = "euclidean,cosine", out, assignments, grid, manifest;
  int lens_bins = 10, min_node_size = 3;
  double overlap = 0.3, min_cluster_fraction = 0.005;
};

void cmd_map(const MapArgs& a) {
  const auto emb = load_matrix(a.emb);
  const auto betas = split_list<double>(a.betas, to_double);
  const auto metrics = split_list<tdamap::Metric>(a.metrics, [](const std::string& s) { return tdamap::metric_from_string(s); });
  tdamap::MapConfig base;
  base.lens_bins = a.lens_bins;
  base.overlap = a.overlap;
  base.min_node_size = a.min_node_size;
  base.min_cluster_fraction = a.min_cluster_fraction;
  const auto g = tdamap::grid_search(emb, betas, metrics, base);
  for (const auto& e : g.table)
    spdlog::info("map: beta {} {}: score {:.4f} clusters {} noise {:.3f}", e.beta, tdamap::to_string(e.metric), e.score,
                 e.n_clusters, e.noise_fraction);
  std::map<std::string, std::string> labels;
  if (!a.manifest.empty())
    for (const auto& e : read_manifest(a.manifest).entries) labels[e.id] = e.label;
  write_text_atomic(a.out, tdamap::to_graphml(g.best, labels.empty() ? nullptr : &labels));
  if (!a.assignments.empty()) write_text_atomic(a.assignments, tdamap::assignments_csv(g.best.ids, g.best.assignments));
  if (!a.grid.empty()) {
    std::string csv = format_csv_row({"beta", "metric", "score", "db", "n_clusters", "noise_fraction"});
    for (const auto& e : g.table) {
      char b[4][40];
      std::snprintf(b[0], 40, "%.17g", e.beta);
      std::snprintf(b[1], 40, "%.17g", e.score);
      std::snprintf(b[2], 40, "%.17g", e.db);
      std::snprintf(b[3], 40, "%.17g", e.noise_fraction);
      csv += format_csv_row({b[0], tdamap::to_string(e.metric), b[1], b[2], std::to_string(e.n_clusters), b[3]});
    }
    write_text_atomic(a.grid, csv);
  }
  const auto& best = g.table[g.best_index];
  spdlog::info("map: selected beta {} {}", best.beta, tdamap::to_string(best.metric));
  emit({{"stage", "map"}, {"event", "done"}, {"beta", best.beta}, {"metric", tdamap::to_string(best.metric)}});
}

struct EvalArgs {
  std::string assignments, manifest, out, emb, metric = "euclidean", histogram, merge;
  double threshold = 0.10;
};

void cmd_eval(const EvalArgs& a) {
  const auto text = read_file(a.assignments);
  const auto [ids, assign] = tdamap::parse_assignments_csv(std::string(text.begin(), text.end()));
  std::map<std::string, std::string> labels;
  for (const auto& e : read_manifest(a.manifest).entries) labels[e.id] = e.label.empty() ? "unlabelled" : e.label;
  double db = std::numeric_limits<double>::infinity();
  if (!a.emb.empty()) {
    const auto emb = load_matrix(a.emb);
    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < emb.rows(); ++r) index[emb.ids[r]] = r;
    std::vector<int> rows_assign(emb.rows(), evalrep::kNoise);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto it = index.find(ids[i]);
      if (it == index.end()) throw ValidationError("embedding has no row for " + ids[i]);
      rows_assign[it->second] = assign[i];
    }
    db = tdamap::davies_bouldin(emb, rows_assign, tdamap::metric_from_string(a.metric));
  }
  auto report = evalrep::make_report(ids, assign, labels, db, "{}", a.threshold);
  if (!a.merge.empty()) {
    std::map<std::string, std::string> merge;
    for (const auto& pair : split_list<std::string>(a.merge, [](const std::string& s) { return s; })) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos) throw ValidationError("--merge expects FROM=TO pairs");
      merge[pair.substr(0, eq)] = pair.substr(eq + 1);
    }
    std::vector<std::string> merged;
    for (const auto& id : ids) {
      const auto& l = labels.at(id);
      merged.push_back(merge.count(l) ? merge.at(l) : l);
    }
    report.metrics.ari = evalrep::ari_excluding_noise(assign, evalrep::encode_labels(merged));
  }
  write_text_atomic(a.out, evalrep::report_json(report));
  if (!a.histogram.empty()) {
    const auto tab = evalrep::crosstab(ids, assign, labels);
    write_text_atomic(a.histogram + ".csv", evalrep::histogram_csv(tab));
    write_text_atomic(a.histogram + ".svg", evalrep::histogram_svg(tab, evalrep::name_clusters(tab, a.threshold)));
  }
  const auto& m = report.metrics;
  spdlog::info("eval: clusters {} purity {:.3f} ari {:.3f} noise {:.3f} largest {:.3f}", m.n_clusters, m.purity, m.ari,
               m.noise_fraction, m.largest_cluster_fraction);
}

struct RunArgs {
  std::string config, preset, workdir;
};

void cmd_run(const RunArgs& a) {
  if (a.config.empty() == a.preset.empty()) throw ValidationError("give exactly one of --config or --preset");
  const auto cfg = a.config.empty() ? pipeline::preset(a.preset) : pipeline::load_config(a.config);
  const auto res = pipeline::run_pipeline(cfg, a.workdir, progress_fn());
  const auto& m = res.report.metrics;
  spdlog::info("run: clusters {} purity {:.3f} ari {:.3f} noise {:.3f}; report {}", m.n_clusters, m.purity, m.ari,
               m.noise_fraction, res.report_path.string());
  emit({{"stage", "run"}, {"event", "done"}, {"report", res.report_path.string()}});
}

struct PretrainArgs {
  std::string config, preset, out, workdir;
};

void cmd_pretrain(const PretrainArgs& a) {
  if (a.config.empty() == a.preset.empty()) throw ValidationError("give exactly one of --config or --preset");
  const auto cfg = a.config.empty() ? pipeline::pretrain_preset(a.preset) : pipeline::load_pretrain_config(a.config);
  const fs::path work = a.workdir.empty() ? fs::path(a.out + ".work") : fs::path(a.workdir);
  const auto ckpt = pipeline::pretrain_foundational(cfg, work, progress_fn());
  sslnet::save_checkpoint(a.out, ckpt);
  spdlog::info("pretrain: wrote {}", a.out);
  emit({{"stage", "pretrain"}, {"event", "done"}, {"checkpoint", a.out}});
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = std::make_shared<spdlog::logger>("wafertopo", std::make_shared<spdlog::sinks::stderr_sink_mt>());
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"wafertopo: unsupervised wafer-map clustering with persistent homology and contrastive embeddings"};
  app.require_subcommand(1);
  app.add_flag("--progress", g_progress, "JSON-lines progress on stdout");
  std::string level = "info";
  app.add_option("--log-level", level, "trace|debug|info|warn|error|off")->capture_default_str();

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic dataset");
  g->add_option("--kind", gen.kind, "spvd|swed")->required();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--out", gen.out)->required();
  g->add_option("--count", gen.count, "spvd image count")->capture_default_str();
  g->add_option("--per-class", gen.per_class, "swed images per class")->capture_default_str();

  IngestArgs ing;
  auto* i = app.add_subcommand("ingest", "decode a manifest into a corpus cache");
  i->add_option("--manifest", ing.manifest)->required();
  i->add_option("--size", ing.size, "WxH")->capture_default_str();
  i->add_option("--resize", ing.resize, "bilinear|nearest")->capture_default_str();
  i->add_option("--out", ing.out)->required();

  PersistArgs per;
  auto* p = app.add_subcommand("persist", "persistence diagrams and TDA feature vectors");
  p->add_option("--corpus", per.corpus)->required();
  p->add_option("--mode", per.mode, "sublevel|distance")->capture_default_str();
  p->add_option("--scheme", per.scheme, "landscape|pimage")->capture_default_str();
  p->add_option("--out", per.out, "output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "contrastive training");
  t->add_option("--corpus", tr.corpus)->required();
  t->add_option("--tda", tr.tda, "features.wte from persist (omit for image-only)");
  t->add_option("--config", tr.config, "pipeline config; its train section is used (default preset table5)");
  t->add_option("--out", tr.out)->required();

  EmbedArgs em;
  auto* e = app.add_subcommand("embed", "embed a corpus with a checkpoint");
  e->add_option("--ckpt", em.ckpt)->required();
  e->add_option("--corpus", em.corpus)->required();
  e->add_option("--tda", em.tda, "features.wte (default: recompute with the checkpoint's parameters)");
  e->add_option("--source", em.source, "head|backbone")->capture_default_str();
  e->add_option("--out", em.out)->required();

  DistillArgs di;
  auto* d = app.add_subcommand("distill", "train a small student on teacher embeddings");
  d->add_option("--teacher", di.teacher)->required();
  d->add_option("--corpus", di.corpus)->required();
  d->add_option("--tda", di.tda);
  d->add_option("--config", di.config, "pipeline config; train.epochs etc. are used");
  d->add_option("--out", di.out)->required();

  MapArgs ma;
  auto* m = app.add_subcommand("map", "TDA map grid search and clustering");
  m->add_option("--emb", ma.emb)->required();
  m->add_option("--beta", ma.betas, "comma list")->capture_default_str();
  m->add_option("--metric", ma.metrics, "comma list")->capture_default_str();
  m->add_option("--lens-bins", ma.lens_bins)->capture_default_str();
  m->add_option("--overlap", ma.overlap)->capture_default_str();
  m->add_option("--min-node-size", ma.min_node_size)->capture_default_str();
  m->add_option("--min-cluster-fraction", ma.min_cluster_fraction)->capture_default_str();
  m->add_option("--manifest", ma.manifest, "labels for the GraphML node attributes");
  m->add_option("--out", ma.out, "map.graphml")->required();
  m->add_option("--assignments", ma.assignments, "id,cluster CSV");
  m->add_option("--grid", ma.grid, "grid table CSV");

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "cluster report against manifest labels");
  v->add_option("--assignments", ev.assignments)->required();
  v->add_option("--manifest", ev.manifest)->required();
  v->add_option("--out", ev.out)->required();
  v->add_option("--emb", ev.emb, "embeddings for the Davies-Bouldin score");
  v->add_option("--metric", ev.metric, "metric for the Davies-Bouldin score")->capture_default_str();
  v->add_option("--threshold", ev.threshold, "cluster naming share")->capture_default_str();
  v->add_option("--merge", ev.merge, "label merges for ARI, e.g. Loc=Edge-Loc");
  v->add_option("--histogram", ev.histogram, "write PREFIX.csv and PREFIX.svg");

  RunArgs ru;
  auto* r = app.add_subcommand("run", "full pipeline with stage caching");
  r->add_option("--config", ru.config);
  r->add_option("--preset", ru.preset, "table2|table3|table4|table5|swed-small");
  r->add_option("--workdir", ru.workdir)->required();

  PretrainArgs pr;
  auto* f = app.add_subcommand("pretrain", "foundational checkpoint on the combined synthetic corpus");
  f->add_option("--config", pr.config);
  f->add_option("--preset", pr.preset, "foundational");
  f->add_option("--out", pr.out)->required();
  f->add_option("--workdir", pr.workdir, "stage cache (default OUT.work)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(level));

  try {
    if (g->parsed()) cmd_gen(gen);
    if (i->parsed()) cmd_ingest(ing);
    if (p->parsed()) cmd_persist(per);
    if (t->parsed()) cmd_train(tr);
    if (e->parsed()) cmd_embed(em);
    if (d->parsed()) cmd_distill(di);
    if (m->parsed()) cmd_map(ma);
    if (v->parsed()) cmd_eval(ev);
    if (r->parsed()) cmd_run(ru);
    if (f->parsed()) cmd_pretrain(pr);
  } catch (const ValidationError& ex) {
    spdlog::error("{}", ex.what());
    emit({{"event", "error"}, {"kind", "validation"}, {"message", ex.what()}});
    return 2;
  } catch (const pipeline::StageError& ex) {
    spdlog::error("{}", ex.what());
    emit({{"event", "error"}, {"kind", "stage"}, {"stage", ex.stage()}, {"message", ex.what()}});
    return 3;
  } catch (const std::exception& ex) {
    spdlog::error("{}", ex.what());
    emit({{"event", "error"}, {"kind", "stage"}, {"message", ex.what()}});
    return 3;
  }
  return 0;
}
