#include <set>

#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/io.hpp"
#include "wafertopo/pipeline.hpp"

using namespace wafertopo;
using namespace wafertopo::pipeline;
using json = nlohmann::json;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

PipelineConfig tiny_swed(int per_class, int epochs) {
  PipelineConfig c = preset("swed-small");
  c.dataset.per_class = per_class;
  c.dataset.seed = 11;
  c.train.config.epochs = epochs;
  c.train.config.batch_size = 64;
  return c;
}

}  // namespace

TEST_CASE("presets mirror the experiment tables") {
  for (const auto& n : preset_names()) {
    const auto c = preset(n);
    CHECK(c.train.config.learning_rate == 0.12);
    if (c.dataset.kind == "manifest") {
      CHECK_THROWS_AS(c.validate(), ValidationError);  // needs a user manifest
      continue;
    }
    c.validate();
    // canonical dump parses back to the same dump
    CHECK(config_json(parse_config(config_json(c))) == config_json(c));
  }
  const auto t5 = preset("table5");
  CHECK(t5.dataset.kind == "swed");
  CHECK(t5.dataset.per_class == 200);
  CHECK(t5.train.config.epochs == 100);
  CHECK(t5.train.config.batch_size == 256);
  CHECK(t5.train.augmentation.crop.has_value());
  CHECK(t5.train.augmentation.rotation_lo == 0.0);
  CHECK(t5.train.augmentation.rotation_hi == 45.0);
  CHECK(t5.map.betas == std::vector<double>{3.5, 10.0, 20.0});
  CHECK(t5.map.metrics.size() == 2);

  const auto t2 = preset("table2");
  CHECK(t2.train.config.epochs == 600);
  CHECK(t2.train.config.batch_size == 512);
  CHECK(t2.train.augmentation.h_flip);
  CHECK(t2.ingest.size.width == 35);

  const auto t3 = preset("table3");
  CHECK(t3.train.config.epochs == 1000);
  CHECK(t3.train.augmentation.rotation_hi == 180.0);

  const auto small = preset("swed-small");
  CHECK(small.dataset.per_class == 50);
  CHECK(small.train.config.epochs == 30);

  CHECK_THROWS_AS(preset("table9"), ValidationError);
}

TEST_CASE("config parsing is strict") {
  CHECK(error_of(R"({"preset":"table5","tarin":{}})").find("'tarin'") != std::string::npos);
  CHECK(error_of(R"({"train":{"augmentation":{"rotation_deg":[0,45],"bogus":1}}})").find("train.augmentation.bogus") !=
        std::string::npos);
  CHECK(error_of(R"({"map":{"metric":["manhattan"]}})") != "");
  CHECK(error_of(R"({"train":{"epochs":"ten"}})").find("train.epochs") != std::string::npos);
  CHECK(error_of(R"({"ingest":{"size":"32by32"}})") != "");
  CHECK(error_of(R"({"dataset":{"kind":"manifest"}})") != "");
  CHECK(error_of("[1,2]") != "");
  CHECK(error_of("{") != "");

  const auto c = parse_config(R"({"preset":"table5","train":{"epochs":7,"augmentation":{"fill_value":"corner"}},
    "map":{"beta":[2.5],"metric":["cosine"]},"eval":{"merge":{"Loc":"Edge-Loc"}}})");
  CHECK(c.train.config.epochs == 7);
  CHECK(c.train.config.batch_size == 256);  // kept from the preset
  CHECK(c.map.betas == std::vector<double>{2.5});
  CHECK(c.map.metrics == std::vector<tdamap::Metric>{tdamap::Metric::Cosine});
  CHECK(c.eval.merge.at("Loc") == "Edge-Loc");

  const auto rel = parse_config(R"({"dataset":{"kind":"manifest","manifest":"m.csv"}})", "/data/x");
  CHECK(rel.dataset.manifest == "/data/x/m.csv");
}

TEST_CASE("pretraining config") {
  const auto f = pretrain_preset("foundational");
  f.validate();
  REQUIRE(f.spvd.has_value());
  REQUIRE(f.swed.has_value());
  CHECK(f.spvd->image_count + 9 * f.swed->per_class_count + f.variants.count == 2000);
  CHECK(f.train.config.epochs == 50);

  CHECK_THROWS_AS(parse_pretrain_config(R"({"train":{"epochs":2}})"), ValidationError);
  CHECK_THROWS_AS(parse_pretrain_config(R"({"generation":{}})"), ValidationError);
  CHECK_THROWS_AS(parse_pretrain_config(R"({"generation":{"swed":{"per_class":1}},"tda":{"mode":"distance"}})"),
                  ValidationError);
  const auto p = parse_pretrain_config(R"({"generation":{"swed":{"per_class":3,"seed":9}}})");
  CHECK(p.swed->per_class_count == 3);
  CHECK(!p.spvd.has_value());
  CHECK(parse_pretrain_config(pretrain_config_json(f)).variants.count == f.variants.count);
}

TEST_CASE("stage failures carry the stage name") {
  const auto dir = testutil::scratch_dir("pipe_err");
  PipelineConfig c = tiny_swed(2, 1);
  c.dataset.kind = "manifest";
  c.dataset.manifest = (dir / "missing.csv").string();
  try {
    run_pipeline(c, dir / "w");
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "dataset");
    CHECK(std::string(e.what()).rfind("stage dataset:", 0) == 0);
  }
  c = tiny_swed(2, 1);
  c.map.betas.clear();
  CHECK_THROWS_AS(run_pipeline(c, dir / "w"), ValidationError);
}

TEST_CASE("swed-small run, cache hits and byte-identical rerun") {
  const auto dir = testutil::scratch_dir("pipe_small");
  const auto cfg = preset("swed-small");
  std::vector<std::string> events;
  const auto r1 = run_pipeline(cfg, dir, [&](const Progress& p) {
    if (p.event != "epoch") events.push_back(p.stage + ":" + p.event);
  });
  CHECK(r1.report.metrics.n_clusters >= 2);
  CHECK(r1.ids.size() == 450);
  for (const auto& s : r1.stages) CHECK_MESSAGE(!s.cache_hit, s.name);
  for (const char* f : {"report.json", "histogram.csv", "histogram.svg", "map.graphml", "assignments.csv", "grid.csv"})
    CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
  const auto report1 = read_file(dir / "report.json");
  evalrep::validate_report_json(std::string(report1.begin(), report1.end()));
  const json cfg_echo = json::parse(report1)["config"];
  CHECK(cfg_echo["grid"].size() == 6);
  CHECK(cfg_echo["pipeline"]["preset"] == "swed-small");

  const auto r2 = run_pipeline(cfg, dir);
  for (const auto& s : r2.stages) CHECK_MESSAGE(s.cache_hit, s.name);
  CHECK(read_file(dir / "report.json") == report1);
  CHECK(r2.assignments == r1.assignments);

  // a corrupted cache entry is detected and rebuilt to the same bytes
  {
    auto bytes = read_file(dir / "cache" / "embed" / "embeddings.wte");
    bytes.back() ^= 1;
    write_file_atomic(dir / "cache" / "embed" / "embeddings.wte", bytes);
  }
  const auto r3 = run_pipeline(cfg, dir);
  std::set<std::string> rebuilt;
  for (const auto& s : r3.stages)
    if (!s.cache_hit) rebuilt.insert(s.name);
  CHECK(rebuilt == std::set<std::string>{"embed"});
  CHECK(read_file(dir / "report.json") == report1);

  // changing the map section leaves the earlier stages cached
  auto cfg2 = cfg;
  cfg2.map.betas = {10.0};
  const auto r4 = run_pipeline(cfg2, dir);
  for (const auto& s : r4.stages) CHECK_MESSAGE(s.cache_hit == (s.name != "map"), s.name);
  CHECK(r4.grid.table.size() == 2);
}

TEST_CASE("pretraining then a zero-shot run from the frozen checkpoint") {
  const auto dir = testutil::scratch_dir("pipe_zero");
  PretrainConfig p;
  p.spvd = synth::SpvdConfig{};
  p.spvd->image_count = 6;
  p.spvd->seed = 3;
  p.swed = synth::SwedConfig{};
  p.swed->per_class_count = 1;
  p.variants.count = 4;
  p.train.config.epochs = 2;
  p.train.config.batch_size = 32;
  const auto ckpt = pretrain_foundational(p, dir / "pre");
  const json echo = json::parse(ckpt.echo_json);
  CHECK(echo["provenance"]["foundational"] == true);
  CHECK(echo["provenance"]["corpus_size"] == 19);
  CHECK(ckpt.arch.tda_dim > 0);
  REQUIRE(sslnet::reference_features(ckpt).has_value());
  CHECK(ckpt.loss_curve.size() == 2);
  sslnet::save_checkpoint(dir / "f.wtk", ckpt);

  // pretraining again reuses every stage
  CHECK(sslnet::encode_checkpoint(pretrain_foundational(p, dir / "pre")) == sslnet::encode_checkpoint(ckpt));

  PipelineConfig z = tiny_swed(2, 1);
  z.dataset.kind = "spvd";
  z.dataset.count = 30;
  z.ingest.size = {32, 32};
  z.train.checkpoint = (dir / "f.wtk").string();
  const auto r = run_pipeline(z, dir / "zs");
  CHECK(r.ids.size() == 30);
  std::set<std::string> labels(r.labels.begin(), r.labels.end());
  CHECK(labels == std::set<std::string>{"good", "faulty"});
  {
    // same checkpoint bytes at another path, fresh workdir: same report
    std::filesystem::copy_file(dir / "f.wtk", dir / "copy.wtk", std::filesystem::copy_options::overwrite_existing);
    auto moved = z;
    moved.train.checkpoint = (dir / "copy.wtk").string();
    const auto r2 = run_pipeline(moved, dir / "zs_moved");
    CHECK(read_file(r2.report_path) == read_file(r.report_path));
    const json echo_z = json::parse(read_file(r.report_path))["config"];
    CHECK(echo_z.contains("frozen_checkpoint"));
    CHECK(!echo_z["pipeline"]["train"].contains("checkpoint"));
  }
  const auto sizes_mismatch = [&] {
    auto bad = z;
    bad.ingest.size = {24, 24};
    run_pipeline(bad, dir / "zs2");
  };
  CHECK_THROWS_AS(sizes_mismatch(), StageError);
}
