#pragma once

// End-to-end orchestration: generate or read a dataset, ingest, persistent
// homology features, contrastive training (or a frozen checkpoint), embedding,
// map grid search, clustering and the report. Every stage output is cached
// under the work directory keyed by a hash of the stage inputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wafertopo/error.hpp"
#include "wafertopo/evalrep.hpp"
#include "wafertopo/ingest.hpp"
#include "wafertopo/persist.hpp"
#include "wafertopo/sslnet.hpp"
#include "wafertopo/synthgen.hpp"
#include "wafertopo/tdamap.hpp"
#include "wafertopo/vectorize.hpp"

namespace wafertopo::pipeline {

/// A failure inside a running stage; what() starts with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage " + stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct DatasetSection {
  std::string kind = "swed";  // swed | spvd | manifest
  std::uint64_t seed = 42;
  int per_class = 200;          // swed
  int count = 200;              // spvd
  double faulty_fraction = 0.5; // spvd
  std::string manifest;         // manifest: CSV path, resolved against the config directory

  void validate() const;
};

struct IngestSection {
  ingest::Size size{32, 32};
  ingest::ResizeMode resize = ingest::ResizeMode::Bilinear;

  void validate() const;
};

struct TdaSection {
  bool enabled = true;
  std::string mode = "auto";  // sublevel | distance | auto (distance when every item has a grid)
  vectorize::FeatureParams params;

  void validate() const;
};

struct TrainSection {
  sslnet::TrainConfig config;
  sslnet::AugmentationSpec augmentation;
  std::array<int, 3> filters{8, 16, 32};
  int hidden = 64;
  int out_dim = 32;
  sslnet::EmbedSource embed_source = sslnet::EmbedSource::Head;
  // Frozen checkpoint for zero-shot runs: training is skipped and the TDA
  // featurization recorded in the checkpoint is reused.
  std::string checkpoint;

  void validate() const;
};

struct MapSection {
  std::vector<double> betas{3.5, 10.0, 20.0};
  std::vector<tdamap::Metric> metrics{tdamap::Metric::Euclidean, tdamap::Metric::Cosine};
  tdamap::MapConfig base;

  void validate() const;
};

struct EvalSection {
  double name_threshold = 0.10;
  // Label merges applied before the ARI (e.g. Loc -> Edge-Loc); names and
  // histograms keep the original labels.
  std::map<std::string, std::string> merge;

  void validate() const;
};

struct PipelineConfig {
  std::string preset;  // informational
  DatasetSection dataset;
  IngestSection ingest;
  TdaSection tda;
  TrainSection train;
  MapSection map;
  EvalSection eval;

  void validate() const;
};

/// Named presets: table2, table3, table4, table5, swed-small.
PipelineConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Strict JSON reader. An optional "preset" key selects the base values and
/// the sections override them field by field. Unknown keys throw
/// ValidationError naming the key path. Relative paths are resolved against
/// base_dir.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
/// Canonical JSON of the fully resolved config.
std::string config_json(const PipelineConfig& c);

struct Progress {
  std::string stage;
  std::string event;  // start | cached | done | epoch
  int epoch = 0;
  int epochs = 0;
  double loss = 0.0;
  std::string detail;
};
using ProgressFn = std::function<void(const Progress&)>;

struct StageRecord {
  std::string name;
  std::string key;
  bool cache_hit = false;
};

struct RunResult {
  evalrep::Report report;
  std::vector<std::string> ids;
  std::vector<int> assignments;
  std::vector<std::string> labels;  // ground truth per item (empty string if unlabelled)
  tdamap::GridResult grid;
  std::vector<StageRecord> stages;
  std::filesystem::path report_path;
  std::filesystem::path checkpoint_path;
};

/// Runs every stage under workdir. Outputs: report.json, histogram.csv,
/// histogram.svg, map.graphml, assignments.csv, grid.csv, plus the stage cache.
RunResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& workdir, const ProgressFn& progress = {});

// ------------------------------------------------------------ pretraining

struct VariantSection {
  int count = 0;  // half SWED-like grids, half SPVD-like images
  std::uint64_t seed = 7;
};

struct PretrainConfig {
  std::optional<synth::SpvdConfig> spvd;
  std::optional<synth::SwedConfig> swed;
  VariantSection variants;
  IngestSection ingest;
  TdaSection tda;
  TrainSection train;

  void validate() const;
};

/// Preset "foundational": 400 SPVD + 900 SWED + 700 variants, 50 epochs.
PretrainConfig pretrain_preset(const std::string& name);
PretrainConfig parse_pretrain_config(const std::string& text);
PretrainConfig load_pretrain_config(const std::filesystem::path& path);
std::string pretrain_config_json(const PretrainConfig& c);

/// Trains one checkpoint on the union of the generated corpora. The echo is
/// tagged foundational and records the TDA featurization for zero-shot use.
sslnet::Checkpoint pretrain_foundational(const PretrainConfig& config, const std::filesystem::path& workdir,
                                         const ProgressFn& progress = {});

}  // namespace wafertopo::pipeline
