#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wafertopo/image.hpp"
#include "wafertopo/matrix.hpp"
#include "wafertopo/rng.hpp"

namespace wafertopo {
namespace ingest {
struct Corpus;
}
namespace vectorize {
struct FeatureSet;
}

namespace sslnet {

// ---------------------------------------------------------------- augment

struct CropSpec {
  double min_area_fraction = 0.64;
};

struct AugmentationSpec {
  bool h_flip = false;
  bool v_flip = false;
  double rotation_lo = 0.0;  // degrees
  double rotation_hi = 0.0;
  std::optional<CropSpec> crop;
  // Value written where rotation uncovers the canvas. NaN means "use the
  // image's top-left pixel", which is background for wafer maps.
  double fill_value = std::nan("");

  void validate() const;
  bool any() const { return h_flip || v_flip || rotation_lo != 0.0 || rotation_hi != 0.0 || crop.has_value(); }
};

/// h-flip (p=0.5), v-flip (p=0.5), rotation about the centre (nearest, fill
/// outside), then a random crop resized back. Output size equals input size.
GrayImage augment(const GrayImage& image, const AugmentationSpec& spec, Rng& rng);

/// Exact rotation helper; also used by tests.
GrayImage rotate_nearest(const GrayImage& image, double degrees, float fill);

// ---------------------------------------------------------------- encoder

struct EncoderArch {
  int width = 32;
  int height = 32;
  std::array<int, 3> filters{8, 16, 32};
  int tda_dim = 0;
  int hidden = 64;
  int out_dim = 32;

  void validate() const;
  int visual_dim() const { return filters[2]; }
  int fused_dim() const { return filters[2] + tda_dim; }
  static EncoderArch student_of(const EncoderArch& teacher);
  bool operator==(const EncoderArch&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named tensor table of an architecture; parameters live in one flat vector.
std::vector<TensorInfo> tensor_layout(const EncoderArch& arch);
std::size_t parameter_count(const EncoderArch& arch);

/// Everything the backward pass needs from one forward pass.
template <typename T>
struct ForwardCache {
  std::array<std::vector<T>, 3> input;     // stage inputs (CHW)
  std::array<std::vector<T>, 3> cols;      // im2col of stage inputs
  std::array<std::vector<T>, 3> pre;       // conv outputs before ReLU
  std::array<std::vector<T>, 3> act;       // after ReLU
  std::array<std::vector<std::uint32_t>, 2> argmax;
  std::vector<T> fused;   // pooled visual feature ++ tda
  std::vector<T> h_pre, h_act;
  std::vector<T> y;       // head output before normalization
  std::vector<T> z;       // unit embedding
  T norm = 0;
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderArch& arch);

  const EncoderArch& arch() const { return arch_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  /// He-normal weights (std sqrt(2 / fan_in)), zero biases.
  void init_he(std::uint64_t seed);

  /// image has width*height values; tda has tda_dim values (may be null when tda_dim == 0).
  void forward(const T* image, const T* tda, ForwardCache<T>& cache) const;
  /// Accumulates dL/dparams into grad given dL/dz.
  void backward(const ForwardCache<T>& cache, const T* dz, T* grad) const;
  /// Same as backward but starting from dL/dy (before normalization).
  void backward_from_y(const ForwardCache<T>& cache, const T* dy, T* grad) const;

  T* tensor(const std::string& name);
  const T* tensor(const std::string& name) const;

 private:
  EncoderArch arch_;
  std::vector<TensorInfo> layout_;
  std::vector<T> params_;
  std::array<std::size_t, 3> conv_w_{}, conv_b_{};
  std::size_t fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0;
};

extern template class Encoder<float>;
extern template class Encoder<double>;

// ---------------------------------------------------------------- loss

template <typename T>
struct LossResult {
  T loss = 0;
  std::vector<T> grad;  // same shape as the input rows
};

/// NT-Xent over 2N unit rows ordered (a_0, b_0, a_1, b_1, ...). Throws
/// ValidationError if a row norm differs from 1 by more than 1e-4.
template <typename T>
LossResult<T> ntxent(const std::vector<T>& rows, std::size_t dim, double tau);

extern template LossResult<float> ntxent<float>(const std::vector<float>&, std::size_t, double);
extern template LossResult<double> ntxent<double>(const std::vector<double>&, std::size_t, double);

// ---------------------------------------------------------------- training

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;  // views per batch (2 per item)
  double learning_rate = 0.12;
  double final_lr_fraction = 0.1;  // cosine decay target as a fraction of learning_rate
  double temperature = 0.5;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double momentum = 0.9;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
  double tda_noise = 0.0;  // std of Gaussian noise added to the TDA vector per view
  std::uint64_t seed = 42;

  void validate() const;
};

/// Flat-parameter optimizer with a cosine learning-rate schedule.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t n_params, std::size_t total_steps);
  double lr_at(std::size_t step) const;
  void step(std::vector<float>& params, const std::vector<float>& grad);
  std::size_t steps_taken() const { return t_; }

 private:
  TrainConfig cfg_;
  std::size_t total_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

enum class EmbedSource { Head, Backbone };
std::string to_string(EmbedSource s);
EmbedSource embed_source_from_string(const std::string& s);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  EncoderArch arch;
  std::vector<float> params;
  std::string echo_json = "{}";  // augmentation, tda, train config, provenance
  std::vector<double> loss_curve;

  Encoder<float> encoder() const;
  bool operator==(const Checkpoint&) const = default;
};

struct ProgressEvent {
  std::string stage;
  int epoch = 0;
  int epochs = 0;
  double loss = 0.0;
};
using ProgressFn = std::function<void(const ProgressEvent&)>;

struct TrainOptions {
  EncoderArch arch;  // width/height/tda_dim are overwritten from the inputs
  AugmentationSpec augmentation;
  TrainConfig config;
  std::string provenance_json = "{}";  // copied into the checkpoint echo
  ProgressFn progress;
};

/// Contrastive training of the fused encoder. Deterministic for a given seed
/// regardless of the worker count.
Checkpoint train_ssl(const ingest::Corpus& corpus, const vectorize::FeatureSet& tda, const TrainOptions& opt);

/// Augmentation-free forward pass per item. Throws ValidationError when the
/// image size, TDA width or TDA scheme does not match the checkpoint.
LabeledMatrix embed_corpus(const Checkpoint& ckpt, const ingest::Corpus& corpus, const vectorize::FeatureSet& tda,
                           EmbedSource source = EmbedSource::Head);

/// The TDA featurization the checkpoint was trained with (range, mode and
/// standardization), if it recorded one. Use it with vectorize::featurize_with
/// to embed a new corpus without fine-tuning.
std::optional<vectorize::FeatureSet> reference_features(const Checkpoint& ckpt);

struct DistillOptions {
  TrainConfig config;
  std::optional<EncoderArch> student;  // default: filters 4/8/16, out_dim from the teacher rows
  std::optional<Checkpoint> init;      // start from these weights instead of He init
  ProgressFn progress;
};

/// Trains a student to minimise mean(1 - cos(student(x), teacher(x))).
Checkpoint distill(const LabeledMatrix& teacher, const ingest::Corpus& corpus, const vectorize::FeatureSet& tda,
                   const DistillOptions& opt);

/// Mean (1 - cos) between checkpoint embeddings and the teacher rows.
double distill_loss(const Checkpoint& student, const LabeledMatrix& teacher, const ingest::Corpus& corpus,
                    const vectorize::FeatureSet& tda);

// Magic "WTK1": u32 version, embedded JSON (arch + echo + loss curve), then a
// tensor table of (name, rank, dims, f32 data).
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& p, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& p);

}  // namespace sslnet
}  // namespace wafertopo
