#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "echo.hpp"
#include "wafertopo/error.hpp"
#include "wafertopo/ingest.hpp"
#include "wafertopo/nn.hpp"
#include "wafertopo/parallel.hpp"
#include "wafertopo/vectorize.hpp"

namespace wafertopo::sslnet {

using detail::json;

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
  if (batch_size < 2) throw ValidationError("train: batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be positive");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) throw ValidationError("train: final_lr_fraction must be in [0, 1]");
  if (!(temperature > 0.0)) throw ValidationError("train: temperature must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("train: momentum must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
    throw ValidationError("train: bad adam parameters");
  if (!(weight_decay >= 0.0)) throw ValidationError("train: weight_decay must be >= 0");
  if (!(tda_noise >= 0.0)) throw ValidationError("train: tda_noise must be >= 0");
}

std::string to_string(EmbedSource s) { return s == EmbedSource::Head ? "head" : "backbone"; }

EmbedSource embed_source_from_string(const std::string& s) {
  if (s == "head") return EmbedSource::Head;
  if (s == "backbone") return EmbedSource::Backbone;
  throw ValidationError("unknown embedding source '" + s + "' (expected head|backbone)");
}

Optimizer::Optimizer(const TrainConfig& cfg, std::size_t n_params, std::size_t total_steps)
    : cfg_(cfg), total_(total_steps), m_(n_params, 0.0) {
  if (cfg.optimizer == OptimizerKind::Adam) v_.assign(n_params, 0.0);
}

double Optimizer::lr_at(std::size_t step) const {
  if (total_ == 0) return cfg_.learning_rate;
  const double lo = cfg_.final_lr_fraction * cfg_.learning_rate;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_));
  return lo + 0.5 * (cfg_.learning_rate - lo) * (1.0 + std::cos(std::numbers::pi * t));
}

void Optimizer::step(std::vector<float>& params, const std::vector<float>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ValidationError("optimizer: size mismatch");
  const double lr = lr_at(t_);
  ++t_;
  if (cfg_.optimizer == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i] + cfg_.weight_decay * params[i];
      m_[i] = cfg_.momentum * m_[i] + g;
      params[i] = static_cast<float>(params[i] - lr * m_[i]);
    }
    return;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + cfg_.weight_decay * params[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    params[i] = static_cast<float>(params[i] - lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps));
  }
}

namespace {

constexpr std::size_t kChunk = 8;

// Row pointer into the TDA matrix for every corpus item (null when there is no TDA block).
std::vector<const float*> align_tda(const ingest::Corpus& corpus, const vectorize::FeatureSet& tda, const char* who) {
  std::vector<const float*> out(corpus.size(), nullptr);
  if (tda.matrix.cols == 0) return out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < tda.matrix.rows(); ++i) index.emplace(tda.matrix.ids[i], i);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto it = index.find(corpus.items[i].id);
    if (it == index.end()) throw ValidationError(std::string(who) + ": no TDA features for item " + corpus.items[i].id);
    out[i] = tda.matrix.row(it->second);
  }
  return out;
}

json tda_echo(const vectorize::FeatureSet& tda) {
  if (tda.matrix.cols == 0) return {{"scheme", "none"}, {"length", 0}};
  return {{"scheme", vectorize::to_string(tda.params.scheme)},
          {"mode", persist::to_string(tda.mode)},
          {"length", tda.matrix.cols},
          {"features", json::parse(vectorize::features_json(tda))}};
}

void check_images(const ingest::Corpus& corpus, const EncoderArch& a, const char* who) {
  for (const auto& it : corpus.items)
    if (it.image.width != a.width || it.image.height != a.height)
      throw ValidationError(std::string(who) + ": item " + it.id + " is " + std::to_string(it.image.width) + "x" +
                            std::to_string(it.image.height) + ", expected " + std::to_string(a.width) + "x" +
                            std::to_string(a.height));
}

// Balanced split of n items into ceil(n / per) batches; no batch is smaller
// than floor(n / batches), so a batch never degenerates to one item when per >= 2.
std::vector<std::size_t> batch_bounds(std::size_t n, std::size_t per) {
  const std::size_t nb = (n + per - 1) / per;
  std::vector<std::size_t> b(nb + 1);
  for (std::size_t i = 0; i <= nb; ++i) b[i] = i * n / nb;
  return b;
}

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  Rng rng(seed, 0x5348);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

// Accumulates per-view gradients in fixed chunks, then sums the chunks in
// order, so the result does not depend on the worker count.
void reduce_gradients(const Encoder<float>& enc, const std::vector<ForwardCache<float>>& caches, std::size_t count,
                      const std::vector<float>& dz, std::vector<std::vector<float>>& chunks,
                      std::vector<float>& grad) {
  const std::size_t nc = (count + kChunk - 1) / kChunk;
  const std::size_t d = static_cast<std::size_t>(enc.arch().out_dim);
  if (chunks.size() < nc) chunks.resize(nc);
  parallel_for(nc, [&](std::size_t c) {
    auto& g = chunks[c];
    g.assign(enc.size(), 0.0f);
    for (std::size_t v = c * kChunk; v < std::min(count, (c + 1) * kChunk); ++v)
      enc.backward(caches[v], dz.data() + v * d, g.data());
  });
  grad.assign(enc.size(), 0.0f);
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += chunks[c][i];
}

void check_finite(double loss, int epoch, std::size_t batch, const char* who) {
  if (!std::isfinite(loss))
    throw Error(std::string(who) + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
}

}  // namespace

Checkpoint train_ssl(const ingest::Corpus& corpus, const vectorize::FeatureSet& tda, const TrainOptions& opt) {
  if (corpus.empty()) throw ValidationError("train: corpus is empty");
  const TrainConfig& cfg = opt.config;
  cfg.validate();
  opt.augmentation.validate();
  EncoderArch arch = opt.arch;
  arch.width = corpus.target_size.width;
  arch.height = corpus.target_size.height;
  arch.tda_dim = static_cast<int>(tda.matrix.cols);
  arch.validate();
  check_images(corpus, arch, "train");
  const auto tda_rows = align_tda(corpus, tda, "train");

  Encoder<float> enc(arch);
  enc.init_he(cfg.seed);

  const std::size_t n = corpus.size();
  const std::size_t per = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size) / 2, n);
  const auto bounds = batch_bounds(n, per);
  const std::size_t nb = bounds.size() - 1;
  Optimizer optim(cfg, enc.size(), static_cast<std::size_t>(cfg.epochs) * nb);

  const std::size_t d = static_cast<std::size_t>(arch.out_dim);
  const std::size_t tdim = static_cast<std::size_t>(arch.tda_dim);
  std::vector<std::size_t> order(n);
  std::vector<ForwardCache<float>> caches(2 * per);
  std::vector<std::vector<float>> chunks;
  std::vector<double> z(2 * per * d);
  std::vector<float> dz, grad;
  std::vector<double> curve;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), 0x5348}));
    double epoch_loss = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t views = 2 * (bounds[b + 1] - bounds[b]);
      parallel_for(views, [&](std::size_t v) {
        const std::size_t item = order[bounds[b] + v / 2];
        Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), item, v % 2}), 0x4147);
        const GrayImage img = augment(corpus.items[item].image, opt.augmentation, rng);
        std::vector<float> t(tdim);
        for (std::size_t k = 0; k < tdim; ++k)
          t[k] = tda_rows[item][k] + static_cast<float>(cfg.tda_noise > 0.0 ? cfg.tda_noise * rng.normal() : 0.0);
        enc.forward(img.values.data(), t.data(), caches[v]);
        std::copy(caches[v].z.begin(), caches[v].z.end(), z.begin() + static_cast<std::ptrdiff_t>(v * d));
      });
      const auto res = ntxent<double>(std::vector<double>(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(views * d)),
                                      d, cfg.temperature);
      check_finite(res.loss, epoch, b, "train");
      dz.assign(res.grad.begin(), res.grad.end());
      reduce_gradients(enc, caches, views, dz, chunks, grad);
      optim.step(enc.params(), grad);
      epoch_loss += res.loss;
    }
    curve.push_back(epoch_loss / static_cast<double>(nb));
    if (opt.progress) opt.progress({"train", epoch + 1, cfg.epochs, curve.back()});
  }

  Checkpoint ck;
  ck.arch = arch;
  ck.params = enc.params();
  ck.loss_curve = std::move(curve);
  json echo;
  echo["kind"] = "ssl";
  echo["augmentation"] = detail::augmentation_to_json(opt.augmentation);
  echo["tda"] = tda_echo(tda);
  echo["train"] = detail::config_to_json(cfg);
  echo["provenance"] = json::parse(opt.provenance_json);
  ck.echo_json = echo.dump();
  return ck;
}

namespace {

void embed_into(const Encoder<float>& enc, const ingest::Corpus& corpus, const std::vector<const float*>& tda_rows,
                EmbedSource source, LabeledMatrix& out) {
  parallel_for(corpus.size(), [&](std::size_t i) {
    ForwardCache<float> c;
    enc.forward(corpus.items[i].image.values.data(), tda_rows[i], c);
    float* row = out.row(i);
    if (source == EmbedSource::Head) {
      std::copy(c.z.begin(), c.z.end(), row);
    } else {
      nn::l2_normalize_forward(c.fused.data(), static_cast<int>(c.fused.size()), row);
    }
  });
}

}  // namespace

std::optional<vectorize::FeatureSet> reference_features(const Checkpoint& ckpt) {
  const json echo = json::parse(ckpt.echo_json, nullptr, false);
  if (echo.is_discarded() || !echo.is_object() || !echo.contains("tda") || !echo["tda"].contains("features"))
    return std::nullopt;
  return vectorize::parse_features_json(echo["tda"]["features"].dump());
}

LabeledMatrix embed_corpus(const Checkpoint& ckpt, const ingest::Corpus& corpus, const vectorize::FeatureSet& tda,
                           EmbedSource source) {
  const EncoderArch& a = ckpt.arch;
  if (corpus.target_size.width != a.width || corpus.target_size.height != a.height)
    throw ValidationError("embed: corpus size " + std::to_string(corpus.target_size.width) + "x" +
                          std::to_string(corpus.target_size.height) + " does not match checkpoint " +
                          std::to_string(a.width) + "x" + std::to_string(a.height));
  if (static_cast<int>(tda.matrix.cols) != a.tda_dim)
    throw ValidationError("embed: TDA length " + std::to_string(tda.matrix.cols) + " does not match checkpoint " +
                          std::to_string(a.tda_dim));
  const json echo = json::parse(ckpt.echo_json, nullptr, false);
  if (!echo.is_discarded() && echo.is_object() && echo.contains("tda") && a.tda_dim > 0) {
    const json want = echo["tda"];
    const json have = tda_echo(tda);
    if (want.value("scheme", "") != have["scheme"].get<std::string>() || want.value("mode", "") != have["mode"].get<std::string>())
      throw ValidationError("embed: TDA scheme " + have["scheme"].get<std::string>() + "/" + have["mode"].get<std::string>() +
                            " does not match checkpoint " + want.value("scheme", "?") + "/" + want.value("mode", "?"));
  }
  check_images(corpus, a, "embed");
  const auto rows = align_tda(corpus, tda, "embed");
  const Encoder<float> enc = ckpt.encoder();
  LabeledMatrix out(corpus.ids(), source == EmbedSource::Head ? static_cast<std::size_t>(a.out_dim)
                                                              : static_cast<std::size_t>(a.fused_dim()));
  embed_into(enc, corpus, rows, source, out);
  return out;
}

namespace {

// Unit teacher row for every corpus item.
std::vector<std::vector<float>> align_teacher(const LabeledMatrix& teacher, const ingest::Corpus& corpus) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < teacher.rows(); ++i) index.emplace(teacher.ids[i], i);
  std::vector<std::vector<float>> out(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto it = index.find(corpus.items[i].id);
    if (it == index.end()) throw ValidationError("distill: teacher has no row for item " + corpus.items[i].id);
    out[i].resize(teacher.cols);
    nn::l2_normalize_forward(teacher.row(it->second), static_cast<int>(teacher.cols), out[i].data());
  }
  return out;
}

}  // namespace

Checkpoint distill(const LabeledMatrix& teacher, const ingest::Corpus& corpus, const vectorize::FeatureSet& tda,
                   const DistillOptions& opt) {
  if (corpus.empty()) throw ValidationError("distill: corpus is empty");
  if (teacher.cols == 0) throw ValidationError("distill: teacher embeddings are empty");
  const TrainConfig& cfg = opt.config;
  cfg.validate();
  EncoderArch arch;
  if (opt.init) {
    arch = opt.init->arch;
  } else if (opt.student) {
    arch = *opt.student;
  } else {
    arch.filters = {4, 8, 16};
    arch.out_dim = static_cast<int>(teacher.cols);
  }
  if (!opt.init) {
    arch.width = corpus.target_size.width;
    arch.height = corpus.target_size.height;
    arch.tda_dim = static_cast<int>(tda.matrix.cols);
  }
  arch.validate();
  if (arch.out_dim != static_cast<int>(teacher.cols))
    throw ValidationError("distill: student output " + std::to_string(arch.out_dim) + " does not match teacher width " +
                          std::to_string(teacher.cols));
  if (arch.tda_dim != static_cast<int>(tda.matrix.cols)) throw ValidationError("distill: TDA length does not match student");
  check_images(corpus, arch, "distill");
  const auto tda_rows = align_tda(corpus, tda, "distill");
  const auto targets = align_teacher(teacher, corpus);

  Encoder<float> enc(arch);
  if (opt.init)
    enc = opt.init->encoder();
  else
    enc.init_he(cfg.seed);

  const std::size_t n = corpus.size();
  const std::size_t per = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  const auto bounds = batch_bounds(n, per);
  const std::size_t nb = bounds.size() - 1;
  Optimizer optim(cfg, enc.size(), static_cast<std::size_t>(cfg.epochs) * nb);
  const std::size_t d = static_cast<std::size_t>(arch.out_dim);

  std::vector<std::size_t> order(n);
  std::vector<ForwardCache<float>> caches(per);
  std::vector<std::vector<float>> chunks;
  std::vector<double> losses(per);
  std::vector<float> dz(per * d), grad;
  std::vector<double> curve;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), 0x4453}));
    double epoch_loss = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t count = bounds[b + 1] - bounds[b];
      const float inv = 1.0f / static_cast<float>(count);
      parallel_for(count, [&](std::size_t v) {
        const std::size_t item = order[bounds[b] + v];
        enc.forward(corpus.items[item].image.values.data(), tda_rows[item], caches[v]);
        const auto& t = targets[item];
        double cos = 0;
        for (std::size_t k = 0; k < d; ++k) cos += static_cast<double>(caches[v].z[k]) * t[k];
        losses[v] = 1.0 - cos;
        for (std::size_t k = 0; k < d; ++k) dz[v * d + k] = -t[k] * inv;
      });
      double loss = 0;
      for (std::size_t v = 0; v < count; ++v) loss += losses[v];
      loss /= static_cast<double>(count);
      check_finite(loss, epoch, b, "distill");
      reduce_gradients(enc, caches, count, dz, chunks, grad);
      optim.step(enc.params(), grad);
      epoch_loss += loss;
    }
    curve.push_back(epoch_loss / static_cast<double>(nb));
    if (opt.progress) opt.progress({"distill", epoch + 1, cfg.epochs, curve.back()});
  }

  Checkpoint ck;
  ck.arch = arch;
  ck.params = enc.params();
  ck.loss_curve = std::move(curve);
  json echo;
  echo["kind"] = "distill";
  echo["tda"] = tda_echo(tda);
  echo["train"] = detail::config_to_json(cfg);
  echo["teacher_width"] = teacher.cols;
  ck.echo_json = echo.dump();
  return ck;
}

double distill_loss(const Checkpoint& student, const LabeledMatrix& teacher, const ingest::Corpus& corpus,
                    const vectorize::FeatureSet& tda) {
  if (corpus.empty()) throw ValidationError("distill: corpus is empty");
  const auto targets = align_teacher(teacher, corpus);
  const LabeledMatrix e = embed_corpus(student, corpus, tda);
  if (e.cols != teacher.cols) throw ValidationError("distill: student and teacher widths differ");
  double s = 0;
  for (std::size_t i = 0; i < e.rows(); ++i) {
    double c = 0;
    for (std::size_t k = 0; k < e.cols; ++k) c += static_cast<double>(e.row(i)[k]) * targets[i][k];
    s += 1.0 - c;
  }
  return s / static_cast<double>(e.rows());
}

}  // namespace wafertopo::sslnet
