#include <cmath>

#include "wafertopo/error.hpp"
#include "wafertopo/nn.hpp"
#include "wafertopo/sslnet.hpp"

namespace wafertopo::sslnet {

void EncoderArch::validate() const {
  if (width < 4 || height < 4) throw ValidationError("encoder: input must be at least 4x4");
  for (int f : filters)
    if (f <= 0) throw ValidationError("encoder: filter counts must be positive");
  if (tda_dim < 0 || hidden <= 0 || out_dim <= 0) throw ValidationError("encoder: bad head dimensions");
}

EncoderArch EncoderArch::student_of(const EncoderArch& teacher) {
  EncoderArch s = teacher;
  for (int& f : s.filters) f = std::max(1, f / 2);
  return s;
}

std::vector<TensorInfo> tensor_layout(const EncoderArch& a) {
  a.validate();
  std::vector<TensorInfo> t;
  std::size_t off = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    t.push_back({std::move(name), std::move(shape), off, n});
    off += n;
  };
  int in_c = 1;
  for (int s = 0; s < 3; ++s) {
    add("conv" + std::to_string(s + 1) + ".w", {a.filters[s], in_c, 3, 3});
    add("conv" + std::to_string(s + 1) + ".b", {a.filters[s]});
    in_c = a.filters[s];
  }
  add("fc1.w", {a.hidden, a.fused_dim()});
  add("fc1.b", {a.hidden});
  add("fc2.w", {a.out_dim, a.hidden});
  add("fc2.b", {a.out_dim});
  return t;
}

std::size_t parameter_count(const EncoderArch& arch) {
  const auto t = tensor_layout(arch);
  return t.back().offset + t.back().size;
}

template <typename T>
Encoder<T>::Encoder(const EncoderArch& arch) : arch_(arch), layout_(tensor_layout(arch)) {
  params_.assign(parameter_count(arch), T(0));
  for (int s = 0; s < 3; ++s) {
    conv_w_[s] = layout_[2 * s].offset;
    conv_b_[s] = layout_[2 * s + 1].offset;
  }
  fc1_w_ = layout_[6].offset;
  fc1_b_ = layout_[7].offset;
  fc2_w_ = layout_[8].offset;
  fc2_b_ = layout_[9].offset;
}

template <typename T>
T* Encoder<T>::tensor(const std::string& name) {
  for (const auto& t : layout_)
    if (t.name == name) return params_.data() + t.offset;
  throw ValidationError("encoder: no tensor named " + name);
}

template <typename T>
const T* Encoder<T>::tensor(const std::string& name) const {
  return const_cast<Encoder<T>*>(this)->tensor(name);
}

template <typename T>
void Encoder<T>::init_he(std::uint64_t seed) {
  Rng rng(seed, 0x4e4e);
  std::fill(params_.begin(), params_.end(), T(0));
  for (const auto& t : layout_) {
    if (t.shape.size() < 2) continue;  // biases stay zero
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < t.shape.size(); ++i) fan_in *= static_cast<std::size_t>(t.shape[i]);
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size; ++i) params_[t.offset + i] = static_cast<T>(sd * rng.normal());
  }
}

template <typename T>
void Encoder<T>::forward(const T* image, const T* tda, ForwardCache<T>& c) const {
  const auto& a = arch_;
  int C = 1, H = a.height, W = a.width;
  c.input[0].assign(image, image + static_cast<std::size_t>(H) * W);
  for (int s = 0; s < 3; ++s) {
    const int F = a.filters[s];
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    c.cols[s].resize(static_cast<std::size_t>(C) * 9 * hw);
    nn::im2col3x3(c.input[s].data(), C, H, W, c.cols[s].data());
    c.pre[s].resize(static_cast<std::size_t>(F) * hw);
    nn::conv3x3_forward(c.cols[s].data(), C, H, W, params_.data() + conv_w_[s], params_.data() + conv_b_[s], F,
                        c.pre[s].data());
    c.act[s].resize(c.pre[s].size());
    nn::relu_forward(c.pre[s].data(), c.pre[s].size(), c.act[s].data());
    if (s < 2) {
      const std::size_t pooled = static_cast<std::size_t>(F) * (H / 2) * (W / 2);
      c.input[s + 1].resize(pooled);
      c.argmax[s].resize(pooled);
      nn::maxpool2_forward(c.act[s].data(), F, H, W, c.input[s + 1].data(), c.argmax[s].data());
      H /= 2;
      W /= 2;
    } else {
      c.fused.assign(static_cast<std::size_t>(a.fused_dim()), T(0));
      nn::gap_forward(c.act[s].data(), F, H, W, c.fused.data());
    }
    C = F;
  }
  for (int i = 0; i < a.tda_dim; ++i) c.fused[static_cast<std::size_t>(a.visual_dim() + i)] = tda[i];

  c.h_pre.resize(static_cast<std::size_t>(a.hidden));
  nn::affine_forward(c.fused.data(), a.fused_dim(), params_.data() + fc1_w_, params_.data() + fc1_b_, a.hidden,
                     c.h_pre.data());
  c.h_act.resize(c.h_pre.size());
  nn::relu_forward(c.h_pre.data(), c.h_pre.size(), c.h_act.data());
  c.y.resize(static_cast<std::size_t>(a.out_dim));
  nn::affine_forward(c.h_act.data(), a.hidden, params_.data() + fc2_w_, params_.data() + fc2_b_, a.out_dim, c.y.data());
  c.z.resize(c.y.size());
  c.norm = nn::l2_normalize_forward(c.y.data(), a.out_dim, c.z.data());
}

template <typename T>
void Encoder<T>::backward(const ForwardCache<T>& c, const T* dz, T* grad) const {
  std::vector<T> dy(static_cast<std::size_t>(arch_.out_dim));
  nn::l2_normalize_backward(c.z.data(), c.norm, arch_.out_dim, dz, dy.data());
  backward_from_y(c, dy.data(), grad);
}

template <typename T>
void Encoder<T>::backward_from_y(const ForwardCache<T>& c, const T* dy, T* grad) const {
  const auto& a = arch_;
  std::vector<T> dh(static_cast<std::size_t>(a.hidden)), dh_pre(dh.size());
  nn::affine_backward(c.h_act.data(), a.hidden, params_.data() + fc2_w_, a.out_dim, dy, grad + fc2_w_, grad + fc2_b_,
                      dh.data());
  nn::relu_backward(c.h_pre.data(), dh.size(), dh.data(), dh_pre.data());
  std::vector<T> dfused(static_cast<std::size_t>(a.fused_dim()));
  nn::affine_backward(c.fused.data(), a.fused_dim(), params_.data() + fc1_w_, a.hidden, dh_pre.data(), grad + fc1_w_,
                      grad + fc1_b_, dfused.data());

  // stage dims
  std::array<int, 3> Hs{a.height, a.height / 2, a.height / 4}, Ws{a.width, a.width / 2, a.width / 4};
  std::array<int, 3> Cs{1, a.filters[0], a.filters[1]};

  std::vector<T> dact, dpre, dcols, dinput;
  {
    const int F = a.filters[2];
    dact.resize(static_cast<std::size_t>(F) * Hs[2] * Ws[2]);
    nn::gap_backward(F, Hs[2], Ws[2], dfused.data(), dact.data());
  }
  for (int s = 2; s >= 0; --s) {
    const int F = a.filters[s], C = Cs[s], H = Hs[s], W = Ws[s];
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    dpre.resize(dact.size());
    nn::relu_backward(c.pre[s].data(), dact.size(), dact.data(), dpre.data());
    T* dcols_ptr = nullptr;
    if (s > 0) {
      dcols.resize(static_cast<std::size_t>(C) * 9 * hw);
      dcols_ptr = dcols.data();
    }
    nn::conv3x3_backward(c.cols[s].data(), C, H, W, params_.data() + conv_w_[s], F, dpre.data(), grad + conv_w_[s],
                         grad + conv_b_[s], dcols_ptr);
    if (s == 0) break;
    dinput.assign(static_cast<std::size_t>(C) * hw, T(0));
    nn::col2im3x3(dcols.data(), C, H, W, dinput.data());
    // dinput is the gradient w.r.t. the pooled output of stage s-1
    dact.resize(static_cast<std::size_t>(C) * Hs[s - 1] * Ws[s - 1]);
    nn::maxpool2_backward(c.argmax[s - 1].data(), C, Hs[s - 1], Ws[s - 1], dinput.data(), dact.data());
  }
}

template class Encoder<float>;
template class Encoder<double>;

Encoder<float> Checkpoint::encoder() const {
  Encoder<float> e(arch);
  if (params.size() != e.size()) throw FormatError("checkpoint: parameter count does not match architecture");
  e.params() = params;
  return e;
}

}  // namespace wafertopo::sslnet
