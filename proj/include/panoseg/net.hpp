#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "panoseg/losses.hpp"
#include "panoseg/ops.hpp"
#include "panoseg/rng.hpp"
#include "panoseg/tensor.hpp"

namespace panoseg {

template <class T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <class T>
struct Conv2dLayer {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]
  kernels::Conv2dSpec spec;

  static Conv2dLayer make(int in_ch, int out_ch, int k, int dilation, int padding, int stride,
                          Rng& rng) {
    Conv2dLayer layer;
    layer.spec.dil_h = layer.spec.dil_w = dilation;
    layer.spec.pad_h = layer.spec.pad_w = padding;
    layer.spec.stride_h = layer.spec.stride_w = stride;
    const int64_t fan_in = static_cast<int64_t>(in_ch) * k * k;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<T> w(static_cast<size_t>(out_ch) * in_ch * k * k);
    for (auto& x : w) x = static_cast<T>(rng.uniform(-bound, bound));
    const double bbound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> b(out_ch);
    for (auto& x : b) x = static_cast<T>(rng.uniform(-bbound, bbound));
    layer.weight = Tensor<T>::leaf({out_ch, in_ch, k, k}, std::move(w), true);
    layer.bias = Tensor<T>::leaf({out_ch}, std::move(b), true);
    return layer;
  }

  Tensor<T> apply(const Tensor<T>& x, bool frozen = false) const {
    return conv2d(x, frozen ? weight.detached() : weight, frozen ? bias.detached() : bias, spec);
  }

  // Tangent propagation: the bias drops, the kernel stays live on the tape.
  Tensor<T> apply_tangent(const Tensor<T>& t) const { return conv2d(t, weight, spec); }

  void register_params(NamedParams<T>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".w", weight);
    out.emplace_back(prefix + ".b", bias);
  }
};

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

enum class NormKind { None, Instance };

struct GeneratorConfig {
  int range_channels = 5;
  int condition_channels = 15;
  int class_count = 15;
  int base_width = 32;
  int encoder_stages = 2;               // pooling stages; decoder mirrors them
  std::vector<int> block_dilations{1, 2, 3};  // 3x3 receptive fields 3, 5, 7
  int in_height = 64, in_width = 512;   // training crop
  int out_height = 64, out_width = 512; // camera space
  double dropout_p = 0.2;
  NormKind norm = NormKind::Instance;
  double leaky_slope = 0.1;
  uint64_t init_seed = 1;

  void validate() const {
    if (base_width < 4 || base_width % 2 != 0) {
      throw Error("invalid generator config", "base_width must be even and >= 4");
    }
    if (encoder_stages < 1) throw Error("invalid generator config", "encoder_stages < 1");
    if (block_dilations.empty()) throw Error("invalid generator config", "no dilations");
    const int down = 1 << encoder_stages;
    if (in_height % down != 0 || in_width % down != 0) {
      throw Error("invalid generator config", "crop dims not divisible by pooling factor");
    }
    if (out_height < in_height || out_width < in_width) {
      throw Error("invalid generator config", "output below crop size (head upsamples only)");
    }
  }
};

// Residual block of stacked dilated 3x3 convolutions with a 1x1 skip path.
template <class T>
struct ResDilatedBlock {
  Conv2dLayer<T> skip;
  std::vector<Conv2dLayer<T>> convs;
  NormKind norm = NormKind::None;
  double leaky_slope = 0.1;

  static ResDilatedBlock make(int in_ch, int out_ch, const std::vector<int>& dilations,
                              NormKind norm, double slope, Rng& rng) {
    ResDilatedBlock b;
    b.norm = norm;
    b.leaky_slope = slope;
    b.skip = Conv2dLayer<T>::make(in_ch, out_ch, 1, 1, 0, 1, rng);
    int ch = in_ch;
    for (int d : dilations) {
      b.convs.push_back(Conv2dLayer<T>::make(ch, out_ch, 3, d, d, 1, rng));
      ch = out_ch;
    }
    return b;
  }

  Tensor<T> apply(const Tensor<T>& x) const {
    auto h = x;
    for (const auto& conv : convs) h = leaky_relu(conv.apply(h), static_cast<T>(leaky_slope));
    auto y = add(h, skip.apply(x));
    if (norm == NormKind::Instance) y = instance_norm(y, static_cast<T>(1e-5));
    return y;
  }

  void register_params(NamedParams<T>& out, const std::string& prefix) {
    skip.register_params(out, prefix + ".skip");
    for (size_t i = 0; i < convs.size(); ++i) {
      convs[i].register_params(out, prefix + ".conv" + std::to_string(i));
    }
  }
};

// Range-view to camera-view segment translator: 1x1 merge of the two inputs,
// a residual context block, a dilated-conv encoder with 2x pooling,
// a pixel-shuffle decoder with skip connections, and a bilinear output head.
template <class T>
class Generator {
 public:
  explicit Generator(GeneratorConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    const int b = cfg_.base_width;
    merge_range_ = Conv2dLayer<T>::make(cfg_.range_channels, b, 1, 1, 0, 1, rng);
    merge_cond_ = Conv2dLayer<T>::make(cfg_.condition_channels, b, 1, 1, 0, 1, rng);
    merge_out_ = Conv2dLayer<T>::make(2 * b, b, 1, 1, 0, 1, rng);
    context_conv_ = Conv2dLayer<T>::make(b, b, 3, 1, 1, 1, rng);
    context_skip_ = Conv2dLayer<T>::make(b, b, 1, 1, 0, 1, rng);

    int ch = b;
    for (int i = 0; i < cfg_.encoder_stages; ++i) {
      const int out = b << i;
      encoder_.push_back(ResDilatedBlock<T>::make(ch, out, cfg_.block_dilations, cfg_.norm,
                                                  cfg_.leaky_slope, rng));
      ch = out;
    }
    bottleneck_ = ResDilatedBlock<T>::make(ch, b << cfg_.encoder_stages, cfg_.block_dilations,
                                           cfg_.norm, cfg_.leaky_slope, rng);
    ch = b << cfg_.encoder_stages;
    for (int i = cfg_.encoder_stages - 1; i >= 0; --i) {
      const int skip_ch = b << i;
      const int out = b << i;
      decoder_.push_back(ResDilatedBlock<T>::make(ch / 4 + skip_ch, out, cfg_.block_dilations,
                                                  cfg_.norm, cfg_.leaky_slope, rng));
      ch = out;
    }
    head_ = Conv2dLayer<T>::make(ch, cfg_.class_count, 1, 1, 0, 1, rng);
    params_.clear();
    merge_range_.register_params(params_, "g.merge_range");
    merge_cond_.register_params(params_, "g.merge_cond");
    merge_out_.register_params(params_, "g.merge_out");
    context_conv_.register_params(params_, "g.context_conv");
    context_skip_.register_params(params_, "g.context_skip");
    for (size_t i = 0; i < encoder_.size(); ++i) {
      encoder_[i].register_params(params_, "g.enc" + std::to_string(i));
    }
    bottleneck_.register_params(params_, "g.bottleneck");
    for (size_t i = 0; i < decoder_.size(); ++i) {
      decoder_[i].register_params(params_, "g.dec" + std::to_string(i));
    }
    head_.register_params(params_, "g.head");
  }

  const GeneratorConfig& config() const { return cfg_; }
  NamedParams<T>& named_params() { return params_; }

  // Raw class logits [N, C, out_h, out_w * (in_w / cfg.in_width)]. The network
  // is fully convolutional: wider inputs yield proportionally wider outputs.
  Tensor<T> forward(const Tensor<T>& range, const Tensor<T>& cond, bool training, Rng& rng) {
    if (range.rank() != 4 || cond.rank() != 4) throw Error("shape mismatch", "generator inputs");
    if (range.dim(1) != cfg_.range_channels || cond.dim(1) != cfg_.condition_channels) {
      throw Error("shape mismatch", "generator input channels");
    }
    if (range.dim(2) != cond.dim(2) || range.dim(3) != cond.dim(3)) {
      throw Error("shape mismatch", "range/condition dims differ");
    }
    const int64_t in_w = range.dim(3);
    const int down = 1 << cfg_.encoder_stages;
    if (range.dim(2) != cfg_.in_height) {
      throw Error("shape mismatch", "input height must equal the configured beam count");
    }
    if (in_w % down != 0) {
      throw Error("shape mismatch", "input width not divisible by pooling factor");
    }
    if ((cfg_.out_width * in_w) % cfg_.in_width != 0) {
      throw Error("width not a multiple of the training crop granularity",
                  "input width " + std::to_string(in_w));
    }
    const int64_t out_w = cfg_.out_width * in_w / cfg_.in_width;
    const int64_t out_h = cfg_.out_height;

    const T slope = static_cast<T>(cfg_.leaky_slope);
    auto a = leaky_relu(merge_range_.apply(range), slope);
    auto bb = leaky_relu(merge_cond_.apply(cond), slope);
    auto merged = leaky_relu(merge_out_.apply(concat<T>({a, bb}, 1)), slope);
    auto ctx = add(leaky_relu(context_conv_.apply(merged), slope), context_skip_.apply(merged));

    std::vector<Tensor<T>> skips;
    auto h = ctx;
    for (auto& block : encoder_) {
      auto y = block.apply(h);
      if (training && cfg_.dropout_p > 0) y = dropout(y, cfg_.dropout_p, training, rng);
      skips.push_back(y);
      h = avg_pool2x2(y);
    }
    h = bottleneck_.apply(h);
    if (training && cfg_.dropout_p > 0) h = dropout(h, cfg_.dropout_p, training, rng);
    for (size_t i = 0; i < decoder_.size(); ++i) {
      auto up = pixel_shuffle(h, 2);
      auto cat = concat<T>({up, skips[skips.size() - 1 - i]}, 1);
      h = decoder_[i].apply(cat);
      if (training && cfg_.dropout_p > 0) h = dropout(h, cfg_.dropout_p, training, rng);
    }
    auto logits = head_.apply(h);
    if (logits.dim(2) != out_h || logits.dim(3) != out_w) {
      logits = bilinear_upsample(logits, out_h, out_w);
    }
    return logits;
  }

  // Receptive field diameter in input columns (stride-weighted kernel spans).
  int receptive_field_cols() const {
    int r = 1;
    int jump = 1;
    auto block_span = [&](int j) {
      int s = 0;
      for (int d : cfg_.block_dilations) s += 2 * d * j;
      return s;
    };
    r += 2 * jump;  // context 3x3
    for (int i = 0; i < cfg_.encoder_stages; ++i) {
      r += block_span(jump);
      r += jump;  // pooling
      jump *= 2;
    }
    r += block_span(jump);  // bottleneck
    for (int i = 0; i < cfg_.encoder_stages; ++i) {
      jump /= 2;  // pixel shuffle
      r += block_span(jump);
    }
    return r;
  }

 private:
  GeneratorConfig cfg_;
  Conv2dLayer<T> merge_range_, merge_cond_, merge_out_;
  Conv2dLayer<T> context_conv_, context_skip_;
  std::vector<ResDilatedBlock<T>> encoder_;
  ResDilatedBlock<T> bottleneck_;
  std::vector<ResDilatedBlock<T>> decoder_;
  Conv2dLayer<T> head_;
  NamedParams<T> params_;
};

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

struct DiscriminatorBlock {
  int out_channels = 64;
  int kernel = 4;
  int stride = 2;
  int padding = 1;
};

struct DiscriminatorConfig {
  int candidate_channels = 15;
  int condition_channels = 15;
  int cand_height = 64, cand_width = 512;  // candidate (camera) dims
  std::vector<DiscriminatorBlock> blocks;  // six strided blocks by default
  double leaky_slope = 0.2;
  uint64_t init_seed = 2;

  static std::vector<DiscriminatorBlock> default_blocks() {
    return {{64, 4, 2, 1},  {128, 4, 2, 1}, {256, 4, 2, 1},
            {512, 4, 2, 1}, {512, 4, 2, 1}, {512, 4, 2, 1}};
  }

  void validate() const {
    if (blocks.empty()) throw Error("invalid discriminator config", "no blocks");
    int64_t h = cand_height, w = cand_width;
    for (const auto& b : blocks) {
      h = kernels::conv_out_dim(h, b.kernel, b.stride, 1, b.padding);
      w = kernels::conv_out_dim(w, b.kernel, b.stride, 1, b.padding);
      if (h < 1 || w < 1) {
        throw Error("invalid discriminator config", "patch grid collapses below 1x1");
      }
    }
  }

  std::pair<int64_t, int64_t> patch_grid() const {
    int64_t h = cand_height, w = cand_width;
    for (const auto& b : blocks) {
      h = kernels::conv_out_dim(h, b.kernel, b.stride, 1, b.padding);
      w = kernels::conv_out_dim(w, b.kernel, b.stride, 1, b.padding);
    }
    return {h, w};
  }
};

// Patch-wise critic: the condition map is upsampled to the candidate dims and
// concatenated, then strided conv blocks (leaky-relu, no normalization)
// produce a grid of raw realism scores.
template <class T>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    int ch = cfg_.candidate_channels + cfg_.condition_channels;
    for (const auto& b : cfg_.blocks) {
      convs_.push_back(Conv2dLayer<T>::make(ch, b.out_channels, b.kernel, 1, b.padding, b.stride,
                                            rng));
      ch = b.out_channels;
    }
    project_ = Conv2dLayer<T>::make(ch, 1, 1, 1, 0, 1, rng);
    params_.clear();
    for (size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].register_params(params_, "d.block" + std::to_string(i));
    }
    project_.register_params(params_, "d.project");
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  NamedParams<T>& named_params() { return params_; }

  // Patch score grid [N, 1, ph, pw].
  Tensor<T> patch_scores(const Tensor<T>& seg, const Tensor<T>& cond, bool frozen = false) {
    auto x = assemble_input(seg, cond);
    for (const auto& conv : convs_) {
      x = leaky_relu(conv.apply(x, frozen), static_cast<T>(cfg_.leaky_slope));
    }
    return project_.apply(x, frozen);
  }

  // Patch-mean primal score and the directional derivative of the score along
  // v (w.r.t. the candidate input), as tape nodes. The tangent keeps the
  // kernels live so its backward yields exact parameter gradients of the
  // input-gradient functional for this piecewise-linear network.
  std::pair<Tensor<T>, Tensor<T>> score_with_tangent(const Tensor<T>& seg, const Tensor<T>& cond,
                                                     const Tensor<T>& v) {
    auto x = assemble_input(seg.detached(), cond);
    auto t = assemble_input(v, Tensor<T>::zeros(cond.shape()));
    for (const auto& conv : convs_) {
      auto y = conv.apply(x, /*frozen=*/true);
      t = conv.apply_tangent(t);
      // lrelu tangent: scale by the (detached) primal slope mask.
      std::vector<T> mask(y.size());
      for (int64_t i = 0; i < y.size(); ++i) {
        mask[i] = y.value()[i] >= T(0) ? T(1) : static_cast<T>(cfg_.leaky_slope);
      }
      std::vector<T> zero(y.size(), T(0));
      t = affine_const(t, std::move(mask), std::move(zero));
      x = leaky_relu(y, static_cast<T>(cfg_.leaky_slope));
    }
    auto s = mean_per_sample(project_.apply(x, /*frozen=*/true));
    auto q = mean_per_sample(project_.apply_tangent(t));
    return {s, q};
  }

 private:
  Tensor<T> assemble_input(const Tensor<T>& seg, const Tensor<T>& cond) {
    if (seg.rank() != 4 || cond.rank() != 4) throw Error("shape mismatch", "discriminator input");
    if (seg.dim(1) != cfg_.candidate_channels || cond.dim(1) != cfg_.condition_channels) {
      throw Error("shape mismatch", "discriminator channels");
    }
    auto c = cond;
    if (cond.dim(2) != seg.dim(2) || cond.dim(3) != seg.dim(3)) {
      c = bilinear_upsample(cond, seg.dim(2), seg.dim(3));
    }
    return concat<T>({seg, c}, 1);
  }

  DiscriminatorConfig cfg_;
  std::vector<Conv2dLayer<T>> convs_;
  Conv2dLayer<T> project_;
  NamedParams<T> params_;
};

// Critic view of the discriminator for a fixed condition batch.
template <class T>
class ConditionedCritic : public Critic<T> {
 public:
  ConditionedCritic(Discriminator<T>& d, Tensor<T> condition)
      : d_(d), cond_(std::move(condition)) {}

  Tensor<T> score(const Tensor<T>& x, bool frozen_params) override {
    return mean_per_sample(d_.patch_scores(x, cond_, frozen_params));
  }

  std::pair<Tensor<T>, Tensor<T>> score_with_tangent(const Tensor<T>& x,
                                                     const Tensor<T>& v) override {
    return d_.score_with_tangent(x, cond_, v);
  }

 private:
  Discriminator<T>& d_;
  Tensor<T> cond_;
};

template <class T>
std::vector<Tensor<T>> param_tensors(NamedParams<T>& named) {
  std::vector<Tensor<T>> out;
  out.reserve(named.size());
  for (auto& [name, t] : named) out.push_back(t);
  return out;
}

template <class T>
void zero_grads(NamedParams<T>& named) {
  for (auto& [name, t] : named) t.zero_grad();
}

}  // namespace panoseg
