#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "panoseg/adam.hpp"
#include "panoseg/augment.hpp"
#include "panoseg/checkpoint.hpp"
#include "panoseg/losses.hpp"
#include "panoseg/net.hpp"

namespace panoseg {

enum class GuidingLoss { Lovasz, Mse, None };

struct TrainConfig {
  AdamConfig adam;  // lr 1e-4, betas (0.5, 0.999)
  int batch_size = 10;
  int max_steps = 2000;
  uint64_t seed = 1;
  AugmentConfig augment;
  double lambda_gp = 10.0;
  int n_critic = 1;
  GuidingLoss guiding = GuidingLoss::Lovasz;

  void validate() const {
    if (batch_size < 1) throw Error("invalid train config", "batch_size < 1");
    if (augment.flip_prob < 0 || augment.flip_prob > 1 || augment.drop_prob < 0 ||
        augment.drop_prob > 1) {
      throw Error("invalid train config", "probabilities outside [0,1]");
    }
  }
};

template <class T>
struct TrainBatch {
  Tensor<T> range;        // [N, 5, h, w] projected crop
  Tensor<T> condition;    // [N, C, h, w] one-hot range-view segments
  Tensor<T> real_onehot;  // [N, C, H, W] one-hot camera segments
  std::vector<SegmentMap> targets;
};

// One adversarial step: n_critic discriminator updates followed by one
// generator update. Throws "training diverged" on non-finite losses.
template <class T>
LossReport<T> train_step(Generator<T>& g, Discriminator<T>& d, Adam<T>& adam_g, Adam<T>& adam_d,
                         const TrainBatch<T>& batch, const TrainConfig& cfg, Rng& rng) {
  auto g_params = param_tensors(g.named_params());
  auto d_params = param_tensors(d.named_params());

  LossReport<T> report;
  Tensor<T> logits;
  ConditionedCritic<T> critic(d, batch.condition);
  for (int i = 0; i < cfg.n_critic; ++i) {
    logits = g.forward(batch.range, batch.condition, /*training=*/true, rng);
    auto fake = softmax(logits, 1).detached();
    auto gp = gradient_penalty(critic, batch.real_onehot, fake,
                               static_cast<T>(cfg.lambda_gp), rng);
    auto d_loss = add(sub(mean(critic.score(fake, false)),
                          mean(critic.score(batch.real_onehot, false))),
                      gp);
    zero_grads(d.named_params());
    backward(d_loss);
    adam_d.step(d_params);
    report.d_loss = d_loss.item();
    report.gp_term = gp.item();
  }

  // Generator update reuses the last forward; the critic runs frozen so
  // gradients reach only the generator.
  auto probs = softmax(logits, 1);
  auto adv = wgan_g_loss(critic, probs);
  Tensor<T> guide;
  switch (cfg.guiding) {
    case GuidingLoss::Lovasz:
      guide = lovasz_softmax(probs, std::span<const SegmentMap>(batch.targets));
      break;
    case GuidingLoss::Mse:
      guide = mse_loss(probs, batch.real_onehot);
      break;
    case GuidingLoss::None:
      guide = Tensor<T>::scalar(T(0));
      break;
  }
  auto g_loss = total_generator_loss(adv, guide);
  zero_grads(g.named_params());
  backward(g_loss);
  adam_g.step(g_params);

  report.g_adv_loss = adv.item();
  report.lovasz_loss = guide.item();
  report.total_g = g_loss.item();
  if (!std::isfinite(static_cast<double>(report.d_loss)) ||
      !std::isfinite(static_cast<double>(report.total_g)) ||
      !std::isfinite(static_cast<double>(report.gp_term))) {
    throw Error("training diverged");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Model checkpoints
// ---------------------------------------------------------------------------

template <class T>
struct GanModels {
  Generator<T> generator;
  Discriminator<T> discriminator;
  Adam<T> adam_g, adam_d;
};

namespace detail {

inline NamedTensor scalar_tensor(const std::string& name, std::vector<float> values) {
  return {name, {static_cast<int64_t>(values.size())}, std::move(values)};
}

template <class T>
void append_params(std::vector<NamedTensor>& out, NamedParams<T>& params) {
  for (auto& [name, t] : params) {
    std::vector<float> data(t.value().begin(), t.value().end());
    out.push_back({name, t.shape(), std::move(data)});
  }
}

template <class T>
void append_adam(std::vector<NamedTensor>& out, const std::string& prefix, Adam<T>& adam,
                 NamedParams<T>& params) {
  out.push_back(scalar_tensor(prefix + ".t", {static_cast<float>(adam.step_count())}));
  const auto& cfg = adam.config();
  out.push_back(scalar_tensor(prefix + ".hyper",
                              {static_cast<float>(cfg.lr), static_cast<float>(cfg.beta1),
                               static_cast<float>(cfg.beta2), static_cast<float>(cfg.eps)}));
  for (size_t i = 0; i < params.size(); ++i) {
    std::vector<float> m(adam.first_moments()[i].begin(), adam.first_moments()[i].end());
    std::vector<float> v(adam.second_moments()[i].begin(), adam.second_moments()[i].end());
    out.push_back({prefix + ".m." + params[i].first, params[i].second.shape(), std::move(m)});
    out.push_back({prefix + ".v." + params[i].first, params[i].second.shape(), std::move(v)});
  }
}

inline const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors,
                                      const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw Error("truncated checkpoint", "missing tensor " + name);
}

}  // namespace detail

inline std::vector<NamedTensor> encode_generator_config(const GeneratorConfig& cfg) {
  std::vector<NamedTensor> out;
  out.push_back(detail::scalar_tensor(
      "cfg.g.scalars",
      {static_cast<float>(cfg.range_channels), static_cast<float>(cfg.condition_channels),
       static_cast<float>(cfg.class_count), static_cast<float>(cfg.base_width),
       static_cast<float>(cfg.encoder_stages), static_cast<float>(cfg.in_height),
       static_cast<float>(cfg.in_width), static_cast<float>(cfg.out_height),
       static_cast<float>(cfg.out_width), static_cast<float>(cfg.dropout_p),
       cfg.norm == NormKind::Instance ? 1.0f : 0.0f, static_cast<float>(cfg.leaky_slope)}));
  std::vector<float> dil(cfg.block_dilations.begin(), cfg.block_dilations.end());
  out.push_back(detail::scalar_tensor("cfg.g.dilations", std::move(dil)));
  return out;
}

inline GeneratorConfig decode_generator_config(const std::vector<NamedTensor>& tensors) {
  const auto& s = detail::find_tensor(tensors, "cfg.g.scalars").data;
  GeneratorConfig cfg;
  cfg.range_channels = static_cast<int>(s[0]);
  cfg.condition_channels = static_cast<int>(s[1]);
  cfg.class_count = static_cast<int>(s[2]);
  cfg.base_width = static_cast<int>(s[3]);
  cfg.encoder_stages = static_cast<int>(s[4]);
  cfg.in_height = static_cast<int>(s[5]);
  cfg.in_width = static_cast<int>(s[6]);
  cfg.out_height = static_cast<int>(s[7]);
  cfg.out_width = static_cast<int>(s[8]);
  cfg.dropout_p = s[9];
  cfg.norm = s[10] != 0.0f ? NormKind::Instance : NormKind::None;
  cfg.leaky_slope = s[11];
  cfg.block_dilations.clear();
  for (float d : detail::find_tensor(tensors, "cfg.g.dilations").data) {
    cfg.block_dilations.push_back(static_cast<int>(d));
  }
  return cfg;
}

inline std::vector<NamedTensor> encode_discriminator_config(const DiscriminatorConfig& cfg) {
  std::vector<NamedTensor> out;
  out.push_back(detail::scalar_tensor(
      "cfg.d.scalars",
      {static_cast<float>(cfg.candidate_channels), static_cast<float>(cfg.condition_channels),
       static_cast<float>(cfg.cand_height), static_cast<float>(cfg.cand_width),
       static_cast<float>(cfg.leaky_slope)}));
  std::vector<float> blocks;
  for (const auto& b : cfg.blocks) {
    blocks.push_back(static_cast<float>(b.out_channels));
    blocks.push_back(static_cast<float>(b.kernel));
    blocks.push_back(static_cast<float>(b.stride));
    blocks.push_back(static_cast<float>(b.padding));
  }
  out.push_back({"cfg.d.blocks", {static_cast<int64_t>(cfg.blocks.size()), 4}, std::move(blocks)});
  return out;
}

inline DiscriminatorConfig decode_discriminator_config(const std::vector<NamedTensor>& tensors) {
  const auto& s = detail::find_tensor(tensors, "cfg.d.scalars").data;
  DiscriminatorConfig cfg;
  cfg.candidate_channels = static_cast<int>(s[0]);
  cfg.condition_channels = static_cast<int>(s[1]);
  cfg.cand_height = static_cast<int>(s[2]);
  cfg.cand_width = static_cast<int>(s[3]);
  cfg.leaky_slope = s[4];
  const auto& blocks = detail::find_tensor(tensors, "cfg.d.blocks");
  cfg.blocks.clear();
  for (int64_t i = 0; i < blocks.shape[0]; ++i) {
    cfg.blocks.push_back({static_cast<int>(blocks.data[i * 4]),
                          static_cast<int>(blocks.data[i * 4 + 1]),
                          static_cast<int>(blocks.data[i * 4 + 2]),
                          static_cast<int>(blocks.data[i * 4 + 3])});
  }
  return cfg;
}

template <class T>
void save_models(const std::string& path, GanModels<T>& models) {
  std::vector<NamedTensor> tensors;
  for (auto& t : encode_generator_config(models.generator.config())) tensors.push_back(t);
  for (auto& t : encode_discriminator_config(models.discriminator.config())) tensors.push_back(t);
  detail::append_params(tensors, models.generator.named_params());
  detail::append_params(tensors, models.discriminator.named_params());
  detail::append_adam(tensors, "opt.g", models.adam_g, models.generator.named_params());
  detail::append_adam(tensors, "opt.d", models.adam_d, models.discriminator.named_params());
  write_checkpoint(path, tensors);
}

template <class T>
void load_params(const std::vector<NamedTensor>& tensors, NamedParams<T>& params) {
  for (auto& [name, t] : params) {
    const auto& src = detail::find_tensor(tensors, name);
    if (src.shape != t.shape()) throw Error("bad checkpoint version", "shape drift on " + name);
    std::copy(src.data.begin(), src.data.end(), t.mutable_value().begin());
  }
}

template <class T>
Adam<T> load_adam(const std::vector<NamedTensor>& tensors, const std::string& prefix,
                  NamedParams<T>& params) {
  const auto& hyper = detail::find_tensor(tensors, prefix + ".hyper").data;
  AdamConfig cfg{hyper[0], hyper[1], hyper[2], hyper[3]};
  auto plist = param_tensors(params);
  Adam<T> adam(cfg, plist);
  adam.set_step_count(static_cast<int64_t>(detail::find_tensor(tensors, prefix + ".t").data[0]));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& m = detail::find_tensor(tensors, prefix + ".m." + params[i].first).data;
    const auto& v = detail::find_tensor(tensors, prefix + ".v." + params[i].first).data;
    std::copy(m.begin(), m.end(), adam.first_moments()[i].begin());
    std::copy(v.begin(), v.end(), adam.second_moments()[i].begin());
  }
  return adam;
}

template <class T>
GanModels<T> load_models(const std::string& path) {
  auto tensors = read_checkpoint(path);
  GanModels<T> models{Generator<T>(decode_generator_config(tensors)),
                      Discriminator<T>(decode_discriminator_config(tensors)), Adam<T>(), Adam<T>()};
  load_params(tensors, models.generator.named_params());
  load_params(tensors, models.discriminator.named_params());
  models.adam_g = load_adam(tensors, "opt.g", models.generator.named_params());
  models.adam_d = load_adam(tensors, "opt.d", models.discriminator.named_params());
  return models;
}

}  // namespace panoseg
