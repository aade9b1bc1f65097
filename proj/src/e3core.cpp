// SPDX-License-Identifier: Apache-2.0
#include "e3/e3core.hpp"

#include <algorithm>
#include <map>

#include "e3/adam.hpp"
#include "e3/errors.hpp"

namespace e3 {

int MemoryBuffer::synthetic_count() const {
  int n = 0;
  for (const Slot& s : slots) n += static_cast<int>(s.images.size());
  return n;
}

std::vector<LabeledImage> MemoryBuffer::all() const {
  std::vector<LabeledImage> out = reals;
  for (const Slot& s : slots) {
    out.insert(out.end(), s.images.begin(), s.images.end());
  }
  return out;
}

namespace {

std::vector<LabeledImage> sample_images(const std::vector<LabeledImage>& pool,
                                        int count, RngStream& rng) {
  std::vector<int> idx =
      rng.sample_indices(static_cast<int>(pool.size()), count);
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i : idx) out.push_back(pool[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

MemoryBuffer MemoryBuffer::initial(int capacity,
                                   const std::vector<LabeledImage>& real_pool,
                                   const std::vector<LabeledImage>& baseline_pool,
                                   std::uint64_t seed) {
  if (capacity < 4 || capacity % 2 != 0) {
    throw ConfigError("memory buffer: capacity must be even and >= 4");
  }
  const int half = capacity / 2;
  if (static_cast<int>(real_pool.size()) < half) {
    throw DataError("memory buffer: real pool smaller than M/2");
  }
  if (static_cast<int>(baseline_pool.size()) < half) {
    throw DataError("memory buffer: baseline pool smaller than M/2");
  }
  MemoryBuffer buf;
  buf.capacity = capacity;
  buf.k = 0;
  {
    RngStream rng(seed, "buffer/reals");
    buf.reals = sample_images(real_pool, half, rng);
  }

  // One slot for the whole baseline set, drawn as equally as possible across
  // the baseline sources present in the pool.
  std::vector<std::string> order;
  std::map<std::string, std::vector<LabeledImage>> by_source;
  for (const LabeledImage& img : baseline_pool) {
    if (!by_source.count(img.source_id)) order.push_back(img.source_id);
    by_source[img.source_id].push_back(img);
  }
  const int n_sources = static_cast<int>(order.size());
  Slot slot;
  slot.id = "baseline";
  for (int s = 0; s < n_sources; ++s) {
    int want = half / n_sources + (s < half % n_sources ? 1 : 0);
    const std::vector<LabeledImage>& pool = by_source[order[static_cast<std::size_t>(s)]];
    if (static_cast<int>(pool.size()) < want) {
      throw DataError("memory buffer: baseline source '" +
                      order[static_cast<std::size_t>(s)] + "' too small");
    }
    RngStream rng(seed, "buffer/baseline/" + order[static_cast<std::size_t>(s)]);
    std::vector<LabeledImage> picked = sample_images(pool, want, rng);
    slot.images.insert(slot.images.end(), picked.begin(), picked.end());
  }
  buf.slots.push_back(std::move(slot));
  return buf;
}

MemoryBuffer update_memory_buffer(const MemoryBuffer& buf,
                                  const std::vector<LabeledImage>& d_k,
                                  std::uint64_t seed) {
  if (d_k.empty()) throw DataError("update_memory_buffer: D_k is empty");
  MemoryBuffer out;
  out.capacity = buf.capacity;
  out.k = buf.k + 1;
  out.reals = buf.reals;
  const int quota = out.quota();
  if (static_cast<int>(d_k.size()) < quota) {
    throw DataError("update_memory_buffer: |D_k| smaller than the quota");
  }
  for (const MemoryBuffer::Slot& s : buf.slots) {
    if (static_cast<int>(s.images.size()) < quota) {
      throw DataError("update_memory_buffer: slot '" + s.id +
                      "' smaller than the new quota");
    }
    RngStream rng(seed, "buffer/keep/" + s.id, static_cast<std::uint64_t>(out.k));
    out.slots.push_back({s.id, sample_images(s.images, quota, rng)});
  }
  const std::string new_id = d_k.front().source_id;
  for (const MemoryBuffer::Slot& s : out.slots) {
    if (s.id == new_id) {
      throw DataError("update_memory_buffer: slot '" + new_id +
                      "' already exists");
    }
  }
  RngStream rng(seed, "buffer/new/" + new_id, static_cast<std::uint64_t>(out.k));
  out.slots.push_back({new_id, sample_images(d_k, quota, rng)});
  return out;
}

std::vector<float> ExpertEnsemble::embed_tokens(const LabeledImage& image) const {
  std::vector<float> tokens;
  tokens.reserve(static_cast<std::size_t>(size()) * embed_dim);
  for (const Embedder& expert : experts) {
    LabeledImage patch =
        extract_patch(image, expert.config.patch_size, PatchMode::center);
    Tensor x = Tensor::from({1, 1, patch.height, patch.width}, patch.pixels);
    Tensor e = expert.forward(x);
    tokens.insert(tokens.end(), e.data(), e.data() + embed_dim);
  }
  return tokens;
}

Embedder train_expert(const DetectorModel& f0,
                      const std::vector<LabeledImage>& d_k,
                      const std::vector<LabeledImage>& reals,
                      const TrainConfig& cfg) {
  return train_expert_detector(f0, d_k, reals, cfg).embedder;
}

DetectorModel train_expert_detector(const DetectorModel& f0,
                                    const std::vector<LabeledImage>& d_k,
                                    const std::vector<LabeledImage>& reals,
                                    const TrainConfig& cfg) {
  if (d_k.empty()) throw DataError("train_expert: D_k is empty");
  if (reals.empty()) throw DataError("train_expert: R is empty");
  std::vector<LabeledImage> training_set = d_k;
  training_set.insert(training_set.end(), reals.begin(), reals.end());
  return train_detector(f0, training_set, cfg);
}

EkfnVariant ekfn_variant_from_string(const std::string& name) {
  if (name == "full") return EkfnVariant::full;
  if (name == "mlp_only") return EkfnVariant::mlp_only;
  if (name == "no_weighting") return EkfnVariant::no_weighting;
  throw ConfigError("unknown ekfn variant: " + name);
}

std::string to_string(EkfnVariant variant) {
  switch (variant) {
    case EkfnVariant::full: return "full";
    case EkfnVariant::mlp_only: return "mlp_only";
    case EkfnVariant::no_weighting: return "no_weighting";
  }
  throw ConfigError("unknown ekfn variant enum value");
}

Tensor FusionNetwork::forward_logit(const Tensor& tokens) const {
  Tensor flat;
  if (arch.variant == EkfnVariant::mlp_only) {
    flat = reshape(tokens, {1, num_experts * d});
  } else {
    Tensor h = add(tokens, id_embed);
    for (const nn::TransformerLayer& layer : layers) h = layer.forward(h);
    Tensor z = layer_norm(h, final_gamma, final_beta);
    if (arch.variant == EkfnVariant::full) {
      // Each transformer output weights its corresponding raw embedding.
      z = hadamard(z, tokens);
    }
    flat = reshape(z, {1, num_experts * d});
  }
  Tensor hidden = relu(mlp1.forward(flat));
  Tensor logit = mlp2.forward(hidden);
  return reshape(logit, {1});
}

FusionNetwork FusionNetwork::clone() const {
  FusionNetwork f;
  f.arch = arch;
  f.num_experts = num_experts;
  f.d = d;
  f.id_embed = id_embed.detached_clone();
  for (const nn::TransformerLayer& l : layers) f.layers.push_back(l.clone());
  f.final_gamma = final_gamma.detached_clone();
  f.final_beta = final_beta.detached_clone();
  f.mlp1 = mlp1.clone();
  f.mlp2 = mlp2.clone();
  return f;
}

std::vector<nn::NamedParam> FusionNetwork::named_params() const {
  std::vector<nn::NamedParam> out;
  if (arch.variant != EkfnVariant::mlp_only) {
    out.emplace_back("id_embed", id_embed);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].collect(out, "layer" + std::to_string(i));
    }
    out.emplace_back("final.gamma", final_gamma);
    out.emplace_back("final.beta", final_beta);
  }
  mlp1.collect(out, "mlp1");
  mlp2.collect(out, "mlp2");
  return out;
}

std::vector<Tensor> FusionNetwork::trainable_params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

FusionNetwork build_ekfn(int num_experts, int d, const EkfnArch& arch,
                         std::uint64_t seed) {
  if (num_experts < 1) throw ConfigError("ekfn: num_experts must be >= 1");
  if (arch.layers < 1 && arch.variant != EkfnVariant::mlp_only) {
    throw ConfigError("ekfn: layers must be >= 1");
  }
  RngStream rng(seed, "ekfn_init");
  FusionNetwork f;
  f.arch = arch;
  f.num_experts = num_experts;
  f.d = d;
  if (arch.variant != EkfnVariant::mlp_only) {
    f.id_embed = nn::xavier_normal({num_experts, d}, d, rng);
    for (int i = 0; i < arch.layers; ++i) {
      f.layers.push_back(
          nn::TransformerLayer::init(d, arch.heads, arch.ff_mult * d, rng));
    }
    f.final_gamma = Tensor::full({d}, 1.0f, /*requires_grad=*/true);
    f.final_beta = Tensor::zeros({d}, /*requires_grad=*/true);
  }
  f.mlp1 = nn::Linear::init(num_experts * d, arch.mlp_hidden, rng);
  f.mlp2 = nn::Linear::init(arch.mlp_hidden, 1, rng);
  return f;
}

FusionNetwork train_ekfn(const FusionNetwork& ekfn,
                         const ExpertEnsemble& ensemble,
                         const MemoryBuffer& buf, const EkfnTrainConfig& cfg) {
  if (ensemble.size() != ekfn.num_experts) {
    throw ContractError("train_ekfn: ensemble size does not match token count");
  }
  if (cfg.steps < 0) throw ConfigError("train_ekfn: steps must be >= 0");
  FusionNetwork out = ekfn.clone();
  if (cfg.steps == 0) return out;

  // Embeddings once per image; the experts stay frozen throughout.
  const std::vector<LabeledImage> images = buf.all();
  if (images.empty()) throw DataError("train_ekfn: empty memory buffer");
  const int L = ensemble.size();
  const int d = ensemble.embed_dim;
  std::vector<std::vector<float>> tokens;
  std::vector<float> labels;
  tokens.reserve(images.size());
  for (const LabeledImage& img : images) {
    tokens.push_back(ensemble.embed_tokens(img));
    labels.push_back(static_cast<float>(img.label));
  }

  std::vector<Tensor> params = out.trainable_params();
  AdamState adam;
  adam.cfg.lr = cfg.learning_rate;
  RngStream batch_rng(cfg.seed, "ekfn_batches");
  const int n = static_cast<int>(images.size());
  const int bsz = std::min(cfg.batch_size, n);

  for (int step = 0; step < cfg.steps; ++step) {
    const std::vector<int> batch = batch_rng.sample_indices(n, bsz);
    Tape tape;
    std::vector<Tensor> logits;
    std::vector<float> targets, weights;
    logits.reserve(static_cast<std::size_t>(bsz));
    for (int idx : batch) {
      Tensor t = Tensor::from({L, d}, tokens[static_cast<std::size_t>(idx)]);
      logits.push_back(out.forward_logit(t));
      targets.push_back(labels[static_cast<std::size_t>(idx)]);
      weights.push_back(1.0f);
    }
    Tensor all_logits = concat_rows(logits);
    Tensor loss = bce_with_logits(all_logits, targets, weights);
    for (Tensor& p : params) p.zero_grad();
    tape.backward(loss);
    adam_step(params, adam);
  }
  return out;
}

std::vector<double> e3_predict(const ExpertEnsemble& ensemble,
                               const FusionNetwork& ekfn,
                               const std::vector<LabeledImage>& images) {
  if (ensemble.size() != ekfn.num_experts) {
    throw ContractError("e3_predict: ensemble size does not match token count");
  }
  NoGradGuard ng;
  std::vector<double> scores;
  scores.reserve(images.size());
  const int L = ensemble.size();
  const int d = ensemble.embed_dim;
  for (const LabeledImage& img : images) {
    Tensor t = Tensor::from({L, d}, ensemble.embed_tokens(img));
    Tensor logit = ekfn.forward_logit(t);
    scores.push_back(static_cast<double>(score_sigmoid(logit.item())));
  }
  return scores;
}

}  // namespace e3
