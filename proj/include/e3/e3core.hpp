// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "e3/detector.hpp"
#include "e3/nn.hpp"
#include "e3/synthgen.hpp"
#include "e3/tensor.hpp"

namespace e3 {

// Fixed-capacity replay buffer: M/2 reals (never replaced) plus one
// equal-quota slot of synthetic images per absorbed generator source.
struct MemoryBuffer {
  int capacity = 0;  // M, even
  int k = 0;         // emerging generators absorbed so far
  std::vector<LabeledImage> reals;
  struct Slot {
    std::string id;
    std::vector<LabeledImage> images;
  };
  std::vector<Slot> slots;

  int quota() const { return capacity / (2 * (k + 1)); }
  int synthetic_count() const;
  std::vector<LabeledImage> all() const;  // reals then slots, in order

  // Buffer at k=0: M/2 reals sampled from real_pool and one "baseline" slot
  // with M/2 images drawn as equally as possible across the baseline pool's
  // source ids.
  static MemoryBuffer initial(int capacity,
                              const std::vector<LabeledImage>& real_pool,
                              const std::vector<LabeledImage>& baseline_pool,
                              std::uint64_t seed);
};

// Shrinks every slot to the new quota P_k = floor(M / (2(k+1))) by uniform
// subsampling, adds a slot for D_k's source, and increments k. R is unchanged.
MemoryBuffer update_memory_buffer(const MemoryBuffer& buf,
                                  const std::vector<LabeledImage>& d_k,
                                  std::uint64_t seed);

// Ordered, frozen expert embedders; index 0 is the baseline embedder.
struct ExpertEnsemble {
  std::vector<Embedder> experts;
  int embed_dim = 0;

  int size() const { return static_cast<int>(experts.size()); }
  // [L x d] token matrix for one image (center patch), experts in order.
  std::vector<float> embed_tokens(const LabeledImage& image) const;
};

// Fine-tunes a copy of f0 on D_k (synthetic, one generator) plus R (reals)
// with the weighted BCE, then discards the classifier head. f0 is untouched.
Embedder train_expert(const DetectorModel& f0,
                      const std::vector<LabeledImage>& d_k,
                      const std::vector<LabeledImage>& reals,
                      const TrainConfig& cfg);
// Same fit, but the classifier head is kept (majority-voting ablation).
DetectorModel train_expert_detector(const DetectorModel& f0,
                                    const std::vector<LabeledImage>& d_k,
                                    const std::vector<LabeledImage>& reals,
                                    const TrainConfig& cfg);

enum class EkfnVariant { full, mlp_only, no_weighting };
EkfnVariant ekfn_variant_from_string(const std::string& name);
std::string to_string(EkfnVariant variant);

struct EkfnArch {
  int layers = 2;      // transformer depth (paper default is 20)
  int heads = 2;
  int ff_mult = 2;     // feed-forward width = ff_mult * d
  int mlp_hidden = 64; // fusion MLP hidden width
  EkfnVariant variant = EkfnVariant::full;
};

struct EkfnTrainConfig {
  int steps = 400;
  float learning_rate = 1e-3f;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

// Expert Knowledge Fusion Network: transformer over the expert-embedding
// sequence, element-wise re-weighting of the raw embeddings, then a 2-layer
// MLP on the concatenation. Learned per-expert identity embeddings make the
// permutation-equivariant attention expert-aware.
struct FusionNetwork {
  EkfnArch arch;
  int num_experts = 0;
  int d = 0;
  Tensor id_embed;  // [L,d]
  std::vector<nn::TransformerLayer> layers;
  Tensor final_gamma, final_beta;  // closing LayerNorm of the encoder
  nn::Linear mlp1, mlp2;

  // tokens: constant [L,d] tensor of expert embeddings for one image.
  Tensor forward_logit(const Tensor& tokens) const;  // -> [1]
  FusionNetwork clone() const;
  std::vector<nn::NamedParam> named_params() const;
  std::vector<Tensor> trainable_params() const;
};

FusionNetwork build_ekfn(int num_experts, int d, const EkfnArch& arch,
                         std::uint64_t seed);

// Trains a copy of the EKFN on the memory buffer. Expert embeddings are
// extracted once per image with the frozen ensemble; experts receive no
// gradient updates.
FusionNetwork train_ekfn(const FusionNetwork& ekfn,
                         const ExpertEnsemble& ensemble,
                         const MemoryBuffer& buf, const EkfnTrainConfig& cfg);

std::vector<double> e3_predict(const ExpertEnsemble& ensemble,
                               const FusionNetwork& ekfn,
                               const std::vector<LabeledImage>& images);

}  // namespace e3
