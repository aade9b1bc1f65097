// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e3/nn.hpp"
#include "e3/synthgen.hpp"
#include "e3/tensor.hpp"

namespace e3 {

enum class Preset { tiny, small, medium };
Preset preset_from_string(const std::string& name);
std::string to_string(Preset preset);

enum class ClassWeighting { paper, inverse, none };
ClassWeighting class_weighting_from_string(const std::string& name);
std::string to_string(ClassWeighting w);

struct DetectorConfig {
  Preset preset = Preset::tiny;
  int embed_dim = 32;
  bool highpass = true;
  int patch_size = 32;
};

struct TrainConfig {
  float learning_rate = 5e-5f;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 0;
  ClassWeighting class_weighting = ClassWeighting::paper;
  // Optional step decay; factor 1 or every 0 disables it.
  float lr_decay_factor = 1.0f;
  int lr_decay_every = 0;
};

// Conv embedder: optional fixed 3x3 high-pass prefilter, then per-preset
// conv+ReLU+pool blocks, global average pool down to embed_dim.
struct Embedder {
  DetectorConfig config;
  std::vector<Tensor> conv_w;  // [out,in,3,3] per block
  std::vector<Tensor> conv_b;  // [out] per block

  Tensor forward(const Tensor& x) const;  // [B,1,P,P] -> [B,d]
  Embedder clone() const;
  void freeze();
  void collect(std::vector<nn::NamedParam>& out,
               const std::string& prefix) const;
  std::int64_t param_count() const;
};

// Full detector f = h(phi(.)): embedder plus a single affine head producing
// one logit; the two parameter sets stay disjoint and separately extractable.
struct DetectorModel {
  Embedder embedder;
  Tensor head_w;  // [d,1]
  Tensor head_b;  // [1]
  std::vector<float> train_loss_history;  // per-epoch mean of the last fit

  Tensor forward_logits(const Tensor& x) const;  // [B,1,P,P] -> [B]
  Tensor head_logits(const Tensor& embeddings) const;  // [B,d] -> [B]
  DetectorModel clone() const;
  std::vector<nn::NamedParam> named_params() const;
  std::vector<Tensor> trainable_params() const;
  std::int64_t param_count() const;
};

DetectorModel build_detector(const DetectorConfig& config, std::uint64_t seed);

// Fits a copy of the model with (optionally class-weighted) BCE + ADAM and
// random-patch augmentation; the input model is never mutated.
DetectorModel train_detector(const DetectorModel& model,
                             const std::vector<LabeledImage>& data,
                             const TrainConfig& cfg);

// Center-patch scores in the open interval (0,1), one per image.
std::vector<double> predict_scores(const DetectorModel& model,
                                   const std::vector<LabeledImage>& images);

// Center-patch embeddings (phi outputs), one d-vector per image.
std::vector<std::vector<float>> embed(const DetectorModel& model,
                                      const std::vector<LabeledImage>& images);

// Batches center patches into a [B,1,P,P] tensor.
Tensor batch_center_patches(const std::vector<LabeledImage>& images,
                            int patch_size);

}  // namespace e3
