// SPDX-License-Identifier: Apache-2.0
#include "e3/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "e3/adam.hpp"
#include "e3/errors.hpp"

namespace e3 {

namespace {

std::vector<int> preset_widths(Preset preset, int embed_dim) {
  switch (preset) {
    case Preset::tiny: return {8, 16, embed_dim};
    case Preset::small: return {16, 32, embed_dim};
    case Preset::medium: return {32, 64, embed_dim};
  }
  throw ConfigError("unknown detector preset");
}

// Fixed 3x3 Laplacian; traces live in the residual domain, so the embedder
// sees a high-passed view of the patch before any learned filtering.
Tensor laplacian_kernel() {
  return Tensor::from({1, 1, 3, 3}, {0.0f, -0.25f, 0.0f, -0.25f, 1.0f, -0.25f,
                                     0.0f, -0.25f, 0.0f});
}

}  // namespace

Preset preset_from_string(const std::string& name) {
  if (name == "tiny") return Preset::tiny;
  if (name == "small") return Preset::small;
  if (name == "medium") return Preset::medium;
  throw ConfigError("unknown detector preset: " + name);
}

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::tiny: return "tiny";
    case Preset::small: return "small";
    case Preset::medium: return "medium";
  }
  throw ConfigError("unknown detector preset enum value");
}

ClassWeighting class_weighting_from_string(const std::string& name) {
  if (name == "paper") return ClassWeighting::paper;
  if (name == "inverse") return ClassWeighting::inverse;
  if (name == "none") return ClassWeighting::none;
  throw ConfigError("unknown class weighting: " + name);
}

std::string to_string(ClassWeighting w) {
  switch (w) {
    case ClassWeighting::paper: return "paper";
    case ClassWeighting::inverse: return "inverse";
    case ClassWeighting::none: return "none";
  }
  throw ConfigError("unknown class weighting enum value");
}

Tensor Embedder::forward(const Tensor& x) const {
  Tensor h = x;
  if (config.highpass) {
    h = conv2d(h, laplacian_kernel(), /*stride=*/1, /*padding=*/1);
  }
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    h = conv2d(h, conv_w[i], /*stride=*/1, /*padding=*/1);
    h = add_channelwise(h, conv_b[i]);
    h = relu(h);
    h = avg_pool2d(h, 2);
  }
  return global_avg_pool(h);
}

Embedder Embedder::clone() const {
  Embedder e;
  e.config = config;
  for (const Tensor& w : conv_w) e.conv_w.push_back(w.detached_clone());
  for (const Tensor& b : conv_b) e.conv_b.push_back(b.detached_clone());
  return e;
}

void Embedder::freeze() {
  for (Tensor& w : conv_w) w.set_requires_grad(false);
  for (Tensor& b : conv_b) b.set_requires_grad(false);
}

void Embedder::collect(std::vector<nn::NamedParam>& out,
                       const std::string& prefix) const {
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".w", conv_w[i]);
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".b", conv_b[i]);
  }
}

std::int64_t Embedder::param_count() const {
  std::int64_t n = 0;
  for (const Tensor& w : conv_w) n += w.size();
  for (const Tensor& b : conv_b) n += b.size();
  return n;
}

Tensor DetectorModel::forward_logits(const Tensor& x) const {
  return head_logits(embedder.forward(x));
}

Tensor DetectorModel::head_logits(const Tensor& embeddings) const {
  Tensor logits = add_rowwise(matmul(embeddings, head_w), head_b);
  return reshape(logits, {logits.dim(0)});
}

DetectorModel DetectorModel::clone() const {
  DetectorModel m;
  m.embedder = embedder.clone();
  m.head_w = head_w.detached_clone();
  m.head_b = head_b.detached_clone();
  m.train_loss_history = train_loss_history;
  return m;
}

std::vector<nn::NamedParam> DetectorModel::named_params() const {
  std::vector<nn::NamedParam> out;
  embedder.collect(out, "embedder");
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

std::vector<Tensor> DetectorModel::trainable_params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

std::int64_t DetectorModel::param_count() const {
  return embedder.param_count() + head_w.size() + head_b.size();
}

DetectorModel build_detector(const DetectorConfig& config, std::uint64_t seed) {
  if (config.embed_dim < 4) {
    throw ConfigError("detector: embed_dim must be >= 4");
  }
  if (config.patch_size % 8 != 0 || config.patch_size < 8) {
    throw ConfigError("detector: patch_size must be a positive multiple of 8");
  }
  RngStream rng(seed, "detector_init");
  DetectorModel m;
  m.embedder.config = config;
  int in_ch = 1;
  for (int width : preset_widths(config.preset, config.embed_dim)) {
    m.embedder.conv_w.push_back(
        nn::he_normal({width, in_ch, 3, 3}, in_ch * 9, rng));
    m.embedder.conv_b.push_back(Tensor::zeros({width}, /*requires_grad=*/true));
    in_ch = width;
  }
  m.head_w = nn::xavier_normal({config.embed_dim, 1}, config.embed_dim, rng);
  m.head_b = Tensor::zeros({1}, /*requires_grad=*/true);
  return m;
}

namespace {

struct LossWeights {
  float real = 1.0f;
  float synth = 1.0f;
};

LossWeights class_weights(ClassWeighting mode, std::size_t n_real,
                          std::size_t n_synth) {
  const float total = static_cast<float>(n_real + n_synth);
  switch (mode) {
    case ClassWeighting::paper:
      // As printed: the synthetic term is scaled by |D_k|/|T_k| and the real
      // term by |R|/|T_k|.
      return {static_cast<float>(n_real) / total,
              static_cast<float>(n_synth) / total};
    case ClassWeighting::inverse:
      return {static_cast<float>(n_synth) / total,
              static_cast<float>(n_real) / total};
    case ClassWeighting::none:
      return {1.0f, 1.0f};
  }
  throw ConfigError("unknown class weighting enum value");
}

Tensor batch_tensor(const std::vector<const LabeledImage*>& patches, int p) {
  const int bsz = static_cast<int>(patches.size());
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(bsz) * p * p);
  for (const LabeledImage* img : patches) {
    data.insert(data.end(), img->pixels.begin(), img->pixels.end());
  }
  return Tensor::from({bsz, 1, p, p}, std::move(data));
}

}  // namespace

Tensor batch_center_patches(const std::vector<LabeledImage>& images,
                            int patch_size) {
  std::vector<float> data;
  data.reserve(images.size() * static_cast<std::size_t>(patch_size) *
               patch_size);
  for (const LabeledImage& img : images) {
    LabeledImage patch = extract_patch(img, patch_size, PatchMode::center);
    data.insert(data.end(), patch.pixels.begin(), patch.pixels.end());
  }
  return Tensor::from(
      {static_cast<int>(images.size()), 1, patch_size, patch_size},
      std::move(data));
}

DetectorModel train_detector(const DetectorModel& model,
                             const std::vector<LabeledImage>& data,
                             const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

  DetectorModel out = model.clone();
  out.train_loss_history.clear();
  if (cfg.epochs == 0) return out;

  std::size_t n_real = 0, n_synth = 0;
  for (const LabeledImage& img : data) {
    (img.label == 0 ? n_real : n_synth) += 1;
  }
  if (n_real == 0 || n_synth == 0) {
    throw DataError("train: need both classes when epochs > 0");
  }
  const LossWeights lw = class_weights(cfg.class_weighting, n_real, n_synth);

  std::vector<Tensor> params = out.trainable_params();
  AdamState adam;
  adam.cfg.lr = cfg.learning_rate;
  const int patch = out.embedder.config.patch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.lr_decay_every > 0) {
      adam.cfg.lr = cfg.learning_rate *
                    std::pow(cfg.lr_decay_factor,
                             static_cast<float>(epoch / cfg.lr_decay_every));
    }
    RngStream shuffle_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    RngStream patch_rng(cfg.seed, "patch", static_cast<std::uint64_t>(epoch));
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<LabeledImage> patches;
      std::vector<float> targets, weights;
      patches.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const LabeledImage& img = data[static_cast<std::size_t>(order[i])];
        patches.push_back(extract_patch_random(img, patch, patch_rng));
        targets.push_back(static_cast<float>(img.label));
        weights.push_back(img.label == 0 ? lw.real : lw.synth);
      }
      std::vector<const LabeledImage*> ptrs;
      for (const LabeledImage& pimg : patches) ptrs.push_back(&pimg);
      Tensor x = batch_tensor(ptrs, patch);

      Tape tape;
      Tensor logits = out.forward_logits(x);
      Tensor loss = bce_with_logits(logits, targets, weights);
      for (Tensor& p : params) p.zero_grad();
      tape.backward(loss);
      adam_step(params, adam);

      epoch_loss += static_cast<double>(loss.item()) *
                    static_cast<double>(stop - start);
      seen += stop - start;
    }
    out.train_loss_history.push_back(
        static_cast<float>(epoch_loss / static_cast<double>(seen)));
  }
  return out;
}

std::vector<double> predict_scores(const DetectorModel& model,
                                   const std::vector<LabeledImage>& images) {
  NoGradGuard ng;
  std::vector<double> scores;
  scores.reserve(images.size());
  const int patch = model.embedder.config.patch_size;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t stop = std::min(images.size(), start + kChunk);
    std::vector<LabeledImage> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                    images.begin() + static_cast<std::ptrdiff_t>(stop));
    Tensor x = batch_center_patches(chunk, patch);
    Tensor logits = model.forward_logits(x);
    for (int i = 0; i < logits.dim(0); ++i) {
      scores.push_back(static_cast<double>(score_sigmoid(logits.data()[i])));
    }
  }
  return scores;
}

std::vector<std::vector<float>> embed(const DetectorModel& model,
                                      const std::vector<LabeledImage>& images) {
  NoGradGuard ng;
  std::vector<std::vector<float>> out;
  out.reserve(images.size());
  const int patch = model.embedder.config.patch_size;
  const int d = model.embedder.config.embed_dim;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t stop = std::min(images.size(), start + kChunk);
    std::vector<LabeledImage> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                                    images.begin() + static_cast<std::ptrdiff_t>(stop));
    Tensor x = batch_center_patches(chunk, patch);
    Tensor e = model.embedder.forward(x);
    for (int i = 0; i < e.dim(0); ++i) {
      const float* row = e.data() + static_cast<std::size_t>(i) * d;
      out.emplace_back(row, row + d);
    }
  }
  return out;
}

}  // namespace e3
