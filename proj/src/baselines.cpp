// SPDX-License-Identifier: Apache-2.0
#include "e3/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "e3/adam.hpp"
#include "e3/errors.hpp"

namespace e3 {

ClMethod cl_method_from_string(const std::string& name) {
  if (name == "e3") return ClMethod::e3;
  if (name == "finetune") return ClMethod::finetune;
  if (name == "er") return ClMethod::er;
  if (name == "lwf") return ClMethod::lwf;
  if (name == "majority") return ClMethod::majority;
  if (name == "baseline") return ClMethod::baseline;
  throw ConfigError("unknown method: " + name);
}

std::string to_string(ClMethod method) {
  switch (method) {
    case ClMethod::e3: return "e3";
    case ClMethod::finetune: return "finetune";
    case ClMethod::er: return "er";
    case ClMethod::lwf: return "lwf";
    case ClMethod::majority: return "majority";
    case ClMethod::baseline: return "baseline";
  }
  throw ConfigError("unknown method enum value");
}

void ClMethodConfig::validate() const {
  if (lambda_distill < 0.0f) {
    throw ConfigError("lwf: lambda_distill must be >= 0");
  }
  if (temperature <= 0.0f) throw ConfigError("lwf: temperature must be > 0");
}

DetectorModel finetune_step(const DetectorModel& model,
                            const std::vector<LabeledImage>& d_k,
                            const std::vector<LabeledImage>& reals,
                            const TrainConfig& cfg) {
  if (d_k.empty() || reals.empty()) {
    throw DataError("finetune_step: empty training data");
  }
  std::vector<LabeledImage> training_set = d_k;
  training_set.insert(training_set.end(), reals.begin(), reals.end());
  return train_detector(model, training_set, cfg);
}

DetectorModel er_step(const DetectorModel& model, const MemoryBuffer& buf,
                      const std::vector<LabeledImage>& d_k,
                      const TrainConfig& cfg) {
  std::vector<LabeledImage> training_set = buf.all();
  if (training_set.empty()) throw DataError("er_step: empty memory buffer");
  training_set.insert(training_set.end(), d_k.begin(), d_k.end());
  return train_detector(model, training_set, cfg);
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

}  // namespace

// Mirrors train_detector's batching and streams exactly, adding the
// distillation term; with lambda == 0 the update is bit-identical to
// finetune_step under the same seed.
DetectorModel lwf_step(const DetectorModel& model,
                       const DetectorModel& prev_model,
                       const std::vector<LabeledImage>& d_k,
                       const std::vector<LabeledImage>& reals,
                       const ClMethodConfig& cfg) {
  cfg.validate();
  if (d_k.empty() || reals.empty()) {
    throw DataError("lwf_step: empty training data");
  }
  const TrainConfig& tc = cfg.train;
  if (tc.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (tc.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

  std::vector<LabeledImage> data = d_k;
  data.insert(data.end(), reals.begin(), reals.end());

  DetectorModel out = model.clone();
  out.train_loss_history.clear();
  if (tc.epochs == 0) return out;

  std::size_t n_real = 0, n_synth = 0;
  for (const LabeledImage& img : data) (img.label == 0 ? n_real : n_synth) += 1;
  if (n_real == 0 || n_synth == 0) {
    throw DataError("train: need both classes when epochs > 0");
  }
  const LossWeights lw = class_weights(tc.class_weighting, n_real, n_synth);

  std::vector<Tensor> params = out.trainable_params();
  AdamState adam;
  adam.cfg.lr = tc.learning_rate;
  const int patch = out.embedder.config.patch_size;
  const float inv_temp = 1.0f / cfg.temperature;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    if (tc.lr_decay_every > 0) {
      adam.cfg.lr = tc.learning_rate *
                    std::pow(tc.lr_decay_factor,
                             static_cast<float>(epoch / tc.lr_decay_every));
    }
    RngStream shuffle_rng(tc.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    RngStream patch_rng(tc.seed, "patch", static_cast<std::uint64_t>(epoch));
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      std::vector<float> xdata, targets, weights;
      for (std::size_t i = start; i < stop; ++i) {
        const LabeledImage& img = data[static_cast<std::size_t>(order[i])];
        LabeledImage p = extract_patch_random(img, patch, patch_rng);
        xdata.insert(xdata.end(), p.pixels.begin(), p.pixels.end());
        targets.push_back(static_cast<float>(img.label));
        weights.push_back(img.label == 0 ? lw.real : lw.synth);
      }
      const int bsz = static_cast<int>(stop - start);
      Tensor x = Tensor::from({bsz, 1, patch, patch}, std::move(xdata));

      Tape tape;
      Tensor logits = out.forward_logits(x);
      Tensor loss = bce_with_logits(logits, targets, weights);
      if (cfg.lambda_distill > 0.0f) {
        std::vector<float> soft_targets(static_cast<std::size_t>(bsz));
        {
          NoGradGuard ng;
          Tensor teacher = prev_model.forward_logits(x);
          for (int i = 0; i < bsz; ++i) {
            soft_targets[static_cast<std::size_t>(i)] =
                stable_sigmoid(teacher.data()[i] * inv_temp);
          }
        }
        Tensor distill =
            bce_with_logits(scale(logits, inv_temp), soft_targets,
                            std::vector<float>(static_cast<std::size_t>(bsz), 1.0f));
        loss = add(loss, scale(distill, cfg.lambda_distill));
      }
      for (Tensor& p : params) p.zero_grad();
      tape.backward(loss);
      adam_step(params, adam);

      epoch_loss += static_cast<double>(loss.item()) * bsz;
      seen += stop - start;
    }
    out.train_loss_history.push_back(
        static_cast<float>(epoch_loss / static_cast<double>(seen)));
  }
  return out;
}

std::vector<double> majority_vote_predict(
    const std::vector<DetectorModel>& experts_with_heads,
    const std::vector<LabeledImage>& images) {
  if (experts_with_heads.empty()) {
    throw ContractError("majority_vote_predict: empty expert list");
  }
  NoGradGuard ng;
  std::vector<double> sums(images.size(), 0.0);
  const int patch = experts_with_heads.front().embedder.config.patch_size;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const std::size_t stop = std::min(images.size(), start + kChunk);
    std::vector<LabeledImage> chunk(
        images.begin() + static_cast<std::ptrdiff_t>(start),
        images.begin() + static_cast<std::ptrdiff_t>(stop));
    Tensor x = batch_center_patches(chunk, patch);
    for (const DetectorModel& expert : experts_with_heads) {
      Tensor logits = expert.forward_logits(x);
      for (int i = 0; i < logits.dim(0); ++i) {
        sums[start + static_cast<std::size_t>(i)] +=
            static_cast<double>(logits.data()[i]);
      }
    }
  }
  std::vector<double> scores;
  scores.reserve(images.size());
  for (double s : sums) {
    scores.push_back(
        static_cast<double>(score_sigmoid(static_cast<float>(s))));
  }
  return scores;
}

}  // namespace e3
