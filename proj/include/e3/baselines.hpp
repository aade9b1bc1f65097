// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "e3/detector.hpp"
#include "e3/e3core.hpp"

namespace e3 {

enum class ClMethod { e3, finetune, er, lwf, majority, baseline };
ClMethod cl_method_from_string(const std::string& name);
std::string to_string(ClMethod method);

struct ClMethodConfig {
  ClMethod method = ClMethod::finetune;
  float lambda_distill = 1.0f;  // lwf
  float temperature = 2.0f;     // lwf
  TrainConfig train;

  void validate() const;
};

// Naive sequential fine-tune on D_k plus buffered reals (binary training
// needs the negative class; see module notes).
DetectorModel finetune_step(const DetectorModel& model,
                            const std::vector<LabeledImage>& d_k,
                            const std::vector<LabeledImage>& reals,
                            const TrainConfig& cfg);

// Experience replay: fine-tune on the updated memory buffer plus D_k.
DetectorModel er_step(const DetectorModel& model, const MemoryBuffer& buf,
                      const std::vector<LabeledImage>& d_k,
                      const TrainConfig& cfg);

// Learning Without Forgetting: hard BCE plus lambda-weighted,
// temperature-scaled distillation against the frozen previous model.
DetectorModel lwf_step(const DetectorModel& model,
                       const DetectorModel& prev_model,
                       const std::vector<LabeledImage>& d_k,
                       const std::vector<LabeledImage>& reals,
                       const ClMethodConfig& cfg);

// Ensemble ablation: each expert keeps its classifier head; the detection
// score is the sigmoid of the summed logits.
std::vector<double> majority_vote_predict(
    const std::vector<DetectorModel>& experts_with_heads,
    const std::vector<LabeledImage>& images);

}  // namespace e3
