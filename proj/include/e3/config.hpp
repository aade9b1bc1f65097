// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e3/baselines.hpp"
#include "e3/detector.hpp"
#include "e3/e3core.hpp"
#include "e3/synthgen.hpp"

namespace e3 {

// Full experiment configuration. Everything an experiment does is a pure
// function of this struct; the JSON schema is documented in the README.
struct RunConfig {
  std::uint64_t master_seed = 1;
  std::string protocol = "sequential";  // single|sequential|sweep|arch
  std::vector<ClMethod> methods = {ClMethod::e3, ClMethod::finetune,
                                   ClMethod::er, ClMethod::lwf};
  int buffer_capacity = 200;  // M
  int new_data_budget = 100;  // N

  CorpusConfig corpus;
  DetectorConfig detector;
  TrainConfig detector_train;  // baseline fit
  TrainConfig expert_train;    // expert fine-tune + competitor updates
  EkfnArch ekfn;
  EkfnTrainConfig ekfn_train;
  float lwf_lambda = 1.0f;
  float lwf_temperature = 2.0f;

  int baseline_train_per_spec = 100;  // synthetic images per baseline spec
  std::vector<int> sweep_budgets = {20, 50, 100, 200};
  std::vector<std::string> arch_presets = {"tiny", "small", "medium"};

  void validate() const;
  std::string fingerprint() const;  // FNV-64 hex of the canonical JSON
};

// Calibrated desk-scale defaults, including the generator roster.
RunConfig default_config();

// Strict load: unknown keys are config errors naming the key; all defaults
// are materialized in the returned struct.
RunConfig load_config(const std::string& path);
RunConfig parse_config_json(const std::string& text);

// Canonical serialization (sorted keys, every field explicit). load of a
// serialized config is a fixed point.
std::string serialize_config(const RunConfig& config);
void save_config(const RunConfig& config, const std::string& path);

}  // namespace e3
