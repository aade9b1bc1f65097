// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "e3/baselines.hpp"
#include "e3/config.hpp"
#include "e3/detector.hpp"
#include "e3/e3core.hpp"
#include "e3/metrics.hpp"
#include "e3/synthgen.hpp"

namespace e3 {

struct EpisodeReport {
  std::string method;
  int episode = 0;           // 1-based; 0 only for the no-generator case
  std::string generator_id;  // emerging generator handled in this episode
  std::vector<std::pair<std::string, double>> per_source_auc;       // ordered
  std::vector<std::pair<std::string, double>> per_source_accuracy;  // ordered
  double avg_auc = 0.0;
  double avg_accuracy = 0.0;
  std::optional<double> mixed_auc;  // single protocol only
  double wall_seconds = 0.0;        // reported in the manifest, not the CSVs
};

struct ProtocolResult {
  std::string protocol;
  std::string label;  // distinguishes sweep/arch members, e.g. "budget=20"
  std::string config_fingerprint;
  std::uint64_t master_seed = 0;
  std::vector<EpisodeReport> episodes;  // method-major, episodes increasing
};

// Per-method evolving state carried across episodes.
struct MethodState {
  ClMethod method = ClMethod::baseline;
  DetectorModel f0;                             // immutable baseline
  DetectorModel model;                          // finetune/er/lwf/baseline
  MemoryBuffer buffer;                          // e3/er
  std::vector<LabeledImage> reals;              // shared R
  ExpertEnsemble ensemble;                      // e3
  std::optional<FusionNetwork> ekfn;            // e3
  std::vector<DetectorModel> expert_detectors;  // majority (f0 first)
  std::vector<std::string> seen_generators;     // in episode order
};

// Assets shared by every method in a run; a pure function of the config.
struct RunAssets {
  Corpus corpus;
  DetectorModel f0;
  MemoryBuffer initial_buffer;
};

RunAssets prepare_assets(const RunConfig& cfg);

// Baseline detector fit: per-spec synthetic subsets balanced against an
// equally sized real subset.
DetectorModel train_baseline(const Corpus& corpus, const RunConfig& cfg);

MethodState init_method_state(ClMethod method, const RunAssets& assets);

// One full update cycle for generator g_k, then per-source evaluation over
// every seen source's test pool. episode_index is 1-based.
EpisodeReport run_episode(MethodState& state, const GeneratorSpec& g_k,
                          const Corpus& corpus, const RunConfig& cfg,
                          int episode_index, bool mixed_eval);

// Scores for arbitrary images under the method's current predictor.
std::vector<double> method_scores(const MethodState& state,
                                  const std::vector<LabeledImage>& images);

struct ProtocolOutcome {
  ProtocolResult result;
  std::vector<MethodState> final_states;
};

// protocol "single" or "sequential".
ProtocolOutcome run_protocol_with_assets(const RunConfig& cfg,
                                         const RunAssets& assets);
ProtocolOutcome run_protocol(const RunConfig& cfg);

// Sequential runs over new-data budgets (shared corpus and baseline).
std::vector<ProtocolOutcome> run_sweep(const RunConfig& cfg);
// Sequential runs over detector capacity presets.
std::vector<ProtocolOutcome> run_arch(const RunConfig& cfg);

}  // namespace e3
