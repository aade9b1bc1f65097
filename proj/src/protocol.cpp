// SPDX-License-Identifier: Apache-2.0
#include "e3/protocol.hpp"

#include <algorithm>
#include <chrono>

#include "e3/errors.hpp"
#include "e3/rng.hpp"

namespace e3 {

namespace {

std::uint64_t derive_seed(std::uint64_t master, const std::string& label,
                          int k = 0) {
  return mix64(mix64(master ^ hash_label(label)) ^
               static_cast<std::uint64_t>(k));
}

std::vector<LabeledImage> sample_pool(const std::vector<LabeledImage>& pool,
                                      int count, RngStream& rng) {
  std::vector<int> idx = rng.sample_indices(static_cast<int>(pool.size()), count);
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i : idx) out.push_back(pool[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<LabeledImage> baseline_synth_train(const Corpus& corpus) {
  std::vector<LabeledImage> pool;
  for (const GeneratorSpec& spec : corpus.config.baseline_specs) {
    std::vector<LabeledImage> part = split_corpus(corpus, spec.id, Split::train);
    pool.insert(pool.end(), part.begin(), part.end());
  }
  return pool;
}

std::vector<LabeledImage> baseline_synth_test(const Corpus& corpus) {
  std::vector<LabeledImage> pool;
  for (const GeneratorSpec& spec : corpus.config.baseline_specs) {
    std::vector<LabeledImage> part = split_corpus(corpus, spec.id, Split::test);
    pool.insert(pool.end(), part.begin(), part.end());
  }
  return pool;
}

}  // namespace

DetectorModel train_baseline(const Corpus& corpus, const RunConfig& cfg) {
  const std::uint64_t ms = cfg.master_seed;
  std::vector<LabeledImage> data;
  for (const GeneratorSpec& spec : corpus.config.baseline_specs) {
    std::vector<LabeledImage> pool = split_corpus(corpus, spec.id, Split::train);
    RngStream rng(ms, "baseline_subset/" + spec.id);
    std::vector<LabeledImage> part =
        sample_pool(pool, cfg.baseline_train_per_spec, rng);
    data.insert(data.end(), part.begin(), part.end());
  }
  {
    std::vector<LabeledImage> reals = split_corpus(corpus, "real", Split::train);
    RngStream rng(ms, "baseline_reals");
    const int want = cfg.baseline_train_per_spec *
                     static_cast<int>(corpus.config.baseline_specs.size());
    std::vector<LabeledImage> part = sample_pool(reals, want, rng);
    data.insert(data.end(), part.begin(), part.end());
  }
  DetectorModel init = build_detector(cfg.detector, derive_seed(ms, "detector_init"));
  TrainConfig tc = cfg.detector_train;
  tc.seed = derive_seed(ms, "train/baseline");
  return train_detector(init, data, tc);
}

RunAssets prepare_assets(const RunConfig& cfg) {
  RunAssets assets;
  CorpusConfig cc = cfg.corpus;
  cc.master_seed = cfg.master_seed;
  assets.corpus = build_corpus(cc);
  assets.f0 = train_baseline(assets.corpus, cfg);
  assets.initial_buffer = MemoryBuffer::initial(
      cfg.buffer_capacity, split_corpus(assets.corpus, "real", Split::train),
      baseline_synth_train(assets.corpus), derive_seed(cfg.master_seed, "buffer"));
  return assets;
}

MethodState init_method_state(ClMethod method, const RunAssets& assets) {
  MethodState state;
  state.method = method;
  state.f0 = assets.f0.clone();
  state.model = assets.f0.clone();
  state.buffer = assets.initial_buffer;
  state.reals = assets.initial_buffer.reals;
  if (method == ClMethod::e3) {
    Embedder base = assets.f0.embedder.clone();
    base.freeze();
    state.ensemble.experts.push_back(std::move(base));
    state.ensemble.embed_dim = assets.f0.embedder.config.embed_dim;
  }
  if (method == ClMethod::majority) {
    state.expert_detectors.push_back(assets.f0.clone());
  }
  return state;
}

std::vector<double> method_scores(const MethodState& state,
                                  const std::vector<LabeledImage>& images) {
  switch (state.method) {
    case ClMethod::e3:
      if (!state.ekfn.has_value()) {
        throw ContractError("method_scores: e3 fusion network not trained yet");
      }
      return e3_predict(state.ensemble, *state.ekfn, images);
    case ClMethod::majority:
      return majority_vote_predict(state.expert_detectors, images);
    case ClMethod::baseline:
      return predict_scores(state.f0, images);
    case ClMethod::finetune:
    case ClMethod::er:
    case ClMethod::lwf:
      return predict_scores(state.model, images);
  }
  throw ContractError("method_scores: unknown method");
}

namespace {

// Per-source AUC/accuracy over every seen source, plus averages.
void evaluate_state(const MethodState& state, const Corpus& corpus,
                    EpisodeReport& report) {
  const std::vector<LabeledImage> real_test =
      split_corpus(corpus, "real", Split::test);
  const std::vector<double> real_scores = method_scores(state, real_test);
  const std::vector<int> real_labels(real_test.size(), 0);

  std::vector<std::pair<std::string, std::vector<LabeledImage>>> sources;
  sources.emplace_back("baseline", baseline_synth_test(corpus));
  for (const std::string& gen : state.seen_generators) {
    sources.emplace_back(gen, split_corpus(corpus, gen, Split::test));
  }

  double auc_sum = 0.0, acc_sum = 0.0;
  for (const auto& [source_id, synth_test] : sources) {
    const std::vector<double> synth_scores = method_scores(state, synth_test);
    const double auc = roc_auc(synth_scores, real_scores);
    std::vector<double> all_scores = synth_scores;
    all_scores.insert(all_scores.end(), real_scores.begin(), real_scores.end());
    std::vector<int> labels(synth_scores.size(), 1);
    labels.insert(labels.end(), real_labels.begin(), real_labels.end());
    const double acc = accuracy(all_scores, labels);
    report.per_source_auc.emplace_back(source_id, auc);
    report.per_source_accuracy.emplace_back(source_id, acc);
    auc_sum += auc;
    acc_sum += acc;
  }
  report.avg_auc = auc_sum / static_cast<double>(sources.size());
  report.avg_accuracy = acc_sum / static_cast<double>(sources.size());
}

// §5.2-style mixture: reals against an even split of baseline and new-source
// synthetic test images.
double mixed_auc_eval(const MethodState& state, const Corpus& corpus,
                      const std::string& gen_id, const RunConfig& cfg,
                      int episode_index) {
  const std::vector<LabeledImage> gen_test =
      split_corpus(corpus, gen_id, Split::test);
  std::vector<LabeledImage> base_pool = baseline_synth_test(corpus);
  const int half = std::min(static_cast<int>(gen_test.size()),
                            static_cast<int>(base_pool.size()));
  RngStream rng(cfg.master_seed, "mixed/" + gen_id,
                static_cast<std::uint64_t>(episode_index));
  std::vector<LabeledImage> pos = sample_pool(base_pool, half, rng);
  pos.insert(pos.end(), gen_test.begin(),
             gen_test.begin() + static_cast<std::ptrdiff_t>(half));
  const std::vector<LabeledImage> real_test =
      split_corpus(corpus, "real", Split::test);
  return roc_auc(method_scores(state, pos), method_scores(state, real_test));
}

}  // namespace

EpisodeReport run_episode(MethodState& state, const GeneratorSpec& g_k,
                          const Corpus& corpus, const RunConfig& cfg,
                          int episode_index, bool mixed_eval) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t ms = cfg.master_seed;

  // Same D_k for every method: the stream is keyed by generator, not method.
  const std::vector<LabeledImage> gen_pool =
      split_corpus(corpus, g_k.id, Split::train);
  if (static_cast<int>(gen_pool.size()) < cfg.new_data_budget) {
    throw DataError("run_episode: generator train pool smaller than budget");
  }
  RngStream dk_rng(ms, "dk/" + g_k.id, static_cast<std::uint64_t>(episode_index));
  const std::vector<LabeledImage> d_k =
      sample_pool(gen_pool, cfg.new_data_budget, dk_rng);

  TrainConfig tc = cfg.expert_train;
  tc.seed = derive_seed(ms, "train/" + to_string(state.method) + "/" + g_k.id,
                        episode_index);
  const std::uint64_t buffer_seed = derive_seed(ms, "bufupd/" + g_k.id,
                                                episode_index);

  switch (state.method) {
    case ClMethod::e3: {
      Embedder expert = train_expert(state.f0, d_k, state.reals, tc);
      expert.freeze();
      state.ensemble.experts.push_back(std::move(expert));
      state.buffer = update_memory_buffer(state.buffer, d_k, buffer_seed);
      FusionNetwork fresh = build_ekfn(
          state.ensemble.size(), state.ensemble.embed_dim, cfg.ekfn,
          derive_seed(ms, "ekfn_init/" + g_k.id, episode_index));
      EkfnTrainConfig ec = cfg.ekfn_train;
      ec.seed = derive_seed(ms, "ekfn_train/" + g_k.id, episode_index);
      state.ekfn = train_ekfn(fresh, state.ensemble, state.buffer, ec);
      break;
    }
    case ClMethod::majority: {
      state.expert_detectors.push_back(
          train_expert_detector(state.f0, d_k, state.reals, tc));
      break;
    }
    case ClMethod::finetune: {
      state.model = finetune_step(state.model, d_k, state.reals, tc);
      break;
    }
    case ClMethod::er: {
      state.buffer = update_memory_buffer(state.buffer, d_k, buffer_seed);
      state.model = er_step(state.model, state.buffer, d_k, tc);
      break;
    }
    case ClMethod::lwf: {
      ClMethodConfig mc;
      mc.method = ClMethod::lwf;
      mc.lambda_distill = cfg.lwf_lambda;
      mc.temperature = cfg.lwf_temperature;
      mc.train = tc;
      DetectorModel prev = state.model.clone();
      state.model = lwf_step(state.model, prev, d_k, state.reals, mc);
      break;
    }
    case ClMethod::baseline:
      break;
  }
  state.seen_generators.push_back(g_k.id);

  EpisodeReport report;
  report.method = to_string(state.method);
  report.episode = episode_index;
  report.generator_id = g_k.id;
  evaluate_state(state, corpus, report);
  if (mixed_eval) {
    report.mixed_auc = mixed_auc_eval(state, corpus, g_k.id, cfg, episode_index);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

ProtocolOutcome run_protocol_with_assets(const RunConfig& cfg,
                                         const RunAssets& assets) {
  cfg.validate();
  if (cfg.protocol != "single" && cfg.protocol != "sequential") {
    throw ConfigError("run_protocol: protocol must be single or sequential");
  }
  ProtocolOutcome outcome;
  outcome.result.protocol = cfg.protocol;
  outcome.result.config_fingerprint = cfg.fingerprint();
  outcome.result.master_seed = cfg.master_seed;

  const std::vector<GeneratorSpec>& emerging = cfg.corpus.emerging_specs;

  for (ClMethod method : cfg.methods) {
    if (emerging.empty()) {
      // Nothing emerged: the report carries only the baseline source row.
      MethodState state = init_method_state(method, assets);
      if (method == ClMethod::e3) {
        FusionNetwork fresh =
            build_ekfn(1, state.ensemble.embed_dim, cfg.ekfn,
                       derive_seed(cfg.master_seed, "ekfn_init/initial"));
        EkfnTrainConfig ec = cfg.ekfn_train;
        ec.seed = derive_seed(cfg.master_seed, "ekfn_train/initial");
        state.ekfn = train_ekfn(fresh, state.ensemble, state.buffer, ec);
      }
      EpisodeReport report;
      report.method = to_string(method);
      report.episode = 0;
      evaluate_state(state, assets.corpus, report);
      outcome.result.episodes.push_back(std::move(report));
      outcome.final_states.push_back(std::move(state));
      continue;
    }
    if (cfg.protocol == "single") {
      MethodState last;
      for (std::size_t i = 0; i < emerging.size(); ++i) {
        MethodState state = init_method_state(method, assets);
        outcome.result.episodes.push_back(
            run_episode(state, emerging[i], assets.corpus, cfg,
                        static_cast<int>(i) + 1, /*mixed_eval=*/true));
        last = std::move(state);
      }
      outcome.final_states.push_back(std::move(last));
    } else {
      MethodState state = init_method_state(method, assets);
      for (std::size_t i = 0; i < emerging.size(); ++i) {
        outcome.result.episodes.push_back(
            run_episode(state, emerging[i], assets.corpus, cfg,
                        static_cast<int>(i) + 1, /*mixed_eval=*/false));
      }
      outcome.final_states.push_back(std::move(state));
    }
  }
  return outcome;
}

ProtocolOutcome run_protocol(const RunConfig& cfg) {
  return run_protocol_with_assets(cfg, prepare_assets(cfg));
}

std::vector<ProtocolOutcome> run_sweep(const RunConfig& cfg) {
  RunConfig base = cfg;
  base.protocol = "sweep";
  base.validate();
  RunConfig seq = cfg;
  seq.protocol = "sequential";
  const RunAssets assets = prepare_assets(seq);
  std::vector<ProtocolOutcome> out;
  for (int budget : cfg.sweep_budgets) {
    RunConfig c = seq;
    c.new_data_budget = budget;
    ProtocolOutcome o = run_protocol_with_assets(c, assets);
    o.result.label = "budget=" + std::to_string(budget);
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<ProtocolOutcome> run_arch(const RunConfig& cfg) {
  RunConfig base = cfg;
  base.protocol = "arch";
  base.validate();
  std::vector<ProtocolOutcome> out;
  for (const std::string& preset : cfg.arch_presets) {
    RunConfig c = cfg;
    c.protocol = "sequential";
    c.detector.preset = preset_from_string(preset);
    ProtocolOutcome o = run_protocol(c);
    o.result.label = "preset=" + preset;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace e3
