// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "e3/checkpoint.hpp"
#include "e3/config.hpp"
#include "e3/errors.hpp"
#include "e3/protocol.hpp"
#include "e3/report.hpp"

using namespace e3;

namespace {

RunConfig tiny_run_config() {
  RunConfig cfg = default_config();
  cfg.master_seed = 5;
  cfg.buffer_capacity = 24;
  cfg.new_data_budget = 12;
  cfg.corpus.image_size = 24;
  cfg.corpus.patch_size = 16;
  cfg.detector.patch_size = 16;
  cfg.detector.embed_dim = 8;
  cfg.corpus.real_counts = {60, 0, 10};
  cfg.corpus.gen_counts = {30, 0, 8};
  cfg.corpus.baseline_specs.resize(2);
  cfg.corpus.emerging_specs.resize(2);
  cfg.baseline_train_per_spec = 20;
  cfg.detector_train.epochs = 1;
  cfg.detector_train.batch_size = 16;
  cfg.expert_train.epochs = 1;
  cfg.expert_train.batch_size = 16;
  cfg.ekfn_train.steps = 10;
  cfg.ekfn_train.batch_size = 8;
  cfg.methods = {ClMethod::e3, ClMethod::finetune};
  cfg.corpus.master_seed = cfg.master_seed;
  return cfg;
}

}  // namespace

TEST_CASE("config: minimal file applies documented defaults") {
  RunConfig cfg = parse_config_json("{\"master_seed\": 7}");
  CHECK(cfg.master_seed == 7);
  CHECK(cfg.buffer_capacity == 200);
  CHECK(cfg.new_data_budget == 100);
  CHECK(cfg.protocol == "sequential");
  CHECK(cfg.corpus.baseline_specs.size() == 3);
  CHECK(cfg.corpus.emerging_specs.size() == 5);
  CHECK(cfg.detector_train.learning_rate == doctest::Approx(5e-5));
  CHECK(cfg.methods.size() == 4);
}

TEST_CASE("config: unknown keys are named in the error") {
  try {
    parse_config_json("{\"master_seed\": 1, \"bogus\": 2}");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  try {
    parse_config_json("{\"master_seed\": 1, \"corpus\": {\"wat\": 1}}");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("corpus.wat") != std::string::npos);
  }
}

TEST_CASE("config: invariant violations rejected") {
  CHECK_THROWS_AS(
      parse_config_json("{\"master_seed\": 1, \"buffer_capacity\": 999}"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_config_json("{\"master_seed\": 1, \"new_data_budget\": 10}"),
      ConfigError);  // below floor(M/4)
  CHECK_THROWS_AS(parse_config_json("{}"), ConfigError);  // no master_seed
  CHECK_THROWS_AS(
      parse_config_json(
          "{\"master_seed\": 1, \"methods\": [\"e3\", \"e3\"]}"),
      ConfigError);
}

TEST_CASE("config: serialize/load round trip is a fixed point") {
  const std::string s1 = serialize_config(tiny_run_config());
  RunConfig code = parse_config_json(s1);
  const std::string s2 = serialize_config(code);
  CHECK(s1 == s2);
  CHECK(parse_config_json(s2).fingerprint() == code.fingerprint());
}

TEST_CASE("checkpoint: detector round trip preserves all predictions") {
  DetectorModel m = build_detector({Preset::small, 8, true, 16}, 3);
  std::vector<LabeledImage> probes;
  for (int i = 0; i < 16; ++i) probes.push_back(generate_real(8, i, 24));
  const std::string path = "/tmp/e3lab_test_detector.ckpt";
  save_detector_checkpoint(m, path);
  DetectorModel back = load_detector_checkpoint(path);
  CHECK(predict_scores(back, probes) == predict_scores(m, probes));
  CHECK(back.embedder.config.preset == Preset::small);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: corruption is detected, no partial model") {
  DetectorModel m = build_detector({Preset::tiny, 8, true, 16}, 4);
  const std::string path = "/tmp/e3lab_test_trunc.ckpt";
  save_detector_checkpoint(m, path);
  const auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size - 64);
  CHECK_THROWS_AS(load_detector_checkpoint(path), FormatError);
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_detector_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: e3 ensemble stores every expert plus the EKFN") {
  DetectorModel f0 = build_detector({Preset::tiny, 8, true, 16}, 5);
  E3Checkpoint state;
  state.f0 = f0;
  state.ensemble.embed_dim = 8;
  state.ensemble.experts.push_back(f0.embedder.clone());
  state.ensemble.experts.push_back(
      build_detector({Preset::tiny, 8, true, 16}, 6).embedder);
  for (Embedder& e : state.ensemble.experts) e.freeze();
  state.ekfn = build_ekfn(2, 8, EkfnArch{}, 7);

  const std::string path = "/tmp/e3lab_test_e3.ckpt";
  save_e3_checkpoint(state, path);
  CHECK(checkpoint_kind(path) == "e3");
  E3Checkpoint back = load_e3_checkpoint(path);
  CHECK(back.ensemble.size() == 2);

  std::vector<LabeledImage> probes;
  for (int i = 0; i < 8; ++i) probes.push_back(generate_real(9, i, 24));
  CHECK(e3_predict(back.ensemble, back.ekfn, probes) ==
        e3_predict(state.ensemble, state.ekfn, probes));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: majority ensemble round trip") {
  std::vector<DetectorModel> experts;
  for (int i = 0; i < 3; ++i) {
    experts.push_back(build_detector({Preset::tiny, 8, true, 16}, 10 + i));
  }
  const std::string path = "/tmp/e3lab_test_majority.ckpt";
  save_majority_checkpoint(experts, path);
  std::vector<DetectorModel> back = load_majority_checkpoint(path);
  std::vector<LabeledImage> probes;
  for (int i = 0; i < 8; ++i) probes.push_back(generate_real(11, i, 24));
  CHECK(majority_vote_predict(back, probes) ==
        majority_vote_predict(experts, probes));
  std::filesystem::remove(path);
}

TEST_CASE("report: empty result gives header-only CSVs") {
  ProtocolResult empty;
  empty.protocol = "sequential";
  empty.master_seed = 1;
  CHECK(detail_csv(empty) ==
        "method,protocol,episode,source_id,metric,value,seed\n");
  CHECK(summary_csv(empty) ==
        "method,protocol,episode,source_id,metric,value,seed\n");
}

TEST_CASE("sequential protocol: bookkeeping and byte-identical reruns") {
  RunConfig cfg = tiny_run_config();
  ProtocolOutcome a = run_protocol(cfg);
  ProtocolOutcome b = run_protocol(cfg);

  REQUIRE(a.result.episodes.size() == 4);  // 2 methods x 2 episodes
  const EpisodeReport& last_e3 = a.result.episodes[1];
  CHECK(last_e3.method == "e3");
  CHECK(last_e3.episode == 2);
  REQUIRE(last_e3.per_source_auc.size() == 3);
  CHECK(last_e3.per_source_auc[0].first == "baseline");
  CHECK(last_e3.per_source_auc[1].first == cfg.corpus.emerging_specs[0].id);
  CHECK(last_e3.per_source_auc[2].first == cfg.corpus.emerging_specs[1].id);
  double mean = 0.0;
  for (const auto& [s, v] : last_e3.per_source_auc) mean += v;
  CHECK(last_e3.avg_auc == doctest::Approx(mean / 3.0).epsilon(1e-12));

  CHECK(detail_csv(a.result) == detail_csv(b.result));
  CHECK(summary_csv(a.result) == summary_csv(b.result));

  // Per-method episode indices increase from 1.
  CHECK(a.result.episodes[0].episode == 1);
  CHECK(a.result.episodes[2].episode == 1);
  CHECK(a.result.episodes[2].method == "finetune");
}

TEST_CASE("report files: write, recompute summary, determinism") {
  RunConfig cfg = tiny_run_config();
  cfg.methods = {ClMethod::baseline};
  ProtocolOutcome out = run_protocol(cfg);
  const std::string dir = "/tmp/e3lab_test_report";
  std::filesystem::remove_all(dir);
  write_report(out.result, serialize_config(cfg), dir);

  std::ifstream d(std::filesystem::path(dir) / "detail.csv");
  std::stringstream ds;
  ds << d.rdbuf();
  CHECK(ds.str() == detail_csv(out.result));

  // Summary recomputation from detail matches the written summary (both are
  // %.10g-rounded means of the same per-source values).
  std::ifstream s(std::filesystem::path(dir) / "summary.csv");
  std::stringstream ss;
  ss << s.rdbuf();
  CHECK(summarize_detail_csv(ds.str()) == ss.str());
  std::filesystem::remove_all(dir);
}

TEST_CASE("single protocol reports mixed AUC and resets state per generator") {
  RunConfig cfg = tiny_run_config();
  cfg.protocol = "single";
  cfg.methods = {ClMethod::finetune};
  ProtocolOutcome out = run_protocol(cfg);
  REQUIRE(out.result.episodes.size() == 2);
  for (const EpisodeReport& ep : out.result.episodes) {
    CHECK(ep.mixed_auc.has_value());
    // Fresh state per generator: exactly baseline + that generator.
    CHECK(ep.per_source_auc.size() == 2);
  }
}
