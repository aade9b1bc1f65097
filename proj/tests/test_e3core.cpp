// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "e3/e3core.hpp"
#include "e3/errors.hpp"

using namespace e3;

namespace {

std::vector<LabeledImage> real_pool(int n, std::uint64_t seed, int size = 24) {
  std::vector<LabeledImage> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_real(seed, i, size));
  return out;
}

std::vector<LabeledImage> synth_pool(int n, const std::string& id,
                                     std::uint64_t seed, int size = 24) {
  GeneratorSpec spec{id, TraceFamily::checkerboard,
                     {{"period", 1.0}, {"amplitude", 0.2}},
                     seed};
  std::vector<LabeledImage> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(apply_trace(generate_real(seed, i, size), spec, seed + i));
  }
  return out;
}

std::vector<LabeledImage> baseline_pool(int per_spec, std::uint64_t seed) {
  std::vector<LabeledImage> out;
  for (const char* id : {"b1", "b2", "b3"}) {
    std::vector<LabeledImage> part = synth_pool(per_spec, id, seed++);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

bool same_values(const std::vector<nn::NamedParam>& a,
                 const std::vector<nn::NamedParam>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first) return false;
    if (a[i].second.values() != b[i].second.values()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("memory buffer: initial layout") {
  MemoryBuffer buf =
      MemoryBuffer::initial(40, real_pool(30, 1), baseline_pool(10, 2), 9);
  CHECK(buf.capacity == 40);
  CHECK(buf.k == 0);
  CHECK(buf.reals.size() == 20);
  REQUIRE(buf.slots.size() == 1);
  CHECK(buf.slots[0].id == "baseline");
  CHECK(buf.slots[0].images.size() == 20);
  CHECK(buf.quota() == 20);
  // Equal draw across the three baseline specs (20 = 7+7+6).
  int counts[3] = {0, 0, 0};
  for (const LabeledImage& img : buf.slots[0].images) {
    if (img.source_id == "b1") ++counts[0];
    if (img.source_id == "b2") ++counts[1];
    if (img.source_id == "b3") ++counts[2];
  }
  CHECK(counts[0] + counts[1] + counts[2] == 20);
  CHECK(counts[0] >= 6);
  CHECK(counts[1] >= 6);
  CHECK(counts[2] >= 6);

  CHECK_THROWS_AS(MemoryBuffer::initial(41, real_pool(30, 1),
                                        baseline_pool(10, 2), 9),
                  ConfigError);
  CHECK_THROWS_AS(MemoryBuffer::initial(40, real_pool(10, 1),
                                        baseline_pool(10, 2), 9),
                  DataError);
}

TEST_CASE("memory buffer: update quotas at paper scale") {
  MemoryBuffer buf = MemoryBuffer::initial(1000, real_pool(500, 3, 16),
                                           baseline_pool(200, 4), 10);
  CHECK(buf.quota() == 500);
  std::vector<LabeledImage> d1 = synth_pool(300, "g1", 100, 16);
  MemoryBuffer b1 = update_memory_buffer(buf, d1, 11);
  CHECK(b1.k == 1);
  CHECK(b1.quota() == 250);
  REQUIRE(b1.slots.size() == 2);
  CHECK(b1.slots[0].images.size() == 250);
  CHECK(b1.slots[1].id == "g1");
  CHECK(b1.slots[1].images.size() == 250);
  CHECK(b1.synthetic_count() == 500);
  CHECK(b1.reals.size() == 500);

  // R is carried over untouched.
  for (std::size_t i = 0; i < b1.reals.size(); ++i) {
    CHECK(b1.reals[i].pixels == buf.reals[i].pixels);
  }

  // Same seed, same result.
  MemoryBuffer b1b = update_memory_buffer(buf, d1, 11);
  for (std::size_t i = 0; i < b1.slots[1].images.size(); ++i) {
    CHECK(b1.slots[1].images[i].index == b1b.slots[1].images[i].index);
  }

  // Quota sequence for k = 2..4: 166, 125, 100.
  MemoryBuffer cur = b1;
  const int expect[] = {166, 125, 100};
  for (int k = 2; k <= 4; ++k) {
    std::vector<LabeledImage> dk =
        synth_pool(300, "g" + std::to_string(k), 100 + k, 16);
    cur = update_memory_buffer(cur, dk, 20 + k);
    CHECK(cur.quota() == expect[k - 2]);
    for (const MemoryBuffer::Slot& slot : cur.slots) {
      CHECK(static_cast<int>(slot.images.size()) == expect[k - 2]);
    }
    CHECK(cur.synthetic_count() <= 500);
  }

  // |D_k| below the quota is a data error.
  std::vector<LabeledImage> small = synth_pool(10, "g9", 999, 16);
  CHECK_THROWS_AS(update_memory_buffer(cur, small, 1), DataError);
  CHECK_THROWS_AS(update_memory_buffer(cur, {}, 1), DataError);
}

TEST_CASE("train_expert: no-op preserves the embedder, f0 untouched") {
  DetectorConfig dcfg{Preset::tiny, 8, true, 16};
  DetectorModel f0 = build_detector(dcfg, 21);
  std::vector<LabeledImage> d_k = synth_pool(10, "g1", 5);
  std::vector<LabeledImage> reals = real_pool(10, 6);

  TrainConfig tc;
  tc.epochs = 0;
  Embedder e = train_expert(f0, d_k, reals, tc);
  std::vector<nn::NamedParam> pe, pf;
  e.collect(pe, "embedder");
  f0.embedder.collect(pf, "embedder");
  CHECK(same_values(pe, pf));

  tc.epochs = 1;
  tc.batch_size = 8;
  tc.seed = 1;
  DetectorModel before = f0.clone();
  Embedder e2 = train_expert(f0, d_k, reals, tc);
  CHECK(same_values(f0.named_params(), before.named_params()));
  std::vector<nn::NamedParam> pe2;
  e2.collect(pe2, "embedder");
  CHECK_FALSE(same_values(pe2, pf));

  CHECK_THROWS_AS(train_expert(f0, {}, reals, tc), DataError);
  CHECK_THROWS_AS(train_expert(f0, d_k, {}, tc), DataError);
}

TEST_CASE("build_ekfn: smallest instance and shape rules") {
  EkfnArch arch;
  FusionNetwork f = build_ekfn(1, 8, arch, 3);
  Tensor tokens = Tensor::from({1, 8}, std::vector<float>(8, 0.3f));
  Tensor logit = f.forward_logit(tokens);
  CHECK(logit.size() == 1);
  const float s = score_sigmoid(logit.item());
  CHECK(s > 0.0f);
  CHECK(s < 1.0f);

  FusionNetwork f4 = build_ekfn(4, 8, arch, 3);
  CHECK(f4.mlp1.w.shape() == Shape{32, arch.mlp_hidden});  // (k+1)*d inputs

  CHECK_THROWS_AS(build_ekfn(0, 8, arch, 3), ConfigError);
}

TEST_CASE("ekfn: all-ones transformer output reduces full to mlp_only") {
  EkfnArch full_arch;
  full_arch.variant = EkfnVariant::full;
  FusionNetwork full = build_ekfn(3, 8, full_arch, 17);
  // Closing LayerNorm with gamma=0, beta=1 forces every z to all-ones.
  std::fill(full.final_gamma.values().begin(), full.final_gamma.values().end(),
            0.0f);
  std::fill(full.final_beta.values().begin(), full.final_beta.values().end(),
            1.0f);

  EkfnArch mlp_arch;
  mlp_arch.variant = EkfnVariant::mlp_only;
  FusionNetwork mlp = build_ekfn(3, 8, mlp_arch, 99);
  mlp.mlp1.w.values() = full.mlp1.w.values();
  mlp.mlp1.b.values() = full.mlp1.b.values();
  mlp.mlp2.w.values() = full.mlp2.w.values();
  mlp.mlp2.b.values() = full.mlp2.b.values();

  RngStream rng(5, "tokens");
  std::vector<float> tok(24);
  for (float& x : tok) x = 2.0f * rng.next_float() - 1.0f;
  Tensor tokens = Tensor::from({3, 8}, tok);
  CHECK(full.forward_logit(tokens).item() ==
        mlp.forward_logit(tokens).item());
}

TEST_CASE("train_ekfn: no-op, frozen experts, determinism, contract") {
  DetectorConfig dcfg{Preset::tiny, 8, true, 16};
  DetectorModel f0 = build_detector(dcfg, 31);
  ExpertEnsemble ens;
  ens.embed_dim = 8;
  Embedder base = f0.embedder.clone();
  base.freeze();
  ens.experts.push_back(base);

  MemoryBuffer buf =
      MemoryBuffer::initial(20, real_pool(15, 41), baseline_pool(5, 42), 43);
  EkfnArch arch;
  FusionNetwork f = build_ekfn(1, 8, arch, 7);

  EkfnTrainConfig ec;
  ec.steps = 0;
  FusionNetwork same = train_ekfn(f, ens, buf, ec);
  CHECK(same_values(same.named_params(), f.named_params()));

  ec.steps = 12;
  ec.batch_size = 8;
  ec.seed = 2;
  std::vector<nn::NamedParam> expert_before;
  ens.experts[0].collect(expert_before, "e");
  std::vector<std::vector<float>> snapshot;
  for (auto& [n, t] : expert_before) snapshot.push_back(t.values());

  FusionNetwork t1 = train_ekfn(f, ens, buf, ec);
  FusionNetwork t2 = train_ekfn(f, ens, buf, ec);
  CHECK(same_values(t1.named_params(), t2.named_params()));
  CHECK_FALSE(same_values(t1.named_params(), f.named_params()));

  // Experts byte-identical before and after training.
  std::vector<nn::NamedParam> expert_after;
  ens.experts[0].collect(expert_after, "e");
  for (std::size_t i = 0; i < expert_after.size(); ++i) {
    CHECK(expert_after[i].second.values() == snapshot[i]);
  }

  FusionNetwork wrong = build_ekfn(2, 8, arch, 7);
  CHECK_THROWS_AS(train_ekfn(wrong, ens, buf, ec), ContractError);
}

TEST_CASE("ekfn retraining ignores previous weights") {
  DetectorConfig dcfg{Preset::tiny, 8, true, 16};
  DetectorModel f0 = build_detector(dcfg, 51);
  ExpertEnsemble ens;
  ens.embed_dim = 8;
  ens.experts.push_back(f0.embedder.clone());
  ens.experts.back().freeze();
  MemoryBuffer buf =
      MemoryBuffer::initial(20, real_pool(15, 52), baseline_pool(5, 53), 54);

  EkfnArch arch;
  EkfnTrainConfig ec;
  ec.steps = 8;
  ec.batch_size = 8;
  ec.seed = 5;
  // Two fresh builds with the same seed are bit-identical regardless of any
  // previous training history.
  FusionNetwork a = train_ekfn(build_ekfn(1, 8, arch, 77), ens, buf, ec);
  train_ekfn(build_ekfn(1, 8, arch, 123), ens, buf, ec);  // unrelated history
  FusionNetwork b = train_ekfn(build_ekfn(1, 8, arch, 77), ens, buf, ec);
  CHECK(same_values(a.named_params(), b.named_params()));
}

TEST_CASE("e3_predict: range and determinism") {
  DetectorConfig dcfg{Preset::tiny, 8, true, 16};
  DetectorModel f0 = build_detector(dcfg, 61);
  ExpertEnsemble ens;
  ens.embed_dim = 8;
  ens.experts.push_back(f0.embedder.clone());
  ens.experts.back().freeze();
  FusionNetwork f = build_ekfn(1, 8, EkfnArch{}, 62);

  std::vector<LabeledImage> imgs = real_pool(4, 63);
  imgs.push_back(imgs[0]);
  std::vector<double> scores = e3_predict(ens, f, imgs);
  for (double s : scores) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  CHECK(scores[0] == scores[4]);
}
