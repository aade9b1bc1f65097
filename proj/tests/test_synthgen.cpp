// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <set>

#include <doctest.h>

#include "e3/errors.hpp"
#include "e3/synthgen.hpp"

using namespace e3;

namespace {

GeneratorSpec checker_spec(double period, double amplitude,
                           const std::string& id = "cb") {
  return {id, TraceFamily::checkerboard,
          {{"period", period}, {"amplitude", amplitude}}, 42};
}

CorpusConfig tiny_corpus_config() {
  CorpusConfig cfg;
  cfg.image_size = 24;
  cfg.patch_size = 16;
  cfg.real_counts = {100, 0, 40};
  cfg.gen_counts = {100, 0, 40};
  cfg.baseline_specs = {
      checker_spec(2, 0.1, "b1"),
      {"b2", TraceFamily::spectral_peak,
       {{"freq_x", 0.2}, {"freq_y", 0.1}, {"amplitude", 0.05}}, 7},
      {"b3", TraceFamily::block_quant, {{"step", 0.1}, {"amplitude", 1.0}}, 8},
  };
  cfg.emerging_specs = {{"g1", TraceFamily::fixed_pattern,
                         {{"amplitude", 0.05}}, 9}};
  cfg.master_seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("generate_real determinism, range, and variation") {
  LabeledImage a = generate_real(5, 0, 32);
  LabeledImage b = generate_real(5, 0, 32);
  CHECK(a.pixels == b.pixels);
  CHECK(a.label == 0);
  CHECK(a.source_id == "real");

  int diff_total = 0;
  for (int idx = 0; idx < 100; ++idx) {
    LabeledImage x = generate_real(5, idx, 32);
    LabeledImage y = generate_real(5, idx + 1, 32);
    float lo = 1.0f, hi = 0.0f;
    int diff = 0;
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
      lo = std::min(lo, x.pixels[i]);
      hi = std::max(hi, x.pixels[i]);
      if (x.pixels[i] != y.pixels[i]) ++diff;
    }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);
    CHECK(diff >= static_cast<int>(x.pixels.size()) / 100);
    diff_total += diff;
  }
  CHECK(diff_total > 0);
  CHECK_THROWS_AS(generate_real(5, 0, 8), ConfigError);
}

TEST_CASE("apply_trace: zero amplitude is a no-op") {
  LabeledImage base = generate_real(1, 0, 24);
  for (GeneratorSpec spec : {
           checker_spec(1, 1.0),
           GeneratorSpec{"sp", TraceFamily::spectral_peak,
                         {{"freq_x", 0.2}, {"freq_y", 0.3}, {"amplitude", 1.0}},
                         3},
           GeneratorSpec{"bq", TraceFamily::block_quant,
                         {{"step", 0.1}, {"amplitude", 1.0}}, 4},
           GeneratorSpec{"fp", TraceFamily::fixed_pattern, {{"amplitude", 1.0}},
                         5},
           GeneratorSpec{"ns", TraceFamily::noise_shaping, {{"amplitude", 1.0}},
                         6},
       }) {
    spec.params["amplitude"] = 1e-30;
    LabeledImage out = apply_trace(base, spec, 123);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      CHECK(out.pixels[i] == doctest::Approx(base.pixels[i]).epsilon(1e-6));
    }
    CHECK(out.label == 1);
    CHECK(out.source_id == spec.id);
  }
}

TEST_CASE("checkerboard stamp on a constant image") {
  LabeledImage base;
  base.height = base.width = 16;
  base.pixels.assign(256, 0.5f);
  base.label = 0;
  base.source_id = "real";
  LabeledImage out = apply_trace(base, checker_spec(1, 0.1), 0);
  std::set<float> values(out.pixels.begin(), out.pixels.end());
  CHECK(values.size() == 2);
  CHECK(*values.begin() == doctest::Approx(0.4f));
  CHECK(*values.rbegin() == doctest::Approx(0.6f));
}

TEST_CASE("fixed_pattern difference is independent of the base image") {
  GeneratorSpec spec{"fp", TraceFamily::fixed_pattern, {{"amplitude", 0.01}},
                     999};
  LabeledImage b1 = generate_real(10, 0, 24);
  LabeledImage b2 = generate_real(10, 1, 24);
  LabeledImage s1 = apply_trace(b1, spec, 0);
  LabeledImage s2 = apply_trace(b2, spec, 1);
  // Small amplitude on mid-range pixels: no clipping, so the differences are
  // exactly the stamp.
  for (std::size_t i = 0; i < s1.pixels.size(); ++i) {
    const float d1 = s1.pixels[i] - b1.pixels[i];
    const float d2 = s2.pixels[i] - b2.pixels[i];
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-6));
  }
}

TEST_CASE("apply_trace keeps pixels in range and validates inputs") {
  LabeledImage base = generate_real(2, 3, 24);
  GeneratorSpec loud = checker_spec(1, 50.0);
  LabeledImage out = apply_trace(base, loud, 0);
  for (float p : out.pixels) {
    CHECK(p >= 0.0f);
    CHECK(p <= 1.0f);
  }
  CHECK_THROWS_AS(apply_trace(out, loud, 0), ContractError);  // synthetic base
  GeneratorSpec missing{"x", TraceFamily::spectral_peak, {{"amplitude", 0.1}},
                        0};
  CHECK_THROWS_AS(apply_trace(base, missing, 0), ConfigError);
}

TEST_CASE("build_corpus bookkeeping and determinism") {
  CorpusConfig cfg = tiny_corpus_config();
  Corpus corpus = build_corpus(cfg);
  CHECK(corpus.manifest.size() == 5);  // real + 3 baseline + 1 emerging
  CHECK(corpus.entry("real").counts.train == 100);
  CHECK(corpus.entry("b1").counts.test == 40);
  CHECK(corpus.images.size() == 100 + 40 + 4 * (100 + 40));

  Corpus again = build_corpus(cfg);
  REQUIRE(again.images.size() == corpus.images.size());
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    CHECK(corpus.images[i].pixels == again.images[i].pixels);
    CHECK(corpus.images[i].source_id == again.images[i].source_id);
  }

  // Baseline synthetic images split equally across baseline specs.
  int b_total = 0;
  for (const char* id : {"b1", "b2", "b3"}) {
    b_total += corpus.entry(id).counts.train;
    CHECK(corpus.entry(id).counts.train == 100);
  }
  CHECK(b_total == 300);

  CorpusConfig dup = cfg;
  dup.emerging_specs.push_back(checker_spec(2, 0.1, "b1"));
  CHECK_THROWS_AS(build_corpus(dup), ConfigError);
}

TEST_CASE("split_corpus bookkeeping") {
  Corpus corpus = build_corpus(tiny_corpus_config());
  CHECK(split_corpus(corpus, "real", Split::test).size() == 40);
  CHECK(split_corpus(corpus, "g1", Split::train).size() == 100);

  std::set<int> indices;
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (const LabeledImage& img : split_corpus(corpus, "b1", s)) {
      CHECK(indices.insert(img.index).second);  // disjoint across splits
      CHECK(img.source_id == "b1");
    }
  }
  CHECK_THROWS_AS(split_corpus(corpus, "nope", Split::train), LookupError);
}

TEST_CASE("extract_patch modes") {
  LabeledImage img = generate_real(3, 0, 48);
  LabeledImage whole = extract_patch(img, 48, PatchMode::center);
  CHECK(whole.pixels == img.pixels);

  LabeledImage center = extract_patch(img, 32, PatchMode::center);
  // Window origin (8,8).
  CHECK(center.pixels[0] == img.pixels[8 * 48 + 8]);
  CHECK(center.height == 32);

  LabeledImage r1 = extract_patch(img, 32, PatchMode::random, 5);
  LabeledImage r2 = extract_patch(img, 32, PatchMode::random, 5);
  CHECK(r1.pixels == r2.pixels);
  CHECK_THROWS_AS(extract_patch(img, 64, PatchMode::center), DimensionError);
}

TEST_CASE("corpus export/import round trip") {
  Corpus corpus = build_corpus(tiny_corpus_config());
  const std::string dir = "/tmp/e3lab_test_corpus";
  std::filesystem::remove_all(dir);
  export_corpus(corpus, dir);
  Corpus back = import_corpus(dir);
  REQUIRE(back.images.size() == corpus.images.size());
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    CHECK(back.images[i].pixels == corpus.images[i].pixels);
    CHECK(back.images[i].source_id == corpus.images[i].source_id);
    CHECK(back.images[i].label == corpus.images[i].label);
    CHECK(back.images[i].index == corpus.images[i].index);
  }
  std::filesystem::remove_all(dir);
}
