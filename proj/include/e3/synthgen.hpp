// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "e3/rng.hpp"

namespace e3 {

// Simulated generator families. Each stamps a distinct forensic trace onto a
// clean image; amplitudes are calibrated so a detector trained on one set of
// families does not automatically detect the others.
enum class TraceFamily {
  checkerboard,   // +/- amplitude on a period-p lattice
  spectral_peak,  // single sinusoidal grating
  block_quant,    // 8x8 block means snapped to a quantization step
  fixed_pattern,  // fixed pseudo-random pattern keyed by fingerprint_seed
  noise_shaping,  // per-image high-pass-filtered noise
};

TraceFamily trace_family_from_string(const std::string& name);
std::string to_string(TraceFamily family);

struct GeneratorSpec {
  std::string id;
  TraceFamily family = TraceFamily::checkerboard;
  // Family-specific parameters; documented keys:
  //   checkerboard: period, amplitude
  //   spectral_peak: freq_x, freq_y, amplitude
  //   block_quant: step, amplitude
  //   fixed_pattern: amplitude
  //   noise_shaping: amplitude
  std::map<std::string, double> params;
  std::uint64_t fingerprint_seed = 0;

  double param(const std::string& key) const;
  // Throws ConfigError on missing/unknown keys or non-positive amplitude.
  void validate() const;
};

struct LabeledImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major, values in [0,1]
  int label = 0;              // 0 = real, 1 = synthetic
  std::string source_id;
  int index = 0;
};

enum class Split { train, val, test };
std::string to_string(Split split);

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
  int total() const { return train + val + test; }
};

struct CorpusConfig {
  int image_size = 48;
  int patch_size = 32;
  SplitCounts real_counts{600, 0, 40};
  SplitCounts gen_counts{200, 0, 40};
  std::vector<GeneratorSpec> baseline_specs;
  std::vector<GeneratorSpec> emerging_specs;
  std::uint64_t master_seed = 0;

  void validate() const;
};

struct Corpus {
  struct SourceEntry {
    std::string id;
    SplitCounts counts;
  };

  CorpusConfig config;
  std::vector<SourceEntry> manifest;  // "real" first, then specs in order
  // Images grouped by manifest order, per source ordered train|val|test with
  // per-source indices 0..total-1.
  std::vector<LabeledImage> images;

  const SourceEntry& entry(const std::string& source_id) const;
  bool has_source(const std::string& source_id) const;
  std::vector<std::string> source_ids() const;
};

// Clean "camera" image: 1/f^alpha Gaussian field plus 1-3 soft blobs,
// rescaled into [0.1, 0.9]. Pure function of (seed, index, size).
LabeledImage generate_real(std::uint64_t seed, int index, int size);

// Stamps the generator's trace onto a real-type base image and clips to
// [0,1]; output is labeled synthetic with the spec's id.
LabeledImage apply_trace(const LabeledImage& base, const GeneratorSpec& spec,
                         std::uint64_t noise_seed);

Corpus build_corpus(const CorpusConfig& config);

enum class PatchMode { center, random };
LabeledImage extract_patch(const LabeledImage& img, int size, PatchMode mode,
                           std::uint64_t seed = 0);
// Random-patch variant drawing from an existing stream (training loops).
LabeledImage extract_patch_random(const LabeledImage& img, int size,
                                  RngStream& rng);

std::vector<LabeledImage> split_corpus(const Corpus& corpus,
                                       const std::string& source_id,
                                       Split split);

// Directory export/import: manifest.json plus one raw little-endian float32
// file per nonempty split (images ordered by manifest source order).
void export_corpus(const Corpus& corpus, const std::string& dir);
Corpus import_corpus(const std::string& dir);

}  // namespace e3
