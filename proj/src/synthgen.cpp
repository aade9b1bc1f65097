// SPDX-License-Identifier: Apache-2.0
#include "e3/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "e3/errors.hpp"

namespace e3 {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// ---- minimal radix-2 FFT (used only to synthesize 1/f^alpha fields) --------

void fft1d(std::complex<float>* a, int n, int stride, bool inverse) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i * stride], a[j * stride]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = kTwoPi / len * (inverse ? 1.0 : -1.0);
    const std::complex<float> wl(static_cast<float>(std::cos(ang)),
                                 static_cast<float>(std::sin(ang)));
    for (int i = 0; i < n; i += len) {
      std::complex<float> w(1.0f, 0.0f);
      for (int j = 0; j < len / 2; ++j) {
        const std::complex<float> u = a[(i + j) * stride];
        const std::complex<float> v = a[(i + j + len / 2) * stride] * w;
        a[(i + j) * stride] = u + v;
        a[(i + j + len / 2) * stride] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const float inv = 1.0f / static_cast<float>(n);
    for (int i = 0; i < n; ++i) a[i * stride] *= inv;
  }
}

void fft2d(std::vector<std::complex<float>>& a, int n, bool inverse) {
  for (int r = 0; r < n; ++r) fft1d(a.data() + r * n, n, 1, inverse);
  for (int c = 0; c < n; ++c) fft1d(a.data() + c, n, n, inverse);
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

float image_mean(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += x;
  return static_cast<float>(acc / static_cast<double>(v.size()));
}

float image_std(const std::vector<float>& v, float mu) {
  double acc = 0.0;
  for (float x : v) {
    const double c = static_cast<double>(x) - mu;
    acc += c * c;
  }
  return static_cast<float>(std::sqrt(acc / static_cast<double>(v.size())));
}

}  // namespace

TraceFamily trace_family_from_string(const std::string& name) {
  if (name == "checkerboard") return TraceFamily::checkerboard;
  if (name == "spectral_peak") return TraceFamily::spectral_peak;
  if (name == "block_quant") return TraceFamily::block_quant;
  if (name == "fixed_pattern") return TraceFamily::fixed_pattern;
  if (name == "noise_shaping") return TraceFamily::noise_shaping;
  throw ConfigError("unknown trace family: " + name);
}

std::string to_string(TraceFamily family) {
  switch (family) {
    case TraceFamily::checkerboard: return "checkerboard";
    case TraceFamily::spectral_peak: return "spectral_peak";
    case TraceFamily::block_quant: return "block_quant";
    case TraceFamily::fixed_pattern: return "fixed_pattern";
    case TraceFamily::noise_shaping: return "noise_shaping";
  }
  throw ConfigError("unknown trace family enum value");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw ConfigError("unknown split enum value");
}

double GeneratorSpec::param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) {
    throw ConfigError("generator '" + id + "': missing parameter '" + key +
                      "'");
  }
  return it->second;
}

void GeneratorSpec::validate() const {
  if (id.empty() || id == "real") {
    throw ConfigError("generator id must be nonempty and not 'real'");
  }
  std::set<std::string> allowed;
  switch (family) {
    case TraceFamily::checkerboard: allowed = {"period", "amplitude"}; break;
    case TraceFamily::spectral_peak:
      allowed = {"freq_x", "freq_y", "amplitude"};
      break;
    case TraceFamily::block_quant: allowed = {"step", "amplitude"}; break;
    case TraceFamily::fixed_pattern: allowed = {"amplitude"}; break;
    case TraceFamily::noise_shaping: allowed = {"amplitude"}; break;
  }
  for (const auto& [key, value] : params) {
    if (!allowed.count(key)) {
      throw ConfigError("generator '" + id + "': unknown parameter '" + key +
                        "'");
    }
  }
  for (const std::string& key : allowed) param(key);  // presence check
  if (param("amplitude") <= 0.0) {
    throw ConfigError("generator '" + id + "': amplitude must be positive");
  }
  if (family == TraceFamily::checkerboard && param("period") < 1.0) {
    throw ConfigError("generator '" + id + "': period must be >= 1");
  }
  if (family == TraceFamily::block_quant && param("step") <= 0.0) {
    throw ConfigError("generator '" + id + "': step must be positive");
  }
}

void CorpusConfig::validate() const {
  if (image_size < 16) throw ConfigError("corpus: image_size must be >= 16");
  if (patch_size < 1 || patch_size > image_size) {
    throw ConfigError("corpus: patch_size must be in [1, image_size]");
  }
  if (real_counts.train < 0 || real_counts.val < 0 || real_counts.test < 0 ||
      gen_counts.train < 0 || gen_counts.val < 0 || gen_counts.test < 0) {
    throw ConfigError("corpus: split counts must be nonnegative");
  }
  std::set<std::string> ids;
  for (const auto* roster : {&baseline_specs, &emerging_specs}) {
    for (const GeneratorSpec& spec : *roster) {
      spec.validate();
      if (!ids.insert(spec.id).second) {
        throw ConfigError("corpus: duplicate generator id '" + spec.id + "'");
      }
    }
  }
}

const Corpus::SourceEntry& Corpus::entry(const std::string& source_id) const {
  for (const SourceEntry& e : manifest) {
    if (e.id == source_id) return e;
  }
  throw LookupError("corpus: unknown source '" + source_id + "'");
}

bool Corpus::has_source(const std::string& source_id) const {
  for (const SourceEntry& e : manifest) {
    if (e.id == source_id) return true;
  }
  return false;
}

std::vector<std::string> Corpus::source_ids() const {
  std::vector<std::string> out;
  for (const SourceEntry& e : manifest) out.push_back(e.id);
  return out;
}

LabeledImage generate_real(std::uint64_t seed, int index, int size) {
  if (size < 16) throw ConfigError("generate_real: size must be >= 16");
  RngStream rng(seed, "real", static_cast<std::uint64_t>(index));

  const float alpha = rng.uniform(0.8f, 1.4f);
  const int n = next_pow2(size);

  // White Gaussian noise filtered by 1/f^alpha in the frequency domain.
  std::vector<std::complex<float>> grid(static_cast<std::size_t>(n) * n);
  for (auto& c : grid) c = std::complex<float>(rng.normal(), 0.0f);
  fft2d(grid, n, /*inverse=*/false);
  for (int fy = 0; fy < n; ++fy) {
    const int sy = std::min(fy, n - fy);
    for (int fx = 0; fx < n; ++fx) {
      const int sx = std::min(fx, n - fx);
      if (sx == 0 && sy == 0) {
        grid[static_cast<std::size_t>(fy) * n + fx] = 0.0f;
        continue;
      }
      const float fr = std::sqrt(static_cast<float>(sx * sx + sy * sy)) /
                       static_cast<float>(n);
      const float gain = std::pow(fr, -alpha);
      grid[static_cast<std::size_t>(fy) * n + fx] *= gain;
    }
  }
  fft2d(grid, n, /*inverse=*/true);

  LabeledImage img;
  img.height = size;
  img.width = size;
  img.pixels.resize(static_cast<std::size_t>(size) * size);
  const int off = (n - size) / 2;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      img.pixels[static_cast<std::size_t>(y) * size + x] =
          grid[static_cast<std::size_t>(y + off) * n + (x + off)].real();
    }
  }

  // Normalize the field before composing with blobs.
  const float mu = image_mean(img.pixels);
  const float sd = image_std(img.pixels, mu);
  const float inv_sd = sd > 1e-12f ? 1.0f / sd : 0.0f;
  for (float& p : img.pixels) p = (p - mu) * inv_sd;

  const int blobs = 1 + rng.next_int(3);
  for (int b = 0; b < blobs; ++b) {
    const float cx = rng.uniform(0.0f, static_cast<float>(size));
    const float cy = rng.uniform(0.0f, static_cast<float>(size));
    const float sx = rng.uniform(static_cast<float>(size) / 10.0f,
                                 static_cast<float>(size) / 4.0f);
    const float sy = rng.uniform(static_cast<float>(size) / 10.0f,
                                 static_cast<float>(size) / 4.0f);
    const float amp =
        rng.uniform(0.6f, 1.8f) * (rng.next_float() < 0.5f ? -1.0f : 1.0f);
    for (int y = 0; y < size; ++y) {
      const float dy = (static_cast<float>(y) - cy) / sy;
      for (int x = 0; x < size; ++x) {
        const float dx = (static_cast<float>(x) - cx) / sx;
        img.pixels[static_cast<std::size_t>(y) * size + x] +=
            amp * std::exp(-0.5f * (dx * dx + dy * dy));
      }
    }
  }

  float lo = img.pixels[0], hi = img.pixels[0];
  for (float p : img.pixels) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  if (hi - lo < 1e-12f) {
    std::fill(img.pixels.begin(), img.pixels.end(), 0.5f);
  } else {
    const float s = 0.8f / (hi - lo);
    for (float& p : img.pixels) p = 0.1f + (p - lo) * s;
  }

  img.label = 0;
  img.source_id = "real";
  img.index = index;
  return img;
}

LabeledImage apply_trace(const LabeledImage& base, const GeneratorSpec& spec,
                         std::uint64_t noise_seed) {
  if (base.label != 0) {
    throw ContractError("apply_trace: base must be a real image");
  }
  const int h = base.height, w = base.width;
  LabeledImage img = base;
  const float a = static_cast<float>(spec.param("amplitude"));

  switch (spec.family) {
    case TraceFamily::checkerboard: {
      const int p = static_cast<int>(spec.param("period"));
      if (p < 1) throw ConfigError("checkerboard: period must be >= 1");
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int parity = (x / p + y / p) & 1;
          img.pixels[static_cast<std::size_t>(y) * w + x] +=
              parity == 0 ? a : -a;
        }
      }
      break;
    }
    case TraceFamily::spectral_peak: {
      const float fx = static_cast<float>(spec.param("freq_x"));
      const float fy = static_cast<float>(spec.param("freq_y"));
      RngStream rng(spec.fingerprint_seed, "phase");
      const float phase = static_cast<float>(kTwoPi) * rng.next_float();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const float arg = static_cast<float>(kTwoPi) *
                                (fx * static_cast<float>(x) +
                                 fy * static_cast<float>(y)) +
                            phase;
          img.pixels[static_cast<std::size_t>(y) * w + x] += a * std::sin(arg);
        }
      }
      break;
    }
    case TraceFamily::block_quant: {
      const float q = static_cast<float>(spec.param("step"));
      constexpr int kBlock = 8;
      for (int by = 0; by < h; by += kBlock) {
        for (int bx = 0; bx < w; bx += kBlock) {
          const int ey = std::min(by + kBlock, h);
          const int ex = std::min(bx + kBlock, w);
          float mu = 0.0f;
          for (int y = by; y < ey; ++y) {
            for (int x = bx; x < ex; ++x) {
              mu += img.pixels[static_cast<std::size_t>(y) * w + x];
            }
          }
          mu /= static_cast<float>((ey - by) * (ex - bx));
          const float snapped = std::round(mu / q) * q;
          const float delta = a * (snapped - mu);
          for (int y = by; y < ey; ++y) {
            for (int x = bx; x < ex; ++x) {
              img.pixels[static_cast<std::size_t>(y) * w + x] += delta;
            }
          }
        }
      }
      break;
    }
    case TraceFamily::fixed_pattern: {
      RngStream rng(spec.fingerprint_seed, "pattern");
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const float pat = 2.0f * rng.next_float() - 1.0f;
          img.pixels[static_cast<std::size_t>(y) * w + x] += a * pat;
        }
      }
      break;
    }
    case TraceFamily::noise_shaping: {
      RngStream rng(noise_seed, "noise");
      std::vector<float> noise(static_cast<std::size_t>(h) * w);
      for (float& v : noise) v = rng.normal();
      // High-pass: subtract the local 3x3 box mean (edges replicate).
      std::vector<float> hp(noise.size());
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          float acc = 0.0f;
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = std::clamp(y + dy, 0, h - 1);
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = std::clamp(x + dx, 0, w - 1);
              acc += noise[static_cast<std::size_t>(yy) * w + xx];
            }
          }
          hp[static_cast<std::size_t>(y) * w + x] =
              noise[static_cast<std::size_t>(y) * w + x] - acc / 9.0f;
        }
      }
      const float mu = image_mean(hp);
      const float sd = image_std(hp, mu);
      const float inv = sd > 1e-12f ? 1.0f / sd : 0.0f;
      for (std::size_t i = 0; i < hp.size(); ++i) {
        img.pixels[i] += a * (hp[i] - mu) * inv;
      }
      break;
    }
  }

  for (float& p : img.pixels) p = std::clamp(p, 0.0f, 1.0f);
  img.label = 1;
  img.source_id = spec.id;
  img.index = base.index;
  return img;
}

Corpus build_corpus(const CorpusConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.config = config;

  corpus.manifest.push_back({"real", config.real_counts});
  for (const auto* roster : {&config.baseline_specs, &config.emerging_specs}) {
    for (const GeneratorSpec& spec : *roster) {
      corpus.manifest.push_back({spec.id, config.gen_counts});
    }
  }

  const std::uint64_t ms = config.master_seed;
  const std::uint64_t real_seed = mix64(ms ^ hash_label("source/real"));
  for (int i = 0; i < config.real_counts.total(); ++i) {
    corpus.images.push_back(generate_real(real_seed, i, config.image_size));
  }
  for (const auto* roster : {&config.baseline_specs, &config.emerging_specs}) {
    for (const GeneratorSpec& spec : *roster) {
      const std::uint64_t base_seed = mix64(ms ^ hash_label("base/" + spec.id));
      const std::uint64_t trace_seed =
          mix64(ms ^ hash_label("trace/" + spec.id));
      for (int i = 0; i < config.gen_counts.total(); ++i) {
        LabeledImage base = generate_real(base_seed, i, config.image_size);
        corpus.images.push_back(apply_trace(
            base, spec, mix64(trace_seed ^ static_cast<std::uint64_t>(i))));
      }
    }
  }
  return corpus;
}

LabeledImage extract_patch(const LabeledImage& img, int size, PatchMode mode,
                           std::uint64_t seed) {
  if (size > img.height || size > img.width) {
    throw DimensionError("extract_patch: patch larger than image");
  }
  int oy = 0, ox = 0;
  if (mode == PatchMode::center) {
    oy = (img.height - size) / 2;
    ox = (img.width - size) / 2;
  } else {
    RngStream rng(seed, "patch");
    oy = rng.next_int(img.height - size + 1);
    ox = rng.next_int(img.width - size + 1);
  }
  LabeledImage out;
  out.height = size;
  out.width = size;
  out.pixels.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    const float* src =
        img.pixels.data() + static_cast<std::size_t>(oy + y) * img.width + ox;
    std::copy(src, src + size,
              out.pixels.begin() + static_cast<std::size_t>(y) * size);
  }
  out.label = img.label;
  out.source_id = img.source_id;
  out.index = img.index;
  return out;
}

LabeledImage extract_patch_random(const LabeledImage& img, int size,
                                  RngStream& rng) {
  if (size > img.height || size > img.width) {
    throw DimensionError("extract_patch: patch larger than image");
  }
  const int oy = rng.next_int(img.height - size + 1);
  const int ox = rng.next_int(img.width - size + 1);
  LabeledImage out;
  out.height = size;
  out.width = size;
  out.pixels.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    const float* src =
        img.pixels.data() + static_cast<std::size_t>(oy + y) * img.width + ox;
    std::copy(src, src + size,
              out.pixels.begin() + static_cast<std::size_t>(y) * size);
  }
  out.label = img.label;
  out.source_id = img.source_id;
  out.index = img.index;
  return out;
}

namespace {

struct SourceRange {
  std::size_t begin;  // first image of the source in corpus.images
  SplitCounts counts;
};

SourceRange source_range(const Corpus& corpus, const std::string& source_id) {
  std::size_t off = 0;
  for (const Corpus::SourceEntry& e : corpus.manifest) {
    if (e.id == source_id) return {off, e.counts};
    off += static_cast<std::size_t>(e.counts.total());
  }
  throw LookupError("corpus: unknown source '" + source_id + "'");
}

}  // namespace

std::vector<LabeledImage> split_corpus(const Corpus& corpus,
                                       const std::string& source_id,
                                       Split split) {
  const SourceRange r = source_range(corpus, source_id);
  std::size_t begin = r.begin;
  int count = 0;
  switch (split) {
    case Split::train:
      count = r.counts.train;
      break;
    case Split::val:
      begin += static_cast<std::size_t>(r.counts.train);
      count = r.counts.val;
      break;
    case Split::test:
      begin += static_cast<std::size_t>(r.counts.train + r.counts.val);
      count = r.counts.test;
      break;
  }
  return {corpus.images.begin() + static_cast<std::ptrdiff_t>(begin),
          corpus.images.begin() + static_cast<std::ptrdiff_t>(begin) +
              count};
}

// ---- export / import --------------------------------------------------------

namespace {

using nlohmann::json;

json spec_to_json(const GeneratorSpec& spec) {
  return json{{"id", spec.id},
              {"family", to_string(spec.family)},
              {"params", spec.params},
              {"fingerprint_seed", spec.fingerprint_seed}};
}

GeneratorSpec spec_from_json(const json& j) {
  GeneratorSpec spec;
  spec.id = j.at("id").get<std::string>();
  spec.family = trace_family_from_string(j.at("family").get<std::string>());
  spec.params = j.at("params").get<std::map<std::string, double>>();
  spec.fingerprint_seed = j.at("fingerprint_seed").get<std::uint64_t>();
  return spec;
}

constexpr int kCorpusFormatVersion = 1;

}  // namespace

void export_corpus(const Corpus& corpus, const std::string& dir) {
  static_assert(std::endian::native == std::endian::little,
                "corpus export assumes a little-endian host");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("export_corpus: cannot create directory " + dir);

  json manifest;
  manifest["format_version"] = kCorpusFormatVersion;
  manifest["dtype"] = "float32-le";
  manifest["layout"] =
      "one raw file per split; images are [count x H x W] row-major, "
      "ordered by manifest source order then per-source index";
  manifest["image_size"] = corpus.config.image_size;
  manifest["patch_size"] = corpus.config.patch_size;
  manifest["master_seed"] = corpus.config.master_seed;
  json sources = json::array();
  for (const Corpus::SourceEntry& e : corpus.manifest) {
    sources.push_back(json{{"id", e.id},
                           {"train", e.counts.train},
                           {"val", e.counts.val},
                           {"test", e.counts.test}});
  }
  manifest["sources"] = sources;
  json baseline = json::array(), emerging = json::array();
  for (const GeneratorSpec& s : corpus.config.baseline_specs) {
    baseline.push_back(spec_to_json(s));
  }
  for (const GeneratorSpec& s : corpus.config.emerging_specs) {
    emerging.push_back(spec_to_json(s));
  }
  manifest["baseline_specs"] = baseline;
  manifest["emerging_specs"] = emerging;
  manifest["real_counts"] = json{{"train", corpus.config.real_counts.train},
                                 {"val", corpus.config.real_counts.val},
                                 {"test", corpus.config.real_counts.test}};
  manifest["gen_counts"] = json{{"train", corpus.config.gen_counts.train},
                                {"val", corpus.config.gen_counts.val},
                                {"test", corpus.config.gen_counts.test}};

  {
    std::ofstream out(std::filesystem::path(dir) / "manifest.json");
    if (!out) throw IoError("export_corpus: cannot write manifest.json");
    out << manifest.dump(2) << "\n";
  }

  for (Split split : {Split::train, Split::val, Split::test}) {
    std::ofstream out(
        std::filesystem::path(dir) / (to_string(split) + ".f32"),
        std::ios::binary);
    if (!out) throw IoError("export_corpus: cannot write split file");
    for (const Corpus::SourceEntry& e : corpus.manifest) {
      for (const LabeledImage& img : split_corpus(corpus, e.id, split)) {
        out.write(reinterpret_cast<const char*>(img.pixels.data()),
                  static_cast<std::streamsize>(img.pixels.size() *
                                               sizeof(float)));
      }
    }
  }
}

Corpus import_corpus(const std::string& dir) {
  json manifest;
  {
    std::ifstream in(std::filesystem::path(dir) / "manifest.json");
    if (!in) throw IoError("import_corpus: cannot open manifest.json");
    try {
      in >> manifest;
    } catch (const json::exception& e) {
      throw FormatError(std::string("import_corpus: bad manifest: ") +
                        e.what());
    }
  }
  try {
    if (manifest.at("format_version").get<int>() != kCorpusFormatVersion) {
      throw FormatError("import_corpus: unsupported format_version");
    }
    Corpus corpus;
    corpus.config.image_size = manifest.at("image_size").get<int>();
    corpus.config.patch_size = manifest.at("patch_size").get<int>();
    corpus.config.master_seed = manifest.at("master_seed").get<std::uint64_t>();
    const json& rc = manifest.at("real_counts");
    corpus.config.real_counts = {rc.at("train").get<int>(),
                                 rc.at("val").get<int>(),
                                 rc.at("test").get<int>()};
    const json& gc = manifest.at("gen_counts");
    corpus.config.gen_counts = {gc.at("train").get<int>(),
                                gc.at("val").get<int>(),
                                gc.at("test").get<int>()};
    for (const json& j : manifest.at("baseline_specs")) {
      corpus.config.baseline_specs.push_back(spec_from_json(j));
    }
    for (const json& j : manifest.at("emerging_specs")) {
      corpus.config.emerging_specs.push_back(spec_from_json(j));
    }
    for (const json& j : manifest.at("sources")) {
      corpus.manifest.push_back(
          {j.at("id").get<std::string>(),
           {j.at("train").get<int>(), j.at("val").get<int>(),
            j.at("test").get<int>()}});
    }

    const int size = corpus.config.image_size;
    const std::size_t px = static_cast<std::size_t>(size) * size;

    // Pre-size the image table, then fill split by split.
    std::size_t total = 0;
    for (const Corpus::SourceEntry& e : corpus.manifest) {
      total += static_cast<std::size_t>(e.counts.total());
    }
    corpus.images.resize(total);

    for (Split split : {Split::train, Split::val, Split::test}) {
      const auto path = std::filesystem::path(dir) / (to_string(split) + ".f32");
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("import_corpus: cannot open " + path.string());
      std::size_t source_base = 0;
      for (const Corpus::SourceEntry& e : corpus.manifest) {
        int count = 0;
        std::size_t split_off = 0;
        switch (split) {
          case Split::train:
            count = e.counts.train;
            split_off = 0;
            break;
          case Split::val:
            count = e.counts.val;
            split_off = static_cast<std::size_t>(e.counts.train);
            break;
          case Split::test:
            count = e.counts.test;
            split_off =
                static_cast<std::size_t>(e.counts.train + e.counts.val);
            break;
        }
        for (int i = 0; i < count; ++i) {
          LabeledImage& img = corpus.images[source_base + split_off +
                                            static_cast<std::size_t>(i)];
          img.height = size;
          img.width = size;
          img.pixels.resize(px);
          in.read(reinterpret_cast<char*>(img.pixels.data()),
                  static_cast<std::streamsize>(px * sizeof(float)));
          if (!in) {
            throw FormatError("import_corpus: truncated split file " +
                              path.string());
          }
          img.label = e.id == "real" ? 0 : 1;
          img.source_id = e.id;
          img.index = static_cast<int>(split_off) + i;
        }
        source_base += static_cast<std::size_t>(e.counts.total());
      }
      // Any trailing bytes indicate a manifest/file mismatch.
      char extra;
      if (in.read(&extra, 1)) {
        throw FormatError("import_corpus: split file larger than manifest " +
                          path.string());
      }
    }
    return corpus;
  } catch (const json::exception& e) {
    throw FormatError(std::string("import_corpus: bad manifest: ") + e.what());
  }
}

}  // namespace e3
