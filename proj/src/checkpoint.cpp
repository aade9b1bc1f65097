// SPDX-License-Identifier: Apache-2.0
#include "e3/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "e3/errors.hpp"

namespace e3 {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'E', '3', 'L', 'A', 'B', 'C', 'K', '1'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoints assume a little-endian host");

void write_file(const std::string& path, const std::string& kind,
                const json& meta, const std::vector<nn::NamedParam>& tensors) {
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["kind"] = kind;
  manifest["meta"] = meta;
  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    entry["length"] = static_cast<std::uint64_t>(t.size());
    dir.push_back(entry);
    offset += static_cast<std::uint64_t>(t.size());
  }
  manifest["tensors"] = dir;
  const std::string header = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
  json manifest;
  std::vector<float> payload;
};

LoadedCheckpoint read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic in " + path);
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in) throw FormatError("checkpoint: truncated header in " + path);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("checkpoint: truncated manifest in " + path);

  LoadedCheckpoint ck;
  try {
    ck.manifest = json::parse(header);
    if (ck.manifest.at("format_version").get<int>() != kFormatVersion) {
      throw FormatError("checkpoint: unsupported format_version in " + path);
    }
    std::uint64_t total = 0, expected_offset = 0;
    for (const json& entry : ck.manifest.at("tensors")) {
      if (entry.at("offset").get<std::uint64_t>() != expected_offset) {
        throw FormatError("checkpoint: non-contiguous tensor directory");
      }
      const std::uint64_t len = entry.at("length").get<std::uint64_t>();
      expected_offset += len;
      total += len;
    }
    ck.payload.resize(total);
    in.read(reinterpret_cast<char*>(ck.payload.data()),
            static_cast<std::streamsize>(total * sizeof(float)));
    if (static_cast<std::uint64_t>(in.gcount()) != total * sizeof(float)) {
      throw FormatError("checkpoint: truncated payload in " + path);
    }
    char extra;
    if (in.read(&extra, 1)) {
      throw FormatError("checkpoint: trailing bytes in " + path);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  return ck;
}

// Strict positional restore: directory entries must match the freshly built
// model's parameter names and shapes one for one.
void assign_params(const LoadedCheckpoint& ck,
                   std::vector<nn::NamedParam> targets) {
  const json& dir = ck.manifest.at("tensors");
  if (dir.size() != targets.size()) {
    throw FormatError("checkpoint: tensor count mismatch");
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const json& entry = dir[i];
    auto& [name, t] = targets[i];
    if (entry.at("name").get<std::string>() != name) {
      throw FormatError("checkpoint: unexpected tensor '" +
                        entry.at("name").get<std::string>() + "', wanted '" +
                        name + "'");
    }
    if (entry.at("shape").get<Shape>() != t.shape()) {
      throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    }
    const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
    std::copy_n(ck.payload.begin() + static_cast<std::ptrdiff_t>(off),
                t.size(), t.values().begin());
  }
}

json detector_meta(const DetectorConfig& cfg) {
  return json{{"preset", to_string(cfg.preset)},
              {"embed_dim", cfg.embed_dim},
              {"highpass", cfg.highpass},
              {"patch_size", cfg.patch_size}};
}

DetectorConfig detector_config_from_meta(const json& meta) {
  DetectorConfig cfg;
  cfg.preset = preset_from_string(meta.at("preset").get<std::string>());
  cfg.embed_dim = meta.at("embed_dim").get<int>();
  cfg.highpass = meta.at("highpass").get<bool>();
  cfg.patch_size = meta.at("patch_size").get<int>();
  return cfg;
}

json ekfn_meta(const FusionNetwork& f) {
  return json{{"layers", f.arch.layers},     {"heads", f.arch.heads},
              {"ff_mult", f.arch.ff_mult},   {"mlp_hidden", f.arch.mlp_hidden},
              {"variant", to_string(f.arch.variant)},
              {"num_experts", f.num_experts}, {"d", f.d}};
}

std::vector<nn::NamedParam> prefixed(std::vector<nn::NamedParam> params,
                                     const std::string& prefix) {
  for (auto& [name, t] : params) name = prefix + name;
  return params;
}

}  // namespace

void save_detector_checkpoint(const DetectorModel& model,
                              const std::string& path) {
  write_file(path, "detector", detector_meta(model.embedder.config),
             model.named_params());
}

DetectorModel load_detector_checkpoint(const std::string& path) {
  const LoadedCheckpoint ck = read_file(path);
  try {
    if (ck.manifest.at("kind").get<std::string>() != "detector") {
      throw FormatError("checkpoint: not a detector checkpoint: " + path);
    }
    DetectorModel model = build_detector(
        detector_config_from_meta(ck.manifest.at("meta")), /*seed=*/0);
    assign_params(ck, model.named_params());
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
}

void save_e3_checkpoint(const E3Checkpoint& state, const std::string& path) {
  json meta;
  meta["detector"] = detector_meta(state.f0.embedder.config);
  meta["ekfn"] = ekfn_meta(state.ekfn);
  meta["num_experts"] = state.ensemble.size();
  std::vector<nn::NamedParam> tensors =
      prefixed(state.f0.named_params(), "f0.");
  for (int i = 1; i < state.ensemble.size(); ++i) {
    std::vector<nn::NamedParam> expert;
    state.ensemble.experts[static_cast<std::size_t>(i)].collect(
        expert, "embedder");
    for (auto& p : prefixed(std::move(expert), "expert" + std::to_string(i) + "."))
      tensors.push_back(std::move(p));
  }
  for (auto& p : prefixed(state.ekfn.named_params(), "ekfn."))
    tensors.push_back(std::move(p));
  write_file(path, "e3", meta, tensors);
}

E3Checkpoint load_e3_checkpoint(const std::string& path) {
  const LoadedCheckpoint ck = read_file(path);
  try {
    if (ck.manifest.at("kind").get<std::string>() != "e3") {
      throw FormatError("checkpoint: not an e3 checkpoint: " + path);
    }
    const json& meta = ck.manifest.at("meta");
    const DetectorConfig dcfg = detector_config_from_meta(meta.at("detector"));
    const json& em = meta.at("ekfn");
    EkfnArch arch;
    arch.layers = em.at("layers").get<int>();
    arch.heads = em.at("heads").get<int>();
    arch.ff_mult = em.at("ff_mult").get<int>();
    arch.mlp_hidden = em.at("mlp_hidden").get<int>();
    arch.variant = ekfn_variant_from_string(em.at("variant").get<std::string>());
    const int num_experts = meta.at("num_experts").get<int>();

    E3Checkpoint state;
    state.f0 = build_detector(dcfg, /*seed=*/0);
    state.ensemble.embed_dim = dcfg.embed_dim;
    state.ensemble.experts.push_back(state.f0.embedder);  // shared handles
    for (int i = 1; i < num_experts; ++i) {
      state.ensemble.experts.push_back(build_detector(dcfg, 0).embedder);
    }
    state.ekfn = build_ekfn(num_experts, em.at("d").get<int>(), arch, 0);

    std::vector<nn::NamedParam> tensors =
        prefixed(state.f0.named_params(), "f0.");
    for (int i = 1; i < num_experts; ++i) {
      std::vector<nn::NamedParam> expert;
      state.ensemble.experts[static_cast<std::size_t>(i)].collect(expert,
                                                                  "embedder");
      for (auto& p :
           prefixed(std::move(expert), "expert" + std::to_string(i) + "."))
        tensors.push_back(std::move(p));
    }
    for (auto& p : prefixed(state.ekfn.named_params(), "ekfn."))
      tensors.push_back(std::move(p));
    assign_params(ck, std::move(tensors));

    // Rebind expert 0 to an independent frozen copy of f0's embedder.
    state.ensemble.experts[0] = state.f0.embedder.clone();
    for (Embedder& e : state.ensemble.experts) e.freeze();
    return state;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
}

void save_majority_checkpoint(const std::vector<DetectorModel>& experts,
                              const std::string& path) {
  if (experts.empty()) {
    throw ContractError("checkpoint: empty majority ensemble");
  }
  json meta;
  meta["detector"] = detector_meta(experts.front().embedder.config);
  meta["count"] = static_cast<int>(experts.size());
  std::vector<nn::NamedParam> tensors;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    for (auto& p : prefixed(experts[i].named_params(),
                            "expert" + std::to_string(i) + "."))
      tensors.push_back(std::move(p));
  }
  write_file(path, "majority", meta, tensors);
}

std::vector<DetectorModel> load_majority_checkpoint(const std::string& path) {
  const LoadedCheckpoint ck = read_file(path);
  try {
    if (ck.manifest.at("kind").get<std::string>() != "majority") {
      throw FormatError("checkpoint: not a majority checkpoint: " + path);
    }
    const json& meta = ck.manifest.at("meta");
    const DetectorConfig dcfg = detector_config_from_meta(meta.at("detector"));
    const int count = meta.at("count").get<int>();
    std::vector<DetectorModel> experts;
    std::vector<nn::NamedParam> tensors;
    for (int i = 0; i < count; ++i) {
      experts.push_back(build_detector(dcfg, /*seed=*/0));
      for (auto& p : prefixed(experts.back().named_params(),
                              "expert" + std::to_string(i) + "."))
        tensors.push_back(std::move(p));
    }
    assign_params(ck, std::move(tensors));
    return experts;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
}

std::string checkpoint_kind(const std::string& path) {
  const LoadedCheckpoint ck = read_file(path);
  try {
    return ck.manifest.at("kind").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
}

}  // namespace e3
