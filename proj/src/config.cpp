// SPDX-License-Identifier: Apache-2.0
#include "e3/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "e3/errors.hpp"

namespace e3 {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& ctx) {
  if (!j.is_object()) throw ConfigError("config: '" + ctx + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + ctx + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, const T& fallback,
         const std::string& ctx) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for key '" + ctx + key + "'");
  }
}

GeneratorSpec parse_spec(const json& j, const std::string& ctx) {
  check_keys(j, {"id", "family", "params", "fingerprint_seed"}, ctx);
  for (const char* key : {"id", "family", "params", "fingerprint_seed"}) {
    if (!j.contains(key)) {
      throw ConfigError("config: missing key '" + ctx + key + "'");
    }
  }
  GeneratorSpec spec;
  spec.id = j.at("id").get<std::string>();
  spec.family = trace_family_from_string(j.at("family").get<std::string>());
  if (!j.at("params").is_object()) {
    throw ConfigError("config: '" + ctx + "params' must be an object");
  }
  spec.params = j.at("params").get<std::map<std::string, double>>();
  spec.fingerprint_seed = j.at("fingerprint_seed").get<std::uint64_t>();
  return spec;
}

json spec_json(const GeneratorSpec& spec) {
  return json{{"id", spec.id},
              {"family", to_string(spec.family)},
              {"params", spec.params},
              {"fingerprint_seed", spec.fingerprint_seed}};
}

TrainConfig parse_train(const json& j, const TrainConfig& defaults,
                        const std::string& ctx) {
  check_keys(j,
             {"learning_rate", "epochs", "batch_size", "class_weighting",
              "lr_decay_factor", "lr_decay_every"},
             ctx);
  TrainConfig tc = defaults;
  tc.learning_rate = get_or(j, "learning_rate", defaults.learning_rate, ctx);
  tc.epochs = get_or(j, "epochs", defaults.epochs, ctx);
  tc.batch_size = get_or(j, "batch_size", defaults.batch_size, ctx);
  tc.class_weighting = class_weighting_from_string(get_or<std::string>(
      j, "class_weighting", to_string(defaults.class_weighting), ctx));
  tc.lr_decay_factor = get_or(j, "lr_decay_factor", defaults.lr_decay_factor, ctx);
  tc.lr_decay_every = get_or(j, "lr_decay_every", defaults.lr_decay_every, ctx);
  return tc;
}

json train_json(const TrainConfig& tc) {
  return json{{"learning_rate", tc.learning_rate},
              {"epochs", tc.epochs},
              {"batch_size", tc.batch_size},
              {"class_weighting", to_string(tc.class_weighting)},
              {"lr_decay_factor", tc.lr_decay_factor},
              {"lr_decay_every", tc.lr_decay_every}};
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.corpus.image_size = 48;
  cfg.corpus.patch_size = 32;
  cfg.corpus.real_counts = {600, 0, 40};
  cfg.corpus.gen_counts = {200, 0, 40};
  cfg.corpus.baseline_specs = {
      {"b_checker", TraceFamily::checkerboard,
       {{"period", 2.0}, {"amplitude", 0.10}}, 101},
      {"b_peak", TraceFamily::spectral_peak,
       {{"freq_x", 0.25}, {"freq_y", 0.17}, {"amplitude", 0.08}}, 102},
      {"b_quant", TraceFamily::block_quant,
       {{"step", 0.12}, {"amplitude", 1.0}}, 103},
  };
  cfg.corpus.emerging_specs = {
      {"g_peak_lo", TraceFamily::spectral_peak,
       {{"freq_x", 0.07}, {"freq_y", 0.41}, {"amplitude", 0.08}}, 201},
      {"g_fixed", TraceFamily::fixed_pattern, {{"amplitude", 0.05}}, 202},
      {"g_noise", TraceFamily::noise_shaping, {{"amplitude", 0.06}}, 203},
      {"g_checker3", TraceFamily::checkerboard,
       {{"period", 3.0}, {"amplitude", 0.08}}, 204},
      {"g_fixed2", TraceFamily::fixed_pattern, {{"amplitude", 0.06}}, 205},
  };
  cfg.detector.preset = Preset::tiny;
  cfg.detector.embed_dim = 32;
  cfg.detector.highpass = true;
  cfg.detector.patch_size = cfg.corpus.patch_size;
  cfg.detector_train.learning_rate = 5e-5f;
  cfg.detector_train.epochs = 10;
  cfg.detector_train.batch_size = 32;
  cfg.expert_train.learning_rate = 5e-5f;
  cfg.expert_train.epochs = 10;
  cfg.expert_train.batch_size = 32;
  cfg.ekfn_train.steps = 400;
  cfg.ekfn_train.learning_rate = 1e-3f;
  cfg.ekfn_train.batch_size = 32;
  return cfg;
}

void RunConfig::validate() const {
  if (buffer_capacity < 4 || buffer_capacity % 2 != 0) {
    throw ConfigError("config: buffer_capacity must be even and >= 4");
  }
  if (new_data_budget < 1) {
    throw ConfigError("config: new_data_budget must be >= 1");
  }
  corpus.validate();
  if (protocol != "single" && protocol != "sequential" && protocol != "sweep" &&
      protocol != "arch") {
    throw ConfigError("config: protocol must be one of "
                      "single|sequential|sweep|arch");
  }
  if (methods.empty()) throw ConfigError("config: methods must be nonempty");
  {
    std::set<std::string> seen;
    for (ClMethod m : methods) {
      if (!seen.insert(to_string(m)).second) {
        throw ConfigError("config: duplicate method '" + to_string(m) + "'");
      }
    }
  }
  if (!corpus.emerging_specs.empty()) {
    const int first_quota = buffer_capacity / 4;  // floor(M / (2*(1+1)))
    if (new_data_budget < first_quota) {
      throw ConfigError(
          "config: new_data_budget must cover the first buffer quota "
          "floor(M/4) = " +
          std::to_string(first_quota));
    }
    if (corpus.gen_counts.train < new_data_budget) {
      throw ConfigError("config: corpus.gen_train smaller than new_data_budget");
    }
  }
  if (corpus.real_counts.train < buffer_capacity / 2) {
    throw ConfigError("config: corpus.real_train smaller than M/2");
  }
  if (baseline_train_per_spec < 1 ||
      baseline_train_per_spec > corpus.gen_counts.train) {
    throw ConfigError(
        "config: eval.baseline_train_per_spec must be in [1, gen_train]");
  }
  const int n_baseline = static_cast<int>(corpus.baseline_specs.size());
  if (n_baseline < 1) {
    throw ConfigError("config: at least one baseline spec is required");
  }
  if (corpus.real_counts.train < baseline_train_per_spec * n_baseline) {
    throw ConfigError(
        "config: corpus.real_train smaller than the baseline training set");
  }
  if (corpus.real_counts.test < 1 || corpus.gen_counts.test < 1) {
    throw ConfigError("config: test splits must be nonempty");
  }
  if (detector.patch_size != corpus.patch_size) {
    throw ConfigError("config: detector patch size must match the corpus");
  }
  if (detector.embed_dim < 4) {
    throw ConfigError("config: detector.embed_dim must be >= 4");
  }
  if (detector.embed_dim % ekfn.heads != 0) {
    throw ConfigError("config: ekfn.heads must divide detector.embed_dim");
  }
  if (ekfn.layers < 1 || ekfn.heads < 1 || ekfn.ff_mult < 1 ||
      ekfn.mlp_hidden < 1) {
    throw ConfigError("config: ekfn sizes must be >= 1");
  }
  if (ekfn_train.steps < 0 || ekfn_train.batch_size < 1) {
    throw ConfigError("config: ekfn.train must have steps >= 0, batch >= 1");
  }
  if (detector_train.epochs < 0 || detector_train.batch_size < 1 ||
      expert_train.epochs < 0 || expert_train.batch_size < 1) {
    throw ConfigError("config: train epochs must be >= 0 and batch >= 1");
  }
  if (lwf_lambda < 0.0f) throw ConfigError("config: lwf.lambda_distill < 0");
  if (lwf_temperature <= 0.0f) throw ConfigError("config: lwf.temperature <= 0");
  if (protocol == "sweep") {
    if (sweep_budgets.empty()) {
      throw ConfigError("config: eval.sweep_budgets must be nonempty");
    }
    for (int b : sweep_budgets) {
      if (b < 1 || b > corpus.gen_counts.train) {
        throw ConfigError("config: sweep budget out of range [1, gen_train]");
      }
      if (!corpus.emerging_specs.empty() && b < buffer_capacity / 4) {
        throw ConfigError(
            "config: sweep budget smaller than the first buffer quota");
      }
    }
  }
  if (protocol == "arch") {
    if (arch_presets.empty()) {
      throw ConfigError("config: eval.arch_presets must be nonempty");
    }
    for (const std::string& p : arch_presets) preset_from_string(p);
  }
}

namespace {

RunConfig from_json(const json& j) {
  check_keys(j,
             {"master_seed", "protocol", "methods", "buffer_capacity",
              "new_data_budget", "corpus", "detector", "expert_train", "ekfn",
              "lwf", "eval"},
             "");
  if (!j.contains("master_seed")) {
    throw ConfigError("config: missing key 'master_seed'");
  }
  RunConfig cfg = default_config();
  cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  cfg.protocol = get_or<std::string>(j, "protocol", cfg.protocol, "");
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const json& m : j.at("methods")) {
      cfg.methods.push_back(cl_method_from_string(m.get<std::string>()));
    }
  }
  cfg.buffer_capacity = get_or(j, "buffer_capacity", cfg.buffer_capacity, "");
  cfg.new_data_budget = get_or(j, "new_data_budget", cfg.new_data_budget, "");

  if (j.contains("corpus")) {
    const json& c = j.at("corpus");
    check_keys(c,
               {"image_size", "patch_size", "real_train", "real_val",
                "real_test", "gen_train", "gen_val", "gen_test",
                "baseline_specs", "emerging_specs"},
               "corpus.");
    CorpusConfig& cc = cfg.corpus;
    cc.image_size = get_or(c, "image_size", cc.image_size, "corpus.");
    cc.patch_size = get_or(c, "patch_size", cc.patch_size, "corpus.");
    cc.real_counts.train = get_or(c, "real_train", cc.real_counts.train, "corpus.");
    cc.real_counts.val = get_or(c, "real_val", cc.real_counts.val, "corpus.");
    cc.real_counts.test = get_or(c, "real_test", cc.real_counts.test, "corpus.");
    cc.gen_counts.train = get_or(c, "gen_train", cc.gen_counts.train, "corpus.");
    cc.gen_counts.val = get_or(c, "gen_val", cc.gen_counts.val, "corpus.");
    cc.gen_counts.test = get_or(c, "gen_test", cc.gen_counts.test, "corpus.");
    if (c.contains("baseline_specs")) {
      cc.baseline_specs.clear();
      for (const json& s : c.at("baseline_specs")) {
        cc.baseline_specs.push_back(parse_spec(s, "corpus.baseline_specs."));
      }
    }
    if (c.contains("emerging_specs")) {
      cc.emerging_specs.clear();
      for (const json& s : c.at("emerging_specs")) {
        cc.emerging_specs.push_back(parse_spec(s, "corpus.emerging_specs."));
      }
    }
  }

  if (j.contains("detector")) {
    const json& d = j.at("detector");
    check_keys(d, {"preset", "embed_dim", "highpass", "train"}, "detector.");
    cfg.detector.preset = preset_from_string(
        get_or<std::string>(d, "preset", to_string(cfg.detector.preset),
                            "detector."));
    cfg.detector.embed_dim = get_or(d, "embed_dim", cfg.detector.embed_dim,
                                    "detector.");
    cfg.detector.highpass = get_or(d, "highpass", cfg.detector.highpass,
                                   "detector.");
    if (d.contains("train")) {
      cfg.detector_train = parse_train(d.at("train"), cfg.detector_train,
                                       "detector.train.");
    }
  }
  if (j.contains("expert_train")) {
    cfg.expert_train = parse_train(j.at("expert_train"), cfg.expert_train,
                                   "expert_train.");
  }
  if (j.contains("ekfn")) {
    const json& e = j.at("ekfn");
    check_keys(e, {"layers", "heads", "ff_mult", "mlp_hidden", "variant",
                   "train"},
               "ekfn.");
    cfg.ekfn.layers = get_or(e, "layers", cfg.ekfn.layers, "ekfn.");
    cfg.ekfn.heads = get_or(e, "heads", cfg.ekfn.heads, "ekfn.");
    cfg.ekfn.ff_mult = get_or(e, "ff_mult", cfg.ekfn.ff_mult, "ekfn.");
    cfg.ekfn.mlp_hidden = get_or(e, "mlp_hidden", cfg.ekfn.mlp_hidden, "ekfn.");
    cfg.ekfn.variant = ekfn_variant_from_string(get_or<std::string>(
        e, "variant", to_string(cfg.ekfn.variant), "ekfn."));
    if (e.contains("train")) {
      const json& t = e.at("train");
      check_keys(t, {"steps", "learning_rate", "batch_size"}, "ekfn.train.");
      cfg.ekfn_train.steps = get_or(t, "steps", cfg.ekfn_train.steps,
                                    "ekfn.train.");
      cfg.ekfn_train.learning_rate = get_or(
          t, "learning_rate", cfg.ekfn_train.learning_rate, "ekfn.train.");
      cfg.ekfn_train.batch_size = get_or(t, "batch_size",
                                         cfg.ekfn_train.batch_size,
                                         "ekfn.train.");
    }
  }
  if (j.contains("lwf")) {
    const json& l = j.at("lwf");
    check_keys(l, {"lambda_distill", "temperature"}, "lwf.");
    cfg.lwf_lambda = get_or(l, "lambda_distill", cfg.lwf_lambda, "lwf.");
    cfg.lwf_temperature = get_or(l, "temperature", cfg.lwf_temperature, "lwf.");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"baseline_train_per_spec", "sweep_budgets", "arch_presets"},
               "eval.");
    cfg.baseline_train_per_spec = get_or(
        e, "baseline_train_per_spec", cfg.baseline_train_per_spec, "eval.");
    cfg.sweep_budgets = get_or(e, "sweep_budgets", cfg.sweep_budgets, "eval.");
    cfg.arch_presets = get_or(e, "arch_presets", cfg.arch_presets, "eval.");
  }

  cfg.corpus.master_seed = cfg.master_seed;
  cfg.detector.patch_size = cfg.corpus.patch_size;
  cfg.validate();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["master_seed"] = cfg.master_seed;
  j["protocol"] = cfg.protocol;
  json methods = json::array();
  for (ClMethod m : cfg.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["buffer_capacity"] = cfg.buffer_capacity;
  j["new_data_budget"] = cfg.new_data_budget;
  json c;
  c["image_size"] = cfg.corpus.image_size;
  c["patch_size"] = cfg.corpus.patch_size;
  c["real_train"] = cfg.corpus.real_counts.train;
  c["real_val"] = cfg.corpus.real_counts.val;
  c["real_test"] = cfg.corpus.real_counts.test;
  c["gen_train"] = cfg.corpus.gen_counts.train;
  c["gen_val"] = cfg.corpus.gen_counts.val;
  c["gen_test"] = cfg.corpus.gen_counts.test;
  json bs = json::array(), es = json::array();
  for (const GeneratorSpec& s : cfg.corpus.baseline_specs) bs.push_back(spec_json(s));
  for (const GeneratorSpec& s : cfg.corpus.emerging_specs) es.push_back(spec_json(s));
  c["baseline_specs"] = bs;
  c["emerging_specs"] = es;
  j["corpus"] = c;
  json d;
  d["preset"] = to_string(cfg.detector.preset);
  d["embed_dim"] = cfg.detector.embed_dim;
  d["highpass"] = cfg.detector.highpass;
  d["train"] = train_json(cfg.detector_train);
  j["detector"] = d;
  j["expert_train"] = train_json(cfg.expert_train);
  json e;
  e["layers"] = cfg.ekfn.layers;
  e["heads"] = cfg.ekfn.heads;
  e["ff_mult"] = cfg.ekfn.ff_mult;
  e["mlp_hidden"] = cfg.ekfn.mlp_hidden;
  e["variant"] = to_string(cfg.ekfn.variant);
  e["train"] = json{{"steps", cfg.ekfn_train.steps},
                    {"learning_rate", cfg.ekfn_train.learning_rate},
                    {"batch_size", cfg.ekfn_train.batch_size}};
  j["ekfn"] = e;
  j["lwf"] = json{{"lambda_distill", cfg.lwf_lambda},
                  {"temperature", cfg.lwf_temperature}};
  j["eval"] = json{{"baseline_train_per_spec", cfg.baseline_train_per_spec},
                   {"sweep_budgets", cfg.sweep_budgets},
                   {"arch_presets", cfg.arch_presets}};
  return j;
}

}  // namespace

RunConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  return to_json(config).dump(2) + "\n";
}

void save_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("config: cannot write " + path);
  out << serialize_config(config);
}

std::string RunConfig::fingerprint() const {
  const std::string text = serialize_config(*this);
  std::uint64_t h = hash_label(text);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace e3
