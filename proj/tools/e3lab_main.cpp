// SPDX-License-Identifier: Apache-2.0
//
// e3lab: desk-scale continual-learning laboratory for synthetic-image
// detection. Drives corpus generation, baseline training, protocol runs,
// budget sweeps, EKFN ablations and report post-processing.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "e3/checkpoint.hpp"
#include "e3/config.hpp"
#include "e3/errors.hpp"
#include "e3/protocol.hpp"
#include "e3/report.hpp"
#include "e3/synthgen.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void save_state_checkpoints(const e3::RunConfig& cfg,
                            const e3::ProtocolOutcome& outcome,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < outcome.final_states.size(); ++i) {
    const e3::MethodState& state = outcome.final_states[i];
    const std::string name = e3::to_string(cfg.methods[i]);
    const std::string path = (dir / (name + ".ckpt")).string();
    switch (state.method) {
      case e3::ClMethod::e3:
        if (state.ekfn.has_value()) {
          e3::save_e3_checkpoint({state.f0, state.ensemble, *state.ekfn}, path);
        }
        break;
      case e3::ClMethod::majority:
        e3::save_majority_checkpoint(state.expert_detectors, path);
        break;
      case e3::ClMethod::baseline:
        e3::save_detector_checkpoint(state.f0, path);
        break;
      default:
        e3::save_detector_checkpoint(state.model, path);
        break;
    }
  }
}

void run_and_write(const e3::RunConfig& cfg, const std::string& out_dir) {
  const e3::ProtocolOutcome outcome = e3::run_protocol(cfg);
  e3::write_report(outcome.result, e3::serialize_config(cfg), out_dir);
  save_state_checkpoints(cfg, outcome,
                         std::filesystem::path(out_dir) / "checkpoints");
  for (const e3::EpisodeReport& ep : outcome.result.episodes) {
    std::cout << ep.method << " episode " << ep.episode << " ("
              << ep.generator_id << "): avg_auc=" << ep.avg_auc
              << " avg_acc=" << ep.avg_accuracy << "\n";
  }
  std::cout << "report written to " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"e3lab: continual synthetic-image-detector laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_path, corpus_dir, in_dir;
  std::string protocol_flag, methods_flag, budgets_flag, format_flag = "csv";
  std::string variant_flag;
  int layers_flag = 0;

  auto* gen = app.add_subcommand("gen-corpus", "generate and export a corpus");
  gen->add_option("--config", config_path, "config file")->required();
  gen->add_option("--out", out_path, "output directory")->required();

  auto* trainb =
      app.add_subcommand("train-baseline", "train the baseline detector f0");
  trainb->add_option("--config", config_path, "config file")->required();
  trainb->add_option("--corpus", corpus_dir, "exported corpus directory")
      ->required();
  trainb->add_option("--out", out_path, "checkpoint path")->required();

  auto* run = app.add_subcommand("run", "run an experiment protocol");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--protocol", protocol_flag,
                  "single|sequential|arch (default: config)");
  run->add_option("--methods", methods_flag,
                  "comma list: e3,finetune,er,lwf,majority,baseline");
  run->add_option("--out", out_path, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "new-data budget sweep (E3)");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--budgets", budgets_flag, "comma list of budgets");
  sweep->add_option("--out", out_path, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "EKFN design ablation run");
  ablate->add_option("--config", config_path, "config file")->required();
  ablate->add_option("--variant", variant_flag, "full|mlp_only|no_weighting")
      ->required();
  ablate->add_option("--layers", layers_flag, "transformer layer count");
  ablate->add_option("--out", out_path, "output directory")->required();

  auto* report = app.add_subcommand("report", "summarize a run directory");
  report->add_option("--in", in_dir, "run directory")->required();
  report->add_option("--format", format_flag, "output format (csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      e3::RunConfig cfg = e3::load_config(config_path);
      e3::CorpusConfig cc = cfg.corpus;
      cc.master_seed = cfg.master_seed;
      e3::export_corpus(e3::build_corpus(cc), out_path);
      std::cout << "corpus written to " << out_path << "\n";
    } else if (trainb->parsed()) {
      e3::RunConfig cfg = e3::load_config(config_path);
      e3::Corpus corpus = e3::import_corpus(corpus_dir);
      e3::DetectorModel f0 = e3::train_baseline(corpus, cfg);
      e3::save_detector_checkpoint(f0, out_path);
      std::cout << "baseline checkpoint written to " << out_path << "\n";
    } else if (run->parsed()) {
      e3::RunConfig cfg = e3::load_config(config_path);
      if (!protocol_flag.empty()) cfg.protocol = protocol_flag;
      if (!methods_flag.empty()) {
        cfg.methods.clear();
        for (const std::string& m : split_commas(methods_flag)) {
          cfg.methods.push_back(e3::cl_method_from_string(m));
        }
      }
      if (cfg.protocol == "arch") {
        cfg.validate();
        std::vector<e3::ProtocolOutcome> outcomes = e3::run_arch(cfg);
        std::vector<e3::ProtocolResult> results;
        for (const e3::ProtocolOutcome& o : outcomes) results.push_back(o.result);
        e3::write_reports(results, e3::serialize_config(cfg), out_path);
        std::cout << "arch reports written to " << out_path << "\n";
      } else {
        cfg.validate();
        run_and_write(cfg, out_path);
      }
    } else if (sweep->parsed()) {
      e3::RunConfig cfg = e3::load_config(config_path);
      cfg.protocol = "sweep";
      if (!budgets_flag.empty()) {
        cfg.sweep_budgets.clear();
        for (const std::string& b : split_commas(budgets_flag)) {
          try {
            cfg.sweep_budgets.push_back(std::stoi(b));
          } catch (const std::exception&) {
            throw e3::ConfigError("sweep: bad budget '" + b + "'");
          }
        }
      }
      cfg.validate();
      std::vector<e3::ProtocolOutcome> outcomes = e3::run_sweep(cfg);
      std::vector<e3::ProtocolResult> results;
      for (const e3::ProtocolOutcome& o : outcomes) results.push_back(o.result);
      e3::write_reports(results, e3::serialize_config(cfg), out_path);
      std::cout << "sweep reports written to " << out_path << "\n";
    } else if (ablate->parsed()) {
      e3::RunConfig cfg = e3::load_config(config_path);
      cfg.protocol = "sequential";
      cfg.ekfn.variant = e3::ekfn_variant_from_string(variant_flag);
      if (layers_flag > 0) cfg.ekfn.layers = layers_flag;
      cfg.methods = {e3::ClMethod::e3, e3::ClMethod::majority};
      cfg.validate();
      run_and_write(cfg, out_path);
    } else if (report->parsed()) {
      if (format_flag != "csv") {
        throw e3::ConfigError("report: unsupported format '" + format_flag +
                              "'");
      }
      std::ifstream in(std::filesystem::path(in_dir) / "detail.csv");
      if (!in) throw e3::IoError("report: cannot open detail.csv in " + in_dir);
      std::stringstream ss;
      ss << in.rdbuf();
      std::cout << e3::summarize_detail_csv(ss.str());
    }
  } catch (const e3::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const e3::E3Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
