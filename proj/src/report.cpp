// SPDX-License-Identifier: Apache-2.0
#include "e3/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "e3/errors.hpp"

namespace e3 {

namespace {

constexpr const char* kCsvHeader =
    "method,protocol,episode,source_id,metric,value,seed\n";

std::string fmt_value(double v) {
  // %.17g round-trips doubles exactly, so recomputed summaries match the
  // written ones byte for byte.
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void csv_row(std::string& out, const std::string& method,
             const std::string& protocol, int episode,
             const std::string& source_id, const std::string& metric,
             double value, std::uint64_t seed) {
  out += method;
  out += ',';
  out += protocol;
  out += ',';
  out += std::to_string(episode);
  out += ',';
  out += source_id;
  out += ',';
  out += metric;
  out += ',';
  out += fmt_value(value);
  out += ',';
  out += std::to_string(seed);
  out += '\n';
}

}  // namespace

std::string detail_csv(const ProtocolResult& result) {
  std::string out = kCsvHeader;
  for (const EpisodeReport& ep : result.episodes) {
    for (const auto& [source, auc] : ep.per_source_auc) {
      csv_row(out, ep.method, result.protocol, ep.episode, source, "auc", auc,
              result.master_seed);
    }
    for (const auto& [source, acc] : ep.per_source_accuracy) {
      csv_row(out, ep.method, result.protocol, ep.episode, source, "accuracy",
              acc, result.master_seed);
    }
    if (ep.mixed_auc.has_value()) {
      csv_row(out, ep.method, result.protocol, ep.episode, ep.generator_id,
              "auc_mixed", *ep.mixed_auc, result.master_seed);
    }
  }
  return out;
}

std::string summary_csv(const ProtocolResult& result) {
  std::string out = kCsvHeader;
  for (const EpisodeReport& ep : result.episodes) {
    csv_row(out, ep.method, result.protocol, ep.episode, "all", "avg_auc",
            ep.avg_auc, result.master_seed);
    csv_row(out, ep.method, result.protocol, ep.episode, "all", "avg_accuracy",
            ep.avg_accuracy, result.master_seed);
  }
  return out;
}

std::string summarize_detail_csv(const std::string& detail_csv_text) {
  std::istringstream in(detail_csv_text);
  std::string line;
  if (!std::getline(in, line) ||
      line != std::string(kCsvHeader).substr(0, line.size())) {
    throw FormatError("report: detail CSV has an unexpected header");
  }
  struct Key {
    std::string method, protocol;
    int episode;
    std::uint64_t seed;
  };
  std::vector<Key> order;
  std::map<std::string, std::pair<double, int>> auc_acc[2];  // metric -> sums
  auto key_string = [](const Key& k) {
    return k.method + "|" + k.protocol + "|" + std::to_string(k.episode) + "|" +
           std::to_string(k.seed);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 7) throw FormatError("report: malformed CSV row");
    const std::string& metric = cols[4];
    if (metric != "auc" && metric != "accuracy") continue;
    Key k{cols[0], cols[1], std::stoi(cols[2]),
          static_cast<std::uint64_t>(std::stoull(cols[6]))};
    const std::string ks = key_string(k);
    const int slot = metric == "auc" ? 0 : 1;
    if (!auc_acc[0].count(ks) && !auc_acc[1].count(ks)) order.push_back(k);
    auto& [sum, count] = auc_acc[slot][ks];
    sum += std::stod(cols[5]);
    count += 1;
  }
  std::string out = kCsvHeader;
  for (const Key& k : order) {
    const std::string ks = key_string(k);
    const auto& [auc_sum, auc_n] = auc_acc[0][ks];
    const auto& [acc_sum, acc_n] = auc_acc[1][ks];
    if (auc_n > 0) {
      csv_row(out, k.method, k.protocol, k.episode, "all", "avg_auc",
              auc_sum / auc_n, k.seed);
    }
    if (acc_n > 0) {
      csv_row(out, k.method, k.protocol, k.episode, "all", "avg_accuracy",
              acc_sum / acc_n, k.seed);
    }
  }
  return out;
}

namespace {

using nlohmann::json;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("report: cannot write " + path.string());
  out << text;
}

void write_one(const ProtocolResult& result, const std::string& config_json,
               const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("report: cannot create directory " + dir.string());
  write_text(dir / "detail.csv", detail_csv(result));
  write_text(dir / "summary.csv", summary_csv(result));

  json manifest;
  manifest["format_version"] = 1;
  manifest["protocol"] = result.protocol;
  manifest["label"] = result.label;
  manifest["config_fingerprint"] = result.config_fingerprint;
  manifest["master_seed"] = result.master_seed;
  try {
    manifest["config"] = json::parse(config_json);
  } catch (const json::exception& e) {
    throw ContractError(std::string("report: config_json is not JSON: ") +
                        e.what());
  }
  json timings = json::array();
  for (const EpisodeReport& ep : result.episodes) {
    timings.push_back(json{{"method", ep.method},
                           {"episode", ep.episode},
                           {"generator", ep.generator_id},
                           {"wall_seconds", ep.wall_seconds}});
  }
  manifest["timings"] = timings;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string label_dir(const std::string& label) {
  std::string out = label.empty() ? std::string("run") : label;
  for (char& c : out) {
    if (c == '=' || c == '/' || c == ' ') c = '_';
  }
  return out;
}

}  // namespace

void write_report(const ProtocolResult& result, const std::string& config_json,
                  const std::string& out_dir) {
  write_one(result, config_json, out_dir);
}

void write_reports(const std::vector<ProtocolResult>& results,
                   const std::string& config_json, const std::string& out_dir) {
  const std::filesystem::path root(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("report: cannot create directory " + out_dir);

  std::string agg = "label,method,protocol,episode,metric,value,seed\n";
  for (const ProtocolResult& result : results) {
    write_one(result, config_json, root / label_dir(result.label));
    // Final episode per method.
    std::map<std::string, const EpisodeReport*> last;
    for (const EpisodeReport& ep : result.episodes) last[ep.method] = &ep;
    for (const auto& [method, ep] : last) {
      agg += result.label + "," + method + "," + result.protocol + "," +
             std::to_string(ep->episode) + ",final_avg_auc," +
             fmt_value(ep->avg_auc) + "," + std::to_string(result.master_seed) +
             "\n";
      agg += result.label + "," + method + "," + result.protocol + "," +
             std::to_string(ep->episode) + ",final_avg_accuracy," +
             fmt_value(ep->avg_accuracy) + "," +
             std::to_string(result.master_seed) + "\n";
    }
  }
  write_text(root / "aggregate.csv", agg);
}

}  // namespace e3
