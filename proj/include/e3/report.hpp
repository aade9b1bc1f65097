// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "e3/protocol.hpp"

namespace e3 {

// Writes detail.csv, summary.csv and manifest.json into out_dir. CSVs are a
// pure function of the result (timings live in the manifest only), so equal
// seeds produce byte-identical files.
void write_report(const ProtocolResult& result, const std::string& config_json,
                  const std::string& out_dir);

// Multi-result runs (sweep/arch): one subdirectory per label plus an
// aggregate CSV relating labels to final average AUC.
void write_reports(const std::vector<ProtocolResult>& results,
                   const std::string& config_json, const std::string& out_dir);

std::string detail_csv(const ProtocolResult& result);
std::string summary_csv(const ProtocolResult& result);

// Recomputes the summary from a detail.csv (the report subcommand and the
// summary cross-check).
std::string summarize_detail_csv(const std::string& detail_csv_text);

}  // namespace e3
