// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "e3/detector.hpp"
#include "e3/e3core.hpp"

namespace e3 {

// Checkpoints are one file: 8-byte magic, little-endian u64 manifest length,
// JSON manifest (format_version, kind, arch metadata, tensor directory with
// name/shape/offset/length in float units), then the contiguous
// little-endian float32 payload.

void save_detector_checkpoint(const DetectorModel& model,
                              const std::string& path);
DetectorModel load_detector_checkpoint(const std::string& path);

struct E3Checkpoint {
  DetectorModel f0;
  ExpertEnsemble ensemble;  // experts[0] is f0's embedder
  FusionNetwork ekfn;
};

void save_e3_checkpoint(const E3Checkpoint& state, const std::string& path);
E3Checkpoint load_e3_checkpoint(const std::string& path);

void save_majority_checkpoint(const std::vector<DetectorModel>& experts,
                              const std::string& path);
std::vector<DetectorModel> load_majority_checkpoint(const std::string& path);

// Kind tag of an existing checkpoint file ("detector", "e3", "majority").
std::string checkpoint_kind(const std::string& path);

}  // namespace e3
