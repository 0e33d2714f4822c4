// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dreammap/synth.hpp"

namespace dreammap::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point for the `dreammap` tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args);

// Dataset directory helpers (manifest.json + pair files), shared with tests.
struct DatasetOnDisk {
  Dataset dataset;
  std::vector<std::string> train_files;
  std::vector<std::string> eval_files;
};

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
DatasetOnDisk read_dataset(const std::filesystem::path& dir);

}  // namespace dreammap::cli
