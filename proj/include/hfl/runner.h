// Copyright 2026 The hierfl Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration, trial setup and run summaries for the CLI.
//
// A config has sections [run], [data], [topology], [model], [train] and
// [algorithm]; see configs/reference.toml for every key and its default.
// The same layout is accepted as JSON, which is what summary.json echoes.

#ifndef HFL_RUNNER_H_
#define HFL_RUNNER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hfl/data.h"
#include "hfl/network.h"
#include "hfl/simulator.h"
#include "json.hpp"

namespace hfl {

struct RunConfig {
  std::vector<uint64_t> seeds;
  double target_accuracy = 0.0;
  std::string output_dir = "out";

  SimConfig sim;  // mode, model, training and algorithm parameters

  DataSpec data;
  std::optional<std::string> data_path;
  std::optional<uint64_t> data_seed;

  TopologyGenSpec topology;
  std::optional<std::string> topology_path;
  std::optional<uint64_t> topology_seed;
  std::vector<FaultEvent> faults;  // appended to the topology's own

  // Full echo with every default filled in; from_json(to_json()) is exact.
  nlohmann::json to_json() const;
  // Throws ConfigError naming the missing, unknown or out-of-range field.
  static RunConfig from_json(const nlohmann::json& j);
};

// Reads .toml or .json. A JSON file holding a "config" object (a summary)
// replays that object.
RunConfig load_run_config(const std::filesystem::path& path);

// Generates or loads the trial inputs for one seed. Relative paths resolve
// against `base_dir`.
FederatedDataset build_dataset(const RunConfig& cfg, uint64_t seed,
                               const std::filesystem::path& base_dir = {});
Topology build_topology(const RunConfig& cfg, uint64_t seed,
                        const std::filesystem::path& base_dir = {});
// Model shape taken from the dataset.
SimConfig build_sim_config(const RunConfig& cfg, const FederatedDataset& data,
                           uint64_t seed);

SimResult run_trial(const RunConfig& cfg, uint64_t seed,
                    const std::filesystem::path& base_dir = {});

// Loads inputs and validates everything a run would, without simulating.
void validate_run_config(const RunConfig& cfg,
                         const std::filesystem::path& base_dir = {});

struct SeedSummary {
  uint64_t seed = 0;
  std::optional<double> converge_time;  // first row with acc >= target
  std::optional<uint64_t> bytes_at_target;
  uint64_t total_bytes = 0;
  double final_acc = 0.0;
};

struct RunSummary {
  std::vector<SeedSummary> seeds;
  // Median over seeds, unreached seeds counted as +inf; null if that is inf.
  std::optional<double> median_converge_time;

  nlohmann::json to_json() const;
};

// `seeds` labels the traces; empty means 0, 1, 2, ...
RunSummary summarize(const std::vector<MetricTrace>& traces, double target,
                     const std::vector<uint64_t>& seeds = {});

// Median of `values` (mean of the middle pair for even sizes).
double median(std::vector<double> values);

// baseline / candidate median convergence time; null when either is null.
std::optional<double> speedup(const RunSummary& candidate,
                              const RunSummary& baseline);

// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);

}  // namespace hfl

#endif  // HFL_RUNNER_H_
