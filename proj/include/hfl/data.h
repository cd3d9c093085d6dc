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

#ifndef HFL_DATA_H_
#define HFL_DATA_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hfl/learning.h"

namespace hfl {

struct DataSpec {
  int num_devices = 40;
  int num_classes = 10;
  int classes_per_device = 2;
  int samples_per_device = 60;
  int input_dim = 20;
  double cluster_spread = 0.3;
  bool refresh = false;

  void validate() const;
};

// Per-device shards with label skew plus one shared test set.
struct FederatedDataset {
  std::vector<Shard> shards;
  Shard test;
  std::vector<std::vector<int>> class_map;
  int num_classes = 0;
  // Class centroids [K x input_dim]; empty when loaded from files.
  std::vector<double> centroids;

  int num_devices() const { return static_cast<int>(shards.size()); }
  int input_dim() const { return test.input_dim; }
  // Throws ValidationError naming the shard and row of the first violation.
  void validate() const;
  friend bool operator==(const FederatedDataset&,
                         const FederatedDataset&) = default;
};

FederatedDataset gen_synthetic(const DataSpec& spec, uint64_t seed);

// Redraws a device's samples from its class mixture, keeping the per-class
// counts. Returns `shard` unchanged when spec.refresh is false or the
// centroids are unknown.
Shard refresh_shard(const Shard& shard, const std::vector<int>& classes,
                    const std::vector<double>& centroids, const DataSpec& spec,
                    uint64_t round_seed);

// Writes manifest.json, device_<id>.csv and test.csv into `dir`.
void save_shards(const FederatedDataset& data, const std::filesystem::path& dir);

// Reads a manifest written by save_shards (or by hand). `path` is either the
// manifest file or the directory containing manifest.json.
FederatedDataset load_shards(const std::filesystem::path& path);

}  // namespace hfl

#endif  // HFL_DATA_H_
