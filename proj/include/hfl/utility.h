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

// Learning utility of device gradients and PCA gradient compression.
//
// For N latest gradients g_1..g_N with mean gbar:
//   eta_i = g_i . gbar
//   nu_i  = -1/(N-1) * sum_{j != i} g_i . g_j
//   u_i   = eta_i + nu_i

#ifndef HFL_UTILITY_H_
#define HFL_UTILITY_H_

#include <optional>
#include <span>
#include <vector>

namespace hfl {

struct GradientRecord {
  int device_id = 0;
  std::vector<double> vec;
  bool compressed = false;
  double recorded_at = 0.0;
};

struct UtilityRecord {
  int device_id = 0;
  double u = 0.0;
  double eta = 0.0;
  double nu = 0.0;
  double updated_at = 0.0;
};

// Mean-centred top-p principal directions, one per row of `components`.
struct PcaModel {
  std::vector<double> mean;        // [d]
  std::vector<double> components;  // [p x d], orthonormal rows
  int p = 0;
  int d = 0;

  std::span<const double> component(int k) const {
    return {components.data() + static_cast<size_t>(k) * d,
            static_cast<size_t>(d)};
  }
  // Bytes needed to ship the model (mean + components, 8 bytes per value).
  size_t wire_bytes() const { return static_cast<size_t>(p + 1) * d * 8; }
};

double dot(std::span<const double> a, std::span<const double> b);

// Arithmetic mean of the record vectors. Throws on empty input, mixed
// lengths or mixed compression flags.
std::vector<double> global_gradient(const std::vector<GradientRecord>& records);

// Needs N >= 2 records with a uniform representation.
std::vector<UtilityRecord> learning_utility(
    const std::vector<GradientRecord>& records);

// Utilities from a Gram matrix G[i][j] = g_i . g_j (row-major, n x n).
// eta and nu are computed as running means so that identical gradients give
// u = 0 exactly.
std::vector<UtilityRecord> learning_utility_from_gram(std::span<const double> gram,
                                                      int n);

// Components come out in descending eigenvalue order, each with its largest
// magnitude entry positive. Directions beyond the data rank are completed
// with a deterministic orthonormal basis.
PcaModel pca_fit(const std::vector<std::vector<double>>& grads, int p);

std::vector<double> pca_project(const PcaModel& model, std::span<const double> g);
std::vector<double> pca_reconstruct(const PcaModel& model,
                                    std::span<const double> coeffs);

// Latest gradient per device with an incrementally maintained Gram matrix.
// Devices without a record receive the current maximum utility.
class UtilityStore {
 public:
  explicit UtilityStore(int num_devices);

  void set(int device, std::vector<double> vec, double now);
  bool has(int device) const { return present_[device]; }
  int count() const { return count_; }
  const std::vector<double>& vector_of(int device) const { return vecs_[device]; }

  // Utilities for all devices, indexed by device id.
  const std::vector<UtilityRecord>& utilities();

 private:
  int n_;
  int count_ = 0;
  std::vector<std::vector<double>> vecs_;
  std::vector<char> present_;
  std::vector<double> stamp_;
  std::vector<double> gram_;  // n x n, valid for present pairs
  std::vector<UtilityRecord> cache_;
  bool dirty_ = true;
};

// Kendall rank correlation (tau-b) between two score vectors.
double kendall_tau(std::span<const double> a, std::span<const double> b);

}  // namespace hfl

#endif  // HFL_UTILITY_H_
