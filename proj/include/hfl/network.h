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

#ifndef HFL_NETWORK_H_
#define HFL_NETWORK_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hfl/rng.h"
#include "json.hpp"

namespace hfl {

// Mean segment times of one device-gateway round and the log-normal shape.
struct DelayParams {
  double mean_down = 1.0;
  double mean_comp = 1.0;
  double mean_up = 1.0;
  double sigma = 0.0;

  double mean_total() const { return mean_down + mean_comp + mean_up; }
};

struct RoundLatency {
  double down = 0.0;
  double comp = 0.0;
  double up = 0.0;
  double total = 0.0;
};

// Each segment is mean * X with X ~ LogNormal(-sigma^2/2, sigma), so the
// multiplier has unit mean.
RoundLatency sample_round_latency(const DelayParams& params, Rng& rng);

// R = M / tau. Throws ConfigError for tau <= 0.
double est_rate(double model_bytes, double tau);

// Exponential moving average of observed round latency per (device, gateway).
class LatencyTracker {
 public:
  LatencyTracker(int num_devices, int num_gateways, double alpha_ema);

  void update(int device, int gateway, double observed_tau);
  std::optional<double> get(int device, int gateway) const;
  double alpha() const { return alpha_; }

 private:
  int g_;
  double alpha_;
  std::vector<double> ema_;  // 0 = no observation yet
};

struct LinkParams {
  int device = 0;
  int gateway = 0;
  double mean_down = 1.0;
  double mean_up = 1.0;
  double sigma = 0.0;
};

enum class FaultAction { kDrop, kRestore, kSlowdown };

struct FaultEvent {
  double time = 0.0;
  int device = 0;
  FaultAction action = FaultAction::kDrop;
  double factor = 1.0;  // slowdown only
};

std::string to_string(FaultAction a);
FaultAction parse_fault_action(const std::string& name);

// Feasibility J, association I, link/device delay parameters and bandwidth.
// I <= J and at most one gateway per device hold after every mutation.
class Topology {
 public:
  Topology() = default;
  Topology(int num_devices, int num_gateways);

  int num_devices() const { return n_; }
  int num_gateways() const { return g_; }

  bool feasible(int i, int j) const { return j_now_[idx(i, j)] != 0; }
  bool originally_feasible(int i, int j) const { return j_orig_[idx(i, j)] != 0; }
  // Gateway the device is associated to, or -1.
  int gateway_of(int i) const { return assoc_[i]; }
  std::vector<int> devices_of(int gateway) const;
  bool dropped(int i) const { return dropped_[i] != 0; }

  // Throws ValidationError when the link is not feasible.
  void associate(int i, int j);
  void dissociate(int i) { assoc_[i] = -1; }

  void add_link(const LinkParams& link);
  const std::optional<LinkParams>& link(int i, int j) const {
    return links_[idx(i, j)];
  }
  void set_comp_mean(int i, double seconds) { comp_mean_[i] = seconds; }
  double comp_mean(int i) const { return comp_mean_[i]; }
  double slowdown(int i) const { return slowdown_[i]; }

  // Delay parameters for (i, j), slowdown applied. The link must exist.
  DelayParams delay(int i, int j) const;

  std::vector<double>& bandwidth() { return bandwidth_; }
  const std::vector<double>& bandwidth() const { return bandwidth_; }
  double model_size = 0.0;    // bytes
  double cloud_delay = 0.05;  // seconds, cloud <-> gateway, each way

  std::vector<FaultEvent> faults;

  // Applies one fault. drop zeroes row i of J and I; restore re-enables the
  // original row and clears any slowdown; slowdown scales the device's means.
  void apply_fault(const FaultEvent& f);
  void validate() const;

  std::vector<int> feasibility_matrix() const { return j_now_; }

 private:
  size_t idx(int i, int j) const {
    return static_cast<size_t>(i) * g_ + static_cast<size_t>(j);
  }
  void check_device(int i) const;

  int n_ = 0, g_ = 0;
  std::vector<int> j_orig_, j_now_;
  std::vector<int> assoc_;
  std::vector<char> dropped_;
  std::vector<std::optional<LinkParams>> links_;
  std::vector<double> comp_mean_;
  std::vector<double> slowdown_;
  std::vector<double> bandwidth_;
};

// Applies scheduled faults in time order as the clock advances.
class FaultSchedule {
 public:
  explicit FaultSchedule(std::vector<FaultEvent> events);
  // Applies every pending fault with time <= now; returns those applied.
  std::vector<FaultEvent> apply_due(Topology& topo, double now);
  std::optional<double> next_time() const;

 private:
  std::vector<FaultEvent> events_;
  size_t cursor_ = 0;
};

// Random two-level tree: gateways and devices scattered on the unit square,
// each device feasible for its 1..3 nearest gateways and associated to the
// nearest. Link means grow with distance; compute means are log-uniform.
struct TopologyGenSpec {
  int num_devices = 40;
  int num_gateways = 4;
  double sigma = 1.0;
  double link_min = 1.0;  // seconds, per direction
  double link_max = 5.0;
  double comp_min = 2.0;  // seconds
  double comp_max = 20.0;
  double cloud_delay = 0.05;
  // Bandwidth of gateway j = fraction * sum over its nearest devices of
  // M / mean round latency.
  double bandwidth_fraction = 0.5;
  double model_size = 0.0;  // bytes

  void validate() const;
};

Topology generate_topology(const TopologyGenSpec& spec, uint64_t seed);

nlohmann::json topology_to_json(const Topology& topo);
Topology topology_from_json(const nlohmann::json& j);
Topology load_topology(const std::filesystem::path& path);
void save_topology(const Topology& topo, const std::filesystem::path& path);

}  // namespace hfl

#endif  // HFL_NETWORK_H_
