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

// Discrete-event simulation of three-tier (device -> gateway -> cloud)
// federated learning.
//
// In the asynchronous modes the cloud mixes every gateway upload into its
// model with weight alpha * s_q(h - tau) and broadcasts the result to every
// gateway. Gateways mix device uploads with weight beta * s_q(delta) and
// upload after Z aggregations. Devices run E local epochs on the proximal
// objective. Staleness delta counts the aggregations that happened at the
// receiving tier since the model was handed out, so a fresh update has
// delta = 0.

#ifndef HFL_SIMULATOR_H_
#define HFL_SIMULATOR_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hfl/data.h"
#include "hfl/learning.h"
#include "hfl/network.h"
#include "hfl/selection.h"

namespace hfl {

enum class Mode {
  kAsyncHfl,          // utility/latency selection, ILP association
  kAsyncRandom,       // random selection and association
  kAsyncHl,           // high-loss-first selection, random association
  kSyncRandom,        // barrier at both tiers
  kSemiAsync,         // windowed gateway buffers, synchronous cloud
  kSyncGwAsyncCloud,  // barrier at gateways, asynchronous cloud
};

std::string to_string(Mode m);
Mode parse_mode(const std::string& name);
std::vector<Mode> all_modes();

// How a gateway treats a cloud model that arrives mid-cycle.
enum class Adoption {
  kImmediate,   // replace the gateway model and restart the cycle
  kOnCycleEnd,  // ignore it until the next upload, then take the next one
};

std::string to_string(Adoption a);
Adoption parse_adoption(const std::string& name);

struct SimConfig {
  Mode mode = Mode::kAsyncHfl;
  ModelArch arch;
  TrainConfig train;
  DataSpec data_spec;  // only `refresh` and `cluster_spread` are used here

  double alpha = 0.6;  // cloud mixing weight
  double beta = 0.6;   // gateway mixing weight
  double q = 0.5;      // staleness exponent
  int gateway_epochs = 20;      // Z, asynchronous gateways
  int sync_gateway_epochs = 5;  // Z, barrier and windowed gateways
  int max_cloud_epochs = 1000;  // H
  double max_time = 1e5;        // simulated seconds

  double kappa = 1.0;
  double phi = 0.1;
  int assoc_period = 5;  // cloud epochs between association solves
  int pca_dim = 30;      // 0 exchanges full gradients
  double alpha_ema = 0.5;
  double semi_async_window = 100.0;  // seconds
  double eval_every = 10.0;          // seconds

  BandwidthForm bandwidth_form = BandwidthForm::kSum;
  Adoption adoption = Adoption::kOnCycleEnd;
  bool gateway_broadcast_all = false;  // dispatch to every idle device

  bool stop_at_target = false;
  double target_accuracy = 1.0;

  bool record_transfers = true;
  bool record_cloud_models = false;
  uint64_t seed = 1;

  // Throws ConfigError naming the offending field.
  void validate(int num_devices, int num_gateways) const;
};

// (delta + 1)^-q
double staleness(double q, int delta);

// (1 - w) * current + w * incoming with w = base_weight * staleness(q, delta).
ModelParams async_aggregate(const ModelParams& current,
                            const ModelParams& incoming, double base_weight,
                            int delta, double q);

// Seed of the local training run for a device's k-th round.
uint64_t device_round_seed(uint64_t run_seed, int device, int round);

struct TraceRow {
  double t = 0.0;
  int h = 0;
  double acc = 0.0;
  double loss = 0.0;
  uint64_t bytes = 0;
  uint64_t overhead_bytes = 0;
  int max_stale_cloud = 0;
  int max_stale_gw = 0;
};

using MetricTrace = std::vector<TraceRow>;

enum class TransferKind {
  kGatewayToDevice,  // model download
  kDeviceToGateway,  // model upload
  kGatewayToCloud,
  kCloudToGateway,
  kOverhead,  // compressed gradient / loss reported with an upload
  kSetup,     // warmup gradients and the PCA basis
};

std::string to_string(TransferKind k);

struct Transfer {
  double t = 0.0;
  TransferKind kind = TransferKind::kGatewayToDevice;
  int device = -1;
  int gateway = -1;
  uint64_t bytes = 0;
};

struct SimStats {
  int cloud_epochs = 0;
  int device_rounds = 0;
  uint64_t model_transfers = 0;
  uint64_t model_bytes = 0;  // M
  uint64_t total_bytes = 0;
  uint64_t overhead_bytes = 0;
  uint64_t setup_bytes = 0;
  int max_stale_cloud = 0;
  int max_stale_gw = 0;
  int association_solves = 0;
  int selection_solves = 0;
  int fallback_dispatches = 0;
  uint64_t events = 0;
  double end_time = 0.0;
  // Every event ran no earlier than the event that scheduled it.
  bool causal = true;
  // in-flight sets and busy flags agreed at every event boundary.
  bool consistent = true;
};

struct SimResult {
  MetricTrace trace;
  std::vector<Transfer> transfers;
  SimStats stats;
  ModelParams final_model;
  std::vector<ModelParams> cloud_models;  // index h-1, when recorded
  // Utilities of the warmup cohort (async-hfl only), in device order.
  std::vector<double> warmup_utilities;
};

// Runs one trial. `topology` is copied; faults listed in it are scheduled.
SimResult simulate(const SimConfig& config, const FederatedDataset& data,
                   const Topology& topology);

// First trace time with acc >= target, if any.
std::optional<double> time_to_target(const MetricTrace& trace, double target);

// CSV with header t,h,acc,loss,bytes,overhead_bytes,max_stale_cloud,max_stale_gw
std::string trace_to_csv(const MetricTrace& trace);

}  // namespace hfl

#endif  // HFL_SIMULATOR_H_
