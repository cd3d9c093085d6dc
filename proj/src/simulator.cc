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

#include "hfl/simulator.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <unordered_map>

#include "hfl/error.h"
#include "hfl/rng.h"
#include "hfl/utility.h"

namespace hfl {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kAsyncHfl: return "async-hfl";
    case Mode::kAsyncRandom: return "async-random";
    case Mode::kAsyncHl: return "async-hl";
    case Mode::kSyncRandom: return "sync-random";
    case Mode::kSemiAsync: return "semi-async";
    case Mode::kSyncGwAsyncCloud: return "sync-gw-async-cloud";
  }
  return "?";
}

std::vector<Mode> all_modes() {
  return {Mode::kAsyncHfl,   Mode::kAsyncRandom, Mode::kAsyncHl,
          Mode::kSyncRandom, Mode::kSemiAsync,   Mode::kSyncGwAsyncCloud};
}

Mode parse_mode(const std::string& name) {
  for (Mode m : all_modes())
    if (to_string(m) == name) return m;
  throw ConfigError("run.mode: unknown algorithm '" + name + "'");
}

std::string to_string(Adoption a) {
  return a == Adoption::kImmediate ? "immediate" : "on-cycle-end";
}

Adoption parse_adoption(const std::string& name) {
  if (name == "immediate") return Adoption::kImmediate;
  if (name == "on-cycle-end") return Adoption::kOnCycleEnd;
  throw ConfigError("algorithm.gateway_adoption must be immediate or on-cycle-end, got '" +
                    name + "'");
}

std::string to_string(TransferKind k) {
  switch (k) {
    case TransferKind::kGatewayToDevice: return "gw->dev";
    case TransferKind::kDeviceToGateway: return "dev->gw";
    case TransferKind::kGatewayToCloud: return "gw->cloud";
    case TransferKind::kCloudToGateway: return "cloud->gw";
    case TransferKind::kOverhead: return "overhead";
    case TransferKind::kSetup: return "setup";
  }
  return "?";
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

bool in_unit(double x) { return x > 0.0 && x <= 1.0; }

}  // namespace

void SimConfig::validate(int num_devices, int num_gateways) const {
  arch.validate();
  train.validate();
  require(num_devices >= 1, "data.num_devices must be >= 1");
  require(num_gateways >= 1, "topology.num_gateways must be >= 1");
  require(in_unit(alpha), "algorithm.alpha must be in (0, 1]");
  require(in_unit(beta), "algorithm.beta must be in (0, 1]");
  require(q >= 0.0 && std::isfinite(q), "algorithm.q must be >= 0");
  require(gateway_epochs >= 1, "algorithm.Z must be >= 1");
  require(sync_gateway_epochs >= 1, "algorithm.Z_sync must be >= 1");
  require(max_cloud_epochs >= 1, "run.max_cloud_epochs must be >= 1");
  require(max_time > 0.0 && std::isfinite(max_time), "run.max_time must be > 0");
  require(kappa >= 0.0 && std::isfinite(kappa), "algorithm.kappa must be >= 0");
  require(phi >= 0.0 && std::isfinite(phi), "algorithm.phi must be >= 0");
  require(assoc_period >= 1, "algorithm.assoc_period must be >= 1");
  require(pca_dim >= 0, "algorithm.pca_dim must be >= 0");
  require(static_cast<size_t>(pca_dim) <= arch.param_count(),
          "algorithm.pca_dim exceeds the model dimension");
  require(in_unit(alpha_ema), "algorithm.alpha_ema must be in (0, 1]");
  require(semi_async_window > 0.0, "algorithm.window must be > 0");
  require(eval_every > 0.0, "run.eval_every must be > 0");
  require(target_accuracy >= 0.0 && target_accuracy <= 1.0,
          "run.target_accuracy must be in [0, 1]");
  if (mode == Mode::kAsyncHfl) {
    require(num_devices >= 2,
            "data.num_devices must be >= 2 for async-hfl selection");
    require(pca_dim <= num_devices,
            "algorithm.pca_dim must be <= data.num_devices (warmup cohort size)");
  }
}

double staleness(double q, int delta) {
  if (delta < 0) throw ValidationError("staleness: negative delta");
  if (q < 0.0) throw ValidationError("staleness: negative q");
  return std::pow(static_cast<double>(delta) + 1.0, -q);
}

ModelParams async_aggregate(const ModelParams& current,
                            const ModelParams& incoming, double base_weight,
                            int delta, double q) {
  if (current.size() != incoming.size())
    throw ValidationError("async_aggregate: length mismatch (" +
                          std::to_string(current.size()) + " vs " +
                          std::to_string(incoming.size()) + ")");
  if (!in_unit(base_weight))
    throw ValidationError("async_aggregate: base weight must be in (0, 1]");
  const double w = base_weight * staleness(q, delta);
  ModelParams out(current.size());
  for (size_t k = 0; k < current.size(); ++k)
    out[k] = (1.0 - w) * current[k] + w * incoming[k];
  return out;
}

uint64_t device_round_seed(uint64_t run_seed, int device, int round) {
  return derive_seed(run_seed, {kStreamTrain, static_cast<uint64_t>(device),
                                static_cast<uint64_t>(round)});
}

namespace {

enum class EventKind {
  kDeviceModelArrives,
  kDeviceUploadArrives,
  kGatewayModelArrives,
  kGatewayUploadArrives,
  kAssociationTimer,
  kFaultTimer,
  kEvalTimer,
  kWindowTimer,
};

struct Event {
  double time = 0.0;
  uint64_t seq = 0;
  EventKind kind = EventKind::kEvalTimer;
  double scheduled_at = 0.0;
  int device = -1;
  int gateway = -1;
  int counter = 0;       // zeta, tau or window token
  uint64_t generation = 0;
  bool has_payload = false;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

struct Payload {
  ModelParams model;
  RoundLatency latency;
  std::vector<double> grad;
  double loss = 0.0;
  double weight = 0.0;
  bool empty = false;
};

struct Buffered {
  ModelParams model;
  double weight = 0.0;
  int zeta = 0;
};

struct GatewayState {
  ModelParams omega;
  int tau = 0;
  int z = 0;
  int agg_count = 0;  // never reset; staleness reference
  std::map<int, double> in_flight;  // device -> committed rate
  bool awaiting_cloud = false;
  bool cycle_active = false;
  std::set<int> expected;  // barrier round participants still out
  std::vector<Buffered> buffer;
  std::set<int> participants;
  int window = 0;
  int window_token = 0;
};

struct DeviceState {
  bool busy = false;
  int gateway = -1;
  int zeta = 0;
  int rounds = 0;
  uint64_t generation = 0;
  std::optional<int> pending_assoc;
  int last_gateway = -1;
  double loss = std::numeric_limits<double>::infinity();
};

ModelParams weighted_average(const std::vector<Buffered>& items,
                             const std::vector<double>& weights) {
  ModelParams out(items.front().model.size());
  double total = 0.0;
  for (double w : weights) total += w;
  for (size_t b = 0; b < items.size(); ++b) {
    const double w = weights[b] / total;
    for (size_t k = 0; k < out.size(); ++k) out[k] += w * items[b].model[k];
  }
  return out;
}

class Sim {
 public:
  Sim(const SimConfig& cfg, const FederatedDataset& data, const Topology& topo)
      : cfg_(cfg),
        data_(data),
        topo_(topo),
        faults_(topo.faults),
        n_(topo.num_devices()),
        g_(topo.num_gateways()),
        tracker_(n_, g_, cfg.alpha_ema),
        store_(n_),
        rng_(derive_seed(cfg.seed, {kStreamSim})) {
    if (static_cast<int>(data.shards.size()) != n_)
      throw ConfigError("num_devices: topology has " + std::to_string(n_) +
                        " devices but the dataset has " +
                        std::to_string(data.shards.size()) + " shards");
    if (data.shards.front().input_dim != cfg.arch.input_dim)
      throw ConfigError("input_dim: model expects " +
                        std::to_string(cfg.arch.input_dim) +
                        " features, dataset has " +
                        std::to_string(data.shards.front().input_dim));
    if (data.num_classes != cfg.arch.num_classes)
      throw ConfigError("num_classes: model and dataset disagree");
    cfg_.validate(n_, g_);
    topo_.validate();
    if (!(topo_.model_size > 0.0))
      m_bytes_ = static_cast<uint64_t>(cfg.arch.param_count()) * 8;
    else
      m_bytes_ = static_cast<uint64_t>(std::llround(topo_.model_size));
    shards_ = data.shards;
    dev_.resize(n_);
    gw_.resize(g_);
  }

  SimResult run();

 private:
  bool async_gateways() const {
    return cfg_.mode == Mode::kAsyncHfl || cfg_.mode == Mode::kAsyncRandom ||
           cfg_.mode == Mode::kAsyncHl;
  }
  bool barrier_gateways() const {
    return cfg_.mode == Mode::kSyncRandom ||
           cfg_.mode == Mode::kSyncGwAsyncCloud;
  }
  bool sync_cloud() const {
    return cfg_.mode == Mode::kSyncRandom || cfg_.mode == Mode::kSemiAsync;
  }

  void push(Event e, Payload* p = nullptr);
  void charge(TransferKind kind, int device, int gateway, uint64_t bytes);

  double est_tau(int i, int j) const;
  std::vector<int> idle_devices(int j) const;
  double committed(int j) const;
  std::vector<double> compress(const std::vector<double>& grad) const;

  void warmup();
  void run_association();
  void install_association(const std::vector<int>& target);
  void set_association(int i, int target);

  std::vector<int> select_random(int j, const std::vector<int>& idle,
                                 double budget);
  std::vector<int> select_high_loss(int j, const std::vector<int>& idle,
                                    double budget);
  std::vector<int> select_utility(int j, const std::vector<int>& idle,
                                  double budget);
  void fallback(int j, const std::vector<int>& idle, std::vector<int>& chosen);
  void dispatch_async(int j);
  void dispatch(int i, int j, double rate);

  void on_device_model(const Event& e, Payload p);
  void on_device_upload(const Event& e, Payload p);
  void on_gateway_model(const Event& e, Payload p);
  void on_gateway_upload(const Event& e, Payload p);
  void on_window(const Event& e);
  void on_faults();
  void on_eval();

  void gateway_async_aggregate(int j, const ModelParams& model, int zeta);
  void sync_cycle_start(int j);
  void sync_round_start(int j);
  void sync_round_complete(int j);
  void semi_cycle_start(int j);
  void semi_dispatch(int j);
  void gateway_cycle_done(int j);
  void cloud_after_update();
  void broadcast();

  void cancel_round(int i);
  void check_consistency();
  void check_finite(const ModelParams& m, const char* where) const;

  SimConfig cfg_;
  const FederatedDataset& data_;
  Topology topo_;
  FaultSchedule faults_;
  int n_, g_;
  uint64_t m_bytes_ = 0;

  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::unordered_map<uint64_t, Payload> payloads_;
  uint64_t seq_ = 0;
  double now_ = 0.0;
  bool stop_ = false;
  bool cloud_stalled_ = false;

  ModelParams omega_;
  int h_ = 0;
  std::vector<Buffered> cloud_buffer_;
  std::vector<char> cloud_reported_;

  std::vector<GatewayState> gw_;
  std::vector<DeviceState> dev_;
  std::vector<Shard> shards_;
  LatencyTracker tracker_;
  UtilityStore store_;
  PcaModel pca_;
  Rng rng_;

  uint64_t overhead_per_upload_ = 0;
  SimResult out_;
};

void Sim::push(Event e, Payload* p) {
  e.seq = seq_++;
  e.scheduled_at = now_;
  if (p != nullptr) {
    e.has_payload = true;
    payloads_.emplace(e.seq, std::move(*p));
  }
  queue_.push(e);
}

void Sim::charge(TransferKind kind, int device, int gateway, uint64_t bytes) {
  SimStats& s = out_.stats;
  s.total_bytes += bytes;
  if (kind == TransferKind::kOverhead) {
    s.overhead_bytes += bytes;
  } else if (kind == TransferKind::kSetup) {
    s.setup_bytes += bytes;
  } else {
    ++s.model_transfers;
  }
  if (cfg_.record_transfers)
    out_.transfers.push_back({now_, kind, device, gateway, bytes});
}

double Sim::est_tau(int i, int j) const {
  if (auto t = tracker_.get(i, j)) return *t;
  return topo_.delay(i, j).mean_total();
}

std::vector<int> Sim::idle_devices(int j) const {
  std::vector<int> out;
  for (int i : topo_.devices_of(j))
    if (!dev_[i].busy && !topo_.dropped(i) && topo_.feasible(i, j))
      out.push_back(i);
  return out;
}

double Sim::committed(int j) const {
  double s = 0.0;
  for (const auto& [i, r] : gw_[j].in_flight) s += r;
  return s;
}

std::vector<double> Sim::compress(const std::vector<double>& grad) const {
  if (cfg_.pca_dim == 0) return grad;
  return pca_reconstruct(pca_, pca_project(pca_, grad));
}

void Sim::check_finite(const ModelParams& m, const char* where) const {
  if (!m.all_finite())
    throw NumericError(std::string("non-finite model after ") + where +
                       " at t=" + std::to_string(now_));
}

void Sim::warmup() {
  const ModelParams& w0 = omega_;
  std::vector<std::vector<double>> grads(n_);
  const size_t d = cfg_.arch.param_count();
  for (int i = 0; i < n_; ++i) {
    TrainResult r = local_train(w0, w0, cfg_.arch, shards_[i], cfg_.train,
                                derive_seed(cfg_.seed, {kStreamWarmup,
                                                        static_cast<uint64_t>(i)}),
                                i);
    charge(TransferKind::kGatewayToDevice, i, topo_.gateway_of(i), m_bytes_);
    charge(TransferKind::kSetup, i, topo_.gateway_of(i), d * 8);
    dev_[i].loss = r.loss;
    grads[i] = std::move(r.last_grad);
  }
  if (cfg_.pca_dim > 0) {
    pca_ = pca_fit(grads, cfg_.pca_dim);
    for (int i = 0; i < n_; ++i)
      charge(TransferKind::kSetup, i, topo_.gateway_of(i), pca_.wire_bytes());
  }
  for (int i = 0; i < n_; ++i) store_.set(i, compress(grads[i]), 0.0);
  for (const UtilityRecord& r : store_.utilities())
    out_.warmup_utilities.push_back(r.u);
}

void Sim::set_association(int i, int target) {
  if (target >= 0 && topo_.feasible(i, target)) {
    topo_.associate(i, target);
    dev_[i].last_gateway = target;
  } else {
    topo_.dissociate(i);
  }
}

void Sim::install_association(const std::vector<int>& target) {
  for (int i = 0; i < n_; ++i) {
    if (target[i] == topo_.gateway_of(i)) {
      dev_[i].pending_assoc.reset();
      continue;
    }
    if (dev_[i].busy)
      dev_[i].pending_assoc = target[i];
    else
      set_association(i, target[i]);
  }
}

void Sim::run_association() {
  ++out_.stats.association_solves;
  std::vector<int> target(n_, -1);
  if (cfg_.mode == Mode::kAsyncHfl) {
    AssociationInstance inst;
    inst.num_devices = n_;
    inst.num_gateways = g_;
    inst.feasible = topo_.feasibility_matrix();
    inst.rate.assign(static_cast<size_t>(n_) * g_, 0.0);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < g_; ++j)
        if (topo_.feasible(i, j))
          inst.rate[static_cast<size_t>(i) * g_ + j] =
              est_rate(static_cast<double>(m_bytes_), est_tau(i, j));
    for (const UtilityRecord& r : store_.utilities())
      inst.utility.push_back(r.u);
    inst.bandwidth = topo_.bandwidth();
    inst.phi = cfg_.phi;
    target = solve_association(inst).gateway_of;
    // Devices left out keep their current gateway.
    for (int i = 0; i < n_; ++i)
      if (target[i] < 0) target[i] = topo_.gateway_of(i);
  } else {
    for (int i = 0; i < n_; ++i) {
      if (topo_.dropped(i)) continue;
      std::vector<int> options;
      for (int j = 0; j < g_; ++j)
        if (topo_.feasible(i, j)) options.push_back(j);
      if (options.empty()) continue;
      std::uniform_int_distribution<size_t> pick(0, options.size() - 1);
      target[i] = options[pick(rng_)];
    }
  }
  install_association(target);
}

std::vector<int> Sim::select_random(int j, const std::vector<int>& idle,
                                    double budget) {
  std::vector<int> order = idle;
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<int> out;
  for (int i : order) {
    const double r = est_rate(static_cast<double>(m_bytes_), est_tau(i, j));
    if (cfg_.bandwidth_form == BandwidthForm::kPerDevice) {
      if (r <= topo_.bandwidth()[j]) out.push_back(i);
    } else if (r <= budget) {
      out.push_back(i);
      budget -= r;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> Sim::select_high_loss(int j, const std::vector<int>& idle,
                                       double budget) {
  std::vector<int> order = idle;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dev_[a].loss > dev_[b].loss; });
  std::vector<int> out;
  for (int i : order) {
    const double r = est_rate(static_cast<double>(m_bytes_), est_tau(i, j));
    if (cfg_.bandwidth_form == BandwidthForm::kPerDevice) {
      if (r <= topo_.bandwidth()[j]) out.push_back(i);
    } else if (r <= budget) {
      out.push_back(i);
      budget -= r;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> Sim::select_utility(int j, const std::vector<int>& idle,
                                     double budget) {
  const std::vector<UtilityRecord>& util = store_.utilities();
  SelectionInstance inst;
  inst.bandwidth = cfg_.bandwidth_form == BandwidthForm::kPerDevice
                       ? topo_.bandwidth()[j]
                       : budget;
  inst.kappa = cfg_.kappa;
  inst.form = cfg_.bandwidth_form;
  if (!(inst.bandwidth > 0.0)) return {};
  for (int i : idle) {
    const double tau = est_tau(i, j);
    inst.candidates.push_back(
        {i, util[i].u, tau, est_rate(static_cast<double>(m_bytes_), tau)});
  }
  ++out_.stats.selection_solves;
  Selection sel = solve_selection(inst);
  if (sel.devices.empty() && gw_[j].in_flight.empty()) {
    // Best candidate that fits on its own, whatever its utility.
    const Candidate* best = nullptr;
    for (const Candidate& c : inst.candidates) {
      if (c.rate > inst.bandwidth) continue;
      if (best == nullptr ||
          selection_value(c, inst.kappa) > selection_value(*best, inst.kappa))
        best = &c;
    }
    if (best != nullptr) {
      sel.devices.push_back(best->device_id);
      ++out_.stats.fallback_dispatches;
    }
  }
  return sel.devices;
}

// With nothing selected and nothing in flight, the idle device with the
// lowest estimated rate is sent.
void Sim::fallback(int j, const std::vector<int>& idle, std::vector<int>& chosen) {
  if (!chosen.empty() || !gw_[j].in_flight.empty() || idle.empty()) return;
  int best = -1;
  double best_rate = 0.0;
  for (int i : idle) {
    const double r = est_rate(static_cast<double>(m_bytes_), est_tau(i, j));
    if (best < 0 || r < best_rate) {
      best = i;
      best_rate = r;
    }
  }
  chosen.push_back(best);
  ++out_.stats.fallback_dispatches;
}

void Sim::dispatch(int i, int j, double rate) {
  DeviceState& d = dev_[i];
  GatewayState& gs = gw_[j];
  Payload p;
  p.model = gs.omega;
  p.latency = sample_round_latency(topo_.delay(i, j), rng_);
  charge(TransferKind::kGatewayToDevice, i, j, m_bytes_);
  d.busy = true;
  d.gateway = j;
  d.zeta = cfg_.mode == Mode::kSemiAsync ? gs.window : gs.agg_count;
  gs.in_flight[i] = rate;
  Event e;
  e.time = now_ + p.latency.down;
  e.kind = EventKind::kDeviceModelArrives;
  e.device = i;
  e.gateway = j;
  e.counter = d.zeta;
  e.generation = d.generation;
  push(e, &p);
}

void Sim::dispatch_async(int j) {
  std::vector<int> idle = idle_devices(j);
  if (idle.empty()) return;
  const double budget = topo_.bandwidth()[j] - committed(j);
  std::vector<int> chosen;
  if (cfg_.gateway_broadcast_all) {
    chosen = idle;
  } else if (cfg_.mode == Mode::kAsyncHfl) {
    chosen = select_utility(j, idle, budget);
  } else if (cfg_.mode == Mode::kAsyncHl) {
    chosen = select_high_loss(j, idle, budget);
  } else {
    chosen = select_random(j, idle, budget);
  }
  fallback(j, idle, chosen);
  for (int i : chosen)
    dispatch(i, j, est_rate(static_cast<double>(m_bytes_), est_tau(i, j)));
}

void Sim::on_device_model(const Event& e, Payload p) {
  DeviceState& d = dev_[e.device];
  if (e.generation != d.generation) return;
  TrainResult r =
      local_train(p.model, p.model, cfg_.arch, shards_[e.device], cfg_.train,
                  device_round_seed(cfg_.seed, e.device, d.rounds), e.device);
  Payload up;
  up.model = std::move(r.params);
  up.grad = std::move(r.last_grad);
  up.loss = r.loss;
  up.latency = p.latency;
  Event u = e;
  u.time = now_ + p.latency.comp + p.latency.up;
  u.kind = EventKind::kDeviceUploadArrives;
  push(u, &up);
}

void Sim::on_device_upload(const Event& e, Payload p) {
  const int i = e.device, j = e.gateway;
  DeviceState& d = dev_[i];
  if (e.generation != d.generation) return;
  GatewayState& gs = gw_[j];
  charge(TransferKind::kDeviceToGateway, i, j, m_bytes_);
  if (overhead_per_upload_ > 0)
    charge(TransferKind::kOverhead, i, j, overhead_per_upload_);
  tracker_.update(i, j, p.latency.total);
  d.busy = false;
  d.gateway = -1;
  gs.in_flight.erase(i);
  ++d.rounds;
  ++out_.stats.device_rounds;
  d.loss = p.loss;
  if (cfg_.mode == Mode::kAsyncHfl) store_.set(i, compress(p.grad), now_);
  if (cfg_.data_spec.refresh)
    shards_[i] = refresh_shard(
        shards_[i], data_.class_map[i], data_.centroids, cfg_.data_spec,
        derive_seed(cfg_.seed, {kStreamRefresh, static_cast<uint64_t>(i),
                                static_cast<uint64_t>(d.rounds)}));
  if (d.pending_assoc) {
    set_association(i, *d.pending_assoc);
    d.pending_assoc.reset();
  }

  const double n_i = static_cast<double>(shards_[i].size());
  if (async_gateways()) {
    gateway_async_aggregate(j, p.model, e.counter);
  } else if (barrier_gateways()) {
    gs.buffer.push_back({std::move(p.model), n_i, 0});
    gs.participants.insert(i);
    gs.expected.erase(i);
    if (gs.cycle_active && gs.expected.empty()) sync_round_complete(j);
  } else {
    gs.buffer.push_back({std::move(p.model), n_i, e.counter});
    gs.participants.insert(i);
  }
}

void Sim::gateway_async_aggregate(int j, const ModelParams& model, int zeta) {
  GatewayState& gs = gw_[j];
  const int delta = gs.agg_count - zeta;
  gs.omega = async_aggregate(gs.omega, model, cfg_.beta, delta, cfg_.q);
  check_finite(gs.omega, "gateway aggregation");
  ++gs.agg_count;
  ++gs.z;
  out_.stats.max_stale_gw = std::max(out_.stats.max_stale_gw, delta);
  if (gs.z >= cfg_.gateway_epochs) {
    charge(TransferKind::kGatewayToCloud, -1, j, m_bytes_);
    Payload p;
    p.model = gs.omega;
    Event e;
    e.time = now_ + topo_.cloud_delay;
    e.kind = EventKind::kGatewayUploadArrives;
    e.gateway = j;
    e.counter = gs.tau;
    push(e, &p);
    gs.z = 0;
    if (cfg_.adoption == Adoption::kOnCycleEnd) gs.awaiting_cloud = true;
  }
  dispatch_async(j);
}

void Sim::sync_cycle_start(int j) {
  GatewayState& gs = gw_[j];
  gs.z = 0;
  gs.participants.clear();
  gs.cycle_active = true;
  sync_round_start(j);
}

void Sim::sync_round_start(int j) {
  GatewayState& gs = gw_[j];
  std::vector<int> idle = idle_devices(j);
  std::vector<int> chosen = cfg_.gateway_broadcast_all
                                ? idle
                                : select_random(j, idle, topo_.bandwidth()[j]);
  fallback(j, idle, chosen);
  if (chosen.empty()) {
    gateway_cycle_done(j);
    return;
  }
  gs.expected = std::set<int>(chosen.begin(), chosen.end());
  for (int i : chosen)
    dispatch(i, j, est_rate(static_cast<double>(m_bytes_), est_tau(i, j)));
}

void Sim::sync_round_complete(int j) {
  GatewayState& gs = gw_[j];
  if (!gs.buffer.empty()) {
    std::vector<double> w;
    for (const Buffered& b : gs.buffer) w.push_back(b.weight);
    gs.omega = weighted_average(gs.buffer, w);
    check_finite(gs.omega, "gateway aggregation");
    gs.buffer.clear();
    ++gs.z;
    ++gs.agg_count;
  }
  if (gs.z >= cfg_.sync_gateway_epochs || gs.participants.empty())
    gateway_cycle_done(j);
  else
    sync_round_start(j);
}

void Sim::semi_dispatch(int j) {
  std::vector<int> idle = idle_devices(j);
  if (idle.empty()) return;
  const double budget = topo_.bandwidth()[j] - committed(j);
  std::vector<int> chosen =
      cfg_.gateway_broadcast_all ? idle : select_random(j, idle, budget);
  fallback(j, idle, chosen);
  for (int i : chosen)
    dispatch(i, j, est_rate(static_cast<double>(m_bytes_), est_tau(i, j)));
}

void Sim::semi_cycle_start(int j) {
  GatewayState& gs = gw_[j];
  gs.z = 0;
  gs.participants.clear();
  gs.cycle_active = true;
  semi_dispatch(j);
  if (gs.in_flight.empty() && gs.buffer.empty()) {
    gateway_cycle_done(j);
    return;
  }
  Event e;
  e.time = now_ + cfg_.semi_async_window;
  e.kind = EventKind::kWindowTimer;
  e.gateway = j;
  e.counter = ++gs.window_token;
  push(e);
}

void Sim::on_window(const Event& e) {
  const int j = e.gateway;
  GatewayState& gs = gw_[j];
  if (!gs.cycle_active || e.counter != gs.window_token) return;
  if (!gs.buffer.empty()) {
    std::vector<double> w;
    for (const Buffered& b : gs.buffer) {
      const int delta = gs.window - b.zeta;
      out_.stats.max_stale_gw = std::max(out_.stats.max_stale_gw, delta);
      w.push_back(b.weight * staleness(cfg_.q, delta));
    }
    gs.omega = weighted_average(gs.buffer, w);
    check_finite(gs.omega, "window aggregation");
    gs.buffer.clear();
    ++gs.z;
    ++gs.agg_count;
  }
  ++gs.window;
  if (gs.z < cfg_.sync_gateway_epochs) semi_dispatch(j);
  if (gs.z >= cfg_.sync_gateway_epochs || gs.in_flight.empty()) {
    gateway_cycle_done(j);
    return;
  }
  Event next;
  next.time = now_ + cfg_.semi_async_window;
  next.kind = EventKind::kWindowTimer;
  next.gateway = j;
  next.counter = ++gs.window_token;
  push(next);
}

void Sim::gateway_cycle_done(int j) {
  GatewayState& gs = gw_[j];
  gs.cycle_active = false;
  gs.expected.clear();
  Payload p;
  double weight = 0.0;
  for (int i : gs.participants) weight += static_cast<double>(shards_[i].size());
  Event e;
  e.time = now_ + topo_.cloud_delay;
  e.kind = EventKind::kGatewayUploadArrives;
  e.gateway = j;
  e.counter = gs.tau;
  if (weight == 0.0) {
    // Nothing trained this cycle: a control message, no model bytes.
    if (!sync_cloud()) return;
    p.empty = true;
  } else {
    charge(TransferKind::kGatewayToCloud, -1, j, m_bytes_);
    p.model = gs.omega;
    p.weight = weight;
  }
  push(e, &p);
}

void Sim::broadcast() {
  for (int j = 0; j < g_; ++j) {
    charge(TransferKind::kCloudToGateway, -1, j, m_bytes_);
    Payload p;
    p.model = omega_;
    Event e;
    e.time = now_ + topo_.cloud_delay;
    e.kind = EventKind::kGatewayModelArrives;
    e.gateway = j;
    e.counter = h_;
    push(e, &p);
  }
}

void Sim::cloud_after_update() {
  if (cfg_.record_cloud_models) out_.cloud_models.push_back(omega_);
  if (h_ >= cfg_.max_cloud_epochs) {
    on_eval();
    stop_ = true;
    return;
  }
  broadcast();
  if (h_ % cfg_.assoc_period == 0) {
    Event e;
    e.time = now_;
    e.kind = EventKind::kAssociationTimer;
    push(e);
  }
}

void Sim::on_gateway_upload(const Event& e, Payload p) {
  if (sync_cloud()) {
    cloud_reported_[e.gateway] = 1;
    if (!p.empty) cloud_buffer_.push_back({std::move(p.model), p.weight, 0});
    if (std::count(cloud_reported_.begin(), cloud_reported_.end(), 1) < g_)
      return;
    std::fill(cloud_reported_.begin(), cloud_reported_.end(), 0);
    if (cloud_buffer_.empty()) {
      cloud_stalled_ = true;
      return;
    }
    std::vector<double> w;
    for (const Buffered& b : cloud_buffer_) w.push_back(b.weight);
    omega_ = weighted_average(cloud_buffer_, w);
    cloud_buffer_.clear();
  } else {
    const int delta = h_ - e.counter;
    omega_ = async_aggregate(omega_, p.model, cfg_.alpha, delta, cfg_.q);
    out_.stats.max_stale_cloud = std::max(out_.stats.max_stale_cloud, delta);
  }
  check_finite(omega_, "cloud aggregation");
  ++h_;
  out_.stats.cloud_epochs = h_;
  cloud_after_update();
}

void Sim::on_gateway_model(const Event& e, Payload p) {
  const int j = e.gateway;
  GatewayState& gs = gw_[j];
  if (async_gateways()) {
    if (cfg_.adoption == Adoption::kOnCycleEnd && !gs.awaiting_cloud) return;
    gs.awaiting_cloud = false;
    gs.omega = std::move(p.model);
    gs.tau = e.counter;
    gs.z = 0;
    dispatch_async(j);
  } else if (cfg_.mode == Mode::kSyncGwAsyncCloud) {
    if (gs.cycle_active) return;
    gs.omega = std::move(p.model);
    gs.tau = e.counter;
    sync_cycle_start(j);
  } else {
    gs.omega = std::move(p.model);
    gs.tau = e.counter;
    if (cfg_.mode == Mode::kSyncRandom)
      sync_cycle_start(j);
    else
      semi_cycle_start(j);
  }
}

void Sim::cancel_round(int i) {
  DeviceState& d = dev_[i];
  d.pending_assoc.reset();
  if (!d.busy) return;
  const int j = d.gateway;
  ++d.generation;
  d.busy = false;
  d.gateway = -1;
  GatewayState& gs = gw_[j];
  gs.in_flight.erase(i);
  if (barrier_gateways() && gs.expected.erase(i) > 0 && gs.cycle_active &&
      gs.expected.empty())
    sync_round_complete(j);
}

void Sim::on_faults() {
  for (int i = 0; i < n_; ++i)
    if (topo_.gateway_of(i) >= 0) dev_[i].last_gateway = topo_.gateway_of(i);
  std::vector<FaultEvent> applied = faults_.apply_due(topo_, now_);
  bool restored = false;
  for (const FaultEvent& f : applied) {
    if (f.action == FaultAction::kDrop) {
      cancel_round(f.device);
    } else if (f.action == FaultAction::kRestore) {
      restored = true;
      if (topo_.gateway_of(f.device) < 0) {
        int target = dev_[f.device].last_gateway;
        if (target < 0 || !topo_.feasible(f.device, target)) {
          target = -1;
          for (int j = 0; j < g_ && target < 0; ++j)
            if (topo_.feasible(f.device, j)) target = j;
        }
        if (target >= 0) set_association(f.device, target);
      }
    }
  }
  if (async_gateways())
    for (int j = 0; j < g_; ++j) dispatch_async(j);
  if (restored && cloud_stalled_) {
    cloud_stalled_ = false;
    broadcast();
  }
  if (auto t = faults_.next_time()) {
    Event e;
    e.time = std::max(*t, now_);
    e.kind = EventKind::kFaultTimer;
    push(e);
  }
}

void Sim::on_eval() {
  EvalResult r = evaluate(omega_, cfg_.arch, data_.test);
  TraceRow row;
  row.t = now_;
  row.h = h_;
  row.acc = r.accuracy;
  row.loss = r.loss;
  row.bytes = out_.stats.total_bytes;
  row.overhead_bytes = out_.stats.overhead_bytes;
  row.max_stale_cloud = out_.stats.max_stale_cloud;
  row.max_stale_gw = out_.stats.max_stale_gw;
  out_.trace.push_back(row);
  if (cfg_.stop_at_target && r.accuracy >= cfg_.target_accuracy) stop_ = true;
}

void Sim::check_consistency() {
  std::vector<int> owner(n_, -1);
  for (int j = 0; j < g_; ++j)
    for (const auto& [i, r] : gw_[j].in_flight) {
      if (owner[i] >= 0) out_.stats.consistent = false;
      owner[i] = j;
    }
  for (int i = 0; i < n_; ++i) {
    const DeviceState& d = dev_[i];
    if (d.busy != (owner[i] >= 0)) out_.stats.consistent = false;
    if (d.busy && (d.gateway != owner[i] || topo_.gateway_of(i) != owner[i]))
      out_.stats.consistent = false;
  }
}

SimResult Sim::run() {
  omega_ = init_params(cfg_.arch, derive_seed(cfg_.seed, {kStreamInit}));
  for (GatewayState& gs : gw_) gs.omega = omega_;
  cloud_reported_.assign(g_, 0);
  for (int i = 0; i < n_; ++i) dev_[i].last_gateway = topo_.gateway_of(i);
  out_.stats.model_bytes = m_bytes_;
  const uint64_t d = cfg_.arch.param_count();
  if (cfg_.mode == Mode::kAsyncHfl)
    overhead_per_upload_ = (cfg_.pca_dim > 0 ? cfg_.pca_dim : d) * 8;
  else if (cfg_.mode == Mode::kAsyncHl)
    overhead_per_upload_ = 8;

  {
    // Faults due at t = 0 shape the starting topology.
    auto t = faults_.next_time();
    if (t && *t <= 0.0) faults_.apply_due(topo_, 0.0);
  }
  if (cfg_.mode == Mode::kAsyncHfl) warmup();
  run_association();

  Event ev;
  ev.kind = EventKind::kEvalTimer;
  ev.time = 0.0;
  push(ev);
  if (auto t = faults_.next_time()) {
    Event f;
    f.kind = EventKind::kFaultTimer;
    f.time = *t;
    push(f);
  }
  for (int j = 0; j < g_; ++j) {
    if (async_gateways())
      dispatch_async(j);
    else if (cfg_.mode == Mode::kSemiAsync)
      semi_cycle_start(j);
    else
      sync_cycle_start(j);
  }

  while (!queue_.empty() && !stop_) {
    Event e = queue_.top();
    if (e.time > cfg_.max_time) break;
    queue_.pop();
    if (e.time < e.scheduled_at || e.time < now_) out_.stats.causal = false;
    now_ = e.time;
    ++out_.stats.events;
    Payload p;
    if (e.has_payload) {
      auto it = payloads_.find(e.seq);
      p = std::move(it->second);
      payloads_.erase(it);
    }
    switch (e.kind) {
      case EventKind::kDeviceModelArrives: on_device_model(e, std::move(p)); break;
      case EventKind::kDeviceUploadArrives: on_device_upload(e, std::move(p)); break;
      case EventKind::kGatewayModelArrives: on_gateway_model(e, std::move(p)); break;
      case EventKind::kGatewayUploadArrives: on_gateway_upload(e, std::move(p)); break;
      case EventKind::kAssociationTimer:
        run_association();
        if (async_gateways())
          for (int j = 0; j < g_; ++j) dispatch_async(j);
        break;
      case EventKind::kFaultTimer: on_faults(); break;
      case EventKind::kEvalTimer: {
        on_eval();
        Event next;
        next.kind = EventKind::kEvalTimer;
        next.time = now_ + cfg_.eval_every;
        if (next.time <= cfg_.max_time) push(next);
        break;
      }
      case EventKind::kWindowTimer: on_window(e); break;
    }
    check_consistency();
  }
  if (!stop_ && (out_.trace.empty() || out_.trace.back().t < now_)) on_eval();
  out_.stats.end_time = now_;
  out_.final_model = omega_;
  return std::move(out_);
}

}  // namespace

SimResult simulate(const SimConfig& config, const FederatedDataset& data,
                   const Topology& topology) {
  Sim sim(config, data, topology);
  return sim.run();
}

std::optional<double> time_to_target(const MetricTrace& trace, double target) {
  for (const TraceRow& r : trace)
    if (r.acc >= target) return r.t;
  return std::nullopt;
}

std::string trace_to_csv(const MetricTrace& trace) {
  std::string out =
      "t,h,acc,loss,bytes,overhead_bytes,max_stale_cloud,max_stale_gw\n";
  char buf[256];
  for (const TraceRow& r : trace) {
    std::snprintf(buf, sizeof(buf), "%.17g,%d,%.17g,%.17g,%llu,%llu,%d,%d\n",
                  r.t, r.h, r.acc, r.loss,
                  static_cast<unsigned long long>(r.bytes),
                  static_cast<unsigned long long>(r.overhead_bytes),
                  r.max_stale_cloud, r.max_stale_gw);
    out += buf;
  }
  return out;
}

}  // namespace hfl
