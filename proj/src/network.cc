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

#include "hfl/network.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "hfl/error.h"

namespace hfl {

RoundLatency sample_round_latency(const DelayParams& params, Rng& rng) {
  RoundLatency out;
  if (params.sigma == 0.0) {
    out.down = params.mean_down;
    out.comp = params.mean_comp;
    out.up = params.mean_up;
  } else {
    std::lognormal_distribution<double> mult(-0.5 * params.sigma * params.sigma,
                                             params.sigma);
    out.down = params.mean_down * mult(rng);
    out.comp = params.mean_comp * mult(rng);
    out.up = params.mean_up * mult(rng);
  }
  out.total = out.down + out.comp + out.up;
  return out;
}

double est_rate(double model_bytes, double tau) {
  if (!(tau > 0.0))
    throw ConfigError("est_rate: round latency must be > 0, got " +
                      std::to_string(tau));
  return model_bytes / tau;
}

LatencyTracker::LatencyTracker(int num_devices, int num_gateways,
                               double alpha_ema)
    : g_(num_gateways),
      alpha_(alpha_ema),
      ema_(static_cast<size_t>(num_devices) * num_gateways, 0.0) {
  if (!(alpha_ema > 0.0 && alpha_ema <= 1.0))
    throw ConfigError("alpha_ema must be in (0, 1]");
}

void LatencyTracker::update(int device, int gateway, double observed_tau) {
  if (!(observed_tau > 0.0))
    throw ConfigError("observed latency must be > 0");
  double& e = ema_[static_cast<size_t>(device) * g_ + gateway];
  e = e == 0.0 ? observed_tau : alpha_ * observed_tau + (1.0 - alpha_) * e;
}

std::optional<double> LatencyTracker::get(int device, int gateway) const {
  const double e = ema_[static_cast<size_t>(device) * g_ + gateway];
  if (e == 0.0) return std::nullopt;
  return e;
}

std::string to_string(FaultAction a) {
  switch (a) {
    case FaultAction::kDrop:
      return "drop";
    case FaultAction::kRestore:
      return "restore";
    case FaultAction::kSlowdown:
      return "slowdown";
  }
  return "?";
}

FaultAction parse_fault_action(const std::string& name) {
  if (name == "drop") return FaultAction::kDrop;
  if (name == "restore") return FaultAction::kRestore;
  if (name == "slowdown") return FaultAction::kSlowdown;
  throw ConfigError("unknown fault action '" + name + "'");
}

// --- Topology --------------------------------------------------------------

Topology::Topology(int num_devices, int num_gateways)
    : n_(num_devices),
      g_(num_gateways),
      j_orig_(static_cast<size_t>(num_devices) * num_gateways, 0),
      j_now_(j_orig_),
      assoc_(num_devices, -1),
      dropped_(num_devices, 0),
      links_(static_cast<size_t>(num_devices) * num_gateways),
      comp_mean_(num_devices, 1.0),
      slowdown_(num_devices, 1.0),
      bandwidth_(num_gateways, 1.0) {
  if (num_devices < 1 || num_gateways < 1)
    throw ConfigError("topology needs N >= 1 and G >= 1");
}

void Topology::check_device(int i) const {
  if (i < 0 || i >= n_)
    throw ConfigError("unknown device id " + std::to_string(i));
}

std::vector<int> Topology::devices_of(int gateway) const {
  std::vector<int> out;
  for (int i = 0; i < n_; ++i)
    if (assoc_[i] == gateway) out.push_back(i);
  return out;
}

void Topology::associate(int i, int j) {
  check_device(i);
  if (j < 0 || j >= g_) throw ConfigError("unknown gateway id " + std::to_string(j));
  if (!feasible(i, j))
    throw ValidationError("association (" + std::to_string(i) + ", " +
                          std::to_string(j) + ") violates I <= J");
  assoc_[i] = j;
}

void Topology::add_link(const LinkParams& link) {
  check_device(link.device);
  if (link.gateway < 0 || link.gateway >= g_)
    throw ConfigError("link references unknown gateway " +
                      std::to_string(link.gateway));
  if (!(link.mean_down > 0.0) || !(link.mean_up > 0.0) || !(link.sigma >= 0.0))
    throw ConfigError("link (" + std::to_string(link.device) + ", " +
                      std::to_string(link.gateway) +
                      ") needs positive means and sigma >= 0");
  const size_t k = idx(link.device, link.gateway);
  links_[k] = link;
  j_orig_[k] = 1;
  if (!dropped_[link.device]) j_now_[k] = 1;
}

DelayParams Topology::delay(int i, int j) const {
  const auto& l = links_[idx(i, j)];
  if (!l)
    throw ConfigError("no link between device " + std::to_string(i) +
                      " and gateway " + std::to_string(j));
  const double k = slowdown_[i];
  return {l->mean_down * k, comp_mean_[i] * k, l->mean_up * k, l->sigma};
}

void Topology::apply_fault(const FaultEvent& f) {
  check_device(f.device);
  const int i = f.device;
  switch (f.action) {
    case FaultAction::kDrop:
      dropped_[i] = 1;
      for (int j = 0; j < g_; ++j) j_now_[idx(i, j)] = 0;
      assoc_[i] = -1;
      break;
    case FaultAction::kRestore:
      dropped_[i] = 0;
      slowdown_[i] = 1.0;
      for (int j = 0; j < g_; ++j) j_now_[idx(i, j)] = j_orig_[idx(i, j)];
      break;
    case FaultAction::kSlowdown:
      if (!(f.factor > 0.0)) throw ConfigError("slowdown factor must be > 0");
      slowdown_[i] *= f.factor;
      break;
  }
}

void Topology::validate() const {
  for (int i = 0; i < n_; ++i) {
    if (!(comp_mean_[i] > 0.0))
      throw ConfigError("device " + std::to_string(i) + ": mean_comp must be > 0");
    if (assoc_[i] >= 0 && !feasible(i, assoc_[i]))
      throw ValidationError("device " + std::to_string(i) +
                            " associated over an infeasible link");
  }
  for (int j = 0; j < g_; ++j)
    if (!(bandwidth_[j] > 0.0))
      throw ConfigError("gateway " + std::to_string(j) + ": B must be > 0");
  if (!(model_size > 0.0)) throw ConfigError("topology model_size must be > 0");
  if (!(cloud_delay >= 0.0)) throw ConfigError("cloud_delay must be >= 0");
  for (const auto& f : faults) check_device(f.device);
}

FaultSchedule::FaultSchedule(std::vector<FaultEvent> events)
    : events_(std::move(events)) {
  std::stable_sort(events_.begin(), events_.end(),
                   [](const FaultEvent& a, const FaultEvent& b) {
                     return a.time < b.time;
                   });
}

std::vector<FaultEvent> FaultSchedule::apply_due(Topology& topo, double now) {
  std::vector<FaultEvent> applied;
  while (cursor_ < events_.size() && events_[cursor_].time <= now) {
    topo.apply_fault(events_[cursor_]);
    applied.push_back(events_[cursor_++]);
  }
  return applied;
}

std::optional<double> FaultSchedule::next_time() const {
  if (cursor_ >= events_.size()) return std::nullopt;
  return events_[cursor_].time;
}

// --- generator -------------------------------------------------------------

void TopologyGenSpec::validate() const {
  if (num_devices < 1 || num_gateways < 1)
    throw ConfigError("topology.num_devices and num_gateways must be >= 1");
  if (!(sigma >= 0.0)) throw ConfigError("topology.sigma must be >= 0");
  if (!(link_min > 0.0 && link_max >= link_min))
    throw ConfigError("topology.link_min/link_max must satisfy 0 < min <= max");
  if (!(comp_min > 0.0 && comp_max >= comp_min))
    throw ConfigError("topology.comp_min/comp_max must satisfy 0 < min <= max");
  if (!(bandwidth_fraction > 0.0))
    throw ConfigError("topology.bandwidth_fraction must be > 0");
  if (!(model_size > 0.0)) throw ConfigError("topology.model_size must be > 0");
}

Topology generate_topology(const TopologyGenSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, {kStreamTopology}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = spec.num_devices, g = spec.num_gateways;

  std::vector<std::pair<double, double>> gw(g), dev(n);
  for (auto& p : gw) p = {unit(rng), unit(rng)};
  for (auto& p : dev) p = {unit(rng), unit(rng)};

  Topology topo(n, g);
  topo.model_size = spec.model_size;
  topo.cloud_delay = spec.cloud_delay;
  const double max_dist = std::sqrt(2.0);
  std::vector<double> nominal_rate_sum(g, 0.0);
  std::uniform_int_distribution<int> fanout(1, std::min(3, g));
  for (int i = 0; i < n; ++i) {
    std::vector<int> order(g);
    std::iota(order.begin(), order.end(), 0);
    auto dist = [&](int j) {
      return std::hypot(dev[i].first - gw[j].first, dev[i].second - gw[j].second);
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dist(a) < dist(b); });
    const double comp =
        spec.comp_min * std::pow(spec.comp_max / spec.comp_min, unit(rng));
    topo.set_comp_mean(i, comp);
    const int k = fanout(rng);
    for (int r = 0; r < k; ++r) {
      const int j = order[r];
      const double m =
          spec.link_min + (spec.link_max - spec.link_min) * dist(j) / max_dist;
      topo.add_link({i, j, m, m, spec.sigma});
    }
    topo.associate(i, order[0]);
    nominal_rate_sum[order[0]] +=
        spec.model_size / topo.delay(i, order[0]).mean_total();
  }
  for (int j = 0; j < g; ++j) {
    double b = spec.bandwidth_fraction * nominal_rate_sum[j];
    // A gateway nobody is nearest to still gets a usable cap.
    if (b <= 0.0)
      b = spec.bandwidth_fraction * spec.model_size /
          (2 * spec.link_max + spec.comp_max) * std::max(1, n / g);
    topo.bandwidth()[j] = b;
  }
  return topo;
}

// --- JSON ------------------------------------------------------------------

nlohmann::json topology_to_json(const Topology& topo) {
  nlohmann::json links = nlohmann::json::array(), devices = nlohmann::json::array(),
                 faults = nlohmann::json::array(), assoc = nlohmann::json::array();
  for (int i = 0; i < topo.num_devices(); ++i) {
    for (int j = 0; j < topo.num_gateways(); ++j) {
      const auto& l = topo.link(i, j);
      if (l)
        links.push_back({{"i", i},
                         {"j", j},
                         {"mean_down", l->mean_down},
                         {"mean_up", l->mean_up},
                         {"sigma", l->sigma}});
    }
    devices.push_back({{"i", i}, {"mean_comp", topo.comp_mean(i)}});
    assoc.push_back(topo.gateway_of(i));
  }
  for (const auto& f : topo.faults) {
    nlohmann::json e = {{"t", f.time}, {"device", f.device},
                        {"action", to_string(f.action)}};
    if (f.action == FaultAction::kSlowdown) e["factor"] = f.factor;
    faults.push_back(e);
  }
  return {{"N", topo.num_devices()},
          {"G", topo.num_gateways()},
          {"B", topo.bandwidth()},
          {"model_size", topo.model_size},
          {"cloud_delay", topo.cloud_delay},
          {"links", links},
          {"devices", devices},
          {"assoc", assoc},
          {"faults", faults}};
}

Topology topology_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("N").get<int>(), g = j.at("G").get<int>();
    Topology topo(n, g);
    const auto b = j.at("B").get<std::vector<double>>();
    if (static_cast<int>(b.size()) != g)
      throw ConfigError("topology B has " + std::to_string(b.size()) +
                        " entries for G = " + std::to_string(g));
    topo.bandwidth() = b;
    topo.model_size = j.value("model_size", 0.0);
    topo.cloud_delay = j.value("cloud_delay", 0.05);
    for (const auto& l : j.at("links"))
      topo.add_link({l.at("i").get<int>(), l.at("j").get<int>(),
                     l.at("mean_down").get<double>(), l.at("mean_up").get<double>(),
                     l.value("sigma", 0.0)});
    for (const auto& d : j.at("devices")) {
      const int i = d.at("i").get<int>();
      if (i < 0 || i >= n) throw ConfigError("unknown device id " + std::to_string(i));
      topo.set_comp_mean(i, d.at("mean_comp").get<double>());
    }
    if (j.contains("assoc")) {
      const auto a = j["assoc"].get<std::vector<int>>();
      for (int i = 0; i < n && i < static_cast<int>(a.size()); ++i)
        if (a[i] >= 0) topo.associate(i, a[i]);
    } else {
      for (int i = 0; i < n; ++i)
        for (int g2 = 0; g2 < g; ++g2)
          if (topo.feasible(i, g2)) {
            topo.associate(i, g2);
            break;
          }
    }
    if (j.contains("faults"))
      for (const auto& f : j["faults"])
        topo.faults.push_back({f.at("t").get<double>(), f.at("device").get<int>(),
                               parse_fault_action(f.at("action").get<std::string>()),
                               f.value("factor", 1.0)});
    return topo;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("topology: ") + e.what());
  }
}

Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
  return topology_from_json(j);
}

void save_topology(const Topology& topo, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << topology_to_json(topo).dump(2) << '\n';
}

}  // namespace hfl
