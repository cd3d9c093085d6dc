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

#include "hfl/runner.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "hfl/error.h"
#include "hfl/toml.h"

namespace hfl {
namespace {

using nlohmann::json;

// Typed access to one config section that remembers which keys were read.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    node_ = &root.at(name_);
    if (!node_->is_object())
      throw ConfigError(name_ + ": expected a section");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return node_ != nullptr && node_->contains(key);
  }

  void get(const char* key, double& out) {
    if (!has(key)) return;
    const json& v = node_->at(key);
    if (!v.is_number()) fail(key, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(key, "must be finite");
  }
  void get(const char* key, int& out) {
    if (!has(key)) return;
    const json& v = node_->at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    const int64_t x = v.get<int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
      fail(key, "out of range");
    out = static_cast<int>(x);
  }
  void get(const char* key, bool& out) {
    if (!has(key)) return;
    const json& v = node_->at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    out = v.get<bool>();
  }
  void get(const char* key, std::string& out) {
    if (!has(key)) return;
    const json& v = node_->at(key);
    if (!v.is_string()) fail(key, "expected a string");
    out = v.get<std::string>();
  }
  void get(const char* key, std::optional<std::string>& out) {
    std::string s;
    if (!has(key)) return;
    get(key, s);
    out = s;
  }
  void get(const char* key, std::optional<uint64_t>& out) {
    if (!has(key)) return;
    out = to_seed(node_->at(key), key);
  }
  void get(const char* key, std::vector<uint64_t>& out) {
    if (!has(key)) return;
    const json& v = node_->at(key);
    if (!v.is_array()) fail(key, "expected an array of integers");
    out.clear();
    for (const json& e : v) out.push_back(to_seed(e, key));
  }
  void get(const char* key, std::vector<std::string>& out) {
    if (!has(key)) return;
    const json& v = node_->at(key);
    if (!v.is_array()) fail(key, "expected an array of strings");
    out.clear();
    for (const json& e : v) {
      if (!e.is_string()) fail(key, "expected an array of strings");
      out.push_back(e.get<std::string>());
    }
  }

  template <typename T>
  void need(const char* key, T& out) {
    if (!has(key)) fail(key, "required field missing");
    get(key, out);
  }

  // Rejects keys nobody asked for (usually typos).
  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [k, v] : node_->items())
      if (!seen_.count(k)) throw ConfigError(name_ + "." + k + ": unknown key");
  }

  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError(name_ + "." + key + ": " + what);
  }

 private:
  uint64_t to_seed(const json& v, const char* key) const {
    if (v.is_number_unsigned()) return v.get<uint64_t>();
    if (v.is_number_integer() && v.get<int64_t>() >= 0)
      return static_cast<uint64_t>(v.get<int64_t>());
    fail(key, "expected a non-negative integer");
  }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string fault_to_string(const FaultEvent& f) {
  std::string s = format_double(f.time) + ":" + std::to_string(f.device) + ":" +
                  to_string(f.action);
  if (f.action == FaultAction::kSlowdown) s += ":" + format_double(f.factor);
  return s;
}

// "t:device:action[:factor]"
FaultEvent parse_fault(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  auto bad = [&]() -> ConfigError {
    return ConfigError("topology.faults: malformed entry '" + s +
                       "', expected t:device:action[:factor]");
  };
  if (parts.size() < 3 || parts.size() > 4) throw bad();
  auto num = [&](const std::string& t, auto& out) {
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || p != t.data() + t.size()) throw bad();
  };
  FaultEvent f;
  num(parts[0], f.time);
  num(parts[1], f.device);
  f.action = parse_fault_action(parts[2]);
  if (parts.size() == 4) num(parts[3], f.factor);
  if (f.action == FaultAction::kSlowdown && !(f.factor > 0.0))
    throw ConfigError("topology.faults: slowdown factor must be > 0 in '" + s + "'");
  return f;
}

std::string form_name(BandwidthForm f) {
  return f == BandwidthForm::kSum ? "sum" : "per-device";
}

std::filesystem::path resolve(const std::string& p,
                              const std::filesystem::path& base) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  json run = {{"mode", hfl::to_string(sim.mode)},
              {"seeds", seeds},
              {"target_accuracy", target_accuracy},
              {"output_dir", output_dir},
              {"max_time", sim.max_time},
              {"max_cloud_epochs", sim.max_cloud_epochs},
              {"eval_every", sim.eval_every},
              {"stop_at_target", sim.stop_at_target}};
  json d = {{"num_devices", data.num_devices},
            {"num_classes", data.num_classes},
            {"classes_per_device", data.classes_per_device},
            {"samples_per_device", data.samples_per_device},
            {"input_dim", data.input_dim},
            {"cluster_spread", data.cluster_spread},
            {"refresh", data.refresh}};
  if (data_path) d["path"] = *data_path;
  if (data_seed) d["seed"] = *data_seed;
  json fault_list = json::array();
  for (const FaultEvent& f : faults) fault_list.push_back(fault_to_string(f));
  json t = {{"num_gateways", topology.num_gateways},
            {"sigma", topology.sigma},
            {"link_min", topology.link_min},
            {"link_max", topology.link_max},
            {"comp_min", topology.comp_min},
            {"comp_max", topology.comp_max},
            {"cloud_delay", topology.cloud_delay},
            {"bandwidth_fraction", topology.bandwidth_fraction},
            {"model_size", topology.model_size},
            {"faults", fault_list}};
  if (topology_path) t["path"] = *topology_path;
  if (topology_seed) t["seed"] = *topology_seed;
  json model = {{"kind", hfl::to_string(sim.arch.kind)},
                {"hidden_dim", sim.arch.hidden_dim}};
  json train = {{"gamma", sim.train.gamma},
                {"rho", sim.train.rho},
                {"epochs", sim.train.epochs},
                {"batch_size", sim.train.batch_size}};
  json alg = {{"alpha", sim.alpha},
              {"beta", sim.beta},
              {"q", sim.q},
              {"Z", sim.gateway_epochs},
              {"Z_sync", sim.sync_gateway_epochs},
              {"kappa", sim.kappa},
              {"phi", sim.phi},
              {"assoc_period", sim.assoc_period},
              {"pca_dim", sim.pca_dim},
              {"alpha_ema", sim.alpha_ema},
              {"window", sim.semi_async_window},
              {"bandwidth_form", form_name(sim.bandwidth_form)},
              {"gateway_adoption", hfl::to_string(sim.adoption)},
              {"gateway_broadcast_all", sim.gateway_broadcast_all}};
  return {{"run", run},     {"data", d},   {"topology", t},
          {"model", model}, {"train", train}, {"algorithm", alg}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected sections");
  static const std::set<std::string> kSections = {"run",   "data",  "topology",
                                                  "model", "train", "algorithm"};
  for (const auto& [k, v] : j.items())
    if (!kSections.count(k)) throw ConfigError(k + ": unknown section");

  RunConfig c;
  Section run(j, "run");
  std::string mode;
  run.need("mode", mode);
  c.sim.mode = parse_mode(mode);
  run.need("seeds", c.seeds);
  if (c.seeds.empty()) run.fail("seeds", "at least one seed required");
  run.need("target_accuracy", c.target_accuracy);
  run.get("output_dir", c.output_dir);
  run.get("max_time", c.sim.max_time);
  run.get("max_cloud_epochs", c.sim.max_cloud_epochs);
  run.get("eval_every", c.sim.eval_every);
  run.get("stop_at_target", c.sim.stop_at_target);
  run.finish();
  c.sim.target_accuracy = c.target_accuracy;

  Section data(j, "data");
  data.get("path", c.data_path);
  data.get("seed", c.data_seed);
  data.get("num_devices", c.data.num_devices);
  data.get("num_classes", c.data.num_classes);
  data.get("classes_per_device", c.data.classes_per_device);
  data.get("samples_per_device", c.data.samples_per_device);
  data.get("input_dim", c.data.input_dim);
  data.get("cluster_spread", c.data.cluster_spread);
  data.get("refresh", c.data.refresh);
  data.finish();

  Section topo(j, "topology");
  topo.get("path", c.topology_path);
  topo.get("seed", c.topology_seed);
  topo.get("num_gateways", c.topology.num_gateways);
  topo.get("sigma", c.topology.sigma);
  topo.get("link_min", c.topology.link_min);
  topo.get("link_max", c.topology.link_max);
  topo.get("comp_min", c.topology.comp_min);
  topo.get("comp_max", c.topology.comp_max);
  topo.get("cloud_delay", c.topology.cloud_delay);
  topo.get("bandwidth_fraction", c.topology.bandwidth_fraction);
  topo.get("model_size", c.topology.model_size);
  std::vector<std::string> faults;
  topo.get("faults", faults);
  for (const std::string& f : faults) c.faults.push_back(parse_fault(f));
  topo.finish();
  if (c.topology.model_size < 0.0)
    throw ConfigError("topology.model_size must be >= 0 (0 derives it from the model)");

  Section model(j, "model");
  std::string kind = "logistic";
  model.get("kind", kind);
  c.sim.arch.kind = parse_model_kind(kind);
  model.get("hidden_dim", c.sim.arch.hidden_dim);
  model.finish();

  Section train(j, "train");
  train.get("gamma", c.sim.train.gamma);
  train.get("rho", c.sim.train.rho);
  train.get("epochs", c.sim.train.epochs);
  train.get("batch_size", c.sim.train.batch_size);
  train.finish();

  Section alg(j, "algorithm");
  alg.get("alpha", c.sim.alpha);
  alg.get("beta", c.sim.beta);
  alg.get("q", c.sim.q);
  alg.get("Z", c.sim.gateway_epochs);
  alg.get("Z_sync", c.sim.sync_gateway_epochs);
  alg.get("kappa", c.sim.kappa);
  alg.get("phi", c.sim.phi);
  alg.get("assoc_period", c.sim.assoc_period);
  alg.get("pca_dim", c.sim.pca_dim);
  alg.get("alpha_ema", c.sim.alpha_ema);
  alg.get("window", c.sim.semi_async_window);
  std::string form = form_name(c.sim.bandwidth_form);
  alg.get("bandwidth_form", form);
  if (form == "sum")
    c.sim.bandwidth_form = BandwidthForm::kSum;
  else if (form == "per-device")
    c.sim.bandwidth_form = BandwidthForm::kPerDevice;
  else
    alg.fail("bandwidth_form", "must be sum or per-device");
  std::string adopt = hfl::to_string(c.sim.adoption);
  alg.get("gateway_adoption", adopt);
  c.sim.adoption = parse_adoption(adopt);
  alg.get("gateway_broadcast_all", c.sim.gateway_broadcast_all);
  alg.finish();

  if (!c.data_path) c.data.validate();
  if (!c.topology_path) {
    TopologyGenSpec probe = c.topology;
    probe.num_devices = c.data.num_devices;
    probe.model_size = 1.0;
    probe.validate();
  }
  if (c.target_accuracy < 0.0 || c.target_accuracy > 1.0)
    throw ConfigError("run.target_accuracy must be in [0, 1]");
  if (!c.data_path && !c.topology_path) {
    SimConfig probe = c.sim;
    probe.arch.input_dim = c.data.input_dim;
    probe.arch.num_classes = c.data.num_classes;
    probe.target_accuracy = c.target_accuracy;
    probe.validate(c.data.num_devices, c.topology.num_gateways);
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(path.filename().string() + ": " + e.what());
    }
    if (j.contains("config")) return RunConfig::from_json(j.at("config"));
    return RunConfig::from_json(j);
  }
  return RunConfig::from_json(load_toml(path));
}

FederatedDataset build_dataset(const RunConfig& cfg, uint64_t seed,
                               const std::filesystem::path& base_dir) {
  if (cfg.data_path) return load_shards(resolve(*cfg.data_path, base_dir));
  return gen_synthetic(cfg.data, cfg.data_seed.value_or(seed));
}

namespace {

ModelArch arch_for(const RunConfig& cfg, const FederatedDataset& data) {
  ModelArch arch = cfg.sim.arch;
  arch.input_dim = data.shards.front().input_dim;
  arch.num_classes = data.num_classes;
  return arch;
}

Topology topology_for(const RunConfig& cfg, uint64_t seed,
                      const std::filesystem::path& base_dir, int num_devices,
                      const ModelArch& arch) {
  Topology topo;
  if (cfg.topology_path) {
    topo = load_topology(resolve(*cfg.topology_path, base_dir));
  } else {
    TopologyGenSpec spec = cfg.topology;
    spec.num_devices = num_devices;
    if (spec.model_size == 0.0)
      spec.model_size = static_cast<double>(arch.param_count()) * 8.0;
    topo = generate_topology(spec, cfg.topology_seed.value_or(seed));
  }
  if (topo.model_size <= 0.0)
    topo.model_size = static_cast<double>(arch.param_count()) * 8.0;
  for (const FaultEvent& f : cfg.faults) {
    if (f.device < 0 || f.device >= topo.num_devices())
      throw ConfigError("topology.faults: device " + std::to_string(f.device) +
                        " out of range");
    topo.faults.push_back(f);
  }
  if (topo.num_devices() != num_devices)
    throw ConfigError("topology.path: topology has " +
                      std::to_string(topo.num_devices()) +
                      " devices, dataset has " + std::to_string(num_devices));
  topo.validate();
  return topo;
}

}  // namespace

Topology build_topology(const RunConfig& cfg, uint64_t seed,
                        const std::filesystem::path& base_dir) {
  FederatedDataset data = build_dataset(cfg, seed, base_dir);
  return topology_for(cfg, seed, base_dir, static_cast<int>(data.shards.size()),
                      arch_for(cfg, data));
}

SimConfig build_sim_config(const RunConfig& cfg, const FederatedDataset& data,
                           uint64_t seed) {
  SimConfig sim = cfg.sim;
  sim.arch = arch_for(cfg, data);
  sim.data_spec = cfg.data;
  sim.seed = seed;
  sim.target_accuracy = cfg.target_accuracy;
  return sim;
}

SimResult run_trial(const RunConfig& cfg, uint64_t seed,
                    const std::filesystem::path& base_dir) {
  FederatedDataset data = build_dataset(cfg, seed, base_dir);
  SimConfig sim = build_sim_config(cfg, data, seed);
  Topology topo = topology_for(cfg, seed, base_dir,
                               static_cast<int>(data.shards.size()), sim.arch);
  return simulate(sim, data, topo);
}

void validate_run_config(const RunConfig& cfg,
                         const std::filesystem::path& base_dir) {
  const uint64_t seed = cfg.seeds.front();
  FederatedDataset data = build_dataset(cfg, seed, base_dir);
  SimConfig sim = build_sim_config(cfg, data, seed);
  Topology topo = topology_for(cfg, seed, base_dir,
                               static_cast<int>(data.shards.size()), sim.arch);
  sim.validate(topo.num_devices(), topo.num_gateways());
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const size_t m = values.size() / 2;
  if (values.size() % 2 == 1) return values[m];
  const double a = values[m - 1], b = values[m];
  if (std::isinf(a) || std::isinf(b)) return std::isinf(a) ? a : b;
  return 0.5 * (a + b);
}

RunSummary summarize(const std::vector<MetricTrace>& traces, double target,
                     const std::vector<uint64_t>& seeds) {
  if (traces.empty()) throw ValidationError("summarize: no traces");
  RunSummary s;
  std::vector<double> times;
  for (size_t k = 0; k < traces.size(); ++k) {
    const MetricTrace& tr = traces[k];
    SeedSummary e;
    e.seed = k < seeds.size() ? seeds[k] : k;
    for (const TraceRow& r : tr) {
      if (r.acc >= target) {
        e.converge_time = r.t;
        e.bytes_at_target = r.bytes;
        break;
      }
    }
    if (!tr.empty()) {
      e.total_bytes = tr.back().bytes;
      e.final_acc = tr.back().acc;
    }
    times.push_back(e.converge_time.value_or(std::numeric_limits<double>::infinity()));
    s.seeds.push_back(e);
  }
  const double m = median(times);
  if (std::isfinite(m)) s.median_converge_time = m;
  return s;
}

std::optional<double> speedup(const RunSummary& candidate,
                              const RunSummary& baseline) {
  if (!candidate.median_converge_time || !baseline.median_converge_time)
    return std::nullopt;
  if (*candidate.median_converge_time <= 0.0) return std::nullopt;
  return *baseline.median_converge_time / *candidate.median_converge_time;
}

nlohmann::json RunSummary::to_json() const {
  json per = json::array();
  for (const SeedSummary& e : seeds) {
    json row = {{"seed", e.seed},
                {"converge_time", nullptr},
                {"bytes_at_target", nullptr},
                {"total_bytes", e.total_bytes},
                {"final_acc", e.final_acc}};
    if (e.converge_time) row["converge_time"] = *e.converge_time;
    if (e.bytes_at_target) row["bytes_at_target"] = *e.bytes_at_target;
    per.push_back(row);
  }
  json out = {{"seeds", per}, {"median_converge_time", nullptr}};
  if (median_converge_time) out["median_converge_time"] = *median_converge_time;
  return out;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace hfl
