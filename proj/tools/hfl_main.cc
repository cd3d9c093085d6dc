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

// hfl: experiment runner for the hierarchical FL simulator.
//
//   hfl run --config cfg.toml [--seed N] [--out DIR] [--mode NAME]
//           [--eval-every S]
//   hfl compare a.toml b.toml [--seed N] [--out DIR] [--eval-every S]
//   hfl gen-topology --config cfg.toml [--seed N] --out topo.json
//   hfl gen-data --config cfg.toml [--seed N] --out DIR
//   hfl solve instance.json
//   hfl validate --config cfg.toml
//
// Exit codes: 0 ok, 1 runtime failure, 2 invalid config or input.
// SPDLOG_LEVEL sets log verbosity (e.g. SPDLOG_LEVEL=debug).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "hfl/error.h"
#include "hfl/runner.h"
#include "hfl/selection.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<double> eval_every;
};

void apply(const Overrides& o, hfl::RunConfig& cfg) {
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.out) cfg.output_dir = *o.out;
  if (o.mode) cfg.sim.mode = hfl::parse_mode(*o.mode);
  if (o.eval_every) {
    if (!(*o.eval_every > 0.0))
      throw hfl::ConfigError("--eval-every must be > 0");
    cfg.sim.eval_every = *o.eval_every;
  }
}

fs::path base_of(const fs::path& config) { return config.parent_path(); }

// Runs every seed, writes trace_<seed>.csv and summary.json, returns the
// summary document.
json run_config(const hfl::RunConfig& cfg, const fs::path& base,
                const fs::path& out_dir) {
  std::vector<hfl::MetricTrace> traces;
  json per_seed = json::array();
  for (uint64_t seed : cfg.seeds) {
    spdlog::info("{} seed {}: running", hfl::to_string(cfg.sim.mode), seed);
    hfl::SimResult r = hfl::run_trial(cfg, seed, base);
    const fs::path trace_path = out_dir / ("trace_" + std::to_string(seed) + ".csv");
    hfl::write_file_atomic(trace_path, hfl::trace_to_csv(r.trace));
    const hfl::SimStats& s = r.stats;
    per_seed.push_back({{"seed", seed},
                        {"cloud_epochs", s.cloud_epochs},
                        {"device_rounds", s.device_rounds},
                        {"model_transfers", s.model_transfers},
                        {"model_bytes", s.model_bytes},
                        {"overhead_bytes", s.overhead_bytes},
                        {"setup_bytes", s.setup_bytes},
                        {"max_stale_cloud", s.max_stale_cloud},
                        {"max_stale_gw", s.max_stale_gw},
                        {"end_time", s.end_time}});
    spdlog::info("{} seed {}: h={} t={:.1f} acc={:.4f} bytes={}",
                 hfl::to_string(cfg.sim.mode), seed, s.cloud_epochs, s.end_time,
                 r.trace.empty() ? 0.0 : r.trace.back().acc, s.total_bytes);
    traces.push_back(std::move(r.trace));
  }
  hfl::RunSummary summary = hfl::summarize(traces, cfg.target_accuracy, cfg.seeds);
  json doc = summary.to_json();
  for (size_t k = 0; k < per_seed.size(); ++k)
    doc["seeds"][k].update(per_seed[k]);
  doc["mode"] = hfl::to_string(cfg.sim.mode);
  doc["target_accuracy"] = cfg.target_accuracy;
  doc["config"] = cfg.to_json();
  hfl::write_file_atomic(out_dir / "summary.json", doc.dump(2) + "\n");
  return doc;
}

int cmd_run(const std::string& config, const Overrides& o) {
  hfl::RunConfig cfg = hfl::load_run_config(config);
  apply(o, cfg);
  const fs::path out_dir = cfg.output_dir;
  json doc = run_config(cfg, base_of(config), out_dir);
  std::cout << "median_converge_time: "
            << (doc["median_converge_time"].is_null()
                    ? std::string("null")
                    : std::to_string(doc["median_converge_time"].get<double>()))
            << "\nwrote " << (out_dir / "summary.json").string() << "\n";
  return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                const Overrides& o) {
  hfl::RunConfig a = hfl::load_run_config(a_path);
  hfl::RunConfig b = hfl::load_run_config(b_path);
  Overrides shared = o;
  shared.out.reset();
  apply(shared, a);
  apply(shared, b);
  const fs::path root = o.out.value_or(a.output_dir);
  json da = run_config(a, base_of(a_path), root / "a");
  json db = run_config(b, base_of(b_path), root / "b");
  hfl::RunSummary sa, sb;
  if (!da["median_converge_time"].is_null())
    sa.median_converge_time = da["median_converge_time"].get<double>();
  if (!db["median_converge_time"].is_null())
    sb.median_converge_time = db["median_converge_time"].get<double>();
  std::optional<double> ratio = hfl::speedup(sa, sb);
  json out = {{"a", {{"config", a_path}, {"mode", da["mode"]},
                     {"median_converge_time", da["median_converge_time"]}}},
              {"b", {{"config", b_path}, {"mode", db["mode"]},
                     {"median_converge_time", db["median_converge_time"]}}},
              {"speedup", nullptr}};
  if (ratio) out["speedup"] = *ratio;
  hfl::write_file_atomic(root / "compare.json", out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_gen_topology(const std::string& config, const Overrides& o) {
  hfl::RunConfig cfg = hfl::load_run_config(config);
  apply(o, cfg);
  if (!o.out) throw hfl::ConfigError("--out: output file required");
  hfl::Topology topo = hfl::build_topology(cfg, cfg.seeds.front(), base_of(config));
  hfl::save_topology(topo, *o.out);
  std::cout << "wrote " << *o.out << " (" << topo.num_devices() << " devices, "
            << topo.num_gateways() << " gateways)\n";
  return 0;
}

int cmd_gen_data(const std::string& config, const Overrides& o) {
  hfl::RunConfig cfg = hfl::load_run_config(config);
  apply(o, cfg);
  if (!o.out) throw hfl::ConfigError("--out: output directory required");
  hfl::FederatedDataset data =
      hfl::build_dataset(cfg, cfg.seeds.front(), base_of(config));
  hfl::save_shards(data, *o.out);
  std::cout << "wrote " << data.shards.size() << " shards to " << *o.out << "\n";
  return 0;
}

int cmd_solve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hfl::ConfigError("cannot open instance " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw hfl::ParseError(path + ": " + e.what());
  }
  const std::string type = j.value("type", "");
  json out;
  if (type == "selection") {
    hfl::SelectionInstance inst = hfl::selection_from_json(j);
    hfl::Selection s = hfl::solve_selection(inst);
    out = {{"type", type}, {"solver", hfl::to_json(s)}, {"brute_force", nullptr}};
    try {
      hfl::Selection b = hfl::brute_force_selection(inst);
      out["brute_force"] = hfl::to_json(b);
      out["objective_gap"] = s.objective - b.objective;
    } catch (const hfl::Error& e) {
      out["brute_force_skipped"] = e.what();
    }
  } else if (type == "association") {
    hfl::AssociationInstance inst = hfl::association_from_json(j);
    hfl::Assignment a = hfl::solve_association(inst);
    out = {{"type", type}, {"solver", hfl::to_json(a)}, {"brute_force", nullptr}};
    try {
      hfl::Assignment b = hfl::brute_force_association(inst);
      out["brute_force"] = hfl::to_json(b);
      out["objective_gap"] = a.objective - b.objective;
    } catch (const hfl::Error& e) {
      out["brute_force_skipped"] = e.what();
    }
  } else {
    throw hfl::ConfigError("type: expected \"selection\" or \"association\"");
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_validate(const std::string& config, const Overrides& o) {
  hfl::RunConfig cfg = hfl::load_run_config(config);
  apply(o, cfg);
  hfl::validate_run_config(cfg, base_of(config));
  std::cout << "ok: " << hfl::to_string(cfg.sim.mode) << ", " << cfg.seeds.size()
            << " seed(s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("hfl");
  spdlog::set_default_logger(logger);
  spdlog::cfg::load_env_levels();

  CLI::App app{"Asynchronous hierarchical federated learning simulator"};
  app.require_subcommand(1);
  std::string config, second, instance;
  Overrides o;
  auto add_overrides = [&](CLI::App* sub, bool simulates, bool with_mode) {
    sub->add_option_function<uint64_t>("--seed", [&](uint64_t v) { o.seed = v; },
                                       "run only this seed");
    sub->add_option_function<std::string>("--out", [&](const std::string& v) { o.out = v; },
                                          "output location");
    if (simulates)
      sub->add_option_function<double>("--eval-every", [&](double v) { o.eval_every = v; },
                                       "seconds between evaluations");
    if (with_mode)
      sub->add_option_function<std::string>("--mode", [&](const std::string& v) { o.mode = v; },
                                            "algorithm override");
  };

  CLI::App* run = app.add_subcommand("run", "run every seed of a config");
  run->add_option("--config", config, "config file (.toml or .json)")->required();
  add_overrides(run, true, true);

  CLI::App* compare = app.add_subcommand("compare", "speedup of A over B");
  compare->add_option("a", config, "candidate config")->required();
  compare->add_option("b", second, "baseline config")->required();
  add_overrides(compare, true, false);

  CLI::App* gen_topo = app.add_subcommand("gen-topology", "write a topology JSON");
  gen_topo->add_option("--config", config, "config file (.toml or .json)")->required();
  add_overrides(gen_topo, false, false);

  CLI::App* gen_data = app.add_subcommand("gen-data", "write dataset shards");
  gen_data->add_option("--config", config, "config file (.toml or .json)")->required();
  add_overrides(gen_data, false, false);

  CLI::App* solve = app.add_subcommand("solve", "solver vs brute force on an instance");
  solve->add_option("instance", instance, "selection or association instance JSON")->required();

  CLI::App* validate = app.add_subcommand("validate", "check a config without running");
  validate->add_option("--config", config, "config file (.toml or .json)")->required();
  add_overrides(validate, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(config, o);
    if (*compare) return cmd_compare(config, second, o);
    if (*gen_topo) return cmd_gen_topology(config, o);
    if (*gen_data) return cmd_gen_data(config, o);
    if (*solve) return cmd_solve(instance);
    if (*validate) return cmd_validate(config, o);
  } catch (const hfl::ConfigError& e) {
    spdlog::error("invalid config: {}", e.what());
    return 2;
  } catch (const hfl::ParseError& e) {
    spdlog::error("invalid input: {}", e.what());
    return 2;
  } catch (const hfl::ValidationError& e) {
    spdlog::error("invalid input: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
