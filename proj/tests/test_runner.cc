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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hfl/error.h"
#include "hfl/runner.h"
#include "hfl/toml.h"

using namespace hfl;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(HFL_SOURCE_DIR) / "configs";

nlohmann::json minimal() {
  return {{"run", {{"mode", "async-random"}, {"seeds", {1, 2}}, {"target_accuracy", 0.8}}}};
}

std::string config_error(const nlohmann::json& j) {
  try {
    RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

MetricTrace three_rows() {
  return {{0.0, 0, 0.10, 2.0, 0, 0, 0, 0},
          {10.0, 3, 0.62, 1.1, 500, 5, 1, 2},
          {20.0, 6, 0.81, 0.7, 900, 9, 1, 3}};
}

}  // namespace

TEST_CASE("toml scalars, arrays and sections") {
  nlohmann::json j = parse_toml(R"(# comment
top = 1
[a]
s = "x\"y\n"  # trailing
i = -42
f = 2.5e-3
b = true
arr = [1, 2,
       3,]
strs = ["p", 'q']
[b]
empty = []
)");
  CHECK(j["top"] == 1);
  CHECK(j["a"]["s"] == "x\"y\n");
  CHECK(j["a"]["i"] == -42);
  CHECK(j["a"]["f"].get<double>() == 2.5e-3);
  CHECK(j["a"]["b"] == true);
  CHECK(j["a"]["arr"] == nlohmann::json({1, 2, 3}));
  CHECK(j["a"]["strs"] == nlohmann::json({"p", "q"}));
  CHECK(j["b"]["empty"].empty());
  CHECK(j["a"]["i"].is_number_integer());
  CHECK(j["a"]["f"].is_number_float());
}

TEST_CASE("toml errors carry the line number") {
  auto line_of = [](const char* text) {
    try {
      parse_toml(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("a = 1\nb = \n") == 2);
  CHECK(line_of("a = 1\na = 2\n") == 2);
  CHECK(line_of("[x]\n[y]\n[x]\n") == 3);
  CHECK(line_of("a = \"open\n") == 1);
  CHECK(line_of("a = [1, 2\n") == 1);
  CHECK(line_of("= 3\n") == 1);
  CHECK(line_of("a = 1 b\n") == 1);
}

TEST_CASE("missing required fields are named") {
  nlohmann::json j = minimal();
  j["run"].erase("target_accuracy");
  CHECK(config_error(j).find("run.target_accuracy") != std::string::npos);
  j = minimal();
  j["run"].erase("mode");
  CHECK(config_error(j).find("run.mode") != std::string::npos);
  j = minimal();
  j["run"].erase("seeds");
  CHECK(config_error(j).find("run.seeds") != std::string::npos);
}

TEST_CASE("unknown keys and bad values are rejected") {
  nlohmann::json j = minimal();
  j["train"]["gama"] = 0.1;
  CHECK(config_error(j).find("train.gama") != std::string::npos);
  j = minimal();
  j["extra"]["x"] = 1;
  CHECK(config_error(j).find("extra") != std::string::npos);
  j = minimal();
  j["run"]["mode"] = "fast";
  CHECK_FALSE(config_error(j).empty());
  j = minimal();
  j["algorithm"]["alpha"] = 1.5;
  CHECK(config_error(j).find("algorithm.alpha") != std::string::npos);
  j = minimal();
  j["run"]["target_accuracy"] = 2.0;
  CHECK(config_error(j).find("run.target_accuracy") != std::string::npos);
  j = minimal();
  j["run"]["seeds"] = nlohmann::json::array();
  CHECK(config_error(j).find("run.seeds") != std::string::npos);
  j = minimal();
  j["topology"]["faults"] = {"10:0:melt"};
  CHECK_FALSE(config_error(j).empty());
}

TEST_CASE("config json round trip is exact") {
  nlohmann::json j = minimal();
  j["algorithm"]["bandwidth_form"] = "per-device";
  j["algorithm"]["Z"] = 7;
  j["topology"]["faults"] = {"0:3:slowdown:10", "50:4:drop"};
  j["model"]["kind"] = "mlp";
  j["model"]["hidden_dim"] = 16;
  RunConfig c = RunConfig::from_json(j);
  nlohmann::json echo = c.to_json();
  CHECK(RunConfig::from_json(echo).to_json() == echo);
  CHECK(c.sim.gateway_epochs == 7);
  CHECK(c.sim.bandwidth_form == BandwidthForm::kPerDevice);
  REQUIRE(c.faults.size() == 2);
  CHECK(c.faults[0].action == FaultAction::kSlowdown);
  CHECK(c.faults[0].factor == 10.0);
  CHECK(c.faults[1].time == 50.0);
}

TEST_CASE("shipped configs load and validate") {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".toml") continue;
    CAPTURE(entry.path().string());
    ++count;
    if (entry.path().filename() == "reference.toml") continue;
    RunConfig c = load_run_config(entry.path());
    CHECK_FALSE(c.seeds.empty());
    CHECK_NOTHROW(validate_run_config(c, kConfigs));
  }
  CHECK(count >= 6);
}

TEST_CASE("summary json replays its config") {
  const fs::path dir = fs::temp_directory_path() / "hfl_test_runner";
  fs::create_directories(dir);
  RunConfig c = RunConfig::from_json(minimal());
  nlohmann::json summary = {{"config", c.to_json()}, {"median_converge_time", nullptr}};
  write_file_atomic(dir / "summary.json", summary.dump(2));
  CHECK(load_run_config(dir / "summary.json").to_json() == c.to_json());
  fs::remove_all(dir);
}

TEST_CASE("summaries use the first crossing") {
  std::vector<MetricTrace> traces = {three_rows()};
  RunSummary s0 = summarize(traces, 0.0, {9});
  CHECK(s0.seeds[0].seed == 9);
  CHECK(*s0.seeds[0].converge_time == 0.0);
  CHECK(*s0.seeds[0].bytes_at_target == 0);
  RunSummary s6 = summarize(traces, 0.6);
  CHECK(*s6.seeds[0].converge_time == 10.0);
  CHECK(*s6.seeds[0].bytes_at_target == 500);
  CHECK(s6.seeds[0].total_bytes == 900);
  CHECK(s6.seeds[0].final_acc == 0.81);
  RunSummary never = summarize(traces, 1.01);
  CHECK_FALSE(never.seeds[0].converge_time.has_value());
  CHECK_FALSE(never.median_converge_time.has_value());
  CHECK(never.to_json()["median_converge_time"].is_null());
}

TEST_CASE("median treats unreached seeds as infinite") {
  MetricTrace slow = three_rows(), never = three_rows();
  slow[1].acc = 0.5;
  never[2].acc = 0.5;
  never[1].acc = 0.5;
  // Crossings of 0.6: 10, 20, never.
  RunSummary s = summarize({three_rows(), slow, never}, 0.6);
  CHECK(*s.median_converge_time == 20.0);
  RunSummary t = summarize({three_rows(), never, never}, 0.6);
  CHECK_FALSE(t.median_converge_time.has_value());
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(std::isinf(median({1.0, std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity()})));
}

TEST_CASE("speedup is baseline over candidate") {
  MetricTrace late = three_rows();
  late[1].acc = 0.5;
  RunSummary fast = summarize({three_rows()}, 0.6), slow = summarize({late}, 0.6);
  CHECK(*speedup(fast, slow) == 2.0);
  CHECK(*speedup(slow, fast) == 0.5);
  CHECK(*speedup(fast, slow) * *speedup(slow, fast) == doctest::Approx(1.0));
  RunSummary none = summarize({three_rows()}, 1.01);
  CHECK_FALSE(speedup(none, fast).has_value());
  CHECK_FALSE(speedup(fast, none).has_value());
}

TEST_CASE("trials are reproducible from the run config") {
  nlohmann::json j = minimal();
  j["data"]["num_devices"] = 8;
  j["topology"]["num_gateways"] = 2;
  j["run"]["max_cloud_epochs"] = 10;
  j["algorithm"]["pca_dim"] = 4;
  RunConfig c = RunConfig::from_json(j);
  SimResult a = run_trial(c, 3), b = run_trial(c, 3);
  CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
  CHECK(a.stats.cloud_epochs == 10);
  c.sim.mode = Mode::kAsyncHfl;
  CHECK(run_trial(c, 3).stats.cloud_epochs == 10);
}

TEST_CASE("a stored topology must match the data size") {
  const fs::path dir = fs::temp_directory_path() / "hfl_test_runner_topo";
  fs::create_directories(dir);
  TopologyGenSpec ts;
  ts.num_devices = 9;
  ts.num_gateways = 2;
  ts.model_size = 100.0;
  save_topology(generate_topology(ts, 1), dir / "topo.json");
  nlohmann::json j = minimal();
  j["data"]["num_devices"] = 8;
  j["topology"]["path"] = (dir / "topo.json").string();
  RunConfig c = RunConfig::from_json(j);
  CHECK_THROWS_AS(validate_run_config(c), ConfigError);
  fs::remove_all(dir);
}
