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
#include <numeric>

#include "hfl/error.h"
#include "hfl/rng.h"
#include "hfl/simulator.h"

using namespace hfl;

namespace {

struct Scenario {
  SimConfig cfg;
  FederatedDataset data;
  Topology topo;
};

Scenario make_scenario(Mode mode, int n = 12, int g = 3, uint64_t seed = 5) {
  Scenario s;
  DataSpec ds;
  ds.num_devices = n;
  ds.num_classes = 4;
  ds.classes_per_device = 2;
  ds.samples_per_device = 30;
  ds.input_dim = 8;
  s.data = gen_synthetic(ds, seed);
  s.cfg.mode = mode;
  s.cfg.arch = {ModelKind::kLogistic, ds.input_dim, 0, ds.num_classes};
  s.cfg.data_spec = ds;
  s.cfg.train.epochs = 2;
  s.cfg.train.gamma = 0.1;
  s.cfg.gateway_epochs = 4;
  s.cfg.sync_gateway_epochs = 2;
  s.cfg.max_cloud_epochs = 25;
  s.cfg.pca_dim = 6;
  s.cfg.eval_every = 20.0;
  s.cfg.seed = seed;
  TopologyGenSpec ts;
  ts.num_devices = n;
  ts.num_gateways = g;
  ts.model_size = static_cast<double>(s.cfg.arch.param_count() * 8);
  s.topo = generate_topology(ts, seed);
  return s;
}

SimResult run(const Scenario& s) { return simulate(s.cfg, s.data, s.topo); }

double max_abs_diff(const ModelParams& a, const ModelParams& b) {
  double m = 0.0;
  for (size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST_CASE("staleness function") {
  CHECK(staleness(0.5, 0) == 1.0);
  CHECK(staleness(0.5, 3) == doctest::Approx(0.5));
  CHECK(staleness(1.0, 4) == doctest::Approx(0.2));
  CHECK(staleness(0.0, 100) == 1.0);
  for (int d = 0; d < 20; ++d) CHECK(staleness(0.5, d + 1) < staleness(0.5, d));
}

TEST_CASE("asynchronous aggregation") {
  ModelParams cur(std::vector<double>{0.0, 2.0});
  ModelParams in(std::vector<double>{4.0, -2.0});
  ModelParams a = async_aggregate(cur, in, 0.5, 0, 0.5);
  CHECK(a[0] == doctest::Approx(2.0));
  CHECK(a[1] == doctest::Approx(0.0));
  ModelParams b = async_aggregate(cur, in, 0.5, 3, 0.5);  // w = 0.25
  CHECK(b[0] == doctest::Approx(1.0));
  CHECK(b[1] == doctest::Approx(1.0));
  CHECK(async_aggregate(cur, in, 1.0, 0, 0.5) == in);
  Rng rng(3);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(7), y(7);
    for (auto& v : x) v = nd(rng);
    for (auto& v : y) v = nd(rng);
    ModelParams r = async_aggregate(ModelParams(x), ModelParams(y), 0.6, t % 5, 0.5);
    double nx = 0, ny = 0, nr = 0;
    for (int k = 0; k < 7; ++k) {
      nx += x[k] * x[k];
      ny += y[k] * y[k];
      nr += r[k] * r[k];
    }
    CHECK(std::sqrt(nr) <= std::max(std::sqrt(nx), std::sqrt(ny)) + 1e-12);
  }
  CHECK_THROWS_AS(async_aggregate(cur, ModelParams(3), 0.5, 0, 0.5), ValidationError);
  CHECK_THROWS_AS(async_aggregate(cur, in, 0.0, 0, 0.5), ValidationError);
  CHECK_THROWS_AS(async_aggregate(cur, in, 1.5, 0, 0.5), ValidationError);
}

TEST_CASE("single device pass-through equals sequential local training") {
  for (Mode mode : {Mode::kAsyncRandom, Mode::kSyncRandom, Mode::kSyncGwAsyncCloud}) {
    CAPTURE(to_string(mode));
    Scenario s = make_scenario(mode, 1, 1);
    s.cfg.alpha = s.cfg.beta = 1.0;
    s.cfg.q = 0.0;
    s.cfg.gateway_epochs = s.cfg.sync_gateway_epochs = 1;
    s.cfg.train.epochs = 1;
    s.cfg.max_cloud_epochs = 20;
    s.cfg.record_cloud_models = true;
    Topology t(1, 1);
    t.add_link({0, 0, 1.0, 1.0, 0.0});
    t.set_comp_mean(0, 2.0);
    t.associate(0, 0);
    t.bandwidth() = {1e12};
    t.model_size = s.topo.model_size;
    s.topo = t;
    SimResult r = run(s);
    REQUIRE(r.cloud_models.size() == 20);
    ModelParams w = init_params(s.cfg.arch, derive_seed(s.cfg.seed, {kStreamInit}));
    double worst = 0.0;
    for (int h = 0; h < 20; ++h) {
      w = local_train(w, w, s.cfg.arch, s.data.shards[0], s.cfg.train,
                      device_round_seed(s.cfg.seed, 0, h), 0)
              .params;
      worst = std::max(worst, max_abs_diff(w, r.cloud_models[h]));
    }
    CHECK(worst <= 1e-12);
    CHECK(r.final_model == r.cloud_models.back());
    CHECK(r.stats.max_stale_cloud == 0);
  }
}

TEST_CASE("same seed gives identical runs") {
  for (Mode mode : all_modes()) {
    CAPTURE(to_string(mode));
    Scenario s = make_scenario(mode);
    SimResult a = run(s), b = run(s);
    CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
    CHECK(a.final_model == b.final_model);
    CHECK(a.transfers.size() == b.transfers.size());
    CHECK(a.stats.events == b.stats.events);
    s.cfg.seed = 6;
    CHECK(trace_to_csv(run(s).trace) != trace_to_csv(a.trace));
  }
}

TEST_CASE("every mode reaches its epoch budget causally and consistently") {
  for (Mode mode : all_modes()) {
    CAPTURE(to_string(mode));
    Scenario s = make_scenario(mode);
    SimResult r = run(s);
    CHECK(r.stats.causal);
    CHECK(r.stats.consistent);
    CHECK(r.stats.cloud_epochs == s.cfg.max_cloud_epochs);
    CHECK(r.stats.end_time < s.cfg.max_time);
    REQUIRE_FALSE(r.trace.empty());
    CHECK(r.trace.back().h == s.cfg.max_cloud_epochs);
    for (size_t k = 1; k < r.trace.size(); ++k) {
      CHECK(r.trace[k].t >= r.trace[k - 1].t);
      CHECK(r.trace[k].bytes >= r.trace[k - 1].bytes);
    }
    CHECK(r.trace.back().acc > 0.5);
    CHECK(r.final_model.all_finite());
  }
}

TEST_CASE("byte counters match the transfer log") {
  for (Mode mode : all_modes()) {
    CAPTURE(to_string(mode));
    Scenario s = make_scenario(mode);
    SimResult r = run(s);
    uint64_t total = 0, overhead = 0, setup = 0, models = 0;
    for (const Transfer& t : r.transfers) {
      total += t.bytes;
      if (t.kind == TransferKind::kOverhead) overhead += t.bytes;
      else if (t.kind == TransferKind::kSetup) setup += t.bytes;
      else {
        ++models;
        CHECK(t.bytes == r.stats.model_bytes);
      }
    }
    CHECK(total == r.stats.total_bytes);
    CHECK(overhead == r.stats.overhead_bytes);
    CHECK(setup == r.stats.setup_bytes);
    CHECK(models == r.stats.model_transfers);
    CHECK(total == r.stats.model_bytes * models + overhead + setup);
    CHECK(r.trace.back().bytes <= total);
    CHECK(r.stats.model_bytes == s.cfg.arch.param_count() * 8);
  }
}

TEST_CASE("utility mode pays compressed-gradient overhead") {
  Scenario s = make_scenario(Mode::kAsyncHfl);
  SimResult r = run(s);
  const int n = s.data.num_devices();
  CHECK(r.warmup_utilities.size() == static_cast<size_t>(n));
  for (const Transfer& t : r.transfers)
    if (t.kind == TransferKind::kOverhead) CHECK(t.bytes == 8u * s.cfg.pca_dim);
  CHECK(r.stats.setup_bytes > 8u * s.cfg.arch.param_count() * n);
  CHECK(r.stats.association_solves >= 1);
  CHECK(r.stats.selection_solves >= 1);
  SimResult random = run(make_scenario(Mode::kAsyncRandom));
  CHECK(random.stats.overhead_bytes == 0);
  CHECK(random.stats.setup_bytes == 0);
  CHECK(random.warmup_utilities.empty());
}

TEST_CASE("barrier modes have no staleness while asynchronous ones do") {
  SimResult sync = run(make_scenario(Mode::kSyncRandom));
  CHECK(sync.stats.max_stale_cloud == 0);
  CHECK(sync.stats.max_stale_gw == 0);
  for (const auto& row : sync.trace) CHECK(row.max_stale_cloud == 0);
  SimResult mixed = run(make_scenario(Mode::kSyncGwAsyncCloud));
  CHECK(mixed.stats.max_stale_gw == 0);
  CHECK(mixed.stats.max_stale_cloud > 0);
  Scenario semi = make_scenario(Mode::kSemiAsync);
  semi.cfg.semi_async_window = 5.0;  // shorter than every round
  CHECK(run(semi).stats.max_stale_gw > 0);
  SimResult async = run(make_scenario(Mode::kAsyncRandom));
  CHECK(async.stats.max_stale_cloud > 0);
  CHECK(async.stats.max_stale_gw > 0);
}

TEST_CASE("dropped devices receive no models until restored") {
  for (Mode mode : all_modes()) {
    CAPTURE(to_string(mode));
    Scenario s = make_scenario(mode);
    s.cfg.max_cloud_epochs = 40;
    s.topo.faults = {{50.0, 3, FaultAction::kDrop, 1.0}, {50.0, 4, FaultAction::kDrop, 1.0},
                     {300.0, 4, FaultAction::kRestore, 1.0}};
    SimResult r = run(s);
    CHECK(r.stats.causal);
    CHECK(r.stats.consistent);
    bool restored_used = false;
    for (const Transfer& t : r.transfers) {
      if (t.kind != TransferKind::kGatewayToDevice) continue;
      if (t.device == 3) CHECK(t.t < 50.0);
      if (t.device == 4) {
        CHECK((t.t < 50.0 || t.t >= 300.0));
        restored_used = restored_used || t.t >= 300.0;
      }
    }
    if (r.stats.end_time > 600.0) CHECK(restored_used);
  }
}

TEST_CASE("stop at target ends the run at the first crossing") {
  Scenario s = make_scenario(Mode::kAsyncRandom);
  s.cfg.max_cloud_epochs = 200;
  s.cfg.stop_at_target = true;
  s.cfg.target_accuracy = 0.6;
  SimResult r = run(s);
  auto t = time_to_target(r.trace, 0.6);
  REQUIRE(t.has_value());
  CHECK(r.trace.back().acc >= 0.6);
  CHECK(r.trace.back().t == *t);
  CHECK(r.stats.cloud_epochs < 200);
}

TEST_CASE("time limit bounds the simulated clock") {
  Scenario s = make_scenario(Mode::kSyncRandom);
  s.cfg.max_time = 100.0;
  s.cfg.max_cloud_epochs = 100000;
  SimResult r = run(s);
  CHECK(r.stats.end_time <= 100.0);
  CHECK(r.trace.back().t <= 100.0);
}

TEST_CASE("divergence raises a numeric error") {
  Scenario s = make_scenario(Mode::kAsyncRandom);
  s.cfg.train.gamma = 1e200;
  CHECK_THROWS_AS(run(s), NumericError);
}

TEST_CASE("configuration validation") {
  Scenario s = make_scenario(Mode::kAsyncHfl);
  s.cfg.alpha = 0.0;
  CHECK_THROWS_AS(run(s), ConfigError);
  s = make_scenario(Mode::kAsyncHfl);
  s.cfg.pca_dim = 13;
  CHECK_THROWS_AS(run(s), ConfigError);
  s.cfg.mode = Mode::kAsyncRandom;
  CHECK_NOTHROW(run(s));
  CHECK_THROWS_AS(parse_mode("fast"), ConfigError);
  for (Mode m : all_modes()) CHECK(parse_mode(to_string(m)) == m);
}

TEST_CASE("time to target and csv") {
  MetricTrace tr = {{0.0, 0, 0.1, 2.0, 0, 0, 0, 0}, {5.0, 1, 0.5, 1.0, 10, 1, 0, 0},
                    {9.5, 2, 0.9, 0.5, 20, 2, 1, 1}};
  CHECK(*time_to_target(tr, 0.0) == 0.0);
  CHECK(*time_to_target(tr, 0.5) == 5.0);
  CHECK_FALSE(time_to_target(tr, 0.95).has_value());
  const std::string csv = trace_to_csv(tr);
  CHECK(csv.rfind("t,h,acc,loss,bytes,overhead_bytes,max_stale_cloud,max_stale_gw\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
