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
#include <random>

#include "hfl/error.h"
#include "hfl/selection.h"

using namespace hfl;

namespace {

SelectionInstance random_selection(std::mt19937_64& rng, int n, BandwidthForm form) {
  std::uniform_real_distribution<double> u(-0.5, 2.0), tau(1.0, 30.0), rate(0.5, 5.0);
  SelectionInstance inst;
  inst.form = form;
  inst.kappa = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    Candidate c{3 * i + 1, u(rng), tau(rng), rate(rng)};
    total += c.rate;
    inst.candidates.push_back(c);
  }
  inst.bandwidth = std::max(0.1, total * std::uniform_real_distribution<double>(0.1, 0.8)(rng));
  return inst;
}

AssociationInstance random_association(std::mt19937_64& rng, int n, int g) {
  std::uniform_real_distribution<double> u(-0.5, 2.0), rate(0.5, 5.0), b(2.0, 10.0);
  std::bernoulli_distribution link(0.6);
  AssociationInstance inst;
  inst.num_devices = n;
  inst.num_gateways = g;
  inst.phi = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (int i = 0; i < n; ++i) {
    inst.utility.push_back(u(rng));
    for (int j = 0; j < g; ++j) {
      const bool f = link(rng);
      inst.feasible.push_back(f ? 1 : 0);
      inst.rate.push_back(f ? rate(rng) : 0.0);
    }
  }
  for (int j = 0; j < g; ++j) inst.bandwidth.push_back(b(rng));
  return inst;
}

bool respects_feasibility(const AssociationInstance& inst, const Assignment& a) {
  if (static_cast<int>(a.gateway_of.size()) != inst.num_devices) return false;
  for (int i = 0; i < inst.num_devices; ++i)
    if (a.gateway_of[i] >= 0 && !inst.is_feasible(i, a.gateway_of[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("nonpositive utilities are never selected") {
  SelectionInstance inst;
  inst.bandwidth = 100.0;
  inst.kappa = 1.0;
  for (int i = 0; i < 5; ++i) inst.candidates.push_back({i, -0.1 * i, 2.0, 1.0});
  CHECK(solve_selection(inst).devices.empty());
  CHECK(solve_selection(inst).objective == 0.0);
}

TEST_CASE("a single fitting positive candidate is selected") {
  SelectionInstance inst;
  inst.bandwidth = 2.0;
  inst.kappa = 1.0;
  inst.candidates.push_back({7, 0.4, 2.0, 1.5});
  Selection s = solve_selection(inst);
  CHECK(s.devices == std::vector<int>{7});
  CHECK(s.objective == doctest::Approx(0.2));
  CHECK(brute_force_selection(inst).devices == s.devices);
}

TEST_CASE("empty instances") {
  SelectionInstance inst;
  inst.bandwidth = 1.0;
  CHECK(solve_selection(inst).devices.empty());
  CHECK(brute_force_selection(inst).devices.empty());
  AssociationInstance a;
  a.num_devices = 0;
  a.num_gateways = 1;
  a.bandwidth = {1.0};
  CHECK(brute_force_association(a).gateway_of.empty());
  CHECK(solve_association(a).gateway_of.empty());
}

TEST_CASE("selection objective matches exhaustive search") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 400; ++trial) {
    const BandwidthForm form = trial % 4 == 3 ? BandwidthForm::kPerDevice : BandwidthForm::kSum;
    SelectionInstance inst = random_selection(rng, trial % 13, form);
    Selection s = solve_selection(inst);
    Selection b = brute_force_selection(inst);
    CHECK(selection_feasible(inst, s.devices));
    CHECK(std::abs(s.objective - b.objective) <= 1e-9);
    CHECK(std::abs(selection_objective(inst, s.devices) - s.objective) <= 1e-12);
  }
}

TEST_CASE("large selections fall back to a feasible greedy answer") {
  std::mt19937_64 rng(2);
  SelectionInstance inst = random_selection(rng, 60, BandwidthForm::kSum);
  Selection s = solve_selection(inst);
  CHECK(selection_feasible(inst, s.devices));
  CHECK(s.objective > 0.0);
  Selection g = greedy_selection(inst);
  CHECK(selection_feasible(inst, g.devices));
}

TEST_CASE("selection ties prefer fewer devices") {
  SelectionInstance inst;
  inst.bandwidth = 9.5;
  inst.kappa = 0.0;
  inst.candidates = {{0, 1.0, 1.0, 1.0}, {1, 0.5, 1.0, 1.0}, {2, 0.5, 1.0, 1.0},
                     {3, 1.0, 1.0, 9.5}};
  // {0,3} is infeasible; best is {0,1,2} = 2.0.
  Selection s = solve_selection(inst);
  CHECK(s.devices == std::vector<int>{0, 1, 2});
  inst.candidates[3].rate = 8.0;
  // {0,3} = 2.0 ties {0,1,2} = 2.0 with fewer devices.
  CHECK(solve_selection(inst).devices == std::vector<int>{0, 3});
}

TEST_CASE("brute force refuses large instances") {
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(brute_force_selection(random_selection(rng, 21, BandwidthForm::kSum)),
                  ConfigError);
  CHECK_THROWS_AS(brute_force_association(random_association(rng, 12, 3)), ConfigError);
}

TEST_CASE("single gateway takes every positive device when phi is zero") {
  AssociationInstance inst;
  inst.num_devices = 5;
  inst.num_gateways = 1;
  inst.phi = 0.0;
  inst.bandwidth = {1.0};
  for (int i = 0; i < 5; ++i) {
    inst.feasible.push_back(1);
    inst.rate.push_back(10.0);
    inst.utility.push_back(0.1 + i);
  }
  Assignment a = solve_association(inst);
  for (int g : a.gateway_of) CHECK(g == 0);
  CHECK(a.u_slack == doctest::Approx(0.1 + 1.1 + 2.1 + 3.1 + 4.1));
}

TEST_CASE("one device and two symmetric gateways picks gateway 0") {
  AssociationInstance inst;
  inst.num_devices = 1;
  inst.num_gateways = 2;
  inst.phi = 0.0;
  inst.feasible = {1, 1};
  inst.rate = {1.0, 1.0};
  inst.utility = {0.7};
  inst.bandwidth = {2.0, 2.0};
  Assignment a = solve_association(inst);
  CHECK(a.gateway_of == std::vector<int>{0});
  CHECK(a.u_slack == 0.0);
  CHECK(a.objective == 0.0);
}

TEST_CASE("devices without feasible links stay unassigned") {
  std::mt19937_64 rng(4);
  AssociationInstance inst = random_association(rng, 6, 2);
  for (int j = 0; j < 2; ++j) {
    inst.feasible[2 * 2 + j] = 0;
    inst.rate[2 * 2 + j] = 0.0;
  }
  CHECK(solve_association(inst).gateway_of[2] == -1);
  CHECK(heuristic_association(inst).gateway_of[2] == -1);
}

TEST_CASE("association objective matches exhaustive search") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 150; ++trial) {
    AssociationInstance inst = random_association(rng, 1 + trial % 8, 1 + trial % 3);
    Assignment a = solve_association(inst);
    Assignment b = brute_force_association(inst);
    CHECK(respects_feasibility(inst, a));
    CHECK(std::abs(a.objective - b.objective) <= 1e-9);
    Assignment re = evaluate_assignment(inst, a.gateway_of);
    CHECK(std::abs(re.objective - a.objective) <= 1e-12);
  }
}

TEST_CASE("heuristic association is feasible and never beats the optimum") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    AssociationInstance inst = random_association(rng, 3 + trial % 6, 1 + trial % 3);
    Assignment h = heuristic_association(inst);
    Assignment e = exact_association(inst);
    CHECK(respects_feasibility(inst, h));
    CHECK(h.objective <= e.objective + 1e-12);
  }
  AssociationInstance big = random_association(rng, 40, 4);
  Assignment a = solve_association(big);
  CHECK(respects_feasibility(big, a));
}

TEST_CASE("assignment matrix has at most one gateway per device") {
  std::mt19937_64 rng(7);
  AssociationInstance inst = random_association(rng, 7, 3);
  Assignment a = solve_association(inst);
  auto m = a.matrix(3);
  for (int i = 0; i < 7; ++i) {
    int row = 0;
    for (int j = 0; j < 3; ++j) {
      row += m[i * 3 + j];
      if (m[i * 3 + j]) CHECK(inst.is_feasible(i, j));
    }
    CHECK(row <= 1);
  }
}

TEST_CASE("instances survive a json round trip") {
  std::mt19937_64 rng(8);
  SelectionInstance s = random_selection(rng, 6, BandwidthForm::kPerDevice);
  SelectionInstance s2 = selection_from_json(to_json(s));
  CHECK(solve_selection(s2).devices == solve_selection(s).devices);
  CHECK(s2.form == BandwidthForm::kPerDevice);
  AssociationInstance a = random_association(rng, 5, 2);
  AssociationInstance a2 = association_from_json(to_json(a));
  CHECK(a2.feasible == a.feasible);
  CHECK(a2.rate == a.rate);
  CHECK(solve_association(a2).gateway_of == solve_association(a).gateway_of);
}

TEST_CASE("association validation") {
  AssociationInstance inst;
  inst.num_devices = 1;
  inst.num_gateways = 1;
  inst.feasible = {1};
  inst.rate = {1.0};
  inst.utility = {1.0};
  inst.bandwidth = {0.0};
  CHECK_THROWS_AS(solve_association(inst), ConfigError);
}
