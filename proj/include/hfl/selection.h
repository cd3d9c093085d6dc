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

// Gateway-level device selection and cloud-level device-gateway association.
//
// Selection at gateway j (0-1 knapsack):
//   max  sum_i d_i * u_i * (1 / tau_ij)^kappa
//   s.t. sum_i d_i * R_ij <= B_j
//
// Association at the cloud:
//   max  u_slack - phi * R_slack
//   u_slack = min_j sum_i I_ij u_i,  R_slack = max_j sum_i I_ij R_ij / B_j
//   I <= J, each device on at most one gateway.

#ifndef HFL_SELECTION_H_
#define HFL_SELECTION_H_

#include <vector>

#include "json.hpp"

namespace hfl {

struct Candidate {
  int device_id = 0;
  double utility = 0.0;
  double tau = 1.0;   // seconds
  double rate = 1.0;  // bytes/s
};

enum class BandwidthForm {
  kSum,         // sum of selected rates under the cap (knapsack)
  kPerDevice,   // each selected rate under the cap on its own
};

struct SelectionInstance {
  std::vector<Candidate> candidates;
  double bandwidth = 0.0;  // B_j, bytes/s
  double kappa = 0.0;
  BandwidthForm form = BandwidthForm::kSum;
};

struct Selection {
  std::vector<int> devices;  // ascending device ids
  double objective = 0.0;
};

// Objective value of a candidate: u * tau^-kappa.
double selection_value(const Candidate& c, double kappa);
double selection_objective(const SelectionInstance& inst,
                           const std::vector<int>& devices);
bool selection_feasible(const SelectionInstance& inst,
                        const std::vector<int>& devices);

// Exact branch-and-bound for up to kExactSelectionLimit positive candidates,
// value-density greedy above that. Ties prefer fewer devices, then the
// lexicographically smaller id list.
inline constexpr int kExactSelectionLimit = 25;
Selection solve_selection(const SelectionInstance& inst);
Selection greedy_selection(const SelectionInstance& inst);
// Exhaustive 2^n search; refuses n > 20.
Selection brute_force_selection(const SelectionInstance& inst);

struct AssociationInstance {
  int num_devices = 0;
  int num_gateways = 0;
  std::vector<int> feasible;     // J, N x G row-major
  std::vector<double> utility;   // u, N
  std::vector<double> rate;      // R, N x G row-major (bytes/s)
  std::vector<double> bandwidth; // B, G
  double phi = 0.0;

  bool is_feasible(int i, int j) const {
    return feasible[static_cast<size_t>(i) * num_gateways + j] != 0;
  }
  double rate_of(int i, int j) const {
    return rate[static_cast<size_t>(i) * num_gateways + j];
  }
  void validate() const;
};

struct Assignment {
  std::vector<int> gateway_of;  // -1 when unassigned
  double objective = 0.0;
  double u_slack = 0.0;
  double r_slack = 0.0;

  int assigned_count() const;
  // I as an N x G 0/1 matrix.
  std::vector<int> matrix(int num_gateways) const;
};

// Fills objective and slacks from `gateway_of`.
Assignment evaluate_assignment(const AssociationInstance& inst,
                               std::vector<int> gateway_of);

// Exact search when N <= 12 and G <= 4, otherwise greedy balancing plus
// single-device local search. Ties prefer more assigned devices, then the
// lexicographically smaller choice vector (gateway id, unassigned last).
Assignment solve_association(const AssociationInstance& inst);
Assignment exact_association(const AssociationInstance& inst);
Assignment heuristic_association(const AssociationInstance& inst);
// Exhaustive (G+1)^N search; refuses (G+1)^N > 2^22.
Assignment brute_force_association(const AssociationInstance& inst);

// Debug dumps (the `solve` subcommand reads the same shapes).
nlohmann::json to_json(const SelectionInstance& inst);
nlohmann::json to_json(const AssociationInstance& inst);
nlohmann::json to_json(const Selection& sel);
nlohmann::json to_json(const Assignment& a);
SelectionInstance selection_from_json(const nlohmann::json& j);
AssociationInstance association_from_json(const nlohmann::json& j);

}  // namespace hfl

#endif  // HFL_SELECTION_H_
