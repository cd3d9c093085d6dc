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

#include "hfl/selection.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hfl/error.h"

namespace hfl {

namespace {

double tie_eps(double a, double b) {
  return 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

// True when (obj_a, ids_a) should replace (obj_b, ids_b).
bool selection_better(double obj_a, const std::vector<int>& ids_a, double obj_b,
                      const std::vector<int>& ids_b) {
  const double eps = tie_eps(obj_a, obj_b);
  if (obj_a > obj_b + eps) return true;
  if (obj_a < obj_b - eps) return false;
  if (ids_a.size() != ids_b.size()) return ids_a.size() < ids_b.size();
  return ids_a < ids_b;
}

void validate(const SelectionInstance& inst) {
  if (!(inst.bandwidth > 0.0))
    throw ConfigError("selection: bandwidth must be > 0");
  if (!(inst.kappa >= 0.0)) throw ConfigError("selection: kappa must be >= 0");
  for (const auto& c : inst.candidates)
    if (!(c.tau > 0.0) || !(c.rate > 0.0))
      throw ConfigError("selection: candidate " + std::to_string(c.device_id) +
                        " needs tau > 0 and rate > 0");
}

}  // namespace

double selection_value(const Candidate& c, double kappa) {
  return c.utility * std::pow(1.0 / c.tau, kappa);
}

double selection_objective(const SelectionInstance& inst,
                           const std::vector<int>& devices) {
  double obj = 0.0;
  for (const auto& c : inst.candidates)
    if (std::binary_search(devices.begin(), devices.end(), c.device_id))
      obj += selection_value(c, inst.kappa);
  return obj;
}

bool selection_feasible(const SelectionInstance& inst,
                        const std::vector<int>& devices) {
  double total = 0.0;
  for (const auto& c : inst.candidates) {
    if (!std::binary_search(devices.begin(), devices.end(), c.device_id))
      continue;
    if (inst.form == BandwidthForm::kPerDevice && c.rate > inst.bandwidth)
      return false;
    total += c.rate;
  }
  return inst.form == BandwidthForm::kPerDevice || total <= inst.bandwidth;
}

namespace {

struct Item {
  int id;
  double value;
  double weight;
};

// Positive-value candidates that fit on their own, by density (ties: lower id).
std::vector<Item> knapsack_items(const SelectionInstance& inst) {
  std::vector<Item> items;
  for (const auto& c : inst.candidates) {
    const double v = selection_value(c, inst.kappa);
    if (v > 0.0 && c.rate <= inst.bandwidth)
      items.push_back({c.device_id, v, c.rate});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    const double da = a.value / a.weight, db = b.value / b.weight;
    if (da != db) return da > db;
    return a.id < b.id;
  });
  return items;
}

class SelectionSearch {
 public:
  SelectionSearch(std::vector<Item> items, double capacity)
      : items_(std::move(items)), capacity_(capacity) {}

  Selection run() {
    std::vector<int> chosen;
    dfs(0, 0.0, 0.0, chosen);
    return best_;
  }

 private:
  // Dantzig bound: greedy fill of the remaining items with one fractional.
  double bound(size_t k, double value, double weight) const {
    double room = capacity_ - weight;
    for (; k < items_.size(); ++k) {
      if (items_[k].weight <= room) {
        room -= items_[k].weight;
        value += items_[k].value;
      } else {
        return value + items_[k].value * (room / items_[k].weight);
      }
    }
    return value;
  }

  void dfs(size_t k, double value, double weight, std::vector<int>& chosen) {
    if (bound(k, value, weight) < best_.objective - tie_eps(value, best_.objective))
      return;
    if (k == items_.size()) {
      std::vector<int> ids = chosen;
      std::sort(ids.begin(), ids.end());
      if (selection_better(value, ids, best_.objective, best_.devices)) {
        best_.objective = value;
        best_.devices = std::move(ids);
      }
      return;
    }
    const Item& it = items_[k];
    if (weight + it.weight <= capacity_) {
      chosen.push_back(it.id);
      dfs(k + 1, value + it.value, weight + it.weight, chosen);
      chosen.pop_back();
    }
    dfs(k + 1, value, weight, chosen);
  }

  std::vector<Item> items_;
  double capacity_;
  Selection best_;
};

}  // namespace

Selection greedy_selection(const SelectionInstance& inst) {
  validate(inst);
  Selection out;
  double room = inst.bandwidth;
  for (const auto& it : knapsack_items(inst)) {
    if (it.weight > room) continue;
    room -= it.weight;
    out.devices.push_back(it.id);
    out.objective += it.value;
  }
  std::sort(out.devices.begin(), out.devices.end());
  return out;
}

Selection solve_selection(const SelectionInstance& inst) {
  validate(inst);
  if (inst.form == BandwidthForm::kPerDevice) {
    Selection out;
    for (const auto& c : inst.candidates) {
      const double v = selection_value(c, inst.kappa);
      if (v > 0.0 && c.rate <= inst.bandwidth) {
        out.devices.push_back(c.device_id);
        out.objective += v;
      }
    }
    std::sort(out.devices.begin(), out.devices.end());
    return out;
  }
  auto items = knapsack_items(inst);
  if (static_cast<int>(items.size()) > kExactSelectionLimit)
    return greedy_selection(inst);
  return SelectionSearch(std::move(items), inst.bandwidth).run();
}

Selection brute_force_selection(const SelectionInstance& inst) {
  validate(inst);
  const size_t n = inst.candidates.size();
  if (n > 20)
    throw ConfigError("brute_force_selection: " + std::to_string(n) +
                      " candidates exceeds the limit of 20");
  Selection best;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> ids;
    for (size_t k = 0; k < n; ++k)
      if (mask & (1u << k)) ids.push_back(inst.candidates[k].device_id);
    std::sort(ids.begin(), ids.end());
    if (!selection_feasible(inst, ids)) continue;
    const double obj = selection_objective(inst, ids);
    if (selection_better(obj, ids, best.objective, best.devices)) {
      best.objective = obj;
      best.devices = std::move(ids);
    }
  }
  return best;
}

// --- association -----------------------------------------------------------

void AssociationInstance::validate() const {
  const size_t n = num_devices, g = num_gateways;
  if (num_devices < 0 || num_gateways < 1)
    throw ConfigError("association: need at least one gateway");
  if (feasible.size() != n * g || rate.size() != n * g ||
      utility.size() != n || bandwidth.size() != g)
    throw ConfigError("association: matrix shapes do not match N x G");
  for (double b : bandwidth)
    if (!(b > 0.0)) throw ConfigError("association: bandwidth must be > 0");
  for (size_t k = 0; k < n * g; ++k)
    if (feasible[k] && !(rate[k] >= 0.0 && std::isfinite(rate[k])))
      throw ConfigError("association: rate undefined on a feasible link");
  if (!(phi >= 0.0)) throw ConfigError("association: phi must be >= 0");
}

int Assignment::assigned_count() const {
  return static_cast<int>(
      std::count_if(gateway_of.begin(), gateway_of.end(),
                    [](int j) { return j >= 0; }));
}

std::vector<int> Assignment::matrix(int num_gateways) const {
  std::vector<int> m(gateway_of.size() * num_gateways, 0);
  for (size_t i = 0; i < gateway_of.size(); ++i)
    if (gateway_of[i] >= 0) m[i * num_gateways + gateway_of[i]] = 1;
  return m;
}

Assignment evaluate_assignment(const AssociationInstance& inst,
                               std::vector<int> gateway_of) {
  std::vector<double> usum(inst.num_gateways, 0.0), ratio(inst.num_gateways, 0.0);
  for (int i = 0; i < inst.num_devices; ++i) {
    const int j = gateway_of[i];
    if (j < 0) continue;
    usum[j] += inst.utility[i];
    ratio[j] += inst.rate_of(i, j) / inst.bandwidth[j];
  }
  Assignment a;
  a.gateway_of = std::move(gateway_of);
  a.u_slack = *std::min_element(usum.begin(), usum.end());
  a.r_slack = *std::max_element(ratio.begin(), ratio.end());
  a.objective = a.u_slack - inst.phi * a.r_slack;
  return a;
}

namespace {

// Choice encoding for lexicographic ties: unassigned sorts after gateways.
bool choice_less(const std::vector<int>& a, const std::vector<int>& b, int g) {
  for (size_t i = 0; i < a.size(); ++i) {
    const int ca = a[i] < 0 ? g : a[i], cb = b[i] < 0 ? g : b[i];
    if (ca != cb) return ca < cb;
  }
  return false;
}

bool assignment_better(const Assignment& a, const Assignment& b, int g) {
  if (b.gateway_of.empty()) return true;
  const double eps = tie_eps(a.objective, b.objective);
  if (a.objective > b.objective + eps) return true;
  if (a.objective < b.objective - eps) return false;
  const int ca = a.assigned_count(), cb = b.assigned_count();
  if (ca != cb) return ca > cb;
  return choice_less(a.gateway_of, b.gateway_of, g);
}

class AssociationSearch {
 public:
  explicit AssociationSearch(const AssociationInstance& inst)
      : inst_(inst),
        n_(inst.num_devices),
        g_(inst.num_gateways),
        usum_(g_, 0.0),
        ratio_(g_, 0.0),
        choice_(n_, -1),
        pos_rest_(static_cast<size_t>(n_ + 1) * g_, 0.0) {
    for (int i = n_ - 1; i >= 0; --i)
      for (int j = 0; j < g_; ++j)
        pos_rest_[static_cast<size_t>(i) * g_ + j] =
            pos_rest_[static_cast<size_t>(i + 1) * g_ + j] +
            (inst.is_feasible(i, j) ? std::max(inst.utility[i], 0.0) : 0.0);
  }

  Assignment run() {
    dfs(0);
    return best_;
  }

 private:
  void dfs(int i) {
    if (!best_.gateway_of.empty()) {
      double min_u = std::numeric_limits<double>::infinity(), max_r = 0.0;
      for (int j = 0; j < g_; ++j) {
        min_u = std::min(min_u, usum_[j] + pos_rest_[static_cast<size_t>(i) * g_ + j]);
        max_r = std::max(max_r, ratio_[j]);
      }
      const double ub = min_u - inst_.phi * max_r;
      if (ub < best_.objective - tie_eps(ub, best_.objective)) return;
    }
    if (i == n_) {
      Assignment a = evaluate_assignment(inst_, choice_);
      if (assignment_better(a, best_, g_)) best_ = std::move(a);
      return;
    }
    for (int j = 0; j < g_; ++j) {
      if (!inst_.is_feasible(i, j)) continue;
      const double r = inst_.rate_of(i, j) / inst_.bandwidth[j];
      usum_[j] += inst_.utility[i];
      ratio_[j] += r;
      choice_[i] = j;
      dfs(i + 1);
      usum_[j] -= inst_.utility[i];
      ratio_[j] -= r;
    }
    choice_[i] = -1;
    dfs(i + 1);
  }

  const AssociationInstance& inst_;
  int n_, g_;
  std::vector<double> usum_, ratio_;
  std::vector<int> choice_;
  std::vector<double> pos_rest_;
  Assignment best_;
};

}  // namespace

Assignment exact_association(const AssociationInstance& inst) {
  inst.validate();
  return AssociationSearch(inst).run();
}

Assignment heuristic_association(const AssociationInstance& inst) {
  inst.validate();
  const int n = inst.num_devices, g = inst.num_gateways;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return inst.utility[a] > inst.utility[b];
  });

  // Greedy: each device joins the feasible gateway with the lowest utility
  // sum so far (ties: lower load ratio, then lower gateway id).
  std::vector<int> gw(n, -1);
  std::vector<double> usum(g, 0.0), ratio(g, 0.0);
  for (int i : order) {
    int pick = -1;
    for (int j = 0; j < g; ++j) {
      if (!inst.is_feasible(i, j)) continue;
      if (pick < 0 || usum[j] < usum[pick] ||
          (usum[j] == usum[pick] && ratio[j] < ratio[pick]))
        pick = j;
    }
    if (pick < 0) continue;
    gw[i] = pick;
    usum[pick] += inst.utility[i];
    ratio[pick] += inst.rate_of(i, pick) / inst.bandwidth[pick];
  }

  // Local search over single-device moves (including unassignment), taking
  // the best strictly improving move each pass.
  Assignment cur = evaluate_assignment(inst, gw);
  for (int iter = 0; iter < 100 * (n + 1) * (g + 1); ++iter) {
    Assignment best_move = cur;
    for (int i = 0; i < n; ++i) {
      const int was = cur.gateway_of[i];
      for (int j = -1; j < g; ++j) {
        if (j == was || (j >= 0 && !inst.is_feasible(i, j))) continue;
        std::vector<int> trial = cur.gateway_of;
        trial[i] = j;
        Assignment a = evaluate_assignment(inst, std::move(trial));
        if (a.objective > best_move.objective +
                              tie_eps(a.objective, best_move.objective))
          best_move = std::move(a);
      }
    }
    if (best_move.gateway_of == cur.gateway_of) break;
    cur = std::move(best_move);
  }

  // Fill: attach unassigned devices wherever the objective does not drop.
  for (int i = 0; i < n; ++i) {
    if (cur.gateway_of[i] >= 0) continue;
    for (int j = 0; j < g; ++j) {
      if (!inst.is_feasible(i, j)) continue;
      std::vector<int> trial = cur.gateway_of;
      trial[i] = j;
      Assignment a = evaluate_assignment(inst, std::move(trial));
      if (a.objective >= cur.objective - tie_eps(a.objective, cur.objective)) {
        cur = std::move(a);
        break;
      }
    }
  }
  return cur;
}

Assignment solve_association(const AssociationInstance& inst) {
  if (inst.num_devices <= 12 && inst.num_gateways <= 4)
    return exact_association(inst);
  return heuristic_association(inst);
}

Assignment brute_force_association(const AssociationInstance& inst) {
  inst.validate();
  const int n = inst.num_devices, g = inst.num_gateways;
  double combos = std::pow(static_cast<double>(g + 1), n);
  if (combos > static_cast<double>(1 << 22))
    throw ConfigError("brute_force_association: (G+1)^N = " +
                      std::to_string(static_cast<long long>(combos)) +
                      " exceeds 2^22");
  // Odometer over choices in lexicographic order, unassigned encoded as g.
  std::vector<int> code(n, 0);
  Assignment best;
  while (true) {
    bool ok = true;
    std::vector<int> gw(n);
    for (int i = 0; i < n; ++i) {
      gw[i] = code[i] == g ? -1 : code[i];
      if (gw[i] >= 0 && !inst.is_feasible(i, gw[i])) ok = false;
    }
    if (ok) {
      Assignment a = evaluate_assignment(inst, std::move(gw));
      if (assignment_better(a, best, g)) best = std::move(a);
    }
    int pos = n - 1;
    while (pos >= 0 && code[pos] == g) code[pos--] = 0;
    if (pos < 0) break;
    ++code[pos];
  }
  if (best.gateway_of.empty()) best = evaluate_assignment(inst, std::vector<int>(n, -1));
  return best;
}

// --- JSON ------------------------------------------------------------------

nlohmann::json to_json(const SelectionInstance& inst) {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& x : inst.candidates)
    c.push_back({{"device", x.device_id},
                 {"u", x.utility},
                 {"tau", x.tau},
                 {"R", x.rate}});
  return {{"type", "selection"},
          {"candidates", c},
          {"B", inst.bandwidth},
          {"kappa", inst.kappa},
          {"form", inst.form == BandwidthForm::kSum ? "sum" : "per-device"}};
}

nlohmann::json to_json(const AssociationInstance& inst) {
  return {{"type", "association"}, {"N", inst.num_devices},
          {"G", inst.num_gateways}, {"J", inst.feasible},
          {"u", inst.utility},      {"R", inst.rate},
          {"B", inst.bandwidth},    {"phi", inst.phi}};
}

nlohmann::json to_json(const Selection& sel) {
  return {{"devices", sel.devices}, {"objective", sel.objective}};
}

nlohmann::json to_json(const Assignment& a) {
  return {{"gateway_of", a.gateway_of},
          {"objective", a.objective},
          {"u_slack", a.u_slack},
          {"R_slack", a.r_slack}};
}

SelectionInstance selection_from_json(const nlohmann::json& j) {
  SelectionInstance inst;
  for (const auto& c : j.at("candidates"))
    inst.candidates.push_back({c.at("device").get<int>(), c.at("u").get<double>(),
                               c.at("tau").get<double>(), c.at("R").get<double>()});
  inst.bandwidth = j.at("B").get<double>();
  inst.kappa = j.value("kappa", 0.0);
  const std::string form = j.value("form", "sum");
  if (form == "sum") {
    inst.form = BandwidthForm::kSum;
  } else if (form == "per-device") {
    inst.form = BandwidthForm::kPerDevice;
  } else {
    throw ConfigError("selection form must be 'sum' or 'per-device'");
  }
  return inst;
}

AssociationInstance association_from_json(const nlohmann::json& j) {
  AssociationInstance inst;
  inst.num_devices = j.at("N").get<int>();
  inst.num_gateways = j.at("G").get<int>();
  inst.feasible = j.at("J").get<std::vector<int>>();
  inst.utility = j.at("u").get<std::vector<double>>();
  inst.rate = j.at("R").get<std::vector<double>>();
  inst.bandwidth = j.at("B").get<std::vector<double>>();
  inst.phi = j.value("phi", 0.0);
  inst.validate();
  return inst;
}

}  // namespace hfl
