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

#include "hfl/utility.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hfl/error.h"

namespace hfl {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

namespace {

void check_uniform(const std::vector<GradientRecord>& records) {
  if (records.empty()) throw ConfigError("no gradient records");
  const size_t len = records.front().vec.size();
  const bool comp = records.front().compressed;
  for (const auto& r : records) {
    if (r.vec.size() != len)
      throw ConfigError("gradient records have mixed lengths (" +
                        std::to_string(len) + " vs " +
                        std::to_string(r.vec.size()) + ")");
    if (r.compressed != comp)
      throw ConfigError("gradient records mix compressed and raw vectors");
  }
}

}  // namespace

std::vector<double> global_gradient(const std::vector<GradientRecord>& records) {
  check_uniform(records);
  std::vector<double> mean(records.front().vec.size(), 0.0);
  for (const auto& r : records)
    for (size_t k = 0; k < mean.size(); ++k) mean[k] += r.vec[k];
  const double inv = 1.0 / static_cast<double>(records.size());
  for (double& v : mean) v *= inv;
  return mean;
}

std::vector<UtilityRecord> learning_utility_from_gram(std::span<const double> gram,
                                                      int n) {
  if (n < 2) throw ConfigError("learning utility needs at least two devices");
  std::vector<UtilityRecord> out(n);
  for (int i = 0; i < n; ++i) {
    // g_i . gbar is the mean of row i; the diversity term is the mean of the
    // off-diagonal entries.
    double all = 0.0, others = 0.0;
    int seen_all = 0, seen_others = 0;
    for (int j = 0; j < n; ++j) {
      const double v = gram[static_cast<size_t>(i) * n + j];
      all += (v - all) / ++seen_all;
      if (j != i) others += (v - others) / ++seen_others;
    }
    out[i].device_id = i;
    out[i].eta = all;
    out[i].nu = -others;
    out[i].u = out[i].eta + out[i].nu;
  }
  return out;
}

std::vector<UtilityRecord> learning_utility(
    const std::vector<GradientRecord>& records) {
  check_uniform(records);
  const int n = static_cast<int>(records.size());
  if (n < 2) throw ConfigError("learning utility needs at least two devices");
  std::vector<double> gram(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = dot(records[i].vec, records[j].vec);
      gram[static_cast<size_t>(i) * n + j] = v;
      gram[static_cast<size_t>(j) * n + i] = v;
    }
  auto out = learning_utility_from_gram(gram, n);
  for (int i = 0; i < n; ++i) {
    out[i].device_id = records[i].device_id;
    out[i].updated_at = records[i].recorded_at;
  }
  return out;
}

// --- PCA -------------------------------------------------------------------

namespace {

void fix_sign(std::span<double> v) {
  size_t arg = 0;
  for (size_t k = 1; k < v.size(); ++k)
    if (std::abs(v[k]) > std::abs(v[arg])) arg = k;
  if (v[arg] < 0)
    for (double& x : v) x = -x;
}

// Orthogonalizes `v` against rows [0, count) of `basis` (two passes of
// modified Gram-Schmidt). Returns the remaining norm before normalization.
double orthonormalize(std::vector<double>& basis, int count, int d,
                      std::span<double> v) {
  for (int pass = 0; pass < 2; ++pass)
    for (int r = 0; r < count; ++r) {
      std::span<const double> b(basis.data() + static_cast<size_t>(r) * d, d);
      const double c = dot(b, v);
      for (int k = 0; k < d; ++k) v[k] -= c * b[k];
    }
  const double norm = std::sqrt(dot(v, v));
  if (norm > 0)
    for (double& x : v) x /= norm;
  return norm;
}

}  // namespace

PcaModel pca_fit(const std::vector<std::vector<double>>& grads, int p) {
  const int n = static_cast<int>(grads.size());
  if (n < 2) throw ConfigError("pca_fit needs at least two vectors");
  const int d = static_cast<int>(grads.front().size());
  for (const auto& g : grads)
    if (static_cast<int>(g.size()) != d)
      throw ConfigError("pca_fit: vectors have mixed lengths");
  if (p < 1 || p > std::min(n, d))
    throw ConfigError("pca_fit: p = " + std::to_string(p) +
                      " must be in [1, min(count, d)] = [1, " +
                      std::to_string(std::min(n, d)) + "]");

  PcaModel m;
  m.p = p;
  m.d = d;
  m.mean.assign(d, 0.0);
  for (const auto& g : grads)
    for (int k = 0; k < d; ++k) m.mean[k] += g[k];
  for (double& v : m.mean) v /= n;

  // Dual PCA: eigenvectors of the n x n Gram matrix of centred rows.
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) x(i, k) = grads[i][k] - m.mean[k];
  const Eigen::MatrixXd gram = x * x.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd& evals = eig.eigenvalues();  // ascending
  const double top = std::max(evals(n - 1), 0.0);
  const double tol = top * 1e-12 * n;

  m.components.assign(static_cast<size_t>(p) * d, 0.0);
  int filled = 0;
  for (int r = n - 1; r >= 0 && filled < p; --r) {
    if (!(evals(r) > tol) || top == 0.0) break;
    const Eigen::VectorXd dir = x.transpose() * eig.eigenvectors().col(r);
    std::span<double> row(m.components.data() + static_cast<size_t>(filled) * d,
                          d);
    for (int k = 0; k < d; ++k) row[k] = dir(k);
    if (orthonormalize(m.components, filled, d, row) < 1e-300) continue;
    fix_sign(row);
    ++filled;
  }
  // Complete beyond the data rank with standard basis directions.
  for (int e = 0; filled < p && e < d; ++e) {
    std::span<double> row(m.components.data() + static_cast<size_t>(filled) * d,
                          d);
    std::fill(row.begin(), row.end(), 0.0);
    row[e] = 1.0;
    if (orthonormalize(m.components, filled, d, row) < 1e-6) continue;
    fix_sign(row);
    ++filled;
  }
  return m;
}

std::vector<double> pca_project(const PcaModel& model, std::span<const double> g) {
  if (static_cast<int>(g.size()) != model.d)
    throw ConfigError("pca_project: vector length " + std::to_string(g.size()) +
                      " does not match model dimension " +
                      std::to_string(model.d));
  std::vector<double> centred(g.begin(), g.end());
  for (int k = 0; k < model.d; ++k) centred[k] -= model.mean[k];
  std::vector<double> out(model.p);
  for (int r = 0; r < model.p; ++r) out[r] = dot(model.component(r), centred);
  return out;
}

std::vector<double> pca_reconstruct(const PcaModel& model,
                                    std::span<const double> coeffs) {
  if (static_cast<int>(coeffs.size()) != model.p)
    throw ConfigError("pca_reconstruct: expected " + std::to_string(model.p) +
                      " coefficients");
  std::vector<double> out = model.mean;
  for (int r = 0; r < model.p; ++r) {
    const auto c = model.component(r);
    for (int k = 0; k < model.d; ++k) out[k] += coeffs[r] * c[k];
  }
  return out;
}

// --- UtilityStore ----------------------------------------------------------

UtilityStore::UtilityStore(int num_devices)
    : n_(num_devices),
      vecs_(num_devices),
      present_(num_devices, 0),
      stamp_(num_devices, 0.0),
      gram_(static_cast<size_t>(num_devices) * num_devices, 0.0),
      cache_(num_devices) {}

void UtilityStore::set(int device, std::vector<double> vec, double now) {
  if (device < 0 || device >= n_)
    throw ConfigError("UtilityStore: unknown device " + std::to_string(device));
  if (count_ > 0) {
    for (int j = 0; j < n_; ++j)
      if (present_[j] && j != device && vecs_[j].size() != vec.size())
        throw ConfigError("UtilityStore: gradient length changed");
  }
  vecs_[device] = std::move(vec);
  if (!present_[device]) {
    present_[device] = 1;
    ++count_;
  }
  stamp_[device] = now;
  for (int j = 0; j < n_; ++j) {
    if (!present_[j]) continue;
    const double v = dot(vecs_[device], vecs_[j]);
    gram_[static_cast<size_t>(device) * n_ + j] = v;
    gram_[static_cast<size_t>(j) * n_ + device] = v;
  }
  dirty_ = true;
}

const std::vector<UtilityRecord>& UtilityStore::utilities() {
  if (!dirty_) return cache_;
  dirty_ = false;
  std::vector<int> ids;
  for (int i = 0; i < n_; ++i)
    if (present_[i]) ids.push_back(i);
  for (int i = 0; i < n_; ++i) cache_[i] = UtilityRecord{i, 0.0, 0.0, 0.0, 0.0};
  if (ids.size() < 2) return cache_;

  const int m = static_cast<int>(ids.size());
  std::vector<double> sub(static_cast<size_t>(m) * m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      sub[static_cast<size_t>(a) * m + b] =
          gram_[static_cast<size_t>(ids[a]) * n_ + ids[b]];
  const auto recs = learning_utility_from_gram(sub, m);
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < m; ++a) {
    cache_[ids[a]] = recs[a];
    cache_[ids[a]].device_id = ids[a];
    cache_[ids[a]].updated_at = stamp_[ids[a]];
    best = std::max(best, recs[a].u);
  }
  for (int i = 0; i < n_; ++i)
    if (!present_[i]) cache_[i] = UtilityRecord{i, best, best, 0.0, 0.0};
  return cache_;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("kendall_tau: length mismatch");
  const size_t n = a.size();
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0 && db == 0) continue;
      if (da == 0) {
        ++ties_a;
      } else if (db == 0) {
        ++ties_b;
      } else if ((da > 0) == (db > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  const double n0 = static_cast<double>(concordant + discordant);
  const double denom = std::sqrt((n0 + ties_a) * (n0 + ties_b));
  return denom > 0 ? (concordant - discordant) / denom : 0.0;
}

}  // namespace hfl
