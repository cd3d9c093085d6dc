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

#include "hfl/learning.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hfl/error.h"
#include "hfl/rng.h"

namespace hfl {

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kLogistic ? "logistic" : "mlp";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "logistic") return ModelKind::kLogistic;
  if (name == "mlp") return ModelKind::kMlp;
  throw ConfigError("model.kind: unknown model kind '" + name + "'");
}

size_t ModelArch::param_count() const {
  const size_t d = input_dim, k = num_classes, h = hidden_dim;
  if (kind == ModelKind::kLogistic) return k * d + k;
  return h * d + h + k * h + k;
}

void ModelArch::validate() const {
  if (input_dim < 1) throw ConfigError("model.input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (kind == ModelKind::kMlp && hidden_dim < 1)
    throw ConfigError("model.hidden_dim must be >= 1 for mlp");
}

bool ModelParams::all_finite() const {
  return std::all_of(w_.begin(), w_.end(),
                     [](double x) { return std::isfinite(x); });
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0)) throw ConfigError("train.gamma must be >= 0");
  if (!(rho >= 0.0)) throw ConfigError("train.rho must be >= 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
}

namespace {

// Computes logits for one sample into `logits` (size K). For the MLP the
// hidden activations are written to `hidden` (size H).
void forward(const ModelArch& arch, std::span<const double> w,
             std::span<const double> x, std::vector<double>& hidden,
             std::vector<double>& logits) {
  const size_t d = arch.input_dim, k = arch.num_classes;
  if (arch.kind == ModelKind::kLogistic) {
    const double* W = w.data();
    const double* b = W + k * d;
    for (size_t c = 0; c < k; ++c) {
      double s = b[c];
      const double* wr = W + c * d;
      for (size_t f = 0; f < d; ++f) s += wr[f] * x[f];
      logits[c] = s;
    }
    return;
  }
  const size_t h = arch.hidden_dim;
  const double* W1 = w.data();
  const double* b1 = W1 + h * d;
  const double* W2 = b1 + h;
  const double* b2 = W2 + k * h;
  for (size_t u = 0; u < h; ++u) {
    double s = b1[u];
    const double* wr = W1 + u * d;
    for (size_t f = 0; f < d; ++f) s += wr[f] * x[f];
    hidden[u] = std::tanh(s);
  }
  for (size_t c = 0; c < k; ++c) {
    double s = b2[c];
    const double* wr = W2 + c * h;
    for (size_t u = 0; u < h; ++u) s += wr[u] * hidden[u];
    logits[c] = s;
  }
}

// Turns logits into probabilities in place; returns -log p[label].
double softmax_xent(std::vector<double>& logits, int label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  const double log_p = std::log(logits[label] / z);
  for (double& v : logits) v /= z;
  return -log_p;
}

void check_shapes(const ModelParams& params, const ModelArch& arch,
                  const Shard& data) {
  if (params.size() != arch.param_count())
    throw ConfigError("parameter vector has length " +
                      std::to_string(params.size()) + ", architecture needs " +
                      std::to_string(arch.param_count()));
  if (data.input_dim != arch.input_dim)
    throw ConfigError("shard input_dim " + std::to_string(data.input_dim) +
                      " does not match model input_dim " +
                      std::to_string(arch.input_dim));
  if (data.features.size() != data.size() * static_cast<size_t>(data.input_dim))
    throw ConfigError("shard feature matrix is not n x input_dim");
}

}  // namespace

LossGrad loss_and_grad(const ModelParams& params, const ModelArch& arch,
                       const Shard& data, std::span<const size_t> rows) {
  check_shapes(params, arch, data);
  if (rows.empty()) throw ConfigError("loss_and_grad: empty batch");

  const size_t d = arch.input_dim, k = arch.num_classes, h = arch.hidden_dim;
  const auto w = params.span();
  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  std::vector<double> hidden(h), probs(k), dhidden(h);

  for (size_t r : rows) {
    const auto x = data.row(r);
    const int y = data.labels[r];
    if (y < 0 || y >= static_cast<int>(k))
      throw ConfigError("label " + std::to_string(y) + " out of range");
    forward(arch, w, x, hidden, probs);
    out.loss += softmax_xent(probs, y);
    probs[y] -= 1.0;  // dlogits

    if (arch.kind == ModelKind::kLogistic) {
      double* gW = out.grad.data();
      double* gb = gW + k * d;
      for (size_t c = 0; c < k; ++c) {
        double* gr = gW + c * d;
        for (size_t f = 0; f < d; ++f) gr[f] += probs[c] * x[f];
        gb[c] += probs[c];
      }
      continue;
    }
    const double* W2 = w.data() + h * d + h;
    double* gW1 = out.grad.data();
    double* gb1 = gW1 + h * d;
    double* gW2 = gb1 + h;
    double* gb2 = gW2 + k * h;
    std::fill(dhidden.begin(), dhidden.end(), 0.0);
    for (size_t c = 0; c < k; ++c) {
      double* gr = gW2 + c * h;
      const double* wr = W2 + c * h;
      for (size_t u = 0; u < h; ++u) {
        gr[u] += probs[c] * hidden[u];
        dhidden[u] += probs[c] * wr[u];
      }
      gb2[c] += probs[c];
    }
    for (size_t u = 0; u < h; ++u) {
      const double dpre = dhidden[u] * (1.0 - hidden[u] * hidden[u]);
      double* gr = gW1 + u * d;
      for (size_t f = 0; f < d; ++f) gr[f] += dpre * x[f];
      gb1[u] += dpre;
    }
  }

  const double inv = 1.0 / static_cast<double>(rows.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

LossGrad loss_and_grad(const ModelParams& params, const ModelArch& arch,
                       const Shard& batch) {
  std::vector<size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), size_t{0});
  return loss_and_grad(params, arch, batch, rows);
}

std::vector<double> grad_regularized(const ModelParams& params,
                                     const ModelParams& anchor,
                                     const ModelArch& arch, const Shard& batch,
                                     double rho) {
  if (params.size() != anchor.size())
    throw ConfigError("grad_regularized: params and anchor lengths differ");
  auto g = loss_and_grad(params, arch, batch).grad;
  if (rho != 0.0)
    for (size_t k = 0; k < g.size(); ++k) g[k] += rho * (params[k] - anchor[k]);
  return g;
}

ModelParams init_params(const ModelArch& arch, uint64_t seed) {
  arch.validate();
  Rng rng(derive_seed(seed, {kStreamInit}));
  ModelParams p(arch.param_count());
  size_t pos = 0;
  auto fill_layer = [&](size_t fan_in, size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    const size_t count = fan_in * fan_out + fan_out;  // weights + biases
    for (size_t k = 0; k < count; ++k) p[pos++] = dist(rng);
  };
  if (arch.kind == ModelKind::kLogistic) {
    fill_layer(arch.input_dim, arch.num_classes);
  } else {
    fill_layer(arch.input_dim, arch.hidden_dim);
    fill_layer(arch.hidden_dim, arch.num_classes);
  }
  return p;
}

TrainResult local_train(const ModelParams& start, const ModelParams& anchor,
                        const ModelArch& arch, const Shard& shard,
                        const TrainConfig& cfg, uint64_t seed, int device_id) {
  cfg.validate();
  if (start.size() != anchor.size())
    throw ConfigError("local_train: start and anchor lengths differ");
  if (shard.size() == 0) throw ConfigError("local_train: empty shard");

  Rng rng(derive_seed(seed, {kStreamTrain}));
  ModelParams w = start;
  std::vector<size_t> order(shard.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t bs = static_cast<size_t>(cfg.batch_size);

  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t lo = 0; lo < order.size(); lo += bs) {
      const size_t hi = std::min(order.size(), lo + bs);
      std::span<const size_t> batch(order.data() + lo, hi - lo);
      const auto lg = loss_and_grad(w, arch, shard, batch);
      for (size_t k = 0; k < w.size(); ++k)
        w[k] -= cfg.gamma * (lg.grad[k] + cfg.rho * (w[k] - anchor[k]));
    }
    if (!w.all_finite())
      throw NumericError("numeric divergence in local training on device " +
                         std::to_string(device_id) + " at epoch " +
                         std::to_string(e + 1));
  }

  TrainResult out;
  auto full = loss_and_grad(w, arch, shard);
  out.loss = full.loss;
  out.last_grad = std::move(full.grad);
  for (size_t k = 0; k < w.size(); ++k)
    out.last_grad[k] += cfg.rho * (w[k] - anchor[k]);
  out.params = std::move(w);
  return out;
}

EvalResult evaluate(const ModelParams& params, const ModelArch& arch,
                    const Shard& test) {
  check_shapes(params, arch, test);
  if (test.size() == 0) throw ConfigError("evaluate: empty test set");
  const size_t k = arch.num_classes;
  std::vector<double> hidden(arch.hidden_dim), probs(k);
  size_t correct = 0;
  double loss = 0.0;
  for (size_t r = 0; r < test.size(); ++r) {
    forward(arch, params.span(), test.row(r), hidden, probs);
    const size_t pred = static_cast<size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (static_cast<int>(pred) == test.labels[r]) ++correct;
    loss += softmax_xent(probs, test.labels[r]);
  }
  const double n = static_cast<double>(test.size());
  return {static_cast<double>(correct) / n, loss / n};
}

}  // namespace hfl
