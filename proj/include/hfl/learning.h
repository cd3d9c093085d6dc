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

// Small softmax classifiers, the proximal local objective and SGD.
//
// Parameter layout (row-major, flattened):
//   logistic: W[K x D], b[K]
//   mlp:      W1[H x D], b1[H], W2[K x H], b2[K]   (tanh hidden layer)

#ifndef HFL_LEARNING_H_
#define HFL_LEARNING_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hfl {

enum class ModelKind { kLogistic, kMlp };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct ModelArch {
  ModelKind kind = ModelKind::kLogistic;
  int input_dim = 0;
  int hidden_dim = 0;  // mlp only
  int num_classes = 0;

  size_t param_count() const;
  void validate() const;
};

// Flat weight vector. The length is fixed at construction.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(size_t d) : w_(d, 0.0) {}
  explicit ModelParams(std::vector<double> w) : w_(std::move(w)) {}

  size_t size() const { return w_.size(); }
  double& operator[](size_t k) { return w_[k]; }
  double operator[](size_t k) const { return w_[k]; }
  std::span<double> span() { return w_; }
  std::span<const double> span() const { return w_; }
  const std::vector<double>& values() const { return w_; }

  bool all_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<double> w_;
};

// Samples held by one device (or a test set). Features are row-major.
struct Shard {
  std::vector<double> features;
  std::vector<int> labels;
  int input_dim = 0;

  size_t size() const { return labels.size(); }
  std::span<const double> row(size_t k) const {
    return {features.data() + k * static_cast<size_t>(input_dim),
            static_cast<size_t>(input_dim)};
  }
  friend bool operator==(const Shard&, const Shard&) = default;
};

struct TrainConfig {
  double gamma = 0.01;  // learning rate
  double rho = 0.1;     // proximal weight
  int epochs = 5;
  int batch_size = 10;

  void validate() const;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

struct TrainResult {
  ModelParams params;
  // Gradient of the proximal objective at `params`, over the full shard.
  std::vector<double> last_grad;
  // Mean cross-entropy at `params` over the full shard.
  double loss = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

ModelParams init_params(const ModelArch& arch, uint64_t seed);

// Mean softmax cross-entropy over the batch and its analytic gradient.
// Throws ConfigError on dimension mismatch or an empty batch.
LossGrad loss_and_grad(const ModelParams& params, const ModelArch& arch,
                       const Shard& batch);

// Same, restricted to the rows listed in `rows`.
LossGrad loss_and_grad(const ModelParams& params, const ModelArch& arch,
                       const Shard& data, std::span<const size_t> rows);

// grad L(params) + rho * (params - anchor)
std::vector<double> grad_regularized(const ModelParams& params,
                                     const ModelParams& anchor,
                                     const ModelArch& arch, const Shard& batch,
                                     double rho);

// E epochs of mini-batch SGD on the proximal objective, starting from
// `start` and penalized towards `anchor`. Batch order is a per-epoch
// reshuffle drawn from `seed`. Throws NumericError naming `device_id` if the
// weights stop being finite.
TrainResult local_train(const ModelParams& start, const ModelParams& anchor,
                        const ModelArch& arch, const Shard& shard,
                        const TrainConfig& cfg, uint64_t seed,
                        int device_id = -1);

EvalResult evaluate(const ModelParams& params, const ModelArch& arch,
                    const Shard& test);

}  // namespace hfl

#endif  // HFL_LEARNING_H_
