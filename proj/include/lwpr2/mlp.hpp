// Copyright 2026 The lwpr2 Authors
//
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


#pragma once

#include "lwpr2/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lwpr2 {

inline constexpr int kHidden = 32;
// W1 (32x6), b1, W2 (32x32), b2, W3 (4x32), b3
inline constexpr int kNumParams =
    kHidden * kInputDim + kHidden + kHidden * kHidden + kHidden + kOutputDim * kHidden + kOutputDim;
static_assert(kNumParams == 1412);

// Flat parameter-shaped vector. Gradients and ADAM moments use this layout.
using GradientVector = Eigen::VectorXd;

using InputBatch = Eigen::Matrix<double, kInputDim, Eigen::Dynamic>;
using OutputBatch = Eigen::Matrix<double, kOutputDim, Eigen::Dynamic>;

// Parameters of the 6-32-32-4 network: tanh hidden layers, linear output.
// Stored as one flat column-major block so that a parameter vector, its
// gradient and the optimizer moments share indexing.
class MlpParams {
 public:
  using W1 = Eigen::Matrix<double, kHidden, kInputDim>;
  using W2 = Eigen::Matrix<double, kHidden, kHidden>;
  using W3 = Eigen::Matrix<double, kOutputDim, kHidden>;
  using B1 = Eigen::Matrix<double, kHidden, 1>;
  using B3 = Eigen::Matrix<double, kOutputDim, 1>;

  static constexpr int kOffW1 = 0;
  static constexpr int kOffB1 = kOffW1 + kHidden * kInputDim;
  static constexpr int kOffW2 = kOffB1 + kHidden;
  static constexpr int kOffB2 = kOffW2 + kHidden * kHidden;
  static constexpr int kOffW3 = kOffB2 + kHidden;
  static constexpr int kOffB3 = kOffW3 + kOutputDim * kHidden;

  // All-zero network.
  MlpParams();
  // Uniform in +-1/sqrt(fan_in) for weights and biases.
  static MlpParams random_init(std::uint64_t seed);
  static MlpParams from_flat(const GradientVector& flat);

  Eigen::Map<const W1> w1() const { return Eigen::Map<const W1>(flat_.data() + kOffW1); }
  Eigen::Map<const B1> b1() const { return Eigen::Map<const B1>(flat_.data() + kOffB1); }
  Eigen::Map<const W2> w2() const { return Eigen::Map<const W2>(flat_.data() + kOffW2); }
  Eigen::Map<const B1> b2() const { return Eigen::Map<const B1>(flat_.data() + kOffB2); }
  Eigen::Map<const W3> w3() const { return Eigen::Map<const W3>(flat_.data() + kOffW3); }
  Eigen::Map<const B3> b3() const { return Eigen::Map<const B3>(flat_.data() + kOffB3); }
  Eigen::Map<W1> w1() { return Eigen::Map<W1>(flat_.data() + kOffW1); }
  Eigen::Map<B1> b1() { return Eigen::Map<B1>(flat_.data() + kOffB1); }
  Eigen::Map<W2> w2() { return Eigen::Map<W2>(flat_.data() + kOffW2); }
  Eigen::Map<B1> b2() { return Eigen::Map<B1>(flat_.data() + kOffB2); }
  Eigen::Map<W3> w3() { return Eigen::Map<W3>(flat_.data() + kOffW3); }
  Eigen::Map<B3> b3() { return Eigen::Map<B3>(flat_.data() + kOffB3); }

  const GradientVector& flat() const { return flat_; }

  Target forward(const Input& x) const;
  // Column-wise forward pass over a batch.
  OutputBatch forward(const InputBatch& x) const;

  std::uint64_t checksum() const;
  nlohmann::json to_json() const;
  static MlpParams from_json(const nlohmann::json& j);

  friend bool operator==(const MlpParams& a, const MlpParams& b) { return a.flat_ == b.flat_; }

 private:
  GradientVector flat_;
};

struct GradientResult {
  GradientVector grad;
  double loss = 0.0;  // mean over the batch of ||y - f(x)||^2
};

// Exact gradient of the batch-mean squared error by backpropagation.
GradientResult mse_gradient(const MlpParams& p, std::span<const TrainingPair> batch);

// Batch-mean squared error without the gradient.
double mse_loss(const MlpParams& p, std::span<const TrainingPair> batch);

struct AdamState {
  GradientVector m = GradientVector::Zero(kNumParams);
  GradientVector v = GradientVector::Zero(kNumParams);
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  nlohmann::json to_json() const;
  static AdamState from_json(const nlohmann::json& j);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamResult {
  MlpParams params;
  AdamState state;
};

// Bias-corrected ADAM update. Throws DomainError, leaving nothing changed,
// when the gradient has non-finite entries or lr <= 0.
AdamResult adam_step(const MlpParams& p, const AdamState& state, const GradientVector& g,
                     double lr);

struct LayerFlops {
  std::string name;
  int inputs = 0;
  int outputs = 0;
  long flops = 0;
};

// FLOPs per prediction: 2MN - M for each M x N matrix-vector product, M bias
// additions and M tanh evaluations on hidden layers.
std::vector<LayerFlops> flop_count();
long flop_total(const std::vector<LayerFlops>& rows);

// Reference total reported next to the row sum; the two differ by 64.
inline constexpr long kReferenceNetworkFlopTotal = 2688;

}  // namespace lwpr2
