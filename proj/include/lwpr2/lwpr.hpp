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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lwpr2 {

// Augmented regressor (1, x - c) used by the local weighted least squares.
using Regressor = Eigen::Matrix<double, kInputDim + 1, 1>;
using RegressorCov = Eigen::Matrix<double, kInputDim + 1, kInputDim + 1>;

// One local linear model with a Gaussian receptive field.
struct ReceptiveField {
  Input center = Input::Zero();
  Input metric_diag = Input::Ones();  // diagonal distance metric, > 0
  Input coeffs = Input::Zero();
  double offset = 0.0;
  // Forgetting-weighted sufficient statistics of the local regression.
  RegressorCov cov = RegressorCov::Zero();
  Regressor cross = Regressor::Zero();
  double weight_sum = 0.0;
  double activation_count = 0.0;

  // Squared Mahalanobis distance (x - c)^T D (x - c).
  double distance2(const Input& x) const {
    return (x - center).cwiseAbs2().dot(metric_diag);
  }
  double activation(const Input& x) const { return std::exp(-0.5 * distance2(x)); }
  double local_prediction(const Input& x) const { return offset + coeffs.dot(x - center); }
};

struct LwprConfig {
  double w_gen = 0.1;
  Input init_metric_diag = Input::Ones();
  double forgetting = 0.999;
  double ridge = 1e-6;
  double activation_cutoff = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
  static LwprConfig from_json(const nlohmann::json& j);
};

struct LwprPrediction {
  double value = 0.0;
  double total_weight = 0.0;
  bool extrapolation = false;  // every activation below the cutoff
};

struct UpdateReport {
  int fields_updated = 0;
  bool field_created = false;
  bool solve_failed = false;
};

// Incremental locally weighted regression for one scalar output.
class LwprModel {
 public:
  explicit LwprModel(LwprConfig cfg = {}, int output_index = 0);

  // Normalized activation-weighted blend of the local linear predictions.
  // Requires at least one receptive field.
  LwprPrediction predict(const Input& x) const;

  // Fields with activation above w_gen decay their statistics by the
  // forgetting factor, absorb the sample and re-solve their ridge-regularized
  // weighted least squares. A new field is created at x when no activation
  // exceeds w_gen. Other fields are not touched.
  UpdateReport update(const Input& x, double y);

  const std::vector<ReceptiveField>& fields() const { return fields_; }
  const LwprConfig& config() const { return cfg_; }
  int output_index() const { return output_index_; }

  nlohmann::json to_json() const;
  static LwprModel from_json(const nlohmann::json& j);
  std::uint64_t checksum() const;

 private:
  LwprConfig cfg_;
  int output_index_;
  double cutoff_distance2_;
  std::vector<ReceptiveField> fields_;
};

struct ScalarSample {
  Input x;
  double y;
};

// Shuffled passes over the data with a fixed seed. Returns the field count.
std::size_t train_batch(LwprModel& model, const std::vector<ScalarSample>& data, int epochs,
                        std::uint64_t seed);

struct EnsemblePrediction {
  Target value = Target::Zero();
  Target total_weight = Target::Zero();
  bool extrapolation = false;  // any output extrapolated
};

// One model per target channel.
class LwprEnsemble {
 public:
  LwprEnsemble() : LwprEnsemble(LwprConfig{}) {}
  explicit LwprEnsemble(const LwprConfig& cfg);

  EnsemblePrediction predict(const Input& x) const;
  void update(const TrainingPair& pair);
  // Trains every channel on the same shuffled order.
  void train_batch(const Dataset& data, int epochs, std::uint64_t seed);

  const LwprModel& model(int channel) const { return models_.at(static_cast<std::size_t>(channel)); }
  std::array<std::size_t, kOutputDim> field_counts() const;

  nlohmann::json to_json() const;
  static LwprEnsemble from_json(const nlohmann::json& j);
  std::uint64_t checksum() const;

 private:
  void refresh_alignment();

  std::array<LwprModel, kOutputDim> models_;
  // Every channel has the same field centers and metrics, so activations can
  // be shared across channels.
  bool aligned_ = true;
};

// Diagonal metric at which a field's activation falls to w_gen at `fraction`
// of each input channel's data range.
Input default_metric(const Dataset& data, double w_gen, double fraction = 0.1);

struct LwprFlopRow {
  std::string output;
  std::size_t fields = 0;
  long flops = 0;  // lower bound: 25 per receptive field
};

inline constexpr long kFlopsPerActivation = 25;

// Per-output rows followed by a "total" row.
std::vector<LwprFlopRow> flop_lower_bound(const std::array<std::size_t, kOutputDim>& counts);
std::vector<LwprFlopRow> flop_lower_bound(const LwprEnsemble& ensemble);

}  // namespace lwpr2
