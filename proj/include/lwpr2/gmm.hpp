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
#include <random>
#include <vector>

namespace lwpr2 {

struct GaussianComponent {
  double weight = 1.0;
  Input mean = Input::Zero();
  Input var_diag = Input::Ones();
};

struct EmOptions {
  // Stop once the mean per-point log-likelihood improves by less than this.
  double tol = 1e-6;
  int max_iter = 200;
  // Variance floor as a fraction of each channel's data variance.
  double var_floor_fraction = 1e-6;
  // Empty-component re-seeds allowed before the fit fails.
  int max_reseeds = 10;
};

class GmmModel;

GmmModel fit_em(const std::vector<Input>& data, int k, const EmOptions& opts, std::uint64_t seed);

// Diagonal-covariance Gaussian mixture. Immutable once fitted: the only ways
// to obtain one are fitting and loading a checkpoint.
class GmmModel {
 public:
  const std::vector<GaussianComponent>& components() const { return components_; }
  int k() const { return static_cast<int>(components_.size()); }
  double train_loglik() const { return train_loglik_; }
  double bic() const { return bic_; }
  std::size_t num_points() const { return num_points_; }
  // Training log-likelihood after each E-step.
  const std::vector<double>& loglik_trace() const { return loglik_trace_; }
  // Iterations at which an empty component was re-seeded.
  const std::vector<int>& reseed_iterations() const { return reseed_iterations_; }

  // k * (1 + 2 * 6) - 1 free parameters.
  static long num_parameters(int k) { return static_cast<long>(k) * (1 + 2 * kInputDim) - 1; }
  static double bic_value(double loglik, int k, std::size_t n) {
    return -2.0 * loglik + static_cast<double>(num_parameters(k)) * std::log(static_cast<double>(n));
  }

  double log_density(const Input& x) const;
  double log_likelihood(const std::vector<Input>& data) const;
  Input mixture_mean() const;
  Input mixture_variance() const;

  // Categorical draw on the weights, then a diagonal Gaussian draw.
  Input sample_one(std::mt19937_64& rng) const;
  std::vector<Input> sample(std::size_t n, std::mt19937_64& rng) const;
  std::vector<Input> sample(std::size_t n, std::uint64_t seed) const;

  nlohmann::json to_json() const;
  static GmmModel from_json(const nlohmann::json& j);
  std::uint64_t checksum() const;

 private:
  GmmModel() = default;
  void finalize(double loglik, std::size_t n);
  friend GmmModel fit_em(const std::vector<Input>&, int, const EmOptions&, std::uint64_t);

  std::vector<GaussianComponent> components_;
  std::vector<double> log_norm_;  // per component: log weight - 0.5 sum log(2 pi var)
  double train_loglik_ = 0.0;
  double bic_ = 0.0;
  std::size_t num_points_ = 0;
  std::vector<double> loglik_trace_;
  std::vector<int> reseed_iterations_;
};

// Fits every k in [k_min, k_max] with `restarts` seeds each and returns the
// model with the lowest BIC; ties go to the smaller k. k values needing more
// than a tenth of the data per component are skipped.
GmmModel select_k(const std::vector<Input>& data, int k_min, int k_max, int restarts,
                  const EmOptions& opts, std::uint64_t seed);

}  // namespace lwpr2
