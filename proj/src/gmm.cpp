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


#include "lwpr2/gmm.hpp"

#include "lwpr2/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace lwpr2 {
namespace {

using DataMatrix = Eigen::Matrix<double, kInputDim, Eigen::Dynamic>;

DataMatrix to_matrix(const std::vector<Input>& data) {
  DataMatrix m(kInputDim, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = data[i];
  return m;
}

double log_normalizer(const GaussianComponent& c) {
  return std::log(c.weight) -
         0.5 * (c.var_diag.array() * (2.0 * std::numbers::pi)).log().sum();
}

// Log of weight * N(x | mean, var) for every point (rows) and component (cols).
Eigen::MatrixXd component_log_densities(const DataMatrix& x,
                                        const std::vector<GaussianComponent>& comps) {
  Eigen::MatrixXd out(x.cols(), static_cast<Eigen::Index>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const GaussianComponent& c = comps[k];
    const Input inv = c.var_diag.cwiseInverse();
    const Eigen::ArrayXd quad =
        ((x.colwise() - c.mean).array().square().colwise() * inv.array()).colwise().sum();
    out.col(static_cast<Eigen::Index>(k)) = (log_normalizer(c) - 0.5 * quad).matrix();
  }
  return out;
}

// Row-wise log-sum-exp.
Eigen::VectorXd log_sum_exp(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd mx = m.rowwise().maxCoeff();
  return mx + ((m.colwise() - mx).array().exp().rowwise().sum().log()).matrix();
}

std::vector<Input> kmeanspp_seeds(const DataMatrix& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.cols();
  std::vector<Input> seeds;
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  seeds.push_back(x.col(pick(rng)));
  Eigen::VectorXd d2 = (x.colwise() - seeds.back()).colwise().squaredNorm().transpose();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (static_cast<int>(seeds.size()) < k) {
    const double total = d2.sum();
    Eigen::Index chosen = n - 1;
    if (total > 0.0) {
      const double target = unif(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    seeds.push_back(x.col(chosen));
    d2 = d2.cwiseMin((x.colwise() - seeds.back()).colwise().squaredNorm().transpose());
  }
  return seeds;
}

}  // namespace

void GmmModel::finalize(double loglik, std::size_t n) {
  log_norm_.clear();
  for (const auto& c : components_) log_norm_.push_back(log_normalizer(c));
  train_loglik_ = loglik;
  num_points_ = n;
  bic_ = bic_value(loglik, k(), n);
}

GmmModel fit_em(const std::vector<Input>& data, int k, const EmOptions& opts, std::uint64_t seed) {
  if (k < 1) throw DomainError("GMM needs k >= 1");
  if (data.size() < 10 * static_cast<std::size_t>(k)) {
    throw DomainError("GMM fit needs at least 10 points per component");
  }
  const DataMatrix x = to_matrix(data);
  const Eigen::Index n = x.cols();
  const double nd = static_cast<double>(n);

  const Input data_mean = x.rowwise().mean();
  Input data_var = (x.colwise() - data_mean).array().square().rowwise().mean().matrix();
  data_var = data_var.cwiseMax(1e-300);
  const Input floor = opts.var_floor_fraction * data_var;

  std::mt19937_64 rng(seed);
  const std::vector<Input> seeds = kmeanspp_seeds(x, k, rng);

  // Hard assignment to the nearest seed gives the starting parameters.
  std::vector<GaussianComponent> comps(static_cast<std::size_t>(k));
  {
    std::vector<Eigen::Index> owner(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.col(i) - seeds[static_cast<std::size_t>(c)]).squaredNorm();
        if (d < best) {
          best = d;
          owner[static_cast<std::size_t>(i)] = c;
        }
      }
    }
    for (int c = 0; c < k; ++c) {
      Input sum = Input::Zero();
      Input sq = Input::Zero();
      double count = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (owner[static_cast<std::size_t>(i)] != c) continue;
        sum += x.col(i);
        count += 1.0;
      }
      GaussianComponent& g = comps[static_cast<std::size_t>(c)];
      if (count < 2.0) {
        g.mean = seeds[static_cast<std::size_t>(c)];
        g.var_diag = data_var;
        g.weight = std::max(count, 1.0) / nd;
        continue;
      }
      g.mean = sum / count;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (owner[static_cast<std::size_t>(i)] == c) sq += (x.col(i) - g.mean).cwiseAbs2();
      }
      g.var_diag = (sq / count).cwiseMax(floor);
      g.weight = count / nd;
    }
    double wsum = 0.0;
    for (const auto& g : comps) wsum += g.weight;
    for (auto& g : comps) g.weight /= wsum;
  }

  GmmModel model;
  double prev = -std::numeric_limits<double>::infinity();
  double loglik = prev;
  int reseeds = 0;
  for (int it = 0; it < std::max(1, opts.max_iter); ++it) {
    // E-step.
    const Eigen::MatrixXd logp = component_log_densities(x, comps);
    const Eigen::VectorXd lse = log_sum_exp(logp);
    loglik = lse.sum();
    model.loglik_trace_.push_back(loglik);
    if (it > 0 && loglik - prev < opts.tol * nd) break;
    if (it + 1 >= opts.max_iter) break;
    prev = loglik;
    const Eigen::MatrixXd resp = (logp.colwise() - lse).array().exp().matrix();

    // M-step.
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      GaussianComponent& g = comps[static_cast<std::size_t>(c)];
      const Eigen::VectorXd r = resp.col(c);
      const double mass = r.sum();
      if (!(mass > 1e-10 * nd)) {
        if (++reseeds > opts.max_reseeds) throw Error("GMM component repeatedly lost all mass");
        Eigen::Index worst = 0;
        lse.minCoeff(&worst);
        g.mean = x.col(worst);
        g.var_diag = data_var;
        g.weight = 1.0 / nd;
        reseeded = true;
        continue;
      }
      g.weight = mass / nd;
      g.mean = (x * r) / mass;
      g.var_diag =
          (((x.colwise() - g.mean).array().square().matrix() * r) / mass).cwiseMax(floor);
    }
    if (reseeded) {
      double wsum = 0.0;
      for (const auto& g : comps) wsum += g.weight;
      for (auto& g : comps) g.weight /= wsum;
      model.reseed_iterations_.push_back(it);
      prev = -std::numeric_limits<double>::infinity();
    }
  }
  model.components_ = std::move(comps);
  model.finalize(loglik, static_cast<std::size_t>(n));
  return model;
}

GmmModel select_k(const std::vector<Input>& data, int k_min, int k_max, int restarts,
                  const EmOptions& opts, std::uint64_t seed) {
  if (k_min < 1 || k_min > k_max) throw DomainError("need 1 <= k_min <= k_max");
  if (restarts < 1) throw DomainError("need at least one restart");
  const int k_cap = static_cast<int>(data.size() / 10);
  if (k_cap < k_min) throw DomainError("not enough data for k_min components");
  k_max = std::min(k_max, k_cap);

  std::optional<GmmModel> best;
  for (int k = k_min; k <= k_max; ++k) {
    for (int r = 0; r < restarts; ++r) {
      const std::uint64_t s = seed * 1000003ULL + static_cast<std::uint64_t>(k) * 131ULL +
                              static_cast<std::uint64_t>(r);
      GmmModel m = fit_em(data, k, opts, s);
      if (!best || m.bic() < best->bic()) best = std::move(m);
    }
  }
  return *best;
}

double GmmModel::log_density(const Input& x) const {
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    terms[k] = log_norm_[k] - 0.5 * (x - c.mean).cwiseAbs2().cwiseQuotient(c.var_diag).sum();
    mx = std::max(mx, terms[k]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

double GmmModel::log_likelihood(const std::vector<Input>& data) const {
  return log_sum_exp(component_log_densities(to_matrix(data), components_)).sum();
}

Input GmmModel::mixture_mean() const {
  Input m = Input::Zero();
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

Input GmmModel::mixture_variance() const {
  const Input mu = mixture_mean();
  Input v = Input::Zero();
  for (const auto& c : components_) v += c.weight * (c.var_diag + (c.mean - mu).cwiseAbs2());
  return v;
}

Input GmmModel::sample_one(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double u = unif(rng);
  std::size_t chosen = components_.size() - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    acc += components_[k].weight;
    if (u < acc) {
      chosen = k;
      break;
    }
  }
  const auto& c = components_[chosen];
  Input x;
  for (int j = 0; j < kInputDim; ++j) x[j] = c.mean[j] + std::sqrt(c.var_diag[j]) * normal(rng);
  return x;
}

std::vector<Input> GmmModel::sample(std::size_t n, std::mt19937_64& rng) const {
  std::vector<Input> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(rng));
  return out;
}

std::vector<Input> GmmModel::sample(std::size_t n, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  return sample(n, rng);
}

nlohmann::json GmmModel::to_json() const {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& c : components_) {
    weights.push_back(c.weight);
    means.push_back(to_json_array(c.mean));
    vars.push_back(to_json_array(c.var_diag));
  }
  return {{"version", 1},         {"k", k()},           {"weights", weights},
          {"means", means},       {"variances", vars},  {"bic", bic_},
          {"train_loglik", train_loglik_}, {"num_points", num_points_}};
}

GmmModel GmmModel::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw Error("unsupported GMM checkpoint version");
  GmmModel m;
  const int k = j.at("k").get<int>();
  const auto& w = j.at("weights");
  const auto& mu = j.at("means");
  const auto& var = j.at("variances");
  if (k < 1 || w.size() != static_cast<std::size_t>(k) || mu.size() != w.size() ||
      var.size() != w.size()) {
    throw Error("inconsistent GMM checkpoint");
  }
  for (std::size_t c = 0; c < w.size(); ++c) {
    GaussianComponent g;
    g.weight = w[c].get<double>();
    from_json_array(mu[c], g.mean);
    from_json_array(var[c], g.var_diag);
    m.components_.push_back(g);
  }
  m.log_norm_.clear();
  for (const auto& c : m.components_) m.log_norm_.push_back(log_normalizer(c));
  m.train_loglik_ = j.at("train_loglik").get<double>();
  m.bic_ = j.at("bic").get<double>();
  m.num_points_ = j.at("num_points").get<std::size_t>();
  return m;
}

std::uint64_t GmmModel::checksum() const {
  std::uint64_t h = lwpr2::checksum(nullptr, 0);
  for (const auto& c : components_) {
    h = lwpr2::checksum(&c.weight, 1, h);
    h = lwpr2::checksum(c.mean.data(), kInputDim, h);
    h = lwpr2::checksum(c.var_diag.data(), kInputDim, h);
  }
  return h;
}

}  // namespace lwpr2
