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


#include "lwpr2/lwpr.hpp"

#include "lwpr2/serialize.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace lwpr2 {

void LwprConfig::validate() const {
  if (!(w_gen > 0.0 && w_gen < 1.0)) throw DomainError("w_gen must be in (0, 1)");
  if (!(forgetting > 0.0 && forgetting <= 1.0)) throw DomainError("forgetting must be in (0, 1]");
  if (!(init_metric_diag.array() > 0.0).all() || !init_metric_diag.allFinite()) {
    throw DomainError("metric diagonal must be positive");
  }
  if (!(ridge >= 0.0)) throw DomainError("ridge must be >= 0");
  if (!(activation_cutoff > 0.0 && activation_cutoff < w_gen)) {
    throw DomainError("activation cutoff must be in (0, w_gen)");
  }
}

nlohmann::json LwprConfig::to_json() const {
  return {{"w_gen", w_gen},
          {"init_metric_diag", to_json_array(init_metric_diag)},
          {"forgetting", forgetting},
          {"ridge", ridge},
          {"activation_cutoff", activation_cutoff}};
}

LwprConfig LwprConfig::from_json(const nlohmann::json& j) {
  LwprConfig c;
  c.w_gen = j.at("w_gen").get<double>();
  from_json_array(j.at("init_metric_diag"), c.init_metric_diag);
  c.forgetting = j.at("forgetting").get<double>();
  c.ridge = j.at("ridge").get<double>();
  c.activation_cutoff = j.at("activation_cutoff").get<double>();
  c.validate();
  return c;
}

LwprModel::LwprModel(LwprConfig cfg, int output_index)
    : cfg_(std::move(cfg)), output_index_(output_index) {
  cfg_.validate();
  cutoff_distance2_ = -2.0 * std::log(cfg_.activation_cutoff);
}

LwprPrediction LwprModel::predict(const Input& x) const {
  if (fields_.empty()) throw DomainError("LWPR model has no receptive fields");
  double num = 0.0;
  double den = 0.0;
  double nearest_d2 = std::numeric_limits<double>::infinity();
  std::size_t nearest = 0;
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    const ReceptiveField& rf = fields_[i];
    const double d2 = rf.distance2(x);
    if (d2 < nearest_d2) {
      nearest_d2 = d2;
      nearest = i;
    }
    if (d2 > cutoff_distance2_) continue;
    const double w = std::exp(-0.5 * d2);
    num += w * rf.local_prediction(x);
    den += w;
  }
  if (den > 0.0) return {num / den, den, false};
  return {fields_[nearest].local_prediction(x), std::exp(-0.5 * nearest_d2), true};
}

UpdateReport LwprModel::update(const Input& x, double y) {
  if (!x.allFinite() || !std::isfinite(y)) throw DomainError("LWPR update needs finite data");
  UpdateReport report;
  double max_w = 0.0;
  const double gen_distance2 = -2.0 * std::log(cfg_.w_gen);
  for (ReceptiveField& rf : fields_) {
    const double d2 = rf.distance2(x);
    if (d2 >= gen_distance2) continue;
    const double w = std::exp(-0.5 * d2);
    if (!(w > cfg_.w_gen)) continue;
    max_w = std::max(max_w, w);

    Regressor z;
    z[0] = 1.0;
    z.tail<kInputDim>() = x - rf.center;
    rf.cov = cfg_.forgetting * rf.cov + w * z * z.transpose();
    rf.cross = cfg_.forgetting * rf.cross + (w * y) * z;
    rf.weight_sum = cfg_.forgetting * rf.weight_sum + w;
    rf.activation_count += w;

    const RegressorCov a = rf.cov + cfg_.ridge * RegressorCov::Identity();
    const Eigen::LDLT<RegressorCov> ldlt(a);
    const Regressor theta = ldlt.solve(rf.cross);
    if (ldlt.info() != Eigen::Success || !theta.allFinite()) {
      report.solve_failed = true;
    } else {
      rf.offset = theta[0];
      rf.coeffs = theta.tail<kInputDim>();
    }
    ++report.fields_updated;
  }
  if (max_w <= cfg_.w_gen) {
    ReceptiveField rf;
    rf.center = x;
    rf.metric_diag = cfg_.init_metric_diag;
    rf.offset = y;
    rf.cov(0, 0) = 1.0;
    rf.cross[0] = y;
    rf.weight_sum = 1.0;
    rf.activation_count = 1.0;
    fields_.push_back(rf);
    report.field_created = true;
  }
  return report;
}

nlohmann::json LwprModel::to_json() const {
  nlohmann::json fields = nlohmann::json::array();
  for (const ReceptiveField& rf : fields_) {
    fields.push_back({{"center", to_json_array(rf.center)},
                      {"metric_diag", to_json_array(rf.metric_diag)},
                      {"coeffs", to_json_array(rf.coeffs)},
                      {"offset", rf.offset},
                      {"cov", to_json_array(rf.cov)},
                      {"cross", to_json_array(rf.cross)},
                      {"weight_sum", rf.weight_sum},
                      {"activation_count", rf.activation_count}});
  }
  return {{"version", 1},
          {"output_index", output_index_},
          {"config", cfg_.to_json()},
          {"fields", std::move(fields)}};
}

LwprModel LwprModel::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw Error("unsupported LWPR checkpoint version");
  LwprModel m(LwprConfig::from_json(j.at("config")), j.at("output_index").get<int>());
  for (const auto& f : j.at("fields")) {
    ReceptiveField rf;
    from_json_array(f.at("center"), rf.center);
    from_json_array(f.at("metric_diag"), rf.metric_diag);
    from_json_array(f.at("coeffs"), rf.coeffs);
    rf.offset = f.at("offset").get<double>();
    from_json_array(f.at("cov"), rf.cov);
    from_json_array(f.at("cross"), rf.cross);
    rf.weight_sum = f.at("weight_sum").get<double>();
    rf.activation_count = f.at("activation_count").get<double>();
    m.fields_.push_back(rf);
  }
  return m;
}

std::uint64_t LwprModel::checksum() const {
  std::uint64_t h = lwpr2::checksum(nullptr, 0);
  for (const ReceptiveField& rf : fields_) {
    h = lwpr2::checksum(rf.center.data(), kInputDim, h);
    h = lwpr2::checksum(rf.metric_diag.data(), kInputDim, h);
    h = lwpr2::checksum(rf.coeffs.data(), kInputDim, h);
    h = lwpr2::checksum(&rf.offset, 1, h);
    h = lwpr2::checksum(rf.cov.data(), static_cast<std::size_t>(rf.cov.size()), h);
    h = lwpr2::checksum(rf.cross.data(), static_cast<std::size_t>(rf.cross.size()), h);
    h = lwpr2::checksum(&rf.weight_sum, 1, h);
  }
  return h;
}

std::size_t train_batch(LwprModel& model, const std::vector<ScalarSample>& data, int epochs,
                        std::uint64_t seed) {
  if (data.empty()) throw DomainError("LWPR training needs a nonempty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) model.update(data[i].x, data[i].y);
  }
  return model.fields().size();
}

LwprEnsemble::LwprEnsemble(const LwprConfig& cfg)
    : models_{LwprModel(cfg, 0), LwprModel(cfg, 1), LwprModel(cfg, 2), LwprModel(cfg, 3)} {}

EnsemblePrediction LwprEnsemble::predict(const Input& x) const {
  EnsemblePrediction out;
  if (!aligned_) {
    for (int c = 0; c < kOutputDim; ++c) {
      const LwprPrediction p = models_[static_cast<std::size_t>(c)].predict(x);
      out.value[c] = p.value;
      out.total_weight[c] = p.total_weight;
      out.extrapolation = out.extrapolation || p.extrapolation;
    }
    return out;
  }

  // Same centers and metrics in every channel: one activation pass, same
  // arithmetic order as LwprModel::predict.
  const auto& lead = models_[0].fields();
  if (lead.empty()) throw DomainError("LWPR model has no receptive fields");
  const double cutoff = -2.0 * std::log(models_[0].config().activation_cutoff);
  Target num = Target::Zero();
  double den = 0.0;
  double nearest_d2 = std::numeric_limits<double>::infinity();
  std::size_t nearest = 0;
  for (std::size_t i = 0; i < lead.size(); ++i) {
    const double d2 = lead[i].distance2(x);
    if (d2 < nearest_d2) {
      nearest_d2 = d2;
      nearest = i;
    }
    if (d2 > cutoff) continue;
    const double w = std::exp(-0.5 * d2);
    for (std::size_t c = 0; c < kOutputDim; ++c) {
      num[static_cast<Eigen::Index>(c)] += w * models_[c].fields()[i].local_prediction(x);
    }
    den += w;
  }
  if (den > 0.0) {
    out.value = num / den;
    out.total_weight.setConstant(den);
    return out;
  }
  for (std::size_t c = 0; c < kOutputDim; ++c) {
    out.value[static_cast<Eigen::Index>(c)] = models_[c].fields()[nearest].local_prediction(x);
  }
  out.total_weight.setConstant(std::exp(-0.5 * nearest_d2));
  out.extrapolation = true;
  return out;
}

void LwprEnsemble::update(const TrainingPair& pair) {
  int created = 0;
  for (int c = 0; c < kOutputDim; ++c) {
    created += models_[static_cast<std::size_t>(c)].update(pair.x, pair.y[c]).field_created;
  }
  if (created != 0 && created != kOutputDim) aligned_ = false;
}

void LwprEnsemble::refresh_alignment() {
  aligned_ = true;
  const auto& lead = models_[0];
  for (std::size_t c = 1; c < kOutputDim; ++c) {
    const auto& m = models_[c];
    if (m.fields().size() != lead.fields().size() ||
        m.config().activation_cutoff != lead.config().activation_cutoff) {
      aligned_ = false;
      return;
    }
    for (std::size_t i = 0; i < m.fields().size(); ++i) {
      if (m.fields()[i].center != lead.fields()[i].center ||
          m.fields()[i].metric_diag != lead.fields()[i].metric_diag) {
        aligned_ = false;
        return;
      }
    }
  }
}

void LwprEnsemble::train_batch(const Dataset& data, int epochs, std::uint64_t seed) {
  if (data.empty()) throw DomainError("LWPR training needs a nonempty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) update(data[i]);
  }
}

std::array<std::size_t, kOutputDim> LwprEnsemble::field_counts() const {
  std::array<std::size_t, kOutputDim> out{};
  for (int c = 0; c < kOutputDim; ++c) out[static_cast<std::size_t>(c)] = model(c).fields().size();
  return out;
}

nlohmann::json LwprEnsemble::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : models_) models.push_back(m.to_json());
  return {{"version", 1}, {"models", std::move(models)}};
}

LwprEnsemble LwprEnsemble::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw Error("unsupported LWPR ensemble version");
  const auto& models = j.at("models");
  if (models.size() != kOutputDim) throw Error("LWPR ensemble needs exactly 4 models");
  LwprEnsemble e;
  for (std::size_t c = 0; c < kOutputDim; ++c) e.models_[c] = LwprModel::from_json(models[c]);
  e.refresh_alignment();
  return e;
}

std::uint64_t LwprEnsemble::checksum() const {
  std::uint64_t h = 0;
  for (const auto& m : models_) h = h * 31 + m.checksum();
  return h;
}

Input default_metric(const Dataset& data, double w_gen, double fraction) {
  if (data.empty()) throw DomainError("default metric needs data");
  Input lo = data.front().x;
  Input hi = data.front().x;
  for (const auto& p : data) {
    lo = lo.cwiseMin(p.x);
    hi = hi.cwiseMax(p.x);
  }
  Input metric;
  const double k = -2.0 * std::log(w_gen);
  for (int i = 0; i < kInputDim; ++i) {
    const double radius = std::max(1e-6, fraction * (hi[i] - lo[i]));
    metric[i] = k / (radius * radius);
  }
  return metric;
}

std::vector<LwprFlopRow> flop_lower_bound(const std::array<std::size_t, kOutputDim>& counts) {
  std::vector<LwprFlopRow> rows;
  std::size_t total = 0;
  for (int c = 0; c < kOutputDim; ++c) {
    const std::size_t n = counts[static_cast<std::size_t>(c)];
    rows.push_back({kChannelNames[c], n, kFlopsPerActivation * static_cast<long>(n)});
    total += n;
  }
  rows.push_back({"total", total, kFlopsPerActivation * static_cast<long>(total)});
  return rows;
}

std::vector<LwprFlopRow> flop_lower_bound(const LwprEnsemble& ensemble) {
  return flop_lower_bound(ensemble.field_counts());
}

}  // namespace lwpr2
