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


#include "lwpr2/mppi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace lwpr2 {

void MppiConfig::validate() const {
  if (num_rollouts < 1 || horizon < 1) throw DomainError("MPPI needs rollouts and horizon >= 1");
  if (!(dt > 0.0) || !(temperature > 0.0)) throw DomainError("MPPI dt and temperature must be > 0");
  if (!(steer_noise > 0.0) || !(throttle_noise > 0.0)) throw DomainError("MPPI noise must be > 0");
  if (!(max_slip_deg > 0.0) || !(target_speed > 0.0)) {
    throw DomainError("MPPI slip limit and target speed must be > 0");
  }
  if (!(w_cross_track > 0.0) || !(w_speed > 0.0) || !(crash_penalty > 0.0)) {
    throw DomainError("MPPI cost weights must be > 0");
  }
}

Target DynamicsModel::derivative(const Input& x) const {
  InputBatch b(kInputDim, 1);
  b.col(0) = x;
  return derivatives(b).col(0);
}

NetworkModel::NetworkModel(std::shared_ptr<const MlpParams> net, Standardizer standardizer)
    : net_(std::move(net)), standardizer_(std::move(standardizer)) {
  if (!net_) throw DomainError("network model needs a snapshot");
}

OutputBatch NetworkModel::derivatives(const InputBatch& x) const {
  const InputBatch z = (x.colwise() - standardizer_.in_mean).array().colwise() /
                       standardizer_.in_scale.array();
  OutputBatch out = net_->forward(z);
  out = (out.array().colwise() * standardizer_.out_scale.array()).matrix();
  out.colwise() += standardizer_.out_mean;
  return out;
}

GroundTruthModel::GroundTruthModel(VehicleParams p) : p_(p) { p_.validate(); }

OutputBatch GroundTruthModel::derivatives(const InputBatch& x) const {
  OutputBatch out(kOutputDim, x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const DynamicState dyn{x(0, i), x(1, i), x(2, i), x(3, i)};
    out.col(i) = dynamics_derivative(dyn, Control(x(4, i), x(5, i)), p_).vec();
  }
  return out;
}

namespace {

// Rollout costs; `truncated` marks rollouts ended by a non-finite model output.
std::vector<double> evaluate_rollouts(const DynamicsModel& model, const VehicleState& start,
                                      const std::vector<ControlSequence>& seqs,
                                      const Track& track, const MppiConfig& cfg,
                                      std::vector<char>& truncated) {
  const auto k = static_cast<Eigen::Index>(seqs.size());
  const std::size_t horizon = static_cast<std::size_t>(cfg.horizon);
  for (const auto& s : seqs) {
    if (s.size() != horizon) throw DomainError("control sequence length must equal the horizon");
  }
  if (!start.dyn.finite()) throw DomainError("rollout needs a finite start state");

  const double half_width = 0.5 * track.width();
  const double max_slip = cfg.max_slip_deg * std::numbers::pi / 180.0;
  const std::size_t hint0 = track.project(Vec2(start.kin.x_pos, start.kin.y_pos)).segment;

  std::vector<double> cost(seqs.size(), 0.0);
  std::vector<char> alive(seqs.size(), 1);
  truncated.assign(seqs.size(), 0);
  std::vector<std::size_t> hint(seqs.size(), hint0);
  Eigen::Matrix<double, 4, Eigen::Dynamic> dyn(4, k);
  Eigen::Matrix<double, 3, Eigen::Dynamic> kin(3, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    dyn.col(i) = start.dyn.vec();
    kin.col(i) << start.kin.x_pos, start.kin.y_pos, start.kin.heading;
  }

  InputBatch x(kInputDim, k);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const Control& u = seqs[static_cast<std::size_t>(i)][t];
      x.col(i) << dyn.col(i), u.steering(), u.throttle();
    }
    const OutputBatch deriv = model.derivatives(x);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto r = static_cast<std::size_t>(i);
      if (!alive[r]) continue;
      if (!deriv.col(i).allFinite()) {
        cost[r] += cfg.crash_penalty;
        alive[r] = 0;
        truncated[r] = 1;
        continue;
      }
      const double heading = kin(2, i);
      const double c = std::cos(heading);
      const double s = std::sin(heading);
      const double v_long = dyn(1, i);
      const double v_lat = dyn(2, i);
      kin(0, i) += (v_long * c - v_lat * s) * cfg.dt;
      kin(1, i) += (v_long * s + v_lat * c) * cfg.dt;
      kin(2, i) = wrap_angle(heading + dyn(3, i) * cfg.dt);
      dyn.col(i) += deriv.col(i) * cfg.dt;
      if (!dyn.col(i).allFinite()) {
        cost[r] += cfg.crash_penalty;
        alive[r] = 0;
        truncated[r] = 1;
        continue;
      }

      const Track::Projection proj =
          track.project(Vec2(kin(0, i), kin(1, i)), hint[r], cfg.track_search_window);
      hint[r] = proj.segment;
      const DynamicState next = DynamicState::from_vec(dyn.col(i));
      const double speed_err = next.v_long - cfg.target_speed;
      double step_cost = cfg.w_cross_track * proj.cross_track * proj.cross_track +
                         cfg.w_speed * speed_err * speed_err;
      if (std::abs(slip_angle(next)) > max_slip) step_cost += cfg.crash_penalty;
      if (std::abs(proj.cross_track) > half_width) step_cost += cfg.crash_penalty;
      cost[r] += step_cost;
    }
  }
  return cost;
}

}  // namespace

std::vector<double> rollout_costs(const DynamicsModel& model, const VehicleState& start,
                                  const std::vector<ControlSequence>& seqs, const Track& track,
                                  const MppiConfig& cfg) {
  std::vector<char> truncated;
  return evaluate_rollouts(model, start, seqs, track, cfg, truncated);
}

double rollout_cost(const DynamicsModel& model, const VehicleState& start,
                    const ControlSequence& seq, const Track& track, const MppiConfig& cfg) {
  return rollout_costs(model, start, {seq}, track, cfg).front();
}

MppiResult mppi_step(const DynamicsModel& model, const VehicleState& state,
                     const ControlSequence& prev_seq, const Track& track, const MppiConfig& cfg,
                     std::uint64_t seed) {
  cfg.validate();
  const std::size_t horizon = static_cast<std::size_t>(cfg.horizon);
  ControlSequence nominal = prev_seq;
  nominal.resize(horizon, prev_seq.empty() ? Control() : prev_seq.back());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ControlSequence> seqs(static_cast<std::size_t>(cfg.num_rollouts));
  seqs[0] = nominal;
  for (std::size_t k = 1; k < seqs.size(); ++k) {
    seqs[k].reserve(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
      const double ds = cfg.steer_noise * normal(rng);
      const double dth = cfg.throttle_noise * normal(rng);
      seqs[k].emplace_back(nominal[t].steering() + ds, nominal[t].throttle() + dth);
    }
  }

  std::vector<char> truncated;
  const std::vector<double> costs = evaluate_rollouts(model, state, seqs, track, cfg, truncated);
  MppiResult result;
  result.predictions = static_cast<long>(seqs.size()) * cfg.horizon;

  double min_cost = std::numeric_limits<double>::infinity();
  double sum_cost = 0.0;
  std::size_t finite = 0;
  for (double c : costs) {
    if (!std::isfinite(c)) continue;
    min_cost = std::min(min_cost, c);
    sum_cost += c;
    ++finite;
  }
  const bool all_truncated =
      std::all_of(truncated.begin(), truncated.end(), [](char c) { return c != 0; });
  if (finite == 0 || all_truncated) {
    result.emergency = true;
    result.control = Control(0.0, 0.0);
    result.averaged.assign(horizon, Control(0.0, 0.0));
    result.sequence = result.averaged;
    result.best_cost = std::numeric_limits<double>::infinity();
    result.mean_cost = std::numeric_limits<double>::infinity();
    return result;
  }
  result.best_cost = min_cost;
  result.mean_cost = sum_cost / static_cast<double>(finite);

  std::vector<double> weights(costs.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (!std::isfinite(costs[k])) continue;
    weights[k] = std::exp(-(costs[k] - min_cost) / cfg.temperature);
    total += weights[k];
  }
  result.weight_sum = 0.0;
  for (double& w : weights) {
    w /= total;
    result.weight_sum += w;
  }

  result.averaged.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    double s = 0.0;
    double th = 0.0;
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      s += weights[k] * seqs[k][t].steering();
      th += weights[k] * seqs[k][t].throttle();
    }
    result.averaged.emplace_back(s, th);
  }
  result.control = result.averaged.front();
  result.sequence.assign(result.averaged.begin() + 1, result.averaged.end());
  result.sequence.push_back(result.averaged.back());
  return result;
}

}  // namespace lwpr2
