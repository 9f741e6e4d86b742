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

#include "lwpr2/dynamics.hpp"
#include "lwpr2/mlp.hpp"
#include "lwpr2/standardizer.hpp"
#include "lwpr2/track.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace lwpr2 {

struct MppiConfig {
  int num_rollouts = 1024;
  int horizon = 60;
  double dt = 0.02;
  double temperature = 50.0;
  double steer_noise = 0.3;
  double throttle_noise = 0.3;
  double max_slip_deg = 13.0;
  double target_speed = 8.0;
  double w_cross_track = 10.0;
  double w_speed = 2.0;
  double crash_penalty = 1e6;
  std::size_t track_search_window = 6;

  void validate() const;
};

using ControlSequence = std::vector<Control>;

// Rate of change of the dynamic state for a batch of raw-unit inputs
// (dynamic state ++ control, one per column).
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual OutputBatch derivatives(const InputBatch& x) const = 0;
  Target derivative(const Input& x) const;
};

// Network snapshot plus the standardization it was trained under.
class NetworkModel final : public DynamicsModel {
 public:
  NetworkModel(std::shared_ptr<const MlpParams> net, Standardizer standardizer);
  OutputBatch derivatives(const InputBatch& x) const override;

 private:
  std::shared_ptr<const MlpParams> net_;
  Standardizer standardizer_;
};

// The simulator's own continuous dynamics.
class GroundTruthModel final : public DynamicsModel {
 public:
  explicit GroundTruthModel(VehicleParams p);
  OutputBatch derivatives(const InputBatch& x) const override;

 private:
  VehicleParams p_;
};

// Cost of one control sequence from `start`: per step
// w_cross_track*e^2 + w_speed*(v_long - target)^2, plus crash_penalty for
// every step with |slip| above max_slip_deg or outside the track boundary.
// A non-finite model output ends the rollout with one crash penalty.
double rollout_cost(const DynamicsModel& model, const VehicleState& start,
                    const ControlSequence& seq, const Track& track, const MppiConfig& cfg);

struct MppiResult {
  Control control;
  ControlSequence sequence;  // weighted average shifted by one step
  ControlSequence averaged;  // weighted average before the shift
  double best_cost = 0.0;
  double mean_cost = 0.0;
  double weight_sum = 0.0;   // of the normalized importance weights
  long predictions = 0;
  bool emergency = false;
};

// Samples num_rollouts perturbations of prev_seq (rollout 0 unperturbed),
// weights them by exp(-(cost - min)/temperature) and averages. When every
// rollout hits a non-finite model output the result is the emergency control:
// straight, zero throttle.
MppiResult mppi_step(const DynamicsModel& model, const VehicleState& state,
                     const ControlSequence& prev_seq, const Track& track, const MppiConfig& cfg,
                     std::uint64_t seed);

// Costs of a batch of sequences sharing one start state.
std::vector<double> rollout_costs(const DynamicsModel& model, const VehicleState& start,
                                  const std::vector<ControlSequence>& seqs, const Track& track,
                                  const MppiConfig& cfg);

}  // namespace lwpr2
