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

#include "lwpr2/driver.hpp"
#include "lwpr2/dynamics.hpp"
#include "lwpr2/track.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>

namespace lwpr2 {

inline constexpr double kDefaultDt = 0.02;  // 50 Hz

// Turns a stream of true dynamic states and applied controls into training
// pairs. Each observed state gets zero-mean Gaussian noise with standard
// deviation noise_fraction times the running RMS of its channel; targets are
// finite differences of consecutive noisy states.
class StreamRecorder {
 public:
  StreamRecorder(double dt, double noise_fraction, std::uint64_t seed);

  // Observes the state at time t and the control applied from it. Returns the
  // pair formed with the previous observation, if any.
  std::optional<TrainingPair> push(const DynamicState& state, const Control& u, double t);

  const Eigen::Vector4d& last_observation() const { return last_obs_; }

 private:
  double dt_;
  double noise_fraction_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  Eigen::Vector4d sum_sq_ = Eigen::Vector4d::Zero();
  long count_ = 0;
  bool has_prev_ = false;
  Eigen::Vector4d last_obs_ = Eigen::Vector4d::Zero();
  Control last_u_;
  double last_t_ = 0.0;
};

enum class Termination { completed, rollover, driver_lost, timeout };

std::string to_string(Termination t);

struct DriveOptions {
  int laps = 1;
  double target_speed = 4.0;
  double dt = kDefaultDt;
  double noise_fraction = 0.0;
  std::uint64_t seed = 0;
  DriverConfig driver;
  // Ornstein-Uhlenbeck perturbation added to the driver's commands.
  double steer_dither = 0.0;
  double throttle_dither = 0.0;
  double dither_time_constant = 0.5;
  // Episode ends after timeout_factor * laps * length / target_speed seconds.
  double timeout_factor = 3.0;
};

struct DatasetResult {
  Dataset pairs;
  Termination termination = Termination::completed;
  int laps_completed = 0;
  double duration = 0.0;
  std::vector<double> lap_times;
};

// Closed-loop scripted laps around the track. Rollover, driver loss and
// timeout end the episode early with the partial dataset.
DatasetResult generate_dataset(const Track& track, const VehicleParams& base,
                               const RegimeSpec& regime, const DriveOptions& opts);

// Constant-steering circle at a held speed for `duration` seconds.
DatasetResult generate_skidpad(const VehicleParams& base, const RegimeSpec& regime,
                               double steering, double speed, double duration,
                               const DriveOptions& opts);

// JSON Lines, one {"t": .., "x": [6], "y": [4]} object per pair with 17
// significant digits.
void write_jsonl(std::ostream& out, const Dataset& data);
Dataset read_jsonl(std::istream& in);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace lwpr2
