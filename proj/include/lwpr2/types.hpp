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

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lwpr2 {

inline constexpr int kInputDim = 6;
inline constexpr int kOutputDim = 4;

using Vec2 = Eigen::Vector2d;
// (roll, v_long, v_lat, heading_rate, steering, throttle)
using Input = Eigen::Matrix<double, kInputDim, 1>;
// (roll rate, longitudinal acc, lateral acc, heading acc)
using Target = Eigen::Matrix<double, kOutputDim, 1>;

inline constexpr const char* kChannelNames[kOutputDim] = {
    "roll_rate", "longitudinal_acc", "lateral_acc", "heading_acc"};

// One sample of the learning problem: input is dynamic state plus control,
// target is the finite-difference derivative of the dynamic state.
struct TrainingPair {
  Input x = Input::Zero();
  Target y = Target::Zero();
  double t = 0.0;
  bool synthetic = false;

  bool finite() const { return x.allFinite() && y.allFinite() && std::isfinite(t); }
};

using Dataset = std::vector<TrainingPair>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs outside an operation's domain (non-finite values, bad parameters).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace lwpr2
