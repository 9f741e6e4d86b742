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
#include "lwpr2/track.hpp"

namespace lwpr2 {

struct DriverConfig {
  double lookahead_min = 1.2;   // m
  double lookahead_time = 0.35; // s of travel added to the lookahead distance
  double speed_gain = 0.5;      // throttle per m/s of speed error
  double capture_radius = 3.0;  // m from the centerline
};

// Raised when the vehicle is farther than the capture radius from the track.
class DriverLost : public Error {
 public:
  using Error::Error;
};

// Pure-pursuit steering toward a lookahead point on the centerline plus
// feedforward/proportional throttle. The direction of travel is the one the
// track was built with.
Control scripted_driver(const Track& track, double target_speed, const KinematicState& kin,
                        const DynamicState& dyn, const VehicleParams& p,
                        const DriverConfig& cfg = {});

// Throttle that holds v_long at `speed` against drag on a straight line.
double hold_throttle(double speed, const VehicleParams& p);

}  // namespace lwpr2
