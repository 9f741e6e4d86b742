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


#include "lwpr2/driver.hpp"

#include <algorithm>
#include <cmath>

namespace lwpr2 {

double hold_throttle(double speed, const VehicleParams& p) {
  const double accel_per_throttle = p.motor_gain * p.reference_mass / p.mass;
  return p.drag_coeff * speed / accel_per_throttle;
}

Control scripted_driver(const Track& track, double target_speed, const KinematicState& kin,
                        const DynamicState& dyn, const VehicleParams& p, const DriverConfig& cfg) {
  const Vec2 pos(kin.x_pos, kin.y_pos);
  const Track::Projection proj = track.project(pos);
  if (std::abs(proj.cross_track) > cfg.capture_radius) {
    throw DriverLost("vehicle left the capture radius of the track");
  }

  const double lookahead = cfg.lookahead_min + cfg.lookahead_time * std::max(0.0, dyn.v_long);
  const Vec2 target = track.point_at(proj.s + lookahead);
  const Vec2 d = target - pos;
  const double c = std::cos(kin.heading);
  const double s = std::sin(kin.heading);
  const double local_x = c * d.x() + s * d.y();
  const double local_y = -s * d.x() + c * d.y();
  const double dist = std::max(1e-6, std::hypot(local_x, local_y));
  const double curvature = 2.0 * local_y / (dist * dist);
  const double wheel_angle = std::atan(p.wheelbase * curvature);

  const double throttle =
      hold_throttle(target_speed, p) + cfg.speed_gain * (target_speed - dyn.v_long);
  return Control(wheel_angle / p.max_steer_angle, throttle);
}

}  // namespace lwpr2
