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

#include <string>

namespace lwpr2 {

// Position and heading in the world frame.
struct KinematicState {
  double x_pos = 0.0;
  double y_pos = 0.0;
  double heading = 0.0;  // wrapped to (-pi, pi]
};

// Roll, body-frame velocities and heading rate.
struct DynamicState {
  double roll = 0.0;
  double v_long = 0.0;
  double v_lat = 0.0;
  double heading_rate = 0.0;

  Eigen::Vector4d vec() const { return {roll, v_long, v_lat, heading_rate}; }
  static DynamicState from_vec(const Eigen::Vector4d& v) { return {v[0], v[1], v[2], v[3]}; }
  bool finite() const { return vec().allFinite(); }
  double speed() const { return std::hypot(v_long, v_lat); }
};

// Normalized steering and throttle commands, clamped to [-1, 1].
class Control {
 public:
  Control() = default;
  Control(double steering, double throttle);

  double steering() const { return steering_; }
  double throttle() const { return throttle_; }

 private:
  double steering_ = 0.0;
  double throttle_ = 0.0;
};

struct VehicleParams {
  double mass = 21.0;                 // kg
  double wheelbase = 0.57;            // m, center of mass at mid-wheelbase
  double friction_coeff = 0.9;
  double max_steer_angle = 0.4;       // rad at steering = 1
  double motor_gain = 6.0;            // m/s^2 per unit throttle at reference_mass
  double drag_coeff = 0.4;            // 1/s
  double roll_stiffness = 1.0;        // roll angle per unit lateral load ratio
  double com_height = 0.2;            // m
  double cornering_stiffness = 300.0; // N/rad per axle
  double roll_time_constant = 0.1;    // s
  double reference_mass = 21.0;       // kg, mass at which motor_gain is quoted
  double yaw_radius = 0.45;           // m, radius of gyration about the vertical axis

  // Throws DomainError when a field is out of range.
  void validate() const;
};

inline constexpr double kGravity = 9.81;
inline constexpr double kRolloverAngle = 1.5707963267948966;

// Vehicle regime change. Scale factors multiply the base parameters, added
// mass is applied after scaling.
struct RegimeSpec {
  enum class Kind { nominal, mud, worn_tires, custom };

  Kind kind = Kind::nominal;
  double friction_scale = 1.0;
  double mass_scale = 1.0;
  double cornering_scale = 1.0;
  double added_mass = 0.0;

  static RegimeSpec nominal() { return {}; }
  static RegimeSpec mud(double friction_factor = 0.6, double added_mass_kg = 10.0);
  static RegimeSpec worn_tires();
  static RegimeSpec custom(double friction_scale, double mass_scale, double cornering_scale = 1.0);

  // "nominal", "mud", "worn_tires" or "custom:<friction>,<mass>[,<cornering>]".
  static RegimeSpec parse(const std::string& text);
  std::string to_string() const;
};

VehicleParams apply_regime(const VehicleParams& p, const RegimeSpec& regime);

double wrap_angle(double angle);

// Continuous-time rate of change of the dynamic state.
//
// Bicycle model with the center of mass at mid-wheelbase. Each axle produces
// a lateral force F = -mu*Fz*tanh(C*alpha / (mu*Fz)): linear in the slip
// angle alpha for small slip and saturating at the friction limit mu*Fz. Slip
// angles are measured in each wheel's own frame with the longitudinal wheel
// speed floored at 1 m/s, so the tire force always opposes the wheel's
// lateral velocity. The motor applies motor_gain*reference_mass*throttle
// newtons at the rear axle and drag decelerates the longitudinal velocity by
// drag_coeff*v_long. Roll relaxes with roll_time_constant toward
// roll_stiffness*com_height*a_lat/g.
DynamicState dynamics_derivative(const DynamicState& dyn, const Control& u, const VehicleParams& p);

// Lateral acceleration produced by the tire forces.
double lateral_acceleration(const DynamicState& dyn, const Control& u, const VehicleParams& p);

// Kinematic rate of change given the current dynamic state.
KinematicState kinematic_derivative(const KinematicState& kin, const DynamicState& dyn);

struct VehicleState {
  KinematicState kin;
  DynamicState dyn;
};

// Explicit Euler step of both parts of the state.
VehicleState step(const KinematicState& kin, const DynamicState& dyn, const Control& u,
                  const VehicleParams& p, double dt);

// Angle between the velocity vector and the heading, zero below 0.5 m/s.
double slip_angle(const DynamicState& dyn);

inline bool is_rollover(const DynamicState& dyn) { return std::abs(dyn.roll) >= kRolloverAngle; }

}  // namespace lwpr2
