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


#include "lwpr2/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace lwpr2 {
namespace {

constexpr double kMinWheelSpeed = 1.0;

double tire_force(double slip, double stiffness, double peak) {
  return -peak * std::tanh(stiffness * slip / peak);
}

struct AxleForces {
  double front = 0.0;  // perpendicular to the front wheel
  double rear = 0.0;
  double delta = 0.0;  // front wheel angle
};

AxleForces axle_forces(const DynamicState& dyn, const Control& u, const VehicleParams& p) {
  const double half = 0.5 * p.wheelbase;
  const double delta = u.steering() * p.max_steer_angle;
  const double cd = std::cos(delta);
  const double sd = std::sin(delta);

  const double front_lat_body = dyn.v_lat + half * dyn.heading_rate;
  const double front_long = dyn.v_long * cd + front_lat_body * sd;
  const double front_lat = front_lat_body * cd - dyn.v_long * sd;
  const double front_slip = std::atan2(front_lat, std::max(std::abs(front_long), kMinWheelSpeed));

  const double rear_lat = dyn.v_lat - half * dyn.heading_rate;
  const double rear_slip = std::atan2(rear_lat, std::max(std::abs(dyn.v_long), kMinWheelSpeed));

  const double peak = p.friction_coeff * p.mass * kGravity * 0.5;
  return {tire_force(front_slip, p.cornering_stiffness, peak),
          tire_force(rear_slip, p.cornering_stiffness, peak), delta};
}

}  // namespace

Control::Control(double steering, double throttle)
    : steering_(std::clamp(steering, -1.0, 1.0)), throttle_(std::clamp(throttle, -1.0, 1.0)) {
  if (!std::isfinite(steering) || !std::isfinite(throttle)) {
    throw DomainError("control commands must be finite");
  }
}

void VehicleParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("invalid vehicle params: ") + what);
  };
  require(std::isfinite(mass) && mass > 0.0, "mass must be > 0");
  require(std::isfinite(wheelbase) && wheelbase > 0.0, "wheelbase must be > 0");
  require(friction_coeff > 0.0 && friction_coeff <= 2.0, "friction_coeff must be in (0, 2]");
  require(std::isfinite(com_height) && com_height > 0.0, "com_height must be > 0");
  require(std::isfinite(max_steer_angle) && max_steer_angle > 0.0, "max_steer_angle must be > 0");
  require(std::isfinite(motor_gain) && motor_gain >= 0.0, "motor_gain must be >= 0");
  require(std::isfinite(drag_coeff) && drag_coeff >= 0.0, "drag_coeff must be >= 0");
  require(std::isfinite(roll_stiffness), "roll_stiffness must be finite");
  require(std::isfinite(cornering_stiffness) && cornering_stiffness > 0.0,
          "cornering_stiffness must be > 0");
  require(std::isfinite(roll_time_constant) && roll_time_constant > 0.0,
          "roll_time_constant must be > 0");
  require(std::isfinite(reference_mass) && reference_mass > 0.0, "reference_mass must be > 0");
  require(std::isfinite(yaw_radius) && yaw_radius > 0.0, "yaw_radius must be > 0");
}

RegimeSpec RegimeSpec::mud(double friction_factor, double added_mass_kg) {
  if (!(friction_factor > 0.0) || !(added_mass_kg >= 0.0)) {
    throw DomainError("mud regime needs friction factor > 0 and added mass >= 0");
  }
  RegimeSpec r;
  r.kind = Kind::mud;
  r.friction_scale = friction_factor;
  r.added_mass = added_mass_kg;
  return r;
}

RegimeSpec RegimeSpec::worn_tires() {
  RegimeSpec r;
  r.kind = Kind::worn_tires;
  r.friction_scale = 0.8;
  r.cornering_scale = 0.8;
  return r;
}

RegimeSpec RegimeSpec::custom(double friction, double mass, double cornering) {
  if (!(friction > 0.0) || !(mass > 0.0) || !(cornering > 0.0)) {
    throw DomainError("regime scale factors must be > 0");
  }
  RegimeSpec r;
  r.kind = Kind::custom;
  r.friction_scale = friction;
  r.mass_scale = mass;
  r.cornering_scale = cornering;
  return r;
}

RegimeSpec RegimeSpec::parse(const std::string& text) {
  if (text == "nominal") return nominal();
  if (text == "mud") return mud();
  if (text == "worn_tires") return worn_tires();
  const std::string prefix = "custom:";
  if (text.rfind(prefix, 0) == 0) {
    std::vector<double> factors;
    std::stringstream ss(text.substr(prefix.size()));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        factors.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw DomainError("bad regime factor '" + item + "'");
      }
    }
    if (factors.size() == 2) return custom(factors[0], factors[1]);
    if (factors.size() == 3) return custom(factors[0], factors[1], factors[2]);
  }
  throw DomainError("unknown regime '" + text + "'");
}

std::string RegimeSpec::to_string() const {
  switch (kind) {
    case Kind::nominal:
      return "nominal";
    case Kind::mud:
      return "mud";
    case Kind::worn_tires:
      return "worn_tires";
    case Kind::custom:
      break;
  }
  std::ostringstream os;
  os.precision(17);
  os << "custom:" << friction_scale << "," << mass_scale << "," << cornering_scale;
  return os.str();
}

VehicleParams apply_regime(const VehicleParams& p, const RegimeSpec& regime) {
  if (!(regime.friction_scale > 0.0) || !(regime.mass_scale > 0.0) ||
      !(regime.cornering_scale > 0.0) || !(regime.added_mass >= 0.0)) {
    throw DomainError("regime scale factors must be > 0");
  }
  VehicleParams out = p;
  out.friction_coeff = std::min(2.0, p.friction_coeff * regime.friction_scale);
  out.mass = p.mass * regime.mass_scale + regime.added_mass;
  out.cornering_stiffness = p.cornering_stiffness * regime.cornering_scale;
  out.validate();
  return out;
}

double wrap_angle(double angle) {
  double w = std::remainder(angle, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

DynamicState dynamics_derivative(const DynamicState& dyn, const Control& u, const VehicleParams& p) {
  const AxleForces f = axle_forces(dyn, u, p);
  const double half = 0.5 * p.wheelbase;
  const double inertia = p.mass * p.yaw_radius * p.yaw_radius;
  const double cd = std::cos(f.delta);
  const double sd = std::sin(f.delta);

  const double drive = p.motor_gain * p.reference_mass * u.throttle();
  const double a_long = (drive - f.front * sd) / p.mass;
  const double a_lat = (f.front * cd + f.rear) / p.mass;

  DynamicState d;
  d.v_long = a_long + dyn.v_lat * dyn.heading_rate - p.drag_coeff * dyn.v_long;
  d.v_lat = a_lat - dyn.v_long * dyn.heading_rate;
  d.heading_rate = half * (f.front * cd - f.rear) / inertia;
  const double roll_target = p.roll_stiffness * p.com_height * a_lat / kGravity;
  d.roll = (roll_target - dyn.roll) / p.roll_time_constant;
  return d;
}

double lateral_acceleration(const DynamicState& dyn, const Control& u, const VehicleParams& p) {
  const AxleForces f = axle_forces(dyn, u, p);
  return (f.front * std::cos(f.delta) + f.rear) / p.mass;
}

KinematicState kinematic_derivative(const KinematicState& kin, const DynamicState& dyn) {
  const double c = std::cos(kin.heading);
  const double s = std::sin(kin.heading);
  return {dyn.v_long * c - dyn.v_lat * s, dyn.v_long * s + dyn.v_lat * c, dyn.heading_rate};
}

VehicleState step(const KinematicState& kin, const DynamicState& dyn, const Control& u,
                  const VehicleParams& p, double dt) {
  if (!(dt > 0.0 && dt <= 0.1)) throw DomainError("dt must be in (0, 0.1]");
  if (!dyn.finite() || !std::isfinite(kin.x_pos) || !std::isfinite(kin.y_pos) ||
      !std::isfinite(kin.heading)) {
    throw DomainError("non-finite vehicle state");
  }
  p.validate();

  const KinematicState dk = kinematic_derivative(kin, dyn);
  const DynamicState dd = dynamics_derivative(dyn, u, p);

  VehicleState next;
  next.kin.x_pos = kin.x_pos + dk.x_pos * dt;
  next.kin.y_pos = kin.y_pos + dk.y_pos * dt;
  next.kin.heading = wrap_angle(kin.heading + dk.heading * dt);
  next.dyn.roll = dyn.roll + dd.roll * dt;
  next.dyn.v_long = dyn.v_long + dd.v_long * dt;
  next.dyn.v_lat = dyn.v_lat + dd.v_lat * dt;
  next.dyn.heading_rate = dyn.heading_rate + dd.heading_rate * dt;
  return next;
}

double slip_angle(const DynamicState& dyn) {
  if (dyn.speed() < 0.5) return 0.0;
  return std::atan2(dyn.v_lat, std::abs(dyn.v_long));
}

}  // namespace lwpr2
