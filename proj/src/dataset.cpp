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


#include "lwpr2/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace lwpr2 {

StreamRecorder::StreamRecorder(double dt, double noise_fraction, std::uint64_t seed)
    : dt_(dt), noise_fraction_(noise_fraction), rng_(seed) {
  if (!(dt > 0.0)) throw DomainError("recorder dt must be > 0");
  if (!(noise_fraction >= 0.0)) throw DomainError("noise fraction must be >= 0");
}

std::optional<TrainingPair> StreamRecorder::push(const DynamicState& state, const Control& u,
                                                 double t) {
  const Eigen::Vector4d z = state.vec();
  sum_sq_ += z.cwiseAbs2();
  ++count_;
  Eigen::Vector4d obs = z;
  if (noise_fraction_ > 0.0) {
    for (int j = 0; j < 4; ++j) {
      const double scale = std::sqrt(sum_sq_[j] / static_cast<double>(count_));
      obs[j] += noise_fraction_ * scale * normal_(rng_);
    }
  }

  std::optional<TrainingPair> out;
  if (has_prev_) {
    TrainingPair pair;
    pair.x << last_obs_, last_u_.steering(), last_u_.throttle();
    pair.y = (obs - last_obs_) / dt_;
    pair.t = last_t_;
    out = pair;
  }
  has_prev_ = true;
  last_obs_ = obs;
  last_u_ = u;
  last_t_ = t;
  return out;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::completed:
      return "completed";
    case Termination::rollover:
      return "rollover";
    case Termination::driver_lost:
      return "driver_lost";
    case Termination::timeout:
      return "timeout";
  }
  return "unknown";
}

namespace {

class Dither {
 public:
  Dither(double sigma, double tau, double dt) : sigma_(sigma), decay_(dt / tau) {
    gain_ = sigma * std::sqrt(2.0 * dt / tau);
  }
  double next(std::mt19937_64& rng) {
    if (sigma_ <= 0.0) return 0.0;
    value_ += -decay_ * value_ + gain_ * normal_(rng);
    return value_;
  }

 private:
  double sigma_;
  double decay_;
  double gain_ = 0.0;
  double value_ = 0.0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace

DatasetResult generate_dataset(const Track& track, const VehicleParams& base,
                               const RegimeSpec& regime, const DriveOptions& opts) {
  if (opts.laps < 1) throw DomainError("laps must be >= 1");
  if (!(opts.target_speed > 0.0)) throw DomainError("target speed must be > 0");
  const VehicleParams p = apply_regime(base, regime);

  VehicleState state;
  const Vec2 start = track.point_at(0.0);
  state.kin = {start.x(), start.y(), wrap_angle(track.heading_at(0.0))};
  state.dyn.v_long = opts.target_speed;

  // Independent streams for sensor noise and control dither.
  StreamRecorder recorder(opts.dt, opts.noise_fraction, opts.seed);
  std::mt19937_64 dither_rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  Dither steer_dither(opts.steer_dither, opts.dither_time_constant, opts.dt);
  Dither throttle_dither(opts.throttle_dither, opts.dither_time_constant, opts.dt);

  LapCounter laps(track, track.project(start).s);
  DatasetResult result;
  const double timeout =
      opts.timeout_factor * opts.laps * track.length() / opts.target_speed;
  double t = 0.0;
  double lap_start = 0.0;
  long steps = 0;
  while (true) {
    Control u;
    try {
      const Control c = scripted_driver(track, opts.target_speed, state.kin, state.dyn, p,
                                        opts.driver);
      u = Control(c.steering() + steer_dither.next(dither_rng),
                  c.throttle() + throttle_dither.next(dither_rng));
    } catch (const DriverLost&) {
      result.termination = Termination::driver_lost;
      break;
    }
    if (auto pair = recorder.push(state.dyn, u, t)) result.pairs.push_back(*pair);

    state = step(state.kin, state.dyn, u, p, opts.dt);
    ++steps;
    t = steps * opts.dt;
    if (is_rollover(state.dyn)) {
      if (auto pair = recorder.push(state.dyn, u, t)) result.pairs.push_back(*pair);
      result.termination = Termination::rollover;
      break;
    }
    if (laps.update(track.project(Vec2(state.kin.x_pos, state.kin.y_pos)).s)) {
      result.lap_times.push_back(t - lap_start);
      lap_start = t;
      if (laps.laps() >= opts.laps) {
        if (auto pair = recorder.push(state.dyn, Control(), t)) result.pairs.push_back(*pair);
        result.termination = Termination::completed;
        break;
      }
    }
    if (t > timeout) {
      result.termination = Termination::timeout;
      break;
    }
  }
  result.laps_completed = laps.laps();
  result.duration = t;
  return result;
}

DatasetResult generate_skidpad(const VehicleParams& base, const RegimeSpec& regime,
                               double steering, double speed, double duration,
                               const DriveOptions& opts) {
  if (!(duration > 0.0)) throw DomainError("skidpad duration must be > 0");
  const VehicleParams p = apply_regime(base, regime);
  VehicleState state;
  state.dyn.v_long = speed;
  StreamRecorder recorder(opts.dt, opts.noise_fraction, opts.seed);
  std::mt19937_64 dither_rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  Dither steer_dither(opts.steer_dither, opts.dither_time_constant, opts.dt);
  Dither throttle_dither(opts.throttle_dither, opts.dither_time_constant, opts.dt);

  DatasetResult result;
  const long total = static_cast<long>(std::llround(duration / opts.dt));
  for (long k = 0; k < total; ++k) {
    const double t = k * opts.dt;
    const double throttle =
        hold_throttle(speed, p) + opts.driver.speed_gain * (speed - state.dyn.v_long);
    const Control u(steering + steer_dither.next(dither_rng),
                    throttle + throttle_dither.next(dither_rng));
    if (auto pair = recorder.push(state.dyn, u, t)) result.pairs.push_back(*pair);
    state = step(state.kin, state.dyn, u, p, opts.dt);
    if (is_rollover(state.dyn)) {
      result.termination = Termination::rollover;
      result.duration = (k + 1) * opts.dt;
      return result;
    }
  }
  if (auto pair = recorder.push(state.dyn, Control(), total * opts.dt)) {
    result.pairs.push_back(*pair);
  }
  result.duration = total * opts.dt;
  return result;
}

void write_jsonl(std::ostream& out, const Dataset& data) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const TrainingPair& p : data) {
    out << "{\"t\": ";
    num(p.t);
    out << ", \"x\": [";
    for (int i = 0; i < kInputDim; ++i) {
      if (i) out << ", ";
      num(p.x[i]);
    }
    out << "], \"y\": [";
    for (int i = 0; i < kOutputDim; ++i) {
      if (i) out << ", ";
      num(p.y[i]);
    }
    out << "]}\n";
  }
}

Dataset read_jsonl(std::istream& in) {
  Dataset data;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      TrainingPair p;
      p.t = j.at("t").get<double>();
      const auto& x = j.at("x");
      const auto& y = j.at("y");
      if (x.size() != kInputDim || y.size() != kOutputDim) throw Error("wrong vector length");
      for (int i = 0; i < kInputDim; ++i) p.x[i] = x.at(i).get<double>();
      for (int i = 0; i < kOutputDim; ++i) p.y[i] = y.at(i).get<double>();
      data.push_back(p);
    } catch (const std::exception& e) {
      throw Error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset " + path);
  write_jsonl(out, data);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path);
  return read_jsonl(in);
}

}  // namespace lwpr2
