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


#include "lwpr2/experiment.hpp"

#include "lwpr2/serialize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace lwpr2 {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names) out.push_back(parse_method(n));
  return out;
}

std::vector<std::string> method_names(const std::vector<Method>& methods) {
  std::vector<std::string> out;
  for (Method m : methods) out.push_back(to_string(m));
  return out;
}

ScenarioConfig read_scenario(const Config& cfg, const std::string& prefix, ScenarioConfig s) {
  s.direction = parse_direction(cfg.get_string(prefix + ".direction", to_string(s.direction)));
  s.laps = static_cast<int>(cfg.get_int(prefix + ".laps", s.laps));
  s.speed = cfg.get_double(prefix + ".speed", s.speed);
  s.regime = RegimeSpec::parse(cfg.get_string(prefix + ".regime", s.regime.to_string()));
  s.steer_dither = cfg.get_double(prefix + ".steer_dither", s.steer_dither);
  s.throttle_dither = cfg.get_double(prefix + ".throttle_dither", s.throttle_dither);
  return s;
}

void validate_scenario(const ScenarioConfig& s, const std::string& name) {
  if (s.laps < 1) throw ConfigError(name + ".laps must be >= 1");
  if (!(s.speed > 0.0)) throw ConfigError(name + ".speed must be > 0");
  if (s.steer_dither < 0.0 || s.throttle_dither < 0.0) {
    throw ConfigError(name + " dither must be >= 0");
  }
}

std::string file_in(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

double mean_alpha(const std::vector<StepReport>& steps) {
  double sum = 0.0;
  long n = 0;
  for (const auto& s : steps) {
    if (s.skipped) continue;
    sum += s.alpha;
    ++n;
  }
  return n == 0 ? 1.0 : sum / static_cast<double>(n);
}

long skipped_steps(const std::vector<StepReport>& steps) {
  return std::count_if(steps.begin(), steps.end(), [](const StepReport& s) { return s.skipped; });
}

MethodResult summarize(OnlineRun& run) {
  MethodResult r;
  r.method = run.method;
  r.online = run.metrics;
  r.steps = run.trainer.steps();
  r.skipped = skipped_steps(run.steps);
  r.mean_alpha = mean_alpha(run.steps);
  r.seconds = run.seconds;
  r.step_reports = std::move(run.steps);
  return r;
}

Predictor predictor_of(const Trainer& t) {
  return [&t](const Input& x) { return t.predict(x); };
}

}  // namespace

Mode parse_mode(const std::string& text) {
  if (text == "offline") return Mode::offline;
  if (text == "online") return Mode::online;
  if (text == "active") return Mode::active;
  throw ConfigError("unknown mode '" + text + "'");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::offline:
      return "offline";
    case Mode::online:
      return "online";
    case Mode::active:
      return "active";
  }
  return "unknown";
}

TrackSpec TrackConfig::build() const {
  if (!path.empty()) return load_track(path);
  return make_elliptical_track(semi_major, semi_minor, waypoints, width);
}

ExperimentSpec ExperimentSpec::from_config(const Config& cfg) {
  ExperimentSpec s;
  s.mode = parse_mode(cfg.get_string("mode", to_string(s.mode)));
  s.protocol = cfg.get_string("protocol", s.protocol);
  s.seed = cfg.get_uint("seed", s.seed);
  s.methods = parse_methods(cfg.get_list("methods", method_names(s.methods)));
  s.output_dir = cfg.get_string("output_dir", s.output_dir);
  s.init_path = cfg.get_string("init_path", s.init_path);
  s.dataset_path = cfg.get_string("dataset_path", s.dataset_path);

  s.dt = cfg.get_double("sim.dt", s.dt);
  s.noise_fraction = cfg.get_double("sim.noise_fraction", s.noise_fraction);

  VehicleParams& v = s.vehicle;
  v.mass = cfg.get_double("vehicle.mass", v.mass);
  v.wheelbase = cfg.get_double("vehicle.wheelbase", v.wheelbase);
  v.friction_coeff = cfg.get_double("vehicle.friction_coeff", v.friction_coeff);
  v.max_steer_angle = cfg.get_double("vehicle.max_steer_angle", v.max_steer_angle);
  v.motor_gain = cfg.get_double("vehicle.motor_gain", v.motor_gain);
  v.drag_coeff = cfg.get_double("vehicle.drag_coeff", v.drag_coeff);
  v.roll_stiffness = cfg.get_double("vehicle.roll_stiffness", v.roll_stiffness);
  v.com_height = cfg.get_double("vehicle.com_height", v.com_height);
  v.cornering_stiffness = cfg.get_double("vehicle.cornering_stiffness", v.cornering_stiffness);
  v.roll_time_constant = cfg.get_double("vehicle.roll_time_constant", v.roll_time_constant);
  v.reference_mass = cfg.get_double("vehicle.reference_mass", v.reference_mass);
  v.yaw_radius = cfg.get_double("vehicle.yaw_radius", v.yaw_radius);

  DriverConfig& d = s.driver;
  d.lookahead_min = cfg.get_double("driver.lookahead_min", d.lookahead_min);
  d.lookahead_time = cfg.get_double("driver.lookahead_time", d.lookahead_time);
  d.speed_gain = cfg.get_double("driver.speed_gain", d.speed_gain);
  d.capture_radius = cfg.get_double("driver.capture_radius", d.capture_radius);

  TrackConfig& t = s.track;
  t.semi_major = cfg.get_double("track.semi_major", t.semi_major);
  t.semi_minor = cfg.get_double("track.semi_minor", t.semi_minor);
  t.waypoints = static_cast<int>(cfg.get_int("track.waypoints", t.waypoints));
  t.width = cfg.get_double("track.width", t.width);
  t.path = cfg.get_string("track.path", t.path);

  SysidConfig& y = s.sysid;
  y.laps = static_cast<int>(cfg.get_int("sysid.laps", y.laps));
  y.speeds = cfg.get_doubles("sysid.speeds", y.speeds);
  y.regime = RegimeSpec::parse(cfg.get_string("sysid.regime", y.regime.to_string()));
  y.steer_dither = cfg.get_double("sysid.steer_dither", y.steer_dither);
  y.throttle_dither = cfg.get_double("sysid.throttle_dither", y.throttle_dither);
  y.skidpad_steering = cfg.get_doubles("sysid.skidpad_steering", y.skidpad_steering);
  y.skidpad_speeds = cfg.get_doubles("sysid.skidpad_speeds", y.skidpad_speeds);
  y.skidpad_duration = cfg.get_double("sysid.skidpad_duration", y.skidpad_duration);
  y.path = cfg.get_string("sysid.path", y.path);

  InitConfig& i = s.init;
  i.lwpr.w_gen = cfg.get_double("init.w_gen", i.lwpr.w_gen);
  i.lwpr.forgetting = cfg.get_double("init.forgetting", i.lwpr.forgetting);
  i.lwpr.ridge = cfg.get_double("init.ridge", i.lwpr.ridge);
  i.lwpr.activation_cutoff = cfg.get_double("init.activation_cutoff", i.lwpr.activation_cutoff);
  i.metric_fraction = cfg.get_double("init.metric_fraction", i.metric_fraction);
  i.lwpr_epochs = static_cast<int>(cfg.get_int("init.lwpr_epochs", i.lwpr_epochs));
  i.gmm_k_min = static_cast<int>(cfg.get_int("init.gmm_k_min", i.gmm_k_min));
  i.gmm_k_max = static_cast<int>(cfg.get_int("init.gmm_k_max", i.gmm_k_max));
  i.gmm_restarts = static_cast<int>(cfg.get_int("init.gmm_restarts", i.gmm_restarts));
  i.gmm_max_points = static_cast<std::size_t>(
      cfg.get_int("init.gmm_max_points", static_cast<long>(i.gmm_max_points)));
  i.em.tol = cfg.get_double("init.em_tol", i.em.tol);
  i.em.max_iter = static_cast<int>(cfg.get_int("init.em_max_iter", i.em.max_iter));
  i.net_steps = cfg.get_int("init.net_steps", i.net_steps);
  i.net_lr = cfg.get_double("init.net_lr", i.net_lr);
  i.real_batch = static_cast<int>(cfg.get_int("init.real_batch", i.real_batch));
  i.synth_batch = static_cast<int>(cfg.get_int("init.synth_batch", i.synth_batch));

  TrainerConfig& tc = s.trainer;
  tc.lr = cfg.get_double("trainer.lr", tc.lr);
  tc.real_batch = static_cast<int>(cfg.get_int("trainer.real_batch", tc.real_batch));
  tc.synth_batch = static_cast<int>(cfg.get_int("trainer.synth_batch", tc.synth_batch));
  tc.updates_per_ingest =
      static_cast<int>(cfg.get_int("trainer.updates_per_ingest", tc.updates_per_ingest));
  tc.ring_capacity = static_cast<std::size_t>(
      cfg.get_int("trainer.ring_capacity", static_cast<long>(tc.ring_capacity)));

  s.stream = read_scenario(cfg, "stream", s.stream);
  s.stream_path = cfg.get_string("stream.path", s.stream_path);
  s.interference = read_scenario(cfg, "interference", s.interference);
  s.validation = read_scenario(cfg, "validation", s.validation);
  s.mud = read_scenario(cfg, "mud", s.mud);
  s.mud_contrast = cfg.get_bool("mud.contrast", s.mud_contrast);

  ActiveConfig& a = s.active;
  a.trials = static_cast<int>(cfg.get_int("active.trials", a.trials));
  a.laps = static_cast<int>(cfg.get_int("active.laps", a.laps));
  a.regime = RegimeSpec::parse(cfg.get_string("active.regime", a.regime.to_string()));
  a.direction = parse_direction(cfg.get_string("active.direction", to_string(a.direction)));
  a.control_period = static_cast<int>(cfg.get_int("active.control_period", a.control_period));
  a.start_speed = cfg.get_double("active.start_speed", a.start_speed);
  a.timeout_factor = cfg.get_double("active.timeout_factor", a.timeout_factor);
  a.telemetry = cfg.get_bool("active.telemetry", a.telemetry);
  s.active_methods = parse_methods(cfg.get_list("active.methods", method_names(s.active_methods)));

  MppiConfig& m = s.mppi;
  m.num_rollouts = static_cast<int>(cfg.get_int("mppi.rollouts", m.num_rollouts));
  m.horizon = static_cast<int>(cfg.get_int("mppi.horizon", m.horizon));
  m.dt = cfg.get_double("mppi.dt", m.dt);
  m.temperature = cfg.get_double("mppi.temperature", m.temperature);
  m.steer_noise = cfg.get_double("mppi.steer_noise", m.steer_noise);
  m.throttle_noise = cfg.get_double("mppi.throttle_noise", m.throttle_noise);
  m.max_slip_deg = cfg.get_double("mppi.max_slip_deg", m.max_slip_deg);
  m.target_speed = cfg.get_double("mppi.target_speed", m.target_speed);
  m.w_cross_track = cfg.get_double("mppi.w_cross_track", m.w_cross_track);
  m.w_speed = cfg.get_double("mppi.w_speed", m.w_speed);
  m.crash_penalty = cfg.get_double("mppi.crash_penalty", m.crash_penalty);

  SoakConfig& k = s.soak;
  k.minutes = cfg.get_double("soak.minutes", k.minutes);
  k.segment_minutes = cfg.get_double("soak.segment_minutes", k.segment_minutes);
  if (cfg.has("soak.regimes")) {
    k.regimes.clear();
    for (const auto& r : cfg.get_list("soak.regimes", {})) k.regimes.push_back(RegimeSpec::parse(r));
  }
  k.checkpoints = static_cast<int>(cfg.get_int("soak.checkpoints", k.checkpoints));
  k.speed = cfg.get_double("soak.speed", k.speed);
  k.method = parse_method(cfg.get_string("soak.method", to_string(k.method)));
  k.compare_sgd = cfg.get_bool("soak.compare_sgd", k.compare_sgd);
  k.straddle_window = static_cast<int>(cfg.get_int("soak.straddle_window", k.straddle_window));
  k.switch_window = static_cast<int>(cfg.get_int("soak.switch_window", k.switch_window));

  const auto unused = cfg.unused_keys();
  if (!unused.empty()) {
    std::string msg = "unknown config key(s):";
    for (const auto& u : unused) msg += " " + u;
    throw ConfigError(msg);
  }
  s.validate();
  return s;
}

void ExperimentSpec::validate() const {
  if (!(dt > 0.0 && dt <= 0.1)) throw ConfigError("sim.dt must be in (0, 0.1]");
  if (!(noise_fraction >= 0.0)) throw ConfigError("sim.noise_fraction must be >= 0");
  if (methods.empty()) throw ConfigError("methods must list at least one method");
  vehicle.validate();
  if (track.path.empty()) {
    if (!(track.semi_major > 0.0 && track.semi_minor > 0.0 && track.width > 0.0) ||
        track.waypoints < 8) {
      throw ConfigError("track needs positive axes and width and >= 8 waypoints");
    }
  }
  if (sysid.path.empty()) {
    if (sysid.laps < 1 || sysid.speeds.empty()) {
      throw ConfigError("sysid needs laps >= 1 and at least one speed");
    }
    for (double v : sysid.speeds) {
      if (!(v > 0.0)) throw ConfigError("sysid.speeds must be > 0");
    }
  }
  TrainerConfig probe = trainer;
  probe.validate();
  if (init.net_steps < 0 || init.lwpr_epochs < 1 || init.gmm_k_min < 1 ||
      init.gmm_k_max < init.gmm_k_min || init.gmm_restarts < 1) {
    throw ConfigError("init settings out of range");
  }

  const bool known = (mode == Mode::offline && protocol == "stream") ||
                     (mode == Mode::online && (protocol == "stream" || protocol == "interference" ||
                                               protocol == "mud" || protocol == "soak")) ||
                     (mode == Mode::active && protocol == "active");
  if (!known) throw ConfigError("protocol '" + protocol + "' is not valid in " + to_string(mode) + " mode");

  if (mode == Mode::offline) {
    for (Method m : methods) {
      if (m != Method::none && m != Method::lwpr_only) {
        throw ConfigError("offline mode evaluates frozen models only (methods: base, lwpr-only)");
      }
    }
  }
  validate_scenario(stream, "stream");
  validate_scenario(interference, "interference");
  validate_scenario(validation, "validation");
  validate_scenario(mud, "mud");

  if (mode == Mode::active) {
    mppi.validate();
    if (active.trials < 1 || active.laps < 1 || active.control_period < 1) {
      throw ConfigError("active trials, laps and control_period must be >= 1");
    }
    if (std::abs(mppi.dt - active.control_period * dt) > 1e-12) {
      throw ConfigError("mppi.dt must equal active.control_period * sim.dt");
    }
    if (!(active.start_speed >= 0.0) || !(active.timeout_factor > 0.0)) {
      throw ConfigError("active start_speed must be >= 0 and timeout_factor > 0");
    }
    if (active_methods.empty()) throw ConfigError("active.methods must not be empty");
  }
  if (protocol == "soak") {
    if (!(soak.minutes > 0.0) || !(soak.segment_minutes > 0.0) || soak.regimes.empty() ||
        soak.checkpoints < 1 || !(soak.speed > 0.0) || soak.straddle_window < 2 ||
        soak.switch_window < 1) {
      throw ConfigError("soak settings out of range");
    }
  }
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

DatasetResult generate_stream(const ExperimentSpec& spec, const ScenarioConfig& scenario,
                              const std::string& tag) {
  const Track track(spec.track.build(), scenario.direction);
  DriveOptions opts;
  opts.laps = scenario.laps;
  opts.target_speed = scenario.speed;
  opts.dt = spec.dt;
  opts.noise_fraction = spec.noise_fraction;
  opts.seed = derive_seed(spec.seed, tag);
  opts.driver = spec.driver;
  opts.steer_dither = scenario.steer_dither;
  opts.throttle_dither = scenario.throttle_dither;
  return generate_dataset(track, spec.vehicle, scenario.regime, opts);
}

Dataset build_sysid(const ExperimentSpec& spec) {
  if (!spec.sysid.path.empty()) return load_dataset(spec.sysid.path);
  const SysidConfig& y = spec.sysid;
  Dataset out;
  for (Direction dir : {Direction::cw, Direction::ccw}) {
    for (std::size_t i = 0; i < y.speeds.size(); ++i) {
      const ScenarioConfig sc{dir, y.laps, y.speeds[i], y.regime, y.steer_dither, y.throttle_dither};
      const std::string tag = "sysid-" + to_string(dir) + "-" + std::to_string(i);
      DatasetResult r = generate_stream(spec, sc, tag);
      if (r.termination != Termination::completed) {
        std::clog << "warning: sysid episode " << tag << " ended early ("
                  << to_string(r.termination) << ")\n";
      }
      out.insert(out.end(), r.pairs.begin(), r.pairs.end());
    }
  }
  int index = 0;
  for (double steer : y.skidpad_steering) {
    for (double sign : {1.0, -1.0}) {
      for (double speed : y.skidpad_speeds) {
        DriveOptions opts;
        opts.dt = spec.dt;
        opts.noise_fraction = spec.noise_fraction;
        opts.seed = derive_seed(spec.seed, "sysid-skidpad-" + std::to_string(index++));
        opts.steer_dither = y.steer_dither;
        opts.throttle_dither = y.throttle_dither;
        DatasetResult r =
            generate_skidpad(spec.vehicle, y.regime, sign * steer, speed, y.skidpad_duration, opts);
        out.insert(out.end(), r.pairs.begin(), r.pairs.end());
      }
    }
  }
  if (out.empty()) throw Error("sysid dataset is empty");
  return out;
}

InitConfig init_config(const ExperimentSpec& spec) {
  InitConfig c = spec.init;
  c.seed = derive_seed(spec.seed, "init");
  return c;
}

InitializedModels prepare_models(const ExperimentSpec& spec) {
  if (!spec.init_path.empty() && std::filesystem::exists(spec.init_path)) {
    return InitializedModels::from_json(read_json_file(spec.init_path));
  }
  return initialize_joint(build_sysid(spec), init_config(spec));
}

MetricsAccumulator evaluate_offline(const Predictor& predict, const Standardizer& standardizer,
                                    const Dataset& data) {
  MetricsAccumulator acc;
  for (const TrainingPair& p : data) {
    if (!p.finite()) continue;
    const Target err = predict(p.x) - p.y;
    acc.add(err.cwiseQuotient(standardizer.out_scale), err);
  }
  return acc;
}

OnlineRun run_online(const InitializedModels& init, const TrainerConfig& cfg, Method method,
                     const Dataset& stream) {
  TrainerConfig c = cfg;
  c.method = method;
  OnlineRun run{method, {}, {}, Trainer(init, c), 0.0};
  const auto start = Clock::now();
  for (const TrainingPair& p : stream) {
    const IngestReport r = run.trainer.ingest(p);
    if (r.dropped) continue;
    run.metrics.add(r.error_std, r.error_raw);
    if (r.step) run.steps.push_back(*r.step);
  }
  run.seconds = seconds_since(start);
  return run;
}

const MethodResult& MethodTable::row(Method m) const {
  for (const auto& r : rows) {
    if (r.method == m) return r;
  }
  throw Error("no row for method " + to_string(m));
}

namespace {

TrainerConfig trainer_config(const ExperimentSpec& spec, const std::string& tag) {
  TrainerConfig c = spec.trainer;
  c.seed = derive_seed(spec.seed, tag);
  return c;
}

MethodTable online_table(const ExperimentSpec& spec, const InitializedModels& init,
                         const Dataset& stream, const Dataset* retention_set) {
  if (stream.empty()) throw Error("empty metrics table: the stream produced no pairs");
  MethodTable table;
  table.seed = spec.seed;
  const TrainerConfig cfg = trainer_config(spec, "trainer");
  for (Method m : spec.methods) {
    OnlineRun run = run_online(init, cfg, m, stream);
    MethodResult r = summarize(run);
    if (retention_set) {
      r.retention = evaluate_offline(predictor_of(run.trainer), init.standardizer, *retention_set);
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

}  // namespace

MethodTable catastrophic_interference_protocol(const ExperimentSpec& spec,
                                               const InitializedModels& init) {
  const DatasetResult stream = generate_stream(spec, spec.interference, "interference");
  const DatasetResult validation = generate_stream(spec, spec.validation, "validation");
  if (validation.pairs.empty()) throw Error("empty metrics table: validation set is empty");
  return online_table(spec, init, stream.pairs, &validation.pairs);
}

ModifiedDynamicsReport modified_dynamics_protocol(const ExperimentSpec& spec,
                                                  const InitializedModels& init) {
  ModifiedDynamicsReport report;
  report.mud = online_table(spec, init, generate_stream(spec, spec.mud, "mud").pairs, nullptr);
  if (spec.mud_contrast) {
    ScenarioConfig sc = spec.mud;
    sc.regime = spec.sysid.regime;
    report.contrast = online_table(spec, init, generate_stream(spec, sc, "mud").pairs, nullptr);
  }
  return report;
}

std::vector<const TrialResult*> ActiveReport::of(Method m) const {
  std::vector<const TrialResult*> out;
  for (const auto& t : trials) {
    if (t.method == m) out.push_back(&t);
  }
  return out;
}

double ActiveReport::avg_lap_time(Method m) const {
  double sum = 0.0;
  int n = 0;
  for (const TrialResult* t : of(m)) {
    if (t->lap_times.empty()) continue;
    double s = 0.0;
    for (double lt : t->lap_times) s += lt;
    sum += s / static_cast<double>(t->lap_times.size());
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

double ActiveReport::avg_laps(Method m) const {
  const auto ts = of(m);
  if (ts.empty()) return 0.0;
  double sum = 0.0;
  for (const TrialResult* t : ts) sum += t->laps_completed;
  return sum / static_cast<double>(ts.size());
}

int ActiveReport::full_trials(Method m, int laps) const {
  int n = 0;
  for (const TrialResult* t : of(m)) n += t->laps_completed >= laps;
  return n;
}

namespace {

TrialResult run_trial(const ExperimentSpec& spec, const InitializedModels& init, const Track& track,
                      Method method, int trial, const ControllerTelemetry& telemetry) {
  const ActiveConfig& a = spec.active;
  const VehicleParams p = apply_regime(spec.vehicle, a.regime);
  TrainerConfig tc = trainer_config(spec, "active-trainer-" + std::to_string(trial)).active_preset();
  tc.method = method;
  Trainer trainer(init, tc);
  const auto slot = trainer.slot();

  TrialResult result;
  result.method = method;
  result.trial = trial;

  VehicleState state;
  const Vec2 start = track.point_at(0.0);
  state.kin = {start.x(), start.y(), wrap_angle(track.heading_at(0.0))};
  state.dyn.v_long = a.start_speed;
  StreamRecorder recorder(spec.dt, spec.noise_fraction,
                          derive_seed(spec.seed, "active-noise-" + std::to_string(trial)));
  const std::uint64_t mppi_seed = derive_seed(spec.seed, "active-mppi-" + std::to_string(trial));

  Track::Projection proj = track.project(Vec2(state.kin.x_pos, state.kin.y_pos));
  LapCounter counter(track, proj.s);
  const double timeout = a.timeout_factor * a.laps * track.length() / spec.mppi.target_speed;
  const double half_width = 0.5 * track.width();
  ControlSequence seq(static_cast<std::size_t>(spec.mppi.horizon), Control(0.0, 0.0));
  Control u(0.0, 0.0);
  MetricsAccumulator lap_acc;
  double lap_start = 0.0;
  double t = 0.0;
  long k = 0;
  result.termination = Termination::timeout;

  while (true) {
    if (k % a.control_period == 0) {
      const NetworkModel model(slot->load(), init.standardizer);
      const auto c0 = Clock::now();
      const MppiResult r = mppi_step(model, state, seq, track, spec.mppi,
                                     mppi_seed + static_cast<std::uint64_t>(result.controller_steps));
      const double elapsed = seconds_since(c0);
      result.controller_seconds += elapsed;
      result.predictions += r.predictions;
      ++result.controller_steps;
      u = r.control;
      seq = r.sequence;
      if (telemetry.csv) {
        *telemetry.csv << to_string(method) << ',' << trial << ',' << format_double(t) << ','
                       << format_double(state.kin.x_pos) << ',' << format_double(state.kin.y_pos)
                       << ',' << format_double(state.kin.heading);
        for (int i = 0; i < 4; ++i) *telemetry.csv << ',' << format_double(state.dyn.vec()[i]);
        *telemetry.csv << ',' << format_double(u.steering()) << ',' << format_double(u.throttle())
                       << ',' << format_double(r.best_cost) << ',' << format_double(r.mean_cost)
                       << ',' << r.predictions << ',' << (r.emergency ? 1 : 0) << '\n';
      }
      if (telemetry.jsonl) {
        const nlohmann::json j{{"event", "control"},
                               {"method", to_string(method)},
                               {"trial", trial},
                               {"t", t},
                               {"best_cost", r.best_cost},
                               {"mean_cost", r.mean_cost},
                               {"predictions_per_second",
                                elapsed > 0.0 ? static_cast<double>(r.predictions) / elapsed : 0.0}};
        *telemetry.jsonl << j.dump() << '\n';
      }
    }
    if (auto pair = recorder.push(state.dyn, u, t)) {
      const IngestReport rep = trainer.ingest(*pair);
      if (!rep.dropped) {
        lap_acc.add(rep.error_std, rep.error_raw);
        result.metrics.add(rep.error_std, rep.error_raw);
      }
    }

    state = step(state.kin, state.dyn, u, p, spec.dt);
    ++k;
    t = static_cast<double>(k) * spec.dt;
    result.max_slip_deg =
        std::max(result.max_slip_deg, std::abs(slip_angle(state.dyn)) * 180.0 / std::numbers::pi);
    if (is_rollover(state.dyn)) {
      result.termination = Termination::rollover;
      break;
    }
    proj = track.project(Vec2(state.kin.x_pos, state.kin.y_pos), proj.segment,
                         spec.mppi.track_search_window);
    if (std::abs(proj.cross_track) > half_width) ++result.boundary_steps;
    if (std::abs(proj.cross_track) > spec.driver.capture_radius) {
      result.termination = Termination::driver_lost;
      break;
    }
    if (counter.update(proj.s)) {
      result.lap_times.push_back(t - lap_start);
      result.lap_metrics.push_back(lap_acc);
      lap_acc = MetricsAccumulator();
      lap_start = t;
      if (counter.laps() >= a.laps) {
        result.termination = Termination::completed;
        break;
      }
    }
    if (t > timeout) break;
  }
  result.laps_completed = counter.laps();
  return result;
}

}  // namespace

ActiveReport active_protocol(const ExperimentSpec& spec, const InitializedModels& init,
                             const ControllerTelemetry& telemetry) {
  spec.mppi.validate();
  const Track track(spec.track.build(), spec.active.direction);
  ActiveReport report;
  report.seed = spec.seed;
  for (Method m : spec.active_methods) {
    for (int trial = 0; trial < spec.active.trials; ++trial) {
      report.trials.push_back(run_trial(spec, init, track, m, trial, telemetry));
      const TrialResult& r = report.trials.back();
      if (telemetry.jsonl) {
        nlohmann::json j{{"event", "trial"},
                         {"method", to_string(m)},
                         {"trial", trial},
                         {"laps_completed", r.laps_completed},
                         {"termination", to_string(r.termination)},
                         {"lap_times", r.lap_times},
                         {"predictions_per_second",
                          r.controller_seconds > 0.0
                              ? static_cast<double>(r.predictions) / r.controller_seconds
                              : 0.0}};
        *telemetry.jsonl << j.dump() << '\n';
      }
    }
  }
  return report;
}

namespace {

struct SoakRun {
  std::vector<Target> err_std;
  std::vector<Target> err_raw;
  std::vector<StepReport> steps;
  std::vector<SoakCheckpoint> checkpoints;
  std::uint64_t net_checksum = 0;
  std::uint64_t lwpr_checksum = 0;
  AdamState adam;
  std::optional<Trainer> trainer;
};

bool same_steps(const std::vector<StepReport>& a, const std::vector<StepReport>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || a[i].alpha != b[i].alpha || a[i].mse_real != b[i].mse_real ||
        a[i].mse_synth != b[i].mse_synth || a[i].inner_product != b[i].inner_product ||
        a[i].skipped != b[i].skipped) {
      return false;
    }
  }
  return true;
}

SoakRun soak_pass(const InitializedModels& init, const TrainerConfig& cfg, const Dataset& stream,
                  const std::vector<long>& restore_at, const std::string& dir) {
  SoakRun run;
  run.trainer.emplace(init, cfg);
  std::size_t next = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (next < restore_at.size() && static_cast<long>(i) == restore_at[next]) {
      const nlohmann::json snapshot = run.trainer->checkpoint();
      SoakCheckpoint cp;
      cp.index = static_cast<long>(i);
      nlohmann::json loaded;
      if (!dir.empty()) {
        const std::string path = file_in(dir, "soak_checkpoint_" + std::to_string(next) + ".json");
        write_json_file(path, snapshot);
        cp.bytes = static_cast<std::size_t>(std::filesystem::file_size(path));
        loaded = read_json_file(path);
      } else {
        const std::string text = snapshot.dump();
        cp.bytes = text.size();
        loaded = nlohmann::json::parse(text);
      }
      run.trainer.reset();
      run.trainer.emplace(Trainer::restore(loaded));
      run.checkpoints.push_back(cp);
      ++next;
    }
    const IngestReport r = run.trainer->ingest(stream[i]);
    if (r.dropped) continue;
    run.err_std.push_back(r.error_std);
    run.err_raw.push_back(r.error_raw);
    if (r.step) run.steps.push_back(*r.step);
  }
  run.net_checksum = run.trainer->network().checksum();
  run.lwpr_checksum = run.trainer->lwpr().checksum();
  run.adam = run.trainer->adam();
  return run;
}

MetricsAccumulator window_metrics(const SoakRun& run, long begin, long end) {
  MetricsAccumulator acc;
  begin = std::max(0L, begin);
  end = std::min(static_cast<long>(run.err_std.size()), end);
  for (long i = begin; i < end; ++i) {
    acc.add(run.err_std[static_cast<std::size_t>(i)], run.err_raw[static_cast<std::size_t>(i)]);
  }
  return acc;
}

}  // namespace

SoakReport soak_protocol(const ExperimentSpec& spec, const InitializedModels& init,
                         const std::string& checkpoint_dir) {
  const SoakConfig& k = spec.soak;
  const Track track(spec.track.build(), Direction::cw);
  const long per_segment = std::max(1L, std::lround(k.segment_minutes * 60.0 / spec.dt));
  const long total = std::max(1L, std::lround(k.minutes * 60.0 / spec.dt));
  const int laps_per_segment = static_cast<int>(
      std::ceil(static_cast<double>(per_segment) * spec.dt * k.speed / track.length())) + 1;

  Dataset stream;
  SoakReport report;
  report.method = k.method;
  for (int seg = 0; static_cast<long>(stream.size()) < total; ++seg) {
    const RegimeSpec regime = k.regimes[static_cast<std::size_t>(seg) % k.regimes.size()];
    const ScenarioConfig sc{Direction::cw, laps_per_segment, k.speed, regime, 0.0, 0.0};
    DatasetResult r = generate_stream(spec, sc, "soak-" + std::to_string(seg));
    if (r.pairs.empty()) throw Error("soak segment produced no pairs");
    const long take = std::min({per_segment, static_cast<long>(r.pairs.size()),
                                total - static_cast<long>(stream.size())});
    SoakSegment s;
    s.regime = regime;
    s.begin = static_cast<long>(stream.size());
    s.end = s.begin + take;
    report.segments.push_back(s);
    // Times continue across segments.
    const double offset = stream.empty() ? 0.0 : stream.back().t + spec.dt;
    for (long i = 0; i < take; ++i) {
      TrainingPair p = r.pairs[static_cast<std::size_t>(i)];
      p.t += offset;
      stream.push_back(p);
    }
  }
  report.pairs = static_cast<long>(stream.size());

  std::vector<long> restore_at;
  for (int c = 1; c <= k.checkpoints; ++c) {
    restore_at.push_back(report.pairs * c / (k.checkpoints + 1));
  }

  TrainerConfig cfg = trainer_config(spec, "soak-trainer");
  cfg.method = k.method;
  const SoakRun control = soak_pass(init, cfg, stream, {}, {});
  const SoakRun restored = soak_pass(init, cfg, stream, restore_at, checkpoint_dir);

  bool identical = control.err_std.size() == restored.err_std.size() &&
                   same_steps(control.steps, restored.steps) &&
                   control.net_checksum == restored.net_checksum &&
                   control.lwpr_checksum == restored.lwpr_checksum && control.adam == restored.adam;
  for (std::size_t i = 0; identical && i < control.err_std.size(); ++i) {
    identical = control.err_std[i] == restored.err_std[i] && control.err_raw[i] == restored.err_raw[i];
  }
  report.bit_identical = identical;
  report.final_checksum = control.net_checksum;

  const long half = k.straddle_window / 2;
  for (SoakCheckpoint cp : restored.checkpoints) {
    cp.straddle_mse_restored = window_metrics(restored, cp.index - half, cp.index + half).total_mse();
    cp.straddle_mse_control = window_metrics(control, cp.index - half, cp.index + half).total_mse();
    report.checkpoints.push_back(cp);
  }

  for (std::size_t i = 0; i < control.err_std.size(); ++i) {
    report.metrics.add(control.err_std[i], control.err_raw[i]);
  }
  for (std::size_t s = 0; s < report.segments.size(); ++s) {
    SoakSegment& seg = report.segments[s];
    seg.metrics = window_metrics(control, seg.begin, seg.end);
    seg.first_window = window_metrics(control, seg.begin, seg.begin + k.switch_window);
    seg.last_window = window_metrics(control, seg.end - k.switch_window, seg.end);
    if (s > 0) seg.pre_switch_window = report.segments[s - 1].last_window;
  }

  const DatasetResult validation = generate_stream(spec, spec.validation, "validation");
  report.retention =
      evaluate_offline(predictor_of(*control.trainer), init.standardizer, validation.pairs);
  if (k.compare_sgd && k.method != Method::sgd) {
    TrainerConfig sgd_cfg = cfg;
    sgd_cfg.method = Method::sgd;
    const OnlineRun sgd = run_online(init, sgd_cfg, Method::sgd, stream);
    report.sgd_retention =
        evaluate_offline(predictor_of(sgd.trainer), init.standardizer, validation.pairs);
  }
  return report;
}

FlopReport bench_flops(const InitializedModels& init) {
  FlopReport r;
  r.network = flop_count();
  r.network_total = flop_total(r.network);
  r.lwpr = flop_lower_bound(init.lwpr);
  return r;
}

ThroughputReport measure_throughput(const InitializedModels& init, std::size_t samples,
                                    std::uint64_t seed, double min_seconds) {
  if (samples == 0) throw DomainError("throughput needs samples");
  const std::vector<Input> xs = init.gmm->sample(samples, seed);
  InputBatch batch(kInputDim, static_cast<Eigen::Index>(samples));
  for (std::size_t i = 0; i < samples; ++i) batch.col(static_cast<Eigen::Index>(i)) = xs[i];

  ThroughputReport r;
  r.samples = samples;
  double sink = 0.0;
  long passes = 0;
  auto t0 = Clock::now();
  double elapsed = 0.0;
  do {
    sink += init.net.forward(batch)(0, 0);
    ++passes;
    elapsed = seconds_since(t0);
  } while (elapsed < min_seconds);
  r.network_per_second = static_cast<double>(passes) * static_cast<double>(samples) / elapsed;

  passes = 0;
  t0 = Clock::now();
  do {
    for (const Input& x : xs) sink += init.lwpr.predict(x).value[0];
    ++passes;
    elapsed = seconds_since(t0);
  } while (elapsed < min_seconds);
  r.lwpr_per_second = static_cast<double>(passes) * static_cast<double>(samples) / elapsed;
  // Keeps the loops from being optimized away.
  if (!std::isfinite(sink)) r.lwpr_per_second = -r.lwpr_per_second;
  return r;
}

void write_method_table_csv(std::ostream& out, const MethodTable& table, bool retention) {
  out << "seed,method,count";
  for (const char* name : kChannelNames) out << ',' << name << "_mse";
  for (const char* name : kChannelNames) out << ',' << name << "_mse_raw";
  out << ",total_mse,steps,skipped,mean_alpha\n";
  for (const MethodResult& r : table.rows) {
    const MetricsAccumulator& m = retention ? r.retention : r.online;
    const Target s = m.mse_std();
    const Target raw = m.mse_raw();
    out << table.seed << ',' << to_string(r.method) << ',' << m.count();
    for (int c = 0; c < kOutputDim; ++c) out << ',' << format_double(s[c]);
    for (int c = 0; c < kOutputDim; ++c) out << ',' << format_double(raw[c]);
    out << ',' << format_double(m.total_mse()) << ',' << r.steps << ',' << r.skipped << ','
        << format_double(r.mean_alpha) << '\n';
  }
}

void write_step_reports_csv(std::ostream& out, const std::vector<StepReport>& steps) {
  out << "step,alpha,mse_real,mse_synth,inner_product,g_id_norm2,skipped\n";
  for (const StepReport& s : steps) {
    out << s.step << ',' << format_double(s.alpha) << ',' << format_double(s.mse_real) << ','
        << format_double(s.mse_synth) << ',' << format_double(s.inner_product) << ','
        << format_double(s.g_id_norm2) << ',' << (s.skipped ? 1 : 0) << '\n';
  }
}

void write_active_trials_csv(std::ostream& out, const ActiveReport& report) {
  out << "seed,method,trial,laps_completed,termination,avg_lap_time,total_mse,boundary_steps,"
         "max_slip_deg,controller_steps,predictions\n";
  for (const TrialResult& t : report.trials) {
    double avg = std::numeric_limits<double>::quiet_NaN();
    if (!t.lap_times.empty()) {
      avg = 0.0;
      for (double lt : t.lap_times) avg += lt;
      avg /= static_cast<double>(t.lap_times.size());
    }
    out << report.seed << ',' << to_string(t.method) << ',' << t.trial << ',' << t.laps_completed
        << ',' << to_string(t.termination) << ',' << format_double(avg) << ','
        << (t.metrics.empty() ? std::string("nan") : format_double(t.metrics.total_mse())) << ','
        << t.boundary_steps << ',' << format_double(t.max_slip_deg) << ',' << t.controller_steps
        << ',' << t.predictions << '\n';
  }
}

void write_active_laps_csv(std::ostream& out, const ActiveReport& report) {
  out << "seed,method,trial,lap,lap_time,count";
  for (const char* name : kChannelNames) out << ',' << name << "_mse";
  out << ",total_mse\n";
  for (const TrialResult& t : report.trials) {
    for (std::size_t lap = 0; lap < t.lap_times.size(); ++lap) {
      const MetricsAccumulator& m = t.lap_metrics[lap];
      out << report.seed << ',' << to_string(t.method) << ',' << t.trial << ',' << lap + 1 << ','
          << format_double(t.lap_times[lap]) << ',' << m.count();
      const Target s = m.mse_std();
      for (int c = 0; c < kOutputDim; ++c) out << ',' << format_double(s[c]);
      out << ',' << format_double(m.total_mse()) << '\n';
    }
  }
}

void write_soak_csv(std::ostream& out, const SoakReport& report) {
  out << "segment,regime,begin,end,total_mse,first_window_mse,last_window_mse,pre_switch_mse\n";
  for (std::size_t i = 0; i < report.segments.size(); ++i) {
    const SoakSegment& s = report.segments[i];
    out << i << ',' << s.regime.to_string() << ',' << s.begin << ',' << s.end << ','
        << format_double(s.metrics.total_mse()) << ','
        << format_double(s.first_window.total_mse()) << ','
        << format_double(s.last_window.total_mse()) << ','
        << (s.pre_switch_window.empty() ? std::string("") : format_double(s.pre_switch_window.total_mse()))
        << '\n';
  }
}

namespace {

struct OutputFiles {
  std::string dir;
  std::vector<std::string> written;

  std::ofstream open(const std::string& name) {
    const std::string path = file_in(dir, name);
    written.push_back(path);
    return open_output(path);
  }
};

InitializedModels models_for(const ExperimentSpec& spec, std::ostream& log) {
  const auto start = Clock::now();
  const bool cached = !spec.init_path.empty() && std::filesystem::exists(spec.init_path);
  InitializedModels init = prepare_models(spec);
  if (!spec.init_path.empty() && !cached) write_json_file(spec.init_path, init.to_json());
  log << nlohmann::json{{"event", "init"},
                        {"cached", cached},
                        {"gmm_k", init.gmm->k()},
                        {"lwpr_fields", init.lwpr.field_counts()},
                        {"seconds", seconds_since(start)}}
             .dump()
      << '\n';
  return init;
}

std::vector<MetricsRow> rows_of(const MethodTable& t, bool retention) {
  std::vector<MetricsRow> rows;
  for (const auto& r : t.rows) rows.push_back({to_string(r.method), retention ? r.retention : r.online});
  return rows;
}

void log_methods(std::ostream& log, const std::string& protocol, const MethodTable& t) {
  for (const auto& r : t.rows) {
    log << nlohmann::json{{"event", "method"},
                          {"protocol", protocol},
                          {"method", to_string(r.method)},
                          {"seconds", r.seconds},
                          {"steps", r.steps},
                          {"total_mse", r.online.total_mse()}}
               .dump()
        << '\n';
  }
}

void write_steps(OutputFiles& files, const std::string& prefix, const MethodTable& t) {
  for (const auto& r : t.rows) {
    if (r.step_reports.empty()) continue;
    auto out = files.open(prefix + "_steps_" + to_string(r.method) + ".csv");
    write_step_reports_csv(out, r.step_reports);
  }
}

std::string active_summary(const ActiveReport& report, const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "Active driving (" << spec.active.trials << " trials x " << spec.active.laps
      << " laps, regime " << spec.active.regime.to_string() << ")\n";
  out << std::left << std::setw(10) << "method" << std::right << std::setw(12) << "avg laps"
      << std::setw(14) << "avg lap time" << std::setw(14) << "avg trial MSE" << std::setw(10)
      << "crashes" << '\n';
  for (Method m : spec.active_methods) {
    double mse = 0.0;
    int n = 0;
    int crashes = 0;
    for (const TrialResult* t : report.of(m)) {
      if (!t->metrics.empty()) {
        mse += t->metrics.total_mse();
        ++n;
      }
      crashes += t->termination == Termination::rollover || t->termination == Termination::driver_lost;
    }
    out << std::left << std::setw(10) << to_string(m) << std::right << std::fixed
        << std::setprecision(2) << std::setw(12) << report.avg_laps(m) << std::setw(14)
        << report.avg_lap_time(m) << std::setw(14) << std::setprecision(4)
        << (n ? mse / n : std::numeric_limits<double>::quiet_NaN()) << std::setw(10) << crashes
        << '\n';
  }
  return out.str();
}

}  // namespace

std::string run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  OutputFiles files{spec.output_dir, {}};
  std::ofstream log_file;
  std::ostringstream sink;
  std::ostream* log = &sink;
  if (!spec.output_dir.empty()) {
    std::filesystem::create_directories(spec.output_dir);
    log_file = open_output(file_in(spec.output_dir, "telemetry.jsonl"));
    log = &log_file;
  }
  auto write = [&](const std::string& name, auto&& fn) {
    if (spec.output_dir.empty()) return;
    auto out = files.open(name);
    fn(out);
  };

  const auto start = Clock::now();
  const InitializedModels init = models_for(spec, *log);
  std::ostringstream summary;

  if (spec.protocol == "stream") {
    const Dataset stream = spec.stream_path.empty()
                               ? generate_stream(spec, spec.stream, "stream").pairs
                               : load_dataset(spec.stream_path);
    MethodTable table;
    table.seed = spec.seed;
    if (spec.mode == Mode::offline) {
      const std::uint64_t net_before = init.net.checksum();
      const std::uint64_t lwpr_before = init.lwpr.checksum();
      if (stream.empty()) throw Error("empty metrics table: the stream produced no pairs");
      for (Method m : spec.methods) {
        MethodResult r;
        r.method = m;
        if (m == Method::lwpr_only) {
          r.online = evaluate_offline(
              [&](const Input& x) {
                return init.standardizer.target_raw(init.lwpr.predict(init.standardizer.input(x)).value);
              },
              init.standardizer, stream);
        } else {
          r.online = evaluate_offline(
              [&](const Input& x) { return init.standardizer.target_raw(init.net.forward(init.standardizer.input(x))); },
              init.standardizer, stream);
        }
        table.rows.push_back(std::move(r));
      }
      if (init.net.checksum() != net_before || init.lwpr.checksum() != lwpr_before) {
        throw Error("offline evaluation modified a model");
      }
    } else {
      table = online_table(spec, init, stream, nullptr);
      log_methods(*log, "stream", table);
      write_steps(files, "stream", table);
    }
    write("metrics.csv", [&](std::ostream& o) { write_method_table_csv(o, table, false); });
    summary << format_metrics_table(to_string(spec.mode) + " evaluation", rows_of(table, false));
  } else if (spec.protocol == "interference") {
    const MethodTable table = catastrophic_interference_protocol(spec, init);
    log_methods(*log, "interference", table);
    write("interference_online.csv", [&](std::ostream& o) { write_method_table_csv(o, table, false); });
    write("interference_retention.csv", [&](std::ostream& o) { write_method_table_csv(o, table, true); });
    write_steps(files, "interference", table);
    summary << format_metrics_table("Online adaptation, " + to_string(spec.interference.direction) +
                                        " stream",
                                    rows_of(table, false))
            << '\n'
            << format_metrics_table("Retention, frozen models on " +
                                        to_string(spec.validation.direction) + " validation set",
                                    rows_of(table, true));
  } else if (spec.protocol == "mud") {
    const ModifiedDynamicsReport report = modified_dynamics_protocol(spec, init);
    log_methods(*log, "mud", report.mud);
    write("mud.csv", [&](std::ostream& o) { write_method_table_csv(o, report.mud, false); });
    write_steps(files, "mud", report.mud);
    summary << format_metrics_table("Online adaptation, " + spec.mud.regime.to_string() + " regime",
                                    rows_of(report.mud, false));
    if (!report.contrast.rows.empty()) {
      write("mud_contrast.csv",
            [&](std::ostream& o) { write_method_table_csv(o, report.contrast, false); });
      summary << '\n'
              << format_metrics_table("Contrast, " + spec.sysid.regime.to_string() + " regime",
                                      rows_of(report.contrast, false));
    }
  } else if (spec.protocol == "soak") {
    const SoakReport report = soak_protocol(spec, init, spec.output_dir);
    write("soak_segments.csv", [&](std::ostream& o) { write_soak_csv(o, report); });
    write("soak_checkpoints.csv", [&](std::ostream& o) {
      o << "index,straddle_mse_restored,straddle_mse_control\n";
      for (const auto& c : report.checkpoints) {
        o << c.index << ',' << format_double(c.straddle_mse_restored) << ','
          << format_double(c.straddle_mse_control) << '\n';
      }
    });
    std::vector<MetricsRow> rows{{to_string(report.method), report.retention}};
    if (!report.sgd_retention.empty()) rows.push_back({"sgd", report.sgd_retention});
    write("soak_retention.csv", [&](std::ostream& o) { write_metrics_csv(o, rows); });
    summary << "Soak: " << report.pairs << " pairs, " << report.segments.size() << " segments, "
            << report.checkpoints.size() << " restores, restored run "
            << (report.bit_identical ? "bit-identical" : "DIFFERS") << "\n"
            << format_metrics_table("Retention after soak", rows);
  } else if (spec.protocol == "active") {
    std::ofstream controller_csv;
    ControllerTelemetry telemetry;
    telemetry.jsonl = log;
    if (spec.active.telemetry && !spec.output_dir.empty()) {
      controller_csv = files.open("controller.csv");
      controller_csv << "method,trial,time,x,y,heading,roll,v_long,v_lat,heading_rate,steering,"
                        "throttle,best_cost,mean_cost,predictions,emergency\n";
      telemetry.csv = &controller_csv;
    }
    const ActiveReport report = active_protocol(spec, init, telemetry);
    write("active_trials.csv", [&](std::ostream& o) { write_active_trials_csv(o, report); });
    write("active_laps.csv", [&](std::ostream& o) { write_active_laps_csv(o, report); });
    summary << active_summary(report, spec);
  }
  *log << nlohmann::json{{"event", "done"}, {"seconds", seconds_since(start)}}.dump() << '\n';
  return summary.str();
}

std::string run_gen_data(const ExperimentSpec& spec, bool stream) {
  if (spec.dataset_path.empty()) throw ConfigError("gen-data needs dataset_path");
  Dataset data;
  std::string what;
  if (stream) {
    data = generate_stream(spec, spec.stream, "stream").pairs;
    what = "stream";
  } else {
    data = build_sysid(spec);
    what = "sysid";
  }
  save_dataset(spec.dataset_path, data);
  return "wrote " + std::to_string(data.size()) + " " + what + " pairs to " + spec.dataset_path + "\n";
}

std::string run_train_init(const ExperimentSpec& spec) {
  if (spec.init_path.empty()) throw ConfigError("train-init needs init_path");
  const auto start = Clock::now();
  const InitializedModels init = initialize_joint(build_sysid(spec), init_config(spec));
  write_json_file(spec.init_path, init.to_json());
  std::ostringstream out;
  const auto counts = init.lwpr.field_counts();
  out << "initialized models written to " << spec.init_path << "\n"
      << "mixture components: " << init.gmm->k() << "\n"
      << "receptive fields: " << counts[0] << " " << counts[1] << " " << counts[2] << " "
      << counts[3] << "\n"
      << "seconds: " << std::fixed << std::setprecision(1) << seconds_since(start) << "\n";
  return out.str();
}

std::string run_bench_flops(const ExperimentSpec& spec) {
  const InitializedModels init = prepare_models(spec);
  const FlopReport r = bench_flops(init);
  std::ostringstream out;
  out << "Network FLOPs per forward pass\n";
  for (const auto& l : r.network) {
    out << std::left << std::setw(12) << l.name << std::right << std::setw(4) << l.inputs << " -> "
        << std::setw(3) << l.outputs << std::setw(8) << l.flops << '\n';
  }
  out << std::left << std::setw(23) << "total (sum of rows)" << std::right << std::setw(8)
      << r.network_total << '\n';
  out << std::left << std::setw(23) << "reference total" << std::right << std::setw(8)
      << kReferenceNetworkFlopTotal << '\n';
  out << "\nLWPR FLOP lower bound (" << kFlopsPerActivation << " per receptive field)\n";
  for (const auto& row : r.lwpr) {
    out << std::left << std::setw(18) << row.output << std::right << std::setw(8) << row.fields
        << std::setw(10) << row.flops << '\n';
  }
  const ThroughputReport tp = measure_throughput(init, 1024, derive_seed(spec.seed, "throughput"));
  out << "\nPredictions per second: network " << std::setprecision(3) << std::scientific
      << tp.network_per_second << ", LWPR " << tp.lwpr_per_second << " (ratio "
      << std::fixed << std::setprecision(1) << tp.ratio() << ")\n"
      << "Throughput target, network >= 10x LWPR: " << (tp.meets_target() ? "PASS" : "FAIL")
      << '\n';
  if (!spec.output_dir.empty()) {
    std::filesystem::create_directories(spec.output_dir);
    // Timings vary run to run, so they go to the JSONL log and not the CSVs.
    auto log = open_output(file_in(spec.output_dir, "throughput.jsonl"));
    log << nlohmann::json{{"event", "throughput"},
                          {"samples", tp.samples},
                          {"network_predictions_per_second", tp.network_per_second},
                          {"lwpr_predictions_per_second", tp.lwpr_per_second},
                          {"lwpr_fields", r.lwpr.back().fields},
                          {"ratio", tp.ratio()},
                          {"meets_target", tp.meets_target()}}
               .dump()
        << '\n';
    auto net = open_output(file_in(spec.output_dir, "flops_network.csv"));
    net << "layer,inputs,outputs,flops\n";
    for (const auto& l : r.network) net << l.name << ',' << l.inputs << ',' << l.outputs << ',' << l.flops << '\n';
    net << "total,,," << r.network_total << '\n';
    net << "reference_total,,," << kReferenceNetworkFlopTotal << '\n';
    auto lw = open_output(file_in(spec.output_dir, "flops_lwpr.csv"));
    lw << "output,fields,flops\n";
    for (const auto& row : r.lwpr) lw << row.output << ',' << row.fields << ',' << row.flops << '\n';
  }
  return out.str();
}

}  // namespace lwpr2
