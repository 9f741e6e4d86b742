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

#include "lwpr2/config.hpp"
#include "lwpr2/dataset.hpp"
#include "lwpr2/metrics.hpp"
#include "lwpr2/mppi.hpp"
#include "lwpr2/trainer.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace lwpr2 {

enum class Mode { offline, online, active };

Mode parse_mode(const std::string& text);
std::string to_string(Mode m);

struct TrackConfig {
  double semi_major = 12.0;
  double semi_minor = 8.0;
  int waypoints = 240;
  double width = 3.0;
  std::string path;  // JSON track file; overrides the ellipse when set

  TrackSpec build() const;
};

// One closed-loop episode of the scripted driver.
struct ScenarioConfig {
  Direction direction = Direction::cw;
  int laps = 1;
  double speed = 4.0;
  RegimeSpec regime;
  double steer_dither = 0.0;
  double throttle_dither = 0.0;
};

struct SysidConfig {
  int laps = 10;  // per direction and speed
  std::vector<double> speeds{3.0, 5.0};
  RegimeSpec regime;
  double steer_dither = 0.1;
  double throttle_dither = 0.2;
  std::vector<double> skidpad_steering{0.3, 0.6};  // each used with both signs
  std::vector<double> skidpad_speeds{3.0, 5.0};
  double skidpad_duration = 8.0;
  std::string path;  // JSONL dataset; replaces generation when set
};

struct ActiveConfig {
  int trials = 5;
  int laps = 10;
  RegimeSpec regime = RegimeSpec::custom(1.3, 1.0, 1.3);
  Direction direction = Direction::ccw;
  // Simulator steps per controller call; mppi.dt must equal
  // control_period * dt.
  int control_period = 2;
  double start_speed = 3.0;
  double timeout_factor = 4.0;  // times laps * length / target speed
  bool telemetry = false;       // per-step controller CSV
};

struct SoakConfig {
  double minutes = 20.0;
  double segment_minutes = 5.0;
  std::vector<RegimeSpec> regimes{RegimeSpec::nominal(), RegimeSpec::mud()};
  int checkpoints = 3;
  double speed = 4.0;
  Method method = Method::lwpr2;
  bool compare_sgd = true;
  int straddle_window = 100;  // pairs around each restore
  int switch_window = 1000;   // pairs before a switch and at a segment's end
};

// Everything one run needs. Built from a key=value config; see README for
// the key list.
struct ExperimentSpec {
  Mode mode = Mode::online;
  // offline: stream; online: stream, interference, mud, soak; active: active.
  std::string protocol = "stream";
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::none, Method::sgd, Method::lwpr2, Method::lwpr_only};
  std::string output_dir;    // empty: no files
  std::string init_path;     // cached InitializedModels JSON
  std::string dataset_path;  // gen-data output

  double dt = kDefaultDt;
  double noise_fraction = 0.01;
  VehicleParams vehicle;
  DriverConfig driver;
  TrackConfig track;
  SysidConfig sysid;
  InitConfig init;
  TrainerConfig trainer;

  ScenarioConfig stream;
  std::string stream_path;
  ScenarioConfig interference{Direction::cw, 30, 4.5, {}, 0.0, 0.0};
  ScenarioConfig validation{Direction::ccw, 5, 4.5, {}, 0.0, 0.0};
  ScenarioConfig mud{Direction::cw, 10, 4.0, RegimeSpec::mud(), 0.0, 0.0};
  bool mud_contrast = false;

  ActiveConfig active;
  std::vector<Method> active_methods{Method::none, Method::sgd, Method::lwpr2};
  // 1.2 s horizon at 25 Hz with 256 rollouts.
  MppiConfig mppi{.num_rollouts = 256, .horizon = 30, .dt = 0.04};
  SoakConfig soak;

  // Unknown keys are a ConfigError.
  static ExperimentSpec from_config(const Config& cfg);
  void validate() const;
};

// Independent stream of seeds per purpose.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);

DatasetResult generate_stream(const ExperimentSpec& spec, const ScenarioConfig& scenario,
                              const std::string& tag);

// Mixed-direction laps at each sysid speed plus skidpad circles.
Dataset build_sysid(const ExperimentSpec& spec);

// Loads spec.init_path when it exists, otherwise builds the sysid set and
// runs initialize_joint.
InitializedModels prepare_models(const ExperimentSpec& spec);
InitConfig init_config(const ExperimentSpec& spec);

using Predictor = std::function<Target(const Input&)>;

// Frozen evaluation in raw units; errors are prediction - target.
MetricsAccumulator evaluate_offline(const Predictor& predict, const Standardizer& standardizer,
                                    const Dataset& data);

struct OnlineRun {
  Method method = Method::none;
  MetricsAccumulator metrics;
  std::vector<StepReport> steps;
  Trainer trainer;
  double seconds = 0.0;
};

// Prequential pass of the stream through a fresh trainer.
OnlineRun run_online(const InitializedModels& init, const TrainerConfig& cfg, Method method,
                     const Dataset& stream);

struct MethodResult {
  Method method = Method::none;
  MetricsAccumulator online;
  MetricsAccumulator retention;  // empty unless the protocol measures it
  long steps = 0;
  long skipped = 0;
  double mean_alpha = 1.0;
  double seconds = 0.0;
  std::vector<StepReport> step_reports;
};

struct MethodTable {
  std::uint64_t seed = 0;
  std::vector<MethodResult> rows;

  const MethodResult& row(Method m) const;
};

// Online adaptation on a one-direction stream, then frozen evaluation of each
// final model on an opposite-direction validation set.
MethodTable catastrophic_interference_protocol(const ExperimentSpec& spec,
                                               const InitializedModels& init);

struct ModifiedDynamicsReport {
  MethodTable mud;
  MethodTable contrast;  // same stream under the sysid regime, if requested
};

ModifiedDynamicsReport modified_dynamics_protocol(const ExperimentSpec& spec,
                                                  const InitializedModels& init);

struct TrialResult {
  Method method = Method::none;
  int trial = 0;
  int laps_completed = 0;
  Termination termination = Termination::completed;
  std::vector<double> lap_times;
  std::vector<MetricsAccumulator> lap_metrics;
  MetricsAccumulator metrics;
  long boundary_steps = 0;  // simulator steps spent outside the track edges
  double max_slip_deg = 0.0;
  long controller_steps = 0;
  long predictions = 0;
  double controller_seconds = 0.0;
};

struct ActiveReport {
  std::uint64_t seed = 0;
  std::vector<TrialResult> trials;

  std::vector<const TrialResult*> of(Method m) const;
  // Mean over trials of each trial's mean lap time; NaN when no trial
  // completed a lap.
  double avg_lap_time(Method m) const;
  double avg_laps(Method m) const;
  int full_trials(Method m, int laps) const;
};

// Per-step controller record, written only when requested.
struct ControllerTelemetry {
  std::ostream* csv = nullptr;
  std::ostream* jsonl = nullptr;
};

ActiveReport active_protocol(const ExperimentSpec& spec, const InitializedModels& init,
                             const ControllerTelemetry& telemetry = {});

struct SoakCheckpoint {
  long index = 0;        // pairs ingested when the checkpoint was taken
  std::size_t bytes = 0; // serialized size
  double straddle_mse_restored = 0.0;
  double straddle_mse_control = 0.0;
};

struct SoakSegment {
  RegimeSpec regime;
  long begin = 0;
  long end = 0;
  MetricsAccumulator metrics;
  MetricsAccumulator first_window;
  MetricsAccumulator last_window;
  MetricsAccumulator pre_switch_window;  // last window of the previous segment
};

struct SoakReport {
  Method method = Method::lwpr2;
  long pairs = 0;
  MetricsAccumulator metrics;
  std::vector<SoakSegment> segments;
  std::vector<SoakCheckpoint> checkpoints;
  // Restored run matches the uninterrupted one in every recorded error, step
  // report and final model checksum.
  bool bit_identical = false;
  std::uint64_t final_checksum = 0;
  MetricsAccumulator retention;
  MetricsAccumulator sgd_retention;  // empty unless compare_sgd
};

// Alternating-regime stream with checkpoint/restore cycles. When
// checkpoint_dir is nonempty every checkpoint goes through a file there.
SoakReport soak_protocol(const ExperimentSpec& spec, const InitializedModels& init,
                         const std::string& checkpoint_dir = {});

struct FlopReport {
  std::vector<LayerFlops> network;
  long network_total = 0;
  std::vector<LwprFlopRow> lwpr;
};

FlopReport bench_flops(const InitializedModels& init);

struct ThroughputReport {
  std::size_t samples = 0;
  double network_per_second = 0.0;  // batched forward passes, as the controller runs them
  double lwpr_per_second = 0.0;     // ensemble predictions one input at a time

  double ratio() const { return network_per_second / lwpr_per_second; }
  // The harness target: network at least 10x the ensemble.
  bool meets_target() const { return ratio() >= 10.0; }
};

// Wall-clock prediction rates on inputs drawn from the mixture. Each side runs
// for at least min_seconds.
ThroughputReport measure_throughput(const InitializedModels& init, std::size_t samples,
                                    std::uint64_t seed, double min_seconds = 0.2);

// Runs spec.protocol for spec.mode, writes CSV and JSONL files into
// spec.output_dir and returns the human-readable summary.
std::string run_experiment(const ExperimentSpec& spec);

// gen-data: writes the sysid set, or the configured stream, to
// spec.dataset_path.
std::string run_gen_data(const ExperimentSpec& spec, bool stream);
// train-init: writes the initialized models to spec.init_path.
std::string run_train_init(const ExperimentSpec& spec);
std::string run_bench_flops(const ExperimentSpec& spec);

// CSV writers used by run_experiment.
void write_method_table_csv(std::ostream& out, const MethodTable& table, bool retention);
void write_step_reports_csv(std::ostream& out, const std::vector<StepReport>& steps);
void write_active_trials_csv(std::ostream& out, const ActiveReport& report);
void write_active_laps_csv(std::ostream& out, const ActiveReport& report);
void write_soak_csv(std::ostream& out, const SoakReport& report);

}  // namespace lwpr2
