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

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>

using namespace lwpr2;
namespace fs = std::filesystem;

namespace {

Config small_config() {
  std::istringstream in(R"(
seed = 3
sysid.laps = 1
sysid.skidpad_duration = 3
init.net_steps = 300
init.gmm_k_max = 4
init.gmm_restarts = 1
init.gmm_max_points = 1500
stream.laps = 1
)");
  return Config::parse(in);
}

ExperimentSpec small_spec() { return ExperimentSpec::from_config(small_config()); }

const InitializedModels& small_models() {
  static const InitializedModels init = prepare_models(small_spec());
  return init;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lwpr2_test_" + name);
  fs::remove_all(dir);
  return dir;
}

Predictor network_predictor(const InitializedModels& init) {
  return [&init](const Input& x) {
    return init.standardizer.target_raw(init.net.forward(init.standardizer.input(x)));
  };
}

}  // namespace

TEST_CASE("config files") {
  std::istringstream in("# comment\n  a = 1 \n\nb=two words\na = 3\n");
  Config c = Config::parse(in);
  CHECK(c.get_int("a", 0) == 3);
  CHECK(c.get_string("b", "") == "two words");
  CHECK(c.get_double("missing", 2.5) == 2.5);
  c.apply_override("a=7");
  CHECK(c.get_int("a", 0) == 7);
  CHECK_THROWS_AS(c.apply_override("novalue"), ConfigError);
  CHECK_THROWS_AS(c.get_double("b", 0.0), ConfigError);

  std::istringstream bad_line("just words\n");
  CHECK_THROWS_AS(Config::parse(bad_line), ConfigError);

  std::istringstream lists("speeds = 3, 4.5 ,6\n");
  const Config l = Config::parse(lists);
  CHECK(l.get_doubles("speeds", {}) == std::vector<double>{3.0, 4.5, 6.0});
}

TEST_CASE("experiment spec from config") {
  Config c = small_config();
  const ExperimentSpec s = ExperimentSpec::from_config(c);
  CHECK(s.seed == 3);
  CHECK(s.sysid.laps == 1);
  CHECK(s.init.net_steps == 300);
  CHECK_NOTHROW(s.validate());

  SUBCASE("unknown keys are rejected") {
    c.set("trainer.learning_rate", "0.1");
    CHECK_THROWS_AS(ExperimentSpec::from_config(c), ConfigError);
  }
  SUBCASE("offline mode never adapts") {
    c.set("mode", "offline");
    c.set("methods", "sgd");
    CHECK_THROWS_AS(ExperimentSpec::from_config(c).validate(), ConfigError);
  }
  SUBCASE("controller period must match the simulator") {
    c.set("mode", "active");
    c.set("protocol", "active");
    c.set("mppi.dt", "0.05");
    CHECK_THROWS_AS(ExperimentSpec::from_config(c).validate(), ConfigError);
  }
  SUBCASE("bad values") {
    c.set("mode", "replay");
    CHECK_THROWS_AS(ExperimentSpec::from_config(c), ConfigError);
  }
  SUBCASE("scenario") {
    c.set("stream.laps", "0");
    CHECK_THROWS_AS(ExperimentSpec::from_config(c).validate(), ConfigError);
  }
}

TEST_CASE("shortest round-trip formatting") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 10000; ++i) {
    double v;
    const std::uint64_t b = bits(rng);
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("metrics accumulator") {
  MetricsAccumulator m;
  CHECK_THROWS_AS(m.total_mse(), Error);
  m.add(Target(1.0, 2.0, 0.0, 0.0), Target(2.0, 4.0, 0.0, 0.0));
  m.add(Target(-1.0, 0.0, 2.0, 0.0), Target(-2.0, 0.0, 4.0, 0.0));
  CHECK(m.count() == 2);
  CHECK(m.mse_std() == Target(1.0, 2.0, 2.0, 0.0));
  CHECK(m.mse_raw() == Target(4.0, 8.0, 8.0, 0.0));
  CHECK(m.total_mse() == doctest::Approx(1.25));
  MetricsAccumulator other;
  other.add(Target::Constant(3.0), Target::Constant(3.0));
  m.merge(other);
  CHECK(m.count() == 3);
  CHECK(m.mse_std()[3] == doctest::Approx(3.0));
}

TEST_CASE("a perfect model scores zero offline on noise-free data") {
  ExperimentSpec spec = small_spec();
  spec.noise_fraction = 0.0;
  const Dataset data = generate_stream(spec, spec.stream, "oracle").pairs;
  REQUIRE(!data.empty());
  const VehicleParams p = spec.vehicle;
  // One explicit Euler step over the recorded dt reproduces the target.
  const Predictor oracle = [&](const Input& x) {
    const DynamicState dyn{x[0], x[1], x[2], x[3]};
    const VehicleState next = step(KinematicState{}, dyn, Control(x[4], x[5]), p, spec.dt);
    return Target((next.dyn.vec() - dyn.vec()) / spec.dt);
  };
  const MetricsAccumulator m = evaluate_offline(oracle, Standardizer{}, data);
  CHECK(m.count() == static_cast<long>(data.size()));
  CHECK(m.mse_raw().maxCoeff() == 0.0);
  CHECK(m.total_mse() == 0.0);
}

TEST_CASE("online without learning equals offline") {
  const ExperimentSpec spec = small_spec();
  const InitializedModels& init = small_models();
  const Dataset stream = generate_stream(spec, spec.stream, "stream").pairs;
  const OnlineRun run = run_online(init, spec.trainer, Method::none, stream);
  const MetricsAccumulator off = evaluate_offline(network_predictor(init), init.standardizer, stream);
  CHECK(run.metrics.count() == off.count());
  CHECK(run.metrics.mse_std() == off.mse_std());
  CHECK(run.metrics.mse_raw() == off.mse_raw());
  CHECK(run.steps.empty());
}

TEST_CASE("interference protocol rows") {
  ExperimentSpec spec = small_spec();
  spec.interference.laps = 2;
  spec.validation.laps = 1;
  const InitializedModels& init = small_models();
  const MethodTable t = catastrophic_interference_protocol(spec, init);
  REQUIRE(t.rows.size() == 4);

  const Dataset stream = generate_stream(spec, spec.interference, "interference").pairs;
  const Dataset validation = generate_stream(spec, spec.validation, "validation").pairs;
  const MethodResult& base = t.row(Method::none);
  CHECK(base.online.mse_std() ==
        evaluate_offline(network_predictor(init), init.standardizer, stream).mse_std());
  CHECK(base.retention.mse_std() ==
        evaluate_offline(network_predictor(init), init.standardizer, validation).mse_std());
  CHECK(base.steps == 0);
  for (Method m : {Method::sgd, Method::lwpr2}) {
    CHECK(t.row(m).steps + t.row(m).skipped == static_cast<long>(stream.size()));
    CHECK(t.row(m).retention.count() == static_cast<long>(validation.size()));
  }
  CHECK(t.row(Method::sgd).mean_alpha == 1.0);
  CHECK(t.row(Method::lwpr2).mean_alpha <= 1.0);
}

TEST_CASE("empty streams are reported") {
  ExperimentSpec spec = small_spec();
  const fs::path dir = scratch_dir("empty");
  fs::create_directories(dir);
  save_dataset((dir / "empty.jsonl").string(), Dataset{});
  spec.stream_path = (dir / "empty.jsonl").string();
  spec.init_path = (dir / "init.json").string();
  std::ofstream((dir / "init.json").string()) << small_models().to_json().dump();
  CHECK_THROWS_WITH_AS(run_experiment(spec), doctest::Contains("empty metrics table"), Error);
  spec.mode = Mode::offline;
  spec.methods = {Method::none};
  CHECK_THROWS_WITH_AS(run_experiment(spec), doctest::Contains("empty metrics table"), Error);
  fs::remove_all(dir);
}

TEST_CASE("offline evaluation leaves the models untouched") {
  ExperimentSpec spec = small_spec();
  spec.mode = Mode::offline;
  spec.methods = {Method::none, Method::lwpr_only};
  const fs::path dir = scratch_dir("offline");
  fs::create_directories(dir);
  spec.init_path = (dir / "init.json").string();
  std::ofstream((dir / "init.json").string()) << small_models().to_json().dump();
  const std::string before = slurp(dir / "init.json");
  spec.output_dir = (dir / "out").string();
  const std::string summary = run_experiment(spec);
  CHECK(summary.find("total") != std::string::npos);
  CHECK(slurp(dir / "init.json") == before);
  const InitializedModels reread = InitializedModels::from_json(nlohmann::json::parse(before));
  CHECK(reread.net == small_models().net);
  fs::remove_all(dir);
}

TEST_CASE("identical spec and seed give identical files") {
  ExperimentSpec spec = small_spec();
  spec.protocol = "interference";
  spec.interference.laps = 1;
  spec.validation.laps = 1;
  const fs::path dir = scratch_dir("determinism");
  fs::create_directories(dir);
  spec.init_path = (dir / "init.json").string();
  std::ofstream((dir / "init.json").string()) << small_models().to_json().dump();
  spec.output_dir = (dir / "a").string();
  run_experiment(spec);
  spec.output_dir = (dir / "b").string();
  run_experiment(spec);
  int csvs = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++csvs;
    CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));
  }
  CHECK(csvs >= 2);
  fs::remove_all(dir);
}

TEST_CASE("short soak restores bit for bit") {
  ExperimentSpec spec = small_spec();
  spec.soak.minutes = 0.6;
  spec.soak.segment_minutes = 0.2;
  spec.soak.checkpoints = 2;
  spec.soak.compare_sgd = false;
  const fs::path dir = scratch_dir("soak");
  fs::create_directories(dir);
  const SoakReport r = soak_protocol(spec, small_models(), dir.string());
  CHECK(r.bit_identical);
  CHECK(r.checkpoints.size() == 2);
  CHECK(r.segments.size() == 3);
  CHECK(r.pairs == std::lround(0.6 * 60.0 / spec.dt));
  for (const auto& c : r.checkpoints) {
    CHECK(c.bytes > 0);
    CHECK(c.straddle_mse_restored == c.straddle_mse_control);
  }
  CHECK(r.segments[1].regime.kind == RegimeSpec::Kind::mud);
  fs::remove_all(dir);
}

TEST_CASE("prediction throughput is measured and judged") {
  const ThroughputReport t = measure_throughput(small_models(), 1024, 1, 0.05);
  MESSAGE("network " << t.network_per_second << "/s, LWPR " << t.lwpr_per_second
                     << "/s, ratio " << t.ratio());
  CHECK(t.samples == 1024);
  CHECK(t.network_per_second > 0.0);
  CHECK(t.lwpr_per_second > 0.0);
  CHECK(t.meets_target() == (t.network_per_second >= 10.0 * t.lwpr_per_second));
  CHECK_THROWS_AS(measure_throughput(small_models(), 0, 1), DomainError);

  ExperimentSpec spec = small_spec();
  const fs::path dir = scratch_dir("bench");
  fs::create_directories(dir);
  spec.init_path = (dir / "init.json").string();
  std::ofstream((dir / "init.json").string()) << small_models().to_json().dump();
  spec.output_dir = (dir / "out").string();
  const std::string text = run_bench_flops(spec);
  CHECK(text.find("Throughput target") != std::string::npos);
  const nlohmann::json j = nlohmann::json::parse(slurp(dir / "out" / "throughput.jsonl"));
  CHECK(j.at("meets_target").get<bool>() == (j.at("ratio").get<double>() >= 10.0));
  CHECK(slurp(dir / "out" / "flops_network.csv").find("total,,,2752") != std::string::npos);
  fs::remove_all(dir);
}
