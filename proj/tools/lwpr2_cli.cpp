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

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string init_path;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config_path, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", f.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", f.seed, "experiment seed");
  cmd->add_option("-o,--output-dir", f.output_dir, "directory for CSV and JSONL outputs");
  cmd->add_option("--init", f.init_path, "initialized-models JSON (read if present, else written)");
}

lwpr2::ExperimentSpec build_spec(const CommonFlags& f,
                                 const std::vector<std::pair<std::string, std::string>>& fixed) {
  lwpr2::Config cfg;
  if (!f.config_path.empty()) cfg = lwpr2::Config::load(f.config_path);
  for (const auto& [k, v] : fixed) cfg.set(k, v);
  if (f.seed) cfg.set("seed", std::to_string(*f.seed));
  if (!f.output_dir.empty()) cfg.set("output_dir", f.output_dir);
  if (!f.init_path.empty()) cfg.set("init_path", f.init_path);
  for (const auto& o : f.overrides) cfg.apply_override(o);
  return lwpr2::ExperimentSpec::from_config(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online dynamics-model adaptation experiments"};
  app.require_subcommand(1);

  CommonFlags gen_flags, init_flags, offline_flags, online_flags, active_flags, soak_flags,
      flops_flags;
  std::string dataset_out;
  bool gen_stream = false;
  std::string online_protocol = "interference";
  std::optional<double> soak_minutes;

  auto* gen = app.add_subcommand("gen-data", "generate the sysid dataset or a stream as JSONL");
  add_common(gen, gen_flags);
  gen->add_option("--out", dataset_out, "output JSONL path")->required();
  gen->add_flag("--stream", gen_stream, "write the configured stream.* scenario instead of sysid");

  auto* train = app.add_subcommand("train-init", "fit standardizer, mixture, LWPR and network");
  add_common(train, init_flags);
  train->get_option("--init")->required();

  auto* offline = app.add_subcommand("run-offline", "frozen evaluation on a stream");
  add_common(offline, offline_flags);

  auto* online = app.add_subcommand("run-online", "prequential online adaptation");
  add_common(online, online_flags);
  online->add_option("--protocol", online_protocol, "stream, interference or mud")
      ->check(CLI::IsMember({"stream", "interference", "mud"}));

  auto* active = app.add_subcommand("run-active", "closed-loop driving with the adapted model");
  add_common(active, active_flags);

  auto* soak = app.add_subcommand("run-soak", "long alternating-regime run with restores");
  add_common(soak, soak_flags);
  soak->add_option("--minutes", soak_minutes, "simulated minutes");

  auto* flops = app.add_subcommand("bench-flops", "FLOP tables for the network and LWPR");
  add_common(flops, flops_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto spec = build_spec(gen_flags, {{"dataset_path", dataset_out}});
      std::cout << lwpr2::run_gen_data(spec, gen_stream);
    } else if (train->parsed()) {
      std::cout << lwpr2::run_train_init(build_spec(init_flags, {}));
    } else if (offline->parsed()) {
      std::cout << lwpr2::run_experiment(
          build_spec(offline_flags, {{"mode", "offline"}, {"protocol", "stream"}}));
    } else if (online->parsed()) {
      std::cout << lwpr2::run_experiment(
          build_spec(online_flags, {{"mode", "online"}, {"protocol", online_protocol}}));
    } else if (active->parsed()) {
      std::cout << lwpr2::run_experiment(
          build_spec(active_flags, {{"mode", "active"}, {"protocol", "active"}}));
    } else if (soak->parsed()) {
      std::vector<std::pair<std::string, std::string>> fixed{{"mode", "online"},
                                                             {"protocol", "soak"}};
      if (soak_minutes) fixed.emplace_back("soak.minutes", std::to_string(*soak_minutes));
      std::cout << lwpr2::run_experiment(build_spec(soak_flags, fixed));
    } else if (flops->parsed()) {
      std::cout << lwpr2::run_bench_flops(build_spec(flops_flags, {}));
    }
  } catch (const lwpr2::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
