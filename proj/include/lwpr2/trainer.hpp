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

#include "lwpr2/gmm.hpp"
#include "lwpr2/lwpr.hpp"
#include "lwpr2/mlp.hpp"
#include "lwpr2/standardizer.hpp"
#include "lwpr2/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lwpr2 {

// Adaptation strategies compared by the experiments.
enum class Method { none, sgd, lwpr2, lwpr_only };

Method parse_method(const std::string& text);
std::string to_string(Method m);

// Fixed-capacity ring of the most recent pairs.
class LocalOperatingSet {
 public:
  explicit LocalOperatingSet(std::size_t capacity);

  void push(const TrainingPair& pair);
  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return buf_.empty(); }
  // i = 0 is the oldest pair still held.
  const TrainingPair& at(std::size_t i) const;
  // Uniform draws with replacement.
  Dataset sample(std::size_t n, std::mt19937_64& rng) const;

  nlohmann::json to_json() const;
  static LocalOperatingSet from_json(const nlohmann::json& j);

 private:
  std::size_t capacity_;
  std::vector<TrainingPair> buf_;
  std::size_t next_ = 0;  // slot overwritten by the next push once full
};

struct TrainerConfig {
  Method method = Method::lwpr2;
  double lr = 1e-4;
  int real_batch = 64;
  int synth_batch = 64;
  int updates_per_ingest = 1;
  std::size_t ring_capacity = 1000;
  std::uint64_t seed = 0;

  void validate() const;
  // Halved learning rate for runs where the adapted model drives the vehicle.
  TrainerConfig active_preset() const;
  nlohmann::json to_json() const;
  static TrainerConfig from_json(const nlohmann::json& j);
};

// Largest a in [0, 1] with <a*g_local + g_id, g_id> >= 0.
double constrained_alpha(const GradientVector& g_local, const GradientVector& g_id);

struct StepReport {
  long step = 0;
  double alpha = 1.0;
  double mse_real = 0.0;
  double mse_synth = 0.0;
  // <alpha*G_L + G_ID, G_ID> of the applied direction.
  double inner_product = 0.0;
  double g_id_norm2 = 0.0;
  bool skipped = false;
};

class SynthesisError : public Error {
 public:
  using Error::Error;
};

// Synthetic pairs in standardized units: inputs from the mixture, targets
// from the LWPR ensemble. Draws whose prediction extrapolates are redrawn, up
// to 10*n attempts in total.
Dataset synth_batch(const GmmModel& gmm, const LwprEnsemble& lwpr, std::size_t n,
                    std::mt19937_64& rng);
Dataset synth_batch(const GmmModel& gmm, const LwprEnsemble& lwpr, std::size_t n,
                    std::uint64_t seed);

struct UpdateResult {
  MlpParams net;
  AdamState adam;
  StepReport report;
};

// ADAM step along alpha*G_L + G_ID, with G_L from the real batch and G_ID
// from the synthetic batch.
UpdateResult constrained_update(const MlpParams& net, const AdamState& adam,
                                std::span<const TrainingPair> real,
                                std::span<const TrainingPair> synth, double lr);

// ADAM step along G_L alone.
UpdateResult sgd_update(const MlpParams& net, const AdamState& adam,
                        std::span<const TrainingPair> real, double lr);

// Draws a real batch from the operating set and a synthetic batch from the
// mixture and LWPR, then applies constrained_update. A failed synthesis
// skips the step and leaves the network untouched.
UpdateResult update_step(const MlpParams& net, const AdamState& adam,
                         const LocalOperatingSet& local_set, const GmmModel& gmm,
                         const LwprEnsemble& lwpr, const TrainerConfig& cfg,
                         std::mt19937_64& rng);

// Baseline: same batching as update_step but only G_L.
UpdateResult run_sgd_baseline(const MlpParams& net, const AdamState& adam,
                              const LocalOperatingSet& local_set, const TrainerConfig& cfg,
                              std::mt19937_64& rng);

struct InitConfig {
  // Noisy finite-difference targets need the heavier ridge.
  LwprConfig lwpr{.ridge = 0.3};
  // When > 0 the LWPR metric is recomputed from the data with default_metric.
  double metric_fraction = 0.3;
  int lwpr_epochs = 5;
  int gmm_k_min = 1;
  int gmm_k_max = 16;
  int gmm_restarts = 2;
  EmOptions em;
  // Fit the mixture on at most this many evenly spaced points (0 = all).
  std::size_t gmm_max_points = 3000;
  long net_steps = 20000;
  double net_lr = 1e-3;
  int real_batch = 64;
  int synth_batch = 64;
  std::uint64_t seed = 0;
};

// Everything the trainer needs before streaming starts.
struct InitializedModels {
  Standardizer standardizer;
  std::shared_ptr<const GmmModel> gmm;
  LwprEnsemble lwpr;
  MlpParams net;
  std::vector<StepReport> reports;

  nlohmann::json to_json() const;
  static InitializedModels from_json(const nlohmann::json& j);
};

// Standardizes, selects the mixture by BIC, trains LWPR, then trains the
// network with constrained steps whose real batches come from the sysid set.
InitializedModels initialize_joint(const Dataset& sysid, const InitConfig& cfg);

// The same network training with plain G_L steps on the sysid set.
MlpParams train_plain_network(const Dataset& sysid_std, const InitConfig& cfg);

// Mutex-guarded handoff of immutable network snapshots to readers.
class SnapshotSlot {
 public:
  void publish(std::shared_ptr<const MlpParams> p) {
    std::lock_guard lock(mu_);
    current_ = std::move(p);
  }
  std::shared_ptr<const MlpParams> load() const {
    std::lock_guard lock(mu_);
    return current_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const MlpParams> current_;
};

struct IngestReport {
  long index = 0;
  Target prediction = Target::Zero();  // raw units, made before learning
  Target error_raw = Target::Zero();   // prediction - target
  Target error_std = Target::Zero();
  bool dropped = false;
  std::optional<StepReport> step;
};

// Single-writer online adaptation: prequential scoring, operating set, LWPR
// updates and network steps according to the configured method.
class Trainer {
 public:
  Trainer(const InitializedModels& init, const TrainerConfig& cfg);

  IngestReport ingest(const TrainingPair& raw);

  // Prediction of the model being scored (LWPR for lwpr_only), raw units.
  Target predict(const Input& raw) const;

  const MlpParams& network() const { return *net_; }
  std::shared_ptr<const MlpParams> snapshot() const { return net_; }
  std::shared_ptr<SnapshotSlot> slot() const { return slot_; }
  const LwprEnsemble& lwpr() const { return lwpr_; }
  const GmmModel& gmm() const { return *gmm_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const LocalOperatingSet& local_set() const { return ring_; }
  const AdamState& adam() const { return adam_; }
  const TrainerConfig& config() const { return cfg_; }
  long ingested() const { return ingested_; }
  long steps() const { return steps_; }

  // Full state: network, optimizer, LWPR, mixture, ring, RNG and counters.
  nlohmann::json checkpoint() const;
  static Trainer restore(const nlohmann::json& j);

 private:
  Trainer() = default;

  TrainerConfig cfg_;
  Standardizer standardizer_;
  std::shared_ptr<const GmmModel> gmm_;
  LwprEnsemble lwpr_;
  std::shared_ptr<const MlpParams> net_;
  AdamState adam_;
  LocalOperatingSet ring_{1};
  std::mt19937_64 rng_;
  long ingested_ = 0;
  long steps_ = 0;
  std::shared_ptr<SnapshotSlot> slot_ = std::make_shared<SnapshotSlot>();
};

}  // namespace lwpr2
