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


#include "lwpr2/trainer.hpp"

#include "lwpr2/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace lwpr2 {

Method parse_method(const std::string& text) {
  if (text == "none" || text == "base") return Method::none;
  if (text == "sgd") return Method::sgd;
  if (text == "lwpr2") return Method::lwpr2;
  if (text == "lwpr-only" || text == "lwpr_only" || text == "lwpr") return Method::lwpr_only;
  throw DomainError("unknown adaptation method '" + text + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::none:
      return "base";
    case Method::sgd:
      return "sgd";
    case Method::lwpr2:
      return "lwpr2";
    case Method::lwpr_only:
      return "lwpr-only";
  }
  return "unknown";
}

namespace {

nlohmann::json pair_to_json(const TrainingPair& p) {
  return {{"t", p.t}, {"x", to_json_array(p.x)}, {"y", to_json_array(p.y)}};
}

TrainingPair pair_from_json(const nlohmann::json& j) {
  TrainingPair p;
  p.t = j.at("t").get<double>();
  from_json_array(j.at("x"), p.x);
  from_json_array(j.at("y"), p.y);
  return p;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_state(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw Error("corrupt RNG state in checkpoint");
  return rng;
}

}  // namespace

LocalOperatingSet::LocalOperatingSet(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw DomainError("operating set capacity must be >= 1");
  buf_.reserve(capacity);
}

void LocalOperatingSet::push(const TrainingPair& pair) {
  if (buf_.size() < capacity_) {
    buf_.push_back(pair);
    return;
  }
  buf_[next_] = pair;
  next_ = (next_ + 1) % capacity_;
}

const TrainingPair& LocalOperatingSet::at(std::size_t i) const {
  if (i >= buf_.size()) throw DomainError("operating set index out of range");
  if (buf_.size() < capacity_) return buf_[i];
  return buf_[(next_ + i) % capacity_];
}

Dataset LocalOperatingSet::sample(std::size_t n, std::mt19937_64& rng) const {
  if (buf_.empty()) throw DomainError("cannot sample an empty operating set");
  std::uniform_int_distribution<std::size_t> pick(0, buf_.size() - 1);
  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(buf_[pick(rng)]);
  return out;
}

nlohmann::json LocalOperatingSet::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : buf_) pairs.push_back(pair_to_json(p));
  return {{"capacity", capacity_}, {"next", next_}, {"pairs", std::move(pairs)}};
}

LocalOperatingSet LocalOperatingSet::from_json(const nlohmann::json& j) {
  LocalOperatingSet s(j.at("capacity").get<std::size_t>());
  for (const auto& p : j.at("pairs")) s.buf_.push_back(pair_from_json(p));
  s.next_ = j.at("next").get<std::size_t>();
  if (s.buf_.size() > s.capacity_ || s.next_ >= s.capacity_) {
    throw Error("inconsistent operating set checkpoint");
  }
  return s;
}

void TrainerConfig::validate() const {
  if (!(lr > 0.0)) throw DomainError("learning rate must be > 0");
  if (real_batch < 1 || synth_batch < 1) throw DomainError("batch sizes must be >= 1");
  if (updates_per_ingest < 1) throw DomainError("updates_per_ingest must be >= 1");
  if (ring_capacity < 500 || ring_capacity > 1000) {
    throw DomainError("operating set capacity must be in [500, 1000]");
  }
}

TrainerConfig TrainerConfig::active_preset() const {
  TrainerConfig c = *this;
  c.lr = lr / 2.0;
  return c;
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"method", to_string(method)},
          {"lr", lr},
          {"real_batch", real_batch},
          {"synth_batch", synth_batch},
          {"updates_per_ingest", updates_per_ingest},
          {"ring_capacity", ring_capacity},
          {"seed", seed}};
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& j) {
  TrainerConfig c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.lr = j.at("lr").get<double>();
  c.real_batch = j.at("real_batch").get<int>();
  c.synth_batch = j.at("synth_batch").get<int>();
  c.updates_per_ingest = j.at("updates_per_ingest").get<int>();
  c.ring_capacity = j.at("ring_capacity").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

double constrained_alpha(const GradientVector& g_local, const GradientVector& g_id) {
  if (g_local.size() != g_id.size()) throw DomainError("gradient dimensions differ");
  const double d = g_local.dot(g_id);
  const double n = g_id.squaredNorm();
  if (n == 0.0 || d >= 0.0) return 1.0;
  return std::min(1.0, n / -d);
}

Dataset synth_batch(const GmmModel& gmm, const LwprEnsemble& lwpr, std::size_t n,
                    std::mt19937_64& rng) {
  if (n == 0) throw DomainError("synthetic batch size must be >= 1");
  Dataset out;
  out.reserve(n);
  const std::size_t max_attempts = 10 * n;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (attempts++ >= max_attempts) {
      throw SynthesisError("LWPR extrapolated on too many synthetic inputs");
    }
    TrainingPair p;
    p.x = gmm.sample_one(rng);
    const EnsemblePrediction pred = lwpr.predict(p.x);
    if (pred.extrapolation) continue;
    p.y = pred.value;
    p.synthetic = true;
    out.push_back(p);
  }
  return out;
}

Dataset synth_batch(const GmmModel& gmm, const LwprEnsemble& lwpr, std::size_t n,
                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return synth_batch(gmm, lwpr, n, rng);
}

UpdateResult constrained_update(const MlpParams& net, const AdamState& adam,
                                std::span<const TrainingPair> real,
                                std::span<const TrainingPair> synth, double lr) {
  const GradientResult local = mse_gradient(net, real);
  const GradientResult id = mse_gradient(net, synth);
  const double alpha = constrained_alpha(local.grad, id.grad);
  const GradientVector g = alpha * local.grad + id.grad;
  AdamResult a = adam_step(net, adam, g, lr);

  UpdateResult r{std::move(a.params), std::move(a.state), {}};
  r.report.step = r.adam.step;
  r.report.alpha = alpha;
  r.report.mse_real = local.loss;
  r.report.mse_synth = id.loss;
  r.report.inner_product = g.dot(id.grad);
  r.report.g_id_norm2 = id.grad.squaredNorm();
  return r;
}

UpdateResult sgd_update(const MlpParams& net, const AdamState& adam,
                        std::span<const TrainingPair> real, double lr) {
  const GradientResult local = mse_gradient(net, real);
  AdamResult a = adam_step(net, adam, local.grad, lr);
  UpdateResult r{std::move(a.params), std::move(a.state), {}};
  r.report.step = r.adam.step;
  r.report.alpha = 1.0;
  r.report.mse_real = local.loss;
  return r;
}

UpdateResult update_step(const MlpParams& net, const AdamState& adam,
                         const LocalOperatingSet& local_set, const GmmModel& gmm,
                         const LwprEnsemble& lwpr, const TrainerConfig& cfg,
                         std::mt19937_64& rng) {
  const Dataset real = local_set.sample(static_cast<std::size_t>(cfg.real_batch), rng);
  Dataset synth;
  try {
    synth = synth_batch(gmm, lwpr, static_cast<std::size_t>(cfg.synth_batch), rng);
  } catch (const SynthesisError&) {
    UpdateResult r{net, adam, {}};
    r.report.step = adam.step;
    r.report.skipped = true;
    return r;
  }
  return constrained_update(net, adam, real, synth, cfg.lr);
}

UpdateResult run_sgd_baseline(const MlpParams& net, const AdamState& adam,
                              const LocalOperatingSet& local_set, const TrainerConfig& cfg,
                              std::mt19937_64& rng) {
  const Dataset real = local_set.sample(static_cast<std::size_t>(cfg.real_batch), rng);
  return sgd_update(net, adam, real, cfg.lr);
}

namespace {

Dataset sample_dataset(const Dataset& data, std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(data[pick(rng)]);
  return out;
}

std::vector<Input> mixture_inputs(const Dataset& data, std::size_t max_points) {
  std::vector<Input> xs;
  if (max_points == 0 || data.size() <= max_points) {
    for (const auto& p : data) xs.push_back(p.x);
    return xs;
  }
  const double stride = static_cast<double>(data.size()) / static_cast<double>(max_points);
  for (std::size_t i = 0; i < max_points; ++i) {
    xs.push_back(data[static_cast<std::size_t>(i * stride)].x);
  }
  return xs;
}

}  // namespace

InitializedModels initialize_joint(const Dataset& sysid, const InitConfig& cfg) {
  if (sysid.empty()) throw DomainError("system identification dataset is empty");
  InitializedModels out;
  out.standardizer = Standardizer::fit(sysid);
  Dataset data;
  data.reserve(sysid.size());
  for (const auto& p : sysid) data.push_back(out.standardizer.pair(p));

  out.gmm = std::make_shared<const GmmModel>(select_k(mixture_inputs(data, cfg.gmm_max_points),
                                                      cfg.gmm_k_min, cfg.gmm_k_max,
                                                      cfg.gmm_restarts, cfg.em, cfg.seed));

  LwprConfig lcfg = cfg.lwpr;
  if (cfg.metric_fraction > 0.0) {
    lcfg.init_metric_diag = default_metric(data, lcfg.w_gen, cfg.metric_fraction);
  }
  out.lwpr = LwprEnsemble(lcfg);
  out.lwpr.train_batch(data, cfg.lwpr_epochs, cfg.seed + 1);

  std::mt19937_64 rng(cfg.seed + 2);
  MlpParams net = MlpParams::random_init(cfg.seed + 3);
  AdamState adam;
  for (long s = 0; s < cfg.net_steps; ++s) {
    const Dataset real = sample_dataset(data, static_cast<std::size_t>(cfg.real_batch), rng);
    Dataset synth;
    try {
      synth = synth_batch(*out.gmm, out.lwpr, static_cast<std::size_t>(cfg.synth_batch), rng);
    } catch (const SynthesisError&) {
      StepReport skipped;
      skipped.step = adam.step;
      skipped.skipped = true;
      out.reports.push_back(skipped);
      continue;
    }
    UpdateResult r = constrained_update(net, adam, real, synth, cfg.net_lr);
    net = std::move(r.net);
    adam = std::move(r.adam);
    out.reports.push_back(r.report);
  }
  out.net = std::move(net);
  return out;
}

MlpParams train_plain_network(const Dataset& sysid_std, const InitConfig& cfg) {
  if (sysid_std.empty()) throw DomainError("system identification dataset is empty");
  std::mt19937_64 rng(cfg.seed + 2);
  MlpParams net = MlpParams::random_init(cfg.seed + 3);
  AdamState adam;
  for (long s = 0; s < cfg.net_steps; ++s) {
    const Dataset real = sample_dataset(sysid_std, static_cast<std::size_t>(cfg.real_batch), rng);
    UpdateResult r = sgd_update(net, adam, real, cfg.net_lr);
    net = std::move(r.net);
    adam = std::move(r.adam);
  }
  return net;
}

nlohmann::json InitializedModels::to_json() const {
  return {{"version", 1},
          {"standardizer", standardizer.to_json()},
          {"gmm", gmm->to_json()},
          {"lwpr", lwpr.to_json()},
          {"network", net.to_json()}};
}

InitializedModels InitializedModels::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw Error("unsupported model bundle version");
  InitializedModels m;
  m.standardizer = Standardizer::from_json(j.at("standardizer"));
  m.gmm = std::make_shared<const GmmModel>(GmmModel::from_json(j.at("gmm")));
  m.lwpr = LwprEnsemble::from_json(j.at("lwpr"));
  m.net = MlpParams::from_json(j.at("network"));
  return m;
}

Trainer::Trainer(const InitializedModels& init, const TrainerConfig& cfg)
    : cfg_(cfg),
      standardizer_(init.standardizer),
      gmm_(init.gmm),
      lwpr_(init.lwpr),
      net_(std::make_shared<const MlpParams>(init.net)),
      ring_(cfg.ring_capacity),
      rng_(cfg.seed) {
  cfg_.validate();
  if (!gmm_) throw DomainError("trainer needs a fitted mixture");
  slot_->publish(net_);
}

Target Trainer::predict(const Input& raw) const {
  const Input x = standardizer_.input(raw);
  if (cfg_.method == Method::lwpr_only) {
    return standardizer_.target_raw(lwpr_.predict(x).value);
  }
  return standardizer_.target_raw(net_->forward(x));
}

IngestReport Trainer::ingest(const TrainingPair& raw) {
  IngestReport report;
  report.index = ingested_;
  if (!raw.finite()) {
    std::clog << "warning: dropping non-finite training pair at t=" << raw.t << "\n";
    report.dropped = true;
    return report;
  }
  ++ingested_;

  // Score before the pair can influence any model.
  report.prediction = predict(raw.x);
  report.error_raw = report.prediction - raw.y;
  report.error_std = report.error_raw.cwiseQuotient(standardizer_.out_scale);

  const TrainingPair pair = standardizer_.pair(raw);
  ring_.push(pair);
  if (cfg_.method == Method::lwpr2 || cfg_.method == Method::lwpr_only) lwpr_.update(pair);

  const bool learns = cfg_.method == Method::sgd || cfg_.method == Method::lwpr2;
  if (learns && ingested_ % cfg_.updates_per_ingest == 0) {
    UpdateResult r = cfg_.method == Method::lwpr2
                         ? update_step(*net_, adam_, ring_, *gmm_, lwpr_, cfg_, rng_)
                         : run_sgd_baseline(*net_, adam_, ring_, cfg_, rng_);
    if (!r.report.skipped) {
      net_ = std::make_shared<const MlpParams>(std::move(r.net));
      adam_ = std::move(r.adam);
      ++steps_;
      slot_->publish(net_);
    }
    report.step = r.report;
  }
  return report;
}

nlohmann::json Trainer::checkpoint() const {
  return {{"version", 1},
          {"config", cfg_.to_json()},
          {"standardizer", standardizer_.to_json()},
          {"gmm", gmm_->to_json()},
          {"lwpr", lwpr_.to_json()},
          {"network", net_->to_json()},
          {"adam", adam_.to_json()},
          {"ring", ring_.to_json()},
          {"rng", rng_state(rng_)},
          {"ingested", ingested_},
          {"steps", steps_}};
}

Trainer Trainer::restore(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw Error("unsupported trainer checkpoint version");
  Trainer t;
  t.cfg_ = TrainerConfig::from_json(j.at("config"));
  t.standardizer_ = Standardizer::from_json(j.at("standardizer"));
  t.gmm_ = std::make_shared<const GmmModel>(GmmModel::from_json(j.at("gmm")));
  t.lwpr_ = LwprEnsemble::from_json(j.at("lwpr"));
  t.net_ = std::make_shared<const MlpParams>(MlpParams::from_json(j.at("network")));
  t.adam_ = AdamState::from_json(j.at("adam"));
  t.ring_ = LocalOperatingSet::from_json(j.at("ring"));
  t.rng_ = rng_from_state(j.at("rng").get<std::string>());
  t.ingested_ = j.at("ingested").get<long>();
  t.steps_ = j.at("steps").get<long>();
  t.slot_->publish(t.net_);
  return t;
}

}  // namespace lwpr2
