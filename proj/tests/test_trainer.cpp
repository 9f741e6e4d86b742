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
#include "lwpr2/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace lwpr2;

namespace {

Dataset scripted_laps(Direction dir, double speed, int laps, std::uint64_t seed,
                      RegimeSpec regime = RegimeSpec::nominal()) {
  const Track track(make_elliptical_track(12.0, 8.0, 240, 3.0), dir);
  DriveOptions opts;
  opts.laps = laps;
  opts.target_speed = speed;
  opts.noise_fraction = 0.01;
  opts.steer_dither = 0.1;
  opts.throttle_dither = 0.2;
  opts.seed = seed;
  const DatasetResult r = generate_dataset(track, VehicleParams{}, regime, opts);
  REQUIRE(r.termination == Termination::completed);
  return r.pairs;
}

Dataset small_sysid() {
  Dataset out;
  std::uint64_t seed = 1;
  for (Direction dir : {Direction::cw, Direction::ccw}) {
    for (double speed : {3.0, 5.0}) {
      const Dataset d = scripted_laps(dir, speed, 2, seed++);
      out.insert(out.end(), d.begin(), d.end());
    }
  }
  return out;
}

InitConfig small_init() {
  InitConfig cfg;
  cfg.gmm_k_max = 6;
  cfg.gmm_restarts = 1;
  cfg.gmm_max_points = 2000;
  cfg.net_steps = 1500;
  cfg.seed = 5;
  return cfg;
}

const InitializedModels& shared_init() {
  static const InitializedModels init = initialize_joint(small_sysid(), small_init());
  return init;
}

GradientVector random_gradient(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  GradientVector v(kNumParams);
  for (int i = 0; i < kNumParams; ++i) v[i] = g(rng);
  return v;
}

TrainingPair pair_at(double v) {
  TrainingPair p;
  p.x = Input::Constant(v);
  p.y = Target::Constant(-v);
  p.t = v;
  return p;
}

}  // namespace

TEST_CASE("constrained alpha") {
  std::mt19937_64 rng(1);
  const GradientVector g = random_gradient(rng);
  CHECK(constrained_alpha(g, g) == 1.0);
  CHECK(constrained_alpha(-2.0 * g, g) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(constrained_alpha(g, GradientVector::Zero(kNumParams)) == 1.0);
  CHECK_THROWS_AS(constrained_alpha(g, GradientVector::Zero(3)), DomainError);

  int active = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const GradientVector gl = random_gradient(rng);
    // alpha < 1 exactly when 0.09 + c^2 < c.
    const double c = 0.001 * (trial % 1500);
    const GradientVector gid = 0.3 * random_gradient(rng) - c * gl;
    const double alpha = constrained_alpha(gl, gid);
    const double d = gl.dot(gid);
    const double n = gid.squaredNorm();
    double best = 0.0;
    for (int i = 0; i <= 10000; ++i) {
      const double a = i * 1e-4;
      if (a * d + n >= 0.0) best = a;
    }
    CHECK(std::abs(alpha - best) <= 1e-4);
    CHECK((alpha * gl + gid).dot(gid) >= -1e-12 * n);
    if (alpha < 1.0) {
      ++active;
      CHECK(std::abs(alpha * d + n) <= 1e-9 * n);
    }
  }
  CHECK(active > 100);
}

TEST_CASE("operating set is a ring of the newest pairs") {
  LocalOperatingSet ring(5);
  for (int i = 0; i < 5; ++i) ring.push(pair_at(i));
  CHECK(ring.size() == 5);
  ring.push(pair_at(5));
  CHECK(ring.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(ring.at(i).t == static_cast<double>(i + 1));
  for (int i = 6; i < 13; ++i) ring.push(pair_at(i));
  for (std::size_t i = 0; i < 5; ++i) CHECK(ring.at(i).t == static_cast<double>(i + 8));
  CHECK_THROWS_AS(ring.at(5), DomainError);

  const LocalOperatingSet back = LocalOperatingSet::from_json(ring.to_json());
  for (std::size_t i = 0; i < 5; ++i) CHECK(back.at(i).x == ring.at(i).x);

  std::mt19937_64 rng(2);
  std::vector<int> hits(5, 0);
  for (const TrainingPair& p : ring.sample(50000, rng)) ++hits[static_cast<std::size_t>(p.t) - 8];
  for (int h : hits) CHECK(std::abs(h - 10000) < 4 * std::sqrt(10000 * 0.8));

  CHECK_THROWS_AS(LocalOperatingSet(0), DomainError);
  CHECK_THROWS_AS(LocalOperatingSet(3).sample(1, rng), DomainError);
}

TEST_CASE("trainer configuration") {
  TrainerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.active_preset().lr == cfg.lr / 2);
  cfg.ring_capacity = 200;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = TrainerConfig{};
  cfg.synth_batch = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  CHECK(parse_method("lwpr-only") == Method::lwpr_only);
  CHECK(to_string(Method::lwpr2) == "lwpr2");
  CHECK_THROWS(parse_method("ewc"));
}

TEST_CASE("synthetic batch from a point mixture and a constant LWPR") {
  const Input mu = Input::Constant(0.4);
  const GmmModel gmm = fit_em(std::vector<Input>(20, mu), 1, {}, 0);
  LwprEnsemble lwpr;
  TrainingPair p;
  p.x = mu;
  p.y << 1.5, -2.0, 0.25, 3.0;
  lwpr.update(p);
  const Dataset batch = synth_batch(gmm, lwpr, 1, std::uint64_t{3});
  REQUIRE(batch.size() == 1);
  CHECK((batch[0].x - mu).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((batch[0].y - p.y).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(batch[0].synthetic);

  SUBCASE("fails when every draw extrapolates") {
    const GmmModel far = fit_em(std::vector<Input>(20, Input::Constant(50.0)), 1, {}, 0);
    CHECK_THROWS_AS(synth_batch(far, lwpr, 8, std::uint64_t{1}), SynthesisError);
    CHECK_THROWS_AS(synth_batch(gmm, lwpr, 0, std::uint64_t{1}), DomainError);
  }
}

TEST_CASE("synthetic batches from initialized models") {
  const InitializedModels& init = shared_init();
  const Dataset a = synth_batch(*init.gmm, init.lwpr, 256, std::uint64_t{9});
  const Dataset b = synth_batch(*init.gmm, init.lwpr, 256, std::uint64_t{9});
  REQUIRE(a.size() == 256);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
  }
  // Standardized sysid targets have mean 0 and unit spread per channel.
  const Dataset sysid = small_sysid();
  Target mean_sys = Target::Zero(), sd_sys = Target::Zero();
  for (const TrainingPair& p : sysid) mean_sys += init.standardizer.target(p.y);
  mean_sys /= static_cast<double>(sysid.size());
  for (const TrainingPair& p : sysid) {
    sd_sys += (init.standardizer.target(p.y) - mean_sys).cwiseAbs2();
  }
  sd_sys = (sd_sys / static_cast<double>(sysid.size())).cwiseSqrt();
  Target mean_syn = Target::Zero();
  for (const TrainingPair& p : a) mean_syn += p.y;
  mean_syn /= 256.0;
  for (int c = 0; c < kOutputDim; ++c) {
    CHECK(std::abs(mean_syn[c] - mean_sys[c]) <= 3.0 * sd_sys[c] / std::sqrt(256.0));
  }
}

TEST_CASE("constrained update") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  const MlpParams net = MlpParams::random_init(2);
  Dataset real(32), synth(32);
  for (std::size_t i = 0; i < 32; ++i) {
    for (int k = 0; k < kInputDim; ++k) {
      real[i].x[k] = g(rng);
      synth[i].x[k] = g(rng);
    }
    for (int k = 0; k < kOutputDim; ++k) {
      real[i].y[k] = g(rng);
      synth[i].y[k] = g(rng);
    }
  }

  SUBCASE("same batch on both sides is ADAM with a doubled gradient") {
    const UpdateResult r = constrained_update(net, AdamState{}, real, real, 1e-3);
    const AdamResult ref = adam_step(net, AdamState{}, 2.0 * mse_gradient(net, real).grad, 1e-3);
    CHECK(r.report.alpha == 1.0);
    CHECK(r.net == ref.params);
    CHECK(r.adam == ref.state);
  }
  SUBCASE("aligned gradients give the unconstrained joint step") {
    const GradientVector gl = mse_gradient(net, real).grad;
    const GradientVector gid = mse_gradient(net, synth).grad;
    const UpdateResult r = constrained_update(net, AdamState{}, real, synth, 1e-3);
    if (gl.dot(gid) >= 0.0) {
      CHECK(r.report.alpha == 1.0);
      CHECK(r.net == adam_step(net, AdamState{}, gl + gid, 1e-3).params);
    } else {
      CHECK(r.report.alpha < 1.0);
    }
    CHECK(r.report.mse_real == doctest::Approx(mse_loss(net, real)).epsilon(1e-12));
    CHECK(r.report.mse_synth == doctest::Approx(mse_loss(net, synth)).epsilon(1e-12));
  }
  SUBCASE("a perfectly fitted synthetic batch reduces to plain SGD") {
    Dataset fitted = synth;
    for (TrainingPair& p : fitted) p.y = net.forward(p.x);
    const UpdateResult r = constrained_update(net, AdamState{}, real, fitted, 1e-3);
    const UpdateResult s = sgd_update(net, AdamState{}, real, 1e-3);
    CHECK(r.net == s.net);
    CHECK(r.adam == s.adam);
  }
}

TEST_CASE("constraint holds on every step of a long run") {
  const InitializedModels& init = shared_init();
  TrainerConfig cfg;
  cfg.seed = 3;
  cfg.lr = 1e-3;
  Trainer trainer(init, cfg);
  const Dataset stream = scripted_laps(Direction::cw, 4.0, 2, 77, RegimeSpec::mud());
  REQUIRE(stream.size() >= 1000);
  long steps = 0, active = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const IngestReport r = trainer.ingest(stream[i]);
    REQUIRE(r.step);
    if (r.step->skipped) continue;
    ++steps;
    CHECK(r.step->inner_product >= -1e-12 * r.step->g_id_norm2);
    if (r.step->alpha < 1.0) ++active;
  }
  CHECK(steps == 1000);
  MESSAGE("steps with alpha < 1: " << active);
}

TEST_CASE("ingest") {
  const InitializedModels& init = shared_init();
  const Dataset stream = scripted_laps(Direction::ccw, 4.5, 1, 21);

  SUBCASE("first pair is scored by the initial network") {
    Trainer t(init, TrainerConfig{});
    const IngestReport r = t.ingest(stream[0]);
    CHECK(t.local_set().size() == 1);
    const Target expect =
        init.standardizer.target_raw(init.net.forward(init.standardizer.input(stream[0].x)));
    CHECK(r.prediction == expect);
    CHECK(r.error_raw == expect - stream[0].y);
  }

  SUBCASE("replay without learning equals offline evaluation") {
    TrainerConfig cfg;
    cfg.method = Method::none;
    Trainer t(init, cfg);
    for (const TrainingPair& p : stream) {
      const IngestReport r = t.ingest(p);
      const Target offline =
          init.standardizer.target_raw(init.net.forward(init.standardizer.input(p.x)));
      CHECK(r.prediction == offline);
      CHECK_FALSE(r.step);
    }
    CHECK(t.network() == init.net);
    CHECK(t.lwpr().checksum() == init.lwpr.checksum());
  }

  SUBCASE("every score comes from the state before the pair") {
    for (Method m : {Method::sgd, Method::lwpr2, Method::lwpr_only}) {
      TrainerConfig cfg;
      cfg.method = m;
      Trainer t(init, cfg);
      for (std::size_t i = 0; i < 200; ++i) {
        const Target spy = t.predict(stream[i].x);
        const IngestReport r = t.ingest(stream[i]);
        CHECK(r.prediction == spy);
      }
    }
  }

  SUBCASE("non-finite pairs are dropped") {
    Trainer t(init, TrainerConfig{});
    TrainingPair bad = stream[0];
    bad.y[2] = std::nan("");
    const IngestReport r = t.ingest(bad);
    CHECK(r.dropped);
    CHECK(t.local_set().empty());
    CHECK(t.ingested() == 0);
  }

  SUBCASE("the mixture never changes") {
    const std::uint64_t before = init.gmm->checksum();
    Trainer t(init, TrainerConfig{});
    for (std::size_t i = 0; i < 300; ++i) t.ingest(stream[i]);
    CHECK(t.gmm().checksum() == before);
    CHECK(&t.gmm() == init.gmm.get());
  }

  SUBCASE("snapshots are published after each step") {
    Trainer t(init, TrainerConfig{});
    const auto first = t.slot()->load();
    t.ingest(stream[0]);
    const auto second = t.slot()->load();
    CHECK(first != second);
    CHECK(*first == init.net);
    CHECK(*second == t.network());
  }
}

TEST_CASE("checkpoint restore continues bit for bit") {
  const InitializedModels& init = shared_init();
  const Dataset stream = scripted_laps(Direction::cw, 4.5, 1, 31);
  TrainerConfig cfg;
  cfg.seed = 8;
  Trainer a(init, cfg);
  const std::size_t half = stream.size() / 2;
  for (std::size_t i = 0; i < half; ++i) a.ingest(stream[i]);
  Trainer b = Trainer::restore(nlohmann::json::parse(a.checkpoint().dump()));
  for (std::size_t i = half; i < stream.size(); ++i) {
    const IngestReport ra = a.ingest(stream[i]);
    const IngestReport rb = b.ingest(stream[i]);
    CHECK(ra.prediction == rb.prediction);
    REQUIRE(ra.step);
    REQUIRE(rb.step);
    CHECK(ra.step->alpha == rb.step->alpha);
  }
  CHECK(a.network() == b.network());
  CHECK(a.adam() == b.adam());
  CHECK(a.lwpr().checksum() == b.lwpr().checksum());
  CHECK(a.checkpoint() == b.checkpoint());
}

TEST_CASE("joint initialization") {
  SUBCASE("tiny dataset beats a constant predictor") {
    Dataset tiny = scripted_laps(Direction::cw, 3.0, 1, 41);
    tiny.resize(100);
    InitConfig cfg = small_init();
    cfg.gmm_k_max = 3;
    cfg.net_steps = 500;
    const InitializedModels m = initialize_joint(tiny, cfg);
    Dataset std_data;
    for (const TrainingPair& p : tiny) std_data.push_back(m.standardizer.pair(p));
    // Standardized targets have zero mean, so the best constant has MSE equal
    // to the summed per-channel variance.
    double constant = 0.0;
    for (const TrainingPair& p : std_data) constant += p.y.squaredNorm();
    constant /= static_cast<double>(std_data.size());
    CHECK(mse_loss(m.net, std_data) < constant);
    CHECK_THROWS_AS(initialize_joint(Dataset{}, cfg), DomainError);
  }

  SUBCASE("deterministic") {
    Dataset data = scripted_laps(Direction::ccw, 3.0, 1, 42);
    InitConfig cfg = small_init();
    cfg.net_steps = 200;
    const InitializedModels a = initialize_joint(data, cfg);
    const InitializedModels b = initialize_joint(data, cfg);
    CHECK(a.net == b.net);
    CHECK(a.gmm->checksum() == b.gmm->checksum());
    CHECK(a.lwpr.checksum() == b.lwpr.checksum());
    const InitializedModels c = InitializedModels::from_json(nlohmann::json::parse(a.to_json().dump()));
    CHECK(c.net == a.net);
    CHECK(c.lwpr.checksum() == a.lwpr.checksum());
    CHECK(c.gmm->checksum() == a.gmm->checksum());
  }
}

TEST_CASE("the identity constraint costs little accuracy at initialization") {
  Dataset sysid;
  std::uint64_t seed = 100;
  for (Direction dir : {Direction::cw, Direction::ccw}) {
    for (double speed : {3.0, 5.0}) {
      const Dataset d = scripted_laps(dir, speed, 10, seed++);
      sysid.insert(sysid.end(), d.begin(), d.end());
    }
  }
  const InitConfig cfg;
  const InitializedModels joint = initialize_joint(sysid, cfg);
  Dataset sysid_std;
  for (const TrainingPair& p : sysid) sysid_std.push_back(joint.standardizer.pair(p));
  const MlpParams plain = train_plain_network(sysid_std, cfg);

  double joint_sse = 0.0, plain_sse = 0.0;
  std::size_t n = 0;
  for (Direction dir : {Direction::cw, Direction::ccw}) {
    for (const TrainingPair& raw : scripted_laps(dir, 4.0, 1, 500 + n)) {
      const TrainingPair p = joint.standardizer.pair(raw);
      joint_sse += (joint.net.forward(p.x) - p.y).squaredNorm();
      plain_sse += (plain.forward(p.x) - p.y).squaredNorm();
      ++n;
    }
  }
  MESSAGE("held-out MSE joint " << joint_sse / n << " plain " << plain_sse / n);
  CHECK(joint_sse <= 1.2 * plain_sse);
}
