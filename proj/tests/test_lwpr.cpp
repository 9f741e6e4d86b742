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
#include "lwpr2/lwpr.hpp"
#include "lwpr2/standardizer.hpp"
#include "lwpr2/trainer.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace lwpr2;

namespace {

// Builds a model holding exactly the given fields.
LwprModel model_with(const std::vector<ReceptiveField>& fields, const LwprConfig& cfg = {}) {
  nlohmann::json j = LwprModel(cfg).to_json();
  for (const ReceptiveField& rf : fields) {
    auto arr = [](const auto& m) {
      return std::vector<double>(m.data(), m.data() + m.size());
    };
    j["fields"].push_back({{"center", arr(rf.center)},
                           {"metric_diag", arr(rf.metric_diag)},
                           {"coeffs", arr(rf.coeffs)},
                           {"offset", rf.offset},
                           {"cov", arr(rf.cov)},
                           {"cross", arr(rf.cross)},
                           {"weight_sum", rf.weight_sum},
                           {"activation_count", rf.activation_count}});
  }
  return LwprModel::from_json(j);
}

ReceptiveField random_field(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  ReceptiveField rf;
  for (int i = 0; i < kInputDim; ++i) {
    rf.center[i] = g(rng);
    rf.metric_diag[i] = u(rng);
    rf.coeffs[i] = g(rng);
  }
  rf.offset = g(rng);
  return rf;
}

double scalar_activation(const ReceptiveField& rf, const Input& x) {
  double d2 = 0.0;
  for (int i = 0; i < kInputDim; ++i) {
    const double d = x[i] - rf.center[i];
    d2 += rf.metric_diag[i] * d * d;
  }
  return std::exp(-0.5 * d2);
}

// Normalized weighted blend of local predictions, no cutoff.
double brute_force(const std::vector<ReceptiveField>& fields, const Input& x) {
  double num = 0.0, den = 0.0;
  for (const ReceptiveField& rf : fields) {
    const double w = scalar_activation(rf, x);
    double local = rf.offset;
    for (int i = 0; i < kInputDim; ++i) local += rf.coeffs[i] * (x[i] - rf.center[i]);
    num += w * local;
    den += w;
  }
  return num / den;
}

Input unit(int axis) {
  Input e = Input::Zero();
  e[axis] = 1.0;
  return e;
}

}  // namespace

TEST_CASE("activation") {
  ReceptiveField rf;
  rf.center << 1, 2, 3, 4, 5, 6;
  CHECK(rf.activation(rf.center) == 1.0);
  for (int axis = 0; axis < kInputDim; ++axis) {
    CHECK(rf.activation(rf.center + unit(axis)) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  }
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const ReceptiveField r = random_field(rng);
    Input x;
    for (int i = 0; i < kInputDim; ++i) x[i] = r.center[i] + g(rng);
    CHECK(std::abs(r.activation(x) - scalar_activation(r, x)) <= 1e-12);
  }
}

TEST_CASE("prediction examples") {
  ReceptiveField a;
  a.offset = 3.5;
  CHECK(model_with({a}).predict(Input::Random()).value == 3.5);

  ReceptiveField left, right;
  left.center = Input::Constant(0.5);
  right.center = Input::Constant(-0.5);
  left.offset = 2.0;
  right.offset = 7.0;
  const LwprPrediction p = model_with({left, right}).predict(Input::Zero());
  CHECK(p.value == doctest::Approx(4.5).epsilon(1e-15));
  CHECK(p.total_weight == doctest::Approx(2 * std::exp(-0.5 * 6 * 0.25)).epsilon(1e-15));
  CHECK_FALSE(p.extrapolation);

  CHECK_THROWS_AS(LwprModel().predict(Input::Zero()), DomainError);
}

TEST_CASE("prediction matches the brute-force blend") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.7);
  for (int t = 0; t < 200; ++t) {
    std::vector<ReceptiveField> fields;
    for (int k = 0; k < 5; ++k) fields.push_back(random_field(rng));
    const LwprModel m = model_with(fields);
    Input x;
    for (int i = 0; i < kInputDim; ++i) x[i] = g(rng);
    const LwprPrediction p = m.predict(x);
    REQUIRE_FALSE(p.extrapolation);
    // Fields under the activation cutoff are skipped; they can shift the
    // blend by at most sum(w_j * |l_j - y|) / sum(w_kept).
    const double full = brute_force(fields, x);
    double kept = 0.0, skipped = 0.0;
    for (const ReceptiveField& rf : fields) {
      const double w = scalar_activation(rf, x);
      if (w < m.config().activation_cutoff) {
        skipped += w * std::abs(rf.local_prediction(x) - full);
      } else {
        kept += w;
      }
    }
    CHECK(std::abs(p.value - full) <= 1e-9 * std::max(1.0, std::abs(full)) + skipped / kept);
    if (skipped == 0.0) CHECK(std::abs(p.value - full) <= 1e-9 * std::max(1.0, std::abs(full)));
  }
}

TEST_CASE("far inputs fall back to the nearest field") {
  ReceptiveField a, b;
  a.center = Input::Zero();
  b.center = Input::Constant(3.0);
  a.offset = 1.0;
  b.offset = -1.0;
  b.coeffs = Input::Constant(0.5);
  const LwprModel m = model_with({a, b});
  const Input x = Input::Constant(20.0);
  const LwprPrediction p = m.predict(x);
  CHECK(p.extrapolation);
  CHECK(p.value == b.local_prediction(x));
  CHECK(p.total_weight < 1e-8);
}

TEST_CASE("partition of unity") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<ReceptiveField> fields;
    for (int k = 0; k < 8; ++k) {
      ReceptiveField rf = random_field(rng);
      rf.coeffs.setZero();
      rf.offset = -2.25;
      fields.push_back(rf);
    }
    const LwprPrediction p = model_with(fields).predict(fields[3].center);
    CHECK(p.value == doctest::Approx(-2.25).epsilon(1e-14));
  }
}

TEST_CASE("update semantics") {
  LwprConfig cfg;
  SUBCASE("first sample creates a field that reproduces it") {
    LwprModel m(cfg);
    const Input x0 = Input::Constant(0.3);
    const UpdateReport r = m.update(x0, 1.7);
    CHECK(r.field_created);
    REQUIRE(m.fields().size() == 1);
    CHECK(m.fields()[0].center == x0);
    CHECK(m.predict(x0).value == 1.7);
  }
  SUBCASE("a sample below w_gen creates a second field and leaves the first") {
    LwprModel m(cfg);
    m.update(Input::Zero(), 1.0);
    const ReceptiveField before = m.fields()[0];
    // Activation exp(-0.5 * 9) < 0.1
    const UpdateReport r = m.update(3.0 * unit(0), 4.0);
    CHECK(r.field_created);
    CHECK(r.fields_updated == 0);
    REQUIRE(m.fields().size() == 2);
    CHECK(m.fields()[1].center == 3.0 * unit(0));
    CHECK(m.fields()[0].coeffs == before.coeffs);
    CHECK(m.fields()[0].offset == before.offset);
  }
  SUBCASE("an activated field decays and absorbs the sample") {
    LwprModel m(cfg);
    m.update(Input::Zero(), 1.0);
    const ReceptiveField before = m.fields()[0];
    const Input x = 0.5 * unit(2);
    const double w = std::exp(-0.5 * 0.25);
    const UpdateReport r = m.update(x, 2.0);
    CHECK_FALSE(r.field_created);
    CHECK(r.fields_updated == 1);
    const ReceptiveField& rf = m.fields()[0];
    Regressor z;
    z << 1.0, x - before.center;
    const RegressorCov cov = cfg.forgetting * before.cov + w * z * z.transpose();
    CHECK((rf.cov - cov).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(rf.weight_sum == doctest::Approx(cfg.forgetting + w).epsilon(1e-15));
    // Coefficients solve the ridge-regularized normal equations.
    const Regressor theta =
        (rf.cov + cfg.ridge * RegressorCov::Identity()).fullPivLu().solve(rf.cross);
    CHECK(rf.offset == doctest::Approx(theta[0]).epsilon(1e-10));
    CHECK((rf.coeffs - theta.tail<kInputDim>()).cwiseAbs().maxCoeff() <= 1e-9);
  }
  SUBCASE("non-finite data is rejected") {
    LwprModel m(cfg);
    CHECK_THROWS_AS(m.update(Input::Constant(std::nan("")), 1.0), DomainError);
    CHECK_THROWS_AS(m.update(Input::Zero(), std::numeric_limits<double>::infinity()), DomainError);
    CHECK(m.fields().empty());
  }
  SUBCASE("invalid configuration") {
    LwprConfig bad;
    bad.w_gen = 1.0;
    CHECK_THROWS_AS(LwprModel{bad}, DomainError);
    bad = LwprConfig{};
    bad.init_metric_diag[4] = 0.0;
    CHECK_THROWS_AS(LwprModel{bad}, DomainError);
    bad = LwprConfig{};
    bad.forgetting = 0.0;
    CHECK_THROWS_AS(LwprModel{bad}, DomainError);
  }
}

TEST_CASE("learns a linear function on a segment") {
  LwprConfig cfg;
  cfg.init_metric_diag = Input::Constant(4.0);
  LwprModel m(cfg);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ScalarSample> data;
  for (int i = 0; i < 1000; ++i) {
    Input x = Input::Zero();
    x[0] = u(rng);
    data.push_back({x, 2.0 * x[0] + 1.0});
  }
  for (const ScalarSample& s : data) m.update(s.x, s.y);
  for (int i = 0; i <= 100; ++i) {
    Input x = Input::Zero();
    x[0] = -1.0 + 0.02 * i;
    CHECK(std::abs(m.predict(x).value - (2.0 * x[0] + 1.0)) <= 0.05);
  }
}

TEST_CASE("field count never decreases") {
  LwprModel m;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 2.0);
  std::size_t prev = 0;
  for (int i = 0; i < 2000; ++i) {
    Input x;
    for (int k = 0; k < kInputDim; ++k) x[k] = g(rng);
    m.update(x, x.sum());
    CHECK(m.fields().size() >= prev);
    prev = m.fields().size();
  }
}

TEST_CASE("updates in one cluster leave a distant cluster alone") {
  LwprConfig cfg;
  LwprModel m(cfg);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.3);
  const Input ca = Input::Zero();
  const Input cb = Input::Constant(5.0);
  auto sample = [&](const Input& c) {
    Input x;
    for (int k = 0; k < kInputDim; ++k) x[k] = c[k] + g(rng);
    return x;
  };
  for (int i = 0; i < 500; ++i) {
    const Input xa = sample(ca);
    m.update(xa, xa.sum());
    const Input xb = sample(cb);
    m.update(xb, -xb.sum());
  }
  std::vector<std::size_t> b_fields;
  double max_cross = 0.0;
  for (std::size_t i = 0; i < m.fields().size(); ++i) {
    if ((m.fields()[i].center - cb).norm() < (m.fields()[i].center - ca).norm()) b_fields.push_back(i);
  }
  for (std::size_t i : b_fields) {
    for (std::size_t j = 0; j < m.fields().size(); ++j) {
      if (std::find(b_fields.begin(), b_fields.end(), j) != b_fields.end()) continue;
      max_cross = std::max(max_cross, m.fields()[i].activation(m.fields()[j].center));
    }
  }
  REQUIRE(max_cross < 1e-12);

  std::vector<Input> probes;
  std::vector<double> before;
  for (int i = 0; i < 50; ++i) {
    probes.push_back(sample(cb));
    before.push_back(m.predict(probes.back()).value);
  }
  std::vector<ReceptiveField> snapshot;
  for (std::size_t i : b_fields) snapshot.push_back(m.fields()[i]);

  for (int i = 0; i < 10000; ++i) {
    const Input xa = sample(ca);
    m.update(xa, xa.sum() + 10.0);
  }
  for (std::size_t k = 0; k < b_fields.size(); ++k) {
    const ReceptiveField& rf = m.fields()[b_fields[k]];
    CHECK(rf.cov == snapshot[k].cov);
    CHECK(rf.cross == snapshot[k].cross);
    CHECK(rf.coeffs == snapshot[k].coeffs);
    CHECK(rf.offset == snapshot[k].offset);
    CHECK(rf.weight_sum == snapshot[k].weight_sum);
  }
  double drift = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    drift = std::max(drift, std::abs(m.predict(probes[i]).value - before[i]));
  }
  CHECK(drift < 1e-9);
}

TEST_CASE("batch training") {
  std::vector<ScalarSample> one{{Input::Constant(0.1), 2.0}};
  LwprModel m;
  CHECK(train_batch(m, one, 1, 0) == 1);
  CHECK_THROWS_AS(train_batch(m, {}, 1, 0), DomainError);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ScalarSample> data;
  for (int i = 0; i < 300; ++i) {
    Input x;
    for (int k = 0; k < kInputDim; ++k) x[k] = g(rng);
    data.push_back({x, std::sin(x[0]) + x[1] * x[2]});
  }
  LwprModel a, b;
  train_batch(a, data, 3, 42);
  train_batch(b, data, 3, 42);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("beats a global linear fit on a held-out lap") {
  const Track track(make_elliptical_track(12.0, 8.0, 240, 3.0), Direction::cw);
  Dataset train;
  for (double speed : {3.0, 5.0}) {
    DriveOptions opts;
    opts.laps = 3;
    opts.target_speed = speed;
    opts.noise_fraction = 0.01;
    opts.steer_dither = 0.1;
    opts.throttle_dither = 0.2;
    opts.seed = static_cast<std::uint64_t>(speed * 10);
    const DatasetResult r = generate_dataset(track, VehicleParams{}, RegimeSpec::nominal(), opts);
    REQUIRE(r.termination == Termination::completed);
    train.insert(train.end(), r.pairs.begin(), r.pairs.end());
  }
  DriveOptions held;
  held.laps = 1;
  held.target_speed = 4.0;
  held.noise_fraction = 0.01;
  held.steer_dither = 0.1;
  held.throttle_dither = 0.2;
  held.seed = 777;
  const Dataset test = generate_dataset(track, VehicleParams{}, RegimeSpec::nominal(), held).pairs;

  const Standardizer st = Standardizer::fit(train);
  Dataset train_std, test_std;
  for (const TrainingPair& p : train) train_std.push_back(st.pair(p));
  for (const TrainingPair& p : test) test_std.push_back(st.pair(p));

  const InitConfig init;
  LwprConfig cfg = init.lwpr;
  cfg.init_metric_diag = default_metric(train_std, cfg.w_gen, init.metric_fraction);
  LwprEnsemble lwpr(cfg);
  lwpr.train_batch(train_std, init.lwpr_epochs, 1);

  // Global least squares with an intercept, per channel.
  Eigen::MatrixXd a(train_std.size(), kInputDim + 1);
  Eigen::MatrixXd y(train_std.size(), kOutputDim);
  for (std::size_t i = 0; i < train_std.size(); ++i) {
    a(i, 0) = 1.0;
    a.row(i).tail(kInputDim) = train_std[i].x.transpose();
    y.row(i) = train_std[i].y.transpose();
  }
  const Eigen::MatrixXd beta = a.colPivHouseholderQr().solve(y);

  double lwpr_sse = 0.0, linear_sse = 0.0;
  for (const TrainingPair& p : test_std) {
    lwpr_sse += (lwpr.predict(p.x).value - p.y).squaredNorm();
    lwpr.update(p);
    Eigen::Matrix<double, 1, kInputDim + 1> row;
    row << 1.0, p.x.transpose();
    linear_sse += (row * beta - p.y.transpose()).squaredNorm();
  }
  MESSAGE("prequential LWPR " << lwpr_sse / test_std.size() << " vs linear "
                              << linear_sse / test_std.size());
  CHECK(lwpr_sse < linear_sse);
}

TEST_CASE("ensemble") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  LwprConfig cfg;
  cfg.init_metric_diag = Input::Constant(0.5);
  LwprEnsemble e(cfg);
  for (int i = 0; i < 500; ++i) {
    TrainingPair p;
    for (int k = 0; k < kInputDim; ++k) p.x[k] = g(rng);
    p.y << p.x[0], p.x[1] * p.x[2], std::sin(p.x[3]), 1.0;
    e.update(p);
  }
  for (int i = 0; i < 100; ++i) {
    Input x;
    for (int k = 0; k < kInputDim; ++k) x[k] = 3.0 * g(rng);
    const EnsemblePrediction p = e.predict(x);
    bool extrapolated = false;
    for (int c = 0; c < kOutputDim; ++c) {
      const LwprPrediction q = e.model(c).predict(x);
      CHECK(p.value[c] == q.value);
      CHECK(p.total_weight[c] == q.total_weight);
      extrapolated = extrapolated || q.extrapolation;
    }
    CHECK(p.extrapolation == extrapolated);
  }

  SUBCASE("checkpoint round trip is bit exact") {
    const LwprEnsemble back = LwprEnsemble::from_json(nlohmann::json::parse(e.to_json().dump()));
    CHECK(back.checksum() == e.checksum());
    for (int i = 0; i < 50; ++i) {
      Input x;
      for (int k = 0; k < kInputDim; ++k) x[k] = g(rng);
      CHECK(back.predict(x).value == e.predict(x).value);
    }
    nlohmann::json j = e.to_json();
    j["models"].erase(3);
    CHECK_THROWS_AS(LwprEnsemble::from_json(j), Error);
  }
}

TEST_CASE("default metric puts w_gen at the requested fraction of the range") {
  Dataset data(2);
  data[0].x = Input::Zero();
  data[1].x << 1, 2, 4, 8, 16, 32;
  const double w_gen = 0.1;
  const Input m = default_metric(data, w_gen, 0.2);
  for (int i = 0; i < kInputDim; ++i) {
    ReceptiveField rf;
    rf.metric_diag = m;
    CHECK(rf.activation(0.2 * data[1].x[i] * unit(i)) == doctest::Approx(w_gen).epsilon(1e-12));
  }
  CHECK_THROWS_AS(default_metric({}, 0.1), DomainError);
}

TEST_CASE("FLOP lower bound") {
  const auto rows = flop_lower_bound({162, 1409, 1738, 2336});
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].flops == 4050);
  CHECK(rows[1].flops == 35225);
  CHECK(rows[2].flops == 43450);
  CHECK(rows[3].flops == 58400);
  CHECK(rows[4].fields == 5645);
  CHECK(rows[4].flops == 141125);
  const auto empty = flop_lower_bound({0, 0, 0, 0});
  CHECK(empty[4].flops == 0);
  // 25 per field, independent of the implementation constant.
  for (const auto& r : rows) CHECK(r.flops == 25 * static_cast<long>(r.fields));
}
