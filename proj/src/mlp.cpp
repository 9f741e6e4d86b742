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


#include "lwpr2/mlp.hpp"

#include "lwpr2/serialize.hpp"

#include <cmath>
#include <random>

namespace lwpr2 {

namespace {

// tanh through the vectorized exp; within a few ulp of std::tanh.
template <typename Derived>
auto fast_tanh(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

}  // namespace

MlpParams::MlpParams() : flat_(GradientVector::Zero(kNumParams)) {}

MlpParams MlpParams::random_init(std::uint64_t seed) {
  MlpParams p;
  std::mt19937_64 rng(seed);
  auto fill = [&](int offset, int count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int i = 0; i < count; ++i) p.flat_[offset + i] = dist(rng);
  };
  fill(kOffW1, kHidden * kInputDim, kInputDim);
  fill(kOffB1, kHidden, kInputDim);
  fill(kOffW2, kHidden * kHidden, kHidden);
  fill(kOffB2, kHidden, kHidden);
  fill(kOffW3, kOutputDim * kHidden, kHidden);
  fill(kOffB3, kOutputDim, kHidden);
  return p;
}

MlpParams MlpParams::from_flat(const GradientVector& flat) {
  if (flat.size() != kNumParams) throw DomainError("parameter vector has wrong size");
  if (!flat.allFinite()) throw DomainError("parameters must be finite");
  MlpParams p;
  p.flat_ = flat;
  return p;
}

Target MlpParams::forward(const Input& x) const {
  const B1 h1 = fast_tanh(w1() * x + b1());
  const B1 h2 = fast_tanh(w2() * h1 + b2());
  return w3() * h2 + b3();
}

OutputBatch MlpParams::forward(const InputBatch& x) const {
  Eigen::MatrixXd h1 = w1() * x;
  h1.colwise() += b1();
  h1 = fast_tanh(h1);
  Eigen::MatrixXd h2 = w2() * h1;
  h2.colwise() += b2();
  h2 = fast_tanh(h2);
  OutputBatch out = w3() * h2;
  out.colwise() += b3();
  return out;
}

std::uint64_t MlpParams::checksum() const {
  return lwpr2::checksum(flat_.data(), static_cast<std::size_t>(flat_.size()));
}

nlohmann::json MlpParams::to_json() const {
  return {{"architecture", "6-32-32-4 tanh linear-out"}, {"params", to_json_array(flat_)}};
}

MlpParams MlpParams::from_json(const nlohmann::json& j) {
  if (j.at("architecture").get<std::string>() != "6-32-32-4 tanh linear-out") {
    throw Error("unsupported network architecture tag");
  }
  GradientVector flat;
  from_json_array(j.at("params"), flat);
  return from_flat(flat);
}

namespace {

void pack(std::span<const TrainingPair> batch, InputBatch& x, OutputBatch& y) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  x.resize(kInputDim, n);
  y.resize(kOutputDim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.col(i) = batch[static_cast<std::size_t>(i)].x;
    y.col(i) = batch[static_cast<std::size_t>(i)].y;
  }
}

}  // namespace

GradientResult mse_gradient(const MlpParams& p, std::span<const TrainingPair> batch) {
  if (batch.empty()) throw DomainError("gradient needs a nonempty batch");
  InputBatch x;
  OutputBatch y;
  pack(batch, x, y);
  const double n = static_cast<double>(batch.size());

  Eigen::MatrixXd h1 = p.w1() * x;
  h1.colwise() += p.b1();
  h1 = fast_tanh(h1);
  Eigen::MatrixXd h2 = p.w2() * h1;
  h2.colwise() += p.b2();
  h2 = fast_tanh(h2);
  OutputBatch out = p.w3() * h2;
  out.colwise() += p.b3();

  const OutputBatch residual = out - y;
  GradientResult r;
  r.loss = residual.squaredNorm() / n;
  r.grad = GradientVector::Zero(kNumParams);

  const OutputBatch d_out = (2.0 / n) * residual;
  Eigen::Map<MlpParams::W3>(r.grad.data() + MlpParams::kOffW3) = d_out * h2.transpose();
  Eigen::Map<MlpParams::B3>(r.grad.data() + MlpParams::kOffB3) = d_out.rowwise().sum();

  const Eigen::MatrixXd d_z2 =
      ((p.w3().transpose() * d_out).array() * (1.0 - h2.array().square())).matrix();
  Eigen::Map<MlpParams::W2>(r.grad.data() + MlpParams::kOffW2) = d_z2 * h1.transpose();
  Eigen::Map<MlpParams::B1>(r.grad.data() + MlpParams::kOffB2) = d_z2.rowwise().sum();

  const Eigen::MatrixXd d_z1 =
      ((p.w2().transpose() * d_z2).array() * (1.0 - h1.array().square())).matrix();
  Eigen::Map<MlpParams::W1>(r.grad.data() + MlpParams::kOffW1) = d_z1 * x.transpose();
  Eigen::Map<MlpParams::B1>(r.grad.data() + MlpParams::kOffB1) = d_z1.rowwise().sum();
  return r;
}

double mse_loss(const MlpParams& p, std::span<const TrainingPair> batch) {
  if (batch.empty()) throw DomainError("loss needs a nonempty batch");
  InputBatch x;
  OutputBatch y;
  pack(batch, x, y);
  return (p.forward(x) - y).squaredNorm() / static_cast<double>(batch.size());
}

nlohmann::json AdamState::to_json() const {
  return {{"m", to_json_array(m)}, {"v", to_json_array(v)}, {"step", step},
          {"beta1", beta1},        {"beta2", beta2},        {"eps", eps}};
}

AdamState AdamState::from_json(const nlohmann::json& j) {
  AdamState s;
  from_json_array(j.at("m"), s.m);
  from_json_array(j.at("v"), s.v);
  if (s.m.size() != kNumParams || s.v.size() != kNumParams) throw Error("bad ADAM state size");
  s.step = j.at("step").get<long>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
  return s;
}

AdamResult adam_step(const MlpParams& p, const AdamState& state, const GradientVector& g,
                     double lr) {
  if (!(lr > 0.0)) throw DomainError("learning rate must be > 0");
  if (g.size() != kNumParams) throw DomainError("gradient has wrong size");
  if (!g.allFinite()) throw DomainError("non-finite gradient rejected");

  AdamResult r{p, state};
  AdamState& s = r.state;
  s.step += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * g;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  const GradientVector m_hat = s.m / c1;
  const GradientVector v_hat = s.v / c2;
  const GradientVector update =
      (lr * m_hat.array() / (v_hat.array().sqrt() + s.eps)).matrix();
  r.params = MlpParams::from_flat(p.flat() - update);
  return r;
}

std::vector<LayerFlops> flop_count() {
  auto layer = [](std::string name, int n, int m, bool hidden) {
    const long matvec = 2L * m * n - m;
    const long bias = m;
    const long nonlinearity = hidden ? m : 0;
    return LayerFlops{std::move(name), n, m, matvec + bias + nonlinearity};
  };
  return {layer("input-hidden1", kInputDim, kHidden, true),
          layer("hidden1-hidden2", kHidden, kHidden, true),
          layer("hidden2-output", kHidden, kOutputDim, false)};
}

long flop_total(const std::vector<LayerFlops>& rows) {
  long total = 0;
  for (const auto& r : rows) total += r.flops;
  return total;
}

}  // namespace lwpr2
