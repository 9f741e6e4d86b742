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


#include "lwpr2/standardizer.hpp"

#include "lwpr2/serialize.hpp"

namespace lwpr2 {

Standardizer Standardizer::fit(const Dataset& data) {
  if (data.empty()) throw DomainError("cannot standardize an empty dataset");
  const double n = static_cast<double>(data.size());
  Standardizer s;
  Input sx = Input::Zero();
  Target sy = Target::Zero();
  for (const auto& p : data) {
    sx += p.x;
    sy += p.y;
  }
  s.in_mean = sx / n;
  s.out_mean = sy / n;
  Input vx = Input::Zero();
  Target vy = Target::Zero();
  for (const auto& p : data) {
    vx += (p.x - s.in_mean).cwiseAbs2();
    vy += (p.y - s.out_mean).cwiseAbs2();
  }
  for (int i = 0; i < kInputDim; ++i) {
    const double sd = std::sqrt(vx[i] / n);
    s.in_scale[i] = sd > 1e-9 ? sd : 1.0;
  }
  for (int i = 0; i < kOutputDim; ++i) {
    const double sd = std::sqrt(vy[i] / n);
    s.out_scale[i] = sd > 1e-9 ? sd : 1.0;
  }
  return s;
}

nlohmann::json Standardizer::to_json() const {
  return {{"in_mean", to_json_array(in_mean)},
          {"in_scale", to_json_array(in_scale)},
          {"out_mean", to_json_array(out_mean)},
          {"out_scale", to_json_array(out_scale)}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer s;
  from_json_array(j.at("in_mean"), s.in_mean);
  from_json_array(j.at("in_scale"), s.in_scale);
  from_json_array(j.at("out_mean"), s.out_mean);
  from_json_array(j.at("out_scale"), s.out_scale);
  return s;
}

}  // namespace lwpr2
