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

#include "lwpr2/types.hpp"

#include <json.hpp>

namespace lwpr2 {

// Per-channel affine normalization frozen from the system identification set.
struct Standardizer {
  Input in_mean = Input::Zero();
  Input in_scale = Input::Ones();
  Target out_mean = Target::Zero();
  Target out_scale = Target::Ones();

  static Standardizer fit(const Dataset& data);
  static Standardizer identity() { return {}; }

  Input input(const Input& raw) const { return (raw - in_mean).cwiseQuotient(in_scale); }
  Input input_raw(const Input& z) const { return z.cwiseProduct(in_scale) + in_mean; }
  Target target(const Target& raw) const { return (raw - out_mean).cwiseQuotient(out_scale); }
  Target target_raw(const Target& z) const { return z.cwiseProduct(out_scale) + out_mean; }
  TrainingPair pair(const TrainingPair& raw) const {
    TrainingPair p = raw;
    p.x = input(raw.x);
    p.y = target(raw.y);
    return p;
  }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

}  // namespace lwpr2
