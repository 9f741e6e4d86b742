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

#include <cstddef>
#include <cstdint>
#include <string>

namespace lwpr2 {

// Eigen <-> JSON array helpers. nlohmann/json writes doubles in shortest
// round-trip form, so values survive a save/load cycle bit for bit.
template <typename Derived>
nlohmann::json to_json_array(const Eigen::DenseBase<Derived>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v.derived().data()[i]);
  return a;
}

template <typename Derived>
void from_json_array(const nlohmann::json& a, Eigen::PlainObjectBase<Derived>& v) {
  if (!a.is_array()) throw Error("expected a JSON array");
  if constexpr (Derived::SizeAtCompileTime == Eigen::Dynamic && Derived::IsVectorAtCompileTime) {
    v.derived().resize(static_cast<Eigen::Index>(a.size()));
  } else if (static_cast<Eigen::Index>(a.size()) != v.size()) {
    throw Error("JSON array has wrong length");
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v.derived().data()[i] = a.at(static_cast<std::size_t>(i)).template get<double>();
  }
}

// FNV-1a over the raw bytes of a double array, for immutability checks.
std::uint64_t checksum(const double* data, std::size_t n, std::uint64_t seed = 1469598103934665603ULL);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace lwpr2
