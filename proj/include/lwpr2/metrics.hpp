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

#include <iosfwd>
#include <string>
#include <vector>

namespace lwpr2 {

// Running per-channel squared errors, standardized and raw.
class MetricsAccumulator {
 public:
  void add(const Target& error_std, const Target& error_raw);
  void merge(const MetricsAccumulator& other);

  long count() const { return count_; }
  bool empty() const { return count_ == 0; }
  // All three throw Error on an empty accumulator.
  Target mse_std() const;
  Target mse_raw() const;
  // Unweighted mean of the four standardized channel MSEs.
  double total_mse() const;

  nlohmann::json to_json() const;

 private:
  Target sse_std_ = Target::Zero();
  Target sse_raw_ = Target::Zero();
  long count_ = 0;
};

struct MetricsRow {
  std::string label;
  MetricsAccumulator metrics;
};

// Shortest text that reads back to the same double.
std::string format_double(double v);

// Header: label,count,<channel>_mse for each channel (standardized),
// <channel>_mse_raw for each channel, total_mse.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

// Fixed-width table with one column per row label.
std::string format_metrics_table(const std::string& title, const std::vector<MetricsRow>& rows);

}  // namespace lwpr2
