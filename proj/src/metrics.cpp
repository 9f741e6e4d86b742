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


#include "lwpr2/metrics.hpp"

#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace lwpr2 {

void MetricsAccumulator::add(const Target& error_std, const Target& error_raw) {
  if (!error_std.allFinite() || !error_raw.allFinite()) {
    throw DomainError("metrics need finite errors");
  }
  sse_std_ += error_std.cwiseAbs2();
  sse_raw_ += error_raw.cwiseAbs2();
  ++count_;
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
  sse_std_ += other.sse_std_;
  sse_raw_ += other.sse_raw_;
  count_ += other.count_;
}

Target MetricsAccumulator::mse_std() const {
  if (count_ == 0) throw Error("empty metrics table: no pairs were scored");
  return sse_std_ / static_cast<double>(count_);
}

Target MetricsAccumulator::mse_raw() const {
  if (count_ == 0) throw Error("empty metrics table: no pairs were scored");
  return sse_raw_ / static_cast<double>(count_);
}

double MetricsAccumulator::total_mse() const { return mse_std().mean(); }

nlohmann::json MetricsAccumulator::to_json() const {
  nlohmann::json j{{"count", count_}};
  if (count_ == 0) return j;
  const Target s = mse_std();
  const Target r = mse_raw();
  for (int c = 0; c < kOutputDim; ++c) {
    j[std::string(kChannelNames[c]) + "_mse"] = s[c];
    j[std::string(kChannelNames[c]) + "_mse_raw"] = r[c];
  }
  j["total_mse"] = total_mse();
  return j;
}

std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "label,count";
  for (const char* name : kChannelNames) out << ',' << name << "_mse";
  for (const char* name : kChannelNames) out << ',' << name << "_mse_raw";
  out << ",total_mse\n";
  for (const MetricsRow& row : rows) {
    const Target s = row.metrics.mse_std();
    const Target r = row.metrics.mse_raw();
    out << row.label << ',' << row.metrics.count();
    for (int c = 0; c < kOutputDim; ++c) out << ',' << format_double(s[c]);
    for (int c = 0; c < kOutputDim; ++c) out << ',' << format_double(r[c]);
    out << ',' << format_double(row.metrics.total_mse()) << '\n';
  }
}

std::string format_metrics_table(const std::string& title, const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  constexpr int kLabelWidth = 18;
  constexpr int kColWidth = 12;
  out << title << '\n';
  out << std::left << std::setw(kLabelWidth) << "MSE (standardized)" << std::right;
  for (const MetricsRow& row : rows) out << std::setw(kColWidth) << row.label;
  out << '\n';
  auto line = [&](const std::string& name, auto value) {
    out << std::left << std::setw(kLabelWidth) << name << std::right;
    for (const MetricsRow& row : rows) {
      out << std::setw(kColWidth) << std::fixed << std::setprecision(4) << value(row);
    }
    out << '\n';
  };
  for (int c = 0; c < kOutputDim; ++c) {
    line(kChannelNames[c], [c](const MetricsRow& r) { return r.metrics.mse_std()[c]; });
  }
  line("total", [](const MetricsRow& r) { return r.metrics.total_mse(); });
  out << std::left << std::setw(kLabelWidth) << "pairs" << std::right;
  for (const MetricsRow& row : rows) out << std::setw(kColWidth) << row.metrics.count();
  out << '\n';
  return out.str();
}

}  // namespace lwpr2
