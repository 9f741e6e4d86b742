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


#include "lwpr2/track.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace lwpr2 {

void TrackSpec::validate() const {
  if (waypoints.size() < 3) throw DomainError("track needs at least 3 waypoints");
  if (!(width > 0.0) || !std::isfinite(width)) throw DomainError("track width must be > 0");
  for (const Vec2& w : waypoints) {
    if (!w.allFinite()) throw DomainError("track waypoints must be finite");
  }
}

TrackSpec make_elliptical_track(double semi_major, double semi_minor, int num_waypoints,
                                double width) {
  if (num_waypoints < 3 || !(semi_major > 0.0) || !(semi_minor > 0.0)) {
    throw DomainError("bad ellipse parameters");
  }
  TrackSpec spec;
  spec.width = width;
  spec.waypoints.reserve(num_waypoints);
  for (int i = 0; i < num_waypoints; ++i) {
    const double a = 2.0 * std::numbers::pi * i / num_waypoints;
    spec.waypoints.emplace_back(semi_major * std::cos(a), semi_minor * std::sin(a));
  }
  spec.validate();
  return spec;
}

TrackSpec read_track_json(std::istream& in) {
  const nlohmann::json j = nlohmann::json::parse(in);
  TrackSpec spec;
  spec.width = j.at("width").get<double>();
  for (const auto& w : j.at("waypoints")) {
    spec.waypoints.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
  }
  spec.validate();
  return spec;
}

void write_track_json(std::ostream& out, const TrackSpec& track) {
  nlohmann::json j;
  j["width"] = track.width;
  j["waypoints"] = nlohmann::json::array();
  for (const Vec2& w : track.waypoints) j["waypoints"].push_back({w.x(), w.y()});
  out << j.dump() << "\n";
}

TrackSpec load_track(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open track file " + path);
  return read_track_json(in);
}

Direction parse_direction(const std::string& text) {
  if (text == "cw") return Direction::cw;
  if (text == "ccw") return Direction::ccw;
  throw DomainError("direction must be cw or ccw, got '" + text + "'");
}

std::string to_string(Direction d) { return d == Direction::cw ? "cw" : "ccw"; }

Track::Track(const TrackSpec& spec, Direction direction)
    : width_(spec.width), direction_(direction) {
  spec.validate();
  points_ = spec.waypoints;
  double area = 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Vec2& a = points_[i];
    const Vec2& b = points_[(i + 1) % points_.size()];
    area += a.x() * b.y() - b.x() * a.y();
  }
  const bool is_ccw = area > 0.0;
  if (is_ccw != (direction == Direction::ccw)) std::reverse(points_.begin(), points_.end());

  cumulative_.resize(points_.size());
  double s = 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cumulative_[i] = s;
    s += (points_[(i + 1) % points_.size()] - points_[i]).norm();
  }
  length_ = s;
}

Track::Projection Track::project_segment(const Vec2& p, std::size_t i) const {
  const Vec2& a = points_[i];
  const Vec2& b = points_[(i + 1) % points_.size()];
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  Projection out;
  out.segment = i;
  out.point = a + t * ab;
  out.tangent = ab / std::sqrt(len2);
  out.s = cumulative_[i] + t * std::sqrt(len2);
  const Vec2 d = p - out.point;
  const double dist = d.norm();
  const double side = out.tangent.x() * d.y() - out.tangent.y() * d.x();
  out.cross_track = side >= 0.0 ? dist : -dist;
  return out;
}

Track::Projection Track::project(const Vec2& p) const {
  Projection best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    Projection c = project_segment(p, i);
    if (std::abs(c.cross_track) < best_d) {
      best_d = std::abs(c.cross_track);
      best = c;
    }
  }
  return best;
}

Track::Projection Track::project(const Vec2& p, std::size_t hint, std::size_t window) const {
  const std::size_t n = points_.size();
  if (2 * window + 1 >= n) return project(p);
  Projection best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= 2 * window; ++k) {
    const std::size_t i = (hint % n + n - window + k) % n;
    Projection c = project_segment(p, i);
    if (std::abs(c.cross_track) < best_d) {
      best_d = std::abs(c.cross_track);
      best = c;
    }
  }
  return best;
}

std::size_t Track::segment_at(double s) const {
  s = std::fmod(s, length_);
  if (s < 0.0) s += length_;
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  return static_cast<std::size_t>(std::distance(cumulative_.begin(), it)) - 1;
}

Vec2 Track::point_at(double s) const {
  s = std::fmod(s, length_);
  if (s < 0.0) s += length_;
  const std::size_t i = segment_at(s);
  const Vec2& a = points_[i];
  const Vec2& b = points_[(i + 1) % points_.size()];
  const double seg = (b - a).norm();
  return a + (b - a) * ((s - cumulative_[i]) / seg);
}

double Track::heading_at(double s) const {
  const std::size_t i = segment_at(s);
  const Vec2 d = points_[(i + 1) % points_.size()] - points_[i];
  return std::atan2(d.y(), d.x());
}

double Track::arc_delta(double a, double b) const {
  double d = std::fmod(b - a, length_);
  if (d > 0.5 * length_) d -= length_;
  if (d <= -0.5 * length_) d += length_;
  return d;
}

LapCounter::LapCounter(const Track& track, double start_s) : track_(&track), last_s_(start_s) {}

bool LapCounter::update(double s) {
  progress_ += track_->arc_delta(last_s_, s);
  last_s_ = s;
  const int completed = static_cast<int>(std::floor(progress_ / track_->length()));
  if (completed > laps_) {
    laps_ = completed;
    return true;
  }
  return false;
}

}  // namespace lwpr2
