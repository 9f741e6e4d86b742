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

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace lwpr2 {

// A closed loop of centerline waypoints and a constant track width.
struct TrackSpec {
  std::vector<Vec2> waypoints;
  double width = 2.0;

  void validate() const;
};

TrackSpec make_elliptical_track(double semi_major, double semi_minor, int num_waypoints,
                                double width);

// {"waypoints": [[x, y], ...], "width": w}
TrackSpec read_track_json(std::istream& in);
void write_track_json(std::ostream& out, const TrackSpec& track);
TrackSpec load_track(const std::string& path);

enum class Direction { cw, ccw };

Direction parse_direction(const std::string& text);
std::string to_string(Direction d);

// Track centerline ordered in the direction of travel, with arc length.
class Track {
 public:
  Track(const TrackSpec& spec, Direction direction);

  struct Projection {
    std::size_t segment = 0;
    double s = 0.0;            // arc length of the closest point
    double cross_track = 0.0;  // signed offset, positive to the left of travel
    Vec2 point = Vec2::Zero();
    Vec2 tangent = Vec2::UnitX();
  };

  Projection project(const Vec2& p) const;
  // Searches only segments within `window` of `hint` (wrapping).
  Projection project(const Vec2& p, std::size_t hint, std::size_t window) const;

  Vec2 point_at(double s) const;
  // Travel heading of the centerline at arc length s.
  double heading_at(double s) const;
  double length() const { return length_; }
  double width() const { return width_; }
  Direction direction() const { return direction_; }
  std::size_t num_segments() const { return points_.size(); }
  // Signed arc-length difference b - a, wrapped to (-L/2, L/2].
  double arc_delta(double a, double b) const;

 private:
  Projection project_segment(const Vec2& p, std::size_t i) const;
  std::size_t segment_at(double s) const;

  std::vector<Vec2> points_;
  std::vector<double> cumulative_;  // arc length at each waypoint
  double length_ = 0.0;
  double width_ = 0.0;
  Direction direction_;
};

// Counts laps from successive arc-length positions.
class LapCounter {
 public:
  explicit LapCounter(const Track& track, double start_s);

  // Returns true when this update completed a lap.
  bool update(double s);
  int laps() const { return laps_; }
  double progress() const { return progress_; }

 private:
  const Track* track_;
  double last_s_;
  double progress_ = 0.0;
  int laps_ = 0;
};

}  // namespace lwpr2
