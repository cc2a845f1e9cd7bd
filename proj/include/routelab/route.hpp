#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "routelab/errors.hpp"
#include "routelab/rng.hpp"

namespace routelab {

using json = nlohmann::ordered_json;

// x grows East, y grows North. Left is counterclockwise (East -> North).
enum class Heading { North, East, South, West };
enum class Turn { Left, Right, Straight };
enum class SceneKind { IndoorSingle, IndoorMulti, Outdoor };

inline Turn mirror(Turn t) {
  switch (t) {
    case Turn::Left: return Turn::Right;
    case Turn::Right: return Turn::Left;
    default: return Turn::Straight;
  }
}

inline Heading rotate(Heading h, Turn t) {
  // ccw order: East -> North -> West -> South
  static constexpr Heading ccw[] = {Heading::West, Heading::North,
                                    Heading::East, Heading::South};
  static constexpr Heading cw[] = {Heading::East, Heading::South,
                                   Heading::West, Heading::North};
  switch (t) {
    case Turn::Left: return ccw[static_cast<int>(h)];
    case Turn::Right: return cw[static_cast<int>(h)];
    default: return h;
  }
}

inline Heading opposite(Heading h) { return rotate(rotate(h, Turn::Left), Turn::Left); }

inline std::pair<int, int> heading_delta(Heading h) {
  switch (h) {
    case Heading::North: return {0, 1};
    case Heading::East: return {1, 0};
    case Heading::South: return {0, -1};
    default: return {-1, 0};
  }
}

inline const char* to_string(Heading h) {
  switch (h) {
    case Heading::North: return "north";
    case Heading::East: return "east";
    case Heading::South: return "south";
    default: return "west";
  }
}

inline const char* to_string(Turn t) {
  switch (t) {
    case Turn::Left: return "left";
    case Turn::Right: return "right";
    default: return "straight";
  }
}

inline const char* to_string(SceneKind s) {
  switch (s) {
    case SceneKind::IndoorSingle: return "indoor_single";
    case SceneKind::IndoorMulti: return "indoor_multi";
    default: return "outdoor";
  }
}

inline Heading heading_from_string(const std::string& s) {
  if (s == "north") return Heading::North;
  if (s == "east") return Heading::East;
  if (s == "south") return Heading::South;
  if (s == "west") return Heading::West;
  throw DataError("unknown heading: " + s);
}

inline Turn turn_from_string(const std::string& s) {
  if (s == "left") return Turn::Left;
  if (s == "right") return Turn::Right;
  if (s == "straight") return Turn::Straight;
  throw DataError("unknown turn: " + s);
}

inline SceneKind scene_from_string(const std::string& s) {
  if (s == "indoor_single") return SceneKind::IndoorSingle;
  if (s == "indoor_multi") return SceneKind::IndoorMulti;
  if (s == "outdoor") return SceneKind::Outdoor;
  throw DataError("unknown scene: " + s);
}

/// Landmark names owned by a scene kind. The three sets are pairwise
/// disjoint, which is what makes the indoor->outdoor OOD split meaningful.
inline const std::vector<std::string>& landmark_vocab(SceneKind scene) {
  static const std::vector<std::string> indoor_single{
      "door", "sofa", "table", "fridge", "staircase", "sink"};
  static const std::vector<std::string> indoor_multi{
      "corridor", "elevator", "office", "whiteboard"};
  static const std::vector<std::string> outdoor{
      "tree", "shop", "crosswalk", "bench", "fountain", "bus stop"};
  switch (scene) {
    case SceneKind::IndoorSingle: return indoor_single;
    case SceneKind::IndoorMulti: return indoor_multi;
    default: return outdoor;
  }
}

inline const std::vector<std::string>& action_vocab(SceneKind scene) {
  static const std::vector<std::string> indoor_single{
      "open the door", "climb the stairs", "pick up the cup"};
  static const std::vector<std::string> indoor_multi{
      "take the elevator", "check the whiteboard", "enter the office"};
  static const std::vector<std::string> outdoor{
      "cross the road", "wait at the light", "enter the shop"};
  switch (scene) {
    case SceneKind::IndoorSingle: return indoor_single;
    case SceneKind::IndoorMulti: return indoor_multi;
    default: return outdoor;
  }
}

/// One leg of a route: turn applied before moving, then `length` unit steps.
/// Events (landmark/action) anchor at the segment's end cell; after reversal
/// the same events ride the same retraced segment, anchored at its start.
struct Segment {
  Turn turn = Turn::Straight;
  int length = 1;
  std::optional<std::string> landmark;
  std::optional<std::string> action;

  bool operator==(const Segment&) const = default;
};

/// The synthetic stand-in for an egocentric video clip.
struct Route {
  SceneKind scene = SceneKind::IndoorSingle;
  int start_x = 0;
  int start_y = 0;
  Heading start_heading = Heading::North;
  std::vector<Segment> segments;
  int grid_size = 32;

  bool operator==(const Route&) const = default;
};

struct TrajectoryState {
  int x = 0;
  int y = 0;
  Heading heading = Heading::North;  // heading that produced the step into this cell
};

using Trajectory = std::vector<TrajectoryState>;

struct RouteGenConfig {
  SceneKind scene = SceneKind::IndoorSingle;
  int grid_size = 32;
  std::pair<int, int> segment_count_range{3, 6};
  std::pair<int, int> length_range{1, 5};
  double landmark_prob = 0.7;
  double action_prob = 0.6;
  int max_attempts = 1000;
};

/// Structural validity: non-empty, first turn Straight, positive lengths,
/// event names from the scene's vocabulary. Bounds are simulate()'s job.
inline void validate_route(const Route& r) {
  if (r.segments.empty()) throw DataError("route has no segments");
  if (r.segments.front().turn != Turn::Straight)
    throw DataError("first segment must be Straight");
  if (r.grid_size < 4) throw DataError("grid_size must be >= 4");
  const auto& lms = landmark_vocab(r.scene);
  const auto& acts = action_vocab(r.scene);
  for (size_t i = 0; i < r.segments.size(); ++i) {
    const Segment& s = r.segments[i];
    if (s.length < 1)
      throw DataError("segment " + std::to_string(i) + " has length < 1");
    if (s.landmark &&
        std::find(lms.begin(), lms.end(), *s.landmark) == lms.end())
      throw DataError("landmark \"" + *s.landmark +
                      "\" not in scene vocabulary");
    if (s.action &&
        std::find(acts.begin(), acts.end(), *s.action) == acts.end())
      throw DataError("action \"" + *s.action + "\" not in scene vocabulary");
  }
}

/// Walks the route step by step. Throws SimulationError naming the segment
/// that exits [0, grid_size) in either coordinate.
inline Trajectory simulate(const Route& r) {
  validate_route(r);
  Trajectory traj;
  traj.push_back({r.start_x, r.start_y, r.start_heading});
  int x = r.start_x, y = r.start_y;
  Heading h = r.start_heading;
  if (x < 0 || x >= r.grid_size || y < 0 || y >= r.grid_size)
    throw SimulationError("route starts outside the grid", -1);
  for (size_t i = 0; i < r.segments.size(); ++i) {
    const Segment& s = r.segments[i];
    h = rotate(h, s.turn);
    auto [dx, dy] = heading_delta(h);
    for (int step = 0; step < s.length; ++step) {
      x += dx;
      y += dy;
      if (x < 0 || x >= r.grid_size || y < 0 || y >= r.grid_size)
        throw SimulationError(
            "segment " + std::to_string(i) + " leaves the grid at (" +
                std::to_string(x) + "," + std::to_string(y) + ")",
            static_cast<int>(i));
      traj.push_back({x, y, h});
    }
  }
  return traj;
}

/// The turns of segments 2..n; the mandatory initial Straight is excluded.
inline std::vector<Turn> turn_sequence(const Route& r) {
  std::vector<Turn> out;
  for (size_t i = 1; i < r.segments.size(); ++i)
    out.push_back(r.segments[i].turn);
  return out;
}

inline std::vector<std::string> landmark_sequence(const Route& r) {
  std::vector<std::string> out;
  for (const Segment& s : r.segments)
    if (s.landmark) out.push_back(*s.landmark);
  return out;
}

inline std::vector<std::string> action_sequence(const Route& r) {
  std::vector<std::string> out;
  for (const Segment& s : r.segments)
    if (s.action) out.push_back(*s.action);
  return out;
}

/// Exact retrace: starts at the forward endpoint facing back along the final
/// heading; reversed segment j re-walks forward segment n-1-j and keeps its
/// events; the turn between reversed segments mirrors the corresponding
/// forward boundary turn. Satisfies reverse(reverse(r)) == r.
inline Route reverse_route(const Route& r) {
  Trajectory traj = simulate(r);
  Route rev;
  rev.scene = r.scene;
  rev.grid_size = r.grid_size;
  rev.start_x = traj.back().x;
  rev.start_y = traj.back().y;
  rev.start_heading = opposite(traj.back().heading);
  const size_t n = r.segments.size();
  rev.segments.resize(n);
  for (size_t j = 0; j < n; ++j) {
    const Segment& src = r.segments[n - 1 - j];
    rev.segments[j].length = src.length;
    rev.segments[j].landmark = src.landmark;
    rev.segments[j].action = src.action;
    rev.segments[j].turn =
        (j == 0) ? Turn::Straight : mirror(r.segments[n - j].turn);
  }
  return rev;
}

/// Rejection-samples routes until one simulates in-bounds. Deterministic for
/// a given (config, rng seed); errors out after max_attempts rejections.
inline Route generate_route(const RouteGenConfig& cfg, Rng& rng) {
  if (cfg.grid_size < 4) throw ConfigError("grid_size must be >= 4");
  if (cfg.segment_count_range.first < 1 ||
      cfg.segment_count_range.first > cfg.segment_count_range.second)
    throw ConfigError("segment_count_range is empty or invalid");
  if (cfg.length_range.first < 1 ||
      cfg.length_range.first > cfg.length_range.second)
    throw ConfigError("length_range is empty or invalid");
  if (cfg.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");

  const auto& lms = landmark_vocab(cfg.scene);
  const auto& acts = action_vocab(cfg.scene);
  // Boundary turns are real direction changes; a Straight "turn" would just
  // merge two segments, so generated routes draw from {Left, Right}.
  static constexpr Turn turns[] = {Turn::Left, Turn::Right};
  static constexpr Heading headings[] = {Heading::North, Heading::East,
                                         Heading::South, Heading::West};

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Route r;
    r.scene = cfg.scene;
    r.grid_size = cfg.grid_size;
    r.start_x = cfg.grid_size / 2;
    r.start_y = cfg.grid_size / 2;
    r.start_heading = headings[rng.next_int(0, 3)];
    const int n = rng.next_int(cfg.segment_count_range.first,
                               cfg.segment_count_range.second);
    r.segments.resize(n);
    for (int i = 0; i < n; ++i) {
      Segment& s = r.segments[i];
      s.turn = (i == 0) ? Turn::Straight : turns[rng.next_int(0, 1)];
      s.length = rng.next_int(cfg.length_range.first, cfg.length_range.second);
      if (rng.next_bool(cfg.landmark_prob))
        s.landmark = lms[rng.next_int(0, static_cast<int>(lms.size()) - 1)];
      if (rng.next_bool(cfg.action_prob))
        s.action = acts[rng.next_int(0, static_cast<int>(acts.size()) - 1)];
    }
    // in-bounds check without exceptions
    int x = r.start_x, y = r.start_y;
    Heading h = r.start_heading;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      h = rotate(h, r.segments[i].turn);
      auto [dx, dy] = heading_delta(h);
      x += dx * r.segments[i].length;
      y += dy * r.segments[i].length;
      // straight-line segments: endpoint check suffices per axis
      ok = x >= 0 && x < cfg.grid_size && y >= 0 && y < cfg.grid_size;
    }
    if (ok) return r;
  }
  throw ConfigError("route generation failed after " +
                    std::to_string(cfg.max_attempts) +
                    " attempts; configuration is likely infeasible");
}

// -------- serialization (one JSON object per route) --------

inline json route_to_json(const Route& r, const std::string& id) {
  json j;
  j["id"] = id;
  j["scene"] = to_string(r.scene);
  j["grid_size"] = r.grid_size;
  j["start"] = json::array({r.start_x, r.start_y});
  j["heading"] = to_string(r.start_heading);
  json segs = json::array();
  for (const Segment& s : r.segments) {
    json js;
    js["turn"] = to_string(s.turn);
    js["len"] = s.length;
    if (s.landmark) js["landmark"] = *s.landmark;
    if (s.action) js["action"] = *s.action;
    segs.push_back(std::move(js));
  }
  j["segments"] = std::move(segs);
  return j;
}

inline std::pair<std::string, Route> route_from_json(const json& j) {
  Route r;
  std::string id = j.at("id").get<std::string>();
  r.scene = scene_from_string(j.at("scene").get<std::string>());
  r.grid_size = j.at("grid_size").get<int>();
  r.start_x = j.at("start").at(0).get<int>();
  r.start_y = j.at("start").at(1).get<int>();
  r.start_heading = heading_from_string(j.at("heading").get<std::string>());
  for (const auto& js : j.at("segments")) {
    Segment s;
    s.turn = turn_from_string(js.at("turn").get<std::string>());
    s.length = js.at("len").get<int>();
    if (js.contains("landmark")) s.landmark = js["landmark"].get<std::string>();
    if (js.contains("action")) s.action = js["action"].get<std::string>();
    r.segments.push_back(std::move(s));
  }
  validate_route(r);
  return {std::move(id), std::move(r)};
}

struct StoredRoute {
  std::string id;
  Route route;
};

inline void write_routes_jsonl(const std::string& path,
                               const std::vector<StoredRoute>& routes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& sr : routes)
    out << route_to_json(sr.route, sr.id).dump() << "\n";
}

inline std::vector<StoredRoute> read_routes_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open route file: " + path);
  std::vector<StoredRoute> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": bad JSON: " + e.what());
    }
    auto [id, r] = route_from_json(j);
    out.push_back({std::move(id), std::move(r)});
  }
  return out;
}

using RouteIndex = std::unordered_map<std::string, const Route*>;

inline RouteIndex route_index(const std::vector<StoredRoute>& routes) {
  RouteIndex idx;
  for (const auto& sr : routes) idx[sr.id] = &sr.route;
  return idx;
}

}  // namespace routelab
