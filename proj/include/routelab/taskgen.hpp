#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "routelab/route.hpp"

namespace routelab {

enum class TaskKind { RouteDesc, DirectionMCQ, LandmarkMCQ, ActionMCQ };
enum class Polarity { Forward, Reverse };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::RouteDesc: return "route_desc";
    case TaskKind::DirectionMCQ: return "direction_mcq";
    case TaskKind::LandmarkMCQ: return "landmark_mcq";
    default: return "action_mcq";
  }
}

inline const char* to_string(Polarity p) {
  return p == Polarity::Forward ? "forward" : "reverse";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "route_desc") return TaskKind::RouteDesc;
  if (s == "direction_mcq") return TaskKind::DirectionMCQ;
  if (s == "landmark_mcq") return TaskKind::LandmarkMCQ;
  if (s == "action_mcq") return TaskKind::ActionMCQ;
  throw DataError("unknown task kind: " + s);
}

inline Polarity polarity_from_string(const std::string& s) {
  if (s == "forward") return Polarity::Forward;
  if (s == "reverse") return Polarity::Reverse;
  throw DataError("unknown polarity: " + s);
}

inline Polarity opposite(Polarity p) {
  return p == Polarity::Forward ? Polarity::Reverse : Polarity::Forward;
}

/// One benchmark question. MCQ kinds carry exactly 4 options and a correct
/// index; RouteDesc carries the canonical description as ground truth.
struct QAItem {
  std::string id;
  std::string route_id;
  SceneKind scene = SceneKind::IndoorSingle;
  TaskKind kind = TaskKind::RouteDesc;
  Polarity polarity = Polarity::Forward;
  std::string prompt;
  std::vector<std::string> options;
  int correct_index = -1;
  std::string ground_truth;
  std::optional<std::string> cot;
  std::string answer;
};

struct Dataset {
  std::vector<QAItem> items;
  json manifest;
};

struct DatasetGenConfig {
  RouteGenConfig route;  // scene field is overridden per route
  std::vector<SceneKind> scenes{SceneKind::IndoorSingle,
                                SceneKind::IndoorMulti, SceneKind::Outdoor};

  RouteGenConfig route_for(SceneKind scene) const {
    RouteGenConfig c = route;
    c.scene = scene;
    return c;
  }

  json to_json() const {
    json j;
    j["grid_size"] = route.grid_size;
    j["segment_count_range"] =
        json::array({route.segment_count_range.first,
                     route.segment_count_range.second});
    j["length_range"] =
        json::array({route.length_range.first, route.length_range.second});
    j["landmark_prob"] = route.landmark_prob;
    j["action_prob"] = route.action_prob;
    j["max_attempts"] = route.max_attempts;
    json sc = json::array();
    for (SceneKind s : scenes) sc.push_back(to_string(s));
    j["scenes"] = std::move(sc);
    return j;
  }
};

struct BuildResult {
  Dataset dataset;
  std::vector<StoredRoute> routes;
};

inline std::string join_sequence(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ", ";
    out += words[i];
  }
  return out;
}

/// Canonical route description. Reverse polarity describes reverse_route(r).
///
/// Grammar (produced and parsed bit-exactly, see evalsuite):
///   description := clause ("; " clause)* "."
///   clause      := move | turn
///   move        := "go straight for " INT " steps"
///                  [" past the " NAME] [" and " ACTION]
///   turn        := "turn " ("left" | "right") [" at the " NAME]
///
/// Straight boundary turns produce no clause; two adjacent move clauses imply
/// one, which is how the parser recovers the full turn sequence.
inline std::string describe(const Route& route, Polarity polarity) {
  const Route r =
      polarity == Polarity::Forward ? route : reverse_route(route);
  std::string out;
  bool first = true;
  auto emit = [&](const std::string& clause) {
    if (!first) out += "; ";
    out += clause;
    first = false;
  };
  for (size_t i = 0; i < r.segments.size(); ++i) {
    const Segment& s = r.segments[i];
    if (i > 0 && s.turn != Turn::Straight)
      emit(std::string("turn ") + to_string(s.turn));
    std::string move =
        "go straight for " + std::to_string(s.length) + " steps";
    if (s.landmark) move += " past the " + *s.landmark;
    if (s.action) move += " and " + *s.action;
    emit(move);
  }
  out += ".";
  return out;
}

namespace detail {

inline std::vector<std::string> queried_sequence(const Route& adjusted,
                                                 TaskKind kind) {
  std::vector<std::string> seq;
  switch (kind) {
    case TaskKind::DirectionMCQ:
      for (Turn t : turn_sequence(adjusted)) seq.push_back(to_string(t));
      break;
    case TaskKind::LandmarkMCQ:
      seq = landmark_sequence(adjusted);
      break;
    case TaskKind::ActionMCQ:
      seq = action_sequence(adjusted);
      break;
    default:
      throw ConfigError("queried_sequence: not an MCQ kind");
  }
  return seq;
}

inline std::string mirror_word(const std::string& w) {
  if (w == "left") return "right";
  if (w == "right") return "left";
  return w;
}

/// Distractor strategies, applied in spec order:
///   (a) substitute one element, (b) swap two adjacent elements,
///   (c) mirror-reverse the whole sequence (the wrong-polarity trap),
///   (d) drop or duplicate one element.
inline void propose_distractors(const std::vector<std::string>& seq,
                                TaskKind kind, SceneKind scene,
                                const std::string& correct,
                                std::vector<std::string>& out, Rng& rng) {
  const int n = static_cast<int>(seq.size());
  // (a) for turns means mirroring the element; for names it substitutes a
  // different word from the same scene vocabulary.
  auto alternatives = [&](const std::string& current) {
    std::vector<std::string> alts;
    if (kind == TaskKind::DirectionMCQ) {
      if (mirror_word(current) != current) alts.push_back(mirror_word(current));
    } else {
      const auto& vocab = kind == TaskKind::LandmarkMCQ
                              ? landmark_vocab(scene)
                              : action_vocab(scene);
      for (const auto& w : vocab)
        if (w != current) alts.push_back(w);
    }
    return alts;
  };
  auto substitute_pos = [&](std::vector<std::string>& cand, int pos) {
    auto alts = alternatives(cand[pos]);
    if (alts.empty()) return false;
    cand[pos] = alts[rng.next_int(0, static_cast<int>(alts.size()) - 1)];
    return true;
  };
  auto try_add = [&](const std::vector<std::string>& cand) {
    std::string text = join_sequence(cand);
    if (text == correct) return false;
    if (std::find(out.begin(), out.end(), text) != out.end()) return false;
    out.push_back(std::move(text));
    return true;
  };

  for (int pass = 0; pass < 3 && out.size() < 3; ++pass) {
    // (a) mirror / substitute one element
    for (int t = 0; t < 12 && out.size() < 3; ++t) {
      std::vector<std::string> cand = seq;
      if (!substitute_pos(cand, rng.next_int(0, n - 1))) continue;
      if (try_add(cand)) break;
    }
    if (out.size() >= 3) break;
    // (b) swap two adjacent elements
    for (int t = 0; t < 8 && out.size() < 3; ++t) {
      std::vector<std::string> cand = seq;
      int pos = rng.next_int(0, n - 2);
      std::swap(cand[pos], cand[pos + 1]);
      if (try_add(cand)) break;
    }
    if (out.size() >= 3) break;
    // (c) full mirror-reverse
    {
      std::vector<std::string> cand(seq.rbegin(), seq.rend());
      if (kind == TaskKind::DirectionMCQ)
        for (auto& w : cand) w = mirror_word(w);
      try_add(cand);
    }
    if (out.size() >= 3) break;
    // (d) drop or duplicate one element
    for (int t = 0; t < 8 && out.size() < 3; ++t) {
      std::vector<std::string> cand = seq;
      int pos = rng.next_int(0, n - 1);
      if (rng.next_bool(0.5) && n > 1)
        cand.erase(cand.begin() + pos);
      else
        cand.insert(cand.begin() + pos, cand[pos]);
      if (try_add(cand)) break;
    }
  }
}

inline std::string polarity_phrase(Polarity p) {
  return p == Polarity::Forward ? "in order of travel" : "in reverse order";
}

inline std::string question_phrase(TaskKind kind) {
  switch (kind) {
    case TaskKind::DirectionMCQ:
      return "what is the sequence of direction changes?";
    case TaskKind::LandmarkMCQ:
      return "what is the sequence of landmarks you passed?";
    default:
      return "what is the sequence of actions you performed?";
  }
}

}  // namespace detail

/// Builds one MCQ item, or nullopt when the queried sequence is shorter than
/// two elements or three distinct distractors cannot be formed.
inline std::optional<QAItem> make_mcq(const Route& route,
                                      const std::string& route_id,
                                      TaskKind kind, Polarity polarity,
                                      Rng& rng,
                                      std::string* skip_reason = nullptr) {
  const Route adjusted =
      polarity == Polarity::Forward ? route : reverse_route(route);
  std::vector<std::string> seq = detail::queried_sequence(adjusted, kind);
  if (seq.size() < 2) {
    if (skip_reason) *skip_reason = "sequence shorter than 2";
    return std::nullopt;
  }
  const std::string correct = join_sequence(seq);
  std::vector<std::string> distractors;
  detail::propose_distractors(seq, kind, route.scene, correct, distractors,
                              rng);
  if (distractors.size() < 3) {
    if (skip_reason) *skip_reason = "distractor budget exhausted";
    return std::nullopt;
  }

  QAItem item;
  item.route_id = route_id;
  item.scene = route.scene;
  item.kind = kind;
  item.polarity = polarity;
  item.options = {correct, distractors[0], distractors[1], distractors[2]};
  // Fisher-Yates; track where the correct option lands.
  int correct_pos = 0;
  for (int i = 3; i > 0; --i) {
    int j = rng.next_int(0, i);
    std::swap(item.options[i], item.options[j]);
    if (correct_pos == i)
      correct_pos = j;
    else if (correct_pos == j)
      correct_pos = i;
  }
  item.correct_index = correct_pos;
  item.answer = std::string(1, "ABCD"[correct_pos]);

  std::string prompt = "you walked the following route: " +
                       describe(route, Polarity::Forward) + " " +
                       detail::polarity_phrase(polarity) + ", " +
                       detail::question_phrase(kind) + " options:";
  for (int i = 0; i < 4; ++i)
    prompt += std::string(" ") + "ABCD"[i] + ") " + item.options[i];
  item.prompt = std::move(prompt);
  return item;
}

inline QAItem make_route_desc(const Route& route, const std::string& route_id,
                              Polarity polarity) {
  QAItem item;
  item.route_id = route_id;
  item.scene = route.scene;
  item.kind = TaskKind::RouteDesc;
  item.polarity = polarity;
  item.ground_truth = describe(route, polarity);
  item.answer = item.ground_truth;
  item.prompt = "you walked the following route: " +
                describe(route, Polarity::Forward) + " describe the route " +
                detail::polarity_phrase(polarity) + ".";
  return item;
}

namespace detail {

inline const char* kind_tag(TaskKind k) {
  switch (k) {
    case TaskKind::RouteDesc: return "desc";
    case TaskKind::DirectionMCQ: return "dir";
    case TaskKind::LandmarkMCQ: return "lm";
    default: return "act";
  }
}

}  // namespace detail

/// Generates n_routes routes (scenes assigned round-robin) and up to 8 items
/// per route. Each route consumes its own counter-split RNG stream, so the
/// result is independent of traversal order.
inline BuildResult build_dataset(const DatasetGenConfig& cfg, int n_routes,
                                 Rng& rng) {
  if (n_routes < 1) throw ConfigError("n_routes must be >= 1");
  if (cfg.scenes.empty()) throw ConfigError("scene list is empty");

  BuildResult res;
  json counts;
  json skipped;
  for (TaskKind kind : {TaskKind::RouteDesc, TaskKind::DirectionMCQ,
                        TaskKind::LandmarkMCQ, TaskKind::ActionMCQ}) {
    for (Polarity pol : {Polarity::Forward, Polarity::Reverse}) {
      for (SceneKind scene : {SceneKind::IndoorSingle, SceneKind::IndoorMulti,
                              SceneKind::Outdoor}) {
        counts[to_string(kind)][to_string(pol)][to_string(scene)] = 0;
      }
    }
  }

  auto record = [&](const QAItem& it) {
    auto& slot =
        counts[to_string(it.kind)][to_string(it.polarity)][to_string(it.scene)];
    slot = slot.get<int>() + 1;
  };

  for (int i = 0; i < n_routes; ++i) {
    SceneKind scene = cfg.scenes[i % cfg.scenes.size()];
    Rng stream = rng.split(static_cast<uint64_t>(i));
    Route route = generate_route(cfg.route_for(scene), stream);
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "r%06d", i);
    const std::string route_id = idbuf;
    res.routes.push_back({route_id, route});

    for (Polarity pol : {Polarity::Forward, Polarity::Reverse}) {
      QAItem it = make_route_desc(route, route_id, pol);
      it.id = route_id + "-desc-" + (pol == Polarity::Forward ? "f" : "r");
      record(it);
      res.dataset.items.push_back(std::move(it));
    }
    for (TaskKind kind : {TaskKind::DirectionMCQ, TaskKind::LandmarkMCQ,
                          TaskKind::ActionMCQ}) {
      for (Polarity pol : {Polarity::Forward, Polarity::Reverse}) {
        std::string reason;
        auto it = make_mcq(route, route_id, kind, pol, stream, &reason);
        if (!it) {
          std::string key = std::string(to_string(kind)) + ":" + reason;
          skipped[key] = (skipped.contains(key) ? skipped[key].get<int>() : 0) + 1;
          continue;
        }
        it->id = route_id + "-" + detail::kind_tag(kind) + "-" +
                 (pol == Polarity::Forward ? "f" : "r");
        record(*it);
        res.dataset.items.push_back(std::move(*it));
      }
    }
  }

  json cfg_json = cfg.to_json();
  const std::string cfg_dump = cfg_json.dump();
  char hashbuf[24];
  std::snprintf(hashbuf, sizeof(hashbuf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(cfg_dump.data(), cfg_dump.size())));

  res.dataset.manifest["seed"] = rng.seed();
  res.dataset.manifest["config_hash"] = hashbuf;
  res.dataset.manifest["config"] = std::move(cfg_json);
  res.dataset.manifest["n_routes"] = n_routes;
  res.dataset.manifest["total_items"] = res.dataset.items.size();
  res.dataset.manifest["counts"] = std::move(counts);
  res.dataset.manifest["skipped"] = std::move(skipped);
  return res;
}

namespace detail {

inline json recount(const std::vector<QAItem>& items) {
  json counts;
  for (const QAItem& it : items) {
    auto& slot =
        counts[to_string(it.kind)][to_string(it.polarity)][to_string(it.scene)];
    slot = (slot.is_null() ? 0 : slot.get<int>()) + 1;
  }
  return counts;
}

inline Dataset subset(const Dataset& ds, const std::vector<QAItem>& items,
                      const std::string& split_desc) {
  Dataset out;
  out.items = items;
  out.manifest = ds.manifest;
  out.manifest["split"] = split_desc;
  out.manifest["total_items"] = items.size();
  out.manifest["counts"] = recount(items);
  return out;
}

}  // namespace detail

/// Ratio split by route_id: all items of a route land on one side, which
/// prevents description/MCQ leakage across the boundary.
inline std::pair<Dataset, Dataset> split_ratio(const Dataset& ds,
                                               int train_parts, int test_parts,
                                               Rng& rng) {
  if (train_parts < 1 || test_parts < 1)
    throw ConfigError("split ratio parts must be positive");
  std::vector<std::string> route_ids;
  std::set<std::string> seen;
  for (const QAItem& it : ds.items)
    if (seen.insert(it.route_id).second) route_ids.push_back(it.route_id);

  for (size_t i = route_ids.size(); i > 1; --i)
    std::swap(route_ids[i - 1], route_ids[rng.next_int(0, static_cast<int>(i) - 1)]);

  const size_t n_train = route_ids.size() * static_cast<size_t>(train_parts) /
                         static_cast<size_t>(train_parts + test_parts);
  if (n_train == 0 || n_train == route_ids.size())
    throw ConfigError("ratio split leaves one side empty");
  std::set<std::string> train_ids(route_ids.begin(),
                                  route_ids.begin() + n_train);

  std::vector<QAItem> train, test;
  for (const QAItem& it : ds.items)
    (train_ids.count(it.route_id) ? train : test).push_back(it);
  char desc[64];
  std::snprintf(desc, sizeof(desc), "ratio %d:%d", train_parts, test_parts);
  return {detail::subset(ds, train, std::string(desc) + " train"),
          detail::subset(ds, test, std::string(desc) + " test")};
}

inline std::pair<Dataset, Dataset> split_scene_ood(
    const Dataset& ds, const std::vector<SceneKind>& train_scenes,
    const std::vector<SceneKind>& test_scenes) {
  if (train_scenes.empty() || test_scenes.empty())
    throw ConfigError("OOD scene sets must be non-empty");
  for (SceneKind s : train_scenes)
    if (std::find(test_scenes.begin(), test_scenes.end(), s) !=
        test_scenes.end())
      throw ConfigError("OOD scene sets must be disjoint");
  auto in = [](const std::vector<SceneKind>& v, SceneKind s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  std::vector<QAItem> train, test;
  for (const QAItem& it : ds.items) {
    if (in(train_scenes, it.scene))
      train.push_back(it);
    else if (in(test_scenes, it.scene))
      test.push_back(it);
    else
      throw ConfigError(std::string("item scene ") + to_string(it.scene) +
                        " is in neither OOD scene set");
  }
  if (train.empty() || test.empty())
    throw ConfigError("OOD split leaves one side empty");
  return {detail::subset(ds, train, "scene_ood train"),
          detail::subset(ds, test, "scene_ood test")};
}

/// Reverse-thinking CoT: every item of polarity P gets the opposite-polarity
/// canonical description as its thinking text. Idempotent.
inline void attach_cot(Dataset& ds, const RouteIndex& routes) {
  for (QAItem& it : ds.items) {
    auto found = routes.find(it.route_id);
    if (found == routes.end())
      throw DataError("attach_cot: unknown route_id " + it.route_id);
    it.cot = describe(*found->second, opposite(it.polarity));
  }
}

// -------- JSON Lines serialization --------

inline json item_to_json(const QAItem& it) {
  json j;
  j["id"] = it.id;
  j["route_id"] = it.route_id;
  j["scene"] = to_string(it.scene);
  j["kind"] = to_string(it.kind);
  j["polarity"] = to_string(it.polarity);
  j["prompt"] = it.prompt;
  if (it.kind != TaskKind::RouteDesc) {
    j["options"] = it.options;
    j["correct_index"] = it.correct_index;
  } else {
    j["ground_truth"] = it.ground_truth;
  }
  if (it.cot) j["cot"] = *it.cot;
  j["answer"] = it.answer;
  return j;
}

inline QAItem item_from_json(const json& j) {
  QAItem it;
  it.id = j.at("id").get<std::string>();
  it.route_id = j.at("route_id").get<std::string>();
  it.scene = scene_from_string(j.at("scene").get<std::string>());
  it.kind = task_kind_from_string(j.at("kind").get<std::string>());
  it.polarity = polarity_from_string(j.at("polarity").get<std::string>());
  it.prompt = j.at("prompt").get<std::string>();
  if (it.kind != TaskKind::RouteDesc) {
    it.options = j.at("options").get<std::vector<std::string>>();
    it.correct_index = j.at("correct_index").get<int>();
    if (it.options.size() != 4 || it.correct_index < 0 ||
        it.correct_index > 3)
      throw DataError("item " + it.id + ": malformed options");
  } else {
    it.ground_truth = j.at("ground_truth").get<std::string>();
  }
  if (j.contains("cot")) it.cot = j["cot"].get<std::string>();
  it.answer = j.at("answer").get<std::string>();
  return it;
}

inline void write_items_jsonl(const std::string& path,
                              const std::vector<QAItem>& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const QAItem& it : items) out << item_to_json(it).dump() << "\n";
}

inline std::vector<QAItem> read_items_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::vector<QAItem> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(item_from_json(json::parse(line)));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": bad JSON: " + e.what());
    }
  }
  return out;
}

}  // namespace routelab
