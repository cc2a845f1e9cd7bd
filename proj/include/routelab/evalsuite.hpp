#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "routelab/seqmodel.hpp"
#include "routelab/taskgen.hpp"

namespace routelab {

/// One model output to be scored. `extracted` is the text between the answer
/// delimiters (an option letter for MCQs, a description for RouteDesc),
/// empty when the delimiters are malformed.
struct Prediction {
  std::string id;
  std::string text;
  std::string extracted;
};

/// Text between the first <answer> ... </answer> pair, whitespace-normalized;
/// nullopt when the delimiters are missing, unclosed, or enclose nothing.
inline std::optional<std::string> extract_answer_region(
    const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  auto open = std::find(words.begin(), words.end(), "<answer>");
  if (open == words.end()) return std::nullopt;
  auto close = std::find(open + 1, words.end(), "</answer>");
  if (close == words.end() || close == open + 1) return std::nullopt;
  std::string out;
  for (auto it = open + 1; it != close; ++it) {
    if (!out.empty()) out += ' ';
    out += *it;
  }
  return out;
}

inline std::string first_word(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  in >> w;
  return w;
}

// -------- canonical description parser --------

/// Result of strictly parsing the canonical description grammar. Turns
/// include the Straight implied between two adjacent move clauses, so a
/// canonical description round-trips to the route's full turn sequence.
struct ParseResult {
  bool ok = false;
  size_t fail_offset = 0;
  std::vector<Turn> turns;
  std::vector<std::string> landmarks;
  std::vector<std::string> actions;
  int clause_count = 0;
};

namespace detail {

class DescriptionParser {
 public:
  explicit DescriptionParser(const std::string& text) : s_(text) {}

  ParseResult run() {
    ParseResult res;
    bool prev_was_move = false;
    if (s_.empty()) return fail(res, 0);
    while (true) {
      if (!parse_clause(res, prev_was_move)) return fail(res, pos_);
      ++res.clause_count;
      if (eat("; ")) continue;
      if (eat(".")) break;
      return fail(res, pos_);
    }
    if (pos_ != s_.size()) return fail(res, pos_);
    res.ok = true;
    return res;
  }

 private:
  static ParseResult fail(ParseResult res, size_t at) {
    res.ok = false;
    res.fail_offset = at;
    return res;
  }

  bool eat(const std::string& lit) {
    if (s_.compare(pos_, lit.size(), lit) == 0) {
      pos_ += lit.size();
      return true;
    }
    return false;
  }

  // Scans a NAME/ACTION up to the next structural boundary. Boundaries are
  // "; ", the final ".", and optionally " and " (landmark position only).
  bool scan_text(bool stop_at_and, std::string& out) {
    size_t end = pos_;
    while (end < s_.size()) {
      if (s_[end] == ';' || s_[end] == '.') break;
      if (stop_at_and && s_.compare(end, 5, " and ") == 0) break;
      ++end;
    }
    if (end == pos_) return false;
    out = s_.substr(pos_, end - pos_);
    if (!out.empty() && out.back() == ' ') return false;
    pos_ = end;
    return true;
  }

  bool parse_clause(ParseResult& res, bool& prev_was_move) {
    if (eat("turn ")) {
      Turn t;
      if (eat("left"))
        t = Turn::Left;
      else if (eat("right"))
        t = Turn::Right;
      else
        return false;
      if (eat(" at the ")) {
        std::string name;
        if (!scan_text(false, name)) return false;
        res.landmarks.push_back(std::move(name));
      }
      res.turns.push_back(t);
      prev_was_move = false;
      return true;
    }
    if (eat("go straight for ")) {
      size_t digits = 0;
      while (pos_ + digits < s_.size() &&
             std::isdigit(static_cast<unsigned char>(s_[pos_ + digits])))
        ++digits;
      if (digits == 0) return false;
      pos_ += digits;
      if (!eat(" steps")) return false;
      if (eat(" past the ")) {
        std::string name;
        if (!scan_text(true, name)) return false;
        res.landmarks.push_back(std::move(name));
      }
      if (eat(" and ")) {
        std::string action;
        if (!scan_text(false, action)) return false;
        res.actions.push_back(std::move(action));
      }
      // adjacent moves imply a straight boundary turn
      if (prev_was_move) res.turns.push_back(Turn::Straight);
      prev_was_move = true;
      return true;
    }
    return false;
  }

  const std::string& s_;
  size_t pos_ = 0;
};

template <typename T>
size_t levenshtein(const std::vector<T>& a, const std::vector<T>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = j;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

template <typename T>
double normalized_edit_distance(const std::vector<T>& truth,
                                const std::vector<T>& pred) {
  const size_t denom = std::max(truth.size(), pred.size());
  if (denom == 0) return 0.0;  // 0/0 convention
  return static_cast<double>(levenshtein(truth, pred)) /
         static_cast<double>(denom);
}

}  // namespace detail

inline ParseResult parse_description(const std::string& text) {
  return detail::DescriptionParser(text).run();
}

// -------- rubric scoring --------

/// Three integer 0-5 components plus the combined percentage, after the
/// direction / landmarks / logical-semantics breakdown.
struct RubricScore {
  int direction = 0;
  int landmark = 0;
  int semantic = 0;
  double percent = 0.0;
};

namespace detail {

inline int round_half_up_5(double x) {
  return static_cast<int>(std::floor(5.0 * x + 0.5));
}

inline int canonical_clause_count(const Route& adjusted) {
  int clauses = static_cast<int>(adjusted.segments.size());
  for (size_t i = 1; i < adjusted.segments.size(); ++i)
    if (adjusted.segments[i].turn != Turn::Straight) ++clauses;
  return clauses;
}

}  // namespace detail

/// Deterministic judge for open-ended route descriptions: edit-distance
/// scores for turns and landmarks, clause-count agreement for semantics.
/// A prediction that fails the strict grammar scores zero throughout.
inline RubricScore rubric_score(const std::string& prediction_text,
                                const Route& truth_route, Polarity polarity) {
  const Route adjusted = polarity == Polarity::Forward
                             ? truth_route
                             : reverse_route(truth_route);
  RubricScore score;
  ParseResult pred = parse_description(prediction_text);
  if (pred.ok) {
    score.direction = detail::round_half_up_5(
        1.0 - detail::normalized_edit_distance(turn_sequence(adjusted),
                                               pred.turns));
    score.landmark = detail::round_half_up_5(
        1.0 - detail::normalized_edit_distance(landmark_sequence(adjusted),
                                               pred.landmarks));
    score.semantic =
        pred.clause_count == detail::canonical_clause_count(adjusted) ? 5 : 3;
  }
  score.percent =
      100.0 * (score.direction + score.landmark + score.semantic) / 15.0;
  return score;
}

// -------- accuracy and reports --------

inline std::string family_key(TaskKind kind, Polarity pol) {
  return std::string(to_string(kind)) + "/" + to_string(pol);
}

/// Exact-match accuracy per (kind, polarity) over the dataset's MCQ items.
/// Items without a prediction, or with malformed output, count as wrong.
/// Predictions for ids absent from the dataset are an error.
inline std::map<std::string, double> mcq_accuracy(
    const std::vector<Prediction>& predictions, const Dataset& ds) {
  std::map<std::string, const Prediction*> by_id;
  std::map<std::string, bool> known;
  for (const QAItem& it : ds.items) known[it.id] = true;
  for (const Prediction& p : predictions) {
    if (!known.count(p.id))
      throw DataError("prediction for unknown item id: " + p.id);
    by_id[p.id] = &p;
  }
  std::map<std::string, std::pair<int, int>> tally;  // correct, total
  for (const QAItem& it : ds.items) {
    if (it.kind == TaskKind::RouteDesc) continue;
    auto& [correct, total] = tally[family_key(it.kind, it.polarity)];
    ++total;
    auto found = by_id.find(it.id);
    if (found == by_id.end()) continue;
    const std::string letter = first_word(found->second->extracted);
    if (letter == it.answer) ++correct;
  }
  std::map<std::string, double> out;
  for (const auto& [key, ct] : tally)
    out[key] = ct.second ? 100.0 * ct.first / ct.second : 0.0;
  return out;
}

/// Mean rubric percentage per RouteDesc family.
inline std::map<std::string, double> rubric_means(
    const std::vector<Prediction>& predictions, const Dataset& ds,
    const RouteIndex& routes) {
  std::map<std::string, const Prediction*> by_id;
  for (const Prediction& p : predictions) by_id[p.id] = &p;
  std::map<std::string, std::pair<double, int>> tally;
  for (const QAItem& it : ds.items) {
    if (it.kind != TaskKind::RouteDesc) continue;
    auto& [sum, total] = tally[family_key(it.kind, it.polarity)];
    ++total;
    auto found = by_id.find(it.id);
    if (found == by_id.end()) continue;
    auto route = routes.find(it.route_id);
    if (route == routes.end())
      throw DataError("no route for item " + it.id);
    sum += rubric_score(found->second->extracted, *route->second, it.polarity)
               .percent;
  }
  std::map<std::string, double> out;
  for (const auto& [key, st] : tally)
    out[key] = st.second ? st.first / st.second : 0.0;
  return out;
}

/// Per-family scores plus the two aggregates. Avg(ST) covers route
/// descriptions and direction MCQs (both polarities); Avg(Total) covers all
/// eight families. Absent families are excluded from averages and flagged.
struct EvalReport {
  std::map<std::string, double> family_scores;
  double avg_st = 0.0;
  double avg_total = 0.0;
  std::vector<std::string> missing_families;
};

inline EvalReport make_report(
    const std::map<std::string, double>& family_scores) {
  if (family_scores.empty()) throw DataError("report: no families scored");
  static const std::vector<std::string> kAll = {
      "route_desc/forward",    "route_desc/reverse",
      "direction_mcq/forward", "direction_mcq/reverse",
      "landmark_mcq/forward",  "landmark_mcq/reverse",
      "action_mcq/forward",    "action_mcq/reverse"};
  static const std::vector<std::string> kSt = {
      "route_desc/forward", "route_desc/reverse", "direction_mcq/forward",
      "direction_mcq/reverse"};
  EvalReport r;
  r.family_scores = family_scores;
  double st_sum = 0, total_sum = 0;
  int st_n = 0, total_n = 0;
  for (const auto& key : kAll) {
    auto it = family_scores.find(key);
    if (it == family_scores.end()) {
      r.missing_families.push_back(key);
      continue;
    }
    total_sum += it->second;
    ++total_n;
    if (std::find(kSt.begin(), kSt.end(), key) != kSt.end()) {
      st_sum += it->second;
      ++st_n;
    }
  }
  r.avg_st = st_n ? st_sum / st_n : 0.0;
  r.avg_total = total_n ? total_sum / total_n : 0.0;
  return r;
}

inline json report_to_json(const EvalReport& r) {
  json j;
  j["avg_st"] = r.avg_st;
  j["avg_total"] = r.avg_total;
  json fam;
  for (const auto& [key, score] : r.family_scores) fam[key] = score;
  j["families"] = std::move(fam);
  j["missing_families"] = r.missing_families;
  return j;
}

/// One CSV row per evaluated checkpoint, families as columns (Table-style).
inline std::string report_csv_header() {
  return "checkpoint,avg_st,avg_total,route_desc_f,route_desc_r,"
         "direction_f,direction_r,landmark_f,landmark_r,action_f,action_r";
}

inline std::string report_csv_row(const std::string& tag,
                                  const EvalReport& r) {
  static const char* kOrder[] = {
      "route_desc/forward",    "route_desc/reverse",
      "direction_mcq/forward", "direction_mcq/reverse",
      "landmark_mcq/forward",  "landmark_mcq/reverse",
      "action_mcq/forward",    "action_mcq/reverse"};
  std::string row = tag;
  char buf[32];
  std::snprintf(buf, sizeof(buf), ",%.2f,%.2f", r.avg_st, r.avg_total);
  row += buf;
  for (const char* key : kOrder) {
    auto it = r.family_scores.find(key);
    if (it == r.family_scores.end()) {
      row += ",";
    } else {
      std::snprintf(buf, sizeof(buf), ",%.2f", it->second);
      row += buf;
    }
  }
  return row;
}

// -------- model-driven evaluation --------

/// Greedy-decodes a completion per item and extracts its answer region.
inline std::vector<Prediction> generate_predictions(
    const PolicyParams& params, const std::vector<QAItem>& items,
    int max_len) {
  const Vocab& v = default_vocab();
  std::vector<Prediction> out;
  out.reserve(items.size());
  for (const QAItem& it : items) {
    std::vector<int> x = v.encode(it.prompt);
    std::vector<int> ids = greedy_decode(params, x, max_len);
    Prediction p;
    p.id = it.id;
    p.text = v.decode(ids);
    p.extracted = extract_answer_region(p.text).value_or("");
    out.push_back(std::move(p));
  }
  return out;
}

/// Full report over a dataset: MCQ accuracies plus rubric means when routes
/// are supplied.
inline EvalReport evaluate_predictions(
    const std::vector<Prediction>& predictions, const Dataset& ds,
    const RouteIndex* routes = nullptr) {
  std::map<std::string, double> scores = mcq_accuracy(predictions, ds);
  if (routes) {
    for (const auto& [key, score] : rubric_means(predictions, ds, *routes))
      scores[key] = score;
  }
  return make_report(scores);
}

inline void write_predictions_jsonl(const std::string& path,
                                    const std::vector<Prediction>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const Prediction& p : preds) {
    json j;
    j["id"] = p.id;
    j["text"] = p.text;
    out << j.dump() << "\n";
  }
}

inline std::vector<Prediction> read_predictions_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open predictions file: " + path);
  std::vector<Prediction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Prediction p;
    p.id = j.at("id").get<std::string>();
    p.text = j.at("text").get<std::string>();
    p.extracted = extract_answer_region(p.text).value_or("");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace routelab
