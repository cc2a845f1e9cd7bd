#include "routelab/evalsuite.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace routelab;

namespace {

Route route_with_turns(const std::vector<Turn>& turns,
                       std::vector<std::optional<std::string>> landmarks = {}) {
  Route r;
  r.scene = SceneKind::IndoorSingle;
  r.start_x = 16;
  r.start_y = 16;
  r.start_heading = Heading::East;
  r.grid_size = 32;
  r.segments.push_back(Segment{Turn::Straight, 1, {}, {}});
  for (Turn t : turns) r.segments.push_back(Segment{t, 1, {}, {}});
  for (size_t i = 0; i < landmarks.size() && i < r.segments.size(); ++i)
    r.segments[i].landmark = landmarks[i];
  return r;
}

}  // namespace

TEST(ParseDescription, RoundTripsCanonicalOutput) {
  DatasetGenConfig cfg;
  Rng rng(55);
  for (int i = 0; i < 60; ++i) {
    Rng stream = rng.split(i);
    SceneKind scene =
        i % 3 == 0 ? SceneKind::IndoorSingle
                   : (i % 3 == 1 ? SceneKind::IndoorMulti : SceneKind::Outdoor);
    Route r = generate_route(cfg.route_for(scene), stream);
    for (Polarity pol : {Polarity::Forward, Polarity::Reverse}) {
      const Route adjusted = pol == Polarity::Forward ? r : reverse_route(r);
      ParseResult pr = parse_description(describe(r, pol));
      ASSERT_TRUE(pr.ok) << describe(r, pol) << " offset " << pr.fail_offset;
      EXPECT_EQ(pr.turns, turn_sequence(adjusted));
      EXPECT_EQ(pr.landmarks, landmark_sequence(adjusted));
      EXPECT_EQ(pr.actions, action_sequence(adjusted));
      const int expected_clauses =
          static_cast<int>(adjusted.segments.size()) +
          static_cast<int>(std::count_if(
              adjusted.segments.begin() + 1, adjusted.segments.end(),
              [](const Segment& s) { return s.turn != Turn::Straight; }));
      EXPECT_EQ(pr.clause_count, expected_clauses);
    }
  }
}

TEST(ParseDescription, RejectsDeviations) {
  EXPECT_FALSE(parse_description("turn backwards.").ok);
  EXPECT_FALSE(parse_description("").ok);
  EXPECT_FALSE(parse_description("go straight for x steps.").ok);
  EXPECT_FALSE(parse_description("go straight for 2 steps").ok);  // no period
  EXPECT_FALSE(parse_description("go straight for 2 steps..").ok);
  EXPECT_FALSE(parse_description("turn left at the .").ok);
  ParseResult pr = parse_description("turn backwards.");
  EXPECT_EQ(pr.fail_offset, 5u);
}

TEST(ParseDescription, ImpliedStraightBetweenMoves) {
  ParseResult pr = parse_description("go straight for 2 steps; turn left.");
  ASSERT_TRUE(pr.ok);
  EXPECT_EQ(pr.turns, std::vector<Turn>{Turn::Left});
  EXPECT_EQ(pr.clause_count, 2);

  pr = parse_description(
      "go straight for 2 steps; go straight for 3 steps; turn right.");
  ASSERT_TRUE(pr.ok);
  std::vector<Turn> expect{Turn::Straight, Turn::Right};
  EXPECT_EQ(pr.turns, expect);
  EXPECT_EQ(pr.clause_count, 3);
}

TEST(ParseDescription, TurnWithLandmarkAndMultiWordNames) {
  ParseResult pr = parse_description(
      "go straight for 4 steps past the bus stop and wait at the light; "
      "turn left at the fountain; go straight for 1 steps.");
  ASSERT_TRUE(pr.ok);
  EXPECT_EQ(pr.landmarks,
            (std::vector<std::string>{"bus stop", "fountain"}));
  EXPECT_EQ(pr.actions, std::vector<std::string>{"wait at the light"});
  EXPECT_EQ(pr.turns, std::vector<Turn>{Turn::Left});
  EXPECT_EQ(pr.clause_count, 3);
}

TEST(RubricScore, GroundTruthScoresPerfect) {
  DatasetGenConfig cfg;
  Rng rng(66);
  for (int i = 0; i < 40; ++i) {
    Rng stream = rng.split(i);
    Route r = generate_route(cfg.route_for(SceneKind::Outdoor), stream);
    for (Polarity pol : {Polarity::Forward, Polarity::Reverse}) {
      RubricScore s = rubric_score(describe(r, pol), r, pol);
      EXPECT_EQ(s.direction, 5);
      EXPECT_EQ(s.landmark, 5);
      EXPECT_EQ(s.semantic, 5);
      EXPECT_EQ(s.percent, 100.0);
    }
  }
}

TEST(RubricScore, EmptyPredictionScoresZero) {
  Route r = route_with_turns({Turn::Left, Turn::Right});
  RubricScore s = rubric_score("", r, Polarity::Forward);
  EXPECT_EQ(s.direction, 0);
  EXPECT_EQ(s.landmark, 0);
  EXPECT_EQ(s.semantic, 0);
  EXPECT_EQ(s.percent, 0.0);
}

TEST(RubricScore, OneTurnSubstitutionScoresThree) {
  // truth turns [Left, Straight, Right]; prediction turns [Left, Right, Right]
  Route r = route_with_turns({Turn::Left, Turn::Straight, Turn::Right});
  // prediction mirrors the canonical structure with the middle straight
  // replaced by an explicit right turn, then drops one move clause so the
  // clause count matches the truth (6 clauses each).
  const std::string truth = describe(r, Polarity::Forward);
  ParseResult tp = parse_description(truth);
  ASSERT_TRUE(tp.ok);
  const std::string pred =
      "go straight for 1 steps; turn left; go straight for 1 steps; "
      "turn right; turn right; go straight for 1 steps.";
  ParseResult pp = parse_description(pred);
  ASSERT_TRUE(pp.ok);
  ASSERT_EQ(pp.clause_count, tp.clause_count);
  std::vector<Turn> predicted{Turn::Left, Turn::Right, Turn::Right};
  ASSERT_EQ(pp.turns, predicted);

  RubricScore s = rubric_score(pred, r, Polarity::Forward);
  EXPECT_EQ(s.direction, 3);  // round(5 * (1 - 1/3))
  EXPECT_EQ(s.semantic, 5);
  EXPECT_EQ(s.landmark, 5);  // both landmark sequences empty
}

TEST(RubricScore, ClauseCountMismatchScoresThreeSemantic) {
  Route r = route_with_turns({Turn::Left});
  RubricScore s = rubric_score("go straight for 1 steps; turn left.",
                               r, Polarity::Forward);
  // truth has 3 clauses (move, turn, move); prediction parses with 2
  EXPECT_EQ(s.semantic, 3);
}

TEST(RubricScore, AppendingWrongTurnNeverHelps) {
  DatasetGenConfig cfg;
  Rng rng(77);
  for (int i = 0; i < 25; ++i) {
    Rng stream = rng.split(i);
    Route r = generate_route(cfg.route_for(SceneKind::IndoorSingle), stream);
    const std::string truth = describe(r, Polarity::Forward);
    RubricScore base = rubric_score(truth, r, Polarity::Forward);
    const std::string extended =
        truth.substr(0, truth.size() - 1) + "; turn left; turn left.";
    RubricScore ext = rubric_score(extended, r, Polarity::Forward);
    EXPECT_LE(ext.direction, base.direction);
  }
}

TEST(McqAccuracy, ExactCounts) {
  DatasetGenConfig cfg;
  Rng rng(88);
  BuildResult res = build_dataset(cfg, 10, rng);
  // keep only direction MCQs forward for a tight fixture
  std::vector<QAItem> mcqs;
  for (const auto& it : res.dataset.items)
    if (it.kind == TaskKind::DirectionMCQ && it.polarity == Polarity::Forward)
      mcqs.push_back(it);
  ASSERT_GE(mcqs.size(), 4u);
  mcqs.resize(4);
  Dataset ds;
  ds.items = mcqs;

  auto pred_for = [](const QAItem& it, const std::string& letter) {
    return Prediction{it.id, "<answer> " + letter + " </answer>",
                      extract_answer_region("<answer> " + letter +
                                            " </answer>")
                          .value_or("")};
  };

  std::vector<Prediction> all_right, all_bad, three_right;
  for (const auto& it : mcqs) {
    all_right.push_back(pred_for(it, it.answer));
    all_bad.push_back({it.id, "no delimiters here", ""});
  }
  three_right = all_right;
  three_right[0].text = "<answer> " +
                        std::string(mcqs[0].answer == "A" ? "B" : "A") +
                        " </answer>";
  three_right[0].extracted =
      *extract_answer_region(three_right[0].text);

  auto table_full = mcq_accuracy(all_right, ds);
  EXPECT_EQ(table_full.at("direction_mcq/forward"), 100.0);
  auto table_zero = mcq_accuracy(all_bad, ds);
  EXPECT_EQ(table_zero.at("direction_mcq/forward"), 0.0);
  auto table_three = mcq_accuracy(three_right, ds);
  EXPECT_EQ(table_three.at("direction_mcq/forward"), 75.0);

  std::vector<Prediction> unknown{{"nope", "<answer> A </answer>", "A"}};
  EXPECT_THROW(mcq_accuracy(unknown, ds), DataError);
}

TEST(ExtractAnswer, HandlesDelimiters) {
  EXPECT_EQ(extract_answer_region("<think> x </think> <answer> B </answer>"),
            "B");
  EXPECT_EQ(extract_answer_region("<answer> turn left. </answer> junk"),
            "turn left.");
  EXPECT_FALSE(extract_answer_region("no tags"));
  EXPECT_FALSE(extract_answer_region("<answer> unterminated"));
  EXPECT_FALSE(extract_answer_region("<answer> </answer>"));
}

TEST(Report, AveragesAndFallbacks) {
  std::map<std::string, double> full;
  for (const char* kind :
       {"route_desc", "direction_mcq", "landmark_mcq", "action_mcq"})
    for (const char* pol : {"forward", "reverse"})
      full[std::string(kind) + "/" + pol] = 100.0;
  EvalReport r = make_report(full);
  EXPECT_EQ(r.avg_st, 100.0);
  EXPECT_EQ(r.avg_total, 100.0);
  EXPECT_TRUE(r.missing_families.empty());

  std::map<std::string, double> eight;
  double scores[8] = {10, 20, 30, 40, 50, 60, 70, 80};
  int i = 0;
  for (const char* kind :
       {"route_desc", "direction_mcq", "landmark_mcq", "action_mcq"})
    for (const char* pol : {"forward", "reverse"})
      eight[std::string(kind) + "/" + pol] = scores[i++];
  r = make_report(eight);
  EXPECT_NEAR(r.avg_total, 45.0, 1e-12);
  EXPECT_NEAR(r.avg_st, (10 + 20 + 30 + 40) / 4.0, 1e-12);

  std::map<std::string, double> mcq_only;
  mcq_only["direction_mcq/forward"] = 50.0;
  mcq_only["direction_mcq/reverse"] = 70.0;
  mcq_only["landmark_mcq/forward"] = 90.0;
  r = make_report(mcq_only);
  EXPECT_NEAR(r.avg_st, 60.0, 1e-12);  // direction families only, flagged
  EXPECT_NEAR(r.avg_total, 70.0, 1e-12);
  EXPECT_FALSE(r.missing_families.empty());
}

TEST(Rubric, DeterministicAcrossCalls) {
  Route r = route_with_turns({Turn::Left, Turn::Right, Turn::Straight});
  const std::string pred =
      "go straight for 2 steps; turn right; go straight for 1 steps.";
  RubricScore a = rubric_score(pred, r, Polarity::Reverse);
  RubricScore b = rubric_score(pred, r, Polarity::Reverse);
  EXPECT_EQ(a.direction, b.direction);
  EXPECT_EQ(a.landmark, b.landmark);
  EXPECT_EQ(a.semantic, b.semantic);
  EXPECT_EQ(a.percent, b.percent);
}
