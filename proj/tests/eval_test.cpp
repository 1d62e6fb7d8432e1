#include <gtest/gtest.h>

#include "cqrsql/eval/evaluate.hpp"
#include "support.hpp"

using namespace cqrsql;
using namespace cqrsql::testing_support;

namespace {

const SchemaMap& schemas() {
  static const SchemaMap s = load_schemas(data_path("tables.json"));
  return s;
}

const Schema& singer_db() { return schema_for(schemas(), "concert_singer"); }

Interaction interaction_of(const std::string& db, const std::vector<std::string>& golds) {
  Interaction inter{db, {}};
  for (const auto& g : golds) {
    Turn t;
    t.utterance = "q";
    t.question = {"q"};
    t.gold_sql = g;
    t.self_contained = std::vector<std::string>{"q"};
    inter.turns.push_back(t);
  }
  return inter;
}

}  // namespace

// ---------------------------------------------------------------------------
// Exact match

TEST(ExactMatch, HandLabeledPairsAgreeWithTheRubric) {
  const auto pairs = load_labeled_pairs(data_path("exact_match_pairs.json"));
  ASSERT_EQ(pairs.size(), 40u);
  for (const auto& p : pairs)
    EXPECT_EQ(exact_match(p.pred, p.gold, schema_for(schemas(), p.database_id)), p.match)
        << "interaction " << p.interaction << " turn " << p.turn << ": " << p.pred << " vs " << p.gold;
}

TEST(ExactMatch, HandLabeledQmAndImMatchLabelCounts) {
  const PairDataset ds = pairs_as_dataset(load_labeled_pairs(data_path("exact_match_pairs.json")));
  std::size_t q = 0, qm = 0, im = 0;
  for (const auto& labels : ds.labels) {
    bool all = true;
    for (bool l : labels) {
      ++q;
      qm += l;
      all = all && l;
    }
    im += all;
  }
  const EvalReport r = score_predictions(ds.data, schemas(), ds.predictions);
  EXPECT_EQ(r.questions, q);
  EXPECT_EQ(r.questions_matched, qm);
  EXPECT_EQ(r.interactions_matched, im);
  EXPECT_EQ(r.qm, static_cast<double>(qm) / static_cast<double>(q));
  EXPECT_EQ(r.im, static_cast<double>(im) / static_cast<double>(ds.labels.size()));
  EXPECT_LE(r.im, r.qm);
}

TEST(ExactMatch, ComponentRules) {
  const Schema& s = singer_db();
  EXPECT_TRUE(exact_match("SELECT name, age FROM singer", "SELECT name, age FROM singer", s));
  EXPECT_TRUE(exact_match("SELECT age, name FROM singer", "SELECT name, age FROM singer", s));
  EXPECT_FALSE(exact_match("SELECT name FROM singer WHERE age < 30", "SELECT name FROM singer WHERE age > 30", s));
  EXPECT_TRUE(exact_match("SELECT name FROM singer WHERE age > 99", "SELECT name FROM singer WHERE age > 30", s));
  EXPECT_TRUE(exact_match("SELECT name FROM singer WHERE country = 'x' AND age > 1",
                          "SELECT name FROM singer WHERE age > 30 AND country = 'France'", s));
  EXPECT_FALSE(exact_match("SELECT name FROM singer ORDER BY age DESC", "SELECT name FROM singer ORDER BY age ASC", s));
  EXPECT_FALSE(exact_match("SELECT name FROM singer ORDER BY age DESC", "SELECT name FROM singer ORDER BY age DESC LIMIT 1", s));
  EXPECT_FALSE(exact_match("SELECT name FROM singer UNION SELECT name FROM singer",
                           "SELECT name FROM singer INTERSECT SELECT name FROM singer", s));
  const MatchResult bad = match_sql("SELECT FROM WHERE", "SELECT name FROM singer", s);
  EXPECT_FALSE(bad.match);
  EXPECT_TRUE(bad.pred_unparseable);
  EXPECT_FALSE(match_sql("", "SELECT name FROM singer", s).match);
}

// ---------------------------------------------------------------------------
// Difficulty

TEST(Difficulty, RubricExamples) {
  const Schema& s = singer_db();
  EXPECT_EQ(classify_difficulty("SELECT name FROM singer", s), Difficulty::Easy);
  EXPECT_EQ(classify_difficulty("SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)", s),
            Difficulty::Extra);
  EXPECT_EQ(classify_difficulty("SELECT name FROM singer UNION SELECT name FROM stadium", s), Difficulty::Hard);
  EXPECT_EQ(classify_difficulty("SELECT name, age FROM singer WHERE age > 30", s), Difficulty::Medium);
  EXPECT_EQ(classify_difficulty("SELECT count(*) FROM singer", s), Difficulty::Easy);
}

TEST(Difficulty, InvariantUnderLiterals) {
  const Schema& s = singer_db();
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"SELECT name FROM singer WHERE age > 30", "SELECT name FROM singer WHERE age > 71"},
      {"SELECT name FROM singer WHERE country = 'France' OR age < 20",
       "SELECT name FROM singer WHERE country = 'Peru' OR age < 99"},
      {"SELECT name FROM stadium ORDER BY capacity DESC LIMIT 1", "SELECT name FROM stadium ORDER BY capacity DESC LIMIT 7"},
  };
  for (const auto& [a, b] : pairs) EXPECT_EQ(classify_difficulty(a, s), classify_difficulty(b, s)) << a;
}

TEST(Difficulty, NestingOrSetOperatorIsAtLeastHard) {
  const Schema& s = singer_db();
  for (const char* q : {"SELECT name FROM singer EXCEPT SELECT name FROM singer WHERE age > 3",
                        "SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer)"})
    EXPECT_GE(static_cast<int>(classify_difficulty(q, s)), static_cast<int>(Difficulty::Hard)) << q;
}

// ---------------------------------------------------------------------------
// Reports

TEST(Report, GoldPredictionsScorePerfectly) {
  const auto data = load_interactions(data_path("train.json"), schemas());
  std::vector<std::vector<std::string>> preds;
  for (const auto& inter : data) {
    preds.emplace_back();
    for (const auto& t : inter.turns) preds.back().push_back(t.gold_sql);
  }
  const EvalReport r = score_predictions(data, schemas(), preds);
  EXPECT_EQ(r.qm, 1.0);
  EXPECT_EQ(r.im, 1.0);
}

TEST(Report, OneWrongTurnFailsTheInteractionOnly) {
  const std::vector<Interaction> data = {interaction_of(
      "concert_singer", {"SELECT name FROM singer", "SELECT name FROM singer WHERE age > 30", "SELECT count(*) FROM singer"})};
  const EvalReport r = score_predictions(
      data, schemas(), {{"SELECT name FROM singer", "SELECT name FROM singer WHERE age < 30", "SELECT count(*) FROM singer"}});
  EXPECT_EQ(r.questions_matched, 2u);
  EXPECT_DOUBLE_EQ(r.qm, 2.0 / 3.0);
  EXPECT_EQ(r.interactions_matched, 0u);
  EXPECT_EQ(r.im, 0.0);
  EXPECT_FALSE(r.details[1].match);
}

TEST(Report, BucketsReconcileWithTotals) {
  std::vector<std::string> golds;
  for (int i = 0; i < 6; ++i) golds.push_back(i % 2 ? "SELECT name FROM singer WHERE age > 3" : "SELECT name FROM singer");
  const std::vector<Interaction> data = {interaction_of("concert_singer", golds),
                                         interaction_of("concert_singer", {"SELECT count(*) FROM singer"})};
  std::vector<std::vector<std::string>> preds = {golds, {"SELECT name FROM singer"}};
  preds[0][5] = "nonsense";
  const EvalReport r = score_predictions(data, schemas(), preds);
  std::size_t turn_total = 0, turn_matched = 0, diff_total = 0, diff_matched = 0;
  for (const auto& b : r.by_turn) turn_total += b.total, turn_matched += b.matched;
  for (const auto& b : r.by_difficulty) diff_total += b.total, diff_matched += b.matched;
  EXPECT_EQ(turn_total, r.questions);
  EXPECT_EQ(diff_total, r.questions);
  EXPECT_EQ(turn_matched, r.questions_matched);
  EXPECT_EQ(diff_matched, r.questions_matched);
  EXPECT_EQ(r.by_turn[0].total, 2u);
  EXPECT_EQ(r.by_turn[4].total, 2u);  // turns 5 and 6 share the ">4" bucket
  EXPECT_EQ(r.by_turn[4].matched, 1u);
  EXPECT_TRUE(r.details[5].pred_unparseable);
  const Json j = r.to_json();
  EXPECT_EQ(j["by_turn"][">4"]["total"], 2);
  EXPECT_EQ(j["details"].size(), r.questions);
}

TEST(Report, TextRendering) {
  const std::vector<Interaction> data = {interaction_of("concert_singer", {"SELECT name FROM singer"})};
  const std::string text = score_predictions(data, schemas(), {{"SELECT name FROM singer"}}).to_text();
  for (const char* needle : {"QM", "IM", "turn 1", "turn >4", "easy", "medium", "hard", "extra", "1.000"})
    EXPECT_NE(text.find(needle), std::string::npos) << needle;
}

TEST(Report, RejectsMisalignedPredictions) {
  const std::vector<Interaction> data = {interaction_of("concert_singer", {"SELECT name FROM singer"})};
  EXPECT_THROW(score_predictions(data, schemas(), {}), std::invalid_argument);
  EXPECT_THROW(score_predictions(data, schemas(), {{"a", "b"}}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Model evaluation

TEST(Evaluate, IgnoresSelfContainedFieldsAndIsDeterministic) {
  const auto data = load_interactions(data_path("train.json"), schemas());
  const ParserModel m =
      ParserModel::create(build_vocab(data, schemas()), Grammar::sql(), ModelConfig::tiny(), 4);
  const std::string clean = evaluate(m, data, schemas(), 1).to_json().dump();
  auto tampered = data;
  for (auto& inter : tampered)
    for (auto& t : inter.turns) t.self_contained = std::vector<std::string>{"stadium", "zzz", "drop", "table"};
  EXPECT_EQ(evaluate(m, tampered, schemas(), 1).to_json().dump(), clean);
  EXPECT_EQ(evaluate(m, data, schemas(), 1).to_json().dump(), clean);
}
