#pragma once

#include <array>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqrsql/data/dataset.hpp"
#include "cqrsql/eval/exact_match.hpp"
#include "cqrsql/model/parser.hpp"

namespace cqrsql {

struct Bucket {
  std::size_t total = 0;
  std::size_t matched = 0;

  double accuracy() const { return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0; }
};

struct QuestionResult {
  std::size_t interaction = 0;
  std::size_t turn = 0;
  std::string pred;
  std::string gold;
  bool match = false;
  bool pred_unparseable = false;
  Difficulty difficulty = Difficulty::Easy;
};

inline constexpr std::array<const char*, 5> kTurnBuckets = {"1", "2", "3", "4", ">4"};

struct EvalReport {
  std::size_t questions = 0, interactions = 0;
  std::size_t questions_matched = 0, interactions_matched = 0;
  double qm = 0, im = 0;
  std::array<Bucket, 5> by_turn{};
  std::array<Bucket, kDifficultyCount> by_difficulty{};
  std::vector<QuestionResult> details;

  Json to_json() const {
    Json turns = Json::object(), diffs = Json::object(), rows = Json::array();
    for (std::size_t i = 0; i < by_turn.size(); ++i)
      turns[kTurnBuckets[i]] = {{"total", by_turn[i].total}, {"matched", by_turn[i].matched}, {"qm", by_turn[i].accuracy()}};
    for (std::size_t i = 0; i < kDifficultyCount; ++i)
      diffs[to_string(static_cast<Difficulty>(i))] = {
          {"total", by_difficulty[i].total}, {"matched", by_difficulty[i].matched}, {"qm", by_difficulty[i].accuracy()}};
    for (const auto& r : details)
      rows.push_back({{"interaction", r.interaction},
                      {"turn", r.turn},
                      {"pred", r.pred},
                      {"gold", r.gold},
                      {"match", r.match},
                      {"pred_unparseable", r.pred_unparseable},
                      {"difficulty", to_string(r.difficulty)}});
    return {{"qm", qm},
            {"im", im},
            {"questions", questions},
            {"questions_matched", questions_matched},
            {"interactions", interactions},
            {"interactions_matched", interactions_matched},
            {"by_turn", turns},
            {"by_difficulty", diffs},
            {"details", rows}};
  }

  /// Aligned tables: overall, then per turn and per difficulty bucket.
  std::string to_text() const {
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof line, "%-12s %8s %8s %8s\n", "", "count", "matched", "acc");
    out << line;
    std::snprintf(line, sizeof line, "%-12s %8zu %8zu %8.3f\n", "QM", questions, questions_matched, qm);
    out << line;
    std::snprintf(line, sizeof line, "%-12s %8zu %8zu %8.3f\n", "IM", interactions, interactions_matched, im);
    out << line << "\n";
    for (std::size_t i = 0; i < by_turn.size(); ++i) {
      std::snprintf(line, sizeof line, "turn %-7s %8zu %8zu %8.3f\n", kTurnBuckets[i], by_turn[i].total,
                    by_turn[i].matched, by_turn[i].accuracy());
      out << line;
    }
    out << "\n";
    for (std::size_t i = 0; i < kDifficultyCount; ++i) {
      std::snprintf(line, sizeof line, "%-12s %8zu %8zu %8.3f\n", to_string(static_cast<Difficulty>(i)),
                    by_difficulty[i].total, by_difficulty[i].matched, by_difficulty[i].accuracy());
      out << line;
    }
    return out.str();
  }
};

/// Scores `predictions[i][t]` against the gold SQL of turn t of interaction i.
/// Throws if the report would ever claim IM > QM.
inline EvalReport score_predictions(const std::vector<Interaction>& data, const SchemaMap& schemas,
                                    const std::vector<std::vector<std::string>>& predictions) {
  if (predictions.size() != data.size()) throw std::invalid_argument("prediction count differs from interactions");
  EvalReport r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Schema& schema = schema_for(schemas, data[i].database_id);
    if (predictions[i].size() != data[i].turns.size())
      throw std::invalid_argument("prediction count differs from turns in interaction " + std::to_string(i));
    bool all = true;
    for (std::size_t t = 0; t < data[i].turns.size(); ++t) {
      QuestionResult q;
      q.interaction = i;
      q.turn = t;
      q.pred = predictions[i][t];
      q.gold = data[i].turns[t].gold_sql;
      const MatchResult m = match_sql(q.pred, q.gold, schema);
      q.match = m.match;
      q.pred_unparseable = m.pred_unparseable;
      q.difficulty = classify_difficulty(q.gold, schema);
      all = all && q.match;
      ++r.questions;
      r.questions_matched += q.match;
      Bucket& tb = r.by_turn[std::min<std::size_t>(t, 4)];
      ++tb.total;
      tb.matched += q.match;
      Bucket& db = r.by_difficulty[static_cast<std::size_t>(q.difficulty)];
      ++db.total;
      db.matched += q.match;
      r.details.push_back(std::move(q));
    }
    ++r.interactions;
    r.interactions_matched += all;
  }
  r.qm = r.questions ? static_cast<double>(r.questions_matched) / static_cast<double>(r.questions) : 0.0;
  r.im = r.interactions ? static_cast<double>(r.interactions_matched) / static_cast<double>(r.interactions) : 0.0;
  if (r.im > r.qm) throw std::logic_error("evaluation invariant violated: IM exceeds QM");
  return r;
}

/// Predictions from the question context only; self-contained rewrites are
/// never consulted.
inline std::vector<std::vector<std::string>> predict_dataset(const ParserModel& model,
                                                             const std::vector<Interaction>& data,
                                                             const SchemaMap& schemas, std::size_t beam_size) {
  std::vector<std::vector<std::string>> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Schema& schema = schema_for(schemas, data[i].database_id);
    for (std::size_t t = 0; t < data[i].turns.size(); ++t)
      out[i].push_back(predict_sql(model, prepare_input(context_of(data[i], t), schema), schema, beam_size));
  }
  return out;
}

inline EvalReport evaluate(const ParserModel& model, const std::vector<Interaction>& data, const SchemaMap& schemas,
                           std::size_t beam_size) {
  return score_predictions(data, schemas, predict_dataset(model, data, schemas, beam_size));
}

}  // namespace cqrsql
