#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cqrsql/data/schema.hpp"
#include "cqrsql/data/vocab.hpp"

namespace cqrsql {

/// What a linearized position stands for.
struct Segment {
  enum class Kind { Latent, Separator, Question, Table, Column };
  Kind kind = Kind::Latent;
  std::size_t turn = 0;      // Question: index of the turn within the input
  std::size_t position = 0;  // Question: word offset within its turn
  std::size_t item = 0;      // Table / Column: schema id

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// [Z] q1 [SEP] q2 [SEP] ... qn [SEP] t1 c11 c12 ... [SEP] t2 c21 ...
/// Each schema item is one position carrying all of its words.
struct LinearizedInput {
  std::vector<std::vector<std::string>> words;
  std::vector<Segment> segments;
  std::size_t turn_count = 0;
  std::vector<std::size_t> table_positions;
  std::vector<std::size_t> column_positions;

  std::size_t size() const { return words.size(); }

  /// Space-joined rendering; multi-word schema items keep their spaces.
  std::string text() const {
    std::string out;
    for (const auto& w : words) {
      if (!out.empty()) out += ' ';
      out += join_tokens(w);
    }
    return out;
  }

  /// Position of schema item `index` (tables first, then columns).
  std::size_t item_position(std::size_t index) const {
    return index < table_positions.size() ? table_positions[index]
                                          : column_positions.at(index - table_positions.size());
  }
};

inline LinearizedInput linearize(const std::vector<std::vector<std::string>>& turns, const Schema& schema) {
  if (turns.empty()) throw DataError("empty question");
  LinearizedInput in;
  const auto push = [&](std::vector<std::string> w, Segment s) {
    in.words.push_back(std::move(w));
    in.segments.push_back(s);
  };
  push({kLatent}, {Segment::Kind::Latent});
  for (std::size_t t = 0; t < turns.size(); ++t) {
    if (turns[t].empty()) throw DataError("empty question");
    for (std::size_t k = 0; k < turns[t].size(); ++k) push({turns[t][k]}, {Segment::Kind::Question, t, k, 0});
    push({kSep}, {Segment::Kind::Separator});
  }
  in.turn_count = turns.size();
  in.table_positions.resize(schema.tables.size());
  in.column_positions.resize(schema.columns.size());
  for (std::size_t t = 0; t < schema.tables.size(); ++t) {
    if (t) push({kSep}, {Segment::Kind::Separator});
    in.table_positions[t] = in.size();
    push(schema.tables[t].words, {Segment::Kind::Table, 0, 0, t});
    for (std::size_t c : schema.tables[t].columns) {
      in.column_positions[c] = in.size();
      push(schema.columns[c].words, {Segment::Kind::Column, 0, 0, c});
    }
  }
  return in;
}

inline LinearizedInput linearize(const std::vector<std::string>& question, const Schema& schema) {
  return linearize(std::vector<std::vector<std::string>>{question}, schema);
}

enum class Relation : std::uint8_t {
  None,
  QuestionDistM2,
  QuestionDistM1,
  QuestionDist0,
  QuestionDistP1,
  QuestionDistP2,
  ColumnOfTable,
  ForeignKey,
  SameTable,
  ExactMatch,
  PartialMatch,
  NoMatch,
};
inline constexpr std::size_t kRelationCount = 12;

inline const char* to_string(Relation r) {
  static constexpr std::array<const char*, kRelationCount> names = {
      "no_relation", "qq_-2",      "qq_-1",       "qq_0",       "qq_+1",         "qq_+2",
      "column_of_table", "foreign_key", "same_table", "exact_match", "partial_match", "no_match"};
  return names[static_cast<std::size_t>(r)];
}

struct RelationGraph {
  std::size_t n = 0;
  std::vector<std::uint8_t> labels;

  Relation at(std::size_t i, std::size_t j) const { return static_cast<Relation>(labels.at(i * n + j)); }
  std::size_t id(std::size_t i, std::size_t j) const { return labels.at(i * n + j); }
};

namespace relation_detail {

inline Relation text_match(const std::string& token, const std::vector<std::string>& item) {
  for (const auto& w : item)
    if (w == token) return Relation::ExactMatch;
  for (const auto& w : item) {
    const std::string& shorter = w.size() < token.size() ? w : token;
    const std::string& longer = w.size() < token.size() ? token : w;
    if (shorter.size() >= 3 && longer.find(shorter) != std::string::npos) return Relation::PartialMatch;
  }
  return Relation::NoMatch;
}

}  // namespace relation_detail

/// Pairwise labels over a linearized input. Question pairs get their turn
/// distance clamped to [-2, 2]; question/schema pairs get a textual match
/// label; the latent token is NoMatch against every schema item.
inline RelationGraph build_relations(const LinearizedInput& in, const Schema& schema) {
  using K = Segment::Kind;
  RelationGraph g;
  g.n = in.size();
  g.labels.assign(g.n * g.n, static_cast<std::uint8_t>(Relation::None));
  const auto is_fk = [&](std::size_t a, std::size_t b) {
    for (auto [x, y] : schema.foreign_keys)
      if ((x == a && y == b) || (x == b && y == a)) return true;
    return false;
  };
  for (std::size_t i = 0; i < g.n; ++i) {
    const Segment& a = in.segments[i];
    for (std::size_t j = 0; j < g.n; ++j) {
      const Segment& b = in.segments[j];
      Relation r = Relation::None;
      const bool a_schema = a.kind == K::Table || a.kind == K::Column;
      const bool b_schema = b.kind == K::Table || b.kind == K::Column;
      if (a.kind == K::Question && b.kind == K::Question) {
        const long d = std::clamp(static_cast<long>(b.turn) - static_cast<long>(a.turn), -2L, 2L);
        r = static_cast<Relation>(static_cast<int>(Relation::QuestionDist0) + d);
      } else if ((a.kind == K::Latent && b_schema) || (b.kind == K::Latent && a_schema)) {
        r = Relation::NoMatch;
      } else if (a.kind == K::Question && b_schema) {
        r = relation_detail::text_match(in.words[i][0], in.words[j]);
      } else if (b.kind == K::Question && a_schema) {
        r = relation_detail::text_match(in.words[j][0], in.words[i]);
      } else if (a.kind == K::Column && b.kind == K::Table) {
        if (schema.columns[a.item].table == b.item) r = Relation::ColumnOfTable;
      } else if (a.kind == K::Table && b.kind == K::Column) {
        if (schema.columns[b.item].table == a.item) r = Relation::ColumnOfTable;
      } else if (a.kind == K::Column && b.kind == K::Column && a.item != b.item) {
        if (is_fk(a.item, b.item)) r = Relation::ForeignKey;
        else if (schema.columns[a.item].table == schema.columns[b.item].table) r = Relation::SameTable;
      }
      g.labels[i * g.n + j] = static_cast<std::uint8_t>(r);
    }
  }
  return g;
}

}  // namespace cqrsql
