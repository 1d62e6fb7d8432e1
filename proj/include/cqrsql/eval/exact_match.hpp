#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cqrsql/grammar/sql.hpp"

namespace cqrsql {

namespace match_detail {

inline std::string sorted_join(std::vector<std::string> parts, bool sort) {
  if (sort) std::sort(parts.begin(), parts.end());
  std::string out;
  for (const auto& p : parts) out += p + ";";
  return out;
}

inline std::string unit_key(const ColUnit& u) {
  return std::string(to_string(u.agg)) + (u.distinct ? "!d" : "") + (u.star ? "*" : "c" + std::to_string(u.column));
}

inline std::string sql_key(const Sql& s);

inline std::string operand_key(const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Value: return "V";
    case Operand::Kind::Column: return "C" + std::to_string(o.column);
    case Operand::Kind::Subquery: return "(" + sql_key(*o.sub) + ")";
  }
  return "?";
}

/// Predicates as a sorted list, connectives as a sorted list: conjunct order
/// does not matter, the connective mix does.
inline std::string condition_key(const std::optional<Condition>& c) {
  if (!c) return "-";
  std::vector<std::string> preds, conj;
  for (const auto& p : c->preds) {
    std::string k = unit_key(p.lhs) + " " + to_string(p.op) + " " + operand_key(p.rhs);
    if (p.op == CmpOp::Between) k += " " + operand_key(p.rhs2);
    preds.push_back(k);
  }
  for (Conj j : c->conj) conj.push_back(j == Conj::And ? "and" : "or");
  return "[" + sorted_join(preds, true) + "|" + sorted_join(conj, true) + "]";
}

inline std::string query_key(const Query& q) {
  std::vector<std::string> select, from, group, order;
  for (const auto& u : q.select) select.push_back(unit_key(u));
  for (auto t : q.from) from.push_back(std::to_string(t));
  std::sort(from.begin(), from.end());
  from.erase(std::unique(from.begin(), from.end()), from.end());
  for (auto c : q.group_by) group.push_back(std::to_string(c));
  std::sort(group.begin(), group.end());
  group.erase(std::unique(group.begin(), group.end()), group.end());
  std::string order_key = "-";
  if (q.order) {
    for (const auto& u : q.order->items) order.push_back(unit_key(u));
    order_key = sorted_join(order, false) + (q.order->desc ? "desc" : "asc") + (q.order->limit ? "+limit" : "");
  }
  return std::string("select") + (q.distinct ? "!d" : "") + "{" + sorted_join(select, true) + "} from{" +
         sorted_join(from, false) + "} where" + condition_key(q.where) + " group{" + sorted_join(group, false) +
         "} having" + condition_key(q.having) + " order{" + order_key + "}";
}

inline std::string sql_key(const Sql& s) {
  std::string k = query_key(s.query);
  if (s.op != SetOp::None) k += std::string(" ") + to_string(s.op) + " " + sql_key(*s.rhs);
  return k;
}

}  // namespace match_detail

/// Canonical component key of a parsed query; two queries exactly match when
/// their keys are equal.
inline std::string match_key(const Sql& s) { return match_detail::sql_key(s); }

struct MatchResult {
  bool match = false;
  bool pred_unparseable = false;
};

/// Component-wise comparison. SELECT items compare as a multiset, FROM and
/// GROUP BY as sets, WHERE/HAVING predicates as sets with their connective
/// counts, ORDER BY in order with direction and the presence of LIMIT;
/// literal values are placeholders. Set operators and subqueries compare
/// recursively.
inline MatchResult match_sql(const std::string& pred, const std::string& gold, const Schema& schema) {
  const Sql g = parse_sql(gold, schema);
  Sql p;
  try {
    p = parse_sql(pred, schema);
  } catch (const SqlError&) {
    return {false, true};
  }
  return {match_key(p) == match_key(g), false};
}

inline bool exact_match(const std::string& pred, const std::string& gold, const Schema& schema) {
  return match_sql(pred, gold, schema).match;
}

enum class Difficulty { Easy, Medium, Hard, Extra };
inline constexpr std::size_t kDifficultyCount = 4;

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
    case Difficulty::Extra: return "extra";
  }
  return "?";
}

struct DifficultyCounts {
  std::size_t comp1 = 0;   // where, group, order, limit, joins, OR, LIKE
  std::size_t comp2 = 0;   // nested queries and set operators
  std::size_t others = 0;  // several aggregates / select items / where predicates / group columns
};

namespace difficulty_detail {

inline void count_nested(const std::optional<Condition>& c, std::size_t& n) {
  if (!c) return;
  for (const auto& p : c->preds)
    for (const Operand* o : {&p.rhs, &p.rhs2})
      if (o->kind == Operand::Kind::Subquery) ++n;
}

}  // namespace difficulty_detail

inline DifficultyCounts difficulty_counts(const Sql& s) {
  using difficulty_detail::count_nested;
  const Query& q = s.query;
  DifficultyCounts c;
  c.comp1 += q.where ? 1 : 0;
  c.comp1 += q.group_by.empty() ? 0 : 1;
  c.comp1 += q.order ? 1 : 0;
  c.comp1 += q.order && q.order->limit ? 1 : 0;
  c.comp1 += q.from.size() > 1 ? q.from.size() - 1 : 0;
  std::size_t aggs = 0;
  for (const auto* cond : {&q.where, &q.having}) {
    if (!*cond) continue;
    for (Conj j : (*cond)->conj) c.comp1 += j == Conj::Or ? 1 : 0;
    for (const auto& p : (*cond)->preds) {
      c.comp1 += p.op == CmpOp::Like || p.op == CmpOp::NotLike ? 1 : 0;
      aggs += p.lhs.agg != Agg::None ? 1 : 0;
    }
  }
  count_nested(q.where, c.comp2);
  count_nested(q.having, c.comp2);
  c.comp2 += s.op != SetOp::None ? 1 : 0;
  for (const auto& u : q.select) aggs += u.agg != Agg::None ? 1 : 0;
  if (q.order)
    for (const auto& u : q.order->items) aggs += u.agg != Agg::None ? 1 : 0;
  c.others += aggs > 1 ? 1 : 0;
  c.others += q.select.size() > 1 ? 1 : 0;
  c.others += q.where && q.where->preds.size() > 1 ? 1 : 0;
  c.others += q.group_by.size() > 1 ? 1 : 0;
  return c;
}

/// Approximate hardness rubric. Nesting or a set operator makes a query at
/// least Hard, and Extra as soon as anything else is present.
inline Difficulty classify_difficulty(const Sql& s) {
  const DifficultyCounts c = difficulty_counts(s);
  if (c.comp2 >= 1) return c.comp1 + c.others + c.comp2 >= 2 ? Difficulty::Extra : Difficulty::Hard;
  if (c.comp1 <= 1 && c.others == 0) return Difficulty::Easy;
  if ((c.comp1 <= 2 && c.others <= 1) || (c.comp1 <= 1 && c.others <= 2)) return Difficulty::Medium;
  if (c.comp1 <= 3 && c.others <= 2) return Difficulty::Hard;
  return Difficulty::Extra;
}

inline Difficulty classify_difficulty(const std::string& sql, const Schema& schema) {
  return classify_difficulty(parse_sql(sql, schema));
}

}  // namespace cqrsql
