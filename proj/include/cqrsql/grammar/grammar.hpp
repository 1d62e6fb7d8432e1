#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cqrsql/grammar/sql.hpp"

namespace cqrsql {

enum class Nonterminal {
  Sql,
  Query,
  TableList,
  Select,
  SelItems,
  ColUnit,
  ColRef,
  OptWhere,
  Cond,
  Pred,
  Operand,
  OptGroup,
  ColList,
  OptHaving,
  OptOrder,
  OrderItems,
  Direction,
  OptLimit,
};
inline constexpr std::size_t kNonterminalCount = 18;

inline const char* to_string(Nonterminal n) {
  static constexpr std::array<const char*, kNonterminalCount> names = {
      "sql", "query", "table_list", "select", "sel_items", "col_unit", "col_ref", "opt_where", "cond",
      "pred", "operand", "opt_group", "col_list", "opt_having", "opt_order", "order_items", "direction",
      "opt_limit"};
  return names[static_cast<std::size_t>(n)];
}

/// Grammar symbol: a nonterminal or one of the three terminal kinds.
struct Symbol {
  enum class Kind { Nonterminal, Column, Table, Value };
  Kind kind = Kind::Nonterminal;
  Nonterminal nt = Nonterminal::Sql;

  static Symbol of(Nonterminal n) { return {Kind::Nonterminal, n}; }
  static Symbol column() { return {Kind::Column, Nonterminal::Sql}; }
  static Symbol table() { return {Kind::Table, Nonterminal::Sql}; }
  static Symbol value() { return {Kind::Value, Nonterminal::Sql}; }

  bool is_terminal() const { return kind != Kind::Nonterminal; }

  /// Dense node-type index: nonterminals first, then Column, Table, Value.
  std::size_t type_index() const {
    switch (kind) {
      case Kind::Nonterminal: return static_cast<std::size_t>(nt);
      case Kind::Column: return kNonterminalCount;
      case Kind::Table: return kNonterminalCount + 1;
      case Kind::Value: return kNonterminalCount + 2;
    }
    return 0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Nonterminal: return to_string(nt);
      case Kind::Column: return "Column";
      case Kind::Table: return "Table";
      case Kind::Value: return "Value";
    }
    return "?";
  }

  friend bool operator==(const Symbol& a, const Symbol& b) {
    return a.kind == b.kind && (a.kind != Kind::Nonterminal || a.nt == b.nt);
  }
};
inline constexpr std::size_t kNodeTypeCount = kNonterminalCount + 3;

/// Every production of the SQL grammar. A Grammar holds a subset of these
/// with dense rule ids.
enum class Production {
  SqlSingle, SqlIntersect, SqlUnion, SqlExcept,
  Query,
  TablesOne, TablesMore,
  SelectAll, SelectDistinct,
  ItemsOne, ItemsMore,
  UnitNone, UnitMax, UnitMin, UnitCount, UnitSum, UnitAvg,
  RefColumn, RefDistinct, RefStar,
  WhereNone, WhereSome,
  CondPred, CondAnd, CondOr,
  PredEq, PredNe, PredLt, PredGt, PredLe, PredGe, PredLike, PredNotLike, PredIn, PredNotIn, PredBetween,
  OperandValue, OperandColumn, OperandSql,
  GroupNone, GroupSome,
  ColsOne, ColsMore,
  HavingNone, HavingSome,
  OrderNone, OrderSome,
  OrderItemsOne, OrderItemsMore,
  DirAsc, DirDesc,
  LimitNone, LimitSome,
};
inline constexpr std::size_t kProductionCount = 53;

struct Rule {
  Production production;
  Nonterminal lhs;
  std::vector<Symbol> rhs;
  std::string name;
};

namespace grammar_detail {

inline std::vector<Rule> all_rules() {
  using N = Nonterminal;
  using P = Production;
  const auto nt = [](N n) { return Symbol::of(n); };
  const Symbol C = Symbol::column(), T = Symbol::table(), V = Symbol::value();
  std::vector<Rule> r = {
      {P::SqlSingle, N::Sql, {nt(N::Query)}, "sql.single"},
      {P::SqlIntersect, N::Sql, {nt(N::Query), nt(N::Sql)}, "sql.intersect"},
      {P::SqlUnion, N::Sql, {nt(N::Query), nt(N::Sql)}, "sql.union"},
      {P::SqlExcept, N::Sql, {nt(N::Query), nt(N::Sql)}, "sql.except"},
      {P::Query, N::Query,
       {nt(N::TableList), nt(N::Select), nt(N::OptWhere), nt(N::OptGroup), nt(N::OptOrder)}, "query"},
      {P::TablesOne, N::TableList, {T}, "tables.one"},
      {P::TablesMore, N::TableList, {T, nt(N::TableList)}, "tables.more"},
      {P::SelectAll, N::Select, {nt(N::SelItems)}, "select.all"},
      {P::SelectDistinct, N::Select, {nt(N::SelItems)}, "select.distinct"},
      {P::ItemsOne, N::SelItems, {nt(N::ColUnit)}, "items.one"},
      {P::ItemsMore, N::SelItems, {nt(N::ColUnit), nt(N::SelItems)}, "items.more"},
      {P::UnitNone, N::ColUnit, {nt(N::ColRef)}, "unit.none"},
      {P::UnitMax, N::ColUnit, {nt(N::ColRef)}, "unit.max"},
      {P::UnitMin, N::ColUnit, {nt(N::ColRef)}, "unit.min"},
      {P::UnitCount, N::ColUnit, {nt(N::ColRef)}, "unit.count"},
      {P::UnitSum, N::ColUnit, {nt(N::ColRef)}, "unit.sum"},
      {P::UnitAvg, N::ColUnit, {nt(N::ColRef)}, "unit.avg"},
      {P::RefColumn, N::ColRef, {C}, "ref.column"},
      {P::RefDistinct, N::ColRef, {C}, "ref.distinct"},
      {P::RefStar, N::ColRef, {}, "ref.star"},
      {P::WhereNone, N::OptWhere, {}, "where.none"},
      {P::WhereSome, N::OptWhere, {nt(N::Cond)}, "where.some"},
      {P::CondPred, N::Cond, {nt(N::Pred)}, "cond.pred"},
      {P::CondAnd, N::Cond, {nt(N::Pred), nt(N::Cond)}, "cond.and"},
      {P::CondOr, N::Cond, {nt(N::Pred), nt(N::Cond)}, "cond.or"},
      {P::PredEq, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.eq"},
      {P::PredNe, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.ne"},
      {P::PredLt, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.lt"},
      {P::PredGt, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.gt"},
      {P::PredLe, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.le"},
      {P::PredGe, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.ge"},
      {P::PredLike, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.like"},
      {P::PredNotLike, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.not_like"},
      {P::PredIn, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.in"},
      {P::PredNotIn, N::Pred, {nt(N::ColUnit), nt(N::Operand)}, "pred.not_in"},
      {P::PredBetween, N::Pred, {nt(N::ColUnit), nt(N::Operand), nt(N::Operand)}, "pred.between"},
      {P::OperandValue, N::Operand, {V}, "operand.value"},
      {P::OperandColumn, N::Operand, {C}, "operand.column"},
      {P::OperandSql, N::Operand, {nt(N::Sql)}, "operand.sql"},
      {P::GroupNone, N::OptGroup, {}, "group.none"},
      {P::GroupSome, N::OptGroup, {nt(N::ColList), nt(N::OptHaving)}, "group.some"},
      {P::ColsOne, N::ColList, {C}, "cols.one"},
      {P::ColsMore, N::ColList, {C, nt(N::ColList)}, "cols.more"},
      {P::HavingNone, N::OptHaving, {}, "having.none"},
      {P::HavingSome, N::OptHaving, {nt(N::Cond)}, "having.some"},
      {P::OrderNone, N::OptOrder, {}, "order.none"},
      {P::OrderSome, N::OptOrder, {nt(N::OrderItems), nt(N::Direction), nt(N::OptLimit)}, "order.some"},
      {P::OrderItemsOne, N::OrderItems, {nt(N::ColUnit)}, "order_items.one"},
      {P::OrderItemsMore, N::OrderItems, {nt(N::ColUnit), nt(N::OrderItems)}, "order_items.more"},
      {P::DirAsc, N::Direction, {}, "dir.asc"},
      {P::DirDesc, N::Direction, {}, "dir.desc"},
      {P::LimitNone, N::OptLimit, {}, "limit.none"},
      {P::LimitSome, N::OptLimit, {V}, "limit.some"},
  };
  return r;
}

}  // namespace grammar_detail

/// An ApplyRule inventory over the SQL nonterminals. Rule ids are dense from 0
/// in Production order.
class Grammar {
 public:
  /// The full SQL grammar.
  static Grammar sql() {
    std::set<Production> all;
    for (std::size_t i = 0; i < kProductionCount; ++i) all.insert(static_cast<Production>(i));
    return Grammar(all);
  }

  /// A grammar restricted to `keep`. Every nonterminal still needs ≥1 rule.
  explicit Grammar(const std::set<Production>& keep) {
    index_.fill(-1);
    for (auto& rule : grammar_detail::all_rules()) {
      if (!keep.count(rule.production)) continue;
      index_[static_cast<std::size_t>(rule.production)] = static_cast<int>(rules_.size());
      rules_.push_back(std::move(rule));
    }
    for (std::size_t n = 0; n < kNonterminalCount; ++n) {
      bool any = false;
      for (const auto& r : rules_) any = any || r.lhs == static_cast<Nonterminal>(n);
      if (!any)
        throw SqlError(std::string("grammar: nonterminal '") + to_string(static_cast<Nonterminal>(n)) +
                       "' has no rule");
    }
  }

  std::size_t rule_count() const { return rules_.size(); }
  const Rule& rule(std::size_t id) const { return rules_.at(id); }
  const std::vector<Rule>& rules() const { return rules_; }

  std::optional<std::size_t> id_of(Production p) const {
    const int i = index_[static_cast<std::size_t>(p)];
    if (i < 0) return std::nullopt;
    return static_cast<std::size_t>(i);
  }

  bool has(Production p) const { return id_of(p).has_value(); }

  /// Rule id of `p`, or UnsupportedSql naming the missing production.
  std::size_t require(Production p) const {
    auto id = id_of(p);
    if (!id) throw UnsupportedSql(grammar_detail::all_rules()[static_cast<std::size_t>(p)].name);
    return *id;
  }

  std::vector<std::size_t> rules_for(Nonterminal n) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rules_.size(); ++i)
      if (rules_[i].lhs == n) out.push_back(i);
    return out;
  }

  /// Human-readable rule listing: "<id> <lhs> -> <rhs...>  # <name>".
  std::string serialize() const {
    std::ostringstream os;
    os << "# SQL abstract-syntax grammar: one ApplyRule per line.\n";
    os << "# Terminals: Column (SelectColumn), Table (SelectTable), Value (literal placeholder).\n";
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const auto& r = rules_[i];
      os << i << ' ' << to_string(r.lhs) << " ->";
      if (r.rhs.empty()) os << " <empty>";
      for (const auto& s : r.rhs) os << ' ' << s.name();
      os << "  # " << r.name << '\n';
    }
    return os.str();
  }

 private:
  std::vector<Rule> rules_;
  std::array<int, kProductionCount> index_{};
};

}  // namespace cqrsql
