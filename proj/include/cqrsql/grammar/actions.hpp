#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "cqrsql/grammar/grammar.hpp"
#include "cqrsql/grammar/sql.hpp"

namespace cqrsql {

class ActionError : public SqlError {
 public:
  using SqlError::SqlError;
};

struct Action {
  enum class Kind { ApplyRule, SelectColumn, SelectTable, SelectValue };
  Kind kind = Kind::ApplyRule;
  std::size_t id = 0;

  static Action rule(std::size_t id) { return {Kind::ApplyRule, id}; }
  static Action column(std::size_t id) { return {Kind::SelectColumn, id}; }
  static Action table(std::size_t id) { return {Kind::SelectTable, id}; }
  static Action value() { return {Kind::SelectValue, 0}; }

  friend bool operator==(const Action&, const Action&) = default;
  friend auto operator<=>(const Action&, const Action&) = default;
};

using ActionSequence = std::vector<Action>;

inline std::string to_string(const Action& a) {
  switch (a.kind) {
    case Action::Kind::ApplyRule: return "ApplyRule(" + std::to_string(a.id) + ")";
    case Action::Kind::SelectColumn: return "SelectColumn(" + std::to_string(a.id) + ")";
    case Action::Kind::SelectTable: return "SelectTable(" + std::to_string(a.id) + ")";
    case Action::Kind::SelectValue: return "SelectValue(" + std::to_string(a.id) + ")";
  }
  return "?";
}

inline Action::Kind action_kind_for(Symbol::Kind k) {
  switch (k) {
    case Symbol::Kind::Nonterminal: return Action::Kind::ApplyRule;
    case Symbol::Kind::Column: return Action::Kind::SelectColumn;
    case Symbol::Kind::Table: return Action::Kind::SelectTable;
    case Symbol::Kind::Value: return Action::Kind::SelectValue;
  }
  return Action::Kind::ApplyRule;
}

/// Legal actions at the frontier: one flag per rule id, column id, table id
/// or (for Value) the single placeholder.
struct ActionMask {
  Symbol::Kind kind = Symbol::Kind::Nonterminal;
  std::vector<bool> legal;

  std::size_t count() const { return static_cast<std::size_t>(std::count(legal.begin(), legal.end(), true)); }
  bool allows(const Action& a) const {
    return a.kind == action_kind_for(kind) && a.id < legal.size() && legal[a.id];
  }
};

/// One applied action and where it sat in the tree.
struct StepRecord {
  Action action;
  Symbol node;      // frontier node type the action expanded or filled
  int parent_step;  // step that created the node; -1 for the root
};

/// Partial AST under depth-first, left-to-right construction. Tracks the
/// pending frontier, the parent step of every node and the FROM tables of
/// each SELECT block (columns must come from them; a block lists a table at
/// most once).
class AstState {
 public:
  AstState(const Grammar& grammar, const Schema& schema) : grammar_(&grammar), schema_(&schema) {
    stack_.push_back(Slot{Symbol::of(Nonterminal::Sql), -1, -1, -1, UnitContext::Select});
  }

  bool complete() const { return stack_.empty(); }
  std::size_t steps() const { return history_.size(); }
  const std::vector<StepRecord>& history() const { return history_; }
  const Grammar& grammar() const { return *grammar_; }
  const Schema& schema() const { return *schema_; }

  const Symbol& frontier() const {
    if (complete()) throw ActionError("tree is complete");
    return stack_.back().sym;
  }

  /// Step index of the action that created the frontier node (-1 for root).
  int frontier_parent_step() const {
    if (complete()) throw ActionError("tree is complete");
    return stack_.back().parent_step;
  }

  ActionMask valid_actions() const {
    if (complete()) throw ActionError("valid_actions on a complete tree");
    const Slot& s = stack_.back();
    ActionMask m;
    m.kind = s.sym.kind;
    switch (s.sym.kind) {
      case Symbol::Kind::Nonterminal: {
        m.legal.assign(grammar_->rule_count(), false);
        for (std::size_t r : grammar_->rules_for(s.sym.nt)) m.legal[r] = rule_allowed(s, grammar_->rule(r).production);
        break;
      }
      case Symbol::Kind::Column: {
        m.legal.assign(schema_->columns.size(), false);
        const auto& tables = scopes_.at(s.scope).tables;
        for (std::size_t c = 0; c < schema_->columns.size(); ++c)
          m.legal[c] = std::find(tables.begin(), tables.end(), schema_->columns[c].table) != tables.end();
        break;
      }
      case Symbol::Kind::Table: {
        m.legal.assign(schema_->tables.size(), true);
        for (std::size_t t : scopes_.at(s.scope).tables) m.legal[t] = false;
        break;
      }
      case Symbol::Kind::Value:
        m.legal.assign(1, true);
        break;
    }
    return m;
  }

  /// Applies one action; throws ActionError if it is not grammatical here.
  void apply(const Action& a) {
    if (complete()) throw ActionError("actions after completion");
    const Slot slot = stack_.back();
    const int step = static_cast<int>(history_.size());
    switch (slot.sym.kind) {
      case Symbol::Kind::Nonterminal: {
        if (a.kind != Action::Kind::ApplyRule)
          throw ActionError("expected ApplyRule for " + slot.sym.name() + ", got " + to_string(a));
        if (a.id >= grammar_->rule_count()) throw ActionError("rule id out of range: " + std::to_string(a.id));
        const Rule& rule = grammar_->rule(a.id);
        if (rule.lhs != slot.sym.nt)
          throw ActionError("rule '" + rule.name + "' does not expand " + slot.sym.name());
        check_rule(slot, rule);
        stack_.pop_back();
        int scope = slot.scope;
        if (rule.production == Production::Query) {
          scope = static_cast<int>(scopes_.size());
          scopes_.push_back({});
        }
        UnitContext ctx = slot.context;
        switch (rule.production) {
          case Production::ItemsOne:
          case Production::ItemsMore: ctx = UnitContext::Select; break;
          case Production::OrderItemsOne:
          case Production::OrderItemsMore: ctx = UnitContext::Order; break;
          default:
            if (rule.lhs == Nonterminal::Pred) ctx = UnitContext::Predicate;
        }
        for (auto it = rule.rhs.rbegin(); it != rule.rhs.rend(); ++it)
          stack_.push_back(Slot{*it, step, static_cast<int>(rule.production), scope, ctx});
        break;
      }
      case Symbol::Kind::Column: {
        if (a.kind != Action::Kind::SelectColumn) throw ActionError("expected SelectColumn, got " + to_string(a));
        if (a.id >= schema_->columns.size()) throw ActionError("column id out of range: " + std::to_string(a.id));
        const auto& tables = scopes_.at(slot.scope).tables;
        if (std::find(tables.begin(), tables.end(), schema_->columns[a.id].table) == tables.end())
          throw ActionError("column '" + schema_->columns[a.id].name + "' is not from a FROM table");
        stack_.pop_back();
        break;
      }
      case Symbol::Kind::Table: {
        if (a.kind != Action::Kind::SelectTable) throw ActionError("expected SelectTable, got " + to_string(a));
        if (a.id >= schema_->tables.size()) throw ActionError("table id out of range: " + std::to_string(a.id));
        auto& tables = scopes_.at(slot.scope).tables;
        if (std::find(tables.begin(), tables.end(), a.id) != tables.end())
          throw ActionError("table '" + schema_->tables[a.id].name + "' already in FROM");
        tables.push_back(a.id);
        stack_.pop_back();
        break;
      }
      case Symbol::Kind::Value: {
        if (a.kind != Action::Kind::SelectValue || a.id != 0)
          throw ActionError("expected SelectValue(0), got " + to_string(a));
        stack_.pop_back();
        break;
      }
    }
    history_.push_back(StepRecord{a, slot.sym, slot.parent_step});
  }

 private:
  enum class UnitContext { Select, Predicate, Order };

  struct Slot {
    Symbol sym;
    int parent_step;
    int parent_production;
    int scope;
    UnitContext context;
  };

  struct Scope {
    std::vector<std::size_t> tables;
  };

  bool rule_allowed(const Slot& s, Production p) const {
    const std::size_t used = s.scope >= 0 ? scopes_[s.scope].tables.size() : 0;
    const auto parent = static_cast<Production>(s.parent_production);
    switch (p) {
      case Production::TablesOne: return used + 1 <= schema_->tables.size();
      case Production::TablesMore: return used + 2 <= schema_->tables.size();
      case Production::RefStar:
        return parent == Production::UnitCount ||
               (parent == Production::UnitNone && s.context == UnitContext::Select);
      case Production::RefDistinct: return parent != Production::UnitNone;
      default: return true;
    }
  }

  void check_rule(const Slot& s, const Rule& rule) const {
    const auto parent = static_cast<Production>(s.parent_production);
    if (rule.production == Production::TablesMore || rule.production == Production::TablesOne) {
      const std::size_t need = rule.production == Production::TablesMore ? 2 : 1;
      if (scopes_.at(s.scope).tables.size() + need > schema_->tables.size())
        throw ActionError("not enough distinct tables left for '" + rule.name + "'");
    }
    if (rule.production == Production::RefStar) {
      const bool ok = parent == Production::UnitCount ||
                      (parent == Production::UnitNone && s.context == UnitContext::Select);
      if (!ok) throw ActionError("'*' only allowed as a select item or inside count()");
    }
    if (rule.production == Production::RefDistinct && parent == Production::UnitNone)
      throw ActionError("DISTINCT column requires an aggregate");
  }

  const Grammar* grammar_;
  const Schema* schema_;
  std::vector<Slot> stack_;
  std::vector<Scope> scopes_;
  std::vector<StepRecord> history_;
};

namespace action_detail {

class Emitter {
 public:
  explicit Emitter(const Grammar& g) : g_(g) {}

  ActionSequence run(const Sql& s) {
    sql(s);
    return std::move(out_);
  }

 private:
  void rule(Production p) { out_.push_back(Action::rule(g_.require(p))); }

  void sql(const Sql& s) {
    switch (s.op) {
      case SetOp::None: rule(Production::SqlSingle); break;
      case SetOp::Intersect: rule(Production::SqlIntersect); break;
      case SetOp::Union: rule(Production::SqlUnion); break;
      case SetOp::Except: rule(Production::SqlExcept); break;
    }
    query(s.query);
    if (s.op != SetOp::None) sql(*s.rhs);
  }

  void query(const Query& q) {
    rule(Production::Query);
    for (std::size_t i = 0; i < q.from.size(); ++i) {
      rule(i + 1 == q.from.size() ? Production::TablesOne : Production::TablesMore);
      out_.push_back(Action::table(q.from[i]));
    }
    rule(q.distinct ? Production::SelectDistinct : Production::SelectAll);
    for (std::size_t i = 0; i < q.select.size(); ++i) {
      rule(i + 1 == q.select.size() ? Production::ItemsOne : Production::ItemsMore);
      unit(q.select[i]);
    }
    if (q.where) {
      rule(Production::WhereSome);
      condition(*q.where);
    } else {
      rule(Production::WhereNone);
    }
    if (!q.group_by.empty()) {
      rule(Production::GroupSome);
      for (std::size_t i = 0; i < q.group_by.size(); ++i) {
        rule(i + 1 == q.group_by.size() ? Production::ColsOne : Production::ColsMore);
        out_.push_back(Action::column(q.group_by[i]));
      }
      if (q.having) {
        rule(Production::HavingSome);
        condition(*q.having);
      } else {
        rule(Production::HavingNone);
      }
    } else {
      if (q.having) throw UnsupportedSql("HAVING without GROUP BY");
      rule(Production::GroupNone);
    }
    if (q.order) {
      rule(Production::OrderSome);
      for (std::size_t i = 0; i < q.order->items.size(); ++i) {
        rule(i + 1 == q.order->items.size() ? Production::OrderItemsOne : Production::OrderItemsMore);
        unit(q.order->items[i]);
      }
      rule(q.order->desc ? Production::DirDesc : Production::DirAsc);
      if (q.order->limit) {
        rule(Production::LimitSome);
        out_.push_back(Action::value());
      } else {
        rule(Production::LimitNone);
      }
    } else {
      rule(Production::OrderNone);
    }
  }

  void unit(const ColUnit& u) {
    static constexpr Production by_agg[] = {Production::UnitNone, Production::UnitMax, Production::UnitMin,
                                            Production::UnitCount, Production::UnitSum, Production::UnitAvg};
    rule(by_agg[static_cast<int>(u.agg)]);
    if (u.star) {
      rule(Production::RefStar);
    } else {
      rule(u.distinct ? Production::RefDistinct : Production::RefColumn);
      out_.push_back(Action::column(u.column));
    }
  }

  void condition(const Condition& c) {
    for (std::size_t i = 0; i < c.preds.size(); ++i) {
      if (i + 1 == c.preds.size()) rule(Production::CondPred);
      else rule(c.conj[i] == Conj::And ? Production::CondAnd : Production::CondOr);
      predicate(c.preds[i]);
    }
  }

  void predicate(const Predicate& p) {
    static constexpr Production by_op[] = {
        Production::PredEq,   Production::PredNe,      Production::PredLt, Production::PredGt,
        Production::PredLe,   Production::PredGe,      Production::PredLike, Production::PredNotLike,
        Production::PredIn,   Production::PredNotIn,   Production::PredBetween};
    rule(by_op[static_cast<int>(p.op)]);
    unit(p.lhs);
    operand(p.rhs);
    if (p.op == CmpOp::Between) operand(p.rhs2);
  }

  void operand(const Operand& o) {
    switch (o.kind) {
      case Operand::Kind::Value:
        rule(Production::OperandValue);
        out_.push_back(Action::value());
        break;
      case Operand::Kind::Column:
        rule(Production::OperandColumn);
        out_.push_back(Action::column(o.column));
        break;
      case Operand::Kind::Subquery:
        rule(Production::OperandSql);
        sql(*o.sub);
        break;
    }
  }

  const Grammar& g_;
  ActionSequence out_;
};

class Reader {
 public:
  Reader(const Grammar& g, const ActionSequence& a) : g_(g), a_(a) {}

  Sql run() { return sql(); }

 private:
  Production next_rule() { return g_.rule(a_.at(pos_++).id).production; }
  std::size_t next_id() { return a_.at(pos_++).id; }

  Sql sql() {
    Sql s;
    const Production p = next_rule();
    s.query = query();
    switch (p) {
      case Production::SqlIntersect: s.op = SetOp::Intersect; break;
      case Production::SqlUnion: s.op = SetOp::Union; break;
      case Production::SqlExcept: s.op = SetOp::Except; break;
      default: s.op = SetOp::None;
    }
    if (s.op != SetOp::None) s.rhs = std::make_shared<const Sql>(sql());
    return s;
  }

  Query query() {
    Query q;
    next_rule();  // query
    while (true) {
      const Production p = next_rule();
      q.from.push_back(next_id());
      if (p == Production::TablesOne) break;
    }
    q.distinct = next_rule() == Production::SelectDistinct;
    while (true) {
      const Production p = next_rule();
      q.select.push_back(unit());
      if (p == Production::ItemsOne) break;
    }
    if (next_rule() == Production::WhereSome) q.where = condition();
    if (next_rule() == Production::GroupSome) {
      while (true) {
        const Production p = next_rule();
        q.group_by.push_back(next_id());
        if (p == Production::ColsOne) break;
      }
      if (next_rule() == Production::HavingSome) q.having = condition();
    }
    if (next_rule() == Production::OrderSome) {
      OrderBy ob;
      while (true) {
        const Production p = next_rule();
        ob.items.push_back(unit());
        if (p == Production::OrderItemsOne) break;
      }
      ob.desc = next_rule() == Production::DirDesc;
      if (next_rule() == Production::LimitSome) {
        next_id();
        ob.limit = true;
      }
      q.order = ob;
    }
    return q;
  }

  ColUnit unit() {
    ColUnit u;
    switch (next_rule()) {
      case Production::UnitMax: u.agg = Agg::Max; break;
      case Production::UnitMin: u.agg = Agg::Min; break;
      case Production::UnitCount: u.agg = Agg::Count; break;
      case Production::UnitSum: u.agg = Agg::Sum; break;
      case Production::UnitAvg: u.agg = Agg::Avg; break;
      default: u.agg = Agg::None;
    }
    const Production ref = next_rule();
    if (ref == Production::RefStar) {
      u.star = true;
    } else {
      u.distinct = ref == Production::RefDistinct;
      u.column = next_id();
    }
    return u;
  }

  Condition condition() {
    Condition c;
    while (true) {
      const Production p = next_rule();
      c.preds.push_back(predicate());
      if (p == Production::CondPred) break;
      c.conj.push_back(p == Production::CondAnd ? Conj::And : Conj::Or);
    }
    return c;
  }

  Predicate predicate() {
    Predicate p;
    const Production r = next_rule();
    p.op = static_cast<CmpOp>(static_cast<int>(r) - static_cast<int>(Production::PredEq));
    p.lhs = unit();
    p.rhs = operand();
    if (p.op == CmpOp::Between) p.rhs2 = operand();
    return p;
  }

  Operand operand() {
    Operand o;
    switch (next_rule()) {
      case Production::OperandValue:
        o.kind = Operand::Kind::Value;
        next_id();
        break;
      case Production::OperandColumn:
        o.kind = Operand::Kind::Column;
        o.column = next_id();
        break;
      default:
        o.kind = Operand::Kind::Subquery;
        o.sub = std::make_shared<const Sql>(sql());
    }
    return o;
  }

  const Grammar& g_;
  const ActionSequence& a_;
  std::size_t pos_ = 0;
};

}  // namespace action_detail

/// Depth-first action sequence that builds the AST of `s`.
inline ActionSequence sql_to_actions(const Sql& s, const Grammar& grammar) {
  return action_detail::Emitter(grammar).run(s);
}

inline ActionSequence sql_to_actions(const std::string& sql, const Schema& schema, const Grammar& grammar) {
  return sql_to_actions(parse_sql(sql, schema), grammar);
}

/// Replays actions through an AstState, rejecting ungrammatical or
/// incomplete sequences.
inline void validate_actions(const ActionSequence& actions, const Grammar& grammar, const Schema& schema) {
  if (actions.empty()) throw ActionError("incomplete tree");
  AstState st(grammar, schema);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (st.complete()) throw ActionError("actions after completion");
    try {
      st.apply(actions[i]);
    } catch (const ActionError& e) {
      throw ActionError("step " + std::to_string(i) + ": " + e.what());
    }
  }
  if (!st.complete()) throw ActionError("incomplete tree");
}

inline Sql actions_to_ast(const ActionSequence& actions, const Grammar& grammar, const Schema& schema) {
  validate_actions(actions, grammar, schema);
  return action_detail::Reader(grammar, actions).run();
}

/// Canonical SQL text of a complete action sequence.
inline std::string actions_to_sql(const ActionSequence& actions, const Grammar& grammar, const Schema& schema) {
  return render_sql(actions_to_ast(actions, grammar, schema), schema);
}

/// Schema item: a table or a column, by id.
struct SchemaItem {
  bool is_table = false;
  std::size_t id = 0;

  friend bool operator==(const SchemaItem&, const SchemaItem&) = default;
  friend auto operator<=>(const SchemaItem&, const SchemaItem&) = default;

  /// Dense index over D: tables first, then columns.
  std::size_t index(const Schema& schema) const { return is_table ? id : schema.tables.size() + id; }
};

namespace action_detail {

inline void collect(const Sql& s, std::set<SchemaItem>& out);

inline void collect_unit(const ColUnit& u, std::set<SchemaItem>& out) {
  if (!u.star) out.insert({false, u.column});
}

inline void collect_cond(const Condition& c, std::set<SchemaItem>& out) {
  for (const auto& p : c.preds) {
    collect_unit(p.lhs, out);
    for (const Operand* o : {&p.rhs, &p.rhs2}) {
      if (o == &p.rhs2 && p.op != CmpOp::Between) continue;
      if (o->kind == Operand::Kind::Column) out.insert({false, o->column});
      if (o->kind == Operand::Kind::Subquery) collect(*o->sub, out);
    }
  }
}

inline void collect(const Sql& s, std::set<SchemaItem>& out) {
  const Query& q = s.query;
  for (auto t : q.from) out.insert({true, t});
  for (const auto& u : q.select) collect_unit(u, out);
  if (q.where) collect_cond(*q.where, out);
  for (auto c : q.group_by) out.insert({false, c});
  if (q.having) collect_cond(*q.having, out);
  if (q.order)
    for (const auto& u : q.order->items) collect_unit(u, out);
  if (s.rhs) collect(*s.rhs, out);
}

}  // namespace action_detail

/// Every table and column referenced by the query, nested blocks included.
inline std::set<SchemaItem> schema_items_of(const Sql& s) {
  std::set<SchemaItem> out;
  action_detail::collect(s, out);
  return out;
}

inline std::set<SchemaItem> schema_items_of(const std::string& sql, const Schema& schema) {
  return schema_items_of(parse_sql(sql, schema));
}

}  // namespace cqrsql
