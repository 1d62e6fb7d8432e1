#pragma once

#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqrsql/data/schema.hpp"

namespace cqrsql {

class SqlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for syntactically valid SQL that falls outside the supported fragment.
class UnsupportedSql : public SqlError {
 public:
  explicit UnsupportedSql(const std::string& construct)
      : SqlError("unsupported construct: " + construct), construct_(construct) {}
  const std::string& construct() const { return construct_; }

 private:
  std::string construct_;
};

enum class Agg { None, Max, Min, Count, Sum, Avg };
enum class CmpOp { Eq, Ne, Lt, Gt, Le, Ge, Like, NotLike, In, NotIn, Between };
enum class Conj { And, Or };
enum class SetOp { None, Intersect, Union, Except };

/// An aggregated column reference: agg(DISTINCT column) or agg(*).
struct ColUnit {
  Agg agg = Agg::None;
  bool star = false;
  bool distinct = false;
  std::size_t column = 0;

  friend bool operator==(const ColUnit&, const ColUnit&) = default;
  friend auto operator<=>(const ColUnit&, const ColUnit&) = default;
};

struct Sql;

struct Operand {
  enum class Kind { Value, Column, Subquery };
  Kind kind = Kind::Value;
  std::size_t column = 0;
  std::shared_ptr<const Sql> sub;
};

struct Predicate {
  ColUnit lhs;
  CmpOp op = CmpOp::Eq;
  Operand rhs;
  Operand rhs2;  // upper bound of BETWEEN
};

/// Flat chain p0 c0 p1 c1 p2 ... ; conj.size() == preds.size() - 1.
struct Condition {
  std::vector<Predicate> preds;
  std::vector<Conj> conj;
};

struct OrderBy {
  std::vector<ColUnit> items;
  bool desc = false;
  bool limit = false;
};

/// One SELECT block.
struct Query {
  bool distinct = false;
  std::vector<ColUnit> select;
  std::vector<std::size_t> from;  // table ids, in join order
  std::optional<Condition> where;
  std::vector<std::size_t> group_by;
  std::optional<Condition> having;
  std::optional<OrderBy> order;
};

/// A query possibly combined with another through a set operator
/// (right-nested: q1 UNION (q2 EXCEPT q3)).
struct Sql {
  Query query;
  SetOp op = SetOp::None;
  std::shared_ptr<const Sql> rhs;
};

bool operator==(const Sql& a, const Sql& b);

inline bool operator==(const Operand& a, const Operand& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Operand::Kind::Value: return true;
    case Operand::Kind::Column: return a.column == b.column;
    case Operand::Kind::Subquery: return *a.sub == *b.sub;
  }
  return false;
}
inline bool operator==(const Predicate& a, const Predicate& b) {
  return a.lhs == b.lhs && a.op == b.op && a.rhs == b.rhs && (a.op != CmpOp::Between || a.rhs2 == b.rhs2);
}
inline bool operator==(const Condition& a, const Condition& b) { return a.preds == b.preds && a.conj == b.conj; }
inline bool operator==(const OrderBy& a, const OrderBy& b) {
  return a.items == b.items && a.desc == b.desc && a.limit == b.limit;
}
inline bool operator==(const Query& a, const Query& b) {
  return a.distinct == b.distinct && a.select == b.select && a.from == b.from && a.where == b.where &&
         a.group_by == b.group_by && a.having == b.having && a.order == b.order;
}
inline bool operator==(const Sql& a, const Sql& b) {
  if (!(a.query == b.query) || a.op != b.op) return false;
  if (a.op == SetOp::None) return true;
  return *a.rhs == *b.rhs;
}

inline const char* to_string(Agg a) {
  switch (a) {
    case Agg::None: return "";
    case Agg::Max: return "max";
    case Agg::Min: return "min";
    case Agg::Count: return "count";
    case Agg::Sum: return "sum";
    case Agg::Avg: return "avg";
  }
  return "";
}

inline const char* to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Gt: return ">";
    case CmpOp::Le: return "<=";
    case CmpOp::Ge: return ">=";
    case CmpOp::Like: return "LIKE";
    case CmpOp::NotLike: return "NOT LIKE";
    case CmpOp::In: return "IN";
    case CmpOp::NotIn: return "NOT IN";
    case CmpOp::Between: return "BETWEEN";
  }
  return "=";
}

inline const char* to_string(SetOp op) {
  switch (op) {
    case SetOp::None: return "";
    case SetOp::Intersect: return "INTERSECT";
    case SetOp::Union: return "UNION";
    case SetOp::Except: return "EXCEPT";
  }
  return "";
}

namespace sql_detail {

struct Token {
  enum class Kind { Ident, Number, String, Symbol, End };
  Kind kind = Kind::End;
  std::string text;   // identifiers/keywords lowercased
  std::size_t pos = 0;
};

inline std::vector<Token> lex(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = s[i];
    if (std::isspace(c)) {
      ++i;
    } else if (std::isalpha(c) || c == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      out.push_back({Token::Kind::Ident, to_lower(s.substr(i, j - i)), i});
      i = j;
    } else if (std::isdigit(c)) {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      out.push_back({Token::Kind::Number, s.substr(i, j - i), i});
      i = j;
    } else if (c == '\'' || c == '"') {
      std::size_t j = i + 1;
      while (j < s.size() && s[j] != static_cast<char>(c)) ++j;
      if (j >= s.size()) throw SqlError("unterminated string literal at offset " + std::to_string(i));
      out.push_back({Token::Kind::String, s.substr(i + 1, j - i - 1), i});
      i = j + 1;
    } else if (c == '`') {
      std::size_t j = i + 1;
      while (j < s.size() && s[j] != '`') ++j;
      if (j >= s.size()) throw SqlError("unterminated quoted identifier at offset " + std::to_string(i));
      out.push_back({Token::Kind::Ident, to_lower(s.substr(i + 1, j - i - 1)), i});
      i = j + 1;
    } else {
      std::string two = s.substr(i, 2);
      if (two == "!=" || two == "<>" || two == "<=" || two == ">=") {
        out.push_back({Token::Kind::Symbol, two == "<>" ? "!=" : two, i});
        i += 2;
      } else if (std::string("(),.*=<>;-+/").find(static_cast<char>(c)) != std::string::npos) {
        out.push_back({Token::Kind::Symbol, std::string(1, static_cast<char>(c)), i});
        ++i;
      } else {
        throw SqlError(std::string("unexpected character '") + static_cast<char>(c) + "' at offset " +
                       std::to_string(i));
      }
    }
  }
  out.push_back({Token::Kind::End, "", s.size()});
  return out;
}

struct RawRef {
  std::string qualifier;
  std::string name;
};

struct RawUnit {
  Agg agg = Agg::None;
  bool star = false;
  bool distinct = false;
  RawRef ref;
};

struct RawSql;

struct RawOperand {
  Operand::Kind kind = Operand::Kind::Value;
  RawRef ref;
  std::shared_ptr<RawSql> sub;
};

struct RawPredicate {
  RawUnit lhs;
  CmpOp op = CmpOp::Eq;
  RawOperand rhs, rhs2;
};

struct RawCondition {
  std::vector<RawPredicate> preds;
  std::vector<Conj> conj;
};

struct RawQuery {
  bool distinct = false;
  std::vector<RawUnit> select;
  std::vector<std::pair<std::string, std::string>> from;  // (table, alias)
  std::optional<RawCondition> where;
  std::vector<RawRef> group_by;
  std::optional<RawCondition> having;
  std::optional<OrderBy> order;
  std::vector<RawUnit> order_items;
};

struct RawSql {
  RawQuery query;
  SetOp op = SetOp::None;
  std::shared_ptr<RawSql> rhs;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : toks_(lex(text)) {}

  RawSql parse_all() {
    RawSql s = parse_sql();
    if (peek_sym(";")) ++pos_;
    if (peek().kind != Token::Kind::End) fail("unexpected trailing input '" + peek().text + "'");
    return s;
  }

 private:
  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  bool peek_kw(const char* kw, std::size_t k = 0) const {
    return peek(k).kind == Token::Kind::Ident && peek(k).text == kw;
  }
  bool peek_sym(const char* s, std::size_t k = 0) const {
    return peek(k).kind == Token::Kind::Symbol && peek(k).text == s;
  }
  bool accept_kw(const char* kw) {
    if (!peek_kw(kw)) return false;
    ++pos_;
    return true;
  }
  bool accept_sym(const char* s) {
    if (!peek_sym(s)) return false;
    ++pos_;
    return true;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw SqlError("parse error at offset " + std::to_string(peek().pos) + ": " + msg);
  }
  void expect_kw(const char* kw) {
    if (!accept_kw(kw)) fail(std::string("expected ") + kw);
  }
  void expect_sym(const char* s) {
    if (!accept_sym(s)) fail(std::string("expected '") + s + "'");
  }

  static bool is_reserved(const std::string& w) {
    static const std::set<std::string> kw = {
        "select", "from", "where", "group", "by", "having", "order", "limit", "join", "on", "as",
        "and", "or", "not", "in", "like", "between", "intersect", "union", "except", "distinct",
        "asc", "desc", "count", "max", "min", "sum", "avg", "inner", "left", "right", "outer",
        "natural", "cross", "all", "is", "exists"};
    return kw.count(w) > 0;
  }

  std::string ident(const char* what) {
    if (peek().kind != Token::Kind::Ident || is_reserved(peek().text)) fail(std::string("expected ") + what);
    return toks_[pos_++].text;
  }

  RawSql parse_sql() {
    RawSql s;
    s.query = parse_query();
    if (accept_kw("intersect")) s.op = SetOp::Intersect;
    else if (accept_kw("union")) s.op = SetOp::Union;
    else if (accept_kw("except")) s.op = SetOp::Except;
    if (s.op != SetOp::None) {
      if (peek_kw("all")) throw UnsupportedSql("UNION ALL");
      s.rhs = std::make_shared<RawSql>(parse_sql());
    }
    return s;
  }

  RawQuery parse_query() {
    RawQuery q;
    expect_kw("select");
    q.distinct = accept_kw("distinct");
    do {
      q.select.push_back(parse_unit(true));
    } while (accept_sym(","));
    expect_kw("from");
    parse_from(q);
    if (accept_kw("where")) q.where = parse_condition();
    if (accept_kw("group")) {
      expect_kw("by");
      do {
        q.group_by.push_back(parse_ref());
      } while (accept_sym(","));
      if (accept_kw("having")) q.having = parse_condition();
    } else if (peek_kw("having")) {
      throw UnsupportedSql("HAVING without GROUP BY");
    }
    if (accept_kw("order")) {
      expect_kw("by");
      OrderBy ob;
      std::optional<bool> dir;
      do {
        q.order_items.push_back(parse_unit(false));
        bool d = false;
        if (accept_kw("desc")) d = true;
        else accept_kw("asc");
        if (dir && *dir != d) throw UnsupportedSql("mixed ORDER BY directions");
        dir = d;
      } while (accept_sym(","));
      ob.desc = dir.value_or(false);
      q.order = ob;
    }
    if (accept_kw("limit")) {
      if (!q.order) throw UnsupportedSql("LIMIT without ORDER BY");
      parse_literal_or_fail("LIMIT value");
      q.order->limit = true;
    }
    return q;
  }

  void parse_from(RawQuery& q) {
    auto table_ref = [&] {
      if (peek_sym("(")) throw UnsupportedSql("subquery in FROM");
      std::string t = ident("table name");
      std::string alias;
      if (accept_kw("as")) alias = ident("alias");
      else if (peek().kind == Token::Kind::Ident && !is_reserved(peek().text)) alias = ident("alias");
      q.from.emplace_back(t, alias);
    };
    table_ref();
    while (true) {
      if (accept_kw("join") || accept_sym(",")) {
        table_ref();
        if (accept_kw("on")) {
          // Join predicates are implied by foreign keys and not kept.
          do {
            parse_ref();
            expect_sym("=");
            parse_ref();
          } while (accept_kw("and"));
        }
      } else if (peek_kw("inner") || peek_kw("left") || peek_kw("right") || peek_kw("outer") ||
                 peek_kw("natural") || peek_kw("cross")) {
        throw UnsupportedSql(to_upper(peek().text) + " JOIN");
      } else {
        break;
      }
    }
  }

  static std::string to_upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  }

  RawRef parse_ref() {
    RawRef r;
    std::string first = ident("column");
    if (accept_sym(".")) {
      r.qualifier = first;
      if (peek_sym("*")) throw UnsupportedSql("qualified star");
      r.name = ident("column");
    } else {
      r.name = first;
    }
    return r;
  }

  static std::optional<Agg> agg_of(const std::string& w) {
    if (w == "max") return Agg::Max;
    if (w == "min") return Agg::Min;
    if (w == "count") return Agg::Count;
    if (w == "sum") return Agg::Sum;
    if (w == "avg") return Agg::Avg;
    return std::nullopt;
  }

  RawUnit parse_unit(bool allow_star) {
    RawUnit u;
    if (peek().kind == Token::Kind::Ident && agg_of(peek().text) && peek_sym("(", 1)) {
      u.agg = *agg_of(peek().text);
      pos_ += 2;
      if (accept_kw("distinct")) u.distinct = true;
      if (accept_sym("*")) {
        if (u.agg != Agg::Count) throw UnsupportedSql(std::string(to_string(u.agg)) + "(*)");
        if (u.distinct) throw UnsupportedSql("count(DISTINCT *)");
        u.star = true;
      } else {
        u.ref = parse_ref();
      }
      expect_sym(")");
    } else if (accept_sym("*")) {
      if (!allow_star) fail("'*' not allowed here");
      u.star = true;
    } else if (peek_kw("distinct")) {
      throw UnsupportedSql("DISTINCT inside a select item");
    } else {
      u.ref = parse_ref();
    }
    if (peek_sym("+") || peek_sym("-") || peek_sym("/") || (peek_sym("*") && !u.star))
      throw UnsupportedSql("arithmetic expression");
    return u;
  }

  bool at_literal() const {
    const auto& t = peek();
    if (t.kind == Token::Kind::Number || t.kind == Token::Kind::String) return true;
    if (t.kind == Token::Kind::Ident && (t.text == "value" || t.text == "null" || t.text == "true" ||
                                         t.text == "false"))
      return true;
    if (t.kind == Token::Kind::Symbol && t.text == "-" && peek(1).kind == Token::Kind::Number) return true;
    return false;
  }

  void parse_literal_or_fail(const char* what) {
    if (!at_literal()) fail(std::string("expected ") + what);
    if (peek_sym("-")) ++pos_;
    ++pos_;
  }

  RawOperand parse_operand() {
    RawOperand o;
    if (peek_sym("(") && peek_kw("select", 1)) {
      ++pos_;
      o.kind = Operand::Kind::Subquery;
      o.sub = std::make_shared<RawSql>(parse_sql());
      expect_sym(")");
    } else if (peek_sym("(")) {
      throw UnsupportedSql("literal list");
    } else if (at_literal()) {
      parse_literal_or_fail("value");
      o.kind = Operand::Kind::Value;
    } else {
      o.kind = Operand::Kind::Column;
      o.ref = parse_ref();
    }
    return o;
  }

  RawCondition parse_condition() {
    RawCondition c;
    if (peek_sym("(") && !peek_kw("select", 1)) throw UnsupportedSql("parenthesized condition");
    c.preds.push_back(parse_predicate());
    while (true) {
      if (accept_kw("and")) c.conj.push_back(Conj::And);
      else if (accept_kw("or")) c.conj.push_back(Conj::Or);
      else break;
      c.preds.push_back(parse_predicate());
    }
    return c;
  }

  RawPredicate parse_predicate() {
    RawPredicate p;
    if (peek_kw("not") || peek_kw("exists")) throw UnsupportedSql("NOT/EXISTS predicate");
    p.lhs = parse_unit(false);
    const bool negated = accept_kw("not");
    if (accept_kw("in")) p.op = negated ? CmpOp::NotIn : CmpOp::In;
    else if (accept_kw("like")) p.op = negated ? CmpOp::NotLike : CmpOp::Like;
    else if (negated) fail("expected IN or LIKE after NOT");
    else if (accept_kw("between")) p.op = CmpOp::Between;
    else if (accept_sym("=")) p.op = CmpOp::Eq;
    else if (accept_sym("!=")) p.op = CmpOp::Ne;
    else if (accept_sym("<")) p.op = CmpOp::Lt;
    else if (accept_sym(">")) p.op = CmpOp::Gt;
    else if (accept_sym("<=")) p.op = CmpOp::Le;
    else if (accept_sym(">=")) p.op = CmpOp::Ge;
    else if (peek_kw("is")) throw UnsupportedSql("IS NULL");
    else fail("expected comparison operator");
    p.rhs = parse_operand();
    if (p.op == CmpOp::Between) {
      expect_kw("and");
      p.rhs2 = parse_operand();
    }
    return p;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

/// Resolves raw identifiers against a schema, one SELECT block at a time.
class Resolver {
 public:
  explicit Resolver(const Schema& schema) : schema_(schema) {}

  Sql resolve(const RawSql& raw) const {
    Sql s;
    s.query = resolve_query(raw.query);
    s.op = raw.op;
    if (raw.rhs) s.rhs = std::make_shared<const Sql>(resolve(*raw.rhs));
    return s;
  }

 private:
  struct Scope {
    std::vector<std::size_t> tables;
    std::map<std::string, std::size_t> aliases;
  };

  Query resolve_query(const RawQuery& raw) const {
    Query q;
    Scope scope;
    for (const auto& [tname, alias] : raw.from) {
      auto t = schema_.find_table(tname);
      if (!t) throw SqlError("unknown table '" + tname + "'");
      if (std::find(scope.tables.begin(), scope.tables.end(), *t) != scope.tables.end())
        throw UnsupportedSql("self-join on table '" + tname + "'");
      scope.tables.push_back(*t);
      scope.aliases[to_lower(tname)] = *t;
      if (!alias.empty()) scope.aliases[to_lower(alias)] = *t;
    }
    q.from = scope.tables;
    q.distinct = raw.distinct;
    for (const auto& u : raw.select) q.select.push_back(unit(u, scope));
    if (raw.where) q.where = condition(*raw.where, scope);
    for (const auto& r : raw.group_by) q.group_by.push_back(column(r, scope));
    if (raw.having) q.having = condition(*raw.having, scope);
    if (raw.order) {
      OrderBy ob = *raw.order;
      for (const auto& u : raw.order_items) ob.items.push_back(unit(u, scope));
      q.order = ob;
    }
    return q;
  }

  std::size_t column(const RawRef& r, const Scope& scope) const {
    if (!r.qualifier.empty()) {
      auto it = scope.aliases.find(to_lower(r.qualifier));
      if (it == scope.aliases.end()) throw SqlError("unknown table or alias '" + r.qualifier + "'");
      auto c = schema_.find_column(it->second, r.name);
      if (!c) throw SqlError("unknown column '" + r.qualifier + "." + r.name + "'");
      return *c;
    }
    for (std::size_t t : scope.tables)
      if (auto c = schema_.find_column(t, r.name)) return *c;
    throw SqlError("unknown column '" + r.name + "'");
  }

  ColUnit unit(const RawUnit& u, const Scope& scope) const {
    ColUnit out;
    out.agg = u.agg;
    out.star = u.star;
    out.distinct = u.distinct;
    if (!u.star) out.column = column(u.ref, scope);
    return out;
  }

  Operand operand(const RawOperand& o, const Scope& scope) const {
    Operand out;
    out.kind = o.kind;
    if (o.kind == Operand::Kind::Column) out.column = column(o.ref, scope);
    if (o.kind == Operand::Kind::Subquery) out.sub = std::make_shared<const Sql>(resolve(*o.sub));
    return out;
  }

  Condition condition(const RawCondition& c, const Scope& scope) const {
    Condition out;
    out.conj = c.conj;
    for (const auto& p : c.preds) {
      Predicate q;
      q.lhs = unit(p.lhs, scope);
      q.op = p.op;
      q.rhs = operand(p.rhs, scope);
      if (p.op == CmpOp::Between) q.rhs2 = operand(p.rhs2, scope);
      out.preds.push_back(q);
    }
    return out;
  }

  const Schema& schema_;
};

}  // namespace sql_detail

/// Parses SQL in the supported fragment and resolves it against the schema.
inline Sql parse_sql(const std::string& text, const Schema& schema) {
  sql_detail::Parser parser(text);
  return sql_detail::Resolver(schema).resolve(parser.parse_all());
}

/// Canonical SQL text: uppercase keywords, single spaces, literals as the
/// placeholder `value`, columns qualified by table name only when the SELECT
/// block joins several tables, join conditions reconstructed from foreign keys.
class SqlRenderer {
 public:
  explicit SqlRenderer(const Schema& schema) : schema_(schema) {}

  std::string render(const Sql& s) const {
    std::string out = render_query(s.query);
    if (s.op != SetOp::None) out += std::string(" ") + to_string(s.op) + " " + render(*s.rhs);
    return out;
  }

 private:
  std::string col(std::size_t c, const Query& q) const {
    const auto& column = schema_.columns.at(c);
    if (q.from.size() > 1) return schema_.tables.at(column.table).name + "." + column.name;
    return column.name;
  }

  std::string unit(const ColUnit& u, const Query& q) const {
    std::string inner = u.star ? "*" : col(u.column, q);
    if (u.distinct) inner = "DISTINCT " + inner;
    if (u.agg == Agg::None) return inner;
    return std::string(to_string(u.agg)) + "(" + inner + ")";
  }

  std::string operand(const Operand& o, const Query& q) const {
    switch (o.kind) {
      case Operand::Kind::Value: return "value";
      case Operand::Kind::Column: return col(o.column, q);
      case Operand::Kind::Subquery: return "(" + render(*o.sub) + ")";
    }
    return "value";
  }

  std::string condition(const Condition& c, const Query& q) const {
    std::string out;
    for (std::size_t i = 0; i < c.preds.size(); ++i) {
      if (i) out += c.conj[i - 1] == Conj::And ? " AND " : " OR ";
      const auto& p = c.preds[i];
      out += unit(p.lhs, q) + " " + to_string(p.op) + " " + operand(p.rhs, q);
      if (p.op == CmpOp::Between) out += " AND " + operand(p.rhs2, q);
    }
    return out;
  }

  std::string join_condition(const Query& q, std::size_t k) const {
    const std::size_t t = q.from[k];
    for (auto [a, b] : schema_.foreign_keys) {
      for (int dir = 0; dir < 2; ++dir) {
        const std::size_t here = dir ? b : a, there = dir ? a : b;
        if (schema_.columns[here].table != t) continue;
        for (std::size_t j = 0; j < k; ++j)
          if (schema_.columns[there].table == q.from[j])
            return " ON " + col(there, q) + " = " + col(here, q);
      }
    }
    return "";
  }

  std::string render_query(const Query& q) const {
    std::string out = "SELECT ";
    if (q.distinct) out += "DISTINCT ";
    for (std::size_t i = 0; i < q.select.size(); ++i) out += (i ? ", " : "") + unit(q.select[i], q);
    out += " FROM ";
    for (std::size_t k = 0; k < q.from.size(); ++k) {
      if (k) out += " JOIN ";
      out += schema_.tables.at(q.from[k]).name;
      if (k) out += join_condition(q, k);
    }
    if (q.where) out += " WHERE " + condition(*q.where, q);
    if (!q.group_by.empty()) {
      out += " GROUP BY ";
      for (std::size_t i = 0; i < q.group_by.size(); ++i) out += (i ? ", " : "") + col(q.group_by[i], q);
      if (q.having) out += " HAVING " + condition(*q.having, q);
    }
    if (q.order) {
      out += " ORDER BY ";
      for (std::size_t i = 0; i < q.order->items.size(); ++i) out += (i ? ", " : "") + unit(q.order->items[i], q);
      out += q.order->desc ? " DESC" : " ASC";
      if (q.order->limit) out += " LIMIT value";
    }
    return out;
  }

  const Schema& schema_;
};

inline std::string render_sql(const Sql& s, const Schema& schema) { return SqlRenderer(schema).render(s); }

/// Canonical form of a SQL string: parse then render.
inline std::string normalize_sql(const std::string& text, const Schema& schema) {
  return render_sql(parse_sql(text, schema), schema);
}

}  // namespace cqrsql
