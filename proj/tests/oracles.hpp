#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here goes through the graph ops under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cqrsql/model/decoder.hpp"
#include "cqrsql/model/encoder.hpp"

namespace cqrsql::oracles {

using M = std::vector<std::vector<double>>;

inline M to_m(const Tensor& t) {
  M m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.values()[i * t.cols() + j];
  return m;
}

inline M mm(const M& a, const M& b) {
  M c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline M plus(M a, const M& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[b.size() == 1 ? 0 : i][j];
  return a;
}

inline M map_m(M a, const std::function<double(double)>& f) {
  for (auto& r : a)
    for (auto& x : r) x = f(x);
  return a;
}

inline std::vector<double> softmax(std::vector<double> v) {
  double mx = *std::max_element(v.begin(), v.end()), z = 0;
  for (auto& x : v) z += (x = std::exp(x - mx));
  for (auto& x : v) x /= z;
  return v;
}

inline M layer_norm(const M& x, const M& gain, const M& bias) {
  M out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v;
    mean /= x[i].size();
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= x[i].size();
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = gain[0][j] * (x[i][j] - mean) / std::sqrt(var + 1e-5) + bias[0][j];
  }
  return out;
}

/// Relation-aware block written pair by pair: scores use k_j + r^K_ij and
/// values use v_j + r^V_ij. With `use_relations` false it is plain multi-head
/// self-attention followed by the same residual/norm/feed-forward stack.
inline M block_oracle(const ParamStore& ps, const std::string& p, const M& H, const RelationGraph& rel,
                      std::size_t heads, bool use_relations) {
  const std::size_t n = H.size(), d = H[0].size(), dk = d / heads;
  const M Q = mm(H, to_m(ps.get(p + ".q.w"))), K = mm(H, to_m(ps.get(p + ".k.w"))), V = mm(H, to_m(ps.get(p + ".v.w")));
  const M rk = to_m(ps.get(p + ".rel_k")), rv = to_m(ps.get(p + ".rel_v"));
  M A(n, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t r = rel.id(i, j);
        double acc = 0;
        for (std::size_t c = 0; c < dk; ++c)
          acc += Q[i][h * dk + c] * (K[j][h * dk + c] + (use_relations ? rk[r][c] : 0.0));
        s[j] = acc / std::sqrt(double(dk));
      }
      const auto a = softmax(s);
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t r = rel.id(i, j);
        for (std::size_t c = 0; c < dk; ++c)
          A[i][h * dk + c] += a[j] * (V[j][h * dk + c] + (use_relations ? rv[r][c] : 0.0));
      }
    }
  const M mid = layer_norm(plus(H, A), to_m(ps.get(p + ".ln1.gain")), to_m(ps.get(p + ".ln1.bias")));
  const M f1 = map_m(plus(mm(mid, to_m(ps.get(p + ".ff1.w"))), to_m(ps.get(p + ".ff1.b"))),
                     [](double x) { return std::max(0.0, x); });
  const M f2 = plus(mm(f1, to_m(ps.get(p + ".ff2.w"))), to_m(ps.get(p + ".ff2.b")));
  return layer_norm(plus(mid, f2), to_m(ps.get(p + ".ln2.gain")), to_m(ps.get(p + ".ln2.bias")));
}

inline double max_abs_diff(const Tensor& got, const M& want) {
  if (got.rows() != want.size() || got.cols() != want[0].size()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t j = 0; j < want[i].size(); ++j)
      worst = std::max(worst, std::abs(got.values()[i * got.cols() + j] - want[i][j]));
  return worst;
}

inline Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline RelationGraph random_relations(std::mt19937_64& rng, std::size_t n) {
  RelationGraph rel;
  rel.n = n;
  std::uniform_int_distribution<int> u(0, kRelationCount - 1);
  for (std::size_t i = 0; i < n * n; ++i) rel.labels.push_back(static_cast<std::uint8_t>(u(rng)));
  return rel;
}

/// Two tables: pets(name, age) and owners(name, city, pet id).
inline Schema pets_schema() {
  Schema s;
  s.database_id = "pets";
  s.tables.push_back(Table{"pets", {"pets"}, {0, 1}});
  s.tables.push_back(Table{"owners", {"owners"}, {2, 3, 4}});
  s.columns.push_back(Column{"name", {"name"}, ColumnType::Text, 0});
  s.columns.push_back(Column{"age", {"age"}, ColumnType::Number, 0});
  s.columns.push_back(Column{"name", {"name"}, ColumnType::Text, 1});
  s.columns.push_back(Column{"city", {"city"}, ColumnType::Text, 1});
  s.columns.push_back(Column{"pet_id", {"pet", "id"}, ColumnType::Number, 1});
  s.foreign_keys.push_back({4, 0});
  return s;
}

inline Vocab small_vocab() {
  Vocab v;
  for (const char* w : {"pets", "owners", "name", "age", "city", "pet", "id", "how", "many", "are", "there", "old",
                        "show", "the", "of"})
    v.add(w);
  return v;
}

/// Tiny model bundle with parameters registered for `grammar`.
struct Bundle {
  ModelConfig cfg;
  Vocab vocab = small_vocab();
  Grammar grammar;
  ParamStore params;

  explicit Bundle(Grammar g = Grammar::sql(), std::uint64_t seed = 11) : grammar(std::move(g)), params(seed) {
    cfg = ModelConfig::tiny();
    cfg.vocab_size = vocab.size();
    register_encoder(params, cfg);
    register_decoder(params, cfg, grammar);
  }
};

/// Smallest grammar that still covers every nonterminal: one table, one
/// selected unit with three aggregates, optional single-equality WHERE.
inline Grammar pruned_grammar() {
  using P = Production;
  return Grammar(std::set<Production>{P::SqlSingle, P::Query, P::TablesOne, P::SelectAll, P::ItemsOne, P::UnitNone,
                                      P::UnitCount, P::UnitMax, P::RefColumn, P::WhereNone, P::WhereSome, P::CondPred,
                                      P::PredEq, P::OperandValue, P::GroupNone, P::ColsOne, P::HavingNone,
                                      P::OrderNone, P::OrderItemsOne, P::DirAsc, P::LimitNone});
}

/// Every complete action sequence the grammar admits over `schema`, each with
/// its summed log-probability from teacher forcing.
inline std::vector<std::pair<ActionSequence, double>> enumerate_sequences(const Decoder& dec) {
  std::vector<std::pair<ActionSequence, double>> all;
  std::function<void(AstState, ActionSequence)> walk = [&](AstState st, ActionSequence prefix) {
    if (st.complete()) {
      double lp = 0;
      const auto trace = teacher_forced_trace(dec, prefix);
      for (std::size_t t = 0; t < prefix.size(); ++t) lp += std::log(trace[t].dist.value()[prefix[t].id]);
      all.push_back({prefix, lp});
      return;
    }
    const ActionMask m = st.valid_actions();
    for (std::size_t i = 0; i < m.legal.size(); ++i)
      if (m.legal[i]) {
        AstState next = st;
        const Action a{action_kind_for(m.kind), i};
        next.apply(a);
        ActionSequence p = prefix;
        p.push_back(a);
        walk(next, p);
      }
  };
  walk(AstState(dec.grammar(), dec.schema()), {});
  return all;
}

/// Highest log-probability sequence; ties go to the smaller sequence.
inline std::pair<ActionSequence, double> exhaustive_argmax(const std::vector<std::pair<ActionSequence, double>>& all) {
  return *std::max_element(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return x.second < y.second || (x.second == y.second && y.first < x.first);
  });
}

/// Every action the state accepts, found by trying each candidate on a copy.
inline std::set<Action> applicable(const AstState& st) {
  std::set<Action> ok;
  const std::size_t bound = std::max({st.grammar().rule_count(), st.schema().columns.size(),
                                      st.schema().tables.size()}) + 2;
  for (auto kind : {Action::Kind::ApplyRule, Action::Kind::SelectColumn, Action::Kind::SelectTable,
                    Action::Kind::SelectValue}) {
    for (std::size_t id = 0; id < bound; ++id) {
      AstState copy = st;
      try {
        copy.apply({kind, id});
        ok.insert({kind, id});
      } catch (const ActionError&) {
      }
    }
  }
  return ok;
}

inline std::set<Action> from_mask(const ActionMask& m) {
  std::set<Action> out;
  for (std::size_t i = 0; i < m.legal.size(); ++i)
    if (m.legal[i]) out.insert({action_kind_for(m.kind), i});
  return out;
}

inline Action random_legal_action(const ActionMask& m, std::mt19937_64& rng) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < m.legal.size(); ++i)
    if (m.legal[i]) ids.push_back(i);
  return {action_kind_for(m.kind), ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)]};
}

}  // namespace cqrsql::oracles
