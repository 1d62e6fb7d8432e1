#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cqrsql/core/graph.hpp"
#include "cqrsql/core/layers.hpp"
#include "cqrsql/grammar/actions.hpp"
#include "cqrsql/model/config.hpp"
#include "cqrsql/model/encoder.hpp"

namespace cqrsql {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void register_decoder(ParamStore& store, const ModelConfig& cfg, const Grammar& grammar) {
  const auto& dc = cfg.dec;
  const std::size_t d = cfg.enc.d_model, H = dc.hidden, A = dc.action_dim;
  store.create("dec.rule_emb", {grammar.rule_count(), A});
  store.create("dec.column_act.w", {d, A});
  store.create("dec.table_act.w", {d, A});
  store.create("dec.value_act", {1, A});
  store.create("dec.a0", {1, A});
  store.create("dec.hp0", {1, H});
  store.create("dec.ap0", {1, A});
  store.create("dec.node_emb", {kNodeTypeCount, dc.node_dim});
  register_lstm(store, "dec.lstm", A + H + A + dc.node_dim, H);
  store.create("dec.init.h0", {1, d});
  store.create("dec.init.w1", {d, d});
  store.create("dec.init.w2", {d, H});
  store.create("dec.att.q.w", {H, d});
  store.create("dec.att.k.w", {d, d});
  store.create("dec.att.v.w", {d, d});
  store.create("dec.att.o.w", {d, d});
  for (const std::string head : {"rule", "table", "column"}) {
    register_linear(store, "dec." + head + ".mlp1", H + d, dc.mlp_dim);
    register_linear(store, "dec." + head + ".mlp2", dc.mlp_dim, dc.mlp_dim);
  }
  store.create("dec.rule.w_r", {dc.mlp_dim, grammar.rule_count()});
  store.create("dec.table.w_t", {dc.mlp_dim, d});
  store.create("dec.column.w_c", {dc.mlp_dim, d});
}

/// Decoder state between steps. `step_h[k]` and `step_a[k]` are the LSTM output
/// and action embedding of step k; they feed h_{p_t} and a_{p_t}.
struct DecoderState {
  AstState ast;
  LstmState lstm;
  Var prev_action;
  std::vector<Var> step_h;
  std::vector<Var> step_a;

  std::size_t steps() const { return ast.steps(); }
};

/// Distribution of the head that is active for the frontier kind (rule for
/// nonterminals, table, column), masked to legal actions and renormalized.
/// Value frontiers have a single certain action and no active head.
struct StepDistributions {
  Symbol::Kind kind = Symbol::Kind::Nonterminal;
  Var logits;  // unmasked scores of the active head; invalid for Value
  Var dist;    // [1 x actions], sums to 1
  ActionMask mask;
  LstmState lstm;  // state after this step

  bool has_head() const { return kind != Symbol::Kind::Value; }

  /// Masked log-probability of action id `i`, computed from the logits.
  Real log_prob(std::size_t i) const {
    if (!mask.legal.at(i)) return -std::numeric_limits<Real>::infinity();
    if (!has_head()) return 0;
    const Tensor& l = logits.value();
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < l.cols(); ++j)
      if (mask.legal[j]) mx = std::max(mx, l[j]);
    Real z = 0;
    for (std::size_t j = 0; j < l.cols(); ++j)
      if (mask.legal[j]) z += std::exp(l[j] - mx);
    return l[i] - mx - std::log(z);
  }
};

/// Tree-structured LSTM decoder bound to one encoding inside one graph.
class Decoder {
 public:
  Decoder(Graph& g, const ParamStore& params, const ModelConfig& cfg, const Grammar& grammar, const Schema& schema,
          const EncoderOutput& enc)
      : g_(g), params_(params), cfg_(cfg), grammar_(grammar), schema_(schema), enc_(enc) {
    if (enc.H.value().rows() == 0) throw DecodeError("empty encoder output");
    lstm_ = bind_lstm(g, params, "dec.lstm");
    K_ = matmul(enc.H, p("dec.att.k.w"));
    V_ = matmul(enc.H, p("dec.att.v.w"));
    table_keys_ = matmul_nt(enc.tables, p("dec.table.w_t"));
    column_keys_ = matmul_nt(enc.columns, p("dec.column.w_c"));
    table_act_ = matmul(enc.tables, p("dec.table_act.w"));
    column_act_ = matmul(enc.columns, p("dec.column_act.w"));
  }

  const Grammar& grammar() const { return grammar_; }
  const Schema& schema() const { return schema_; }
  std::size_t max_steps() const { return cfg_.dec.max_steps; }

  /// h_0 = tanh(A W_2), A = attention pooling of H^L with scores
  /// h~_0 tanh(H W_1)^T; c_0 = 0.
  DecoderState init_state() const {
    Var e = softmax_rows(matmul_nt(p("dec.init.h0"), tanh(matmul(enc_.H, p("dec.init.w1")))));
    Var pooled = matmul(e, enc_.H);
    Var h0 = tanh(matmul(pooled, p("dec.init.w2")));
    Var c0 = g_.constant(Tensor::matrix(1, cfg_.dec.hidden));
    return DecoderState{AstState(grammar_, schema_), {c0, h0}, p("dec.a0"), {}, {}};
  }

  StepDistributions decode_step(const DecoderState& st) const {
    if (st.ast.complete()) throw DecodeError("decode_step on a complete tree");
    const int parent = st.ast.frontier_parent_step();
    Var hp = parent < 0 ? p("dec.hp0") : st.step_h[parent];
    Var ap = parent < 0 ? p("dec.ap0") : st.step_a[parent];
    Var node = gather_rows(p("dec.node_emb"), {st.ast.frontier().type_index()});
    StepDistributions out;
    out.lstm = lstm_cell(concat_cols({st.prev_action, hp, ap, node}), st.lstm.c, st.lstm.h, lstm_);
    out.mask = st.ast.valid_actions();
    out.kind = out.mask.kind;
    Var h = dropout(out.lstm.h, cfg_.dec.dropout);
    switch (out.kind) {
      case Symbol::Kind::Nonterminal:
        out.logits = matmul(mlp("rule", h), p("dec.rule.w_r"));
        break;
      case Symbol::Kind::Table:
        out.logits = matmul_nt(mlp("table", h), table_keys_);
        break;
      case Symbol::Kind::Column:
        out.logits = matmul_nt(mlp("column", h), column_keys_);
        break;
      case Symbol::Kind::Value:
        out.dist = g_.constant(Tensor::row({1.0}));
        return out;
    }
    out.dist = masked_softmax_rows(out.logits, out.mask.legal);
    return out;
  }

  /// Applies `a` after `step` was computed from `st`.
  DecoderState advance(const DecoderState& st, const StepDistributions& step, const Action& a) const {
    DecoderState next = st;
    next.ast.apply(a);
    Var emb = action_embedding(a);
    next.lstm = step.lstm;
    next.prev_action = emb;
    next.step_h.push_back(step.lstm.h);
    next.step_a.push_back(emb);
    return next;
  }

  Var action_embedding(const Action& a) const {
    switch (a.kind) {
      case Action::Kind::ApplyRule: return gather_rows(p("dec.rule_emb"), {a.id});
      case Action::Kind::SelectTable: return slice_rows(table_act_, a.id, a.id + 1);
      case Action::Kind::SelectColumn: return slice_rows(column_act_, a.id, a.id + 1);
      case Action::Kind::SelectValue: return p("dec.value_act");
    }
    return p("dec.value_act");
  }

  /// Multi-head attention of h over H^L.
  Var context(Var h) const {
    const std::size_t heads = cfg_.dec.att_heads, d = cfg_.enc.d_model, dk = d / heads;
    const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dk));
    Var q = matmul(h, p("dec.att.q.w"));
    std::vector<Var> parts;
    for (std::size_t k = 0; k < heads; ++k) {
      Var att = softmax_rows(scale(matmul_nt(slice_cols(q, k * dk, (k + 1) * dk), slice_cols(K_, k * dk, (k + 1) * dk)),
                                   inv_sqrt));
      parts.push_back(matmul(att, slice_cols(V_, k * dk, (k + 1) * dk)));
    }
    return matmul(parts.size() == 1 ? parts[0] : concat_cols(parts), p("dec.att.o.w"));
  }

 private:
  Var p(const std::string& name) const { return g_.param(params_, name); }

  Var mlp(const std::string& head, Var h) const {
    Var x = concat_cols({h, context(h)});
    return apply_linear(g_, params_, "dec." + head + ".mlp2", tanh(apply_linear(g_, params_, "dec." + head + ".mlp1", x)));
  }

  Graph& g_;
  const ParamStore& params_;
  const ModelConfig& cfg_;
  const Grammar& grammar_;
  const Schema& schema_;
  EncoderOutput enc_;
  LstmParams lstm_;
  Var K_, V_, table_keys_, column_keys_, table_act_, column_act_;
};

/// One StepDistributions per gold action, each conditioned on the gold prefix.
inline std::vector<StepDistributions> teacher_forced_trace(const Decoder& dec, const ActionSequence& gold) {
  std::vector<StepDistributions> trace;
  DecoderState st = dec.init_state();
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (st.ast.complete()) throw DecodeError("gold sequence continues after the tree is complete at step " +
                                             std::to_string(t));
    StepDistributions d = dec.decode_step(st);
    if (!d.mask.allows(gold[t]))
      throw DecodeError("gold action " + to_string(gold[t]) + " is masked at step " + std::to_string(t));
    st = dec.advance(st, d, gold[t]);
    trace.push_back(std::move(d));
  }
  if (!st.ast.complete()) throw DecodeError("gold sequence does not complete the tree");
  return trace;
}

struct BeamResult {
  ActionSequence actions;
  Real log_prob = 0;
};

namespace decoder_detail {

/// Ranking: higher log-prob first, then the lexicographically smaller sequence.
inline bool better(Real lp_a, const ActionSequence& a, Real lp_b, const ActionSequence& b) {
  if (lp_a != lp_b) return lp_a > lp_b;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace decoder_detail

/// Beam search over masked-legal actions. Returns at most `beam_size`
/// completed sequences ranked by log-probability.
inline std::vector<BeamResult> beam_search(const Decoder& dec, std::size_t beam_size, std::size_t max_steps) {
  using decoder_detail::better;
  if (beam_size < 1) throw DecodeError("beam size must be at least 1");
  struct Hyp {
    DecoderState state;
    ActionSequence actions;
    Real lp;
  };
  struct Candidate {
    std::size_t hyp;
    Action action;
    Real lp;
    ActionSequence actions;
  };
  std::vector<Hyp> live{{dec.init_state(), {}, 0.0}};
  std::vector<BeamResult> done;
  const auto rank = [](std::vector<BeamResult>& v) {
    std::sort(v.begin(), v.end(), [](const BeamResult& a, const BeamResult& b) {
      return better(a.log_prob, a.actions, b.log_prob, b.actions);
    });
  };
  for (std::size_t step = 0; step < max_steps && !live.empty(); ++step) {
    std::vector<StepDistributions> dists;
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      dists.push_back(dec.decode_step(live[h].state));
      const auto& d = dists.back();
      for (std::size_t i = 0; i < d.mask.legal.size(); ++i) {
        if (!d.mask.legal[i]) continue;
        Candidate c{h, {action_kind_for(d.kind), i}, live[h].lp + d.log_prob(i), live[h].actions};
        c.actions.push_back(c.action);
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return better(a.lp, a.actions, b.lp, b.actions); });
    if (cands.size() > beam_size) cands.resize(beam_size);
    std::vector<Hyp> next;
    for (auto& c : cands) {
      DecoderState st = dec.advance(live[c.hyp].state, dists[c.hyp], c.action);
      if (st.ast.complete()) done.push_back({std::move(c.actions), c.lp});
      else next.push_back({std::move(st), std::move(c.actions), c.lp});
    }
    live = std::move(next);
    rank(done);
    // Log-probs never increase along a prefix, so a full set of finished
    // hypotheses that beats every live one is final.
    if (done.size() >= beam_size) {
      const Real worst_kept = done[beam_size - 1].log_prob;
      bool can_improve = false;
      for (const auto& h : live) can_improve = can_improve || h.lp >= worst_kept;
      if (!can_improve) break;
    }
  }
  if (done.empty()) throw DecodeError("decode budget exceeded");
  rank(done);
  if (done.size() > beam_size) done.resize(beam_size);
  return done;
}

}  // namespace cqrsql
