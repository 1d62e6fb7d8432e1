#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cqrsql/core/adam.hpp"
#include "cqrsql/core/graph.hpp"
#include "cqrsql/core/layers.hpp"
#include "cqrsql/data/checkpoint.hpp"
#include "cqrsql/data/schema.hpp"
#include "cqrsql/data/vocab.hpp"
#include "cqrsql/model/config.hpp"
#include "cqrsql/model/decoder.hpp"

namespace cqrsql {

struct CqrConfig {
  std::size_t embed = 256;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t max_len = 40;  // generated tokens, end symbol excluded
  double dropout = 0.1;

  void validate() const {
    if (embed < 1 || hidden < 1) throw ConfigError("reformulation model widths must be positive");
    if (layers < 1) throw ConfigError("reformulation model needs at least one layer");
    if (max_len < 1) throw ConfigError("reformulation length cap must be positive");
    if (dropout < 0 || dropout >= 1) throw ConfigError("reformulation dropout must be in [0, 1)");
  }

  static CqrConfig tiny() {
    CqrConfig c;
    c.embed = 32;
    c.hidden = 32;
    return c;
  }

  Json to_json() const {
    return {{"embed", embed}, {"hidden", hidden}, {"layers", layers}, {"max_len", max_len}, {"dropout", dropout}};
  }

  static CqrConfig from_json(const Json& j) {
    CqrConfig c;
    try {
      c.embed = j.at("embed");
      c.hidden = j.at("hidden");
      c.layers = j.at("layers");
      c.max_len = j.at("max_len");
      c.dropout = j.at("dropout");
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("malformed reformulation config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

/// Encoder input {r~_{t-1} [SEP] q_1 [SEP] ... q_t [SEP] schema}: the previous
/// reformulation (possibly empty), the question context, then every table
/// followed by its columns, tables separated by [SEP].
inline std::vector<std::string> cqr_input(const std::vector<std::string>& prev,
                                          const std::vector<std::vector<std::string>>& context, const Schema& schema) {
  if (context.empty()) throw DataError("empty question");
  std::vector<std::string> out = prev;
  out.push_back(kSep);
  for (const auto& q : context) {
    if (q.empty()) throw DataError("empty question");
    out.insert(out.end(), q.begin(), q.end());
    out.push_back(kSep);
  }
  for (std::size_t t = 0; t < schema.tables.size(); ++t) {
    if (t) out.push_back(kSep);
    out.insert(out.end(), schema.tables[t].words.begin(), schema.tables[t].words.end());
    for (std::size_t c : schema.tables[t].columns)
      out.insert(out.end(), schema.columns[c].words.begin(), schema.columns[c].words.end());
  }
  return out;
}

/// One reformulation training pair. `prev_label` is the annotated rewrite of
/// the previous turn and `prev_sampled` a model-generated one; either may be
/// absent (the first turn has neither and uses an empty segment).
struct CqrExample {
  std::size_t interaction = 0;
  std::size_t turn = 0;
  std::vector<std::vector<std::string>> context;
  const Schema* schema = nullptr;
  std::optional<std::vector<std::string>> prev_label;
  std::optional<std::vector<std::string>> prev_sampled;
  std::vector<std::string> target;
};

/// Attention encoder-decoder over the shared word vocabulary.
struct CqrModel {
  CqrConfig cfg;
  Vocab vocab;
  ParamStore params;

  static CqrModel create(const Vocab& vocab, const CqrConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    CqrModel m{cfg, vocab, ParamStore(seed)};
    register_parameters(m.params, cfg, vocab.size());
    return m;
  }

  static void register_parameters(ParamStore& s, const CqrConfig& c, std::size_t vocab) {
    s.create("cqr.emb", {vocab, c.embed});
    for (const std::string side : {"enc", "dec"})
      for (std::size_t l = 0; l < c.layers; ++l)
        register_lstm(s, "cqr." + side + ".l" + std::to_string(l), l ? c.hidden : c.embed, c.hidden);
    s.create("cqr.att.w", {c.hidden, c.hidden});
    register_linear(s, "cqr.combine", 2 * c.hidden, c.hidden);
    register_linear(s, "cqr.out", c.hidden, vocab);
  }

  Json config_json() const { return {{"kind", "cqr"}, {"model", cfg.to_json()}, {"vocab", vocab.to_json()}}; }

  void save(const std::string& path) const { save_checkpoint(params, config_json(), path); }

  static CqrModel load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.config.value("kind", "") != "cqr") throw CheckpointError(path + ": not a reformulation checkpoint");
    CqrModel m;
    try {
      m.cfg = CqrConfig::from_json(ck.config.at("model"));
      m.vocab = Vocab::from_json(ck.config.at("vocab"));
    } catch (const Json::exception& e) {
      throw CheckpointError(path + ": malformed config block: " + e.what());
    }
    ParamStore expected;
    register_parameters(expected, m.cfg, m.vocab.size());
    check_compatible(ck.params, expected);
    m.params = std::move(ck.params);
    return m;
  }

  std::vector<std::size_t> ids(const std::vector<std::string>& words) const {
    std::vector<std::size_t> out;
    for (const auto& w : words) out.push_back(vocab.id(w));
    return out;
  }
};

namespace cqr_detail {

struct Stack {
  std::vector<LstmState> layers;
};

/// Parameters bound to one graph.
struct Bound {
  Graph& g;
  const CqrModel& m;
  std::vector<LstmParams> enc, dec;
  Var emb, att, out_w, out_b, comb_w, comb_b;

  Bound(Graph& graph, const CqrModel& model, const ParamStore& ps) : g(graph), m(model) {
    for (std::size_t l = 0; l < m.cfg.layers; ++l) {
      enc.push_back(bind_lstm(g, ps, "cqr.enc.l" + std::to_string(l)));
      dec.push_back(bind_lstm(g, ps, "cqr.dec.l" + std::to_string(l)));
    }
    emb = g.param(ps, "cqr.emb");
    att = g.param(ps, "cqr.att.w");
    out_w = g.param(ps, "cqr.out.w");
    out_b = g.param(ps, "cqr.out.b");
    comb_w = g.param(ps, "cqr.combine.w");
    comb_b = g.param(ps, "cqr.combine.b");
  }

  Stack zero_stack() {
    Stack s;
    for (std::size_t l = 0; l < m.cfg.layers; ++l) {
      Var z = g.constant(Tensor::matrix(1, m.cfg.hidden));
      s.layers.push_back({z, z});
    }
    return s;
  }

  Var step(const std::vector<LstmParams>& lstm, Stack& s, std::size_t token) {
    Var x = dropout(gather_rows(emb, {token}), m.cfg.dropout);
    for (std::size_t l = 0; l < lstm.size(); ++l) {
      s.layers[l] = lstm_cell(x, s.layers[l].c, s.layers[l].h, lstm[l]);
      x = s.layers[l].h;
    }
    return x;
  }

  /// Encoder states [n x hidden] and the final stack that seeds the decoder.
  std::pair<Var, Stack> encode(const std::vector<std::size_t>& input) {
    Stack s = zero_stack();
    std::vector<Var> rows;
    for (std::size_t id : input) rows.push_back(step(enc, s, id));
    return {concat_rows(rows), s};
  }

  /// Vocabulary logits after feeding `token` into the decoder.
  Var decode(Stack& s, Var H, Var keys, std::size_t token) {
    Var h = step(dec, s, token);
    Var a = softmax_rows(matmul_nt(h, keys));
    Var ctx = matmul(a, H);
    Var mixed = dropout(tanh(add_row(matmul(concat_cols({h, ctx}), comb_w), comb_b)), m.cfg.dropout);
    return add_row(matmul(mixed, out_w), out_b);
  }
};

/// Tokens the generator may emit: words and the end symbol.
inline std::vector<bool> emit_mask(const Vocab& v) {
  std::vector<bool> mask(v.size(), true);
  for (const auto& s : {kLatent, kSep, kUnk, kPad, kBos}) mask[v.id(s)] = false;
  return mask;
}

}  // namespace cqr_detail

/// Teacher-forced negative log-likelihood of `target` followed by [EOS].
inline Var cqr_nll(Graph& g, const CqrModel& m, const ParamStore& ps, const std::vector<std::string>& input,
                   const std::vector<std::string>& target, std::size_t* correct = nullptr) {
  if (target.empty()) throw DataError("empty reformulation target");
  if (target.size() > m.cfg.max_len)
    throw DataError("reformulation target of " + std::to_string(target.size()) + " tokens exceeds the cap of " +
                    std::to_string(m.cfg.max_len));
  cqr_detail::Bound b(g, m, ps);
  auto [H, s] = b.encode(m.ids(input));
  Var keys = matmul(H, transpose(b.att));
  std::vector<std::size_t> gold = m.ids(target);
  gold.push_back(m.vocab.id(kEos));
  std::size_t prev = m.vocab.id(kBos);
  Var total = g.constant(Tensor::scalar(0));
  for (std::size_t t = 0; t < gold.size(); ++t) {
    Var logits = b.decode(s, H, keys, prev);
    Var lp = log_softmax_rows(logits);
    if (correct) {
      const Tensor& l = logits.value();
      std::size_t best = 0;
      for (std::size_t i = 1; i < l.cols(); ++i)
        if (l[i] > l[best]) best = i;
      *correct += best == gold[t];
    }
    total = add(total, pick(lp, 0, gold[t]));
    prev = gold[t];
  }
  return scale(total, -1.0);
}

/// Beam-decoded best reformulation; ties break on the smaller token-id
/// sequence. Throws DecodeError when no hypothesis ends within the cap.
inline std::vector<std::string> cqr_generate_from_input(const CqrModel& m, const std::vector<std::string>& input,
                                                        std::size_t beam_size) {
  if (beam_size < 1) throw DecodeError("beam size must be at least 1");
  Graph g(false);
  cqr_detail::Bound b(g, m, m.params);
  auto [H, s0] = b.encode(m.ids(input));
  Var keys = matmul(H, transpose(b.att));
  const std::vector<bool> allowed = cqr_detail::emit_mask(m.vocab);
  const std::size_t eos = m.vocab.id(kEos);
  struct Hyp {
    cqr_detail::Stack s;
    std::vector<std::size_t> tokens;
    double lp;
  };
  const auto better = [](double la, const std::vector<std::size_t>& a, double lb, const std::vector<std::size_t>& b) {
    if (la != lb) return la > lb;
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };
  std::vector<Hyp> live{{s0, {}, 0.0}};
  std::vector<std::pair<std::vector<std::size_t>, double>> done;
  for (std::size_t step = 0; step <= m.cfg.max_len && !live.empty(); ++step) {
    struct Cand {
      std::size_t hyp, token;
      double lp;
      std::vector<std::size_t> tokens;
    };
    std::vector<Cand> cands;
    std::vector<cqr_detail::Stack> states;
    for (std::size_t h = 0; h < live.size(); ++h) {
      cqr_detail::Stack s = live[h].s;
      const std::size_t prev = live[h].tokens.empty() ? m.vocab.id(kBos) : live[h].tokens.back();
      const Tensor l = b.decode(s, H, keys, prev).value();
      states.push_back(s);
      double mx = -std::numeric_limits<double>::infinity(), z = 0;
      for (std::size_t i = 0; i < l.cols(); ++i)
        if (allowed[i]) mx = std::max(mx, l[i]);
      for (std::size_t i = 0; i < l.cols(); ++i)
        if (allowed[i]) z += std::exp(l[i] - mx);
      const double log_z = mx + std::log(z);
      for (std::size_t i = 0; i < l.cols(); ++i) {
        if (!allowed[i]) continue;
        Cand c{h, i, live[h].lp + l[i] - log_z, live[h].tokens};
        c.tokens.push_back(i);
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(),
              [&](const Cand& a, const Cand& c) { return better(a.lp, a.tokens, c.lp, c.tokens); });
    if (cands.size() > beam_size) cands.resize(beam_size);
    std::vector<Hyp> next;
    for (auto& c : cands) {
      if (c.token == eos) {
        c.tokens.pop_back();
        if (!c.tokens.empty()) done.push_back({c.tokens, c.lp});
      } else if (step < m.cfg.max_len) {  // past the cap only the end symbol survives
        next.push_back({states[c.hyp], std::move(c.tokens), c.lp});
      }
    }
    live = std::move(next);
    if (!done.empty()) {  // scores only fall, so no live hypothesis can overtake
      double best_done = -std::numeric_limits<double>::infinity(), best_live = best_done;
      for (const auto& d : done) best_done = std::max(best_done, d.second);
      for (const auto& h : live) best_live = std::max(best_live, h.lp);
      if (best_live < best_done) break;
    }
  }
  if (done.empty()) throw DecodeError("decode budget exceeded");
  const auto best = *std::min_element(done.begin(), done.end(), [&](const auto& a, const auto& c) {
    return better(a.second, a.first, c.second, c.first);
  });
  std::vector<std::string> out;
  for (std::size_t id : best.first) out.push_back(m.vocab.word(id));
  return out;
}

inline std::vector<std::string> cqr_generate(const CqrModel& m, const std::vector<std::vector<std::string>>& context,
                                             const Schema& schema, const std::vector<std::string>& prev,
                                             std::size_t beam_size) {
  return cqr_generate_from_input(m, cqr_input(prev, context, schema), beam_size);
}

struct CqrTrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 1;
  double p_sample = 0.5;  // chance of conditioning on a generated previous rewrite
  std::uint64_t seed = 0;
  bool dropout = true;
  double clip_norm = 5.0;

  void validate() const {
    if (!(lr >= 0)) throw ConfigError("learning rate must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (p_sample < 0 || p_sample > 1) throw ConfigError("p_sample must lie in [0, 1]");
  }
};

/// Previous-rewrite segment for one training visit: the annotation with
/// probability 1 - p_sample, otherwise the generated one when available.
inline const std::vector<std::string>& choose_prev(const CqrExample& ex, double p_sample, std::mt19937_64& rng) {
  static const std::vector<std::string> empty;
  std::bernoulli_distribution sample(p_sample);
  const bool use_sampled = sample(rng);
  if (ex.prev_sampled && (use_sampled || !ex.prev_label)) return *ex.prev_sampled;
  if (ex.prev_label) return *ex.prev_label;
  return empty;
}

struct CqrEpoch {
  std::size_t epoch = 0;
  double loss = 0;            // mean per-example NLL
  double token_accuracy = 0;  // teacher-forced argmax accuracy including the end symbol
};

/// Cross-entropy training on `examples` (mutates `m.params`).
inline std::vector<CqrEpoch> cqr_train(CqrModel& m, const std::vector<CqrExample>& examples, const CqrTrainConfig& cfg) {
  cfg.validate();
  if (examples.empty()) throw DataError("no reformulation training examples");
  AdamConfig ac;
  ac.learning_rate = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  Adam adam(ac);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  std::vector<CqrEpoch> history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    CqrEpoch em;
    em.epoch = epoch;
    std::size_t correct = 0, tokens = 0, in_batch = 0;
    GradMap batch;
    const auto flush = [&] {
      if (!in_batch) return;
      for (auto& [_, gt] : batch)
        for (auto& v : gt.data()) v /= static_cast<Real>(in_batch);
      adam.step(m.params, batch);
      batch.clear();
      in_batch = 0;
    };
    for (std::size_t k : order) {
      const CqrExample& ex = examples[k];
      Graph g(true, cfg.seed ^ (epoch * 0x9E3779B97F4A7C15ULL) ^ (k + 1));
      g.set_training(cfg.dropout);
      const auto input = cqr_input(choose_prev(ex, cfg.p_sample, rng), ex.context, *ex.schema);
      Var loss = cqr_nll(g, m, m.params, input, ex.target, &correct);
      tokens += ex.target.size() + 1;
      em.loss += loss.item();
      g.backward(loss);
      accumulate(batch, g.param_grads());
      if (++in_batch == cfg.batch_size) flush();
    }
    flush();
    em.loss /= static_cast<double>(examples.size());
    em.token_accuracy = static_cast<double>(correct) / static_cast<double>(tokens);
    history.push_back(em);
  }
  return history;
}

/// Teacher-forced token accuracy with dropout off, conditioning on the
/// annotated previous rewrite when present.
inline double cqr_token_accuracy(const CqrModel& m, const std::vector<CqrExample>& examples) {
  std::size_t correct = 0, tokens = 0;
  for (const auto& ex : examples) {
    Graph g(false);
    const auto& prev = ex.prev_label ? *ex.prev_label : (ex.prev_sampled ? *ex.prev_sampled : std::vector<std::string>{});
    cqr_nll(g, m, m.params, cqr_input(prev, ex.context, *ex.schema), ex.target, &correct);
    tokens += ex.target.size() + 1;
  }
  return tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0;
}

}  // namespace cqrsql
