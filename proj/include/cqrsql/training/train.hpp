#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cqrsql/core/adam.hpp"
#include "cqrsql/eval/evaluate.hpp"
#include "cqrsql/model/parser.hpp"
#include "cqrsql/training/losses.hpp"

namespace cqrsql {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 5e-5;
  std::size_t batch_size = 1;
  std::size_t epochs = 1;
  double lambda1 = 0.1;
  double lambda2 = 3.0;
  bool dropout = true;      // model dropout rates apply while training
  std::uint64_t seed = 0;
  LossFlags flags;
  bool dual_input = true;   // encode the self-contained variant alongside the context
  std::size_t beam = 1;     // beam used for dev / train accuracy
  std::size_t train_eval_every = 0;  // 0: never score the training set
  bool stop_at_full_train_qm = false;
  double clip_norm = 5.0;

  void validate() const {
    if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite non-negative number");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (lambda1 < 0 || lambda2 < 0) throw ConfigError("loss weights must be non-negative");
    if (beam < 1) throw ConfigError("beam size must be at least 1");
  }

  /// Ablation presets: 1 full, 2 without grounding, 3 without parsing
  /// consistency, 4 end-to-end (context input only, no grounding), 5
  /// end-to-end plus the BoW loss.
  static TrainConfig variant(int k) {
    TrainConfig c;
    switch (k) {
      case 1: break;
      case 2: c.flags.bow = c.flags.sg_kl = false; break;
      case 3: c.flags.sp_kl = false; break;
      case 4:
        c.flags = {false, false, false};
        c.dual_input = false;
        break;
      case 5:
        c.flags.sg_kl = c.flags.sp_kl = false;
        c.dual_input = false;
        break;
      default: throw ConfigError("unknown ablation variant " + std::to_string(k));
    }
    return c;
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double sp = 0, sg_bow = 0, sp_kl = 0, sg_kl = 0, total = 0;
  std::optional<double> dev_qm, dev_im, train_qm;

  Json to_json() const {
    Json j = {{"epoch", epoch}, {"sp", sp}, {"sg_bow", sg_bow}, {"sp_kl", sp_kl}, {"sg_kl", sg_kl}, {"total", total}};
    j["dev_qm"] = dev_qm ? Json(*dev_qm) : Json(nullptr);
    j["dev_im"] = dev_im ? Json(*dev_im) : Json(nullptr);
    if (train_qm) j["train_qm"] = *train_qm;
    return j;
  }
};

/// A training turn with everything precomputed that does not depend on the
/// parameters.
struct TrainingExample {
  std::size_t interaction = 0;
  std::size_t turn = 0;
  const Schema* schema = nullptr;
  PreparedInput ctx;
  std::optional<PreparedInput> self;
  ActionSequence gold;
  std::set<std::size_t> gold_items;
};

/// Turns without a self-contained rewrite use their own question for it.
inline std::vector<TrainingExample> build_examples(const std::vector<Interaction>& data, const SchemaMap& schemas,
                                                   const Grammar& grammar, bool dual_input) {
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Schema& schema = schema_for(schemas, data[i].database_id);
    for (std::size_t t = 0; t < data[i].turns.size(); ++t) {
      const Turn& turn = data[i].turns[t];
      TrainingExample ex;
      ex.interaction = i;
      ex.turn = t;
      ex.schema = &schema;
      ex.ctx = prepare_input(context_of(data[i], t), schema);
      if (dual_input) ex.self = prepare_input({turn.self_contained.value_or(turn.question)}, schema);
      try {
        ex.gold = sql_to_actions(turn.gold_sql, schema, grammar);
        for (const auto& item : schema_items_of(turn.gold_sql, schema)) ex.gold_items.insert(item.index(schema));
      } catch (const SqlError& e) {
        throw TrainError("interaction " + std::to_string(i) + " turn " + std::to_string(t) + ": " + e.what());
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

/// Builds the loss graph of one example inside `g`.
inline LossTerms example_loss(Graph& g, const ParserModel& m, const ParamStore& params, const TrainingExample& ex,
                              const TrainConfig& cfg) {
  const auto pass = [&](const PreparedInput& p) {
    InputPass out{encode(g, params, m.cfg, m.vocab, p.in, p.rel), {}};
    const Decoder dec(g, params, m.cfg, m.grammar, *ex.schema, out.enc);
    out.trace = teacher_forced_trace(dec, ex.gold);
    return out;
  };
  const InputPass ctx = pass(ex.ctx);
  std::optional<InputPass> self;
  if (ex.self) self = pass(*ex.self);
  return total_loss(ctx, self ? &*self : nullptr, ex.gold, ex.gold_items, g.param(params, "sg.w"), cfg.lambda1,
                    cfg.lambda2, cfg.flags);
}

/// Loss components of one example with dropout off and no gradient tape.
inline LossBreakdown measure_example(const ParserModel& m, const TrainingExample& ex, const TrainConfig& cfg) {
  Graph g(false);
  return LossBreakdown::of(example_loss(g, m, m.params, ex, cfg), cfg.lambda1, cfg.lambda2);
}

/// Fraction of examples whose beam prediction exactly matches the gold SQL.
inline double example_accuracy(const ParserModel& m, const std::vector<Interaction>& data,
                               const std::vector<TrainingExample>& examples, std::size_t beam) {
  if (examples.empty()) return 0;
  std::size_t hit = 0;
  for (const auto& ex : examples) {
    const std::string pred = predict_sql(m, ex.ctx, *ex.schema, beam);
    hit += exact_match(pred, data[ex.interaction].turns[ex.turn].gold_sql, *ex.schema);
  }
  return static_cast<double>(hit) / static_cast<double>(examples.size());
}

/// Minibatch Adam on the per-turn loss. Examples are shuffled each epoch
/// from `cfg.seed`; dropout masks are seeded per example, so runs are
/// reproducible. `on_epoch` sees each epoch's averages as they complete.
inline std::vector<EpochMetrics> train(ParserModel& m, const std::vector<Interaction>& data, const SchemaMap& schemas,
                                       const TrainConfig& cfg, const std::vector<Interaction>* dev = nullptr,
                                       const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  cfg.validate();
  const std::vector<TrainingExample> examples = build_examples(data, schemas, m.grammar, cfg.dual_input);
  if (examples.empty()) throw TrainError("no training examples");
  AdamConfig ac;
  ac.learning_rate = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  Adam adam(ac);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  std::vector<EpochMetrics> history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics em;
    em.epoch = epoch;
    GradMap batch;
    std::size_t in_batch = 0;
    const auto flush = [&] {
      if (!in_batch) return;
      for (auto& [_, gt] : batch)
        for (auto& v : gt.data()) v /= static_cast<Real>(in_batch);
      adam.step(m.params, batch);
      batch.clear();
      in_batch = 0;
    };
    for (std::size_t k = 0; k < order.size(); ++k) {
      const TrainingExample& ex = examples[order[k]];
      Graph g(true, cfg.seed ^ (epoch * 0x9E3779B97F4A7C15ULL) ^ (order[k] + 1));
      g.set_training(cfg.dropout);
      LossTerms terms;
      try {
        terms = example_loss(g, m, m.params, ex, cfg);
      } catch (const NumericError& e) {
        throw TrainError("non-finite loss at interaction " + std::to_string(ex.interaction) + " turn " +
                         std::to_string(ex.turn) + ": " + e.what());
      }
      const LossBreakdown b = LossBreakdown::of(terms, cfg.lambda1, cfg.lambda2);
      if (!std::isfinite(b.total))
        throw TrainError("non-finite loss at interaction " + std::to_string(ex.interaction) + " turn " +
                         std::to_string(ex.turn));
      em.sp += b.sp;
      em.sg_bow += b.sg_bow;
      em.sp_kl += b.sp_kl;
      em.sg_kl += b.sg_kl;
      em.total += b.total;
      g.backward(terms.total);
      accumulate(batch, g.param_grads());
      if (++in_batch == cfg.batch_size) flush();
    }
    flush();
    const double n = static_cast<double>(examples.size());
    em.sp /= n;
    em.sg_bow /= n;
    em.sp_kl /= n;
    em.sg_kl /= n;
    em.total /= n;
    if (dev && !dev->empty()) {
      const EvalReport r = evaluate(m, *dev, schemas, cfg.beam);
      em.dev_qm = r.qm;
      em.dev_im = r.im;
    }
    const bool last = epoch == cfg.epochs;
    if (cfg.train_eval_every && (epoch % cfg.train_eval_every == 0 || last))
      em.train_qm = example_accuracy(m, data, examples, cfg.beam);
    history.push_back(em);
    if (on_epoch) on_epoch(em);
    if (cfg.stop_at_full_train_qm && em.train_qm && *em.train_qm == 1.0) break;
  }
  return history;
}

}  // namespace cqrsql
