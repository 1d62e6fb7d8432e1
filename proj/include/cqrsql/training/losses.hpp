#pragma once

#include <iostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cqrsql/core/graph.hpp"
#include "cqrsql/model/decoder.hpp"

namespace cqrsql {

class LossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void register_grounding(ParamStore& store, std::size_t d_model) {
  store.create("sg.w", {d_model, d_model});
}

/// Row of grounding scores f_d(z) = h_d W z^T over every schema item.
inline Var grounding_logits(Var z, Var schema_states, Var w) { return matmul_nt(matmul_nt(z, w), schema_states); }

inline Var grounding_distribution(Var z, Var schema_states, Var w) {
  return softmax_rows(grounding_logits(z, schema_states, w));
}

/// -sum over gold items of log softmax(f(z)). An empty gold set contributes
/// zero and prints a warning.
inline Var bow_loss(Var z, Var schema_states, const std::set<std::size_t>& gold, Var w) {
  Graph& g = *z.graph;
  if (gold.empty()) {
    std::cerr << "warning: empty grounding gold set contributes 0 to the BoW loss\n";
    return g.constant(Tensor::scalar(0));
  }
  Var lp = log_softmax_rows(grounding_logits(z, schema_states, w));
  const std::size_t items = lp.value().cols();
  Var total;
  for (std::size_t d : gold) {
    if (d >= items) throw LossError("grounding gold item " + std::to_string(d) + " outside the schema");
    Var term = pick(lp, 0, d);
    total = total.graph ? add(total, term) : term;
  }
  return scale(total, -1.0);
}

/// Symmetric KL between the grounding distributions of two encodings of the
/// same schema.
inline Var sg_consistency(Var z_o, Var schema_o, Var z_r, Var schema_r, Var w) {
  if (schema_o.value().rows() != schema_r.value().rows())
    throw LossError("schema mismatch between the two encodings: " + std::to_string(schema_o.value().rows()) +
                    " vs " + std::to_string(schema_r.value().rows()) + " items");
  return symmetric_kl(grounding_distribution(z_o, schema_o, w), grounding_distribution(z_r, schema_r, w));
}

namespace loss_detail {

inline Var trace_nll(const std::vector<StepDistributions>& trace, const ActionSequence& gold) {
  if (trace.size() != gold.size())
    throw LossError("trace length " + std::to_string(trace.size()) + " differs from gold length " +
                    std::to_string(gold.size()));
  if (trace.empty()) throw LossError("empty trace");
  Graph& g = *trace[0].dist.graph;
  Var total = g.constant(Tensor::scalar(0));
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (!trace[t].mask.allows(gold[t])) throw LossError("gold action masked at step " + std::to_string(t));
    total = add(total, log_clamped(pick(trace[t].dist, 0, gold[t].id), kKlEps));
  }
  return scale(total, -1.0);
}

}  // namespace loss_detail

/// Gold-action negative log-likelihood summed over both inputs. `trace_self`
/// may be null, in which case only the context input contributes.
inline Var sp_loss(const std::vector<StepDistributions>& trace_ctx, const std::vector<StepDistributions>* trace_self,
                   const ActionSequence& gold) {
  Var ctx = loss_detail::trace_nll(trace_ctx, gold);
  return trace_self ? add(ctx, loss_detail::trace_nll(*trace_self, gold)) : ctx;
}

/// (1/T) sum_t of the symmetric KL of the active head at step t; value steps
/// have a certain action on both sides and contribute zero.
inline Var sp_consistency(const std::vector<StepDistributions>& a, const std::vector<StepDistributions>& b) {
  if (a.size() != b.size())
    throw LossError("trace lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) throw LossError("empty trace");
  Graph& g = *a[0].dist.graph;
  Var total = g.constant(Tensor::scalar(0));
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].kind != b[t].kind) throw LossError("traces disagree on the head at step " + std::to_string(t));
    if (!a[t].has_head()) continue;
    total = add(total, symmetric_kl(a[t].dist, b[t].dist));
  }
  return scale(total, 1.0 / static_cast<Real>(a.size()));
}

/// Which terms carry gradient. Disabled terms are still measured when their
/// inputs exist but enter the graph detached.
struct LossFlags {
  bool bow = true;
  bool sg_kl = true;
  bool sp_kl = true;
};

struct LossTerms {
  Var sp, sg_bow, sp_kl, sg_kl, total;
};

struct LossBreakdown {
  Real sp = 0, sg_bow = 0, sp_kl = 0, sg_kl = 0, total = 0;
  Real lambda1 = 0, lambda2 = 0;

  static LossBreakdown of(const LossTerms& t, Real lambda1, Real lambda2) {
    return {t.sp.item(), t.sg_bow.item(), t.sp_kl.item(), t.sg_kl.item(), t.total.item(), lambda1, lambda2};
  }
};

/// One side of a training turn: its encoding and teacher-forced trace.
struct InputPass {
  EncoderOutput enc;
  std::vector<StepDistributions> trace;
};

inline Var detach(Var v) { return v.graph->constant(v.value()); }

/// total = sp + lambda1 * sg_bow + lambda2 * (sp_kl + sg_kl), built in that
/// association so the reported doubles reproduce it exactly.
inline LossTerms combine_losses(Var sp, Var sg_bow, Var sp_kl, Var sg_kl, Real lambda1, Real lambda2) {
  if (lambda1 < 0 || lambda2 < 0) throw LossError("loss weights must be non-negative");
  LossTerms t{sp, sg_bow, sp_kl, sg_kl, {}};
  t.total = add(add(sp, scale(sg_bow, lambda1)), scale(add(sp_kl, sg_kl), lambda2));
  return t;
}

/// Full per-turn loss. `self` may be null (no self-contained variant), which
/// zeroes the consistency terms and restricts both task losses to the context
/// input.
inline LossTerms total_loss(const InputPass& ctx, const InputPass* self, const ActionSequence& gold,
                            const std::set<std::size_t>& gold_items, Var w_sg, Real lambda1, Real lambda2,
                            const LossFlags& flags = {}) {
  Graph& g = *ctx.enc.H.graph;
  const auto gate = [](Var v, bool on) { return on ? v : detach(v); };
  Var sp = sp_loss(ctx.trace, self ? &self->trace : nullptr, gold);
  Var bow = bow_loss(ctx.enc.z, ctx.enc.schema, gold_items, w_sg);
  if (self) bow = add(bow, bow_loss(self->enc.z, self->enc.schema, gold_items, w_sg));
  Var zero = g.constant(Tensor::scalar(0));
  Var sp_kl = self ? gate(sp_consistency(ctx.trace, self->trace), flags.sp_kl) : zero;
  Var sg_kl = self ? gate(sg_consistency(ctx.enc.z, ctx.enc.schema, self->enc.z, self->enc.schema, w_sg), flags.sg_kl)
                   : zero;
  return combine_losses(sp, gate(bow, flags.bow), sp_kl, sg_kl, lambda1, lambda2);
}

}  // namespace cqrsql
