#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cqrsql/core/graph.hpp"
#include "cqrsql/core/layers.hpp"
#include "cqrsql/data/linearize.hpp"
#include "cqrsql/data/vocab.hpp"
#include "cqrsql/model/config.hpp"

namespace cqrsql {

/// Final encoder states. `z` is row 0 (the latent token); `tables` and
/// `columns` are the rows of the schema items in schema id order.
struct EncoderOutput {
  Var H;
  Var z;
  Var tables;
  Var columns;
  Var schema;  // tables then columns: one row per schema item
};

inline constexpr std::size_t kSegmentKinds = 5;

inline std::string layer_prefix(std::size_t l) { return "enc.l" + std::to_string(l); }

inline void register_encoder(ParamStore& store, const ModelConfig& cfg) {
  const auto& e = cfg.enc;
  const std::size_t d = e.d_model, dk = e.head_width();
  store.create("enc.word_emb", {cfg.vocab_size, d});
  store.create("enc.kind_emb", {kSegmentKinds, d});
  store.create("enc.turn_emb", {e.max_turns + 1, d});
  store.create("enc.pos_emb", {e.max_positions + 1, d});
  for (std::size_t l = 0; l < e.layers; ++l) {
    const std::string p = layer_prefix(l);
    store.create(p + ".q.w", {d, d});
    store.create(p + ".k.w", {d, d});
    store.create(p + ".v.w", {d, d});
    store.create(p + ".rel_k", {kRelationCount, dk});
    store.create(p + ".rel_v", {kRelationCount, dk});
    register_layer_norm(store, p + ".ln1", d);
    register_linear(store, p + ".ff1", d, e.ff());
    register_linear(store, p + ".ff2", e.ff(), d);
    register_layer_norm(store, p + ".ln2", d);
  }
}

namespace encoder_detail {

/// S[i][j] = a[i][label(i,j)] for an [n x R] input.
inline Var relation_gather(Var a, const RelationGraph& rel) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const std::size_t n = rel.n;
  if (A.rows() != n) throw NumericError("relation graph size mismatch");
  Tensor S = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) S(i, j) = A(i, rel.labels[i * n + j]);
  return g.record(std::move(S), {a.id}, [ia = a.id, n, labels = rel.labels](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) da(i, labels[i * n + j]) += d(i, j);
  });
}

/// B[i][r] = sum of e[i][j] over j with label(i,j) == r.
inline Var relation_scatter(Var e, const RelationGraph& rel) {
  Graph& g = *e.graph;
  const Tensor& E = e.value();
  const std::size_t n = rel.n;
  Tensor B = Tensor::matrix(n, kRelationCount);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) B(i, rel.labels[i * n + j]) += E(i, j);
  return g.record(std::move(B), {e.id}, [ie = e.id, n, labels = rel.labels](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& de = g.grad(ie);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) de(i, j) += d(i, labels[i * n + j]);
  });
}

}  // namespace encoder_detail

/// H^0: mean word embedding per position plus segment-kind, reverse-turn and
/// in-turn position embeddings (the last two only on question tokens).
inline Var embed(Graph& g, const ParamStore& params, const ModelConfig& cfg, const Vocab& vocab,
                 const LinearizedInput& in) {
  const std::size_t n = in.size();
  std::vector<std::size_t> ids, kinds(n), turns(n, 0), positions(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> spans(n);
  for (std::size_t i = 0; i < n; ++i) {
    spans[i] = {ids.size(), in.words[i].size()};
    for (const auto& w : in.words[i]) ids.push_back(vocab.id(w));
    const Segment& s = in.segments[i];
    kinds[i] = static_cast<std::size_t>(s.kind);
    if (s.kind == Segment::Kind::Question) {
      turns[i] = 1 + std::min(in.turn_count - 1 - s.turn, cfg.enc.max_turns - 1);
      positions[i] = 1 + std::min(s.position, cfg.enc.max_positions - 1);
    }
  }
  Tensor avg = Tensor::matrix(n, ids.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < spans[i].second; ++k)
      avg(i, spans[i].first + k) = 1.0 / static_cast<Real>(spans[i].second);
  Var words = matmul(g.constant(std::move(avg)), gather_rows(g.param(params, "enc.word_emb"), ids));
  Var h = add(words, gather_rows(g.param(params, "enc.kind_emb"), kinds));
  h = add(h, gather_rows(g.param(params, "enc.turn_emb"), turns));
  h = add(h, gather_rows(g.param(params, "enc.pos_emb"), positions));
  return dropout(h, cfg.enc.dropout);
}

/// One relation-aware self-attention block. When `attention` is non-null the
/// per-head attention matrices are appended to it.
inline Var rat_layer(Graph& g, const ParamStore& params, const ModelConfig& cfg, std::size_t layer, Var H,
                     const RelationGraph& rel, std::vector<Var>* attention = nullptr) {
  using namespace encoder_detail;
  const auto& e = cfg.enc;
  if (rel.n != H.value().rows())
    throw NumericError("relation graph size mismatch: " + std::to_string(rel.n) + " labels for " +
                       std::to_string(H.value().rows()) + " tokens");
  const std::string p = layer_prefix(layer);
  const std::size_t dk = e.head_width();
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dk));
  Var Q = matmul(H, g.param(params, p + ".q.w"));
  Var K = matmul(H, g.param(params, p + ".k.w"));
  Var V = matmul(H, g.param(params, p + ".v.w"));
  Var rk = g.param(params, p + ".rel_k");
  Var rv = g.param(params, p + ".rel_v");
  std::vector<Var> heads;
  for (std::size_t h = 0; h < e.heads; ++h) {
    Var q = slice_cols(Q, h * dk, (h + 1) * dk);
    Var k = slice_cols(K, h * dk, (h + 1) * dk);
    Var v = slice_cols(V, h * dk, (h + 1) * dk);
    Var scores = scale(add(matmul_nt(q, k), relation_gather(matmul_nt(q, rk), rel)), inv_sqrt);
    Var att = softmax_rows(scores);
    if (attention) attention->push_back(att);
    heads.push_back(add(matmul(att, v), matmul(relation_scatter(att, rel), rv)));
  }
  Var A = dropout(heads.size() == 1 ? heads[0] : concat_cols(heads), e.dropout);
  Var mid = apply_layer_norm(g, params, p + ".ln1", add(H, A));
  Var ff = apply_linear(g, params, p + ".ff2", relu(apply_linear(g, params, p + ".ff1", mid)));
  return apply_layer_norm(g, params, p + ".ln2", add(mid, dropout(ff, e.dropout)));
}

inline EncoderOutput encode(Graph& g, const ParamStore& params, const ModelConfig& cfg, const Vocab& vocab,
                            const LinearizedInput& in, const RelationGraph& rel) {
  cfg.enc.validate();
  Var H = embed(g, params, cfg, vocab, in);
  for (std::size_t l = 0; l < cfg.enc.layers; ++l) H = rat_layer(g, params, cfg, l, H, rel);
  EncoderOutput out;
  out.H = H;
  out.z = slice_rows(H, 0, 1);
  out.tables = gather_rows(H, in.table_positions);
  out.columns = gather_rows(H, in.column_positions);
  std::vector<std::size_t> items = in.table_positions;
  items.insert(items.end(), in.column_positions.begin(), in.column_positions.end());
  out.schema = gather_rows(H, items);
  return out;
}

}  // namespace cqrsql
