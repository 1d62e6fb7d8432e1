#pragma once

#include <string>
#include <utility>

#include "cqrsql/core/graph.hpp"

namespace cqrsql {

/// Parameters of one LSTM cell: input weights [in x 4h], recurrent weights
/// [h x 4h], bias [1 x 4h]. Gate order along the 4h axis: input, forget,
/// cell candidate, output.
struct LstmParams {
  Var w_input;
  Var w_hidden;
  Var bias;
};

inline void register_lstm(ParamStore& store, const std::string& prefix, std::size_t input,
                          std::size_t hidden) {
  store.create(prefix + ".w_input", {input, 4 * hidden});
  store.create(prefix + ".w_hidden", {hidden, 4 * hidden});
  store.create_constant(prefix + ".bias", {1, 4 * hidden}, 0.0);
}

inline LstmParams bind_lstm(Graph& g, const ParamStore& store, const std::string& prefix) {
  return {g.param(store, prefix + ".w_input"), g.param(store, prefix + ".w_hidden"),
          g.param(store, prefix + ".bias")};
}

struct LstmState {
  Var c;
  Var h;
};

/// One gated update: i,f,o = sigmoid(.), g = tanh(.), c' = f*c + i*g,
/// h' = o * tanh(c').
inline LstmState lstm_cell(Var x, Var c, Var h, const LstmParams& p) {
  const std::size_t hidden = h.value().cols();
  if (p.w_input.value().rows() != x.value().cols() || p.w_hidden.value().rows() != hidden ||
      p.w_input.value().cols() != 4 * hidden || c.value().cols() != hidden ||
      x.value().rows() != 1 || c.value().rows() != 1 || h.value().rows() != 1)
    throw NumericError("lstm_cell: shape mismatch (x " + shape_str(x.value().shape()) + ", h " +
                       shape_str(h.value().shape()) + ", w_input " +
                       shape_str(p.w_input.value().shape()) + ")");
  Var pre = add_row(add(matmul(x, p.w_input), matmul(h, p.w_hidden)), p.bias);
  Var in_gate = sigmoid(slice_cols(pre, 0, hidden));
  Var forget_gate = sigmoid(slice_cols(pre, hidden, 2 * hidden));
  Var candidate = tanh(slice_cols(pre, 2 * hidden, 3 * hidden));
  Var out_gate = sigmoid(slice_cols(pre, 3 * hidden, 4 * hidden));
  Var c_next = add(mul(forget_gate, c), mul(in_gate, candidate));
  Var h_next = mul(out_gate, tanh(c_next));
  return {c_next, h_next};
}

/// Dense layer parameters [in x out] plus bias [1 x out].
inline void register_linear(ParamStore& store, const std::string& prefix, std::size_t in,
                            std::size_t out, bool with_bias = true) {
  store.create(prefix + ".w", {in, out});
  if (with_bias) store.create_constant(prefix + ".b", {1, out}, 0.0);
}

inline Var apply_linear(Graph& g, const ParamStore& store, const std::string& prefix, Var x) {
  Var y = matmul(x, g.param(store, prefix + ".w"));
  if (store.contains(prefix + ".b")) y = add_row(y, g.param(store, prefix + ".b"));
  return y;
}

inline void register_layer_norm(ParamStore& store, const std::string& prefix, std::size_t width) {
  store.create_constant(prefix + ".gain", {1, width}, 1.0);
  store.create_constant(prefix + ".bias", {1, width}, 0.0);
}

inline Var apply_layer_norm(Graph& g, const ParamStore& store, const std::string& prefix, Var x) {
  return layer_norm(x, g.param(store, prefix + ".gain"), g.param(store, prefix + ".bias"));
}

}  // namespace cqrsql
