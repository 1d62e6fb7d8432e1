#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cqrsql/data/checkpoint.hpp"
#include "cqrsql/model/decoder.hpp"
#include "cqrsql/model/encoder.hpp"
#include "cqrsql/training/losses.hpp"

namespace cqrsql {

/// Linearized input with its relation graph.
struct PreparedInput {
  LinearizedInput in;
  RelationGraph rel;
};

inline PreparedInput prepare_input(const std::vector<std::vector<std::string>>& turns, const Schema& schema) {
  PreparedInput p{linearize(turns, schema), {}};
  p.rel = build_relations(p.in, schema);
  return p;
}

/// Everything needed to rebuild a trained parser: configuration, vocabulary,
/// grammar and parameters.
struct ParserModel {
  ModelConfig cfg;
  Vocab vocab;
  Grammar grammar = Grammar::sql();
  ParamStore params;

  static ParserModel create(const Vocab& vocab, const Grammar& grammar, ModelConfig cfg, std::uint64_t seed) {
    cfg.vocab_size = vocab.size();
    cfg.validate();
    ParserModel m{cfg, vocab, grammar, ParamStore(seed)};
    register_parameters(m.params, m.cfg, m.grammar);
    return m;
  }

  static void register_parameters(ParamStore& store, const ModelConfig& cfg, const Grammar& grammar) {
    register_encoder(store, cfg);
    register_decoder(store, cfg, grammar);
    register_grounding(store, cfg.enc.d_model);
  }

  Json config_json() const {
    return {{"kind", "parser"}, {"model", cfg.to_json()}, {"vocab", vocab.to_json()}, {"grammar", grammar_to_json(grammar)}};
  }

  void save(const std::string& path) const { save_checkpoint(params, config_json(), path); }

  static ParserModel load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.config.value("kind", "") != "parser") throw CheckpointError(path + ": not a parser checkpoint");
    ParserModel m;
    try {
      m.cfg = ModelConfig::from_json(ck.config.at("model"));
      m.vocab = Vocab::from_json(ck.config.at("vocab"));
      m.grammar = grammar_from_json(ck.config.at("grammar"));
    } catch (const Json::exception& e) {
      throw CheckpointError(path + ": malformed config block: " + e.what());
    }
    if (m.vocab.size() != m.cfg.vocab_size) throw CheckpointError(path + ": vocabulary size disagrees with config");
    ParamStore expected;
    register_parameters(expected, m.cfg, m.grammar);
    check_compatible(ck.params, expected);
    m.params = std::move(ck.params);
    return m;
  }

  EncoderOutput encode(Graph& g, const PreparedInput& p) const { return cqrsql::encode(g, params, cfg, vocab, p.in, p.rel); }
};

/// Context turns q_1..q_t of an interaction, for t = `turn`.
inline std::vector<std::vector<std::string>> context_of(const Interaction& inter, std::size_t turn) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i <= turn; ++i) out.push_back(inter.turns.at(i).question);
  return out;
}

/// Best-scoring action sequence, or nullopt when decoding runs out of budget.
inline std::optional<ActionSequence> predict_actions(const ParserModel& m, const PreparedInput& p, const Schema& schema,
                                                     std::size_t beam_size) {
  Graph g(false);
  const EncoderOutput enc = m.encode(g, p);
  const Decoder dec(g, m.params, m.cfg, m.grammar, schema, enc);
  try {
    return beam_search(dec, beam_size, m.cfg.dec.max_steps).front().actions;
  } catch (const DecodeError&) {
    return std::nullopt;
  }
}

/// Predicted SQL text; empty when decoding fails.
inline std::string predict_sql(const ParserModel& m, const PreparedInput& p, const Schema& schema,
                               std::size_t beam_size) {
  const auto actions = predict_actions(m, p, schema, beam_size);
  return actions ? actions_to_sql(*actions, m.grammar, schema) : std::string();
}

}  // namespace cqrsql
