#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqrsql/grammar/grammar.hpp"

namespace cqrsql {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EncoderConfig {
  std::size_t layers = 4;
  std::size_t heads = 8;
  std::size_t d_model = 256;
  std::size_t ff_width = 0;  // 0 means 4 * d_model
  double dropout = 0.1;
  std::size_t max_turns = 5;       // reverse turn index embeddings (clamped)
  std::size_t max_positions = 32;  // word offset within a turn (clamped)

  std::size_t head_width() const { return d_model / heads; }
  std::size_t ff() const { return ff_width ? ff_width : 4 * d_model; }

  void validate() const {
    if (layers < 1) throw ConfigError("encoder needs at least one layer (L >= 1)");
    if (heads < 1 || d_model % heads != 0)
      throw ConfigError("encoder width " + std::to_string(d_model) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    if (dropout < 0 || dropout >= 1) throw ConfigError("encoder dropout must be in [0, 1)");
    if (max_turns < 1 || max_positions < 1) throw ConfigError("encoder embedding tables must be non-empty");
  }
};

struct DecoderConfig {
  std::size_t hidden = 256;
  std::size_t action_dim = 128;
  std::size_t node_dim = 64;
  std::size_t att_heads = 8;
  std::size_t mlp_dim = 256;
  double dropout = 0.2;
  std::size_t max_steps = 120;

  void validate(std::size_t d_model) const {
    if (hidden < 1 || action_dim < 1 || node_dim < 1 || mlp_dim < 1) throw ConfigError("decoder widths must be positive");
    if (att_heads < 1 || d_model % att_heads != 0)
      throw ConfigError("decoder attention heads must divide the encoder width");
    if (dropout < 0 || dropout >= 1) throw ConfigError("decoder dropout must be in [0, 1)");
    if (max_steps < 1) throw ConfigError("decoder max_steps must be positive");
  }
};

struct ModelConfig {
  EncoderConfig enc;
  DecoderConfig dec;
  std::size_t vocab_size = 0;

  void validate() const {
    enc.validate();
    dec.validate(enc.d_model);
    if (vocab_size < 6) throw ConfigError("vocabulary must hold at least the special tokens");
  }

  /// Small widths for tests and fixture-scale training.
  static ModelConfig tiny() {
    ModelConfig c;
    c.enc.layers = 2;
    c.enc.heads = 4;
    c.enc.d_model = 32;
    c.enc.ff_width = 64;
    c.dec.hidden = 32;
    c.dec.action_dim = 16;
    c.dec.node_dim = 8;
    c.dec.att_heads = 4;
    c.dec.mlp_dim = 32;
    return c;
  }

  nlohmann::json to_json() const {
    return {{"encoder",
             {{"layers", enc.layers},
              {"heads", enc.heads},
              {"d_model", enc.d_model},
              {"ff_width", enc.ff()},
              {"dropout", enc.dropout},
              {"max_turns", enc.max_turns},
              {"max_positions", enc.max_positions}}},
            {"decoder",
             {{"hidden", dec.hidden},
              {"action_dim", dec.action_dim},
              {"node_dim", dec.node_dim},
              {"att_heads", dec.att_heads},
              {"mlp_dim", dec.mlp_dim},
              {"dropout", dec.dropout},
              {"max_steps", dec.max_steps}}},
            {"vocab_size", vocab_size}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
      const auto& e = j.at("encoder");
      c.enc.layers = e.at("layers");
      c.enc.heads = e.at("heads");
      c.enc.d_model = e.at("d_model");
      c.enc.ff_width = e.at("ff_width");
      c.enc.dropout = e.at("dropout");
      c.enc.max_turns = e.at("max_turns");
      c.enc.max_positions = e.at("max_positions");
      const auto& d = j.at("decoder");
      c.dec.hidden = d.at("hidden");
      c.dec.action_dim = d.at("action_dim");
      c.dec.node_dim = d.at("node_dim");
      c.dec.att_heads = d.at("att_heads");
      c.dec.mlp_dim = d.at("mlp_dim");
      c.dec.dropout = d.at("dropout");
      c.dec.max_steps = d.at("max_steps");
      c.vocab_size = j.at("vocab_size");
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("malformed model config: ") + ex.what());
    }
    c.validate();
    return c;
  }
};

inline nlohmann::json grammar_to_json(const Grammar& g) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : g.rules()) out.push_back(r.name);
  return out;
}

inline Grammar grammar_from_json(const nlohmann::json& j) {
  const Grammar full = Grammar::sql();
  std::set<Production> keep;
  for (const auto& name : j) {
    bool found = false;
    for (const auto& r : full.rules())
      if (r.name == name.get<std::string>()) {
        keep.insert(r.production);
        found = true;
      }
    if (!found) throw ConfigError("unknown grammar rule '" + name.get<std::string>() + "'");
  }
  return Grammar(keep);
}

}  // namespace cqrsql
