#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cqrsql/cqr/seq2seq.hpp"
#include "cqrsql/data/dataset.hpp"
#include "cqrsql/eval/exact_match.hpp"
#include "cqrsql/model/parser.hpp"

namespace cqrsql {

/// Human rewrite of one turn; indices are 0-based.
struct SeedAnnotation {
  std::string database_id;
  std::size_t interaction = 0;
  std::size_t turn = 0;
  std::vector<std::string> self_contained;
};

inline std::vector<SeedAnnotation> seed_from_json(const Json& j, const std::vector<Interaction>& data,
                                                  const std::string& source) {
  using data_detail::field;
  if (!j.is_array()) throw DataError(source + ": expected a JSON array of annotations");
  std::vector<SeedAnnotation> out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string where = source + "[" + std::to_string(k) + "]";
    SeedAnnotation a;
    a.database_id = field<std::string>(j[k], "database_id", where);
    a.interaction = field<std::size_t>(j[k], "interaction_index", where);
    a.turn = field<std::size_t>(j[k], "turn_index", where);
    a.self_contained = tokenize(field<std::string>(j[k], "self_contained", where));
    if (a.interaction >= data.size() || a.turn >= data[a.interaction].turns.size())
      throw DataError(where + ": no turn " + std::to_string(a.turn) + " in interaction " + std::to_string(a.interaction));
    if (data[a.interaction].database_id != a.database_id)
      throw DataError(where + ": database '" + a.database_id + "' differs from the interaction's '" +
                      data[a.interaction].database_id + "'");
    if (a.self_contained.empty()) throw DataError(where + ": empty self-contained question");
    if (!seen.insert({a.interaction, a.turn}).second) throw DataError(where + ": duplicate annotation");
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<SeedAnnotation> load_seed(const std::string& path, const std::vector<Interaction>& data) {
  return seed_from_json(read_json(path), data, path);
}

/// Reformulation vocabulary: dataset words plus every seed word.
inline Vocab cqr_vocab(const std::vector<Interaction>& data, const SchemaMap& schemas,
                       const std::vector<SeedAnnotation>& seed) {
  std::vector<Interaction> all = data;
  for (const auto& a : seed) all[a.interaction].turns[a.turn].self_contained = a.self_contained;
  return build_vocab(all, schemas);
}

/// One-turn view of `data` pairing each self-contained question (or the raw
/// question when none is given) with its gold SQL; used to fit the checker.
inline std::vector<Interaction> single_turn_view(const std::vector<Interaction>& data) {
  std::vector<Interaction> out;
  for (const auto& inter : data)
    for (const auto& t : inter.turns) {
      Turn one = t;
      one.question = t.self_contained.value_or(t.question);
      one.utterance = join_tokens(one.question);
      one.self_contained.reset();
      out.push_back({inter.database_id, {std::move(one)}});
    }
  return out;
}

/// True iff one of the checker's top-`beam` parses of the standalone
/// `candidate` exactly matches `gold_sql`. Decode failures count as false.
inline bool check(const ParserModel& parser, const std::vector<std::string>& candidate, const Schema& schema,
                  const std::string& gold_sql, std::size_t beam = 5) {
  if (candidate.empty()) return false;
  Graph g(false);
  const EncoderOutput enc = parser.encode(g, prepare_input({candidate}, schema));
  const Decoder dec(g, parser.params, parser.cfg, parser.grammar, schema, enc);
  std::vector<BeamResult> results;
  try {
    results = beam_search(dec, beam, parser.cfg.dec.max_steps);
  } catch (const DecodeError&) {
    return false;
  }
  for (const auto& r : results) {
    try {
      if (exact_match(actions_to_sql(r.actions, parser.grammar, schema), gold_sql, schema)) return true;
    } catch (const SqlError&) {
    }
  }
  return false;
}

using TurnKey = std::pair<std::size_t, std::size_t>;  // (interaction, turn)
using Rewrites = std::map<TurnKey, std::vector<std::string>>;

/// Training pairs for every labeled turn. The previous-turn segment prefers
/// the label of turn t-1; a first turn is its own rewrite. `sampled` holds the
/// previous model's generations. An unlabeled, ungenerated predecessor falls
/// back to its raw question.
inline std::vector<CqrExample> build_cqr_examples(const std::vector<Interaction>& data, const SchemaMap& schemas,
                                                  const Rewrites& labels, const Rewrites& sampled) {
  std::vector<CqrExample> out;
  for (const auto& [key, target] : labels) {
    const auto [i, t] = key;
    CqrExample ex;
    ex.interaction = i;
    ex.turn = t;
    ex.context = context_of(data.at(i), t);
    ex.schema = &schema_for(schemas, data[i].database_id);
    ex.target = target;
    if (t > 0) {
      const TurnKey prev{i, t - 1};
      if (labels.count(prev)) ex.prev_label = labels.at(prev);
      else if (t - 1 == 0) ex.prev_label = data[i].turns[0].question;
      if (sampled.count(prev)) ex.prev_sampled = sampled.at(prev);
      if (!ex.prev_label && !ex.prev_sampled) ex.prev_label = data[i].turns[t - 1].question;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

/// Recursive generation over every turn: each turn conditions on the rewrite
/// just produced for its predecessor. A turn whose decode fails keeps its raw
/// question and is reported in `failed`.
inline Rewrites cqr_generate_all(const CqrModel& m, const std::vector<Interaction>& data, const SchemaMap& schemas,
                                 std::size_t beam, std::set<TurnKey>* failed = nullptr) {
  Rewrites out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Schema& schema = schema_for(schemas, data[i].database_id);
    std::vector<std::string> prev;
    for (std::size_t t = 0; t < data[i].turns.size(); ++t) {
      std::vector<std::string> r;
      try {
        r = cqr_generate(m, context_of(data[i], t), schema, prev, beam);
      } catch (const DecodeError&) {
        r = data[i].turns[t].question;
        if (failed) failed->insert({i, t});
      }
      out[{i, t}] = r;
      prev = std::move(r);
    }
  }
  return out;
}

struct SelfTrainConfig {
  CqrConfig model = CqrConfig::tiny();
  CqrTrainConfig train;
  std::size_t max_loops = 5;
  std::size_t generate_beam = 5;
  std::size_t check_beam = 5;
  bool first_turn_identity = true;  // first turns train as their own rewrite
  std::uint64_t seed = 0;
};

struct LoopStats {
  std::size_t loop = 0;
  std::size_t accepted_before = 0;
  std::size_t accepted_after = 0;
  std::size_t newly_accepted = 0;
  std::size_t passing = 0;          // generated rewrites that pass the check this loop
  std::size_t churn = 0;            // turns whose check outcome flipped since the previous loop
  std::size_t decode_failures = 0;
  double final_train_loss = 0;

  Json to_json() const {
    return {{"loop", loop},         {"accepted_before", accepted_before}, {"accepted_after", accepted_after},
            {"newly_accepted", newly_accepted}, {"passing", passing}, {"churn", churn},
            {"decode_failures", decode_failures}, {"final_train_loss", final_train_loss}};
  }
};

struct SelfTrainResult {
  std::vector<Interaction> merged;  // every turn carries a rewrite and its provenance
  Rewrites accepted;
  std::map<TurnKey, std::string> provenance;
  std::vector<LoopStats> loops;
  bool hit_loop_cap = false;
  CqrModel model;
};

/// Train -> generate over all turns -> check -> union, until the accepted set
/// stops growing or the loop cap is reached; then every unaccepted turn takes
/// its latest generation. Seed labels are never replaced.
inline SelfTrainResult self_train(const std::vector<SeedAnnotation>& seed, const std::vector<Interaction>& data,
                                  const SchemaMap& schemas, const ParserModel& checker, const SelfTrainConfig& cfg,
                                  const std::function<void(const LoopStats&)>& on_loop = {}) {
  if (seed.empty()) throw DataError("self-training needs a non-empty seed");
  if (cfg.max_loops < 1) throw ConfigError("loop cap must be at least 1");
  SelfTrainResult res;
  for (const auto& a : seed) {
    res.accepted[{a.interaction, a.turn}] = a.self_contained;
    res.provenance[{a.interaction, a.turn}] = "seed";
  }
  const Vocab vocab = cqr_vocab(data, schemas, seed);
  Rewrites generated;
  std::set<TurnKey> passing_before;
  for (std::size_t l = 1;; ++l) {
    LoopStats st;
    st.loop = l;
    st.accepted_before = res.accepted.size();
    Rewrites labels = res.accepted;
    if (cfg.first_turn_identity)
      for (std::size_t i = 0; i < data.size(); ++i) labels.emplace(TurnKey{i, 0}, data[i].turns[0].question);
    CqrTrainConfig tc = cfg.train;
    tc.seed = cfg.seed + l;
    res.model = CqrModel::create(vocab, cfg.model, cfg.seed + l);
    const auto history = cqr_train(res.model, build_cqr_examples(data, schemas, labels, generated), tc);
    st.final_train_loss = history.empty() ? 0.0 : history.back().loss;
    std::set<TurnKey> failed;
    generated = cqr_generate_all(res.model, data, schemas, cfg.generate_beam, &failed);
    st.decode_failures = failed.size();
    std::set<TurnKey> passing;
    for (const auto& [key, r] : generated) {
      if (failed.count(key)) continue;
      const auto& turn = data[key.first].turns[key.second];
      if (check(checker, r, schema_for(schemas, data[key.first].database_id), turn.gold_sql, cfg.check_beam))
        passing.insert(key);
    }
    for (const auto& key : passing)
      if (res.accepted.emplace(key, generated.at(key)).second) {
        res.provenance[key] = "accepted-loop-" + std::to_string(l);
        ++st.newly_accepted;
      }
    st.passing = passing.size();
    for (const auto& [key, _] : generated) st.churn += passing.count(key) != passing_before.count(key);
    passing_before = std::move(passing);
    st.accepted_after = res.accepted.size();
    res.loops.push_back(st);
    if (on_loop) on_loop(st);
    if (st.accepted_after == st.accepted_before) break;
    if (l == cfg.max_loops) {
      res.hit_loop_cap = true;
      break;
    }
  }
  res.merged = data;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t t = 0; t < data[i].turns.size(); ++t) {
      Turn& turn = res.merged[i].turns[t];
      const TurnKey key{i, t};
      if (res.accepted.count(key)) {
        turn.self_contained = res.accepted.at(key);
        turn.provenance = res.provenance.at(key);
      } else {
        turn.self_contained = generated.at(key);
        turn.provenance = "generated";
        res.provenance[key] = "generated";
      }
      turn.generated_self_contained = generated.at(key);
    }
  return res;
}

}  // namespace cqrsql
