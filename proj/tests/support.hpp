#pragma once

#include <map>
#include <string>
#include <vector>

#include "cqrsql/data/dataset.hpp"

namespace cqrsql::testing_support {

inline std::string data_path(const std::string& name) { return std::string(CQRSQL_DATA_DIR) + "/" + name; }

struct LabeledPair {
  std::size_t interaction = 0;
  std::size_t turn = 0;  // 1-based as written in the fixture
  std::string database_id, pred, gold;
  bool match = false;
};

inline std::vector<LabeledPair> load_labeled_pairs(const std::string& path) {
  std::vector<LabeledPair> out;
  for (const auto& j : read_json(path))
    out.push_back({j.at("interaction"), j.at("turn"), j.at("database_id"), j.at("pred"), j.at("gold"), j.at("match")});
  return out;
}

/// Regroups labeled pairs into interactions (ordered by interaction id and
/// turn) and the matching prediction table.
struct PairDataset {
  std::vector<Interaction> data;
  std::vector<std::vector<std::string>> predictions;
  std::vector<std::vector<bool>> labels;
};

inline PairDataset pairs_as_dataset(const std::vector<LabeledPair>& pairs) {
  std::map<std::size_t, std::map<std::size_t, const LabeledPair*>> grouped;
  for (const auto& p : pairs) grouped[p.interaction][p.turn] = &p;
  PairDataset out;
  for (const auto& [_, turns] : grouped) {
    Interaction inter;
    std::vector<std::string> preds;
    std::vector<bool> labels;
    for (const auto& [__, p] : turns) {
      inter.database_id = p->database_id;
      Turn t;
      t.utterance = "question";
      t.question = {"question"};
      t.gold_sql = p->gold;
      inter.turns.push_back(t);
      preds.push_back(p->pred);
      labels.push_back(p->match);
    }
    out.data.push_back(std::move(inter));
    out.predictions.push_back(std::move(preds));
    out.labels.push_back(std::move(labels));
  }
  return out;
}

}  // namespace cqrsql::testing_support
