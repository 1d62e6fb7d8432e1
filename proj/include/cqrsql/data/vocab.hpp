#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqrsql/data/dataset.hpp"

namespace cqrsql {

inline const std::string kLatent = "[Z]";
inline const std::string kSep = "[SEP]";
inline const std::string kUnk = "[UNK]";
inline const std::string kPad = "[PAD]";
inline const std::string kBos = "[BOS]";
inline const std::string kEos = "[EOS]";

/// Word vocabulary; the six specials take ids 0..5 in a fixed order.
class Vocab {
 public:
  static constexpr std::size_t kLatentId = 0, kSepId = 1, kUnkId = 2, kPadId = 3, kBosId = 4, kEosId = 5;

  Vocab() {
    for (const auto& s : {kLatent, kSep, kUnk, kPad, kBos, kEos}) add(s);
  }

  std::size_t add(const std::string& w) {
    auto [it, inserted] = index_.emplace(w, words_.size());
    if (inserted) words_.push_back(w);
    return it->second;
  }

  std::size_t id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& w) const { return index_.count(w) > 0; }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  Json to_json() const { return words_; }

  static Vocab from_json(const Json& j) {
    Vocab v;
    const auto words = j.get<std::vector<std::string>>();
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i < 6 && words[i] != v.word(i)) throw DataError("vocabulary does not start with the special tokens");
      if (v.add(words[i]) != i) throw DataError("duplicate vocabulary word '" + words[i] + "'");
    }
    return v;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
};

/// Vocabulary over every question, self-contained question and schema word,
/// added in sorted order so ids do not depend on file order.
inline Vocab build_vocab(const std::vector<Interaction>& data, const SchemaMap& schemas) {
  std::set<std::string> words;
  for (const auto& inter : data)
    for (const auto& t : inter.turns) {
      words.insert(t.question.begin(), t.question.end());
      if (t.self_contained) words.insert(t.self_contained->begin(), t.self_contained->end());
    }
  for (const auto& [_, s] : schemas) {
    for (const auto& t : s.tables) words.insert(t.words.begin(), t.words.end());
    for (const auto& c : s.columns) words.insert(c.words.begin(), c.words.end());
  }
  Vocab v;
  for (const auto& w : words) v.add(w);
  return v;
}

}  // namespace cqrsql
