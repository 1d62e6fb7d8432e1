#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cqrsql/data/schema.hpp"
#include "cqrsql/grammar/sql.hpp"

namespace cqrsql {

using Json = nlohmann::json;

struct Turn {
  std::string utterance;
  std::vector<std::string> question;
  std::string gold_sql;
  std::optional<std::vector<std::string>> self_contained;
  std::optional<std::vector<std::string>> generated_self_contained;
  std::string provenance;  // seed | generated | accepted-loop-<l>, when known
};

struct Interaction {
  std::string database_id;
  std::vector<Turn> turns;
};

using SchemaMap = std::map<std::string, Schema>;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json read_json(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw DataError(path + ": malformed JSON: " + e.what());
  }
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

namespace data_detail {

template <class T>
T field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace data_detail

/// Builds a Schema from one record of a SParC/Spider-style tables file.
/// `*_original` names, when present, are the SQL identifiers and the plain
/// names supply the natural-language words. The leading [-1, "*"] column is
/// dropped and key indices are shifted to match.
inline Schema schema_from_json(const Json& j, const std::string& where) {
  using data_detail::field;
  Schema s;
  s.database_id = field<std::string>(j, "db_id", where);
  const std::string at = where + " (" + s.database_id + ")";
  const auto table_names = field<std::vector<std::string>>(j, "table_names", at);
  const auto table_sql = j.contains("table_names_original")
                             ? field<std::vector<std::string>>(j, "table_names_original", at)
                             : table_names;
  if (table_sql.size() != table_names.size()) throw DataError(at + ": table name lists differ in length");
  for (std::size_t t = 0; t < table_names.size(); ++t)
    s.tables.push_back(Table{table_sql[t], tokenize(table_names[t]), {}});

  const Json cols = j.contains("column_names") ? j.at("column_names") : Json::array();
  const Json cols_sql = j.contains("column_names_original") ? j.at("column_names_original") : cols;
  const auto types = j.contains("column_types") ? field<std::vector<std::string>>(j, "column_types", at)
                                                : std::vector<std::string>{};
  if (!cols.is_array() || !cols_sql.is_array() || cols.size() != cols_sql.size())
    throw DataError(at + ": malformed column_names");
  std::vector<long> remap(cols.size(), -1);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (!cols[i].is_array() || cols[i].size() != 2) throw DataError(at + ": malformed column entry " + std::to_string(i));
    const long table = cols[i][0].get<long>();
    if (table < 0) continue;
    if (static_cast<std::size_t>(table) >= s.tables.size())
      throw DataError(at + ": column " + std::to_string(i) + " references missing table " + std::to_string(table));
    Column c;
    c.name = cols_sql[i][1].get<std::string>();
    c.words = tokenize(cols[i][1].get<std::string>());
    c.type = i < types.size() ? parse_column_type(types[i]) : ColumnType::Text;
    c.table = static_cast<std::size_t>(table);
    remap[i] = static_cast<long>(s.columns.size());
    s.tables[c.table].columns.push_back(s.columns.size());
    s.columns.push_back(std::move(c));
  }
  const auto mapped = [&](const Json& v) {
    const long i = v.get<long>();
    if (i < 0 || static_cast<std::size_t>(i) >= remap.size() || remap[i] < 0)
      throw DataError(at + ": key references missing column " + std::to_string(i));
    return static_cast<std::size_t>(remap[i]);
  };
  if (j.contains("primary_keys"))
    for (const auto& k : j.at("primary_keys")) s.primary_keys.push_back(mapped(k));
  if (j.contains("foreign_keys"))
    for (const auto& fk : j.at("foreign_keys")) {
      if (!fk.is_array() || fk.size() != 2) throw DataError(at + ": malformed foreign key");
      s.foreign_keys.emplace_back(mapped(fk[0]), mapped(fk[1]));
    }
  s.validate();
  return s;
}

inline Json schema_to_json(const Schema& s) {
  Json cols = Json::array(), cols_sql = Json::array(), types = Json::array();
  cols.push_back({-1, "*"});
  cols_sql.push_back({-1, "*"});
  types.push_back("text");
  for (const auto& c : s.columns) {
    cols.push_back({static_cast<long>(c.table), join_tokens(c.words)});
    cols_sql.push_back({static_cast<long>(c.table), c.name});
    types.push_back(to_string(c.type));
  }
  Json names = Json::array(), names_sql = Json::array();
  for (const auto& t : s.tables) {
    names.push_back(join_tokens(t.words));
    names_sql.push_back(t.name);
  }
  Json pks = Json::array(), fks = Json::array();
  for (auto k : s.primary_keys) pks.push_back(k + 1);
  for (auto [a, b] : s.foreign_keys) fks.push_back({a + 1, b + 1});
  return Json{{"db_id", s.database_id},     {"table_names", names},   {"table_names_original", names_sql},
              {"column_names", cols},       {"column_names_original", cols_sql},
              {"column_types", types},      {"primary_keys", pks},    {"foreign_keys", fks}};
}

/// All schemas in a tables file (a JSON array, or a single object).
inline SchemaMap load_schemas(const std::string& path) {
  const Json j = read_json(path);
  SchemaMap out;
  const auto add = [&](const Json& rec, const std::string& where) {
    Schema s = schema_from_json(rec, where);
    const std::string id = s.database_id;
    if (!out.emplace(id, std::move(s)).second) throw DataError(where + ": duplicate db_id '" + id + "'");
  };
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) add(j[i], path + "[" + std::to_string(i) + "]");
  } else {
    add(j, path);
  }
  return out;
}

/// The single schema in `path`; with several, the first listed.
inline Schema load_schema(const std::string& path) {
  const Json j = read_json(path);
  if (j.is_array()) {
    if (j.empty()) throw DataError(path + ": no schema records");
    return schema_from_json(j[0], path + "[0]");
  }
  return schema_from_json(j, path);
}

inline const Schema& schema_for(const SchemaMap& schemas, const std::string& db_id) {
  auto it = schemas.find(db_id);
  if (it == schemas.end()) throw DataError("unknown database_id '" + db_id + "'");
  return it->second;
}

/// Interactions in a SParC-style file. Every gold query must parse against
/// its database; failures name the record and turn.
inline std::vector<Interaction> interactions_from_json(const Json& j, const SchemaMap& schemas,
                                                       const std::string& source) {
  using data_detail::field;
  if (!j.is_array()) throw DataError(source + ": expected a JSON array of interactions");
  std::vector<Interaction> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = source + "[" + std::to_string(i) + "]";
    Interaction inter;
    inter.database_id = field<std::string>(j[i], "database_id", where);
    if (!schemas.count(inter.database_id))
      throw DataError(where + ": unknown database_id '" + inter.database_id + "'");
    const Schema& schema = schemas.at(inter.database_id);
    const Json turns = field<Json>(j[i], "interaction", where);
    if (!turns.is_array() || turns.empty()) throw DataError(where + ": interaction has no turns");
    for (std::size_t t = 0; t < turns.size(); ++t) {
      const std::string at = where + " turn " + std::to_string(t + 1);
      Turn turn;
      turn.utterance = field<std::string>(turns[t], "utterance", at);
      turn.question = tokenize(turn.utterance);
      if (turn.question.empty()) throw DataError(at + ": empty utterance");
      turn.gold_sql = field<std::string>(turns[t], "query", at);
      try {
        parse_sql(turn.gold_sql, schema);
      } catch (const SqlError& e) {
        throw DataError(at + ": " + e.what());
      }
      if (turns[t].contains("self_contained") && !turns[t].at("self_contained").is_null()) {
        auto toks = tokenize(field<std::string>(turns[t], "self_contained", at));
        if (!toks.empty()) turn.self_contained = std::move(toks);
      }
      if (turns[t].contains("provenance")) turn.provenance = field<std::string>(turns[t], "provenance", at);
      inter.turns.push_back(std::move(turn));
    }
    out.push_back(std::move(inter));
  }
  return out;
}

inline std::vector<Interaction> load_interactions(const std::string& path, const SchemaMap& schemas) {
  return interactions_from_json(read_json(path), schemas, path);
}

inline Json interactions_to_json(const std::vector<Interaction>& data) {
  Json out = Json::array();
  for (const auto& inter : data) {
    Json turns = Json::array();
    for (const auto& t : inter.turns) {
      Json jt{{"utterance", t.utterance}, {"query", t.gold_sql}};
      if (t.self_contained) jt["self_contained"] = join_tokens(*t.self_contained);
      if (!t.provenance.empty()) jt["provenance"] = t.provenance;
      turns.push_back(std::move(jt));
    }
    out.push_back(Json{{"database_id", inter.database_id}, {"interaction", std::move(turns)}});
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline std::size_t total_turns(const std::vector<Interaction>& data) {
  std::size_t n = 0;
  for (const auto& i : data) n += i.turns.size();
  return n;
}

}  // namespace cqrsql
