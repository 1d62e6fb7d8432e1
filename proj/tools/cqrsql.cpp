// Command-line front end: training, evaluation, reformulation self-training
// and fixture utilities.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "cqrsql/core/grad_check.hpp"
#include "cqrsql/cqr/selftrain.hpp"
#include "cqrsql/eval/evaluate.hpp"
#include "cqrsql/training/train.hpp"

using namespace cqrsql;

namespace {

/// Unusable option values discovered after parsing; exits 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

ModelConfig model_preset(const std::string& name) {
  if (name == "tiny") return ModelConfig::tiny();
  if (name == "base") return ModelConfig();
  throw UsageError("unknown model size '" + name + "' (expected tiny or base)");
}

CqrConfig cqr_preset(const std::string& name) {
  if (name == "tiny") return CqrConfig::tiny();
  if (name == "base") return CqrConfig();
  throw UsageError("unknown model size '" + name + "' (expected tiny or base)");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

/// Writes to `path`, or stdout when it is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    auto out = open_out(path);
    out << text;
  }
}

struct TrainArgs {
  std::string data, schema, dev, out, log, size = "tiny";
  double lambda1 = 0.1, lambda2 = 3.0, lr = 1e-3;
  std::size_t epochs = 10, batch = 1, beam = 1, train_eval_every = 0;
  int variant = 1;
  bool no_dropout = false, stop_at_full = false, single_turn = false;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  const SchemaMap schemas = load_schemas(a.schema);
  auto data = load_interactions(a.data, schemas);
  std::vector<Interaction> dev;
  if (!a.dev.empty()) dev = load_interactions(a.dev, schemas);
  if (a.single_turn) {
    data = single_turn_view(data);
    dev = single_turn_view(dev);
  }
  std::vector<Interaction> all = data;
  all.insert(all.end(), dev.begin(), dev.end());
  ParserModel m = ParserModel::create(build_vocab(all, schemas), Grammar::sql(), model_preset(a.size), a.seed);
  TrainConfig c = TrainConfig::variant(a.single_turn ? 4 : a.variant);
  c.lambda1 = a.lambda1;
  c.lambda2 = a.lambda2;
  c.lr = a.lr;
  c.epochs = a.epochs;
  c.batch_size = a.batch;
  c.beam = a.beam;
  c.seed = a.seed;
  c.dropout = !a.no_dropout;
  c.train_eval_every = a.train_eval_every;
  c.stop_at_full_train_qm = a.stop_at_full;
  auto log = open_out(a.log.empty() ? a.out + ".metrics.jsonl" : a.log);
  train(m, data, schemas, c, dev.empty() ? nullptr : &dev, [&](const EpochMetrics& e) {
    log << e.to_json().dump() << "\n";
    log.flush();
    std::cerr << "epoch " << e.epoch << " total " << e.total << "\n";
  });
  m.save(a.out);
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, schema, out, format = "json";
  std::size_t beam = 5;
};

int run_eval(const EvalArgs& a) {
  if (a.format != "json" && a.format != "text") throw UsageError("--format must be json or text");
  const ParserModel m = ParserModel::load(a.ckpt);
  const SchemaMap schemas = load_schemas(a.schema);
  const EvalReport r = evaluate(m, load_interactions(a.data, schemas), schemas, a.beam);
  emit(a.out, a.format == "json" ? r.to_json().dump(2) + "\n" : r.to_text());
  return 0;
}

int run_predict(const EvalArgs& a) {
  const ParserModel m = ParserModel::load(a.ckpt);
  const SchemaMap schemas = load_schemas(a.schema);
  std::string text;
  for (const auto& turns : predict_dataset(m, load_interactions(a.data, schemas), schemas, a.beam))
    for (const auto& sql : turns) text += sql + "\n";
  emit(a.out, text);
  return 0;
}

struct CqrArgs {
  std::string data, schema, out, prev_ckpt, size = "tiny";
  std::size_t epochs = 200, beam = 5;
  double lr = 3e-3, p_sample = 0.5;
  bool no_dropout = false;
  std::uint64_t seed = 0;
};

int run_cqr_train(const CqrArgs& a) {
  const SchemaMap schemas = load_schemas(a.schema);
  const auto data = load_interactions(a.data, schemas);
  Rewrites labels;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t t = 0; t < data[i].turns.size(); ++t)
      if (data[i].turns[t].self_contained) labels[{i, t}] = *data[i].turns[t].self_contained;
  if (labels.empty()) throw DataError(a.data + ": no turn carries a self-contained question");
  Rewrites sampled;
  if (!a.prev_ckpt.empty()) sampled = cqr_generate_all(CqrModel::load(a.prev_ckpt), data, schemas, a.beam);
  CqrModel m = CqrModel::create(build_vocab(data, schemas), cqr_preset(a.size), a.seed);
  CqrTrainConfig c;
  c.lr = a.lr;
  c.epochs = a.epochs;
  c.p_sample = a.p_sample;
  c.seed = a.seed;
  c.dropout = !a.no_dropout;
  for (const auto& e : cqr_train(m, build_cqr_examples(data, schemas, labels, sampled), c))
    std::cerr << "epoch " << e.epoch << " loss " << e.loss << " token_acc " << e.token_accuracy << "\n";
  m.save(a.out);
  return 0;
}

struct SelfTrainArgs {
  std::string data, schema, annotations, checker, out, cqr_out, log, size = "tiny";
  std::size_t epochs = 150, max_loops = 5, beam = 5;
  double lr = 5e-3, p_sample = 0.5;
  std::uint64_t seed = 0;
};

int run_selftrain(const SelfTrainArgs& a) {
  const SchemaMap schemas = load_schemas(a.schema);
  const auto data = load_interactions(a.data, schemas);
  const auto seed = load_seed(a.annotations, data);
  const ParserModel checker = ParserModel::load(a.checker);
  SelfTrainConfig c;
  c.model = cqr_preset(a.size);
  c.model.dropout = 0;
  c.train.lr = a.lr;
  c.train.epochs = a.epochs;
  c.train.p_sample = a.p_sample;
  c.train.dropout = false;
  c.max_loops = a.max_loops;
  c.generate_beam = c.check_beam = a.beam;
  c.seed = a.seed;
  std::unique_ptr<std::ofstream> log;
  if (!a.log.empty()) log = std::make_unique<std::ofstream>(open_out(a.log));
  const auto r = self_train(seed, data, schemas, checker, c, [&](const LoopStats& s) {
    if (log) *log << s.to_json().dump() << "\n";
    std::cerr << "loop " << s.loop << " accepted " << s.accepted_before << " -> " << s.accepted_after << " churn "
              << s.churn << "\n";
  });
  if (r.hit_loop_cap) std::cerr << "warning: loop cap of " << a.max_loops << " reached before the accepted set settled\n";
  emit(a.out, interactions_to_json(r.merged).dump(1) + "\n");
  if (!a.cqr_out.empty()) r.model.save(a.cqr_out);
  return 0;
}

struct GradCheckArgs {
  std::string data, schema;
  std::size_t example = 1, entries = 2;
  double lambda1 = 0.1, lambda2 = 3.0, tolerance = 1e-4;
  std::uint64_t seed = 0;
};

int run_grad_check(const GradCheckArgs& a) {
  const SchemaMap schemas = load_schemas(a.schema);
  const auto data = load_interactions(a.data, schemas);
  const ParserModel m = ParserModel::create(build_vocab(data, schemas), Grammar::sql(), ModelConfig::tiny(), a.seed);
  TrainConfig c;
  c.lambda1 = a.lambda1;
  c.lambda2 = a.lambda2;
  const auto examples = build_examples(data, schemas, m.grammar, true);
  if (a.example >= examples.size())
    throw UsageError("--example " + std::to_string(a.example) + " is out of range (" +
                     std::to_string(examples.size()) + " examples)");
  const TrainingExample& ex = examples[a.example];
  GradCheckOptions opt;
  opt.tolerance = a.tolerance;
  opt.max_entries_per_param = a.entries;
  opt.seed = a.seed;
  ParamStore params = m.params;
  const auto rep = grad_check([&](Graph& g, const ParamStore& ps) { return example_loss(g, m, ps, ex, c).total; },
                              params, opt);
  std::cout << Json{{"checked", rep.checked},
                    {"max_relative_error", rep.max_relative_error},
                    {"worst_param", rep.worst_param},
                    {"worst_index", rep.worst_index},
                    {"passed", rep.passed}}
                   .dump()
            << "\n";
  return rep.passed ? 0 : 1;
}

int run_roundtrip(const std::string& corpus, const std::string& schema_path) {
  const SchemaMap schemas = load_schemas(schema_path);
  const Grammar g = Grammar::sql();
  std::ifstream in(corpus);
  if (!in) throw DataError("cannot open '" + corpus + "'");
  std::size_t total = 0, failed = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++total;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      ++failed;
      std::cout << "FAIL line " << total << ": expected '<database_id>\\t<sql>'\n";
      continue;
    }
    const std::string db = line.substr(0, tab), sql = line.substr(tab + 1);
    try {
      const Schema& s = schema_for(schemas, db);
      const std::string back = actions_to_sql(sql_to_actions(sql, s, g), g, s);
      if (normalize_sql(back, s) != normalize_sql(sql, s)) {
        ++failed;
        std::cout << "FAIL " << sql << "\n  got " << back << "\n";
      }
    } catch (const std::exception& e) {
      ++failed;
      std::cout << "FAIL " << sql << "\n  " << e.what() << "\n";
    }
  }
  std::cout << (total - failed) << "/" << total << " queries round-trip\n";
  return failed ? 1 : 0;
}

int run_schema_lint(const std::string& path) {
  const SchemaMap schemas = load_schemas(path);  // validates every record
  for (const auto& [id, s] : schemas)
    std::cout << id << ": " << s.tables.size() << " tables, " << s.columns.size() << " columns, "
              << s.foreign_keys.size() << " foreign keys\n";
  std::cout << "ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-turn text-to-SQL with latent reformulation consistency"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a parser and write a checkpoint plus a JSON-lines metrics log");
  train_cmd->add_option("--data", ta.data, "training interactions")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--schema", ta.schema, "tables file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", ta.dev, "dev interactions scored after every epoch")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ta.out, "checkpoint path")->required();
  train_cmd->add_option("--log", ta.log, "metrics log (default <out>.metrics.jsonl)");
  train_cmd->add_option("--lambda1", ta.lambda1, "grounding loss weight")->capture_default_str();
  train_cmd->add_option("--lambda2", ta.lambda2, "consistency loss weight")->capture_default_str();
  train_cmd->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", ta.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", ta.batch)->capture_default_str();
  train_cmd->add_option("--beam", ta.beam, "beam for dev/train accuracy")->capture_default_str();
  train_cmd->add_option("--variant", ta.variant, "ablation preset 1-5")->check(CLI::Range(1, 5))->capture_default_str();
  train_cmd->add_option("--model", ta.size, "tiny or base")->capture_default_str();
  train_cmd->add_option("--train-eval-every", ta.train_eval_every, "score the training set every N epochs")
      ->capture_default_str();
  train_cmd->add_flag("--stop-at-full-train-qm", ta.stop_at_full);
  train_cmd->add_flag("--no-dropout", ta.no_dropout);
  train_cmd->add_flag("--single-turn", ta.single_turn,
                      "fit standalone (self-contained question, SQL) pairs; produces a rewrite checker");
  train_cmd->add_option("--seed", ta.seed)->capture_default_str();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint; prints the report as JSON or text");
  EvalArgs pa;
  auto* predict_cmd = app.add_subcommand("predict", "one predicted SQL per line, in interaction/turn order");
  for (auto [cmd, args] : {std::pair{eval_cmd, &ea}, std::pair{predict_cmd, &pa}}) {
    cmd->add_option("--ckpt", args->ckpt, "parser checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", args->data, "interactions")->required()->check(CLI::ExistingFile);
    cmd->add_option("--schema", args->schema, "tables file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--beam", args->beam)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--out", args->out, "output file (default stdout)");
  }
  eval_cmd->add_option("--format", ea.format, "json or text")->capture_default_str();
  std::uint64_t unused_seed = 0;
  eval_cmd->add_option("--seed", unused_seed, "accepted for uniformity; evaluation is deterministic");
  predict_cmd->add_option("--seed", unused_seed, "accepted for uniformity; prediction is deterministic");

  CqrArgs ca;
  auto* cqr_cmd = app.add_subcommand("cqr-train", "train a reformulation model on turns that carry self_contained");
  cqr_cmd->add_option("--data", ca.data)->required()->check(CLI::ExistingFile);
  cqr_cmd->add_option("--schema", ca.schema)->required()->check(CLI::ExistingFile);
  cqr_cmd->add_option("--out", ca.out, "checkpoint path")->required();
  cqr_cmd->add_option("--prev-ckpt", ca.prev_ckpt, "earlier reformulation model used to sample previous rewrites")
      ->check(CLI::ExistingFile);
  cqr_cmd->add_option("--epochs", ca.epochs)->capture_default_str();
  cqr_cmd->add_option("--lr", ca.lr)->capture_default_str();
  cqr_cmd->add_option("--p-sample", ca.p_sample)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cqr_cmd->add_option("--beam", ca.beam)->check(CLI::PositiveNumber)->capture_default_str();
  cqr_cmd->add_option("--model", ca.size, "tiny or base")->capture_default_str();
  cqr_cmd->add_flag("--no-dropout", ca.no_dropout);
  cqr_cmd->add_option("--seed", ca.seed)->capture_default_str();

  SelfTrainArgs sa;
  auto* st_cmd = app.add_subcommand("cqr-selftrain", "grow the rewrite set from seed annotations and merge");
  st_cmd->add_option("--data", sa.data)->required()->check(CLI::ExistingFile);
  st_cmd->add_option("--schema", sa.schema)->required()->check(CLI::ExistingFile);
  st_cmd->add_option("--annotations", sa.annotations, "seed rewrites")->required()->check(CLI::ExistingFile);
  st_cmd->add_option("--checker", sa.checker, "single-turn parser checkpoint")->required()->check(CLI::ExistingFile);
  st_cmd->add_option("--out", sa.out, "merged interactions (default stdout)");
  st_cmd->add_option("--cqr-out", sa.cqr_out, "final reformulation checkpoint");
  st_cmd->add_option("--log", sa.log, "per-loop statistics, JSON lines");
  st_cmd->add_option("--epochs", sa.epochs, "reformulation epochs per loop")->capture_default_str();
  st_cmd->add_option("--lr", sa.lr)->capture_default_str();
  st_cmd->add_option("--p-sample", sa.p_sample)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  st_cmd->add_option("--max-loops", sa.max_loops)->check(CLI::PositiveNumber)->capture_default_str();
  st_cmd->add_option("--beam", sa.beam, "generation and check beam")->check(CLI::PositiveNumber)->capture_default_str();
  st_cmd->add_option("--model", sa.size, "tiny or base")->capture_default_str();
  st_cmd->add_option("--seed", sa.seed)->capture_default_str();

  GradCheckArgs ga;
  auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference check of the full training loss");
  gc_cmd->add_option("--data", ga.data)->required()->check(CLI::ExistingFile);
  gc_cmd->add_option("--schema", ga.schema)->required()->check(CLI::ExistingFile);
  gc_cmd->add_option("--example", ga.example, "training turn index")->capture_default_str();
  gc_cmd->add_option("--entries", ga.entries, "entries per tensor (0: all)")->capture_default_str();
  gc_cmd->add_option("--lambda1", ga.lambda1)->capture_default_str();
  gc_cmd->add_option("--lambda2", ga.lambda2)->capture_default_str();
  gc_cmd->add_option("--tolerance", ga.tolerance)->capture_default_str();
  gc_cmd->add_option("--seed", ga.seed)->capture_default_str();

  std::string corpus, rt_schema;
  auto* rt_cmd = app.add_subcommand("roundtrip", "SQL -> actions -> SQL over a '<db>\\t<sql>' corpus");
  rt_cmd->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  rt_cmd->add_option("--schema", rt_schema)->required()->check(CLI::ExistingFile);
  rt_cmd->add_option("--seed", unused_seed, "accepted for uniformity");

  std::string lint_schema;
  auto* lint_cmd = app.add_subcommand("schema-lint", "validate a tables file");
  lint_cmd->add_option("--schema", lint_schema)->required();
  lint_cmd->add_option("--seed", unused_seed, "accepted for uniformity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return run_train(ta);
    if (*eval_cmd) return run_eval(ea);
    if (*predict_cmd) return run_predict(pa);
    if (*cqr_cmd) return run_cqr_train(ca);
    if (*st_cmd) return run_selftrain(sa);
    if (*gc_cmd) return run_grad_check(ga);
    if (*rt_cmd) return run_roundtrip(corpus, rt_schema);
    if (*lint_cmd) return run_schema_lint(lint_schema);
  } catch (const std::invalid_argument& e) {  // configuration and usage errors
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
