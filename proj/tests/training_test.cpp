#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "cqrsql/core/grad_check.hpp"
#include "cqrsql/training/train.hpp"

using namespace cqrsql;

namespace {

std::string data_path(const std::string& name) { return std::string(CQRSQL_DATA_DIR) + "/" + name; }

const SchemaMap& schemas() {
  static const SchemaMap s = load_schemas(data_path("tables.json"));
  return s;
}

const std::vector<Interaction>& train_data() {
  static const std::vector<Interaction> d = load_interactions(data_path("train.json"), schemas());
  return d;
}

/// Direct summation oracle for KL(p||q) + KL(q||p).
double sym_kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]) + q[i] * std::log(q[i] / p[i]);
  return s;
}

Var col(Graph& g, std::vector<double> v) {
  Tensor t = Tensor::matrix(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
  return g.constant(t);
}

Var one(Graph& g) { return g.constant(Tensor::scalar(1.0)); }

/// Hand-built step over `width` rule actions with the given masked probabilities.
StepDistributions rule_step(Graph& g, const std::vector<double>& probs) {
  StepDistributions d;
  d.kind = Symbol::Kind::Nonterminal;
  d.mask.kind = Symbol::Kind::Nonterminal;
  std::vector<double> logits(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    d.mask.legal.push_back(probs[i] > 0);
    logits[i] = probs[i] > 0 ? std::log(probs[i]) : 0.0;
  }
  d.logits = g.constant(Tensor::row(logits));
  d.dist = masked_softmax_rows(d.logits, d.mask.legal);
  return d;
}

StepDistributions value_step(Graph& g) {
  StepDistributions d;
  d.kind = Symbol::Kind::Value;
  d.mask.kind = Symbol::Kind::Value;
  d.mask.legal = {true};
  d.dist = g.constant(Tensor::row({1.0}));
  return d;
}

ParserModel tiny_model(std::uint64_t seed = 3) {
  return ParserModel::create(build_vocab(train_data(), schemas()), Grammar::sql(), ModelConfig::tiny(), seed);
}

/// First interaction with two turns, as a one-interaction dataset.
std::vector<Interaction> two_turn_fixture() {
  for (const auto& inter : train_data())
    if (inter.turns.size() == 2) return {inter};
  throw std::runtime_error("fixture has no two-turn interaction");
}

}  // namespace

// ---------------------------------------------------------------------------
// Grounding losses

TEST(BowLoss, EqualLogitsOverTwoItemsIsLnTwo) {
  Graph g;
  Var w = g.constant(Tensor::matrix(1, 1));  // zero weights: equal logits
  EXPECT_NEAR(bow_loss(one(g), col(g, {0.3, -0.7}), {1}, w).item(), std::log(2.0), 1e-12);
}

TEST(BowLoss, HandSetLogits) {
  Graph g;
  const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 2));
  EXPECT_NEAR(bow_loss(one(g), col(g, {1, 0, 0}), {0}, one(g)).item(), want, 1e-12);
}

TEST(BowLoss, AllItemsGoldUnderUniformScores) {
  Graph g;
  for (std::size_t n : {1, 3, 7}) {
    std::set<std::size_t> all;
    for (std::size_t i = 0; i < n; ++i) all.insert(i);
    EXPECT_NEAR(bow_loss(one(g), col(g, std::vector<double>(n, 0.4)), all, one(g)).item(),
                static_cast<double>(n) * std::log(static_cast<double>(n)), 1e-12);
  }
}

TEST(BowLoss, EmptyGoldContributesZeroAndOutOfRangeThrows) {
  Graph g;
  EXPECT_EQ(bow_loss(one(g), col(g, {1, 2}), {}, one(g)).item(), 0.0);
  EXPECT_THROW(bow_loss(one(g), col(g, {1, 2}), {2}, one(g)), LossError);
}

TEST(SgConsistency, MatchesSummationOracle) {
  Graph g;
  Var a = sg_consistency(one(g), col(g, {std::log(0.8), std::log(0.2)}), one(g), col(g, {0, 0}), one(g));
  EXPECT_NEAR(a.item(), sym_kl({0.8, 0.2}, {0.5, 0.5}), 1e-12);
  Var b = sg_consistency(one(g), col(g, {0, 0}), one(g), col(g, {std::log(0.8), std::log(0.2)}), one(g));
  EXPECT_DOUBLE_EQ(a.item(), b.item());
  EXPECT_EQ(sg_consistency(one(g), col(g, {0.2, 1.5}), one(g), col(g, {0.2, 1.5}), one(g)).item(), 0.0);
  EXPECT_THROW(sg_consistency(one(g), col(g, {0, 0}), one(g), col(g, {0, 0, 0}), one(g)), LossError);
}

// ---------------------------------------------------------------------------
// Parsing losses

TEST(SpLoss, UniformPredictorOverBothInputs) {
  Graph g;
  for (std::size_t k : {2, 3, 5}) {
    for (std::size_t T : {1, 4}) {
      std::vector<double> probs(k + 2, 1.0 / static_cast<double>(k));
      probs[0] = probs[k + 1] = 0;  // two masked actions
      std::vector<StepDistributions> trace;
      ActionSequence gold;
      for (std::size_t t = 0; t < T; ++t) {
        trace.push_back(rule_step(g, probs));
        gold.push_back(Action::rule(1 + t % k));
      }
      const double v = sp_loss(trace, &trace, gold).item();
      EXPECT_NEAR(v, 2.0 * static_cast<double>(T) * std::log(static_cast<double>(k)), 1e-9);
      // doubling the sequence doubles the loss
      std::vector<StepDistributions> twice = trace;
      twice.insert(twice.end(), trace.begin(), trace.end());
      ActionSequence gold2 = gold;
      gold2.insert(gold2.end(), gold.begin(), gold.end());
      EXPECT_NEAR(sp_loss(twice, &twice, gold2).item(), 2 * v, 1e-9);
    }
  }
}

TEST(SpLoss, PerfectPredictorIsZeroAndMismatchThrows) {
  Graph g;
  std::vector<StepDistributions> trace = {rule_step(g, {0, 1, 0}), value_step(g)};
  const ActionSequence gold = {Action::rule(1), Action::value()};
  EXPECT_NEAR(sp_loss(trace, &trace, gold).item(), 0.0, 1e-12);
  EXPECT_THROW(sp_loss(trace, &trace, {Action::rule(1)}), LossError);
  EXPECT_THROW(sp_loss(trace, nullptr, {Action::rule(0), Action::value()}), LossError);
}

TEST(SpConsistency, SingleRuleStepMatchesOracle) {
  Graph g;
  std::vector<StepDistributions> a = {rule_step(g, {0.8, 0.2})}, b = {rule_step(g, {0.5, 0.5})};
  EXPECT_NEAR(sp_consistency(a, b).item(), sym_kl({0.8, 0.2}, {0.5, 0.5}), 1e-9);
  EXPECT_DOUBLE_EQ(sp_consistency(a, b).item(), sp_consistency(b, a).item());
  EXPECT_EQ(sp_consistency(a, a).item(), 0.0);
}

TEST(SpConsistency, AveragesOverAllStepsIncludingValueSteps) {
  Graph g;
  std::vector<StepDistributions> a = {rule_step(g, {0.8, 0.2}), value_step(g), rule_step(g, {0.1, 0.6, 0.3})};
  std::vector<StepDistributions> b = {rule_step(g, {0.5, 0.5}), value_step(g), rule_step(g, {0.3, 0.3, 0.4})};
  const double want = (sym_kl({0.8, 0.2}, {0.5, 0.5}) + sym_kl({0.1, 0.6, 0.3}, {0.3, 0.3, 0.4})) / 3.0;
  EXPECT_NEAR(sp_consistency(a, b).item(), want, 1e-9);
  std::vector<StepDistributions> shorter(b.begin(), b.end() - 1);
  EXPECT_THROW(sp_consistency(a, shorter), LossError);
}

// ---------------------------------------------------------------------------
// Total loss

namespace {

struct FixtureLoss {
  ParserModel model = tiny_model();
  std::vector<TrainingExample> examples = build_examples(two_turn_fixture(), schemas(), model.grammar, true);

  LossBreakdown measure(std::size_t k, double l1, double l2, LossFlags flags = {}) const {
    TrainConfig c;
    c.lambda1 = l1;
    c.lambda2 = l2;
    c.flags = flags;
    return measure_example(model, examples.at(k), c);
  }
};

}  // namespace

TEST(TotalLoss, CompositionIsExactAndComponentsNonNegative) {
  FixtureLoss f;
  for (std::size_t k = 0; k < f.examples.size(); ++k)
    for (auto [l1, l2] : std::vector<std::pair<double, double>>{{0.1, 3.0}, {0.1, 1.0}, {0, 0}, {2.5, 0.3}}) {
      const LossBreakdown b = f.measure(k, l1, l2);
      EXPECT_EQ(b.total, b.sp + b.lambda1 * b.sg_bow + b.lambda2 * (b.sp_kl + b.sg_kl));
      EXPECT_GE(b.sp, 0.0);
      EXPECT_GE(b.sg_bow, 0.0);
      EXPECT_GE(b.sp_kl, 0.0);
      EXPECT_GE(b.sg_kl, 0.0);
      if (l1 == 0 && l2 == 0) {
        EXPECT_EQ(b.total, b.sp);
      }
    }
}

TEST(TotalLoss, LinearInLambdaTwo) {
  FixtureLoss f;
  const LossBreakdown a = f.measure(1, 0.1, 3.0), b = f.measure(1, 0.1, 6.0);
  EXPECT_NEAR(b.total - a.total, (a.sp_kl + a.sg_kl) * 3.0, 1e-12 * std::max(1.0, b.total));
  EXPECT_GT(a.sp_kl + a.sg_kl, 0.0);
}

TEST(TotalLoss, IdenticalInputsHaveZeroConsistency) {
  FixtureLoss f;
  // the first turn's self-contained rewrite equals its question
  const TrainingExample& ex = f.examples.at(0);
  ASSERT_EQ(ex.ctx.in.words, ex.self->in.words);
  const LossBreakdown b = f.measure(0, 0.1, 3.0);
  EXPECT_EQ(b.sp_kl, 0.0);
  EXPECT_EQ(b.sg_kl, 0.0);
}

TEST(TotalLoss, DisabledTermsCarryNoGradient) {
  FixtureLoss f;
  TrainConfig c = TrainConfig::variant(4);
  c.lambda1 = 0;
  c.lambda2 = 0;
  const auto examples = build_examples(two_turn_fixture(), schemas(), f.model.grammar, c.dual_input);
  Graph g;
  const LossTerms t = example_loss(g, f.model, f.model.params, examples.at(1), c);
  EXPECT_EQ(t.total.item(), t.sp.item());
  EXPECT_EQ(t.sp_kl.item(), 0.0);
  EXPECT_EQ(t.sg_kl.item(), 0.0);
  g.backward(t.total);
  const GradMap grads = g.param_grads();
  EXPECT_EQ(grads.count("sg.w"), 1u);
  for (Real v : grads.at("sg.w").values()) EXPECT_EQ(v, 0.0);
  EXPECT_FALSE(examples.at(1).self.has_value());
}

TEST(TotalLoss, GradientOfTheFullLossMatchesFiniteDifferences) {
  FixtureLoss f;
  TrainConfig c;
  c.lambda1 = 0.1;
  c.lambda2 = 3.0;
  const TrainingExample& ex = f.examples.at(1);
  const LossFn loss = [&](Graph& g, const ParamStore& ps) { return example_loss(g, f.model, ps, ex, c).total; };
  GradCheckOptions opt;
  opt.tolerance = 1e-4;
  opt.max_entries_per_param = 2;
  opt.seed = 17;
  ParamStore params = f.model.params;
  const auto report = grad_check(loss, params, opt);
  EXPECT_TRUE(report.passed) << report.worst_param << "[" << report.worst_index << "] rel err "
                             << report.max_relative_error;
}

// ---------------------------------------------------------------------------
// Training loop

TEST(Train, ZeroLearningRateLeavesParametersBitExact) {
  ParserModel m = tiny_model();
  const ParamStore before = m.params;
  TrainConfig c;
  c.lr = 0;
  c.epochs = 1;
  const auto data = two_turn_fixture();
  const auto metrics = train(m, data, schemas(), c);
  ASSERT_EQ(metrics.size(), 1u);
  EXPECT_TRUE(m.params == before);
}

TEST(Train, SameSeedIsBitReproducibleAndMetricsHaveTheLogKeys) {
  const auto data = two_turn_fixture();
  TrainConfig c;
  c.lr = 1e-3;
  c.epochs = 2;
  c.seed = 5;
  c.batch_size = 2;
  ParserModel a = tiny_model(), b = tiny_model();
  const auto ma = train(a, data, schemas(), c, &data);
  const auto mb = train(b, data, schemas(), c, &data);
  EXPECT_TRUE(a.params == b.params);
  ASSERT_EQ(ma.size(), 2u);
  for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_EQ(ma[i].to_json().dump(), mb[i].to_json().dump());
  const Json j = ma[0].to_json();
  for (const char* key : {"epoch", "sp", "sg_bow", "sp_kl", "sg_kl", "total", "dev_qm", "dev_im"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j["dev_qm"].is_number());
}

TEST(Train, LossDecreasesOnASmallFixture) {
  const auto data = two_turn_fixture();
  TrainConfig c;
  c.lr = 3e-3;
  c.epochs = 15;
  c.seed = 1;
  c.dropout = false;
  ParserModel m = tiny_model();
  const auto metrics = train(m, data, schemas(), c);
  EXPECT_LT(metrics.back().sp, 0.5 * metrics.front().sp);
}

TEST(Train, ConfigValidationAndVariants) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda2 = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(TrainConfig::variant(9), ConfigError);
  EXPECT_FALSE(TrainConfig::variant(2).flags.bow);
  EXPECT_FALSE(TrainConfig::variant(3).flags.sp_kl);
  EXPECT_TRUE(TrainConfig::variant(3).flags.sg_kl);
  EXPECT_FALSE(TrainConfig::variant(4).dual_input);
  EXPECT_TRUE(TrainConfig::variant(5).flags.bow);
}

TEST(ParserModel, CheckpointRoundTripIsBitExact) {
  const ParserModel m = tiny_model(8);
  const std::string path = (std::filesystem::temp_directory_path() / "cqrsql_parser.ckpt").string();
  m.save(path);
  const ParserModel r = ParserModel::load(path);
  EXPECT_TRUE(r.params == m.params);
  EXPECT_EQ(r.vocab, m.vocab);
  EXPECT_EQ(r.grammar.serialize(), m.grammar.serialize());
  EXPECT_EQ(r.cfg.to_json(), m.cfg.to_json());
  EXPECT_EQ(encode_checkpoint(r.params, r.config_json()), encode_checkpoint(m.params, m.config_json()));
  std::filesystem::remove(path);
}
