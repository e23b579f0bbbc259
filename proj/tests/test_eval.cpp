#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ompforge/eval.hpp"
#include "ompforge/ngram.hpp"
#include "support.hpp"

using namespace ompforge;
using ompforge::testing::FunctionBackend;
using ompforge::testing::sample;

namespace {

// Assigns the same log-probability to every lexical token plus </s>.
class ConstantScorer final : public Backend {
 public:
  explicit ConstantScorer(double p) : logp_(std::log(p)) {}
  CompletionResult complete(const CompletionRequest&) override { return {}; }
  std::string name() const override { return "constant"; }
  bool supports_logprobs() const override { return true; }
  std::vector<TokenLogprob> score_text(std::string_view text) const override {
    std::vector<TokenLogprob> out;
    for (auto& t : lm_tokens(text)) out.push_back({t, logp_});
    out.push_back({std::string(kEosToken), logp_});
    return out;
  }

 private:
  double logp_;
};

std::shared_ptr<NGramModel> train(const std::vector<TrainingText>& texts, NGramOptions o) {
  return std::make_shared<NGramModel>(NGramModel::train(texts, o));
}

const std::vector<std::string> kForms = {
    "#pragma omp parallel for", "#pragma omp simd", "#pragma omp parallel for private(t)",
    "#pragma omp for schedule(static)", "#pragma omp parallel for reduction(+:s)"};

// Distinct identifiers per sample keep every scope ending unique.
std::vector<CorpusSample> memo_corpus(std::size_t n) {
  std::vector<CorpusSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto k = std::to_string(i);
    out.push_back(sample("m" + k, "for (i = 0; i < n; i++)\n  a[i] = f(i) * w" + k + ";",
                         kForms[i % kForms.size()]));
  }
  return out;
}

std::vector<TrainingText> texts_of(const std::vector<CorpusSample>& s) {
  std::vector<TrainingText> out;
  for (const auto& x : s) out.push_back(reposition(x));
  return out;
}

// Looks the completion up by scope.
FunctionBackend by_scope(std::map<std::string, std::string> table) {
  return FunctionBackend([table = std::move(table)](const std::string& prompt) {
    return table.at(ompforge::testing::prompt_scope(prompt));
  });
}

}  // namespace

TEST(Perplexity, UniformOverLargeVocabulary) {
  const double v = 49152.0;
  std::vector<TrainingText> texts = {{"a b c d"}, {"x = y + 1;"}};
  auto r = perplexity(ConstantScorer(1.0 / v), texts);
  EXPECT_NEAR(r.perplexity / v, 1.0, 1e-6);
  EXPECT_EQ(r.tokens, 5u + 7u);

  // Same value through an order-1 MLE model over 49151 distinct tokens plus </s>.
  std::string text;
  for (int i = 0; i < 49151; ++i) text += "w" + std::to_string(i) + " ";
  NGramBackend ng(train({{text}}, {1, 0.0, 0.4}));
  auto r2 = perplexity(ng, {{text}});
  EXPECT_NEAR(r2.perplexity / v, 1.0, 1e-6);
  EXPECT_EQ(r2.tokens, 49152u);
}

TEST(Perplexity, PerfectModelIsOne) {
  NGramBackend ng(train({{"a b c"}}, {4, 0.0, 0.4}));
  auto r = perplexity(ng, {{"a b c"}});
  EXPECT_EQ(r.perplexity, 1.0);
  EXPECT_EQ(r.tokens, 4u);
}

TEST(Perplexity, QuarterProbabilityIsFour) {
  EXPECT_NEAR(perplexity(ConstantScorer(0.25), {{"p q r"}}).perplexity, 4.0, 1e-9);
  NGramBackend ng(train({{"a b c"}}, {1, 0.0, 0.4}));
  EXPECT_NEAR(perplexity(ng, {{"a b c"}}).perplexity, 4.0, 1e-9);
}

TEST(Perplexity, TwoTokenCase) {
  PerplexityAccumulator acc;
  acc.add(std::log(0.5));
  acc.add(std::log(0.125));
  EXPECT_NEAR(acc.value(), 4.0, 1e-9);
  EXPECT_EQ(acc.tokens, 2u);
}

TEST(Perplexity, RequiresLogprobs) {
  ScriptedBackend b;
  try {
    perplexity(b, {{"a"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_logprob_support);
    EXPECT_EQ(e.kind(), "NoLogprobSupport");
  }
}

TEST(Perplexity, EmptyInput) {
  EXPECT_THROW(perplexity(ConstantScorer(0.5), {}), Error);
}

TEST(Perplexity, OrderAndShardingInvariant) {
  auto corpus = memo_corpus(30);
  auto texts = texts_of(corpus);
  NGramBackend ng(train(texts_of(memo_corpus(10)), {4, 0.01, 0.4}));
  auto base = perplexity(ng, texts, 1);
  EXPECT_EQ(perplexity(ng, texts, 4).perplexity, base.perplexity);
  std::mt19937_64 rng(3);
  for (int round = 0; round < 5; ++round) {
    std::shuffle(texts.begin(), texts.end(), rng);
    auto r = perplexity(ng, texts, 1 + round);
    EXPECT_NEAR(r.perplexity / base.perplexity, 1.0, 1e-12);
    EXPECT_EQ(r.tokens, base.tokens);
  }
}

TEST(EvalGeneration, MemorizedNGram) {
  auto corpus = memo_corpus(20);
  NGramBackend ng(train(texts_of(corpus), {8, 0.01, 0.4}));
  auto ev = eval_generation(ng, corpus, GenerationMode::basic, {}, 15);
  ASSERT_TRUE(ev.report.overall.has_value());
  EXPECT_GE(ev.report.overall->counts.accuracy(), 0.95);
  EXPECT_EQ(ev.report.overall->counts.n(), 20u);
  EXPECT_EQ(ev.report.rows.size(), kForms.size());
}

TEST(EvalGeneration, TopKRows) {
  auto corpus = memo_corpus(20);
  FunctionBackend b([](const std::string&) { return std::string(" simd\n"); });
  auto ev = eval_generation(b, corpus, GenerationMode::basic, {}, 3);
  ASSERT_EQ(ev.report.rows.size(), 3u);
  for (const auto& r : ev.report.rows) EXPECT_EQ(r.counts.n(), 4u);
  EXPECT_DOUBLE_EQ(ev.report.overall->counts.accuracy(), 0.2);
}

TEST(EvalGeneration, EmptyOutputsScoreZero) {
  auto corpus = memo_corpus(10);
  FunctionBackend b([](const std::string&) { return std::string("\n"); });
  auto ev = eval_generation(b, corpus, GenerationMode::basic);
  EXPECT_EQ(ev.report.overall->counts.tp, 0u);
  EXPECT_EQ(ev.report.overall->counts.accuracy(), 0.0);
}

TEST(EvalGeneration, ReorderedItemsAreWrong) {
  std::vector<CorpusSample> test = {sample("a", "x();", "#pragma omp parallel for")};
  FunctionBackend b([](const std::string&) { return std::string(" for parallel\n"); });
  EXPECT_EQ(eval_generation(b, test, GenerationMode::basic).report.overall->counts.tp, 0u);
  FunctionBackend c([](const std::string&) { return std::string("  parallel   for \n"); });
  EXPECT_EQ(eval_generation(c, test, GenerationMode::basic).report.overall->counts.tp, 1u);
}

TEST(EvalGeneration, FailuresCountAsMisses) {
  std::vector<CorpusSample> test = {sample("a", "x();", "#pragma omp simd"),
                                    sample("b", "y();", "#pragma omp simd")};
  FunctionBackend b([](const std::string& p) -> std::string {
    if (ompforge::testing::prompt_scope(p) == "y();") throw Error(Errc::backend_unavailable, "x");
    return " simd\n";
  });
  auto ev = eval_generation(b, test, GenerationMode::basic);
  EXPECT_EQ(ev.report.overall->counts.tp, 1u);
  EXPECT_EQ(ev.report.overall->counts.fn, 1u);
  EXPECT_EQ(ev.report.to_json()["failed_generations"], 1);
}

TEST(EvalGeneration, JobsAndRepeatsGiveIdenticalReports) {
  auto corpus = memo_corpus(25);
  NGramBackend ng(train(texts_of(memo_corpus(15)), {4, 0.01, 0.4}));
  auto a = eval_generation(ng, corpus, GenerationMode::chain, {}, 15, 1).report.to_json().dump();
  auto b = eval_generation(ng, corpus, GenerationMode::chain, {}, 15, 4).report.to_json().dump();
  auto c = eval_generation(ng, corpus, GenerationMode::chain, {}, 15, 1).report.to_json().dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(RequireDisjoint, Rejects) {
  std::vector<CorpusSample> test = {sample("a", "x();", "#pragma omp simd")};
  EXPECT_NO_THROW(require_disjoint(test, {"b"}));
  EXPECT_THROW(require_disjoint(test, {"a"}), Error);
}

TEST(ChainVsBasic, RecoveryFixture) {
  // Stage-wise answers differ from the one-shot answer.
  FunctionBackend b([](const std::string& prompt) -> std::string {
    auto tail = ompforge::testing::pragma_tail(prompt);
    if (tail.empty()) return " for schedule(dynamic)\n";
    if (tail == " for") return " schedule(static)\n";
    if (tail == " for schedule") return "(static)\n";
    return "\n";
  });
  std::vector<CorpusSample> test = {sample("a", "x();", "#pragma omp for schedule(static)"),
                                    sample("b", "y();", "#pragma omp for schedule(static)")};
  auto cmp = eval_chain_vs_basic(b, test, default_chain_filters());
  ASSERT_EQ(cmp.rows.size(), 4u);
  EXPECT_EQ(cmp.rows[0].label, "for schedule");
  EXPECT_EQ(cmp.rows[0].n, 2u);
  EXPECT_EQ(cmp.rows[0].basic_accuracy(), 0.0);
  EXPECT_EQ(cmp.rows[0].chain_accuracy(), 1.0);
  EXPECT_EQ(cmp.overall.chain_correct, 2u);
  EXPECT_EQ(cmp.warnings.size(), 3u);
  EXPECT_NE(cmp.to_table().find("Chain"), std::string::npos);
  EXPECT_EQ(cmp.to_json()["rows"].size(), 4u);
}

TEST(ChainVsBasic, BasicRunsBeforeChain) {
  std::vector<std::string> order;
  std::mutex mu;
  FunctionBackend b(
      [&](const std::string& prompt) {
        std::lock_guard lock(mu);
        order.push_back(ompforge::testing::pragma_tail(prompt));
        return std::string("\n");
      },
      false);
  std::vector<CorpusSample> test = {sample("a", "x();", "#pragma omp simd"),
                                    sample("b", "y();", "#pragma omp simd")};
  eval_chain_vs_basic(b, test, {"simd"});
  // 2 basic calls, then 2 x (stage + final).
  ASSERT_EQ(order.size(), 6u);
  EXPECT_EQ(b.calls(), 6u);
}

TEST(ChainVsBasic, FilterSubsets) {
  std::vector<CorpusSample> test = {
      sample("a", "x();", "#pragma omp target teams distribute parallel for collapse(2)"),
      sample("b", "y();", "#pragma omp for schedule(dynamic)"),
      sample("c", "z();", "#pragma omp parallel for schedule(static)")};
  auto memo = by_scope({{"x();", " target teams distribute parallel for collapse(2)\n"},
                        {"y();", " for schedule(dynamic)\n"},
                        {"z();", " parallel for schedule(static)\n"}});
  auto cmp = eval_chain_vs_basic(memo, test, default_chain_filters());
  EXPECT_EQ(cmp.rows[0].n, 2u);
  EXPECT_EQ(cmp.rows[1].n, 1u);
  EXPECT_EQ(cmp.rows[2].n, 1u);
  EXPECT_EQ(cmp.rows[3].n, 1u);
  EXPECT_TRUE(cmp.warnings.empty());
  EXPECT_EQ(cmp.overall.basic_correct, 3u);
}

TEST(ClauseTask, ConfusionExample) {
  std::vector<CorpusSample> test = {
      sample("tp", "a();", "#pragma omp parallel for private(x)"),
      sample("fn", "b();", "#pragma omp parallel for private(x)"),
      sample("fp", "c();", "#pragma omp parallel for"),
      sample("tn", "d();", "#pragma omp parallel for")};
  auto b = by_scope({{"a();", " parallel for private(x)\n"},
                     {"b();", " parallel for\n"},
                     {"c();", " parallel for private(i)\n"},
                     {"d();", " parallel for\n"}});
  auto ev = eval_clause_task(b, test, "private", 1, GenerationMode::basic);
  const auto& c = ev.report.rows.at(0).counts;
  EXPECT_EQ(c, (Confusion{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(c.precision(), 0.5);
  EXPECT_DOUBLE_EQ(c.recall(), 0.5);
  EXPECT_DOUBLE_EQ(c.f1(), 0.5);
  EXPECT_DOUBLE_EQ(c.accuracy(), 0.5);
}

TEST(ClauseTask, WrongControlDemotedInSubtestTwo) {
  std::vector<CorpusSample> test = {sample("a", "a();", "#pragma omp parallel for private(x)")};
  auto b = by_scope({{"a();", " parallel for private(y)\n"}});
  auto one = eval_clause_task(b, test, "private", 1, GenerationMode::basic);
  auto two = eval_clause_task(b, test, "private", 2, GenerationMode::basic);
  EXPECT_EQ(one.report.rows[0].counts, (Confusion{1, 0, 0, 0}));
  EXPECT_EQ(two.report.rows[0].counts, (Confusion{0, 1, 0, 0}));
}

TEST(ClauseTask, Errors) {
  ScriptedBackend b;
  try {
    eval_clause_task(b, {}, "privat", 1, GenerationMode::basic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "UnknownClause");
  }
  EXPECT_THROW(eval_clause_task(b, {}, "private", 3, GenerationMode::basic), Error);
}

TEST(ClauseTask, SubtestTwoNeverBeatsSubtestOne) {
  const std::vector<std::string> gens = {"", "private(x)", "private(y)", "reduction(+:s)",
                                         "private(x) reduction(*:s)", "simd"};
  std::mt19937_64 rng(11);
  for (int round = 0; round < 50; ++round) {
    std::vector<CorpusSample> test;
    std::map<std::string, std::string> table;
    for (int i = 0; i < 8; ++i) {
      auto scope = "s" + std::to_string(i) + "();";
      test.push_back(sample(scope, scope, "#pragma omp for " + gens[rng() % gens.size()]));
      table[scope] = " for " + gens[rng() % gens.size()] + "\n";
    }
    auto b = by_scope(table);
    for (const char* clause : {"private", "reduction"}) {
      auto ev = eval_clause_task(b, test, clause, 2, GenerationMode::basic);
      EXPECT_LE(ev.subtest2.accuracy(), ev.subtest1.accuracy());
      EXPECT_EQ(ev.subtest1.n(), ev.subtest2.n());
    }
  }
}

TEST(ClauseTask, ChainModeDefaultsToTwoStages) {
  EXPECT_EQ(clause_task_options().n_chain, 2u);
  std::vector<CorpusSample> test = {sample("a", "a();", "#pragma omp parallel for private(x)")};
  std::vector<std::string> tails;
  FunctionBackend b([&](const std::string& prompt) {
    auto tail = ompforge::testing::pragma_tail(prompt);
    tails.push_back(tail);
    if (tail.empty()) return std::string(" parallel for private(x)\n");
    if (tail == " parallel") return std::string(" for private(x)\n");
    return std::string(" private(x)\n");
  }, false);
  auto ev = eval_clause_task(b, test, "private", 2, GenerationMode::chain);
  EXPECT_EQ(ev.report.rows[0].counts, (Confusion{1, 0, 0, 0}));
  EXPECT_EQ(tails, (std::vector<std::string>{"", " parallel", " parallel for"}));
}

TEST(Confusion, UndefinedPrecision) {
  Confusion c{0, 0, 3, 1};
  EXPECT_FALSE(c.precision_defined());
  EXPECT_EQ(c.precision(), 0.0);
  EXPECT_EQ(c.f1(), 0.0);
  EXPECT_DOUBLE_EQ(c.accuracy(), 0.75);
  EvalReport r;
  r.rows.push_back({"x", c});
  EXPECT_NE(r.to_table().find('*'), std::string::npos);
}
