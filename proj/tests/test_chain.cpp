#include <gtest/gtest.h>

#include <memory>
#include <string>
#include <vector>

#include "ompforge/chain.hpp"
#include "ompforge/lexer.hpp"
#include "ompforge/ngram.hpp"
#include "support.hpp"

using namespace ompforge;
using ompforge::testing::FunctionBackend;

namespace {

const std::string kScope = "for (i = 0; i < n; i++) {\n  a[i] = b[i] + c[i];\n}";

using Strings = std::vector<std::string>;

std::shared_ptr<NGramModel> model_of(const std::vector<CorpusSample>& samples,
                                     NGramOptions opts = {8, 0.01, 0.4}) {
  std::vector<TrainingText> texts;
  for (const auto& s : samples) texts.push_back(reposition(s));
  return std::make_shared<NGramModel>(NGramModel::train(texts, opts));
}

std::vector<CorpusSample> small_corpus() {
  using ompforge::testing::sample;
  return {
      sample("s0", "for (i = 0; i < n; i++)\n  v[i] = v[i] * 2.0f;", "#pragma omp simd"),
      sample("s1", "for (i = 0; i < n; i++)\n  sum += x[i];",
             "#pragma omp parallel for reduction(+:sum)"),
      sample("s2", "for (i = 0; i < n; i++)\n  work(i);",
             "#pragma omp for schedule(dynamic)"),
      sample("s3", "for (i = 0; i < n; i++)\n  tmp = f(i), out[i] = tmp;",
             "#pragma omp parallel for private(tmp)"),
  };
}

}  // namespace

TEST(BasicGenerate, CompletesAfterPrefix) {
  ScriptedBackend b({" parallel for\nint y;"});
  auto g = basic_generate(b, kScope);
  EXPECT_EQ(g.pragma, "#pragma omp parallel for");
  EXPECT_TRUE(g.parsed);
  EXPECT_FALSE(g.empty);
  EXPECT_EQ(b.prompts(), (Strings{kScope + "\n#pragma omp"}));
}

TEST(BasicGenerate, EmptyCompletionIsFlagged) {
  ScriptedBackend b({"\n"});
  auto g = basic_generate(b, kScope);
  EXPECT_TRUE(g.empty);
  EXPECT_EQ(g.pragma, "#pragma omp");
}

TEST(BasicGenerate, UnparseableKeptRaw) {
  ScriptedBackend b({" for ((\n"});
  auto g = basic_generate(b, kScope);
  EXPECT_FALSE(g.parsed);
  EXPECT_EQ(g.pragma, "#pragma omp for ((");
}

TEST(BasicGenerate, EmptyScopeRejected) {
  ScriptedBackend b({" for\n"});
  EXPECT_THROW(basic_generate(b, " \n\t"), Error);
  EXPECT_EQ(b.remaining(), 1u);
}

TEST(BasicGenerate, MemorizedNGram) {
  auto corpus = small_corpus();
  NGramBackend b(model_of(corpus));
  for (const auto& s : corpus) EXPECT_EQ(basic_generate(b, s.scope).pragma, s.pragma) << s.id;
}

TEST(ChainOfOmp, ScriptedWalkthrough) {
  ScriptedBackend b({" for schedule(dynamic)\n", " schedule(static)\n", "\n", "(static)\n"});
  auto run = chain_of_omp(b, kScope);
  EXPECT_EQ(run.pragma, "#pragma omp for schedule(static)");
  EXPECT_TRUE(run.parsed);
  EXPECT_EQ(run.state.retained, (Strings{"for", "schedule"}));
  EXPECT_EQ(run.state.stage, 2u);
  ASSERT_EQ(run.state.trace.size(), 3u);
  EXPECT_FALSE(run.state.trace[2].retained.has_value());
  const std::string i0 = kScope + "\n#pragma omp";
  EXPECT_EQ(b.prompts(), (Strings{i0, i0 + " for", i0 + " for schedule", i0 + " for schedule"}));
  EXPECT_EQ(run.state.final_output, "(static)");
  EXPECT_TRUE(trace_is_consistent(run.state));
}

TEST(ChainOfOmp, ImmediateEndStillRunsFinalPhase) {
  ScriptedBackend b({"\n", " parallel\n"});
  auto run = chain_of_omp(b, kScope);
  EXPECT_TRUE(run.state.retained.empty());
  EXPECT_EQ(run.pragma, "#pragma omp parallel");
  EXPECT_EQ(b.remaining(), 0u);
  EXPECT_TRUE(trace_is_consistent(run.state));
}

TEST(ChainOfOmp, LimitStopsStages) {
  ScriptedBackend b({" for schedule(dynamic)\n", " schedule(static)\n", "(static)\n"});
  GenerationOptions o;
  o.n_chain = 2;
  auto run = chain_of_omp(b, kScope, o);
  EXPECT_EQ(run.state.stage, 2u);
  EXPECT_EQ(run.pragma, "#pragma omp for schedule(static)");
  EXPECT_TRUE(trace_is_consistent(run.state));
}

TEST(ChainOfOmp, RepeatedComponentBelowThreeIsAllowed) {
  ScriptedBackend b({" for\n", " for\n", "\n"});
  GenerationOptions o;
  o.n_chain = 2;
  auto run = chain_of_omp(b, kScope, o);
  EXPECT_EQ(run.state.retained, (Strings{"for", "for"}));
}

TEST(ChainOfOmp, StallDetected) {
  ScriptedBackend b({" for\n", " for\n", " for\n", "unused\n"});
  GenerationOptions o;
  o.n_chain = 3;
  try {
    chain_of_omp(b, kScope, o);
    FAIL();
  } catch (const ChainStalledError& e) {
    EXPECT_EQ(e.code(), Errc::chain_stalled);
    EXPECT_EQ(e.state().retained.size(), 3u);
    EXPECT_EQ(b.remaining(), 1u);
  }
}

TEST(ChainOfOmp, RetainControlsOption) {
  ScriptedBackend b({" for schedule(dynamic)\n", " schedule(static, 4)\n", "\n", "\n"});
  GenerationOptions o;
  o.retain_controls = true;
  auto run = chain_of_omp(b, kScope, o);
  EXPECT_EQ(run.state.retained, (Strings{"for", "schedule(static,4)"}));
  EXPECT_EQ(run.pragma, "#pragma omp for schedule(static,4)");
}

TEST(ChainOfOmp, InvalidLimit) {
  ScriptedBackend b;
  GenerationOptions o;
  o.n_chain = 0;
  EXPECT_THROW(chain_of_omp(b, kScope, o), Error);
}

TEST(ChainOfOmp, PromptsGrowOnEveryStage) {
  // Emits one fixed token per stage until five are retained.
  const Strings parts = {"parallel", "for", "private(x)", "schedule(static)", "nowait"};
  FunctionBackend b([&](const std::string& prompt) {
    auto n = lm_tokens(ompforge::testing::pragma_tail(prompt)).size();
    return n < parts.size() ? " " + parts[n] + " tail\n" : std::string("\n");
  });
  auto run = chain_of_omp(b, kScope);
  EXPECT_EQ(run.state.retained, (Strings{"parallel", "for", "private", "schedule", "nowait"}));
  for (std::size_t n = 1; n < run.state.trace.size(); ++n)
    EXPECT_GT(lm_tokens(run.state.trace[n].prompt).size(),
              lm_tokens(run.state.trace[n - 1].prompt).size());
  EXPECT_TRUE(trace_is_consistent(run.state));
  EXPECT_LE(run.state.retained.size(), run.state.n_chain_limit);
}

TEST(ChainOfOmp, NGramDeterministic) {
  auto corpus = small_corpus();
  NGramBackend b(model_of(corpus));
  for (const auto& s : corpus) {
    auto a = chain_of_omp(b, s.scope);
    auto c = chain_of_omp(b, s.scope);
    EXPECT_EQ(a.pragma, c.pragma);
    EXPECT_EQ(a.pragma, s.pragma) << s.id;
    EXPECT_TRUE(trace_is_consistent(a.state));
  }
}

TEST(TraceConsistency, DetectsTampering) {
  ScriptedBackend b({" for\n", "\n", "\n"});
  auto run = chain_of_omp(b, kScope);
  ASSERT_TRUE(trace_is_consistent(run.state));
  auto bad = run.state;
  bad.trace[1].prompt += " x";
  EXPECT_FALSE(trace_is_consistent(bad));
  bad = run.state;
  bad.final_prompt = "x";
  EXPECT_FALSE(trace_is_consistent(bad));
}

TEST(TraceJson, Fields) {
  ScriptedBackend b({" for schedule(dynamic)\n", "\n", " schedule(static)\n"});
  auto run = chain_of_omp(b, kScope);
  auto j = trace_to_json("id7", run.state, run.pragma);
  EXPECT_EQ(j["id"], "id7");
  EXPECT_EQ(j["final"], "#pragma omp for schedule(static)");
  ASSERT_EQ(j["stages"].size(), 2u);
  EXPECT_EQ(j["stages"][0]["prompt_suffix"], "#pragma omp");
  EXPECT_EQ(j["stages"][0]["output"], " for schedule(dynamic)");
  EXPECT_EQ(j["stages"][0]["retained"], "for");
  EXPECT_TRUE(j["stages"][1]["retained"].is_null());
  EXPECT_EQ(j["final_prompt_suffix"], "#pragma omp for");
}

TEST(GenerateBatch, OrderAndPerSampleFailure) {
  FunctionBackend b([](const std::string& prompt) -> std::string {
    auto scope = ompforge::testing::prompt_scope(prompt);
    if (scope == "bad();") throw Error(Errc::backend_unavailable, "boom");
    return " parallel for\n";
  });
  std::vector<BatchInput> in = {{"a", "x();"}, {"b", "bad();"}, {"c", "y();"}};
  for (unsigned jobs : {1u, 3u}) {
    auto out = generate_batch(b, in, GenerationMode::basic, {}, jobs);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].id, "a");
    EXPECT_EQ(out[2].id, "c");
    EXPECT_TRUE(out[0].ok());
    EXPECT_EQ(out[0].pragma, "#pragma omp parallel for");
    ASSERT_FALSE(out[1].ok());
    EXPECT_EQ(*out[1].error, "BackendUnavailable: boom");
    EXPECT_TRUE(out[2].ok());
  }
}

TEST(GenerateBatch, ChainModeKeepsTraces) {
  auto corpus = small_corpus();
  NGramBackend b(model_of(corpus));
  std::vector<BatchInput> in;
  for (const auto& s : corpus) in.push_back({s.id, s.scope});
  auto serial = generate_batch(b, in, GenerationMode::chain, {}, 1);
  auto parallel = generate_batch(b, in, GenerationMode::chain, {}, 4);
  for (std::size_t i = 0; i < in.size(); ++i) {
    ASSERT_TRUE(serial[i].trace.has_value());
    EXPECT_EQ(serial[i].pragma, parallel[i].pragma);
    EXPECT_EQ(serial[i].pragma, corpus[i].pragma);
  }
}

TEST(GenerateBatch, StallRecordedWithTrace) {
  FunctionBackend b([](const std::string&) { return std::string(" simd\n"); });
  GenerationOptions o;
  o.n_chain = 4;
  auto out = generate_batch(b, {{"z", "loop();"}}, GenerationMode::chain, o);
  ASSERT_FALSE(out[0].ok());
  EXPECT_EQ(out[0].error->rfind("ChainStalled:", 0), 0u);
  ASSERT_TRUE(out[0].trace.has_value());
  EXPECT_EQ(out[0].trace->retained.size(), 4u);
}

TEST(ParseMode, Values) {
  EXPECT_EQ(parse_mode("basic"), GenerationMode::basic);
  EXPECT_EQ(parse_mode("chain"), GenerationMode::chain);
  EXPECT_THROW(parse_mode("other"), Error);
}
