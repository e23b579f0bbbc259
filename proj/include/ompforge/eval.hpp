#pragma once

// Measurement protocols: perplexity, strict-match generation accuracy,
// basic-vs-chain comparison, and clause presence/control classification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ompforge/backend.hpp"
#include "ompforge/chain.hpp"
#include "ompforge/corpus.hpp"
#include "ompforge/error.hpp"
#include "ompforge/jsonl.hpp"
#include "ompforge/pragma.hpp"

namespace ompforge {

inline constexpr int kReportSchemaVersion = 1;

struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t n() const noexcept { return tp + fp + tn + fn; }
  double accuracy() const noexcept {
    return n() ? static_cast<double>(tp + tn) / static_cast<double>(n()) : 0.0;
  }
  bool precision_defined() const noexcept { return tp + fp > 0; }
  bool recall_defined() const noexcept { return tp + fn > 0; }
  double precision() const noexcept {
    return precision_defined() ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  }
  double recall() const noexcept {
    return recall_defined() ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  }
  double f1() const noexcept {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }

  Confusion& operator+=(const Confusion& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct EvalRow {
  std::string label;
  Confusion counts;
};

inline json row_to_json(const EvalRow& row) {
  const auto& c = row.counts;
  return {{"label", row.label},
          {"n", c.n()},
          {"tp", c.tp},
          {"fp", c.fp},
          {"tn", c.tn},
          {"fn", c.fn},
          {"accuracy", c.accuracy()},
          {"precision", c.precision()},
          {"precision_defined", c.precision_defined()},
          {"recall", c.recall()},
          {"f1", c.f1()}};
}

struct EvalReport {
  std::string task;
  std::vector<EvalRow> rows;
  std::optional<EvalRow> overall;
  std::size_t sample_count = 0;
  std::optional<double> perplexity;
  std::optional<std::uint64_t> token_count;
  json config = json::object();
  json extra = json::object();
  std::vector<std::string> notes;

  json to_json() const {
    json j{{"schema_version", kReportSchemaVersion},
           {"task", task},
           {"sample_count", sample_count},
           {"config", config},
           {"notes", notes}};
    json rs = json::array();
    for (const auto& r : rows) rs.push_back(row_to_json(r));
    j["rows"] = std::move(rs);
    j["overall"] = overall ? row_to_json(*overall) : json(nullptr);
    if (perplexity) j["perplexity"] = *perplexity;
    if (token_count) j["token_count"] = *token_count;
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j;
  }

  std::string to_table() const {
    std::ostringstream os;
    os << "task: " << task << "  samples: " << sample_count << "\n";
    for (const auto& n : notes) os << "note: " << n << "\n";
    if (perplexity)
      os << "perplexity: " << std::setprecision(10) << *perplexity
         << "  tokens: " << token_count.value_or(0) << "\n";
    if (rows.empty() && !overall) return os.str();
    std::size_t width = 7;
    for (const auto& r : rows) width = std::max(width, r.label.size());
    os << std::left << std::setw(static_cast<int>(width)) << "label" << std::right
       << std::setw(7) << "n" << std::setw(6) << "TP" << std::setw(6) << "FP"
       << std::setw(6) << "TN" << std::setw(6) << "FN" << std::setw(8) << "P"
       << std::setw(8) << "R" << std::setw(8) << "F1" << std::setw(8) << "Acc" << "\n";
    auto line = [&](const EvalRow& r) {
      const auto& c = r.counts;
      os << std::left << std::setw(static_cast<int>(width)) << r.label << std::right
         << std::setw(7) << c.n() << std::setw(6) << c.tp << std::setw(6) << c.fp
         << std::setw(6) << c.tn << std::setw(6) << c.fn << std::fixed
         << std::setprecision(3) << std::setw(8) << c.precision()
         << (c.precision_defined() ? "" : "*") << std::setw(c.precision_defined() ? 8 : 7)
         << c.recall() << std::setw(8) << c.f1() << std::setw(8) << c.accuracy()
         << std::defaultfloat << "\n";
    };
    for (const auto& r : rows) line(r);
    if (overall) line(*overall);
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Perplexity

struct PerplexityAccumulator {
  double log_sum = 0.0;
  std::uint64_t tokens = 0;

  void add(double logprob) noexcept {
    log_sum += logprob;
    ++tokens;
  }
  void merge(const PerplexityAccumulator& o) noexcept {
    log_sum += o.log_sum;
    tokens += o.tokens;
  }
  double value() const {
    if (tokens == 0) throw Error(Errc::empty_corpus, "perplexity over zero tokens");
    return std::exp(-log_sum / static_cast<double>(tokens));
  }
};

struct PerplexityResult {
  double perplexity = 0.0;
  std::uint64_t tokens = 0;
};

/// exp(-mean log P) over every token of every text. Each text is scored
/// from a fresh start context; pooling is token weighted and reduced in
/// input order.
inline PerplexityResult perplexity(const Backend& backend,
                                   const std::vector<TrainingText>& texts,
                                   unsigned jobs = 1) {
  if (!backend.supports_logprobs())
    throw Error(Errc::no_logprob_support,
                backend.name() + " backend does not expose token log-probabilities");
  std::vector<PerplexityAccumulator> per_text(texts.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < texts.size(); i += step)
      for (const auto& t : backend.score_text(texts[i].text)) per_text[i].add(t.logprob);
  };
  if (jobs <= 1 || texts.size() < 2) {
    work(0, 1);
  } else {
    const unsigned n = std::min<unsigned>(jobs, static_cast<unsigned>(texts.size()));
    std::vector<std::future<void>> tasks;
    for (unsigned w = 0; w < n; ++w)
      tasks.push_back(std::async(std::launch::async, work, w, n));
    for (auto& t : tasks) t.get();
  }
  PerplexityAccumulator total;
  for (const auto& a : per_text) total.merge(a);
  return {total.value(), total.tokens};
}

// ---------------------------------------------------------------------------
// Generation accuracy

inline void require_disjoint(const std::vector<CorpusSample>& test,
                             const std::set<std::string>& train_ids) {
  for (const auto& s : test)
    if (train_ids.count(s.id))
      throw Error(Errc::invalid_argument, "test sample " + s.id + " is in the training split");
}

inline std::vector<BatchInput> batch_inputs(const std::vector<CorpusSample>& samples) {
  std::vector<BatchInput> inputs;
  inputs.reserve(samples.size());
  for (const auto& s : samples) inputs.push_back({s.id, s.scope});
  return inputs;
}

inline std::string expected_pragma(const CorpusSample& s) {
  return try_canonicalize(s.pragma).value_or(s.pragma);
}

inline json options_to_json(const GenerationOptions& o) {
  return {{"max_tokens", o.max_tokens},
          {"temperature", o.temperature},
          {"seed", o.seed},
          {"n_chain", o.n_chain},
          {"retain_controls", o.retain_controls}};
}

struct GenerationEval {
  EvalReport report;
  std::vector<BatchResult> results;
};

/// Strict-match accuracy per expected pragma (the `top_k` most frequent,
/// 0 = all) plus an overall row. A row's TP counts exact matches and FN
/// everything else, so its accuracy is the fraction generated exactly.
/// Failed or unparseable generations are mismatches.
inline GenerationEval eval_generation(Backend& backend,
                                      const std::vector<CorpusSample>& test,
                                      GenerationMode mode,
                                      const GenerationOptions& options = {},
                                      std::size_t top_k = 15, unsigned jobs = 1) {
  GenerationEval out;
  out.results = generate_batch(backend, batch_inputs(test), mode, options, jobs);

  std::vector<std::string> expected;
  expected.reserve(test.size());
  for (const auto& s : test) expected.push_back(expected_pragma(s));

  std::map<std::string, Confusion> per_pragma;
  Confusion overall;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const bool hit = out.results[i].ok() && strict_match(expected[i], out.results[i].pragma);
    Confusion c;
    (hit ? c.tp : c.fn) = 1;
    per_pragma[expected[i]] += c;
    overall += c;
  }

  auto& rep = out.report;
  rep.task = "generation";
  rep.sample_count = test.size();
  for (const auto& [pragma, count] : pragma_frequency(expected, top_k))
    rep.rows.push_back({pragma, per_pragma[pragma]});
  rep.overall = EvalRow{"overall", overall};
  rep.config = options_to_json(options);
  rep.config["backend"] = backend.name();
  rep.config["mode"] = std::string(to_string(mode));
  rep.config["top_k"] = top_k;
  rep.notes.push_back("strict match on canonical renderings (order and control sensitive)");
  std::size_t failed = 0;
  for (const auto& r : out.results) failed += r.ok() ? 0 : 1;
  rep.extra["failed_generations"] = failed;
  return out;
}

// ---------------------------------------------------------------------------
// Basic vs chain

inline const std::vector<std::string>& default_chain_filters() {
  static const std::vector<std::string> filters = {"for schedule", "collapse", "teams",
                                                   "target"};
  return filters;
}

/// True when the space-separated names of `entry` occur as consecutive items.
inline bool contains_entry(const PragmaAst& ast, std::string_view entry) {
  std::vector<std::string> names;
  std::istringstream in{std::string(entry)};
  for (std::string w; in >> w;) names.push_back(w);
  if (names.empty() || names.size() > ast.items.size()) return false;
  for (std::size_t i = 0; i + names.size() <= ast.items.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; ok && k < names.size(); ++k)
      ok = ast.items[i + k].name == names[k];
    if (ok) return true;
  }
  return false;
}

struct ChainComparisonRow {
  std::string label;
  std::size_t n = 0;
  std::size_t basic_correct = 0;
  std::size_t chain_correct = 0;

  double basic_accuracy() const { return n ? double(basic_correct) / double(n) : 0.0; }
  double chain_accuracy() const { return n ? double(chain_correct) / double(n) : 0.0; }
};

struct ChainComparison {
  std::vector<ChainComparisonRow> rows;
  ChainComparisonRow overall{"overall"};
  std::vector<std::string> warnings;
  std::vector<BatchResult> basic, chain;
  json config = json::object();

  json to_json() const {
    auto row = [](const ChainComparisonRow& r) {
      return json{{"label", r.label},
                  {"n", r.n},
                  {"basic_correct", r.basic_correct},
                  {"chain_correct", r.chain_correct},
                  {"basic_accuracy", r.basic_accuracy()},
                  {"chain_accuracy", r.chain_accuracy()}};
    };
    json rs = json::array();
    for (const auto& r : rows) rs.push_back(row(r));
    return {{"schema_version", kReportSchemaVersion},
            {"task", "chain-vs-basic"},
            {"sample_count", overall.n},
            {"config", config},
            {"rows", std::move(rs)},
            {"overall", row(overall)},
            {"warnings", warnings}};
  }

  std::string to_table() const {
    std::ostringstream os;
    std::size_t width = 14;
    for (const auto& r : rows) width = std::max(width, r.label.size() + 2);
    os << std::left << std::setw(static_cast<int>(width)) << "" << std::right
       << std::setw(14) << "Basic" << std::setw(14) << "Chain" << std::setw(7)
       << "n" << "\n";
    auto line = [&](const ChainComparisonRow& r) {
      os << std::left << std::setw(static_cast<int>(width)) << r.label << std::right
         << std::fixed << std::setprecision(1) << std::setw(13) << 100.0 * r.basic_accuracy()
         << "%" << std::setw(13) << 100.0 * r.chain_accuracy() << "%" << std::setw(7) << r.n
         << std::defaultfloat << "\n";
    };
    for (const auto& r : rows) line(r);
    line(overall);
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    return os.str();
  }
};

/// Runs basic generation over the whole test set, then chain generation,
/// and reports strict-match accuracy of both on each filter subset (samples
/// whose expected pragma contains the filter entry) and overall.
inline ChainComparison eval_chain_vs_basic(Backend& backend,
                                           const std::vector<CorpusSample>& test,
                                           const std::vector<std::string>& filters,
                                           const GenerationOptions& options = {},
                                           unsigned jobs = 1) {
  ChainComparison out;
  const auto inputs = batch_inputs(test);
  out.basic = generate_batch(backend, inputs, GenerationMode::basic, options, jobs);
  out.chain = generate_batch(backend, inputs, GenerationMode::chain, options, jobs);

  std::vector<std::optional<PragmaAst>> asts;
  std::vector<bool> basic_hit, chain_hit;
  for (std::size_t i = 0; i < test.size(); ++i) {
    asts.push_back(try_parse_pragma(test[i].pragma));
    const auto exp = expected_pragma(test[i]);
    basic_hit.push_back(out.basic[i].ok() && strict_match(exp, out.basic[i].pragma));
    chain_hit.push_back(out.chain[i].ok() && strict_match(exp, out.chain[i].pragma));
  }
  auto tally = [&](ChainComparisonRow& row, std::size_t i) {
    ++row.n;
    row.basic_correct += basic_hit[i];
    row.chain_correct += chain_hit[i];
  };
  for (const auto& f : filters) {
    ChainComparisonRow row{f};
    for (std::size_t i = 0; i < test.size(); ++i)
      if (asts[i] && contains_entry(*asts[i], f)) tally(row, i);
    if (row.n == 0) out.warnings.push_back("EmptySubset: no test sample contains '" + f + "'");
    out.rows.push_back(row);
  }
  for (std::size_t i = 0; i < test.size(); ++i) tally(out.overall, i);
  out.config = options_to_json(options);
  out.config["backend"] = backend.name();
  out.config["filters"] = filters;
  return out;
}

// ---------------------------------------------------------------------------
// Clause task

enum class Outcome { tp, fp, tn, fn };

/// Binary outcome for one sample. Positive = the expected pragma has the
/// clause. Subtest 1 predicts positive when the generation has it; subtest
/// 2 additionally requires matching controls, and a presence match with the
/// wrong control counts as FP. An unparseable generation predicts negative.
inline Outcome classify_clause(const PragmaAst& expected,
                               const std::optional<PragmaAst>& generated,
                               std::string_view clause, int subtest) {
  if (!is_known_keyword(clause))
    throw Error(Errc::unknown_clause, "unknown clause: " + std::string(clause));
  if (subtest != 1 && subtest != 2)
    throw Error(Errc::invalid_argument, "subtest must be 1 or 2");
  const bool actual = expected.has(clause);
  const bool predicted = generated && generated->has(clause);
  if (!actual) return predicted ? Outcome::fp : Outcome::tn;
  if (!predicted) return Outcome::fn;
  if (subtest == 2 && !clause_and_control_match(expected, *generated, clause))
    return Outcome::fp;
  return Outcome::tp;
}

inline void tally(Confusion& c, Outcome o) {
  switch (o) {
    case Outcome::tp: ++c.tp; break;
    case Outcome::fp: ++c.fp; break;
    case Outcome::tn: ++c.tn; break;
    case Outcome::fn: ++c.fn; break;
  }
}

// Clause tasks run two chain stages by default.
inline GenerationOptions clause_task_options() {
  GenerationOptions o;
  o.n_chain = 2;
  return o;
}

struct ClauseTaskEval {
  EvalReport report;  // rows for the requested subtest
  Confusion subtest1;
  Confusion subtest2;
  std::vector<BatchResult> results;
};

/// Clause presence (subtest 1) or presence plus control (subtest 2)
/// classification over the test set. Both subtests are computed from the
/// same generations and subtest-2 accuracy <= subtest-1 accuracy is checked
/// on every run.
inline ClauseTaskEval eval_clause_task(Backend& backend,
                                       const std::vector<CorpusSample>& test,
                                       std::string_view clause, int subtest,
                                       GenerationMode mode,
                                       GenerationOptions options = clause_task_options(),
                                       unsigned jobs = 1) {
  if (!is_known_keyword(clause))
    throw Error(Errc::unknown_clause, "unknown clause: " + std::string(clause));
  if (subtest != 1 && subtest != 2)
    throw Error(Errc::invalid_argument, "subtest must be 1 or 2");

  ClauseTaskEval out;
  out.results = generate_batch(backend, batch_inputs(test), mode, options, jobs);
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto expected = try_parse_pragma(test[i].pragma);
    if (!expected) {
      ++skipped;
      continue;
    }
    std::optional<PragmaAst> generated;
    if (out.results[i].ok()) generated = try_parse_pragma(out.results[i].pragma);
    tally(out.subtest1, classify_clause(*expected, generated, clause, 1));
    tally(out.subtest2, classify_clause(*expected, generated, clause, 2));
  }
  if (out.subtest2.accuracy() > out.subtest1.accuracy())
    throw std::logic_error("subtest ordering violated: subtest 2 accuracy exceeds subtest 1");

  auto& rep = out.report;
  rep.task = "clause";
  rep.sample_count = test.size() - skipped;
  const Confusion& chosen = subtest == 1 ? out.subtest1 : out.subtest2;
  rep.rows.push_back({std::string(clause), chosen});
  rep.config = options_to_json(options);
  rep.config["backend"] = backend.name();
  rep.config["mode"] = std::string(to_string(mode));
  rep.config["clause"] = std::string(clause);
  rep.config["subtest"] = subtest;
  rep.notes.push_back("positive class: expected pragma contains the clause");
  if (subtest == 2)
    rep.notes.push_back("subtest 2: a present clause with a different control counts as FP");
  rep.extra["subtest_ordering"] = {{"subtest1_accuracy", out.subtest1.accuracy()},
                                   {"subtest2_accuracy", out.subtest2.accuracy()},
                                   {"holds", true}};
  if (skipped) rep.extra["skipped_unparseable_expected"] = skipped;
  return out;
}

}  // namespace ompforge
