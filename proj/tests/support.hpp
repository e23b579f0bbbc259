#pragma once

// Test doubles shared by the unit suites and the acceptance runner.

#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "ompforge/backend.hpp"
#include "ompforge/corpus.hpp"
#include "ompforge/pragma.hpp"

namespace ompforge::testing {

// Completion computed from the prompt; stops are applied like a real server.
class FunctionBackend final : public Backend {
 public:
  using Fn = std::function<std::string(const std::string& prompt)>;
  explicit FunctionBackend(Fn fn, bool concurrent = true)
      : fn_(std::move(fn)), concurrent_(concurrent) {}

  CompletionResult complete(const CompletionRequest& request) override {
    request.validate();
    {
      std::lock_guard lock(mutex_);
      ++calls_;
    }
    CompletionResult r;
    r.text = fn_(request.prompt);
    r.finish_reason = truncate_at_stop(r.text, request.stop_sequences)
                          ? FinishReason::stop
                          : FinishReason::end_of_model;
    return r;
  }
  std::string name() const override { return "function"; }
  bool concurrent() const override { return concurrent_; }
  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

 private:
  Fn fn_;
  bool concurrent_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

// Text after the last "#pragma omp" in a prompt.
inline std::string pragma_tail(const std::string& prompt) {
  auto at = prompt.rfind("#pragma omp");
  return at == std::string::npos ? prompt : prompt.substr(at + 11);
}

inline std::string prompt_scope(const std::string& prompt) {
  auto at = prompt.rfind("\n#pragma omp");
  return at == std::string::npos ? prompt : prompt.substr(0, at);
}

inline CorpusSample sample(std::string id, std::string scope, std::string pragma) {
  return CorpusSample{std::move(id), Language::c, std::move(scope), std::move(pragma), {}};
}

inline PragmaAst random_ast(std::mt19937_64& rng) {
  static const std::vector<std::string> controls = {
      "+:sum", "var", "static,4", "dynamic", "2", "tofrom:a[0:n]", "none",
      "a,b,c", "max:m", "x[i*n+j]", "f(a,b)", "\"s t\"", "monotonic:static"};
  std::uniform_int_distribution<int> count(0, 6);
  PragmaAst ast;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    PragmaItem item;
    if (rng() % 2) {
      item.name = std::string(keywords::kDirectives[rng() % keywords::kDirectives.size()]);
    } else {
      item.name = std::string(keywords::kClauses[rng() % keywords::kClauses.size()]);
    }
    if (rng() % 6 == 0) item.name = "ext_" + std::to_string(rng() % 100);
    item.kind = classify(item.name);
    if (rng() % 2) item.control = controls[rng() % controls.size()];
    ast.items.push_back(std::move(item));
  }
  return ast;
}

// Loops whose bodies determine the pragma: each class has its own statement
// shape, with array and bound names drawn at random.
inline std::vector<CorpusSample> synthetic_corpus(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> arrays = {"x", "y", "u", "v", "p", "q", "w", "z"};
  static const std::vector<std::string> bounds = {"n", "N", "len", "size", "count"};
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<std::string>& v) { return v[rng() % v.size()]; };
  std::vector<CorpusSample> out;
  for (std::size_t k = 0; k < n; ++k) {
    const std::string a = pick(arrays), b = pick(arrays), c = pick(arrays), m = pick(bounds);
    const std::string head = "for (i = 0; i < " + m + "; i++)";
    std::string scope, pragma;
    switch (rng() % 7) {
      case 0:
        scope = head + "\n  sum += " + a + "[i] * " + b + "[i];";
        pragma = "#pragma omp parallel for reduction(+:sum)";
        break;
      case 1:
        scope = head + " {\n  tmp = " + a + "[i] + " + b + "[i];\n  " + c + "[i] = tmp * tmp;\n}";
        pragma = "#pragma omp parallel for private(tmp)";
        break;
      case 2:
        scope = head + "\n  " + c + "[i] = work(" + a + "[i]);";
        pragma = "#pragma omp parallel for schedule(dynamic)";
        break;
      case 3:
        scope = head + "\n  for (j = 0; j < " + pick(bounds) + "; j++)\n    " + c + "[i][j] = " +
                a + "[i][j] + " + b + "[i][j];";
        pragma = "#pragma omp parallel for collapse(2)";
        break;
      case 4:
        scope = head + "\n  " + c + "[i] = " + a + "[i] * alpha;";
        pragma = "#pragma omp target teams distribute parallel for";
        break;
      case 5:
        scope = head + "\n  " + c + "[i] = " + a + "[i] + " + b + "[i];";
        pragma = "#pragma omp simd";
        break;
      default:
        scope = head + "\n  " + c + "[i] = " + a + "[i] / 2;";
        pragma = "#pragma omp for schedule(static)";
        break;
    }
    out.push_back(sample("syn" + std::to_string(k), scope, pragma));
  }
  return out;
}

}  // namespace ompforge::testing
