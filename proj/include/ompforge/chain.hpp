#pragma once

// Pragma generation over any completion backend: a single prefix prompt
// ("basic") or iterative component-by-component prompting ("chain").

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ompforge/backend.hpp"
#include "ompforge/error.hpp"
#include "ompforge/jsonl.hpp"
#include "ompforge/pragma.hpp"

namespace ompforge {

enum class GenerationMode { basic, chain };

constexpr std::string_view to_string(GenerationMode m) noexcept {
  return m == GenerationMode::basic ? "basic" : "chain";
}

inline GenerationMode parse_mode(std::string_view s) {
  if (s == "basic") return GenerationMode::basic;
  if (s == "chain") return GenerationMode::chain;
  throw Error(Errc::invalid_argument, "unknown mode: " + std::string(s));
}

struct GenerationOptions {
  std::size_t max_tokens = 256;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_chain = 256;
  // Keep `(...)` with each retained component instead of leaving all
  // controls to the final phase.
  bool retain_controls = false;
};

/// `scope`, newline, `#pragma omp`.
inline std::string pragma_prompt(std::string_view scope) {
  std::string p(scope);
  p += '\n';
  p += kPragmaPrefix;
  return p;
}

namespace detail {

inline CompletionRequest line_request(std::string prompt, const GenerationOptions& o) {
  CompletionRequest req;
  req.prompt = std::move(prompt);
  req.max_tokens = o.max_tokens;
  req.stop_sequences = {"\n"};
  req.temperature = o.temperature;
  req.seed = o.seed;
  return req;
}

inline std::string complete_line(Backend& backend, const CompletionRequest& req) {
  auto result = backend.complete(req);
  truncate_at_stop(result.text, {"\n"});
  return std::move(result.text);
}

inline void require_scope(std::string_view scope) {
  if (scope.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw Error(Errc::invalid_argument, "scope must be non-empty");
}

}  // namespace detail

struct BasicGeneration {
  std::string pragma;      // canonical when parseable, raw otherwise
  std::string raw_output;  // backend continuation, cut at the first newline
  bool empty = false;      // nothing but the prefix was generated
  bool parsed = false;
};

inline BasicGeneration basic_generate(Backend& backend, std::string_view scope,
                                      const GenerationOptions& options = {}) {
  detail::require_scope(scope);
  BasicGeneration out;
  out.raw_output =
      detail::complete_line(backend, detail::line_request(pragma_prompt(scope), options));
  std::string text = std::string(kPragmaPrefix) + out.raw_output;
  out.empty = out.raw_output.find_first_not_of(" \t\r") == std::string::npos;
  if (auto canon = try_canonicalize(text)) {
    out.pragma = std::move(*canon);
    out.parsed = true;
  } else {
    out.pragma = std::move(text);
  }
  return out;
}

struct ChainStage {
  std::string prompt;                   // I_n
  std::string output;                   // O_n, cut at the first newline
  std::optional<std::string> retained;  // empty on end-of-pragma
};

struct ChainState {
  std::string scope;
  std::string input;                  // current I_n
  std::vector<std::string> retained;  // accepted components, in order
  std::size_t stage = 0;
  std::size_t n_chain_limit = 256;
  std::vector<ChainStage> trace;
  std::string final_prompt;
  std::string final_output;
};

struct ChainRun {
  std::string pragma;  // canonical when parseable, raw otherwise
  bool parsed = false;
  ChainState state;
};

class ChainStalledError : public Error {
 public:
  ChainStalledError(const std::string& what, ChainState state)
      : Error(Errc::chain_stalled, what), state_(std::move(state)) {}
  const ChainState& state() const noexcept { return state_; }

 private:
  ChainState state_;
};

/// I_0 followed by each retained component, space separated.
inline std::string chain_input(std::string_view scope,
                               const std::vector<std::string>& retained) {
  std::string in = pragma_prompt(scope);
  for (const auto& c : retained) {
    in += ' ';
    in += c;
  }
  return in;
}

/// Iterative prompting: each stage keeps only the first directive/clause of
/// the completion and appends it to the prompt. Stops on end-of-pragma or
/// after `n_chain` retained components, then runs one final completion whose
/// whole line (controls included) finishes the pragma.
///
/// Throws ChainStalledError when n_chain >= 3 and every stage up to the
/// limit retained the same component.
inline ChainRun chain_of_omp(Backend& backend, std::string_view scope,
                             const GenerationOptions& options = {}) {
  detail::require_scope(scope);
  if (options.n_chain < 1) throw Error(Errc::invalid_argument, "n_chain must be >= 1");

  ChainRun run;
  ChainState& st = run.state;
  st.scope = std::string(scope);
  st.n_chain_limit = options.n_chain;
  st.input = pragma_prompt(scope);

  while (st.stage < st.n_chain_limit) {
    ChainStage stage;
    stage.prompt = st.input;
    stage.output =
        detail::complete_line(backend, detail::line_request(st.input, options));
    auto first = first_component(stage.output, options.retain_controls);
    if (first.end_of_pragma()) {
      st.trace.push_back(std::move(stage));
      break;
    }
    std::string component = render_item(*first.item);
    stage.retained = component;
    st.trace.push_back(std::move(stage));
    st.input += ' ';
    st.input += component;
    st.retained.push_back(std::move(component));
    ++st.stage;
  }

  if (st.n_chain_limit >= 3 && st.stage == st.n_chain_limit &&
      std::all_of(st.retained.begin(), st.retained.end(),
                  [&](const std::string& c) { return c == st.retained.front(); }))
    throw ChainStalledError("chain stalled repeating '" + st.retained.front() + "' " +
                                std::to_string(st.stage) + " times",
                            st);

  st.final_prompt = st.input;
  st.final_output =
      detail::complete_line(backend, detail::line_request(st.input, options));

  std::string text = st.input.substr(st.scope.size() + 1) + st.final_output;
  if (auto canon = try_canonicalize(text)) {
    run.pragma = std::move(*canon);
    run.parsed = true;
  } else {
    run.pragma = std::move(text);
  }
  return run;
}

/// Checks the recorded prompts against the concatenation rule: stage 0 is
/// the prefix prompt and each later prompt is its predecessor plus a space
/// and the predecessor's retained component.
inline bool trace_is_consistent(const ChainState& st) {
  std::string expected = pragma_prompt(st.scope);
  for (std::size_t n = 0; n < st.trace.size(); ++n) {
    const auto& stage = st.trace[n];
    if (stage.prompt != expected) return false;
    if (!stage.retained) return n + 1 == st.trace.size() && st.final_prompt == expected;
    expected += ' ';
    expected += *stage.retained;
  }
  return st.final_prompt == expected && st.input == expected;
}

// ---------------------------------------------------------------------------
// Batches

struct BatchInput {
  std::string id;
  std::string scope;
};

struct BatchResult {
  std::string id;
  std::string pragma;
  bool empty = false;
  bool parsed = false;
  std::optional<ChainState> trace;
  std::optional<std::string> error;  // "<Kind>: <message>" when the sample failed

  bool ok() const noexcept { return !error.has_value(); }
};

inline BatchResult generate_one(Backend& backend, const BatchInput& input,
                                GenerationMode mode, const GenerationOptions& options) {
  BatchResult r;
  r.id = input.id;
  try {
    if (mode == GenerationMode::basic) {
      auto g = basic_generate(backend, input.scope, options);
      r.pragma = std::move(g.pragma);
      r.empty = g.empty;
      r.parsed = g.parsed;
    } else {
      auto c = chain_of_omp(backend, input.scope, options);
      r.pragma = std::move(c.pragma);
      r.parsed = c.parsed;
      r.empty = c.state.retained.empty() &&
                c.state.final_output.find_first_not_of(" \t\r") == std::string::npos;
      r.trace = std::move(c.state);
    }
  } catch (const ChainStalledError& e) {
    r.error = std::string(e.kind()) + ": " + e.what();
    r.trace = e.state();
  } catch (const Error& e) {
    r.error = std::string(e.kind()) + ": " + e.what();
  }
  return r;
}

/// Order-preserving batch generation. Failures are recorded per sample and
/// never abort the batch. Runs on up to `jobs` threads when the backend
/// allows concurrent calls.
inline std::vector<BatchResult> generate_batch(Backend& backend,
                                               const std::vector<BatchInput>& inputs,
                                               GenerationMode mode,
                                               const GenerationOptions& options = {},
                                               unsigned jobs = 1) {
  std::vector<BatchResult> results(inputs.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < inputs.size(); i += step)
      results[i] = generate_one(backend, inputs[i], mode, options);
  };
  if (jobs <= 1 || !backend.concurrent() || inputs.size() < 2) {
    work(0, 1);
  } else {
    const unsigned n = std::min<unsigned>(jobs, static_cast<unsigned>(inputs.size()));
    std::vector<std::future<void>> tasks;
    for (unsigned w = 0; w < n; ++w)
      tasks.push_back(std::async(std::launch::async, work, w, n));
    for (auto& t : tasks) t.get();
  }
  return results;
}

/// Trace export record:
/// {"id", "stages": [{"prompt_suffix", "output", "retained"}], "final", ...}
inline json trace_to_json(std::string_view id, const ChainState& st,
                          std::string_view pragma) {
  auto suffix = [&](const std::string& prompt) {
    return prompt.size() > st.scope.size() ? prompt.substr(st.scope.size() + 1) : prompt;
  };
  json stages = json::array();
  for (const auto& s : st.trace)
    stages.push_back({{"prompt_suffix", suffix(s.prompt)},
                      {"output", s.output},
                      {"retained", s.retained ? json(*s.retained) : json(nullptr)}});
  return {{"id", id},
          {"stages", std::move(stages)},
          {"final", pragma},
          {"final_prompt_suffix", suffix(st.final_prompt)},
          {"final_output", st.final_output},
          {"n_chain", st.n_chain_limit}};
}

}  // namespace ompforge
