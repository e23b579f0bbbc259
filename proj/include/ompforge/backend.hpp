#pragma once

// Backend-neutral completion contract.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ompforge/error.hpp"

namespace ompforge {

struct CompletionRequest {
  std::string prompt;
  std::size_t max_tokens = 256;
  std::vector<std::string> stop_sequences;
  double temperature = 0.0;  // 0 = greedy
  std::uint64_t seed = 0;    // only used when temperature > 0

  void validate() const {
    if (max_tokens < 1)
      throw Error(Errc::invalid_argument, "max_tokens must be >= 1");
    if (!(temperature >= 0.0))
      throw Error(Errc::invalid_argument, "temperature must be >= 0");
  }
};

enum class FinishReason { stop, length, end_of_model };

constexpr std::string_view to_string(FinishReason r) noexcept {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::end_of_model: return "end-of-model";
  }
  return "stop";
}

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;  // natural log

  friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

struct CompletionResult {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
};

/// Truncates `text` at the earliest stop sequence. Returns true when one was
/// found.
inline bool truncate_at_stop(std::string& text,
                             const std::vector<std::string>& stops) {
  std::size_t cut = std::string::npos;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    std::size_t at = text.find(s);
    if (at < cut) cut = at;
  }
  if (cut == std::string::npos) return false;
  text.resize(cut);
  return true;
}

class Backend {
 public:
  virtual ~Backend() = default;

  virtual CompletionResult complete(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;

  // Whether complete() may be called from several threads at once.
  virtual bool concurrent() const { return true; }

  virtual bool supports_logprobs() const { return false; }

  /// Per-token natural-log probabilities of `text`, scored from a fresh
  /// start context. Includes the end-of-text event when the backend models
  /// one.
  virtual std::vector<TokenLogprob> score_text(std::string_view /*text*/) const {
    throw Error(Errc::no_logprob_support,
                name() + " backend does not expose token log-probabilities");
  }
};

/// Replays a fixed queue of outputs, one per request, in order. Stop
/// sequences are applied to each scripted output. Running out of script is
/// an error, never an empty completion.
class ScriptedBackend final : public Backend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<std::string> outputs)
      : queue_(outputs.begin(), outputs.end()) {}

  void push(std::string output) {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(output));
  }

  CompletionResult complete(const CompletionRequest& request) override {
    request.validate();
    std::string text;
    {
      std::lock_guard lock(mutex_);
      if (queue_.empty())
        throw Error(Errc::script_exhausted,
                    "scripted backend exhausted after " +
                        std::to_string(served_) + " request(s)");
      text = std::move(queue_.front());
      queue_.pop_front();
      ++served_;
      prompts_.push_back(request.prompt);
    }
    CompletionResult result;
    result.finish_reason = truncate_at_stop(text, request.stop_sequences)
                               ? FinishReason::stop
                               : FinishReason::end_of_model;
    result.text = std::move(text);
    return result;
  }

  std::string name() const override { return "scripted"; }
  bool concurrent() const override { return false; }

  std::size_t remaining() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
  }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> queue_;
  std::vector<std::string> prompts_;
  std::size_t served_ = 0;
};

}  // namespace ompforge
