#pragma once

// Word-level n-gram language model over lexical code tokens: add-k
// smoothing in observed contexts, stupid backoff to shorter contexts
// otherwise. Serves as a deterministic completion backend that also exposes
// token log-probabilities.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ompforge/backend.hpp"
#include "ompforge/corpus.hpp"
#include "ompforge/error.hpp"
#include "ompforge/jsonl.hpp"
#include "ompforge/lexer.hpp"

namespace ompforge {

inline constexpr std::string_view kBosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
// `#`, `pragma`, `omp` form one model token.
inline constexpr std::string_view kPrefixToken = "#pragma omp";

/// Model token stream for `text`: lexical tokens with every `# pragma omp`
/// run fused into a single token.
inline std::vector<std::string> lm_tokens(std::string_view text) {
  auto toks = tokenize(text);
  std::vector<std::string> out;
  out.reserve(toks.size());
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].text == "#" && i + 2 < toks.size() && toks[i + 1].text == "pragma" &&
        toks[i + 2].text == "omp") {
      out.emplace_back(kPrefixToken);
      i += 2;
      continue;
    }
    out.push_back(std::move(toks[i].text));
  }
  return out;
}

/// Text appended to a completion when the model emits `token`. Tokens are
/// space separated; a new pragma prefix starts a new line.
inline std::string detokenize_piece(std::string_view token) {
  if (token == kPrefixToken) return "\n" + std::string(token);
  return " " + std::string(token);
}

struct NGramOptions {
  std::size_t order = 4;
  double k = 0.01;       // add-k pseudo-count; 0 gives MLE
  double backoff = 0.4;  // stupid-backoff factor
};

class NGramModel {
 public:
  using Id = std::uint32_t;
  static constexpr Id kBos = 0;
  static constexpr Id kEos = 1;
  static constexpr Id kUnknown = std::numeric_limits<Id>::max();

  struct ContextStats {
    std::uint64_t total = 0;
    std::map<Id, std::uint64_t> next;

    std::uint64_t count(Id id) const {
      auto it = next.find(id);
      return it == next.end() ? 0 : it->second;
    }
  };

  NGramModel() = default;

  bool trained() const noexcept { return !contexts_.empty(); }
  std::size_t order() const noexcept { return options_.order; }
  const NGramOptions& options() const noexcept { return options_; }
  // Number of corpus tokens; sentinels are not counted.
  std::size_t vocab_size() const noexcept {
    return vocab_.size() > 2 ? vocab_.size() - 2 : 0;
  }
  // Ids of every predictable outcome: </s> and the corpus tokens.
  std::size_t outcome_count() const noexcept { return vocab_.size() - 1; }
  const std::string& token(Id id) const { return vocab_.at(id); }
  Id id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnknown : it->second;
  }
  const std::map<std::vector<Id>, ContextStats>& contexts() const noexcept {
    return contexts_;
  }

  /// Training. Each text is padded with order-1 <s> and terminated by </s>;
  /// every window of length 1..order is counted.
  static NGramModel train(const std::vector<TrainingText>& corpus,
                          const NGramOptions& options = {}) {
    if (corpus.empty()) throw Error(Errc::empty_corpus, "no training texts");
    if (options.order < 1 || options.order > 255)
      throw Error(Errc::invalid_argument, "n-gram order must be in [1,255]");
    if (!(options.k >= 0.0)) throw Error(Errc::invalid_argument, "k must be >= 0");
    if (!(options.backoff > 0.0 && options.backoff <= 1.0))
      throw Error(Errc::invalid_argument, "backoff factor must be in (0,1]");

    std::vector<std::vector<std::string>> streams;
    streams.reserve(corpus.size());
    std::map<std::string, Id> sorted;
    for (const auto& t : corpus) {
      streams.push_back(lm_tokens(t.text));
      for (const auto& tok : streams.back()) sorted.emplace(tok, 0);
    }

    NGramModel m;
    m.options_ = options;
    m.vocab_ = {std::string(kBosToken), std::string(kEosToken)};
    for (auto& [tok, id] : sorted) {
      if (tok == kBosToken || tok == kEosToken) continue;  // cannot collide with sentinels
      id = static_cast<Id>(m.vocab_.size());
      m.vocab_.push_back(tok);
    }
    m.rebuild_index();

    const std::size_t pad = options.order - 1;
    std::vector<Id> ids;
    for (const auto& stream : streams) {
      ids.assign(pad, kBos);
      for (const auto& tok : stream) ids.push_back(m.id(tok));
      ids.push_back(kEos);
      for (std::size_t j = pad; j < ids.size(); ++j) {
        for (std::size_t len = 0; len <= pad; ++len) {
          m.add(std::span<const Id>(ids.data() + (j - len), len), ids[j]);
        }
      }
    }
    return m;
  }

  /// Adds `times` observations of `next` after exactly `context`.
  void add(std::span<const Id> context, Id next, std::uint64_t times = 1) {
    if (context.size() >= order()) throw Error(Errc::invalid_argument, "context too long");
    auto valid = [&](Id id) { return id < vocab_.size(); };
    if (!valid(next) || next == kBos || !std::all_of(context.begin(), context.end(), valid))
      throw Error(Errc::invalid_argument, "token id out of range");
    auto& stats = contexts_[std::vector<Id>(context.begin(), context.end())];
    stats.total += times;
    stats.next[next] += times;
  }

  /// P(next | history) using at most order-1 trailing history ids.
  /// Observed contexts use add-k over the corpus vocabulary; </s> gets no
  /// pseudo-count and, when unobserved in the context, is scored from the
  /// next shorter context like any unobserved context.
  double prob(std::span<const Id> history, Id next) const {
    require_trained();
    const double V = static_cast<double>(vocab_size());
    const std::size_t max_len = std::min(history.size(), order() - 1);
    double scale = 1.0;
    std::vector<Id> ctx;
    for (std::size_t len = max_len;; --len) {
      ctx.assign(history.end() - static_cast<std::ptrdiff_t>(len), history.end());
      if (const ContextStats* stats = find(ctx)) {
        const double c = static_cast<double>(stats->count(next));
        const double den = static_cast<double>(stats->total) + options_.k * V;
        if (next == kEos) {
          if (c > 0) return scale * c / den;
        } else if (options_.k > 0 || c > 0) {
          return scale * (c + options_.k) / den;
        }
      }
      if (len == 0) return 0.0;
      scale *= options_.backoff;
    }
  }

  /// Scores of every outcome id (index = id; index 0 is unused) given the
  /// history. Same rules as prob().
  std::vector<double> distribution(std::span<const Id> history) const {
    require_trained();
    const double V = static_cast<double>(vocab_size());
    std::vector<double> scores(vocab_.size(), -1.0);
    scores[kBos] = 0.0;
    std::size_t unassigned = vocab_.size() - 1;
    const std::size_t max_len = std::min(history.size(), order() - 1);
    double scale = 1.0;
    std::vector<Id> ctx;
    for (std::size_t len = max_len; unassigned > 0; --len) {
      ctx.assign(history.end() - static_cast<std::ptrdiff_t>(len), history.end());
      if (const ContextStats* stats = find(ctx)) {
        const double den = static_cast<double>(stats->total) + options_.k * V;
        for (Id w = 1; w < vocab_.size(); ++w) {
          if (scores[w] >= 0.0) continue;
          const double c = static_cast<double>(stats->count(w));
          if (w == kEos ? c > 0 : (options_.k > 0 || c > 0)) {
            scores[w] = scale * (c + (w == kEos ? 0.0 : options_.k)) / den;
            --unassigned;
          }
        }
      }
      if (len == 0) break;
      scale *= options_.backoff;
    }
    for (auto& s : scores)
      if (s < 0.0) s = 0.0;
    return scores;
  }

  /// Natural-log probability of each token, conditioned on the optional
  /// context prefix and all preceding tokens (truncated to order-1).
  std::vector<double> score(const std::vector<std::string>& tokens,
                            const std::vector<std::string>& context = {}) const {
    require_trained();
    std::vector<Id> history(order() - 1, kBos);
    for (const auto& t : context) history.push_back(id(t));
    std::vector<double> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
      Id w = t == kEosToken ? kEos : id(t);
      out.push_back(std::log(prob(history, w)));
      history.push_back(w);
    }
    return out;
  }

  // -------------------------------------------------------------------------
  // Serialization

  static constexpr std::string_view kMagic = "OMPNGRAM1";
  static constexpr std::uint32_t kFormatVersion = 1;

  /// Layout (little-endian): magic, u32 version, u64 payload length,
  /// payload, u64 FNV-1a checksum of the payload. Payload: u32 order,
  /// f64 k, f64 backoff, u32 vocab count, vocab entries (u32 length +
  /// bytes, id order), u64 context count, then contexts in sorted order
  /// (u8 length, u32 ids, u64 total, u32 entry count, (u32 id, u64 count)
  /// pairs sorted by id).
  std::string serialize() const {
    require_trained();
    std::string payload;
    put_u32(payload, static_cast<std::uint32_t>(options_.order));
    put_f64(payload, options_.k);
    put_f64(payload, options_.backoff);
    put_u32(payload, static_cast<std::uint32_t>(vocab_.size()));
    for (const auto& tok : vocab_) {
      put_u32(payload, static_cast<std::uint32_t>(tok.size()));
      payload += tok;
    }
    put_u64(payload, contexts_.size());
    for (const auto& [ctx, stats] : contexts_) {
      payload += static_cast<char>(ctx.size());
      for (Id id : ctx) put_u32(payload, id);
      put_u64(payload, stats.total);
      put_u32(payload, static_cast<std::uint32_t>(stats.next.size()));
      for (const auto& [id, count] : stats.next) {
        put_u32(payload, id);
        put_u64(payload, count);
      }
    }
    std::string out(kMagic);
    put_u32(out, kFormatVersion);
    put_u64(out, payload.size());
    out += payload;
    put_u64(out, fnv1a(payload));
    return out;
  }

  static NGramModel deserialize(std::string_view bytes) {
    if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
      throw Error(Errc::bad_magic, "not an n-gram model file");
    Reader header{bytes.substr(kMagic.size())};
    const std::uint32_t version = header.u32();
    if (version != kFormatVersion)
      throw Error(Errc::version_mismatch,
                  "model format version " + std::to_string(version) +
                      ", expected " + std::to_string(kFormatVersion));
    const std::uint64_t size = header.u64();
    if (header.rest.size() != size + 8) corrupt("length mismatch");
    std::string_view payload = header.rest.substr(0, size);
    Reader tail{header.rest.substr(size)};
    if (tail.u64() != fnv1a(payload)) corrupt("checksum mismatch");

    Reader r{payload};
    NGramModel m;
    m.options_.order = r.u32();
    m.options_.k = r.f64();
    m.options_.backoff = r.f64();
    if (m.options_.order < 1 || m.options_.order > 255) corrupt("bad order");
    const std::uint32_t nvocab = r.u32();
    if (nvocab < 2 || nvocab > r.rest.size()) corrupt("bad vocabulary size");
    m.vocab_.reserve(nvocab);
    for (std::uint32_t i = 0; i < nvocab; ++i) m.vocab_.emplace_back(r.bytes(r.u32()));
    if (m.vocab_[kBos] != kBosToken || m.vocab_[kEos] != kEosToken)
      corrupt("bad sentinels");
    m.rebuild_index();
    const std::uint64_t ncontexts = r.u64();
    for (std::uint64_t i = 0; i < ncontexts; ++i) {
      const std::size_t len = r.u8();
      if (len >= m.options_.order) corrupt("context longer than order");
      std::vector<Id> ctx(len);
      for (auto& id : ctx) id = m.checked_id(r.u32());
      ContextStats stats;
      stats.total = r.u64();
      const std::uint32_t nnext = r.u32();
      for (std::uint32_t j = 0; j < nnext; ++j) {
        Id id = m.checked_id(r.u32());
        stats.next[id] = r.u64();
      }
      m.contexts_.emplace(std::move(ctx), std::move(stats));
    }
    if (!r.rest.empty()) corrupt("trailing bytes");
    if (!m.trained()) corrupt("no contexts");
    return m;
  }

  void save(const std::filesystem::path& path) const { write_file(path, serialize()); }
  static NGramModel load(const std::filesystem::path& path) {
    return deserialize(read_file(path));
  }

 private:
  NGramOptions options_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, Id> index_;
  std::map<std::vector<Id>, ContextStats> contexts_;

  void require_trained() const {
    if (!trained()) throw Error(Errc::not_trained, "n-gram model is not trained");
  }
  void rebuild_index() {
    index_.clear();
    for (Id i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], i);
  }
  const ContextStats* find(const std::vector<Id>& ctx) const {
    auto it = contexts_.find(ctx);
    return it == contexts_.end() || it->second.total == 0 ? nullptr : &it->second;
  }
  Id checked_id(std::uint32_t id) const {
    if (id >= vocab_.size()) corrupt("token id out of range");
    return id;
  }

  [[noreturn]] static void corrupt(std::string_view why) {
    throw Error(Errc::corrupt_payload, "corrupt model file: " + std::string(why));
  }

  static void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  static void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  static void put_f64(std::string& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  static std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  struct Reader {
    std::string_view rest;

    std::string_view bytes(std::size_t n) {
      if (rest.size() < n) corrupt("truncated");
      auto out = rest.substr(0, n);
      rest.remove_prefix(n);
      return out;
    }
    std::uint64_t le(std::size_t n) {
      auto b = bytes(n);
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < n; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
      return v;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(le(8)); }
  };
};

inline NGramModel train_ngram(const std::vector<TrainingText>& corpus,
                              const NGramOptions& options = {}) {
  return NGramModel::train(corpus, options);
}

/// Completion backend over a shared read-only model.
class NGramBackend final : public Backend {
 public:
  explicit NGramBackend(std::shared_ptr<const NGramModel> model)
      : model_(std::move(model)) {}

  const NGramModel& model() const {
    if (!model_ || !model_->trained())
      throw Error(Errc::not_trained, "n-gram backend has no trained model");
    return *model_;
  }

  CompletionResult complete(const CompletionRequest& request) override {
    request.validate();
    const NGramModel& m = model();
    using Id = NGramModel::Id;
    std::vector<Id> history(m.order() - 1, NGramModel::kBos);
    for (const auto& t : lm_tokens(request.prompt)) history.push_back(m.id(t));

    std::mt19937_64 rng(request.seed);
    CompletionResult result;
    result.finish_reason = FinishReason::length;
    std::vector<TokenLogprob> logprobs;
    for (std::size_t step = 0; step < request.max_tokens; ++step) {
      const auto scores = m.distribution(history);
      const Id next = request.temperature > 0.0 ? sample(scores, request.temperature, rng)
                                                : argmax(scores);
      if (next == NGramModel::kEos) {
        result.finish_reason = FinishReason::end_of_model;
        break;
      }
      std::string piece = detokenize_piece(m.token(next));
      result.text += piece;
      logprobs.push_back({std::move(piece), std::log(scores[next])});
      history.push_back(next);
      if (truncate_at_stop(result.text, request.stop_sequences)) {
        result.finish_reason = FinishReason::stop;
        trim_logprobs(logprobs, result.text.size());
        break;
      }
    }
    result.token_logprobs = std::move(logprobs);
    return result;
  }

  std::string name() const override { return "ngram"; }
  bool supports_logprobs() const override { return true; }

  std::vector<TokenLogprob> score_text(std::string_view text) const override {
    auto tokens = lm_tokens(text);
    tokens.emplace_back(kEosToken);
    const auto lps = model().score(tokens);
    std::vector<TokenLogprob> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i)
      out.push_back({std::move(tokens[i]), lps[i]});
    return out;
  }

 private:
  std::shared_ptr<const NGramModel> model_;

  // Highest score; ties go to the lowest id (</s>, then lexicographic).
  static NGramModel::Id argmax(const std::vector<double>& scores) {
    NGramModel::Id best = NGramModel::kEos;
    for (NGramModel::Id w = 2; w < scores.size(); ++w)
      if (scores[w] > scores[best]) best = w;
    return best;
  }

  static NGramModel::Id sample(const std::vector<double>& scores, double temperature,
                               std::mt19937_64& rng) {
    std::vector<double> weights(scores.size(), 0.0);
    double total = 0.0;
    for (std::size_t w = 1; w < scores.size(); ++w) {
      if (scores[w] > 0.0) weights[w] = std::exp(std::log(scores[w]) / temperature);
      total += weights[w];
    }
    if (!(total > 0.0)) return argmax(scores);
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
    double acc = 0.0;
    for (std::size_t w = 1; w < weights.size(); ++w) {
      acc += weights[w];
      if (u < acc) return static_cast<NGramModel::Id>(w);
    }
    return argmax(scores);
  }

  // Keeps the token list consistent with text truncated to `length` bytes.
  static void trim_logprobs(std::vector<TokenLogprob>& lps, std::size_t length) {
    std::size_t used = 0;
    std::size_t keep = 0;
    for (; keep < lps.size() && used < length; ++keep) {
      if (used + lps[keep].token.size() > length)
        lps[keep].token.resize(length - used);
      used += lps[keep].token.size();
    }
    lps.resize(keep);
  }
};

}  // namespace ompforge
