#pragma once

// Corpus preprocessing: comment stripping, pragma/scope pairing, pragma
// repositioning, size filtering, deterministic splitting and pragma
// frequency statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ompforge/error.hpp"
#include "ompforge/jsonl.hpp"
#include "ompforge/lexer.hpp"
#include "ompforge/pragma.hpp"

namespace ompforge {

enum class Language { c, cpp };

constexpr std::string_view to_string(Language lang) noexcept {
  return lang == Language::c ? "c" : "cpp";
}

inline Language parse_language(std::string_view s) {
  if (s == "c") return Language::c;
  if (s == "cpp" || s == "c++" || s == "cxx") return Language::cpp;
  throw Error(Errc::invalid_argument, "unknown language: " + std::string(s));
}

struct Warning {
  std::string source;
  std::size_t offset = 0;
  std::string message;

  std::string str() const {
    return source + ":" + std::to_string(offset) + ": " + message;
  }
};

struct CorpusSample {
  std::string id;
  Language language = Language::c;
  std::string scope;
  std::string pragma;
  std::optional<std::string> repo;

  friend bool operator==(const CorpusSample&, const CorpusSample&) = default;
};

struct TrainingText {
  std::string text;

  friend bool operator==(const TrainingText&, const TrainingText&) = default;
};

struct SplitSpec {
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Comment stripping

struct StripResult {
  std::string text;
  std::vector<Warning> warnings;
};

/// Removes `//` and `/* */` comments. Block comments become one space; line
/// comments keep their terminating newline. Literals are left alone. An
/// unterminated block comment is reported and passed through unchanged.
inline StripResult strip_comments(std::string_view src,
                                  std::string_view source_name = "<input>") {
  StripResult result;
  std::string& out = result.text;
  out.reserve(src.size());
  const std::size_t n = src.size();
  std::size_t i = 0;
  bool numeric_run = false;  // inside a pp-number, where ' is a separator
  while (i < n) {
    char c = src[i];
    if (c == '/' && i + 1 < n && src[i + 1] == '/') {
      i += 2;
      while (i < n && src[i] != '\n') {
        if (src[i] == '\\' && i + 1 < n && src[i + 1] == '\n') {
          out += '\n';  // spliced comment line: drop text, keep the line
          i += 2;
          continue;
        }
        ++i;
      }
      numeric_run = false;
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '*') {
      std::size_t close = src.find("*/", i + 2);
      if (close == std::string_view::npos) {
        result.warnings.push_back(
            {std::string(source_name), i, "UnterminatedComment"});
        out.append(src.substr(i));
        break;
      }
      out += ' ';
      i = close + 2;
      numeric_run = false;
      continue;
    }
    if (c == '"' || (c == '\'' && !numeric_run)) {
      std::size_t end;
      if (c == '"' && i > 0 && src[i - 1] == 'R')
        end = detail::scan_raw(src, i);
      else
        end = detail::scan_quoted(src, i);
      out.append(src.substr(i, end - i));
      i = end;
      numeric_run = false;
      continue;
    }
    if (detail::lex_ident(static_cast<unsigned char>(c))) {
      bool prev_word = !out.empty() &&
                       detail::lex_ident(static_cast<unsigned char>(out.back()));
      if (!prev_word) numeric_run = detail::lex_digit(c);
    } else if (c != '\'' && c != '.') {
      numeric_run = false;
    }
    out += c;
    ++i;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Scope extraction

namespace detail {

inline bool is_omp_pragma_line(std::string_view line) {
  std::size_t i = skip_space(line, 0);
  if (i >= line.size() || line[i] != '#') return false;
  i = skip_space(line, i + 1);
  std::size_t end = read_word(line, i);
  if (line.substr(i, end - i) != "pragma") return false;
  i = skip_space(line, end);
  end = read_word(line, i);
  if (line.substr(i, end - i) != "omp") return false;
  return end == line.size() || is_space(line[end]);
}

// Removes backslash-newline splices.
inline std::string join_continuations(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\') {
      std::size_t j = i + 1;
      if (j < s.size() && s[j] == '\r') ++j;
      if (j < s.size() && s[j] == '\n') {
        i = j;
        continue;
      }
    }
    out += s[i];
  }
  return out;
}

// End of the logical line starting at `pos` (index of its '\n', or n),
// following backslash continuations.
inline std::size_t logical_line_end(std::string_view s, std::size_t pos) {
  while (true) {
    std::size_t nl = s.find('\n', pos);
    if (nl == std::string_view::npos) return s.size();
    std::size_t k = nl;
    if (k > 0 && s[k - 1] == '\r') --k;
    if (k > 0 && s[k - 1] == '\\') {
      pos = nl + 1;
      continue;
    }
    return nl;
  }
}

inline std::size_t skip_literal(std::string_view s, std::size_t i) {
  if (s[i] == '"' && i > 0 && s[i - 1] == 'R') return scan_raw(s, i);
  return scan_quoted(s, i);
}

inline bool quote_starts_literal(std::string_view s, std::size_t i) {
  return s[i] == '"' || !(i > 0 && lex_digit(static_cast<unsigned char>(s[i - 1])));
}

// Index one past the closer matching the opener at `open`; npos if
// unbalanced. Tracks (), [], {} together.
inline std::size_t match_group(std::string_view s, std::size_t open) {
  std::vector<char> stack;
  for (std::size_t i = open; i < s.size();) {
    char c = s[i];
    if ((c == '"' || c == '\'') && quote_starts_literal(s, i)) {
      i = skip_literal(s, i);
      continue;
    }
    if (c == '(' || c == '[' || c == '{') {
      stack.push_back(c == '(' ? ')' : c == '[' ? ']' : '}');
    } else if (c == ')' || c == ']' || c == '}') {
      if (stack.empty() || stack.back() != c) return std::string_view::npos;
      stack.pop_back();
      if (stack.empty()) return i + 1;
    }
    ++i;
  }
  return std::string_view::npos;
}

// Skips whitespace and whole preprocessor lines.
inline std::size_t skip_layout(std::string_view s, std::size_t i) {
  while (i < s.size()) {
    if (is_space(s[i])) {
      ++i;
    } else if (s[i] == '#') {
      i = logical_line_end(s, i);
    } else {
      break;
    }
  }
  return i;
}

inline std::string_view word_at(std::string_view s, std::size_t i) {
  if (i >= s.size() || !is_word_start(s[i])) return {};
  return s.substr(i, read_word(s, i) - i);
}

// One past the end of the statement starting at `i`, or nullopt when the
// input ends (or the enclosing block closes) first.
inline std::optional<std::size_t> scan_statement(std::string_view s,
                                                 std::size_t i, int nesting = 0) {
  if (nesting > 256) return std::nullopt;
  i = skip_layout(s, i);
  if (i >= s.size()) return std::nullopt;
  if (s[i] == '{') {
    std::size_t end = match_group(s, i);
    if (end == std::string_view::npos) return std::nullopt;
    return end;
  }
  std::string_view word = word_at(s, i);
  auto head_then_body = [&](std::size_t after_word) -> std::optional<std::size_t> {
    std::size_t p = skip_layout(s, after_word);
    if (p >= s.size() || s[p] != '(') return std::nullopt;
    std::size_t close = match_group(s, p);
    if (close == std::string_view::npos) return std::nullopt;
    return scan_statement(s, close, nesting + 1);
  };
  if (word == "for" || word == "while" || word == "switch") {
    return head_then_body(i + word.size());
  }
  if (word == "if") {
    auto end = head_then_body(i + word.size());
    if (!end) return std::nullopt;
    std::size_t p = skip_layout(s, *end);
    if (word_at(s, p) == "else") return scan_statement(s, p + 4, nesting + 1);
    return end;
  }
  if (word == "do") {
    auto body = scan_statement(s, i + 2, nesting + 1);
    if (!body) return std::nullopt;
    std::size_t p = skip_layout(s, *body);
    if (word_at(s, p) != "while") return std::nullopt;
    p = skip_layout(s, p + 5);
    if (p >= s.size() || s[p] != '(') return std::nullopt;
    std::size_t close = match_group(s, p);
    if (close == std::string_view::npos) return std::nullopt;
    p = skip_layout(s, close);
    if (p >= s.size() || s[p] != ';') return std::nullopt;
    return p + 1;
  }
  // Expression or declaration statement.
  for (std::size_t p = i; p < s.size();) {
    char c = s[p];
    if ((c == '"' || c == '\'') && quote_starts_literal(s, p)) {
      p = skip_literal(s, p);
      continue;
    }
    if (c == ';') return p + 1;
    if (c == '(' || c == '[') {
      std::size_t close = match_group(s, p);
      if (close == std::string_view::npos) return std::nullopt;
      p = close;
      continue;
    }
    if (c == '{') {
      std::size_t close = match_group(s, p);
      if (close == std::string_view::npos) return std::nullopt;
      std::size_t q = skip_layout(s, close);
      return (q < s.size() && s[q] == ';') ? q + 1 : close;
    }
    if (c == '}' || c == ')' || c == ']') return std::nullopt;
    ++p;
  }
  return std::nullopt;
}

}  // namespace detail

struct ExtractResult {
  std::vector<CorpusSample> samples;
  std::vector<Warning> warnings;
};

/// Pairs every `#pragma omp` line of comment-stripped source with the
/// statement that follows it. Stacked pragmas share one scope and yield one
/// sample each. Sample ids are `<source_name>:<byte offset of the pragma>`.
inline ExtractResult extract_omp_regions(std::string_view src,
                                         std::string_view source_name = "<input>",
                                         Language lang = Language::c,
                                         std::optional<std::string> repo = {}) {
  ExtractResult result;
  struct Pending {
    std::size_t offset;
    std::string text;
  };
  std::vector<Pending> pending;

  auto drop_pending = [&](std::string_view why) {
    for (const auto& p : pending)
      result.warnings.push_back({std::string(source_name), p.offset,
                                 std::string(why) + ": " + p.text});
    pending.clear();
  };

  std::size_t pos = 0;
  while (pos < src.size()) {
    std::size_t first = pos;
    while (first < src.size() && src[first] != '\n' && detail::is_space(src[first]))
      ++first;
    std::size_t line_end = detail::logical_line_end(src, pos);
    if (first >= line_end) {  // blank line
      pos = line_end + 1;
      continue;
    }
    if (src[first] == '#') {
      std::string joined =
          detail::join_continuations(src.substr(first, line_end - first));
      while (!joined.empty() && detail::is_space(joined.back())) joined.pop_back();
      if (detail::is_omp_pragma_line(joined)) {
        if (try_parse_pragma(joined))
          pending.push_back({first, std::move(joined)});
        else
          result.warnings.push_back({std::string(source_name), first,
                                     "MalformedPragma: " + joined});
      }
      pos = line_end + 1;
      continue;
    }
    if (!pending.empty()) {
      auto end = detail::scan_statement(src, first);
      if (end) {
        std::string scope(src.substr(first, *end - first));
        for (auto& p : pending) {
          CorpusSample sample;
          sample.id = std::string(source_name) + ":" + std::to_string(p.offset);
          sample.language = lang;
          sample.scope = scope;
          sample.pragma = std::move(p.text);
          sample.repo = repo;
          result.samples.push_back(std::move(sample));
        }
        pending.clear();
      } else {
        drop_pending("no following statement");
      }
    }
    // Continue line by line so pragmas nested in this scope get their own
    // samples.
    pos = line_end + 1;
  }
  if (!pending.empty()) drop_pending("no following statement");
  return result;
}

// ---------------------------------------------------------------------------
// Repositioning and filtering

/// Training text: scope, newline, canonical pragma, newline.
inline TrainingText reposition(const CorpusSample& sample) {
  TrainingText t;
  t.text = sample.scope;
  t.text += '\n';
  t.text += canonicalize(sample.pragma);
  t.text += '\n';
  return t;
}

struct FilterOptions {
  std::size_t max_tokens = 100;
  std::size_t max_bytes = 1u << 20;
};

enum class FilterDecision { keep, drop_tokens, drop_bytes };

constexpr std::string_view to_string(FilterDecision d) noexcept {
  switch (d) {
    case FilterDecision::keep: return "keep";
    case FilterDecision::drop_tokens: return "tokens";
    case FilterDecision::drop_bytes: return "bytes";
  }
  return "keep";
}

// The byte bound is checked first; a text over both limits is attributed to
// bytes.
inline FilterDecision size_filter(const TrainingText& text,
                                  const FilterOptions& options = {}) {
  if (text.text.size() > options.max_bytes) return FilterDecision::drop_bytes;
  if (count_tokens(text.text) > options.max_tokens)
    return FilterDecision::drop_tokens;
  return FilterDecision::keep;
}

// ---------------------------------------------------------------------------
// Splitting

namespace detail {

// Unbiased integer in [0, bound) from a fully specified engine, so splits
// are identical across standard library implementations.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace detail

/// Test-set size: round half up of fraction * n.
inline std::size_t test_size(std::size_t n, double fraction) {
  return static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(n) + 0.5 + 1e-9));
}

/// Deterministic partition into (train, test). Both halves keep the input's
/// relative order.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& corpus,
                                                const SplitSpec& spec) {
  if (corpus.empty()) throw Error(Errc::empty_corpus, "cannot split an empty corpus");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    throw Error(Errc::invalid_argument, "test fraction must be in (0,1)");

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[detail::bounded(rng, i + 1)]);

  std::vector<bool> in_test(corpus.size(), false);
  const std::size_t k = std::min(test_size(corpus.size(), spec.test_fraction),
                                 corpus.size());
  for (std::size_t i = 0; i < k; ++i) in_test[order[i]] = true;

  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (in_test[i] ? out.second : out.first).push_back(corpus[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Frequency statistics

using Histogram = std::vector<std::pair<std::string, std::size_t>>;

/// Canonical pragma counts, most frequent first, ties lexicographic.
/// Unparseable entries are counted under their trimmed raw text.
/// `top_k == 0` keeps everything.
template <typename Range>
Histogram pragma_frequency(const Range& pragmas, std::size_t top_k = 0) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : pragmas) {
    std::string_view raw(p);
    if (auto canon = try_canonicalize(raw)) {
      ++counts[*canon];
    } else {
      std::size_t b = raw.find_first_not_of(" \t\r\n");
      std::size_t e = raw.find_last_not_of(" \t\r\n");
      ++counts[b == std::string_view::npos ? std::string()
                                           : std::string(raw.substr(b, e - b + 1))];
    }
  }
  Histogram hist(counts.begin(), counts.end());
  std::stable_sort(hist.begin(), hist.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (top_k && hist.size() > top_k) hist.resize(top_k);
  return hist;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const CorpusSample& s) {
  return json{{"id", s.id},
              {"lang", std::string(to_string(s.language))},
              {"scope", s.scope},
              {"pragma", s.pragma},
              {"repo", s.repo ? json(*s.repo) : json(nullptr)}};
}

inline CorpusSample sample_from_json(const json& j) {
  try {
    CorpusSample s;
    s.id = j.at("id").get<std::string>();
    s.language = parse_language(j.at("lang").get<std::string>());
    s.scope = j.at("scope").get<std::string>();
    s.pragma = j.at("pragma").get<std::string>();
    if (j.contains("repo") && !j["repo"].is_null())
      s.repo = j["repo"].get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw Error(Errc::io_error, std::string("bad corpus record: ") + e.what());
  }
}

inline json to_json(const TrainingText& t) { return json{{"text", t.text}}; }

inline TrainingText text_from_json(const json& j) {
  try {
    if (j.contains("text")) return TrainingText{j.at("text").get<std::string>()};
    return reposition(sample_from_json(j));
  } catch (const json::exception& e) {
    throw Error(Errc::io_error, std::string("bad training text record: ") + e.what());
  }
}

inline std::vector<CorpusSample> load_samples(const std::filesystem::path& path) {
  std::vector<CorpusSample> out;
  for (const auto& row : read_jsonl(path)) out.push_back(sample_from_json(row));
  return out;
}

inline std::vector<TrainingText> load_texts(const std::filesystem::path& path) {
  std::vector<TrainingText> out;
  for (const auto& row : read_jsonl(path)) out.push_back(text_from_json(row));
  return out;
}

template <typename T>
void save_jsonl(const std::filesystem::path& path, const std::vector<T>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& item : items) rows.push_back(to_json(item));
  write_jsonl(path, rows);
}

// ---------------------------------------------------------------------------
// Whole-corpus build

struct SourceFile {
  std::filesystem::path path;
  Language language = Language::c;
  std::optional<std::string> repo;
};

inline std::optional<Language> language_for(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".c" || ext == ".h") return Language::c;
  if (ext == ".cc" || ext == ".cpp" || ext == ".cxx" || ext == ".hpp" ||
      ext == ".hh" || ext == ".hxx")
    return Language::cpp;
  return std::nullopt;
}

/// Source files under `root`, sorted by path.
inline std::vector<SourceFile> discover_sources(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<SourceFile> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (auto lang = language_for(entry.path()))
      files.push_back({entry.path(), *lang, std::nullopt});
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.path < b.path; });
  return files;
}

/// Reads a JSONL manifest of `{"path", "lang", "repo"}` records. Relative
/// paths resolve against the manifest's directory.
inline std::vector<SourceFile> read_manifest(const std::filesystem::path& manifest) {
  std::vector<SourceFile> files;
  for (const auto& row : read_jsonl(manifest)) {
    SourceFile f;
    f.path = row.at("path").get<std::string>();
    if (f.path.is_relative()) f.path = manifest.parent_path() / f.path;
    if (row.contains("lang") && !row["lang"].is_null())
      f.language = parse_language(row["lang"].get<std::string>());
    else
      f.language = language_for(f.path).value_or(Language::c);
    if (row.contains("repo") && !row["repo"].is_null())
      f.repo = row["repo"].get<std::string>();
    files.push_back(std::move(f));
  }
  return files;
}

struct CorpusBuild {
  std::vector<CorpusSample> samples;  // kept samples
  std::vector<TrainingText> texts;    // reposition(samples[i])
  std::vector<Warning> warnings;
  std::size_t files = 0;
  std::size_t extracted = 0;
  std::size_t dropped_tokens = 0;
  std::size_t dropped_bytes = 0;
};

struct FileResult {
  std::vector<CorpusSample> samples;
  std::vector<Warning> warnings;
};

/// Strip, extract and attach provenance for one file's contents.
inline FileResult process_source(std::string content, const std::string& name,
                                 Language lang,
                                 const std::optional<std::string>& repo) {
  FileResult r;
  if (std::size_t bad = sanitize_utf8(content))
    r.warnings.push_back({name, 0, "replaced " + std::to_string(bad) +
                                       " invalid UTF-8 sequence(s)"});
  auto stripped = strip_comments(content, name);
  auto extracted = extract_omp_regions(stripped.text, name, lang, repo);
  r.samples = std::move(extracted.samples);
  r.warnings.insert(r.warnings.end(), stripped.warnings.begin(),
                    stripped.warnings.end());
  r.warnings.insert(r.warnings.end(), extracted.warnings.begin(),
                    extracted.warnings.end());
  return r;
}

/// Runs the full preprocessing over `files` with up to `jobs` workers.
/// Output order is by file order then offset, independent of `jobs`.
inline CorpusBuild build_corpus(const std::vector<SourceFile>& files,
                                const FilterOptions& filter, unsigned jobs = 1) {
  std::vector<FileResult> per_file(files.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < files.size(); i += step)
      per_file[i] = process_source(read_file(files[i].path),
                                   files[i].path.generic_string(),
                                   files[i].language, files[i].repo);
  };
  jobs = std::max(1u, jobs);
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::future<void>> tasks;
    for (unsigned w = 0; w < jobs; ++w)
      tasks.push_back(std::async(std::launch::async, work, w, jobs));
    for (auto& t : tasks) t.get();
  }

  CorpusBuild build;
  build.files = files.size();
  for (auto& fr : per_file) {
    build.warnings.insert(build.warnings.end(), fr.warnings.begin(), fr.warnings.end());
    for (auto& sample : fr.samples) {
      ++build.extracted;
      TrainingText text = reposition(sample);
      switch (size_filter(text, filter)) {
        case FilterDecision::keep:
          build.samples.push_back(std::move(sample));
          build.texts.push_back(std::move(text));
          break;
        case FilterDecision::drop_tokens: ++build.dropped_tokens; break;
        case FilterDecision::drop_bytes: ++build.dropped_bytes; break;
      }
    }
  }
  return build;
}

}  // namespace ompforge
