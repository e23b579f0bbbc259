#pragma once

// OpenMP pragma model: a fixed `#pragma omp` prefix followed by an ordered
// list of directives/clauses, each optionally carrying a parenthesized
// control structure.

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ompforge/error.hpp"

namespace ompforge {

inline constexpr std::string_view kPragmaPrefix = "#pragma omp";

enum class ItemKind { directive, clause };

constexpr std::string_view to_string(ItemKind kind) noexcept {
  return kind == ItemKind::directive ? "directive" : "clause";
}

namespace keywords {

// OpenMP 4.5 construct keywords (plus `end` and `loop`, which show up in
// real corpora). `ordered` and `simd` double as clauses; they classify as
// directives.
inline constexpr auto kDirectives = std::to_array<std::string_view>({
    "atomic",      "barrier",      "cancel",  "cancellation", "critical",
    "data",        "declare",      "distribute", "end",       "enter",
    "exit",        "flush",        "for",     "loop",         "master",
    "ordered",     "parallel",     "point",   "section",      "sections",
    "simd",        "single",       "target",  "task",         "taskgroup",
    "taskloop",    "taskwait",     "taskyield", "teams",      "threadprivate",
    "update",      "workshare",    "requires",
});

inline constexpr auto kClauses = std::to_array<std::string_view>({
    "aligned",        "capture",        "collapse",      "copyin",
    "copyprivate",    "default",        "defaultmap",    "depend",
    "device",         "dist_schedule",  "final",         "firstprivate",
    "from",           "grainsize",      "hint",          "if",
    "in_reduction",   "inbranch",       "is_device_ptr", "lastprivate",
    "linear",         "link",           "map",           "mergeable",
    "nogroup",        "nontemporal",    "notinbranch",   "nowait",
    "num_tasks",      "num_teams",      "num_threads",   "order",
    "priority",       "private",        "proc_bind",     "read",
    "reduction",      "safelen",        "schedule",      "seq_cst",
    "shared",         "simdlen",        "task_reduction", "thread_limit",
    "threads",        "to",             "uniform",       "untied",
    "use_device_ptr", "write",          "allocate",      "bind",
    "detach",         "affinity",
});

constexpr bool contains(const auto& table, std::string_view name) {
  return std::find(table.begin(), table.end(), name) != table.end();
}

}  // namespace keywords

constexpr bool is_known_keyword(std::string_view name) {
  return keywords::contains(keywords::kDirectives, name) ||
         keywords::contains(keywords::kClauses, name);
}

// Unknown names classify as clauses.
constexpr ItemKind classify(std::string_view name) {
  return keywords::contains(keywords::kDirectives, name) ? ItemKind::directive
                                                         : ItemKind::clause;
}

struct PragmaItem {
  ItemKind kind = ItemKind::clause;
  std::string name;
  std::optional<std::string> control;

  friend bool operator==(const PragmaItem&, const PragmaItem&) = default;
};

struct PragmaAst {
  std::vector<PragmaItem> items;
  std::string raw;

  // Equality is structural; `raw` is provenance only.
  friend bool operator==(const PragmaAst& a, const PragmaAst& b) {
    return a.items == b.items;
  }

  const PragmaItem* find(std::string_view name) const {
    auto it = std::find_if(items.begin(), items.end(),
                           [&](const PragmaItem& i) { return i.name == name; });
    return it == items.end() ? nullptr : &*it;
  }
  bool has(std::string_view name) const { return find(name) != nullptr; }
};

namespace detail {

constexpr bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}
constexpr bool is_word(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}
constexpr bool is_word_start(char c) noexcept {
  return is_word(c) && !(c >= '0' && c <= '9');
}

// Index one past the `)` matching the `(` at `open`, or npos when unbalanced.
// Quotes are honoured so parentheses inside literals do not count.
inline std::size_t match_paren(std::string_view s, std::size_t open) {
  int depth = 0;
  char quote = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') quote = c;
    else if (c == '(') ++depth;
    else if (c == ')' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

inline std::size_t skip_space(std::string_view s, std::size_t i) {
  while (i < s.size() && is_space(s[i])) ++i;
  return i;
}

inline std::size_t read_word(std::string_view s, std::size_t i) {
  while (i < s.size() && is_word(s[i])) ++i;
  return i;
}

[[noreturn]] inline void malformed(std::string_view text, std::string_view why) {
  throw Error(Errc::malformed_pragma,
              std::string(why) + " in pragma: " + std::string(text));
}

}  // namespace detail

/// Canonical control text: whitespace runs are dropped, except a single
/// space survives between two identifier characters (`a b` stays `a b`,
/// `static , 4` becomes `static,4`). Quoted literals are kept verbatim.
inline std::string canonical_control(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  char quote = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quote) {
      out += c;
      if (c == '\\' && i + 1 < text.size()) out += text[++i];
      else if (c == quote) quote = 0;
      continue;
    }
    if (detail::is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty() && detail::is_word(out.back()) &&
        detail::is_word(c))
      out += ' ';
    pending_space = false;
    if (c == '"' || c == '\'') quote = c;
    out += c;
  }
  return out;
}

/// Parses one pragma line (continuations already joined).
/// Throws Error(MalformedPragma) on a missing prefix, unbalanced
/// parentheses, or an item without a name.
inline PragmaAst parse_pragma(std::string_view text) {
  using namespace detail;
  PragmaAst ast;
  ast.raw = std::string(text);

  std::size_t i = skip_space(text, 0);
  if (i >= text.size() || text[i] != '#') malformed(text, "missing '#'");
  i = skip_space(text, i + 1);
  std::size_t end = read_word(text, i);
  if (text.substr(i, end - i) != "pragma") malformed(text, "missing 'pragma'");
  i = skip_space(text, end);
  end = read_word(text, i);
  if (text.substr(i, end - i) != "omp") malformed(text, "missing 'omp'");
  i = end;
  if (i < text.size() && !is_space(text[i]))
    malformed(text, "unexpected character after prefix");

  while (true) {
    while (i < text.size() && (is_space(text[i]) || text[i] == ',')) ++i;
    if (i >= text.size()) break;
    if (!is_word_start(text[i])) malformed(text, "empty item name");
    end = read_word(text, i);
    PragmaItem item;
    item.name = std::string(text.substr(i, end - i));
    item.kind = classify(item.name);
    i = skip_space(text, end);
    if (i < text.size() && text[i] == '(') {
      std::size_t close = match_paren(text, i);
      if (close == std::string_view::npos)
        malformed(text, "unbalanced parentheses");
      item.control = canonical_control(text.substr(i + 1, close - i - 2));
      i = close;
    } else if (i < text.size() && text[i] == ')') {
      malformed(text, "unbalanced parentheses");
    }
    ast.items.push_back(std::move(item));
  }
  return ast;
}

inline std::optional<PragmaAst> try_parse_pragma(std::string_view text) {
  try {
    return parse_pragma(text);
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline std::string render_item(const PragmaItem& item) {
  std::string out = item.name;
  if (item.control) {
    out += '(';
    out += *item.control;
    out += ')';
  }
  return out;
}

/// Canonical form: `#pragma omp` then single-space separated items.
inline std::string render_pragma(const PragmaAst& ast) {
  std::string out(kPragmaPrefix);
  for (const auto& item : ast.items) {
    out += ' ';
    out += render_item(item);
  }
  return out;
}

inline std::string canonicalize(std::string_view text) {
  return render_pragma(parse_pragma(text));
}

inline std::optional<std::string> try_canonicalize(std::string_view text) {
  if (auto ast = try_parse_pragma(text)) return render_pragma(*ast);
  return std::nullopt;
}

// Exact match of canonical renderings. Total: unparseable input never matches.
inline bool strict_match(std::string_view expected, std::string_view generated) {
  auto a = try_canonicalize(expected);
  auto b = try_canonicalize(generated);
  return a && b && *a == *b;
}

namespace detail {

inline void require_known(std::string_view clause) {
  if (!is_known_keyword(clause))
    throw Error(Errc::unknown_clause,
                "unknown clause: " + std::string(clause));
}

inline std::vector<std::optional<std::string>> controls_of(
    const PragmaAst& ast, std::string_view name) {
  std::vector<std::optional<std::string>> out;
  for (const auto& item : ast.items)
    if (item.name == name) out.push_back(item.control);
  return out;
}

}  // namespace detail

// Presence agreement only; controls are ignored.
inline bool clause_match(const PragmaAst& expected, const PragmaAst& generated,
                         std::string_view clause) {
  detail::require_known(clause);
  return expected.has(clause) == generated.has(clause);
}

inline bool clause_and_control_match(const PragmaAst& expected,
                                     const PragmaAst& generated,
                                     std::string_view clause) {
  if (!clause_match(expected, generated, clause)) return false;
  if (!expected.has(clause)) return true;
  // Controls are already canonical; repeated clauses compare in order.
  return detail::controls_of(expected, clause) ==
         detail::controls_of(generated, clause);
}

struct FirstComponent {
  std::optional<PragmaItem> item;  // empty means end-of-pragma
  std::string remainder;

  bool end_of_pragma() const noexcept { return !item.has_value(); }
};

/// Extracts the first directive/clause from raw backend output that
/// continues a partial pragma. Only the name is retained unless
/// `keep_control` is set; then a balanced `(...)` right after the name is
/// kept as the item's control. Empty output, a leading newline, or anything
/// that does not start an identifier means end-of-pragma.
inline FirstComponent first_component(std::string_view continuation,
                                      bool keep_control = false) {
  using namespace detail;
  std::size_t i = 0;
  while (i < continuation.size() &&
         (continuation[i] == ' ' || continuation[i] == '\t' ||
          continuation[i] == ',' || continuation[i] == '\v' ||
          continuation[i] == '\f'))
    ++i;
  FirstComponent out;
  if (i >= continuation.size() || !is_word_start(continuation[i])) {
    out.remainder = std::string(continuation.substr(i));
    return out;
  }
  std::size_t end = read_word(continuation, i);
  PragmaItem item;
  item.name = std::string(continuation.substr(i, end - i));
  item.kind = classify(item.name);
  if (keep_control) {
    std::size_t j = end;
    while (j < continuation.size() &&
           (continuation[j] == ' ' || continuation[j] == '\t'))
      ++j;
    if (j < continuation.size() && continuation[j] == '(') {
      std::size_t close = match_paren(continuation, j);
      if (close != std::string_view::npos) {
        item.control =
            canonical_control(continuation.substr(j + 1, close - j - 2));
        end = close;
      }
    }
  }
  out.item = std::move(item);
  out.remainder = std::string(continuation.substr(end));
  return out;
}

}  // namespace ompforge
