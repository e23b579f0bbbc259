#pragma once

// Lexical C/C++ tokenizer used for size filtering and as the n-gram
// vocabulary source. Whitespace separates tokens and is never emitted.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ompforge {

struct Token {
  std::string text;
  std::size_t offset = 0;  // byte offset of the first character in the input

  friend bool operator==(const Token&, const Token&) = default;
};

namespace detail {

constexpr bool lex_space(unsigned char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}
constexpr bool lex_digit(unsigned char c) noexcept { return c >= '0' && c <= '9'; }
// Bytes >= 0x80 are treated as identifier characters so UTF-8 identifiers
// stay whole.
constexpr bool lex_ident_start(unsigned char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' ||
         c >= 0x80;
}
constexpr bool lex_ident(unsigned char c) noexcept {
  return lex_ident_start(c) || lex_digit(c);
}

// Longest first; maximal munch picks the first entry that matches.
inline constexpr auto kPunctuators = std::to_array<std::string_view>({
    "...", "<<=", ">>=", "->*", "<=>",
    "::",  "->",  "++",  "--",  "<<",  ">>",  "<=",  ">=",  "==",  "!=",
    "&&",  "||",  "+=",  "-=",  "*=",  "/=",  "%=",  "&=",  "|=",  "^=",
    "##",  ".*",
});

constexpr bool is_encoding_prefix(std::string_view id) noexcept {
  return id == "L" || id == "u" || id == "U" || id == "u8" || id == "R" ||
         id == "LR" || id == "uR" || id == "UR" || id == "u8R";
}

// End of a quoted literal starting at `open` (the quote). Unterminated
// literals stop before the newline or at end of input.
inline std::size_t scan_quoted(std::string_view s, std::size_t open) {
  const char quote = s[open];
  std::size_t i = open + 1;
  while (i < s.size()) {
    char c = s[i];
    if (c == '\\' && i + 1 < s.size()) {
      i += 2;
      continue;
    }
    if (c == '\n') return i;
    ++i;
    if (c == quote) return i;
  }
  return s.size();
}

// Raw string R"delim( ... )delim". `open` points at the opening quote.
// An invalid delimiter makes it an ordinary quoted literal.
inline std::size_t scan_raw(std::string_view s, std::size_t open) {
  std::size_t paren = open + 1;
  while (paren < s.size() && paren - open - 1 <= 16 && s[paren] != '(') {
    const char c = s[paren];
    if (c == ' ' || c == ')' || c == '\\' || c == '"' || lex_space(c)) break;
    ++paren;
  }
  if (paren >= s.size() || s[paren] != '(' || paren - open - 1 > 16)
    return scan_quoted(s, open);
  std::string terminator = ")";
  terminator += s.substr(open + 1, paren - open - 1);
  terminator += '"';
  std::size_t close = s.find(terminator, paren + 1);
  return close == std::string_view::npos ? s.size() : close + terminator.size();
}

// pp-number: digits, letters, '.', digit separators and signed exponents.
inline std::size_t scan_number(std::string_view s, std::size_t i) {
  ++i;
  while (i < s.size()) {
    unsigned char c = s[i];
    if ((c == '+' || c == '-') &&
        (s[i - 1] == 'e' || s[i - 1] == 'E' || s[i - 1] == 'p' ||
         s[i - 1] == 'P')) {
      ++i;
    } else if (lex_ident(c) || c == '.' ||
               (c == '\'' && i + 1 < s.size() && lex_ident(s[i + 1]))) {
      ++i;
    } else {
      break;
    }
  }
  return i;
}

}  // namespace detail

/// Maximal-munch tokenization. Literals are single tokens; unknown bytes
/// become single-byte tokens. Never fails.
inline std::vector<Token> tokenize(std::string_view text) {
  using namespace detail;
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = text[i];
    if (lex_space(c)) {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    if (lex_ident_start(c)) {
      end = i;
      while (end < text.size() && lex_ident(text[end])) ++end;
      if (end < text.size() && (text[end] == '"' || text[end] == '\'') &&
          is_encoding_prefix(text.substr(i, end - i))) {
        bool raw = text[end - 1] == 'R' && text[end] == '"';
        end = raw ? scan_raw(text, end) : scan_quoted(text, end);
      }
    } else if (lex_digit(c) ||
               (c == '.' && i + 1 < text.size() && lex_digit(text[i + 1]))) {
      end = scan_number(text, i);
    } else if (c == '"' || c == '\'') {
      end = scan_quoted(text, i);
    } else {
      for (auto p : kPunctuators) {
        if (text.substr(i, p.size()) == p) {
          end = i + p.size();
          break;
        }
      }
    }
    out.push_back(Token{std::string(text.substr(i, end - i)), i});
    i = end;
  }
  return out;
}

inline std::size_t count_tokens(std::string_view text) {
  return tokenize(text).size();
}

}  // namespace ompforge
