#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ompforge/error.hpp"

namespace ompforge {

using json = nlohmann::json;

/// Replaces every invalid UTF-8 sequence with U+FFFD. Returns the number of
/// replacements made.
inline std::size_t sanitize_utf8(std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::size_t replaced = 0;
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    unsigned char c = s[i];
    std::size_t len = 0;
    unsigned char lo = 0x80, hi = 0xBF;
    if (c < 0x80) len = 1;
    else if (c >= 0xC2 && c <= 0xDF) len = 2;
    else if (c >= 0xE0 && c <= 0xEF) {
      len = 3;
      if (c == 0xE0) lo = 0xA0;
      if (c == 0xED) hi = 0x9F;
    } else if (c >= 0xF0 && c <= 0xF4) {
      len = 4;
      if (c == 0xF0) lo = 0x90;
      if (c == 0xF4) hi = 0x8F;
    }
    // Count the well-formed prefix; a broken sequence is replaced once as a
    // whole (maximal subpart).
    std::size_t good = len > 0 ? 1 : 0;
    while (good > 0 && good < len && i + good < n) {
      unsigned char b = s[i + good];
      unsigned char l = good == 1 ? lo : 0x80, h = good == 1 ? hi : 0xBF;
      if (b < l || b > h) break;
      ++good;
    }
    if (len > 0 && good == len) {
      out.append(text, i, len);
      i += len;
    } else {
      out += "\xEF\xBF\xBD";
      ++replaced;
      i += std::max<std::size_t>(good, 1);
    }
  }
  if (replaced) text = std::move(out);
  return replaced;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::io_error, "short write to " + path.string());
}

// Compact, key-sorted, invalid UTF-8 replaced: stable bytes for equal values.
inline std::string dump_line(const json& value) {
  return value.dump(-1, ' ', false, json::error_handler_t::replace);
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> rows;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(Errc::io_error, path.string() + ":" + std::to_string(lineno) +
                                      ": invalid JSON: " + e.what());
    }
  }
  return rows;
}

inline std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += dump_line(row);
    out += '\n';
  }
  return out;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<json>& rows) {
  write_file(path, to_jsonl(rows));
}

}  // namespace ompforge
