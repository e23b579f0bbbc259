#pragma once

// Run configuration: defaults, TOML file loading with unknown-key
// rejection, and TOML/JSON rendering of the resolved values.

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "toml.hpp"
#include "ompforge/chain.hpp"
#include "ompforge/corpus.hpp"
#include "ompforge/error.hpp"
#include "ompforge/eval.hpp"
#include "ompforge/ngram.hpp"
#include "ompforge/remote.hpp"

namespace ompforge {

struct RemoteSettings {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "omp-model";
  double timeout = 60.0;
  unsigned concurrency = 4;
};

struct Config {
  std::uint64_t seed = 0;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());

  std::vector<std::string> corpus_paths;
  FilterOptions filter;        // 100 tokens, 1 MiB
  double split_fraction = 0.10;

  std::string backend = "ngram";  // ngram | remote | scripted
  std::string model_path = "model.bin";
  NGramOptions ngram;
  RemoteSettings remote;
  std::string script_path;

  std::size_t n_chain = 256;
  bool retain_controls = false;
  std::size_t max_tokens = 256;
  double temperature = 0.0;

  std::size_t top_k = 15;
  std::vector<std::string> clauses = {"private", "reduction", "simd"};
  int subtest = 1;
  std::vector<std::string> filters = default_chain_filters();

  GenerationOptions generation() const {
    GenerationOptions g;
    g.max_tokens = max_tokens;
    g.temperature = temperature;
    g.seed = seed;
    g.n_chain = n_chain;
    g.retain_controls = retain_controls;
    return g;
  }

  SplitSpec split_spec() const { return SplitSpec{split_fraction, seed}; }

  RemoteOptions remote_options() const {
    return RemoteOptions{remote.base_url, remote.model, remote.timeout, remote.concurrency};
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(Errc::config_error, what); };
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) bad("split.fraction must be in (0,1)");
    if (backend != "ngram" && backend != "remote" && backend != "scripted")
      bad("backend.kind must be ngram, remote or scripted");
    if (ngram.order < 1 || ngram.order > 255) bad("backend.ngram.order must be in [1,255]");
    if (ngram.k < 0) bad("backend.ngram.k must be >= 0");
    if (!(ngram.backoff > 0 && ngram.backoff <= 1)) bad("backend.ngram.backoff must be in (0,1]");
    if (remote.timeout <= 0) bad("backend.remote.timeout must be > 0");
    if (remote.concurrency < 1) bad("backend.remote.concurrency must be >= 1");
    if (n_chain < 1) bad("chain.n_chain must be >= 1");
    if (max_tokens < 1) bad("chain.max_tokens must be >= 1");
    if (temperature < 0) bad("chain.temperature must be >= 0");
    if (subtest != 1 && subtest != 2) bad("eval.subtest must be 1 or 2");
    if (jobs < 1) bad("jobs must be >= 1");
    for (const auto& c : clauses)
      if (!is_known_keyword(c)) bad("eval.clauses: unknown clause " + c);
  }

  toml::table to_toml() const {
    auto strings = [](const std::vector<std::string>& v) {
      toml::array a;
      for (const auto& s : v) a.push_back(s);
      return a;
    };
    auto i64 = [](auto v) { return static_cast<std::int64_t>(v); };
    return toml::table{
        {"seed", i64(seed)},
        {"jobs", i64(jobs)},
        {"corpus", toml::table{{"paths", strings(corpus_paths)}}},
        {"filter", toml::table{{"max_tokens", i64(filter.max_tokens)},
                               {"max_bytes", i64(filter.max_bytes)}}},
        {"split", toml::table{{"fraction", split_fraction}}},
        {"backend",
         toml::table{
             {"kind", backend},
             {"ngram", toml::table{{"model", model_path},
                                   {"order", i64(ngram.order)},
                                   {"k", ngram.k},
                                   {"backoff", ngram.backoff}}},
             {"remote", toml::table{{"base_url", remote.base_url},
                                    {"model", remote.model},
                                    {"timeout", remote.timeout},
                                    {"concurrency", i64(remote.concurrency)}}},
             {"scripted", toml::table{{"script", script_path}}}}},
        {"chain", toml::table{{"n_chain", i64(n_chain)},
                              {"retain_controls", retain_controls},
                              {"max_tokens", i64(max_tokens)},
                              {"temperature", temperature}}},
        {"eval", toml::table{{"top_k", i64(top_k)},
                             {"clauses", strings(clauses)},
                             {"subtest", i64(subtest)},
                             {"filters", strings(filters)}}},
    };
  }

  std::string to_toml_string() const {
    std::ostringstream os;
    os << to_toml() << "\n";
    return os.str();
  }

  // `jobs` is left out: results never depend on it.
  nlohmann::json to_json() const {
    const toml::table t = to_toml();
    std::ostringstream os;
    os << toml::json_formatter{t};
    nlohmann::json j = nlohmann::json::parse(os.str());
    j.erase("jobs");
    return j;
  }
};

namespace detail {

class TomlReader {
 public:
  explicit TomlReader(std::string source) : source_(std::move(source)) {}

  void only(const toml::table& t, std::string_view path,
            std::initializer_list<std::string_view> allowed) const {
    for (const auto& [key, node] : t) {
      bool ok = false;
      for (auto a : allowed) ok = ok || key.str() == a;
      if (!ok)
        fail("unknown key '" + join(path, key.str()) + "'");
    }
  }

  const toml::table* section(const toml::table& t, std::string_view key,
                             std::string_view path) const {
    const toml::node* n = t.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail("'" + join(path, key) + "' must be a table");
    return n->as_table();
  }

  template <typename T>
  void get(const toml::table& t, std::string_view key, std::string_view path, T& out) const {
    const toml::node* n = t.get(key);
    if (!n) return;
    const std::string where = join(path, key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!n->is_boolean()) fail("'" + where + "' must be a boolean");
      out = n->as_boolean()->get();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!n->is_string()) fail("'" + where + "' must be a string");
      out = n->as_string()->get();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = n->value<double>()) out = *v;
      else fail("'" + where + "' must be a number");
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!n->is_array()) fail("'" + where + "' must be an array of strings");
      out.clear();
      for (const auto& e : *n->as_array()) {
        if (!e.is_string()) fail("'" + where + "' must be an array of strings");
        out.push_back(e.as_string()->get());
      }
    } else {
      static_assert(std::is_integral_v<T>);
      if (!n->is_integer()) fail("'" + where + "' must be an integer");
      const std::int64_t v = n->as_integer()->get();
      if (v < 0) fail("'" + where + "' must be non-negative");
      out = static_cast<T>(v);
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::config_error, source_ + ": " + what);
  }

 private:
  std::string source_;

  static std::string join(std::string_view path, std::string_view key) {
    return path.empty() ? std::string(key) : std::string(path) + "." + std::string(key);
  }
};

}  // namespace detail

/// Overlays the values in a TOML document onto `config`.
inline void apply_toml(Config& config, std::string_view document,
                       std::string_view source_name = "<config>") {
  detail::TomlReader r{std::string(source_name)};
  toml::table root;
  try {
    root = toml::parse(document, source_name);
  } catch (const toml::parse_error& e) {
    r.fail(std::string(e.description()));
  }
  r.only(root, "", {"seed", "jobs", "corpus", "filter", "split", "backend", "chain", "eval"});
  r.get(root, "seed", "", config.seed);
  r.get(root, "jobs", "", config.jobs);
  if (auto* t = r.section(root, "corpus", "")) {
    r.only(*t, "corpus", {"paths"});
    r.get(*t, "paths", "corpus", config.corpus_paths);
  }
  if (auto* t = r.section(root, "filter", "")) {
    r.only(*t, "filter", {"max_tokens", "max_bytes"});
    r.get(*t, "max_tokens", "filter", config.filter.max_tokens);
    r.get(*t, "max_bytes", "filter", config.filter.max_bytes);
  }
  if (auto* t = r.section(root, "split", "")) {
    r.only(*t, "split", {"fraction"});
    r.get(*t, "fraction", "split", config.split_fraction);
  }
  if (auto* t = r.section(root, "backend", "")) {
    r.only(*t, "backend", {"kind", "ngram", "remote", "scripted"});
    r.get(*t, "kind", "backend", config.backend);
    if (auto* n = r.section(*t, "ngram", "backend")) {
      r.only(*n, "backend.ngram", {"model", "order", "k", "backoff"});
      r.get(*n, "model", "backend.ngram", config.model_path);
      r.get(*n, "order", "backend.ngram", config.ngram.order);
      r.get(*n, "k", "backend.ngram", config.ngram.k);
      r.get(*n, "backoff", "backend.ngram", config.ngram.backoff);
    }
    if (auto* n = r.section(*t, "remote", "backend")) {
      r.only(*n, "backend.remote", {"base_url", "model", "timeout", "concurrency"});
      r.get(*n, "base_url", "backend.remote", config.remote.base_url);
      r.get(*n, "model", "backend.remote", config.remote.model);
      r.get(*n, "timeout", "backend.remote", config.remote.timeout);
      r.get(*n, "concurrency", "backend.remote", config.remote.concurrency);
    }
    if (auto* n = r.section(*t, "scripted", "backend")) {
      r.only(*n, "backend.scripted", {"script"});
      r.get(*n, "script", "backend.scripted", config.script_path);
    }
  }
  if (auto* t = r.section(root, "chain", "")) {
    r.only(*t, "chain", {"n_chain", "retain_controls", "max_tokens", "temperature"});
    r.get(*t, "n_chain", "chain", config.n_chain);
    r.get(*t, "retain_controls", "chain", config.retain_controls);
    r.get(*t, "max_tokens", "chain", config.max_tokens);
    r.get(*t, "temperature", "chain", config.temperature);
  }
  if (auto* t = r.section(root, "eval", "")) {
    r.only(*t, "eval", {"top_k", "clauses", "subtest", "filters"});
    r.get(*t, "top_k", "eval", config.top_k);
    r.get(*t, "clauses", "eval", config.clauses);
    r.get(*t, "subtest", "eval", config.subtest);
    r.get(*t, "filters", "eval", config.filters);
  }
}

inline Config load_config(const std::filesystem::path& path) {
  Config config;
  apply_toml(config, read_file(path), path.string());
  config.validate();
  return config;
}

}  // namespace ompforge
