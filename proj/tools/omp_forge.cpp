// omp-forge: corpus preprocessing, n-gram training, pragma generation and
// evaluation from one binary.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ompforge/ompforge.hpp"

namespace fs = std::filesystem;
using namespace ompforge;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;
constexpr int kExitUsage = 64;

// Unreadable or empty preprocess input.
struct InputError : Error {
  explicit InputError(const std::string& what) : Error(Errc::io_error, what) {}
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Args {
  std::string config_path;
  bool dry_run = false;

  std::vector<std::string> inputs;
  std::string out_dir = ".";
  std::string corpus = "corpus.jsonl";
  std::string train = "train.jsonl";
  std::string test = "test.jsonl";
  std::string scope_file;
  std::string input;
  std::string output;
  std::string trace;
  std::string mode;
  std::string task = "generation";
  std::string clause;
  std::string report_json;
  std::string split_meta;
};

// Flag values are applied over the config file only when given.
class Overrides {
 public:
  template <typename T, typename Set>
  CLI::Option* option(CLI::App* sub, const std::string& name, const std::string& desc,
                      Set set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = sub->add_option(name, *value, desc);
    apply_.push_back([value, opt, set](Config& c) {
      if (opt->count()) set(c, *value);
    });
    return opt;
  }

  template <typename Set>
  CLI::Option* flag(CLI::App* sub, const std::string& name, const std::string& desc, Set set) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = sub->add_flag(name, *value, desc);
    apply_.push_back([value, opt, set](Config& c) {
      if (opt->count()) set(c, *value);
    });
    return opt;
  }

  void apply(Config& c) const {
    for (const auto& f : apply_) f(c);
  }

 private:
  std::vector<std::function<void(Config&)>> apply_;
};

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

void echo_config(const Config& c) { std::cerr << "# config: " << c.to_json().dump() << "\n"; }

std::unique_ptr<Backend> make_backend(const Config& c) {
  if (c.backend == "ngram")
    return std::make_unique<NGramBackend>(
        std::make_shared<const NGramModel>(NGramModel::load(c.model_path)));
  if (c.backend == "remote") return std::make_unique<RemoteBackend>(c.remote_options());
  if (c.script_path.empty())
    throw Error(Errc::config_error, "scripted backend needs --script");
  json script;
  try {
    script = json::parse(read_file(c.script_path));
  } catch (const json::exception& e) {
    throw Error(Errc::config_error, c.script_path + ": " + e.what());
  }
  if (!script.is_array()) throw Error(Errc::config_error, c.script_path + ": expected a JSON array");
  std::vector<std::string> outputs;
  for (const auto& s : script) {
    if (!s.is_string())
      throw Error(Errc::config_error, c.script_path + ": expected an array of strings");
    outputs.push_back(s.get<std::string>());
  }
  return std::make_unique<ScriptedBackend>(std::move(outputs));
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

std::vector<SourceFile> collect_sources(const std::vector<std::string>& inputs) {
  std::vector<SourceFile> files;
  for (const auto& input : inputs) {
    const fs::path p(input);
    std::error_code ec;
    if (!fs::exists(p, ec)) throw InputError("input not found: " + input);
    try {
      if (fs::is_directory(p)) {
        auto found = discover_sources(p);
        if (found.empty()) throw InputError("no C/C++ source files under " + input);
        files.insert(files.end(), found.begin(), found.end());
      } else if (p.extension() == ".jsonl") {
        auto listed = read_manifest(p);
        if (listed.empty()) throw InputError("empty manifest " + input);
        files.insert(files.end(), listed.begin(), listed.end());
      } else {
        files.push_back({p, language_for(p).value_or(Language::c), std::nullopt});
      }
    } catch (const fs::filesystem_error& e) {
      throw InputError("cannot read " + input + ": " + e.code().message());
    } catch (const json::exception& e) {
      throw InputError("bad manifest " + input + ": " + e.what());
    } catch (const InputError&) {
      throw;
    } catch (const Error& e) {
      throw InputError(e.what());
    }
  }
  return files;
}

int cmd_preprocess(const Config& c, const Args& a) {
  const auto inputs = a.inputs.empty() ? c.corpus_paths : a.inputs;
  if (inputs.empty()) throw UsageError("preprocess needs an input directory, file or manifest");
  const auto files = collect_sources(inputs);
  CorpusBuild build;
  try {
    build = build_corpus(files, c.filter, c.jobs);
  } catch (const Error& e) {
    if (e.code() == Errc::io_error) throw InputError(e.what());
    throw;
  }

  const fs::path out(a.out_dir);
  const std::vector<fs::path> outputs = {out / "corpus.jsonl", out / "text.jsonl",
                                         out / "warnings.log", out / "preprocess.json"};
  try {
    fs::create_directories(out);
    save_jsonl(outputs[0], build.samples);
    save_jsonl(outputs[1], build.texts);
    std::string log;
    for (const auto& w : build.warnings) log += w.str() + "\n";
    write_file(outputs[2], log);
    write_json(outputs[3], {{"config", c.to_json()},
                            {"inputs", inputs},
                            {"files", build.files},
                            {"extracted", build.extracted},
                            {"kept", build.samples.size()},
                            {"dropped", {{"tokens", build.dropped_tokens},
                                         {"bytes", build.dropped_bytes}}},
                            {"warnings", build.warnings.size()}});
  } catch (...) {
    std::error_code ec;
    for (const auto& p : outputs) fs::remove(p, ec);
    throw;
  }

  std::cout << "files: " << build.files << "\n"
            << "extracted: " << build.extracted << "\n"
            << "kept: " << build.samples.size() << "\n"
            << "dropped (tokens): " << build.dropped_tokens << "\n"
            << "dropped (bytes): " << build.dropped_bytes << "\n"
            << "warnings: " << build.warnings.size() << "\n";
  return 0;
}

int cmd_stats(const Config& c, const Args& a) {
  const auto samples = load_samples(a.corpus);
  std::vector<std::string> pragmas;
  for (const auto& s : samples) pragmas.push_back(s.pragma);
  const auto all = pragma_frequency(pragmas);
  const auto hist = pragma_frequency(pragmas, c.top_k);
  echo_config(c);
  std::cout << "samples: " << samples.size() << "  distinct pragmas: " << all.size() << "\n";
  const std::size_t peak = hist.empty() ? 1 : hist.front().second;
  std::size_t rank = 0;
  for (const auto& [pragma, count] : hist) {
    const double share = samples.empty() ? 0.0 : 100.0 * count / samples.size();
    std::cout << std::setw(3) << ++rank << std::setw(7) << count << std::fixed
              << std::setprecision(1) << std::setw(7) << share << "%  " << std::left
              << std::setw(30) << std::string((count * 30 + peak - 1) / peak, '#')
              << std::right << "  " << pragma << "\n";
  }
  return 0;
}

int cmd_split(const Config& c, const Args& a) {
  const auto samples = load_samples(a.corpus);
  auto [train, test] = split(samples, c.split_spec());
  const fs::path out(a.out_dir);
  fs::create_directories(out);
  save_jsonl(out / "train.jsonl", train);
  save_jsonl(out / "test.jsonl", test);
  json train_ids = json::array(), test_ids = json::array();
  for (const auto& s : train) train_ids.push_back(s.id);
  for (const auto& s : test) test_ids.push_back(s.id);
  write_json(out / "split.json", {{"config", c.to_json()},
                                  {"corpus", a.corpus},
                                  {"seed", c.seed},
                                  {"fraction", c.split_fraction},
                                  {"train_ids", train_ids},
                                  {"test_ids", test_ids}});
  std::cout << "train: " << train.size() << "\ntest: " << test.size() << "\n";
  return 0;
}

int cmd_train_lm(const Config& c, const Args& a) {
  const auto texts = load_texts(a.train);
  const auto model = NGramModel::train(texts, c.ngram);
  model.save(c.model_path);
  echo_config(c);
  std::cout << "order: " << model.order() << "\nvocabulary: " << model.vocab_size()
            << "\ncontexts: " << model.contexts().size() << "\nmodel: " << c.model_path
            << "\n";
  return 0;
}

int cmd_generate(const Config& c, const Args& a, GenerationMode mode) {
  if (a.scope_file.empty() == a.input.empty())
    throw UsageError("give exactly one of --scope-file or --input");
  auto backend = make_backend(c);
  echo_config(c);

  std::vector<BatchInput> inputs;
  if (!a.scope_file.empty()) {
    std::string scope = read_file(a.scope_file);
    while (!scope.empty() && (scope.back() == '\n' || scope.back() == '\r')) scope.pop_back();
    inputs.push_back({a.scope_file, scope});
  } else {
    for (const auto& row : read_jsonl(a.input))
      inputs.push_back({row.at("id").get<std::string>(), row.at("scope").get<std::string>()});
  }
  const auto results = generate_batch(*backend, inputs, mode, c.generation(), c.jobs);

  if (!a.trace.empty()) {
    std::vector<json> rows;
    for (const auto& r : results)
      if (r.trace) rows.push_back(trace_to_json(r.id, *r.trace, r.pragma));
    write_jsonl(a.trace, rows);
  }

  if (!a.scope_file.empty()) {
    const auto& r = results.front();
    if (!r.ok()) {
      std::cerr << "error: " << one_line(*r.error) << "\n";
      return kExitRuntime;
    }
    std::cout << r.pragma << "\n";
    return 0;
  }
  std::vector<json> rows;
  for (const auto& r : results) {
    json row{{"id", r.id}, {"pragma", r.pragma}, {"empty", r.empty}, {"parsed", r.parsed}};
    if (r.error) row["error"] = *r.error;
    rows.push_back(std::move(row));
  }
  if (a.output.empty())
    std::cout << to_jsonl(rows);
  else
    write_jsonl(a.output, rows);
  return 0;
}

std::set<std::string> train_ids_from(const std::string& split_meta) {
  std::set<std::string> ids;
  const auto j = json::parse(read_file(split_meta));
  for (const auto& id : j.at("train_ids")) ids.insert(id.get<std::string>());
  return ids;
}

int cmd_eval(const Config& c, const Args& a) {
  const auto test = load_samples(a.test);
  if (test.empty()) throw Error(Errc::empty_corpus, "no test samples in " + a.test);
  if (!a.split_meta.empty()) require_disjoint(test, train_ids_from(a.split_meta));
  auto backend = make_backend(c);
  const auto options = c.generation();

  json report;
  std::string table;
  if (a.task == "generation") {
    const auto mode = parse_mode(a.mode.empty() ? "basic" : a.mode);
    auto ev = eval_generation(*backend, test, mode, options, c.top_k, c.jobs);
    report = ev.report.to_json();
    table = ev.report.to_table();
  } else if (a.task == "chain-vs-basic") {
    auto cmp = eval_chain_vs_basic(*backend, test, c.filters, options, c.jobs);
    report = cmp.to_json();
    table = cmp.to_table();
  } else if (a.task == "clause") {
    const auto mode = parse_mode(a.mode.empty() ? "chain" : a.mode);
    const auto clauses = a.clause.empty() ? c.clauses : std::vector<std::string>{a.clause};
    EvalReport combined;
    combined.task = "clause";
    json ordering = json::object();
    for (const auto& clause : clauses) {
      auto ev = eval_clause_task(*backend, test, clause, c.subtest, mode, options, c.jobs);
      combined.rows.push_back(ev.report.rows.front());
      combined.sample_count = ev.report.sample_count;
      combined.config = ev.report.config;
      combined.notes = ev.report.notes;
      ordering[clause] = ev.report.extra["subtest_ordering"];
    }
    combined.config.erase("clause");
    combined.config["clauses"] = clauses;
    combined.extra["subtest_ordering"] = ordering;
    report = combined.to_json();
    table = combined.to_table();
  } else {
    throw UsageError("unknown task: " + a.task);
  }

  report["effective_config"] = c.to_json();
  report["inputs"] = {{"test", a.test}};
  std::cout << table;
  if (!a.report_json.empty()) write_json(a.report_json, report);
  return 0;
}

int cmd_perplexity(const Config& c, const Args& a) {
  const auto texts = load_texts(a.test);
  auto backend = make_backend(c);
  const auto r = perplexity(*backend, texts, c.jobs);
  echo_config(c);
  std::cout << std::setprecision(12) << r.perplexity << " " << r.tokens << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* sub, Args& a, Overrides& ov) {
  sub->add_option("--config", a.config_path, "TOML configuration file");
  sub->add_flag("--dry-run", a.dry_run, "Print the resolved configuration and exit");
  ov.option<std::uint64_t>(sub, "--seed", "Seed for splitting and sampling",
                           [](Config& c, std::uint64_t v) { c.seed = v; });
  ov.option<unsigned>(sub, "--jobs", "Worker threads",
                      [](Config& c, unsigned v) { c.jobs = v; });
}

void add_backend(CLI::App* sub, Overrides& ov) {
  ov.option<std::string>(sub, "--backend", "ngram, remote or scripted",
                         [](Config& c, const std::string& v) { c.backend = v; })
      ->check(CLI::IsMember({"ngram", "remote", "scripted"}));
  ov.option<std::string>(sub, "--model", "n-gram model file",
                         [](Config& c, const std::string& v) { c.model_path = v; });
  ov.option<std::string>(sub, "--base-url", "Remote completions server",
                         [](Config& c, const std::string& v) { c.remote.base_url = v; });
  ov.option<std::string>(sub, "--remote-model", "Remote model name",
                         [](Config& c, const std::string& v) { c.remote.model = v; });
  ov.option<double>(sub, "--timeout", "Remote request timeout in seconds",
                    [](Config& c, double v) { c.remote.timeout = v; });
  ov.option<unsigned>(sub, "--concurrency", "Remote in-flight request bound",
                      [](Config& c, unsigned v) { c.remote.concurrency = v; });
  ov.option<std::string>(sub, "--script", "JSON array of scripted outputs",
                         [](Config& c, const std::string& v) { c.script_path = v; });
}

void add_generation(CLI::App* sub, Overrides& ov) {
  ov.option<std::size_t>(sub, "--n-chain", "Chain stage limit",
                         [](Config& c, std::size_t v) { c.n_chain = v; });
  ov.option<std::size_t>(sub, "--max-new-tokens", "Tokens per completion",
                         [](Config& c, std::size_t v) { c.max_tokens = v; });
  ov.option<double>(sub, "--temperature", "0 = greedy",
                    [](Config& c, double v) { c.temperature = v; });
  ov.flag(sub, "--retain-controls", "Keep controls on retained chain components",
          [](Config& c, bool v) { c.retain_controls = v; });
}

int run(int argc, char** argv) {
  CLI::App app{"OpenMP pragma generation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "omp-forge 0.1.0");
  Args a;
  Overrides ov;

  auto* pre = app.add_subcommand("preprocess", "Extract scope/pragma samples from sources");
  pre->add_option("inputs", a.inputs, "Source directories, files or JSONL manifests");
  pre->add_option("--out", a.out_dir, "Output directory");
  ov.option<std::size_t>(pre, "--max-tokens", "Drop training texts above this many tokens",
                         [](Config& c, std::size_t v) { c.filter.max_tokens = v; });
  ov.option<std::size_t>(pre, "--max-bytes", "Drop training texts above this many bytes",
                         [](Config& c, std::size_t v) { c.filter.max_bytes = v; });

  auto* stats = app.add_subcommand("stats", "Pragma frequency histogram");
  stats->add_option("--corpus", a.corpus, "Corpus JSONL");
  ov.option<std::size_t>(stats, "--top", "Rows to show",
                         [](Config& c, std::size_t v) { c.top_k = v; });

  auto* sp = app.add_subcommand("split", "Seeded train/test split");
  sp->add_option("--corpus", a.corpus, "Corpus JSONL");
  sp->add_option("--out", a.out_dir, "Output directory");
  ov.option<double>(sp, "--fraction", "Test fraction",
                    [](Config& c, double v) { c.split_fraction = v; });

  auto* tr = app.add_subcommand("train-lm", "Train the n-gram model");
  tr->add_option("--train", a.train, "Training JSONL (texts or samples)");
  ov.option<std::string>(tr, "--model", "Output model file",
                         [](Config& c, const std::string& v) { c.model_path = v; });
  ov.option<std::size_t>(tr, "--order", "n-gram order",
                         [](Config& c, std::size_t v) { c.ngram.order = v; });
  ov.option<double>(tr, "--k", "Add-k pseudo-count",
                    [](Config& c, double v) { c.ngram.k = v; });
  ov.option<double>(tr, "--backoff", "Stupid-backoff factor",
                    [](Config& c, double v) { c.ngram.backoff = v; });

  auto* gen = app.add_subcommand("generate", "Generate pragmas");
  auto* chain = app.add_subcommand("chain", "Generate pragmas with iterative prompting");
  for (auto* sub : {gen, chain}) {
    sub->add_option("--scope-file", a.scope_file, "File holding one scope");
    sub->add_option("--input", a.input, "JSONL with id and scope fields");
    sub->add_option("--output", a.output, "Results JSONL (default stdout)");
    sub->add_option("--trace", a.trace, "Chain trace JSONL");
    add_backend(sub, ov);
    add_generation(sub, ov);
  }
  gen->add_option("--mode", a.mode, "basic or chain")->check(CLI::IsMember({"basic", "chain"}));

  auto* ev = app.add_subcommand("eval", "Evaluate generations against a test split");
  ev->add_option("--task", a.task, "generation, chain-vs-basic or clause")
      ->check(CLI::IsMember({"generation", "chain-vs-basic", "clause"}));
  ev->add_option("--test", a.test, "Test JSONL");
  ev->add_option("--mode", a.mode, "basic or chain")->check(CLI::IsMember({"basic", "chain"}));
  ev->add_option("--clause", a.clause, "Clause for the clause task");
  ev->add_option("--report-json", a.report_json, "Write the JSON report here");
  ev->add_option("--split-meta", a.split_meta, "split.json used to check disjointness");
  ov.option<int>(ev, "--subtest", "1 = presence, 2 = presence and control",
                 [](Config& c, int v) { c.subtest = v; });
  ov.option<std::size_t>(ev, "--top-k", "Per-pragma rows",
                         [](Config& c, std::size_t v) { c.top_k = v; });
  ov.option<std::vector<std::string>>(ev, "--filter", "Chain-vs-basic subset (repeatable)",
                                      [](Config& c, const std::vector<std::string>& v) {
                                        c.filters = v;
                                      });
  add_backend(ev, ov);
  add_generation(ev, ov);

  auto* ppl = app.add_subcommand("perplexity", "Token-weighted perplexity of a test set");
  ppl->add_option("--test", a.test, "Test JSONL (texts or samples)");
  add_backend(ppl, ov);

  for (auto* sub : {pre, stats, sp, tr, gen, chain, ev, ppl}) add_common(sub, a, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: Usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    Config c;
    if (!a.config_path.empty()) apply_toml(c, read_file(a.config_path), a.config_path);
    ov.apply(c);
    c.validate();
    if (a.dry_run) {
      std::cout << "# omp-forge " << app.get_subcommands().front()->get_name()
                << " resolved configuration\n"
                << c.to_toml_string();
      return 0;
    }
    if (pre->parsed()) return cmd_preprocess(c, a);
    if (stats->parsed()) return cmd_stats(c, a);
    if (sp->parsed()) return cmd_split(c, a);
    if (tr->parsed()) return cmd_train_lm(c, a);
    if (gen->parsed())
      return cmd_generate(c, a, a.mode.empty() ? GenerationMode::basic : parse_mode(a.mode));
    if (chain->parsed()) return cmd_generate(c, a, GenerationMode::chain);
    if (ev->parsed()) return cmd_eval(c, a);
    if (ppl->parsed()) return cmd_perplexity(c, a);
  } catch (const UsageError& e) {
    std::cerr << "error: Usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
