#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ompforge {

enum class Errc {
  malformed_pragma,
  unknown_clause,
  empty_corpus,
  invalid_argument,
  not_trained,
  bad_magic,
  version_mismatch,
  corrupt_payload,
  backend_unavailable,
  no_logprob_support,
  chain_stalled,
  script_exhausted,
  config_error,
  io_error,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::malformed_pragma: return "MalformedPragma";
    case Errc::unknown_clause: return "UnknownClause";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::not_trained: return "NotTrained";
    case Errc::bad_magic: return "BadMagic";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::corrupt_payload: return "CorruptPayload";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::no_logprob_support: return "NoLogprobSupport";
    case Errc::chain_stalled: return "ChainStalled";
    case Errc::script_exhausted: return "ScriptExhausted";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

// Every library failure is an Error carrying a stable machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view kind() const noexcept { return to_string(code_); }

 private:
  Errc code_;
};

}  // namespace ompforge
