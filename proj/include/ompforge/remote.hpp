#pragma once

// Client for the `/v1/completions` HTTP protocol. Define
// CPPHTTPLIB_OPENSSL_SUPPORT (and link OpenSSL) to enable https base URLs.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

#include "httplib.h"
#include "json.hpp"
#include "ompforge/backend.hpp"
#include "ompforge/error.hpp"

namespace ompforge {

inline constexpr std::string_view kApiKeyEnv = "OMP_FORGE_API_KEY";

struct RemoteOptions {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "omp-model";
  double timeout_seconds = 60.0;
  unsigned concurrency = 4;
};

struct BaseUrl {
  std::string scheme_host_port;  // e.g. http://host:8080
  std::string path_prefix;       // no trailing slash
};

inline BaseUrl parse_base_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos)
    throw Error(Errc::config_error, "base_url needs a scheme: " + std::string(url));
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    throw Error(Errc::config_error, "unsupported scheme: " + std::string(scheme));
  const auto path_start = url.find('/', scheme_end + 3);
  BaseUrl out;
  out.scheme_host_port = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) {
    out.path_prefix = std::string(url.substr(path_start));
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
      out.path_prefix.pop_back();
  }
  return out;
}

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteOptions options)
      : options_(std::move(options)),
        url_(parse_base_url(options_.base_url)),
        slots_(std::max(1u, options_.concurrency)) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (url_.scheme_host_port.starts_with("https"))
      throw Error(Errc::config_error, "https base_url requires a build with OpenSSL");
#endif
  }

  static nlohmann::json request_body(const RemoteOptions& options,
                                     const CompletionRequest& request) {
    return {{"model", options.model},
            {"prompt", request.prompt},
            {"max_tokens", request.max_tokens},
            {"temperature", request.temperature},
            {"stop", request.stop_sequences}};
  }

  CompletionResult complete(const CompletionRequest& request) override {
    request.validate();
    const std::string body =
        request_body(options_, request).dump(-1, ' ', false,
                                             nlohmann::json::error_handler_t::replace);

    httplib::Headers headers;
    if (const char* key = std::getenv(std::string(kApiKeyEnv).c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    httplib::Result res;
    {
      std::counting_semaphore<1024>& slots = slots_;
      slots.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{slots};

      httplib::Client client(url_.scheme_host_port);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::duration<double>(options_.timeout_seconds));
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      res = client.Post(url_.path_prefix + "/v1/completions", headers, body,
                        "application/json");
    }
    if (!res)
      throw Error(Errc::backend_unavailable,
                  "request to " + options_.base_url + " failed: " +
                      httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw Error(Errc::backend_unavailable,
                  "HTTP " + std::to_string(res->status) + ": " + res->body);

    CompletionResult result;
    std::string finish;
    try {
      const auto reply = nlohmann::json::parse(res->body);
      const auto& choice = reply.at("choices").at(0);
      result.text = choice.at("text").get<std::string>();
      if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
        finish = choice["finish_reason"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::backend_unavailable,
                  std::string("malformed completion response: ") + e.what() +
                      ": " + res->body);
    }
    if (truncate_at_stop(result.text, request.stop_sequences) || finish == "stop")
      result.finish_reason = FinishReason::stop;
    else if (finish == "length")
      result.finish_reason = FinishReason::length;
    else
      result.finish_reason = FinishReason::end_of_model;
    return result;
  }

  std::string name() const override { return "remote"; }
  const RemoteOptions& options() const noexcept { return options_; }

 private:
  RemoteOptions options_;
  BaseUrl url_;
  std::counting_semaphore<1024> slots_;
};

}  // namespace ompforge
