#pragma once

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

// steering.hpp (Eigen) must precede httplib.h: httplib drags in <resolv.h>,
// whose `res` macro mangles Eigen sources included after it.
#include "steerlab/steering.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace steerlab {

// Environment variables honored by remote clients.
constexpr const char* kApiTokenEnv = "STEERLAB_API_TOKEN";
constexpr const char* kEndpointEnv = "STEERLAB_ENDPOINT";

struct RemoteOptions {
  int max_attempts = 3;
  int backoff_initial_ms = 50;
  std::vector<int> layers = {0};  // capabilities advertised to the harness
  int n_features = 1 << 17;
  int max_new_tokens = 512;
};

// Generic HTTP analog of a hosted steering service. One POST per paired run:
//   /steer {prompt, layer, feature_id, beta, temperature, seed, max_new_tokens}
//     -> {steered_text, default_text, seed_paired?}
// Transient failures (transport errors and 5xx) are retried with exponential
// backoff up to max_attempts; every attempt is recorded in attempt_log().
class RemoteBackend : public SteeringBackend {
 public:
  RemoteBackend(std::string endpoint, std::string auth_token, RemoteOptions opt = {})
      : endpoint_(std::move(endpoint)), token_(std::move(auth_token)), opt_(opt) {
    if (endpoint_.empty()) throw ConfigError("remote backend: empty endpoint URL");
  }

  static RemoteBackend from_env(RemoteOptions opt = {}) {
    const char* ep = std::getenv(kEndpointEnv);
    if (!ep || !*ep)
      throw ConfigError(std::string("remote backend: ") + kEndpointEnv + " is not set");
    const char* tok = std::getenv(kApiTokenEnv);
    return RemoteBackend(ep, tok ? tok : "", opt);
  }

  BackendInfo info() const override {
    return BackendInfo{opt_.layers, opt_.n_features, opt_.max_new_tokens};
  }

  PairedGeneration paired_generate(const std::string& prompt, const SteeringSpec& spec,
                                   uint64_t seed, float temperature,
                                   int max_new_tokens) override {
    nlohmann::json req = {{"prompt", prompt},
                          {"layer", spec.layer},
                          {"feature_id", spec.feature_id},
                          {"beta", spec.beta},
                          {"temperature", temperature},
                          {"seed", seed},
                          {"max_new_tokens", max_new_tokens}};
    std::string body = req.dump();

    std::string last_error;
    for (int attempt = 1; attempt <= opt_.max_attempts; ++attempt) {
      if (attempt > 1) {
        int wait = opt_.backoff_initial_ms << (attempt - 2);
        std::this_thread::sleep_for(std::chrono::milliseconds(wait));
      }
      httplib::Client client(endpoint_);
      client.set_connection_timeout(5, 0);
      client.set_read_timeout(60, 0);
      httplib::Headers headers;
      if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
      auto res = client.Post("/steer", headers, body, "application/json");

      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        log_attempt(attempt, last_error);
        continue;
      }
      if (res->status >= 500) {
        last_error = "server error: HTTP " + std::to_string(res->status);
        log_attempt(attempt, last_error);
        continue;
      }
      log_attempt(attempt, "HTTP " + std::to_string(res->status));
      if (res->status != 200)
        throw BackendError("steer request rejected: HTTP " + std::to_string(res->status) + " " +
                           res->body);
      return parse_response(res->body);
    }
    throw BackendError("steer request failed after " + std::to_string(opt_.max_attempts) +
                       " attempts; last: " + last_error);
  }

  // Snapshot; paired_generate may run on several harness threads at once.
  std::vector<std::string> attempt_log() const {
    std::lock_guard<std::mutex> lock(log_mu_);
    return attempt_log_;
  }

 private:
  void log_attempt(int attempt, const std::string& what) {
    std::lock_guard<std::mutex> lock(log_mu_);
    attempt_log_.push_back("attempt " + std::to_string(attempt) + ": " + what);
  }

  static PairedGeneration parse_response(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("steer response is not valid JSON: ") + e.what());
    }
    if (!j.contains("steered_text") || !j.contains("default_text"))
      throw ProtocolError("steer response missing steered_text/default_text: " + body);
    PairedGeneration out;
    out.steered_text = j.at("steered_text").get<std::string>();
    out.default_text = j.at("default_text").get<std::string>();
    out.seed_paired = j.value("seed_paired", true);
    return out;
  }

  std::string endpoint_;
  std::string token_;
  RemoteOptions opt_;
  mutable std::mutex log_mu_;
  std::vector<std::string> attempt_log_;
};

}  // namespace steerlab
