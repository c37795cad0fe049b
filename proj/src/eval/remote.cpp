#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "emoalign/eval/remote.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include "emoalign/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace emoalign::eval {

RemoteChatJudge::RemoteChatJudge(JudgeBackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.endpoint, m, kUrl)) throw ConfigError("judge endpoint '" + cfg_.endpoint + "' is not a URL");
  scheme_host_port_ = m[1];
  path_ = m[2].matched ? std::string(m[2]) : "/";
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') throw ConfigError("environment variable " + cfg_.api_key_env + " is not set");
  key_ = key;
}

std::string RemoteChatJudge::complete(const std::string& prompt) {
  const nlohmann::json body = {{"model", cfg_.model},
                               {"messages", {{{"role", "user"}, {"content", prompt}}}},
                               {"temperature", 0}};
  const std::string payload = body.dump();
  const httplib::Headers headers = {{"Authorization", "Bearer " + key_}};
  const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(cfg_.backoff_s * std::pow(2.0, attempt - 1)));
    }
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout_us);
    client.set_read_timeout(timeout_us);
    client.set_write_timeout(timeout_us);
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw BackendError("judge endpoint returned HTTP " + std::to_string(res->status));
    try {
      const auto reply = nlohmann::json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed judge reply: ") + e.what());
    }
  }
  throw BackendError("judge endpoint failed after " + std::to_string(cfg_.retries + 1) + " attempts: " + last_error);
}

}  // namespace emoalign::eval
