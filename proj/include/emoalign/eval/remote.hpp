#pragma once

#include <string>

#include "emoalign/eval/judge.hpp"

namespace emoalign::eval {

/// Chat-completion client. Sends {"model", "messages": [{"role": "user",
/// "content": prompt}], "temperature": 0} and reads
/// choices[0].message.content. The key is read once from the configured
/// environment variable and only ever sent as a bearer Authorization header.
class RemoteChatJudge : public JudgeBackend {
 public:
  /// Throws ConfigError on a malformed endpoint or a missing key.
  explicit RemoteChatJudge(JudgeBackendConfig cfg);

  /// Retries transport failures and 429/5xx replies; throws BackendError once
  /// they are exhausted, or at once on other HTTP errors.
  std::string complete(const std::string& prompt) override;

 private:
  JudgeBackendConfig cfg_;
  std::string key_;
  std::string scheme_host_port_;
  std::string path_;
};

}  // namespace emoalign::eval
