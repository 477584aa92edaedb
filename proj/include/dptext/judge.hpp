#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dptext/common.hpp"

namespace dptext::judge {

enum class JudgeDimension { preference, coherence, consistency, fact_omission, fluency, relevance };

std::string to_string(JudgeDimension d);
JudgeDimension dimension_from_string(std::string_view s);
std::vector<JudgeDimension> all_dimensions();

struct JudgeTask {
  std::string task_id;
  std::string instruction;
  std::string output_m;  // shown under identifier "m"
  std::string output_M;  // shown under identifier "M"
  JudgeDimension dimension = JudgeDimension::preference;
  std::map<char, std::string> assignment;  // 'm'/'M' -> system id
};

// Transport to a judge model; complete() returns the raw response text.
class JudgeTransport {
 public:
  virtual ~JudgeTransport() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual bool concurrent_safe() const { return false; }

  std::size_t max_retries = 2;
  double timeout_seconds = 30.0;
};

// Deterministic scripted transport for tests; cycles through the given
// responses, entries equal to "<throw>" raise TransportError.
class MockTransport final : public JudgeTransport {
 public:
  explicit MockTransport(std::vector<std::string> responses)
      : responses_(std::move(responses)) {}
  std::string complete(const std::string& prompt) override;
  bool concurrent_safe() const override { return true; }
  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::string> responses_;
  std::size_t calls_ = 0;
};

struct HttpTransportConfig {
  std::string endpoint;   // e.g. https://host/v1/chat/completions
  std::string model_id;
  std::string auth_env = "JUDGE_API_TOKEN";  // token read from this env var
  std::size_t max_retries = 2;
  double timeout_seconds = 30.0;
};

// OpenAI-style chat completion transport.
class HttpTransport final : public JudgeTransport {
 public:
  explicit HttpTransport(HttpTransportConfig cfg);
  std::string complete(const std::string& prompt) override;

 private:
  HttpTransportConfig cfg_;
};

// Renders the pairwise leaderboard prompt: the fluency wording is the shipped
// verbatim template; other dimensions substitute their phrase into the same
// skeleton. {instruction}/{output_1}/{output_2} come from the task.
std::string render_prompt(const JudgeTask& task);

struct JudgeOutcome {
  std::string task_id;
  JudgeDimension dimension = JudgeDimension::preference;
  std::map<char, std::string> assignment;
  std::optional<std::string> winner;  // absent on abstention
  std::string raw_response;
  bool abstained = false;
  std::string cause;  // populated on abstention
  double latency_ms = 0.0;

  nlohmann::json to_json() const;
  static JudgeOutcome from_json(const nlohmann::json& j);
};

// Strict parse: the whitespace-trimmed response must be exactly "m" or "M".
// Anything else is retried up to transport.max_retries, then recorded as an
// abstention.
JudgeOutcome judge_pair(const JudgeTask& task, JudgeTransport& transport);

struct PreferenceRate {
  double rate = 0.0;  // wins / (total - abstentions)
  std::size_t wins = 0;
  std::size_t total = 0;
  std::size_t abstentions = 0;
};

PreferenceRate preference_rate(std::span<const JudgeOutcome> results,
                               const std::string& system_id);

// Builds one task per example with the m/M slots assigned by a seeded coin so
// each system lands in each slot about half the time.
std::vector<JudgeTask> make_tasks(std::span<const std::string> instructions,
                                  std::span<const std::string> outputs_a,
                                  std::span<const std::string> outputs_b,
                                  const std::string& system_a, const std::string& system_b,
                                  JudgeDimension dimension, std::uint64_t seed);

void write_outcomes(std::span<const JudgeOutcome> outcomes, const std::filesystem::path& path);
std::vector<JudgeOutcome> read_outcomes(const std::filesystem::path& path);

}  // namespace dptext::judge
