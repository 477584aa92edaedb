#include "dptext/judge.hpp"

#include <array>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>

namespace dptext::judge {

std::string to_string(JudgeDimension d) {
  switch (d) {
    case JudgeDimension::preference: return "preference";
    case JudgeDimension::coherence: return "coherence";
    case JudgeDimension::consistency: return "consistency";
    case JudgeDimension::fact_omission: return "fact_omission";
    case JudgeDimension::fluency: return "fluency";
    case JudgeDimension::relevance: return "relevance";
  }
  return "preference";
}

JudgeDimension dimension_from_string(std::string_view s) {
  for (JudgeDimension d : all_dimensions()) {
    if (to_string(d) == s) return d;
  }
  throw ConfigError("unknown judge dimension: " + std::string(s));
}

std::vector<JudgeDimension> all_dimensions() {
  return {JudgeDimension::preference,    JudgeDimension::coherence, JudgeDimension::consistency,
          JudgeDimension::fact_omission, JudgeDimension::fluency,   JudgeDimension::relevance};
}

namespace {

// Fluency wording ships verbatim (trailing spaces and line breaks included);
// the @DIM@/@DIMADV@ slots generate the other five variants from the same
// skeleton.
constexpr const char* kPromptSkeleton =
    "<|im_start|>system\n"
    "You are a highly efficient assistant, who evaluates and selects \n"
    "the best large language model (LLMs) based on the quality of their \n"
    "responses to a given instruction. This process will be used to \n"
    "create a leaderboard reflecting the most accurate and \n"
    "human-preferred answers.\n"
    "<|im_end|>\n"
    "<|im_start|>user\n"
    "I require a leaderboard for various large language models. \n"
    "I'll provide you with prompts given to these models and their \n"
    "corresponding outputs. \n"
    "\n"
    "Your task is to assess these responses, specifically for @DIM@, \n"
    "and select the model that demonstrates the highest @DIM@ in \n"
    "its output.\n"
    "\n"
    "## Instruction\n"
    "\n"
    "{\n"
    "    \"instruction\": \"\"\"{instruction}\"\"\",\n"
    "}\n"
    "\n"
    "## Model Outputs\n"
    "\n"
    "Here are the unordered outputs from the models. Each output is \n"
    "associated with a specific model, identified by a unique \n"
    "model identifier.\n"
    "\n"
    "{\n"
    "    {\n"
    "        \"model_identifier\": \"m\",\n"
    "        \"output\": \"\"\"{output_1}\"\"\"\n"
    "    },\n"
    "    {\n"
    "        \"model_identifier\": \"M\",\n"
    "        \"output\": \"\"\"{output_2}\"\"\"\n"
    "    }\n"
    "}\n"
    "\n"
    "## Task\n"
    "\n"
    "Evaluate the models based on @DIMADV@ \n"
    "responses, and select the model that best demonstrates high \n"
    "@DIM@. Answer by providing the model identifier of the \n"
    "best model. We will use your output as the name of the \n"
    "best model, so make sure your output only contains one of \n"
    "the following model identifiers and nothing else \n"
    "(no quotes, no spaces, no new lines, ...): m or M.\n"
    "\n"
    "## Best Model Identifier\n"
    "<|im_end|>\n";

struct DimensionWording {
  const char* noun;
  const char* adverbial;  // completes "Evaluate the models based on ... responses"
};

DimensionWording wording_of(JudgeDimension d) {
  switch (d) {
    case JudgeDimension::fluency:
      return {"fluency", "how fluently they deliver their"};
    case JudgeDimension::coherence:
      return {"coherence", "how coherently they deliver their"};
    case JudgeDimension::consistency:
      return {"consistency", "how consistently they deliver their"};
    case JudgeDimension::fact_omission:
      return {"fact omission", "how completely they preserve facts in their"};
    case JudgeDimension::relevance:
      return {"relevance", "how relevantly they frame their"};
    case JudgeDimension::preference:
      return {"preference", "how compellingly they deliver their"};
  }
  return {"preference", "how compellingly they deliver their"};
}

void replace_all(std::string& text, std::string_view from, std::string_view to,
                 bool required = false) {
  std::size_t pos = text.find(from);
  if (required && pos == std::string::npos) {
    throw ConfigError("prompt template placeholder missing: " + std::string(from));
  }
  while (pos != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos = text.find(from, pos + to.size());
  }
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string MockTransport::complete(const std::string&) {
  if (responses_.empty()) throw TransportError("mock transport has no responses");
  const std::string& r = responses_[calls_ % responses_.size()];
  ++calls_;
  if (r == "<throw>") throw TransportError("mock transport failure");
  return r;
}

std::string render_prompt(const JudgeTask& task) {
  if (task.output_m.empty() || task.output_M.empty()) {
    throw ConfigError("render_prompt: both outputs must be non-empty");
  }
  const auto wording = wording_of(task.dimension);
  std::string text = kPromptSkeleton;
  replace_all(text, "@DIMADV@", wording.adverbial, /*required=*/true);
  replace_all(text, "@DIM@", wording.noun, /*required=*/true);
  // Single logical pass over the three task placeholders; substituted values
  // are never re-scanned.
  const std::array<std::pair<std::string_view, const std::string*>, 3> slots = {{
      {"{instruction}", &task.instruction},
      {"{output_1}", &task.output_m},
      {"{output_2}", &task.output_M},
  }};
  for (const auto& [placeholder, value] : slots) {
    const std::size_t pos = text.find(placeholder);
    if (pos == std::string::npos) {
      throw ConfigError("prompt template placeholder missing: " + std::string(placeholder));
    }
    text.replace(pos, placeholder.size(), *value);
  }
  return text;
}

nlohmann::json JudgeOutcome::to_json() const {
  nlohmann::json j;
  j["task_id"] = task_id;
  j["dimension"] = to_string(dimension);
  nlohmann::json a = nlohmann::json::object();
  for (const auto& [slot, system] : assignment) a[std::string(1, slot)] = system;
  j["assignment"] = a;
  j["winner"] = winner ? nlohmann::json(*winner) : nlohmann::json(nullptr);
  j["raw_response"] = raw_response;
  j["abstained"] = abstained;
  j["cause"] = cause;
  j["latency_ms"] = latency_ms;
  return j;
}

JudgeOutcome JudgeOutcome::from_json(const nlohmann::json& j) {
  JudgeOutcome o;
  o.task_id = j.at("task_id").get<std::string>();
  o.dimension = dimension_from_string(j.at("dimension").get<std::string>());
  for (const auto& [slot, system] : j.at("assignment").items()) {
    o.assignment[slot[0]] = system.get<std::string>();
  }
  if (!j.at("winner").is_null()) o.winner = j["winner"].get<std::string>();
  o.raw_response = j.value("raw_response", "");
  o.abstained = j.value("abstained", false);
  o.cause = j.value("cause", "");
  o.latency_ms = j.value("latency_ms", 0.0);
  return o;
}

JudgeOutcome judge_pair(const JudgeTask& task, JudgeTransport& transport) {
  if (task.assignment.size() != 2 || !task.assignment.count('m') || !task.assignment.count('M')) {
    throw ConfigError("judge task assignment must map exactly m and M");
  }
  const std::string prompt = render_prompt(task);

  JudgeOutcome outcome;
  outcome.task_id = task.task_id;
  outcome.dimension = task.dimension;
  outcome.assignment = task.assignment;

  const auto start = std::chrono::steady_clock::now();
  std::string last_cause;
  for (std::size_t attempt = 0; attempt <= transport.max_retries; ++attempt) {
    std::string response;
    try {
      response = transport.complete(prompt);
    } catch (const std::exception& e) {
      last_cause = std::string("transport_failure: ") + e.what();
      continue;
    }
    outcome.raw_response = response;
    const std::string parsed = trim(response);
    if (parsed == "m" || parsed == "M") {
      outcome.winner = task.assignment.at(parsed[0]);
      outcome.latency_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - start)
                               .count();
      return outcome;
    }
    last_cause = "unparseable_response";
  }
  outcome.abstained = true;
  outcome.cause = last_cause.empty() ? "no_attempts" : last_cause;
  outcome.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

PreferenceRate preference_rate(std::span<const JudgeOutcome> results,
                               const std::string& system_id) {
  PreferenceRate r;
  r.total = results.size();
  if (r.total == 0) throw ConfigError("preference_rate: no results");
  for (const auto& o : results) {
    if (o.abstained) {
      ++r.abstentions;
    } else if (o.winner && *o.winner == system_id) {
      ++r.wins;
    }
  }
  const std::size_t decided = r.total - r.abstentions;
  if (decided == 0) throw ConfigError("preference_rate: all comparisons abstained");
  r.rate = static_cast<double>(r.wins) / static_cast<double>(decided);
  return r;
}

std::vector<JudgeTask> make_tasks(std::span<const std::string> instructions,
                                  std::span<const std::string> outputs_a,
                                  std::span<const std::string> outputs_b,
                                  const std::string& system_a, const std::string& system_b,
                                  JudgeDimension dimension, std::uint64_t seed) {
  if (instructions.size() != outputs_a.size() || instructions.size() != outputs_b.size()) {
    throw ConfigError("make_tasks: inputs must align");
  }
  Rng rng(seed);
  std::vector<JudgeTask> tasks;
  tasks.reserve(instructions.size());
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    JudgeTask t;
    t.task_id = "t" + std::to_string(i);
    t.instruction = instructions[i];
    t.dimension = dimension;
    const bool a_is_m = rng.uniform() < 0.5;
    if (a_is_m) {
      t.output_m = outputs_a[i];
      t.output_M = outputs_b[i];
      t.assignment = {{'m', system_a}, {'M', system_b}};
    } else {
      t.output_m = outputs_b[i];
      t.output_M = outputs_a[i];
      t.assignment = {{'m', system_b}, {'M', system_a}};
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

void write_outcomes(std::span<const JudgeOutcome> outcomes, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write outcomes: " + path.string());
  for (const auto& o : outcomes) out << o.to_json().dump() << '\n';
}

std::vector<JudgeOutcome> read_outcomes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read outcomes: " + path.string());
  std::vector<JudgeOutcome> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(JudgeOutcome::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

HttpTransport::HttpTransport(HttpTransportConfig cfg) : cfg_(std::move(cfg)) {
  max_retries = cfg_.max_retries;
  timeout_seconds = cfg_.timeout_seconds;
}

}  // namespace dptext::judge
