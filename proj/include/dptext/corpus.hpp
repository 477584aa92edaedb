#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dptext/common.hpp"

namespace dptext::corpus {

enum class Split { train, test, validation };
enum class TaskKind { summarization, paraphrase };
enum class Phase { synthesis, distillation, private_data };

std::string to_string(Split s);
std::string to_string(TaskKind t);
std::string to_string(Phase p);
Split split_from_string(std::string_view s);
TaskKind task_from_string(std::string_view s);
Phase phase_from_string(std::string_view s);

struct Document {
  std::string id;
  std::string source_text;
  std::optional<std::string> reference_text;
  Split split = Split::train;
};

// One (input, output) candidate with provenance.
struct TextPair {
  std::string pair_id;
  std::string x;
  std::string y;
  std::optional<std::string> context_id;
  Phase phase = Phase::synthesis;
  std::string generator_id;
  // Unknown fields found on read; written back verbatim so round-trips keep
  // them.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const TextPair& o) const {
    return pair_id == o.pair_id && x == o.x && y == o.y && context_id == o.context_id &&
           phase == o.phase && generator_id == o.generator_id && extra == o.extra;
  }
};

nlohmann::json pair_to_json(const TextPair& p);
TextPair pair_from_json(const nlohmann::json& j, std::size_t* unknown_fields = nullptr);

// Lowercased word-level tokens with punctuation split off. A punctuation
// character stays inside a token only when both neighbours are alphanumeric
// ("didn't", "three-minute", "5.0", "1,234"); everything else becomes its own
// single-character token. Deterministic; empty text yields an empty sequence.
std::vector<std::string> tokenize(std::string_view text);
std::size_t token_count(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);
// First n tokens re-joined with single spaces.
std::string truncate_to_tokens(std::string_view text, std::size_t n);

enum class DatasetFormat { jsonl, csv };

struct Dataset {
  std::vector<Document> documents;
  TaskKind task = TaskKind::summarization;
  std::map<Split, std::size_t> split_counts;

  std::size_t count(Split s) const {
    auto it = split_counts.find(s);
    return it == split_counts.end() ? 0 : it->second;
  }
};

// Loads and validates a dataset file. Malformed records raise ParseError with
// the offending line number; an empty file raises ConfigError.
Dataset ingest_dataset(const std::filesystem::path& path, DatasetFormat format, TaskKind task);

struct PairReadReport {
  std::size_t pairs_read = 0;
  std::size_t unknown_field_warnings = 0;
};

std::size_t write_pairs(std::span<const TextPair> pairs, const std::filesystem::path& path);
std::vector<TextPair> read_pairs(const std::filesystem::path& path, PairReadReport* report = nullptr);

struct RunManifest {
  std::string run_id;
  std::string config_digest;
  std::map<std::string, std::string> phase_outputs;  // phase name -> artifact path
  std::uint64_t seed = 0;
  std::string created_at;  // ISO-8601; excluded from reproducibility comparisons

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

std::string now_iso8601();

}  // namespace dptext::corpus
