#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dptext/backend.hpp"
#include "dptext/corpus.hpp"
#include "dptext/dp_optimizer.hpp"
#include "dptext/filterbank.hpp"
#include "dptext/judge.hpp"
#include "dptext/metrics.hpp"
#include "dptext/pipeline.hpp"

namespace dptext::cfg {

// Declarative run configuration: one versioned JSON document, validated before
// any work. Secrets never live here; the judge token comes from an environment
// variable named in the config.
struct RunConfig {
  int schema_version = 1;
  corpus::TaskKind task = corpus::TaskKind::paraphrase;

  std::filesystem::path dataset_path;
  corpus::DatasetFormat dataset_format = corpus::DatasetFormat::jsonl;
  std::string dataset_label = "dataset";

  std::filesystem::path prefixes_path;
  std::size_t n_per_prefix = 10;
  backend::SamplingConfig synth;        // phase-1 sampling
  backend::SamplingConfig p3_sampling;  // phase-3 sampling (defaults to synth)

  filters::FilterThresholds filters;
  dp::PrivacyParams privacy;  // dataset_size resolved at run time

  backend::TrainingConfig p1_train;
  backend::TrainingConfig p2_train;
  backend::TrainingConfig p3_train;

  metrics::CorpusMetricsConfig metrics_cfg;
  judge::HttpTransportConfig judge_cfg;

  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;
  std::size_t desk_vocab_cap = 64;

  nlohmann::json to_json() const;
  std::string digest() const;
};

// Parses and validates. Validation failures raise ConfigError listing every
// offending field by path.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j);
void validate_config(const RunConfig& cfg, std::vector<std::string>& errors);

// Resolves file references (prefix list) into pipeline settings.
pipeline::RunSettings to_run_settings(const RunConfig& cfg);

}  // namespace dptext::cfg
