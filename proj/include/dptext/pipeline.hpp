#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dptext/backend.hpp"
#include "dptext/corpus.hpp"
#include "dptext/dp_optimizer.hpp"
#include "dptext/filterbank.hpp"
#include "dptext/synthesis.hpp"

namespace dptext::pipeline {

enum class PhaseId { p1, p2, p3 };
std::string to_string(PhaseId p);

// Private dataset wrapper with access tracking. Every path to the documents
// bumps the read counter, which the phase runners use to prove that only the
// DP fine-tuning phase touches private data. The record count is treated as
// public metadata and does not count as a read.
class TrackedDataset {
 public:
  explicit TrackedDataset(corpus::Dataset ds) : data_(std::move(ds)) {}

  std::span<const corpus::Document> documents() const {
    reads_ += data_.documents.size();
    return data_.documents;
  }
  // Train-split documents with references as supervision pairs (x = source,
  // y = reference); documents without references are skipped and counted.
  std::vector<corpus::TextPair> supervision_pairs(std::size_t* skipped = nullptr) const;

  std::uint64_t read_count() const { return reads_.load(); }
  std::size_t record_count() const { return data_.documents.size(); }
  std::size_t train_pair_count() const;  // metadata: usable supervision pairs

 private:
  corpus::Dataset data_;
  mutable std::atomic<std::uint64_t> reads_{0};
};

struct PhaseResult {
  PhaseId phase = PhaseId::p1;
  backend::ModelHandle model;
  std::size_t pairs_in = 0;
  std::size_t pairs_retained = 0;
  std::optional<filters::FilterChainReport> report;  // p1/p3
  std::optional<nlohmann::json> ledger;              // p2
  std::string config_digest;
  std::string generator_model_id;            // which model produced the pairs (p1/p3)
  std::vector<synthesis::Context> contexts;  // p1 only; reused verbatim by p3

  nlohmann::json to_json() const;
  static PhaseResult from_json(const nlohmann::json& j);
};

// Wiring shared by the phases: generation backend (the small pre-trained LM
// stand-in), trainable backend, and the injected scorers.
struct PipelineEnv {
  backend::Backend* generator = nullptr;
  backend::ModelHandle generator_handle;
  backend::DeskBackend* trainer = nullptr;
  const filters::NliScorer* nli = nullptr;
  const filters::GrammarChecker* grammar = nullptr;
  const TrackedDataset* private_dataset = nullptr;  // tracked for the access invariant
};

struct SynthesisSettings {
  std::vector<synthesis::Prefix> prefixes;
  std::size_t n_per_prefix = 10;
  backend::SamplingConfig sampling;
};

// Phase 1: synthesize -> filter -> fine-tune the base model. Never reads the
// private dataset; a nonzero read delta is an invariant violation.
PhaseResult run_phase1(const SynthesisSettings& synth, const filters::FilterThresholds& thresholds,
                       const backend::TrainingConfig& train_cfg,
                       const backend::ModelHandle& base_model, corpus::TaskKind task,
                       PipelineEnv& env);

// Phase 2: DPSGD fine-tuning on the private dataset. Calibrates sigma from the
// privacy parameters, routes every step through dp_step, stops before any step
// that would overspend the budget, and returns the ledger with the result.
PhaseResult run_phase2(const backend::ModelHandle& m_base, const TrackedDataset& private_dataset,
                       dp::PrivacyParams privacy, const backend::TrainingConfig& train_cfg,
                       PipelineEnv& env);

// Phase 3: self-distillation. The private model generates completions for the
// Phase-1 contexts, the same filter chain runs, and the survivors fine-tune the
// private model into the refined one. expected_filter_digest guards the
// "same filtering" contract when supplied.
PhaseResult run_phase3(const backend::ModelHandle& m_private,
                       std::span<const synthesis::Context> contexts_from_p1,
                       const backend::SamplingConfig& sampling,
                       const filters::FilterThresholds& thresholds,
                       const backend::TrainingConfig& train_cfg, corpus::TaskKind task,
                       PipelineEnv& env,
                       const std::optional<std::string>& expected_filter_digest = std::nullopt);

// retained / input. Zero input raises ConfigError.
double sampling_efficiency(const filters::FilterChainReport& report);

// "51.7% (1551/3000)": percentage at two decimals with one trailing zero
// trimmed, never fewer than one decimal.
std::string format_efficiency(std::size_t retained, std::size_t total);

struct RunSettings {
  corpus::TaskKind task = corpus::TaskKind::paraphrase;
  std::string dataset_label;
  SynthesisSettings p1_synth;
  backend::SamplingConfig p3_sampling;
  filters::FilterThresholds thresholds;
  dp::PrivacyParams privacy;
  backend::TrainingConfig p1_train;
  backend::TrainingConfig p2_train;  // learning rate/seed; batching comes from privacy
  backend::TrainingConfig p3_train;
  std::uint64_t seed = 0;
  std::size_t desk_vocab_cap = 64;

  nlohmann::json to_json() const;
  std::string digest() const;
};

// Owns a run directory: manifests, per-phase artifacts, resume bookkeeping,
// and run_summary.json. Phase outputs land under <output_dir>/<run_id>/.
class Runner {
 public:
  Runner(RunSettings settings, PipelineEnv env, std::filesystem::path output_dir);
  ~Runner();

  const std::string& run_id() const { return run_id_; }
  std::filesystem::path run_dir() const { return run_dir_; }

  // Each phase is a no-op returning the cached result when a completed phase
  // with the same config digest is found in the run directory.
  PhaseResult run_phase1();
  PhaseResult run_phase2();
  PhaseResult run_phase3();
  nlohmann::json run_all();

 private:
  std::filesystem::path phase_dir(PhaseId p) const { return run_dir_ / to_string(p); }
  std::optional<PhaseResult> load_cached(PhaseId p, const std::string& digest);
  void persist(const PhaseResult& result, const backend::TrainingConfig& train_cfg);
  void write_manifest();
  void write_summary();
  std::string phase_digest(PhaseId p) const;

  RunSettings settings_;
  PipelineEnv env_;
  std::filesystem::path run_dir_;
  std::string run_id_;
  corpus::RunManifest manifest_;
  bool lock_held_ = false;

  std::optional<PhaseResult> p1_, p2_, p3_;
  std::uint64_t reads_during_p1_ = 0, reads_during_p2_ = 0, reads_during_p3_ = 0;
};

}  // namespace dptext::pipeline
