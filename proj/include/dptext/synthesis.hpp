#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dptext/backend.hpp"
#include "dptext/corpus.hpp"

namespace dptext::synthesis {

using backend::SamplingConfig;

struct Prefix {
  std::string text;
  std::string domain_tag;

  // Generation without a prefix (empty text) is the sentinel form; regular
  // prefixes must be non-empty.
  static Prefix none() { return Prefix{"", ""}; }
  bool is_sentinel() const { return text.empty(); }
};

struct Context {
  std::string context_id;
  Prefix prefix;
  std::string text;
  std::uint64_t seed = 0;
};

struct CompletionSet {
  std::string context_id;
  std::vector<std::string> completions;
  std::size_t dropped_empty = 0;

  bool usable() const { return completions.size() >= 2; }
};

struct ContextGenReport {
  std::size_t requested = 0;
  std::size_t generated = 0;
  std::size_t failed = 0;
};

// One prefix per line; optional tab-separated domain tag. Blank lines skipped.
std::vector<Prefix> load_prefixes(const std::filesystem::path& path);

// Generates n_per_prefix contexts per prefix. Per-context seeds are
// cfg.seed + ordinal, so reruns with the same seed are byte-identical. Backend
// failures are recorded and skipped; all-failed is a hard error. Contexts
// generate concurrently only when the backend declares it safe; output order is
// (prefix index, context index) either way.
std::vector<Context> generate_contexts(std::span<const Prefix> prefixes, std::size_t n_per_prefix,
                                       const SamplingConfig& cfg, backend::Backend& be,
                                       const backend::ModelHandle& handle,
                                       ContextGenReport* report = nullptr,
                                       std::size_t max_in_flight = 0);

// Samples cfg.num_completions completions; empty completions are dropped and
// counted. Fewer than two survivors leaves the set flagged unusable.
CompletionSet generate_completions(const Context& ctx, const SamplingConfig& cfg,
                                   backend::Backend& be, const backend::ModelHandle& handle);

// Unordered combinations of completions in canonical order. Summarization
// orients each pair longer-first (by token count, ties keep completion order);
// paraphrase keeps completion order.
std::vector<corpus::TextPair> make_candidate_pairs(const CompletionSet& cs,
                                                   corpus::TaskKind task,
                                                   const std::string& generator_id,
                                                   corpus::Phase phase = corpus::Phase::synthesis);

}  // namespace dptext::synthesis
