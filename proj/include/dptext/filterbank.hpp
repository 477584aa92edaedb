#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dptext/corpus.hpp"

namespace dptext::filters {

using corpus::TaskKind;
using corpus::TextPair;

enum class FilterName { entailment, length, diversity, grammar, numeric, redundancy };

std::string to_string(FilterName f);

struct FilterVerdict {
  std::string pair_id;
  FilterName filter = FilterName::length;
  bool passed = false;
  std::optional<double> score;  // present for the score-based filters
  std::string reason;
};

struct FilterChainReport {
  std::size_t input_count = 0;
  std::size_t retained_count = 0;
  std::map<FilterName, std::size_t> per_filter_rejections;
  double sampling_efficiency = 0.0;
  bool degenerate_empty_input = false;
  nlohmann::json thresholds = nlohmann::json::object();

  std::size_t rejections(FilterName f) const {
    auto it = per_filter_rejections.find(f);
    return it == per_filter_rejections.end() ? 0 : it->second;
  }
  nlohmann::json to_json() const;
  static FilterChainReport from_json(const nlohmann::json& j);
};

// Probability of entailment premise -> hypothesis, deterministic in its inputs.
class NliScorer {
 public:
  virtual ~NliScorer() = default;
  virtual double score(std::string_view premise, std::string_view hypothesis) const = 0;
  virtual bool concurrent_safe() const { return true; }
};

// Desk-scale NLI stand-in: fraction of hypothesis tokens covered by the
// premise token multiset. Reflexive pairs score 1.
class OverlapNliScorer final : public NliScorer {
 public:
  double score(std::string_view premise, std::string_view hypothesis) const override;
};

class GrammarChecker {
 public:
  enum class Category { grammar, spelling, punctuation, style };
  struct Finding {
    Category category = Category::grammar;
    std::size_t begin = 0;  // token offsets
    std::size_t end = 0;
    std::string message;
  };

  virtual ~GrammarChecker() = default;
  virtual std::vector<Finding> check(std::string_view text) const = 0;
  virtual bool concurrent_safe() const { return true; }
};

// Small rule-based checker: doubled words (grammar), out-of-lexicon lowercase
// words when a lexicon is supplied (spelling), unbalanced quotes (punctuation).
class RuleGrammarChecker final : public GrammarChecker {
 public:
  RuleGrammarChecker() = default;
  explicit RuleGrammarChecker(std::unordered_set<std::string> lexicon)
      : lexicon_(std::move(lexicon)) {}

  std::vector<Finding> check(std::string_view text) const override;

 private:
  std::unordered_set<std::string> lexicon_;
};

struct FilterThresholds {
  double fwd_entailment = 0.95;
  double rev_entailment = 0.70;
  double max_length_ratio = 0.75;   // summarization: |y| <= ratio * |x|, inclusive
  double paraphrase_band = 0.25;    // paraphrase: |y| within (1 +/- band) * |x|
  double max_repeat_fraction = 0.30;  // strictly greater rejects
  std::size_t max_grammar_findings = 0;
  double dup_threshold = 0.95;

  nlohmann::json to_json() const;
  static FilterThresholds from_json(const nlohmann::json& j);
  std::string digest() const;
};

// Filter 1: bidirectional entailment. Passes iff score(x->y) >= fwd and
// score(y->x) >= rev; verdict score is the smaller directional score. Scorer
// failures fail closed.
FilterVerdict entailment_filter(const TextPair& pair, const NliScorer& nli, double fwd_threshold,
                                double rev_threshold);

// Filter 2: length. Token counts from the canonical tokenizer.
FilterVerdict length_filter(const TextPair& pair, TaskKind task, double max_ratio,
                            double similarity_band);

// Filter 6: redundancy. Fraction of y tokens present in x (multiset
// intersection over |y|); more than the threshold rejects.
FilterVerdict redundancy_filter(const TextPair& pair, double max_repeat_fraction);

// Filter 5: numeric consistency. Every numeric value in y must appear in x;
// "5" and "5.0" are the same value, thousands separators are stripped.
FilterVerdict numeric_consistency_filter(const TextPair& pair);

// Filter 4: grammar. Counts grammar+spelling findings over x and y; style and
// punctuation findings do not count. Checker failures fail closed.
FilterVerdict grammar_filter(const TextPair& pair, const GrammarChecker& checker,
                             std::size_t max_findings);

// Numeric literals of a text after normalization, in order of appearance.
std::vector<double> extract_numbers(std::string_view text);

struct DedupResult {
  std::vector<TextPair> retained;
  std::vector<std::string> dropped;
  std::size_t scorer_errors = 0;
};

// Filter 3: graph-based near-duplicate removal. Edge p1 -> p2 iff
// score(x1 -> x2) >= threshold and score(y1 -> y2) >= threshold; one pair per
// weakly connected component survives: the one with the highest recorded
// entailment score, ties to the lowest pair_id. Scorer failures drop the edge.
DedupResult diversity_dedup(std::span<const TextPair> pairs, const NliScorer& nli,
                            double dup_threshold,
                            const std::map<std::string, double>& entailment_scores = {});

struct ChainScorers {
  const NliScorer* nli = nullptr;
  const GrammarChecker* grammar = nullptr;
};

// Per-pair filters run cheap to expensive (length, redundancy, numeric,
// grammar, entailment), short-circuiting on the first rejection, which is the
// filter charged in the report. diversity_dedup runs last over the survivors.
std::pair<std::vector<TextPair>, FilterChainReport> run_filter_chain(
    std::span<const TextPair> pairs, TaskKind task, const ChainScorers& scorers,
    const FilterThresholds& thresholds, bool parallel = true);

// Serial reference twin for the kernel-equivalence tests.
std::pair<std::vector<TextPair>, FilterChainReport> run_filter_chain_serial(
    std::span<const TextPair> pairs, TaskKind task, const ChainScorers& scorers,
    const FilterThresholds& thresholds);

}  // namespace dptext::filters
