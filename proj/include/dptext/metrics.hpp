#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dptext/corpus.hpp"

namespace dptext::metrics {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // both sides empty
};

// ROUGE-L over the canonical tokenization. F1 = 2PR/(P+R); empty candidate and
// reference score 0 and are flagged.
RougeScore rouge_l(std::string_view candidate, std::string_view reference);

enum class BleuSmoothing { none, add_epsilon };

// Sentence BLEU: modified n-gram precision up to max_n with brevity penalty.
// Orders longer than either sequence are skipped, so candidate == reference
// scores exactly 1.
double bleu(std::string_view candidate, std::string_view reference, int max_n = 4,
            BleuSmoothing smoothing = BleuSmoothing::none);

// alpha * bleu(candidate, reference) - (1 - alpha) * bleu(candidate, source).
double ibleu(std::string_view candidate, std::string_view reference, std::string_view source,
             double alpha = 0.9);

// Semantic similarity backend. Implementations declare their own concurrency
// safety; the two shipped ones are pure functions.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual double similarity(std::string_view a, std::string_view b) const = 0;
  virtual bool concurrent_safe() const { return true; }
  virtual std::string name() const = 0;
};

// 1.0 iff the canonical token sequences match, else 0.0.
class ExactMatchEmbedder final : public Embedder {
 public:
  double similarity(std::string_view a, std::string_view b) const override;
  std::string name() const override { return "exact_match"; }
};

// Cosine similarity of token count vectors; a cheap desk-scale stand-in for a
// learned sentence embedder.
class TokenCosineEmbedder final : public Embedder {
 public:
  double similarity(std::string_view a, std::string_view b) const override;
  std::string name() const override { return "token_cosine"; }
};

// (beta + 1) / (beta / sem + 1 / div): the beta-weighted harmonic mean of
// semantic similarity and diversity.
double semantic_diversity_hmean(double sem, double div, double beta);

// Weighted harmonic mean of semantic similarity and 1 - self-BLEU. The
// diversity term is clamped away from zero so an input copy collapses the
// score instead of dividing by zero.
double bert_ibleu(std::string_view candidate, std::string_view source, const Embedder& embedder,
                  double beta = 4.0);

struct MsttrResult {
  double value = 0.0;
  bool single_segment = false;  // text shorter than one full segment
};

MsttrResult msttr(std::string_view text, std::size_t segment_size = 100);

struct JaccardResult {
  double value = 0.0;
  bool degenerate = false;  // both token sets empty
};

// Type-set Jaccard similarity.
JaccardResult jaccard(std::string_view source, std::string_view prediction);

struct DeviationResult {
  double value = 0.0;   // percentage
  bool flagged = false; // no shared tokens (WPD) or degenerate input
};

// LD = 100 * (1 - |shared types| / |union types|).
DeviationResult lexical_deviation(std::string_view source, std::string_view prediction);

// WPD = 100 * mean over ordered pairs of shared types of
// |rel_source(t1,t2) - rel_pred(t1,t2)|, where rel(u,v) is the difference of
// first-occurrence positions normalized to [0,1] by sequence length. No shared
// tokens -> 100, flagged; a single shared token gives no pairs -> 0, flagged.
DeviationResult word_pair_deviation(std::string_view source, std::string_view prediction);

struct MetricResult {
  std::string name;
  double value = 0.0;
  std::vector<double> per_example;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
};

// One evaluated example: model prediction plus its source input and reference.
struct EvalExample {
  std::string id;
  std::string source;
  std::string prediction;
  std::string reference;
};

struct CorpusMetricsConfig {
  double ibleu_alpha = 0.9;
  double bert_ibleu_beta = 4.0;
  int bleu_max_n = 4;
  std::size_t msttr_segment_size = 100;

  nlohmann::json to_json() const;
};

struct EvalReportRow {
  std::string system;
  std::string dataset;
  std::vector<MetricResult> metrics;  // iBLEU, B-iB, R-L, Embed-F1, MSTTR, Jaccard, LD, WPD

  nlohmann::json to_json() const;
};

// Per-example evaluation parallelizes across examples; the serial twin is the
// reference used by the kernel-equivalence tests.
EvalReportRow evaluate_corpus(std::string_view system, std::string_view dataset,
                              std::span<const EvalExample> examples, const Embedder& embedder,
                              const CorpusMetricsConfig& cfg, bool parallel = true);
EvalReportRow evaluate_corpus_serial(std::string_view system, std::string_view dataset,
                                     std::span<const EvalExample> examples,
                                     const Embedder& embedder, const CorpusMetricsConfig& cfg);

// Plain-text table with one row per system and the standard metric columns.
std::string render_eval_table(std::span<const EvalReportRow> rows);

std::vector<EvalExample> read_eval_examples(const std::filesystem::path& path);

}  // namespace dptext::metrics
