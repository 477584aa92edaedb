#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dptext/common.hpp"
#include "dptext/corpus.hpp"

namespace dptext::quality {

enum class ErrorGroup { inconsistency, language };

enum class ErrorKind {
  extrinsic_information,
  misref_quote,
  misref_entity,
  contradiction,
  duplicated_input,
  grammar_error,
  incomplete_thought,
  missing_punctuation,
  spelling_mistake,
};

ErrorGroup group_of(ErrorKind kind);
std::string to_string(ErrorKind kind);
std::string to_string(ErrorGroup group);
ErrorKind kind_from_string(std::string_view s);

// Only these kinds may carry detector annotations; the inconsistency kinds and
// the nuanced language kinds need source-grounded human judgment.
bool detector_supported(ErrorKind kind);

enum class Annotator { human, detector };

struct ErrorAnnotation {
  std::string example_id;
  std::string system_id;
  ErrorKind kind = ErrorKind::grammar_error;
  std::optional<std::pair<std::size_t, std::size_t>> span;  // token offsets
  Annotator annotator = Annotator::human;
  std::string note;

  nlohmann::json to_json() const;
  static ErrorAnnotation from_json(const nlohmann::json& j);
};

// Fires on an exact normalized copy or token Jaccard >= near_threshold
// (flagged "near-duplicate" in the note).
std::optional<ErrorAnnotation> detect_duplicated_input(const corpus::TextPair& pair,
                                                       double near_threshold = 0.95);

// Fires when the text ends without terminal punctuation; closing quotes or
// brackets after the terminal are fine. Empty text is silent.
std::optional<ErrorAnnotation> detect_missing_punctuation(std::string_view text);

// One annotation per out-of-lexicon alphabetic token. Capitalized tokens are
// skipped (proper-noun heuristic) as are tokens containing digits.
std::vector<ErrorAnnotation> detect_spelling(std::string_view text,
                                             const std::unordered_set<std::string>& lexicon);

std::unordered_set<std::string> load_lexicon(const std::filesystem::path& path);

// The examined-example roster behind an annotation batch: which example ids
// were reviewed per (system, dataset). Denominators come from here, so
// error-free examples count.
struct AnnotationRoster {
  struct Entry {
    std::string system_id;
    std::string dataset;
    std::vector<std::string> example_ids;
  };
  std::vector<Entry> entries;

  nlohmann::json to_json() const;
  static AnnotationRoster from_json(const nlohmann::json& j);
};

struct ErrorRateReport {
  struct Row {
    std::string system_id;
    std::string dataset;
    ErrorKind kind = ErrorKind::grammar_error;
    std::size_t flagged_examples = 0;
    std::size_t denominator = 0;
    double rate = 0.0;
  };
  std::vector<Row> rows;

  double rate(std::string_view system, std::string_view dataset, ErrorKind kind) const;

  nlohmann::json to_json() const;
  // Grouped-bar rows {kind, system, dataset, rate} for charting.
  nlohmann::json chart_data() const;
};

std::vector<ErrorAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(std::span<const ErrorAnnotation> annotations,
                      const std::filesystem::path& path);

// Rates per (system, dataset, kind) over distinct example ids. Unknown
// system/dataset ids in annotations raise ConfigError.
ErrorRateReport aggregate_report(std::span<const ErrorAnnotation> annotations,
                                 const AnnotationRoster& roster);

// 100 * (rate_a - rate_b) / rate_a for the group rate; the headline derived
// statistic comparing two systems.
double relative_reduction(std::span<const ErrorAnnotation> annotations,
                          const AnnotationRoster& roster, std::string_view system_a,
                          std::string_view system_b, std::string_view dataset, ErrorGroup group);

// Blank annotation sheet: examples in seeded randomized order with blinded
// system labels, for manual annotation rounds.
struct SheetRow {
  std::string row_id;
  std::string example_id;
  std::string blinded_system;  // "s0", "s1", ...
  std::string text;
};
std::vector<SheetRow> make_annotation_sheet(
    std::span<const std::pair<std::string, std::string>> system_outputs,  // (system_id, text)
    std::span<const std::string> example_ids, std::uint64_t seed);

}  // namespace dptext::quality
