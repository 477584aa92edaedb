#include "dptext/quality.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include "dptext/metrics.hpp"

namespace dptext::quality {

ErrorGroup group_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::extrinsic_information:
    case ErrorKind::misref_quote:
    case ErrorKind::misref_entity:
    case ErrorKind::contradiction:
      return ErrorGroup::inconsistency;
    default:
      return ErrorGroup::language;
  }
}

std::string to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::extrinsic_information: return "extrinsic_information";
    case ErrorKind::misref_quote: return "misref_quote";
    case ErrorKind::misref_entity: return "misref_entity";
    case ErrorKind::contradiction: return "contradiction";
    case ErrorKind::duplicated_input: return "duplicated_input";
    case ErrorKind::grammar_error: return "grammar_error";
    case ErrorKind::incomplete_thought: return "incomplete_thought";
    case ErrorKind::missing_punctuation: return "missing_punctuation";
    case ErrorKind::spelling_mistake: return "spelling_mistake";
  }
  return "grammar_error";
}

std::string to_string(ErrorGroup group) {
  return group == ErrorGroup::inconsistency ? "inconsistency" : "language";
}

ErrorKind kind_from_string(std::string_view s) {
  for (ErrorKind k :
       {ErrorKind::extrinsic_information, ErrorKind::misref_quote, ErrorKind::misref_entity,
        ErrorKind::contradiction, ErrorKind::duplicated_input, ErrorKind::grammar_error,
        ErrorKind::incomplete_thought, ErrorKind::missing_punctuation,
        ErrorKind::spelling_mistake}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown error kind: " + std::string(s));
}

bool detector_supported(ErrorKind kind) {
  return kind == ErrorKind::duplicated_input || kind == ErrorKind::missing_punctuation ||
         kind == ErrorKind::spelling_mistake;
}

nlohmann::json ErrorAnnotation::to_json() const {
  nlohmann::json j;
  j["example_id"] = example_id;
  j["system_id"] = system_id;
  j["category"] = to_string(kind);
  if (span) j["span"] = {span->first, span->second};
  j["annotator"] = annotator == Annotator::human ? "human" : "detector";
  j["note"] = note;
  return j;
}

ErrorAnnotation ErrorAnnotation::from_json(const nlohmann::json& j) {
  ErrorAnnotation a;
  a.example_id = j.at("example_id").get<std::string>();
  a.system_id = j.at("system_id").get<std::string>();
  a.kind = kind_from_string(j.at("category").get<std::string>());
  if (j.contains("span") && j["span"].is_array() && j["span"].size() == 2) {
    a.span = {j["span"][0].get<std::size_t>(), j["span"][1].get<std::size_t>()};
  }
  a.annotator = j.value("annotator", "human") == "detector" ? Annotator::detector : Annotator::human;
  a.note = j.value("note", "");
  if (a.annotator == Annotator::detector && !detector_supported(a.kind)) {
    throw ConfigError("detector annotation for non-detectable kind " + to_string(a.kind));
  }
  return a;
}

std::optional<ErrorAnnotation> detect_duplicated_input(const corpus::TextPair& pair,
                                                       double near_threshold) {
  const auto x_toks = corpus::tokenize(pair.x);
  const auto y_toks = corpus::tokenize(pair.y);
  ErrorAnnotation a;
  a.example_id = pair.pair_id;
  a.kind = ErrorKind::duplicated_input;
  a.annotator = Annotator::detector;
  if (!x_toks.empty() && x_toks == y_toks) {
    a.note = "exact duplicate";
    return a;
  }
  const double j = metrics::jaccard(pair.x, pair.y).value;
  if (!x_toks.empty() && !y_toks.empty() && j >= near_threshold) {
    a.note = "near-duplicate";
    return a;
  }
  return std::nullopt;
}

std::optional<ErrorAnnotation> detect_missing_punctuation(std::string_view text) {
  // Walk back over whitespace and closing quotes/brackets.
  std::size_t i = text.size();
  while (i > 0) {
    const char c = text[i - 1];
    if (std::isspace(static_cast<unsigned char>(c)) || c == '"' || c == '\'' || c == ')' ||
        c == ']') {
      --i;
    } else {
      break;
    }
  }
  if (i == 0) return std::nullopt;  // empty or punctuation-only: degenerate
  const char last = text[i - 1];
  if (last == '.' || last == '!' || last == '?') return std::nullopt;
  ErrorAnnotation a;
  a.kind = ErrorKind::missing_punctuation;
  a.annotator = Annotator::detector;
  a.note = "no terminal punctuation";
  a.span = {i - 1, i};
  return a;
}

std::vector<ErrorAnnotation> detect_spelling(std::string_view text,
                                             const std::unordered_set<std::string>& lexicon) {
  if (lexicon.empty()) throw ConfigError("detect_spelling: lexicon must be non-empty");
  std::vector<ErrorAnnotation> out;
  // Token-level scan on the raw (case-preserving) split so the proper-noun
  // heuristic can see capitalization.
  std::size_t token_index = 0;
  std::string word;
  auto flush = [&](bool at_end) {
    (void)at_end;
    if (word.empty()) return;
    bool capitalized = std::isupper(static_cast<unsigned char>(word[0])) != 0;
    bool alphabetic = true;
    bool has_digit = false;
    std::string lower;
    for (char c : word) {
      if (std::isdigit(static_cast<unsigned char>(c))) has_digit = true;
      if (!std::isalpha(static_cast<unsigned char>(c))) alphabetic = false;
      lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (alphabetic && !capitalized && !has_digit && !lexicon.count(lower)) {
      ErrorAnnotation a;
      a.kind = ErrorKind::spelling_mistake;
      a.annotator = Annotator::detector;
      a.note = "out of lexicon: " + lower;
      a.span = {token_index, token_index + 1};
      out.push_back(std::move(a));
    }
    word.clear();
    ++token_index;
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-') {
      word.push_back(c);
    } else {
      flush(false);
    }
  }
  flush(true);
  return out;
}

std::unordered_set<std::string> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon: " + path.string());
  std::unordered_set<std::string> out;
  std::string word;
  while (std::getline(in, word)) {
    if (!word.empty() && word.back() == '\r') word.pop_back();
    if (word.empty()) continue;
    std::string lower;
    for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    out.insert(lower);
  }
  return out;
}

nlohmann::json AnnotationRoster::to_json() const {
  nlohmann::json entries_json = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j;
    j["system_id"] = e.system_id;
    j["dataset"] = e.dataset;
    j["example_ids"] = e.example_ids;
    entries_json.push_back(j);
  }
  nlohmann::json j;
  j["entries"] = entries_json;
  return j;
}

AnnotationRoster AnnotationRoster::from_json(const nlohmann::json& j) {
  AnnotationRoster r;
  for (const auto& e : j.at("entries")) {
    Entry entry;
    entry.system_id = e.at("system_id").get<std::string>();
    entry.dataset = e.at("dataset").get<std::string>();
    entry.example_ids = e.at("example_ids").get<std::vector<std::string>>();
    r.entries.push_back(std::move(entry));
  }
  return r;
}

std::vector<ErrorAnnotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open annotations: " + path.string());
  std::vector<ErrorAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      out.push_back(ErrorAnnotation::from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("annotation file line " + std::to_string(line_no) + ": " + e.what(),
                       line_no, 0);
    }
  }
  return out;
}

void save_annotations(std::span<const ErrorAnnotation> annotations,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write annotations: " + path.string());
  for (const auto& a : annotations) out << a.to_json().dump() << '\n';
}

ErrorRateReport aggregate_report(std::span<const ErrorAnnotation> annotations,
                                 const AnnotationRoster& roster) {
  // (system, dataset) -> examined ids
  std::map<std::pair<std::string, std::string>, std::set<std::string>> examined;
  for (const auto& e : roster.entries) {
    auto& ids = examined[{e.system_id, e.dataset}];
    ids.insert(e.example_ids.begin(), e.example_ids.end());
  }
  auto locate = [&](const ErrorAnnotation& a) -> std::pair<std::string, std::string> {
    for (const auto& [key, ids] : examined) {
      if (key.first == a.system_id && ids.count(a.example_id)) return key;
    }
    throw ConfigError("annotation references unknown system/example: " + a.system_id + "/" +
                      a.example_id);
  };

  // (system, dataset, kind) -> distinct example ids flagged
  std::map<std::tuple<std::string, std::string, ErrorKind>, std::set<std::string>> flagged;
  for (const auto& a : annotations) {
    const auto key = locate(a);
    flagged[{key.first, key.second, a.kind}].insert(a.example_id);
  }

  ErrorRateReport report;
  for (const auto& [key, ids] : examined) {
    for (ErrorKind kind :
         {ErrorKind::extrinsic_information, ErrorKind::misref_quote, ErrorKind::misref_entity,
          ErrorKind::contradiction, ErrorKind::duplicated_input, ErrorKind::grammar_error,
          ErrorKind::incomplete_thought, ErrorKind::missing_punctuation,
          ErrorKind::spelling_mistake}) {
      ErrorRateReport::Row row;
      row.system_id = key.first;
      row.dataset = key.second;
      row.kind = kind;
      row.denominator = ids.size();
      auto it = flagged.find({key.first, key.second, kind});
      row.flagged_examples = it == flagged.end() ? 0 : it->second.size();
      row.rate = row.denominator == 0
                     ? 0.0
                     : static_cast<double>(row.flagged_examples) / row.denominator;
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

double ErrorRateReport::rate(std::string_view system, std::string_view dataset,
                             ErrorKind kind) const {
  for (const auto& row : rows) {
    if (row.system_id == system && row.dataset == dataset && row.kind == kind) return row.rate;
  }
  return 0.0;
}

nlohmann::json ErrorRateReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j;
    j["system_id"] = row.system_id;
    j["dataset"] = row.dataset;
    j["kind"] = to_string(row.kind);
    j["group"] = to_string(group_of(row.kind));
    j["flagged_examples"] = row.flagged_examples;
    j["denominator"] = row.denominator;
    j["rate"] = row.rate;
    rows_json.push_back(j);
  }
  nlohmann::json j;
  j["rows"] = rows_json;
  return j;
}

nlohmann::json ErrorRateReport::chart_data() const {
  nlohmann::json bars = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j;
    j["kind"] = to_string(row.kind);
    j["system"] = row.system_id;
    j["dataset"] = row.dataset;
    j["rate"] = row.rate;
    bars.push_back(j);
  }
  return bars;
}

namespace {

double group_error_rate(std::span<const ErrorAnnotation> annotations,
                        const AnnotationRoster& roster, std::string_view system,
                        std::string_view dataset, ErrorGroup group) {
  std::set<std::string> examined;
  for (const auto& e : roster.entries) {
    if (e.system_id == system && e.dataset == dataset) {
      examined.insert(e.example_ids.begin(), e.example_ids.end());
    }
  }
  if (examined.empty()) {
    throw ConfigError("no roster entry for " + std::string(system) + "/" + std::string(dataset));
  }
  std::set<std::string> flagged;
  for (const auto& a : annotations) {
    if (a.system_id == system && group_of(a.kind) == group && examined.count(a.example_id)) {
      flagged.insert(a.example_id);
    }
  }
  return static_cast<double>(flagged.size()) / static_cast<double>(examined.size());
}

}  // namespace

double relative_reduction(std::span<const ErrorAnnotation> annotations,
                          const AnnotationRoster& roster, std::string_view system_a,
                          std::string_view system_b, std::string_view dataset, ErrorGroup group) {
  const double rate_a = group_error_rate(annotations, roster, system_a, dataset, group);
  const double rate_b = group_error_rate(annotations, roster, system_b, dataset, group);
  if (rate_a == 0.0) throw ConfigError("relative_reduction: baseline rate is zero");
  return 100.0 * (rate_a - rate_b) / rate_a;
}

std::vector<SheetRow> make_annotation_sheet(
    std::span<const std::pair<std::string, std::string>> system_outputs,
    std::span<const std::string> example_ids, std::uint64_t seed) {
  if (system_outputs.size() != example_ids.size()) {
    throw ConfigError("make_annotation_sheet: outputs and example ids must align");
  }
  // Blind the system labels in first-seen order, then shuffle rows.
  std::map<std::string, std::string> blind;
  std::vector<SheetRow> rows;
  for (std::size_t i = 0; i < system_outputs.size(); ++i) {
    const auto& [system, text] = system_outputs[i];
    auto it = blind.find(system);
    if (it == blind.end()) {
      it = blind.emplace(system, "s" + std::to_string(blind.size())).first;
    }
    SheetRow row;
    row.example_id = example_ids[i];
    row.blinded_system = it->second;
    row.text = text;
    rows.push_back(std::move(row));
  }
  Rng rng(seed);
  for (std::size_t i = rows.size(); i > 1; --i) {
    std::swap(rows[i - 1], rows[rng.below(i)]);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].row_id = "r" + std::to_string(i);
  }
  return rows;
}

}  // namespace dptext::quality
