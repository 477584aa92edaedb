#include "dptext/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dptext/parallel.hpp"

namespace dptext::metrics {

using corpus::tokenize;

namespace {

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) return 0;
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (a[i - 1] == b[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[{tokens.begin() + i, tokens.begin() + i + n}]++;
  }
  return counts;
}

std::unordered_map<std::string, std::size_t> count_tokens(const std::vector<std::string>& toks) {
  std::unordered_map<std::string, std::size_t> c;
  for (const auto& t : toks) c[t]++;
  return c;
}

}  // namespace

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  RougeScore s;
  if (cand.empty() && ref.empty()) {
    s.degenerate = true;
    return s;
  }
  if (cand.empty() || ref.empty()) return s;
  const double lcs = static_cast<double>(lcs_length(cand, ref));
  s.precision = lcs / static_cast<double>(cand.size());
  s.recall = lcs / static_cast<double>(ref.size());
  if (s.precision + s.recall > 0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

double bleu(std::string_view candidate, std::string_view reference, int max_n,
            BleuSmoothing smoothing) {
  if (max_n < 1) throw ConfigError("bleu: max_n must be >= 1");
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;

  const int n_orders =
      std::min<int>(max_n, static_cast<int>(std::min(cand.size(), ref.size())));
  double log_precision_sum = 0.0;
  constexpr double kEpsilon = 1e-9;
  for (int n = 1; n <= n_orders; ++n) {
    const auto cand_counts = count_ngrams(cand, n);
    const auto ref_counts = count_ngrams(ref, n);
    std::size_t total = 0, matched = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    if (total == 0) continue;
    double p = static_cast<double>(matched) / static_cast<double>(total);
    if (p == 0.0) {
      if (smoothing == BleuSmoothing::add_epsilon) {
        p = kEpsilon;
      } else {
        return 0.0;
      }
    }
    log_precision_sum += std::log(p) / n_orders;
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return brevity * std::exp(log_precision_sum);
}

double ibleu(std::string_view candidate, std::string_view reference, std::string_view source,
             double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("ibleu: alpha must be in [0,1]");
  const double adequacy = bleu(candidate, reference);
  if (alpha == 1.0) return adequacy;
  return alpha * adequacy - (1.0 - alpha) * bleu(candidate, source);
}

double ExactMatchEmbedder::similarity(std::string_view a, std::string_view b) const {
  return tokenize(a) == tokenize(b) ? 1.0 : 0.0;
}

double TokenCosineEmbedder::similarity(std::string_view a, std::string_view b) const {
  const auto ca = count_tokens(tokenize(a));
  const auto cb = count_tokens(tokenize(b));
  if (ca.empty() && cb.empty()) return 1.0;
  if (ca.empty() || cb.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [t, c] : ca) {
    na += static_cast<double>(c) * c;
    auto it = cb.find(t);
    if (it != cb.end()) dot += static_cast<double>(c) * it->second;
  }
  for (const auto& [t, c] : cb) nb += static_cast<double>(c) * c;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double semantic_diversity_hmean(double sem, double div, double beta) {
  if (beta <= 0.0) throw ConfigError("bert_ibleu: beta must be > 0");
  if (sem <= 0.0) return 0.0;
  return (beta + 1.0) / (beta / sem + 1.0 / div);
}

double bert_ibleu(std::string_view candidate, std::string_view source, const Embedder& embedder,
                  double beta) {
  const double sem = embedder.similarity(source, candidate);
  double div = 1.0 - bleu(candidate, source);
  div = std::clamp(div, 1e-6, 1.0);
  return semantic_diversity_hmean(sem, div, beta);
}

MsttrResult msttr(std::string_view text, std::size_t segment_size) {
  if (segment_size < 1) throw ConfigError("msttr: segment_size must be >= 1");
  const auto toks = tokenize(text);
  if (toks.empty()) throw ConfigError("msttr: empty text");
  MsttrResult r;
  auto ttr = [&](std::size_t begin, std::size_t end) {
    std::set<std::string> types(toks.begin() + begin, toks.begin() + end);
    return static_cast<double>(types.size()) / static_cast<double>(end - begin);
  };
  if (toks.size() < segment_size) {
    r.single_segment = true;
    r.value = ttr(0, toks.size());
    return r;
  }
  const std::size_t full_segments = toks.size() / segment_size;
  double sum = 0.0;
  for (std::size_t s = 0; s < full_segments; ++s) {
    sum += ttr(s * segment_size, (s + 1) * segment_size);
  }
  r.value = sum / static_cast<double>(full_segments);
  return r;
}

JaccardResult jaccard(std::string_view source, std::string_view prediction) {
  const auto a = tokenize(source);
  const auto b = tokenize(prediction);
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  JaccardResult r;
  if (sa.empty() && sb.empty()) {
    r.value = 1.0;
    r.degenerate = true;
    return r;
  }
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  r.value = static_cast<double>(inter) / static_cast<double>(uni);
  return r;
}

DeviationResult lexical_deviation(std::string_view source, std::string_view prediction) {
  if (tokenize(source).empty() || tokenize(prediction).empty()) {
    throw ConfigError("lexical_deviation: both texts must be non-empty");
  }
  DeviationResult r;
  r.value = 100.0 * (1.0 - jaccard(source, prediction).value);
  return r;
}

DeviationResult word_pair_deviation(std::string_view source, std::string_view prediction) {
  const auto src = tokenize(source);
  const auto pred = tokenize(prediction);
  if (src.empty() || pred.empty()) {
    throw ConfigError("word_pair_deviation: both texts must be non-empty");
  }
  auto first_positions = [](const std::vector<std::string>& toks) {
    std::unordered_map<std::string, double> pos;
    const double denom = toks.size() > 1 ? static_cast<double>(toks.size() - 1) : 1.0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      pos.emplace(toks[i], static_cast<double>(i) / denom);
    }
    return pos;
  };
  const auto pos_src = first_positions(src);
  const auto pos_pred = first_positions(pred);

  std::vector<std::string> shared;
  for (const auto& [tok, p] : pos_src) {
    if (pos_pred.count(tok)) shared.push_back(tok);
  }
  std::sort(shared.begin(), shared.end());

  DeviationResult r;
  if (shared.empty()) {
    r.value = 100.0;
    r.flagged = true;
    return r;
  }
  if (shared.size() == 1) {
    r.value = 0.0;
    r.flagged = true;
    return r;
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (const auto& t1 : shared) {
    for (const auto& t2 : shared) {
      if (t1 == t2) continue;
      const double rel_src = pos_src.at(t1) - pos_src.at(t2);
      const double rel_pred = pos_pred.at(t1) - pos_pred.at(t2);
      // |rel difference| spans [0,2]; halve it so the metric is a percentage.
      sum += std::abs(rel_src - rel_pred) / 2.0;
      ++pairs;
    }
  }
  r.value = 100.0 * sum / static_cast<double>(pairs);
  return r;
}

nlohmann::json MetricResult::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["value"] = value;
  j["per_example"] = per_example;
  j["config"] = config;
  return j;
}

nlohmann::json CorpusMetricsConfig::to_json() const {
  nlohmann::json j;
  j["ibleu_alpha"] = ibleu_alpha;
  j["bert_ibleu_beta"] = bert_ibleu_beta;
  j["bleu_max_n"] = bleu_max_n;
  j["msttr_segment_size"] = msttr_segment_size;
  return j;
}

nlohmann::json EvalReportRow::to_json() const {
  nlohmann::json j;
  j["system"] = system;
  j["dataset"] = dataset;
  nlohmann::json ms = nlohmann::json::object();
  for (const auto& m : metrics) ms[m.name] = m.to_json();
  j["metrics"] = ms;
  return j;
}

namespace {

constexpr const char* kMetricNames[] = {"iBLEU", "B-iB", "R-L", "Embed-F1",
                                        "MSTTR", "Jaccard", "LD", "WPD"};
constexpr std::size_t kMetricCount = 8;

EvalReportRow evaluate_corpus_impl(std::string_view system, std::string_view dataset,
                                   std::span<const EvalExample> examples, const Embedder& embedder,
                                   const CorpusMetricsConfig& cfg, bool parallel) {
  const std::size_t n = examples.size();
  std::vector<std::vector<double>> per_metric(kMetricCount, std::vector<double>(n, 0.0));

  par::for_each_index(
      n,
      [&](std::size_t i) {
        const auto& ex = examples[i];
        per_metric[0][i] = ibleu(ex.prediction, ex.reference, ex.source, cfg.ibleu_alpha);
        per_metric[1][i] = bert_ibleu(ex.prediction, ex.source, embedder, cfg.bert_ibleu_beta);
        per_metric[2][i] = rouge_l(ex.prediction, ex.reference).f1;
        per_metric[3][i] = embedder.similarity(ex.prediction, ex.reference);
        per_metric[4][i] = ex.prediction.empty() ? 0.0
                                                 : msttr(ex.prediction, cfg.msttr_segment_size).value;
        per_metric[5][i] = jaccard(ex.source, ex.prediction).value;
        if (ex.prediction.empty()) {
          per_metric[6][i] = 100.0;
          per_metric[7][i] = 100.0;
        } else {
          per_metric[6][i] = lexical_deviation(ex.source, ex.prediction).value;
          per_metric[7][i] = word_pair_deviation(ex.source, ex.prediction).value;
        }
      },
      parallel && embedder.concurrent_safe());

  EvalReportRow row;
  row.system = std::string(system);
  row.dataset = std::string(dataset);
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    MetricResult res;
    res.name = kMetricNames[m];
    res.per_example = std::move(per_metric[m]);
    double sum = 0.0;
    for (double v : res.per_example) sum += v;
    res.value = n == 0 ? 0.0 : sum / static_cast<double>(n);
    res.config = cfg.to_json();
    row.metrics.push_back(std::move(res));
  }
  return row;
}

}  // namespace

EvalReportRow evaluate_corpus(std::string_view system, std::string_view dataset,
                              std::span<const EvalExample> examples, const Embedder& embedder,
                              const CorpusMetricsConfig& cfg, bool parallel) {
  return evaluate_corpus_impl(system, dataset, examples, embedder, cfg, parallel);
}

EvalReportRow evaluate_corpus_serial(std::string_view system, std::string_view dataset,
                                     std::span<const EvalExample> examples,
                                     const Embedder& embedder, const CorpusMetricsConfig& cfg) {
  return evaluate_corpus_impl(system, dataset, examples, embedder, cfg, false);
}

std::string render_eval_table(std::span<const EvalReportRow> rows) {
  std::ostringstream out;
  out << "system          dataset   ";
  for (const char* name : kMetricNames) {
    out << "  " << name;
    for (std::size_t pad = std::string(name).size(); pad < 8; ++pad) out << ' ';
  }
  out << '\n';
  for (const auto& row : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-15s %-10s", row.system.c_str(), row.dataset.c_str());
    out << buf;
    for (const auto& m : row.metrics) {
      std::snprintf(buf, sizeof(buf), "  %8.2f", m.value * (m.name == "LD" || m.name == "WPD" ? 1.0 : 100.0));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<EvalExample> read_eval_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open eval file: " + path.string());
  std::vector<EvalExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("eval file line " + std::to_string(line_no) + ": " + e.what(), line_no, 0);
    }
    EvalExample ex;
    ex.id = j.value("id", std::to_string(line_no));
    ex.source = j.value("source", j.value("source_text", ""));
    ex.prediction = j.value("prediction", "");
    ex.reference = j.value("reference", j.value("reference_text", ""));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace dptext::metrics
