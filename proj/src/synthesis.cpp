#include "dptext/synthesis.hpp"

#include <fstream>

#include "dptext/parallel.hpp"

namespace dptext::synthesis {

using corpus::TextPair;

std::vector<Prefix> load_prefixes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open prefix file: " + path.string());
  std::vector<Prefix> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Prefix p;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      p.text = line;
    } else {
      p.text = line.substr(0, tab);
      p.domain_tag = line.substr(tab + 1);
    }
    if (p.text.empty()) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Context> generate_contexts(std::span<const Prefix> prefixes, std::size_t n_per_prefix,
                                       const SamplingConfig& cfg, backend::Backend& be,
                                       const backend::ModelHandle& handle,
                                       ContextGenReport* report, std::size_t max_in_flight) {
  if (n_per_prefix < 1) throw ConfigError("generate_contexts: n_per_prefix must be >= 1");
  cfg.validate();

  const std::size_t total = prefixes.size() * n_per_prefix;
  std::vector<Context> slots(total);
  std::vector<char> ok(total, 0);

  const bool parallel = be.concurrent_generate_safe();
  const int thread_limit = max_in_flight == 0 ? 0 : static_cast<int>(max_in_flight);

  par::for_each_index(
      total,
      [&](std::size_t ordinal) {
        const std::size_t prefix_idx = ordinal / n_per_prefix;
        const std::size_t ctx_idx = ordinal % n_per_prefix;
        const Prefix& prefix = prefixes[prefix_idx];
        SamplingConfig ctx_cfg = cfg;
        ctx_cfg.seed = cfg.seed + ordinal;
        Context ctx;
        ctx.context_id = "c" + std::to_string(prefix_idx) + "-" + std::to_string(ctx_idx);
        ctx.prefix = prefix;
        ctx.seed = ctx_cfg.seed;
        try {
          ctx.text = be.generate(handle, prefix.text, ctx_cfg);
          ok[ordinal] = 1;
        } catch (const std::exception&) {
          ok[ordinal] = 0;
        }
        slots[ordinal] = std::move(ctx);
      },
      parallel, thread_limit);

  std::vector<Context> out;
  out.reserve(total);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (ok[i]) {
      out.push_back(std::move(slots[i]));
    } else {
      ++failed;
    }
  }
  if (report) {
    report->requested = total;
    report->generated = out.size();
    report->failed = failed;
  }
  if (out.empty() && total > 0) {
    throw PhaseError("generate_contexts: all " + std::to_string(total) + " generations failed");
  }
  return out;
}

CompletionSet generate_completions(const Context& ctx, const SamplingConfig& cfg,
                                   backend::Backend& be, const backend::ModelHandle& handle) {
  cfg.validate();
  if (cfg.num_completions < 2) {
    throw ConfigError("generate_completions: num_completions must be >= 2");
  }
  CompletionSet cs;
  cs.context_id = ctx.context_id;
  std::size_t failed = 0;
  for (std::size_t k = 0; k < cfg.num_completions; ++k) {
    SamplingConfig ccfg = cfg;
    ccfg.seed = ctx.seed * 131 + k;
    std::string text;
    try {
      text = be.generate(handle, ctx.text, ccfg);
    } catch (const std::exception&) {
      ++failed;
      continue;
    }
    if (corpus::token_count(text) > ccfg.max_tokens) {
      text = corpus::truncate_to_tokens(text, ccfg.max_tokens);
    }
    if (text.empty()) {
      ++cs.dropped_empty;
      continue;
    }
    cs.completions.push_back(std::move(text));
  }
  if (failed == cfg.num_completions) {
    throw PhaseError("generate_completions: all completions failed for " + ctx.context_id);
  }
  return cs;
}

std::vector<TextPair> make_candidate_pairs(const CompletionSet& cs, corpus::TaskKind task,
                                           const std::string& generator_id, corpus::Phase phase) {
  if (!cs.usable()) {
    throw ConfigError("make_candidate_pairs: need at least 2 completions for " + cs.context_id);
  }
  std::vector<TextPair> out;
  const std::size_t k = cs.completions.size();
  out.reserve(k * (k - 1) / 2);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const std::string& a = cs.completions[i];
      const std::string& b = cs.completions[j];
      TextPair p;
      p.pair_id = cs.context_id + "-p" + std::to_string(i) + "-" + std::to_string(j);
      p.context_id = cs.context_id;
      p.phase = phase;
      p.generator_id = generator_id;
      if (task == corpus::TaskKind::summarization &&
          corpus::token_count(b) > corpus::token_count(a)) {
        p.x = b;
        p.y = a;
      } else {
        p.x = a;
        p.y = b;
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace dptext::synthesis
