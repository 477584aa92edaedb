#include "dptext/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace dptext::pipeline {

using backend::ModelHandle;
using corpus::TextPair;

std::string to_string(PhaseId p) {
  switch (p) {
    case PhaseId::p1: return "p1";
    case PhaseId::p2: return "p2";
    case PhaseId::p3: return "p3";
  }
  return "p1";
}

std::vector<TextPair> TrackedDataset::supervision_pairs(std::size_t* skipped) const {
  std::size_t local_skipped = 0;
  std::vector<TextPair> out;
  for (const auto& doc : data_.documents) {
    reads_ += 1;
    if (doc.split != corpus::Split::train || !doc.reference_text ||
        doc.reference_text->empty() || doc.source_text.empty()) {
      ++local_skipped;
      continue;
    }
    TextPair p;
    p.pair_id = "priv-" + doc.id;
    p.x = doc.source_text;
    p.y = *doc.reference_text;
    p.phase = corpus::Phase::private_data;
    p.generator_id = "private-dataset";
    out.push_back(std::move(p));
  }
  if (skipped) *skipped = local_skipped;
  return out;
}

std::size_t TrackedDataset::train_pair_count() const {
  std::size_t n = 0;
  for (const auto& doc : data_.documents) {
    if (doc.split == corpus::Split::train && doc.reference_text && !doc.reference_text->empty() &&
        !doc.source_text.empty()) {
      ++n;
    }
  }
  return n;
}

nlohmann::json PhaseResult::to_json() const {
  nlohmann::json j;
  j["phase"] = to_string(phase);
  j["model_id"] = model.model_id;
  j["params_digest"] = model.params_digest;
  nlohmann::json caps = nlohmann::json::array();
  for (auto c : model.capabilities) caps.push_back(backend::to_string(c));
  j["capabilities"] = caps;
  j["pairs_in"] = pairs_in;
  j["pairs_retained"] = pairs_retained;
  if (report) j["filter_report"] = report->to_json();
  if (ledger) j["ledger"] = *ledger;
  j["config_digest"] = config_digest;
  j["generator_model_id"] = generator_model_id;
  if (!contexts.empty()) {
    nlohmann::json ctxs = nlohmann::json::array();
    for (const auto& c : contexts) {
      ctxs.push_back({{"context_id", c.context_id},
                      {"prefix", c.prefix.text},
                      {"domain_tag", c.prefix.domain_tag},
                      {"text", c.text},
                      {"seed", c.seed}});
    }
    j["contexts"] = ctxs;
  }
  return j;
}

PhaseResult PhaseResult::from_json(const nlohmann::json& j) {
  PhaseResult r;
  const std::string phase = j.at("phase").get<std::string>();
  r.phase = phase == "p1" ? PhaseId::p1 : phase == "p2" ? PhaseId::p2 : PhaseId::p3;
  r.model.model_id = j.at("model_id").get<std::string>();
  r.model.params_digest = j.at("params_digest").get<std::string>();
  if (j.contains("capabilities")) {
    for (const auto& c : j["capabilities"]) {
      const std::string name = c.get<std::string>();
      for (auto cap : {backend::Capability::generate, backend::Capability::finetune,
                       backend::Capability::per_sample_grads}) {
        if (backend::to_string(cap) == name) r.model.capabilities.insert(cap);
      }
    }
  }
  r.pairs_in = j.at("pairs_in").get<std::size_t>();
  r.pairs_retained = j.at("pairs_retained").get<std::size_t>();
  if (j.contains("filter_report")) {
    r.report = filters::FilterChainReport::from_json(j["filter_report"]);
  }
  if (j.contains("ledger")) r.ledger = j["ledger"];
  r.config_digest = j.at("config_digest").get<std::string>();
  r.generator_model_id = j.value("generator_model_id", "");
  if (j.contains("contexts")) {
    for (const auto& c : j["contexts"]) {
      synthesis::Context ctx;
      ctx.context_id = c.at("context_id").get<std::string>();
      ctx.prefix.text = c.at("prefix").get<std::string>();
      ctx.prefix.domain_tag = c.value("domain_tag", "");
      ctx.text = c.at("text").get<std::string>();
      ctx.seed = c.at("seed").get<std::uint64_t>();
      r.contexts.push_back(std::move(ctx));
    }
  }
  return r;
}

namespace {

struct ReadGuard {
  const TrackedDataset* ds;
  std::uint64_t before;
  const char* phase;

  explicit ReadGuard(const TrackedDataset* dataset, const char* phase_name)
      : ds(dataset), before(dataset ? dataset->read_count() : 0), phase(phase_name) {}

  std::uint64_t delta() const { return ds ? ds->read_count() - before : 0; }

  void enforce_zero() const {
    if (ds && ds->read_count() != before) {
      throw PhaseError(std::string("privacy invariant violated: private dataset read during ") +
                       phase);
    }
  }
};

std::vector<TextPair> synthesize_candidates(std::span<const synthesis::Context> contexts,
                                            const backend::SamplingConfig& sampling,
                                            backend::Backend& be, const ModelHandle& handle,
                                            corpus::TaskKind task, corpus::Phase phase,
                                            std::size_t* unusable_sets) {
  std::vector<TextPair> candidates;
  std::size_t unusable = 0;
  for (const auto& ctx : contexts) {
    auto cs = synthesis::generate_completions(ctx, sampling, be, handle);
    if (!cs.usable()) {
      ++unusable;
      continue;
    }
    auto pairs = synthesis::make_candidate_pairs(cs, task, handle.model_id, phase);
    candidates.insert(candidates.end(), std::make_move_iterator(pairs.begin()),
                      std::make_move_iterator(pairs.end()));
  }
  if (unusable_sets) *unusable_sets = unusable;
  return candidates;
}

}  // namespace

PhaseResult run_phase1(const SynthesisSettings& synth, const filters::FilterThresholds& thresholds,
                       const backend::TrainingConfig& train_cfg, const ModelHandle& base_model,
                       corpus::TaskKind task, PipelineEnv& env) {
  if (env.generator == nullptr || env.trainer == nullptr) {
    throw ConfigError("run_phase1: generator and trainer backends required");
  }
  if (!env.generator_handle.has(backend::Capability::generate)) {
    throw CapabilityError("phase 1 generator lacks generate capability");
  }
  if (!base_model.has(backend::Capability::finetune)) {
    throw CapabilityError("phase 1 base model lacks finetune capability");
  }
  ReadGuard guard(env.private_dataset, "phase 1");

  PhaseResult result;
  result.phase = PhaseId::p1;

  result.generator_model_id = env.generator_handle.model_id;
  result.contexts = synthesis::generate_contexts(synth.prefixes, synth.n_per_prefix,
                                                 synth.sampling, *env.generator,
                                                 env.generator_handle);
  std::size_t unusable = 0;
  auto candidates = synthesize_candidates(result.contexts, synth.sampling, *env.generator,
                                          env.generator_handle, task, corpus::Phase::synthesis,
                                          &unusable);
  result.pairs_in = candidates.size();

  filters::ChainScorers scorers{env.nli, env.grammar};
  auto [retained, report] = filters::run_filter_chain(candidates, task, scorers, thresholds);
  result.report = report;
  result.pairs_retained = retained.size();
  if (retained.empty()) {
    throw PhaseError("phase 1: filters eliminated all data (" + std::to_string(candidates.size()) +
                     " candidates in)");
  }

  result.model = env.trainer->finetune(base_model, retained, train_cfg);
  guard.enforce_zero();
  return result;
}

PhaseResult run_phase2(const ModelHandle& m_base, const TrackedDataset& private_dataset,
                       dp::PrivacyParams privacy, const backend::TrainingConfig& train_cfg,
                       PipelineEnv& env) {
  if (env.trainer == nullptr) throw ConfigError("run_phase2: trainer backend required");
  if (!m_base.has(backend::Capability::per_sample_grads)) {
    throw CapabilityError("phase 2 model lacks per_sample_grads capability");
  }
  train_cfg.validate();

  std::size_t skipped = 0;
  const auto pairs = private_dataset.supervision_pairs(&skipped);
  if (pairs.empty()) throw PhaseError("phase 2: private dataset has no usable supervision pairs");

  privacy.dataset_size = pairs.size();
  privacy.validate();
  const double delta = privacy.resolved_delta();
  const double q = privacy.sampling_rate();
  const std::size_t planned_steps = privacy.total_steps();

  const auto orders = dp::default_rdp_orders();
  const double sigma =
      dp::calibrate_noise(privacy.epsilon, delta, q, planned_steps, orders);
  dp::AccountantLedger ledger(sigma, q, delta, orders);

  ModelHandle m_private = env.trainer->clone_model(m_base, m_base.model_id + "-dp");
  Rng noise_rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Rng shuffle_rng(train_cfg.seed);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  bool budget_stop = false;

  for (std::size_t epoch = 0; epoch < privacy.epochs && !budget_stop; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += privacy.batch_size) {
      if (ledger.epsilon_after(1).epsilon > privacy.epsilon) {
        budget_stop = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + privacy.batch_size);
      std::vector<TextPair> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) batch.push_back(pairs[order[k]]);

      const auto grads = env.trainer->per_sample_gradients(m_private, batch);
      const auto step = dp::dp_step(grads, privacy.clip_norm, sigma, train_cfg.learning_rate,
                                    noise_rng);
      env.trainer->apply_update(m_private, step.update);
      ledger.record_steps(1);
    }
    const double loss = env.trainer->mean_loss(m_private, pairs);
    if (!std::isfinite(loss)) {
      throw PhaseError("phase 2 diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
    }
  }

  PhaseResult result;
  result.phase = PhaseId::p2;
  result.model = m_private;
  result.pairs_in = pairs.size();
  result.pairs_retained = pairs.size();
  nlohmann::json ledger_json = ledger.to_json();
  ledger_json["budget_stop"] = budget_stop;
  ledger_json["planned_steps"] = planned_steps;
  ledger_json["skipped_documents"] = skipped;
  ledger_json["target_epsilon"] = privacy.epsilon;
  result.ledger = ledger_json;
  return result;
}

PhaseResult run_phase3(const ModelHandle& m_private,
                       std::span<const synthesis::Context> contexts_from_p1,
                       const backend::SamplingConfig& sampling,
                       const filters::FilterThresholds& thresholds,
                       const backend::TrainingConfig& train_cfg, corpus::TaskKind task,
                       PipelineEnv& env, const std::optional<std::string>& expected_filter_digest) {
  if (env.trainer == nullptr) throw ConfigError("run_phase3: trainer backend required");
  if (!m_private.has(backend::Capability::generate)) {
    throw CapabilityError("phase 3 model lacks generate capability");
  }
  if (!m_private.has(backend::Capability::finetune)) {
    throw CapabilityError("phase 3 model lacks finetune capability");
  }
  if (expected_filter_digest && *expected_filter_digest != thresholds.digest()) {
    throw ConfigError("phase 3 filter settings differ from phase 1 (digest mismatch)");
  }
  if (contexts_from_p1.empty()) throw ConfigError("phase 3: no contexts from phase 1");
  ReadGuard guard(env.private_dataset, "phase 3");

  PhaseResult result;
  result.phase = PhaseId::p3;
  result.generator_model_id = m_private.model_id;

  // Self-distillation: the private model generates its own training pairs.
  std::size_t unusable = 0;
  auto candidates = synthesize_candidates(contexts_from_p1, sampling, *env.trainer, m_private,
                                          task, corpus::Phase::distillation, &unusable);
  result.pairs_in = candidates.size();

  filters::ChainScorers scorers{env.nli, env.grammar};
  auto [retained, report] = filters::run_filter_chain(candidates, task, scorers, thresholds);
  result.report = report;
  result.pairs_retained = retained.size();
  if (retained.empty()) {
    throw PhaseError("phase 3: filters eliminated all data (" + std::to_string(candidates.size()) +
                     " candidates in)");
  }

  result.model = env.trainer->finetune(m_private, retained, train_cfg);
  guard.enforce_zero();
  return result;
}

double sampling_efficiency(const filters::FilterChainReport& report) {
  if (report.input_count == 0) throw ConfigError("sampling_efficiency: zero input count");
  return static_cast<double>(report.retained_count) / static_cast<double>(report.input_count);
}

std::string format_efficiency(std::size_t retained, std::size_t total) {
  if (total == 0) throw ConfigError("format_efficiency: zero total");
  const double pct = 100.0 * static_cast<double>(retained) / static_cast<double>(total);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", pct);
  std::string s(buf);
  if (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') {
    s.pop_back();  // "30.40" -> "30.4", but "0.00" -> "0.0"
  } else if (s.size() > 3 && s.back() == '0') {
    s.pop_back();
  }
  char out[96];
  std::snprintf(out, sizeof(out), "%s%% (%zu/%zu)", s.c_str(), retained, total);
  return out;
}

nlohmann::json RunSettings::to_json() const {
  nlohmann::json j;
  j["task"] = corpus::to_string(task);
  j["dataset_label"] = dataset_label;
  nlohmann::json prefixes = nlohmann::json::array();
  for (const auto& p : p1_synth.prefixes) {
    prefixes.push_back({{"text", p.text}, {"domain_tag", p.domain_tag}});
  }
  j["p1_synth"] = {{"prefixes", prefixes},
                   {"n_per_prefix", p1_synth.n_per_prefix},
                   {"sampling", p1_synth.sampling.to_json()}};
  j["p3_sampling"] = p3_sampling.to_json();
  j["thresholds"] = thresholds.to_json();
  j["privacy"] = {{"epsilon", privacy.epsilon},
                  {"delta", privacy.delta},
                  {"clip_norm", privacy.clip_norm},
                  {"batch_size", privacy.batch_size},
                  {"epochs", privacy.epochs}};
  j["p1_train"] = p1_train.to_json();
  j["p2_train"] = p2_train.to_json();
  j["p3_train"] = p3_train.to_json();
  j["seed"] = seed;
  j["desk_vocab_cap"] = desk_vocab_cap;
  return j;
}

std::string RunSettings::digest() const { return fnv1a64_hex(to_json().dump()); }

// ---------------------------------------------------------------------------
// Runner

Runner::Runner(RunSettings settings, PipelineEnv env, std::filesystem::path output_dir)
    : settings_(std::move(settings)), env_(std::move(env)) {
  run_id_ = "r" + settings_.digest().substr(0, 12) + "-s" + std::to_string(settings_.seed);
  run_dir_ = output_dir / run_id_;
  std::filesystem::create_directories(run_dir_);

  const auto lock_path = run_dir_ / ".lock";
  if (std::filesystem::exists(lock_path)) {
    throw ConfigError("run directory is locked (stale run?): " + lock_path.string());
  }
  std::ofstream(lock_path) << "pid\n";
  lock_held_ = true;

  manifest_.run_id = run_id_;
  manifest_.config_digest = settings_.digest();
  manifest_.seed = settings_.seed;
  manifest_.created_at = corpus::now_iso8601();
  write_manifest();
}

Runner::~Runner() {
  if (lock_held_) {
    std::error_code ec;
    std::filesystem::remove(run_dir_ / ".lock", ec);
  }
}

std::string Runner::phase_digest(PhaseId p) const {
  nlohmann::json j;
  j["config"] = settings_.to_json();
  j["phase"] = to_string(p);
  return fnv1a64_hex(j.dump());
}

std::optional<PhaseResult> Runner::load_cached(PhaseId p, const std::string& digest) {
  const auto path = phase_dir(p) / "phase_result.json";
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  auto result = PhaseResult::from_json(j);
  if (result.config_digest != digest) return std::nullopt;
  // Re-register the checkpointed model with the trainer so later phases can
  // use the cached handle.
  const auto ckpt = phase_dir(p) / "checkpoint";
  if (std::filesystem::exists(ckpt / "params.bin")) {
    result.model = env_.trainer->load_checkpoint(ckpt);
  }
  return result;
}

void Runner::persist(const PhaseResult& result, const backend::TrainingConfig& train_cfg) {
  const auto dir = phase_dir(result.phase);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "phase_result.json");
    out << result.to_json().dump(2) << '\n';
  }
  if (result.report) {
    std::ofstream out(dir / "filter_report.json");
    out << result.report->to_json().dump(2) << '\n';
  }
  if (result.ledger) {
    std::ofstream out(dir / "ledger.json");
    out << result.ledger->dump(2) << '\n';
  }
  std::vector<std::string> lineage;
  if (p1_) lineage.push_back(p1_->model.model_id);
  if (p2_) lineage.push_back(p2_->model.model_id);
  if (p3_) lineage.push_back(p3_->model.model_id);
  env_.trainer->save_checkpoint(result.model, dir / "checkpoint", train_cfg, lineage);
  manifest_.phase_outputs[to_string(result.phase)] = dir.string();
  write_manifest();
}

void Runner::write_manifest() {
  std::ofstream out(run_dir_ / "manifest.json");
  out << manifest_.to_json().dump(2) << '\n';
}

PhaseResult Runner::run_phase1() {
  const std::string digest = phase_digest(PhaseId::p1);
  if (auto cached = load_cached(PhaseId::p1, digest)) {
    p1_ = *cached;
    return *cached;
  }
  const std::uint64_t before = env_.private_dataset ? env_.private_dataset->read_count() : 0;

  SynthesisSettings synth = settings_.p1_synth;
  synth.sampling.seed = settings_.seed;
  backend::TrainingConfig train_cfg = settings_.p1_train;
  train_cfg.seed = settings_.seed;

  // The pre-trained trainable model: fresh desk model with its vocabulary
  // built from the generator's output space (synthetic text only).
  std::vector<std::string> vocab_texts;
  for (const auto& prefix : synth.prefixes) {
    for (std::size_t i = 0; i < 8; ++i) {
      backend::SamplingConfig probe = synth.sampling;
      probe.seed = settings_.seed + i;
      try {
        vocab_texts.push_back(env_.generator->generate(env_.generator_handle, prefix.text, probe));
        vocab_texts.push_back(env_.generator->generate(env_.generator_handle,
                                                       vocab_texts.back(), probe));
      } catch (const std::exception&) {
        // vocabulary probing tolerates generator faults
      }
    }
  }
  backend::DeskBackend::ModelOptions opts;
  opts.vocab_cap = settings_.desk_vocab_cap;
  const auto m_pre = env_.trainer->create_model("m-pre", vocab_texts, opts);

  auto result = ::dptext::pipeline::run_phase1(synth, settings_.thresholds, train_cfg, m_pre,
                                               settings_.task, env_);
  result.config_digest = digest;
  p1_ = result;
  reads_during_p1_ = (env_.private_dataset ? env_.private_dataset->read_count() : 0) - before;
  persist(result, train_cfg);
  return result;
}

PhaseResult Runner::run_phase2() {
  if (!p1_) throw PhaseError("run_phase2: phase 1 has not completed");
  if (env_.private_dataset == nullptr) throw ConfigError("run_phase2: no private dataset");
  const std::string digest = phase_digest(PhaseId::p2);
  if (auto cached = load_cached(PhaseId::p2, digest)) {
    p2_ = *cached;
    return *cached;
  }
  const std::uint64_t before = env_.private_dataset->read_count();
  backend::TrainingConfig train_cfg = settings_.p2_train;
  train_cfg.seed = settings_.seed + 2;

  auto result = ::dptext::pipeline::run_phase2(p1_->model, *env_.private_dataset,
                                               settings_.privacy, train_cfg, env_);
  result.config_digest = digest;
  p2_ = result;
  reads_during_p2_ = env_.private_dataset->read_count() - before;
  persist(result, train_cfg);
  return result;
}

PhaseResult Runner::run_phase3() {
  if (!p1_ || !p2_) throw PhaseError("run_phase3: phases 1 and 2 must complete first");
  const std::string digest = phase_digest(PhaseId::p3);
  if (auto cached = load_cached(PhaseId::p3, digest)) {
    p3_ = *cached;
    return *cached;
  }
  const std::uint64_t before = env_.private_dataset ? env_.private_dataset->read_count() : 0;
  backend::SamplingConfig sampling = settings_.p3_sampling;
  sampling.seed = settings_.seed + 3;
  backend::TrainingConfig train_cfg = settings_.p3_train;
  train_cfg.seed = settings_.seed + 3;

  auto result = ::dptext::pipeline::run_phase3(p2_->model, p1_->contexts, sampling,
                                               settings_.thresholds, train_cfg, settings_.task,
                                               env_, settings_.thresholds.digest());
  result.config_digest = digest;
  p3_ = result;
  reads_during_p3_ = (env_.private_dataset ? env_.private_dataset->read_count() : 0) - before;
  persist(result, train_cfg);
  return result;
}

nlohmann::json Runner::run_all() {
  run_phase1();
  run_phase2();
  run_phase3();
  write_summary();
  std::ifstream in(run_dir_ / "run_summary.json");
  return nlohmann::json::parse(in);
}

void Runner::write_summary() {
  nlohmann::json j;
  j["run_id"] = run_id_;
  j["config_digest"] = settings_.digest();
  j["seed"] = settings_.seed;
  j["task"] = corpus::to_string(settings_.task);
  j["dataset"] = settings_.dataset_label;

  nlohmann::json phases = nlohmann::json::object();
  nlohmann::json efficiency_rows = nlohmann::json::array();
  for (const auto* result : {&p1_, &p2_, &p3_}) {
    if (!result->has_value()) continue;
    const PhaseResult& r = **result;
    nlohmann::json pj;
    pj["model_id"] = r.model.model_id;
    pj["params_digest"] = r.model.params_digest;
    pj["pairs_in"] = r.pairs_in;
    pj["pairs_retained"] = r.pairs_retained;
    if (r.report) {
      pj["filter_report"] = r.report->to_json();
      pj["sampling_efficiency"] = format_efficiency(r.report->retained_count,
                                                    r.report->input_count);
      efficiency_rows.push_back({{"dataset", settings_.dataset_label},
                                 {"phase", to_string(r.phase)},
                                 {"epsilon", settings_.privacy.epsilon},
                                 {"retained", r.report->retained_count},
                                 {"total", r.report->input_count},
                                 {"efficiency", format_efficiency(r.report->retained_count,
                                                                  r.report->input_count)}});
    }
    if (r.ledger) pj["ledger"] = *r.ledger;
    phases[to_string(r.phase)] = pj;
  }
  j["phases"] = phases;
  j["efficiency_rows"] = efficiency_rows;
  j["lineage"] = {p1_ ? p1_->model.model_id : "", p2_ ? p2_->model.model_id : "",
                  p3_ ? p3_->model.model_id : ""};
  j["private_reads"] = {{"p1", reads_during_p1_}, {"p2", reads_during_p2_},
                        {"p3", reads_during_p3_}};

  std::ofstream out(run_dir_ / "run_summary.json");
  out << j.dump(2) << '\n';
}

}  // namespace dptext::pipeline
