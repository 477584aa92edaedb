#include "dptext/config.hpp"

#include <fstream>

#include "dptext/synthesis.hpp"

namespace dptext::cfg {

namespace {

backend::SamplingConfig sampling_from_json(const nlohmann::json& j,
                                           const backend::SamplingConfig& defaults) {
  backend::SamplingConfig s = defaults;
  s.top_p = j.value("top_p", s.top_p);
  s.temperature = j.value("temperature", s.temperature);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  s.num_completions = j.value("num_completions", s.num_completions);
  return s;
}

backend::TrainingConfig training_from_json(const nlohmann::json& j,
                                           const backend::TrainingConfig& defaults) {
  backend::TrainingConfig t = defaults;
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.epochs = j.value("epochs", t.epochs);
  t.train_batch = j.value("train_batch", t.train_batch);
  t.eval_batch = j.value("eval_batch", t.eval_batch);
  if (j.contains("decode")) t.decode = sampling_from_json(j["decode"], t.decode);
  return t;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["task"] = corpus::to_string(task);
  j["dataset"] = {{"path", dataset_path.string()},
                  {"format", dataset_format == corpus::DatasetFormat::jsonl ? "jsonl" : "csv"},
                  {"label", dataset_label}};
  j["prefixes"] = prefixes_path.string();
  nlohmann::json synth_json = synth.to_json();
  synth_json["n_per_prefix"] = n_per_prefix;
  j["synthesis"] = synth_json;
  j["p3_synthesis"] = p3_sampling.to_json();
  j["filters"] = filters.to_json();
  j["privacy"] = {{"epsilon", privacy.epsilon},
                  {"delta", privacy.delta},
                  {"clip_norm", privacy.clip_norm},
                  {"batch_size", privacy.batch_size},
                  {"epochs", privacy.epochs}};
  j["training"] = {{"p1", p1_train.to_json()}, {"p2", p2_train.to_json()},
                   {"p3", p3_train.to_json()}};
  j["metrics"] = metrics_cfg.to_json();
  j["judge"] = {{"endpoint", judge_cfg.endpoint},
                {"model_id", judge_cfg.model_id},
                {"auth_env", judge_cfg.auth_env},
                {"max_retries", judge_cfg.max_retries},
                {"timeout_seconds", judge_cfg.timeout_seconds}};
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  j["desk_vocab_cap"] = desk_vocab_cap;
  return j;
}

std::string RunConfig::digest() const { return fnv1a64_hex(to_json().dump()); }

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.schema_version = j.value("schema_version", 1);
  if (j.contains("task")) cfg.task = corpus::task_from_string(j["task"].get<std::string>());
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    cfg.dataset_path = d.value("path", "");
    const std::string fmt = d.value("format", "jsonl");
    if (fmt != "jsonl" && fmt != "csv") {
      throw ConfigError("dataset.format: must be jsonl or csv");
    }
    cfg.dataset_format =
        fmt == "jsonl" ? corpus::DatasetFormat::jsonl : corpus::DatasetFormat::csv;
    cfg.dataset_label = d.value("label", cfg.dataset_label);
  }
  cfg.prefixes_path = j.value("prefixes", "");
  if (j.contains("synthesis")) {
    cfg.synth = sampling_from_json(j["synthesis"], cfg.synth);
    cfg.n_per_prefix = j["synthesis"].value("n_per_prefix", cfg.n_per_prefix);
  }
  cfg.p3_sampling = j.contains("p3_synthesis") ? sampling_from_json(j["p3_synthesis"], cfg.synth)
                                               : cfg.synth;
  if (j.contains("filters")) cfg.filters = filters::FilterThresholds::from_json(j["filters"]);
  if (j.contains("privacy")) {
    const auto& p = j["privacy"];
    cfg.privacy.epsilon = p.value("epsilon", cfg.privacy.epsilon);
    cfg.privacy.delta = p.value("delta", cfg.privacy.delta);
    cfg.privacy.clip_norm = p.value("clip_norm", cfg.privacy.clip_norm);
    cfg.privacy.batch_size = p.value("batch_size", cfg.privacy.batch_size);
    cfg.privacy.epochs = p.value("epochs", cfg.privacy.epochs);
  }
  // Defaults per the standard recipe: phase-1/3 train batch 8, eval batch 16,
  // one epoch; DP phase four epochs of batch 4 (held in privacy).
  cfg.p1_train.train_batch = 8;
  cfg.p1_train.eval_batch = 16;
  cfg.p1_train.epochs = 1;
  cfg.p2_train = cfg.p1_train;
  cfg.p3_train = cfg.p1_train;
  if (j.contains("training")) {
    const auto& t = j["training"];
    if (t.contains("p1")) cfg.p1_train = training_from_json(t["p1"], cfg.p1_train);
    if (t.contains("p2")) cfg.p2_train = training_from_json(t["p2"], cfg.p2_train);
    if (t.contains("p3")) cfg.p3_train = training_from_json(t["p3"], cfg.p3_train);
  }
  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    cfg.metrics_cfg.ibleu_alpha = m.value("ibleu_alpha", cfg.metrics_cfg.ibleu_alpha);
    cfg.metrics_cfg.bert_ibleu_beta = m.value("bert_ibleu_beta", cfg.metrics_cfg.bert_ibleu_beta);
    cfg.metrics_cfg.bleu_max_n = m.value("bleu_max_n", cfg.metrics_cfg.bleu_max_n);
    cfg.metrics_cfg.msttr_segment_size =
        m.value("msttr_segment_size", cfg.metrics_cfg.msttr_segment_size);
  }
  if (j.contains("judge")) {
    const auto& g = j["judge"];
    cfg.judge_cfg.endpoint = g.value("endpoint", "");
    cfg.judge_cfg.model_id = g.value("model_id", "");
    cfg.judge_cfg.auth_env = g.value("auth_env", cfg.judge_cfg.auth_env);
    cfg.judge_cfg.max_retries = g.value("max_retries", cfg.judge_cfg.max_retries);
    cfg.judge_cfg.timeout_seconds = g.value("timeout_seconds", cfg.judge_cfg.timeout_seconds);
  }
  cfg.output_dir = j.value("output_dir", "runs");
  cfg.seed = j.value("seed", 0);
  cfg.desk_vocab_cap = j.value("desk_vocab_cap", cfg.desk_vocab_cap);
  return cfg;
}

void validate_config(const RunConfig& cfg, std::vector<std::string>& errors) {
  if (cfg.schema_version != 1) errors.push_back("schema_version: unsupported version");
  if (cfg.dataset_path.empty()) errors.push_back("dataset.path: required");
  if (cfg.prefixes_path.empty()) errors.push_back("prefixes: required");
  if (!(cfg.privacy.epsilon > 0.0)) errors.push_back("privacy.epsilon: must be > 0");
  if (cfg.privacy.delta < 0.0 || cfg.privacy.delta >= 1.0) {
    errors.push_back("privacy.delta: must be in [0,1) (0 selects 1/(2N))");
  }
  if (!(cfg.privacy.clip_norm > 0.0)) errors.push_back("privacy.clip_norm: must be > 0");
  if (cfg.privacy.batch_size == 0) errors.push_back("privacy.batch_size: must be >= 1");
  if (cfg.privacy.epochs == 0) errors.push_back("privacy.epochs: must be >= 1");
  auto check_sampling = [&](const backend::SamplingConfig& s, const std::string& path) {
    if (!(s.top_p > 0.0 && s.top_p <= 1.0)) errors.push_back(path + ".top_p: must be in (0,1]");
    if (s.temperature < 0.0) errors.push_back(path + ".temperature: must be >= 0");
    if (s.max_tokens < 1) errors.push_back(path + ".max_tokens: must be >= 1");
    if (s.num_completions < 2) errors.push_back(path + ".num_completions: must be >= 2");
  };
  check_sampling(cfg.synth, "synthesis");
  check_sampling(cfg.p3_sampling, "p3_synthesis");
  auto check_training = [&](const backend::TrainingConfig& t, const std::string& path) {
    if (!(t.learning_rate > 0.0)) errors.push_back(path + ".learning_rate: must be > 0");
    if (t.epochs == 0) errors.push_back(path + ".epochs: must be >= 1");
    if (t.train_batch == 0) errors.push_back(path + ".train_batch: must be >= 1");
    if (t.eval_batch == 0) errors.push_back(path + ".eval_batch: must be >= 1");
  };
  check_training(cfg.p1_train, "training.p1");
  check_training(cfg.p2_train, "training.p2");
  check_training(cfg.p3_train, "training.p3");
  if (!(cfg.metrics_cfg.ibleu_alpha >= 0.0 && cfg.metrics_cfg.ibleu_alpha <= 1.0)) {
    errors.push_back("metrics.ibleu_alpha: must be in [0,1]");
  }
  if (!(cfg.metrics_cfg.bert_ibleu_beta > 0.0)) {
    errors.push_back("metrics.bert_ibleu_beta: must be > 0");
  }
  if (cfg.desk_vocab_cap < 4) errors.push_back("desk_vocab_cap: must be >= 4");
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  RunConfig cfg = config_from_json(j);
  std::vector<std::string> errors;
  validate_config(cfg, errors);
  if (!errors.empty()) {
    std::string msg = "config validation failed:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

pipeline::RunSettings to_run_settings(const RunConfig& cfg) {
  pipeline::RunSettings s;
  s.task = cfg.task;
  s.dataset_label = cfg.dataset_label;
  s.p1_synth.prefixes = synthesis::load_prefixes(cfg.prefixes_path);
  s.p1_synth.n_per_prefix = cfg.n_per_prefix;
  s.p1_synth.sampling = cfg.synth;
  s.p3_sampling = cfg.p3_sampling;
  s.thresholds = cfg.filters;
  s.privacy = cfg.privacy;
  s.p1_train = cfg.p1_train;
  s.p2_train = cfg.p2_train;
  s.p3_train = cfg.p3_train;
  s.seed = cfg.seed;
  s.desk_vocab_cap = cfg.desk_vocab_cap;
  if (s.p1_synth.prefixes.empty()) {
    throw ConfigError("prefixes: file yielded no prefixes: " + cfg.prefixes_path.string());
  }
  return s;
}

}  // namespace dptext::cfg
