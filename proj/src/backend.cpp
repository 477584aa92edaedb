#include "dptext/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace dptext::backend {

using corpus::TextPair;

std::string to_string(Capability c) {
  switch (c) {
    case Capability::generate: return "generate";
    case Capability::finetune: return "finetune";
    case Capability::per_sample_grads: return "per_sample_grads";
  }
  return "generate";
}

void SamplingConfig::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("sampling.top_p must be in (0,1]");
  if (temperature < 0.0) throw ConfigError("sampling.temperature must be >= 0");
  if (max_tokens < 1) throw ConfigError("sampling.max_tokens must be >= 1");
  if (num_completions < 1) throw ConfigError("sampling.num_completions must be >= 1");
}

nlohmann::json SamplingConfig::to_json() const {
  nlohmann::json j;
  j["top_p"] = top_p;
  j["temperature"] = temperature;
  j["max_tokens"] = max_tokens;
  j["num_completions"] = num_completions;
  j["seed"] = seed;
  return j;
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("training.learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (train_batch < 1) throw ConfigError("training.train_batch must be >= 1");
  if (eval_batch < 1) throw ConfigError("training.eval_batch must be >= 1");
  decode.validate();
}

nlohmann::json TrainingConfig::to_json() const {
  nlohmann::json j;
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["train_batch"] = train_batch;
  j["eval_batch"] = eval_batch;
  j["decode"] = decode.to_json();
  j["seed"] = seed;
  return j;
}

void Backend::missing_capability(const ModelHandle& handle, Capability c) const {
  throw CapabilityError("model " + handle.model_id + " lacks capability " + to_string(c));
}

ModelHandle Backend::finetune(const ModelHandle& handle, std::span<const TextPair>,
                              const TrainingConfig&, FinetuneReport*) {
  missing_capability(handle, Capability::finetune);
}

dp::GradientBatch Backend::per_sample_gradients(const ModelHandle& handle,
                                                std::span<const TextPair>) {
  missing_capability(handle, Capability::per_sample_grads);
}

// ---------------------------------------------------------------------------
// StubBackend

StubBackend::StubBackend() {
  families_ = {
      {"The mayor announced a new climate initiative.",
       {"The initiative focuses on creating new parks, reducing emissions, and implementing "
        "stricter environmental regulations to combat climate change.",
        "The plan includes new parks and emission controls.",
        "New parks and stricter emission laws are planned.",
        "The city plans parks, emission limits, and tougher environmental rules.",
        "Officials outlined parks and stricter emission rules for the city."}},
      {"City officials unveiled a major overhaul of the downtown transit network.",
       {"The overhaul adds new bus lanes, extends the tram line, and upgrades twelve stations "
        "across the downtown core.",
        "The project adds bus lanes and upgrades twelve stations.",
        "New bus lanes and station upgrades are planned downtown.",
        "Twelve stations will be upgraded and new bus lanes added downtown.",
        "The transit plan extends the tram line and adds bus lanes."}},
      {"Health officials reported 19 cases of measles in the region last year.",
       {"According to the regional health agency, there were 19 reported cases of measles across "
        "the region during the last year.",
        "The agency recorded 19 measles cases in the region last year.",
        "Officials counted 19 measles cases across the region.",
        "The region saw 20 measles cases last year, officials said.",
        "Measles cases in the region reached 19 last year."}},
      {"More than 100 people have been killed in floods in the state of Gujarat.",
       {"Floods across Gujarat have killed more than 100 people, officials confirmed on Monday.",
        "More than 100 people have died in the Gujarat floods.",
        "The Gujarat floods have killed over 100 people",
        "Officials said the floods in Gujarat killed more than 100 people.",
        "Flooding in Gujarat has left more than 100 people dead."}},
      {"Researchers reported a breakthrough in long duration battery storage.",
       {"The team described a storage cell that retains charge for weeks, a result that could "
        "reshape grid planning.",
        "The new cell holds charge for weeks and could reshape grid planning.",
        "A cell that keeps charge for weeks could change grid planning.",
        "Grid planning could change thanks to a cell that holds charge for weeks.",
        "The storage cell retains its charge for weeks, the team said."}},
      {"The council approved funding for new coastal flood defences.",
       {"Funding approved by the council will pay for sea walls, drainage upgrades, and a warning "
        "system along the coast.",
        "The council money will pay for sea walls and drainage upgrades.",
        "Sea walls and drainage upgrades will be funded along the coast.",
        "The coastal plan funds sea walls, drainage work, and warnings.",
        "Council funding covers sea walls and a coastal warning system."}},
  };
}

ModelHandle StubBackend::handle() const {
  ModelHandle h;
  h.model_id = "stub-lm";
  h.capabilities = {Capability::generate};
  h.params_digest = fnv1a64_hex("stub-lm-v1");
  return h;
}

std::size_t StubBackend::family_count() const { return families_.size(); }

std::size_t StubBackend::variant_count(std::size_t family) const {
  return families_.at(family).variants.size();
}

std::string StubBackend::generate(const ModelHandle& handle, const std::string& prompt,
                                  const SamplingConfig& cfg) {
  if (!handle.has(Capability::generate)) missing_capability(handle, Capability::generate);
  cfg.validate();
  if (prompt.empty()) throw ConfigError("stub backend: empty prompt");

  std::string out;
  // Completion mode when the prompt is a known context; otherwise context mode.
  const Family* family = nullptr;
  for (const auto& f : families_) {
    if (f.context == prompt) {
      family = &f;
      break;
    }
  }
  if (family) {
    out = family->variants[cfg.seed % family->variants.size()];
  } else {
    out = families_[cfg.seed % families_.size()].context;
  }
  if (corpus::token_count(out) > cfg.max_tokens) {
    out = corpus::truncate_to_tokens(out, cfg.max_tokens);
  }
  return out;
}

ModelHandle ScriptedBackend::handle() const {
  ModelHandle h;
  h.model_id = "scripted";
  h.capabilities = {Capability::generate};
  h.params_digest = fnv1a64_hex("scripted");
  return h;
}

std::string ScriptedBackend::generate(const ModelHandle&, const std::string&,
                                      const SamplingConfig& cfg) {
  cfg.validate();
  if (next_ >= outputs_.size()) throw TransportError("scripted backend exhausted");
  return outputs_[next_++];
}

// ---------------------------------------------------------------------------
// DeskBackend

namespace {

std::vector<double> softmax_row(std::span<const double> logits) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double l : logits) max_logit = std::max(max_logit, l);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - max_logit);
    sum += p[k];
  }
  for (double& x : p) x /= sum;
  return p;
}

void fisher_yates(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
}

}  // namespace

ModelHandle DeskBackend::create_model(const std::string& model_id,
                                      std::span<const std::string> vocab_texts,
                                      const ModelOptions& opts) {
  if (opts.vocab_cap < 4) throw ConfigError("desk model: vocab_cap must be >= 4");
  std::map<std::string, std::size_t> freq;
  for (const auto& text : vocab_texts) {
    for (const auto& tok : corpus::tokenize(text)) freq[tok]++;
  }
  std::vector<std::pair<std::string, std::size_t>> by_freq(freq.begin(), freq.end());
  std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  DeskModel m;
  m.vocab = {kBosToken, kEosToken, kUnkToken};
  for (const auto& [tok, count] : by_freq) {
    if (m.vocab.size() >= opts.vocab_cap) break;
    m.vocab.push_back(tok);
  }
  for (std::size_t i = 0; i < m.vocab.size(); ++i) m.vocab_index[m.vocab[i]] = i;
  m.weights.assign(m.v() * m.v(), 0.0);
  return register_model(model_id, std::move(m));
}

ModelHandle DeskBackend::clone_model(const ModelHandle& source, const std::string& new_id) {
  return register_model(new_id, model_of(source));
}

ModelHandle DeskBackend::register_model(const std::string& id, DeskModel m) {
  ModelHandle h;
  h.model_id = id;
  h.capabilities = {Capability::generate, Capability::finetune, Capability::per_sample_grads};
  h.params_digest = digest_of(m);
  models_[id] = std::move(m);
  return h;
}

DeskBackend::DeskModel& DeskBackend::model_of(const ModelHandle& handle) {
  auto it = models_.find(handle.model_id);
  if (it == models_.end()) throw ConfigError("unknown desk model: " + handle.model_id);
  return it->second;
}

const DeskBackend::DeskModel& DeskBackend::model_of(const ModelHandle& handle) const {
  auto it = models_.find(handle.model_id);
  if (it == models_.end()) throw ConfigError("unknown desk model: " + handle.model_id);
  return it->second;
}

std::string DeskBackend::digest_of(const DeskModel& m) {
  std::string blob;
  for (const auto& tok : m.vocab) {
    blob += tok;
    blob.push_back('\0');
  }
  blob.resize(blob.size() + m.weights.size() * sizeof(double));
  std::memcpy(blob.data() + blob.size() - m.weights.size() * sizeof(double), m.weights.data(),
              m.weights.size() * sizeof(double));
  return fnv1a64_hex(blob);
}

std::size_t DeskBackend::encode_token(const DeskModel& m, const std::string& token) const {
  auto it = m.vocab_index.find(token);
  return it == m.vocab_index.end() ? 2 /* <unk> */ : it->second;
}

std::vector<std::pair<std::size_t, std::size_t>> DeskBackend::transitions(
    const DeskModel& m, const TextPair& pair) const {
  const auto x_toks = corpus::tokenize(pair.x);
  const auto y_toks = corpus::tokenize(pair.y);
  std::size_t prev = x_toks.empty() ? 0 /* <bos> */ : encode_token(m, x_toks.back());
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& tok : y_toks) {
    const std::size_t target = encode_token(m, tok);
    out.emplace_back(prev, target);
    prev = target;
  }
  out.emplace_back(prev, 1 /* <eos> */);
  return out;
}

double DeskBackend::pair_loss(const ModelHandle& handle, const TextPair& pair) const {
  const DeskModel& m = model_of(handle);
  const auto trans = transitions(m, pair);
  const std::size_t v = m.v();
  double nll = 0.0;
  for (const auto& [prev, target] : trans) {
    const auto p = softmax_row({m.weights.data() + prev * v, v});
    nll -= std::log(std::max(p[target], 1e-300));
  }
  return nll / static_cast<double>(trans.size());
}

double DeskBackend::mean_loss(const ModelHandle& handle,
                              std::span<const TextPair> pairs) const {
  double sum = 0.0;
  for (const auto& p : pairs) sum += pair_loss(handle, p);
  return pairs.empty() ? 0.0 : sum / static_cast<double>(pairs.size());
}

std::vector<double> DeskBackend::pair_gradient(const DeskModel& m, const TextPair& pair) const {
  const std::size_t v = m.v();
  std::vector<double> grad(v * v, 0.0);
  const auto trans = transitions(m, pair);
  const double inv_t = 1.0 / static_cast<double>(trans.size());
  for (const auto& [prev, target] : trans) {
    const auto p = softmax_row({m.weights.data() + prev * v, v});
    for (std::size_t k = 0; k < v; ++k) {
      grad[prev * v + k] += (p[k] - (k == target ? 1.0 : 0.0)) * inv_t;
    }
  }
  return grad;
}

dp::GradientBatch DeskBackend::per_sample_gradients(const ModelHandle& handle,
                                                    std::span<const TextPair> batch) {
  if (!handle.has(Capability::per_sample_grads)) {
    missing_capability(handle, Capability::per_sample_grads);
  }
  const DeskModel& m = model_of(handle);
  dp::GradientBatch out;
  out.per_sample.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.per_sample[i] = pair_gradient(m, batch[i]);
  }
  return out;
}

ModelHandle DeskBackend::finetune(const ModelHandle& handle, std::span<const TextPair> pairs,
                                  const TrainingConfig& cfg, FinetuneReport* report) {
  if (!handle.has(Capability::finetune)) missing_capability(handle, Capability::finetune);
  cfg.validate();
  if (pairs.empty()) throw ConfigError("finetune: empty pair list");

  DeskModel m = model_of(handle);  // copy; the source model stays untouched
  const std::size_t v = m.v();
  FinetuneReport local;

  {
    // initial loss on a copy-registered temp is overkill; compute directly
    double sum = 0.0;
    ModelHandle tmp = handle;
    for (const auto& p : pairs) sum += pair_loss(tmp, p);
    local.initial_loss = sum / static_cast<double>(pairs.size());
  }

  Rng shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    fisher_yates(order, shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.train_batch) {
      const std::size_t end = std::min(order.size(), start + cfg.train_batch);
      std::vector<double> grad(v * v, 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto g = pair_gradient(m, pairs[order[k]]);
        for (std::size_t d = 0; d < g.size(); ++d) grad[d] += g[d];
      }
      const double scale = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t d = 0; d < grad.size(); ++d) m.weights[d] -= scale * grad[d];
    }
    // epoch loss
    double sum = 0.0;
    for (const auto& p : pairs) {
      const auto trans = transitions(m, p);
      double nll = 0.0;
      for (const auto& [prev, target] : trans) {
        const auto prob = softmax_row({m.weights.data() + prev * v, v});
        nll -= std::log(std::max(prob[target], 1e-300));
      }
      sum += nll / static_cast<double>(trans.size());
    }
    const double epoch_loss = sum / static_cast<double>(pairs.size());
    if (!std::isfinite(epoch_loss)) {
      throw PhaseError("finetune diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                       " (lr=" + std::to_string(cfg.learning_rate) + ")");
    }
    local.epoch_losses.push_back(epoch_loss);
  }

  if (report) *report = local;
  const std::string new_id =
      handle.model_id + "-ft-" +
      fnv1a64_hex(handle.params_digest + std::to_string(cfg.seed) + std::to_string(pairs.size()))
          .substr(0, 8);
  return register_model(new_id, std::move(m));
}

std::string DeskBackend::generate(const ModelHandle& handle, const std::string& prompt,
                                  const SamplingConfig& cfg) {
  if (!handle.has(Capability::generate)) missing_capability(handle, Capability::generate);
  cfg.validate();
  const DeskModel& m = model_of(handle);
  const std::size_t v = m.v();

  const auto prompt_toks = corpus::tokenize(prompt);
  std::size_t prev = prompt_toks.empty() ? 0 /* <bos> */ : encode_token(m, prompt_toks.back());

  Rng rng(cfg.seed);
  std::vector<std::string> out_tokens;
  for (std::size_t step = 0; step < cfg.max_tokens; ++step) {
    std::vector<double> logits(m.weights.begin() + prev * v, m.weights.begin() + (prev + 1) * v);
    std::size_t next;
    if (cfg.temperature <= 1e-9) {
      next = 1;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < v; ++k) {
        if (k == 0 || k == 2) continue;  // never emit <bos>/<unk>
        if (logits[k] > best) {
          best = logits[k];
          next = k;
        }
      }
    } else {
      for (double& l : logits) l /= cfg.temperature;
      auto p = softmax_row(logits);
      p[0] = 0.0;  // <bos>
      p[2] = 0.0;  // <unk>
      double total = 0.0;
      for (double x : p) total += x;
      for (double& x : p) x /= total;
      // nucleus: smallest probability-sorted prefix reaching top_p
      std::vector<std::size_t> by_p(v);
      std::iota(by_p.begin(), by_p.end(), 0);
      std::sort(by_p.begin(), by_p.end(), [&](std::size_t a, std::size_t b) {
        if (p[a] != p[b]) return p[a] > p[b];
        return a < b;
      });
      double cum = 0.0;
      std::size_t cut = 0;
      for (; cut < v; ++cut) {
        cum += p[by_p[cut]];
        if (cum >= cfg.top_p) {
          ++cut;
          break;
        }
      }
      const double u = rng.uniform() * cum;
      double acc = 0.0;
      next = by_p[0];
      for (std::size_t k = 0; k < cut; ++k) {
        acc += p[by_p[k]];
        if (u <= acc) {
          next = by_p[k];
          break;
        }
      }
    }
    if (next == 1 /* <eos> */) break;
    out_tokens.push_back(m.vocab[next]);
    prev = next;
  }
  return corpus::join_tokens(out_tokens);
}

std::size_t DeskBackend::param_count(const ModelHandle& handle) const {
  return model_of(handle).weights.size();
}

std::size_t DeskBackend::vocab_size(const ModelHandle& handle) const {
  return model_of(handle).v();
}

void DeskBackend::apply_update(ModelHandle& handle, std::span<const double> update) {
  DeskModel& m = model_of(handle);
  if (update.size() != m.weights.size()) {
    throw ConfigError("apply_update: dimension mismatch");
  }
  for (std::size_t d = 0; d < update.size(); ++d) m.weights[d] += update[d];
  handle.params_digest = digest_of(m);
}

double DeskBackend::get_param(const ModelHandle& handle, std::size_t index) const {
  return model_of(handle).weights.at(index);
}

void DeskBackend::nudge_param(const ModelHandle& handle, std::size_t index, double delta) {
  auto& m = const_cast<DeskModel&>(model_of(handle));
  m.weights.at(index) += delta;
}

void DeskBackend::save_checkpoint(const ModelHandle& handle, const std::filesystem::path& dir,
                                  const TrainingConfig& cfg,
                                  const std::vector<std::string>& lineage) const {
  const DeskModel& m = model_of(handle);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "params.bin", std::ios::binary);
    const std::uint64_t v = m.v();
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    for (const auto& tok : m.vocab) {
      const std::uint64_t len = tok.size();
      out.write(reinterpret_cast<const char*>(&len), sizeof(len));
      out.write(tok.data(), static_cast<std::streamsize>(len));
    }
    out.write(reinterpret_cast<const char*>(m.weights.data()),
              static_cast<std::streamsize>(m.weights.size() * sizeof(double)));
    if (!out) throw ConfigError("checkpoint write failed: " + dir.string());
  }
  {
    std::ofstream out(dir / "params_digest");
    out << handle.params_digest << '\n';
  }
  {
    std::ofstream out(dir / "training_config.json");
    out << cfg.to_json().dump(2) << '\n';
  }
  {
    nlohmann::json j;
    j["model_id"] = handle.model_id;
    j["lineage"] = lineage;
    std::ofstream out(dir / "lineage.json");
    out << j.dump(2) << '\n';
  }
}

ModelHandle DeskBackend::load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + (dir / "params.bin").string());
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  DeskModel m;
  for (std::uint64_t i = 0; i < v; ++i) {
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string tok(len, '\0');
    in.read(tok.data(), static_cast<std::streamsize>(len));
    m.vocab.push_back(std::move(tok));
  }
  for (std::size_t i = 0; i < m.vocab.size(); ++i) m.vocab_index[m.vocab[i]] = i;
  m.weights.resize(m.v() * m.v());
  in.read(reinterpret_cast<char*>(m.weights.data()),
          static_cast<std::streamsize>(m.weights.size() * sizeof(double)));
  if (!in) throw ConfigError("truncated checkpoint: " + (dir / "params.bin").string());

  std::string model_id = "restored";
  std::ifstream lineage_in(dir / "lineage.json");
  if (lineage_in) {
    nlohmann::json j = nlohmann::json::parse(lineage_in, nullptr, false);
    if (!j.is_discarded() && j.contains("model_id")) model_id = j["model_id"].get<std::string>();
  }
  return register_model(model_id, std::move(m));
}

}  // namespace dptext::backend
