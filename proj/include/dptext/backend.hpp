#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dptext/common.hpp"
#include "dptext/corpus.hpp"
#include "dptext/dp_optimizer.hpp"

namespace dptext::backend {

enum class Capability { generate, finetune, per_sample_grads };

std::string to_string(Capability c);

// Opaque reference to a generation/trainable model. Handles are values; the
// owning Backend maps model_id to state. finetune and clone return new handles
// and never mutate the source model.
struct ModelHandle {
  std::string model_id;
  std::set<Capability> capabilities;
  std::string params_digest;

  bool has(Capability c) const { return capabilities.count(c) > 0; }
};

// Decoding parameters. temperature <= 1e-9 means greedy decoding.
struct SamplingConfig {
  double top_p = 0.9;
  double temperature = 0.1;
  std::size_t max_tokens = 150;
  std::size_t num_completions = 3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainingConfig {
  double learning_rate = 5e-5;
  std::size_t epochs = 1;
  std::size_t train_batch = 8;
  std::size_t eval_batch = 16;
  SamplingConfig decode;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct FinetuneReport {
  std::vector<double> epoch_losses;  // mean loss after each epoch
  double initial_loss = 0.0;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string backend_id() const = 0;
  virtual bool concurrent_generate_safe() const { return false; }
  // Declared handling of an empty prompt: true -> treated as a begin-of-text
  // sentinel, false -> ConfigError.
  virtual bool accepts_empty_prompt() const { return false; }

  virtual std::string generate(const ModelHandle& handle, const std::string& prompt,
                               const SamplingConfig& cfg) = 0;

  virtual ModelHandle finetune(const ModelHandle& handle, std::span<const corpus::TextPair> pairs,
                               const TrainingConfig& cfg, FinetuneReport* report = nullptr);

  virtual dp::GradientBatch per_sample_gradients(const ModelHandle& handle,
                                                 std::span<const corpus::TextPair> batch);

 protected:
  [[noreturn]] void missing_capability(const ModelHandle& handle, Capability c) const;
};

// Deterministic template-grammar generator standing in for a small pre-trained
// LM. Context templates are organized in families; the per-call seed selects
// the family (context mode) or the variant within the prompt's family
// (completion mode). Output is a pure function of (seed, prompt, cfg).
class StubBackend final : public Backend {
 public:
  StubBackend();

  std::string backend_id() const override { return "stub"; }
  bool concurrent_generate_safe() const override { return true; }

  ModelHandle handle() const;
  std::string generate(const ModelHandle& handle, const std::string& prompt,
                       const SamplingConfig& cfg) override;

  std::size_t family_count() const;
  std::size_t variant_count(std::size_t family) const;

 private:
  struct Family {
    std::string context;
    std::vector<std::string> variants;
  };
  std::vector<Family> families_;
};

// Scripted generator for tests: returns canned outputs in construction order,
// then throws. Lets fixtures inject empty completions and backend failures.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<std::string> outputs)
      : outputs_(std::move(outputs)) {}

  std::string backend_id() const override { return "scripted"; }
  ModelHandle handle() const;
  std::string generate(const ModelHandle& handle, const std::string& prompt,
                       const SamplingConfig& cfg) override;

 private:
  std::vector<std::string> outputs_;
  std::size_t next_ = 0;
};

// Desk-scale trainable model: a bigram-feature softmax next-token model over a
// closed vocabulary. Small enough to train on a laptop, real enough to exercise
// gradients, clipping, and noising end to end.
class DeskBackend final : public Backend {
 public:
  struct ModelOptions {
    std::size_t vocab_cap = 64;  // includes the 3 special tokens
  };

  DeskBackend() = default;

  std::string backend_id() const override { return "desk"; }
  bool concurrent_generate_safe() const override { return true; }
  bool accepts_empty_prompt() const override { return true; }  // begin-of-text sentinel

  // Builds the closed vocabulary from the given texts (most frequent first).
  ModelHandle create_model(const std::string& model_id, std::span<const std::string> vocab_texts,
                           const ModelOptions& opts);
  ModelHandle create_model(const std::string& model_id, std::span<const std::string> vocab_texts) {
    return create_model(model_id, vocab_texts, ModelOptions());
  }

  ModelHandle clone_model(const ModelHandle& source, const std::string& new_id);

  std::string generate(const ModelHandle& handle, const std::string& prompt,
                       const SamplingConfig& cfg) override;
  ModelHandle finetune(const ModelHandle& handle, std::span<const corpus::TextPair> pairs,
                       const TrainingConfig& cfg, FinetuneReport* report = nullptr) override;
  dp::GradientBatch per_sample_gradients(const ModelHandle& handle,
                                         std::span<const corpus::TextPair> batch) override;

  std::size_t param_count(const ModelHandle& handle) const;
  std::size_t vocab_size(const ModelHandle& handle) const;
  double mean_loss(const ModelHandle& handle, std::span<const corpus::TextPair> pairs) const;
  double pair_loss(const ModelHandle& handle, const corpus::TextPair& pair) const;

  // In-place parameter update used by the DP training loop; refreshes the
  // handle's digest. Unlike finetune this deliberately mutates the model.
  void apply_update(ModelHandle& handle, std::span<const double> update);

  // Checkpoint directory: params.bin, params_digest, training_config.json,
  // lineage.json.
  void save_checkpoint(const ModelHandle& handle, const std::filesystem::path& dir,
                       const TrainingConfig& cfg, const std::vector<std::string>& lineage) const;
  ModelHandle load_checkpoint(const std::filesystem::path& dir);

  // Raw parameter access for gradient checks in tests.
  double get_param(const ModelHandle& handle, std::size_t index) const;
  void nudge_param(const ModelHandle& handle, std::size_t index, double delta);

 private:
  struct DeskModel {
    std::vector<std::string> vocab;
    std::map<std::string, std::size_t> vocab_index;
    std::vector<double> weights;  // row-major [prev * V + next]

    std::size_t v() const { return vocab.size(); }
  };

  DeskModel& model_of(const ModelHandle& handle);
  const DeskModel& model_of(const ModelHandle& handle) const;
  static std::string digest_of(const DeskModel& m);
  ModelHandle register_model(const std::string& id, DeskModel m);

  std::size_t encode_token(const DeskModel& m, const std::string& token) const;
  // Transition list for a pair: (prev, target) index pairs.
  std::vector<std::pair<std::size_t, std::size_t>> transitions(const DeskModel& m,
                                                               const corpus::TextPair& pair) const;
  std::vector<double> pair_gradient(const DeskModel& m, const corpus::TextPair& pair) const;

  std::map<std::string, DeskModel> models_;
};

inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

}  // namespace dptext::backend
