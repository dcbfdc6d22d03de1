#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asdsev/model.hpp"
#include "asdsev/nn.hpp"

namespace asdsev::tuning {

enum class StrategyKind { fine_tune, manual_prompt, p_tuning };

std::string to_string(StrategyKind k);
StrategyKind strategy_kind_from_string(const std::string& s);

struct TuningStrategy {
  StrategyKind kind = StrategyKind::fine_tune;
  int num_virtual_tokens = 0;       // p_tuning only
  int prompt_encoder_hidden = 128;  // p_tuning only
  bool localized_template = false;  // manual_prompt only, default English

  void validate() const;
  nlohmann::json to_json() const;
  static TuningStrategy from_json(const nlohmann::json& j);
};

struct TrainConfig {
  int epochs = 40;
  double base_lr = 1e-5;
  double head_lr = 1e-5;  // 1e-3 under p_tuning, see default_train_config
  int batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Paper-faithful defaults for a strategy: head_lr 1e-3 under p_tuning,
// everything else shared.
TrainConfig default_train_config(const TuningStrategy& strategy);

inline constexpr std::string_view kSeverityTemplate =
    " the social communication severity score of the speaker is [MASK]";
inline constexpr std::string_view kSeverityTemplateKo =
    " 화자의 사회적 의사소통 심각도 점수는 [MASK]";

// Appends the severity template. Rejects text that already carries a mask.
std::string apply_template(std::string_view text, bool localized = false);

// Template words that must be present in any vocabulary used with
// manual prompting.
std::vector<std::string> template_tokens();

// Virtual-token embeddings reparameterized through a two-layer network
// (model_dim -> hidden -> model_dim, tanh between).
class PromptEncoder {
 public:
  PromptEncoder(int num_virtual_tokens, int hidden, int model_dim,
                std::uint64_t seed);

  int virtual_tokens() const { return k_; }
  nn::Tape::Id forward(nn::Tape& tape);  // k x model_dim
  std::vector<nn::Parameter*> parameters();
  std::size_t parameter_count() const;

  nlohmann::json to_json() const;
  static PromptEncoder from_json(const nlohmann::json& j);

 private:
  PromptEncoder() = default;
  int k_ = 0, hidden_ = 0, model_dim_ = 0;
  nn::Parameter embeddings_, w1_, b1_, w2_, b2_;
};

PromptEncoder build_prompt_encoder(int num_virtual_tokens, int hidden,
                                   int model_dim, std::uint64_t seed);

// A strategy wired to an encoder (and prompt encoder for p_tuning):
// fine_tune   — CLS readout, no template, no virtual tokens
// manual      — template appended, mask-position readout
// p_tuning    — virtual prefix, CLS readout
struct Assembly {
  model::TinyEncoder* encoder = nullptr;
  PromptEncoder* prompt = nullptr;
  TuningStrategy strategy;
  model::Tokenizer tokenizer;

  // Scalar prediction node for one normalized text.
  nn::Tape::Id predict_node(nn::Tape& tape, std::string_view text) const;
  model::TokenizedInput tokenize_for_strategy(std::string_view text) const;
};

Assembly assemble(const TuningStrategy& strategy, model::TinyEncoder& encoder,
                  PromptEncoder* prompt);

// The optimizer groups the training loop uses: base encoder (plus prompt
// encoder under p_tuning) at base_lr, regression head at head_lr.
std::vector<nn::ParamGroup> parameter_groups(Assembly& assembly,
                                             const TrainConfig& config);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
};

using LabeledText = std::pair<std::string, double>;

struct TrainedModel {
  model::TinyEncoder encoder;
  std::optional<PromptEncoder> prompt;
  TuningStrategy strategy;
  TrainConfig config;
  std::vector<EpochStats> history;
  int selected_epoch = 0;  // 1-based, minimum validation MSE, earliest tie
  long optimizer_steps = 0;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
};

using EventSink = std::function<void(const EpochStats&)>;

// Fresh-initialized encoder (and prompt encoder under p_tuning) trained
// with AdamW on MSE; deterministic for a fixed config.seed. Throws
// TrainingError on a non-finite loss.
TrainedModel run_training(const model::EncoderConfig& encoder_config,
                          const TuningStrategy& strategy,
                          const TrainConfig& config,
                          std::span<const LabeledText> train_data,
                          std::span<const LabeledText> validation_data,
                          const EventSink& events = {});

// Training loop over an existing assembly (used by run_training and the
// gradient/audit tests).
TrainedModel train(Assembly& assembly, std::span<const LabeledText> train_data,
                   std::span<const LabeledText> validation_data,
                   const TrainConfig& config, const EventSink& events = {});

// One score per text, order-preserving and pure.
std::vector<double> predict(TrainedModel& model,
                            std::span<const std::string> texts);

double mse(std::span<const double> pred, std::span<const double> gold);

}  // namespace asdsev::tuning
