#include "asdsev/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "asdsev/errors.hpp"
#include "asdsev/metrics.hpp"
#include "asdsev/rng.hpp"

namespace asdsev::tuning {

std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::fine_tune: return "fine_tune";
    case StrategyKind::manual_prompt: return "manual_prompt";
    default: return "p_tuning";
  }
}

StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "fine_tune") return StrategyKind::fine_tune;
  if (s == "manual_prompt") return StrategyKind::manual_prompt;
  if (s == "p_tuning") return StrategyKind::p_tuning;
  throw ValidationError("unknown tuning strategy: \"" + s + "\"");
}

void TuningStrategy::validate() const {
  const bool has_virtual = num_virtual_tokens > 0;
  if (has_virtual != (kind == StrategyKind::p_tuning))
    throw ValidationError(
        "TuningStrategy: num_virtual_tokens > 0 exactly when kind is "
        "p_tuning");
  if (kind == StrategyKind::p_tuning && prompt_encoder_hidden <= 0)
    throw ValidationError("TuningStrategy: prompt_encoder_hidden must be "
                          "positive");
}

nlohmann::json TuningStrategy::to_json() const {
  return nlohmann::json{{"kind", to_string(kind)},
                        {"num_virtual_tokens", num_virtual_tokens},
                        {"prompt_encoder_hidden", prompt_encoder_hidden},
                        {"localized_template", localized_template}};
}

TuningStrategy TuningStrategy::from_json(const nlohmann::json& j) {
  TuningStrategy s;
  s.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
  s.num_virtual_tokens = j.value("num_virtual_tokens", 0);
  s.prompt_encoder_hidden = j.value("prompt_encoder_hidden", 128);
  s.localized_template = j.value("localized_template", false);
  s.validate();
  return s;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
  if (base_lr <= 0.0 || head_lr <= 0.0)
    throw ValidationError("TrainConfig: learning rates must be positive");
  if (batch_size < 1)
    throw ValidationError("TrainConfig: batch_size must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{
      {"epochs", epochs},       {"base_lr", base_lr},
      {"head_lr", head_lr},     {"batch_size", batch_size},
      {"beta1", beta1},         {"beta2", beta2},
      {"eps", eps},             {"weight_decay", weight_decay},
      {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", 40);
  c.base_lr = j.value("base_lr", 1e-5);
  c.head_lr = j.value("head_lr", c.base_lr);
  c.batch_size = j.value("batch_size", 8);
  c.beta1 = j.value("beta1", 0.9);
  c.beta2 = j.value("beta2", 0.999);
  c.eps = j.value("eps", 1e-8);
  c.weight_decay = j.value("weight_decay", 0.01);
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

TrainConfig default_train_config(const TuningStrategy& strategy) {
  TrainConfig c;
  c.head_lr = strategy.kind == StrategyKind::p_tuning ? 1e-3 : c.base_lr;
  return c;
}

std::string apply_template(std::string_view text, bool localized) {
  if (text.empty()) throw ValidationError("apply_template: empty text");
  const std::string_view tpl =
      localized ? kSeverityTemplateKo : kSeverityTemplate;
  if (text.find("[MASK]") != std::string_view::npos)
    throw ValidationError("apply_template: text already contains [MASK]");
  std::string out(text);
  out += tpl;
  return out;
}

std::vector<std::string> template_tokens() {
  std::vector<std::string> tokens;
  for (std::string_view tpl : {kSeverityTemplate, kSeverityTemplateKo})
    for (std::string& tok : metrics::syllabify(tpl))
      if (tok != "[MASK]") tokens.push_back(std::move(tok));
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

PromptEncoder::PromptEncoder(int num_virtual_tokens, int hidden, int model_dim,
                             std::uint64_t seed)
    : k_(num_virtual_tokens), hidden_(hidden), model_dim_(model_dim) {
  if (k_ <= 0)
    throw ValidationError("PromptEncoder: need a positive virtual token count");
  if (hidden_ <= 0 || model_dim_ <= 0)
    throw ValidationError("PromptEncoder: dimensions must be positive");
  rng::Rng gen(rng::mix(seed, 0x9147e));
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(model_dim_));
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  embeddings_ = nn::Parameter("prompt.emb", nn::Mat::Zero(k_, model_dim_));
  w1_ = nn::Parameter("prompt.w1", nn::Mat::Zero(model_dim_, hidden_));
  b1_ = nn::Parameter("prompt.b1", nn::Mat::Zero(1, hidden_));
  w2_ = nn::Parameter("prompt.w2", nn::Mat::Zero(hidden_, model_dim_));
  b2_ = nn::Parameter("prompt.b2", nn::Mat::Zero(1, model_dim_));
  for (long i = 0; i < embeddings_.value.size(); ++i)
    embeddings_.value(i) = gen.uniform(-in_bound, in_bound);
  for (long i = 0; i < w1_.value.size(); ++i)
    w1_.value(i) = gen.uniform(-in_bound, in_bound);
  for (long i = 0; i < w2_.value.size(); ++i)
    w2_.value(i) = gen.uniform(-hid_bound, hid_bound);
}

nn::Tape::Id PromptEncoder::forward(nn::Tape& tape) {
  nn::Tape::Id h = tape.add_row(
      tape.matmul(tape.param(embeddings_), tape.param(w1_)), tape.param(b1_));
  h = tape.tanh_act(h);
  return tape.add_row(tape.matmul(h, tape.param(w2_)), tape.param(b2_));
}

std::vector<nn::Parameter*> PromptEncoder::parameters() {
  return {&embeddings_, &w1_, &b1_, &w2_, &b2_};
}

std::size_t PromptEncoder::parameter_count() const {
  return static_cast<std::size_t>(embeddings_.value.size() + w1_.value.size() +
                                  b1_.value.size() + w2_.value.size() +
                                  b2_.value.size());
}

nlohmann::json PromptEncoder::to_json() const {
  const auto mat = [](const nn::Mat& m) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (long i = 0; i < m.size(); ++i)
      data[static_cast<std::size_t>(i)] = m(i);
    return nlohmann::json{
        {"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  };
  return nlohmann::json{{"k", k_},
                        {"hidden", hidden_},
                        {"model_dim", model_dim_},
                        {"emb", mat(embeddings_.value)},
                        {"w1", mat(w1_.value)},
                        {"b1", mat(b1_.value)},
                        {"w2", mat(w2_.value)},
                        {"b2", mat(b2_.value)}};
}

PromptEncoder PromptEncoder::from_json(const nlohmann::json& j) {
  const auto mat = [](const nlohmann::json& mj) {
    const long rows = mj.at("rows").get<long>();
    const long cols = mj.at("cols").get<long>();
    const auto data = mj.at("data").get<std::vector<double>>();
    if (static_cast<long>(data.size()) != rows * cols)
      throw ValidationError("prompt encoder checkpoint: size mismatch");
    nn::Mat m(rows, cols);
    for (long i = 0; i < m.size(); ++i)
      m(i) = data[static_cast<std::size_t>(i)];
    return m;
  };
  PromptEncoder p;
  p.k_ = j.at("k").get<int>();
  p.hidden_ = j.at("hidden").get<int>();
  p.model_dim_ = j.at("model_dim").get<int>();
  p.embeddings_ = nn::Parameter("prompt.emb", mat(j.at("emb")));
  p.w1_ = nn::Parameter("prompt.w1", mat(j.at("w1")));
  p.b1_ = nn::Parameter("prompt.b1", mat(j.at("b1")));
  p.w2_ = nn::Parameter("prompt.w2", mat(j.at("w2")));
  p.b2_ = nn::Parameter("prompt.b2", mat(j.at("b2")));
  return p;
}

PromptEncoder build_prompt_encoder(int num_virtual_tokens, int hidden,
                                   int model_dim, std::uint64_t seed) {
  static constexpr int kUsualCounts[] = {5, 10, 15, 20};
  if (std::find(std::begin(kUsualCounts), std::end(kUsualCounts),
                num_virtual_tokens) == std::end(kUsualCounts)) {
    std::cerr << "warning: " << num_virtual_tokens
              << " virtual tokens is outside the usual {5,10,15,20} grid\n";
  }
  return PromptEncoder(num_virtual_tokens, hidden, model_dim, seed);
}

model::TokenizedInput Assembly::tokenize_for_strategy(
    std::string_view text) const {
  if (strategy.kind == StrategyKind::manual_prompt) {
    const model::TokenizedInput input =
        tokenizer.tokenize(apply_template(text, strategy.localized_template));
    if (!input.mask_position)
      throw ValidationError("manual_prompt: template mask lost in tokenization");
    return input;
  }
  return tokenizer.tokenize(text);
}

nn::Tape::Id Assembly::predict_node(nn::Tape& tape,
                                    std::string_view text) const {
  const model::TokenizedInput input = tokenize_for_strategy(text);
  std::optional<nn::Tape::Id> virt;
  int k = 0;
  if (strategy.kind == StrategyKind::p_tuning) {
    virt = prompt->forward(tape);
    k = prompt->virtual_tokens();
  }
  const nn::Tape::Id hidden = encoder->encode(tape, input, virt);
  const model::ReadoutMode mode = strategy.kind == StrategyKind::manual_prompt
                                      ? model::ReadoutMode::mask_position
                                      : model::ReadoutMode::cls;
  return encoder->regression(tape,
                             encoder->readout(tape, hidden, mode, input, k));
}

Assembly assemble(const TuningStrategy& strategy, model::TinyEncoder& encoder,
                  PromptEncoder* prompt) {
  strategy.validate();
  if (strategy.kind == StrategyKind::p_tuning) {
    if (!prompt)
      throw ValidationError("assemble: p_tuning needs a prompt encoder");
    if (prompt->virtual_tokens() != strategy.num_virtual_tokens)
      throw ValidationError("assemble: virtual token count mismatch");
  } else if (prompt) {
    throw ValidationError("assemble: prompt encoder only valid for p_tuning");
  }
  return Assembly{&encoder, prompt, strategy,
                  model::Tokenizer(encoder.config())};
}

double mse(std::span<const double> pred, std::span<const double> gold) {
  if (pred.size() != gold.size() || pred.empty())
    throw ValidationError("mse: size mismatch or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gold[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

std::vector<nn::ParamGroup> parameter_groups(Assembly& assembly,
                                             const TrainConfig& config) {
  nn::ParamGroup base;
  base.lr = config.base_lr;
  base.params = assembly.encoder->encoder_parameters();
  if (assembly.prompt)
    for (nn::Parameter* p : assembly.prompt->parameters())
      base.params.push_back(p);
  nn::ParamGroup head;
  head.lr = config.head_lr;
  head.params = assembly.encoder->head_parameters();
  return {std::move(base), std::move(head)};
}

namespace {

double validation_mse(Assembly& assembly,
                      std::span<const LabeledText> validation_data) {
  nn::Tape tape;
  double sum = 0.0;
  for (const auto& [text, score] : validation_data) {
    tape.reset();
    const nn::Tape::Id y = assembly.predict_node(tape, text);
    const double d = tape.value(y)(0, 0) - score;
    sum += d * d;
  }
  return sum / static_cast<double>(validation_data.size());
}

}  // namespace

TrainedModel train(Assembly& assembly, std::span<const LabeledText> train_data,
                   std::span<const LabeledText> validation_data,
                   const TrainConfig& config, const EventSink& events) {
  config.validate();
  if (train_data.empty() || validation_data.empty())
    throw ValidationError("train: empty train or validation set");

  std::vector<nn::ParamGroup> groups = parameter_groups(assembly, config);
  nn::AdamW optimizer;
  optimizer.beta1 = config.beta1;
  optimizer.beta2 = config.beta2;
  optimizer.eps = config.eps;
  optimizer.weight_decay = config.weight_decay;

  rng::Rng shuffle_gen(rng::mix(config.seed, 0x0bdea1));
  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainedModel result;
  result.strategy = assembly.strategy;
  result.config = config;

  nn::Tape tape;
  double best_val = std::numeric_limits<double>::infinity();
  model::TinyEncoder best_encoder = *assembly.encoder;
  std::optional<PromptEncoder> best_prompt;

  const std::size_t batch =
      static_cast<std::size_t>(std::max(1, config.batch_size));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_gen.shuffle(order);
    double epoch_sq_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      tape.reset();
      nn::zero_grads(groups);
      std::optional<nn::Tape::Id> loss_sum;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& [text, score] = train_data[order[i]];
        const nn::Tape::Id pred = assembly.predict_node(tape, text);
        nn::Mat target(1, 1);
        target(0, 0) = score;
        const nn::Tape::Id diff = tape.sub(pred, tape.input(target));
        const nn::Tape::Id sq = tape.mul(diff, diff);
        loss_sum = loss_sum ? tape.add(*loss_sum, sq) : sq;
      }
      // mean over the true batch size (partial final batch included)
      const nn::Tape::Id loss =
          tape.scale(*loss_sum, 1.0 / static_cast<double>(stop - start));
      const double loss_value = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_value))
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      epoch_sq_sum += loss_value * static_cast<double>(stop - start);
      tape.backward(loss);
      optimizer.step(groups);
      ++result.optimizer_steps;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mse = epoch_sq_sum / static_cast<double>(train_data.size());
    stats.val_mse = validation_mse(assembly, validation_data);
    if (!std::isfinite(stats.val_mse))
      throw TrainingError("validation loss non-finite at epoch " +
                          std::to_string(epoch));
    result.history.push_back(stats);
    if (events) events(stats);
    if (stats.val_mse < best_val) {
      best_val = stats.val_mse;
      result.selected_epoch = epoch;
      best_encoder = *assembly.encoder;
      if (assembly.prompt) best_prompt = *assembly.prompt;
    }
  }

  result.encoder = std::move(best_encoder);
  result.prompt = std::move(best_prompt);
  return result;
}

TrainedModel run_training(const model::EncoderConfig& encoder_config,
                          const TuningStrategy& strategy,
                          const TrainConfig& config,
                          std::span<const LabeledText> train_data,
                          std::span<const LabeledText> validation_data,
                          const EventSink& events) {
  strategy.validate();
  model::TinyEncoder encoder(encoder_config, rng::mix(config.seed, 0x11117));
  std::optional<PromptEncoder> prompt;
  if (strategy.kind == StrategyKind::p_tuning)
    prompt.emplace(strategy.num_virtual_tokens, strategy.prompt_encoder_hidden,
                   encoder_config.model_dim, rng::mix(config.seed, 0x22227));
  Assembly assembly =
      assemble(strategy, encoder, prompt ? &*prompt : nullptr);
  return train(assembly, train_data, validation_data, config, events);
}

std::vector<double> predict(TrainedModel& model,
                            std::span<const std::string> texts) {
  Assembly assembly = assemble(model.strategy, model.encoder,
                               model.prompt ? &*model.prompt : nullptr);
  nn::Tape tape;
  std::vector<double> out;
  out.reserve(texts.size());
  for (const std::string& text : texts) {
    tape.reset();
    out.push_back(tape.value(assembly.predict_node(tape, text))(0, 0));
  }
  return out;
}

nlohmann::json TrainedModel::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const EpochStats& s : history)
    hist.push_back(nlohmann::json{
        {"epoch", s.epoch}, {"train_mse", s.train_mse}, {"val_mse", s.val_mse}});
  return nlohmann::json{
      {"encoder", encoder.to_json()},
      {"prompt", prompt ? prompt->to_json() : nlohmann::json{}},
      {"strategy", strategy.to_json()},
      {"config", config.to_json()},
      {"history", hist},
      {"selected_epoch", selected_epoch},
      {"optimizer_steps", optimizer_steps}};
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  TrainedModel m;
  m.encoder = model::TinyEncoder::from_json(j.at("encoder"));
  if (j.contains("prompt") && !j.at("prompt").is_null())
    m.prompt = PromptEncoder::from_json(j.at("prompt"));
  m.strategy = TuningStrategy::from_json(j.at("strategy"));
  m.config = TrainConfig::from_json(j.at("config"));
  for (const nlohmann::json& s : j.at("history"))
    m.history.push_back(EpochStats{s.at("epoch").get<int>(),
                                   s.at("train_mse").get<double>(),
                                   s.at("val_mse").get<double>()});
  m.selected_epoch = j.at("selected_epoch").get<int>();
  m.optimizer_steps = j.value("optimizer_steps", 0L);
  return m;
}

}  // namespace asdsev::tuning
