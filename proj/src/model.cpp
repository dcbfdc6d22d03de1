#include "asdsev/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "asdsev/errors.hpp"
#include "asdsev/metrics.hpp"
#include "asdsev/rng.hpp"

namespace asdsev::model {

void EncoderConfig::validate() const {
  if (vocab.size() < 4)
    throw ValidationError("EncoderConfig: vocab must include reserved tokens");
  if (vocab[0] != kPadToken || vocab[1] != kClsToken ||
      vocab[2] != kMaskToken || vocab[3] != kUnkToken)
    throw ValidationError(
        "EncoderConfig: reserved tokens must be [PAD],[CLS],[MASK],[UNK] at "
        "ids 0..3");
  std::set<std::string> unique(vocab.begin(), vocab.end());
  if (unique.size() != vocab.size())
    throw ValidationError("EncoderConfig: duplicate vocab token");
  if (model_dim <= 0 || layers <= 0 || heads <= 0 || max_len <= 0 ||
      feedforward_dim <= 0)
    throw ValidationError("EncoderConfig: dimensions must be positive");
  if (model_dim % heads != 0)
    throw ValidationError("EncoderConfig: model_dim must be divisible by heads");
}

nlohmann::json EncoderConfig::to_json() const {
  return nlohmann::json{{"vocab", vocab},
                        {"model_dim", model_dim},
                        {"layers", layers},
                        {"heads", heads},
                        {"max_len", max_len},
                        {"feedforward_dim", feedforward_dim}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab = j.at("vocab").get<std::vector<std::string>>();
  c.model_dim = j.at("model_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.feedforward_dim = j.at("feedforward_dim").get<int>();
  c.validate();
  return c;
}

std::vector<std::string> build_vocab(std::span<const std::string> texts,
                                     std::span<const std::string> extra_tokens) {
  std::vector<std::string> vocab{std::string(kPadToken), std::string(kClsToken),
                                 std::string(kMaskToken),
                                 std::string(kUnkToken)};
  std::set<std::string> seen(vocab.begin(), vocab.end());
  std::set<std::string> body;
  for (const std::string& tok : extra_tokens)
    if (!seen.count(tok)) body.insert(tok);
  for (const std::string& text : texts)
    for (std::string& tok : metrics::syllabify(text))
      if (!seen.count(tok)) body.insert(std::move(tok));
  vocab.insert(vocab.end(), body.begin(), body.end());
  return vocab;
}

Tokenizer::Tokenizer(const EncoderConfig& config) : max_len_(config.max_len) {
  config.validate();
  for (std::size_t i = 0; i < config.vocab.size(); ++i)
    ids_.emplace(config.vocab[i], static_cast<int>(i));
}

TokenizedInput Tokenizer::tokenize(std::string_view text) const {
  std::vector<int> ids{kClsId};
  // the literal "[MASK]" is a hard token boundary wherever it appears
  const auto push_segment = [&](std::string_view segment) {
    for (const std::string& tok : metrics::syllabify(segment)) {
      auto it = ids_.find(tok);
      ids.push_back(it == ids_.end() ? kUnkId : it->second);
    }
  };
  std::size_t start = 0;
  for (std::size_t at = text.find(kMaskToken); at != std::string_view::npos;
       at = text.find(kMaskToken, start)) {
    push_segment(text.substr(start, at - start));
    ids.push_back(kMaskId);
    start = at + kMaskToken.size();
  }
  push_segment(text.substr(start));
  TokenizedInput out;
  const auto find_mask = [](const std::vector<int>& v) -> std::optional<int> {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] == kMaskId) return static_cast<int>(i);
    return std::nullopt;
  };
  if (ids.size() > static_cast<std::size_t>(max_len_)) {
    std::optional<int> mask = find_mask(ids);
    if (mask && *mask >= max_len_) {
      // keep the tail so the prompt template stays intact
      std::vector<int> kept{kClsId};
      kept.insert(kept.end(), ids.end() - (max_len_ - 1), ids.end());
      ids = std::move(kept);
    } else {
      ids.resize(static_cast<std::size_t>(max_len_));
    }
  }
  out.mask_position = find_mask(ids);
  out.token_ids = std::move(ids);
  return out;
}

TokenizedInput tokenize(std::string_view text, const EncoderConfig& config) {
  return Tokenizer(config).tokenize(text);
}

namespace {

void init_uniform(nn::Parameter& p, rng::Rng& gen, double bound) {
  for (long i = 0; i < p.value.size(); ++i)
    p.value(i) = gen.uniform(-bound, bound);
}

}  // namespace

void TinyEncoder::allocate() {
  const int d = config_.model_dim;
  const int ff = config_.feedforward_dim;
  tok_emb_ = nn::Parameter(
      "tok_emb", nn::Mat::Zero(static_cast<long>(config_.vocab.size()), d));
  pos_emb_ = nn::Parameter(
      "pos_emb", nn::Mat::Zero(config_.max_len + kMaxVirtualTokens, d));
  layers_.clear();
  layers_.resize(static_cast<std::size_t>(config_.layers));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& L = layers_[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    L.wq = nn::Parameter(p + "wq", nn::Mat::Zero(d, d));
    L.bq = nn::Parameter(p + "bq", nn::Mat::Zero(1, d));
    L.wk = nn::Parameter(p + "wk", nn::Mat::Zero(d, d));
    L.bk = nn::Parameter(p + "bk", nn::Mat::Zero(1, d));
    L.wv = nn::Parameter(p + "wv", nn::Mat::Zero(d, d));
    L.bv = nn::Parameter(p + "bv", nn::Mat::Zero(1, d));
    L.wo = nn::Parameter(p + "wo", nn::Mat::Zero(d, d));
    L.bo = nn::Parameter(p + "bo", nn::Mat::Zero(1, d));
    L.ln1_g = nn::Parameter(p + "ln1_g", nn::Mat::Ones(1, d));
    L.ln1_b = nn::Parameter(p + "ln1_b", nn::Mat::Zero(1, d));
    L.ff1_w = nn::Parameter(p + "ff1_w", nn::Mat::Zero(d, ff));
    L.ff1_b = nn::Parameter(p + "ff1_b", nn::Mat::Zero(1, ff));
    L.ff2_w = nn::Parameter(p + "ff2_w", nn::Mat::Zero(ff, d));
    L.ff2_b = nn::Parameter(p + "ff2_b", nn::Mat::Zero(1, d));
    L.ln2_g = nn::Parameter(p + "ln2_g", nn::Mat::Ones(1, d));
    L.ln2_b = nn::Parameter(p + "ln2_b", nn::Mat::Zero(1, d));
  }
  head_w_ = nn::Parameter("head_w", nn::Mat::Zero(1, d));
  head_b_ = nn::Parameter("head_b", nn::Mat::Zero(1, 1));
}

TinyEncoder::TinyEncoder(EncoderConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  allocate();
  rng::Rng gen(rng::mix(seed, 0xe0c0de));
  const double d_bound = 1.0 / std::sqrt(static_cast<double>(config_.model_dim));
  const double ff_bound =
      1.0 / std::sqrt(static_cast<double>(config_.feedforward_dim));
  init_uniform(tok_emb_, gen, d_bound);
  init_uniform(pos_emb_, gen, d_bound);
  for (Layer& L : layers_) {
    init_uniform(L.wq, gen, d_bound);
    init_uniform(L.wk, gen, d_bound);
    init_uniform(L.wv, gen, d_bound);
    init_uniform(L.wo, gen, d_bound);
    init_uniform(L.ff1_w, gen, d_bound);
    init_uniform(L.ff2_w, gen, ff_bound);
    // biases stay zero, layer norms stay (1, 0)
  }
  init_uniform(head_w_, gen, d_bound);  // bias zero
}

nn::Tape::Id TinyEncoder::embed_tokens(nn::Tape& tape,
                                       const TokenizedInput& input) {
  if (input.token_ids.empty())
    throw ValidationError("encode: empty token sequence");
  return tape.gather_rows(tok_emb_, input.token_ids);
}

nn::Tape::Id TinyEncoder::encode(nn::Tape& tape, const TokenizedInput& input,
                                 std::optional<nn::Tape::Id> virtual_embeddings) {
  nn::Tape::Id x = embed_tokens(tape, input);
  int k = 0;
  if (virtual_embeddings) {
    const nn::Mat& v = tape.value(*virtual_embeddings);
    if (v.cols() != config_.model_dim)
      throw ValidationError("encode: virtual embedding dim mismatch");
    k = static_cast<int>(v.rows());
    if (k > kMaxVirtualTokens)
      throw ValidationError("encode: too many virtual tokens");
    x = tape.concat_rows(*virtual_embeddings, x);
  }
  const int total = k + static_cast<int>(input.token_ids.size());
  std::vector<int> pos_ids(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) pos_ids[static_cast<std::size_t>(i)] = i;
  x = tape.add(x, tape.gather_rows(pos_emb_, std::move(pos_ids)));

  const int d = config_.model_dim;
  const int h = config_.heads;
  const int dh = d / h;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (Layer& L : layers_) {
    const nn::Tape::Id q = tape.add_row(tape.matmul(x, tape.param(L.wq)),
                                        tape.param(L.bq));
    const nn::Tape::Id key = tape.add_row(tape.matmul(x, tape.param(L.wk)),
                                          tape.param(L.bk));
    const nn::Tape::Id v = tape.add_row(tape.matmul(x, tape.param(L.wv)),
                                        tape.param(L.bv));
    std::vector<nn::Tape::Id> heads;
    heads.reserve(static_cast<std::size_t>(h));
    for (int i = 0; i < h; ++i) {
      const nn::Tape::Id qh = tape.slice_cols(q, i * dh, dh);
      const nn::Tape::Id kh = tape.slice_cols(key, i * dh, dh);
      const nn::Tape::Id vh = tape.slice_cols(v, i * dh, dh);
      const nn::Tape::Id scores = tape.scale(tape.matmul_nt(qh, kh), att_scale);
      heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    const nn::Tape::Id ctx = tape.concat_cols(heads);
    const nn::Tape::Id attn_out =
        tape.add_row(tape.matmul(ctx, tape.param(L.wo)), tape.param(L.bo));
    x = tape.layer_norm(tape.add(x, attn_out), tape.param(L.ln1_g),
                        tape.param(L.ln1_b));
    nn::Tape::Id ffw = tape.add_row(tape.matmul(x, tape.param(L.ff1_w)),
                                    tape.param(L.ff1_b));
    ffw = tape.gelu(ffw);
    ffw = tape.add_row(tape.matmul(ffw, tape.param(L.ff2_w)),
                       tape.param(L.ff2_b));
    x = tape.layer_norm(tape.add(x, ffw), tape.param(L.ln2_g),
                        tape.param(L.ln2_b));
  }
  return x;
}

nn::Tape::Id TinyEncoder::readout(nn::Tape& tape, nn::Tape::Id hidden,
                                  ReadoutMode mode, const TokenizedInput& input,
                                  int virtual_count) const {
  int index = virtual_count;  // CLS sits right after the virtual prefix
  if (mode == ReadoutMode::mask_position) {
    if (!input.mask_position)
      throw ValidationError("readout: mask_position requested but no mask");
    index = virtual_count + *input.mask_position;
  }
  return tape.row(hidden, index);
}

nn::Tape::Id TinyEncoder::regression(nn::Tape& tape, nn::Tape::Id vec) {
  return tape.add(tape.matmul_nt(vec, tape.param(head_w_)),
                  tape.param(head_b_));
}

std::vector<nn::Parameter*> TinyEncoder::encoder_parameters() {
  std::vector<nn::Parameter*> out{&tok_emb_, &pos_emb_};
  for (Layer& L : layers_) {
    for (nn::Parameter* p :
         {&L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo, &L.ln1_g,
          &L.ln1_b, &L.ff1_w, &L.ff1_b, &L.ff2_w, &L.ff2_b, &L.ln2_g, &L.ln2_b})
      out.push_back(p);
  }
  return out;
}

std::vector<nn::Parameter*> TinyEncoder::head_parameters() {
  return {&head_w_, &head_b_};
}

std::vector<nn::Parameter*> TinyEncoder::parameters() {
  std::vector<nn::Parameter*> out = encoder_parameters();
  for (nn::Parameter* p : head_parameters()) out.push_back(p);
  return out;
}

namespace {

nlohmann::json mat_to_json(const nn::Mat& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  for (long i = 0; i < m.size(); ++i) data[static_cast<std::size_t>(i)] = m(i);
  return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

nn::Mat mat_from_json(const nlohmann::json& j) {
  const long rows = j.at("rows").get<long>();
  const long cols = j.at("cols").get<long>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<long>(data.size()) != rows * cols)
    throw ValidationError("checkpoint: tensor size mismatch");
  nn::Mat m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m(i) = data[static_cast<std::size_t>(i)];
  return m;
}

}  // namespace

nlohmann::json TinyEncoder::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  for (const nn::Parameter* p : const_cast<TinyEncoder*>(this)->parameters())
    params[p->name] = mat_to_json(p->value);
  return nlohmann::json{{"format", "asdsev-checkpoint-v1"},
                        {"config", config_.to_json()},
                        {"parameters", params}};
}

TinyEncoder TinyEncoder::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "asdsev-checkpoint-v1")
    throw ValidationError("checkpoint: unknown format tag");
  TinyEncoder enc;
  enc.config_ = EncoderConfig::from_json(j.at("config"));
  enc.allocate();
  const nlohmann::json& params = j.at("parameters");
  for (nn::Parameter* p : enc.parameters()) {
    if (!params.contains(p->name))
      throw ValidationError("checkpoint: missing tensor " + p->name);
    nn::Mat m = mat_from_json(params.at(p->name));
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw ValidationError("checkpoint: shape mismatch for " + p->name);
    p->value = std::move(m);
  }
  return enc;
}

}  // namespace asdsev::model
