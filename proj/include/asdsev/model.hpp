#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asdsev/nn.hpp"
#include "json.hpp"

namespace asdsev::model {

inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kMaskId = 2;
inline constexpr int kUnkId = 3;
inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kUnkToken = "[UNK]";

// Position-table headroom for prepended virtual-token prefixes.
inline constexpr int kMaxVirtualTokens = 32;

struct EncoderConfig {
  std::vector<std::string> vocab;  // reserved tokens first, ids 0..3
  int model_dim = 64;
  int layers = 2;
  int heads = 4;
  int max_len = 256;
  int feedforward_dim = 128;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

// Reserved tokens, extra_tokens (e.g. prompt-template words), then the
// sorted syllable inventory of the given texts.
std::vector<std::string> build_vocab(
    std::span<const std::string> texts,
    std::span<const std::string> extra_tokens = {});

struct TokenizedInput {
  std::vector<int> token_ids;          // starts with CLS
  std::optional<int> mask_position;    // index into token_ids
};

// Syllable-level tokenizer over the config vocabulary. The literal
// "[MASK]" token maps to the mask id. Sequences longer than max_len keep
// the head, unless that would drop a mask, in which case the tail is kept
// so prompt templates survive truncation.
class Tokenizer {
 public:
  explicit Tokenizer(const EncoderConfig& config);
  TokenizedInput tokenize(std::string_view text) const;

 private:
  std::map<std::string, int, std::less<>> ids_;
  int max_len_;
};

TokenizedInput tokenize(std::string_view text, const EncoderConfig& config);

enum class ReadoutMode { cls, mask_position };

// Post-LN transformer encoder with a linear regression head. All
// parameters are plain double tensors driven through the autodiff tape,
// which keeps every strategy's gradient path checkable against finite
// differences.
class TinyEncoder {
 public:
  TinyEncoder() = default;  // empty shell, only valid as assignment target
  TinyEncoder(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  // Token embeddings before positions are added; unchanged by any
  // virtual-token prefix.
  nn::Tape::Id embed_tokens(nn::Tape& tape, const TokenizedInput& input);

  // Forward pass over [virtual ++ tokens]; output has one row per
  // position. Virtual embeddings occupy positions 0..k-1.
  nn::Tape::Id encode(nn::Tape& tape, const TokenizedInput& input,
                      std::optional<nn::Tape::Id> virtual_embeddings = {});

  nn::Tape::Id readout(nn::Tape& tape, nn::Tape::Id hidden, ReadoutMode mode,
                       const TokenizedInput& input, int virtual_count) const;

  nn::Tape::Id regression(nn::Tape& tape, nn::Tape::Id vec);  // 1 x 1

  std::vector<nn::Parameter*> parameters();          // everything
  std::vector<nn::Parameter*> encoder_parameters();  // without the head
  std::vector<nn::Parameter*> head_parameters();

  nlohmann::json to_json() const;
  static TinyEncoder from_json(const nlohmann::json& j);

 private:
  struct Layer {
    nn::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Parameter ln1_g, ln1_b;
    nn::Parameter ff1_w, ff1_b, ff2_w, ff2_b;
    nn::Parameter ln2_g, ln2_b;
  };

  void allocate();  // shapes from config_, values unset

  EncoderConfig config_;
  nn::Parameter tok_emb_, pos_emb_;
  std::vector<Layer> layers_;
  nn::Parameter head_w_, head_b_;
};

}  // namespace asdsev::model
