#include <cmath>
#include <string>
#include <vector>

#include "asdsev/errors.hpp"
#include "asdsev/model.hpp"
#include "asdsev/rng.hpp"
#include "doctest.h"

using namespace asdsev;

namespace {

bool exact_equal(const nn::Mat& a, const nn::Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

model::EncoderConfig tiny_config(int dim = 8, int layers = 1, int heads = 1,
                                 int max_len = 64) {
  model::EncoderConfig cfg;
  cfg.model_dim = dim;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.max_len = max_len;
  cfg.feedforward_dim = 2 * dim;
  const std::vector<std::string> texts{"가 나 다 라 마 바 사 하",
                                       "고 노 도 로 모 보 소 호"};
  const std::vector<std::string> extra{"the", "is"};
  cfg.vocab = model::build_vocab(texts, extra);
  return cfg;
}

}  // namespace

TEST_CASE("build_vocab places reserved tokens first") {
  const std::vector<std::string> texts{"나 가"};
  const auto vocab = model::build_vocab(texts);
  REQUIRE(vocab.size() >= 6);
  CHECK(vocab[model::kPadId] == "[PAD]");
  CHECK(vocab[model::kClsId] == "[CLS]");
  CHECK(vocab[model::kMaskId] == "[MASK]");
  CHECK(vocab[model::kUnkId] == "[UNK]");
}

TEST_CASE("encoder config validation") {
  auto cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 3;  // does not divide 8
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = tiny_config();
  cfg.vocab[0] = "wrong";
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("tokenize basics") {
  const auto cfg = tiny_config();
  const auto empty = model::tokenize("", cfg);
  REQUIRE(empty.token_ids.size() == 1);
  CHECK(empty.token_ids[0] == model::kClsId);
  CHECK(!empty.mask_position);

  const auto with_mask = model::tokenize("가 나 [MASK]", cfg);
  REQUIRE(with_mask.mask_position);
  CHECK(*with_mask.mask_position == 3);
  CHECK(with_mask.token_ids[3] == model::kMaskId);

  const auto unk = model::tokenize("휘", cfg);  // not in the toy vocab
  CHECK(unk.token_ids[1] == model::kUnkId);

  // the literal substring is recognized even without surrounding spaces
  const auto glued = model::tokenize("가[MASK]나", cfg);
  REQUIRE(glued.mask_position);
  CHECK(glued.token_ids[2] == model::kMaskId);
  CHECK(glued.token_ids.size() == 4);  // CLS 가 MASK 나
}

TEST_CASE("tokenize truncates to max_len keeping the head") {
  auto cfg = tiny_config();
  cfg.max_len = 16;
  std::string text;
  for (int i = 0; i < 300; ++i) text += "가";
  const auto input = model::tokenize(text, cfg);
  CHECK(input.token_ids.size() == 16);
  CHECK(input.token_ids[0] == model::kClsId);
}

TEST_CASE("tokenize keeps the tail when a mask would be truncated away") {
  auto cfg = tiny_config();
  cfg.max_len = 16;
  std::string text;
  for (int i = 0; i < 300; ++i) text += "가";
  text += " 나 [MASK]";
  const auto input = model::tokenize(text, cfg);
  REQUIRE(input.token_ids.size() == 16);
  REQUIRE(input.mask_position);
  CHECK(input.token_ids[0] == model::kClsId);
  CHECK(*input.mask_position == 15);
  CHECK(input.token_ids[15] == model::kMaskId);
}

TEST_CASE("encode output length is virtual count plus token count") {
  const auto cfg = tiny_config();
  model::TinyEncoder enc(cfg, 1);
  const auto input = model::tokenize("가 나 다 라 마 바 사 하 고 노 도",
                                     cfg);
  REQUIRE(input.token_ids.size() == 12);

  nn::Tape tape;
  const auto plain = enc.encode(tape, input);
  CHECK(tape.value(plain).rows() == 12);
  CHECK(tape.value(plain).cols() == cfg.model_dim);

  const auto virt = tape.input(nn::Mat::Zero(20, cfg.model_dim));
  const auto with_virtual = enc.encode(tape, input, virt);
  CHECK(tape.value(with_virtual).rows() == 32);
  CHECK(tape.value(with_virtual).array().isFinite().all());
  CHECK(tape.value(plain).array().isFinite().all());

  const auto bad = tape.input(nn::Mat::Zero(4, cfg.model_dim + 1));
  CHECK_THROWS_AS(enc.encode(tape, input, bad), ValidationError);
}

TEST_CASE("virtual prefix never changes the token embeddings themselves") {
  const auto cfg = tiny_config();
  model::TinyEncoder enc(cfg, 2);
  const auto input = model::tokenize("가 나 다", cfg);
  nn::Tape tape;
  const auto bare = enc.embed_tokens(tape, input);
  const auto bare_again = enc.embed_tokens(tape, input);
  CHECK(exact_equal(tape.value(bare), tape.value(bare_again)));
}

TEST_CASE("readout picks CLS or the shifted mask position") {
  const auto cfg = tiny_config();
  model::TinyEncoder enc(cfg, 3);
  const auto input = model::tokenize("가 나 다 라 [MASK]", cfg);
  REQUIRE(input.mask_position);
  REQUIRE(*input.mask_position == 5);

  nn::Tape tape;
  const auto virt = tape.input(nn::Mat::Zero(10, cfg.model_dim));
  const auto hidden = enc.encode(tape, input, virt);
  const auto cls = enc.readout(tape, hidden, model::ReadoutMode::cls, input, 10);
  CHECK(exact_equal(tape.value(cls), tape.value(hidden).row(10)));
  const auto mask =
      enc.readout(tape, hidden, model::ReadoutMode::mask_position, input, 10);
  CHECK(exact_equal(tape.value(mask), tape.value(hidden).row(15)));

  const auto no_mask = model::tokenize("가 나", cfg);
  CHECK_THROWS_AS(
      enc.readout(tape, hidden, model::ReadoutMode::mask_position, no_mask, 0),
      ValidationError);
}

TEST_CASE("regression head is affine") {
  const auto cfg = tiny_config();
  model::TinyEncoder enc(cfg, 4);
  // zero-out the head, then set a known affine map
  auto heads = enc.head_parameters();
  REQUIRE(heads.size() == 2);
  heads[0]->value.setZero();
  heads[1]->value.setZero();
  nn::Tape tape;
  const auto zero_in = tape.input(nn::Mat::Zero(1, cfg.model_dim));
  CHECK(tape.value(enc.regression(tape, zero_in))(0, 0) == 0.0);

  heads[0]->value(0, 0) = 1.0;   // identity row on coordinate 0
  heads[1]->value(0, 0) = 1.0;   // bias 1
  nn::Mat v = nn::Mat::Zero(1, cfg.model_dim);
  v(0, 0) = 2.5;
  v(0, 1) = -7.0;
  nn::Tape tape2;
  const auto y = enc.regression(tape2, tape2.input(v));
  CHECK(tape2.value(y)(0, 0) == doctest::Approx(3.5));
}

TEST_CASE("gradient of the head output w.r.t. head weights is the input") {
  const auto cfg = tiny_config();
  model::TinyEncoder enc(cfg, 5);
  rng::Rng gen(6);
  nn::Mat v(1, cfg.model_dim);
  for (long i = 0; i < v.size(); ++i) v(i) = gen.normal();

  nn::Tape tape;
  const auto y = enc.regression(tape, tape.input(v));
  auto heads = enc.head_parameters();
  for (auto* p : heads) p->zero_grad();
  tape.backward(y);
  for (long i = 0; i < cfg.model_dim; ++i)
    CHECK(heads[0]->grad(0, i) == doctest::Approx(v(0, i)).epsilon(1e-12));
  CHECK(heads[1]->grad(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("full encoder gradients match finite differences") {
  const auto cfg = tiny_config(8, 1, 1);
  model::TinyEncoder enc(cfg, 7);
  const auto input = model::tokenize("가 나 다 라 마", cfg);

  const auto scalar = [&] {
    nn::Tape tape;
    const auto hidden = enc.encode(tape, input);
    const auto read =
        enc.readout(tape, hidden, model::ReadoutMode::cls, input, 0);
    return tape.value(enc.regression(tape, read))(0, 0);
  };
  auto params = enc.parameters();
  for (auto* p : params) p->zero_grad();
  {
    nn::Tape tape;
    const auto hidden = enc.encode(tape, input);
    const auto read =
        enc.readout(tape, hidden, model::ReadoutMode::cls, input, 0);
    tape.backward(enc.regression(tape, read));
  }
  rng::Rng gen(99);
  const double step = 1e-4;
  int checked = 0;
  for (auto* p : params) {
    // a few random coordinates per tensor
    for (int trial = 0; trial < 3; ++trial) {
      const long i = static_cast<long>(gen.bounded(
          static_cast<std::uint64_t>(p->value.size())));
      const double saved = p->value(i);
      p->value(i) = saved + step;
      const double up = scalar();
      p->value(i) = saved - step;
      const double down = scalar();
      p->value(i) = saved;
      const double numeric = (up - down) / (2 * step);
      const double analytic = p->grad(i);
      const double denom =
          std::max({std::fabs(numeric), std::fabs(analytic), 1e-10});
      INFO(p->name, " coordinate ", i);
      CHECK(std::fabs(numeric - analytic) / denom < 1e-3);
      ++checked;
    }
  }
  CHECK(checked >= 10);
}

TEST_CASE("checkpoint json round trip is exact") {
  const auto cfg = tiny_config(8, 2, 2);
  model::TinyEncoder enc(cfg, 8);
  const std::string dumped = enc.to_json().dump();
  model::TinyEncoder back =
      model::TinyEncoder::from_json(nlohmann::json::parse(dumped));
  auto a = enc.parameters();
  auto b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i]->value.size() == b[i]->value.size());
    for (long j = 0; j < a[i]->value.size(); ++j)
      CHECK(a[i]->value(j) == b[i]->value(j));  // bit-exact
  }
  CHECK(back.config().vocab == cfg.vocab);

  // identical forward pass after reload
  const auto input = model::tokenize("가 나 다", cfg);
  nn::Tape t1, t2;
  const auto h1 = enc.encode(t1, input);
  const auto h2 = back.encode(t2, input);
  CHECK(exact_equal(t1.value(h1), t2.value(h2)));
}
