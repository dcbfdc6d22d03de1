#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "asdsev/errors.hpp"
#include "asdsev/metrics.hpp"
#include "asdsev/recognizer.hpp"
#include "asdsev/rng.hpp"
#include "doctest.h"

using namespace asdsev;

namespace {

corpus::Utterance utt(const std::string& id, const std::string& transcript) {
  corpus::Utterance u;
  u.utterance_id = id;
  u.speaker_id = "spk";
  u.transcript = transcript;
  return u;
}

std::vector<std::string> inventory() {
  return {"가", "나", "다", "라", "마", "바", "사", "하", "고", "노"};
}

corpus::Manifest small_manifest() {
  corpus::Manifest m;
  m.role = corpus::ManifestRole::asr_test;
  corpus::SpeakerRecord rec;
  rec.speaker_id = "spk";
  rec.cohort = corpus::Cohort::ASD;
  m.speakers.emplace(rec.speaker_id, rec);
  m.utterances = {utt("u1", "나는 학교에 갔다"), utt("u2", "사과 좋아요"),
                  utt("u3", "물 주세요 어 지금")};
  return m;
}

}  // namespace

TEST_CASE("noise profile validation") {
  recognizer::NoiseProfile p;
  CHECK_NOTHROW(p.validate());
  p.target_ser = 1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.target_ser = 0.2;
  p.substitution_weight = 0.5;
  CHECK_THROWS_AS(p.validate(), ValidationError);  // weights sum to 0.5
  p.insertion_weight = 0.25;
  p.deletion_weight = 0.25;
  CHECK_NOTHROW(p.validate());
  const auto back = recognizer::NoiseProfile::from_json(p.to_json());
  CHECK(back.target_ser == p.target_ser);
  CHECK(back.substitution_weight == p.substitution_weight);
}

TEST_CASE("replay recognizer is a pure lookup") {
  recognizer::ReplayRecognizer rec({"replay", ""},
                                   {{"u1", "안녕"}, {"u2", "사과"}});
  CHECK(rec.transcribe(utt("u1", "ref")) == "안녕");
  CHECK(rec.transcribe(utt("u1", "ref")) == "안녕");  // repeatable
  CHECK_THROWS_AS(rec.transcribe(utt("u9", "ref")), ValidationError);
}

TEST_CASE("simulate_noise identity at zero target") {
  recognizer::NoiseProfile p;  // target 0, no removal
  const std::string ref = "나는 학교에 갔다";
  CHECK(recognizer::simulate_noise(ref, p, inventory()) == ref);
}

TEST_CASE("simulate_noise is deterministic per seed") {
  recognizer::NoiseProfile p;
  p.target_ser = 0.3;
  p.seed = 77;
  const std::string ref = "나는 학교에 갔다 물 주세요";
  const std::string a = recognizer::simulate_noise(ref, p, inventory());
  const std::string b = recognizer::simulate_noise(ref, p, inventory());
  CHECK(a == b);
  p.seed = 78;
  CHECK(recognizer::simulate_noise(ref, p, inventory()) != a);
}

TEST_CASE("substitution-only noise hits the target rate exactly") {
  recognizer::NoiseProfile p;
  p.target_ser = 0.2;
  p.seed = 5;
  const std::string ref = "가나다라마 바사하고노";  // 10 syllables
  const std::string hyp = recognizer::simulate_noise(ref, p, inventory());
  CHECK(metrics::syllable_error_rate(ref, hyp) ==
        doctest::Approx(0.2).epsilon(1e-12));
  // exactly 2 positions differ, length preserved
  const auto rt = metrics::syllabify(ref);
  const auto ht = metrics::syllabify(hyp);
  REQUIRE(rt.size() == ht.size());
  int diffs = 0;
  for (std::size_t i = 0; i < rt.size(); ++i) diffs += rt[i] != ht[i];
  CHECK(diffs == 2);
}

TEST_CASE("achieved distance stays within one edit of the budget") {
  rng::Rng gen(123);
  const std::vector<std::string> inv = inventory();
  for (int trial = 0; trial < 200; ++trial) {
    const int len = 5 + static_cast<int>(gen.bounded(20));
    std::string ref;
    for (int i = 0; i < len; ++i) {
      if (i) ref += (gen.bounded(4) == 0) ? " " : "";
      ref += inv[gen.bounded(inv.size())];
    }
    const auto ref_toks = metrics::syllabify(ref);
    recognizer::NoiseProfile p;
    p.target_ser = gen.uniform(0.0, 0.6);
    p.substitution_weight = 0.6;
    p.insertion_weight = 0.2;
    p.deletion_weight = 0.2;
    p.seed = gen.next_u64();
    const std::string hyp = recognizer::simulate_noise(ref, p, inv);
    const auto dist = metrics::edit_distance(ref_toks,
                                             metrics::syllabify(hyp));
    const auto budget = static_cast<std::size_t>(std::floor(
        p.target_ser * static_cast<double>(ref_toks.size()) + 0.5));
    CHECK(std::llabs(static_cast<long long>(dist) -
                     static_cast<long long>(budget)) <= 1);
  }
}

TEST_CASE("disfluency removal strips marker tokens outside the budget") {
  recognizer::NoiseProfile p;
  p.remove_disfluencies = true;
  p.disfluency_markers = {"어", "음"};
  const std::string ref = "어 나는 음 학교에 어 갔다";
  const std::string hyp = recognizer::simulate_noise(ref, p, inventory());
  CHECK(hyp == "나는 학교에 갔다");  // target 0: only the markers go
  const auto toks = metrics::syllabify(hyp);
  CHECK(std::count(toks.begin(), toks.end(), "어") == 0);
  CHECK(std::count(toks.begin(), toks.end(), "음") == 0);

  // markers absent -> flag is a no-op
  const std::string clean = "나는 학교에 갔다";
  CHECK(recognizer::simulate_noise(clean, p, inventory()) == clean);
}

TEST_CASE("disfluency removal never increases marker count under noise") {
  recognizer::NoiseProfile p;
  p.remove_disfluencies = true;
  p.disfluency_markers = {"어"};
  p.target_ser = 0.3;
  // inventory without the marker: substitutions cannot reintroduce it
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    p.seed = seed;
    const std::string ref = "어 가나다 어 라마바 어 사하";
    const auto toks =
        metrics::syllabify(recognizer::simulate_noise(ref, p, inventory()));
    CHECK(std::count(toks.begin(), toks.end(), "어") == 0);
  }
}

TEST_CASE("simulate_noise rejects empty references") {
  recognizer::NoiseProfile p;
  CHECK_THROWS_AS(recognizer::simulate_noise("", p, inventory()),
                  ValidationError);
}

TEST_CASE("noise-sim recognizer is order independent") {
  recognizer::NoiseProfile p;
  p.target_ser = 0.25;
  p.seed = 9;
  const auto m = small_manifest();
  recognizer::NoiseSimRecognizer rec =
      recognizer::NoiseSimRecognizer::for_manifest(p, m);
  std::vector<std::string> forward, backward;
  for (const auto& u : m.utterances) forward.push_back(rec.transcribe(u));
  for (auto it = m.utterances.rbegin(); it != m.utterances.rend(); ++it)
    backward.push_back(rec.transcribe(*it));
  std::reverse(backward.begin(), backward.end());
  CHECK(forward == backward);
}

TEST_CASE("evaluate_recognizer reports pooled corpus SER") {
  const auto m = small_manifest();
  std::map<std::string, std::string> perfect;
  for (const auto& u : m.utterances) perfect[u.utterance_id] = u.transcript;
  recognizer::ReplayRecognizer echo({"echo", ""}, perfect);
  CHECK(recognizer::evaluate_recognizer(m, echo).ser == 0.0);

  corpus::Manifest empty;
  empty.role = corpus::ManifestRole::asr_test;
  CHECK_THROWS_AS(recognizer::evaluate_recognizer(empty, echo),
                  ValidationError);
}

TEST_CASE("noise at target 0.2 lands near 0.2 corpus SER on a larger corpus") {
  corpus::Manifest m;
  m.role = corpus::ManifestRole::asr_test;
  corpus::SpeakerRecord rec;
  rec.speaker_id = "spk";
  rec.cohort = corpus::Cohort::ASD;
  m.speakers.emplace(rec.speaker_id, rec);
  rng::Rng gen(31337);
  const auto inv = inventory();
  for (int i = 0; i < 60; ++i) {
    std::string t;
    const int len = 10 + static_cast<int>(gen.bounded(8));
    for (int k = 0; k < len; ++k) {
      if (k && gen.bounded(3) == 0) t += ' ';
      t += inv[gen.bounded(inv.size())];
    }
    m.utterances.push_back(utt("u" + std::to_string(i), t));
  }
  recognizer::NoiseProfile p;
  p.target_ser = 0.2;
  p.substitution_weight = 0.7;
  p.insertion_weight = 0.15;
  p.deletion_weight = 0.15;
  p.seed = 4;
  const auto sim = recognizer::NoiseSimRecognizer::for_manifest(p, m);
  const auto report = recognizer::evaluate_recognizer(m, sim);
  CHECK(report.ser == doctest::Approx(0.2).epsilon(0.1));  // within ±0.02
}

TEST_CASE("hypothesis file round trip feeds the replay recognizer") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "asdsev_hyps_test.jsonl";
  std::vector<recognizer::Hypothesis> hyps{{"u1", "안녕", "sim"},
                                           {"u2", "사과 좋아요", "sim"}};
  recognizer::save_hypotheses(hyps, path);
  const auto back = recognizer::load_hypotheses(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].utterance_id == "u1");
  CHECK(back[0].text == "안녕");
  CHECK(back[1].recognizer == "sim");

  const auto rec = recognizer::ReplayRecognizer::from_file(path);
  CHECK(rec.id().name == "sim");
  CHECK(rec.transcribe(utt("u1", "")) == "안녕");
  CHECK(rec.transcribe(utt("u2", "")) == "사과 좋아요");
  std::filesystem::remove(path);
}

TEST_CASE("reference error rates of the production recognizers") {
  CHECK(recognizer::kWav2vec2ReferenceSer == doctest::Approx(0.2621));
  CHECK(recognizer::kWhisperReferenceSer == doctest::Approx(0.1957));
  CHECK(recognizer::kWhisperReferenceSer < recognizer::kWav2vec2ReferenceSer);
}
