#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asdsev/corpus.hpp"
#include "asdsev/metrics.hpp"

namespace asdsev::recognizer {

// Syllable error rates reported for the fine-tuned production recognizers
// (wav2vec2-xls-r-300m, whisper-large-v2) that the simulators here stand
// in for. Reference values only; not reproduced by this codebase.
inline constexpr double kWav2vec2ReferenceSer = 0.2621;
inline constexpr double kWhisperReferenceSer = 0.1957;

struct RecognizerId {
  std::string name;
  std::string description;
};

struct Hypothesis {
  std::string utterance_id;
  std::string text;  // normalized
  std::string recognizer;
};

struct NoiseProfile {
  double target_ser = 0.0;  // in [0, 1)
  double substitution_weight = 1.0;
  double insertion_weight = 0.0;
  double deletion_weight = 0.0;
  bool remove_disfluencies = false;
  std::vector<std::string> disfluency_markers;
  std::uint64_t seed = 0;

  void validate() const;  // weights sum to 1 within 1e-9
  nlohmann::json to_json() const;
  static NoiseProfile from_json(const nlohmann::json& j);
};

class Recognizer {
 public:
  virtual ~Recognizer() = default;
  virtual const RecognizerId& id() const = 0;
  virtual std::string transcribe(const corpus::Utterance& utterance) const = 0;
};

// Pure lookup over precomputed hypotheses keyed by utterance id.
class ReplayRecognizer final : public Recognizer {
 public:
  ReplayRecognizer(RecognizerId id,
                   std::map<std::string, std::string> hypotheses);
  static ReplayRecognizer from_file(const std::filesystem::path& path);

  const RecognizerId& id() const override { return id_; }
  std::string transcribe(const corpus::Utterance& utterance) const override;

 private:
  RecognizerId id_;
  std::map<std::string, std::string> hypotheses_;
};

// Corrupts reference transcripts with seeded syllable edits to hit a
// target SER. remove_disfluencies drops marker tokens first, outside the
// edit budget, mirroring a recognizer that cleans up filler words.
class NoiseSimRecognizer final : public Recognizer {
 public:
  NoiseSimRecognizer(NoiseProfile profile,
                     std::vector<std::string> syllable_inventory,
                     std::string name = "noise-sim");

  // Substitution inventory drawn from the manifest's reference syllables.
  static NoiseSimRecognizer for_manifest(NoiseProfile profile,
                                         const corpus::Manifest& manifest,
                                         std::string name = "noise-sim");

  const RecognizerId& id() const override { return id_; }
  // Sub-seed derived from (profile.seed, utterance_id): parallel or
  // reordered calls never change output.
  std::string transcribe(const corpus::Utterance& utterance) const override;

  const NoiseProfile& profile() const { return profile_; }

 private:
  RecognizerId id_;
  NoiseProfile profile_;
  std::vector<std::string> inventory_;
};

// round-half-up(target_ser * reference_syllable_count) seeded edits drawn
// per the profile weights; marker deletions applied first when
// remove_disfluencies is set and excluded from the budget. When no edit
// applies the reference is returned byte-identical.
std::string simulate_noise(std::string_view reference,
                           const NoiseProfile& profile,
                           std::span<const std::string> inventory);

std::vector<Hypothesis> transcribe_manifest(const corpus::Manifest& manifest,
                                            const Recognizer& recognizer);

// Corpus SER of a recognizer against an asr_test manifest.
metrics::MetricReport evaluate_recognizer(const corpus::Manifest& manifest,
                                          const Recognizer& recognizer);

std::vector<Hypothesis> load_hypotheses(const std::filesystem::path& path);
void save_hypotheses(std::span<const Hypothesis> hypotheses,
                     const std::filesystem::path& path);

}  // namespace asdsev::recognizer
