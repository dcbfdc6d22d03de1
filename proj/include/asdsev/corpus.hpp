#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace asdsev::corpus {

enum class Cohort { ASD, TD };
enum class Sex { M, F, U };
enum class ManifestRole { asr_train, asr_test, plm_train, plm_test };

std::string to_string(Cohort c);
std::string to_string(Sex s);
std::string to_string(ManifestRole r);
Cohort cohort_from_string(const std::string& s);
Sex sex_from_string(const std::string& s);
ManifestRole role_from_string(const std::string& s);

struct SpeakerRecord {
  std::string speaker_id;
  Cohort cohort = Cohort::TD;
  Sex sex = Sex::U;
  std::optional<int> age_months;
  std::optional<std::vector<double>> ratings;  // individual rater scores
  double severity_score = 0.0;                 // derived, never read from file
};

struct Utterance {
  std::string utterance_id;
  std::string speaker_id;
  std::optional<std::string> audio_ref;  // opaque path, never opened here
  std::string transcript;                // stored normalized
  std::optional<double> duration_sec;
};

struct Manifest {
  ManifestRole role = ManifestRole::plm_train;
  std::vector<Utterance> utterances;
  std::map<std::string, SpeakerRecord> speakers;  // only referenced speakers

  std::vector<std::string> speaker_ids() const;  // sorted
  std::size_t speaker_count() const { return speakers.size(); }
};

// Arithmetic mean of a non-empty list of nonnegative ratings.
double severity_from_ratings(std::span<const double> ratings);

// severity_score := 0 for a TD speaker; ratings untouched.
SpeakerRecord assign_td_baseline(SpeakerRecord speaker);

// Loads and validates the two JSON-Lines files. Speakers present in the
// speaker file but referenced by no utterance are dropped. ASD speakers
// without ratings are rejected for plm_* roles and allowed for asr_*.
Manifest load_manifest(const std::filesystem::path& utterances_file,
                       const std::filesystem::path& speakers_file,
                       ManifestRole role);

void save_manifest(const Manifest& manifest,
                   const std::filesystem::path& utterances_file,
                   const std::filesystem::path& speakers_file);

// Restriction of a manifest to a subset of its speakers (order preserved).
Manifest restrict_to_speakers(const Manifest& manifest,
                              std::span<const std::string> speaker_ids);

struct SplitPlan {
  std::vector<std::string> train_ids;       // sorted
  std::vector<std::string> validation_ids;  // sorted, disjoint from train
  std::vector<std::string> low_resource_ids;  // sorted, subset of train
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  double low_resource_fraction = 0.2;

  nlohmann::json to_json() const;
  static SplitPlan from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SplitPlan load(const std::filesystem::path& path);
};

// max(1, round-half-up(fraction * n)).
std::size_t fraction_count(double fraction, std::size_t n);

// Plan with every manifest speaker on the train side and no validation.
SplitPlan full_train_plan(const Manifest& manifest);

// Speaker-level split of a plm_train manifest. Validation size is
// fraction_count(fraction, speaker_count); deterministic per seed.
SplitPlan make_validation_split(const Manifest& manifest, double fraction,
                                std::uint64_t seed);

// Seeded uniform subset of plan.train_ids of size
// fraction_count(plan.low_resource_fraction, |train_ids|).
SplitPlan make_low_resource(const SplitPlan& plan, std::uint64_t seed);

// Speaker ids appearing in both manifests; empty means the
// train/test integrity rule holds.
std::vector<std::string> check_disjointness(const Manifest& asr_train,
                                            const Manifest& plm_test);

// Per-speaker model input: all of a speaker's transcripts concatenated in
// manifest order, space-joined. transcript_override (utterance_id -> text)
// substitutes recognizer hypotheses for the stored transcripts.
std::map<std::string, std::string> speaker_documents(
    const Manifest& manifest,
    const std::map<std::string, std::string>* transcript_override = nullptr);

}  // namespace asdsev::corpus
