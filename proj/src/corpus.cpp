#include "asdsev/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "asdsev/errors.hpp"
#include "asdsev/rng.hpp"
#include "asdsev/text.hpp"

namespace asdsev::corpus {

std::string to_string(Cohort c) { return c == Cohort::ASD ? "ASD" : "TD"; }

std::string to_string(Sex s) {
  switch (s) {
    case Sex::M: return "M";
    case Sex::F: return "F";
    default: return "U";
  }
}

std::string to_string(ManifestRole r) {
  switch (r) {
    case ManifestRole::asr_train: return "asr_train";
    case ManifestRole::asr_test: return "asr_test";
    case ManifestRole::plm_train: return "plm_train";
    default: return "plm_test";
  }
}

Cohort cohort_from_string(const std::string& s) {
  if (s == "ASD") return Cohort::ASD;
  if (s == "TD") return Cohort::TD;
  throw ValidationError("unknown cohort value: \"" + s + "\"");
}

Sex sex_from_string(const std::string& s) {
  if (s == "M") return Sex::M;
  if (s == "F") return Sex::F;
  if (s == "U") return Sex::U;
  throw ValidationError("unknown sex value: \"" + s + "\"");
}

ManifestRole role_from_string(const std::string& s) {
  if (s == "asr_train") return ManifestRole::asr_train;
  if (s == "asr_test") return ManifestRole::asr_test;
  if (s == "plm_train") return ManifestRole::plm_train;
  if (s == "plm_test") return ManifestRole::plm_test;
  throw ValidationError("unknown manifest role: \"" + s + "\"");
}

std::vector<std::string> Manifest::speaker_ids() const {
  std::vector<std::string> ids;
  ids.reserve(speakers.size());
  for (const auto& [id, rec] : speakers) ids.push_back(id);
  return ids;
}

double severity_from_ratings(std::span<const double> ratings) {
  if (ratings.empty())
    throw ValidationError("severity_from_ratings: empty ratings list");
  double sum = 0.0;
  for (double r : ratings) {
    if (r < 0.0)
      throw ValidationError("severity_from_ratings: negative rating");
    sum += r;
  }
  return sum / static_cast<double>(ratings.size());
}

SpeakerRecord assign_td_baseline(SpeakerRecord speaker) {
  if (speaker.cohort != Cohort::TD)
    throw ValidationError("assign_td_baseline: speaker \"" +
                          speaker.speaker_id + "\" is not TD");
  speaker.severity_score = 0.0;
  return speaker;
}

namespace {

nlohmann::json parse_line(const std::string& line, const std::string& file,
                          std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(file + ":" + std::to_string(line_no) +
                          ": malformed JSON line (" + e.what() + ")");
  }
}

bool is_plm_role(ManifestRole role) {
  return role == ManifestRole::plm_train || role == ManifestRole::plm_test;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& utterances_file,
                       const std::filesystem::path& speakers_file,
                       ManifestRole role) {
  std::ifstream spk_in(speakers_file);
  if (!spk_in)
    throw IoError("cannot open speaker file: " + speakers_file.string());
  std::map<std::string, SpeakerRecord> roster;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(spk_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = parse_line(line, speakers_file.string(), line_no);
    SpeakerRecord rec;
    try {
      rec.speaker_id = j.at("speaker_id").get<std::string>();
      rec.cohort = cohort_from_string(j.at("cohort").get<std::string>());
      rec.sex = sex_from_string(j.value("sex", std::string("U")));
      if (j.contains("age_months") && !j["age_months"].is_null()) {
        const int age = j["age_months"].get<int>();
        if (age < 0)
          throw ValidationError("negative age_months for speaker \"" +
                                rec.speaker_id + "\"");
        rec.age_months = age;
      }
      if (j.contains("ratings") && !j["ratings"].is_null())
        rec.ratings = j["ratings"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(speakers_file.string() + ":" +
                            std::to_string(line_no) + ": " + e.what());
    }
    if (rec.speaker_id.empty())
      throw ValidationError(speakers_file.string() + ":" +
                            std::to_string(line_no) + ": empty speaker_id");
    if (roster.count(rec.speaker_id))
      throw ValidationError("duplicate speaker_id \"" + rec.speaker_id + "\"");
    if (rec.cohort == Cohort::TD) {
      rec = assign_td_baseline(std::move(rec));
    } else if (rec.ratings) {
      rec.severity_score = severity_from_ratings(*rec.ratings);
    }
    roster.emplace(rec.speaker_id, std::move(rec));
  }

  std::ifstream utt_in(utterances_file);
  if (!utt_in)
    throw IoError("cannot open utterance file: " + utterances_file.string());
  Manifest manifest;
  manifest.role = role;
  std::set<std::string> seen_utt;
  line_no = 0;
  while (std::getline(utt_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = parse_line(line, utterances_file.string(), line_no);
    Utterance u;
    try {
      u.utterance_id = j.at("utterance_id").get<std::string>();
      u.speaker_id = j.at("speaker_id").get<std::string>();
      if (j.contains("audio_ref") && !j["audio_ref"].is_null())
        u.audio_ref = j["audio_ref"].get<std::string>();
      u.transcript = text::normalize(j.at("transcript").get<std::string>());
      if (j.contains("duration_sec") && !j["duration_sec"].is_null()) {
        const double d = j["duration_sec"].get<double>();
        if (d < 0.0)
          throw ValidationError("negative duration_sec for utterance \"" +
                                u.utterance_id + "\"");
        u.duration_sec = d;
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(utterances_file.string() + ":" +
                            std::to_string(line_no) + ": " + e.what());
    }
    if (!seen_utt.insert(u.utterance_id).second)
      throw ValidationError("duplicate utterance_id \"" + u.utterance_id +
                            "\"");
    if (u.transcript.empty())
      throw ValidationError("utterance \"" + u.utterance_id +
                            "\": transcript empty after normalization");
    auto it = roster.find(u.speaker_id);
    if (it == roster.end())
      throw ValidationError("utterance \"" + u.utterance_id +
                            "\" references unknown speaker \"" + u.speaker_id +
                            "\"");
    manifest.speakers.emplace(it->first, it->second);
    manifest.utterances.push_back(std::move(u));
  }

  if (is_plm_role(role)) {
    for (const auto& [id, rec] : manifest.speakers) {
      if (rec.cohort == Cohort::ASD && !rec.ratings)
        throw ValidationError("speaker \"" + id +
                              "\": ASD speaker without ratings not allowed "
                              "in a " +
                              to_string(role) + " manifest");
    }
  }
  return manifest;
}

void save_manifest(const Manifest& manifest,
                   const std::filesystem::path& utterances_file,
                   const std::filesystem::path& speakers_file) {
  std::ofstream utt_out(utterances_file);
  if (!utt_out)
    throw IoError("cannot write utterance file: " + utterances_file.string());
  for (const Utterance& u : manifest.utterances) {
    nlohmann::json j{{"utterance_id", u.utterance_id},
                     {"speaker_id", u.speaker_id},
                     {"transcript", u.transcript}};
    if (u.audio_ref) j["audio_ref"] = *u.audio_ref;
    if (u.duration_sec) j["duration_sec"] = *u.duration_sec;
    utt_out << j.dump() << '\n';
  }
  std::ofstream spk_out(speakers_file);
  if (!spk_out)
    throw IoError("cannot write speaker file: " + speakers_file.string());
  for (const auto& [id, rec] : manifest.speakers) {
    nlohmann::json j{{"speaker_id", rec.speaker_id},
                     {"cohort", to_string(rec.cohort)},
                     {"sex", to_string(rec.sex)}};
    if (rec.age_months) j["age_months"] = *rec.age_months;
    if (rec.ratings) j["ratings"] = *rec.ratings;
    spk_out << j.dump() << '\n';
  }
}

Manifest restrict_to_speakers(const Manifest& manifest,
                              std::span<const std::string> speaker_ids) {
  std::set<std::string> keep(speaker_ids.begin(), speaker_ids.end());
  Manifest out;
  out.role = manifest.role;
  for (const Utterance& u : manifest.utterances)
    if (keep.count(u.speaker_id)) out.utterances.push_back(u);
  for (const auto& [id, rec] : manifest.speakers)
    if (keep.count(id)) out.speakers.emplace(id, rec);
  return out;
}

nlohmann::json SplitPlan::to_json() const {
  return nlohmann::json{{"train_ids", train_ids},
                        {"validation_ids", validation_ids},
                        {"low_resource_ids", low_resource_ids},
                        {"seed", seed},
                        {"validation_fraction", validation_fraction},
                        {"low_resource_fraction", low_resource_fraction}};
}

SplitPlan SplitPlan::from_json(const nlohmann::json& j) {
  SplitPlan p;
  p.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  p.validation_ids = j.at("validation_ids").get<std::vector<std::string>>();
  p.low_resource_ids =
      j.at("low_resource_ids").get<std::vector<std::string>>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.validation_fraction = j.at("validation_fraction").get<double>();
  p.low_resource_fraction = j.at("low_resource_fraction").get<double>();
  return p;
}

void SplitPlan::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split plan: " + path.string());
  out << to_json().dump(2) << '\n';
}

SplitPlan SplitPlan::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split plan: " + path.string());
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

std::size_t fraction_count(double fraction, std::size_t n) {
  const double x = fraction * static_cast<double>(n);
  const auto rounded = static_cast<std::size_t>(std::floor(x + 0.5));
  return std::max<std::size_t>(1, rounded);
}

SplitPlan full_train_plan(const Manifest& manifest) {
  SplitPlan plan;
  plan.train_ids = manifest.speaker_ids();
  return plan;
}

SplitPlan make_validation_split(const Manifest& manifest, double fraction,
                                std::uint64_t seed) {
  if (manifest.role != ManifestRole::plm_train)
    throw ValidationError("make_validation_split: manifest role must be "
                          "plm_train, got " +
                          to_string(manifest.role));
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ValidationError("make_validation_split: fraction must be in (0,1)");
  std::vector<std::string> ids = manifest.speaker_ids();
  if (ids.size() < 2)
    throw ValidationError("make_validation_split: fewer than 2 speakers");
  rng::Rng gen(rng::mix(seed, 0x5eedu));
  gen.shuffle(ids);
  const std::size_t n_val = fraction_count(fraction, ids.size());
  SplitPlan plan;
  plan.seed = seed;
  plan.validation_fraction = fraction;
  plan.validation_ids.assign(ids.begin(),
                             ids.begin() + static_cast<long>(n_val));
  plan.train_ids.assign(ids.begin() + static_cast<long>(n_val), ids.end());
  std::sort(plan.validation_ids.begin(), plan.validation_ids.end());
  std::sort(plan.train_ids.begin(), plan.train_ids.end());
  return plan;
}

SplitPlan make_low_resource(const SplitPlan& plan, std::uint64_t seed) {
  if (plan.train_ids.empty())
    throw ValidationError("make_low_resource: plan has no train speakers");
  std::vector<std::string> ids = plan.train_ids;
  std::sort(ids.begin(), ids.end());
  rng::Rng gen(rng::mix(seed, 0x10adu));
  gen.shuffle(ids);
  const std::size_t n_low =
      fraction_count(plan.low_resource_fraction, plan.train_ids.size());
  SplitPlan out = plan;
  out.seed = seed;
  out.low_resource_ids.assign(ids.begin(),
                              ids.begin() + static_cast<long>(n_low));
  std::sort(out.low_resource_ids.begin(), out.low_resource_ids.end());
  return out;
}

std::vector<std::string> check_disjointness(const Manifest& asr_train,
                                            const Manifest& plm_test) {
  std::vector<std::string> shared;
  for (const auto& [id, rec] : plm_test.speakers)
    if (asr_train.speakers.count(id)) shared.push_back(id);
  return shared;
}

std::map<std::string, std::string> speaker_documents(
    const Manifest& manifest,
    const std::map<std::string, std::string>* transcript_override) {
  std::map<std::string, std::string> docs;
  for (const Utterance& u : manifest.utterances) {
    const std::string* piece = &u.transcript;
    if (transcript_override) {
      auto it = transcript_override->find(u.utterance_id);
      if (it == transcript_override->end())
        throw ValidationError("speaker_documents: no transcript override for "
                              "utterance \"" +
                              u.utterance_id + "\"");
      piece = &it->second;
    }
    std::string& doc = docs[u.speaker_id];
    if (!doc.empty()) doc += ' ';
    doc += *piece;
  }
  return docs;
}

}  // namespace asdsev::corpus
