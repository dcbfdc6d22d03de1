#include "asdsev/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "asdsev/errors.hpp"
#include "asdsev/rng.hpp"
#include "asdsev/text.hpp"

namespace asdsev::recognizer {

void NoiseProfile::validate() const {
  if (target_ser < 0.0 || target_ser >= 1.0)
    throw ValidationError("NoiseProfile: target_ser must be in [0,1)");
  if (substitution_weight < 0.0 || insertion_weight < 0.0 ||
      deletion_weight < 0.0)
    throw ValidationError("NoiseProfile: negative edit weight");
  const double sum = substitution_weight + insertion_weight + deletion_weight;
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ValidationError("NoiseProfile: edit weights must sum to 1");
}

nlohmann::json NoiseProfile::to_json() const {
  return nlohmann::json{{"target_ser", target_ser},
                        {"substitution_weight", substitution_weight},
                        {"insertion_weight", insertion_weight},
                        {"deletion_weight", deletion_weight},
                        {"remove_disfluencies", remove_disfluencies},
                        {"disfluency_markers", disfluency_markers},
                        {"seed", seed}};
}

NoiseProfile NoiseProfile::from_json(const nlohmann::json& j) {
  NoiseProfile p;
  p.target_ser = j.value("target_ser", 0.0);
  p.substitution_weight = j.value("substitution_weight", 1.0);
  p.insertion_weight = j.value("insertion_weight", 0.0);
  p.deletion_weight = j.value("deletion_weight", 0.0);
  p.remove_disfluencies = j.value("remove_disfluencies", false);
  if (j.contains("disfluency_markers"))
    p.disfluency_markers =
        j["disfluency_markers"].get<std::vector<std::string>>();
  p.seed = j.value("seed", std::uint64_t{0});
  p.validate();
  return p;
}

ReplayRecognizer::ReplayRecognizer(RecognizerId id,
                                   std::map<std::string, std::string> hyps)
    : id_(std::move(id)), hypotheses_(std::move(hyps)) {
  if (id_.name.empty())
    throw ValidationError("ReplayRecognizer: empty recognizer name");
}

ReplayRecognizer ReplayRecognizer::from_file(
    const std::filesystem::path& path) {
  std::vector<Hypothesis> rows = load_hypotheses(path);
  std::map<std::string, std::string> hyps;
  std::string name = "replay";
  for (const Hypothesis& h : rows) {
    if (!h.recognizer.empty()) name = h.recognizer;
    if (!hyps.emplace(h.utterance_id, h.text).second)
      throw ValidationError("duplicate hypothesis for utterance \"" +
                            h.utterance_id + "\" in " + path.string());
  }
  return ReplayRecognizer({name, "replayed hypotheses from " + path.string()},
                          std::move(hyps));
}

std::string ReplayRecognizer::transcribe(
    const corpus::Utterance& utterance) const {
  auto it = hypotheses_.find(utterance.utterance_id);
  if (it == hypotheses_.end())
    throw ValidationError("replay recognizer has no hypothesis for "
                          "utterance \"" +
                          utterance.utterance_id + "\"");
  return it->second;
}

NoiseSimRecognizer::NoiseSimRecognizer(NoiseProfile profile,
                                       std::vector<std::string> inventory,
                                       std::string name)
    : id_{std::move(name), "seeded transcript corruption"},
      profile_(std::move(profile)),
      inventory_(std::move(inventory)) {
  profile_.validate();
}

NoiseSimRecognizer NoiseSimRecognizer::for_manifest(
    NoiseProfile profile, const corpus::Manifest& manifest, std::string name) {
  std::set<std::string> syllables;
  for (const corpus::Utterance& u : manifest.utterances)
    for (std::string& tok : metrics::syllabify(u.transcript))
      syllables.insert(std::move(tok));
  return NoiseSimRecognizer(
      std::move(profile),
      std::vector<std::string>(syllables.begin(), syllables.end()),
      std::move(name));
}

std::string NoiseSimRecognizer::transcribe(
    const corpus::Utterance& utterance) const {
  NoiseProfile per_utt = profile_;
  per_utt.seed = rng::mix(profile_.seed, rng::hash_string(utterance.utterance_id));
  return simulate_noise(utterance.transcript, per_utt, inventory_);
}

namespace {

enum class EditKind { substitution, insertion, deletion };

// Word-structured token view so untouched text keeps its spacing.
struct TokenizedWords {
  std::vector<std::vector<std::string>> words;

  std::size_t flat_size() const {
    std::size_t n = 0;
    for (const auto& w : words) n += w.size();
    return n;
  }

  std::pair<std::size_t, std::size_t> locate(std::size_t flat) const {
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (flat < words[w].size()) return {w, flat};
      flat -= words[w].size();
    }
    throw Error("token index out of range");
  }

  std::string join() const {
    std::string out;
    for (const auto& w : words) {
      if (w.empty()) continue;
      if (!out.empty()) out += ' ';
      for (const std::string& tok : w) out += tok;
    }
    return out;
  }
};

TokenizedWords split_words(std::string_view reference) {
  TokenizedWords tw;
  std::string word;
  const std::string ref(reference);
  std::size_t start = 0;
  while (start <= ref.size()) {
    const std::size_t end = ref.find(' ', start);
    const std::string piece =
        ref.substr(start, end == std::string::npos ? std::string::npos
                                                   : end - start);
    if (!piece.empty()) tw.words.push_back(metrics::syllabify(piece));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return tw;
}

}  // namespace

namespace {

// One attempt at applying `budget` random edits to the word structure.
TokenizedWords apply_edits(TokenizedWords tw, const NoiseProfile& profile,
                           std::span<const std::string> inventory,
                           std::size_t budget, rng::Rng& gen) {
  std::size_t n_sub = 0, n_ins = 0, n_del = 0;
  for (std::size_t i = 0; i < budget; ++i) {
    const double u = gen.uniform();
    if (u < profile.substitution_weight) {
      ++n_sub;
    } else if (u < profile.substitution_weight + profile.insertion_weight) {
      ++n_ins;
    } else {
      ++n_del;
    }
  }

  // Substitutions and deletions hit distinct positions so each normally
  // contributes a full unit of edit distance; overflow beyond the current
  // length is converted to insertions to preserve the budget.
  const std::size_t current = tw.flat_size();
  if (n_sub + n_del > current) {
    std::size_t excess = n_sub + n_del - current;
    n_ins += excess;
    const std::size_t cut_del = std::min(excess, n_del);
    n_del -= cut_del;
    excess -= cut_del;
    n_sub -= std::min(excess, n_sub);
  }

  std::vector<std::size_t> positions(current);
  for (std::size_t i = 0; i < current; ++i) positions[i] = i;
  gen.shuffle(positions);
  positions.resize(n_sub + n_del);

  // Deletions run from the highest flat index down so earlier picks stay
  // valid, substitutions in place.
  std::vector<std::pair<std::size_t, EditKind>> ops;
  ops.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    ops.emplace_back(positions[i],
                     i < n_sub ? EditKind::substitution : EditKind::deletion);
  std::sort(ops.begin(), ops.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  const auto draw_replacement = [&](const std::string& original) {
    if (inventory.empty()) return original;
    for (int attempt = 0; attempt < 16; ++attempt) {
      const std::string& cand =
          inventory[static_cast<std::size_t>(gen.bounded(inventory.size()))];
      if (cand != original) return cand;
    }
    return inventory[0];
  };

  for (const auto& [flat, kind] : ops) {
    auto [w, off] = tw.locate(flat);
    if (kind == EditKind::substitution) {
      tw.words[w][off] = draw_replacement(tw.words[w][off]);
    } else {
      tw.words[w].erase(tw.words[w].begin() + static_cast<long>(off));
    }
  }

  for (std::size_t i = 0; i < n_ins && !inventory.empty(); ++i) {
    const std::size_t len = tw.flat_size();
    const std::size_t at = static_cast<std::size_t>(gen.bounded(len + 1));
    const std::string tok =
        inventory[static_cast<std::size_t>(gen.bounded(inventory.size()))];
    if (tw.words.empty()) tw.words.emplace_back();
    if (at >= len) {
      tw.words.back().push_back(tok);
    } else {
      auto [w, off] = tw.locate(at);
      tw.words[w].insert(tw.words[w].begin() + static_cast<long>(off), tok);
    }
  }
  return tw;
}

std::vector<std::string> flat_tokens(const TokenizedWords& tw) {
  std::vector<std::string> out;
  out.reserve(tw.flat_size());
  for (const auto& word : tw.words)
    out.insert(out.end(), word.begin(), word.end());
  return out;
}

}  // namespace

std::string simulate_noise(std::string_view reference,
                           const NoiseProfile& profile,
                           std::span<const std::string> inventory) {
  profile.validate();
  if (metrics::syllabify(reference).empty())
    throw ValidationError("simulate_noise: reference has no syllables");

  TokenizedWords tw = split_words(reference);

  bool removed_any = false;
  if (profile.remove_disfluencies && !profile.disfluency_markers.empty()) {
    const std::set<std::string> markers(profile.disfluency_markers.begin(),
                                        profile.disfluency_markers.end());
    for (auto& word : tw.words) {
      auto it = std::remove_if(word.begin(), word.end(),
                               [&](const std::string& t) {
                                 return markers.count(t) > 0;
                               });
      if (it != word.end()) {
        removed_any = true;
        word.erase(it, word.end());
      }
    }
  }

  // Budget over the text the edits actually land on: marker deletions are
  // applied first and stay outside the budget, so in removal mode the
  // random-edit rate is relative to the cleaned reference.
  const std::size_t budget = static_cast<std::size_t>(std::floor(
      profile.target_ser * static_cast<double>(tw.flat_size()) + 0.5));
  if (budget == 0 && !removed_any) return std::string(reference);

  // Random edits with repeated tokens can collapse under alignment
  // (e.g. a substitution next to an insertion of the same syllable), so
  // attempts whose achieved distance drifts more than one edit from the
  // budget are redrawn deterministically.
  const std::vector<std::string> base = flat_tokens(tw);
  TokenizedWords best;
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
    rng::Rng gen(rng::mix(profile.seed, 0xa5a5u + attempt));
    TokenizedWords edited = apply_edits(tw, profile, inventory, budget, gen);
    const std::size_t dist = metrics::edit_distance(base, flat_tokens(edited));
    const std::size_t gap = dist > budget ? dist - budget : budget - dist;
    if (gap < best_gap) {
      best_gap = gap;
      best = std::move(edited);
      if (best_gap <= (budget == 0 ? 0 : 1)) break;
    }
  }
  return best.join();
}

std::vector<Hypothesis> transcribe_manifest(const corpus::Manifest& manifest,
                                            const Recognizer& recognizer) {
  std::vector<Hypothesis> out;
  out.reserve(manifest.utterances.size());
  for (const corpus::Utterance& u : manifest.utterances)
    out.push_back(Hypothesis{u.utterance_id,
                             text::normalize(recognizer.transcribe(u)),
                             recognizer.id().name});
  return out;
}

metrics::MetricReport evaluate_recognizer(const corpus::Manifest& manifest,
                                          const Recognizer& recognizer) {
  if (manifest.utterances.empty())
    throw ValidationError("evaluate_recognizer: empty manifest");
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(manifest.utterances.size());
  for (const corpus::Utterance& u : manifest.utterances)
    pairs.emplace_back(u.transcript, recognizer.transcribe(u));
  metrics::MetricReport report;
  report.ser = metrics::corpus_ser(pairs);
  report.n = pairs.size();
  return report;
}

std::vector<Hypothesis> load_hypotheses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open hypothesis file: " + path.string());
  std::vector<Hypothesis> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      out.push_back(Hypothesis{j.at("utterance_id").get<std::string>(),
                               j.at("hypothesis").get<std::string>(),
                               j.value("recognizer", std::string{})});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": " + e.what());
    }
  }
  return out;
}

void save_hypotheses(std::span<const Hypothesis> hypotheses,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write hypothesis file: " + path.string());
  for (const Hypothesis& h : hypotheses) {
    nlohmann::json j{{"utterance_id", h.utterance_id},
                     {"hypothesis", h.text},
                     {"recognizer", h.recognizer}};
    out << j.dump() << '\n';
  }
}

}  // namespace asdsev::recognizer
