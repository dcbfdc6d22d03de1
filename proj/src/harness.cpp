#include "asdsev/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "asdsev/errors.hpp"
#include "asdsev/rng.hpp"
#include "asdsev/text.hpp"

namespace fs = std::filesystem;

namespace asdsev::harness {

std::string to_string(Setting s) {
  return s == Setting::full_set ? "full_set" : "low_resource";
}

Setting setting_from_string(const std::string& s) {
  if (s == "full_set") return Setting::full_set;
  if (s == "low_resource") return Setting::low_resource;
  throw ValidationError("unknown setting: \"" + s + "\"");
}

nlohmann::json PathsConfig::to_json() const {
  return nlohmann::json{
      {"plm_train_utterances", plm_train_utterances.string()},
      {"plm_train_speakers", plm_train_speakers.string()},
      {"plm_test_utterances", plm_test_utterances.string()},
      {"plm_test_speakers", plm_test_speakers.string()},
      {"asr_train_utterances", asr_train_utterances.string()},
      {"asr_train_speakers", asr_train_speakers.string()},
      {"hypotheses", hypotheses.string()},
      {"out_dir", out_dir.string()}};
}

PathsConfig PathsConfig::from_json(const nlohmann::json& j) {
  PathsConfig p;
  p.plm_train_utterances = j.value("plm_train_utterances", std::string{});
  p.plm_train_speakers = j.value("plm_train_speakers", std::string{});
  p.plm_test_utterances = j.value("plm_test_utterances", std::string{});
  p.plm_test_speakers = j.value("plm_test_speakers", std::string{});
  p.asr_train_utterances = j.value("asr_train_utterances", std::string{});
  p.asr_train_speakers = j.value("asr_train_speakers", std::string{});
  p.hypotheses = j.value("hypotheses", std::string{});
  p.out_dir = j.value("out_dir", std::string("runs"));
  return p;
}

nlohmann::json EncoderOverrides::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (model_dim) j["model_dim"] = *model_dim;
  if (layers) j["layers"] = *layers;
  if (heads) j["heads"] = *heads;
  if (max_len) j["max_len"] = *max_len;
  if (feedforward_dim) j["feedforward_dim"] = *feedforward_dim;
  return j;
}

EncoderOverrides EncoderOverrides::from_json(const nlohmann::json& j) {
  EncoderOverrides o;
  if (j.contains("model_dim")) o.model_dim = j["model_dim"].get<int>();
  if (j.contains("layers")) o.layers = j["layers"].get<int>();
  if (j.contains("heads")) o.heads = j["heads"].get<int>();
  if (j.contains("max_len")) o.max_len = j["max_len"].get<int>();
  if (j.contains("feedforward_dim"))
    o.feedforward_dim = j["feedforward_dim"].get<int>();
  return o;
}

bool EncoderOverrides::empty() const {
  return !model_dim && !layers && !heads && !max_len && !feedforward_dim;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ValidationError("ExperimentConfig: no seeds");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size())
    throw ValidationError("ExperimentConfig: duplicate seeds");
  if (transcription_source != "human" && !is_recognizer_source())
    throw ValidationError(
        "ExperimentConfig: transcription_source must be \"human\" or "
        "\"recognizer:<name>\"");
  strategy.validate();
  train_config.validate();
  if (encoder_id.empty())
    throw ValidationError("ExperimentConfig: empty encoder_id");
}

bool ExperimentConfig::is_recognizer_source() const {
  return transcription_source.rfind("recognizer:", 0) == 0 &&
         transcription_source.size() > 11;
}

std::string ExperimentConfig::recognizer_name() const {
  if (!is_recognizer_source())
    throw ValidationError("recognizer_name: source is not a recognizer");
  return transcription_source.substr(11);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j{{"transcription_source", transcription_source},
                   {"encoder_id", encoder_id},
                   {"strategy", strategy.to_json()},
                   {"setting", to_string(setting)},
                   {"seeds", seeds},
                   {"train_config", train_config.to_json()},
                   {"split_seed", split_seed},
                   {"paths", paths.to_json()}};
  if (noise_profile) j["noise_profile"] = noise_profile->to_json();
  if (!encoder_overrides.empty())
    j["encoder_overrides"] = encoder_overrides.to_json();
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.transcription_source = j.value("transcription_source", std::string("human"));
  c.encoder_id = j.value("encoder_id", std::string("toy-64x2"));
  if (j.contains("strategy"))
    c.strategy = tuning::TuningStrategy::from_json(j.at("strategy"));
  c.setting = setting_from_string(j.value("setting", std::string("full_set")));
  if (j.contains("seeds"))
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("train_config"))
    c.train_config = tuning::TrainConfig::from_json(j.at("train_config"));
  c.split_seed = j.value("split_seed", std::uint64_t{7});
  if (j.contains("noise_profile") && !j.at("noise_profile").is_null())
    c.noise_profile =
        recognizer::NoiseProfile::from_json(j.at("noise_profile"));
  if (j.contains("encoder_overrides"))
    c.encoder_overrides = EncoderOverrides::from_json(j.at("encoder_overrides"));
  if (j.contains("paths")) c.paths = PathsConfig::from_json(j.at("paths"));
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string config_fingerprint(const ExperimentConfig& config) {
  nlohmann::json j = config.to_json();
  j["paths"].erase("out_dir");  // location does not identify the run
  const std::string canonical = j.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(rng::hash_string(canonical)));
  return std::string(buf);
}

model::EncoderConfig encoder_config_for_id(const std::string& encoder_id,
                                           const EncoderOverrides& overrides) {
  model::EncoderConfig cfg;
  cfg.vocab = {std::string(model::kPadToken), std::string(model::kClsToken),
               std::string(model::kMaskToken), std::string(model::kUnkToken)};
  if (encoder_id != "toy") {
    int dim = 0, layers = 0;
    if (std::sscanf(encoder_id.c_str(), "toy-%dx%d", &dim, &layers) != 2 ||
        dim <= 0 || layers <= 0)
      throw ValidationError("unknown encoder id: \"" + encoder_id +
                            "\" (expected toy or toy-<dim>x<layers>)");
    cfg.model_dim = dim;
    cfg.layers = layers;
    cfg.heads = dim % 4 == 0 ? 4 : (dim % 2 == 0 ? 2 : 1);
    cfg.feedforward_dim = 2 * dim;
  }
  if (overrides.model_dim) cfg.model_dim = *overrides.model_dim;
  if (overrides.layers) cfg.layers = *overrides.layers;
  if (overrides.heads) cfg.heads = *overrides.heads;
  if (overrides.max_len) cfg.max_len = *overrides.max_len;
  if (overrides.feedforward_dim)
    cfg.feedforward_dim = *overrides.feedforward_dim;
  return cfg;
}

// ---------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------

const std::vector<std::string>& disfluency_markers() {
  static const std::vector<std::string> markers = {"어", "음", "그"};
  return markers;
}

nlohmann::json SynthSpec::to_json() const {
  return nlohmann::json{{"train_speakers", train_speakers},
                        {"test_speakers", test_speakers},
                        {"asr_test_speakers", asr_test_speakers},
                        {"utterances_per_speaker", utterances_per_speaker},
                        {"sigma", sigma},
                        {"severity_slope", severity_slope},
                        {"min_density", min_density},
                        {"max_density", max_density},
                        {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.train_speakers = j.value("train_speakers", 100);
  s.test_speakers = j.value("test_speakers", 24);
  s.asr_test_speakers = j.value("asr_test_speakers", 10);
  s.utterances_per_speaker = j.value("utterances_per_speaker", 4);
  s.sigma = j.value("sigma", 0.1);
  s.severity_slope = j.value("severity_slope", 10.0);
  s.min_density = j.value("min_density", 0.05);
  s.max_density = j.value("max_density", 0.5);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

namespace {

const std::vector<std::string>& content_syllables() {
  static const std::vector<std::string> inventory = {
      "가", "나", "다", "라", "마", "바", "사", "자", "차", "카", "타", "파",
      "하", "고", "노", "도", "로", "모", "보", "소", "조", "초", "코", "토",
      "포", "호", "구", "누", "두", "루", "무", "부", "수", "주", "추", "쿠",
      "투", "푸", "후", "기", "니", "디", "리", "미", "비", "시", "지", "치",
      "키", "티", "피", "히", "내", "대", "래", "매", "배", "새", "재", "채",
      "해", "는", "를", "에", "서", "이", "와", "요"};
  return inventory;
}

std::string make_utterance_text(rng::Rng& gen, double marker_density) {
  const auto& inventory = content_syllables();
  const auto& markers = disfluency_markers();
  // Content length is drawn independently of the marker density and the
  // markers are planted on top, so stripping them leaves no length cue:
  // with density p and content count C, round(C*p/(1-p)) markers give a
  // marker share of ~p among C + m total tokens.
  const int n_content = 8 + static_cast<int>(gen.bounded(9));  // 8..16
  const int n_markers = static_cast<int>(std::floor(
      static_cast<double>(n_content) * marker_density / (1.0 - marker_density) +
      0.5));

  // content words of 1..3 syllables
  std::vector<std::string> words;
  int remaining = n_content;
  while (remaining > 0) {
    const int len = std::min<int>(remaining, 1 + static_cast<int>(gen.bounded(3)));
    std::string word;
    for (int i = 0; i < len; ++i)
      word += inventory[static_cast<std::size_t>(gen.bounded(inventory.size()))];
    words.push_back(std::move(word));
    remaining -= len;
  }
  // markers as standalone filler words
  for (int i = 0; i < n_markers; ++i) {
    const std::size_t at = static_cast<std::size_t>(gen.bounded(words.size() + 1));
    words.insert(words.begin() + static_cast<long>(at),
                 markers[static_cast<std::size_t>(gen.bounded(markers.size()))]);
  }
  std::string out;
  for (const std::string& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

struct SpeakerPlan {
  std::string id;
  corpus::Cohort cohort;
  double density;
  std::optional<std::vector<double>> ratings;
};

void emit_speaker(corpus::Manifest& manifest, const SpeakerPlan& plan,
                  const SynthSpec& spec, rng::Rng& gen,
                  std::map<std::string, double>& planted) {
  corpus::SpeakerRecord rec;
  rec.speaker_id = plan.id;
  rec.cohort = plan.cohort;
  const double sex_draw = gen.uniform();
  rec.sex = sex_draw < 0.6 ? corpus::Sex::M
                           : (sex_draw < 0.9 ? corpus::Sex::F : corpus::Sex::U);
  rec.age_months = 36 + static_cast<int>(gen.bounded(125));
  rec.ratings = plan.ratings;
  if (rec.cohort == corpus::Cohort::TD) {
    rec = corpus::assign_td_baseline(std::move(rec));
  } else if (rec.ratings) {
    rec.severity_score = corpus::severity_from_ratings(*rec.ratings);
  }
  manifest.speakers.emplace(rec.speaker_id, rec);
  planted[plan.id] = plan.density;

  for (int u = 0; u < spec.utterances_per_speaker; ++u) {
    corpus::Utterance utt;
    utt.utterance_id = plan.id + "_u" + std::to_string(u);
    utt.speaker_id = plan.id;
    utt.transcript = make_utterance_text(gen, plan.density);
    utt.audio_ref = "audio/" + utt.utterance_id + ".wav";
    const std::size_t syllables = metrics::syllabify(utt.transcript).size();
    utt.duration_sec = static_cast<double>(syllables) * gen.uniform(0.25, 0.4);
    manifest.utterances.push_back(std::move(utt));
  }
}

std::vector<double> draw_ratings(rng::Rng& gen, const SynthSpec& spec,
                                 double density) {
  double center = spec.severity_slope * density + spec.sigma * gen.normal();
  center = std::max(center, 0.0);
  const double spread = std::min(gen.uniform(0.0, 0.3), center);
  return {center - spread, center, center + spread};
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SynthSpec& spec) {
  if (spec.train_speakers < 10)
    throw ValidationError("generate_synthetic_corpus: need >= 10 speakers");
  if (spec.test_speakers < 3 || spec.utterances_per_speaker < 1)
    throw ValidationError("generate_synthetic_corpus: degenerate sizes");

  rng::Rng gen(rng::mix(spec.seed, 0xc0151));
  SyntheticCorpus out;
  out.plm_train.role = corpus::ManifestRole::plm_train;
  out.plm_test.role = corpus::ManifestRole::plm_test;
  out.asr_test.role = corpus::ManifestRole::asr_test;

  // TD share mirrors the clinical split: 32 of 119 train, 8 of 24 test.
  const int train_td = static_cast<int>(corpus::fraction_count(
      32.0 / 119.0, static_cast<std::size_t>(spec.train_speakers)));
  const int test_td = static_cast<int>(corpus::fraction_count(
      8.0 / 24.0, static_cast<std::size_t>(spec.test_speakers)));

  const auto plan_speakers = [&](const std::string& prefix, int count, int n_td,
                                 corpus::Manifest& manifest, bool with_ratings) {
    for (int i = 0; i < count; ++i) {
      SpeakerPlan plan;
      const bool td = i < n_td;
      plan.cohort = td ? corpus::Cohort::TD : corpus::Cohort::ASD;
      plan.id = prefix + (td ? "td_" : "asd_") + std::to_string(td ? i : i - n_td);
      plan.density =
          td ? 0.0 : gen.uniform(spec.min_density, spec.max_density);
      if (!td && with_ratings) plan.ratings = draw_ratings(gen, spec, plan.density);
      emit_speaker(manifest, plan, spec, gen, out.planted_density);
    }
  };

  plan_speakers("tr_", spec.train_speakers, train_td, out.plm_train, true);
  plan_speakers("te_", spec.test_speakers, test_td, out.plm_test, true);
  plan_speakers("asr_", spec.asr_test_speakers,
                std::max(1, spec.asr_test_speakers / 3), out.asr_test, false);
  return out;
}

SyntheticCorpus generate_synthetic_corpus(int n_speakers,
                                          int utterances_per_speaker,
                                          std::uint64_t seed) {
  SynthSpec spec;
  spec.train_speakers = n_speakers;
  spec.utterances_per_speaker = utterances_per_speaker;
  spec.seed = seed;
  return generate_synthetic_corpus(spec);
}

void save_synthetic_corpus(const SyntheticCorpus& corpus_out,
                           const fs::path& dir) {
  fs::create_directories(dir);
  corpus::save_manifest(corpus_out.plm_train, dir / "plm_train_utterances.jsonl",
                        dir / "plm_train_speakers.jsonl");
  corpus::save_manifest(corpus_out.plm_test, dir / "plm_test_utterances.jsonl",
                        dir / "plm_test_speakers.jsonl");
  corpus::save_manifest(corpus_out.asr_test, dir / "asr_test_utterances.jsonl",
                        dir / "asr_test_speakers.jsonl");
}

// ---------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------

nlohmann::json ResultCell::to_json() const {
  return nlohmann::json{{"fingerprint", fingerprint},
                        {"pcc", pcc},
                        {"p_value", p_value},
                        {"stars", stars},
                        {"n", n},
                        {"per_seed_pcc", per_seed_pcc},
                        {"failed", failed},
                        {"error", error}};
}

ResultCell ResultCell::from_json(const nlohmann::json& j) {
  ResultCell c;
  c.fingerprint = j.value("fingerprint", std::string{});
  c.pcc = j.value("pcc", 0.0);
  c.p_value = j.value("p_value", 1.0);
  c.stars = j.value("stars", std::string{});
  c.n = j.value("n", std::size_t{0});
  if (j.contains("per_seed_pcc"))
    c.per_seed_pcc = j.at("per_seed_pcc").get<std::vector<double>>();
  c.failed = j.value("failed", false);
  c.error = j.value("error", std::string{});
  return c;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

namespace {

std::vector<tuning::LabeledText> labeled_documents(
    const corpus::Manifest& manifest,
    const std::map<std::string, std::string>* override_texts) {
  const auto docs = corpus::speaker_documents(manifest, override_texts);
  std::vector<tuning::LabeledText> out;
  out.reserve(docs.size());
  for (const auto& [id, doc] : docs)
    out.emplace_back(doc, manifest.speakers.at(id).severity_score);
  return out;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::string fp = config_fingerprint(config);
  const fs::path run_dir = config.paths.out_dir / fp;
  const fs::path cell_path = run_dir / "cell.json";

  corpus::Manifest plm_train = corpus::load_manifest(
      config.paths.plm_train_utterances, config.paths.plm_train_speakers,
      corpus::ManifestRole::plm_train);
  corpus::Manifest plm_test = corpus::load_manifest(
      config.paths.plm_test_utterances, config.paths.plm_test_speakers,
      corpus::ManifestRole::plm_test);

  // Integrity guard: PLM test speakers must be absent from ASR training.
  if (!config.paths.asr_train_utterances.empty()) {
    const corpus::Manifest asr_train = corpus::load_manifest(
        config.paths.asr_train_utterances, config.paths.asr_train_speakers,
        corpus::ManifestRole::asr_train);
    const std::vector<std::string> shared =
        corpus::check_disjointness(asr_train, plm_test);
    if (!shared.empty()) {
      std::string msg = "disjointness violation: speakers {";
      for (std::size_t i = 0; i < shared.size(); ++i)
        msg += (i ? ", " : "") + shared[i];
      msg += "} appear in both asr_train and plm_test";
      throw ValidationError(msg);
    }
  }

  if (fs::exists(cell_path)) {
    std::ifstream in(cell_path);
    nlohmann::json j;
    in >> j;
    return RunOutcome{ResultCell::from_json(j), 0, true};
  }
  fs::create_directories(run_dir);

  // Resolve the transcription source.
  std::optional<std::map<std::string, std::string>> override_texts;
  if (config.is_recognizer_source()) {
    std::unique_ptr<recognizer::Recognizer> rec;
    if (config.noise_profile) {
      std::set<std::string> syllables;
      for (const corpus::Manifest* m : {&plm_train, &plm_test})
        for (const corpus::Utterance& u : m->utterances)
          for (std::string& tok : metrics::syllabify(u.transcript))
            syllables.insert(std::move(tok));
      rec = std::make_unique<recognizer::NoiseSimRecognizer>(
          *config.noise_profile,
          std::vector<std::string>(syllables.begin(), syllables.end()),
          config.recognizer_name());
    } else if (!config.paths.hypotheses.empty()) {
      rec = std::make_unique<recognizer::ReplayRecognizer>(
          recognizer::ReplayRecognizer::from_file(config.paths.hypotheses));
    } else {
      throw ValidationError(
          "recognizer source needs a noise_profile or a hypotheses file");
    }
    override_texts.emplace();
    for (const corpus::Manifest* m : {&plm_train, &plm_test})
      for (const corpus::Utterance& u : m->utterances)
        (*override_texts)[u.utterance_id] =
            text::normalize(rec->transcribe(u));
  }
  const std::map<std::string, std::string>* override_ptr =
      override_texts ? &*override_texts : nullptr;

  // Accessible pool: everything, or the low-resource selection from the
  // full speaker set (fixed per setting; model seeds do not resample it).
  corpus::Manifest active = plm_train;
  if (config.setting == Setting::low_resource) {
    corpus::SplitPlan selection = corpus::make_low_resource(
        corpus::full_train_plan(plm_train), config.split_seed);
    selection.save(run_dir / "low_resource_plan.json");
    active = corpus::restrict_to_speakers(plm_train, selection.low_resource_ids);
  }
  const corpus::SplitPlan vplan =
      corpus::make_validation_split(active, 0.2, config.split_seed);
  vplan.save(run_dir / "validation_plan.json");
  const corpus::Manifest train_manifest =
      corpus::restrict_to_speakers(active, vplan.train_ids);
  const corpus::Manifest val_manifest =
      corpus::restrict_to_speakers(active, vplan.validation_ids);

  const std::vector<tuning::LabeledText> train_data =
      labeled_documents(train_manifest, override_ptr);
  const std::vector<tuning::LabeledText> val_data =
      labeled_documents(val_manifest, override_ptr);

  const auto test_docs = corpus::speaker_documents(plm_test, override_ptr);
  std::vector<std::string> test_ids, test_texts;
  std::vector<double> gold;
  for (const auto& [id, doc] : test_docs) {
    test_ids.push_back(id);
    test_texts.push_back(doc);
    gold.push_back(plm_test.speakers.at(id).severity_score);
  }

  // Vocabulary from accessible (train + validation) text only.
  std::vector<std::string> vocab_texts;
  for (const auto& [doc, score] : train_data) vocab_texts.push_back(doc);
  for (const auto& [doc, score] : val_data) vocab_texts.push_back(doc);
  const std::vector<std::string> extra = tuning::template_tokens();
  model::EncoderConfig enc_cfg =
      encoder_config_for_id(config.encoder_id, config.encoder_overrides);
  enc_cfg.vocab = model::build_vocab(vocab_texts, extra);

  ensemble::PredictionSet preds;
  preds.speaker_ids = test_ids;
  long steps = 0;
  for (std::uint64_t seed : config.seeds) {
    tuning::TrainConfig tc = config.train_config;
    tc.seed = seed;
    const fs::path seed_dir = run_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    std::ofstream events(seed_dir / "events.jsonl");
    const tuning::EventSink sink = [&events](const tuning::EpochStats& s) {
      events << nlohmann::json{{"epoch", s.epoch},
                               {"train_mse", s.train_mse},
                               {"val_mse", s.val_mse}}
                    .dump()
             << '\n';
    };
    tuning::TrainedModel trained = tuning::run_training(
        enc_cfg, config.strategy, tc, train_data, val_data, sink);
    steps += trained.optimizer_steps;
    std::vector<double> row = tuning::predict(trained, test_texts);
    write_file_atomic(seed_dir / "checkpoint.json", trained.to_json().dump());
    nlohmann::json sidecar = trained.to_json();
    sidecar.erase("encoder");  // tensors live in the checkpoint
    sidecar.erase("prompt");
    write_file_atomic(seed_dir / "training.json", sidecar.dump(2));
    write_file_atomic(seed_dir / "predictions.json",
                      nlohmann::json{{"seed", seed},
                                     {"speaker_ids", test_ids},
                                     {"scores", row}}
                          .dump(2));
    preds.seeds.push_back(seed);
    preds.matrix.push_back(std::move(row));
  }

  const metrics::MetricReport report = ensemble::evaluate_ensemble(preds, gold);
  ResultCell cell;
  cell.fingerprint = fp;
  cell.pcc = report.pcc;
  cell.p_value = report.p_value;
  cell.stars = report.stars;
  cell.n = report.n;
  for (const auto& row : preds.matrix)
    cell.per_seed_pcc.push_back(metrics::pearson_correlation(row, gold).r);

  preds.save(run_dir / "predictions.json");
  write_file_atomic(run_dir / "config.json", config.to_json().dump(2));
  write_file_atomic(cell_path, cell.to_json().dump(2));
  return RunOutcome{cell, steps, false};
}

// ---------------------------------------------------------------------
// Results table
// ---------------------------------------------------------------------

std::string ResultsTable::strategy_label(const tuning::TuningStrategy& s) {
  switch (s.kind) {
    case tuning::StrategyKind::fine_tune: return "Fine-tuning";
    case tuning::StrategyKind::manual_prompt: return "Manual";
    default: return "P-tuning " + std::to_string(s.num_virtual_tokens);
  }
}

namespace {

std::string cell_key(const std::string& encoder, const std::string& label,
                     Setting setting, const std::string& source) {
  return encoder + "|" + label + "|" + to_string(setting) + "|" + source;
}

}  // namespace

void ResultsTable::put(const ExperimentConfig& config, ResultCell cell) {
  const Row row{config.encoder_id, strategy_label(config.strategy)};
  const Col col{config.setting, config.transcription_source};
  const auto row_eq = [&](const Row& r) {
    return r.encoder_id == row.encoder_id &&
           r.strategy_label == row.strategy_label;
  };
  if (std::find_if(rows.begin(), rows.end(), row_eq) == rows.end())
    rows.push_back(row);
  const auto col_eq = [&](const Col& c) {
    return c.setting == col.setting && c.source == col.source;
  };
  if (std::find_if(cols.begin(), cols.end(), col_eq) == cols.end())
    cols.push_back(col);
  const std::string key =
      cell_key(row.encoder_id, row.strategy_label, col.setting, col.source);
  if (cells.count(key))
    throw ValidationError("ResultsTable: duplicate cell for " + key);
  cells.emplace(key, std::move(cell));
}

const ResultCell* ResultsTable::find(const Row& row, const Col& col) const {
  const auto it = cells.find(
      cell_key(row.encoder_id, row.strategy_label, col.setting, col.source));
  return it == cells.end() ? nullptr : &it->second;
}

GridOutcome run_grid(std::span<const ExperimentConfig> configs) {
  std::set<std::string> fingerprints;
  for (const ExperimentConfig& c : configs)
    if (!fingerprints.insert(config_fingerprint(c)).second)
      throw ValidationError("run_grid: duplicate config fingerprint");
  GridOutcome out;
  for (const ExperimentConfig& c : configs) {
    try {
      RunOutcome run = run_experiment(c);
      out.steps_performed += run.steps_performed;
      out.table.put(c, std::move(run.cell));
    } catch (const TrainingError& e) {
      ResultCell failed;
      failed.fingerprint = config_fingerprint(c);
      failed.failed = true;
      failed.error = e.what();
      out.table.put(c, std::move(failed));
    }
  }
  return out;
}

std::vector<ExperimentConfig> standard_grid(
    const ExperimentConfig& base, std::span<const std::string> encoder_ids,
    std::span<const std::pair<std::string,
                              std::optional<recognizer::NoiseProfile>>>
        sources) {
  std::vector<tuning::TuningStrategy> strategies;
  {
    tuning::TuningStrategy s;
    s.kind = tuning::StrategyKind::fine_tune;
    strategies.push_back(s);
    s.kind = tuning::StrategyKind::manual_prompt;
    strategies.push_back(s);
    for (int k : {5, 10, 15, 20}) {
      tuning::TuningStrategy p;
      p.kind = tuning::StrategyKind::p_tuning;
      p.num_virtual_tokens = k;
      strategies.push_back(p);
    }
  }
  std::vector<ExperimentConfig> out;
  for (Setting setting : {Setting::full_set, Setting::low_resource}) {
    for (const auto& [source, profile] : sources) {
      for (const std::string& encoder : encoder_ids) {
        for (const tuning::TuningStrategy& strategy : strategies) {
          ExperimentConfig c = base;
          c.setting = setting;
          c.transcription_source = source;
          c.noise_profile = profile;
          c.encoder_id = encoder;
          c.strategy = strategy;
          out.push_back(std::move(c));
        }
      }
    }
  }
  return out;
}

TableFormat table_format_from_string(const std::string& s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "markdown") return TableFormat::markdown;
  throw ValidationError("unknown table format: \"" + s + "\"");
}

namespace {

std::string format_cell(const ResultCell* cell) {
  if (!cell) return "";
  if (cell->failed) return "failed";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", cell->pcc);
  return std::string(buf) + cell->stars;
}

std::vector<ResultsTable::Col> ordered_cols(const ResultsTable& table) {
  std::vector<ResultsTable::Col> cols;
  for (Setting setting : {Setting::full_set, Setting::low_resource})
    for (const ResultsTable::Col& c : table.cols)
      if (c.setting == setting) cols.push_back(c);
  return cols;
}

}  // namespace

std::string render_table(const ResultsTable& table, TableFormat format) {
  if (table.cells.empty()) throw ValidationError("render_table: empty table");
  const std::vector<ResultsTable::Col> cols = ordered_cols(table);
  std::ostringstream out;
  if (format == TableFormat::csv) {
    out << "encoder,strategy";
    for (const auto& c : cols)
      out << ',' << to_string(c.setting) << ' ' << c.source;
    out << '\n';
    for (const auto& row : table.rows) {
      out << row.encoder_id << ',' << row.strategy_label;
      for (const auto& c : cols) out << ',' << format_cell(table.find(row, c));
      out << '\n';
    }
  } else {
    out << "| Encoder | Strategy |";
    for (const auto& c : cols)
      out << ' ' << to_string(c.setting) << ' ' << c.source << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& row : table.rows) {
      out << "| " << row.encoder_id << " | " << row.strategy_label << " |";
      for (const auto& c : cols)
        out << ' ' << format_cell(table.find(row, c)) << " |";
      out << '\n';
    }
  }
  return out.str();
}

void emit_table(const ResultsTable& table, TableFormat format,
                const fs::path& path) {
  write_file_atomic(path, render_table(table, format));
}

}  // namespace asdsev::harness
