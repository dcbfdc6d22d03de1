#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "asdsev/errors.hpp"
#include "asdsev/harness.hpp"
#include "doctest.h"

using namespace asdsev;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("asdsev_harness_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

harness::ExperimentConfig small_config(const fs::path& data_dir,
                                       const fs::path& out_dir) {
  harness::ExperimentConfig config;
  config.encoder_id = "toy-8x1";
  config.strategy.kind = tuning::StrategyKind::p_tuning;
  config.strategy.num_virtual_tokens = 5;
  config.strategy.prompt_encoder_hidden = 16;
  config.seeds = {0, 1};
  config.train_config.epochs = 3;
  config.train_config.base_lr = 1e-3;
  config.train_config.head_lr = 1e-2;
  config.encoder_overrides.max_len = 96;
  config.paths.plm_train_utterances = data_dir / "plm_train_utterances.jsonl";
  config.paths.plm_train_speakers = data_dir / "plm_train_speakers.jsonl";
  config.paths.plm_test_utterances = data_dir / "plm_test_utterances.jsonl";
  config.paths.plm_test_speakers = data_dir / "plm_test_speakers.jsonl";
  config.paths.out_dir = out_dir;
  return config;
}

void write_small_corpus(const fs::path& dir) {
  harness::SynthSpec spec;
  spec.train_speakers = 12;
  spec.test_speakers = 6;
  spec.asr_test_speakers = 4;
  spec.utterances_per_speaker = 2;
  spec.seed = 9;
  harness::save_synthetic_corpus(harness::generate_synthetic_corpus(spec), dir);
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic per seed") {
  harness::SynthSpec spec;
  spec.train_speakers = 15;
  spec.test_speakers = 6;
  spec.seed = 3;
  const auto a = harness::generate_synthetic_corpus(spec);
  const auto b = harness::generate_synthetic_corpus(spec);
  REQUIRE(a.plm_train.utterances.size() == b.plm_train.utterances.size());
  for (std::size_t i = 0; i < a.plm_train.utterances.size(); ++i)
    CHECK(a.plm_train.utterances[i].transcript ==
          b.plm_train.utterances[i].transcript);
  spec.seed = 4;
  const auto c = harness::generate_synthetic_corpus(spec);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.plm_train.utterances.size(); ++i)
    any_diff |= a.plm_train.utterances[i].transcript !=
                c.plm_train.utterances[i].transcript;
  CHECK(any_diff);
}

TEST_CASE("synthetic severity is affine in planted marker density") {
  harness::SynthSpec spec;
  spec.train_speakers = 100;
  spec.sigma = 0.1;
  spec.seed = 17;
  const auto corpus_out = harness::generate_synthetic_corpus(spec);
  std::vector<double> density, severity;
  for (const auto& [id, rec] : corpus_out.plm_train.speakers) {
    density.push_back(corpus_out.planted_density.at(id));
    severity.push_back(rec.severity_score);
  }
  REQUIRE(density.size() == 100);
  const auto res = metrics::pearson_correlation(density, severity);
  CHECK(res.r >= 0.95);

  // TD-like speakers carry no markers and severity exactly zero
  int td_count = 0;
  for (const auto& [id, rec] : corpus_out.plm_train.speakers) {
    if (rec.cohort == corpus::Cohort::TD) {
      ++td_count;
      CHECK(rec.severity_score == 0.0);
      CHECK(corpus_out.planted_density.at(id) == 0.0);
    }
  }
  CHECK(td_count == 27);  // round(100 * 32/119)
}

TEST_CASE("synthetic test manifest keeps the clinical TD share") {
  harness::SynthSpec spec;
  spec.train_speakers = 30;
  spec.test_speakers = 24;
  spec.seed = 2;
  const auto corpus_out = harness::generate_synthetic_corpus(spec);
  int td = 0;
  for (const auto& [id, rec] : corpus_out.plm_test.speakers)
    td += rec.cohort == corpus::Cohort::TD;
  CHECK(td == 8);  // 8 of 24
  CHECK(corpus_out.plm_test.speaker_count() == 24);
}

TEST_CASE("config fingerprint is stable and location independent") {
  TempDir tmp;
  auto config = small_config(tmp.path, tmp.path / "runs");
  const std::string fp = harness::config_fingerprint(config);
  CHECK(fp == harness::config_fingerprint(config));
  CHECK(fp.size() == 16);

  auto moved = config;
  moved.paths.out_dir = tmp.path / "elsewhere";
  CHECK(harness::config_fingerprint(moved) == fp);

  auto changed = config;
  changed.strategy.num_virtual_tokens = 10;
  CHECK(harness::config_fingerprint(changed) != fp);
  auto reseeded = config;
  reseeded.split_seed = 8;
  CHECK(harness::config_fingerprint(reseeded) != fp);
}

TEST_CASE("experiment config json round trip") {
  TempDir tmp;
  auto config = small_config(tmp.path, tmp.path / "runs");
  config.transcription_source = "recognizer:noise-a";
  recognizer::NoiseProfile profile;
  profile.target_ser = 0.25;
  profile.seed = 5;
  config.noise_profile = profile;
  const auto back = harness::ExperimentConfig::from_json(config.to_json());
  CHECK(harness::config_fingerprint(back) ==
        harness::config_fingerprint(config));
  CHECK(back.recognizer_name() == "noise-a");
  CHECK(back.noise_profile->target_ser == 0.25);
}

TEST_CASE("encoder registry parses toy ids") {
  harness::EncoderOverrides none;
  const auto cfg = harness::encoder_config_for_id("toy-32x1", none);
  CHECK(cfg.model_dim == 32);
  CHECK(cfg.layers == 1);
  CHECK(cfg.heads == 4);
  CHECK(cfg.feedforward_dim == 64);
  const auto dflt = harness::encoder_config_for_id("toy", none);
  CHECK(dflt.model_dim == 64);
  CHECK(dflt.layers == 2);
  CHECK_THROWS_AS(harness::encoder_config_for_id("bert-base", none),
                  ValidationError);

  harness::EncoderOverrides ov;
  ov.max_len = 128;
  ov.heads = 2;
  const auto with_ov = harness::encoder_config_for_id("toy-32x1", ov);
  CHECK(with_ov.max_len == 128);
  CHECK(with_ov.heads == 2);
}

TEST_CASE("run_experiment persists a full run directory and resumes") {
  TempDir tmp;
  write_small_corpus(tmp.path);
  const auto config = small_config(tmp.path, tmp.path / "runs");

  const auto first = harness::run_experiment(config);
  CHECK(!first.resumed);
  CHECK(first.steps_performed > 0);
  CHECK(first.cell.per_seed_pcc.size() == 2);
  CHECK(first.cell.n == 6);

  const std::string fp = harness::config_fingerprint(config);
  const fs::path run_dir = tmp.path / "runs" / fp;
  CHECK(fs::exists(run_dir / "config.json"));
  CHECK(fs::exists(run_dir / "cell.json"));
  CHECK(fs::exists(run_dir / "predictions.json"));
  CHECK(fs::exists(run_dir / "validation_plan.json"));
  for (const std::string seed : {"0", "1"}) {
    CHECK(fs::exists(run_dir / ("seed_" + seed) / "checkpoint.json"));
    CHECK(fs::exists(run_dir / ("seed_" + seed) / "predictions.json"));
    CHECK(fs::exists(run_dir / ("seed_" + seed) / "events.jsonl"));
  }

  // resume: no training steps, identical cell
  const auto second = harness::run_experiment(config);
  CHECK(second.resumed);
  CHECK(second.steps_performed == 0);
  CHECK(second.cell.pcc == first.cell.pcc);
}

TEST_CASE("identical configs reproduce bitwise-identical predictions") {
  TempDir tmp;
  write_small_corpus(tmp.path);
  auto config_a = small_config(tmp.path, tmp.path / "runs_a");
  auto config_b = small_config(tmp.path, tmp.path / "runs_b");
  const auto a = harness::run_experiment(config_a);
  const auto b = harness::run_experiment(config_b);
  CHECK(!a.resumed);
  CHECK(!b.resumed);
  const std::string fp = harness::config_fingerprint(config_a);
  CHECK(slurp(tmp.path / "runs_a" / fp / "predictions.json") ==
        slurp(tmp.path / "runs_b" / fp / "predictions.json"));
  CHECK(a.cell.pcc == b.cell.pcc);
}

TEST_CASE("low resource runs train on a fifth of the full speaker pool") {
  TempDir tmp;
  write_small_corpus(tmp.path);  // 12 train speakers
  auto config = small_config(tmp.path, tmp.path / "runs");
  config.setting = harness::Setting::low_resource;
  config.train_config.epochs = 2;
  const auto outcome = harness::run_experiment(config);
  CHECK(!outcome.cell.failed);

  const std::string fp = harness::config_fingerprint(config);
  const auto selection = corpus::SplitPlan::load(
      tmp.path / "runs" / fp / "low_resource_plan.json");
  CHECK(selection.low_resource_ids.size() == 2);  // round(0.2 * 12)
  const auto vplan = corpus::SplitPlan::load(
      tmp.path / "runs" / fp / "validation_plan.json");
  CHECK(vplan.train_ids.size() + vplan.validation_ids.size() == 2);
}

TEST_CASE("disjointness guard aborts a contaminated experiment") {
  TempDir tmp;
  write_small_corpus(tmp.path);
  // fabricate an asr_train manifest that reuses a plm_test speaker
  const auto plm_test = corpus::load_manifest(
      tmp.path / "plm_test_utterances.jsonl",
      tmp.path / "plm_test_speakers.jsonl", corpus::ManifestRole::plm_test);
  corpus::Manifest contaminated;
  contaminated.role = corpus::ManifestRole::asr_train;
  contaminated.speakers = plm_test.speakers;
  contaminated.utterances = plm_test.utterances;
  corpus::save_manifest(contaminated, tmp.path / "asr_train_utterances.jsonl",
                        tmp.path / "asr_train_speakers.jsonl");

  auto config = small_config(tmp.path, tmp.path / "runs");
  config.paths.asr_train_utterances = tmp.path / "asr_train_utterances.jsonl";
  config.paths.asr_train_speakers = tmp.path / "asr_train_speakers.jsonl";
  CHECK_THROWS_AS(harness::run_experiment(config), ValidationError);
}

TEST_CASE("recognizer-sourced experiments corrupt both train and test text") {
  TempDir tmp;
  write_small_corpus(tmp.path);
  auto config = small_config(tmp.path, tmp.path / "runs");
  config.transcription_source = "recognizer:noise-sim";
  recognizer::NoiseProfile profile;
  profile.target_ser = 0.3;
  profile.seed = 21;
  config.noise_profile = profile;
  const auto outcome = harness::run_experiment(config);
  CHECK(!outcome.cell.failed);
  CHECK(outcome.cell.n == 6);

  // missing profile and hypotheses: configuration error
  auto broken = small_config(tmp.path, tmp.path / "runs2");
  broken.transcription_source = "recognizer:ghost";
  CHECK_THROWS_AS(harness::run_experiment(broken), ValidationError);
}

TEST_CASE("grid runs every distinct config and resumes completed cells") {
  TempDir tmp;
  write_small_corpus(tmp.path);
  auto base = small_config(tmp.path, tmp.path / "runs");
  base.train_config.epochs = 2;

  std::vector<harness::ExperimentConfig> configs;
  configs.push_back(base);
  auto second = base;
  second.strategy = tuning::TuningStrategy{};  // fine_tune defaults
  configs.push_back(second);

  const auto first_pass = harness::run_grid(configs);
  CHECK(first_pass.table.cell_count() == 2);
  CHECK(first_pass.steps_performed > 0);

  const auto resumed = harness::run_grid(configs);
  CHECK(resumed.steps_performed == 0);  // everything cached

  // deleting one cell recomputes exactly that cell
  const std::string fp = harness::config_fingerprint(second);
  fs::remove(tmp.path / "runs" / fp / "cell.json");
  const auto partial = harness::run_grid(configs);
  CHECK(partial.steps_performed > 0);
  CHECK(partial.steps_performed < first_pass.steps_performed);

  std::vector<harness::ExperimentConfig> dup{base, base};
  CHECK_THROWS_AS(harness::run_grid(dup), ValidationError);

  const std::vector<harness::ExperimentConfig> none;
  CHECK(harness::run_grid(none).table.cell_count() == 0);
}

TEST_CASE("results table renders the published layout") {
  TempDir tmp;
  auto base = small_config(tmp.path, tmp.path / "runs");

  const std::vector<std::string> encoders{"toy-32x1", "toy-64x2", "toy-48x2"};
  recognizer::NoiseProfile keep;
  keep.target_ser = 0.25;
  recognizer::NoiseProfile drop = keep;
  drop.remove_disfluencies = true;
  drop.disfluency_markers = {"어"};
  const std::vector<std::pair<std::string,
                              std::optional<recognizer::NoiseProfile>>>
      sources{{"recognizer:wav2vec2-like", keep},
              {"recognizer:whisper-like", drop},
              {"human", std::nullopt}};
  const auto configs = harness::standard_grid(base, encoders, sources);
  CHECK(configs.size() == 108);  // 3 encoders x 6 rows x 3 sources x 2 settings

  harness::ResultsTable table;
  int i = 0;
  for (const auto& c : configs) {
    harness::ResultCell cell;
    cell.fingerprint = harness::config_fingerprint(c);
    cell.pcc = (i % 2 ? -1 : 1) * (0.1 + 0.005 * i);
    cell.p_value = 0.04;
    cell.stars = "*";
    cell.n = 24;
    table.put(c, cell);
    ++i;
  }
  CHECK(table.cell_count() == 108);
  CHECK(table.rows.size() == 18);  // 3 encoders x 6 strategy rows
  CHECK(table.cols.size() == 6);   // 2 settings x 3 sources

  const std::string csv = harness::render_table(table, harness::TableFormat::csv);
  const std::string md =
      harness::render_table(table, harness::TableFormat::markdown);
  CHECK(csv.find("Fine-tuning") != std::string::npos);
  CHECK(csv.find("P-tuning 20") != std::string::npos);
  CHECK(md.find("| Encoder | Strategy |") != std::string::npos);

  // identical numeric content in both formats
  for (const auto& [key, cell] : table.cells) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", cell.pcc);
    const std::string rendered = std::string(buf) + cell.stars;
    CHECK(csv.find(rendered) != std::string::npos);
    CHECK(md.find(rendered) != std::string::npos);
  }

  harness::emit_table(table, harness::TableFormat::csv, tmp.path / "t.csv");
  CHECK(slurp(tmp.path / "t.csv") == csv);
}

TEST_CASE("table cells format correlations with stars and sign") {
  TempDir tmp;
  auto base = small_config(tmp.path, tmp.path / "runs");
  base.transcription_source = "human";

  harness::ResultsTable table;
  harness::ResultCell cell;
  cell.pcc = 0.6566;
  cell.p_value = 0.0005;
  cell.stars = metrics::significance_stars(cell.p_value);
  cell.n = 24;
  table.put(base, cell);

  auto negative = base;
  negative.encoder_id = "toy-32x1";
  harness::ResultCell neg;
  neg.pcc = -0.1992;
  neg.p_value = 0.4;
  neg.n = 24;
  table.put(negative, neg);

  const std::string csv = harness::render_table(table, harness::TableFormat::csv);
  CHECK(csv.find("0.6566***") != std::string::npos);
  CHECK(csv.find("-0.1992") != std::string::npos);

  harness::ResultsTable empty;
  CHECK_THROWS_AS(harness::render_table(empty, harness::TableFormat::csv),
                  ValidationError);
}
