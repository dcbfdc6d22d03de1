// asdsev — severity-from-speech experiment harness CLI.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "asdsev/errors.hpp"
#include "asdsev/harness.hpp"

namespace {

using namespace asdsev;

std::vector<harness::ExperimentConfig> load_grid_configs(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("grid config " + path + ": " + e.what());
  }
  const nlohmann::json& list = j.is_array() ? j : j.at("configs");
  std::vector<harness::ExperimentConfig> configs;
  for (const nlohmann::json& cj : list)
    configs.push_back(harness::ExperimentConfig::from_json(cj));
  return configs;
}

void print_cell(const harness::ResultCell& cell, bool resumed) {
  std::cout << (resumed ? "[resumed] " : "") << "pcc=" << cell.pcc
            << cell.stars << " p=" << cell.p_value << " n=" << cell.n << '\n';
}

int run_synth(const std::string& out_dir, const harness::SynthSpec& spec) {
  harness::SyntheticCorpus corpus_out = harness::generate_synthetic_corpus(spec);
  harness::save_synthetic_corpus(corpus_out, out_dir);
  std::cout << "wrote synthetic corpus to " << out_dir << " ("
            << corpus_out.plm_train.speaker_count() << " train / "
            << corpus_out.plm_test.speaker_count() << " test / "
            << corpus_out.asr_test.speaker_count() << " asr speakers)\n";
  return 0;
}

int run_prepare(const std::string& config_path, const std::string& out_dir) {
  harness::ExperimentConfig config =
      harness::ExperimentConfig::load(config_path);
  if (!out_dir.empty()) config.paths.out_dir = out_dir;
  corpus::Manifest plm_train = corpus::load_manifest(
      config.paths.plm_train_utterances, config.paths.plm_train_speakers,
      corpus::ManifestRole::plm_train);
  corpus::Manifest plm_test = corpus::load_manifest(
      config.paths.plm_test_utterances, config.paths.plm_test_speakers,
      corpus::ManifestRole::plm_test);
  if (!config.paths.asr_train_utterances.empty()) {
    corpus::Manifest asr_train = corpus::load_manifest(
        config.paths.asr_train_utterances, config.paths.asr_train_speakers,
        corpus::ManifestRole::asr_train);
    const auto shared = corpus::check_disjointness(asr_train, plm_test);
    if (!shared.empty()) {
      std::string msg = "disjointness violation:";
      for (const std::string& id : shared) msg += " " + id;
      throw ValidationError(msg);
    }
  }
  // same composition the runner uses: validation over the full set, and
  // the low-resource pool sampled from the full speaker set
  const corpus::SplitPlan vplan =
      corpus::make_validation_split(plm_train, 0.2, config.split_seed);
  const corpus::SplitPlan selection = corpus::make_low_resource(
      corpus::full_train_plan(plm_train), config.split_seed);
  std::filesystem::create_directories(config.paths.out_dir);
  vplan.save(config.paths.out_dir / "validation_plan.json");
  selection.save(config.paths.out_dir / "low_resource_plan.json");
  std::cout << "manifests valid; " << plm_train.speaker_count()
            << " train speakers (" << vplan.validation_ids.size()
            << " reserved for validation; low-resource pool "
            << selection.low_resource_ids.size() << "), "
            << plm_test.speaker_count() << " test speakers\n";
  return 0;
}

int run_transcribe(const std::string& utterances, const std::string& speakers,
                   const std::string& role, const std::string& recognizer_kind,
                   const std::string& profile_path,
                   const std::string& hypotheses_in, const std::string& out,
                   std::uint64_t seed, bool seed_given) {
  corpus::Manifest manifest = corpus::load_manifest(
      utterances, speakers, corpus::role_from_string(role));
  std::unique_ptr<recognizer::Recognizer> rec;
  if (recognizer_kind == "noise-sim") {
    if (profile_path.empty())
      throw ValidationError("noise-sim transcription needs --profile");
    std::ifstream in(profile_path);
    if (!in) throw IoError("cannot open noise profile: " + profile_path);
    nlohmann::json j;
    in >> j;
    recognizer::NoiseProfile profile = recognizer::NoiseProfile::from_json(j);
    if (seed_given) profile.seed = seed;
    rec = std::make_unique<recognizer::NoiseSimRecognizer>(
        recognizer::NoiseSimRecognizer::for_manifest(profile, manifest));
  } else if (recognizer_kind == "replay") {
    if (hypotheses_in.empty())
      throw ValidationError("replay transcription needs --hypotheses");
    rec = std::make_unique<recognizer::ReplayRecognizer>(
        recognizer::ReplayRecognizer::from_file(hypotheses_in));
  } else {
    throw ValidationError("unknown recognizer \"" + recognizer_kind +
                          "\" (expected noise-sim or replay)");
  }
  const auto hyps = recognizer::transcribe_manifest(manifest, *rec);
  recognizer::save_hypotheses(hyps, out);
  std::cout << "wrote " << hyps.size() << " hypotheses to " << out << '\n';
  return 0;
}

int run_asr_eval(const std::string& utterances, const std::string& speakers,
                 const std::string& hypotheses, const std::string& out) {
  corpus::Manifest manifest = corpus::load_manifest(
      utterances, speakers, corpus::ManifestRole::asr_test);
  recognizer::ReplayRecognizer rec =
      recognizer::ReplayRecognizer::from_file(hypotheses);
  metrics::MetricReport report = recognizer::evaluate_recognizer(manifest, rec);
  std::cout << "corpus SER " << report.ser << " over " << report.n
            << " utterances\n";
  if (!out.empty())
    harness::write_file_atomic(out, report.to_json().dump(2) + "\n");
  return 0;
}

int run_train(const std::string& config_path, const std::string& out_dir,
              std::uint64_t seed, bool seed_given) {
  harness::ExperimentConfig config =
      harness::ExperimentConfig::load(config_path);
  if (!out_dir.empty()) config.paths.out_dir = out_dir;
  if (seed_given) config.seeds = {seed};
  harness::RunOutcome outcome = harness::run_experiment(config);
  print_cell(outcome.cell, outcome.resumed);
  return 0;
}

int run_grid_cmd(const std::string& config_path, const std::string& out_dir,
                 const std::string& report_path, const std::string& format) {
  std::vector<harness::ExperimentConfig> configs =
      load_grid_configs(config_path);
  if (!out_dir.empty())
    for (harness::ExperimentConfig& c : configs) c.paths.out_dir = out_dir;
  harness::GridOutcome outcome = harness::run_grid(configs);
  std::size_t failed = 0;
  for (const auto& [key, cell] : outcome.table.cells)
    if (cell.failed) ++failed;
  std::cout << outcome.table.cell_count() << " cells (" << failed
            << " failed), " << outcome.steps_performed
            << " optimizer steps\n";
  if (!report_path.empty())
    harness::emit_table(outcome.table,
                        harness::table_format_from_string(format), report_path);
  return 0;
}

int run_report(const std::string& config_path, const std::string& out_path,
               const std::string& format, const std::string& out_dir) {
  std::vector<harness::ExperimentConfig> configs =
      load_grid_configs(config_path);
  harness::ResultsTable table;
  for (harness::ExperimentConfig& config : configs) {
    if (!out_dir.empty()) config.paths.out_dir = out_dir;
    const std::filesystem::path cell_path =
        config.paths.out_dir / harness::config_fingerprint(config) /
        "cell.json";
    harness::ResultCell cell;
    if (std::filesystem::exists(cell_path)) {
      std::ifstream in(cell_path);
      nlohmann::json j;
      in >> j;
      cell = harness::ResultCell::from_json(j);
    } else {
      cell.failed = true;
      cell.error = "cell not computed";
    }
    table.put(config, std::move(cell));
  }
  harness::emit_table(table, harness::table_format_from_string(format),
                      out_path);
  std::cout << "wrote " << table.cell_count() << "-cell table to " << out_path
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Severity-score prediction from child speech transcripts: recognizer "
      "evaluation, PLM tuning strategies, seed ensembling and reporting"};
  app.require_subcommand(1);

  std::string config_path, out_path, format = "csv";
  std::uint64_t seed = 0;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  harness::SynthSpec spec;
  std::string synth_out = "data";
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--train-speakers", spec.train_speakers);
  synth->add_option("--test-speakers", spec.test_speakers);
  synth->add_option("--asr-speakers", spec.asr_test_speakers);
  synth->add_option("--utterances", spec.utterances_per_speaker,
                    "utterances per speaker");
  synth->add_option("--sigma", spec.sigma, "rating noise");
  synth->add_option("--seed", spec.seed);

  // prepare
  auto* prepare =
      app.add_subcommand("prepare", "validate manifests and build splits");
  prepare->add_option("--config", config_path)->required();
  prepare->add_option("--out", out_path);

  // transcribe
  auto* transcribe = app.add_subcommand(
      "transcribe", "run a recognizer over a manifest, emit hypotheses");
  std::string tr_utts, tr_speakers, tr_role = "asr_test";
  std::string tr_recognizer = "noise-sim", tr_profile, tr_hyps_in;
  std::string tr_out = "hypotheses.jsonl";
  bool tr_seed_given = false;
  transcribe->add_option("--utterances", tr_utts)->required();
  transcribe->add_option("--speakers", tr_speakers)->required();
  transcribe->add_option("--role", tr_role);
  transcribe->add_option("--recognizer", tr_recognizer,
                         "noise-sim or replay");
  transcribe->add_option("--profile", tr_profile, "noise profile JSON");
  transcribe->add_option("--hypotheses", tr_hyps_in,
                         "input hypotheses (replay)");
  transcribe->add_option("--out", tr_out);
  transcribe->add_option("--seed", seed)->each([&](const std::string&) {
    tr_seed_given = true;
  });

  // asr-eval
  auto* asr_eval = app.add_subcommand("asr-eval", "corpus SER of hypotheses");
  std::string ae_utts, ae_speakers, ae_hyps, ae_out;
  asr_eval->add_option("--utterances", ae_utts)->required();
  asr_eval->add_option("--speakers", ae_speakers)->required();
  asr_eval->add_option("--hypotheses", ae_hyps)->required();
  asr_eval->add_option("--out", ae_out, "optional JSON report");

  // train
  auto* train = app.add_subcommand("train", "run a single experiment config");
  bool train_seed_given = false;
  train->add_option("--config", config_path)->required();
  train->add_option("--out", out_path);
  train->add_option("--seed", seed, "restrict to one seed")
      ->each([&](const std::string&) { train_seed_given = true; });

  // grid
  auto* grid = app.add_subcommand("grid", "run a list of experiment configs");
  std::string grid_report;
  grid->add_option("--config", config_path)->required();
  grid->add_option("--out", out_path);
  grid->add_option("--report", grid_report, "emit table after the grid");
  grid->add_option("--format", format, "csv or markdown");

  // report
  auto* report = app.add_subcommand("report", "emit the results table");
  std::string report_out = "results.csv";
  report->add_option("--config", config_path)->required();
  report->add_option("--out", report_out, "output file");
  report->add_option("--format", format, "csv or markdown");
  std::string report_runs;
  report->add_option("--runs", report_runs, "override run directory");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return run_synth(synth_out, spec);
    if (prepare->parsed()) return run_prepare(config_path, out_path);
    if (transcribe->parsed())
      return run_transcribe(tr_utts, tr_speakers, tr_role, tr_recognizer,
                            tr_profile, tr_hyps_in, tr_out, seed,
                            tr_seed_given);
    if (asr_eval->parsed())
      return run_asr_eval(ae_utts, ae_speakers, ae_hyps, ae_out);
    if (train->parsed())
      return run_train(config_path, out_path, seed, train_seed_given);
    if (grid->parsed())
      return run_grid_cmd(config_path, out_path, grid_report, format);
    if (report->parsed())
      return run_report(config_path, report_out, format, report_runs);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const asdsev::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const asdsev::TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return 2;
  } catch (const asdsev::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
