#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asdsev/corpus.hpp"
#include "asdsev/ensemble.hpp"
#include "asdsev/recognizer.hpp"
#include "asdsev/tuning.hpp"

namespace asdsev::harness {

enum class Setting { full_set, low_resource };

std::string to_string(Setting s);
Setting setting_from_string(const std::string& s);

struct PathsConfig {
  std::filesystem::path plm_train_utterances;
  std::filesystem::path plm_train_speakers;
  std::filesystem::path plm_test_utterances;
  std::filesystem::path plm_test_speakers;
  std::filesystem::path asr_train_utterances;  // optional, enables the
  std::filesystem::path asr_train_speakers;    // disjointness guard
  std::filesystem::path hypotheses;            // optional, replay sources
  std::filesystem::path out_dir = "runs";

  nlohmann::json to_json() const;
  static PathsConfig from_json(const nlohmann::json& j);
};

struct EncoderOverrides {
  std::optional<int> model_dim, layers, heads, max_len, feedforward_dim;

  nlohmann::json to_json() const;
  static EncoderOverrides from_json(const nlohmann::json& j);
  bool empty() const;
};

struct ExperimentConfig {
  std::string transcription_source = "human";  // or "recognizer:<name>"
  std::string encoder_id = "toy-64x2";
  tuning::TuningStrategy strategy;
  Setting setting = Setting::full_set;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  tuning::TrainConfig train_config;  // seed field is overridden per seed
  std::uint64_t split_seed = 7;
  std::optional<recognizer::NoiseProfile> noise_profile;
  EncoderOverrides encoder_overrides;
  PathsConfig paths;

  void validate() const;
  bool is_recognizer_source() const;
  std::string recognizer_name() const;  // part after "recognizer:"

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Stable hash of the canonical (sorted-key) config serialization,
// excluding output location. Names the run directory.
std::string config_fingerprint(const ExperimentConfig& config);

// Encoder ids follow "toy-<dim>x<layers>" ("toy" = toy-64x2); heads and
// feedforward width take defaults unless overridden.
model::EncoderConfig encoder_config_for_id(const std::string& encoder_id,
                                           const EncoderOverrides& overrides);

// ---------------------------------------------------------------------
// Synthetic corpus: severity is affine in the planted density of
// disfluency-marker tokens, so a recognizer that strips disfluencies
// destroys exactly the signal the model needs.
// ---------------------------------------------------------------------

const std::vector<std::string>& disfluency_markers();

struct SynthSpec {
  int train_speakers = 100;
  int test_speakers = 24;
  int asr_test_speakers = 10;
  int utterances_per_speaker = 4;
  double sigma = 0.1;           // rating noise
  double severity_slope = 10.0;  // severity = slope * marker density + noise
  double min_density = 0.05;
  double max_density = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct SyntheticCorpus {
  corpus::Manifest plm_train;  // TD:ASD ratio follows the clinical counts
  corpus::Manifest plm_test;
  corpus::Manifest asr_test;
  std::map<std::string, double> planted_density;  // diagnostics
};

SyntheticCorpus generate_synthetic_corpus(const SynthSpec& spec);
SyntheticCorpus generate_synthetic_corpus(int n_speakers,
                                          int utterances_per_speaker,
                                          std::uint64_t seed);

void save_synthetic_corpus(const SyntheticCorpus& corpus,
                           const std::filesystem::path& dir);

// ---------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------

struct ResultCell {
  std::string fingerprint;
  double pcc = 0.0;
  double p_value = 1.0;
  std::string stars;
  std::size_t n = 0;
  std::vector<double> per_seed_pcc;
  bool failed = false;
  std::string error;

  nlohmann::json to_json() const;
  static ResultCell from_json(const nlohmann::json& j);
};

struct RunOutcome {
  ResultCell cell;
  long steps_performed = 0;
  bool resumed = false;
};

// Full protocol for one config: disjointness guard, transcript
// resolution, splits, one training per seed, ensemble, persisted run
// directory. A completed run (cell.json present) is returned without
// performing any training step.
RunOutcome run_experiment(const ExperimentConfig& config);

struct ResultsTable {
  struct Row {
    std::string encoder_id;
    std::string strategy_label;
  };
  struct Col {
    Setting setting;
    std::string source;
  };

  std::vector<Row> rows;  // first-insertion order
  std::vector<Col> cols;  // full_set columns before low_resource
  std::map<std::string, ResultCell> cells;

  static std::string strategy_label(const tuning::TuningStrategy& strategy);
  void put(const ExperimentConfig& config, ResultCell cell);
  const ResultCell* find(const Row& row, const Col& col) const;
  std::size_t cell_count() const { return cells.size(); }
};

struct GridOutcome {
  ResultsTable table;
  long steps_performed = 0;
};

// One cell per config; training failures are recorded in the cell and the
// grid continues. Validation failures (e.g. the disjointness guard)
// propagate. Completed cells are skipped by fingerprint.
GridOutcome run_grid(std::span<const ExperimentConfig> configs);

// The canonical result-table row/column structure: for every setting and
// transcription source, each encoder gets rows Fine-tuning, Manual and
// P-tuning 5/10/15/20.
std::vector<ExperimentConfig> standard_grid(
    const ExperimentConfig& base, std::span<const std::string> encoder_ids,
    std::span<const std::pair<std::string,
                              std::optional<recognizer::NoiseProfile>>>
        sources);

enum class TableFormat { csv, markdown };

TableFormat table_format_from_string(const std::string& s);
std::string render_table(const ResultsTable& table, TableFormat format);
void emit_table(const ResultsTable& table, TableFormat format,
                const std::filesystem::path& path);

// write-then-rename
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

}  // namespace asdsev::harness
