#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "asdsev/metrics.hpp"

namespace asdsev::ensemble {

// Per-seed prediction matrix over a fixed speaker order.
struct PredictionSet {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> speaker_ids;
  std::vector<std::vector<double>> matrix;  // seeds x speakers

  void validate() const;  // rectangular, unique seeds
  nlohmann::json to_json() const;
  static PredictionSet from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static PredictionSet load(const std::filesystem::path& path);
};

enum class Aggregation { mean, median, trimmed_mean };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

// One score per speaker, aggregated over seeds. Default is the
// arithmetic mean.
std::vector<double> seed_ensemble(const PredictionSet& preds,
                                  Aggregation aggregation = Aggregation::mean);

// Pearson correlation of the ensembled scores against gold severity.
metrics::MetricReport evaluate_ensemble(
    const PredictionSet& preds, std::span<const double> gold,
    Aggregation aggregation = Aggregation::mean);

}  // namespace asdsev::ensemble
