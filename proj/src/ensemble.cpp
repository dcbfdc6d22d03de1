#include "asdsev/ensemble.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "asdsev/errors.hpp"

namespace asdsev::ensemble {

void PredictionSet::validate() const {
  if (seeds.empty()) throw ValidationError("PredictionSet: no seed rows");
  if (matrix.size() != seeds.size())
    throw ValidationError("PredictionSet: matrix/seed row count mismatch");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size())
    throw ValidationError("PredictionSet: duplicate seeds");
  for (const auto& row : matrix)
    if (row.size() != speaker_ids.size())
      throw ValidationError("PredictionSet: ragged prediction matrix");
}

nlohmann::json PredictionSet::to_json() const {
  return nlohmann::json{
      {"seeds", seeds}, {"speaker_ids", speaker_ids}, {"matrix", matrix}};
}

PredictionSet PredictionSet::from_json(const nlohmann::json& j) {
  PredictionSet p;
  p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  p.speaker_ids = j.at("speaker_ids").get<std::vector<std::string>>();
  p.matrix = j.at("matrix").get<std::vector<std::vector<double>>>();
  p.validate();
  return p;
}

void PredictionSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions: " + path.string());
  out << to_json().dump(2) << '\n';
}

PredictionSet PredictionSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions: " + path.string());
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::mean: return "mean";
    case Aggregation::median: return "median";
    default: return "trimmed_mean";
  }
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "median") return Aggregation::median;
  if (s == "trimmed_mean") return Aggregation::trimmed_mean;
  throw ValidationError("unknown aggregation: \"" + s + "\"");
}

std::vector<double> seed_ensemble(const PredictionSet& preds,
                                  Aggregation aggregation) {
  preds.validate();
  const std::size_t n_seeds = preds.seeds.size();
  const std::size_t n_speakers = preds.speaker_ids.size();
  std::vector<double> out(n_speakers, 0.0);
  std::vector<double> column(n_seeds);
  for (std::size_t s = 0; s < n_speakers; ++s) {
    for (std::size_t r = 0; r < n_seeds; ++r) column[r] = preds.matrix[r][s];
    switch (aggregation) {
      case Aggregation::mean: {
        double sum = 0.0;
        for (double v : column) sum += v;
        out[s] = sum / static_cast<double>(n_seeds);
        break;
      }
      case Aggregation::median: {
        std::sort(column.begin(), column.end());
        const std::size_t mid = n_seeds / 2;
        out[s] = n_seeds % 2 ? column[mid]
                             : 0.5 * (column[mid - 1] + column[mid]);
        break;
      }
      case Aggregation::trimmed_mean: {
        std::sort(column.begin(), column.end());
        // drop one value at each end when there are enough rows
        const std::size_t trim = n_seeds >= 3 ? 1 : 0;
        double sum = 0.0;
        for (std::size_t r = trim; r < n_seeds - trim; ++r) sum += column[r];
        out[s] = sum / static_cast<double>(n_seeds - 2 * trim);
        break;
      }
    }
  }
  return out;
}

metrics::MetricReport evaluate_ensemble(const PredictionSet& preds,
                                        std::span<const double> gold,
                                        Aggregation aggregation) {
  if (gold.size() != preds.speaker_ids.size())
    throw ValidationError("evaluate_ensemble: gold/speaker alignment mismatch");
  const std::vector<double> combined = seed_ensemble(preds, aggregation);
  const metrics::PearsonResult pr = metrics::pearson_correlation(combined, gold);
  metrics::MetricReport report;
  report.pcc = pr.r;
  report.p_value = pr.p_value;
  report.stars = metrics::significance_stars(pr.p_value);
  report.n = pr.n;
  return report;
}

}  // namespace asdsev::ensemble
