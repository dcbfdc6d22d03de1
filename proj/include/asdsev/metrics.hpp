#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace asdsev::metrics {

// Syllable tokens of normalized text: one token per Hangul syllable code
// point, one token per maximal run of other non-space characters.
std::vector<std::string> syllabify(std::string_view normalized_text);

// Unit-cost Levenshtein distance between token sequences.
std::size_t edit_distance(std::span<const std::string> ref,
                          std::span<const std::string> hyp);

// edit_distance(syllables(ref), syllables(hyp)) / |syllables(ref)|.
// Inputs are normalized internally (normalization is idempotent).
double syllable_error_rate(std::string_view reference,
                           std::string_view hypothesis);

// Length-weighted pooling: sum of distances / sum of reference lengths.
double corpus_ser(std::span<const std::pair<std::string, std::string>> pairs);

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// Sample Pearson r with two-tailed significance from the t distribution
// with n-2 degrees of freedom. Requires n >= 3 and nonzero variance.
PearsonResult pearson_correlation(std::span<const double> pred,
                                  std::span<const double> gold);

// Two-tailed p for Student's t via the regularized incomplete beta.
double student_t_two_tailed_p(double t, double df);

// "***" p<0.001, "**" p<0.01, "*" p<0.05, "" otherwise.
std::string significance_stars(double p_value);

struct MetricReport {
  double ser = 0.0;
  double pcc = 0.0;
  double p_value = 1.0;
  std::string stars;
  std::size_t n = 0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

}  // namespace asdsev::metrics
