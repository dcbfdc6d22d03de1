#include "asdsev/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asdsev/errors.hpp"
#include "asdsev/text.hpp"

namespace asdsev::metrics {

std::vector<std::string> syllabify(std::string_view normalized_text) {
  std::u32string cps = text::decode_utf8(normalized_text);
  std::vector<std::string> tokens;
  std::u32string run;
  const auto flush_run = [&] {
    if (!run.empty()) {
      tokens.push_back(text::encode_utf8(run));
      run.clear();
    }
  };
  for (char32_t c : cps) {
    if (c == U' ') {
      flush_run();
    } else if (text::is_hangul_syllable(c)) {
      flush_run();
      tokens.push_back(text::encode_utf8(std::u32string(1, c)));
    } else {
      run.push_back(c);
    }
  }
  flush_run();
  return tokens;
}

std::size_t edit_distance(std::span<const std::string> ref,
                          std::span<const std::string> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double syllable_error_rate(std::string_view reference,
                           std::string_view hypothesis) {
  const std::vector<std::string> ref = syllabify(text::normalize(reference));
  if (ref.empty())
    throw ValidationError("syllable_error_rate: empty reference");
  const std::vector<std::string> hyp = syllabify(text::normalize(hypothesis));
  return static_cast<double>(edit_distance(ref, hyp)) /
         static_cast<double>(ref.size());
}

double corpus_ser(std::span<const std::pair<std::string, std::string>> pairs) {
  if (pairs.empty()) throw ValidationError("corpus_ser: no pairs");
  std::size_t total_dist = 0, total_len = 0;
  for (const auto& [reference, hypothesis] : pairs) {
    const std::vector<std::string> ref = syllabify(text::normalize(reference));
    if (ref.empty())
      throw ValidationError("corpus_ser: empty reference transcript");
    total_dist += edit_distance(ref, syllabify(text::normalize(hypothesis)));
    total_len += ref.size();
  }
  return static_cast<double>(total_dist) / static_cast<double>(total_len);
}

namespace {

// Continued fraction for the regularized incomplete beta (Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_two_tailed_p(double t, double df) {
  if (df <= 0.0) throw ValidationError("student_t_two_tailed_p: df <= 0");
  if (!std::isfinite(t)) return 0.0;
  const double x = df / (df + t * t);
  return reg_inc_beta(0.5 * df, 0.5, x);
}

PearsonResult pearson_correlation(std::span<const double> pred,
                                  std::span<const double> gold) {
  if (pred.size() != gold.size())
    throw ValidationError("pearson_correlation: length mismatch");
  const std::size_t n = pred.size();
  if (n < 3) throw ValidationError("pearson_correlation: need n >= 3");
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pred[i], y = gold[i];
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double dn = static_cast<double>(n);
  const double cov = sxy - sx * sy / dn;
  const double vx = sxx - sx * sx / dn;
  const double vy = syy - sy * sy / dn;
  if (vx <= 0.0 || vy <= 0.0)
    throw ValidationError("pearson_correlation: zero variance input");
  double r = cov / std::sqrt(vx * vy);
  r = std::clamp(r, -1.0, 1.0);
  const double df = dn - 2.0;
  double p;
  if (1.0 - r * r < std::numeric_limits<double>::epsilon()) {
    p = 0.0;
  } else {
    const double t = r * std::sqrt(df / (1.0 - r * r));
    p = student_t_two_tailed_p(t, df);
  }
  return PearsonResult{r, p, n};
}

std::string significance_stars(double p_value) {
  if (p_value < 0.0 || p_value > 1.0)
    throw ValidationError("significance_stars: p out of [0,1]");
  if (p_value < 0.001) return "***";
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "";
}

nlohmann::json MetricReport::to_json() const {
  return nlohmann::json{{"ser", ser},     {"pcc", pcc}, {"p_value", p_value},
                        {"stars", stars}, {"n", n}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.ser = j.value("ser", 0.0);
  r.pcc = j.value("pcc", 0.0);
  r.p_value = j.value("p_value", 1.0);
  r.stars = j.value("stars", std::string{});
  r.n = j.value("n", std::size_t{0});
  return r;
}

}  // namespace asdsev::metrics
