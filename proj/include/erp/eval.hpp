#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "erp/error.hpp"
#include "erp/types.hpp"

namespace erp {

namespace detail {

inline void check_scores(std::span<const double> scores, std::span<const Label> labels) {
  require(scores.size() == labels.size(), ErrorCode::dimension, "scores and labels differ in length");
  std::size_t targets = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(std::isfinite(scores[i]), ErrorCode::non_finite, "non-finite score");
    targets += labels[i] == Label::target;
  }
  require(targets > 0 && targets < labels.size(), ErrorCode::single_class,
          "AUC needs both target and non-target samples");
}

}  // namespace detail

// Mann-Whitney AUC with midranks for ties:
//   AUC = (R_target - n_t (n_t + 1) / 2) / (n_t * n_nt)
inline double auc(std::span<const double> scores, std::span<const Label> labels) {
  detail::check_scores(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double target_rank_sum = 0.0;
  std::size_t n_targets = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share the midrank
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::target) {
        target_rank_sum += midrank;
        ++n_targets;
      }
    }
    i = j;
  }
  const auto nt = static_cast<double>(n_targets);
  const auto nn = static_cast<double>(n - n_targets);
  return (target_rank_sum - nt * (nt + 1.0) / 2.0) / (nt * nn);
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

using RocCurve = std::vector<RocPoint>;

// Threshold sweep over distinct scores, highest first; starts at (0,0) and
// ends at (1,1). Tied scores move both rates in one diagonal step.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const Label> labels) {
  detail::check_scores(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t n_targets = 0;
  for (Label l : labels) n_targets += l == Label::target;
  const auto total_pos = static_cast<double>(n_targets);
  const auto total_neg = static_cast<double>(labels.size() - n_targets);

  RocCurve curve{{0.0, 0.0}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == Label::target ? tp : fp) += 1;
      ++j;
    }
    curve.push_back({static_cast<double>(fp) / total_neg, static_cast<double>(tp) / total_pos});
    i = j;
  }
  return curve;
}

inline double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  return area;
}

inline std::string roc_csv(const RocCurve& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "fpr,tpr\n";
  for (const auto& p : curve) out << p.fpr << ',' << p.tpr << '\n';
  return out.str();
}

namespace detail {

// Continued fraction for I_x(a, b), modified Lentz evaluation of
//   1 / (1 + d1 / (1 + d2 / (1 + ...)))
// with d_{2m+1} = -(a+m)(a+b+m) x / ((a+2m)(a+2m+1)) and
//      d_{2m}   = m (b-m) x / ((a+2m-1)(a+2m)).
// Converges fast for x < (a+1)/(a+b+2).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double md = m;
    const double even = md * (b - md) * x / ((a + 2.0 * md - 1.0) * (a + 2.0 * md));
    d = 1.0 + even * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + even / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    const double odd = -(a + md) * (a + b + md) * x / ((a + 2.0 * md) * (a + 2.0 * md + 1.0));
    d = 1.0 + odd * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + odd / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw Error(ErrorCode::out_of_range, "incomplete beta continued fraction did not converge");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
inline double regularized_incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, ErrorCode::out_of_range, "incomplete beta needs a, b > 0");
  require(x >= 0.0 && x <= 1.0, ErrorCode::out_of_range, "incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// Two-tailed p-value of Student's t with df degrees of freedom:
//   p = I_{df / (df + t^2)}(df / 2, 1 / 2)
inline double student_t_two_tailed_p(double t, double df) {
  require(df > 0.0, ErrorCode::out_of_range, "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// Paired t-test on d = a - b: t = mean(d) / (sd(d) / sqrt(n)), df = n - 1.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::dimension, "paired samples differ in length");
  require(a.size() >= 2, ErrorCode::invariant, "paired t-test needs at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  require(sd > 0.0, ErrorCode::zero_variance, "differences have zero variance; t is undefined");
  TTestResult r;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.df = static_cast<double>(n - 1);
  r.p = student_t_two_tailed_p(r.t, r.df);
  return r;
}

struct GrandAverage {
  std::vector<double> target;
  std::vector<double> nontarget;
};

inline GrandAverage grand_average(const EpochSet& set, const std::string& channel) {
  const std::size_t c = set.channel_index(channel);
  set.require_both_classes();
  GrandAverage ga{std::vector<double>(set.n_samples, 0.0), std::vector<double>(set.n_samples, 0.0)};
  std::size_t n_t = 0;
  std::size_t n_nt = 0;
  for (std::size_t e = 0; e < set.n_epochs; ++e) {
    const bool is_target = set.labels[e] == Label::target;
    auto& wave = is_target ? ga.target : ga.nontarget;
    (is_target ? n_t : n_nt) += 1;
    for (std::size_t t = 0; t < set.n_samples; ++t) wave[t] += set.at(e, c, t);
  }
  for (double& v : ga.target) v /= static_cast<double>(n_t);
  for (double& v : ga.nontarget) v /= static_cast<double>(n_nt);
  return ga;
}

// ---- report -------------------------------------------------------------

struct SubjectResult {
  std::string subject_id;
  std::string montage;
  double auc = 0.0;
};

struct MontageSummary {
  std::string montage;
  std::size_t n = 0;
  double mean_auc = 0.0;
  std::optional<double> std_auc;  // absent for n = 1
};

struct EvalReport {
  std::vector<SubjectResult> per_subject;
  std::vector<MontageSummary> summaries;  // in first-appearance order
  std::optional<TTestResult> ttest;       // scalp vs ear, paired by subject
};

// Standard deviation with the n denominator. Table-style summaries of
// per-subject AUCs use this form.
inline double population_std(std::span<const double> values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

inline EvalReport build_report(std::vector<SubjectResult> results) {
  require(!results.empty(), ErrorCode::invariant, "report needs at least one subject");
  EvalReport report;
  for (const auto& r : results)
    require(r.auc >= 0.0 && r.auc <= 1.0, ErrorCode::out_of_range, "AUC outside [0, 1] for " + r.subject_id);
  report.per_subject = std::move(results);

  std::vector<std::string> montages;
  for (const auto& r : report.per_subject)
    if (std::find(montages.begin(), montages.end(), r.montage) == montages.end()) montages.push_back(r.montage);

  for (const auto& m : montages) {
    std::vector<double> values;
    for (const auto& r : report.per_subject)
      if (r.montage == m) values.push_back(r.auc);
    MontageSummary s;
    s.montage = m;
    s.n = values.size();
    s.mean_auc = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() >= 2) s.std_auc = population_std(values);
    report.summaries.push_back(s);
  }

  const bool has_scalp = std::find(montages.begin(), montages.end(), "scalp") != montages.end();
  const bool has_ear = std::find(montages.begin(), montages.end(), "ear") != montages.end();
  if (has_scalp && has_ear) {
    std::map<std::string, double> scalp;
    std::map<std::string, double> ear;
    for (const auto& r : report.per_subject) {
      auto& column = r.montage == "scalp" ? scalp : ear;
      if (r.montage != "scalp" && r.montage != "ear") continue;
      require(column.emplace(r.subject_id, r.auc).second, ErrorCode::invariant,
              "duplicate " + r.montage + " entry for subject " + r.subject_id);
    }
    require(scalp.size() == ear.size(), ErrorCode::invariant,
            "scalp and ear columns cover different subjects");
    std::vector<double> a;
    std::vector<double> b;
    for (const auto& [subject, value] : scalp) {
      const auto it = ear.find(subject);
      require(it != ear.end(), ErrorCode::invariant, "subject " + subject + " has no ear entry");
      a.push_back(value);
      b.push_back(it->second);
    }
    if (a.size() >= 2) report.ttest = paired_ttest(a, b);
  }
  return report;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

// subject\tmontage\tauc rows, then per montage:
//   mean\t<montage>\t<value>
//   std\t<montage>\t<value or blank>
//   summary\t<montage>\t<mean>±<std>  (three decimals)
// and, when both montages are present, ttest\tt=..\tdf=..\tp=..
inline std::string render_tsv(const EvalReport& report) {
  std::string out = "subject\tmontage\tauc\n";
  for (const auto& r : report.per_subject)
    out += r.subject_id + "\t" + r.montage + "\t" + detail::fixed(r.auc, 6) + "\n";
  for (const auto& s : report.summaries) {
    out += "mean\t" + s.montage + "\t" + detail::fixed(s.mean_auc, 6) + "\n";
    out += "std\t" + s.montage + "\t" + (s.std_auc ? detail::fixed(*s.std_auc, 6) : std::string()) + "\n";
    out += "summary\t" + s.montage + "\t" + detail::fixed(s.mean_auc, 3);
    if (s.std_auc) out += "±" + detail::fixed(*s.std_auc, 3);
    out += "\n";
  }
  if (report.ttest)
    out += "ttest\tt=" + detail::general(report.ttest->t) + "\tdf=" + detail::general(report.ttest->df) +
           "\tp=" + detail::general(report.ttest->p) + "\n";
  return out;
}

// Reads subject rows from a report TSV; summary lines are ignored.
inline std::vector<SubjectResult> parse_subject_rows(std::istream& in, const std::string& source) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::malformed, source + ": empty report");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "subject\tmontage\tauc", ErrorCode::malformed, source + ": bad report header");
  std::vector<SubjectResult> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (!fields.empty() && (fields[0] == "mean" || fields[0] == "std" || fields[0] == "summary" ||
                            fields[0] == "ttest"))
      continue;
    require(fields.size() == 3, ErrorCode::malformed, source + ": expected subject, montage, auc");
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), value);
    require(ec == std::errc{} && ptr == fields[2].data() + fields[2].size(), ErrorCode::malformed,
            source + ": bad auc '" + fields[2] + "'");
    rows.push_back({fields[0], fields[1], value});
  }
  return rows;
}

}  // namespace erp
