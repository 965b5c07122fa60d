/*
 * Copyright 2026 The iqagent Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "iqagent/calibration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "iqagent/error.hpp"
#include "text.hpp"

namespace iqagent {

std::string_view to_string(LogisticForm form) {
  return form == LogisticForm::kStandard ? "Standard" : "AsPrinted";
}

LogisticForm parse_logistic_form(std::string_view s) {
  const auto k = text::lower(text::trim(s));
  if (k == "standard") return LogisticForm::kStandard;
  if (k == "asprinted" || k == "as_printed" || k == "as-printed") return LogisticForm::kAsPrinted;
  throw Error(Errc::kConfig, "unknown logistic form '" + std::string(s) + "'");
}

double logistic_value(double raw, const std::array<double, 5>& b, LogisticForm form) {
  const double z = b[1] * (raw - b[2]);
  const double s = form == LogisticForm::kStandard ? 1.0 / (1.0 + std::exp(z)) : std::exp(-z);
  return b[0] * (0.5 - s) + b[3] * raw + b[4];
}

std::array<double, 5> logistic_gradient(double raw, const std::array<double, 5>& b,
                                        LogisticForm form) {
  const double z = b[1] * (raw - b[2]);
  double s = 0.0;   // the subtracted term
  double ds = 0.0;  // d s / d z
  if (form == LogisticForm::kStandard) {
    s = 1.0 / (1.0 + std::exp(z));
    ds = -s * (1.0 - s);
  } else {
    s = std::exp(-z);
    ds = -s;
  }
  // f = b0 (1/2 - s) + b3 x + b4,  dz/db1 = x - b2,  dz/db2 = -b1
  return {0.5 - s, -b[0] * ds * (raw - b[2]), b[0] * ds * b[1], raw, 1.0};
}

MappedScore logistic_map_detailed(double raw, const LogisticParams& params) {
  if (!std::isfinite(raw)) throw Error(Errc::kNonFiniteInput, "raw score is not finite");
  for (double b : params.beta) {
    if (!std::isfinite(b)) throw Error(Errc::kNonFiniteInput, "logistic parameters must be finite");
  }
  MappedScore out;
  out.pre_clamp = logistic_value(raw, params.beta, params.form);
  out.value = out.pre_clamp;
  if (!std::isfinite(out.value)) {
    // Overflow in the AsPrinted exponential; the sign still orders the result.
    if (!params.clamp) throw Error(Errc::kNonFiniteInput, "mapped score overflowed");
    out.value = out.value > 0 ? 5.0 : 1.0;
    out.clamped = true;
    return out;
  }
  if (params.clamp && (out.value < 1.0 || out.value > 5.0)) {
    out.value = std::clamp(out.value, 1.0, 5.0);
    out.clamped = true;
  }
  return out;
}

double logistic_map(double raw, const LogisticParams& params) {
  return logistic_map_detailed(raw, params).value;
}

// ---------------------------------------------------------------------------

namespace {

using Beta = std::array<double, 5>;

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double rss_of(const std::vector<std::pair<double, double>>& pairs, const Beta& b, LogisticForm form) {
  double rss = 0.0;
  for (const auto& [x, y] : pairs) {
    const double r = logistic_value(x, b, form) - y;
    rss += r * r;
  }
  return std::isfinite(rss) ? rss : std::numeric_limits<double>::infinity();
}

struct Attempt {
  Beta beta{};
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

Attempt levenberg_marquardt(const std::vector<std::pair<double, double>>& pairs, Beta beta,
                            LogisticForm form, const FitOptions& opt) {
  Attempt a;
  a.rss = rss_of(pairs, beta, form);
  a.history.push_back(a.rss);
  double lambda = opt.initial_damping;
  for (a.iterations = 0; a.iterations < opt.max_iterations; ++a.iterations) {
    if (a.rss < 1e-300) {
      a.converged = true;
      break;
    }
    Eigen::Matrix<double, 5, 5> jtj = Eigen::Matrix<double, 5, 5>::Zero();
    Eigen::Matrix<double, 5, 1> jtr = Eigen::Matrix<double, 5, 1>::Zero();
    for (const auto& [x, y] : pairs) {
      const auto g = logistic_gradient(x, beta, form);
      const Eigen::Map<const Eigen::Matrix<double, 5, 1>> gv(g.data());
      const double r = logistic_value(x, beta, form) - y;
      jtj += gv * gv.transpose();
      jtr += gv * r;
    }
    bool accepted = false;
    while (lambda < 1e20) {
      Eigen::Matrix<double, 5, 5> lhs = jtj;
      for (int i = 0; i < 5; ++i) lhs(i, i) += lambda * (jtj(i, i) + 1e-12);
      const Eigen::Matrix<double, 5, 1> step = lhs.ldlt().solve(-jtr);
      Beta trial = beta;
      for (int i = 0; i < 5; ++i) trial[i] += step(i);
      const double trial_rss = step.allFinite() ? rss_of(pairs, trial, form)
                                                : std::numeric_limits<double>::infinity();
      if (trial_rss < a.rss) {
        const double rel = (a.rss - trial_rss) / a.rss;
        // A tiny decrease under heavy damping is a short step, not a minimum.
        const bool near_gauss_newton = lambda <= opt.initial_damping;
        beta = trial;
        a.rss = trial_rss;
        a.history.push_back(a.rss);
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (rel < opt.relative_tolerance && near_gauss_newton) a.converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction left at any damping: a stationary point.
      a.converged = true;
      break;
    }
    if (a.converged) {
      ++a.iterations;
      break;
    }
  }
  a.beta = beta;
  return a;
}

}  // namespace

FitResult fit_logistic(const std::vector<std::pair<double, double>>& pairs, LogisticForm form,
                       const FitOptions& options) {
  if (pairs.size() < 10) {
    throw Error(Errc::kDegenerateInput, "fitting needs at least 10 (raw, mos) pairs");
  }
  std::vector<double> raw, mos;
  for (const auto& [x, y] : pairs) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw Error(Errc::kDegenerateInput, "fit pairs must be finite");
    }
    raw.push_back(x);
    mos.push_back(y);
  }
  const auto [rmin, rmax] = std::minmax_element(raw.begin(), raw.end());
  const auto [mmin, mmax] = std::minmax_element(mos.begin(), mos.end());
  if (*rmin == *rmax) throw Error(Errc::kDegenerateData, "raw scores are constant");
  if (*mmin == *mmax) throw Error(Errc::kDegenerateData, "MOS values are constant");

  const double n = static_cast<double>(raw.size());
  const double raw_mean = std::accumulate(raw.begin(), raw.end(), 0.0) / n;
  double raw_var = 0.0;
  for (double x : raw) raw_var += (x - raw_mean) * (x - raw_mean);
  const double raw_sd = std::sqrt(raw_var / n);
  std::vector<double> sorted = raw;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted.size() % 2 == 1
                            ? sorted[sorted.size() / 2]
                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);

  const double b3_grid[] = {*rmin, median, *rmax};
  const double b2_grid[] = {1.0 / raw_sd, -1.0 / raw_sd};
  const double b1 = *mmax - *mmin;

  // Grid starts first, then a purely affine start (b1 = 0) that reaches
  // linear data exactly instead of fading the sigmoid out asymptotically.
  std::vector<Beta> starts;
  for (double b3 : b3_grid) {
    for (double b2 : b2_grid) starts.push_back({b1, b2, b3, 0.0, 0.0});
  }
  starts.push_back({0.0, 1.0 / raw_sd, median, 0.0, 0.0});

  FitResult best;
  best.report.rss = std::numeric_limits<double>::infinity();
  int index = 0;
  for (Beta start : starts) {
    {
      // b4, b5: ordinary least squares of what the sigmoid leaves unexplained.
      std::vector<double> resid;
      for (const auto& [x, y] : pairs) resid.push_back(y - logistic_value(x, start, form));
      double sxy = 0.0;
      const double rm = std::accumulate(resid.begin(), resid.end(), 0.0) / n;
      for (size_t i = 0; i < raw.size(); ++i) sxy += (raw[i] - raw_mean) * (resid[i] - rm);
      start[3] = sxy / raw_var;
      start[4] = rm - start[3] * raw_mean;
      if (!std::all_of(start.begin(), start.end(), [](double v) { return std::isfinite(v); })) {
        ++index;
        continue;
      }

      auto attempt = levenberg_marquardt(pairs, start, form, options);
      ++best.report.starts_tried;
      if (attempt.rss < best.report.rss) {
        best.params = {attempt.beta, form, true};
        best.report.rss = attempt.rss;
        best.report.iterations = attempt.iterations;
        best.report.converged = attempt.converged;
        best.report.start_index = index;
        best.report.rss_history = std::move(attempt.history);
      }
      ++index;
    }
  }
  if (best.report.start_index < 0) {
    throw Error(Errc::kDegenerateData, "no start produced a finite fit");
  }
  std::vector<double> fitted;
  for (double x : raw) fitted.push_back(logistic_value(x, best.params.beta, form));
  best.report.plcc = pearson(fitted, mos);
  return best;
}

LogisticParams default_params(std::string_view tool_name, const ToolRegistry& registry,
                              LogisticForm form) {
  const auto& d = registry.at(tool_name);
  if (d.beta) return {*d.beta, form, true};
  LogisticParams p{{0.0, 1.0, 0.0, 1.0, 0.0}, form, true};
  if (d.native_range) {
    const auto [lo, hi] = *d.native_range;
    const double slope = 4.0 / (hi - lo);
    if (d.higher_better) {
      p.beta[3] = slope;
      p.beta[4] = 1.0 - slope * lo;
    } else {
      p.beta[3] = -slope;
      p.beta[4] = 5.0 + slope * lo;
    }
  }
  return p;
}

}  // namespace iqagent
