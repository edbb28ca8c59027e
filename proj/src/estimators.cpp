// SPDX-License-Identifier: Apache-2.0
#include "mfss/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mfss/error.hpp"
#include "mfss/log.hpp"

namespace mfss {

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double consequence(double z_resp, double threshold, const ConsequenceMeasure& m) {
  if (m.kind == MeasureKind::Indicator) return z_resp > threshold ? 1.0 : 0.0;
  MFSS_REQUIRE(z_resp > 0.0, ErrorKind::Config, "consequence: kernel measure needs a positive response");
  MFSS_REQUIRE(m.bandwidth > 0.0 && threshold > 0.0, ErrorKind::Config,
               "consequence: kernel bandwidth and threshold must be > 0");
  return 1.0 - standard_normal_cdf(std::log(threshold / z_resp) / m.bandwidth);
}

StratumMoments moments(const std::vector<double>& v) {
  StratumMoments m;
  if (v.empty()) return m;
  double s = 0.0;
  for (double x : v) s += x;
  m.mean = s / static_cast<double>(v.size());
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.variance = ss / static_cast<double>(v.size() - 1);
  }
  return m;
}

GssEstimate gss_estimate(const std::vector<std::vector<double>>& h, const std::vector<double>& p) {
  MFSS_REQUIRE(h.size() == p.size() && !h.empty(), ErrorKind::Dimension, "gss: strata count mismatch");
  GssEstimate g;
  for (std::size_t k = 0; k < h.size(); ++k) {
    MFSS_REQUIRE(h[k].size() >= 2, ErrorKind::Config,
                 "gss: stratum " + std::to_string(k + 1) + " needs at least 2 evaluations");
    const auto m = moments(h[k]);
    g.strata.push_back(m);
    g.estimate += m.mean * p[k];
    g.variance += p[k] * p[k] * m.variance / static_cast<double>(h[k].size());
  }
  if (g.estimate > 0.0) {
    g.cov = std::sqrt(g.variance) / g.estimate;
  } else {
    g.cov = std::numeric_limits<double>::quiet_NaN();
    g.cov_defined = false;
  }
  return g;
}

double optimal_a(double rho, double var_hf, double var_lf) {
  MFSS_REQUIRE(var_hf >= 0.0 && var_lf >= 0.0, ErrorKind::Config, "optimal_a: variances must be >= 0");
  if (var_lf == 0.0) {
    warn("optimal_a: LF variance is zero, control variate disabled (a = 0)");
    return 0.0;
  }
  return rho * std::sqrt(var_hf / var_lf);
}

double optimal_ratio(double c_hf, double c_lf, double rho) {
  MFSS_REQUIRE(c_hf > 0.0 && c_lf > 0.0, ErrorKind::Config, "optimal_ratio: costs must be > 0");
  MFSS_REQUIRE(std::abs(rho) < 1.0, ErrorKind::Config,
               "optimal_ratio: |rho| = 1 gives an unbounded ratio; cap rho below 1");
  return std::sqrt(c_hf * rho * rho / (c_lf * (1.0 - rho * rho)));
}

MfmcStratumEstimate mfmc_stratum_estimate(const std::vector<double>& hf, const std::vector<double>& lf_paired,
                                          const std::vector<double>& lf_all, double a) {
  MFSS_REQUIRE(!hf.empty() && hf.size() == lf_paired.size(), ErrorKind::Dimension,
               "mfmc: HF and paired LF evaluations must have the same length");
  MFSS_REQUIRE(lf_all.size() >= lf_paired.size(), ErrorKind::Dimension, "mfmc: N_LF must be >= N_HF");
  for (std::size_t i = 0; i < lf_paired.size(); ++i)
    MFSS_REQUIRE(lf_all[i] == lf_paired[i], ErrorKind::Dimension,
                 "mfmc: paired LF evaluations are not the first N_HF of the LF draw");
  MfmcStratumEstimate e;
  e.a = a;
  e.mean_hf = moments(hf).mean;
  e.mean_lf_paired = moments(lf_paired).mean;
  e.mean_lf_all = moments(lf_all).mean;
  e.estimate = e.mean_hf + a * (e.mean_lf_all - e.mean_lf_paired);
  e.clamped = std::clamp(e.estimate, 0.0, 1.0);
  return e;
}

void check_pairing(const std::vector<std::uint64_t>& hf, const std::vector<std::uint64_t>& lf) {
  MFSS_REQUIRE(hf.size() <= lf.size(), ErrorKind::Dimension, "mfmc: more HF than LF samples");
  for (std::size_t i = 0; i < hf.size(); ++i)
    MFSS_REQUIRE(hf[i] == lf[i], ErrorKind::Dimension,
                 "mfmc: pairing violation at position " + std::to_string(i) + " (HF sample " + std::to_string(hf[i]) +
                     ", LF sample " + std::to_string(lf[i]) + ")");
}

double mfmc_variance(double var_hf, std::size_t n_hf, double r, double rho) {
  MFSS_REQUIRE(n_hf >= 1, ErrorKind::Config, "mfmc_variance: N_HF must be >= 1");
  MFSS_REQUIRE(r >= 1.0, ErrorKind::Config, "mfmc_variance: r must be >= 1");
  return var_hf / static_cast<double>(n_hf) * (1.0 - (1.0 - 1.0 / r) * rho * rho);
}

EquivalentCount equivalent_count(double n_hf, double r, double rho) {
  MFSS_REQUIRE(r >= 1.0 || rho == 0.0, ErrorKind::Config, "equivalent_count: r must be >= 1");
  const double f = rho == 0.0 ? 1.0 : 1.0 - (1.0 - 1.0 / r) * rho * rho;
  EquivalentCount c;
  c.raw = n_hf / f;
  c.rounded = std::llround(c.raw);
  return c;
}

MfssEstimate mfss_aggregate(const std::vector<double>& est, const std::vector<double>& var,
                            const std::vector<double>& p) {
  MFSS_REQUIRE(est.size() == p.size() && var.size() == p.size() && !p.empty(), ErrorKind::Dimension,
               "mfss: every stratum needs an estimate and a variance");
  MfssEstimate m;
  for (std::size_t k = 0; k < p.size(); ++k) {
    m.estimate += est[k] * p[k];
    m.variance += p[k] * p[k] * var[k];
  }
  if (m.estimate < 0.0) warn("mfss: negative aggregate estimate " + std::to_string(m.estimate) + " floored at 0");
  m.floored = std::max(m.estimate, 0.0);
  if (m.estimate > 0.0) {
    m.cov = std::sqrt(m.variance) / m.estimate;
  } else {
    m.cov = std::numeric_limits<double>::quiet_NaN();
    m.cov_defined = false;
  }
  return m;
}

Allocation budget_allocation(double c_b, double c_hf, double c_lf, double r) {
  MFSS_REQUIRE(c_hf > 0.0 && c_lf >= 0.0 && r >= 0.0, ErrorKind::Config, "budget: invalid costs or ratio");
  const double unit = r * c_lf + c_hf;
  MFSS_REQUIRE(c_b >= 2.0 * unit, ErrorKind::Config,
               "budget: c_B = " + std::to_string(c_b) + " is below the minimum 2 (r c_LF + c_HF) = " +
                   std::to_string(2.0 * unit));
  Allocation a;
  a.n_hf = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(c_b / unit * (1.0 + 1e-12))));
  a.n_lf = static_cast<std::size_t>(std::llround(r * static_cast<double>(a.n_hf)));
  return a;
}

double speedup(double n_gss, double n_hf, double n_train, double n_lf, double cost_ratio) {
  MFSS_REQUIRE(cost_ratio > 0.0, ErrorKind::Config, "speedup: cost ratio must be > 0");
  const double denom = n_hf + n_train + (std::isinf(cost_ratio) ? 0.0 : n_lf / cost_ratio);
  MFSS_REQUIRE(denom > 0.0, ErrorKind::Config, "speedup: zero cost");
  return n_gss / denom;
}

ConvergenceIndex convergence_index(double previous, double next) {
  if (previous == 0.0) return {std::numeric_limits<double>::quiet_NaN(), false};
  return {std::abs(next - previous) / std::abs(previous), true};
}

ConvergenceTrace convergence_loop(std::size_t n0, std::size_t step, double beta_target, std::size_t max_iterations,
                                  const std::function<std::vector<double>(std::size_t)>& estimate) {
  MFSS_REQUIRE(step >= 1 && n0 >= 2, ErrorKind::Config, "convergence_loop: need n0 >= 2 and step >= 1");
  MFSS_REQUIRE(beta_target > 0.0, ErrorKind::Config, "convergence_loop: beta target must be > 0");
  ConvergenceTrace t;
  std::size_t n = n0;
  t.n_hf.push_back(n);
  t.estimates.push_back(estimate(n));
  t.beta.push_back(std::numeric_limits<double>::quiet_NaN());
  t.flagged.push_back(false);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    n += step;
    auto next = estimate(n);
    const auto& prev = t.estimates.back();
    MFSS_REQUIRE(next.size() == prev.size(), ErrorKind::Dimension, "convergence_loop: limit state count changed");
    double beta = 0.0;
    bool flagged = false;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const auto c = convergence_index(prev[i], next[i]);
      if (!c.defined) {
        flagged = true;
        continue;
      }
      beta = std::max(beta, c.beta);
    }
    t.n_hf.push_back(n);
    t.estimates.push_back(std::move(next));
    t.beta.push_back(flagged ? std::numeric_limits<double>::quiet_NaN() : beta);
    t.flagged.push_back(flagged);
    if (flagged) {
      warn("convergence_loop: zero estimate at N_HF = " + std::to_string(n - step) + ", index undefined; continuing");
      continue;
    }
    if (beta <= beta_target) {
      t.converged = true;
      break;
    }
  }
  return t;
}

std::vector<std::size_t> monotonicity_violations(const std::vector<double>& curve) {
  std::vector<std::size_t> v;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i] > curve[i - 1]) v.push_back(i);
  return v;
}

}  // namespace mfss
