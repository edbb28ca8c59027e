// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mfss {

enum class MeasureKind { Indicator, Kernel };

/// h = 1{Z > z} or the log-kernel smoothing h = 1 - Phi(ln(z / Z) / b).
struct ConsequenceMeasure {
  MeasureKind kind = MeasureKind::Indicator;
  double bandwidth = 0.05;
};

double standard_normal_cdf(double x);
double consequence(double response, double threshold, const ConsequenceMeasure& m);

struct LimitState {
  std::string name;
  std::size_t channel = 0;
  double threshold = 0.0;
};

struct StratumMoments {
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
};

StratumMoments moments(const std::vector<double>& v);

struct GssEstimate {
  double estimate = 0.0;
  double variance = 0.0;
  double cov = 0.0;
  bool cov_defined = true;  // false when the estimate is 0
  std::vector<StratumMoments> strata;
};

/// Sum_k s_k P_k with variance sum_k P_k^2 V[h]_k / N_k (infinite Phase-I limit).
GssEstimate gss_estimate(const std::vector<std::vector<double>>& h, const std::vector<double>& probabilities);

/// a* = rho sqrt(var_hf / var_lf); 0 with a warning when var_lf = 0.
double optimal_a(double rho, double var_hf, double var_lf);

/// r* = sqrt(c_hf rho^2 / (c_lf (1 - rho^2))).
double optimal_ratio(double c_hf, double c_lf, double rho);

struct MfmcStratumEstimate {
  double estimate = 0.0;  // raw
  double clamped = 0.0;   // clamped to [0, 1], reporting only
  double mean_hf = 0.0;
  double mean_lf_paired = 0.0;
  double mean_lf_all = 0.0;
  double a = 0.0;
};

/// mean(hf) + a (mean(lf_all) - mean(lf_paired)); lf_paired must equal the
/// first N_HF entries of lf_all.
MfmcStratumEstimate mfmc_stratum_estimate(const std::vector<double>& hf, const std::vector<double>& lf_paired,
                                          const std::vector<double>& lf_all, double a);

/// Throws unless hf_indices is exactly the prefix of lf_indices.
void check_pairing(const std::vector<std::uint64_t>& hf_indices, const std::vector<std::uint64_t>& lf_indices);

/// (var / N_HF) (1 - (1 - 1/r) rho^2), r >= 1.
double mfmc_variance(double var_hf, std::size_t n_hf, double r, double rho);

struct EquivalentCount {
  double raw = 0.0;
  long long rounded = 0;
};

/// N_HF / (1 - (1 - 1/r) rho^2).
EquivalentCount equivalent_count(double n_hf, double r, double rho);

struct MfssEstimate {
  double estimate = 0.0;  // raw, may be negative
  double floored = 0.0;   // max(estimate, 0)
  double variance = 0.0;
  double cov = 0.0;
  bool cov_defined = true;
};

MfssEstimate mfss_aggregate(const std::vector<double>& stratum_estimates, const std::vector<double>& stratum_variances,
                            const std::vector<double>& probabilities);

struct Allocation {
  std::size_t n_hf = 0;
  std::size_t n_lf = 0;
};

/// N_HF = floor(c_B / (r c_LF + c_HF)) (at least 2), N_LF = round(r N_HF).
Allocation budget_allocation(double c_b, double c_hf, double c_lf, double r);

/// N_GSS / (N_HF + N_train + N_LF / (c_HF / c_LF)).
double speedup(double n_gss, double n_hf, double n_train, double n_lf, double cost_ratio);

struct ConvergenceIndex {
  double beta = 0.0;
  bool defined = true;  // false when the previous estimate is 0
};

ConvergenceIndex convergence_index(double previous, double next);

struct ConvergenceTrace {
  std::vector<std::size_t> n_hf;           // per stratum, one entry per iteration
  std::vector<std::vector<double>> estimates;  // per iteration, per limit state
  std::vector<double> beta;                // max over limit states; NaN when undefined
  std::vector<bool> flagged;               // iteration had an undefined index
  bool converged = false;
};

/// Calls estimate(n_hf) for n_hf = n0, n0 + step, ... until the largest
/// convergence index over limit states is <= beta_target. estimate() throws
/// PoolExhausted when the strata run dry.
ConvergenceTrace convergence_loop(std::size_t n0, std::size_t step, double beta_target, std::size_t max_iterations,
                                  const std::function<std::vector<double>(std::size_t)>& estimate);

/// Indices i where curve[i] > curve[i - 1] (violations of a nonincreasing exceedance curve).
std::vector<std::size_t> monotonicity_violations(const std::vector<double>& curve);

}  // namespace mfss
