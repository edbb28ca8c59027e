// SPDX-License-Identifier: Apache-2.0
// Bivariate Gaussian toy model shared by the estimator tests and acceptance.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "mfss/estimators.hpp"
#include "mfss/rng.hpp"

namespace toy {

inline double normal(mfss::RandomStream& s) {
  const double u1 = 1.0 - s.uniform(), u2 = s.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// HF = x, LF = rho x + sqrt(1 - rho^2) e. With `threshold` set both are
// turned into indicators 1{. > threshold}.
struct Model {
  double rho = 0.9;
  bool indicator = false;
  double threshold = 1.0;

  void sample(mfss::RandomStream& s, double& hf, double& lf) const {
    const double x = normal(s), e = normal(s);
    const double y = rho * x + std::sqrt(1.0 - rho * rho) * e;
    hf = indicator ? (x > threshold ? 1.0 : 0.0) : x;
    lf = indicator ? (y > threshold ? 1.0 : 0.0) : y;
  }
};

struct Replication {
  mfss::MfmcStratumEstimate est;
  double lf_gap = 0.0;  // mean(lf_all) - mean(lf_paired)
};

// One MFMC replication with n_lf fresh LF draws, the first n_hf paired with HF.
inline Replication replicate(const Model& m, std::uint64_t seed, std::uint64_t rep, std::size_t n_hf, std::size_t n_lf,
                             double a) {
  mfss::RandomStream s(seed, mfss::substream::kEvalDraw, rep);
  std::vector<double> hf, lf;
  for (std::size_t i = 0; i < n_lf; ++i) {
    double h, l;
    m.sample(s, h, l);
    if (i < n_hf) hf.push_back(h);
    lf.push_back(l);
  }
  std::vector<double> paired(lf.begin(), lf.begin() + static_cast<std::ptrdiff_t>(n_hf));
  Replication r;
  r.est = mfss::mfmc_stratum_estimate(hf, paired, lf, a);
  r.lf_gap = r.est.mean_lf_all - r.est.mean_lf_paired;
  return r;
}

struct Summary {
  double mean = 0.0, variance = 0.0, se = 0.0;
};

inline Summary summarize(const std::vector<double>& v) {
  const auto m = mfss::moments(v);
  return {m.mean, m.variance, std::sqrt(m.variance / static_cast<double>(v.size()))};
}

}  // namespace toy
