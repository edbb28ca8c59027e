// SPDX-License-Identifier: Apache-2.0
#include "mfss/dynamics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mfss/error.hpp"

namespace mfss {

RayleighCoefficients rayleigh_calibrate(double f1_hz, double f2_hz, double zeta) {
  MFSS_REQUIRE(f1_hz > 0.0 && f1_hz < f2_hz, ErrorKind::Config,
               "rayleigh_calibrate: need 0 < f1 < f2");
  MFSS_REQUIRE(zeta >= 0.0, ErrorKind::Config, "rayleigh_calibrate: zeta must be >= 0");
  const double w1 = 2.0 * std::numbers::pi * f1_hz;
  const double w2 = 2.0 * std::numbers::pi * f2_hz;
  return {2.0 * zeta * w1 * w2 / (w1 + w2), 2.0 * zeta / (w1 + w2)};
}

namespace {

Eigen::MatrixXd initial_stiffness(const std::vector<double>& k) {
  const auto n = static_cast<Eigen::Index>(k.size());
  Eigen::MatrixXd km = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    km(j, j) += k[j];
    if (j + 1 < n) {
      km(j, j) += k[j + 1];
      km(j, j + 1) -= k[j + 1];
      km(j + 1, j) -= k[j + 1];
    }
  }
  return km;
}

}  // namespace

StructuralModel::StructuralModel(StructuralParams params) : params_(std::move(params)) {
  const std::size_t n = params_.masses.size();
  MFSS_REQUIRE(n >= 1, ErrorKind::Config, "structure: need at least one story");
  MFSS_REQUIRE(params_.stiffness.size() == n && params_.bouc_wen.size() == n &&
                   params_.heights.size() == n,
               ErrorKind::Config, "structure: masses, stiffness, bouc_wen, heights must align");
  for (std::size_t j = 0; j < n; ++j) {
    MFSS_REQUIRE(params_.masses[j] > 0.0, ErrorKind::Config, "structure: masses must be > 0");
    MFSS_REQUIRE(params_.stiffness[j] > 0.0, ErrorKind::Config, "structure: stiffness must be > 0");
    const auto& bw = params_.bouc_wen[j];
    MFSS_REQUIRE(bw.yield_disp > 0.0, ErrorKind::Config, "structure: yield displacement must be > 0");
    MFSS_REQUIRE(bw.post_yield_ratio >= 0.0 && bw.post_yield_ratio <= 1.0, ErrorKind::Config,
                 "structure: post-yield ratio must be in [0, 1]");
    MFSS_REQUIRE(bw.n >= 1.0, ErrorKind::Config, "structure: Bouc-Wen exponent must be >= 1");
  }

  const Eigen::MatrixXd k0 = initial_stiffness(params_.stiffness);
  Eigen::VectorXd mdiag(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) mdiag[static_cast<Eigen::Index>(j)] = params_.masses[j];
  const Eigen::MatrixXd m = mdiag.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(k0, m);
  MFSS_REQUIRE(eig.info() == Eigen::Success, ErrorKind::Numerical, "structure: modal analysis failed");
  const Eigen::VectorXd w2 = eig.eigenvalues();
  freq_hz_ = w2.cwiseSqrt() / (2.0 * std::numbers::pi);
  shapes_ = eig.eigenvectors();  // mass-normalized
  for (Eigen::Index c = 0; c < shapes_.cols(); ++c) {
    // Sign convention: positive roof component.
    if (shapes_(shapes_.rows() - 1, c) < 0.0) shapes_.col(c) *= -1.0;
  }
  for (Eigen::Index i = 1; i < freq_hz_.size(); ++i) {
    MFSS_REQUIRE(freq_hz_[i] > freq_hz_[i - 1], ErrorKind::Numerical,
                 "structure: modal frequencies must be strictly increasing");
  }

  const auto& d = params_.damping;
  if (d.explicit_coefficients) {
    rayleigh_ = *d.explicit_coefficients;
  } else {
    MFSS_REQUIRE(d.mode_i >= 1 && d.mode_j <= n && d.mode_i < d.mode_j, ErrorKind::Config,
                 "structure: Rayleigh modes out of range (use explicit coefficients for 1 DOF)");
    rayleigh_ = rayleigh_calibrate(freq_hz_[static_cast<Eigen::Index>(d.mode_i - 1)],
                                   freq_hz_[static_cast<Eigen::Index>(d.mode_j - 1)], d.zeta);
  }
  modal_zeta_.resize(freq_hz_.size());
  for (Eigen::Index i = 0; i < freq_hz_.size(); ++i) {
    const double w = 2.0 * std::numbers::pi * freq_hz_[i];
    modal_zeta_[i] = rayleigh_.alpha_m / (2.0 * w) + rayleigh_.beta_k * w / 2.0;
  }
  sv_modes_ = std::min<std::size_t>(params_.sv_modes, n);
  moment_participation_.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(n); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      s += params_.heights[j] * params_.masses[j] * shapes_(static_cast<Eigen::Index>(j), c);
    moment_participation_[c] = s;
  }
}

void SolverConfig::validate() const {
  MFSS_REQUIRE(base_dt > 0.0 && record_dt > 0.0, ErrorKind::Config, "solver: time steps must be > 0");
  const double ratio = record_dt / base_dt;
  MFSS_REQUIRE(std::abs(ratio - std::round(ratio)) < 1e-9 * ratio && std::round(ratio) >= 1.0,
               ErrorKind::Config, "solver: record_dt must be an integer multiple of base_dt");
  MFSS_REQUIRE(max_iterations >= 1, ErrorKind::Config, "solver: max_iterations must be >= 1");
  MFSS_REQUIRE(disp_tol > 0.0 && force_tol > 0.0, ErrorKind::Config, "solver: tolerances must be > 0");
  for (int d : cascade_divisors)
    MFSS_REQUIRE(d >= 1, ErrorKind::Config, "solver: cascade divisors must be >= 1");
}

namespace {

constexpr double kNewmarkGamma = 0.5;
constexpr double kNewmarkBeta = 0.25;

struct State {
  std::vector<double> u, v, a, z;
};

/// Per-integration workspace; everything the Newton loop touches is preallocated.
class NewmarkSolver {
 public:
  NewmarkSolver(const StructuralModel& model, const SolverConfig& cfg)
      : model_(model), cfg_(cfg), n_(model.n_dof()) {
    const auto& p = model.params();
    m_ = p.masses;
    k_ = p.stiffness;
    bw_ = p.bouc_wen;
    alpha_m_ = model.rayleigh().alpha_m;
    beta_k_ = model.rayleigh().beta_k;
    double uy_min = bw_[0].yield_disp, f_min = k_[0] * bw_[0].yield_disp;
    for (std::size_t j = 0; j < n_; ++j) {
      uy_min = std::min(uy_min, bw_[j].yield_disp);
      f_min = std::min(f_min, k_[j] * bw_[j].yield_disp);
    }
    disp_tol_ = cfg.disp_tol * uy_min;
    force_tol_ = cfg.force_tol * f_min;
    for (auto* v : {&r_, &du_, &ut_, &vt_, &at_, &zt_, &fs_, &kt_, &diag_, &lower_, &upper_,
                    &rtrial_, &work_})
      v->assign(n_, 0.0);
    trial_.u.assign(n_, 0.0);
    trial_.v.assign(n_, 0.0);
    trial_.a.assign(n_, 0.0);
    trial_.z.assign(n_, 0.0);
  }

  /// Acceleration consistent with the initial state and load.
  void initialize(State& s, std::span<const double> f) {
    story_forces(s.u, s.z, fs_);
    for (std::size_t j = 0; j < n_; ++j) {
      double c_v = damping_times(s.v, j);
      double rnl = fs_[j] - (j + 1 < n_ ? fs_[j + 1] : 0.0);
      s.a[j] = (f[j] - c_v - rnl) / m_[j];
    }
  }

  /// Advances `s` over h to a state with load f1; returns iterations or -1 on failure.
  int step(const State& s, State& out, double h, std::span<const double> f1, SolverStage stage) {
    const double c0 = 1.0 / (kNewmarkBeta * h * h);
    const double c1 = kNewmarkGamma / (kNewmarkBeta * h);
    // Predictor: constant acceleration.
    for (std::size_t j = 0; j < n_; ++j) ut_[j] = s.u[j] + h * s.v[j] + 0.5 * h * h * s.a[j];
    double rnorm = residual(s, ut_, h, f1, r_);
    if (!std::isfinite(rnorm)) return -1;

    const bool line_search = stage == SolverStage::NewtonLineSearch ||
                             stage == SolverStage::NewtonLineSearchFine;
    const bool broyden = stage == SolverStage::QuasiNewton;
    Eigen::MatrixXd jinv;
    if (broyden) {
      tangent(s, h, c0, c1);
      Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
      for (std::size_t j = 0; j < n_; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        jac(jj, jj) = diag_[j];
        if (j + 1 < n_) {
          jac(jj, jj + 1) = upper_[j];
          jac(jj + 1, jj) = lower_[j + 1];
        }
      }
      jinv = jac.inverse();
    }

    for (int it = 1; it <= cfg_.max_iterations; ++it) {
      if (broyden) {
        for (std::size_t i = 0; i < n_; ++i) {
          double s_ = 0.0;
          for (std::size_t j = 0; j < n_; ++j)
            s_ += jinv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * r_[j];
          du_[i] = -s_;
        }
      } else {
        tangent(s, h, c0, c1);
        solve_tridiagonal(r_, du_);
      }
      double alpha = 1.0;
      double new_norm = 0.0;
      for (int ls = 0;; ++ls) {
        for (std::size_t j = 0; j < n_; ++j) work_[j] = ut_[j] + alpha * du_[j];
        new_norm = residual(s, work_, h, f1, rtrial_);
        if (!line_search || (std::isfinite(new_norm) && new_norm <= (1.0 - 1e-4 * alpha) * rnorm) ||
            ls >= cfg_.line_search_steps)
          break;
        alpha *= 0.5;
      }
      if (!std::isfinite(new_norm)) return -1;
      double step_norm = 0.0;
      for (std::size_t j = 0; j < n_; ++j) step_norm = std::max(step_norm, std::abs(alpha * du_[j]));
      if (broyden) {
        // Good Broyden update of the inverse Jacobian: y = r_new - r_old, s = du.
        Eigen::VectorXd sv(static_cast<Eigen::Index>(n_)), yv(static_cast<Eigen::Index>(n_));
        for (std::size_t j = 0; j < n_; ++j) {
          sv[static_cast<Eigen::Index>(j)] = alpha * du_[j];
          yv[static_cast<Eigen::Index>(j)] = rtrial_[j] - r_[j];
        }
        const Eigen::VectorXd hy = jinv * yv;
        const double denom = sv.dot(hy);
        if (std::abs(denom) > 1e-300) jinv += ((sv - hy) * (sv.transpose() * jinv)) / denom;
      }
      std::swap(ut_, work_);
      std::swap(r_, rtrial_);
      rnorm = new_norm;
      if (rnorm <= force_tol_ && step_norm <= disp_tol_) {
        commit(s, out, ut_, h);
        return it;
      }
    }
    return -1;
  }

  void story_forces(const std::vector<double>& u, const std::vector<double>& z, std::vector<double>& fs) const {
    for (std::size_t j = 0; j < n_; ++j) {
      const double d = u[j] - (j > 0 ? u[j - 1] : 0.0);
      const auto& b = bw_[j];
      fs[j] = b.post_yield_ratio * k_[j] * d + (1.0 - b.post_yield_ratio) * k_[j] * b.yield_disp * z[j];
    }
  }

  const std::vector<double>& last_story_forces() const { return fs_; }

 private:
  double damping_times(const std::vector<double>& v, std::size_t j) const {
    // C = alpha_m M + beta_k K0, K0 tridiagonal.
    double kv = k_[j] * (v[j] - (j > 0 ? v[j - 1] : 0.0));
    if (j + 1 < n_) kv -= k_[j + 1] * (v[j + 1] - v[j]);
    return alpha_m_ * m_[j] * v[j] + beta_k_ * kv;
  }

  static double zdot(const BoucWenParams& b, double ddot, double z) {
    const double az = std::abs(z);
    double pow_n, pow_nm1z;
    if (b.n == 2.0) {
      pow_n = z * z;
      pow_nm1z = az * z;
    } else if (b.n == 1.0) {
      pow_n = az;
      pow_nm1z = z;
    } else {
      pow_n = std::pow(az, b.n);
      pow_nm1z = std::pow(az, b.n - 1.0) * z;
    }
    return (b.a * ddot - b.beta * std::abs(ddot) * pow_nm1z - b.gamma * ddot * pow_n) / b.yield_disp;
  }

  /// Newmark kinematics and RK4 hysteresis update for trial u; fills residual r.
  double residual(const State& s, const std::vector<double>& u, double h, std::span<const double> f1,
                  std::vector<double>& r) {
    const double c0 = 1.0 / (kNewmarkBeta * h * h);
    for (std::size_t j = 0; j < n_; ++j) {
      at_[j] = c0 * (u[j] - s.u[j] - h * s.v[j]) - (1.0 / (2.0 * kNewmarkBeta) - 1.0) * s.a[j];
      vt_[j] = s.v[j] + h * ((1.0 - kNewmarkGamma) * s.a[j] + kNewmarkGamma * at_[j]);
    }
    for (std::size_t j = 0; j < n_; ++j) {
      const double d0 = s.v[j] - (j > 0 ? s.v[j - 1] : 0.0);
      const double d1 = vt_[j] - (j > 0 ? vt_[j - 1] : 0.0);
      const double dm = 0.5 * (d0 + d1);
      const auto& b = bw_[j];
      const double z0 = s.z[j];
      const double k1 = zdot(b, d0, z0);
      const double k2 = zdot(b, dm, z0 + 0.5 * h * k1);
      const double k3 = zdot(b, dm, z0 + 0.5 * h * k2);
      const double k4 = zdot(b, d1, z0 + h * k3);
      zt_[j] = z0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    story_forces(u, zt_, fs_);
    double norm = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double rnl = fs_[j] - (j + 1 < n_ ? fs_[j + 1] : 0.0);
      r[j] = m_[j] * at_[j] + damping_times(vt_, j) + rnl - f1[j];
      norm = std::max(norm, std::abs(r[j]));
    }
    return norm;
  }

  /// Tridiagonal effective tangent at the last residual evaluation.
  void tangent(const State&, double, double c0, double c1) {
    for (std::size_t j = 0; j < n_; ++j) {
      const auto& b = bw_[j];
      const double d1 = vt_[j] - (j > 0 ? vt_[j - 1] : 0.0);
      const double z = zt_[j];
      const double az = std::abs(z);
      const double zn = b.n == 2.0 ? z * z : std::pow(az, b.n);
      const double sgn = (d1 * z >= 0.0) ? 1.0 : -1.0;
      const double dzdd = (b.a - zn * (b.beta * sgn + b.gamma)) / b.yield_disp;
      kt_[j] = b.post_yield_ratio * k_[j] + (1.0 - b.post_yield_ratio) * k_[j] * b.yield_disp * dzdd;
    }
    for (std::size_t j = 0; j < n_; ++j) {
      const double kup = j + 1 < n_ ? k_[j + 1] : 0.0;
      const double ktup = j + 1 < n_ ? kt_[j + 1] : 0.0;
      diag_[j] = c0 * m_[j] + c1 * (alpha_m_ * m_[j] + beta_k_ * (k_[j] + kup)) + kt_[j] + ktup;
      upper_[j] = j + 1 < n_ ? -(c1 * beta_k_ * kup + ktup) : 0.0;
      lower_[j] = j > 0 ? -(c1 * beta_k_ * k_[j] + kt_[j]) : 0.0;
    }
  }

  /// Thomas algorithm: solves T du = -r.
  void solve_tridiagonal(const std::vector<double>& r, std::vector<double>& x) {
    std::vector<double>& cprime = work_;
    double denom = diag_[0];
    cprime[0] = n_ > 1 ? upper_[0] / denom : 0.0;
    x[0] = -r[0] / denom;
    for (std::size_t j = 1; j < n_; ++j) {
      denom = diag_[j] - lower_[j] * cprime[j - 1];
      cprime[j] = j + 1 < n_ ? upper_[j] / denom : 0.0;
      x[j] = (-r[j] - lower_[j] * x[j - 1]) / denom;
    }
    for (std::size_t j = n_ - 1; j-- > 0;) x[j] -= cprime[j] * x[j + 1];
  }

  void commit(const State&, State& out, const std::vector<double>& u, double) {
    // at_, vt_, zt_, fs_ hold the values of the last residual evaluation at u.
    out.u = u;
    out.v = vt_;
    out.a = at_;
    out.z = zt_;
  }

  const StructuralModel& model_;
  const SolverConfig& cfg_;
  std::size_t n_;
  std::vector<double> m_, k_;
  std::vector<BoucWenParams> bw_;
  double alpha_m_ = 0.0, beta_k_ = 0.0;
  double disp_tol_ = 0.0, force_tol_ = 0.0;
  std::vector<double> r_, du_, ut_, vt_, at_, zt_, fs_, kt_, diag_, lower_, upper_, rtrial_, work_;
  State trial_;
};

void load_at(const ExcitationRealization& ex, double t, std::vector<double>& f) {
  const auto tn = ex.samples.cols();
  const double x = t / ex.dt;
  auto i0 = static_cast<Eigen::Index>(std::floor(x));
  if (i0 >= tn - 1) {
    for (Eigen::Index c = 0; c < ex.samples.rows(); ++c) f[static_cast<std::size_t>(c)] = ex.samples(c, tn - 1);
    return;
  }
  if (i0 < 0) i0 = 0;
  const double w = x - static_cast<double>(i0);
  for (Eigen::Index c = 0; c < ex.samples.rows(); ++c)
    f[static_cast<std::size_t>(c)] = (1.0 - w) * ex.samples(c, i0) + w * ex.samples(c, i0 + 1);
}

}  // namespace

ResponseRecord integrate(const StructuralModel& model, const ExcitationRealization& excitation,
                         const SolverConfig& cfg, const IntegrateOptions& options) {
  cfg.validate();
  const std::size_t n = model.n_dof();
  MFSS_REQUIRE(static_cast<std::size_t>(excitation.samples.rows()) == n, ErrorKind::Dimension,
               "integrate: excitation has " + std::to_string(excitation.samples.rows()) +
                   " channels, model has " + std::to_string(n) + " DOFs");
  MFSS_REQUIRE(excitation.samples.cols() >= 1 && excitation.dt > 0.0, ErrorKind::Dimension,
               "integrate: empty excitation");

  const double window = static_cast<double>(excitation.samples.cols()) * excitation.dt;
  const auto t_rec = static_cast<std::size_t>(std::llround(window / cfg.record_dt));
  const auto record_every = static_cast<std::size_t>(std::llround(cfg.record_dt / cfg.base_dt));
  const std::size_t n_steps = (t_rec - 1) * record_every;

  ResponseRecord rec;
  rec.dt_record = cfg.record_dt;
  rec.displacements.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_rec));
  if (options.record_velocity) rec.velocities.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_rec));
  if (options.record_story_forces)
    rec.story_forces.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t_rec));
  if (options.keep_log) rec.solver_log.reserve(n_steps);

  NewmarkSolver solver(model, cfg);
  State s{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
          std::vector<double>(n, 0.0)};
  if (options.initial_displacement) {
    MFSS_REQUIRE(static_cast<std::size_t>(options.initial_displacement->size()) == n, ErrorKind::Dimension,
                 "integrate: initial displacement size");
    for (std::size_t j = 0; j < n; ++j) s.u[j] = (*options.initial_displacement)[static_cast<Eigen::Index>(j)];
    // Hysteretic variable consistent with an elastic initial drift.
    for (std::size_t j = 0; j < n; ++j) {
      const double d = s.u[j] - (j > 0 ? s.u[j - 1] : 0.0);
      const auto& b = model.params().bouc_wen[j];
      s.z[j] = std::clamp(d / b.yield_disp, -1.0, 1.0);
    }
  }
  if (options.initial_velocity) {
    MFSS_REQUIRE(static_cast<std::size_t>(options.initial_velocity->size()) == n, ErrorKind::Dimension,
                 "integrate: initial velocity size");
    for (std::size_t j = 0; j < n; ++j) s.v[j] = (*options.initial_velocity)[static_cast<Eigen::Index>(j)];
  }
  std::vector<double> f(n), fs(n);
  load_at(excitation, 0.0, f);
  solver.initialize(s, f);

  auto record = [&](std::size_t col) {
    const auto c = static_cast<Eigen::Index>(col);
    for (std::size_t j = 0; j < n; ++j) {
      rec.displacements(static_cast<Eigen::Index>(j), c) = s.u[j];
      if (options.record_velocity) rec.velocities(static_cast<Eigen::Index>(j), c) = s.v[j];
    }
    if (options.record_story_forces) {
      solver.story_forces(s.u, s.z, fs);
      for (std::size_t j = 0; j < n; ++j) rec.story_forces(static_cast<Eigen::Index>(j), c) = fs[j];
    }
  };
  record(0);

  State next = s, sub = s, sub_next = s;
  const std::array<SolverStage, 4> stages{SolverStage::NewtonLineSearch, SolverStage::NewtonLineSearchFine,
                                          SolverStage::Newton, SolverStage::QuasiNewton};
  for (std::size_t step = 0; step < n_steps; ++step) {
    const double t0 = static_cast<double>(step) * cfg.base_dt;
    bool done = false;
    for (std::size_t si = static_cast<std::size_t>(cfg.first_stage) - 1; si < stages.size() && !done; ++si) {
      const int div = cfg.cascade_divisors[si];
      const double h = cfg.base_dt / div;
      sub = s;
      int total_iter = 0;
      bool ok = true;
      for (int k = 0; k < div; ++k) {
        load_at(excitation, t0 + h * (k + 1), f);
        const int it = solver.step(sub, sub_next, h, f, stages[si]);
        if (it < 0) {
          ok = false;
          break;
        }
        total_iter += it;
        std::swap(sub, sub_next);
      }
      if (ok) {
        next = sub;
        done = true;
        if (options.keep_log)
          rec.solver_log.push_back({stages[si], static_cast<float>(h),
                                    static_cast<std::uint16_t>(std::min(total_iter, 65535))});
      }
    }
    if (!done) {
      std::ostringstream msg;
      msg << "integrate: nonconvergence in every cascade stage at t = " << t0 + cfg.base_dt << " s";
      throw Error(ErrorKind::Convergence, msg.str());
    }
    std::swap(s, next);
    if ((step + 1) % record_every == 0) record((step + 1) / record_every);
  }
  return rec;
}

QoIVector quantity_of_interest(const Eigen::MatrixXd& y, std::span<const std::size_t> channels) {
  MFSS_REQUIRE(y.cols() > 0, ErrorKind::Dimension, "quantity_of_interest: empty record");
  QoIVector out;
  out.reserve(channels.size());
  for (std::size_t c : channels) {
    MFSS_REQUIRE(c < static_cast<std::size_t>(y.rows()), ErrorKind::Dimension,
                 "quantity_of_interest: channel " + std::to_string(c) + " out of range");
    out.push_back(y.row(static_cast<Eigen::Index>(c)).cwiseAbs().maxCoeff());
  }
  return out;
}

QoIVector quantity_of_interest(const ResponseRecord& response, std::span<const std::size_t> channels) {
  return quantity_of_interest(response.displacements, channels);
}

PiecewiseLinearFilter::PiecewiseLinearFilter(double w, double zeta, double dt) {
  MFSS_REQUIRE(w > 0.0 && zeta >= 0.0 && zeta < 1.0 && dt > 0.0, ErrorKind::Config,
               "PiecewiseLinearFilter: need w > 0, 0 <= zeta < 1, dt > 0");
  const double k = w * w;
  const double sq = std::sqrt(1.0 - zeta * zeta);
  const double wd = w * sq;
  const double e = std::exp(-zeta * w * dt);
  const double s = std::sin(wd * dt);
  const double c = std::cos(wd * dt);
  const double zs = zeta / sq;
  a_ = e * (zs * s + c);
  b_ = e * s / wd;
  c_ = (2.0 * zeta / (w * dt) + e * (((1.0 - 2.0 * zeta * zeta) / (wd * dt) - zs) * s -
                                     (1.0 + 2.0 * zeta / (w * dt)) * c)) / k;
  d_ = (1.0 - 2.0 * zeta / (w * dt) + e * ((2.0 * zeta * zeta - 1.0) / (wd * dt) * s +
                                          2.0 * zeta / (w * dt) * c)) / k;
  ap_ = -e * (w / sq) * s;
  bp_ = e * (c - zs * s);
  cp_ = (-1.0 / dt + e * ((w / sq + zeta / (dt * sq)) * s + c / dt)) / k;
  dp_ = (1.0 - e * (zs * s + c)) / (k * dt);
}

void PiecewiseLinearFilter::step(double& q, double& qdot, double p0, double p1) const {
  const double qn = a_ * q + b_ * qdot + c_ * p0 + d_ * p1;
  const double vn = ap_ * q + bp_ * qdot + cp_ * p0 + dp_ * p1;
  q = qn;
  qdot = vn;
}

double evaluate_sv(const StructuralModel& model, const ExcitationRealization& ex) {
  const std::size_t m = model.sv_modes();
  MFSS_REQUIRE(m >= 1, ErrorKind::Config, "evaluate_sv: modal cache is empty (sv_modes = 0)");
  MFSS_REQUIRE(static_cast<std::size_t>(ex.samples.rows()) == model.n_dof(), ErrorKind::Dimension,
               "evaluate_sv: excitation channels do not match model DOFs");
  const Eigen::MatrixXd phi = model.mode_shapes().leftCols(static_cast<Eigen::Index>(m));
  const Eigen::MatrixXd p = phi.transpose() * ex.samples;  // modal loads, m x t_n
  double peak = 0.0;
  std::vector<double> q(m, 0.0), qd(m, 0.0), coef_q(m), coef_v(m);
  std::vector<PiecewiseLinearFilter> filters;
  filters.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double w = 2.0 * std::numbers::pi * model.frequencies_hz()[ii];
    const double z = model.modal_damping()[ii];
    filters.emplace_back(w, z, ex.dt);
    coef_q[i] = model.moment_participation()[ii] * w * w;
    coef_v[i] = model.moment_participation()[ii] * 2.0 * z * w;
  }
  for (Eigen::Index t = 1; t < p.cols(); ++t) {
    double moment = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      filters[i].step(q[i], qd[i], p(ii, t - 1), p(ii, t));
      moment += coef_q[i] * q[i] + coef_v[i] * qd[i];
    }
    peak = std::max(peak, std::abs(moment));
  }
  return peak;
}

double evaluate_sv(const StructuralModel& model, const LoadSynthesizer& synth, const PhaseVector& theta) {
  return evaluate_sv(model, synth.synthesize(theta));
}

}  // namespace mfss
