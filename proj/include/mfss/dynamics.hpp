// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mfss/excitation.hpp"

namespace mfss {

/// Smooth hysteresis law for one story:
///   f = alpha * k * d + (1 - alpha) * k * u_y * z
///   dz/dt = (A d' - beta |d'| |z|^(n-1) z - gamma d' |z|^n) / u_y
struct BoucWenParams {
  double yield_disp = 0.01;      // u_y, m
  double post_yield_ratio = 0.1; // alpha
  double a = 1.0;
  double beta = 0.5;
  double gamma = 0.5;
  double n = 2.0;
};

struct RayleighCoefficients {
  double alpha_m = 0.0;  // 1/s
  double beta_k = 0.0;   // s
};

/// Two-frequency Rayleigh fit giving ratio `zeta` at f1 and f2.
RayleighCoefficients rayleigh_calibrate(double f1_hz, double f2_hz, double zeta);

/// Damping either fitted to two modes of the initial-stiffness system or given directly.
struct DampingSpec {
  double zeta = 0.025;
  std::size_t mode_i = 1;  // 1-based
  std::size_t mode_j = 2;
  std::optional<RayleighCoefficients> explicit_coefficients;
};

struct StructuralParams {
  std::vector<double> masses;     // kg per story, bottom to top
  std::vector<double> stiffness;  // N/m per story
  std::vector<BoucWenParams> bouc_wen;
  std::vector<double> heights;    // lever arm of each floor above the base, m
  DampingSpec damping;
  std::size_t sv_modes = 2;
};

/// Immutable shear-building model with a cached modal basis.
class StructuralModel {
 public:
  explicit StructuralModel(StructuralParams params);

  std::size_t n_dof() const { return params_.masses.size(); }
  const StructuralParams& params() const { return params_; }
  const RayleighCoefficients& rayleigh() const { return rayleigh_; }

  /// Natural frequencies (Hz) of all modes, ascending.
  const Eigen::VectorXd& frequencies_hz() const { return freq_hz_; }
  /// Mass-normalized mode shapes, one column per mode.
  const Eigen::MatrixXd& mode_shapes() const { return shapes_; }
  /// Modal damping ratios implied by the Rayleigh coefficients.
  const Eigen::VectorXd& modal_damping() const { return modal_zeta_; }
  /// Number of modes retained for the stratification variable.
  std::size_t sv_modes() const { return sv_modes_; }
  /// sum_j h_j m_j phi_jn for each mode.
  const Eigen::VectorXd& moment_participation() const { return moment_participation_; }

 private:
  StructuralParams params_;
  RayleighCoefficients rayleigh_;
  Eigen::VectorXd freq_hz_;
  Eigen::MatrixXd shapes_;
  Eigen::VectorXd modal_zeta_;
  Eigen::VectorXd moment_participation_;
  std::size_t sv_modes_ = 0;
};

/// Nonconvergence cascade stages, tried in order for each base step.
enum class SolverStage : std::uint8_t {
  NewtonLineSearch = 1,      // base step
  NewtonLineSearchFine = 2,  // base / 10
  Newton = 3,                // base / 20
  QuasiNewton = 4,           // base / 20, Broyden updates
};

struct SolverConfig {
  double base_dt = 0.01;
  double record_dt = 0.05;
  int max_iterations = 20;
  double disp_tol = 1e-9;   // relative to the smallest yield displacement
  double force_tol = 1e-7;  // relative to the smallest k * u_y
  int line_search_steps = 8;
  /// Sub-step divisors for the four cascade stages.
  std::array<int, 4> cascade_divisors{1, 10, 20, 20};
  /// Stage to start from; tests use it to exercise the later stages.
  SolverStage first_stage = SolverStage::NewtonLineSearch;

  void validate() const;
};

struct SolverStepLog {
  SolverStage stage;
  float sub_dt;
  std::uint16_t iterations;  // summed over sub-steps
};

struct ResponseRecord {
  Eigen::MatrixXd displacements;  // n_dof x t_n
  double dt_record = 0.0;
  std::vector<SolverStepLog> solver_log;  // one entry per base step
  Eigen::MatrixXd velocities;             // filled when requested
  Eigen::MatrixXd story_forces;           // hysteretic story forces, when requested
};

struct IntegrateOptions {
  bool record_velocity = false;
  bool record_story_forces = false;
  bool keep_log = true;
  std::optional<Eigen::VectorXd> initial_displacement;
  std::optional<Eigen::VectorXd> initial_velocity;
};

/// Newmark average-acceleration solution of M a + C v + f_nl(u, z) = F(t).
/// Throws Error(Convergence) carrying the failing time when every cascade stage fails.
ResponseRecord integrate(const StructuralModel& model, const ExcitationRealization& excitation,
                         const SolverConfig& config, const IntegrateOptions& options = {});

using QoIVector = std::vector<double>;

/// Peak absolute displacement per requested channel.
QoIVector quantity_of_interest(const ResponseRecord& response, std::span<const std::size_t> channels);
QoIVector quantity_of_interest(const Eigen::MatrixXd& displacements, std::span<const std::size_t> channels);

/// Peak elastic base moment max_t |sum_j h_j F_eff,j(t)| from truncated modal
/// superposition, where F_eff = M Phi (Omega^2 q + 2 zeta Omega q') is the
/// story inertia-plus-load resultant of the retained modes.
double evaluate_sv(const StructuralModel& model, const ExcitationRealization& excitation);
double evaluate_sv(const StructuralModel& model, const LoadSynthesizer& synth, const PhaseVector& theta);

/// Exact response of q'' + 2 zeta w q' + w^2 q = p(t) for p linear between samples.
class PiecewiseLinearFilter {
 public:
  PiecewiseLinearFilter(double omega, double zeta, double dt);
  /// Advances (q, qdot) from load p0 to p1 over one step.
  void step(double& q, double& qdot, double p0, double p1) const;

 private:
  double a_, b_, c_, d_, ap_, bp_, cp_, dp_;
};

}  // namespace mfss
