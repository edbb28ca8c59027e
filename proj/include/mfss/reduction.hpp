// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include <json.hpp>

namespace mfss {

/// POD basis shared by the input and output reduced spaces.
struct ReducedBasis {
  Eigen::MatrixXd phi;              // n x n_r, orthonormal columns
  Eigen::VectorXd singular_values;  // lambda_1..lambda_{n_r}
  Eigen::VectorXd all_singular_values;
  double eta = 1.0;
  double energy_ratio = 1.0;  // sum_{l<=n_r} lambda^2 / sum lambda^2
  std::size_t n_t = 0;
  /// Per-mode average-peak normalization of reduced input and output sequences.
  Eigen::VectorXd input_scale, output_scale;

  std::size_t n_full() const { return static_cast<std::size_t>(phi.rows()); }
  std::size_t n_reduced() const { return static_cast<std::size_t>(phi.cols()); }

  nlohmann::json to_json() const;
  static ReducedBasis from_json(const nlohmann::json& j);
};

/// Snapshot columns at t = floor((i + 1/2) t_n / m), i < m, for m = n_t / responses.size()
/// per response, concatenated in response order.
Eigen::MatrixXd build_snapshot_matrix(const std::vector<Eigen::MatrixXd>& responses, std::size_t n_t);

/// Thin SVD of X truncated at the smallest n_r reaching energy fraction eta.
/// Singular values below max(n, m) * eps * lambda_1 count as zero.
ReducedBasis pod_truncate(const Eigen::MatrixXd& x, double eta);

Eigen::MatrixXd project_input(const ReducedBasis& b, const Eigen::MatrixXd& load);
Eigen::MatrixXd project_output(const ReducedBasis& b, const Eigen::MatrixXd& response);
Eigen::MatrixXd lift(const ReducedBasis& b, const Eigen::MatrixXd& reduced);

/// Sets input_scale/output_scale to the mean over samples of max_t |p_l(t)| and
/// max_t |q_l(t)|; modes with zero mean peak get scale 1.
void fit_normalization(ReducedBasis& b, const std::vector<Eigen::MatrixXd>& reduced_inputs,
                       const std::vector<Eigen::MatrixXd>& reduced_outputs);

}  // namespace mfss
