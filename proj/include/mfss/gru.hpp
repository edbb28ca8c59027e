// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace mfss {

/// Single-layer gated recurrent unit with a fully connected head applied at
/// every step. Gate layout follows the common (z, r, n) convention:
///   z = sigm(W_z x + b_iz + U_z h + b_hz)
///   r = sigm(W_r x + b_ir + U_r h + b_hr)
///   n = tanh(W_n x + b_in + r * (U_n h + b_hn))
///   h' = (1 - z) * n + z * h
///   y = W_o dropout(h') + b_o
class GruNetwork {
 public:
  GruNetwork() = default;
  GruNetwork(std::size_t n_in, std::size_t hidden, std::size_t n_out);

  std::size_t n_in() const { return n_in_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t n_out() const { return n_out_; }
  std::size_t n_params() const { return static_cast<std::size_t>(params_.size()); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  /// Uniform(-1/sqrt(h), 1/sqrt(h)) initialization from a counter-based stream.
  void initialize(std::uint64_t seed);

  /// Inference on one sequence (n_in x T); no dropout.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  /// Mean squared error over a batch of equal-length sequences and its gradient.
  /// With dropout > 0 an inverted dropout mask drawn from (seed, stream_index)
  /// is applied to the hidden state feeding the head.
  double loss_and_gradient(const std::vector<const Eigen::MatrixXd*>& inputs,
                           const std::vector<const Eigen::MatrixXd*>& targets, Eigen::VectorXd& grad,
                           double dropout = 0.0, std::uint64_t seed = 0, std::uint64_t stream_index = 0) const;

  /// Loss only, no dropout.
  double loss(const std::vector<const Eigen::MatrixXd*>& inputs,
              const std::vector<const Eigen::MatrixXd*>& targets) const;

  nlohmann::json to_json() const;
  static GruNetwork from_json(const nlohmann::json& j);

 private:
  struct Views;
  Views views(const Eigen::VectorXd& p) const;

  std::size_t n_in_ = 0, hidden_ = 0, n_out_ = 0;
  Eigen::VectorXd params_;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

}  // namespace mfss
