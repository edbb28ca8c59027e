// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfss/gru.hpp"
#include "mfss/reduction.hpp"
#include "mfss/strata.hpp"
#include "mfss/wavelet.hpp"

namespace mfss {

struct TrainConfig {
  std::size_t hidden = 200;
  double dropout = 0.5;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 300;
  std::size_t batch_size = 16;
  double validation_fraction = 0.2;
  std::size_t patience = 40;  // epochs without validation improvement
  double grad_clip = 1.0;     // global-norm clip, 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainStats {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

/// Compressed, normalized reduced sequences (n_r x tau_n each).
struct SequencePair {
  Eigen::MatrixXd input, target;
};

/// Adam/MSE training with a held-out validation split and early stopping on
/// the validation loss; the best weights are restored at the end.
GruNetwork train_network(const std::vector<SequencePair>& data, const TrainConfig& cfg, TrainStats* stats = nullptr);

/// POD + wavelet + GRU low-fidelity model.
class SurrogateModel {
 public:
  ReducedBasis basis;
  WaveletConfig wavelet;
  GruNetwork network;
  nlohmann::json provenance = nlohmann::json::object();

  Eigen::MatrixXd encode_input(const Eigen::MatrixXd& load) const;
  Eigen::MatrixXd encode_output(const Eigen::MatrixXd& response) const;
  /// Reduced displacement history q (n_r x t_n), denormalized.
  Eigen::MatrixXd predict_reduced(const Eigen::MatrixXd& load) const;
  /// Full displacement history Phi q (n x t_n).
  Eigen::MatrixXd predict(const Eigen::MatrixXd& load) const;

  nlohmann::json to_json() const;
  static SurrogateModel from_json(const nlohmann::json& j);
};

/// Normalizes with `basis` fitted to this data, builds the wavelet config and trains.
SurrogateModel train_surrogate(const std::vector<Eigen::MatrixXd>& loads, const std::vector<Eigen::MatrixXd>& responses,
                               ReducedBasis basis, int wavelet_level, int wavelet_order, const TrainConfig& cfg,
                               TrainStats* stats = nullptr);

struct WeightedCorrelation {
  double rho_v = 0.0;
  std::vector<double> rho_l;     // NaN for excluded modes
  std::vector<bool> excluded;    // zero-variance modes
};

/// rho_v = sum lambda_l rho_l / sum lambda_l over modes with nonzero peak variance.
/// Peaks are samples x modes.
WeightedCorrelation weighted_correlation(const Eigen::MatrixXd& hf_peaks, const Eigen::MatrixXd& lf_peaks,
                                         const Eigen::VectorXd& lambda);

struct CorrelationReport {
  double rho_mean = 0.0;        // mean of fold rho_v
  double delta = 0.0;           // COV of fold rho_v (sample std / mean)
  std::vector<double> fold_rho;
  std::vector<double> per_mode;  // fold-averaged rho_l
  std::size_t k = 0;

  nlohmann::json to_json() const;
};

struct FoldPeaks {
  Eigen::MatrixXd hf, lf;  // held-out samples x modes
};

/// Trains on `train` and returns peak reduced responses of HF and LF on `test`.
using FoldRunner = std::function<FoldPeaks(const std::vector<std::size_t>& train, const std::vector<std::size_t>& test)>;

/// Seeded permutation split into k contiguous folds; folds may run concurrently.
CorrelationReport kfold_cv(std::size_t n_samples, std::size_t k, const Eigen::VectorXd& lambda, std::uint64_t seed,
                           const FoldRunner& run, std::size_t workers = 1);

struct AdaptiveConfig {
  std::size_t n_init = 3;
  std::size_t n_add = 1;
  double rho_target = 0.9;
  double delta_target = 0.05;
  std::size_t max_iterations = 20;
  std::size_t k_folds = 5;

  void validate() const;
};

struct AdaptiveStep {
  std::size_t iteration = 0;
  std::size_t n_train = 0;        // per stratum
  std::size_t total_samples = 0;  // across strata
  double rho = 0.0;
  double delta = 0.0;
};

struct AdaptiveOutcome {
  bool converged = false;
  std::size_t i_train = 0;
  std::size_t n_train = 0;  // per stratum
  CorrelationReport report;
  std::vector<AdaptiveStep> trajectory;
};

/// acquire(n) adds n samples per stratum; evaluate() cross-validates the
/// current sample set. Stops when rho >= target and delta <= target or after
/// max_iterations additions.
AdaptiveOutcome adaptive_loop(const AdaptiveConfig& cfg, std::size_t n_strata,
                              const std::function<void(std::size_t)>& acquire,
                              const std::function<CorrelationReport()>& evaluate);

/// Throws Error(Convergence) listing the trajectory when the loop did not converge.
void require_converged(const AdaptiveOutcome& outcome, const AdaptiveConfig& cfg);

std::string trajectory_csv(const std::vector<AdaptiveStep>& steps);

/// Everything adaptive_train needs from the outside world.
struct AdaptiveTrainContext {
  std::function<Eigen::MatrixXd(std::uint64_t)> load;      // excitation for sample index
  std::function<Eigen::MatrixXd(std::uint64_t)> hf;        // HF displacements for sample index
  std::function<void(std::uint64_t, std::size_t)> on_hf;   // ledger hook (index, stratum)
  std::size_t snapshots_per_sample = 120;
  double eta = 0.999;
  int wavelet_level = 4;
  int wavelet_order = 4;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct AdaptiveTrainResult {
  SurrogateModel model;
  AdaptiveOutcome outcome;
  std::vector<std::uint64_t> train_indices;  // stratum-major draw order
};

/// Draws training samples from the strata (train ledger), runs HF, cross-validates
/// with a basis built on all accumulated responses, and retrains on everything
/// once the targets are met. On failure the outcome is still returned with
/// converged = false and no final retrain.
AdaptiveTrainResult adaptive_train(Stratification& strat, const AdaptiveTrainContext& ctx, const AdaptiveConfig& acfg,
                                   const TrainConfig& tcfg);

}  // namespace mfss
