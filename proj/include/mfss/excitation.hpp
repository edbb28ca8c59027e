// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mfss/rng.hpp"

namespace mfss {

/// One-sided low-pass spectrum G(f) = intensity / (1 + (f / corner_hz)^2).
struct PsdParams {
  double intensity = 1.0;  // units^2 / Hz
  double corner_hz = 1.0;
};

/// Linear ramp-up, unity plateau, linear ramp-down, zero tail.
struct Envelope {
  double ramp_up_s = 0.0;
  double ramp_down_s = 0.0;
  double tail_zero_s = 0.0;
};

/// Multi-channel Gaussian load model driven by uniform random phases.
///
/// Frequencies are f_k = k * f_nyq / n_freq for k = 1..n_freq with
/// f_nyq = 1 / (2 dt). Cross-channel coherence is exp(-coherence_decay * |i - j|)
/// at every frequency. Phases are laid out channel-major:
/// theta[m * n_freq + k - 1] drives component k of independent source m.
struct SpectralLoadModel {
  std::size_t n_channels = 1;
  double dt = 0.05;
  double duration = 30.0;
  std::vector<PsdParams> psd;  // one per channel
  double coherence_decay = 0.0;
  std::size_t n_freq = 256;
  Envelope envelope;

  void validate() const;
  std::size_t n_steps() const;   // round(duration / dt)
  std::size_t n_phases() const { return n_channels * n_freq; }
  double nyquist_hz() const { return 0.5 / dt; }
  double delta_f() const { return nyquist_hz() / static_cast<double>(n_freq); }
  double frequency(std::size_t k) const { return static_cast<double>(k) * delta_f(); }
  double psd_value(std::size_t channel, double f_hz) const;
  /// Variance the synthesized process carries per channel: sum_k G(f_k) df.
  double discrete_variance(std::size_t channel) const;
};

struct PhaseVector {
  std::vector<double> values;  // angles in [0, 2pi)
};

struct ExcitationRealization {
  Eigen::MatrixXd samples;  // n_channels x t_n
  double dt = 0.0;
};

/// Draws n_channels * n_freq i.i.d. uniform phases from the stream.
PhaseVector sample_phases(RandomStream& stream, const SpectralLoadModel& model);
/// Phases for Phase-I style sample `index` under `seed` and substream.
PhaseVector sample_phases(const SpectralLoadModel& model, std::uint64_t seed,
                          std::uint64_t substream_id, std::uint64_t index);

/// Multiplies each channel by the envelope evaluated at t_i = i * dt.
/// Throws if the envelope does not fit in t_n * dt.
Eigen::MatrixXd apply_envelope(const Eigen::MatrixXd& series, double dt, const Envelope& envelope);
double envelope_weight(const Envelope& envelope, double t, double series_duration);

/// Precomputes amplitudes and the coherence factor; immutable afterwards and
/// safe to share across threads.
class LoadSynthesizer {
 public:
  explicit LoadSynthesizer(SpectralLoadModel model);

  const SpectralLoadModel& model() const { return model_; }

  /// Stationary realization before the envelope is applied.
  ExcitationRealization synthesize_stationary(const PhaseVector& theta) const;
  /// Full realization with the envelope applied last.
  ExcitationRealization synthesize(const PhaseVector& theta) const;

 private:
  SpectralLoadModel model_;
  Eigen::MatrixXd coherence_factor_;  // lower triangular, rows sum-of-squares to 1
  Eigen::MatrixXd amplitude_;         // n_channels x n_freq, sqrt(2 G(f_k) df)
};

/// Convenience wrapper over LoadSynthesizer.
ExcitationRealization synthesize(const SpectralLoadModel& model, const PhaseVector& theta);

}  // namespace mfss
