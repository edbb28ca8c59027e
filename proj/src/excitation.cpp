// SPDX-License-Identifier: Apache-2.0
#include "mfss/excitation.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "mfss/error.hpp"

namespace mfss {

void SpectralLoadModel::validate() const {
  MFSS_REQUIRE(n_channels >= 1, ErrorKind::Config, "excitation: n_channels must be >= 1");
  MFSS_REQUIRE(n_freq >= 1, ErrorKind::Config, "excitation: n_freq must be >= 1");
  MFSS_REQUIRE(dt > 0.0 && std::isfinite(dt), ErrorKind::Config, "excitation: dt must be > 0");
  MFSS_REQUIRE(duration > 0.0 && std::isfinite(duration), ErrorKind::Config,
               "excitation: duration must be > 0");
  MFSS_REQUIRE(psd.size() == n_channels, ErrorKind::Config,
               "excitation: need one psd entry per channel");
  for (const auto& p : psd) {
    MFSS_REQUIRE(p.intensity >= 0.0 && p.corner_hz > 0.0, ErrorKind::Config,
                 "excitation: psd intensity must be >= 0 and corner frequency > 0");
  }
  MFSS_REQUIRE(coherence_decay >= 0.0, ErrorKind::Config,
               "excitation: coherence_decay must be >= 0");
  MFSS_REQUIRE(envelope.ramp_up_s >= 0.0 && envelope.ramp_down_s >= 0.0 &&
                   envelope.tail_zero_s >= 0.0,
               ErrorKind::Config, "excitation: envelope durations must be >= 0");
  MFSS_REQUIRE(duration >= envelope.ramp_up_s + envelope.ramp_down_s + envelope.tail_zero_s,
               ErrorKind::Config, "excitation: envelope longer than duration");
}

std::size_t SpectralLoadModel::n_steps() const {
  return static_cast<std::size_t>(std::llround(duration / dt));
}

double SpectralLoadModel::psd_value(std::size_t channel, double f_hz) const {
  const auto& p = psd.at(channel);
  const double r = f_hz / p.corner_hz;
  return p.intensity / (1.0 + r * r);
}

double SpectralLoadModel::discrete_variance(std::size_t channel) const {
  double v = 0.0;
  for (std::size_t k = 1; k <= n_freq; ++k) v += psd_value(channel, frequency(k)) * delta_f();
  return v;
}

PhaseVector sample_phases(RandomStream& stream, const SpectralLoadModel& model) {
  PhaseVector theta;
  theta.values.resize(model.n_phases());
  for (auto& v : theta.values) v = 2.0 * std::numbers::pi * stream.uniform();
  return theta;
}

PhaseVector sample_phases(const SpectralLoadModel& model, std::uint64_t seed,
                          std::uint64_t substream_id, std::uint64_t index) {
  RandomStream stream(seed, substream_id, index);
  return sample_phases(stream, model);
}

double envelope_weight(const Envelope& env, double t, double series_duration) {
  const double end_plateau = series_duration - env.tail_zero_s - env.ramp_down_s;
  const double end_ramp_down = series_duration - env.tail_zero_s;
  if (t >= end_ramp_down - 1e-12 * series_duration) return 0.0;
  double w = 1.0;
  if (env.ramp_up_s > 0.0 && t < env.ramp_up_s) w = t / env.ramp_up_s;
  if (env.ramp_down_s > 0.0 && t > end_plateau) w = std::min(w, (end_ramp_down - t) / env.ramp_down_s);
  return w;
}

Eigen::MatrixXd apply_envelope(const Eigen::MatrixXd& series, double dt, const Envelope& env) {
  const double span = static_cast<double>(series.cols()) * dt;
  MFSS_REQUIRE(env.ramp_up_s + env.ramp_down_s + env.tail_zero_s <= span * (1.0 + 1e-12),
               ErrorKind::Config, "apply_envelope: envelope longer than series");
  // The last sample sits at (t_n - 1) dt; with a tail it must be forced to zero even
  // when tail_zero_s < dt.
  Eigen::MatrixXd out = series;
  for (Eigen::Index i = 0; i < series.cols(); ++i) {
    double w = envelope_weight(env, static_cast<double>(i) * dt, span);
    if (env.tail_zero_s > 0.0 && i + 1 == series.cols()) w = 0.0;
    out.col(i) *= w;
  }
  return out;
}

namespace {

// Cholesky of the coherence matrix; tolerates the rank-deficient c = 0 case.
Eigen::MatrixXd coherence_factor(std::size_t n, double decay) {
  Eigen::MatrixXd g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      g(i, j) = std::exp(-decay * std::abs(static_cast<double>(i) - static_cast<double>(j)));
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = g(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d <= 1e-14) continue;  // dependent direction
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = g(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

}  // namespace

LoadSynthesizer::LoadSynthesizer(SpectralLoadModel model) : model_(std::move(model)) {
  model_.validate();
  coherence_factor_ = coherence_factor(model_.n_channels, model_.coherence_decay);
  amplitude_.resize(static_cast<Eigen::Index>(model_.n_channels),
                    static_cast<Eigen::Index>(model_.n_freq));
  for (std::size_t c = 0; c < model_.n_channels; ++c)
    for (std::size_t k = 1; k <= model_.n_freq; ++k)
      amplitude_(c, k - 1) =
          std::sqrt(2.0 * model_.psd_value(c, model_.frequency(k)) * model_.delta_f());
}

ExcitationRealization LoadSynthesizer::synthesize_stationary(const PhaseVector& theta) const {
  const std::size_t nc = model_.n_channels;
  const std::size_t nf = model_.n_freq;
  MFSS_REQUIRE(theta.values.size() == nc * nf, ErrorKind::Dimension,
               "synthesize: phase vector has " + std::to_string(theta.values.size()) +
                   " entries, model expects " + std::to_string(nc * nf));

  // sum_k A_k cos(2 pi f_k t_i + phi) with f_k t_i = k i / (2 n_freq) is the real
  // part of a length-2n_freq inverse DFT.
  const std::size_t m = 2 * nf;
  const std::size_t tn = model_.n_steps();
  thread_local Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);

  std::vector<std::complex<double>> unit(nc * nf);
  for (std::size_t j = 0; j < nc * nf; ++j) unit[j] = std::polar(1.0, theta.values[j]);

  ExcitationRealization out;
  out.dt = model_.dt;
  out.samples.resize(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(tn));
  std::vector<std::complex<double>> spec(m), time(m);
  for (std::size_t c = 0; c < nc; ++c) {
    std::fill(spec.begin(), spec.end(), std::complex<double>{});
    for (std::size_t src = 0; src <= c; ++src) {
      const double l = coherence_factor_(c, src);
      if (l == 0.0) continue;
      for (std::size_t k = 0; k < nf; ++k) spec[k + 1] += l * unit[src * nf + k];
    }
    for (std::size_t k = 0; k < nf; ++k) spec[k + 1] *= amplitude_(c, k);
    fft.inv(time, spec);
    for (std::size_t i = 0; i < tn; ++i)
      out.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = time[i % m].real();
  }
  return out;
}

ExcitationRealization LoadSynthesizer::synthesize(const PhaseVector& theta) const {
  ExcitationRealization out = synthesize_stationary(theta);
  out.samples = apply_envelope(out.samples, out.dt, model_.envelope);
  return out;
}

ExcitationRealization synthesize(const SpectralLoadModel& model, const PhaseVector& theta) {
  return LoadSynthesizer(model).synthesize(theta);
}

}  // namespace mfss
