// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mfss {

/// Orthogonal Daubechies filter bank (orders 1-4), coefficients as tabulated by PyWavelets.
struct DaubechiesFilters {
  std::vector<double> dec_lo, dec_hi, rec_lo, rec_hi;
  std::size_t length() const { return dec_lo.size(); }
};

DaubechiesFilters daubechies(int order);

/// Multilevel decomposition settings. Boundaries use symmetric (half-sample)
/// extension, so a level-j band has floor((n_{j-1} + F - 1) / 2) coefficients.
struct WaveletConfig {
  int order = 4;
  int level = 4;
  std::size_t original_len = 0;
  std::size_t compressed_len = 0;  // approximation band length, tau_n
  std::vector<std::size_t> band_lengths;  // lengths of the approximation input at each level, n_0..n_level

  static WaveletConfig make(std::size_t original_len, int level, int order = 4);
  /// Deepest level with at least one full filter support, floor(log2(n / (F - 1))).
  static int max_level(std::size_t n, int order);
};

/// Bands ordered [cA_L, cD_L, cD_{L-1}, ..., cD_1].
using WaveletBands = std::vector<std::vector<double>>;

void dwt_step(std::span<const double> x, const DaubechiesFilters& f, std::vector<double>& ca, std::vector<double>& cd);
/// Inverse single level; output has 2 n - F + 2 samples.
std::vector<double> idwt_step(std::span<const double> ca, std::span<const double> cd, const DaubechiesFilters& f);

WaveletBands wavedec(std::span<const double> x, const WaveletConfig& cfg);
std::vector<double> waverec(const WaveletBands& bands, const WaveletConfig& cfg);

/// Approximation coefficients at the configured level.
std::vector<double> wavelet_compress(std::span<const double> seq, const WaveletConfig& cfg);
/// Inverse transform with every detail band zeroed.
std::vector<double> wavelet_reconstruct(std::span<const double> approx, const WaveletConfig& cfg);

}  // namespace mfss
