// SPDX-License-Identifier: Apache-2.0
#include "mfss/wavelet.hpp"

#include <cmath>
#include <string>

#include "mfss/error.hpp"

namespace mfss {

DaubechiesFilters daubechies(int order) {
  DaubechiesFilters f;
  switch (order) {
    case 1: f.dec_lo = {0.7071067811865476, 0.7071067811865476}; break;
    case 2:
      f.dec_lo = {-0.12940952255126037, 0.2241438680420134, 0.8365163037378079, 0.48296291314453416};
      break;
    case 3:
      f.dec_lo = {0.03522629188570953,  -0.08544127388202666, -0.13501102001025458,
                  0.45987750211849154, 0.8068915093110925,   0.33267055295008263};
      break;
    case 4:
      f.dec_lo = {-0.010597401785069032, 0.0328830116668852,   0.030841381835560764, -0.18703481171909309,
                  -0.027983769416859854, 0.6308807679298589,   0.7148465705529157,   0.2303778133088965};
      break;
    default: throw Error(ErrorKind::Config, "wavelet: Daubechies order must be 1..4, got " + std::to_string(order));
  }
  const std::size_t n = f.dec_lo.size();
  f.dec_hi.resize(n);
  f.rec_lo.resize(n);
  f.rec_hi.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    f.dec_hi[k] = ((k % 2) ? 1.0 : -1.0) * f.dec_lo[n - 1 - k];
    f.rec_lo[k] = f.dec_lo[n - 1 - k];
  }
  for (std::size_t k = 0; k < n; ++k) f.rec_hi[k] = f.dec_hi[n - 1 - k];
  return f;
}

int WaveletConfig::max_level(std::size_t n, int order) {
  const std::size_t f = 2 * static_cast<std::size_t>(order);
  if (n < f - 1) return 0;
  return static_cast<int>(std::floor(std::log2(static_cast<double>(n) / static_cast<double>(f - 1))));
}

WaveletConfig WaveletConfig::make(std::size_t original_len, int level, int order) {
  daubechies(order);  // validates order
  MFSS_REQUIRE(level >= 1, ErrorKind::Config, "wavelet: level must be >= 1");
  const int lmax = max_level(original_len, order);
  MFSS_REQUIRE(level <= lmax, ErrorKind::Config,
               "wavelet: sequence of length " + std::to_string(original_len) + " is too short for level " +
                   std::to_string(level) + " (max " + std::to_string(lmax) + ")");
  WaveletConfig c;
  c.order = order;
  c.level = level;
  c.original_len = original_len;
  const std::size_t flen = 2 * static_cast<std::size_t>(order);
  c.band_lengths.push_back(original_len);
  for (int l = 0; l < level; ++l) c.band_lengths.push_back((c.band_lengths.back() + flen - 1) / 2);
  c.compressed_len = c.band_lengths.back();
  return c;
}

namespace {

inline double sym_at(std::span<const double> x, long idx) {
  const long n = static_cast<long>(x.size());
  // Half-sample symmetric reflection, repeated for short signals.
  for (;;) {
    if (idx < 0) idx = -idx - 1;
    else if (idx >= n) idx = 2 * n - idx - 1;
    else return x[static_cast<std::size_t>(idx)];
  }
}

}  // namespace

void dwt_step(std::span<const double> x, const DaubechiesFilters& f, std::vector<double>& ca, std::vector<double>& cd) {
  const long flen = static_cast<long>(f.length());
  const std::size_t out = (x.size() + f.length() - 1) / 2;
  ca.assign(out, 0.0);
  cd.assign(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    double a = 0.0, d = 0.0;
    const long base = 2 * static_cast<long>(o) + 1;
    for (long j = 0; j < flen; ++j) {
      const double v = sym_at(x, base - j);
      a += f.dec_lo[static_cast<std::size_t>(j)] * v;
      d += f.dec_hi[static_cast<std::size_t>(j)] * v;
    }
    ca[o] = a;
    cd[o] = d;
  }
}

std::vector<double> idwt_step(std::span<const double> ca, std::span<const double> cd, const DaubechiesFilters& f) {
  MFSS_REQUIRE(ca.size() == cd.size(), ErrorKind::Dimension, "wavelet: band length mismatch");
  const long flen = static_cast<long>(f.length());
  const long n = static_cast<long>(ca.size());
  const long out_len = 2 * n - flen + 2;
  MFSS_REQUIRE(out_len > 0, ErrorKind::Dimension, "wavelet: band too short to invert");
  std::vector<double> y(static_cast<std::size_t>(out_len), 0.0);
  for (long t = 0; t < out_len; ++t) {
    // Full upsampled convolution, cropped by F - 2 on the left.
    const long p = t + flen - 2;
    double s = 0.0;
    for (long i = std::max(0L, (p - flen + 2) / 2); i < n; ++i) {
      const long k = p - 2 * i;
      if (k < 0) break;
      if (k >= flen) continue;
      s += ca[static_cast<std::size_t>(i)] * f.rec_lo[static_cast<std::size_t>(k)] +
           cd[static_cast<std::size_t>(i)] * f.rec_hi[static_cast<std::size_t>(k)];
    }
    y[static_cast<std::size_t>(t)] = s;
  }
  return y;
}

WaveletBands wavedec(std::span<const double> x, const WaveletConfig& cfg) {
  MFSS_REQUIRE(x.size() == cfg.original_len, ErrorKind::Dimension,
               "wavelet: sequence length " + std::to_string(x.size()) + " != configured " +
                   std::to_string(cfg.original_len));
  const auto f = daubechies(cfg.order);
  WaveletBands details;
  std::vector<double> a(x.begin(), x.end()), ca, cd;
  for (int l = 0; l < cfg.level; ++l) {
    dwt_step(a, f, ca, cd);
    details.push_back(cd);
    a.swap(ca);
  }
  WaveletBands bands{a};
  for (auto it = details.rbegin(); it != details.rend(); ++it) bands.push_back(std::move(*it));
  return bands;
}

std::vector<double> waverec(const WaveletBands& bands, const WaveletConfig& cfg) {
  MFSS_REQUIRE(bands.size() == static_cast<std::size_t>(cfg.level) + 1, ErrorKind::Dimension,
               "wavelet: band count does not match level");
  const auto f = daubechies(cfg.order);
  std::vector<double> a = bands[0];
  MFSS_REQUIRE(a.size() == cfg.compressed_len, ErrorKind::Dimension, "wavelet: approximation length mismatch");
  for (int l = 0; l < cfg.level; ++l) {
    const auto& d = bands[static_cast<std::size_t>(l) + 1];
    MFSS_REQUIRE(d.size() == a.size(), ErrorKind::Dimension, "wavelet: detail length mismatch");
    a = idwt_step(a, d, f);
    // Trim the odd-length overhang to the stored input length of this level.
    const std::size_t target = cfg.band_lengths[static_cast<std::size_t>(cfg.level - l - 1)];
    if (a.size() > target) a.resize(target);
  }
  return a;
}

std::vector<double> wavelet_compress(std::span<const double> seq, const WaveletConfig& cfg) {
  MFSS_REQUIRE(seq.size() == cfg.original_len, ErrorKind::Dimension, "wavelet: sequence length mismatch");
  const auto f = daubechies(cfg.order);
  std::vector<double> a(seq.begin(), seq.end()), ca, cd;
  for (int l = 0; l < cfg.level; ++l) {
    dwt_step(a, f, ca, cd);
    a.swap(ca);
  }
  return a;
}

std::vector<double> wavelet_reconstruct(std::span<const double> approx, const WaveletConfig& cfg) {
  MFSS_REQUIRE(approx.size() == cfg.compressed_len, ErrorKind::Dimension, "wavelet: approximation length mismatch");
  WaveletBands bands{std::vector<double>(approx.begin(), approx.end())};
  for (int l = cfg.level; l >= 1; --l)
    bands.emplace_back(cfg.band_lengths[static_cast<std::size_t>(l)], 0.0);
  return waverec(bands, cfg);
}

}  // namespace mfss
