// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "mfss/error.hpp"
#include "mfss/strata.hpp"

using namespace mfss;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  double lo = -10, hi = 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double gaussian_sv(std::uint64_t seed, std::uint64_t i) {
  RandomStream s(seed, substream::kPhase1, i);
  const double u1 = 1.0 - s.uniform(), u2 = s.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double uniform_sv(std::uint64_t seed, std::uint64_t i) { return RandomStream(seed, substream::kPhase1, i).uniform(); }

}  // namespace

TEST_CASE("phase1 is deterministic and schedule independent") {
  auto f = [](std::uint64_t i) { return gaussian_sv(5, i); };
  auto a = phase1_sample(10, 5, f, 1);
  auto b = phase1_sample(10, 5, f, 1);
  auto c = phase1_sample(10, 5, f, 4);
  CHECK(a.sv_values == b.sv_values);
  CHECK(a.sv_values == c.sv_values);
  auto d = phase1_sample(50, 5, [](std::uint64_t) { return 2.5; });
  CHECK(std::all_of(d.sv_values.begin(), d.sv_values.end(), [](double v) { return v == 2.5; }));
}

TEST_CASE("phase1 failures carry the sample index") {
  auto f = [](std::uint64_t i) -> double {
    if (i == 13) throw Error(ErrorKind::Convergence, "boom");
    return 1.0;
  };
  try {
    phase1_sample(40, 1, f, 3);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Convergence);
    CHECK(std::string(e.what()).find("sample 13") != std::string::npos);
  }
}

TEST_CASE("Gaussian toy SV: 1e-2 upper quantile within 3 bootstrap SE") {
  const std::size_t n = 100000;
  auto r = phase1_sample(n, 21, [](std::uint64_t i) { return gaussian_sv(21, i); }, 2);
  auto upper_quantile = [&](const std::vector<double>& v) {
    std::vector<double> s = v;
    const std::size_t pos = n - 1000;
    std::nth_element(s.begin(), s.begin() + pos, s.end());
    return s[pos];
  };
  const double q = upper_quantile(r.sv_values);
  RandomStream boot(99, 0, 0);
  double s1 = 0, s2 = 0;
  const int b = 100;
  std::vector<double> resample(n);
  for (int k = 0; k < b; ++k) {
    for (auto& x : resample) x = r.sv_values[boot.uniform_index(n)];
    const double qb = upper_quantile(resample);
    s1 += qb;
    s2 += qb * qb;
  }
  const double se = std::sqrt(s2 / b - (s1 / b) * (s1 / b));
  CHECK(std::abs(q - normal_quantile(0.99)) < 3.0 * se);
}

TEST_CASE("published strata table bookkeeping") {
  const std::vector<std::size_t> counts{9214, 409884, 1727907, 1992292, 1149570, 472190, 164928, 52417, 15599, 5999};
  const double printed[] = {0.0015, 0.0683, 0.2880, 0.3320, 0.1916, 0.0787, 0.0275, 0.0087, 0.0026, 0.0010};
  auto p = probabilities_from_counts(counts, 6000000);
  for (int k = 0; k < 10; ++k) CHECK(std::round(p[k] * 1e4) / 1e4 == doctest::Approx(printed[k]).epsilon(1e-12));
  CHECK_THROWS_AS(probabilities_from_counts(counts, 6000001), Error);
}

TEST_CASE("single stratum") {
  auto r = phase1_sample(1000, 2, [](std::uint64_t i) { return uniform_sv(2, i); });
  StrataSpec spec;
  spec.n_strata = 1;
  auto s = build_strata(r, spec);
  REQUIRE(s.n_strata() == 1);
  CHECK(s.probability(0) == 1.0);
  CHECK(s.pool(0).size() == 1000);
}

TEST_CASE("uniform SV, four equal-probability strata") {
  const std::size_t n = 1000000;
  auto r = phase1_sample(n, 3, [](std::uint64_t i) { return uniform_sv(3, i); }, 2);
  StrataSpec spec;
  spec.n_strata = 4;
  spec.tail_exceedance = 0.25;
  auto s = build_strata(r, spec);
  auto b = s.boundaries();
  REQUIRE(b.size() == 5);
  CHECK(std::isinf(b[0]));
  CHECK(std::isinf(b[4]));
  CHECK(std::abs(b[1] - 0.25) < 0.005);
  CHECK(std::abs(b[2] - 0.50) < 0.005);
  CHECK(std::abs(b[3] - 0.75) < 0.005);

  // Partition and exact probability sum.
  std::size_t total = 0;
  std::vector<int> seen(n, 0);
  for (std::size_t k = 0; k < 4; ++k) {
    total += s.count(k);
    for (auto i : s.pool(k)) {
      ++seen[i];
      CHECK_FALSE((r.sv_values[i] < b[k] || r.sv_values[i] >= b[k + 1]));
    }
  }
  CHECK(total == n);
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  // Quantile consistency of the final bound.
  const auto exceed = std::count_if(r.sv_values.begin(), r.sv_values.end(), [&](double v) { return v >= b[3]; });
  CHECK(std::abs(static_cast<double>(exceed) / n - 0.25) <= 1.0 / n);
}

TEST_CASE("tail feasibility and empty strata are rejected") {
  auto r = phase1_sample(5000, 4, [](std::uint64_t i) { return uniform_sv(4, i); });
  StrataSpec spec;
  spec.n_strata = 10;
  spec.tail_exceedance = 1e-3;
  try {
    build_strata(r, spec);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("10^(m+2)") != std::string::npos);
  }
  auto c = phase1_sample(5000, 4, [](std::uint64_t) { return 1.0; });
  spec.tail_exceedance = 0.1;
  spec.n_strata = 3;
  CHECK_THROWS_AS(build_strata(c, spec), Error);
}

TEST_CASE("explicit interior bounds") {
  auto r = phase1_sample(20000, 6, [](std::uint64_t i) { return uniform_sv(6, i); });
  StrataSpec spec;
  spec.n_strata = 4;
  spec.tail_exceedance = 0.05;
  spec.rule = BoundaryRule::Explicit;
  spec.explicit_bounds = {0.3, 0.6};
  auto s = build_strata(r, spec);
  CHECK(s.lower_bounds()[1] == 0.3);
  CHECK(s.lower_bounds()[2] == 0.6);
  CHECK(s.stratum_of(0.3) == 1);  // ties go to [low, high)
  CHECK(s.stratum_of(0.2999) == 0);
}

TEST_CASE("draw bookkeeping") {
  Phase1Result r;
  r.seed = 1;
  r.sv_values = {0.5, 0.1, 0.9, 0.2, 0.7, 0.95, 0.3, 2.0};
  auto s = strata_from_bounds(r, {-INFINITY, 0.6, 1.5});
  REQUIRE(s.pool(2) == std::vector<std::uint64_t>{7});
  RandomStream rng(1, substream::kTrainDraw, 0);
  CHECK(s.draw(2, 1, DrawPurpose::Train, rng) == std::vector<std::uint64_t>{7});
  CHECK(s.nu(2) == 1.0);
  CHECK_THROWS_AS(s.draw(2, 1, DrawPurpose::Eval, rng), Error);
  try {
    s.draw(2, 1, DrawPurpose::Eval, rng);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PoolExhausted);
  }

  auto a = s.draw(0, 2, DrawPurpose::Train, rng);
  auto b = s.draw(0, 2, DrawPurpose::Eval, rng);
  std::set<std::uint64_t> all(a.begin(), a.end());
  all.insert(b.begin(), b.end());
  CHECK(all.size() == 4);
  CHECK(s.available(0) == 0);

  // Persistence replays the ledgers exactly.
  auto j = s.to_json();
  auto t = Stratification::from_json(j, r);
  CHECK(t.to_json() == j);
  CHECK(t.drawn(0, DrawPurpose::Eval) == b);
  CHECK_THROWS_AS(t.draw(0, 1, DrawPurpose::Train, rng), Error);
}

TEST_CASE("draws are uniform over the undrawn members") {
  Phase1Result r;
  r.seed = 2;
  for (int i = 0; i < 10; ++i) r.sv_values.push_back(i);
  std::vector<int> hits(10, 0);
  for (int rep = 0; rep < 20000; ++rep) {
    auto s = strata_from_bounds(r, {-INFINITY});
    RandomStream rng(2, substream::kEvalDraw, rep);
    for (auto i : s.draw(0, 3, DrawPurpose::Eval, rng)) ++hits[i];
  }
  // Each member is drawn with probability 3/10.
  for (int h : hits) CHECK(std::abs(h - 6000) < 4 * std::sqrt(20000 * 0.3 * 0.7));
}

TEST_CASE("phase1 artifact round trip") {
  auto r = phase1_sample(1234, 8, [](std::uint64_t i) { return gaussian_sv(8, i); });
  auto dir = std::filesystem::temp_directory_path() / "mfss_test_phase1";
  std::filesystem::create_directories(dir);
  save_phase1(r, dir / "p.json", dir / "p.bin");
  auto back = load_phase1(dir / "p.json", dir / "p.bin");
  CHECK(back.sv_values == r.sv_values);
  CHECK(back.seed == 8);
  {
    std::fstream f(dir / "p.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(16);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_phase1(dir / "p.json", dir / "p.bin"), Error);
  std::filesystem::remove_all(dir);
}
