// SPDX-License-Identifier: Apache-2.0
#include "mfss/strata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mfss/error.hpp"
#include "mfss/parallel.hpp"

namespace mfss {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void fenwick_add(std::vector<std::uint32_t>& t, std::size_t pos, int delta) {
  for (std::size_t i = pos + 1; i <= t.size(); i += i & (~i + 1))
    t[i - 1] = static_cast<std::uint32_t>(static_cast<long long>(t[i - 1]) + delta);
}

// Position of the j-th (0-based) free slot.
std::size_t fenwick_find(const std::vector<std::uint32_t>& t, std::size_t j) {
  std::size_t pos = 0;
  std::size_t step = std::bit_floor(t.size());
  std::size_t rem = j + 1;
  for (; step > 0; step >>= 1) {
    const std::size_t next = pos + step;
    if (next <= t.size() && t[next - 1] < rem) {
      pos = next;
      rem -= t[next - 1];
    }
  }
  return pos;
}

std::vector<std::uint32_t> fenwick_all_ones(std::size_t n) {
  std::vector<std::uint32_t> t(n, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    t[i - 1] += 1;
    const std::size_t parent = i + (i & (~i + 1));
    if (parent <= n) t[parent - 1] += t[i - 1];
  }
  return t;
}

const char* purpose_name(DrawPurpose p) { return p == DrawPurpose::Train ? "train" : "eval"; }

}  // namespace

Phase1Result phase1_sample(std::size_t n, std::uint64_t seed, const SvEvaluator& sv, std::size_t workers) {
  MFSS_REQUIRE(n >= 1, ErrorKind::Config, "phase1: need at least one sample");
  Phase1Result r;
  r.seed = seed;
  r.sv_values.assign(n, 0.0);
  parallel_for(n, workers, [&](std::size_t i) {
    double v;
    try {
      v = sv(i);
    } catch (const Error& e) {
      throw Error(e.kind(), "phase1: sample " + std::to_string(i) + ": " + e.what());
    }
    MFSS_REQUIRE(std::isfinite(v), ErrorKind::Numerical,
                 "phase1: sample " + std::to_string(i) + " produced a non-finite SV");
    r.sv_values[i] = v;
  });
  return r;
}

std::uint64_t checksum(const std::vector<double>& values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void save_phase1(const Phase1Result& r, const std::filesystem::path& json_path,
                 const std::filesystem::path& bin_path, const nlohmann::json& extra) {
  static_assert(std::endian::native == std::endian::little, "phase1 binary format is little-endian");
  {
    std::ofstream out(bin_path, std::ios::binary);
    MFSS_REQUIRE(out.good(), ErrorKind::Io, "cannot write " + bin_path.string());
    out.write(reinterpret_cast<const char*>(r.sv_values.data()),
              static_cast<std::streamsize>(r.sv_values.size() * sizeof(double)));
  }
  nlohmann::json j = extra.is_object() ? extra : nlohmann::json::object();
  j["format"] = "mfss-phase1";
  j["version"] = 1;
  j["seed"] = r.seed;
  j["n_samples"] = r.sv_values.size();
  j["sv_file"] = bin_path.filename().string();
  j["checksum"] = checksum(r.sv_values);
  std::ofstream out(json_path);
  MFSS_REQUIRE(out.good(), ErrorKind::Io, "cannot write " + json_path.string());
  out << j.dump(2) << "\n";
}

Phase1Result load_phase1(const std::filesystem::path& json_path, const std::filesystem::path& bin_path) {
  std::ifstream in(json_path);
  MFSS_REQUIRE(in.good(), ErrorKind::Io, "cannot read " + json_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, json_path.string() + ": " + e.what());
  }
  MFSS_REQUIRE(j.value("format", "") == "mfss-phase1", ErrorKind::Io, "not a phase1 artifact");
  Phase1Result r;
  r.seed = j.at("seed").get<std::uint64_t>();
  const auto n = j.at("n_samples").get<std::size_t>();
  r.sv_values.resize(n);
  std::ifstream bin(bin_path, std::ios::binary);
  MFSS_REQUIRE(bin.good(), ErrorKind::Io, "cannot read " + bin_path.string());
  bin.read(reinterpret_cast<char*>(r.sv_values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  MFSS_REQUIRE(static_cast<std::size_t>(bin.gcount()) == n * sizeof(double), ErrorKind::Io,
               "phase1 binary is truncated");
  MFSS_REQUIRE(checksum(r.sv_values) == j.at("checksum").get<std::uint64_t>(), ErrorKind::Io,
               "phase1 checksum mismatch");
  return r;
}

std::vector<double> Stratification::boundaries() const {
  std::vector<double> b = lower_;
  b.push_back(kInf);
  return b;
}

double Stratification::probability(std::size_t k) const {
  return static_cast<double>(count(k)) / static_cast<double>(n_total_);
}

std::vector<double> Stratification::probabilities() const {
  std::vector<std::size_t> c;
  for (const auto& p : pools_) c.push_back(p.size());
  return probabilities_from_counts(c, n_total_);
}

const std::vector<std::uint64_t>& Stratification::drawn(std::size_t k, DrawPurpose p) const {
  return p == DrawPurpose::Train ? drawn_train_.at(k) : drawn_eval_.at(k);
}

std::size_t Stratification::available(std::size_t k) const { return n_free_.at(k); }

double Stratification::nu(std::size_t k) const {
  return static_cast<double>(drawn_train_.at(k).size() + drawn_eval_.at(k).size()) /
         static_cast<double>(pools_.at(k).size());
}

std::size_t Stratification::stratum_of(double sv) const {
  // Last k with lower_[k] <= sv.
  auto it = std::upper_bound(lower_.begin(), lower_.end(), sv);
  return static_cast<std::size_t>(it - lower_.begin()) - 1;
}

void Stratification::build_pools(const std::vector<double>& sv) {
  const std::size_t ns = lower_.size();
  pools_.assign(ns, {});
  for (std::size_t i = 0; i < sv.size(); ++i) pools_[stratum_of(sv[i])].push_back(i);
  for (std::size_t k = 0; k < ns; ++k)
    MFSS_REQUIRE(!pools_[k].empty(), ErrorKind::Config,
                 "strata: stratum " + std::to_string(k + 1) + " is empty under the chosen boundaries");
  drawn_train_.assign(ns, {});
  drawn_eval_.assign(ns, {});
  state_.assign(ns, {});
  free_tree_.assign(ns, {});
  n_free_.assign(ns, 0);
  for (std::size_t k = 0; k < ns; ++k) {
    state_[k].assign(pools_[k].size(), 0);
    free_tree_[k] = fenwick_all_ones(pools_[k].size());
    n_free_[k] = pools_[k].size();
  }
}

void Stratification::mark(std::size_t k, std::uint64_t index, DrawPurpose purpose) {
  const auto& pool = pools_[k];
  auto it = std::lower_bound(pool.begin(), pool.end(), index);
  MFSS_REQUIRE(it != pool.end() && *it == index, ErrorKind::Io,
               "strata: index " + std::to_string(index) + " is not in pool " + std::to_string(k + 1));
  const auto pos = static_cast<std::size_t>(it - pool.begin());
  MFSS_REQUIRE(state_[k][pos] == 0, ErrorKind::Numerical,
               "strata: index " + std::to_string(index) + " already drawn (" +
                   (state_[k][pos] == 1 ? "train" : "eval") + "), refusing " + purpose_name(purpose) + " draw");
  state_[k][pos] = purpose == DrawPurpose::Train ? 1 : 2;
  fenwick_add(free_tree_[k], pos, -1);
  --n_free_[k];
  (purpose == DrawPurpose::Train ? drawn_train_ : drawn_eval_)[k].push_back(index);
}

std::vector<std::uint64_t> Stratification::draw(std::size_t k, std::size_t n, DrawPurpose purpose,
                                                RandomStream& rng) {
  MFSS_REQUIRE(k < pools_.size(), ErrorKind::Config, "strata: stratum index out of range");
  if (n_free_[k] < n) {
    std::ostringstream msg;
    msg << "strata: pool " << k + 1 << " exhausted: " << purpose_name(purpose) << " draw of " << n
        << " requested, " << n_free_[k] << " of " << pools_[k].size() << " undrawn";
    throw Error(ErrorKind::PoolExhausted, msg.str());
  }
  std::vector<std::uint64_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = rng.uniform_index(n_free_[k]);
    const std::size_t pos = fenwick_find(free_tree_[k], j);
    const std::uint64_t index = pools_[k][pos];
    mark(k, index, purpose);
    out.push_back(index);
  }
  return out;
}

nlohmann::json Stratification::to_json() const {
  nlohmann::json j;
  j["format"] = "mfss-strata";
  j["version"] = 1;
  j["seed"] = seed_;
  j["n_total"] = n_total_;
  nlohmann::json lb = nlohmann::json::array();
  for (double v : lower_) lb.push_back(std::isinf(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  j["lower_bounds"] = lb;
  nlohmann::json counts = nlohmann::json::array(), probs = nlohmann::json::array();
  for (std::size_t k = 0; k < pools_.size(); ++k) {
    counts.push_back(pools_[k].size());
    probs.push_back(probability(k));
  }
  j["counts"] = counts;
  j["probabilities"] = probs;
  j["drawn_train"] = drawn_train_;
  j["drawn_eval"] = drawn_eval_;
  return j;
}

Stratification Stratification::from_json(const nlohmann::json& j, const Phase1Result& phase1) {
  MFSS_REQUIRE(j.value("format", "") == "mfss-strata", ErrorKind::Io, "not a strata artifact");
  MFSS_REQUIRE(j.at("n_total").get<std::size_t>() == phase1.n_samples() && j.at("seed").get<std::uint64_t>() == phase1.seed,
               ErrorKind::Io, "strata artifact does not match the phase1 artifact");
  std::vector<double> lower;
  for (const auto& v : j.at("lower_bounds")) lower.push_back(v.is_null() ? -kInf : v.get<double>());
  Stratification s = strata_from_bounds(phase1, lower);
  const auto counts = j.at("counts").get<std::vector<std::size_t>>();
  for (std::size_t k = 0; k < s.n_strata(); ++k)
    MFSS_REQUIRE(counts.at(k) == s.count(k), ErrorKind::Io, "strata: persisted counts do not match phase1 values");
  const auto train = j.at("drawn_train").get<std::vector<std::vector<std::uint64_t>>>();
  const auto eval = j.at("drawn_eval").get<std::vector<std::vector<std::uint64_t>>>();
  for (std::size_t k = 0; k < s.n_strata(); ++k) {
    for (auto idx : train.at(k)) s.mark(k, idx, DrawPurpose::Train);
    for (auto idx : eval.at(k)) s.mark(k, idx, DrawPurpose::Eval);
  }
  return s;
}

Stratification strata_from_bounds(const Phase1Result& phase1, std::vector<double> lower_bounds) {
  MFSS_REQUIRE(!lower_bounds.empty() && std::isinf(lower_bounds[0]) && lower_bounds[0] < 0, ErrorKind::Config,
               "strata: first lower bound must be -inf");
  for (std::size_t k = 1; k < lower_bounds.size(); ++k)
    MFSS_REQUIRE(lower_bounds[k] > lower_bounds[k - 1] && std::isfinite(lower_bounds[k]), ErrorKind::Config,
                 "strata: boundaries must be finite and strictly increasing");
  Stratification s;
  s.lower_ = std::move(lower_bounds);
  s.n_total_ = phase1.n_samples();
  s.seed_ = phase1.seed;
  s.build_pools(phase1.sv_values);
  return s;
}

Stratification build_strata(const Phase1Result& phase1, const StrataSpec& spec) {
  const std::size_t n = phase1.n_samples();
  MFSS_REQUIRE(n >= 1, ErrorKind::Config, "strata: empty phase1 result");
  MFSS_REQUIRE(spec.n_strata >= 1, ErrorKind::Config, "strata: need at least one stratum");
  if (spec.n_strata == 1) return strata_from_bounds(phase1, {-kInf});

  MFSS_REQUIRE(spec.tail_exceedance > 0.0 && spec.tail_exceedance < 1.0, ErrorKind::Config,
               "strata: tail exceedance must be in (0, 1)");
  const double expected_tail = spec.tail_exceedance * static_cast<double>(n);
  if (expected_tail < spec.min_tail_count) {
    std::ostringstream msg;
    msg << "strata: tail exceedance " << spec.tail_exceedance << " with " << n << " phase1 samples leaves "
        << expected_tail << " samples in the final stratum; a 10% COV needs about 100, i.e. N >= 10^(m+2) for a "
        << "10^-m tail";
    throw Error(ErrorKind::Config, msg.str());
  }
  std::vector<double> sorted = phase1.sv_values;
  std::sort(sorted.begin(), sorted.end());
  const auto m_tail = static_cast<std::size_t>(std::llround(expected_tail));
  const std::size_t n_rem = n - m_tail;
  const double tail_bound = sorted[n_rem];

  std::vector<double> lower{-kInf};
  if (spec.rule == BoundaryRule::EqualProbability) {
    const std::size_t ns_rem = spec.n_strata - 1;
    for (std::size_t i = 1; i < ns_rem; ++i) {
      const auto pos = static_cast<std::size_t>(
          std::llround(static_cast<double>(i) * static_cast<double>(n_rem) / static_cast<double>(ns_rem)));
      lower.push_back(sorted[pos]);
    }
  } else {
    MFSS_REQUIRE(spec.explicit_bounds.size() == spec.n_strata - 2, ErrorKind::Config,
                 "strata: explicit rule needs N_s - 2 interior bounds");
    for (double b : spec.explicit_bounds) lower.push_back(b);
  }
  lower.push_back(tail_bound);
  for (std::size_t k = 1; k < lower.size(); ++k)
    MFSS_REQUIRE(lower[k] > lower[k - 1], ErrorKind::Config,
                 "strata: stratum " + std::to_string(k) + " is empty (boundaries not strictly increasing)");
  return strata_from_bounds(phase1, std::move(lower));
}

std::vector<double> probabilities_from_counts(const std::vector<std::size_t>& counts, std::size_t n_total) {
  std::size_t sum = 0;
  for (auto c : counts) sum += c;
  MFSS_REQUIRE(sum == n_total && n_total > 0, ErrorKind::Config,
               "strata: counts sum to " + std::to_string(sum) + ", expected " + std::to_string(n_total));
  std::vector<double> p;
  p.reserve(counts.size());
  for (auto c : counts) p.push_back(static_cast<double>(c) / static_cast<double>(n_total));
  return p;
}

std::string format_strata_table(const Stratification& s) {
  std::ostringstream o;
  o << std::left << std::setw(8) << "Stratum" << std::setw(30) << "SV range" << std::right << std::setw(12)
    << "Count" << std::setw(12) << "P(E^k)" << "\n";
  const auto b = s.boundaries();
  for (std::size_t k = 0; k < s.n_strata(); ++k) {
    std::ostringstream range;
    range << std::setprecision(5) << "[";
    if (std::isinf(b[k])) range << "-inf"; else range << b[k];
    range << ", ";
    if (std::isinf(b[k + 1])) range << "inf"; else range << b[k + 1];
    range << ")";
    o << std::left << std::setw(8) << k + 1 << std::setw(30) << range.str() << std::right << std::setw(12)
      << s.count(k) << std::setw(12) << std::fixed << std::setprecision(4) << s.probability(k) << "\n";
    o.unsetf(std::ios::fixed);
  }
  return o.str();
}

}  // namespace mfss
