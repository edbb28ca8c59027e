// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfss/rng.hpp"

namespace mfss {

struct Phase1Result {
  std::vector<double> sv_values;  // sv_values[i] belongs to sample index i
  std::uint64_t seed = 0;
  std::size_t n_samples() const { return sv_values.size(); }
};

/// Evaluates the stratification variable for sample `index`.
using SvEvaluator = std::function<double(std::uint64_t index)>;

/// Runs the evaluator over indices 0..n-1 on `workers` threads. A failure is
/// rethrown with the offending sample index in its message.
Phase1Result phase1_sample(std::size_t n, std::uint64_t seed, const SvEvaluator& sv, std::size_t workers = 1);

/// Phase-I persistence: raw little-endian doubles plus a small JSON header
/// carrying seed, count and checksum.
void save_phase1(const Phase1Result& r, const std::filesystem::path& json_path,
                 const std::filesystem::path& bin_path, const nlohmann::json& extra = {});
Phase1Result load_phase1(const std::filesystem::path& json_path, const std::filesystem::path& bin_path);
std::uint64_t checksum(const std::vector<double>& values);

enum class BoundaryRule { EqualProbability, Explicit };

struct StrataSpec {
  std::size_t n_strata = 10;
  double tail_exceedance = 1e-3;
  BoundaryRule rule = BoundaryRule::EqualProbability;
  /// Interior lower bounds of strata 2..N_s-1 for the explicit rule.
  std::vector<double> explicit_bounds;
  /// Minimum expected count in the final stratum.
  double min_tail_count = 100.0;
};

enum class DrawPurpose { Train, Eval };

/// Half-open SV intervals [lower_k, lower_{k+1}) with the last one unbounded.
class Stratification {
 public:
  Stratification() = default;

  std::size_t n_strata() const { return lower_.size(); }
  std::size_t n_total() const { return n_total_; }
  std::uint64_t seed() const { return seed_; }

  /// N_s + 1 values: -inf (domain lower bound), interior bounds, +inf.
  std::vector<double> boundaries() const;
  const std::vector<double>& lower_bounds() const { return lower_; }
  std::size_t count(std::size_t k) const { return pools_.at(k).size(); }
  double probability(std::size_t k) const;
  std::vector<double> probabilities() const;
  const std::vector<std::uint64_t>& pool(std::size_t k) const { return pools_.at(k); }
  const std::vector<std::uint64_t>& drawn(std::size_t k, DrawPurpose p) const;
  std::size_t available(std::size_t k) const;
  /// nu_k = evaluated / pool size.
  double nu(std::size_t k) const;
  std::size_t stratum_of(double sv) const;

  /// Draws n undrawn pool members uniformly without replacement and records
  /// them under `purpose`. Throws PoolExhausted if fewer than n remain.
  std::vector<std::uint64_t> draw(std::size_t k, std::size_t n, DrawPurpose purpose, RandomStream& rng);

  nlohmann::json to_json() const;
  /// Rebuilds pools from Phase-I values and replays the persisted draw ledgers.
  static Stratification from_json(const nlohmann::json& j, const Phase1Result& phase1);

  friend Stratification build_strata(const Phase1Result&, const StrataSpec&);
  friend Stratification strata_from_bounds(const Phase1Result&, std::vector<double>);

 private:
  void build_pools(const std::vector<double>& sv);
  void mark(std::size_t k, std::uint64_t index, DrawPurpose purpose);

  std::vector<double> lower_;  // lower_[0] = -inf
  std::vector<std::vector<std::uint64_t>> pools_;
  std::vector<std::vector<std::uint64_t>> drawn_train_, drawn_eval_;
  // Per-pool-position state (0 free, 1 train, 2 eval) and a Fenwick tree of free slots.
  std::vector<std::vector<std::uint8_t>> state_;
  std::vector<std::vector<std::uint32_t>> free_tree_;
  std::vector<std::size_t> n_free_;
  std::size_t n_total_ = 0;
  std::uint64_t seed_ = 0;
};

Stratification build_strata(const Phase1Result& phase1, const StrataSpec& spec);
/// Stratification from given lower bounds (first must be -inf).
Stratification strata_from_bounds(const Phase1Result& phase1, std::vector<double> lower_bounds);

/// P(E^k) = count_k / n_total.
std::vector<double> probabilities_from_counts(const std::vector<std::size_t>& counts, std::size_t n_total);

/// Table-2 style listing: stratum, SV range, count, probability.
std::string format_strata_table(const Stratification& s);

}  // namespace mfss
