// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfss/dynamics.hpp"
#include "mfss/estimators.hpp"
#include "mfss/excitation.hpp"
#include "mfss/strata.hpp"
#include "mfss/surrogate.hpp"

namespace mfss {

enum class AllocationMode { Fixed, Convergence };

struct AllocationConfig {
  AllocationMode mode = AllocationMode::Fixed;
  double budget = 20.0;  // c_B per stratum, fixed mode
  double beta_target = 0.03;
  std::size_t n_hf_initial = 5;
  std::size_t step = 1;
  std::size_t max_iterations = 100;
};

struct SurrogateSettings {
  double eta = 0.999;
  std::size_t snapshots_per_sample = 120;
  int wavelet_level = 2;
  int wavelet_order = 4;
};

struct CurveConfig {
  std::vector<std::size_t> channels;
  double z_min = 0.0;
  double z_max = 0.0;
  std::size_t n_points = 0;
};

struct RunConfig {
  int version = 1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::filesystem::path output_dir = "run";

  SpectralLoadModel excitation;
  StructuralParams structure;
  SolverConfig solver;

  std::size_t n_mc = 100000;
  StrataSpec strata;

  SurrogateSettings surrogate;
  TrainConfig train;
  AdaptiveConfig adaptive;

  std::vector<LimitState> limit_states;
  ConsequenceMeasure consequence;
  double c_hf = 1.0;
  double c_lf = 0.01;
  AllocationConfig allocation;
  std::size_t baseline_n_per_stratum = 20;
  std::size_t oracle_n = 10000;
  CurveConfig curves;

  nlohmann::json raw;  // as parsed, for hashing and provenance

  /// FNV-1a of the canonical JSON without `workers` and `output_dir`.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  void validate() const;
};

/// Parses and validates; unknown keys and type mismatches are Config errors
/// naming the JSON path.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

std::string hex64(std::uint64_t v);

}  // namespace mfss
