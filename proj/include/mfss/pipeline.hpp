// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mfss/config.hpp"
#include "mfss/dynamics.hpp"
#include "mfss/excitation.hpp"

namespace mfss {

enum class Stage { Phase1, Train, Estimate, Baseline, Oracle };

/// Hash of the config keys a stage depends on.
std::string stage_hash(const RunConfig& cfg, Stage stage);

/// Load model, structure and solver of a run, shared read-only by workers.
class Benchmark {
 public:
  explicit Benchmark(const RunConfig& cfg);

  PhaseVector phases(std::uint64_t substream_id, std::uint64_t index) const;
  /// Phase-I sample `index` (train and eval draws reuse these).
  PhaseVector sample(std::uint64_t index) const { return phases(substream::kPhase1, index); }
  Eigen::MatrixXd load(const PhaseVector& theta) const;
  double sv(const PhaseVector& theta) const;
  Eigen::MatrixXd hf(const Eigen::MatrixXd& load) const;
  /// Peak absolute displacement of every story.
  static std::vector<double> peaks(const Eigen::MatrixXd& displacements);

  const LoadSynthesizer& synthesizer() const { return synth_; }
  const StructuralModel& structure() const { return model_; }

 private:
  std::uint64_t seed_;
  LoadSynthesizer synth_;
  StructuralModel model_;
  SolverConfig solver_;
};

struct StageOptions {
  bool force = false;  // accept upstream artifacts with a different config hash
  bool quiet = false;
};

/// Each stage reads and writes artifacts under cfg.output_dir and returns a
/// short human-readable summary.
std::string run_phase1(const RunConfig& cfg, const StageOptions& opt = {});
std::string run_train(const RunConfig& cfg, const StageOptions& opt = {});
std::string run_estimate(const RunConfig& cfg, const StageOptions& opt = {});
std::string run_baseline_gss(const RunConfig& cfg, std::size_t n_per_stratum, const StageOptions& opt = {});
std::string run_oracle(const RunConfig& cfg, std::size_t n, const StageOptions& opt = {});
std::string run_report(const RunConfig& cfg, const StageOptions& opt = {});

/// Artifacts that must be byte-identical across reruns (timings.json excluded).
std::vector<std::string> deterministic_artifacts(const std::filesystem::path& dir);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace mfss
