// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace mfss {

/// Append-only JSON-lines cost ledger.
///
/// Each stage run is a block: a "begin" line, one line per evaluation (or one
/// aggregated line for bulk work), and a "commit" line. Readers use the last
/// committed block of a stage, so a rerun supersedes without rewriting history.
class CostLedger {
 public:
  explicit CostLedger(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const { return path_; }

  /// Starts a fresh file (phase1 only).
  void reset();
  void begin(const std::string& stage, const std::string& config_hash);
  /// purpose: phase1 | train | eval | baseline | oracle; kind: sv | hf | lf.
  void record(const std::string& purpose, const std::string& kind, std::size_t count, double unit_cost,
              std::ptrdiff_t stratum = -1, std::ptrdiff_t sample = -1);
  void commit(const std::string& stage);

 private:
  void append(const nlohmann::json& j);
  std::filesystem::path path_;
  std::string stage_;
};

struct LedgerTotals {
  std::string config_hash;
  // (purpose, kind) -> count, and the same split by stratum
  std::map<std::pair<std::string, std::string>, std::size_t> count;
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, std::size_t>> per_stratum;
  std::map<std::pair<std::string, std::string>, double> cost;

  std::size_t get(const std::string& purpose, const std::string& kind) const;
};

/// Totals of the last committed block of `stage`; throws Io when there is none.
LedgerTotals ledger_totals(const std::filesystem::path& path, const std::string& stage);

}  // namespace mfss
