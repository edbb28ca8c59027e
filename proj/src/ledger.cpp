// SPDX-License-Identifier: Apache-2.0
#include "mfss/ledger.hpp"

#include <fstream>

#include "mfss/error.hpp"

namespace mfss {

void CostLedger::reset() {
  std::ofstream out(path_, std::ios::trunc);
  MFSS_REQUIRE(out.good(), ErrorKind::Io, "ledger: cannot create " + path_.string());
}

void CostLedger::append(const nlohmann::json& j) {
  std::ofstream out(path_, std::ios::app);
  MFSS_REQUIRE(out.good(), ErrorKind::Io, "ledger: cannot append to " + path_.string());
  out << j.dump() << "\n";
}

void CostLedger::begin(const std::string& stage, const std::string& config_hash) {
  stage_ = stage;
  append({{"event", "begin"}, {"stage", stage}, {"config_hash", config_hash}});
}

void CostLedger::record(const std::string& purpose, const std::string& kind, std::size_t count, double unit_cost,
                        std::ptrdiff_t stratum, std::ptrdiff_t sample) {
  MFSS_REQUIRE(!stage_.empty(), ErrorKind::Io, "ledger: record outside a stage block");
  nlohmann::json j{{"event", "cost"}, {"stage", stage_}, {"purpose", purpose},
                   {"kind", kind},    {"count", count},  {"unit_cost", unit_cost}};
  if (stratum >= 0) j["stratum"] = stratum;
  if (sample >= 0) j["sample"] = sample;
  append(j);
}

void CostLedger::commit(const std::string& stage) {
  MFSS_REQUIRE(stage == stage_, ErrorKind::Io, "ledger: commit of a stage that was not begun");
  append({{"event", "commit"}, {"stage", stage}});
  stage_.clear();
}

std::size_t LedgerTotals::get(const std::string& purpose, const std::string& kind) const {
  auto it = count.find({purpose, kind});
  return it == count.end() ? 0 : it->second;
}

LedgerTotals ledger_totals(const std::filesystem::path& path, const std::string& stage) {
  std::ifstream in(path);
  MFSS_REQUIRE(in.good(), ErrorKind::Io, "ledger: cannot read " + path.string());
  LedgerTotals last, cur;
  bool have = false, open = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::Io, "ledger: malformed line " + std::to_string(lineno));
    }
    if (j.value("stage", "") != stage) continue;
    const std::string ev = j.value("event", "");
    if (ev == "begin") {
      cur = LedgerTotals{};
      cur.config_hash = j.value("config_hash", "");
      open = true;
    } else if (ev == "cost" && open) {
      const std::pair<std::string, std::string> key{j.at("purpose").get<std::string>(), j.at("kind").get<std::string>()};
      const auto n = j.at("count").get<std::size_t>();
      cur.count[key] += n;
      cur.cost[key] += static_cast<double>(n) * j.at("unit_cost").get<double>();
      if (j.contains("stratum")) cur.per_stratum[key][j.at("stratum").get<std::size_t>()] += n;
    } else if (ev == "commit" && open) {
      last = cur;
      have = true;
      open = false;
    }
  }
  MFSS_REQUIRE(have, ErrorKind::Io, "ledger: no committed " + stage + " block in " + path.string());
  return last;
}

}  // namespace mfss
