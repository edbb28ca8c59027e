// SPDX-License-Identifier: Apache-2.0
#include "mfss/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mfss/error.hpp"
#include "mfss/ledger.hpp"
#include "mfss/log.hpp"
#include "mfss/parallel.hpp"
#include "mfss/strata.hpp"
#include "mfss/surrogate.hpp"

namespace mfss {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Phase1: return "phase1";
    case Stage::Train: return "train";
    case Stage::Estimate: return "estimate";
    case Stage::Baseline: return "baseline-gss";
    case Stage::Oracle: return "oracle-mc";
  }
  return "?";
}

std::vector<std::string> stage_keys(Stage s) {
  std::vector<std::string> k{"version", "seed", "excitation", "structure"};
  auto add = [&](std::initializer_list<const char*> more) { k.insert(k.end(), more.begin(), more.end()); };
  switch (s) {
    case Stage::Phase1: add({"strata"}); break;
    case Stage::Train: add({"strata", "solver", "surrogate", "train", "adaptive"}); break;
    case Stage::Estimate:
      add({"strata", "solver", "surrogate", "train", "adaptive", "limit_states", "consequence", "costs", "allocation",
           "curves"});
      break;
    case Stage::Baseline: add({"strata", "solver", "limit_states", "consequence", "baseline", "curves"}); break;
    case Stage::Oracle: add({"solver", "limit_states", "consequence", "oracle", "curves"}); break;
  }
  return k;
}

fs::path out_path(const RunConfig& cfg, const std::string& name) { return cfg.output_dir / name; }

void check_hash(const json& artifact, const RunConfig& cfg, Stage producer, const StageOptions& opt,
                const std::string& what) {
  const std::string want = stage_hash(cfg, producer);
  const std::string got = artifact.value("config_hash", "");
  if (got == want) return;
  MFSS_REQUIRE(opt.force, ErrorKind::Config,
               what + " was produced under config hash " + got + " but the current config gives " + want +
                   " for the " + stage_name(producer) + " stage; rerun it or pass --force");
  warn(what + ": config hash mismatch accepted because of --force");
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  MFSS_REQUIRE(out.good(), ErrorKind::Io, "cannot write " + p.string());
  out << s;
}

void write_doubles(const fs::path& p, const std::vector<double>& v) {
  std::ofstream out(p, std::ios::binary);
  MFSS_REQUIRE(out.good(), ErrorKind::Io, "cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void merge_timings(const RunConfig& cfg, const std::string& stage, const json& t) {
  const fs::path p = out_path(cfg, "timings.json");
  json all = json::object();
  if (fs::exists(p)) {
    try {
      all = read_json(p);
    } catch (const Error&) {
      all = json::object();
    }
  }
  all[stage] = t;
  write_json(p, all);
}

Phase1Result load_phase1_checked(const RunConfig& cfg, const StageOptions& opt) {
  const json meta = read_json(out_path(cfg, "phase1.json"));
  check_hash(meta, cfg, Stage::Phase1, opt, "phase1.json");
  return load_phase1(out_path(cfg, "phase1.json"), out_path(cfg, "phase1.bin"));
}

std::vector<double> z_grid(const CurveConfig& c) {
  std::vector<double> z;
  for (std::size_t i = 0; i < c.n_points; ++i)
    z.push_back(c.z_min + (c.z_max - c.z_min) * static_cast<double>(i) / static_cast<double>(c.n_points - 1));
  return z;
}

std::string curve_csv(const std::vector<double>& z, const std::vector<double>& p, const std::vector<double>& cov,
                      const std::vector<std::size_t>& violations) {
  std::ostringstream o;
  o << "z,p_f,cov,monotone_violation\n";
  for (std::size_t i = 0; i < z.size(); ++i) {
    const bool v = std::find(violations.begin(), violations.end(), i) != violations.end();
    o << fmt(z[i]) << "," << fmt(p[i]) << "," << fmt(cov[i]) << "," << (v ? 1 : 0) << "\n";
  }
  return o.str();
}

std::string with_context(const std::string& what, std::uint64_t sample, std::ptrdiff_t stratum,
                         const std::string& purpose) {
  std::ostringstream o;
  o << "HF sample " << sample;
  if (stratum >= 0) o << " (stratum " << stratum + 1 << ", " << purpose << ")";
  o << ": " << what;
  return o.str();
}

// Peaks of HF runs for a list of samples, evaluated concurrently.
std::vector<std::vector<double>> hf_peaks(const Benchmark& b, const std::vector<std::uint64_t>& idx,
                                          const std::vector<std::ptrdiff_t>& strata, const std::string& purpose,
                                          std::uint64_t substream_id, std::size_t workers, double& ms_total) {
  std::vector<std::vector<double>> out(idx.size());
  std::vector<double> ms(idx.size(), 0.0);
  parallel_for(idx.size(), workers, [&](std::size_t i) {
    const auto t0 = Clock::now();
    try {
      out[i] = Benchmark::peaks(b.hf(b.load(b.phases(substream_id, idx[i]))));
    } catch (const Error& e) {
      throw Error(e.kind(), with_context(e.what(), idx[i], strata.empty() ? -1 : strata[i], purpose));
    }
    ms[i] = elapsed_ms(t0);
  });
  for (double m : ms) ms_total += m;
  return out;
}

std::vector<std::vector<double>> lf_peaks(const Benchmark& b, const SurrogateModel& m,
                                          const std::vector<std::uint64_t>& idx, std::size_t workers,
                                          double& ms_total) {
  std::vector<std::vector<double>> out(idx.size());
  std::vector<double> ms(idx.size(), 0.0);
  parallel_for(idx.size(), workers, [&](std::size_t i) {
    const auto t0 = Clock::now();
    out[i] = Benchmark::peaks(m.predict(b.load(b.sample(idx[i]))));
    ms[i] = elapsed_ms(t0);
  });
  for (double v : ms) ms_total += v;
  return out;
}

std::vector<double> consequences(const std::vector<std::vector<double>>& peaks, std::size_t channel, double z,
                                 const ConsequenceMeasure& m) {
  std::vector<double> h;
  h.reserve(peaks.size());
  for (const auto& p : peaks) h.push_back(consequence(p.at(channel), z, m));
  return h;
}

}  // namespace

std::string stage_hash(const RunConfig& cfg, Stage stage) {
  json sub = json::object();
  for (const auto& k : stage_keys(stage))
    if (cfg.raw.contains(k)) sub[k] = cfg.raw.at(k);
  return hex64(fnv1a64(sub.dump()));
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  MFSS_REQUIRE(in.good(), ErrorKind::Io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

Benchmark::Benchmark(const RunConfig& cfg)
    : seed_(cfg.seed), synth_(cfg.excitation), model_(cfg.structure), solver_(cfg.solver) {}

PhaseVector Benchmark::phases(std::uint64_t substream_id, std::uint64_t index) const {
  return sample_phases(synth_.model(), seed_, substream_id, index);
}

Eigen::MatrixXd Benchmark::load(const PhaseVector& theta) const { return synth_.synthesize(theta).samples; }

double Benchmark::sv(const PhaseVector& theta) const { return evaluate_sv(model_, synth_, theta); }

Eigen::MatrixXd Benchmark::hf(const Eigen::MatrixXd& load) const {
  ExcitationRealization e{load, synth_.model().dt};
  IntegrateOptions o;
  o.keep_log = false;
  return integrate(model_, e, solver_, o).displacements;
}

std::vector<double> Benchmark::peaks(const Eigen::MatrixXd& y) {
  std::vector<double> p(static_cast<std::size_t>(y.rows()));
  for (Eigen::Index r = 0; r < y.rows(); ++r) p[static_cast<std::size_t>(r)] = y.row(r).cwiseAbs().maxCoeff();
  return p;
}

std::string run_phase1(const RunConfig& cfg, const StageOptions&) {
  fs::create_directories(cfg.output_dir);
  const Benchmark bench(cfg);
  const std::string hash = stage_hash(cfg, Stage::Phase1);
  const auto t0 = Clock::now();
  const Phase1Result p1 = phase1_sample(
      cfg.n_mc, cfg.seed, [&](std::uint64_t i) { return bench.sv(bench.sample(i)); }, cfg.workers);
  const double ms = elapsed_ms(t0);
  const Stratification strat = build_strata(p1, cfg.strata);

  save_phase1(p1, out_path(cfg, "phase1.json"), out_path(cfg, "phase1.bin"), {{"config_hash", hash}});
  json sj = strat.to_json();
  sj["config_hash"] = hash;
  write_json(out_path(cfg, "strata.json"), sj);

  CostLedger ledger(out_path(cfg, "ledger.jsonl"));
  ledger.reset();
  ledger.begin("phase1", hash);
  ledger.record("phase1", "sv", cfg.n_mc, 0.0);
  ledger.commit("phase1");
  merge_timings(cfg, "phase1", {{"sv_ms_per_sample", ms / static_cast<double>(cfg.n_mc)}, {"wall_s", ms / 1e3}});
  return format_strata_table(strat);
}

std::string run_train(const RunConfig& cfg, const StageOptions& opt) {
  const Phase1Result p1 = load_phase1_checked(cfg, opt);
  const json sj = read_json(out_path(cfg, "strata.json"));
  check_hash(sj, cfg, Stage::Phase1, opt, "strata.json");
  Stratification strat = Stratification::from_json(sj, p1);
  const Benchmark bench(cfg);
  const std::string hash = stage_hash(cfg, Stage::Train);

  CostLedger ledger(out_path(cfg, "ledger.jsonl"));
  ledger.begin("train", hash);
  std::vector<std::pair<std::uint64_t, std::size_t>> hf_log;
  double hf_ms = 0.0;

  AdaptiveTrainContext ctx;
  ctx.load = [&](std::uint64_t i) { return bench.load(bench.sample(i)); };
  ctx.hf = [&](std::uint64_t i) {
    try {
      return bench.hf(bench.load(bench.sample(i)));
    } catch (const Error& e) {
      throw Error(e.kind(), with_context(e.what(), i, static_cast<std::ptrdiff_t>(strat.stratum_of(p1.sv_values[i])),
                                         "train"));
    }
  };
  ctx.on_hf = [&](std::uint64_t i, std::size_t k) {
    hf_log.emplace_back(i, k);
    ledger.record("train", "hf", 1, cfg.c_hf, static_cast<std::ptrdiff_t>(k), static_cast<std::ptrdiff_t>(i));
  };
  ctx.snapshots_per_sample = cfg.surrogate.snapshots_per_sample;
  ctx.eta = cfg.surrogate.eta;
  ctx.wavelet_level = cfg.surrogate.wavelet_level;
  ctx.wavelet_order = cfg.surrogate.wavelet_order;
  ctx.seed = cfg.seed;
  ctx.workers = cfg.workers;

  const auto t0 = Clock::now();
  AdaptiveTrainResult res = adaptive_train(strat, ctx, cfg.adaptive, cfg.train);
  const double wall = elapsed_ms(t0);
  write_text(out_path(cfg, "train_trajectory.csv"), trajectory_csv(res.outcome.trajectory));

  // HF cost per run measured separately on a few training samples
  {
    const std::size_t n = std::min<std::size_t>(hf_log.size(), 5);
    const auto t1 = Clock::now();
    for (std::size_t i = 0; i < n; ++i) bench.hf(bench.load(bench.sample(hf_log[i].first)));
    hf_ms = n ? elapsed_ms(t1) / static_cast<double>(n) : 0.0;
  }

  if (!res.outcome.converged) {
    ledger.commit("train");
    merge_timings(cfg, "train", {{"hf_ms_per_run", hf_ms}, {"wall_s", wall / 1e3}});
    require_converged(res.outcome, cfg.adaptive);
  }

  res.model.provenance["config_hash"] = hash;
  json mj = res.model.to_json();
  mj["config_hash"] = hash;
  write_json(out_path(cfg, "surrogate.json"), mj);
  json st = strat.to_json();
  st["config_hash"] = hash;
  write_json(out_path(cfg, "strata.train.json"), st);
  ledger.commit("train");

  double lf_ms = 0.0;
  {
    const std::size_t n = std::min<std::size_t>(hf_log.size(), 20);
    const auto t1 = Clock::now();
    for (std::size_t i = 0; i < n; ++i) res.model.predict(bench.load(bench.sample(hf_log[i].first)));
    lf_ms = n ? elapsed_ms(t1) / static_cast<double>(n) : 0.0;
  }
  merge_timings(cfg, "train", {{"hf_ms_per_run", hf_ms}, {"lf_ms_per_prediction", lf_ms}, {"wall_s", wall / 1e3}});

  std::ostringstream o;
  const auto& r = res.outcome.report;
  o << "adaptive training converged at iteration " << res.outcome.i_train << " with N_train = " << res.outcome.n_train
    << " per stratum (" << res.train_indices.size() << " HF runs)\n"
    << "rho_v = " << r.rho_mean << ", delta_v = " << r.delta << ", reduced modes = " << res.model.basis.n_reduced()
    << "\n";
  return o.str();
}

namespace {

// Eval samples of one stratum: LF draw order, the first n_hf of which carry HF runs.
struct EvalStratum {
  std::vector<std::uint64_t> lf_idx;
  std::vector<std::vector<double>> lf_peaks, hf_peaks;
};

struct StratumDetail {
  MfmcStratumEstimate est;
  double var_hf = 0.0, var_lf = 0.0, variance = 0.0;
};

}  // namespace

std::string run_estimate(const RunConfig& cfg, const StageOptions& opt) {
  const Phase1Result p1 = load_phase1_checked(cfg, opt);
  const json sj = read_json(out_path(cfg, "strata.train.json"));
  check_hash(sj, cfg, Stage::Train, opt, "strata.train.json");
  Stratification strat = Stratification::from_json(sj, p1);
  const json mj = read_json(out_path(cfg, "surrogate.json"));
  check_hash(mj, cfg, Stage::Train, opt, "surrogate.json");
  const SurrogateModel model = SurrogateModel::from_json(mj);
  const Benchmark bench(cfg);
  const std::string hash = stage_hash(cfg, Stage::Estimate);
  const std::size_t ns = strat.n_strata();
  const auto probs = strat.probabilities();

  const double rho = model.provenance.at("correlation").at("rho_mean").get<double>();
  const double r_star = rho > 0.0 ? optimal_ratio(cfg.c_hf, cfg.c_lf, rho) : 0.0;
  const double r_eff = std::max(r_star, 1.0);
  auto lf_count = [&](std::size_t n_hf) {
    return std::max<std::size_t>(n_hf, static_cast<std::size_t>(std::llround(r_star * static_cast<double>(n_hf))));
  };

  CostLedger ledger(out_path(cfg, "ledger.jsonl"));
  ledger.begin("estimate", hash);
  std::vector<EvalStratum> ev(ns);
  std::uint64_t round = 0;
  double hf_ms = 0.0, lf_ms = 0.0;
  std::size_t hf_runs = 0, lf_runs = 0;

  auto ensure = [&](std::size_t n_hf, std::size_t n_lf) {
    std::vector<std::uint64_t> new_lf, new_hf;
    std::vector<std::pair<std::size_t, std::size_t>> lf_slot, hf_slot;
    std::vector<std::ptrdiff_t> hf_k;
    for (std::size_t k = 0; k < ns; ++k) {
      auto& e = ev[k];
      if (e.lf_idx.size() < n_lf) {
        RandomStream rng(cfg.seed, substream::kEvalDraw, round * ns + k);
        for (auto idx : strat.draw(k, n_lf - e.lf_idx.size(), DrawPurpose::Eval, rng)) {
          lf_slot.emplace_back(k, e.lf_idx.size());
          new_lf.push_back(idx);
          e.lf_idx.push_back(idx);
        }
      }
      for (std::size_t pos = e.hf_peaks.size(); pos < n_hf; ++pos) {
        hf_slot.emplace_back(k, pos);
        new_hf.push_back(e.lf_idx[pos]);
        hf_k.push_back(static_cast<std::ptrdiff_t>(k));
      }
    }
    ++round;
    const auto lf = lf_peaks(bench, model, new_lf, cfg.workers, lf_ms);
    const auto hf = hf_peaks(bench, new_hf, hf_k, "eval", substream::kPhase1, cfg.workers, hf_ms);
    for (std::size_t i = 0; i < lf.size(); ++i) {
      auto& e = ev[lf_slot[i].first];
      e.lf_peaks.resize(std::max(e.lf_peaks.size(), lf_slot[i].second + 1));
      e.lf_peaks[lf_slot[i].second] = lf[i];
      ledger.record("eval", "lf", 1, cfg.c_lf, static_cast<std::ptrdiff_t>(lf_slot[i].first),
                    static_cast<std::ptrdiff_t>(new_lf[i]));
    }
    for (std::size_t i = 0; i < hf.size(); ++i) {
      auto& e = ev[hf_slot[i].first];
      e.hf_peaks.resize(std::max(e.hf_peaks.size(), hf_slot[i].second + 1));
      e.hf_peaks[hf_slot[i].second] = hf[i];
      ledger.record("eval", "hf", 1, cfg.c_hf, static_cast<std::ptrdiff_t>(hf_slot[i].first),
                    static_cast<std::ptrdiff_t>(new_hf[i]));
    }
    hf_runs += hf.size();
    lf_runs += lf.size();
  };

  // Estimate for one (channel, threshold) from the first n_hf / n_lf samples of each stratum.
  auto estimate = [&](std::size_t channel, double z, std::size_t n_hf, std::size_t n_lf, bool verbose,
                      std::vector<StratumDetail>* details) {
    std::vector<double> est(ns), var(ns);
    for (std::size_t k = 0; k < ns; ++k) {
      const auto& e = ev[k];
      check_pairing(std::vector<std::uint64_t>(e.lf_idx.begin(), e.lf_idx.begin() + static_cast<long>(n_hf)),
                    std::vector<std::uint64_t>(e.lf_idx.begin(), e.lf_idx.begin() + static_cast<long>(n_lf)));
      std::vector<std::vector<double>> hp(e.hf_peaks.begin(), e.hf_peaks.begin() + static_cast<long>(n_hf));
      std::vector<std::vector<double>> lp(e.lf_peaks.begin(), e.lf_peaks.begin() + static_cast<long>(n_lf));
      const auto h = consequences(hp, channel, z, cfg.consequence);
      const auto l_all = consequences(lp, channel, z, cfg.consequence);
      const std::vector<double> l_pair(l_all.begin(), l_all.begin() + static_cast<long>(n_hf));
      StratumDetail d;
      d.var_hf = moments(h).variance;
      d.var_lf = moments(l_pair).variance;
      const double a = verbose || d.var_lf > 0.0 ? optimal_a(rho, d.var_hf, d.var_lf) : 0.0;
      d.est = mfmc_stratum_estimate(h, l_pair, l_all, a);
      d.variance = mfmc_variance(d.var_hf, n_hf, r_eff, rho);
      est[k] = d.est.estimate;
      var[k] = d.variance;
      if (details) details->push_back(d);
    }
    return std::pair{est, var};
  };

  std::size_t n_hf = 0, n_lf = 0;
  json conv = nullptr;
  bool converged = true;
  if (cfg.allocation.mode == AllocationMode::Fixed) {
    const Allocation al = budget_allocation(cfg.allocation.budget, cfg.c_hf, cfg.c_lf, r_star);
    n_hf = al.n_hf;
    n_lf = std::max(al.n_lf, al.n_hf);
    ensure(n_hf, n_lf);
  } else {
    const auto& ac = cfg.allocation;
    const ConvergenceTrace t = convergence_loop(ac.n_hf_initial, ac.step, ac.beta_target, ac.max_iterations,
                                                [&](std::size_t n) {
                                                  ensure(n, lf_count(n));
                                                  std::vector<double> out;
                                                  for (const auto& ls : cfg.limit_states) {
                                                    auto [e, v] = estimate(ls.channel, ls.threshold, n, lf_count(n),
                                                                           false, nullptr);
                                                    out.push_back(mfss_aggregate(e, v, probs).estimate);
                                                  }
                                                  return out;
                                                });
    n_hf = t.n_hf.back();
    n_lf = lf_count(n_hf);
    converged = t.converged;
    std::ostringstream csv;
    csv << "iteration,n_hf_per_stratum,n_lf_per_stratum";
    for (const auto& ls : cfg.limit_states) csv << "," << ls.name;
    csv << ",beta,flagged\n";
    for (std::size_t i = 0; i < t.n_hf.size(); ++i) {
      csv << i << "," << t.n_hf[i] << "," << lf_count(t.n_hf[i]);
      for (double v : t.estimates[i]) csv << "," << fmt(v);
      csv << "," << fmt(t.beta[i]) << "," << (t.flagged[i] ? 1 : 0) << "\n";
    }
    write_text(out_path(cfg, "convergence.csv"), csv.str());
    conv = {{"file", "convergence.csv"},
            {"converged", t.converged},
            {"iterations", t.n_hf.size()},
            {"beta_target", ac.beta_target}};
  }

  json report;
  report["format"] = "mfss-report";
  report["version"] = 1;
  report["method"] = "mfss";
  report["config_hash"] = hash;
  report["rho"] = rho;
  report["r_star"] = r_star;
  report["r_effective"] = r_eff;
  report["c_hf"] = cfg.c_hf;
  report["c_lf"] = cfg.c_lf;
  report["allocation"] = {{"mode", cfg.allocation.mode == AllocationMode::Fixed ? "fixed" : "convergence"},
                          {"n_hf_per_stratum", n_hf},
                          {"n_lf_per_stratum", n_lf}};
  if (cfg.allocation.mode == AllocationMode::Fixed) report["allocation"]["budget"] = cfg.allocation.budget;
  report["probabilities"] = probs;
  report["convergence"] = conv;

  std::ostringstream summary;
  summary << std::setprecision(6);
  summary << "rho_v = " << rho << ", r* = " << r_star << ", N_HF = " << n_hf << ", N_LF = " << n_lf
          << " per stratum\n";
  json lsj = json::array();
  for (const auto& ls : cfg.limit_states) {
    std::vector<StratumDetail> det;
    auto [e, v] = estimate(ls.channel, ls.threshold, n_hf, n_lf, true, &det);
    const MfssEstimate agg = mfss_aggregate(e, v, probs);
    json sk = json::array();
    for (std::size_t k = 0; k < ns; ++k) {
      const auto& d = det[k];
      sk.push_back({{"stratum", k + 1},
                    {"probability", probs[k]},
                    {"estimate", d.est.estimate},
                    {"estimate_clamped", d.est.clamped},
                    {"a", d.est.a},
                    {"mean_hf", d.est.mean_hf},
                    {"mean_lf_paired", d.est.mean_lf_paired},
                    {"mean_lf_all", d.est.mean_lf_all},
                    {"var_hf", d.var_hf},
                    {"var_lf", d.var_lf},
                    {"variance", d.variance}});
    }
    lsj.push_back({{"name", ls.name},
                   {"channel", ls.channel},
                   {"threshold", ls.threshold},
                   {"estimate", agg.estimate},
                   {"estimate_floored", agg.floored},
                   {"variance", agg.variance},
                   {"cov", finite_or_null(agg.cov)},
                   {"strata", sk}});
    summary << ls.name << " (channel " << ls.channel << ", z = " << ls.threshold << "): P_f = " << agg.floored
            << ", COV = " << (agg.cov_defined ? fmt(agg.cov) : std::string("undefined")) << "\n";
  }
  report["limit_states"] = lsj;

  json curves = json::array();
  const auto zs = z_grid(cfg.curves);
  for (auto ch : cfg.curves.channels) {
    std::vector<double> p, c;
    for (double z : zs) {
      auto [e, v] = estimate(ch, z, n_hf, n_lf, false, nullptr);
      double est = 0.0, var = 0.0;
      for (std::size_t k = 0; k < ns; ++k) {
        est += probs[k] * e[k];
        var += probs[k] * probs[k] * v[k];
      }
      p.push_back(est);
      c.push_back(est > 0.0 ? std::sqrt(var) / est : std::numeric_limits<double>::quiet_NaN());
    }
    const auto viol = monotonicity_violations(p);
    if (!viol.empty())
      warn("estimate: exceedance curve for channel " + std::to_string(ch) + " has " + std::to_string(viol.size()) +
           " monotonicity violation(s); flagged in the CSV");
    const std::string file = "curve_mfss_ch" + std::to_string(ch) + ".csv";
    write_text(out_path(cfg, file), curve_csv(zs, p, c, viol));
    curves.push_back({{"channel", ch}, {"file", file}, {"violations", viol}});
  }
  report["curves"] = curves;

  json samples = json::array();
  for (std::size_t k = 0; k < ns; ++k)
    samples.push_back({{"stratum", k + 1},
                       {"lf_indices", std::vector<std::uint64_t>(ev[k].lf_idx.begin(),
                                                                 ev[k].lf_idx.begin() + static_cast<long>(n_lf))},
                       {"hf_peaks", std::vector<std::vector<double>>(
                                        ev[k].hf_peaks.begin(), ev[k].hf_peaks.begin() + static_cast<long>(n_hf))},
                       {"lf_peaks", std::vector<std::vector<double>>(
                                        ev[k].lf_peaks.begin(), ev[k].lf_peaks.begin() + static_cast<long>(n_lf))}});
  write_json(out_path(cfg, "eval_samples.json"), {{"config_hash", hash}, {"strata", samples}});
  json st = strat.to_json();
  st["config_hash"] = hash;
  write_json(out_path(cfg, "strata.estimate.json"), st);
  ledger.commit("estimate");

  // speedup from the ledger only
  const LedgerTotals tr = ledger_totals(out_path(cfg, "ledger.jsonl"), "train");
  const LedgerTotals es = ledger_totals(out_path(cfg, "ledger.jsonl"), "estimate");
  const double n_hf_l = static_cast<double>(es.get("eval", "hf")) / static_cast<double>(ns);
  const double n_lf_l = static_cast<double>(es.get("eval", "lf")) / static_cast<double>(ns);
  const double n_tr_l = static_cast<double>(tr.get("train", "hf")) / static_cast<double>(ns);
  const EquivalentCount ngss = equivalent_count(n_hf_l, r_eff, rho > 0.0 ? rho : 0.0);
  const double sp = speedup(static_cast<double>(ngss.rounded), n_hf_l, n_tr_l, n_lf_l, cfg.c_hf / cfg.c_lf);
  report["ledger"] = {{"n_hf_per_stratum", n_hf_l},
                      {"n_lf_per_stratum", n_lf_l},
                      {"n_train_per_stratum", n_tr_l},
                      {"hf_eval_total", es.get("eval", "hf")},
                      {"lf_eval_total", es.get("eval", "lf")},
                      {"hf_train_total", tr.get("train", "hf")}};
  report["n_gss"] = {{"raw", ngss.raw}, {"rounded", ngss.rounded}};
  report["speedup"] = sp;
  write_json(out_path(cfg, "report.json"), report);
  merge_timings(cfg, "estimate",
                {{"hf_ms_per_run", hf_runs ? hf_ms / static_cast<double>(hf_runs) : 0.0},
                 {"lf_ms_per_prediction", lf_runs ? lf_ms / static_cast<double>(lf_runs) : 0.0},
                 {"measured_cost_ratio", hf_runs && lf_runs && lf_ms > 0.0
                                             ? (hf_ms / static_cast<double>(hf_runs)) /
                                                   (lf_ms / static_cast<double>(lf_runs))
                                             : 0.0}});

  summary << "N_GSS = " << ngss.rounded << " (" << ngss.raw << "), N_train = " << n_tr_l << ", speedup = " << sp
          << "\n";
  if (!converged)
    throw Error(ErrorKind::Convergence, "estimate: convergence index did not reach beta_target within " +
                                            std::to_string(cfg.allocation.max_iterations) +
                                            " iterations; report written with the last allocation");
  return summary.str();
}

std::string run_baseline_gss(const RunConfig& cfg, std::size_t n, const StageOptions& opt) {
  MFSS_REQUIRE(n >= 2, ErrorKind::Config, "baseline-gss: need at least 2 samples per stratum");
  const Phase1Result p1 = load_phase1_checked(cfg, opt);
  const json sj = read_json(out_path(cfg, "strata.json"));
  check_hash(sj, cfg, Stage::Phase1, opt, "strata.json");
  Stratification strat = Stratification::from_json(sj, p1);
  const Benchmark bench(cfg);
  const std::string hash = stage_hash(cfg, Stage::Baseline) + "-" + std::to_string(n);
  const std::size_t ns = strat.n_strata();
  const auto probs = strat.probabilities();

  std::vector<std::uint64_t> idx;
  std::vector<std::ptrdiff_t> ks;
  for (std::size_t k = 0; k < ns; ++k) {
    RandomStream rng(cfg.seed, substream::kGssDraw, k);
    for (auto i : strat.draw(k, n, DrawPurpose::Eval, rng)) {
      idx.push_back(i);
      ks.push_back(static_cast<std::ptrdiff_t>(k));
    }
  }
  double ms = 0.0;
  const auto peaks = hf_peaks(bench, idx, ks, "baseline", substream::kPhase1, cfg.workers, ms);
  CostLedger ledger(out_path(cfg, "ledger.jsonl"));
  ledger.begin("baseline-gss", hash);
  for (std::size_t i = 0; i < idx.size(); ++i)
    ledger.record("baseline", "hf", 1, cfg.c_hf, ks[i], static_cast<std::ptrdiff_t>(idx[i]));
  ledger.commit("baseline-gss");

  auto per_stratum = [&](std::size_t ch, double z) {
    std::vector<std::vector<double>> h(ns);
    for (std::size_t i = 0; i < idx.size(); ++i)
      h[static_cast<std::size_t>(ks[i])].push_back(consequence(peaks[i].at(ch), z, cfg.consequence));
    return h;
  };

  json report;
  report["format"] = "mfss-report";
  report["version"] = 1;
  report["method"] = "gss";
  report["config_hash"] = hash;
  report["n_per_stratum"] = n;
  report["probabilities"] = probs;
  std::ostringstream summary;
  summary << std::setprecision(6);
  json lsj = json::array();
  for (const auto& ls : cfg.limit_states) {
    const GssEstimate g = gss_estimate(per_stratum(ls.channel, ls.threshold), probs);
    json sk = json::array();
    for (std::size_t k = 0; k < ns; ++k)
      sk.push_back({{"stratum", k + 1},
                    {"probability", probs[k]},
                    {"estimate", g.strata[k].mean},
                    {"var_hf", g.strata[k].variance}});
    lsj.push_back({{"name", ls.name},
                   {"channel", ls.channel},
                   {"threshold", ls.threshold},
                   {"estimate", g.estimate},
                   {"estimate_floored", g.estimate},
                   {"variance", g.variance},
                   {"cov", finite_or_null(g.cov)},
                   {"strata", sk}});
    summary << ls.name << ": P_f(GSS) = " << g.estimate
            << ", COV = " << (g.cov_defined ? fmt(g.cov) : std::string("undefined")) << "\n";
  }
  report["limit_states"] = lsj;
  json curves = json::array();
  const auto zs = z_grid(cfg.curves);
  for (auto ch : cfg.curves.channels) {
    std::vector<double> p, c;
    for (double z : zs) {
      const GssEstimate g = gss_estimate(per_stratum(ch, z), probs);
      p.push_back(g.estimate);
      c.push_back(g.cov);
    }
    const auto viol = monotonicity_violations(p);
    const std::string file = "curve_gss_ch" + std::to_string(ch) + ".csv";
    write_text(out_path(cfg, file), curve_csv(zs, p, c, viol));
    curves.push_back({{"channel", ch}, {"file", file}, {"violations", viol}});
  }
  report["curves"] = curves;
  report["ledger"] = {{"hf_total", ledger_totals(out_path(cfg, "ledger.jsonl"), "baseline-gss").get("baseline", "hf")}};
  write_json(out_path(cfg, "baseline_gss.json"), report);
  merge_timings(cfg, "baseline-gss", {{"hf_ms_per_run", idx.empty() ? 0.0 : ms / static_cast<double>(idx.size())}});
  return summary.str();
}

std::string run_oracle(const RunConfig& cfg, std::size_t n, const StageOptions&) {
  MFSS_REQUIRE(n >= 1, ErrorKind::Config, "oracle-mc: N must be >= 1");
  fs::create_directories(cfg.output_dir);
  const Benchmark bench(cfg);
  const std::string hash = stage_hash(cfg, Stage::Oracle) + "-" + std::to_string(n);
  std::vector<std::uint64_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  double ms = 0.0;
  const auto peaks = hf_peaks(bench, idx, {}, "oracle", substream::kOracle, cfg.workers, ms);
  std::vector<double> sv(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) { sv[i] = bench.sv(bench.phases(substream::kOracle, i)); });

  const std::size_t nd = bench.structure().n_dof();
  std::vector<double> flat;
  flat.reserve(n * nd);
  for (const auto& p : peaks) flat.insert(flat.end(), p.begin(), p.end());
  write_doubles(out_path(cfg, "oracle_peaks.bin"), flat);
  write_doubles(out_path(cfg, "oracle_sv.bin"), sv);

  json report;
  report["format"] = "mfss-oracle";
  report["version"] = 1;
  report["config_hash"] = hash;
  report["n"] = n;
  report["n_dof"] = nd;
  report["peaks_file"] = "oracle_peaks.bin";
  report["sv_file"] = "oracle_sv.bin";
  report["checksum"] = checksum(flat);
  std::ostringstream summary;
  summary << std::setprecision(6);
  json lsj = json::array();
  for (const auto& ls : cfg.limit_states) {
    const auto h = consequences(peaks, ls.channel, ls.threshold, cfg.consequence);
    const auto m = moments(h);
    const double se = std::sqrt(m.variance / static_cast<double>(n));
    std::size_t exceed = 0;
    for (const auto& p : peaks) exceed += p.at(ls.channel) > ls.threshold ? 1 : 0;
    lsj.push_back({{"name", ls.name},
                   {"channel", ls.channel},
                   {"threshold", ls.threshold},
                   {"estimate", m.mean},
                   {"se", se},
                   {"exceedances", exceed}});
    summary << ls.name << ": P_f(MC, N = " << n << ") = " << m.mean << " +/- " << se << " (" << exceed
            << " exceedances)\n";
  }
  report["limit_states"] = lsj;
  json curves = json::array();
  const auto zs = z_grid(cfg.curves);
  for (auto ch : cfg.curves.channels) {
    std::vector<double> p, c;
    for (double z : zs) {
      const auto m = moments(consequences(peaks, ch, z, cfg.consequence));
      p.push_back(m.mean);
      c.push_back(m.mean > 0.0 ? std::sqrt(m.variance / static_cast<double>(n)) / m.mean
                               : std::numeric_limits<double>::quiet_NaN());
    }
    const std::string file = "curve_oracle_ch" + std::to_string(ch) + ".csv";
    write_text(out_path(cfg, file), curve_csv(zs, p, c, monotonicity_violations(p)));
    curves.push_back({{"channel", ch}, {"file", file}});
  }
  report["curves"] = curves;
  write_json(out_path(cfg, "oracle.json"), report);
  merge_timings(cfg, "oracle-mc", {{"hf_ms_per_run", ms / static_cast<double>(n)}});
  if (fs::exists(out_path(cfg, "ledger.jsonl"))) {
    CostLedger ledger(out_path(cfg, "ledger.jsonl"));
    ledger.begin("oracle-mc", hash);
    ledger.record("oracle", "hf", n, cfg.c_hf);
    ledger.commit("oracle-mc");
  }
  return summary.str();
}

std::string run_report(const RunConfig& cfg, const StageOptions& opt) {
  const json mf = read_json(out_path(cfg, "report.json"));
  check_hash(mf, cfg, Stage::Estimate, opt, "report.json");
  json gss = nullptr, oracle = nullptr;
  if (fs::exists(out_path(cfg, "baseline_gss.json"))) gss = read_json(out_path(cfg, "baseline_gss.json"));
  if (fs::exists(out_path(cfg, "oracle.json"))) oracle = read_json(out_path(cfg, "oracle.json"));

  // the printed speedup must be reproducible from the ledger
  const LedgerTotals es = ledger_totals(out_path(cfg, "ledger.jsonl"), "estimate");
  const LedgerTotals tr = ledger_totals(out_path(cfg, "ledger.jsonl"), "train");
  const double ns = static_cast<double>(mf.at("probabilities").size());
  const double rho = mf.at("rho").get<double>();
  const double n_hf = static_cast<double>(es.get("eval", "hf")) / ns;
  const auto ngss = equivalent_count(n_hf, mf.at("r_effective").get<double>(), rho > 0.0 ? rho : 0.0);
  const double sp = speedup(static_cast<double>(ngss.rounded), n_hf, static_cast<double>(tr.get("train", "hf")) / ns,
                            static_cast<double>(es.get("eval", "lf")) / ns, cfg.c_hf / cfg.c_lf);
  MFSS_REQUIRE(sp == mf.at("speedup").get<double>(), ErrorKind::Io,
               "report: speedup in report.json does not match the ledger");

  std::ostringstream o;
  o << std::setprecision(4);
  o << std::left << std::setw(12) << "Limit state" << std::setw(26) << "Oracle MC (SE)" << std::setw(26)
    << "GSS (COV)" << std::setw(26) << "MFSS (COV)" << "z-score\n";
  json rows = json::array();
  for (std::size_t i = 0; i < mf.at("limit_states").size(); ++i) {
    const auto& m = mf.at("limit_states")[i];
    auto cell = [](double v, const json& c) {
      std::ostringstream s;
      s << std::setprecision(4) << v << " (" << (c.is_null() ? std::string("n/a") : fmt(c.get<double>()).substr(0, 6))
        << ")";
      return s.str();
    };
    json row{{"name", m.at("name")}, {"mfss", m.at("estimate")}, {"mfss_variance", m.at("variance")}};
    std::string oc = "-", gc = "-", zs = "-";
    if (!gss.is_null()) {
      const auto& g = gss.at("limit_states")[i];
      gc = cell(g.at("estimate").get<double>(), g.at("cov"));
      row["gss"] = g.at("estimate");
      row["gss_variance"] = g.at("variance");
    }
    if (!oracle.is_null()) {
      const auto& r = oracle.at("limit_states")[i];
      const double p = r.at("estimate").get<double>(), se = r.at("se").get<double>();
      std::ostringstream s;
      s << std::setprecision(4) << p << " (" << se << ")";
      oc = s.str();
      const double comb = std::sqrt(se * se + m.at("variance").get<double>());
      const double z = comb > 0.0 ? (m.at("estimate").get<double>() - p) / comb : 0.0;
      zs = fmt(z).substr(0, 6);
      row["oracle"] = p;
      row["oracle_se"] = se;
      row["z_score"] = z;
    }
    o << std::left << std::setw(12) << m.at("name").get<std::string>() << std::setw(26) << oc << std::setw(26) << gc
      << std::setw(26) << cell(m.at("estimate").get<double>(), m.at("cov")) << zs << "\n";
    rows.push_back(row);
  }
  o << "speedup (from ledger) = " << sp << ", N_GSS = " << ngss.rounded << "\n";
  write_json(out_path(cfg, "summary.json"), {{"config_hash", mf.at("config_hash")}, {"rows", rows}, {"speedup", sp}});
  return o.str();
}

std::vector<std::string> deterministic_artifacts(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (n != "timings.json" && e.is_regular_file()) names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace mfss
