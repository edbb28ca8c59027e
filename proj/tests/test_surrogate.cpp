// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "mfss/error.hpp"
#include "mfss/log.hpp"
#include "mfss/surrogate.hpp"

using namespace mfss;

namespace {

struct QuietWarnings {
  std::vector<std::string> seen;
  QuietWarnings() {
    set_warning_sink([this](const std::string& m) { seen.push_back(m); });
  }
  ~QuietWarnings() { set_warning_sink(nullptr); }
};

double gauss(RandomStream& s) {
  const double u1 = 1.0 - s.uniform(), u2 = s.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Two-channel white-noise load of length 64.
Eigen::MatrixXd mock_load(std::uint64_t i) {
  RandomStream s(99, substream::kPhase1, i);
  Eigen::MatrixXd x(2, 64);
  for (Eigen::Index t = 0; t < x.cols(); ++t)
    for (Eigen::Index c = 0; c < 2; ++c) x(c, t) = gauss(s);
  return x;
}

// First-order causal filter per channel, mixed between dofs.
Eigen::MatrixXd mock_hf(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(2, x.cols());
  for (Eigen::Index t = 1; t < x.cols(); ++t) {
    y(0, t) = 0.7 * y(0, t - 1) + 0.3 * x(0, t);
    y(1, t) = 0.5 * y(1, t - 1) + 0.2 * x(0, t) + 0.4 * x(1, t);
  }
  return y;
}

ReducedBasis mock_basis(std::size_t n) {
  std::vector<Eigen::MatrixXd> r;
  for (std::size_t i = 0; i < n; ++i) r.push_back(mock_hf(mock_load(i)));
  return pod_truncate(build_snapshot_matrix(r, 32 * n), 0.999999);
}

TrainConfig small_cfg() {
  TrainConfig c;
  c.hidden = 8;
  c.dropout = 0.1;
  c.learning_rate = 1e-2;
  c.max_epochs = 40;
  c.batch_size = 4;
  c.patience = 20;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("weighted correlation") {
  // columns with exact correlations built from orthogonal centered vectors
  Eigen::VectorXd x(4), y(4);
  x << 1, -1, 1, -1;
  y << 1, 1, -1, -1;
  Eigen::MatrixXd hf(4, 2), lf(4, 2);
  hf << x, x;
  lf.col(0) = 0.9 * x + std::sqrt(1 - 0.81) * y;
  lf.col(1) = 0.6 * x + std::sqrt(1 - 0.36) * y;
  Eigen::Vector2d lam(2, 1);
  const auto w = weighted_correlation(hf, lf, lam);
  CHECK(w.rho_l[0] == doctest::Approx(0.9));
  CHECK(w.rho_l[1] == doctest::Approx(0.6));
  CHECK(w.rho_v == doctest::Approx(0.8));
  CHECK(weighted_correlation(hf, lf, Eigen::Vector2d(3, 3)).rho_v == doctest::Approx(0.75));
  CHECK(std::abs(weighted_correlation(hf, hf, lam).rho_v - 1.0) <= 1e-10);
  CHECK(weighted_correlation(hf, 3.0 * hf.array() + 1.0, lam).rho_v == doctest::Approx(1.0));

  QuietWarnings q;
  Eigen::MatrixXd flat = hf;
  flat.col(1).setConstant(0.2);
  const auto e = weighted_correlation(flat, lf, lam);
  CHECK(e.excluded[1]);
  CHECK(std::isnan(e.rho_l[1]));
  CHECK(e.rho_v == doctest::Approx(0.9));
  CHECK(q.seen.size() == 1);
  flat.col(0).setConstant(1.0);
  CHECK_THROWS_AS(weighted_correlation(flat, lf, lam), Error);
  CHECK_THROWS_AS(weighted_correlation(hf, lf, Eigen::Vector2d(1, 0)), Error);
  CHECK_THROWS_AS(weighted_correlation(hf, lf, Eigen::Vector3d(1, 1, 1)), Error);
}

TEST_CASE("k-fold cross validation with mock regressors") {
  const std::size_t n = 130;
  Eigen::MatrixXd peaks(n, 3);
  RandomStream s(7, substream::kOracle, 0);
  for (Eigen::Index i = 0; i < peaks.size(); ++i) peaks.data()[i] = std::abs(gauss(s));
  const Eigen::Vector3d lam(5, 2, 1);

  std::multiset<std::size_t> tested;
  auto playback = [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
    CHECK(train.size() + test.size() == n);
    CHECK(test.size() == 26);
    FoldPeaks p;
    p.hf.resize(static_cast<Eigen::Index>(test.size()), 3);
    for (std::size_t t = 0; t < test.size(); ++t) p.hf.row(static_cast<Eigen::Index>(t)) = peaks.row(static_cast<Eigen::Index>(test[t]));
    p.lf = p.hf;
    return p;
  };
  auto rep = kfold_cv(n, 5, lam, 11, [&](const auto& tr, const auto& te) {
    for (auto i : te) tested.insert(i);
    return playback(tr, te);
  });
  CHECK(rep.k == 5);
  CHECK(rep.fold_rho.size() == 5);
  CHECK(rep.rho_mean == doctest::Approx(1.0));
  CHECK(rep.delta == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tested.size() == n);
  CHECK(std::set<std::size_t>(tested.begin(), tested.end()).size() == n);

  auto noise = [&](const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
    FoldPeaks p = playback(tr, te);
    RandomStream r(13, substream::kOracle, te.front() + 1);
    for (Eigen::Index i = 0; i < p.lf.size(); ++i) p.lf.data()[i] = std::abs(gauss(r));
    return p;
  };
  const auto nr = kfold_cv(n, 5, lam, 11, noise);
  CHECK(std::abs(nr.rho_mean) < 0.3);
  CHECK(nr.delta >= 0.0);

  // same seed, same permutation, regardless of workers
  const auto par = kfold_cv(n, 5, lam, 11, noise, 4);
  CHECK(par.fold_rho == nr.fold_rho);

  CHECK_THROWS_AS(kfold_cv(n, 4, lam, 1, playback), Error);
  CHECK_THROWS_AS(kfold_cv(n, 11, lam, 1, playback), Error);
  CHECK_THROWS_AS(kfold_cv(9, 5, lam, 1, playback), Error);
  CHECK_THROWS_AS(kfold_cv(12, 5, lam, 1, playback), Error);
}

TEST_CASE("adaptive loop bookkeeping") {
  // mock learnability: rho = 1 - c / total
  auto run = [](double rho_target, double c, std::size_t max_it) {
    std::size_t total = 0;
    AdaptiveConfig cfg;
    cfg.n_init = 3;
    cfg.n_add = 1;
    cfg.rho_target = rho_target;
    cfg.delta_target = 0.05;
    cfg.max_iterations = max_it;
    return adaptive_loop(cfg, 10, [&](std::size_t n) { total += 10 * n; },
                         [&] {
                           CorrelationReport r;
                           r.rho_mean = 1.0 - c / static_cast<double>(total);
                           r.delta = 0.01;
                           return r;
                         });
  };
  const auto now = run(0.5, 1.0, 5);
  CHECK(now.converged);
  CHECK(now.i_train == 0);
  CHECK(now.n_train == 3);
  CHECK(now.trajectory.size() == 1);

  std::size_t prev = 1000;
  for (double target : {0.97, 0.96, 0.95, 0.9, 0.8}) {
    const auto o = run(target, 1.5, 50);
    REQUIRE(o.converged);
    CHECK(o.n_train <= prev);
    CHECK(o.n_train == 3 + o.i_train);
    CHECK(o.trajectory.back().total_samples == 10 * o.n_train);
    prev = o.n_train;
  }

  AdaptiveConfig cfg;
  cfg.rho_target = 0.999;
  cfg.max_iterations = 3;
  const auto fail = run(0.999, 5.0, 3);
  CHECK_FALSE(fail.converged);
  CHECK(fail.trajectory.size() == 4);
  try {
    require_converged(fail, cfg);
    FAIL("expected a convergence error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Convergence);
    CHECK(std::string(e.what()).find("(60, ") != std::string::npos);
  }
  const auto csv = trajectory_csv(fail.trajectory);
  CHECK(csv.rfind("iteration,n_train_per_stratum,total_samples,rho_mean,delta\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  cfg.k_folds = 4;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("training on zero outputs predicts zero") {
  const ReducedBasis basis = mock_basis(6);
  std::vector<Eigen::MatrixXd> loads, zeros;
  for (std::uint64_t i = 0; i < 12; ++i) {
    loads.push_back(mock_load(i));
    zeros.push_back(Eigen::MatrixXd::Zero(2, 64));
  }
  auto cfg = small_cfg();
  cfg.max_epochs = 2000;
  cfg.patience = 2000;
  const auto m = train_surrogate(loads, zeros, basis, 1, 2, cfg);
  for (std::uint64_t i = 20; i < 24; ++i) CHECK(m.predict(mock_load(i)).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("surrogate training is deterministic and predictions stay in span(phi)") {
  const ReducedBasis basis = mock_basis(16);
  std::vector<Eigen::MatrixXd> loads, resp;
  for (std::uint64_t i = 0; i < 16; ++i) {
    loads.push_back(mock_load(i));
    resp.push_back(mock_hf(loads.back()));
  }
  const auto cfg = small_cfg();
  TrainStats st;
  const auto a = train_surrogate(loads, resp, basis, 1, 2, cfg, &st);
  const auto b = train_surrogate(loads, resp, basis, 1, 2, cfg);
  CHECK(a.network.params() == b.network.params());
  CHECK(st.epochs_run >= 1);
  CHECK(std::isfinite(st.validation_loss));

  const Eigen::MatrixXd x = mock_load(40);
  const Eigen::MatrixXd y1 = a.predict(x), y2 = a.predict(x);
  CHECK(y1 == y2);
  const Eigen::MatrixXd& phi = a.basis.phi;
  const Eigen::MatrixXd resid = y1 - phi * (phi.transpose() * y1);
  CHECK(resid.cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, y1.cwiseAbs().maxCoeff()));

  const auto back = SurrogateModel::from_json(a.to_json());
  CHECK(back.predict(x) == y1);

  auto bad = cfg;
  bad.validation_fraction = 1.0;
  CHECK_THROWS_AS(train_surrogate(loads, resp, basis, 1, 2, bad), Error);
}

TEST_CASE("adaptive_train draws, logs and retrains") {
  std::vector<double> sv;
  Phase1Result p1;
  p1.seed = 3;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    const Eigen::MatrixXd y = mock_hf(mock_load(i));
    p1.sv_values.push_back(y.cwiseAbs().maxCoeff());
  }
  StrataSpec spec;
  spec.n_strata = 2;
  spec.tail_exceedance = 0.1;
  Stratification strat = build_strata(p1, spec);

  std::vector<std::pair<std::uint64_t, std::size_t>> logged;
  AdaptiveTrainContext ctx;
  ctx.load = mock_load;
  ctx.hf = [](std::uint64_t i) { return mock_hf(mock_load(i)); };
  ctx.on_hf = [&](std::uint64_t i, std::size_t k) { logged.emplace_back(i, k); };
  ctx.snapshots_per_sample = 16;
  ctx.eta = 0.9999;
  ctx.wavelet_level = 1;
  ctx.wavelet_order = 2;
  ctx.seed = 4;
  ctx.workers = 3;

  AdaptiveConfig acfg;
  acfg.n_init = 8;
  acfg.n_add = 2;
  acfg.rho_target = -1.0;
  acfg.delta_target = 10.0;
  acfg.k_folds = 5;
  auto res = adaptive_train(strat, ctx, acfg, small_cfg());
  REQUIRE(res.outcome.converged);
  CHECK(res.outcome.n_train == 8);
  CHECK(logged.size() == 16);
  CHECK(res.train_indices.size() == 16);
  for (std::size_t k = 0; k < 2; ++k) CHECK(strat.drawn(k, DrawPurpose::Train).size() == 8);
  for (const auto& [i, k] : logged) CHECK(strat.stratum_of(p1.sv_values[i]) == k);
  CHECK(res.model.provenance.at("n_train_per_stratum") == 8);
  CHECK(res.model.provenance.at("train_indices").size() == 16);
  CHECK(res.model.provenance.at("n_samples") == 16);
  CHECK(std::abs(res.outcome.report.rho_mean) <= 1.0);

  // unreachable targets: explicit failure after max_iterations additions
  Stratification strat2 = build_strata(p1, spec);
  logged.clear();
  acfg.rho_target = 1.0;
  acfg.delta_target = 0.0;
  acfg.max_iterations = 1;
  auto fail = adaptive_train(strat2, ctx, acfg, small_cfg());
  CHECK_FALSE(fail.outcome.converged);
  CHECK(fail.outcome.trajectory.size() == 2);
  CHECK(logged.size() == 20);
  CHECK_THROWS_AS(require_converged(fail.outcome, acfg), Error);
}
