// SPDX-License-Identifier: Apache-2.0
#include "mfss/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mfss/error.hpp"
#include "mfss/log.hpp"
#include "mfss/parallel.hpp"
#include "mfss/rng.hpp"

namespace mfss {

void TrainConfig::validate() const {
  MFSS_REQUIRE(hidden >= 1, ErrorKind::Config, "train: hidden width must be >= 1");
  MFSS_REQUIRE(dropout >= 0.0 && dropout < 1.0, ErrorKind::Config, "train: dropout must be in [0, 1)");
  MFSS_REQUIRE(learning_rate > 0.0, ErrorKind::Config, "train: learning rate must be > 0");
  MFSS_REQUIRE(max_epochs >= 1 && batch_size >= 1, ErrorKind::Config, "train: epochs and batch size must be >= 1");
  MFSS_REQUIRE(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorKind::Config,
               "train: validation fraction must be in (0, 1)");
  MFSS_REQUIRE(grad_clip >= 0.0, ErrorKind::Config, "train: grad_clip must be >= 0");
}

namespace {

void shuffle(std::vector<std::size_t>& v, RandomStream& s) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[s.uniform_index(i)]);
}

}  // namespace

GruNetwork train_network(const std::vector<SequencePair>& data, const TrainConfig& cfg, TrainStats* stats) {
  cfg.validate();
  MFSS_REQUIRE(!data.empty(), ErrorKind::Config, "train: empty dataset");
  const std::size_t n = data.size();
  const auto n_in = static_cast<std::size_t>(data[0].input.rows());
  const auto n_out = static_cast<std::size_t>(data[0].target.rows());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RandomStream split(cfg.seed, substream::kTrainShuffle, 0);
  shuffle(order, split);
  std::size_t n_val = 0;
  if (n >= 2)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(cfg.validation_fraction * n)), 1, n - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<long>(n_val), order.end());

  auto ptrs = [&](const std::vector<std::size_t>& idx, bool input) {
    std::vector<const Eigen::MatrixXd*> p;
    for (auto i : idx) p.push_back(input ? &data[i].input : &data[i].target);
    return p;
  };
  const auto val_in = ptrs(val.empty() ? train : val, true);
  const auto val_out = ptrs(val.empty() ? train : val, false);

  GruNetwork net(n_in, cfg.hidden, n_out);
  net.initialize(cfg.seed);
  Adam opt(net.n_params(), cfg.learning_rate);
  Eigen::VectorXd grad, best = net.params();
  double best_loss = net.loss(val_in, val_out);
  std::size_t best_epoch = 0, epoch = 0;
  double last_train = std::numeric_limits<double>::quiet_NaN();

  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    RandomStream s(cfg.seed, substream::kTrainShuffle, epoch);
    shuffle(train, s);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      std::vector<std::size_t> b(train.begin() + static_cast<long>(start),
                                 train.begin() + static_cast<long>(std::min(train.size(), start + cfg.batch_size)));
      const double l = net.loss_and_gradient(ptrs(b, true), ptrs(b, false), grad, cfg.dropout, cfg.seed,
                                             epoch * 1000003ULL + batches);
      if (!std::isfinite(l) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "train: loss diverged (" << l << ") at epoch " << epoch << ", batch " << batches
            << "; lower the learning rate or check input scaling";
        throw Error(ErrorKind::Numerical, msg.str());
      }
      if (cfg.grad_clip > 0.0) {
        const double norm = grad.norm();
        if (norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;
      }
      opt.step(net.params(), grad);
      sum += l;
      ++batches;
    }
    last_train = sum / static_cast<double>(batches);
    const double vl = net.loss(val_in, val_out);
    MFSS_REQUIRE(std::isfinite(vl), ErrorKind::Numerical,
                 "train: validation loss is not finite at epoch " + std::to_string(epoch));
    if (vl < best_loss) {
      best_loss = vl;
      best = net.params();
      best_epoch = epoch;
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }
  net.params() = best;
  if (stats) {
    stats->epochs_run = std::min(epoch, cfg.max_epochs);
    stats->best_epoch = best_epoch;
    stats->train_loss = last_train;
    stats->validation_loss = best_loss;
  }
  return net;
}

Eigen::MatrixXd SurrogateModel::encode_input(const Eigen::MatrixXd& load) const {
  Eigen::MatrixXd p = project_input(basis, load);
  MFSS_REQUIRE(static_cast<std::size_t>(p.cols()) == wavelet.original_len, ErrorKind::Dimension,
               "surrogate: load length does not match the wavelet configuration");
  Eigen::MatrixXd out(p.rows(), static_cast<Eigen::Index>(wavelet.compressed_len));
  for (Eigen::Index l = 0; l < p.rows(); ++l) {
    Eigen::VectorXd row = p.row(l).transpose() / basis.input_scale[l];
    auto c = wavelet_compress(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), wavelet);
    out.row(l) = Eigen::Map<Eigen::RowVectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  }
  return out;
}

Eigen::MatrixXd SurrogateModel::encode_output(const Eigen::MatrixXd& response) const {
  Eigen::MatrixXd q = project_output(basis, response);
  MFSS_REQUIRE(static_cast<std::size_t>(q.cols()) == wavelet.original_len, ErrorKind::Dimension,
               "surrogate: response length does not match the wavelet configuration");
  Eigen::MatrixXd out(q.rows(), static_cast<Eigen::Index>(wavelet.compressed_len));
  for (Eigen::Index l = 0; l < q.rows(); ++l) {
    Eigen::VectorXd row = q.row(l).transpose() / basis.output_scale[l];
    auto c = wavelet_compress(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), wavelet);
    out.row(l) = Eigen::Map<Eigen::RowVectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  }
  return out;
}

Eigen::MatrixXd SurrogateModel::predict_reduced(const Eigen::MatrixXd& load) const {
  const Eigen::MatrixXd y = network.forward(encode_input(load));
  Eigen::MatrixXd q(y.rows(), static_cast<Eigen::Index>(wavelet.original_len));
  for (Eigen::Index l = 0; l < y.rows(); ++l) {
    Eigen::VectorXd row = y.row(l).transpose();
    auto r = wavelet_reconstruct(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), wavelet);
    q.row(l) = basis.output_scale[l] * Eigen::Map<Eigen::RowVectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
  }
  return q;
}

Eigen::MatrixXd SurrogateModel::predict(const Eigen::MatrixXd& load) const { return lift(basis, predict_reduced(load)); }

nlohmann::json SurrogateModel::to_json() const {
  nlohmann::json j;
  j["format"] = "mfss-surrogate";
  j["version"] = 1;
  j["basis"] = basis.to_json();
  j["wavelet"] = {{"family", "db"},
                  {"order", wavelet.order},
                  {"level", wavelet.level},
                  {"padding", "symmetric"},
                  {"original_len", wavelet.original_len},
                  {"compressed_len", wavelet.compressed_len}};
  j["network"] = network.to_json();
  j["provenance"] = provenance;
  return j;
}

SurrogateModel SurrogateModel::from_json(const nlohmann::json& j) {
  MFSS_REQUIRE(j.value("format", "") == "mfss-surrogate", ErrorKind::Io, "not a surrogate artifact");
  SurrogateModel m;
  m.basis = ReducedBasis::from_json(j.at("basis"));
  const auto& w = j.at("wavelet");
  m.wavelet = WaveletConfig::make(w.at("original_len").get<std::size_t>(), w.at("level").get<int>(),
                                  w.at("order").get<int>());
  m.network = GruNetwork::from_json(j.at("network"));
  m.provenance = j.value("provenance", nlohmann::json::object());
  return m;
}

SurrogateModel train_surrogate(const std::vector<Eigen::MatrixXd>& loads, const std::vector<Eigen::MatrixXd>& responses,
                               ReducedBasis basis, int wavelet_level, int wavelet_order, const TrainConfig& cfg,
                               TrainStats* stats) {
  MFSS_REQUIRE(!loads.empty() && loads.size() == responses.size(), ErrorKind::Config,
               "train_surrogate: need matching, nonempty loads and responses");
  std::vector<Eigen::MatrixXd> p, q;
  for (std::size_t i = 0; i < loads.size(); ++i) {
    MFSS_REQUIRE(loads[i].cols() == responses[i].cols(), ErrorKind::Dimension,
                 "train_surrogate: load and response lengths differ");
    p.push_back(project_input(basis, loads[i]));
    q.push_back(project_output(basis, responses[i]));
  }
  fit_normalization(basis, p, q);
  SurrogateModel m;
  m.basis = std::move(basis);
  m.wavelet = WaveletConfig::make(static_cast<std::size_t>(loads[0].cols()), wavelet_level, wavelet_order);
  std::vector<SequencePair> data;
  data.reserve(loads.size());
  for (std::size_t i = 0; i < loads.size(); ++i) data.push_back({m.encode_input(loads[i]), m.encode_output(responses[i])});
  TrainStats local;
  m.network = train_network(data, cfg, &local);
  if (stats) *stats = local;
  m.provenance["train_seed"] = cfg.seed;
  m.provenance["n_samples"] = loads.size();
  m.provenance["epochs_run"] = local.epochs_run;
  m.provenance["best_epoch"] = local.best_epoch;
  m.provenance["validation_loss"] = local.validation_loss;
  return m;
}

WeightedCorrelation weighted_correlation(const Eigen::MatrixXd& hf, const Eigen::MatrixXd& lf,
                                         const Eigen::VectorXd& lambda) {
  MFSS_REQUIRE(hf.rows() == lf.rows() && hf.cols() == lf.cols() && hf.cols() == lambda.size(), ErrorKind::Dimension,
               "weighted_correlation: peak matrices and weights must align");
  MFSS_REQUIRE(hf.rows() >= 2, ErrorKind::Config, "weighted_correlation: need at least two samples");
  WeightedCorrelation w;
  double num = 0.0, den = 0.0;
  for (Eigen::Index l = 0; l < hf.cols(); ++l) {
    MFSS_REQUIRE(lambda[l] > 0.0, ErrorKind::Config, "weighted_correlation: weights must be positive");
    const Eigen::VectorXd a = hf.col(l).array() - hf.col(l).mean();
    const Eigen::VectorXd b = lf.col(l).array() - lf.col(l).mean();
    const double saa = a.squaredNorm(), sbb = b.squaredNorm();
    if (!(saa > 0.0) || !(sbb > 0.0)) {
      warn("weighted_correlation: mode " + std::to_string(l + 1) + " has zero peak variance; excluded");
      w.rho_l.push_back(std::numeric_limits<double>::quiet_NaN());
      w.excluded.push_back(true);
      continue;
    }
    const double rho = std::clamp(a.dot(b) / std::sqrt(saa * sbb), -1.0, 1.0);
    w.rho_l.push_back(rho);
    w.excluded.push_back(false);
    num += lambda[l] * rho;
    den += lambda[l];
  }
  MFSS_REQUIRE(den > 0.0, ErrorKind::Numerical, "weighted_correlation: every mode has zero variance");
  w.rho_v = num / den;
  return w;
}

nlohmann::json CorrelationReport::to_json() const {
  return {{"rho_mean", rho_mean}, {"delta", delta}, {"fold_rho", fold_rho}, {"per_mode", per_mode}, {"k", k}};
}

CorrelationReport kfold_cv(std::size_t n, std::size_t k, const Eigen::VectorXd& lambda, std::uint64_t seed,
                           const FoldRunner& run, std::size_t workers) {
  MFSS_REQUIRE(k >= 5 && k <= 10, ErrorKind::Config, "kfold_cv: k must be between 5 and 10");
  MFSS_REQUIRE(n >= 2 * k, ErrorKind::Config,
               "kfold_cv: " + std::to_string(n) + " samples is fewer than 2k = " + std::to_string(2 * k));
  MFSS_REQUIRE(n / k >= 3, ErrorKind::Config, "kfold_cv: folds smaller than 3 samples cannot give a correlation");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  RandomStream s(seed, substream::kCvFold, n);
  shuffle(perm, s);

  std::vector<std::size_t> bounds{0};
  for (std::size_t f = 0; f < k; ++f) bounds.push_back(bounds.back() + n / k + (f < n % k ? 1 : 0));

  std::vector<WeightedCorrelation> fold(k);
  parallel_for(k, workers, [&](std::size_t f) {
    std::vector<std::size_t> test(perm.begin() + static_cast<long>(bounds[f]), perm.begin() + static_cast<long>(bounds[f + 1]));
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), perm.begin() + static_cast<long>(bounds[g]), perm.begin() + static_cast<long>(bounds[g + 1]));
    const FoldPeaks p = run(train, test);
    fold[f] = weighted_correlation(p.hf, p.lf, lambda);
  });

  CorrelationReport r;
  r.k = k;
  for (const auto& w : fold) r.fold_rho.push_back(w.rho_v);
  r.rho_mean = std::accumulate(r.fold_rho.begin(), r.fold_rho.end(), 0.0) / static_cast<double>(k);
  double ss = 0.0;
  for (double v : r.fold_rho) ss += (v - r.rho_mean) * (v - r.rho_mean);
  const double sd = std::sqrt(ss / static_cast<double>(k - 1));
  r.delta = r.rho_mean != 0.0 ? sd / std::abs(r.rho_mean) : std::numeric_limits<double>::infinity();
  r.per_mode.assign(static_cast<std::size_t>(lambda.size()), 0.0);
  for (std::size_t l = 0; l < r.per_mode.size(); ++l) {
    double acc = 0.0;
    std::size_t c = 0;
    for (const auto& w : fold)
      if (!w.excluded[l]) {
        acc += w.rho_l[l];
        ++c;
      }
    r.per_mode[l] = c ? acc / static_cast<double>(c) : std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

void AdaptiveConfig::validate() const {
  MFSS_REQUIRE(n_init >= 1 && n_add >= 1, ErrorKind::Config, "adaptive: n_init and n_add must be >= 1");
  MFSS_REQUIRE(k_folds >= 5 && k_folds <= 10, ErrorKind::Config, "adaptive: k_folds must be between 5 and 10");
  MFSS_REQUIRE(rho_target <= 1.0 && delta_target >= 0.0, ErrorKind::Config, "adaptive: invalid targets");
}

AdaptiveOutcome adaptive_loop(const AdaptiveConfig& cfg, std::size_t n_strata,
                              const std::function<void(std::size_t)>& acquire,
                              const std::function<CorrelationReport()>& evaluate) {
  cfg.validate();
  AdaptiveOutcome out;
  std::size_t n_train = cfg.n_init;
  acquire(cfg.n_init);
  for (std::size_t i = 0;; ++i) {
    CorrelationReport rep = evaluate();
    out.trajectory.push_back({i, n_train, n_train * n_strata, rep.rho_mean, rep.delta});
    out.report = rep;
    out.i_train = i;
    out.n_train = n_train;
    if (rep.rho_mean >= cfg.rho_target && rep.delta <= cfg.delta_target) {
      out.converged = true;
      return out;
    }
    if (i >= cfg.max_iterations) return out;
    acquire(cfg.n_add);
    n_train += cfg.n_add;
  }
}

std::string trajectory_csv(const std::vector<AdaptiveStep>& steps) {
  std::ostringstream o;
  o << "iteration,n_train_per_stratum,total_samples,rho_mean,delta\n";
  o.precision(17);
  for (const auto& s : steps)
    o << s.iteration << "," << s.n_train << "," << s.total_samples << "," << s.rho << "," << s.delta << "\n";
  return o.str();
}

void require_converged(const AdaptiveOutcome& outcome, const AdaptiveConfig& cfg) {
  if (outcome.converged) return;
  std::ostringstream msg;
  msg << "adaptive training did not reach rho >= " << cfg.rho_target << " and delta <= " << cfg.delta_target
      << " within " << cfg.max_iterations << " iterations; trajectory (total, rho, delta):";
  for (const auto& s : outcome.trajectory) msg << " (" << s.total_samples << ", " << s.rho << ", " << s.delta << ")";
  throw Error(ErrorKind::Convergence, msg.str());
}

AdaptiveTrainResult adaptive_train(Stratification& strat, const AdaptiveTrainContext& ctx, const AdaptiveConfig& acfg,
                                   const TrainConfig& tcfg) {
  acfg.validate();
  tcfg.validate();
  const std::size_t ns = strat.n_strata();
  std::vector<std::uint64_t> indices;
  std::vector<std::size_t> stratum_of;
  std::vector<Eigen::MatrixXd> loads, responses;
  std::size_t round = 0;

  auto acquire = [&](std::size_t n_per) {
    std::vector<std::uint64_t> fresh;
    std::vector<std::size_t> fresh_k;
    for (std::size_t k = 0; k < ns; ++k) {
      RandomStream rng(strat.seed(), substream::kTrainDraw, round * ns + k);
      for (auto idx : strat.draw(k, n_per, DrawPurpose::Train, rng)) {
        fresh.push_back(idx);
        fresh_k.push_back(k);
      }
    }
    ++round;
    std::vector<Eigen::MatrixXd> fl(fresh.size()), fr(fresh.size());
    parallel_for(fresh.size(), ctx.workers, [&](std::size_t i) {
      fl[i] = ctx.load(fresh[i]);
      fr[i] = ctx.hf(fresh[i]);
    });
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      if (ctx.on_hf) ctx.on_hf(fresh[i], fresh_k[i]);
      indices.push_back(fresh[i]);
      stratum_of.push_back(fresh_k[i]);
      loads.push_back(std::move(fl[i]));
      responses.push_back(std::move(fr[i]));
    }
  };

  auto make_basis = [&] {
    return pod_truncate(build_snapshot_matrix(responses, ctx.snapshots_per_sample * responses.size()), ctx.eta);
  };

  auto evaluate = [&]() -> CorrelationReport {
    const ReducedBasis basis = make_basis();
    auto run = [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
      std::vector<Eigen::MatrixXd> tl, tr;
      for (auto i : train) {
        tl.push_back(loads[i]);
        tr.push_back(responses[i]);
      }
      const SurrogateModel m = train_surrogate(tl, tr, basis, ctx.wavelet_level, ctx.wavelet_order, tcfg);
      FoldPeaks p;
      const auto nr = static_cast<Eigen::Index>(basis.n_reduced());
      p.hf.resize(static_cast<Eigen::Index>(test.size()), nr);
      p.lf.resize(static_cast<Eigen::Index>(test.size()), nr);
      for (std::size_t t = 0; t < test.size(); ++t) {
        p.hf.row(static_cast<Eigen::Index>(t)) =
            project_output(basis, responses[test[t]]).cwiseAbs().rowwise().maxCoeff().transpose();
        p.lf.row(static_cast<Eigen::Index>(t)) =
            m.predict_reduced(loads[test[t]]).cwiseAbs().rowwise().maxCoeff().transpose();
      }
      return p;
    };
    return kfold_cv(indices.size(), acfg.k_folds, basis.singular_values, ctx.seed, run, ctx.workers);
  };

  AdaptiveTrainResult result;
  result.outcome = adaptive_loop(acfg, ns, acquire, evaluate);
  result.train_indices = indices;
  if (!result.outcome.converged) return result;

  result.model = train_surrogate(loads, responses, make_basis(), ctx.wavelet_level, ctx.wavelet_order, tcfg);
  result.model.provenance["train_indices"] = indices;
  result.model.provenance["train_strata"] = stratum_of;
  result.model.provenance["n_train_per_stratum"] = result.outcome.n_train;
  result.model.provenance["i_train"] = result.outcome.i_train;
  result.model.provenance["correlation"] = result.outcome.report.to_json();
  return result;
}

}  // namespace mfss
