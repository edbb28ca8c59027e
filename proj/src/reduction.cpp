// SPDX-License-Identifier: Apache-2.0
#include "mfss/reduction.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

#include "mfss/error.hpp"

namespace mfss {

Eigen::MatrixXd build_snapshot_matrix(const std::vector<Eigen::MatrixXd>& responses, std::size_t n_t) {
  MFSS_REQUIRE(!responses.empty(), ErrorKind::Config, "snapshots: no responses");
  MFSS_REQUIRE(n_t >= responses.size() && n_t % responses.size() == 0, ErrorKind::Config,
               "snapshots: n_t = " + std::to_string(n_t) + " must be a positive multiple of the " +
                   std::to_string(responses.size()) + " responses");
  const std::size_t per = n_t / responses.size();
  const auto n = responses.front().rows();
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(n_t));
  Eigen::Index col = 0;
  for (const auto& r : responses) {
    MFSS_REQUIRE(r.rows() == n, ErrorKind::Dimension, "snapshots: responses differ in DOF count");
    const auto tn = static_cast<std::size_t>(r.cols());
    MFSS_REQUIRE(per <= tn, ErrorKind::Config,
                 "snapshots: " + std::to_string(per) + " snapshots requested from " + std::to_string(tn) +
                     " time points");
    for (std::size_t i = 0; i < per; ++i) {
      const auto t = static_cast<Eigen::Index>((2 * i + 1) * tn / (2 * per));
      x.col(col++) = r.col(t);
    }
  }
  return x;
}

ReducedBasis pod_truncate(const Eigen::MatrixXd& x, double eta) {
  MFSS_REQUIRE(eta > 0.0 && eta <= 1.0, ErrorKind::Config, "pod: eta must be in (0, 1]");
  MFSS_REQUIRE(x.size() > 0 && x.allFinite(), ErrorKind::Numerical, "pod: snapshot matrix is empty or non-finite");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU);
  const Eigen::VectorXd s = svd.singularValues();
  MFSS_REQUIRE(s.size() > 0 && s[0] > 0.0, ErrorKind::Numerical, "pod: zero snapshot matrix");
  const double tol = static_cast<double>(std::max(x.rows(), x.cols())) * std::numeric_limits<double>::epsilon() * s[0];
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > tol) ++rank;
  const double total = s.head(rank).squaredNorm();
  Eigen::Index nr = 0;
  double acc = 0.0;
  while (nr < rank) {
    acc += s[nr] * s[nr];
    ++nr;
    if (acc / total >= eta) break;
  }
  ReducedBasis b;
  b.phi = svd.matrixU().leftCols(nr);
  for (Eigen::Index c = 0; c < nr; ++c) {
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index imax;
    b.phi.col(c).cwiseAbs().maxCoeff(&imax);
    if (b.phi(imax, c) < 0.0) b.phi.col(c) *= -1.0;
  }
  b.singular_values = s.head(nr);
  b.all_singular_values = s.head(rank);
  b.eta = eta;
  b.energy_ratio = acc / total;
  b.n_t = static_cast<std::size_t>(x.cols());
  b.input_scale = Eigen::VectorXd::Ones(nr);
  b.output_scale = Eigen::VectorXd::Ones(nr);
  return b;
}

Eigen::MatrixXd project_input(const ReducedBasis& b, const Eigen::MatrixXd& load) {
  MFSS_REQUIRE(load.rows() == b.phi.rows(), ErrorKind::Dimension, "project_input: dimension mismatch");
  return b.phi.transpose() * load;
}

Eigen::MatrixXd project_output(const ReducedBasis& b, const Eigen::MatrixXd& response) {
  MFSS_REQUIRE(response.rows() == b.phi.rows(), ErrorKind::Dimension, "project_output: dimension mismatch");
  return b.phi.transpose() * response;
}

Eigen::MatrixXd lift(const ReducedBasis& b, const Eigen::MatrixXd& reduced) {
  MFSS_REQUIRE(reduced.rows() == b.phi.cols(), ErrorKind::Dimension, "lift: dimension mismatch");
  return b.phi * reduced;
}

void fit_normalization(ReducedBasis& b, const std::vector<Eigen::MatrixXd>& p, const std::vector<Eigen::MatrixXd>& q) {
  const auto nr = b.phi.cols();
  auto avg_peak = [&](const std::vector<Eigen::MatrixXd>& seqs) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(nr);
    for (const auto& m : seqs) {
      MFSS_REQUIRE(m.rows() == nr, ErrorKind::Dimension, "normalization: reduced dimension mismatch");
      s += m.cwiseAbs().rowwise().maxCoeff();
    }
    if (!seqs.empty()) s /= static_cast<double>(seqs.size());
    for (Eigen::Index l = 0; l < nr; ++l)
      if (!(s[l] > 0.0)) s[l] = 1.0;
    return s;
  };
  b.input_scale = avg_peak(p);
  b.output_scale = avg_peak(q);
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json ReducedBasis::to_json() const {
  nlohmann::json j;
  j["n"] = phi.rows();
  j["n_r"] = phi.cols();
  std::vector<double> cols(phi.data(), phi.data() + phi.size());  // column-major
  j["phi"] = cols;
  j["singular_values"] = vec_json(singular_values);
  j["all_singular_values"] = vec_json(all_singular_values);
  j["eta"] = eta;
  j["energy_ratio"] = energy_ratio;
  j["n_t"] = n_t;
  j["input_scale"] = vec_json(input_scale);
  j["output_scale"] = vec_json(output_scale);
  return j;
}

ReducedBasis ReducedBasis::from_json(const nlohmann::json& j) {
  ReducedBasis b;
  const auto n = j.at("n").get<Eigen::Index>();
  const auto nr = j.at("n_r").get<Eigen::Index>();
  auto cols = j.at("phi").get<std::vector<double>>();
  MFSS_REQUIRE(static_cast<Eigen::Index>(cols.size()) == n * nr, ErrorKind::Io, "basis: phi size mismatch");
  b.phi = Eigen::Map<Eigen::MatrixXd>(cols.data(), n, nr);
  b.singular_values = json_vec(j.at("singular_values"));
  b.all_singular_values = json_vec(j.at("all_singular_values"));
  b.eta = j.at("eta").get<double>();
  b.energy_ratio = j.at("energy_ratio").get<double>();
  b.n_t = j.at("n_t").get<std::size_t>();
  b.input_scale = json_vec(j.at("input_scale"));
  b.output_scale = json_vec(j.at("output_scale"));
  return b;
}

}  // namespace mfss
