// SPDX-License-Identifier: Apache-2.0
#include "mfss/gru.hpp"

#include <cmath>

#include "mfss/error.hpp"
#include "mfss/rng.hpp"

namespace mfss {

using Mat = Eigen::MatrixXd;
using CMap = Eigen::Map<const Mat>;
using CVec = Eigen::Map<const Eigen::VectorXd>;

// Flat layout: W (3h x n_in) | U (3h x h) | b_i (3h) | b_h (3h) | W_o (n_out x h) | b_o (n_out).
struct GruNetwork::Views {
  CMap w, u;
  CVec bi, bh;
  CMap wo;
  CVec bo;
};

namespace {

struct Offsets {
  std::size_t w, u, bi, bh, wo, bo, total;
};

Offsets offsets(std::size_t ni, std::size_t h, std::size_t no) {
  Offsets o{};
  o.w = 0;
  o.u = o.w + 3 * h * ni;
  o.bi = o.u + 3 * h * h;
  o.bh = o.bi + 3 * h;
  o.wo = o.bh + 3 * h;
  o.bo = o.wo + no * h;
  o.total = o.bo + no;
  return o;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

GruNetwork::GruNetwork(std::size_t n_in, std::size_t hidden, std::size_t n_out)
    : n_in_(n_in), hidden_(hidden), n_out_(n_out) {
  MFSS_REQUIRE(n_in >= 1 && hidden >= 1 && n_out >= 1, ErrorKind::Config, "gru: sizes must be >= 1");
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offsets(n_in, hidden, n_out).total));
}

GruNetwork::Views GruNetwork::views(const Eigen::VectorXd& p) const {
  const auto o = offsets(n_in_, hidden_, n_out_);
  const auto h3 = static_cast<Eigen::Index>(3 * hidden_);
  const auto h = static_cast<Eigen::Index>(hidden_);
  const double* d = p.data();
  return Views{CMap(d + o.w, h3, static_cast<Eigen::Index>(n_in_)), CMap(d + o.u, h3, h), CVec(d + o.bi, h3),
               CVec(d + o.bh, h3), CMap(d + o.wo, static_cast<Eigen::Index>(n_out_), h),
               CVec(d + o.bo, static_cast<Eigen::Index>(n_out_))};
}

void GruNetwork::initialize(std::uint64_t seed) {
  RandomStream s(seed, substream::kNetInit, 0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (Eigen::Index i = 0; i < params_.size(); ++i) params_[i] = bound * (2.0 * s.uniform() - 1.0);
}

Eigen::MatrixXd GruNetwork::forward(const Eigen::MatrixXd& x) const {
  MFSS_REQUIRE(static_cast<std::size_t>(x.rows()) == n_in_, ErrorKind::Dimension, "gru: input width mismatch");
  const auto v = views(params_);
  const auto h = static_cast<Eigen::Index>(hidden_);
  const Eigen::Index tn = x.cols();
  Mat gx = v.w * x;  // 3h x T
  gx.colwise() += v.bi;
  Mat hs(h, tn);
  Eigen::VectorXd hp = Eigen::VectorXd::Zero(h), gh(3 * h), z(h), r(h), n(h);
  for (Eigen::Index t = 0; t < tn; ++t) {
    gh.noalias() = v.u * hp;
    gh += v.bh;
    for (Eigen::Index i = 0; i < h; ++i) {
      z[i] = sigmoid(gx(i, t) + gh[i]);
      r[i] = sigmoid(gx(h + i, t) + gh[h + i]);
      n[i] = std::tanh(gx(2 * h + i, t) + r[i] * gh[2 * h + i]);
      hp[i] = (1.0 - z[i]) * n[i] + z[i] * hp[i];
    }
    hs.col(t) = hp;
  }
  Mat y = v.wo * hs;
  y.colwise() += v.bo;
  return y;
}

double GruNetwork::loss(const std::vector<const Eigen::MatrixXd*>& inputs,
                        const std::vector<const Eigen::MatrixXd*>& targets) const {
  MFSS_REQUIRE(inputs.size() == targets.size() && !inputs.empty(), ErrorKind::Dimension, "gru: batch mismatch");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    s += (forward(*inputs[b]) - *targets[b]).squaredNorm();
    count += static_cast<std::size_t>(targets[b]->size());
  }
  return s / static_cast<double>(count);
}

double GruNetwork::loss_and_gradient(const std::vector<const Eigen::MatrixXd*>& inputs,
                                     const std::vector<const Eigen::MatrixXd*>& targets, Eigen::VectorXd& grad,
                                     double dropout, std::uint64_t seed, std::uint64_t stream_index) const {
  const auto bsz = static_cast<Eigen::Index>(inputs.size());
  MFSS_REQUIRE(bsz > 0 && inputs.size() == targets.size(), ErrorKind::Dimension, "gru: batch mismatch");
  const Eigen::Index tn = inputs[0]->cols();
  const auto h = static_cast<Eigen::Index>(hidden_);
  const auto ni = static_cast<Eigen::Index>(n_in_);
  const auto no = static_cast<Eigen::Index>(n_out_);
  for (Eigen::Index b = 0; b < bsz; ++b) {
    MFSS_REQUIRE(inputs[b]->rows() == ni && inputs[b]->cols() == tn && targets[b]->rows() == no &&
                     targets[b]->cols() == tn,
                 ErrorKind::Dimension, "gru: batch sequences must share shape");
  }
  const auto v = views(params_);

  // Time-major batch matrices: column block t holds the batch at step t.
  std::vector<Mat> xs(tn, Mat(ni, bsz)), hs(tn + 1, Mat::Zero(h, bsz)), zs(tn, Mat(h, bsz)), rs(tn, Mat(h, bsz)),
      ns(tn, Mat(h, bsz)), ghn(tn, Mat(h, bsz)), masks;
  for (Eigen::Index t = 0; t < tn; ++t)
    for (Eigen::Index b = 0; b < bsz; ++b) xs[t].col(b) = inputs[b]->col(t);

  const bool drop = dropout > 0.0;
  if (drop) {
    MFSS_REQUIRE(dropout < 1.0, ErrorKind::Config, "gru: dropout must be < 1");
    RandomStream s(seed, substream::kNetInit, stream_index + 1);
    const double keep = 1.0 - dropout;
    masks.assign(tn, Mat(h, bsz));
    for (auto& m : masks)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s.uniform() < keep ? 1.0 / keep : 0.0;
  }

  Mat gx(3 * h, bsz), gh(3 * h, bsz);
  for (Eigen::Index t = 0; t < tn; ++t) {
    gx.noalias() = v.w * xs[t];
    gx.colwise() += v.bi;
    gh.noalias() = v.u * hs[t];
    gh.colwise() += v.bh;
    for (Eigen::Index b = 0; b < bsz; ++b)
      for (Eigen::Index i = 0; i < h; ++i) {
        const double z = sigmoid(gx(i, b) + gh(i, b));
        const double r = sigmoid(gx(h + i, b) + gh(h + i, b));
        const double n = std::tanh(gx(2 * h + i, b) + r * gh(2 * h + i, b));
        zs[t](i, b) = z;
        rs[t](i, b) = r;
        ns[t](i, b) = n;
        ghn[t](i, b) = gh(2 * h + i, b);
        hs[t + 1](i, b) = (1.0 - z) * n + z * hs[t](i, b);
      }
  }

  const auto o = offsets(n_in_, hidden_, n_out_);
  grad.setZero(static_cast<Eigen::Index>(o.total));
  Eigen::Map<Mat> dw(grad.data() + o.w, 3 * h, ni), du(grad.data() + o.u, 3 * h, h), dwo(grad.data() + o.wo, no, h);
  Eigen::Map<Eigen::VectorXd> dbi(grad.data() + o.bi, 3 * h), dbh(grad.data() + o.bh, 3 * h),
      dbo(grad.data() + o.bo, no);

  const double count = static_cast<double>(bsz * tn * no);
  double loss = 0.0;
  Mat dh = Mat::Zero(h, bsz), dy(no, bsz), d(h, bsz), dgx(3 * h, bsz), dgh(3 * h, bsz), y(no, bsz);
  for (Eigen::Index t = tn - 1; t >= 0; --t) {
    d = drop ? Mat(hs[t + 1].cwiseProduct(masks[t])) : hs[t + 1];
    y.noalias() = v.wo * d;
    y.colwise() += v.bo;
    for (Eigen::Index b = 0; b < bsz; ++b) {
      const Eigen::VectorXd e = y.col(b) - targets[b]->col(t);
      loss += e.squaredNorm();
      dy.col(b) = (2.0 / count) * e;
    }
    dwo.noalias() += dy * d.transpose();
    dbo += dy.rowwise().sum();
    Mat dd = v.wo.transpose() * dy;
    if (drop) dd = dd.cwiseProduct(masks[t]);
    dh += dd;

    Mat dprev = Mat::Zero(h, bsz);
    for (Eigen::Index b = 0; b < bsz; ++b)
      for (Eigen::Index i = 0; i < h; ++i) {
        const double z = zs[t](i, b), r = rs[t](i, b), n = ns[t](i, b), hp = hs[t](i, b);
        const double g = dh(i, b);
        const double dn = g * (1.0 - z);
        const double dz = g * (hp - n);
        dprev(i, b) = g * z;
        const double dan = dn * (1.0 - n * n);
        const double dr = dan * ghn[t](i, b);
        const double daz = dz * z * (1.0 - z);
        const double dar = dr * r * (1.0 - r);
        dgx(i, b) = daz;
        dgx(h + i, b) = dar;
        dgx(2 * h + i, b) = dan;
        dgh(i, b) = daz;
        dgh(h + i, b) = dar;
        dgh(2 * h + i, b) = dan * r;
      }
    dw.noalias() += dgx * xs[t].transpose();
    dbi += dgx.rowwise().sum();
    du.noalias() += dgh * hs[t].transpose();
    dbh += dgh.rowwise().sum();
    dprev.noalias() += v.u.transpose() * dgh;
    dh = dprev;
  }
  return loss / count;
}

nlohmann::json GruNetwork::to_json() const {
  nlohmann::json j;
  j["n_in"] = n_in_;
  j["hidden"] = hidden_;
  j["n_out"] = n_out_;
  j["params"] = std::vector<double>(params_.data(), params_.data() + params_.size());
  return j;
}

GruNetwork GruNetwork::from_json(const nlohmann::json& j) {
  GruNetwork g(j.at("n_in").get<std::size_t>(), j.at("hidden").get<std::size_t>(), j.at("n_out").get<std::size_t>());
  auto p = j.at("params").get<std::vector<double>>();
  MFSS_REQUIRE(static_cast<Eigen::Index>(p.size()) == g.params_.size(), ErrorKind::Io, "gru: parameter count mismatch");
  g.params_ = Eigen::Map<Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  return g;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace mfss
