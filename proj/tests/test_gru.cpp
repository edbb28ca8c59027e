// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "mfss/gru.hpp"
#include "mfss/rng.hpp"

using namespace mfss;

namespace {

Eigen::MatrixXd noise(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  RandomStream s(seed, 0, 0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * s.uniform() - 1.0;
  return m;
}

}  // namespace

TEST_CASE("analytic gradient matches central differences") {
  GruNetwork net(3, 5, 2);
  net.initialize(4);
  std::vector<Eigen::MatrixXd> xs{noise(3, 7, 1), noise(3, 7, 2)}, ys{noise(2, 7, 3), noise(2, 7, 4)};
  std::vector<const Eigen::MatrixXd*> xp{&xs[0], &xs[1]}, yp{&ys[0], &ys[1]};
  for (double dropout : {0.0, 0.3}) {
    Eigen::VectorXd g;
    const double l0 = net.loss_and_gradient(xp, yp, g, dropout, 9, 1);
    if (dropout == 0.0) CHECK(l0 == doctest::Approx(net.loss(xp, yp)).epsilon(1e-12));
    GruNetwork probe = net;
    Eigen::VectorXd scratch;
    double max_rel = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double h = 1e-6;
      probe.params()[i] = net.params()[i] + h;
      const double lp = probe.loss_and_gradient(xp, yp, scratch, dropout, 9, 1);
      probe.params()[i] = net.params()[i] - h;
      const double lm = probe.loss_and_gradient(xp, yp, scratch, dropout, 9, 1);
      probe.params()[i] = net.params()[i];
      const double fd = (lp - lm) / (2 * h);
      max_rel = std::max(max_rel, std::abs(fd - g[i]) / std::max(1e-6, std::abs(fd) + std::abs(g[i])));
    }
    CHECK(max_rel < 1e-5);
  }
}

TEST_CASE("initialization and serialization are deterministic") {
  GruNetwork a(2, 4, 2), b(2, 4, 2);
  a.initialize(11);
  b.initialize(11);
  CHECK(a.params() == b.params());
  b.initialize(12);
  CHECK(a.params() != b.params());
  auto c = GruNetwork::from_json(a.to_json());
  auto x = noise(2, 10, 5);
  CHECK(c.forward(x) == a.forward(x));
}

TEST_CASE("Adam fits a first-order linear recursion") {
  // y_t = 0.6 y_{t-1} + 0.4 x_t
  std::vector<Eigen::MatrixXd> xs, ys;
  for (int s = 0; s < 16; ++s) {
    Eigen::MatrixXd x = 0.5 * noise(1, 30, 100 + s), y(1, 30);
    double prev = 0.0;
    for (int t = 0; t < 30; ++t) y(0, t) = prev = 0.6 * prev + 0.4 * x(0, t);
    xs.push_back(x);
    ys.push_back(y);
  }
  std::vector<const Eigen::MatrixXd*> xp, yp;
  for (int s = 0; s < 16; ++s) {
    xp.push_back(&xs[s]);
    yp.push_back(&ys[s]);
  }
  GruNetwork net(1, 6, 1);
  net.initialize(1);
  Adam opt(net.n_params(), 0.01);
  Eigen::VectorXd g;
  const double first = net.loss(xp, yp);
  for (int it = 0; it < 1500; ++it) {
    net.loss_and_gradient(xp, yp, g);
    opt.step(net.params(), g);
  }
  const double last = net.loss(xp, yp);
  double var = 0.0;
  for (auto& y : ys) var += y.squaredNorm();
  var /= 16 * 30;
  CHECK(last < 0.01 * var);
  CHECK(last < first);
}
