#include <doctest.h>

#include <cmath>

#include "protoda/nn.hpp"

using namespace protoda;
using namespace protoda::nn;

namespace {

// Central finite differences of a scalar function of one parameter array.
template <typename F>
std::vector<double> fd_grad(std::vector<double>& x, F loss, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double hi = loss();
    x[i] = keep - h;
    const double lo = loss();
    x[i] = keep;
    g[i] = (hi - lo) / (2 * h);
  }
  return g;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

Chw random_chw(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  Chw x(c, h, w);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : x.v) v = dist(rng);
  return x;
}

}  // namespace

TEST_SUITE_BEGIN("nn");

TEST_CASE("softmax of logits (2, 0)") {
  // Direct evaluation oracle.
  const double e2 = std::exp(2.0);
  const double q0 = e2 / (e2 + 1.0);
  const auto q = softmax({2.0, 0.0});
  CHECK(q[0] == doctest::Approx(q0).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(1.0 - q0).epsilon(1e-12));
  CHECK(q[0] == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(q[1] == doctest::Approx(0.1192).epsilon(1e-4));
  CHECK(argmax_tie_smallest(q) == 0);
}

TEST_CASE("uniform logits give a uniform softmax and tie-break to index 0") {
  const auto q = softmax({1.5, 1.5, 1.5, 1.5});
  for (double v : q) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(argmax_tie_smallest(q) == 0);
}

TEST_CASE("softmax always sums to one") {
  Rng rng(9);
  std::normal_distribution<double> dist(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(1 + trial % 7);
    for (auto& v : logits) v = dist(rng);
    const auto q = softmax(logits);
    double sum = 0;
    for (double v : q) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("cross entropy matches independent recomputation and grad") {
  std::vector<double> logits{0.3, -1.2, 2.0};
  std::vector<double> dlogits;
  const double loss = cross_entropy(logits, 1, &dlogits);
  // Oracle: direct formula.
  double denom = 0;
  for (double z : logits) denom += std::exp(z);
  CHECK(loss == doctest::Approx(-std::log(std::exp(logits[1]) / denom))
                    .epsilon(1e-12));

  const auto fd = fd_grad(logits, [&] { return cross_entropy(logits, 1, nullptr); });
  CHECK(rel_err(dlogits, fd) < 1e-7);
}

TEST_CASE("gradient reversal: upstream grad equals -lambda times downstream") {
  // Probe: smooth scalar function phi(v); the layer forwards identity, so
  // the analytic upstream gradient must equal -lambda * dphi/dv, checked
  // against finite differences of phi at 3 random points.
  Rng rng(1234);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int point = 0; point < 3; ++point) {
    std::vector<double> v(6);
    std::vector<double> a(6);
    for (auto& x : v) x = dist(rng);
    for (auto& x : a) x = dist(rng);
    const double lambda = 0.25 + 0.5 * point;
    GradientReversal grl{lambda};

    auto phi = [&] {
      double acc = 0;
      for (std::size_t i = 0; i < v.size(); ++i)
        acc += a[i] * std::sin(v[i]) + 0.5 * v[i] * v[i];
      return acc;
    };
    std::vector<double> dphi(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      dphi[i] = a[i] * std::cos(v[i]) + v[i];

    const auto upstream = grl.backward(dphi);
    auto fd = fd_grad(v, phi);
    for (auto& g : fd) g *= -lambda;
    CHECK(rel_err(upstream, fd) < 1e-4);
  }
}

TEST_CASE("conv2d forward/backward against finite differences") {
  Rng rng(55);
  Conv2d conv(2, 3, 3, 1, 1);
  conv.init_params(rng);
  const Chw x0 = random_chw(2, 5, 5, rng);
  Chw g_out;

  auto loss_from = [&](const Chw& x) {
    const Chw y = conv.forward(x, nullptr);
    double acc = 0;
    for (std::size_t i = 0; i < y.v.size(); ++i)
      acc += 0.5 * y.v[i] * y.v[i] + 0.1 * y.v[i];
    return acc;
  };

  Conv2d::Ctx ctx;
  const Chw y = conv.forward(x0, &ctx);
  g_out = Chw(y.c, y.h, y.w);
  for (std::size_t i = 0; i < y.v.size(); ++i) g_out.v[i] = y.v[i] + 0.1;
  conv.zero_grad();
  Chw x_mut = x0;
  const Chw g_in = conv.backward(g_out, ctx);

  {
    const auto fd = fd_grad(x_mut.v, [&] { return loss_from(x_mut); });
    CHECK(rel_err(g_in.v, fd) < 1e-6);
  }
  {
    const auto fd = fd_grad(conv.w, [&] { return loss_from(x0); });
    CHECK(rel_err(conv.gw, fd) < 1e-6);
  }
  {
    const auto fd = fd_grad(conv.b, [&] { return loss_from(x0); });
    CHECK(rel_err(conv.gb, fd) < 1e-6);
  }
}

TEST_CASE("strided conv output geometry") {
  Rng rng(3);
  Conv2d conv(3, 8, 7, 2, 3);
  conv.init_params(rng);
  const Chw x = random_chw(3, 224, 224, rng);
  const Chw y = conv.forward(x, nullptr);
  CHECK(y.c == 8);
  CHECK(y.h == 112);
  CHECK(y.w == 112);
}

TEST_CASE("maxpool routes gradient to the first maximum") {
  Chw x(1, 2, 2);
  x.v = {3.0, 3.0, 1.0, 2.0};  // tie between the two top cells
  MaxPool2::Ctx ctx;
  const Chw y = MaxPool2::forward(x, &ctx);
  CHECK(y.v[0] == 3.0);
  Chw g(1, 1, 1);
  g.v = {5.0};
  const Chw gi = MaxPool2::backward(g, ctx);
  CHECK(gi.v[0] == 5.0);  // first max in scan order wins
  CHECK(gi.v[1] == 0.0);
}

TEST_CASE("linear and patch-linear against finite differences") {
  Rng rng(77);
  Linear lin(4, 3);
  lin.init_params(rng);
  std::vector<double> x{0.5, -1.0, 2.0, 0.25};

  auto loss = [&] {
    const auto y = lin.forward(x, nullptr);
    double acc = 0;
    for (double v : y) acc += v * v;
    return acc;
  };
  Linear::Ctx ctx;
  const auto y = lin.forward(x, &ctx);
  std::vector<double> gy(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) gy[i] = 2 * y[i];
  lin.zero_grad();
  const auto gx = lin.backward(gy, ctx);
  CHECK(rel_err(gx, fd_grad(x, loss)) < 1e-6);
  CHECK(rel_err(lin.gw, fd_grad(lin.w, loss)) < 1e-6);

  PatchLinear pl(3, 2);
  pl.init_params(rng);
  Hwc vol(2, 2, 3);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : vol.v) v = dist(rng);
  auto ploss = [&] {
    const Hwc out = pl.forward(vol, nullptr);
    double acc = 0;
    for (double v : out.v) acc += v * v;
    return acc;
  };
  PatchLinear::Ctx pctx;
  const Hwc out = pl.forward(vol, &pctx);
  Hwc gout(out.h, out.w, out.d);
  for (std::size_t i = 0; i < out.v.size(); ++i) gout.v[i] = 2 * out.v[i];
  pl.zero_grad();
  const Hwc gvol = pl.backward(gout, pctx);
  CHECK(rel_err(gvol.v, fd_grad(vol.v, ploss)) < 1e-6);
  CHECK(rel_err(pl.gw, fd_grad(pl.w, ploss)) < 1e-6);
}

TEST_CASE("adam drives a quadratic to its minimum") {
  std::vector<double> x{5.0, -3.0};
  std::vector<double> g(2, 0.0);
  Adam opt(0.1);
  opt.attach({"x", &x, &g});
  for (int i = 0; i < 400; ++i) {
    g[0] = 2 * (x[0] - 1.0);
    g[1] = 2 * (x[1] + 2.0);
    opt.step();
  }
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(x[1] == doctest::Approx(-2.0).epsilon(1e-3));
}

TEST_CASE("bce with logit is stable and differentiable") {
  double dz = 0;
  const double l0 = bce_with_logit(0.0, 1.0, &dz);
  CHECK(l0 == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(dz == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(std::isfinite(bce_with_logit(500.0, 0.0, nullptr)));
  CHECK(std::isfinite(bce_with_logit(-500.0, 1.0, nullptr)));
}

TEST_SUITE_END();
