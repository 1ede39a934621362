#include <doctest.h>

#include <cmath>

#include "protoda/calibration.hpp"

using namespace protoda;

namespace {

PseudoLabels make_pseudo(const std::vector<std::pair<std::string, PseudoEntry>>& entries) {
  PseudoLabels out;
  for (const auto& [id, e] : entries) out.by_id.emplace(id, e);
  return out;
}

PseudoEntry entry(int yhat, std::vector<double> q, Domain d) {
  PseudoEntry e;
  e.yhat = yhat;
  e.q = std::move(q);
  e.domain = d;
  return e;
}

}  // namespace

TEST_SUITE_BEGIN("calibration");

TEST_CASE("init_head: c=2, K=1 gives [[1, -0.5], [-0.5, 1]]") {
  PrototypeBank bank(2, 1, 3);
  const PrototypicalHead head = init_head(bank);
  CHECK(head.weight(0, 0) == 1.0);
  CHECK(head.weight(0, 1) == -0.5);
  CHECK(head.weight(1, 0) == -0.5);
  CHECK(head.weight(1, 1) == 1.0);
}

TEST_CASE("init_head: each column owns exactly K ones") {
  PrototypeBank bank(3, 2, 4);
  const PrototypicalHead head = init_head(bank);
  for (int k = 0; k < 3; ++k) {
    int ones = 0;
    for (int j = 0; j < head.n_protos(); ++j) {
      if (head.weight(j, k) == 1.0)
        ++ones;
      else
        CHECK(head.weight(j, k) == -0.5);
    }
    CHECK(ones == 2);
  }
}

TEST_CASE("init_head: row sums equal 1 + (c-1) * (-0.5) for arbitrary (c, K)") {
  for (const auto& [c, k] : std::vector<std::pair<int, int>>{
           {2, 1}, {3, 2}, {5, 10}, {7, 3}, {65, 10}}) {
    PrototypeBank bank(c, k, 2);
    const PrototypicalHead head = init_head(bank);
    const double expected = 1.0 + (c - 1) * (-0.5);
    for (int j = 0; j < head.n_protos(); ++j) {
      double sum = 0;
      for (int kk = 0; kk < c; ++kk) sum += head.weight(j, kk);
      CHECK(sum == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("calibration loss: one-hot head softmax gives (near-)zero CE") {
  PrototypicalHead head(2, 2);
  head.weight(0, 0) = 1.0;
  head.weight(1, 1) = 1.0;
  // Scores with a huge margin: softmax is one-hot to double precision.
  ScoreBatch src{{{120.0, 0.0}}, {"s0"}};
  ScoreBatch tgt{{{0.0, 120.0}}, {"t0"}};
  const auto pseudo =
      make_pseudo({{"s0", entry(0, {1, 0}, Domain::source)},
                   {"t0", entry(1, {0, 1}, Domain::target)}});
  CHECK(calibration_loss(src, tgt, head, pseudo) < 1e-12);
}

TEST_CASE("calibration loss: uniform softmax with c=4 gives ln 4 per term") {
  PrototypicalHead head(4, 4);  // zero weights -> zero logits -> uniform
  ScoreBatch src{{{1.0, 2.0, 3.0, 4.0}}, {"s0"}};
  ScoreBatch tgt{{{4.0, 3.0, 2.0, 1.0}}, {"t0"}};
  const auto pseudo =
      make_pseudo({{"s0", entry(2, {0.25, 0.25, 0.25, 0.25}, Domain::source)},
                   {"t0", entry(1, {0.25, 0.25, 0.25, 0.25}, Domain::target)}});
  const double ln4 = std::log(4.0);
  CHECK(calibration_loss(src, tgt, head, pseudo, 0.0) ==
        doctest::Approx(ln4).epsilon(1e-12));
  CHECK(calibration_loss(src, tgt, head, pseudo, 1.0) ==
        doctest::Approx(2 * ln4).epsilon(1e-12));
}

TEST_CASE("calibration loss matches an independent CE recomputation") {
  Rng rng(23);
  std::normal_distribution<double> dist(0.0, 1.0);
  const int protos = 6, c = 3;
  PrototypicalHead head(protos, c);
  for (auto& w : head.raw()) w = dist(rng);

  ScoreBatch src, tgt;
  PseudoLabels pseudo;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> s(protos);
    for (auto& v : s) v = std::fabs(dist(rng));
    src.scores.push_back(s);
    src.ids.push_back("s" + std::to_string(i));
    pseudo.by_id.emplace("s" + std::to_string(i),
                         entry(i % c, {}, Domain::source));
    for (auto& v : s) v = std::fabs(dist(rng));
    tgt.scores.push_back(s);
    tgt.ids.push_back("t" + std::to_string(i));
    pseudo.by_id.emplace("t" + std::to_string(i),
                         entry((i + 1) % c, {}, Domain::target));
  }

  // Oracle: recompute CE from scratch.
  auto ce_of = [&](const ScoreBatch& batch) {
    double total = 0;
    for (std::size_t i = 0; i < batch.scores.size(); ++i) {
      std::vector<double> logits(c, 0.0);
      for (int j = 0; j < protos; ++j)
        for (int k = 0; k < c; ++k)
          logits[k] += head.weight(j, k) * batch.scores[i][j];
      double denom = 0;
      for (double z : logits) denom += std::exp(z);
      total += -std::log(std::exp(logits[pseudo.at(batch.ids[i]).yhat]) / denom);
    }
    return total / batch.scores.size();
  };
  CHECK(calibration_loss(src, tgt, head, pseudo) ==
        doctest::Approx(ce_of(src) + ce_of(tgt)).epsilon(1e-6));
}

TEST_CASE("calibration loss misses unseen ids with CacheMiss") {
  PrototypicalHead head(2, 2);
  ScoreBatch src{{{1.0, 2.0}}, {"unknown"}};
  ScoreBatch tgt;
  CHECK_THROWS_AS(calibration_loss(src, tgt, head, make_pseudo({})), CacheMiss);
}

TEST_CASE("fidelity loss: identical distributions give zero") {
  PrototypicalHead head(2, 2);
  head.weight(0, 0) = 1.0;
  head.weight(1, 1) = 1.0;
  ScoreBatch tgt{{{0.4, 0.4}}, {"t0"}};  // equal logits -> uniform
  const auto pseudo = make_pseudo({{"t0", entry(0, {0.5, 0.5}, Domain::target)}});
  CHECK(fidelity_loss(tgt, head, pseudo) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fidelity loss: (0.7, 0.3) vs (0.5, 0.5) gives 0.4") {
  PrototypicalHead head(2, 2);
  head.weight(0, 0) = 1.0;
  head.weight(1, 1) = 1.0;
  ScoreBatch tgt{{{std::log(0.7), std::log(0.3)}}, {"t0"}};
  const auto pseudo = make_pseudo({{"t0", entry(0, {0.5, 0.5}, Domain::target)}});
  // Direct L1 evaluation oracle: |0.7-0.5| + |0.3-0.5| = 0.4.
  CHECK(fidelity_loss(tgt, head, pseudo) == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("fidelity loss: disjoint one-hots reach the maximum of 2") {
  PrototypicalHead head(2, 2);
  head.weight(0, 0) = 1.0;
  head.weight(1, 1) = 1.0;
  ScoreBatch tgt{{{120.0, 0.0}}, {"t0"}};  // softmax ~ (1, 0)
  const auto pseudo = make_pseudo({{"t0", entry(1, {0.0, 1.0}, Domain::target)}});
  CHECK(fidelity_loss(tgt, head, pseudo) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("fidelity loss range property: always within [0, 2]") {
  Rng rng(29);
  std::normal_distribution<double> dist(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int protos = 2 + trial % 5, c = 2 + trial % 4;
    PrototypicalHead head(protos, c);
    for (auto& w : head.raw()) w = dist(rng);
    std::vector<double> scores(protos);
    for (auto& s : scores) s = std::fabs(dist(rng));
    std::vector<double> q(c);
    double norm = 0;
    for (auto& v : q) {
      v = u(rng) + 1e-9;
      norm += v;
    }
    for (auto& v : q) v /= norm;
    ScoreBatch tgt{{scores}, {"t"}};
    const auto pseudo = make_pseudo({{"t", entry(0, q, Domain::target)}});
    const double l = fidelity_loss(tgt, head, pseudo);
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
  }
}

TEST_CASE("fidelity loss rejects source samples with DomainError") {
  PrototypicalHead head(2, 2);
  ScoreBatch tgt{{{1.0, 1.0}}, {"s0"}};
  const auto pseudo = make_pseudo({{"s0", entry(0, {0.5, 0.5}, Domain::source)}});
  CHECK_THROWS_AS(fidelity_loss(tgt, head, pseudo), DomainError);
}

TEST_CASE("loss gradients w.r.t. head weights match finite differences") {
  Rng rng(41);
  std::normal_distribution<double> dist(0.0, 1.0);
  const int protos = 4, c = 3;
  const double h = 1e-5;

  for (int trial = 0; trial < 5; ++trial) {
    PrototypicalHead head(protos, c);
    for (auto& w : head.raw()) w = dist(rng);
    ScoreBatch src, tgt;
    PseudoLabels pseudo;
    for (int i = 0; i < 3; ++i) {
      std::vector<double> s(protos);
      for (auto& v : s) v = std::fabs(dist(rng)) + 0.05;
      src.scores.push_back(s);
      src.ids.push_back("s" + std::to_string(i));
      pseudo.by_id.emplace("s" + std::to_string(i),
                           entry(i % c, {}, Domain::source));
      for (auto& v : s) v = std::fabs(dist(rng)) + 0.05;
      tgt.scores.push_back(s);
      tgt.ids.push_back("t" + std::to_string(i));
      std::vector<double> q(c);
      double norm = 0;
      for (auto& v : q) {
        v = std::fabs(dist(rng)) + 0.05;
        norm += v;
      }
      for (auto& v : q) v /= norm;
      pseudo.by_id.emplace("t" + std::to_string(i), entry(i % c, q, Domain::target));
    }

    std::vector<double> gw;
    calibration_loss_grad(src, tgt, head, pseudo, 1.0, nullptr, nullptr, &gw);
    for (std::size_t t = 0; t < head.raw().size(); ++t) {
      const double keep = head.raw()[t];
      head.raw()[t] = keep + h;
      const double hi = calibration_loss(src, tgt, head, pseudo);
      head.raw()[t] = keep - h;
      const double lo = calibration_loss(src, tgt, head, pseudo);
      head.raw()[t] = keep;
      const double fd = (hi - lo) / (2 * h);
      const double scale = std::max({1.0, std::fabs(fd), std::fabs(gw[t])});
      CHECK(std::fabs(gw[t] - fd) / scale < 1e-3);
    }

    std::vector<double> gwf;
    fidelity_loss_grad(tgt, head, pseudo, nullptr, &gwf);
    for (std::size_t t = 0; t < head.raw().size(); ++t) {
      const double keep = head.raw()[t];
      head.raw()[t] = keep + h;
      const double hi = fidelity_loss(tgt, head, pseudo);
      head.raw()[t] = keep - h;
      const double lo = fidelity_loss(tgt, head, pseudo);
      head.raw()[t] = keep;
      const double fd = (hi - lo) / (2 * h);
      const double scale = std::max({1.0, std::fabs(fd), std::fabs(gwf[t])});
      CHECK(std::fabs(gwf[t] - fd) / scale < 1e-3);
    }
  }
}

TEST_CASE("masked logits decompose exactly") {
  Rng rng(47);
  std::normal_distribution<double> dist(0.0, 1.0);
  PrototypicalHead head(6, 3);
  for (auto& w : head.raw()) w = dist(rng);
  std::vector<double> scores(6);
  for (auto& s : scores) s = std::fabs(dist(rng));

  const auto full = head.logits(scores);
  const std::set<int> masked{1, 4};
  const auto got = head.logits_masked(scores, masked);
  for (int k = 0; k < 3; ++k) {
    double removed = 0;
    for (int j : masked) removed += head.weight(j, k) * scores[j];
    CHECK(got[k] == full[k] - removed);  // bit-exact decomposition
  }

  // Degenerate limit: masking everything cancels to exactly zero.
  std::set<int> all;
  for (int j = 0; j < head.n_protos(); ++j) all.insert(j);
  for (double z : head.logits_masked(scores, all)) CHECK(z == 0.0);
}

TEST_SUITE_END();
