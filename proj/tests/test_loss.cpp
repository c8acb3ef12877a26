#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fer/loss.hpp"
#include "fer/random.hpp"
#include "support/oracles.hpp"

#include <cmath>

using namespace fer;

namespace {

Eigen::VectorXd random_logits(KeyedRng& rng, int k, double scale = 3.0) {
  Eigen::VectorXd z(k);
  for (int i = 0; i < k; ++i) z(i) = rng.uniform(-scale, scale);
  return z;
}

Eigen::VectorXd random_probs(KeyedRng& rng, int k) {
  Eigen::VectorXd p(k);
  for (int i = 0; i < k; ++i) p(i) = 0.05 + rng.uniform01();
  return p / p.sum();
}

} // namespace

TEST_CASE("smooth_labels") {
  const Eigen::VectorXd y = one_hot<double>(2, 7);
  CHECK(smooth_labels(y, 0.0) == y);

  // (1 - 0.06) + 0.06 / 7 = 0.948571428..., 0.06 / 7 = 0.008571428...
  const auto s = smooth_labels(y, 0.06);
  CHECK(std::abs(s(2) - 0.9485714285714286) < 1e-12);
  for (int k = 0; k < 7; ++k)
    if (k != 2) CHECK(std::abs(s(k) - 0.008571428571428572) < 1e-12);
  CHECK(std::abs(s.sum() - 1.0) < 1e-12);

  Eigen::VectorXd bad = Eigen::VectorXd::Constant(7, 1.0 / 7);
  CHECK_THROWS_AS(smooth_labels(bad, 0.06), InvalidTargetError);
  Eigen::VectorXd two = Eigen::VectorXd::Zero(7);
  two(0) = two(1) = 1.0;
  CHECK_THROWS_AS(smooth_labels(two, 0.06), InvalidTargetError);
  CHECK_THROWS_AS(one_hot<double>(7, 7), InvalidTargetError);
}

TEST_CASE("smooth_labels works with float") {
  const Eigen::VectorXf s = smooth_labels(one_hot<float>(0, 7), 0.06);
  CHECK(std::abs(s.sum() - 1.0f) < 1e-6f);
}

TEST_CASE("weighted_ce") {
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(7, 1.0 / 7);
  const auto target = smooth_labels(one_hot<double>(4, 7), 0.06);
  CHECK(std::abs(weighted_ce(uniform, target, 1.0) - std::log(7.0)) < 1e-12);

  const Eigen::VectorXd perfect = one_hot<double>(4, 7);
  CHECK(weighted_ce(perfect, smooth_labels(perfect, 0.0), 1.0) == 0.0);
  // a smoothed target puts mass on every class, so a zero probability is out of domain
  CHECK_THROWS_AS(weighted_ce(perfect, target, 1.0), DomainError);
  Eigen::VectorXd negative = uniform;
  negative(0) = -1e-3;
  CHECK_THROWS_AS(weighted_ce(negative, perfect, 1.0), DomainError);

  const Eigen::VectorXd logits = 1e3 * perfect;
  CHECK(weighted_ce_logits(logits, perfect, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

  KeyedRng rng{5};
  const auto p = random_probs(rng, 7);
  CHECK(weighted_ce(p, target, 2.0) == 2.0 * weighted_ce(p, target, 1.0));
}

TEST_CASE("weighted_ce is at least the weighted target entropy (Gibbs)") {
  KeyedRng rng{11};
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 7;
    const auto y = smooth_labels(one_hot<double>(static_cast<int>(rng.below(k)), k), 0.06);
    const double w = 0.1 + 3.0 * rng.uniform01();
    const auto p = random_probs(rng, k);
    const double entropy = -(y.array() * y.array().log()).sum();
    CHECK(weighted_ce(p, y, w) >= w * entropy - 1e-12);
    CHECK(std::abs(weighted_ce(y, y, w) - w * entropy) < 1e-12);
  }
}

TEST_CASE("weighted_ce_logits agrees with weighted_ce of softmax") {
  KeyedRng rng{3};
  for (int trial = 0; trial < 50; ++trial) {
    const auto z = random_logits(rng, 7);
    const auto y = smooth_labels(one_hot<double>(trial % 7, 7), 0.06);
    CHECK(weighted_ce_logits(z, y, 1.5) == doctest::Approx(weighted_ce(softmax(z), y, 1.5)).epsilon(1e-12));
    CHECK(weighted_ce_logits(z, y, 1.5) == doctest::Approx(testing::naive_ce(z, y, 1.5)).epsilon(1e-12));
  }
}

TEST_CASE("softmax is shift invariant and stable") {
  Eigen::VectorXd z(3);
  z << 1001, 1002, 1003;
  const auto p = softmax(z);
  CHECK(p.allFinite());
  CHECK(p(2) == doctest::Approx(0.6652409557748219));
}

TEST_CASE("ce_grad_logits") {
  const Eigen::VectorXd equal = Eigen::VectorXd::Constant(7, 0.3);
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(7, 1.0 / 7);
  CHECK(ce_grad_logits(equal, uniform, 1.0).cwiseAbs().maxCoeff() < 1e-15);

  KeyedRng rng{99};
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = random_logits(rng, 7);
    const auto y = smooth_labels(one_hot<double>(static_cast<int>(rng.below(7)), 7), 0.06);
    const double w = 0.25 + 3.75 * rng.uniform01();
    const auto g = ce_grad_logits(z, y, w);
    CHECK(std::abs(g.sum()) < 1e-12);
    const auto numeric = testing::central_difference(
        [&](const Eigen::VectorXd& v) { return testing::naive_ce(v, y, w); }, z, 1e-4);
    CHECK(testing::max_relative_error(g, numeric) < 1e-5);
  }
}

TEST_CASE("compute_class_weights") {
  const std::vector<std::int64_t> equal{10, 10, 10, 10};
  for (double w : compute_class_weights(equal, 4.0).weights) CHECK(w == 1.0);

  const std::vector<std::int64_t> a{70, 10, 20};
  const auto wa = compute_class_weights(a, 4.0);
  CHECK(wa.weights[0] == doctest::Approx(100.0 / 210.0).epsilon(1e-12));
  CHECK(wa.weights[1] == doctest::Approx(100.0 / 30.0).epsilon(1e-12));
  CHECK(wa.weights[2] == doctest::Approx(100.0 / 60.0).epsilon(1e-12));
  CHECK(std::abs(wa.weights[0] - 0.47619) < 1e-5);
  CHECK(std::abs(wa.weights[1] - 3.33333) < 1e-5);
  CHECK(std::abs(wa.weights[2] - 1.66667) < 1e-5);

  const std::vector<std::int64_t> b{96, 4};
  const auto wb = compute_class_weights(b, 4.0);
  CHECK(std::abs(wb.weights[0] - 100.0 / 192.0) < 1e-12);
  CHECK(wb.weights[1] == 4.0);
  CHECK(wb.unclipped[1] == 12.5);

  const std::vector<std::int64_t> empty{5, 0, 3};
  CHECK_THROWS_AS(compute_class_weights(empty, 4.0), EmptyClassError);
  CHECK_THROWS_AS(compute_class_weights(b, 0.0), ConfigError);
}

TEST_CASE("class weights are monotone in frequency and capped") {
  KeyedRng rng{17};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::int64_t> counts(7);
    for (auto& c : counts) c = 1 + static_cast<std::int64_t>(rng.below(5000));
    const auto w = compute_class_weights(counts, 4.0);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(w.weights[i] > 0.0);
      CHECK(w.weights[i] <= 4.0);
      for (std::size_t j = 0; j < 7; ++j)
        if (counts[i] < counts[j]) CHECK(w.unclipped[i] >= w.unclipped[j]);
    }
  }
}
