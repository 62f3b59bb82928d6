#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mphil/metrics.hpp"
#include "test_util.hpp"

using namespace mphil;
using mphil::test::random_unit_rows;

namespace {

/// Exhaustive pair-counting AUC oracle: P(score_pos > score_neg) + 0.5 ties.
double auc_pair_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

/// Quantile-matching oracle for equal-count W1.
double w1_quantile_oracle(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("accuracy: trivial fractions") {
  CHECK(accuracy({1, 0, 1}, {1, 0, 1}) == 1.0);
  CHECK(accuracy({1, 0, 1}, {0, 1, 0}) == 0.0);
  CHECK(accuracy({1, 0, 1, 1}, {1, 0, 0, 1}) == 0.75);
  CHECK_THROWS_AS(accuracy({}, {}), std::invalid_argument);
}

TEST_CASE("roc_auc: fixed cases") {
  CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK(roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
}

TEST_CASE("roc_auc equals exhaustive pair counting") {
  RngStream rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 + rng.uniform_index(199);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      // quantized scores so ties actually happen
      scores[i] = std::floor(rng.uniform() * 8.0) / 8.0;
      labels[i] = static_cast<int>(rng.uniform_index(2));
      has0 |= labels[i] == 0;
      has1 |= labels[i] == 1;
    }
    if (!has0 || !has1) continue;
    CHECK(roc_auc(scores, labels) ==
          doctest::Approx(auc_pair_oracle(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("wasserstein1: fixed values and quantile oracle") {
  CHECK(wasserstein1({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
  CHECK(wasserstein1({0.0, 0.0}, {1.0, 1.0}) == 1.0);
  CHECK_THROWS_AS(wasserstein1({}, {1.0}), std::invalid_argument);

  RngStream rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 1 + rng.uniform_index(40);
    std::vector<double> a(n), b(n);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal() + 0.5;
    CHECK(std::abs(wasserstein1(a, b) - w1_quantile_oracle(a, b)) <= 1e-12);
  }

  // unequal counts: seeded resampling keeps the call deterministic
  std::vector<double> small{0.0, 1.0};
  std::vector<double> big{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  CHECK(wasserstein1(small, big, 5) == wasserstein1(small, big, 5));
}

TEST_CASE("separability_report: orthogonal one-point classes") {
  Tensor e{{1.0, 0.0}, {0.0, 1.0}};
  SeparabilityStats s = separability_report(e, {0, 1});
  CHECK(s.intra_mean == 0.0);  // no intra pairs: undefined-as-0
  CHECK(s.inter_mean == doctest::Approx(1.0));
  CHECK(s.per_class_counts == std::vector<std::size_t>{1, 1});
}

TEST_CASE("separability_report: determinism and full-pair oracle") {
  RngStream rng(11);
  Tensor e = random_unit_rows(40, 6, rng);
  std::vector<int> labels(40);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_index(2));

  SeparabilityStats a = separability_report(e, labels, 3);
  SeparabilityStats b = separability_report(e, labels, 3);
  CHECK(a.intra_mean == b.intra_mean);
  CHECK(a.inter_mean == b.inter_mean);
  CHECK(a.distribution_w1 == b.distribution_w1);

  // oracle over all pairs (n <= 50 keeps this exact, no subsampling)
  double intra = 0.0, inter = 0.0;
  std::size_t ni = 0, nx = 0;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = i + 1; j < 40; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 6; ++k) dot += e.at(i, k) * e.at(j, k);
      if (labels[i] == labels[j]) {
        intra += 1.0 - dot;
        ++ni;
      } else {
        inter += 1.0 - dot;
        ++nx;
      }
    }
  CHECK(a.intra_mean == doctest::Approx(intra / ni).epsilon(1e-12));
  CHECK(a.inter_mean == doctest::Approx(inter / nx).epsilon(1e-12));
}

TEST_CASE("separability_report is rotation invariant") {
  RngStream rng(13);
  Tensor e = random_unit_rows(20, 4, rng);
  std::vector<int> labels(20);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_index(2));
  SeparabilityStats base = separability_report(e, labels, 1);

  Tensor v = random_unit_rows(1, 4, rng);  // Householder reflection
  Tensor rotated = e;
  for (std::size_t i = 0; i < e.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t k = 0; k < 4; ++k) dot += e.at(i, k) * v.at(0, k);
    for (std::size_t k = 0; k < 4; ++k)
      rotated.at(i, k) = e.at(i, k) - 2.0 * dot * v.at(0, k);
  }
  SeparabilityStats turned = separability_report(rotated, labels, 1);
  CHECK(std::abs(base.intra_mean - turned.intra_mean) <= 1e-12);
  CHECK(std::abs(base.inter_mean - turned.inter_mean) <= 1e-12);
  CHECK(std::abs(base.distribution_w1 - turned.distribution_w1) <= 1e-12);
}
