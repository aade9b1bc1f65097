// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include <doctest.h>

#include "e3/errors.hpp"
#include "e3/metrics.hpp"
#include "e3/rng.hpp"

using namespace e3;

namespace {

// O(n^2) pairwise oracle with half credit for ties.
double auc_bruteforce(const std::vector<double>& pos,
                      const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) {
      if (p > n) wins += 1.0;
      else if (p == n) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) *
                 static_cast<double>(neg.size()));
}

}  // namespace

TEST_CASE("roc_auc basic values") {
  CHECK(roc_auc({0.9, 0.8}, {0.1, 0.2}) == doctest::Approx(1.0));
  CHECK(roc_auc({0.5, 0.5}, {0.5, 0.5}) == doctest::Approx(0.5));
  CHECK(roc_auc({0.9, 0.4}, {0.5, 0.1}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(roc_auc({}, {0.5}), DataError);
  CHECK_THROWS_AS(roc_auc({0.5}, {}), DataError);
}

TEST_CASE("roc_auc equals the pairwise oracle on random tie-bearing inputs") {
  RngStream rng(123, "auc");
  for (int trial = 0; trial < 200; ++trial) {
    const int np = 1 + rng.next_int(50);
    const int nn = 1 + rng.next_int(50);
    std::vector<double> pos, neg;
    // Quantized scores force plenty of ties.
    for (int i = 0; i < np; ++i) pos.push_back(rng.next_int(10) / 10.0);
    for (int i = 0; i < nn; ++i) neg.push_back(rng.next_int(10) / 10.0);
    CHECK(roc_auc(pos, neg) ==
          doctest::Approx(auc_bruteforce(pos, neg)).epsilon(1e-12));
  }
}

TEST_CASE("roc_auc complement for tie-free inputs") {
  RngStream rng(321, "auccomp");
  std::vector<double> pos, neg;
  for (int i = 0; i < 17; ++i) pos.push_back(rng.next_float() + i * 2.0);
  for (int i = 0; i < 23; ++i) neg.push_back(rng.next_float() + i * 2.0 + 0.5);
  CHECK(roc_auc(pos, neg) + roc_auc(neg, pos) == doctest::Approx(1.0));
}

TEST_CASE("accuracy") {
  CHECK(accuracy({0.9, 0.8, 0.1}, {1, 1, 0}) == doctest::Approx(1.0));
  // Labels flipped -> complement.
  CHECK(accuracy({0.9, 0.8, 0.1}, {0, 0, 1}) == doctest::Approx(0.0));
  // Uninformative scores on balanced labels.
  CHECK(accuracy({0.7, 0.7, 0.7, 0.7}, {1, 0, 1, 0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(accuracy({0.5}, {1, 0}), ContractError);
}

TEST_CASE("rer formula") {
  CHECK(rer(0.99, 0.97) == doctest::Approx(66.6666667).epsilon(1e-6));
  CHECK(rer(0.970, 0.932) == doctest::Approx(55.8823529).epsilon(1e-6));
  CHECK(rer(0.5, 0.5) == doctest::Approx(0.0));
  CHECK_THROWS_AS(rer(0.99, 1.0), UndefinedError);
}

TEST_CASE("rer is antisymmetric and linear in the auc gap") {
  const double ref = 0.9;
  CHECK(rer(ref + 0.04, ref) == doctest::Approx(-rer(ref - 0.04, ref)));
  CHECK(rer(ref + 0.06, ref) == doctest::Approx(3.0 * rer(ref + 0.02, ref)));
}
