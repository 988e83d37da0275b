// Copyright 2026 The LECO Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "leco/error.hpp"
#include "leco/ontology.hpp"

using namespace leco;

namespace {

Taxonomy FourFine() { return Taxonomy::FromParentMaps(2, {{0, 0, 1, 1}}); }

std::vector<double> RandomSimplex(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> q(n);
  double s = 0.0;
  for (auto& v : q) s += (v = e(rng));
  for (auto& v : q) v /= s;
  return q;
}

}  // namespace

TEST_CASE("edge matrix transcribes a parent map") {
  const auto e = FourFine().BuildEdgeMatrix(1, 0);
  Eigen::MatrixXd expected(4, 2);
  expected << 1, 0, 1, 0, 0, 1, 0, 1;
  CHECK(e.ToDense() == expected);
  CHECK(e.rows() == 4);
  CHECK(e.cols() == 2);
  CHECK(e(2, 1) == 1);
  CHECK(e(2, 0) == 0);
  CHECK(e.Descendants(1) == std::vector<LabelId>{2, 3});
}

TEST_CASE("edge matrix levels are validated") {
  const auto tax = FourFine();
  CHECK_THROWS_AS(tax.BuildEdgeMatrix(0, 0), Error);
  CHECK_THROWS_AS(tax.BuildEdgeMatrix(0, 1), Error);
  CHECK_THROWS_AS(tax.BuildEdgeMatrix(2, 0), Error);
}

TEST_CASE("FromDense rejects non-indicator rows") {
  Eigen::MatrixXd ok(2, 2);
  ok << 0, 1, 1, 0;
  CHECK(EdgeMatrix::FromDense(ok).ancestor(0) == 1);
  Eigen::MatrixXd two(2, 2);
  two << 1, 1, 1, 0;
  CHECK_THROWS_AS(EdgeMatrix::FromDense(two), Error);
  Eigen::MatrixXd half(2, 2);
  half << 0.5, 0.5, 1, 0;
  CHECK_THROWS_AS(EdgeMatrix::FromDense(half), Error);
}

TEST_CASE("three-level composition equals the matrix product") {
  const auto tax = Taxonomy::FromParentMaps(2, {{0, 1, 1}, {0, 0, 1, 2, 2, 1}});
  const auto e20 = tax.BuildEdgeMatrix(2, 0);
  const Eigen::MatrixXd product =
      tax.BuildEdgeMatrix(2, 1).ToDense() * tax.BuildEdgeMatrix(1, 0).ToDense();
  CHECK(e20.ToDense() == product);
  CHECK(e20 == Compose(tax.BuildEdgeMatrix(2, 1), tax.BuildEdgeMatrix(1, 0)));
}

TEST_CASE("four-level 123/339/729/810 tree") {
  std::mt19937_64 rng(7);
  const std::size_t sizes[] = {123, 339, 729, 810};
  const auto tax = Taxonomy::Random(sizes, rng);
  const auto e = tax.BuildEdgeMatrix(3, 0);
  CHECK(e.rows() == 810);
  CHECK(e.cols() == 123);
  const Eigen::MatrixXd dense = e.ToDense();
  for (Eigen::Index i = 0; i < dense.rows(); ++i) CHECK(dense.row(i).sum() == 1.0);
}

TEST_CASE("coarsen_label") {
  const auto tax = FourFine();
  CHECK(tax.Coarsen(3, 1, 0) == 1);
  CHECK(tax.Coarsen(0, 1, 0) == 0);
  CHECK_THROWS_AS(tax.Coarsen(3, 1, 1), Error);
  CHECK_THROWS_AS(tax.Coarsen(4, 1, 0), Error);
  CHECK_THROWS_AS(tax.Coarsen(-1, 1, 0), Error);
}

TEST_CASE("chained parent lookups equal the composed edge matrix row argmax") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t sizes[] = {3, 7, 12, 20};
    const auto tax = Taxonomy::Random(sizes, rng);
    const Eigen::MatrixXd e30 = tax.BuildEdgeMatrix(3, 0).ToDense();
    for (LabelId c = 0; c < 20; ++c) {
      LabelId walk = c;
      for (std::size_t level = 3; level > 0; --level) walk = tax.parent(level, walk);
      Eigen::Index argmax = 0;
      e30.row(c).maxCoeff(&argmax);
      CHECK(walk == argmax);
      CHECK(tax.Coarsen(c, 3, 0) == walk);
    }
  }
}

TEST_CASE("marginalize") {
  const auto e = FourFine().BuildEdgeMatrix(1, 0);
  const std::vector<double> q = {0.1, 0.2, 0.3, 0.4};
  const auto out = Marginalize(q, e);
  CHECK(out[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.7).epsilon(1e-15));

  const std::vector<double> onehot = {0, 0, 1, 0};
  CHECK(Marginalize(onehot, e) == std::vector<double>{0.0, 1.0});

  const std::vector<double> short_q = {0.5, 0.5};
  CHECK_THROWS_AS(Marginalize(short_q, e), Error);
  const std::vector<double> unnormalized = {0.1, 0.2, 0.3, 0.5};
  CHECK_THROWS_AS(Marginalize(unnormalized, e), Error);
}

TEST_CASE("marginalize agrees with a brute-force child sum on random 50->10 trees") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t sizes[] = {10, 50};
    const auto tax = Taxonomy::Random(sizes, rng);
    const auto q = RandomSimplex(50, rng);
    const auto out = Marginalize(q, tax.BuildEdgeMatrix(1, 0));
    double total = 0.0;
    for (LabelId j = 0; j < 10; ++j) {
      double brute = 0.0;
      for (LabelId child : tax.children(0, j)) brute += q[static_cast<std::size_t>(child)];
      CHECK(std::abs(out[static_cast<std::size_t>(j)] - brute) <= 1e-12);
      total += out[static_cast<std::size_t>(j)];
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("identity ontology marginalizes to itself") {
  std::mt19937_64 rng(5);
  const auto q = RandomSimplex(6, rng);
  CHECK(Marginalize(q, EdgeMatrix::Identity(6)) == q);
  // A taxonomy level must strictly refine its parent, so the identity exists
  // only as an explicit edge matrix.
  CHECK_THROWS_AS(Taxonomy::FromParentMaps(3, {{0, 1, 2}}), Error);
}

TEST_CASE("row-stochastic and composable for every level pair of random trees") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t sizes[] = {2, 5, 9, 17};
    const auto tax = Taxonomy::Random(sizes, rng);
    for (std::size_t t = 1; t < 4; ++t) {
      for (std::size_t tp = 0; tp < t; ++tp) {
        const Eigen::MatrixXd d = tax.BuildEdgeMatrix(t, tp).ToDense();
        for (Eigen::Index i = 0; i < d.rows(); ++i) CHECK(d.row(i).sum() == 1.0);
        for (std::size_t tpp = 0; tpp < tp; ++tpp) {
          CHECK(tax.BuildEdgeMatrix(t, tpp) ==
                Compose(tax.BuildEdgeMatrix(t, tp), tax.BuildEdgeMatrix(tp, tpp)));
        }
      }
    }
  }
}

TEST_CASE("taxonomy invariants are enforced") {
  // Sizes must strictly increase.
  CHECK_THROWS_AS(Taxonomy::FromParentMaps(2, {{0, 1}}), Error);
  // Parent out of range.
  CHECK_THROWS_AS(Taxonomy::FromParentMaps(2, {{0, 0, 2}}), Error);
  // Coarse class 1 has no child.
  CHECK_THROWS_AS(Taxonomy::FromParentMaps(2, {{0, 0, 0}}), Error);
  CHECK_THROWS_AS(Taxonomy::Balanced(3, std::vector<std::size_t>{1}), Error);
  CHECK_NOTHROW(Taxonomy::Balanced(3, std::vector<std::size_t>{2, 3}));
}

TEST_CASE("balanced tree layout") {
  const std::size_t branching[] = {5};
  const auto tax = Taxonomy::Balanced(20, branching);
  CHECK(tax.level_sizes() == std::vector<std::size_t>{20, 100});
  for (LabelId c = 0; c < 100; ++c) CHECK(tax.parent(1, c) == c / 5);
}

TEST_CASE("taxonomy text round trip") {
  std::mt19937_64 rng(17);
  const std::size_t sizes[] = {4, 9, 15};
  const auto tax = Taxonomy::Random(sizes, rng);
  std::stringstream ss;
  WriteTaxonomy(ss, tax);
  const auto back = ReadTaxonomy(ss);
  REQUIRE(back.num_levels() == 3);
  for (std::size_t t = 1; t < 3; ++t) {
    const auto a = tax.parent_map(t);
    const auto b = back.parent_map(t);
    CHECK(std::vector<LabelId>(a.begin(), a.end()) == std::vector<LabelId>(b.begin(), b.end()));
  }
  CHECK(back.name(2, 3) == tax.name(2, 3));
}

TEST_CASE("taxonomy reader rejects malformed input") {
  std::istringstream sparse("0 0 a -1\n0 2 b -1\n");
  CHECK_THROWS_AS(ReadTaxonomy(sparse), Error);
  std::istringstream bad_parent("0 0 a -1\n1 0 b 0\n1 1 c 3\n");
  CHECK_THROWS_AS(ReadTaxonomy(bad_parent), Error);
  std::istringstream comment("# header\n0 0 a -1\n0 1 b -1\n1 0 c 0\n1 1 d 1\n1 2 e 1\n");
  CHECK(ReadTaxonomy(comment).level_size(1) == 3);
}
