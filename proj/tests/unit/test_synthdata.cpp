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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "leco/error.hpp"
#include "leco/synthdata.hpp"

using namespace leco;

namespace {

Taxonomy Tree20x5() {
  const std::size_t branching[] = {5};
  return Taxonomy::Balanced(20, branching);
}

TPDatasets Pool20x5(std::uint64_t seed, double sigma_fine = 1.0) {
  HierarchicalGaussianSpec spec;
  spec.seed = seed;
  spec.sigma_fine = sigma_fine;
  const std::size_t sizes[] = {10000, 10000};
  return GeneratePool(spec, Tree20x5(), sizes, 2000);
}

std::size_t CountVisible(const TPDatasets& d, int level) {
  return static_cast<std::size_t>(std::count_if(d.samples().begin(), d.samples().end(),
                                                [&](const auto& s) { return s.visible_level == level; }));
}

// Nearest class mean at `level`, fitted on `fit`.
std::vector<LabelId> NearestMean(const std::vector<LabeledSample>& fit,
                                 const std::vector<LabeledSample>& eval, std::size_t level,
                                 std::size_t classes) {
  const auto dim = fit.front().features.size();
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(dim, static_cast<Eigen::Index>(classes));
  std::vector<double> n(classes, 0.0);
  for (const auto& s : fit) {
    mu.col(s.label_at(level)) += s.features;
    n[static_cast<std::size_t>(s.label_at(level))] += 1.0;
  }
  for (std::size_t c = 0; c < classes; ++c) mu.col(static_cast<Eigen::Index>(c)) /= n[c];
  std::vector<LabelId> out;
  for (const auto& s : eval) {
    Eigen::Index best = 0;
    (mu.colwise() - s.features).colwise().squaredNorm().minCoeff(&best);
    out.push_back(static_cast<LabelId>(best));
  }
  return out;
}

}  // namespace

TEST_CASE("20x5 pool: balanced leaves and full lineage") {
  const auto d = Pool20x5(1);
  const auto tax = Tree20x5();
  REQUIRE(d.samples().size() == 20000);
  std::map<std::pair<std::size_t, LabelId>, std::size_t> counts;
  for (std::size_t i = 0; i < d.samples().size(); ++i) {
    const auto& s = d.samples()[i];
    CHECK(s.labels_by_level.size() == 2);
    CHECK(s.labels_by_level[0] == tax.parent(1, s.labels_by_level[1]));
    CHECK(s.visible_level == -1);
    ++counts[{i / 10000, s.labels_by_level[1]}];
  }
  for (const auto& [key, n] : counts) CHECK(n == 100);
  for (const auto& s : d.test()) CHECK(s.labels_by_level[0] == tax.parent(1, s.labels_by_level[1]));
}

TEST_CASE("power-law counts") {
  std::vector<std::size_t> rank(7);
  for (std::size_t i = 0; i < 7; ++i) rank[i] = i;
  const auto flat = PowerLawCounts(rank, 0.0, 100);
  CHECK(std::accumulate(flat.begin(), flat.end(), std::size_t{0}) == 100);
  CHECK(*std::max_element(flat.begin(), flat.end()) - *std::min_element(flat.begin(), flat.end()) <= 1);
  const auto tail = PowerLawCounts(rank, 1.0, 1000);
  CHECK(std::accumulate(tail.begin(), tail.end(), std::size_t{0}) == 1000);
  for (std::size_t i = 1; i < 7; ++i) CHECK(tail[i] <= tail[i - 1]);
  // 1000 / H_7 ~ 385.6 for the head class.
  CHECK(tail[0] >= 385);
  CHECK(tail[0] <= 386);
}

TEST_CASE("long-tailed pool keeps per-block totals") {
  HierarchicalGaussianSpec spec;
  spec.tail_exponent = 1.0;
  const std::size_t sizes[] = {3000, 5000};
  const auto d = GeneratePool(spec, Tree20x5(), sizes, 500);
  CHECK(d.samples().size() == 8000);
  std::map<LabelId, std::size_t> counts;
  for (std::size_t i = 0; i < 3000; ++i) ++counts[d.samples()[i].labels_by_level[1]];
  std::size_t hi = 0, lo = 3000;
  for (const auto& [c, n] : counts) {
    hi = std::max(hi, n);
    lo = std::min(lo, n);
  }
  CHECK(hi > 10 * lo);
}

TEST_CASE("generation errors") {
  HierarchicalGaussianSpec spec;
  const std::size_t small[] = {50};
  CHECK_THROWS_AS(GeneratePool(spec, Tree20x5(), small, 10), Error);
  const std::size_t zero[] = {0};
  CHECK_THROWS_AS(GeneratePool(spec, Tree20x5(), zero, 100), Error);
  spec.sigma_noise = -1.0;
  const std::size_t ok[] = {1000};
  CHECK_THROWS_AS(GeneratePool(spec, Tree20x5(), ok, 100), Error);
}

TEST_CASE("same spec and seed give bitwise-identical data") {
  auto a = Pool20x5(9);
  auto b = Pool20x5(9);
  a.Apply(AnnotationStrategy::kLabelNew, 0, 10000);
  b.Apply(AnnotationStrategy::kLabelNew, 0, 10000);
  a.Apply(AnnotationStrategy::kAllFine, 1, 10000);
  b.Apply(AnnotationStrategy::kAllFine, 1, 10000);
  REQUIRE(a.samples().size() == b.samples().size());
  for (std::size_t i = 0; i < a.samples().size(); ++i) {
    CHECK(a.samples()[i].features == b.samples()[i].features);
    CHECK(a.samples()[i].visible_level == b.samples()[i].visible_level);
    CHECK(a.samples()[i].is_val == b.samples()[i].is_val);
  }
  CHECK(a.train() == b.train());
  const auto c = Pool20x5(10);
  CHECK(c.samples()[0].features != a.samples()[0].features);
}

TEST_CASE("LabelNew at TP1") {
  auto d = Pool20x5(2);
  d.Apply(AnnotationStrategy::kLabelNew, 0, 10000);
  CHECK(d.train().size() == 8000);
  CHECK(d.val().size() == 2000);
  CHECK(d.coarse_pool().empty());
  d.Apply(AnnotationStrategy::kLabelNew, 1, 10000);
  CHECK(CountVisible(d, 1) == 10000);
  CHECK(CountVisible(d, 0) == 10000);
  CHECK(d.train().size() + d.val().size() == 10000);
  CHECK(d.coarse_pool().size() == 8000);
  CHECK(d.num_labeled() == 20000);
  for (auto i : d.coarse_pool()) CHECK(d.samples()[i].visible_level < 1);
}

TEST_CASE("RelabelOld at TP1") {
  auto d = Pool20x5(3);
  d.Apply(AnnotationStrategy::kLabelNew, 0, 10000);
  const auto tp0_train = d.train();
  d.Apply(AnnotationStrategy::kRelabelOld, 1, 10000);
  CHECK(CountVisible(d, 1) == 10000);
  CHECK(CountVisible(d, 0) == 0);
  CHECK(d.num_labeled() == 10000);
  CHECK(d.coarse_pool().empty());
  CHECK(d.train() == tp0_train);
}

TEST_CASE("AllFine at TP1 sees 2N fine labels") {
  auto d = Pool20x5(4);
  d.Apply(AnnotationStrategy::kLabelNew, 0, 10000);
  d.Apply(AnnotationStrategy::kAllFine, 1, 10000);
  CHECK(CountVisible(d, 1) == 20000);
  CHECK(d.train().size() + d.val().size() == 20000);
  CHECK(d.coarse_pool().empty());
}

TEST_CASE("annotation errors") {
  auto d = Pool20x5(5);
  CHECK_THROWS_AS(d.Apply(AnnotationStrategy::kRelabelOld, 0, 100), Error);
  CHECK_THROWS_AS(d.Apply(AnnotationStrategy::kLabelNew, 1, 100), Error);
  d.Apply(AnnotationStrategy::kLabelNew, 0, 15000);
  CHECK_THROWS_AS(d.Apply(AnnotationStrategy::kLabelNew, 1, 10000), Error);
  auto e = Pool20x5(5);
  e.Apply(AnnotationStrategy::kLabelNew, 0, 5000);
  CHECK_THROWS_AS(e.Apply(AnnotationStrategy::kRelabelOld, 1, 6000), Error);
}

TEST_CASE("train, val and test are pairwise disjoint at every TP") {
  for (auto strategy : {AnnotationStrategy::kLabelNew, AnnotationStrategy::kRelabelOld,
                        AnnotationStrategy::kAllFine}) {
    auto d = Pool20x5(6);
    d.Apply(AnnotationStrategy::kLabelNew, 0, 10000);
    d.Apply(strategy, 1, 10000);
    std::set<std::size_t> train(d.train().begin(), d.train().end());
    std::set<std::size_t> val(d.val().begin(), d.val().end());
    std::set<std::size_t> coarse(d.coarse_pool().begin(), d.coarse_pool().end());
    for (auto i : val) CHECK(train.count(i) == 0);
    for (auto i : coarse) CHECK((train.count(i) == 0 && val.count(i) == 0));
    CHECK(train.size() == d.train().size());
    for (auto i : val) CHECK(d.samples()[i].is_val);
    // Test samples live in their own container.
    CHECK(d.test().size() == 2000);
  }
}

TEST_CASE("LabelNew labels twice as many samples as RelabelOld") {
  auto a = Pool20x5(7);
  auto b = Pool20x5(7);
  for (auto* d : {&a, &b}) d->Apply(AnnotationStrategy::kLabelNew, 0, 10000);
  a.Apply(AnnotationStrategy::kLabelNew, 1, 10000);
  b.Apply(AnnotationStrategy::kRelabelOld, 1, 10000);
  CHECK(a.num_labeled() == 2 * b.num_labeled());
}

TEST_CASE("sigma_fine = 0 makes siblings indistinguishable") {
  auto d = Pool20x5(8, 0.0);
  std::vector<LabeledSample> fit(d.samples().begin(), d.samples().begin() + 10000);
  std::vector<LabeledSample> eval(d.samples().begin() + 10000, d.samples().end());
  const auto pred = NearestMean(fit, eval, 1, 100);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) correct += pred[i] == eval[i].labels_by_level[1];
  const double acc = static_cast<double>(correct) / static_cast<double>(eval.size());
  CHECK(acc <= 1.0 / 5.0 + 0.05);
}

TEST_CASE("augmentation") {
  std::mt19937_64 rng(1);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(8, -1.0, 2.0);
  const AugmentParams none{0.0, 0.0};
  CHECK(Augmented(x, AugmentMode::kStrong, none, rng) == x);
  CHECK(Augmented(x, AugmentMode::kWeak, none, rng) == x);

  const AugmentParams p = AugmentParams::ForNoise(0.6);
  CHECK(p.noise_std == doctest::Approx(0.03));
  CHECK(p.drop_prob == 0.2);

  // Mean of 1e5 strong views is within 3 standard errors of x per coordinate.
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(x.size());
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd v = Augmented(x, AugmentMode::kStrong, p, rng);
    sum += v;
    sq += v.cwiseProduct(v);
  }
  const Eigen::VectorXd mean = sum / n;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double var = sq[j] / n - mean[j] * mean[j];
    const double se = std::sqrt(std::max(var, 1e-300) / n);
    CHECK(std::abs(mean[j] - x[j]) <= 3.0 * se + 1e-12);
  }

  // Strong dropout zeroes roughly 20% of coordinates.
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(10000);
  const Eigen::VectorXd dropped = Augmented(ones, AugmentMode::kStrong, {0.0, 0.2}, rng);
  const double zero_frac = (dropped.array() == 0.0).cast<double>().mean();
  CHECK(zero_frac == doctest::Approx(0.2).epsilon(0.1));
  CHECK(((dropped.array() == 0.0) || (dropped.array() == 1.25)).all());
}

TEST_CASE("weak augmentation rarely flips confident predictions") {
  auto d = Pool20x5(11);
  std::vector<LabeledSample> fit(d.samples().begin(), d.samples().begin() + 10000);
  std::mt19937_64 rng(2);
  const AugmentParams p = AugmentParams::ForNoise(0.6);
  std::vector<LabeledSample> views = d.test();
  for (auto& s : views) s.features = Augmented(s.features, AugmentMode::kWeak, p, rng);
  const auto clean = NearestMean(fit, d.test(), 1, 100);
  const auto weak = NearestMean(fit, views, 1, 100);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) flips += clean[i] != weak[i];
  CHECK(static_cast<double>(flips) / static_cast<double>(clean.size()) < 0.01);
}

TEST_CASE("samples CSV round trip") {
  auto d = Pool20x5(12);
  d.Apply(AnnotationStrategy::kLabelNew, 0, 300);
  std::vector<LabeledSample> some(d.samples().begin(), d.samples().begin() + 400);
  std::stringstream ss;
  WriteSamplesCsv(ss, some, 32, 2);
  std::size_t dim = 0, levels = 0;
  const auto back = ReadSamplesCsv(ss, &dim, &levels);
  CHECK(dim == 32);
  CHECK(levels == 2);
  REQUIRE(back.size() == some.size());
  for (std::size_t i = 0; i < some.size(); ++i) {
    CHECK(back[i].features == some[i].features);
    CHECK(back[i].labels_by_level == some[i].labels_by_level);
    CHECK(back[i].visible_level == some[i].visible_level);
  }
}
