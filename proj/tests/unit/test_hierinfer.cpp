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
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "leco/error.hpp"
#include "leco/hierinfer.hpp"

using namespace leco;

namespace {

// Paired labels drawn from `parents`; each item's old label is replaced by a
// uniformly chosen wrong old label with probability `noise`.
std::vector<PairedItem> NoisyCorpus(std::span<const LabelId> parents, std::size_t num_old,
                                    std::size_t per_class, double noise, std::mt19937_64& rng,
                                    std::size_t* flipped) {
  std::bernoulli_distribution flip(noise);
  std::uniform_int_distribution<LabelId> other(0, static_cast<LabelId>(num_old) - 2);
  std::vector<PairedItem> items;
  *flipped = 0;
  for (std::size_t c = 0; c < parents.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      LabelId old_label = parents[c];
      if (flip(rng)) {
        LabelId o = other(rng);
        old_label = o >= parents[c] ? o + 1 : o;
        ++*flipped;
      }
      items.push_back({old_label, static_cast<LabelId>(c), 1.0});
    }
  }
  return items;
}

}  // namespace

TEST_CASE("majority parent") {
  // new label 0 ("bird") co-occurs with old 0 ("animal") 3 times, old 1 ("void") once.
  const std::vector<PairedItem> items = {{0, 0, 1}, {0, 0, 1}, {1, 0, 1}, {0, 0, 1}, {1, 1, 2}};
  const auto parents = InferParentMap(items, 2, 2);
  CHECK(parents == std::vector<LabelId>{0, 1});
}

TEST_CASE("ties go to the smallest old id") {
  const std::vector<PairedItem> items = {{1, 0, 5}, {0, 0, 5}};
  CHECK(InferParentMap(items, 1, 2) == std::vector<LabelId>{0});
  const std::vector<PairedItem> swapped = {{0, 0, 5}, {1, 0, 5}};
  CHECK(InferParentMap(swapped, 1, 2) == std::vector<LabelId>{0});
}

TEST_CASE("weights are summed, not counted") {
  const std::vector<PairedItem> items = {{0, 0, 1}, {0, 0, 1}, {1, 0, 3}};
  CHECK(InferParentMap(items, 1, 2) == std::vector<LabelId>{1});
}

TEST_CASE("missing evidence and bad ids are errors") {
  const std::vector<PairedItem> items = {{0, 0, 1}};
  CHECK_THROWS_AS(InferParentMap(items, 2, 1), Error);
  const std::vector<PairedItem> zero = {{0, 0, 0.0}};
  CHECK_THROWS_AS(InferParentMap(zero, 1, 1), Error);
  const std::vector<PairedItem> bad = {{3, 0, 1}};
  CHECK_THROWS_AS(InferParentMap(bad, 1, 2), Error);
  const std::vector<LabelId> parents = {0};
  const std::vector<PairedItem> bad_new = {{0, 2, 1}};
  CHECK_THROWS_AS(MismatchMask(bad_new, parents), Error);
}

TEST_CASE("mismatch mask") {
  const std::vector<LabelId> parents = {0};  // parent(bird) = animal
  const std::vector<PairedItem> items = {{0, 0, 1}, {1, 0, 1}};
  const auto mask = MismatchMask(items, parents);
  CHECK(mask == std::vector<bool>{false, true});
  CHECK(MaskedFraction(items, mask) == doctest::Approx(0.5));
}

TEST_CASE("noise-free corpus recovers the tree exactly") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t sizes[] = {6, 25};
    const auto tax = Taxonomy::Random(sizes, rng);
    std::size_t flipped = 0;
    const auto items = NoisyCorpus(tax.parent_map(1), 6, 4, 0.0, rng, &flipped);
    const auto parents = InferParentMap(items, 25, 6);
    const auto truth = tax.parent_map(1);
    CHECK(std::equal(parents.begin(), parents.end(), truth.begin(), truth.end()));
    const auto mask = MismatchMask(items, parents);
    CHECK(std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }));
  }
}

TEST_CASE("5% noise: map recovered, masked fraction tracks the noise") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t sizes[] = {8, 40};
    const auto tax = Taxonomy::Random(sizes, rng);
    std::size_t flipped = 0;
    const auto items = NoisyCorpus(tax.parent_map(1), 8, 200, 0.05, rng, &flipped);
    const auto parents = InferParentMap(items, 40, 8);
    const auto truth = tax.parent_map(1);
    CHECK(std::equal(parents.begin(), parents.end(), truth.begin(), truth.end()));
    const auto mask = MismatchMask(items, parents);
    CHECK(std::abs(MaskedFraction(items, mask) - 0.05) <= 0.02);
    // Exactly the flipped items are masked.
    CHECK(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)) == flipped);
  }
}

TEST_CASE("permutation equivariance over old labels") {
  std::mt19937_64 rng(3);
  const std::size_t sizes[] = {7, 30};
  const auto tax = Taxonomy::Random(sizes, rng);
  std::size_t flipped = 0;
  auto items = NoisyCorpus(tax.parent_map(1), 7, 20, 0.1, rng, &flipped);
  const auto base = InferParentMap(items, 30, 7);
  std::vector<LabelId> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (auto& it : items) it.old_label = perm[static_cast<std::size_t>(it.old_label)];
  const auto permuted = InferParentMap(items, 30, 7);
  for (std::size_t c = 0; c < 30; ++c) CHECK(permuted[c] == perm[static_cast<std::size_t>(base[c])]);
}

TEST_CASE("paired labeling text round trip") {
  const std::vector<PairedItem> items = {{0, 1, 1.0}, {2, 0, 0.25}, {1, 1, 1e-3}};
  std::stringstream ss;
  WritePairedLabeling(ss, items);
  const auto back = ReadPairedLabeling(ss);
  REQUIRE(back.size() == items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(back[i].old_label == items[i].old_label);
    CHECK(back[i].new_label == items[i].new_label);
    CHECK(back[i].weight == items[i].weight);
  }
  std::istringstream bad("0 1 x\n");
  CHECK_THROWS_AS(ReadPairedLabeling(bad), Error);
  std::istringstream negative("0 1 -1\n");
  CHECK_THROWS_AS(ReadPairedLabeling(negative), Error);
}
