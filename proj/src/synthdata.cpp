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

#include "leco/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "leco/error.hpp"
#include "leco/text_util.hpp"

namespace leco {

void HierarchicalGaussianSpec::Validate() const {
  LECO_CHECK(dim >= 1, "data spec: dim must be >= 1");
  LECO_CHECK(sigma_coarse >= 0.0 && sigma_fine >= 0.0 && sigma_noise >= 0.0,
             "data spec: standard deviations must be nonnegative");
  LECO_CHECK(tail_exponent >= 0.0, "data spec: tail_exponent must be >= 0");
}

const char* ToString(AnnotationStrategy s) {
  switch (s) {
    case AnnotationStrategy::kLabelNew:
      return "LabelNew";
    case AnnotationStrategy::kRelabelOld:
      return "RelabelOld";
    case AnnotationStrategy::kAllFine:
      return "AllFine";
  }
  return "?";
}

AnnotationStrategy ParseAnnotationStrategy(const std::string& s) {
  if (s == "LabelNew") return AnnotationStrategy::kLabelNew;
  if (s == "RelabelOld") return AnnotationStrategy::kRelabelOld;
  if (s == "AllFine") return AnnotationStrategy::kAllFine;
  internal::Fail("unknown annotation strategy '", s, "'");
}

TPDatasets::TPDatasets(std::size_t dim, std::size_t num_levels,
                       std::vector<LabeledSample> candidates, std::vector<std::size_t> block_sizes,
                       std::vector<LabeledSample> test)
    : dim_(dim),
      num_levels_(num_levels),
      samples_(std::move(candidates)),
      block_sizes_(std::move(block_sizes)),
      test_(std::move(test)) {}

void TPDatasets::Draw(int tp, std::size_t budget) {
  LECO_CHECK(unallocated() >= budget, "annotation at TP", tp, " needs ", budget,
             " unallocated samples but the pool has ", unallocated());
  const auto num_val =
      static_cast<std::size_t>(std::llround(kValidationFraction * static_cast<double>(budget)));
  for (std::size_t i = 0; i < budget; ++i) {
    auto& s = samples_[cursor_ + i];
    s.visible_level = tp;
    s.is_val = i < num_val;
  }
  cursor_ += budget;
}

void TPDatasets::Apply(AnnotationStrategy strategy, int tp, std::size_t budget) {
  LECO_CHECK(tp == current_tp_ + 1, "annotation must advance one TP at a time (current TP",
             current_tp_, ", requested TP", tp, ")");
  LECO_CHECK(tp >= 0 && static_cast<std::size_t>(tp) < num_levels_, "TP", tp,
             " has no taxonomy level");
  LECO_CHECK(budget > 0, "annotation budget must be positive");
  switch (strategy) {
    case AnnotationStrategy::kLabelNew:
      Draw(tp, budget);
      break;
    case AnnotationStrategy::kRelabelOld: {
      LECO_CHECK(tp > 0, "RelabelOld is undefined at TP0 (no history data)");
      std::size_t upgraded = 0;
      for (std::size_t i = 0; i < cursor_ && upgraded < budget; ++i) {
        if (samples_[i].visible_level == tp - 1) {
          samples_[i].visible_level = tp;
          ++upgraded;
        }
      }
      LECO_CHECK(upgraded == budget, "RelabelOld at TP", tp, " needs ", budget,
                 " samples from TP", tp - 1, " but found ", upgraded);
      break;
    }
    case AnnotationStrategy::kAllFine:
      Draw(tp, budget);
      for (std::size_t i = 0; i < cursor_; ++i) samples_[i].visible_level = tp;
      break;
  }
  current_tp_ = tp;
  RebuildViews();
}

void TPDatasets::SetCoarseMismatch(std::span<const std::size_t> indices) {
  for (auto i : indices) {
    LECO_CHECK(i < samples_.size(), "coarse mismatch index ", i, " out of range");
    samples_[i].coarse_mismatch = true;
  }
}

void TPDatasets::RebuildViews() {
  train_.clear();
  val_.clear();
  coarse_.clear();
  for (std::size_t i = 0; i < cursor_; ++i) {
    const auto& s = samples_[i];
    if (s.visible_level == current_tp_) {
      (s.is_val ? val_ : train_).push_back(i);
    } else if (!s.is_val) {
      coarse_.push_back(i);
    }
  }
}

std::vector<std::size_t> PowerLawCounts(std::span<const std::size_t> rank, double tail_exponent,
                                        std::size_t total) {
  const std::size_t n = rank.size();
  LECO_CHECK(n > 0, "power-law counts need at least one class");
  std::vector<double> weight(n);
  for (std::size_t c = 0; c < n; ++c) {
    weight[c] = std::pow(static_cast<double>(rank[c] + 1), -tail_exponent);
  }
  const double sum = std::accumulate(weight.begin(), weight.end(), 0.0);
  std::vector<std::size_t> counts(n);
  std::vector<double> remainder(n);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const double exact = weight[c] / sum * static_cast<double>(total);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(counts[c]);
    assigned += counts[c];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % n]];
  return counts;
}

namespace {

void AddGaussian(Eigen::Ref<Eigen::VectorXd> v, double sigma, std::mt19937_64& rng) {
  if (sigma == 0.0) return;
  std::normal_distribution<double> normal(0.0, sigma);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += normal(rng);
}

std::vector<LabelId> Lineage(const Taxonomy& taxonomy, LabelId leaf) {
  const std::size_t finest = taxonomy.finest_level();
  std::vector<LabelId> labels(taxonomy.num_levels());
  labels[finest] = leaf;
  for (std::size_t t = finest; t > 0; --t) labels[t - 1] = taxonomy.parent(t, labels[t]);
  return labels;
}

}  // namespace

TPDatasets GeneratePool(const HierarchicalGaussianSpec& spec, const Taxonomy& taxonomy,
                        std::span<const std::size_t> sizes, std::size_t test_size) {
  spec.Validate();
  LECO_CHECK(!sizes.empty(), "generate_pool: no TP sizes given");
  for (auto s : sizes) LECO_CHECK(s > 0, "generate_pool: TP sizes must be positive");
  const std::size_t finest = taxonomy.finest_level();
  const std::size_t num_leaves = taxonomy.level_size(finest);
  LECO_CHECK(num_leaves > 0, "generate_pool: taxonomy has zero classes");
  if (spec.tail_exponent == 0.0) {
    for (auto s : sizes) {
      LECO_CHECK(s >= num_leaves, "generate_pool: balanced sampling of ", s,
                 " samples cannot cover ", num_leaves, " classes");
    }
  }

  std::mt19937_64 rng(spec.seed);
  const auto dim = static_cast<Eigen::Index>(spec.dim);

  // Centers, coarse to fine.
  std::vector<std::vector<Eigen::VectorXd>> centers(taxonomy.num_levels());
  for (std::size_t t = 0; t < taxonomy.num_levels(); ++t) {
    for (std::size_t c = 0; c < taxonomy.level_size(t); ++c) {
      Eigen::VectorXd center =
          t == 0 ? Eigen::VectorXd::Zero(dim)
                 : centers[t - 1][static_cast<std::size_t>(
                       taxonomy.parent(t, static_cast<LabelId>(c)))];
      AddGaussian(center, t == 0 ? spec.sigma_coarse : spec.sigma_fine, rng);
      centers[t].push_back(std::move(center));
    }
  }

  std::vector<std::size_t> rank(num_leaves);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);

  auto draw_sample = [&](LabelId leaf) {
    LabeledSample s;
    s.features = centers[finest][static_cast<std::size_t>(leaf)];
    AddGaussian(s.features, spec.sigma_noise, rng);
    s.labels_by_level = Lineage(taxonomy, leaf);
    return s;
  };

  std::vector<LabeledSample> candidates;
  for (std::size_t block_size : sizes) {
    const auto counts = PowerLawCounts(rank, spec.tail_exponent, block_size);
    std::vector<LabelId> leaves;
    leaves.reserve(block_size);
    for (std::size_t c = 0; c < num_leaves; ++c) {
      leaves.insert(leaves.end(), counts[c], static_cast<LabelId>(c));
    }
    std::shuffle(leaves.begin(), leaves.end(), rng);
    for (LabelId leaf : leaves) candidates.push_back(draw_sample(leaf));
  }

  std::vector<LabeledSample> test;
  test.reserve(test_size);
  for (std::size_t i = 0; i < test_size; ++i) {
    auto s = draw_sample(static_cast<LabelId>(i % num_leaves));
    s.visible_level = static_cast<int>(finest);
    test.push_back(std::move(s));
  }

  return TPDatasets(spec.dim, taxonomy.num_levels(), std::move(candidates),
                    std::vector<std::size_t>(sizes.begin(), sizes.end()), std::move(test));
}

void Augment(Eigen::Ref<Eigen::VectorXd> x, AugmentMode mode, const AugmentParams& params,
             std::mt19937_64& rng) {
  AddGaussian(x, params.noise_std, rng);
  if (mode == AugmentMode::kStrong && params.drop_prob > 0.0) {
    std::bernoulli_distribution drop(params.drop_prob);
    const double keep_scale = 1.0 / (1.0 - params.drop_prob);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = drop(rng) ? 0.0 : x[i] * keep_scale;
  }
}

Eigen::VectorXd Augmented(const Eigen::VectorXd& x, AugmentMode mode,
                          const AugmentParams& params, std::mt19937_64& rng) {
  Eigen::VectorXd out = x;
  Augment(out, mode, params, rng);
  return out;
}

void WriteSamplesCsv(std::ostream& out, std::span<const LabeledSample> samples, std::size_t dim,
                     std::size_t num_levels) {
  for (std::size_t j = 0; j < dim; ++j) out << "feature_" << j << ',';
  for (std::size_t t = 0; t < num_levels; ++t) out << "label_level_" << t << ',';
  out << "visible_level\n";
  for (const auto& s : samples) {
    LECO_CHECK(static_cast<std::size_t>(s.features.size()) == dim &&
                   s.labels_by_level.size() == num_levels,
               "sample shape does not match the table header");
    for (std::size_t j = 0; j < dim; ++j) {
      out << FormatDouble(s.features[static_cast<Eigen::Index>(j)]) << ',';
    }
    for (auto label : s.labels_by_level) out << label << ',';
    out << s.visible_level << '\n';
  }
}

std::vector<LabeledSample> ReadSamplesCsv(std::istream& in, std::size_t* dim_out,
                                          std::size_t* levels_out) {
  std::string line;
  LECO_CHECK(static_cast<bool>(std::getline(in, line)), "sample table is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = SplitString(line, ',');
  std::size_t dim = 0, levels = 0;
  for (const auto& h : header) {
    if (h.rfind("feature_", 0) == 0) ++dim;
    else if (h.rfind("label_level_", 0) == 0) ++levels;
  }
  LECO_CHECK(header.size() == dim + levels + 1 && header.back() == "visible_level",
             "sample table header must be feature_*, label_level_*, visible_level");
  std::vector<LabeledSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = SplitString(line, ',');
    LECO_CHECK(cells.size() == header.size(), "sample table line ", line_no, " has ",
               cells.size(), " cells, expected ", header.size());
    LabeledSample s;
    s.features.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      s.features[static_cast<Eigen::Index>(j)] = ParseDouble(cells[j]);
    }
    for (std::size_t t = 0; t < levels; ++t) {
      s.labels_by_level.push_back(static_cast<LabelId>(ParseInt(cells[dim + t])));
    }
    s.visible_level = static_cast<int>(ParseInt(cells.back()));
    samples.push_back(std::move(s));
  }
  if (dim_out) *dim_out = dim;
  if (levels_out) *levels_out = levels;
  return samples;
}

}  // namespace leco
