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

#ifndef LECO_SYNTHDATA_HPP_
#define LECO_SYNTHDATA_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "leco/ontology.hpp"

namespace leco {

// Hierarchical Gaussian mixture: coarse centers ~ N(0, sigma_coarse^2 I), each
// finer center = parent center + N(0, sigma_fine^2 I), samples = leaf center +
// N(0, sigma_noise^2 I). Per-leaf frequencies follow (rank + 1)^-tail_exponent.
struct HierarchicalGaussianSpec {
  std::size_t dim = 32;
  double sigma_coarse = 4.0;
  double sigma_fine = 1.0;
  double sigma_noise = 0.6;
  double tail_exponent = 0.0;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct LabeledSample {
  Eigen::VectorXd features;
  // Full lineage, index = taxonomy level.
  std::vector<LabelId> labels_by_level;
  // Finest level whose label the learner may see; -1 while unallocated.
  int visible_level = -1;
  // Old label disagrees with the inferred parent map (gradient masking).
  bool coarse_mismatch = false;
  // Held out for validation within its annotation draw.
  bool is_val = false;

  LabelId label_at(std::size_t level) const { return labels_by_level[level]; }
};

enum class AnnotationStrategy { kLabelNew, kRelabelOld, kAllFine };

const char* ToString(AnnotationStrategy s);
AnnotationStrategy ParseAnnotationStrategy(const std::string& s);

// Fraction of every annotation draw held out for validation.
inline constexpr double kValidationFraction = 0.2;

// Candidate pool plus the annotation state of each sample. At the current TP t:
//   train()       = S^t, training samples visible at level t
//   val()         = validation samples visible at level t
//   coarse_pool() = S^{1:t-1}, training samples visible only at a level < t
class TPDatasets {
 public:
  TPDatasets(std::size_t dim, std::size_t num_levels, std::vector<LabeledSample> candidates,
             std::vector<std::size_t> block_sizes, std::vector<LabeledSample> test);

  std::size_t dim() const { return dim_; }
  std::size_t num_levels() const { return num_levels_; }
  int current_tp() const { return current_tp_; }

  const std::vector<LabeledSample>& samples() const { return samples_; }
  const std::vector<LabeledSample>& test() const { return test_; }
  std::span<const std::size_t> block_sizes() const { return block_sizes_; }

  const std::vector<std::size_t>& train() const { return train_; }
  const std::vector<std::size_t>& val() const { return val_; }
  const std::vector<std::size_t>& coarse_pool() const { return coarse_; }

  std::size_t unallocated() const { return samples_.size() - cursor_; }
  // Distinct samples carrying any label.
  std::size_t num_labeled() const { return cursor_; }

  void Apply(AnnotationStrategy strategy, int tp, std::size_t budget);

  // Marks samples whose ids are listed (in `samples()` order) as excluded from
  // coarse supervision.
  void SetCoarseMismatch(std::span<const std::size_t> indices);

 private:
  void Draw(int tp, std::size_t budget);
  void RebuildViews();

  std::size_t dim_;
  std::size_t num_levels_;
  std::vector<LabeledSample> samples_;
  std::vector<std::size_t> block_sizes_;
  std::vector<LabeledSample> test_;
  std::size_t cursor_ = 0;
  int current_tp_ = -1;
  std::vector<std::size_t> train_, val_, coarse_;
};

// Per-class counts proportional to (rank + 1)^-tail_exponent, summing to
// `total` (largest-remainder rounding). `rank[c]` is the frequency rank of
// class c.
std::vector<std::size_t> PowerLawCounts(std::span<const std::size_t> rank, double tail_exponent,
                                        std::size_t total);

// Draws one block of `sizes[t]` candidates per TP and a class-balanced test
// set labeled at the finest level.
TPDatasets GeneratePool(const HierarchicalGaussianSpec& spec, const Taxonomy& taxonomy,
                        std::span<const std::size_t> sizes, std::size_t test_size);

enum class AugmentMode { kWeak, kStrong };

struct AugmentParams {
  double noise_std = 0.03;
  double drop_prob = 0.2;

  static AugmentParams ForNoise(double sigma_noise) { return {0.05 * sigma_noise, 0.2}; }
};

// weak: x + N(0, noise_std^2); strong: weak followed by coordinate dropout
// with survivors scaled by 1 / (1 - drop_prob).
void Augment(Eigen::Ref<Eigen::VectorXd> x, AugmentMode mode, const AugmentParams& params,
             std::mt19937_64& rng);
Eigen::VectorXd Augmented(const Eigen::VectorXd& x, AugmentMode mode,
                          const AugmentParams& params, std::mt19937_64& rng);

// CSV table `feature_0..feature_{d-1},label_level_0..,visible_level`.
void WriteSamplesCsv(std::ostream& out, std::span<const LabeledSample> samples, std::size_t dim,
                     std::size_t num_levels);
std::vector<LabeledSample> ReadSamplesCsv(std::istream& in, std::size_t* dim = nullptr,
                                          std::size_t* num_levels = nullptr);

}  // namespace leco

#endif  // LECO_SYNTHDATA_HPP_
