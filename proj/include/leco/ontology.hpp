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

#ifndef LECO_ONTOLOGY_HPP_
#define LECO_ONTOLOGY_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace leco {

// Dense per-level class id.
using LabelId = std::int32_t;

// Tolerance used when checking that a probability vector sums to one.
inline constexpr double kProbabilityTolerance = 1e-9;

// 0/1 ancestor indicator E[i, j] between a fine level (rows) and a coarser
// level (columns). Every row has exactly one nonzero, so the matrix is stored
// as the ancestor column of each row.
class EdgeMatrix {
 public:
  EdgeMatrix(std::size_t cols, std::vector<LabelId> ancestors);

  static EdgeMatrix Identity(std::size_t n);
  // Accepts any 0/1 matrix whose rows each sum to exactly one.
  static EdgeMatrix FromDense(const Eigen::MatrixXd& dense);

  std::size_t rows() const { return ancestors_.size(); }
  std::size_t cols() const { return cols_; }

  int operator()(std::size_t row, std::size_t col) const {
    return ancestors_[row] == static_cast<LabelId>(col) ? 1 : 0;
  }
  LabelId ancestor(std::size_t row) const { return ancestors_[row]; }
  std::span<const LabelId> ancestors() const { return ancestors_; }

  // Fine classes whose ancestor is `col`, ascending.
  std::vector<LabelId> Descendants(LabelId col) const;
  Eigen::MatrixXd ToDense() const;

  friend bool operator==(const EdgeMatrix&, const EdgeMatrix&) = default;

 private:
  std::size_t cols_;
  std::vector<LabelId> ancestors_;
};

// E_{a->c} = E_{a->b} * E_{b->c}.
EdgeMatrix Compose(const EdgeMatrix& fine_to_mid, const EdgeMatrix& mid_to_coarse);

// output[j] = sum_i q[i] * E[i, j]. Throws on dimension mismatch or when q is
// not normalized within kProbabilityTolerance.
std::vector<double> Marginalize(std::span<const double> q, const EdgeMatrix& edges);

// Immutable multi-level class ontology. Level 0 is the coarsest; level t
// refines level t-1 through a total parent map.
class Taxonomy {
 public:
  // names[t][i] is the display name of label i at level t; parent_maps[t-1][i]
  // is the level t-1 parent of label i at level t.
  Taxonomy(std::vector<std::vector<std::string>> names,
           std::vector<std::vector<LabelId>> parent_maps);

  // Generated names ("L<t>_<id>").
  static Taxonomy FromParentMaps(std::size_t root_size,
                                 std::vector<std::vector<LabelId>> parent_maps);
  // `roots` coarse classes, each class at level t split into branching[t]
  // children (e.g. 20 roots with {5} gives the 20/100 two-level tree).
  static Taxonomy Balanced(std::size_t roots, std::span<const std::size_t> branching);
  // Random tree with the given strictly increasing level sizes; every coarse
  // class receives at least one child.
  static Taxonomy Random(std::span<const std::size_t> level_sizes, std::mt19937_64& rng);

  std::size_t num_levels() const { return names_.size(); }
  std::size_t finest_level() const { return names_.size() - 1; }
  std::size_t level_size(std::size_t level) const;
  std::vector<std::size_t> level_sizes() const;
  const std::string& name(std::size_t level, LabelId label) const;

  LabelId parent(std::size_t level, LabelId label) const;
  // Parent map from `level` to `level - 1`.
  std::span<const LabelId> parent_map(std::size_t level) const;
  std::vector<LabelId> children(std::size_t level, LabelId label) const;

  // Ancestor of `label` (at `level`) at the strictly coarser `target_level`.
  LabelId Coarsen(LabelId label, std::size_t level, std::size_t target_level) const;
  // E_{fine_level -> coarse_level}; requires coarse_level < fine_level.
  EdgeMatrix BuildEdgeMatrix(std::size_t fine_level, std::size_t coarse_level) const;

 private:
  void CheckLevel(std::size_t level) const;
  void CheckLabel(std::size_t level, LabelId label) const;

  std::vector<std::vector<std::string>> names_;
  std::vector<std::vector<LabelId>> parent_maps_;
};

// Text format, one line per label: `<level> <label_id> <label_name> <parent_id>`
// with parent_id = -1 at level 0. Lines starting with '#' are ignored.
Taxonomy ReadTaxonomy(std::istream& in);
Taxonomy ReadTaxonomyFile(const std::string& path);
void WriteTaxonomy(std::ostream& out, const Taxonomy& taxonomy);

// Writes the same record format without validating tree invariants, for
// inferred parent maps that may leave coarse classes childless.
void WriteTaxonomyRecords(std::ostream& out,
                          const std::vector<std::vector<std::string>>& names,
                          const std::vector<std::vector<LabelId>>& parent_maps);

}  // namespace leco

#endif  // LECO_ONTOLOGY_HPP_
