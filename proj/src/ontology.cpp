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

#include "leco/ontology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "leco/error.hpp"

namespace leco {

EdgeMatrix::EdgeMatrix(std::size_t cols, std::vector<LabelId> ancestors)
    : cols_(cols), ancestors_(std::move(ancestors)) {
  for (std::size_t i = 0; i < ancestors_.size(); ++i) {
    LECO_CHECK(ancestors_[i] >= 0 && static_cast<std::size_t>(ancestors_[i]) < cols_,
               "edge matrix row ", i, " points at column ", ancestors_[i],
               " outside [0, ", cols_, ")");
  }
}

EdgeMatrix EdgeMatrix::Identity(std::size_t n) {
  std::vector<LabelId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return EdgeMatrix(n, std::move(ids));
}

EdgeMatrix EdgeMatrix::FromDense(const Eigen::MatrixXd& dense) {
  std::vector<LabelId> ancestors(static_cast<std::size_t>(dense.rows()));
  for (Eigen::Index i = 0; i < dense.rows(); ++i) {
    int ones = 0;
    for (Eigen::Index j = 0; j < dense.cols(); ++j) {
      const double v = dense(i, j);
      LECO_CHECK(v == 0.0 || v == 1.0, "edge matrix entry (", i, ", ", j, ") = ", v,
                 " is not 0/1");
      if (v == 1.0) {
        ancestors[static_cast<std::size_t>(i)] = static_cast<LabelId>(j);
        ++ones;
      }
    }
    LECO_CHECK(ones == 1, "edge matrix row ", i, " sums to ", ones, ", expected 1");
  }
  return EdgeMatrix(static_cast<std::size_t>(dense.cols()), std::move(ancestors));
}

std::vector<LabelId> EdgeMatrix::Descendants(LabelId col) const {
  std::vector<LabelId> out;
  for (std::size_t i = 0; i < ancestors_.size(); ++i) {
    if (ancestors_[i] == col) out.push_back(static_cast<LabelId>(i));
  }
  return out;
}

Eigen::MatrixXd EdgeMatrix::ToDense() const {
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()),
                                                static_cast<Eigen::Index>(cols_));
  for (std::size_t i = 0; i < ancestors_.size(); ++i) {
    dense(static_cast<Eigen::Index>(i), ancestors_[i]) = 1.0;
  }
  return dense;
}

EdgeMatrix Compose(const EdgeMatrix& fine_to_mid, const EdgeMatrix& mid_to_coarse) {
  LECO_CHECK(fine_to_mid.cols() == mid_to_coarse.rows(), "cannot compose ",
             fine_to_mid.rows(), "x", fine_to_mid.cols(), " with ", mid_to_coarse.rows(),
             "x", mid_to_coarse.cols());
  std::vector<LabelId> ancestors(fine_to_mid.rows());
  for (std::size_t i = 0; i < ancestors.size(); ++i) {
    ancestors[i] = mid_to_coarse.ancestor(static_cast<std::size_t>(fine_to_mid.ancestor(i)));
  }
  return EdgeMatrix(mid_to_coarse.cols(), std::move(ancestors));
}

std::vector<double> Marginalize(std::span<const double> q, const EdgeMatrix& edges) {
  LECO_CHECK(q.size() == edges.rows(), "marginalize: probability vector has ", q.size(),
             " entries but edge matrix has ", edges.rows(), " rows");
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  LECO_CHECK(std::abs(total - 1.0) <= kProbabilityTolerance,
             "marginalize: input sums to ", total, ", not 1");
  std::vector<double> out(edges.cols(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[static_cast<std::size_t>(edges.ancestor(i))] += q[i];
  }
  return out;
}

Taxonomy::Taxonomy(std::vector<std::vector<std::string>> names,
                   std::vector<std::vector<LabelId>> parent_maps)
    : names_(std::move(names)), parent_maps_(std::move(parent_maps)) {
  LECO_CHECK(!names_.empty(), "taxonomy needs at least one level");
  LECO_CHECK(parent_maps_.size() + 1 == names_.size(), "taxonomy has ", names_.size(),
             " levels but ", parent_maps_.size(), " parent maps");
  LECO_CHECK(!names_[0].empty(), "taxonomy level 0 is empty");
  for (std::size_t t = 1; t < names_.size(); ++t) {
    const auto& map = parent_maps_[t - 1];
    LECO_CHECK(map.size() == names_[t].size(), "level ", t, " has ", names_[t].size(),
               " names but ", map.size(), " parents");
    LECO_CHECK(names_[t].size() > names_[t - 1].size(), "level sizes must strictly increase: |Y^",
               t - 1, "|=", names_[t - 1].size(), ", |Y^", t, "|=", names_[t].size());
    std::vector<int> child_count(names_[t - 1].size(), 0);
    for (std::size_t i = 0; i < map.size(); ++i) {
      LECO_CHECK(map[i] >= 0 && static_cast<std::size_t>(map[i]) < names_[t - 1].size(),
                 "label ", i, " at level ", t, " has invalid parent ", map[i]);
      ++child_count[static_cast<std::size_t>(map[i])];
    }
    for (std::size_t j = 0; j < child_count.size(); ++j) {
      LECO_CHECK(child_count[j] > 0, "label ", j, " at level ", t - 1, " has no child at level ",
                 t);
    }
  }
}

Taxonomy Taxonomy::FromParentMaps(std::size_t root_size,
                                  std::vector<std::vector<LabelId>> parent_maps) {
  std::vector<std::vector<std::string>> names(parent_maps.size() + 1);
  auto fill = [&](std::size_t level, std::size_t n) {
    names[level].reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      names[level].push_back("L" + std::to_string(level) + "_" + std::to_string(i));
    }
  };
  fill(0, root_size);
  for (std::size_t t = 0; t < parent_maps.size(); ++t) fill(t + 1, parent_maps[t].size());
  return Taxonomy(std::move(names), std::move(parent_maps));
}

Taxonomy Taxonomy::Balanced(std::size_t roots, std::span<const std::size_t> branching) {
  std::vector<std::vector<LabelId>> maps;
  std::size_t size = roots;
  for (std::size_t b : branching) {
    LECO_CHECK(b >= 2, "balanced taxonomy branching must be >= 2, got ", b);
    std::vector<LabelId> map(size * b);
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<LabelId>(i / b);
    size *= b;
    maps.push_back(std::move(map));
  }
  return FromParentMaps(roots, std::move(maps));
}

Taxonomy Taxonomy::Random(std::span<const std::size_t> level_sizes, std::mt19937_64& rng) {
  LECO_CHECK(!level_sizes.empty(), "random taxonomy needs at least one level");
  std::vector<std::vector<LabelId>> maps;
  for (std::size_t t = 1; t < level_sizes.size(); ++t) {
    const std::size_t coarse = level_sizes[t - 1];
    const std::size_t fine = level_sizes[t];
    LECO_CHECK(fine > coarse, "random taxonomy level sizes must strictly increase");
    // One guaranteed child per coarse class, the rest assigned uniformly,
    // then shuffled so fine ids are not ordered by parent.
    std::vector<LabelId> map(fine);
    for (std::size_t i = 0; i < coarse; ++i) map[i] = static_cast<LabelId>(i);
    std::uniform_int_distribution<std::size_t> pick(0, coarse - 1);
    for (std::size_t i = coarse; i < fine; ++i) map[i] = static_cast<LabelId>(pick(rng));
    std::shuffle(map.begin(), map.end(), rng);
    maps.push_back(std::move(map));
  }
  return FromParentMaps(level_sizes[0], std::move(maps));
}

void Taxonomy::CheckLevel(std::size_t level) const {
  LECO_CHECK(level < names_.size(), "level ", level, " out of range (taxonomy has ",
             names_.size(), " levels)");
}

void Taxonomy::CheckLabel(std::size_t level, LabelId label) const {
  CheckLevel(level);
  LECO_CHECK(label >= 0 && static_cast<std::size_t>(label) < names_[level].size(), "label ",
             label, " invalid at level ", level, " (size ", names_[level].size(), ")");
}

std::size_t Taxonomy::level_size(std::size_t level) const {
  CheckLevel(level);
  return names_[level].size();
}

std::vector<std::size_t> Taxonomy::level_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& n : names_) sizes.push_back(n.size());
  return sizes;
}

const std::string& Taxonomy::name(std::size_t level, LabelId label) const {
  CheckLabel(level, label);
  return names_[level][static_cast<std::size_t>(label)];
}

LabelId Taxonomy::parent(std::size_t level, LabelId label) const {
  CheckLabel(level, label);
  LECO_CHECK(level > 0, "level 0 labels have no parent");
  return parent_maps_[level - 1][static_cast<std::size_t>(label)];
}

std::span<const LabelId> Taxonomy::parent_map(std::size_t level) const {
  CheckLevel(level);
  LECO_CHECK(level > 0, "level 0 has no parent map");
  return parent_maps_[level - 1];
}

std::vector<LabelId> Taxonomy::children(std::size_t level, LabelId label) const {
  CheckLabel(level, label);
  std::vector<LabelId> out;
  if (level + 1 >= names_.size()) return out;
  const auto& map = parent_maps_[level];
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] == label) out.push_back(static_cast<LabelId>(i));
  }
  return out;
}

LabelId Taxonomy::Coarsen(LabelId label, std::size_t level, std::size_t target_level) const {
  CheckLabel(level, label);
  CheckLevel(target_level);
  LECO_CHECK(target_level < level, "coarsening requires a strictly coarser level (got ",
             target_level, " from ", level, ")");
  for (std::size_t t = level; t > target_level; --t) {
    label = parent_maps_[t - 1][static_cast<std::size_t>(label)];
  }
  return label;
}

EdgeMatrix Taxonomy::BuildEdgeMatrix(std::size_t fine_level, std::size_t coarse_level) const {
  CheckLevel(fine_level);
  CheckLevel(coarse_level);
  LECO_CHECK(coarse_level < fine_level, "edge matrix requires coarse level < fine level (got ",
             fine_level, " -> ", coarse_level, ")");
  EdgeMatrix edges(names_[fine_level - 1].size(), parent_maps_[fine_level - 1]);
  for (std::size_t t = fine_level - 1; t > coarse_level; --t) {
    edges = Compose(edges, EdgeMatrix(names_[t - 1].size(), parent_maps_[t - 1]));
  }
  return edges;
}

Taxonomy ReadTaxonomy(std::istream& in) {
  struct Record {
    std::string name;
    LabelId parent;
  };
  std::map<std::size_t, std::map<LabelId, Record>> levels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    long long level = 0;
    LabelId id = 0, parent = 0;
    std::string name;
    if (!(is >> level >> id >> name >> parent)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      internal::Fail("taxonomy line ", line_no, ": expected `<level> <id> <name> <parent>`");
    }
    LECO_CHECK(level >= 0 && id >= 0, "taxonomy line ", line_no, ": negative level or id");
    auto& lvl = levels[static_cast<std::size_t>(level)];
    LECO_CHECK(!lvl.contains(id), "taxonomy line ", line_no, ": duplicate label ", id,
               " at level ", level);
    lvl[id] = {name, parent};
  }
  LECO_CHECK(!levels.empty(), "taxonomy file has no records");
  std::vector<std::vector<std::string>> names(levels.size());
  std::vector<std::vector<LabelId>> parents(levels.size() - 1);
  for (std::size_t t = 0; t < levels.size(); ++t) {
    LECO_CHECK(levels.contains(t), "taxonomy file is missing level ", t);
    const auto& lvl = levels.at(t);
    LabelId expected = 0;
    for (const auto& [id, rec] : lvl) {
      LECO_CHECK(id == expected, "taxonomy level ", t, " ids must be dense from 0; missing ",
                 expected);
      ++expected;
      names[t].push_back(rec.name);
      if (t == 0) {
        LECO_CHECK(rec.parent == -1, "level 0 label ", id, " must have parent -1");
      } else {
        parents[t - 1].push_back(rec.parent);
      }
    }
  }
  return Taxonomy(std::move(names), std::move(parents));
}

Taxonomy ReadTaxonomyFile(const std::string& path) {
  std::ifstream in(path);
  LECO_CHECK(in.good(), "cannot open taxonomy file ", path);
  return ReadTaxonomy(in);
}

void WriteTaxonomyRecords(std::ostream& out,
                          const std::vector<std::vector<std::string>>& names,
                          const std::vector<std::vector<LabelId>>& parent_maps) {
  for (std::size_t t = 0; t < names.size(); ++t) {
    for (std::size_t i = 0; i < names[t].size(); ++i) {
      const LabelId parent = t == 0 ? -1 : parent_maps[t - 1][i];
      out << t << ' ' << i << ' ' << names[t][i] << ' ' << parent << '\n';
    }
  }
}

void WriteTaxonomy(std::ostream& out, const Taxonomy& taxonomy) {
  std::vector<std::vector<std::string>> names(taxonomy.num_levels());
  std::vector<std::vector<LabelId>> maps;
  for (std::size_t t = 0; t < taxonomy.num_levels(); ++t) {
    for (std::size_t i = 0; i < taxonomy.level_size(t); ++i) {
      names[t].push_back(taxonomy.name(t, static_cast<LabelId>(i)));
    }
    if (t > 0) {
      auto map = taxonomy.parent_map(t);
      maps.emplace_back(map.begin(), map.end());
    }
  }
  WriteTaxonomyRecords(out, names, maps);
}

}  // namespace leco
