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

#ifndef LECO_METRICS_HPP_
#define LECO_METRICS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "leco/model.hpp"
#include "leco/ontology.hpp"
#include "leco/synthdata.hpp"

namespace leco {

struct ClassAccuracy {
  // Unweighted mean over classes present in the truths.
  double macc = 0.0;
  // Per-class accuracy; NaN for classes absent from the truths.
  std::vector<double> per_class;
  std::vector<std::size_t> absent_classes;
};

ClassAccuracy MeanClassAccuracy(std::span<const LabelId> predictions,
                                std::span<const LabelId> truths, std::size_t num_classes);

// Argmax predictions at `level` from the model's finest head. Below the finest
// level the probabilities are first marginalized through E_{finest -> level}.
std::vector<LabelId> PredictAtLevel(const Model& model, std::span<const LabeledSample> samples,
                                    const Taxonomy& taxonomy, std::size_t level, bool use_ema);

// mAcc at `level`; truths are the samples' lineage labels at that level.
ClassAccuracy EvaluateAtLevel(const Model& model, std::span<const LabeledSample> samples,
                              const Taxonomy& taxonomy, std::size_t level, bool use_ema = true);

// Same, for a subset given by indices into `samples`.
ClassAccuracy EvaluateAtLevel(const Model& model, const std::vector<LabeledSample>& samples,
                              std::span<const std::size_t> indices, const Taxonomy& taxonomy,
                              std::size_t level, bool use_ema = true);

}  // namespace leco

#endif  // LECO_METRICS_HPP_
