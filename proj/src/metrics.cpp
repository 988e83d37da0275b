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

#include "leco/metrics.hpp"

#include <limits>

#include "leco/error.hpp"
#include "leco/losses.hpp"

namespace leco {

ClassAccuracy MeanClassAccuracy(std::span<const LabelId> predictions,
                                std::span<const LabelId> truths, std::size_t num_classes) {
  LECO_CHECK(!truths.empty(), "mean_class_accuracy: empty input");
  LECO_CHECK(predictions.size() == truths.size(), "mean_class_accuracy: ", predictions.size(),
             " predictions for ", truths.size(), " truths");
  std::vector<std::size_t> total(num_classes, 0), correct(num_classes, 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const LabelId y = truths[i];
    LECO_CHECK(y >= 0 && static_cast<std::size_t>(y) < num_classes, "mean_class_accuracy: truth ",
               y, " outside [0, ", num_classes, ")");
    ++total[static_cast<std::size_t>(y)];
    if (predictions[i] == y) ++correct[static_cast<std::size_t>(y)];
  }
  ClassAccuracy out;
  out.per_class.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] == 0) {
      out.absent_classes.push_back(c);
      continue;
    }
    out.per_class[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    sum += out.per_class[c];
    ++present;
  }
  out.macc = sum / static_cast<double>(present);
  return out;
}

namespace {

constexpr Eigen::Index kEvalChunk = 512;

template <typename Get>
std::vector<LabelId> Predict(const Model& model, std::size_t n, Get get, const Taxonomy& taxonomy,
                             std::size_t level, bool use_ema) {
  const std::size_t finest = model.num_heads() - 1;
  LECO_CHECK(level <= finest, "cannot evaluate level ", level, ": model's finest head is ",
             finest);
  LECO_CHECK(taxonomy.level_size(finest) == model.head_size(finest),
             "model's finest head does not match the taxonomy");
  const EdgeMatrix edges =
      level == finest ? EdgeMatrix::Identity(model.head_size(finest))
                      : taxonomy.BuildEdgeMatrix(finest, level);
  std::vector<LabelId> preds(n);
  const auto dim = static_cast<Eigen::Index>(model.input_dim());
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const auto count = std::min<std::size_t>(kEvalChunk, n - start);
    Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) x.col(static_cast<Eigen::Index>(i)) = get(start + i).features;
    const Eigen::MatrixXd probs = model.PredictProbs(x, finest, use_ema);
    Eigen::VectorXd coarse(static_cast<Eigen::Index>(edges.cols()));
    for (std::size_t i = 0; i < count; ++i) {
      coarse.setZero();
      for (Eigen::Index c = 0; c < probs.rows(); ++c) {
        coarse[edges.ancestor(static_cast<std::size_t>(c))] += probs(c, static_cast<Eigen::Index>(i));
      }
      preds[start + i] = ArgMax(coarse);
    }
  }
  return preds;
}

}  // namespace

std::vector<LabelId> PredictAtLevel(const Model& model, std::span<const LabeledSample> samples,
                                    const Taxonomy& taxonomy, std::size_t level, bool use_ema) {
  return Predict(
      model, samples.size(), [&](std::size_t i) -> const LabeledSample& { return samples[i]; },
      taxonomy, level, use_ema);
}

ClassAccuracy EvaluateAtLevel(const Model& model, std::span<const LabeledSample> samples,
                              const Taxonomy& taxonomy, std::size_t level, bool use_ema) {
  const auto preds = PredictAtLevel(model, samples, taxonomy, level, use_ema);
  std::vector<LabelId> truths(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) truths[i] = samples[i].label_at(level);
  return MeanClassAccuracy(preds, truths, taxonomy.level_size(level));
}

ClassAccuracy EvaluateAtLevel(const Model& model, const std::vector<LabeledSample>& samples,
                              std::span<const std::size_t> indices, const Taxonomy& taxonomy,
                              std::size_t level, bool use_ema) {
  const auto preds = Predict(
      model, indices.size(),
      [&](std::size_t i) -> const LabeledSample& { return samples[indices[i]]; }, taxonomy, level,
      use_ema);
  std::vector<LabelId> truths(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) truths[i] = samples[indices[i]].label_at(level);
  return MeanClassAccuracy(preds, truths, taxonomy.level_size(level));
}

}  // namespace leco
