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

#ifndef LECO_TRAINER_HPP_
#define LECO_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string_view>
#include <vector>

#include "leco/losses.hpp"
#include "leco/model.hpp"
#include "leco/ontology.hpp"
#include "leco/synthdata.hpp"

namespace leco {

struct TrainConfig {
  std::size_t total_iterations = 5000;
  std::size_t eval_every = 250;
  std::size_t batch_new = 64;  // K, drawn from S^t
  std::size_t batch_old = 64;  // M, drawn from S^{1:t-1}
  // When the loss ignores the old batch, its share goes to the fine batch
  // (one batch of K + M).
  bool merge_unused_old_batch = true;
  double base_lr = 0.1;
  std::vector<double> lr_grid = {0.3, 0.1, 0.03};
  std::vector<double> weight_decay_grid = {1e-3, 1e-4};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double ema_decay = 0.999;
  std::uint64_t seed = 0;
  bool eval_with_ema = true;
  AugmentParams augment;
  // Re-checks the frozen extractor after every step.
  bool debug_checks = false;

  void Validate() const;
};

// eta * cos(7 pi k / (16 K)) for 0 <= k <= K.
double CosineLr(std::size_t k, std::size_t total, double eta);

// Stable per-purpose seed derived from a base seed and a tag.
std::uint64_t MixSeed(std::uint64_t base, std::string_view tag);

struct BatchPair {
  Batch fine;    // B_K, labeled at the current level
  Batch coarse;  // B^_M, labeled at each sample's visible level
};

Batch MakeBatch(const TPDatasets& data, std::span<const std::size_t> indices);

// Uniform with-replacement draws. At TP0 the old batch is always empty.
BatchPair ComposeBatch(const TPDatasets& data, std::size_t batch_new, std::size_t batch_old,
                       std::mt19937_64& rng);

struct TrainLogRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  LossTerms loss;  // averaged since the previous row
  double loss_total = 0.0;
  double val_macc = 0.0;
  double pl_accept_rate = 0.0;
  double best_val_macc = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  void WriteCsv(std::ostream& out) const;
};

struct TrainResult {
  Model best;         // EMA snapshot with the best validation mAcc
  Model final_model;  // state after the last iteration
  TrainLog log;
  double best_val_macc = 0.0;
  double final_val_macc = 0.0;
  std::size_t best_iteration = 0;
  SslStats ssl;  // totals over the run
};

// Trains `model` on the current TP of `data` for cfg.total_iterations steps of
// total loss -> SGD -> EMA, validating every cfg.eval_every steps.
TrainResult TrainTp(Model model, const TPDatasets& data, const LossSpec& spec,
                    const TrainConfig& cfg, const Taxonomy& taxonomy,
                    const Model* teacher = nullptr);

struct TeacherStudentResult {
  TrainResult teacher;
  TrainResult student;
};

// Phase 1 trains a teacher (base loss only) from prev_model; phase 2 trains a
// student from prev_model with `spec`, labeling old data with the fixed
// teacher. Each phase gets the full iteration budget.
TeacherStudentResult TrainTeacherStudent(const TPDatasets& data, const LossSpec& spec,
                                         const TrainConfig& cfg, const Model& prev_model,
                                         const Taxonomy& taxonomy);

}  // namespace leco

#endif  // LECO_TRAINER_HPP_
