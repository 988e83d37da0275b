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

#include "leco/trainer.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "leco/error.hpp"
#include "leco/metrics.hpp"
#include "leco/text_util.hpp"

namespace leco {

void TrainConfig::Validate() const {
  LECO_CHECK(total_iterations > 0, "train config: total_iterations must be positive");
  LECO_CHECK(eval_every > 0, "train config: eval_every must be positive");
  LECO_CHECK(batch_new > 0 || batch_old > 0, "train config: K and M cannot both be zero");
  LECO_CHECK(base_lr >= 0.0, "train config: negative learning rate");
  LECO_CHECK(momentum >= 0.0 && momentum < 1.0, "train config: momentum outside [0, 1)");
  LECO_CHECK(weight_decay >= 0.0, "train config: negative weight decay");
  LECO_CHECK(ema_decay >= 0.0 && ema_decay <= 1.0, "train config: ema_decay outside [0, 1]");
}

double CosineLr(std::size_t k, std::size_t total, double eta) {
  LECO_CHECK(total > 0, "cosine_lr: total iterations must be positive");
  LECO_CHECK(k <= total, "cosine_lr: iteration ", k, " beyond total ", total);
  return eta * std::cos(7.0 * std::numbers::pi * static_cast<double>(k) /
                        (16.0 * static_cast<double>(total)));
}

std::uint64_t MixSeed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix64 finalizer over the combination.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Batch MakeBatch(const TPDatasets& data, std::span<const std::size_t> indices) {
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(data.dim()), static_cast<Eigen::Index>(indices.size()));
  b.labels.reserve(indices.size());
  b.label_levels.reserve(indices.size());
  b.masked.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& s = data.samples()[indices[i]];
    LECO_CHECK(s.visible_level >= 0, "sample ", indices[i], " carries no visible label");
    const auto level = static_cast<std::size_t>(s.visible_level);
    b.inputs.col(static_cast<Eigen::Index>(i)) = s.features;
    b.labels.push_back(s.label_at(level));
    b.label_levels.push_back(level);
    b.masked.push_back(s.coarse_mismatch ? 1 : 0);
  }
  return b;
}

BatchPair ComposeBatch(const TPDatasets& data, std::size_t batch_new, std::size_t batch_old,
                       std::mt19937_64& rng) {
  LECO_CHECK(data.current_tp() >= 0, "compose_batch: no annotation has been applied");
  if (data.current_tp() == 0) batch_old = 0;
  auto draw = [&](const std::vector<std::size_t>& pool, std::size_t n, const char* what) {
    std::vector<std::size_t> idx;
    if (n == 0) return idx;
    LECO_CHECK(!pool.empty(), "compose_batch: requested ", n, " samples from an empty ", what);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    idx.reserve(n);
    for (std::size_t i = 0; i < n; ++i) idx.push_back(pool[pick(rng)]);
    return idx;
  };
  const auto fine = draw(data.train(), batch_new, "fine-labeled pool");
  const auto coarse = draw(data.coarse_pool(), batch_old, "coarse pool");
  return {MakeBatch(data, fine), MakeBatch(data, coarse)};
}

void TrainLog::WriteCsv(std::ostream& out) const {
  out << "iteration,lr,loss_total,loss_base,loss_ssl,loss_joint,loss_lpl,val_mAcc,"
         "pl_accept_rate,best_val_mAcc\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << FormatDouble(r.lr) << ',' << FormatDouble(r.loss_total) << ','
        << FormatDouble(r.loss.base) << ',' << FormatDouble(r.loss.ssl) << ','
        << FormatDouble(r.loss.joint) << ',' << FormatDouble(r.loss.lpl) << ','
        << FormatDouble(r.val_macc) << ',' << FormatDouble(r.pl_accept_rate) << ','
        << FormatDouble(r.best_val_macc) << '\n';
  }
}

TrainResult TrainTp(Model model, const TPDatasets& data, const LossSpec& spec,
                    const TrainConfig& cfg, const Taxonomy& taxonomy, const Model* teacher) {
  cfg.Validate();
  spec.Validate();
  LECO_CHECK(data.current_tp() >= 0, "train_tp: no annotation has been applied");
  const auto level = static_cast<std::size_t>(data.current_tp());
  LECO_CHECK(model.num_heads() == level + 1, "train_tp: model has ", model.num_heads(),
             " heads, TP", level, " needs ", level + 1);
  for (std::size_t t = 0; t <= level; ++t) {
    LECO_CHECK(model.head_size(t) == taxonomy.level_size(t), "train_tp: head ", t, " has ",
               model.head_size(t), " outputs, taxonomy level has ", taxonomy.level_size(t));
  }
  LECO_CHECK(!data.val().empty(), "train_tp: empty validation split");

  const LevelLinks links = LevelLinks::FromTaxonomy(taxonomy);
  const bool uses_old = spec.uses_old_batch() && level > 0;
  const std::size_t k = uses_old || !cfg.merge_unused_old_batch ? cfg.batch_new
                                                                : cfg.batch_new + cfg.batch_old;
  const std::size_t m = uses_old ? cfg.batch_old : 0;
  LossOptions options;
  options.augment = cfg.augment;
  options.through_extractor = !model.frozen_extractor();
  const TrainableMask mask = DefaultTrainableMask(model, spec.use_joint);
  const ParameterSet* teacher_params = teacher ? &teacher->params() : nullptr;
  const ParameterSet initial_extractor_probe =
      cfg.debug_checks ? model.params() : ParameterSet{};

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  result.best_val_macc = -1.0;

  LossTerms interval;
  SslStats interval_ssl;
  std::size_t interval_steps = 0;
  for (std::size_t it = 0; it < cfg.total_iterations; ++it) {
    const double lr = CosineLr(it, cfg.total_iterations, cfg.base_lr);
    auto batches = ComposeBatch(data, k, m, rng);
    auto loss = TotalLoss(spec, model.params(), teacher_params, batches.fine, batches.coarse, links,
                          level, options, rng);
    LECO_CHECK(std::isfinite(loss.value), "train_tp: non-finite loss at iteration ", it,
               " (lr=", lr, ", base=", loss.terms.base, ", ssl=", loss.terms.ssl,
               ", joint=", loss.terms.joint, ", lpl=", loss.terms.lpl, ")");
    SgdStep(model, loss.grads, lr, cfg.momentum, cfg.weight_decay, mask);
    EmaUpdate(model, cfg.ema_decay);
    if (cfg.debug_checks && model.frozen_extractor()) {
      ParameterSet probe = model.params();
      probe.heads = initial_extractor_probe.heads;
      LECO_CHECK(probe == initial_extractor_probe, "frozen extractor changed at iteration ", it);
    }

    interval.base += loss.terms.base;
    interval.ssl += loss.terms.ssl;
    interval.joint += loss.terms.joint;
    interval.lpl += loss.terms.lpl;
    interval_ssl.candidates += loss.ssl.candidates;
    interval_ssl.accepted += loss.ssl.accepted;
    interval_ssl.condition_skipped += loss.ssl.condition_skipped;
    ++interval_steps;

    const bool last = it + 1 == cfg.total_iterations;
    if ((it + 1) % cfg.eval_every != 0 && !last) continue;
    const double val =
        EvaluateAtLevel(model, data.samples(), data.val(), taxonomy, level, cfg.eval_with_ema).macc;
    TrainLogRow row;
    row.iteration = it + 1;
    row.lr = lr;
    const double denom = static_cast<double>(interval_steps);
    row.loss = {interval.base / denom, interval.ssl / denom, interval.joint / denom,
                interval.lpl / denom};
    row.loss_total = row.loss.total();
    row.val_macc = val;
    row.pl_accept_rate = interval_ssl.candidates == 0
                             ? 0.0
                             : static_cast<double>(interval_ssl.accepted) /
                                   static_cast<double>(interval_ssl.candidates);
    if (val > result.best_val_macc) {
      result.best_val_macc = val;
      result.best_iteration = it + 1;
      result.best = model;
      if (cfg.eval_with_ema) result.best.CollapseToEma();
      result.best.ResetOptimizerState();
    }
    row.best_val_macc = result.best_val_macc;
    result.log.rows.push_back(row);
    result.final_val_macc = val;
    result.ssl.candidates += interval_ssl.candidates;
    result.ssl.accepted += interval_ssl.accepted;
    result.ssl.condition_skipped += interval_ssl.condition_skipped;
    interval = {};
    interval_ssl = {};
    interval_steps = 0;
  }
  result.final_model = std::move(model);
  return result;
}

TeacherStudentResult TrainTeacherStudent(const TPDatasets& data, const LossSpec& spec,
                                         const TrainConfig& cfg, const Model& prev_model,
                                         const Taxonomy& taxonomy) {
  LECO_CHECK(spec.needs_teacher(), "teacher-student training needs ST-Hard or ST-Soft");
  const auto level = static_cast<std::size_t>(data.current_tp());
  ModelShape shape = prev_model.shape();
  shape.head_sizes = taxonomy.level_sizes();
  shape.head_sizes.resize(level + 1);

  TeacherStudentResult out;
  LossSpec teacher_spec;
  TrainConfig teacher_cfg = cfg;
  teacher_cfg.seed = MixSeed(cfg.seed, "teacher");
  std::mt19937_64 teacher_init(MixSeed(cfg.seed, "teacher-init"));
  out.teacher = TrainTp(InitForTp(&prev_model, InitStrategy::kFinetunePrev, shape, teacher_init),
                        data, teacher_spec, teacher_cfg, taxonomy);

  TrainConfig student_cfg = cfg;
  student_cfg.seed = MixSeed(cfg.seed, "student");
  std::mt19937_64 student_init(MixSeed(cfg.seed, "student-init"));
  out.student = TrainTp(InitForTp(&prev_model, InitStrategy::kFinetunePrev, shape, student_init),
                        data, spec, student_cfg, taxonomy, &out.teacher.best);
  return out;
}

}  // namespace leco
