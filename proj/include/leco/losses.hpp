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

#ifndef LECO_LOSSES_HPP_
#define LECO_LOSSES_HPP_

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "leco/model.hpp"
#include "leco/ontology.hpp"
#include "leco/synthdata.hpp"

namespace leco {

// Probabilities are clamped below at this value before taking logs.
inline constexpr double kLogClamp = 1e-12;

// Edge matrices between every pair of levels, plus identity links on the
// diagonal so that "coarsen to the same level" is a no-op.
class LevelLinks {
 public:
  static LevelLinks FromTaxonomy(const Taxonomy& taxonomy);
  // Two levels joined by an explicit edge matrix (level 1 -> level 0).
  static LevelLinks FromEdges(const EdgeMatrix& fine_to_coarse);

  std::size_t num_levels() const { return sizes_.size(); }
  std::size_t level_size(std::size_t level) const { return sizes_.at(level); }
  // E_{fine -> coarse}; coarse <= fine.
  const EdgeMatrix& edges(std::size_t fine, std::size_t coarse) const;
  LabelId Coarsen(LabelId label, std::size_t level, std::size_t target_level) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<EdgeMatrix>> edges_;  // [fine][coarse]
};

// Samples fed to the losses, one per column of `inputs`.
struct Batch {
  Eigen::MatrixXd inputs;
  std::vector<LabelId> labels;            // label at labels_level[i]
  std::vector<std::size_t> label_levels;  // finest visible level of each sample
  std::vector<char> masked;               // excluded from coarse supervision

  std::size_t size() const { return labels.size(); }
};

enum class SslMethod { kNone, kStHard, kStSoft, kPseudoLabel, kFixMatch };
enum class Refinement { kNone, kFilter, kCondition };

const char* ToString(SslMethod m);
const char* ToString(Refinement r);
SslMethod ParseSslMethod(const std::string& s);
Refinement ParseRefinement(const std::string& s);

// Which loss terms are enabled. Every enabled term has unit weight.
struct LossSpec {
  bool use_base = true;
  SslMethod ssl = SslMethod::kNone;
  Refinement refinement = Refinement::kNone;
  bool use_joint = false;
  bool use_lpl = false;
  // Whether the coarse-supervision terms also see the fine-labeled batch.
  bool apply_coarse_on_new = true;
  double pl_threshold = 0.95;
  // FixMatch target: hard argmax of the weak view (default) or the weak-view
  // probability vector itself.
  bool fixmatch_soft_target = false;

  bool needs_teacher() const { return ssl == SslMethod::kStHard || ssl == SslMethod::kStSoft; }
  bool uses_old_batch() const { return ssl != SslMethod::kNone || use_joint || use_lpl; }
  void Validate() const;
  // Short stable name, e.g. "base+lpl+ST-Hard/Cond".
  std::string Name() const;
};

struct CrossEntropyResult {
  double loss = 0.0;
  Eigen::VectorXd logit_grad;  // q - target
};

// -sum_c target[c] log max(q[c], 1e-12), and its gradient w.r.t. the softmax
// logits that produced q.
CrossEntropyResult CrossEntropy(const Eigen::VectorXd& q, const Eigen::VectorXd& target);

// Index of the largest entry; ties go to the smallest index.
LabelId ArgMax(const Eigen::Ref<const Eigen::VectorXd>& v);
Eigen::VectorXd OneHot(std::size_t size, LabelId label);

enum class PseudoLabelSource { kHard, kSoft, kWeakAug };

struct PseudoLabel {
  Eigen::VectorXd target;
  bool accepted = false;
  PseudoLabelSource source = PseudoLabelSource::kHard;
};

enum class StMode { kHard, kSoft };

// Teacher pseudo-label: one-hot argmax (hard) or the full vector (soft). Always
// accepted.
PseudoLabel PseudoLabelSelfTraining(const Eigen::VectorXd& teacher_q, StMode mode);
PseudoLabel PseudoLabelSelfTraining(const Model& teacher, const Eigen::VectorXd& strong_view,
                                    std::size_t level, StMode mode);

// Accepted iff max q > threshold; target is the one-hot argmax.
PseudoLabel PseudoLabelPl(const Eigen::VectorXd& q, double threshold);
PseudoLabel PseudoLabelPl(const Model& model, const Eigen::VectorXd& strong_view,
                          std::size_t level, double threshold);

// Gate on the weak view; the loss is then taken on the strong view only.
PseudoLabel PseudoLabelFixMatch(const Eigen::VectorXd& weak_q, double threshold,
                                bool soft_target = false);
// Draws the weak and strong views of x and labels from the weak one.
std::pair<PseudoLabel, Eigen::VectorXd> PseudoLabelFixMatch(const Model& model,
                                                            const Eigen::VectorXd& x,
                                                            std::size_t level, double threshold,
                                                            const AugmentParams& augment,
                                                            std::mt19937_64& rng);

// Rejects the pseudo-label when its argmax class is not a descendant of
// `coarse_label` under `edges`.
PseudoLabel RefineFilter(PseudoLabel p, LabelId coarse_label, const EdgeMatrix& edges);
// q'[c] = q[c] * E[c, coarse_label], renormalized. nullopt when no descendant
// carries probability mass.
std::optional<Eigen::VectorXd> RefineCondition(const Eigen::VectorXd& q, LabelId coarse_label,
                                               const EdgeMatrix& edges);

struct LossAndGrad {
  double loss = 0.0;
  ParameterSet grads;
};

// Cross-entropy of the head at `level` against one-hot labels of `batch`
// (all labels must be at `level`), averaged over the batch.
LossAndGrad LossBase(const ParameterSet& params, const Batch& batch, std::size_t level);

// Joint training: CE of every old head t' < level against the sample's
// (inferred) level-t' label. Masked samples are skipped. Each batch term is
// averaged over its batch size; the fine batch term is dropped when
// apply_coarse_on_new is false.
LossAndGrad LossJoint(const ParameterSet& params, const Batch& batch_new, const Batch& batch_old,
                      const LevelLinks& links, std::size_t level, bool apply_coarse_on_new);

// Partial-label loss: CE of the fine head's probabilities marginalized to
// each coarser level t' < level against the level-t' label.
LossAndGrad LossLpl(const ParameterSet& params, const Batch& batch_new, const Batch& batch_old,
                    const LevelLinks& links, std::size_t level, bool apply_coarse_on_new);

struct LossTerms {
  double base = 0.0;
  double ssl = 0.0;
  double joint = 0.0;
  double lpl = 0.0;

  double total() const { return base + ssl + joint + lpl; }
};

struct SslStats {
  std::size_t candidates = 0;
  std::size_t accepted = 0;
  std::size_t condition_skipped = 0;
};

struct LossResult {
  double value = 0.0;
  LossTerms terms;
  ParameterSet grads;
  SslStats ssl;
};

struct LossOptions {
  AugmentParams augment;
  // Strong/weak views are drawn from rng; off means raw inputs for every view.
  bool augment_inputs = true;
  bool through_extractor = true;
};

// Sum of the enabled terms on strongly augmented views of both batches.
// `teacher` is required iff spec.needs_teacher(). Three seeds are always drawn
// from `rng` (fine view, old view, weak view) so the random stream does not
// depend on which terms are enabled.
LossResult TotalLoss(const LossSpec& spec, const ParameterSet& student,
                     const ParameterSet* teacher, const Batch& batch_new, const Batch& batch_old,
                     const LevelLinks& links, std::size_t level, const LossOptions& options,
                     std::mt19937_64& rng);

}  // namespace leco

#endif  // LECO_LOSSES_HPP_
