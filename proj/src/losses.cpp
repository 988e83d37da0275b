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

#include "leco/losses.hpp"

#include <algorithm>
#include <cmath>

#include "leco/error.hpp"

namespace leco {

LevelLinks LevelLinks::FromTaxonomy(const Taxonomy& taxonomy) {
  LevelLinks links;
  links.sizes_ = taxonomy.level_sizes();
  links.edges_.resize(taxonomy.num_levels());
  for (std::size_t fine = 0; fine < taxonomy.num_levels(); ++fine) {
    for (std::size_t coarse = 0; coarse < fine; ++coarse) {
      links.edges_[fine].push_back(taxonomy.BuildEdgeMatrix(fine, coarse));
    }
    links.edges_[fine].push_back(EdgeMatrix::Identity(links.sizes_[fine]));
  }
  return links;
}

LevelLinks LevelLinks::FromEdges(const EdgeMatrix& fine_to_coarse) {
  LevelLinks links;
  links.sizes_ = {fine_to_coarse.cols(), fine_to_coarse.rows()};
  links.edges_.resize(2);
  links.edges_[0].push_back(EdgeMatrix::Identity(fine_to_coarse.cols()));
  links.edges_[1].push_back(fine_to_coarse);
  links.edges_[1].push_back(EdgeMatrix::Identity(fine_to_coarse.rows()));
  return links;
}

const EdgeMatrix& LevelLinks::edges(std::size_t fine, std::size_t coarse) const {
  LECO_CHECK(fine < edges_.size() && coarse <= fine, "no edge matrix for levels ", fine, " -> ",
             coarse);
  return edges_[fine][coarse];
}

LabelId LevelLinks::Coarsen(LabelId label, std::size_t level, std::size_t target_level) const {
  const auto& e = edges(level, target_level);
  LECO_CHECK(label >= 0 && static_cast<std::size_t>(label) < e.rows(), "label ", label,
             " invalid at level ", level);
  return e.ancestor(static_cast<std::size_t>(label));
}

const char* ToString(SslMethod m) {
  switch (m) {
    case SslMethod::kNone:
      return "None";
    case SslMethod::kStHard:
      return "ST-Hard";
    case SslMethod::kStSoft:
      return "ST-Soft";
    case SslMethod::kPseudoLabel:
      return "PL";
    case SslMethod::kFixMatch:
      return "FixMatch";
  }
  return "?";
}

const char* ToString(Refinement r) {
  switch (r) {
    case Refinement::kNone:
      return "None";
    case Refinement::kFilter:
      return "Filter";
    case Refinement::kCondition:
      return "Condition";
  }
  return "?";
}

SslMethod ParseSslMethod(const std::string& s) {
  if (s == "None" || s.empty()) return SslMethod::kNone;
  if (s == "ST-Hard") return SslMethod::kStHard;
  if (s == "ST-Soft") return SslMethod::kStSoft;
  if (s == "PL") return SslMethod::kPseudoLabel;
  if (s == "FixMatch") return SslMethod::kFixMatch;
  internal::Fail("unknown SSL method '", s, "'");
}

Refinement ParseRefinement(const std::string& s) {
  if (s == "None" || s.empty()) return Refinement::kNone;
  if (s == "Filter") return Refinement::kFilter;
  if (s == "Condition") return Refinement::kCondition;
  internal::Fail("unknown refinement '", s, "'");
}

void LossSpec::Validate() const {
  LECO_CHECK(refinement == Refinement::kNone || ssl != SslMethod::kNone,
             "loss spec: refinement ", ToString(refinement), " requires an SSL method");
  LECO_CHECK(pl_threshold >= 0.0 && pl_threshold < 1.0, "loss spec: pl_threshold ",
             pl_threshold, " outside [0, 1)");
  LECO_CHECK(use_base || ssl != SslMethod::kNone || use_joint || use_lpl,
             "loss spec enables no term");
}

std::string LossSpec::Name() const {
  std::string name = use_base ? "base" : "";
  auto add = [&](const std::string& part) {
    if (!name.empty()) name += '+';
    name += part;
  };
  if (use_joint) add("joint");
  if (use_lpl) add("lpl");
  if (ssl != SslMethod::kNone) {
    std::string s = ToString(ssl);
    if (refinement == Refinement::kFilter) s += "/Filter";
    if (refinement == Refinement::kCondition) s += "/Cond";
    add(s);
  }
  return name;
}

CrossEntropyResult CrossEntropy(const Eigen::VectorXd& q, const Eigen::VectorXd& target) {
  LECO_CHECK(q.size() == target.size(), "cross_entropy: q has ", q.size(), " entries, target ",
             target.size());
  CrossEntropyResult r;
  for (Eigen::Index c = 0; c < q.size(); ++c) {
    if (target[c] != 0.0) r.loss -= target[c] * std::log(std::max(q[c], kLogClamp));
  }
  r.logit_grad = q - target;
  return r;
}

LabelId ArgMax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<LabelId>(best);
}

Eigen::VectorXd OneHot(std::size_t size, LabelId label) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
  v[label] = 1.0;
  return v;
}

PseudoLabel PseudoLabelSelfTraining(const Eigen::VectorXd& teacher_q, StMode mode) {
  if (mode == StMode::kSoft) return {teacher_q, true, PseudoLabelSource::kSoft};
  return {OneHot(static_cast<std::size_t>(teacher_q.size()), ArgMax(teacher_q)), true,
          PseudoLabelSource::kHard};
}

PseudoLabel PseudoLabelSelfTraining(const Model& teacher, const Eigen::VectorXd& strong_view,
                                    std::size_t level, StMode mode) {
  return PseudoLabelSelfTraining(Eigen::VectorXd(teacher.Forward(strong_view, level).probs),
                                 mode);
}

PseudoLabel PseudoLabelPl(const Eigen::VectorXd& q, double threshold) {
  return {OneHot(static_cast<std::size_t>(q.size()), ArgMax(q)), q.maxCoeff() > threshold,
          PseudoLabelSource::kHard};
}

PseudoLabel PseudoLabelPl(const Model& model, const Eigen::VectorXd& strong_view,
                          std::size_t level, double threshold) {
  return PseudoLabelPl(Eigen::VectorXd(model.Forward(strong_view, level).probs), threshold);
}

PseudoLabel PseudoLabelFixMatch(const Eigen::VectorXd& weak_q, double threshold,
                                bool soft_target) {
  PseudoLabel p;
  p.accepted = weak_q.maxCoeff() > threshold;
  p.source = PseudoLabelSource::kWeakAug;
  p.target = soft_target ? weak_q : OneHot(static_cast<std::size_t>(weak_q.size()), ArgMax(weak_q));
  return p;
}

std::pair<PseudoLabel, Eigen::VectorXd> PseudoLabelFixMatch(const Model& model,
                                                            const Eigen::VectorXd& x,
                                                            std::size_t level, double threshold,
                                                            const AugmentParams& augment,
                                                            std::mt19937_64& rng) {
  const Eigen::VectorXd weak = Augmented(x, AugmentMode::kWeak, augment, rng);
  Eigen::VectorXd strong = Augmented(x, AugmentMode::kStrong, augment, rng);
  return {PseudoLabelFixMatch(Eigen::VectorXd(model.Forward(weak, level).probs), threshold),
          std::move(strong)};
}

PseudoLabel RefineFilter(PseudoLabel p, LabelId coarse_label, const EdgeMatrix& edges) {
  LECO_CHECK(static_cast<std::size_t>(p.target.size()) == edges.rows(),
             "refine_filter: pseudo-label has ", p.target.size(), " classes, edges have ",
             edges.rows(), " rows");
  LECO_CHECK(coarse_label >= 0 && static_cast<std::size_t>(coarse_label) < edges.cols(),
             "refine_filter: coarse label ", coarse_label, " out of range");
  if (p.accepted && edges(static_cast<std::size_t>(ArgMax(p.target)),
                          static_cast<std::size_t>(coarse_label)) == 0) {
    p.accepted = false;
  }
  return p;
}

std::optional<Eigen::VectorXd> RefineCondition(const Eigen::VectorXd& q, LabelId coarse_label,
                                               const EdgeMatrix& edges) {
  LECO_CHECK(static_cast<std::size_t>(q.size()) == edges.rows(), "refine_condition: q has ",
             q.size(), " classes, edges have ", edges.rows(), " rows");
  LECO_CHECK(coarse_label >= 0 && static_cast<std::size_t>(coarse_label) < edges.cols(),
             "refine_condition: coarse label ", coarse_label, " out of range");
  Eigen::VectorXd out(q.size());
  double total = 0.0;
  for (Eigen::Index c = 0; c < q.size(); ++c) {
    out[c] = edges.ancestor(static_cast<std::size_t>(c)) == coarse_label ? q[c] : 0.0;
    total += out[c];
  }
  if (!(total > 0.0)) return std::nullopt;
  out /= total;
  return out;
}

namespace {

std::vector<std::size_t> Range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

double AccumulateBase(ForwardPass& pass, const Batch& batch, std::size_t level) {
  const std::size_t n = batch.size();
  if (n == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  const auto& q = pass.probs[level];
  auto& g = pass.GradFor(level);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    LECO_CHECK(batch.label_levels[i] == level, "base loss: sample ", i, " is labeled at level ",
               batch.label_levels[i], ", expected ", level);
    const auto col = static_cast<Eigen::Index>(i);
    const LabelId y = batch.labels[i];
    loss -= std::log(std::max(q(y, col), kLogClamp));
    g.col(col) += scale * q.col(col);
    g(y, col) -= scale;
  }
  return loss * scale;
}

// Levels t' that receive coarse supervision from sample i.
std::size_t CoarseLevelCount(const Batch& batch, std::size_t i, std::size_t level) {
  return std::min(batch.label_levels[i] + 1, level);
}

double AccumulateJoint(ForwardPass& pass, const Batch& batch, const LevelLinks& links,
                       std::size_t level) {
  const std::size_t n = batch.size();
  if (n == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!batch.masked.empty() && batch.masked[i]) continue;
    const auto col = static_cast<Eigen::Index>(i);
    for (std::size_t t = 0; t < CoarseLevelCount(batch, i, level); ++t) {
      const LabelId y = links.Coarsen(batch.labels[i], batch.label_levels[i], t);
      LECO_CHECK(pass.probs[t].size() != 0, "joint loss: model has no head for level ", t);
      const auto& q = pass.probs[t];
      auto& g = pass.GradFor(t);
      loss -= std::log(std::max(q(y, col), kLogClamp));
      g.col(col) += scale * q.col(col);
      g(y, col) -= scale;
    }
  }
  return loss * scale;
}

double AccumulateLpl(ForwardPass& pass, const Batch& batch, const LevelLinks& links,
                     std::size_t level) {
  const std::size_t n = batch.size();
  if (n == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  const auto& q = pass.probs[level];
  auto& g = pass.GradFor(level);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!batch.masked.empty() && batch.masked[i]) continue;
    const auto col = static_cast<Eigen::Index>(i);
    for (std::size_t t = 0; t < CoarseLevelCount(batch, i, level); ++t) {
      const LabelId y = links.Coarsen(batch.labels[i], batch.label_levels[i], t);
      const auto& edges = links.edges(level, t);
      LECO_CHECK(edges.rows() == static_cast<std::size_t>(q.rows()),
                 "lpl loss: fine head has ", q.rows(), " classes, edge matrix ", edges.rows());
      double mass = 0.0;
      for (Eigen::Index c = 0; c < q.rows(); ++c) {
        if (edges.ancestor(static_cast<std::size_t>(c)) == y) mass += q(c, col);
      }
      loss -= std::log(std::max(mass, kLogClamp));
      // d/dz_c of -log(sum_{c' in y} q_c') = q_c - [c in y] q_c / mass.
      for (Eigen::Index c = 0; c < q.rows(); ++c) {
        double d = q(c, col);
        if (edges.ancestor(static_cast<std::size_t>(c)) == y && mass > 0.0) d -= q(c, col) / mass;
        g(c, col) += scale * d;
      }
    }
  }
  return loss * scale;
}

double AccumulateSsl(const LossSpec& spec, ForwardPass& pass, const Eigen::MatrixXd& source_q,
                     const Batch& batch, const LevelLinks& links, std::size_t level,
                     SslStats& stats) {
  const std::size_t n = batch.size();
  if (n == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(n);
  const auto& q = pass.probs[level];
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ++stats.candidates;
    const auto col = static_cast<Eigen::Index>(i);
    Eigen::VectorXd src = source_q.col(col);
    // Masked samples carry an unreliable coarse label, so they are never refined.
    const bool refine = spec.refinement != Refinement::kNone &&
                        !(!batch.masked.empty() && batch.masked[i]);
    const LabelId coarse = batch.labels[i];
    const std::size_t coarse_level = batch.label_levels[i];
    const EdgeMatrix* edges = refine ? &links.edges(level, coarse_level) : nullptr;
    if (refine && spec.refinement == Refinement::kCondition) {
      auto conditioned = RefineCondition(src, coarse, *edges);
      if (!conditioned) {
        ++stats.condition_skipped;
        continue;
      }
      src = std::move(*conditioned);
    }
    PseudoLabel p;
    switch (spec.ssl) {
      case SslMethod::kStHard:
        p = PseudoLabelSelfTraining(src, StMode::kHard);
        break;
      case SslMethod::kStSoft:
        p = PseudoLabelSelfTraining(src, StMode::kSoft);
        break;
      case SslMethod::kPseudoLabel:
        p = PseudoLabelPl(src, spec.pl_threshold);
        break;
      case SslMethod::kFixMatch:
        p = PseudoLabelFixMatch(src, spec.pl_threshold, spec.fixmatch_soft_target);
        break;
      case SslMethod::kNone:
        return 0.0;
    }
    if (refine && spec.refinement == Refinement::kFilter) p = RefineFilter(std::move(p), coarse, *edges);
    if (!p.accepted) continue;
    ++stats.accepted;
    const auto ce = CrossEntropy(q.col(col), p.target);
    loss += ce.loss;
    pass.GradFor(level).col(col) += scale * ce.logit_grad;
  }
  return loss * scale;
}

}  // namespace

LossAndGrad LossBase(const ParameterSet& params, const Batch& batch, std::size_t level) {
  LossAndGrad out{0.0, params.ZerosLike()};
  if (batch.size() == 0) return out;
  const std::size_t heads[] = {level};
  auto pass = RunForward(params, batch.inputs, heads);
  out.loss = AccumulateBase(pass, batch, level);
  Backward(params, pass, out.grads);
  return out;
}

LossAndGrad LossJoint(const ParameterSet& params, const Batch& batch_new, const Batch& batch_old,
                      const LevelLinks& links, std::size_t level, bool apply_coarse_on_new) {
  LossAndGrad out{0.0, params.ZerosLike()};
  LECO_CHECK(level < params.heads.size(), "joint loss: model has no head for level ", level);
  const auto heads = Range(0, level);
  if (apply_coarse_on_new && batch_new.size() > 0) {
    auto pass = RunForward(params, batch_new.inputs, heads);
    out.loss += AccumulateJoint(pass, batch_new, links, level);
    Backward(params, pass, out.grads);
  }
  if (batch_old.size() > 0) {
    auto pass = RunForward(params, batch_old.inputs, heads);
    out.loss += AccumulateJoint(pass, batch_old, links, level);
    Backward(params, pass, out.grads);
  }
  return out;
}

LossAndGrad LossLpl(const ParameterSet& params, const Batch& batch_new, const Batch& batch_old,
                    const LevelLinks& links, std::size_t level, bool apply_coarse_on_new) {
  LossAndGrad out{0.0, params.ZerosLike()};
  const std::size_t heads[] = {level};
  if (apply_coarse_on_new && batch_new.size() > 0) {
    auto pass = RunForward(params, batch_new.inputs, heads);
    out.loss += AccumulateLpl(pass, batch_new, links, level);
    Backward(params, pass, out.grads);
  }
  if (batch_old.size() > 0) {
    auto pass = RunForward(params, batch_old.inputs, heads);
    out.loss += AccumulateLpl(pass, batch_old, links, level);
    Backward(params, pass, out.grads);
  }
  return out;
}

LossResult TotalLoss(const LossSpec& spec, const ParameterSet& student,
                     const ParameterSet* teacher, const Batch& batch_new, const Batch& batch_old,
                     const LevelLinks& links, std::size_t level, const LossOptions& options,
                     std::mt19937_64& rng) {
  spec.Validate();
  LECO_CHECK(spec.needs_teacher() == (teacher != nullptr),
             spec.needs_teacher() ? "loss spec uses self-training but no teacher was given"
                                  : "a teacher was given but the loss spec does not use one");
  LECO_CHECK(level < student.heads.size(), "total loss: model has no head for level ", level);
  std::mt19937_64 rng_new(rng()), rng_old(rng()), rng_weak(rng());

  auto strong_view = [&](const Batch& b, std::mt19937_64& r) {
    Eigen::MatrixXd x = b.inputs;
    if (options.augment_inputs) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        Augment(x.col(j), AugmentMode::kStrong, options.augment, r);
      }
    }
    return x;
  };

  LossResult result;
  result.grads = student.ZerosLike();

  const bool coarse_on_new = spec.apply_coarse_on_new && (spec.use_joint || spec.use_lpl);
  if (batch_new.size() > 0 && (spec.use_base || coarse_on_new)) {
    std::vector<std::size_t> heads;
    if (spec.use_base || (spec.use_lpl && spec.apply_coarse_on_new)) heads.push_back(level);
    if (spec.use_joint && spec.apply_coarse_on_new) {
      for (std::size_t t = 0; t < level; ++t) heads.push_back(t);
    }
    auto pass = RunForward(student, strong_view(batch_new, rng_new), heads);
    if (spec.use_base) result.terms.base = AccumulateBase(pass, batch_new, level);
    if (spec.use_joint && spec.apply_coarse_on_new) {
      result.terms.joint += AccumulateJoint(pass, batch_new, links, level);
    }
    if (spec.use_lpl && spec.apply_coarse_on_new) {
      result.terms.lpl += AccumulateLpl(pass, batch_new, links, level);
    }
    Backward(student, pass, result.grads, options.through_extractor);
  }

  if (batch_old.size() > 0 && spec.uses_old_batch()) {
    std::vector<std::size_t> heads;
    if (spec.ssl != SslMethod::kNone || spec.use_lpl) heads.push_back(level);
    if (spec.use_joint) {
      for (std::size_t t = 0; t < level; ++t) heads.push_back(t);
    }
    auto pass = RunForward(student, strong_view(batch_old, rng_old), heads);
    if (spec.use_joint) result.terms.joint += AccumulateJoint(pass, batch_old, links, level);
    if (spec.use_lpl) result.terms.lpl += AccumulateLpl(pass, batch_old, links, level);
    if (spec.ssl != SslMethod::kNone) {
      const std::size_t head[] = {level};
      Eigen::MatrixXd source;
      switch (spec.ssl) {
        case SslMethod::kStHard:
        case SslMethod::kStSoft:
          source = std::move(RunForward(*teacher, pass.input, head).probs[level]);
          break;
        case SslMethod::kPseudoLabel:
          source = pass.probs[level];
          break;
        case SslMethod::kFixMatch: {
          Eigen::MatrixXd weak = batch_old.inputs;
          if (options.augment_inputs) {
            for (Eigen::Index j = 0; j < weak.cols(); ++j) {
              Augment(weak.col(j), AugmentMode::kWeak, options.augment, rng_weak);
            }
          }
          source = std::move(RunForward(student, std::move(weak), head).probs[level]);
          break;
        }
        case SslMethod::kNone:
          break;
      }
      result.terms.ssl = AccumulateSsl(spec, pass, source, batch_old, links, level, result.ssl);
    }
    Backward(student, pass, result.grads, options.through_extractor);
  }

  result.value = result.terms.total();
  return result;
}

}  // namespace leco
