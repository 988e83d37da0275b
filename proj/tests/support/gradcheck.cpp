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


#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace leco::testing {

double RelError(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport CheckParamGradient(const ParameterSet& at, const ParameterSet& analytic,
                                   const ProbeFn& f, double h) {
  GradCheckReport report;
  const std::vector<double> base = at.Flatten();
  const std::vector<double> grad = analytic.Flatten();
  ParameterSet probe = at;
  std::vector<double> work = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    work[i] = base[i] + h;
    probe.Unflatten(work);
    const auto [fp, sp] = f(probe);
    work[i] = base[i] - h;
    probe.Unflatten(work);
    const auto [fm, sm] = f(probe);
    work[i] = base[i];
    if (sp != sm) {
      ++report.skipped;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = RelError(grad[i], numeric);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      std::ostringstream os;
      os << "param " << i << ": analytic " << grad[i] << " numeric " << numeric;
      report.worst = os.str();
    }
  }
  return report;
}

Eigen::VectorXd NumericGradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double MaxRelError(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                   double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, RelError(analytic[i], numeric[i], floor));
  }
  return worst;
}

namespace {

Batch RandomBatch(const Taxonomy& tax, std::size_t level, bool coarse_only, std::size_t n,
                  std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution mask(0.2);
  std::uniform_int_distribution<LabelId> fine(0, static_cast<LabelId>(tax.level_size(level)) - 1);
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t l = level;
    if (coarse_only) l = std::uniform_int_distribution<std::size_t>(0, level - 1)(rng);
    const LabelId y = fine(rng);
    b.labels.push_back(l == level ? y : tax.Coarsen(y, level, l));
    b.label_levels.push_back(l);
    b.masked.push_back(mask(rng) ? 1 : 0);
  }
  return b;
}

ParameterSet RandomParams(const ModelShape& shape, double logit_scale, std::mt19937_64& rng) {
  ParameterSet p = Model::Random(shape, rng).params();
  std::normal_distribution<double> normal(0.0, 0.3);
  ForEachTensorPair(p, p, [&](auto& t, auto&) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += 0.1 * normal(rng);
  });
  p.heads.back().weight *= logit_scale;
  return p;
}

}  // namespace

LossCase MakeLossCase(const LossSpec& spec, std::size_t num_levels, std::uint64_t seed,
                      double logit_scale) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> sizes;
  std::size_t s = (seed % 2 == 0) ? 2 : 3;
  for (std::size_t l = 0; l < num_levels; ++l) {
    sizes.push_back(s);
    s = s * 2 + (l % 2);
  }
  LossCase c{Taxonomy::Random(sizes, rng), {}, {}, {}, {}, {}, num_levels - 1, spec, {}, seed};
  c.links = LevelLinks::FromTaxonomy(c.taxonomy);
  ModelShape shape;
  shape.input_dim = 5;
  shape.hidden = {6, 5};
  shape.head_sizes = sizes;
  c.student = RandomParams(shape, logit_scale, rng);
  c.teacher = RandomParams(shape, logit_scale, rng);
  c.batch_new = RandomBatch(c.taxonomy, c.level, false, 5, shape.input_dim, rng);
  c.batch_old = RandomBatch(c.taxonomy, c.level, true, 6, shape.input_dim, rng);
  c.options.augment_inputs = false;
  return c;
}

LossResult EvalCase(const LossCase& c, const ParameterSet& student) {
  std::mt19937_64 rng(c.rng_seed);
  return TotalLoss(c.spec, student, c.spec.needs_teacher() ? &c.teacher : nullptr, c.batch_new,
                   c.batch_old, c.links, c.level, c.options, rng);
}

std::string RegimeSignature(const LossCase& c, const ParameterSet& student,
                            const LossResult& r) {
  std::string sig;
  const std::size_t head[] = {c.level};
  for (const Batch* b : {&c.batch_new, &c.batch_old}) {
    const auto pass = RunForward(student, b->inputs, head);
    for (const auto& h : pass.hidden) {
      for (Eigen::Index i = 0; i < h.size(); ++i) sig += h.data()[i] > 0.0 ? '1' : '0';
    }
    for (Eigen::Index j = 0; j < pass.probs[c.level].cols(); ++j) {
      sig += static_cast<char>('a' + ArgMax(pass.probs[c.level].col(j)));
    }
  }
  sig += ':' + std::to_string(r.ssl.accepted) + ':' + std::to_string(r.ssl.condition_skipped);
  return sig;
}

GradCheckReport CheckCase(const LossCase& c) {
  const LossResult at = EvalCase(c, c.student);
  return CheckParamGradient(c.student, at.grads, [&](const ParameterSet& p) {
    const LossResult r = EvalCase(c, p);
    return std::make_pair(r.value, RegimeSignature(c, p, r));
  });
}

std::vector<LossSpec> AllLossSpecs() {
  std::vector<LossSpec> specs;
  auto add = [&](bool base, SslMethod ssl, Refinement ref, bool joint, bool lpl) {
    LossSpec s;
    s.use_base = base;
    s.ssl = ssl;
    s.refinement = ref;
    s.use_joint = joint;
    s.use_lpl = lpl;
    specs.push_back(s);
  };
  add(true, SslMethod::kNone, Refinement::kNone, false, false);
  add(true, SslMethod::kNone, Refinement::kNone, true, false);
  add(true, SslMethod::kNone, Refinement::kNone, false, true);
  add(true, SslMethod::kNone, Refinement::kNone, true, true);
  add(false, SslMethod::kNone, Refinement::kNone, true, false);
  add(false, SslMethod::kNone, Refinement::kNone, false, true);
  for (SslMethod m : {SslMethod::kStHard, SslMethod::kStSoft, SslMethod::kPseudoLabel,
                      SslMethod::kFixMatch}) {
    for (Refinement r : {Refinement::kNone, Refinement::kFilter, Refinement::kCondition}) {
      add(true, m, r, false, true);
      add(true, m, r, false, false);
    }
    add(false, m, Refinement::kNone, false, false);
    add(true, m, Refinement::kCondition, true, true);
  }
  LossSpec old_only;
  old_only.use_lpl = true;
  old_only.use_joint = true;
  old_only.apply_coarse_on_new = false;
  specs.push_back(old_only);
  return specs;
}

}  // namespace leco::testing
