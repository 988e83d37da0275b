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


#ifndef LECO_TESTS_SUPPORT_GRADCHECK_HPP_
#define LECO_TESTS_SUPPORT_GRADCHECK_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "leco/losses.hpp"
#include "leco/model.hpp"
#include "leco/ontology.hpp"

namespace leco::testing {

// |a - n| / max(|a|, |n|, floor).
double RelError(double analytic, double numeric, double floor = 1e-6);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates where the probe crossed a kink or a gate
  std::string worst;        // description of the worst coordinate
};

// f returns the loss and a signature of its piecewise regime (ReLU pattern,
// acceptance gates). Central differences whose two probes disagree on the
// signature are skipped.
using ProbeFn = std::function<std::pair<double, std::string>(const ParameterSet&)>;

GradCheckReport CheckParamGradient(const ParameterSet& at, const ParameterSet& analytic,
                                   const ProbeFn& f, double h = 1e-5);

// Central differences of a scalar function of a vector.
Eigen::VectorXd NumericGradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                const Eigen::VectorXd& x, double h = 1e-5);

double MaxRelError(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                   double floor = 1e-6);

// A small randomized training situation for one loss configuration.
struct LossCase {
  Taxonomy taxonomy;
  LevelLinks links;
  ParameterSet student;
  ParameterSet teacher;
  Batch batch_new;
  Batch batch_old;
  std::size_t level = 1;
  LossSpec spec;
  LossOptions options;
  std::uint64_t rng_seed = 0;
};

// Level sizes grow geometrically from 2 or 3 roots; `logit_scale` inflates the
// finest head so confidence gates fire.
LossCase MakeLossCase(const LossSpec& spec, std::size_t num_levels, std::uint64_t seed,
                      double logit_scale = 4.0);

// Evaluates TotalLoss for `c` at `student` with a fresh copy of the case rng.
LossResult EvalCase(const LossCase& c, const ParameterSet& student);

// ReLU pattern of every batch plus SSL gate outcomes.
std::string RegimeSignature(const LossCase& c, const ParameterSet& student,
                            const LossResult& r);

GradCheckReport CheckCase(const LossCase& c);

// Every supported combination of terms used by the gradient suite.
std::vector<LossSpec> AllLossSpecs();

}  // namespace leco::testing

#endif  // LECO_TESTS_SUPPORT_GRADCHECK_HPP_
