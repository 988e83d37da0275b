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

#ifndef LECO_MODEL_HPP_
#define LECO_MODEL_HPP_

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace leco {

struct Affine {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// All parameters of the learner. Also used as the container for gradients,
// momentum buffers and the EMA shadow copy.
struct ParameterSet {
  std::vector<Affine> extractor;  // ReLU after every layer
  std::vector<Affine> heads;      // heads[t] scores the labels of level t

  ParameterSet ZerosLike() const;
  std::size_t NumScalars() const;
  std::vector<double> Flatten() const;
  void Unflatten(std::span<const double> flat);
  bool AllFinite() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);
};

// Calls fn(tensor_a, tensor_b) for every matching weight/bias pair, extractor
// first, then heads in level order.
template <typename A, typename B, typename Fn>
void ForEachTensorPair(A& a, B& b, Fn&& fn) {
  for (std::size_t i = 0; i < a.extractor.size(); ++i) {
    fn(a.extractor[i].weight, b.extractor[i].weight);
    fn(a.extractor[i].bias, b.extractor[i].bias);
  }
  for (std::size_t i = 0; i < a.heads.size(); ++i) {
    fn(a.heads[i].weight, b.heads[i].weight);
    fn(a.heads[i].bias, b.heads[i].bias);
  }
}

enum class InitStrategy { kTrainScratch, kFinetunePrev, kFreezePrev };

const char* ToString(InitStrategy s);
InitStrategy ParseInitStrategy(const std::string& s);

struct ModelShape {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {128, 128};
  std::vector<std::size_t> head_sizes;  // |Y^0|, ..., |Y^t|
};

// Which parameter groups receive updates.
struct TrainableMask {
  bool extractor = true;
  std::vector<bool> heads;
};

// Batched forward state. Inputs are stored one sample per column.
struct ForwardPass {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> hidden;  // post-ReLU activation of each layer
  std::vector<Eigen::MatrixXd> logits;  // per head; empty when not requested
  std::vector<Eigen::MatrixXd> probs;
  std::vector<Eigen::MatrixXd> dlogits;  // loss gradient per head; empty = none

  const Eigen::MatrixXd& features() const { return hidden.empty() ? input : hidden.back(); }
  std::size_t batch_size() const { return static_cast<std::size_t>(input.cols()); }
  // Adds `g` (classes x batch) to the logit gradient of `head`.
  Eigen::MatrixXd& GradFor(std::size_t head);
};

// Column-wise numerically stable softmax.
Eigen::MatrixXd Softmax(const Eigen::MatrixXd& logits);

// Runs the extractor on `input` and the listed heads.
ForwardPass RunForward(const ParameterSet& params, Eigen::MatrixXd input,
                       std::span<const std::size_t> heads);
// Accumulates d(loss)/d(params) from pass.dlogits into `grads`. The extractor
// is skipped when `through_extractor` is false.
void Backward(const ParameterSet& params, const ForwardPass& pass, ParameterSet& grads,
              bool through_extractor = true);

struct SampleOutput {
  Eigen::VectorXd features;
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
};

class Model {
 public:
  Model() = default;
  // Scaled uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Model Random(const ModelShape& shape, std::mt19937_64& rng);

  const ParameterSet& params() const { return params_; }
  ParameterSet& mutable_params() { return params_; }
  const ParameterSet& ema() const { return ema_; }
  ParameterSet& mutable_ema() { return ema_; }
  const ParameterSet& velocity() const { return velocity_; }
  const ParameterSet& weights(bool use_ema) const { return use_ema ? ema_ : params_; }

  bool frozen_extractor() const { return frozen_extractor_; }
  void set_frozen_extractor(bool v) { frozen_extractor_ = v; }
  InitStrategy provenance() const { return provenance_; }
  void set_provenance(InitStrategy s) { provenance_ = s; }

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::size_t num_heads() const { return params_.heads.size(); }
  std::size_t head_size(std::size_t level) const;
  ModelShape shape() const;

  SampleOutput Forward(const Eigen::VectorXd& x, std::size_t level, bool use_ema = false) const;
  // Probabilities of head `level` for every column of `inputs`.
  Eigen::MatrixXd PredictProbs(const Eigen::MatrixXd& inputs, std::size_t level,
                               bool use_ema = false) const;

  // Drops momentum and resets the EMA to the current weights.
  void ResetOptimizerState();
  // Replaces raw weights by the EMA weights (used for checkpoint snapshots).
  void CollapseToEma();

 private:
  ParameterSet params_;
  ParameterSet ema_;
  ParameterSet velocity_;
  bool frozen_extractor_ = false;
  InitStrategy provenance_ = InitStrategy::kTrainScratch;

  friend void SgdStep(Model&, const ParameterSet&, double, double, double, const TrainableMask&);
  friend Model LoadCheckpoint(const std::string&);
};

// New model for the next TP. `head_sizes` lists every level through the new
// one. Old heads are kept (copied under FinetunePrev/FreezePrev) so that joint
// training can use them.
Model InitForTp(const Model* prev, InitStrategy strategy, const ModelShape& shape,
                std::mt19937_64& rng);

// v <- momentum * v + (g + weight_decay * theta); theta <- theta - lr * v, for
// the trainable groups only. Throws on non-finite gradients.
void SgdStep(Model& model, const ParameterSet& grads, double lr, double momentum,
             double weight_decay, const TrainableMask& mask);

// ema <- decay * ema + (1 - decay) * theta, evaluated as
// ema += (1 - decay) * (theta - ema) so a constant theta is an exact fixed point.
void EmaUpdate(Model& model, double decay);

TrainableMask DefaultTrainableMask(const Model& model, bool train_old_heads);

// Flat little-endian float64 blob `params.bin` plus `manifest.txt`.
void SaveCheckpoint(const Model& model, const std::string& dir);
Model LoadCheckpoint(const std::string& dir);

}  // namespace leco

#endif  // LECO_MODEL_HPP_
