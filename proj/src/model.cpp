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

#include "leco/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "leco/error.hpp"

namespace leco {

ParameterSet ParameterSet::ZerosLike() const {
  ParameterSet z;
  auto zero = [](const Affine& a) {
    return Affine{Eigen::MatrixXd::Zero(a.weight.rows(), a.weight.cols()),
                  Eigen::VectorXd::Zero(a.bias.size())};
  };
  for (const auto& a : extractor) z.extractor.push_back(zero(a));
  for (const auto& a : heads) z.heads.push_back(zero(a));
  return z;
}

std::size_t ParameterSet::NumScalars() const {
  std::size_t n = 0;
  auto count = [&](const Affine& a) {
    n += static_cast<std::size_t>(a.weight.size() + a.bias.size());
  };
  for (const auto& a : extractor) count(a);
  for (const auto& a : heads) count(a);
  return n;
}

std::vector<double> ParameterSet::Flatten() const {
  std::vector<double> flat;
  flat.reserve(NumScalars());
  ForEachTensorPair(*this, *this, [&](const auto& t, const auto&) {
    flat.insert(flat.end(), t.data(), t.data() + t.size());
  });
  return flat;
}

void ParameterSet::Unflatten(std::span<const double> flat) {
  LECO_CHECK(flat.size() == NumScalars(), "unflatten: expected ", NumScalars(), " scalars, got ",
             flat.size());
  std::size_t offset = 0;
  ForEachTensorPair(*this, *this, [&](auto& t, const auto&) {
    std::memcpy(t.data(), flat.data() + offset, static_cast<std::size_t>(t.size()) * sizeof(double));
    offset += static_cast<std::size_t>(t.size());
  });
}

bool ParameterSet::AllFinite() const {
  bool ok = true;
  ForEachTensorPair(*this, *this, [&](const auto& t, const auto&) { ok = ok && t.allFinite(); });
  return ok;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.extractor.size() != b.extractor.size() || a.heads.size() != b.heads.size()) return false;
  bool same = true;
  ForEachTensorPair(a, b, [&](const auto& x, const auto& y) {
    same = same && x.rows() == y.rows() && x.cols() == y.cols() &&
           std::memcmp(x.data(), y.data(), static_cast<std::size_t>(x.size()) * sizeof(double)) == 0;
  });
  return same;
}

const char* ToString(InitStrategy s) {
  switch (s) {
    case InitStrategy::kTrainScratch:
      return "TrainScratch";
    case InitStrategy::kFinetunePrev:
      return "FinetunePrev";
    case InitStrategy::kFreezePrev:
      return "FreezePrev";
  }
  return "?";
}

InitStrategy ParseInitStrategy(const std::string& s) {
  if (s == "TrainScratch") return InitStrategy::kTrainScratch;
  if (s == "FinetunePrev") return InitStrategy::kFinetunePrev;
  if (s == "FreezePrev") return InitStrategy::kFreezePrev;
  internal::Fail("unknown training strategy '", s, "'");
}

Eigen::MatrixXd& ForwardPass::GradFor(std::size_t head) {
  auto& g = dlogits[head];
  if (g.size() == 0) g = Eigen::MatrixXd::Zero(logits[head].rows(), logits[head].cols());
  return g;
}

Eigen::MatrixXd Softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - m).exp();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

ForwardPass RunForward(const ParameterSet& params, Eigen::MatrixXd input,
                       std::span<const std::size_t> heads) {
  ForwardPass pass;
  pass.input = std::move(input);
  pass.hidden.reserve(params.extractor.size());
  for (const auto& layer : params.extractor) {
    const Eigen::MatrixXd& below = pass.hidden.empty() ? pass.input : pass.hidden.back();
    LECO_CHECK(below.rows() == layer.weight.cols(), "forward: input has ", below.rows(),
               " rows but layer expects ", layer.weight.cols());
    Eigen::MatrixXd h(layer.weight.rows(), below.cols());
    h.noalias() = layer.weight * below;
    h.colwise() += layer.bias;
    pass.hidden.push_back(h.cwiseMax(0.0));
  }
  pass.logits.resize(params.heads.size());
  pass.probs.resize(params.heads.size());
  pass.dlogits.resize(params.heads.size());
  const Eigen::MatrixXd& z = pass.features();
  for (std::size_t h : heads) {
    LECO_CHECK(h < params.heads.size(), "model has no head for level ", h);
    if (pass.logits[h].size() != 0) continue;
    const auto& head = params.heads[h];
    Eigen::MatrixXd logits(head.weight.rows(), z.cols());
    logits.noalias() = head.weight * z;
    logits.colwise() += head.bias;
    pass.probs[h] = Softmax(logits);
    pass.logits[h] = std::move(logits);
  }
  return pass;
}

void Backward(const ParameterSet& params, const ForwardPass& pass, ParameterSet& grads,
              bool through_extractor) {
  const Eigen::MatrixXd& z = pass.features();
  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  bool any = false;
  for (std::size_t h = 0; h < pass.dlogits.size(); ++h) {
    const auto& g = pass.dlogits[h];
    if (g.size() == 0) continue;
    any = true;
    grads.heads[h].weight.noalias() += g * z.transpose();
    grads.heads[h].bias += g.rowwise().sum();
    if (through_extractor) dz.noalias() += params.heads[h].weight.transpose() * g;
  }
  if (!any || !through_extractor) return;
  for (std::size_t l = params.extractor.size(); l-- > 0;) {
    const Eigen::MatrixXd& out = pass.hidden[l];
    const Eigen::MatrixXd& below = l == 0 ? pass.input : pass.hidden[l - 1];
    Eigen::MatrixXd da = (out.array() > 0.0).select(dz, 0.0);
    grads.extractor[l].weight.noalias() += da * below.transpose();
    grads.extractor[l].bias += da.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd next(below.rows(), below.cols());
      next.noalias() = params.extractor[l].weight.transpose() * da;
      dz = std::move(next);
    }
  }
}

namespace {

Affine RandomAffine(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Affine a{Eigen::MatrixXd(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
           Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
  for (Eigen::Index j = 0; j < a.weight.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.weight.rows(); ++i) a.weight(i, j) = u(rng);
  }
  return a;
}

}  // namespace

Model Model::Random(const ModelShape& shape, std::mt19937_64& rng) {
  LECO_CHECK(shape.input_dim > 0, "model input_dim must be positive");
  LECO_CHECK(!shape.head_sizes.empty(), "model needs at least one head");
  Model m;
  std::size_t width = shape.input_dim;
  for (std::size_t h : shape.hidden) {
    LECO_CHECK(h > 0, "hidden width must be positive");
    m.params_.extractor.push_back(RandomAffine(width, h, rng));
    width = h;
  }
  for (std::size_t c : shape.head_sizes) {
    LECO_CHECK(c > 0, "head size must be positive");
    m.params_.heads.push_back(RandomAffine(width, c, rng));
  }
  m.ResetOptimizerState();
  return m;
}

std::size_t Model::input_dim() const {
  if (!params_.extractor.empty()) return static_cast<std::size_t>(params_.extractor[0].weight.cols());
  return static_cast<std::size_t>(params_.heads.at(0).weight.cols());
}

std::size_t Model::feature_dim() const {
  return static_cast<std::size_t>(params_.heads.at(0).weight.cols());
}

std::size_t Model::head_size(std::size_t level) const {
  LECO_CHECK(level < params_.heads.size(), "model has no head for level ", level);
  return static_cast<std::size_t>(params_.heads[level].weight.rows());
}

ModelShape Model::shape() const {
  ModelShape s;
  s.input_dim = input_dim();
  s.hidden.clear();
  for (const auto& l : params_.extractor) s.hidden.push_back(static_cast<std::size_t>(l.weight.rows()));
  for (const auto& h : params_.heads) s.head_sizes.push_back(static_cast<std::size_t>(h.weight.rows()));
  return s;
}

SampleOutput Model::Forward(const Eigen::VectorXd& x, std::size_t level, bool use_ema) const {
  LECO_CHECK(level < num_heads(), "model has no head for level ", level);
  LECO_CHECK(static_cast<std::size_t>(x.size()) == input_dim(), "forward: input has dimension ",
             x.size(), ", model expects ", input_dim());
  const std::size_t heads[] = {level};
  auto pass = RunForward(weights(use_ema), Eigen::MatrixXd(x), heads);
  return {pass.features().col(0), pass.logits[level].col(0), pass.probs[level].col(0)};
}

Eigen::MatrixXd Model::PredictProbs(const Eigen::MatrixXd& inputs, std::size_t level,
                                    bool use_ema) const {
  const std::size_t heads[] = {level};
  return std::move(RunForward(weights(use_ema), inputs, heads).probs[level]);
}

void Model::ResetOptimizerState() {
  velocity_ = params_.ZerosLike();
  ema_ = params_;
}

void Model::CollapseToEma() {
  params_ = ema_;
  velocity_ = params_.ZerosLike();
}

Model InitForTp(const Model* prev, InitStrategy strategy, const ModelShape& shape,
                std::mt19937_64& rng) {
  if (strategy == InitStrategy::kTrainScratch) {
    Model m = Model::Random(shape, rng);
    m.set_provenance(strategy);
    return m;
  }
  LECO_CHECK(prev != nullptr, ToString(strategy),
             " needs the previous TP's model (not available at TP0)");
  const ModelShape prev_shape = prev->shape();
  LECO_CHECK(prev_shape.input_dim == shape.input_dim && prev_shape.hidden == shape.hidden,
             ToString(strategy), ": extractor shape differs from the previous model");
  LECO_CHECK(prev_shape.head_sizes.size() < shape.head_sizes.size(), ToString(strategy),
             ": new model must add at least one head");
  // Draw the fresh parameters first so the random stream does not depend on
  // which parts are copied.
  Model m = Model::Random(shape, rng);
  ParameterSet params = m.params();
  params.extractor = prev->params().extractor;
  for (std::size_t h = 0; h < prev_shape.head_sizes.size(); ++h) {
    LECO_CHECK(prev_shape.head_sizes[h] == shape.head_sizes[h], "head ", h,
               " size differs from the previous model");
    params.heads[h] = prev->params().heads[h];
  }
  m.mutable_params() = std::move(params);
  m.ResetOptimizerState();
  m.set_frozen_extractor(strategy == InitStrategy::kFreezePrev);
  m.set_provenance(strategy);
  return m;
}

TrainableMask DefaultTrainableMask(const Model& model, bool train_old_heads) {
  TrainableMask mask;
  mask.extractor = !model.frozen_extractor();
  mask.heads.assign(model.num_heads(), false);
  if (model.num_heads() > 0) mask.heads.back() = true;
  if (train_old_heads && !model.frozen_extractor()) {
    for (std::size_t h = 0; h + 1 < model.num_heads(); ++h) mask.heads[h] = true;
  }
  return mask;
}

namespace {

template <typename T>
void SgdTensor(T& theta, const T& grad, T& vel, double lr, double momentum, double wd) {
  vel = momentum * vel + grad + wd * theta;
  theta -= lr * vel;
}

}  // namespace

void SgdStep(Model& model, const ParameterSet& grads, double lr, double momentum,
             double weight_decay, const TrainableMask& mask) {
  LECO_CHECK(grads.extractor.size() == model.params_.extractor.size() &&
                 grads.heads.size() == model.params_.heads.size(),
             "sgd_step: gradient structure does not match the model");
  LECO_CHECK(grads.AllFinite(), "sgd_step: non-finite gradient (lr=", lr, ")");
  auto& p = model.params_;
  auto& v = model.velocity_;
  if (mask.extractor && !model.frozen_extractor_) {
    for (std::size_t l = 0; l < p.extractor.size(); ++l) {
      SgdTensor(p.extractor[l].weight, grads.extractor[l].weight, v.extractor[l].weight, lr,
                momentum, weight_decay);
      SgdTensor(p.extractor[l].bias, grads.extractor[l].bias, v.extractor[l].bias, lr, momentum,
                weight_decay);
    }
  }
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    if (h < mask.heads.size() && !mask.heads[h]) continue;
    SgdTensor(p.heads[h].weight, grads.heads[h].weight, v.heads[h].weight, lr, momentum,
              weight_decay);
    SgdTensor(p.heads[h].bias, grads.heads[h].bias, v.heads[h].bias, lr, momentum, weight_decay);
  }
}

void EmaUpdate(Model& model, double decay) {
  ForEachTensorPair(model.mutable_ema(), model.params(), [&](auto& e, const auto& p) {
    if (decay == 0.0) {
      e = p;
    } else {
      e += (1.0 - decay) * (p - e);
    }
  });
}

void SaveCheckpoint(const Model& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto shape = model.shape();
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  LECO_CHECK(manifest.good(), "cannot write checkpoint manifest in ", dir);
  manifest << "leco-checkpoint 1\n";
  manifest << "input_dim " << shape.input_dim << '\n';
  manifest << "hidden";
  for (auto h : shape.hidden) manifest << ' ' << h;
  manifest << "\nheads";
  for (auto h : shape.head_sizes) manifest << ' ' << h;
  manifest << "\nfrozen_extractor " << (model.frozen_extractor() ? 1 : 0) << '\n';
  manifest << "provenance " << ToString(model.provenance()) << '\n';
  std::size_t offset = 0;
  auto describe = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    manifest << "tensor " << name << ' ' << rows << ' ' << cols << ' ' << offset << '\n';
    offset += static_cast<std::size_t>(rows * cols);
  };
  const auto& p = model.params();
  for (std::size_t l = 0; l < p.extractor.size(); ++l) {
    describe("extractor." + std::to_string(l) + ".weight", p.extractor[l].weight.rows(),
             p.extractor[l].weight.cols());
    describe("extractor." + std::to_string(l) + ".bias", p.extractor[l].bias.size(), 1);
  }
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    describe("head." + std::to_string(h) + ".weight", p.heads[h].weight.rows(),
             p.heads[h].weight.cols());
    describe("head." + std::to_string(h) + ".bias", p.heads[h].bias.size(), 1);
  }
  const auto flat = p.Flatten();
  std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  LECO_CHECK(bin.good(), "cannot write checkpoint parameters in ", dir);
  bin.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
}

Model LoadCheckpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  LECO_CHECK(manifest.good(), "cannot read checkpoint manifest in ", dir);
  ModelShape shape;
  shape.hidden.clear();
  bool frozen = false;
  InitStrategy provenance = InitStrategy::kTrainScratch;
  std::string line;
  std::getline(manifest, line);
  LECO_CHECK(line == "leco-checkpoint 1", "unrecognized checkpoint manifest header '", line, "'");
  while (std::getline(manifest, line)) {
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "input_dim") {
      is >> shape.input_dim;
    } else if (key == "hidden") {
      for (std::size_t v; is >> v;) shape.hidden.push_back(v);
    } else if (key == "heads") {
      for (std::size_t v; is >> v;) shape.head_sizes.push_back(v);
    } else if (key == "frozen_extractor") {
      int v = 0;
      is >> v;
      frozen = v != 0;
    } else if (key == "provenance") {
      std::string s;
      is >> s;
      provenance = ParseInitStrategy(s);
    }
  }
  std::mt19937_64 unused(0);
  Model m = Model::Random(shape, unused);
  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  LECO_CHECK(bin.good(), "cannot read checkpoint parameters in ", dir);
  std::vector<double> flat(m.params().NumScalars());
  bin.read(reinterpret_cast<char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  LECO_CHECK(bin.gcount() == static_cast<std::streamsize>(flat.size() * sizeof(double)),
             "checkpoint parameter blob in ", dir, " is truncated");
  m.params_.Unflatten(flat);
  m.ResetOptimizerState();
  m.frozen_extractor_ = frozen;
  m.provenance_ = provenance;
  return m;
}

}  // namespace leco
