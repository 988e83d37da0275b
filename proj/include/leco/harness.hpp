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

#ifndef LECO_HARNESS_HPP_
#define LECO_HARNESS_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leco/losses.hpp"
#include "leco/model.hpp"
#include "leco/ontology.hpp"
#include "leco/synthdata.hpp"
#include "leco/trainer.hpp"

namespace leco {

// Where the class ontology comes from. kind is one of
//   "balanced": `roots` coarse classes, each level splitting by `branching[i]`
//   "random":   random tree with the given `levels` sizes (drawn per seed)
//   "file":     taxonomy file at `path`
struct TaxonomySource {
  std::string kind = "balanced";
  std::size_t roots = 20;
  std::vector<std::size_t> branching = {5};
  std::vector<std::size_t> levels;
  std::string path;

  Taxonomy Build(std::uint64_t seed) const;
  std::size_t num_levels() const;
};

struct TpPlan {
  AnnotationStrategy annotation = AnnotationStrategy::kLabelNew;
  InitStrategy init = InitStrategy::kTrainScratch;
  LossSpec loss;
};

struct ArmConfig {
  std::string name;
  std::vector<TpPlan> tps;
};

struct DataConfig {
  HierarchicalGaussianSpec generator;
  std::size_t test_size = 5000;
};

struct ExperimentConfig {
  std::string name = "experiment";
  TaxonomySource taxonomy;
  DataConfig data;
  std::size_t num_tps = 2;
  std::size_t budget = 10000;
  std::vector<std::size_t> hidden = {128, 128};
  std::vector<ArmConfig> arms;
  TrainConfig train;
  // Augmentation noise derived from the data's sample noise unless set.
  bool augment_from_data = true;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out;
  bool save_checkpoints = true;
  std::size_t jobs = 1;

  void Validate() const;
  // Effective training config for this experiment (augmentation resolved).
  TrainConfig ResolvedTrain() const;
};

// Parses a JSON experiment config. Arms may give a full per-TP list under
// "tps", or "annotation"/"init"/"loss" applied to every TP after the first
// (TP0 then defaults to LabelNew, TrainScratch, base loss).
ExperimentConfig ParseExperimentConfig(std::string_view json_text);
ExperimentConfig LoadExperimentConfig(const std::string& path);
// Fully resolved config with every default spelled out.
std::string ResolvedConfigJson(const ExperimentConfig& config, bool include_run_fields = true);
// Hash of the resolved config, ignoring seeds, output location and jobs.
std::string ConfigHash(const ExperimentConfig& config);

// Stand-alone data generation job: {"taxonomy", "data", "sizes"} or
// {"taxonomy", "data", "num_tps", "budget"}.
struct DataJob {
  TaxonomySource taxonomy;
  DataConfig data;
  std::vector<std::size_t> sizes = {10000, 10000};

  static DataJob Parse(std::string_view json_text);
  static DataJob Load(const std::string& path);
  std::string ResolvedJson(std::uint64_t seed) const;
};

// Writes taxonomy.txt, pool.csv, test.csv and data_spec.json into `dir`.
void GenerateDataFiles(const DataJob& job, std::uint64_t seed, const std::string& dir);

struct ResultRow {
  std::string arm;
  std::size_t tp = 0;
  std::uint64_t seed = 0;
  std::size_t level = 0;
  double test_macc = 0.0;
  double val_macc = 0.0;  // validation mAcc of the selected checkpoint at the TP's level
  std::size_t best_iteration = 0;
  std::size_t labeled = 0;       // distinct samples carrying any label
  std::size_t fine_labeled = 0;  // samples labeled at the TP's level (train + val)

  bool operator==(const ResultRow&) const = default;
};

struct AggregateRow {
  std::string arm;
  std::size_t tp = 0;
  std::size_t level = 0;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) convention; 0 when n == 1
};

struct ResultTable {
  std::vector<ResultRow> rows;

  // Test mAcc over seeds per (arm, tp, level), in first-appearance order.
  std::vector<AggregateRow> Aggregate() const;
  // Seed-mean test mAcc; throws if the cell is missing.
  double Mean(const std::string& arm, std::size_t tp, std::size_t level) const;
  std::vector<std::string> Arms() const;

  bool operator==(const ResultTable&) const = default;
};

double Mean(std::span<const double> values);
double SampleStd(std::span<const double> values);
// "<mean> ± <std>" with `digits` decimals.
std::string FormatMeanStd(double mean, double std, int digits = 2);

enum class ReportFormat { kCsv, kJson, kText };
ReportFormat ParseReportFormat(const std::string& s);

void WriteResultsCsv(std::ostream& out, const ResultTable& table);
ResultTable ReadResultsCsv(std::istream& in);
void WriteResultsJson(std::ostream& out, const ResultTable& table);
ResultTable ReadResultsJson(std::istream& in);
// Reads results.csv or results.json from a run directory (or a file path).
ResultTable LoadResults(const std::string& path);
void EmitReport(const ResultTable& table, ReportFormat format, std::ostream& out);

struct RunOptions {
  std::ostream* progress = nullptr;
};

// Runs every arm for every seed. Arms sharing a prefix of TP plans share the
// trained models for that prefix. Artifacts go to <out>/<hash>/<seed>/ when
// config.out is set.
ResultTable RunExperiment(const ExperimentConfig& config, const RunOptions& options = {});

struct SweepGrid {
  std::vector<double> lr;
  std::vector<double> weight_decay;

  static SweepGrid Parse(std::string_view json_text);
  static SweepGrid Load(const std::string& path);
};

struct SweepCell {
  std::string arm;
  double lr = 0.0;
  double weight_decay = 0.0;
  double val_macc = 0.0;  // mean over seeds and TPs at each TP's level
  bool selected = false;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  ResultTable table;  // selected cell per arm only
  void WriteCellsCsv(std::ostream& out) const;
};

// Trains every (lr, weight_decay) cell and keeps, per arm, the cell with the
// best validation mAcc. Test numbers of other cells are discarded unread.
SweepResult Sweep(const ExperimentConfig& config, const SweepGrid& grid,
                  const RunOptions& options = {});

}  // namespace leco

#endif  // LECO_HARNESS_HPP_
