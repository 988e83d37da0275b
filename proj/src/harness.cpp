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

#include "leco/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "leco/error.hpp"
#include "leco/metrics.hpp"
#include "leco/text_util.hpp"

namespace leco {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void CheckKeys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  LECO_CHECK(j.is_object(), "config: ", where, " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    LECO_CHECK(ok, "config: unknown key '", key, "' in ", where);
  }
}

template <typename T>
void Read(const json& j, const char* key, T& dst, const char* where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    internal::Fail("config: bad value for ", where, ".", key, ": ", e.what());
  }
}

LossSpec ParseLossName(const std::string& name) {
  LossSpec spec;
  spec.use_base = false;
  for (const auto& part : SplitString(name, '+')) {
    if (part == "base") {
      spec.use_base = true;
    } else if (part == "joint") {
      spec.use_joint = true;
    } else if (part == "lpl") {
      spec.use_lpl = true;
    } else {
      auto pieces = SplitString(part, '/');
      LECO_CHECK(pieces.size() <= 2 && spec.ssl == SslMethod::kNone, "config: bad loss name '",
                 name, "'");
      spec.ssl = ParseSslMethod(pieces[0]);
      if (pieces.size() == 2) {
        spec.refinement = pieces[1] == "Cond" ? Refinement::kCondition : ParseRefinement(pieces[1]);
      }
    }
  }
  spec.Validate();
  return spec;
}

LossSpec ParseLoss(const json& j) {
  if (j.is_string()) return ParseLossName(j.get<std::string>());
  CheckKeys(j, "loss",
            {"base", "joint", "lpl", "ssl", "refinement", "coarse_on_new", "pl_threshold",
             "fixmatch_soft_target"});
  LossSpec spec;
  Read(j, "base", spec.use_base, "loss");
  Read(j, "joint", spec.use_joint, "loss");
  Read(j, "lpl", spec.use_lpl, "loss");
  if (j.contains("ssl")) spec.ssl = ParseSslMethod(j.at("ssl").get<std::string>());
  if (j.contains("refinement")) {
    spec.refinement = ParseRefinement(j.at("refinement").get<std::string>());
  }
  Read(j, "coarse_on_new", spec.apply_coarse_on_new, "loss");
  Read(j, "pl_threshold", spec.pl_threshold, "loss");
  Read(j, "fixmatch_soft_target", spec.fixmatch_soft_target, "loss");
  spec.Validate();
  return spec;
}

json LossToJson(const LossSpec& s) {
  return json{{"base", s.use_base},
              {"joint", s.use_joint},
              {"lpl", s.use_lpl},
              {"ssl", ToString(s.ssl)},
              {"refinement", ToString(s.refinement)},
              {"coarse_on_new", s.apply_coarse_on_new},
              {"pl_threshold", s.pl_threshold},
              {"fixmatch_soft_target", s.fixmatch_soft_target}};
}

json PlanToJson(const TpPlan& p) {
  return json{{"annotation", ToString(p.annotation)},
              {"init", ToString(p.init)},
              {"loss", LossToJson(p.loss)}};
}

TpPlan ParsePlan(const json& j) {
  CheckKeys(j, "tp plan", {"annotation", "init", "loss"});
  TpPlan p;
  if (j.contains("annotation")) {
    p.annotation = ParseAnnotationStrategy(j.at("annotation").get<std::string>());
  }
  if (j.contains("init")) p.init = ParseInitStrategy(j.at("init").get<std::string>());
  if (j.contains("loss")) p.loss = ParseLoss(j.at("loss"));
  return p;
}

void ParseTrain(const json& j, TrainConfig& t, bool& augment_from_data) {
  CheckKeys(j, "train",
            {"total_iterations", "eval_every", "batch_new", "batch_old", "merge_unused_old_batch",
             "base_lr", "lr_grid", "weight_decay_grid", "momentum", "weight_decay", "ema_decay",
             "eval_with_ema", "augment"});
  Read(j, "total_iterations", t.total_iterations, "train");
  Read(j, "eval_every", t.eval_every, "train");
  Read(j, "batch_new", t.batch_new, "train");
  Read(j, "batch_old", t.batch_old, "train");
  Read(j, "merge_unused_old_batch", t.merge_unused_old_batch, "train");
  Read(j, "base_lr", t.base_lr, "train");
  Read(j, "lr_grid", t.lr_grid, "train");
  Read(j, "weight_decay_grid", t.weight_decay_grid, "train");
  Read(j, "momentum", t.momentum, "train");
  Read(j, "weight_decay", t.weight_decay, "train");
  Read(j, "ema_decay", t.ema_decay, "train");
  Read(j, "eval_with_ema", t.eval_with_ema, "train");
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    if (a.is_string()) {
      LECO_CHECK(a.get<std::string>() == "from_data", "config: train.augment must be an object or \"from_data\"");
      augment_from_data = true;
    } else {
      CheckKeys(a, "train.augment", {"noise_std", "drop_prob"});
      augment_from_data = false;
      Read(a, "noise_std", t.augment.noise_std, "train.augment");
      Read(a, "drop_prob", t.augment.drop_prob, "train.augment");
    }
  }
}

bool SafeName(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '+';
  });
}

}  // namespace

Taxonomy TaxonomySource::Build(std::uint64_t seed) const {
  if (kind == "balanced") return Taxonomy::Balanced(roots, branching);
  if (kind == "random") {
    std::mt19937_64 rng(MixSeed(seed, "taxonomy"));
    return Taxonomy::Random(levels, rng);
  }
  if (kind == "file") return ReadTaxonomyFile(path);
  internal::Fail("config: unknown taxonomy kind '", kind, "'");
}

std::size_t TaxonomySource::num_levels() const {
  if (kind == "balanced") return branching.size() + 1;
  if (kind == "random") return levels.size();
  if (kind == "file") return ReadTaxonomyFile(path).num_levels();
  internal::Fail("config: unknown taxonomy kind '", kind, "'");
}

void ExperimentConfig::Validate() const {
  LECO_CHECK(num_tps >= 1, "config: num_tps must be >= 1");
  LECO_CHECK(budget > 0, "config: budget must be positive");
  LECO_CHECK(!seeds.empty(), "config: seeds must be nonempty");
  LECO_CHECK(!arms.empty(), "config: no arms defined");
  LECO_CHECK(jobs >= 1, "config: jobs must be >= 1");
  LECO_CHECK(data.test_size > 0, "config: data.test_size must be positive");
  data.generator.Validate();
  train.Validate();
  if (taxonomy.kind == "balanced") {
    LECO_CHECK(taxonomy.roots >= 1, "config: taxonomy.roots must be >= 1");
  } else if (taxonomy.kind == "random") {
    LECO_CHECK(!taxonomy.levels.empty(), "config: taxonomy.levels must be nonempty");
  } else if (taxonomy.kind == "file") {
    LECO_CHECK(!taxonomy.path.empty(), "config: taxonomy.path must be set");
  } else {
    internal::Fail("config: unknown taxonomy kind '", taxonomy.kind, "'");
  }
  const std::size_t levels = taxonomy.num_levels();
  LECO_CHECK(levels == num_tps, "config: taxonomy has ", levels, " levels but num_tps is ",
             num_tps);
  std::set<std::string> names;
  for (const auto& arm : arms) {
    LECO_CHECK(SafeName(arm.name), "config: arm name '", arm.name,
               "' must be nonempty and use only [A-Za-z0-9._+-]");
    LECO_CHECK(names.insert(arm.name).second, "config: duplicate arm name '", arm.name, "'");
    LECO_CHECK(arm.tps.size() == num_tps, "config: arm '", arm.name, "' lists ", arm.tps.size(),
               " TP plans, expected ", num_tps);
    const auto& first = arm.tps.front();
    LECO_CHECK(first.annotation == AnnotationStrategy::kLabelNew, "config: arm '", arm.name,
               "' must use LabelNew at TP0");
    LECO_CHECK(first.init == InitStrategy::kTrainScratch, "config: arm '", arm.name,
               "' must use TrainScratch at TP0 (no previous model)");
    for (std::size_t t = 0; t < arm.tps.size(); ++t) {
      arm.tps[t].loss.Validate();
      LECO_CHECK(t > 0 || arm.tps[t].loss.ssl == SslMethod::kNone, "config: arm '", arm.name,
                 "' uses SSL at TP0, which has no old data");
    }
  }
}

TrainConfig ExperimentConfig::ResolvedTrain() const {
  TrainConfig t = train;
  if (augment_from_data) t.augment = AugmentParams::ForNoise(data.generator.sigma_noise);
  return t;
}

namespace {

void ParseTaxonomy(const json& t, TaxonomySource& src) {
  CheckKeys(t, "taxonomy", {"kind", "roots", "branching", "levels", "path"});
  Read(t, "kind", src.kind, "taxonomy");
  Read(t, "roots", src.roots, "taxonomy");
  Read(t, "branching", src.branching, "taxonomy");
  Read(t, "levels", src.levels, "taxonomy");
  Read(t, "path", src.path, "taxonomy");
}

void ParseData(const json& d, DataConfig& data) {
  CheckKeys(d, "data",
            {"dim", "sigma_coarse", "sigma_fine", "sigma_noise", "tail_exponent", "seed",
             "test_size"});
  auto& g = data.generator;
  Read(d, "dim", g.dim, "data");
  Read(d, "sigma_coarse", g.sigma_coarse, "data");
  Read(d, "sigma_fine", g.sigma_fine, "data");
  Read(d, "sigma_noise", g.sigma_noise, "data");
  Read(d, "tail_exponent", g.tail_exponent, "data");
  Read(d, "seed", g.seed, "data");
  Read(d, "test_size", data.test_size, "data");
}

json TaxonomyToJson(const TaxonomySource& src) {
  json j = {{"kind", src.kind}};
  if (src.kind == "balanced") {
    j["roots"] = src.roots;
    j["branching"] = src.branching;
  } else if (src.kind == "random") {
    j["levels"] = src.levels;
  } else {
    j["path"] = src.path;
  }
  return j;
}

json DataToJson(const DataConfig& data) {
  const auto& g = data.generator;
  return {{"dim", g.dim},
          {"sigma_coarse", g.sigma_coarse},
          {"sigma_fine", g.sigma_fine},
          {"sigma_noise", g.sigma_noise},
          {"tail_exponent", g.tail_exponent},
          {"seed", g.seed},
          {"test_size", data.test_size}};
}

json ParseJsonText(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    internal::Fail(what, ": invalid JSON: ", e.what());
  }
}

std::string SlurpFile(const std::string& path, const char* what) {
  std::ifstream in(path);
  LECO_CHECK(in, "cannot open ", what, " '", path, "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Data seed for one run seed; the config's data.seed acts as an extra salt.
std::uint64_t DataSeed(std::uint64_t run_seed, std::uint64_t salt) {
  return MixSeed(run_seed, "data/" + std::to_string(salt));
}

}  // namespace

DataJob DataJob::Parse(std::string_view json_text) {
  const json j = ParseJsonText(json_text, "data spec");
  CheckKeys(j, "data spec", {"taxonomy", "data", "sizes", "num_tps", "budget"});
  DataJob job;
  if (j.contains("taxonomy")) ParseTaxonomy(j.at("taxonomy"), job.taxonomy);
  if (j.contains("data")) ParseData(j.at("data"), job.data);
  if (j.contains("sizes")) {
    LECO_CHECK(!j.contains("num_tps") && !j.contains("budget"),
               "data spec: give either 'sizes' or 'num_tps' + 'budget'");
    Read(j, "sizes", job.sizes, "data spec");
  } else if (j.contains("num_tps") || j.contains("budget")) {
    std::size_t num_tps = 2, budget = 10000;
    Read(j, "num_tps", num_tps, "data spec");
    Read(j, "budget", budget, "data spec");
    job.sizes.assign(num_tps, budget);
  }
  LECO_CHECK(!job.sizes.empty(), "data spec: sizes must be nonempty");
  job.data.generator.Validate();
  return job;
}

DataJob DataJob::Load(const std::string& path) { return Parse(SlurpFile(path, "data spec")); }

std::string DataJob::ResolvedJson(std::uint64_t seed) const {
  json j = {{"taxonomy", TaxonomyToJson(taxonomy)},
            {"data", DataToJson(data)},
            {"sizes", sizes},
            {"seed", seed}};
  return j.dump(2);
}

void GenerateDataFiles(const DataJob& job, std::uint64_t seed, const std::string& dir) {
  const Taxonomy taxonomy = job.taxonomy.Build(seed);
  HierarchicalGaussianSpec gen = job.data.generator;
  gen.seed = DataSeed(seed, job.data.generator.seed);
  const TPDatasets pool = GeneratePool(gen, taxonomy, job.sizes, job.data.test_size);
  const fs::path root(dir);
  fs::create_directories(root);
  auto open = [&](const char* name) {
    std::ofstream out(root / name);
    LECO_CHECK(out, "cannot write '", (root / name).string(), "'");
    return out;
  };
  {
    auto out = open("taxonomy.txt");
    WriteTaxonomy(out, taxonomy);
  }
  {
    auto out = open("pool.csv");
    WriteSamplesCsv(out, pool.samples(), gen.dim, taxonomy.num_levels());
  }
  {
    auto out = open("test.csv");
    WriteSamplesCsv(out, pool.test(), gen.dim, taxonomy.num_levels());
  }
  {
    auto out = open("data_spec.json");
    out << job.ResolvedJson(seed) << '\n';
  }
}

ExperimentConfig ParseExperimentConfig(std::string_view json_text) {
  const json j = ParseJsonText(json_text, "config");
  CheckKeys(j, "config",
            {"name", "taxonomy", "data", "num_tps", "budget", "model", "arms", "train", "seeds",
             "out", "save_checkpoints", "jobs"});
  ExperimentConfig c;
  Read(j, "name", c.name, "config");
  if (j.contains("taxonomy")) ParseTaxonomy(j.at("taxonomy"), c.taxonomy);
  if (j.contains("data")) ParseData(j.at("data"), c.data);
  Read(j, "num_tps", c.num_tps, "config");
  Read(j, "budget", c.budget, "config");
  if (j.contains("model")) {
    CheckKeys(j.at("model"), "model", {"hidden"});
    Read(j.at("model"), "hidden", c.hidden, "model");
  }
  if (j.contains("train")) ParseTrain(j.at("train"), c.train, c.augment_from_data);
  Read(j, "seeds", c.seeds, "config");
  Read(j, "out", c.out, "config");
  Read(j, "save_checkpoints", c.save_checkpoints, "config");
  Read(j, "jobs", c.jobs, "config");
  LECO_CHECK(j.contains("arms") && j.at("arms").is_array(), "config: 'arms' must be an array");
  for (const auto& a : j.at("arms")) {
    CheckKeys(a, "arm", {"name", "tps", "annotation", "init", "loss"});
    ArmConfig arm;
    Read(a, "name", arm.name, "arm");
    if (a.contains("tps")) {
      LECO_CHECK(!a.contains("annotation") && !a.contains("init") && !a.contains("loss"),
                 "config: arm '", arm.name, "' mixes 'tps' with per-arm shorthand");
      for (const auto& p : a.at("tps")) arm.tps.push_back(ParsePlan(p));
    } else {
      TpPlan later;
      json shorthand = json::object();
      for (const char* k : {"annotation", "init", "loss"}) {
        if (a.contains(k)) shorthand[k] = a.at(k);
      }
      later = ParsePlan(shorthand);
      arm.tps.emplace_back();
      for (std::size_t t = 1; t < c.num_tps; ++t) arm.tps.push_back(later);
    }
    c.arms.push_back(std::move(arm));
  }
  c.Validate();
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  return ParseExperimentConfig(SlurpFile(path, "config file"));
}

std::string ResolvedConfigJson(const ExperimentConfig& c, bool include_run_fields) {
  json j;
  j["name"] = c.name;
  j["taxonomy"] = TaxonomyToJson(c.taxonomy);
  j["data"] = DataToJson(c.data);
  j["num_tps"] = c.num_tps;
  j["budget"] = c.budget;
  j["model"] = {{"hidden", c.hidden}};
  const TrainConfig t = c.ResolvedTrain();
  j["train"] = {{"total_iterations", t.total_iterations},
                {"eval_every", t.eval_every},
                {"batch_new", t.batch_new},
                {"batch_old", t.batch_old},
                {"merge_unused_old_batch", t.merge_unused_old_batch},
                {"base_lr", t.base_lr},
                {"lr_grid", t.lr_grid},
                {"weight_decay_grid", t.weight_decay_grid},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},
                {"ema_decay", t.ema_decay},
                {"eval_with_ema", t.eval_with_ema},
                {"augment", {{"noise_std", t.augment.noise_std}, {"drop_prob", t.augment.drop_prob}}}};
  json arms = json::array();
  for (const auto& arm : c.arms) {
    json tps = json::array();
    for (const auto& p : arm.tps) tps.push_back(PlanToJson(p));
    arms.push_back({{"name", arm.name}, {"tps", tps}});
  }
  j["arms"] = arms;
  j["save_checkpoints"] = c.save_checkpoints;
  if (include_run_fields) {
    j["seeds"] = c.seeds;
    j["out"] = c.out;
    j["jobs"] = c.jobs;
  }
  return j.dump(2);
}

std::string ConfigHash(const ExperimentConfig& config) {
  return Fnv1aHex(ResolvedConfigJson(config, false));
}

// ---------------------------------------------------------------------------
// Result tables

double Mean(std::span<const double> values) {
  LECO_CHECK(!values.empty(), "mean of an empty list");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double SampleStd(std::span<const double> values) {
  LECO_CHECK(!values.empty(), "std of an empty list");
  if (values.size() == 1) return 0.0;
  const double m = Mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::string FormatMeanStd(double mean, double std, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << mean << " ± " << std;
  return os.str();
}

std::vector<AggregateRow> ResultTable::Aggregate() const {
  std::vector<AggregateRow> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const AggregateRow& a) {
      return a.arm == r.arm && a.tp == r.tp && a.level == r.level;
    });
    if (it == out.end()) {
      out.push_back({r.arm, r.tp, r.level, 0, 0.0, 0.0});
      values.emplace_back();
      it = out.end() - 1;
    }
    values[static_cast<std::size_t>(it - out.begin())].push_back(r.test_macc);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].n = values[i].size();
    out[i].mean = leco::Mean(values[i]);
    out[i].std = SampleStd(values[i]);
  }
  return out;
}

double ResultTable::Mean(const std::string& arm, std::size_t tp, std::size_t level) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.arm == arm && r.tp == tp && r.level == level) v.push_back(r.test_macc);
  }
  LECO_CHECK(!v.empty(), "result table has no entry for arm '", arm, "', TP", tp, ", level ",
             level);
  return leco::Mean(v);
}

std::vector<std::string> ResultTable::Arms() const {
  std::vector<std::string> arms;
  for (const auto& r : rows) {
    if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) arms.push_back(r.arm);
  }
  return arms;
}

ReportFormat ParseReportFormat(const std::string& s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "json") return ReportFormat::kJson;
  if (s == "text") return ReportFormat::kText;
  internal::Fail("unknown report format '", s, "' (expected csv, json or text)");
}

namespace {

constexpr const char* kCsvHeader =
    "arm,tp,seed,level,test_macc,val_macc,best_iteration,labeled,fine_labeled";

}  // namespace

void WriteResultsCsv(std::ostream& out, const ResultTable& table) {
  out << kCsvHeader << '\n';
  for (const auto& r : table.rows) {
    out << r.arm << ',' << r.tp << ',' << r.seed << ',' << r.level << ','
        << FormatDouble(r.test_macc) << ',' << FormatDouble(r.val_macc) << ','
        << r.best_iteration << ',' << r.labeled << ',' << r.fine_labeled << '\n';
  }
  LECO_CHECK(out, "failed writing results CSV");
}

ResultTable ReadResultsCsv(std::istream& in) {
  std::string line;
  LECO_CHECK(std::getline(in, line), "results CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  LECO_CHECK(line == kCsvHeader, "results CSV: unexpected header '", line, "'");
  ResultTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = SplitString(line, ',');
    LECO_CHECK(f.size() == 9, "results CSV line ", lineno, ": expected 9 fields, got ", f.size());
    ResultRow r;
    r.arm = f[0];
    r.tp = static_cast<std::size_t>(ParseInt(f[1]));
    r.seed = static_cast<std::uint64_t>(ParseInt(f[2]));
    r.level = static_cast<std::size_t>(ParseInt(f[3]));
    r.test_macc = ParseDouble(f[4]);
    r.val_macc = ParseDouble(f[5]);
    r.best_iteration = static_cast<std::size_t>(ParseInt(f[6]));
    r.labeled = static_cast<std::size_t>(ParseInt(f[7]));
    r.fine_labeled = static_cast<std::size_t>(ParseInt(f[8]));
    table.rows.push_back(std::move(r));
  }
  return table;
}

void WriteResultsJson(std::ostream& out, const ResultTable& table) {
  // Doubles go out as shortest round-trip strings so NaN survives and the
  // text form matches the CSV exactly.
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"arm", r.arm},
                    {"tp", r.tp},
                    {"seed", r.seed},
                    {"level", r.level},
                    {"test_macc", FormatDouble(r.test_macc)},
                    {"val_macc", FormatDouble(r.val_macc)},
                    {"best_iteration", r.best_iteration},
                    {"labeled", r.labeled},
                    {"fine_labeled", r.fine_labeled}});
  }
  json aggregates = json::array();
  for (const auto& a : table.Aggregate()) {
    aggregates.push_back({{"arm", a.arm},
                          {"tp", a.tp},
                          {"level", a.level},
                          {"n", a.n},
                          {"mean", FormatDouble(a.mean)},
                          {"std", FormatDouble(a.std)}});
  }
  out << json{{"rows", rows}, {"aggregates", aggregates}}.dump(2) << '\n';
  LECO_CHECK(out, "failed writing results JSON");
}

ResultTable ReadResultsJson(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    internal::Fail("results JSON: ", e.what());
  }
  LECO_CHECK(j.contains("rows") && j.at("rows").is_array(), "results JSON: missing 'rows'");
  ResultTable table;
  for (const auto& x : j.at("rows")) {
    ResultRow r;
    try {
      r.arm = x.at("arm").get<std::string>();
      r.tp = x.at("tp").get<std::size_t>();
      r.seed = x.at("seed").get<std::uint64_t>();
      r.level = x.at("level").get<std::size_t>();
      r.test_macc = ParseDouble(x.at("test_macc").get<std::string>());
      r.val_macc = ParseDouble(x.at("val_macc").get<std::string>());
      r.best_iteration = x.at("best_iteration").get<std::size_t>();
      r.labeled = x.at("labeled").get<std::size_t>();
      r.fine_labeled = x.at("fine_labeled").get<std::size_t>();
    } catch (const json::exception& e) {
      internal::Fail("results JSON: bad row: ", e.what());
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

ResultTable LoadResults(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) {
    if (fs::exists(p / "results.csv")) {
      p /= "results.csv";
    } else if (fs::exists(p / "results.json")) {
      p /= "results.json";
    } else {
      internal::Fail("no results.csv or results.json in '", path, "'");
    }
  }
  std::ifstream in(p);
  LECO_CHECK(in, "cannot open results file '", p.string(), "'");
  if (p.extension() == ".json") return ReadResultsJson(in);
  return ReadResultsCsv(in);
}

void EmitReport(const ResultTable& table, ReportFormat format, std::ostream& out) {
  LECO_CHECK(!table.rows.empty(), "report: result table is empty");
  switch (format) {
    case ReportFormat::kCsv:
      WriteResultsCsv(out, table);
      return;
    case ReportFormat::kJson:
      WriteResultsJson(out, table);
      return;
    case ReportFormat::kText:
      break;
  }
  // One line per (arm, evaluation level); one column per TP; mAcc in percent.
  const auto agg = table.Aggregate();
  std::size_t num_tps = 0;
  std::size_t num_levels = 0;
  for (const auto& a : agg) {
    num_tps = std::max(num_tps, a.tp + 1);
    num_levels = std::max(num_levels, a.level + 1);
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"arm", "level"};
  for (std::size_t t = 0; t < num_tps; ++t) header.push_back("TP" + std::to_string(t));
  cells.push_back(header);
  for (const auto& arm : table.Arms()) {
    for (std::size_t level = num_levels; level-- > 0;) {
      std::vector<std::string> line = {arm, std::to_string(level)};
      bool any = false;
      for (std::size_t t = 0; t < num_tps; ++t) {
        auto it = std::find_if(agg.begin(), agg.end(), [&](const AggregateRow& a) {
          return a.arm == arm && a.tp == t && a.level == level;
        });
        if (it == agg.end()) {
          line.push_back("-");
        } else {
          any = true;
          line.push_back(FormatMeanStd(100.0 * it->mean, 100.0 * it->std));
        }
      }
      if (any) cells.push_back(std::move(line));
    }
  }
  // Column widths in code points ("±" is two bytes in UTF-8).
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) widths[i] = std::max(widths[i], width(line[i]));
  }
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i > 0) out << "  ";
      out << line[i];
      if (i + 1 < line.size()) out << std::string(widths[i] - width(line[i]), ' ');
    }
    out << '\n';
  }
  LECO_CHECK(out, "failed writing text report");
}

// ---------------------------------------------------------------------------
// Experiment runner

namespace {

struct TpState {
  TPDatasets data;
  Model model;
  double val_macc = 0.0;
  std::size_t best_iteration = 0;
  std::vector<double> test_by_level;
  TrainLog log;
  TrainLog teacher_log;
  bool has_teacher = false;
};

class SeedRunner {
 public:
  SeedRunner(const ExperimentConfig& config, std::uint64_t seed, std::ostream* progress,
             std::mutex* progress_mutex)
      : config_(config),
        train_(config.ResolvedTrain()),
        seed_(seed),
        taxonomy_(config.taxonomy.Build(seed)),
        progress_(progress),
        progress_mutex_(progress_mutex) {
    HierarchicalGaussianSpec gen = config.data.generator;
    gen.seed = DataSeed(seed, config.data.generator.seed);
    const std::vector<std::size_t> sizes(config.num_tps, config.budget);
    pool_ = std::make_unique<TPDatasets>(GeneratePool(gen, taxonomy_, sizes, config.data.test_size));
  }

  std::vector<ResultRow> Run(const fs::path& seed_dir) {
    std::vector<ResultRow> rows;
    for (const auto& arm : config_.arms) {
      std::string key;
      for (std::size_t t = 0; t < arm.tps.size(); ++t) {
        key = Extend(key, arm.tps[t]);
        const TpState& st = Ensure(key, arm.tps, t);
        for (std::size_t level = 0; level <= t; ++level) {
          ResultRow r;
          r.arm = arm.name;
          r.tp = t;
          r.seed = seed_;
          r.level = level;
          r.test_macc = st.test_by_level[level];
          r.val_macc = st.val_macc;
          r.best_iteration = st.best_iteration;
          r.labeled = st.data.num_labeled();
          r.fine_labeled = st.data.train().size() + st.data.val().size();
          rows.push_back(std::move(r));
        }
        if (!seed_dir.empty()) WriteArtifacts(seed_dir / arm.name / ("tp" + std::to_string(t)), st);
      }
    }
    return rows;
  }

 private:
  static std::string Extend(const std::string& prefix, const TpPlan& plan) {
    return prefix + (prefix.empty() ? "" : "|") + PlanToJson(plan).dump();
  }

  const TpState& Ensure(const std::string& key, const std::vector<TpPlan>& plans, std::size_t t) {
    if (auto it = cache_.find(key); it != cache_.end()) return *it->second;
    std::string prev_key;
    for (std::size_t i = 0; i < t; ++i) prev_key = Extend(prev_key, plans[i]);
    const TpState* prev = t > 0 ? &Ensure(prev_key, plans, t - 1) : nullptr;
    const TpPlan& plan = plans[t];

    auto state = std::make_unique<TpState>(TpState{prev ? prev->data : *pool_, Model{}, 0.0, 0,
                                                   {}, {}, {}, false});
    state->data.Apply(plan.annotation, static_cast<int>(t), config_.budget);

    const Model* teacher = nullptr;
    if (plan.loss.needs_teacher()) {
      // Same key as a base-only FinetunePrev arm on this prefix, so the two
      // share one trained model.
      TpPlan teacher_plan{plan.annotation, InitStrategy::kFinetunePrev, LossSpec{}};
      std::vector<TpPlan> teacher_plans(plans.begin(), plans.begin() + static_cast<long>(t));
      teacher_plans.push_back(teacher_plan);
      const TpState& ts = Ensure(Extend(prev_key, teacher_plan), teacher_plans, t);
      teacher = &ts.model;
      state->teacher_log = ts.log;
      state->has_teacher = true;
    }

    ModelShape shape;
    shape.input_dim = config_.data.generator.dim;
    shape.hidden = config_.hidden;
    shape.head_sizes = taxonomy_.level_sizes();
    shape.head_sizes.resize(t + 1);
    std::mt19937_64 init_rng(MixSeed(seed_, key + "#init"));
    Model init = InitForTp(prev ? &prev->model : nullptr, plan.init, shape, init_rng);
    TrainConfig cfg = train_;
    cfg.seed = MixSeed(seed_, key);
    TrainResult result;
    try {
      result = TrainTp(std::move(init), state->data, plan.loss, cfg, taxonomy_, teacher);
    } catch (const Error& e) {
      internal::Fail("seed ", seed_, ", TP", t, " (", ToString(plan.annotation), ", ",
                     ToString(plan.init), ", ", plan.loss.Name(), "): ", e.what());
    }
    state->model = std::move(result.best);
    state->val_macc = result.best_val_macc;
    state->best_iteration = result.best_iteration;
    state->log = std::move(result.log);
    for (std::size_t level = 0; level <= t; ++level) {
      state->test_by_level.push_back(
          EvaluateAtLevel(state->model, state->data.test(), taxonomy_, level).macc);
    }
    if (progress_) {
      std::lock_guard lock(*progress_mutex_);
      *progress_ << "seed " << seed_ << " TP" << t << " " << ToString(plan.annotation) << '/'
                 << ToString(plan.init) << '/' << plan.loss.Name() << std::fixed << std::setprecision(2) << ": val "
                 << 100.0 * state->val_macc << " test " << 100.0 * state->test_by_level.back()
                 << std::defaultfloat << '\n'
                 << std::flush;
    }
    auto [it, inserted] = cache_.emplace(key, std::move(state));
    return *it->second;
  }

  void WriteArtifacts(const fs::path& dir, const TpState& st) const {
    fs::create_directories(dir);
    {
      std::ofstream log(dir / "train_log.csv");
      st.log.WriteCsv(log);
      LECO_CHECK(log, "cannot write '", (dir / "train_log.csv").string(), "'");
    }
    if (st.has_teacher) {
      std::ofstream log(dir / "teacher_log.csv");
      st.teacher_log.WriteCsv(log);
    }
    if (config_.save_checkpoints) SaveCheckpoint(st.model, (dir / "checkpoint").string());
  }

  const ExperimentConfig& config_;
  TrainConfig train_;
  std::uint64_t seed_;
  Taxonomy taxonomy_;
  std::ostream* progress_;
  std::mutex* progress_mutex_;
  std::unique_ptr<TPDatasets> pool_;
  std::map<std::string, std::unique_ptr<TpState>> cache_;
};

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  LECO_CHECK(out, "cannot write '", path.string(), "'");
}

}  // namespace

ResultTable RunExperiment(const ExperimentConfig& config, const RunOptions& options) {
  config.Validate();
  fs::path root;
  if (!config.out.empty()) {
    root = fs::path(config.out) / ConfigHash(config);
    fs::create_directories(root);
    WriteText(root / "resolved_config.json", ResolvedConfigJson(config) + "\n");
  }
  std::vector<std::vector<ResultRow>> per_seed(config.seeds.size());
  std::vector<std::string> errors(config.seeds.size());
  std::mutex progress_mutex;
  auto run_one = [&](std::size_t i) {
    try {
      fs::path seed_dir;
      if (!root.empty()) {
        seed_dir = root / std::to_string(config.seeds[i]);
        fs::create_directories(seed_dir);
        WriteText(seed_dir / "resolved_config.json", ResolvedConfigJson(config) + "\n");
      }
      SeedRunner runner(config, config.seeds[i], options.progress, &progress_mutex);
      per_seed[i] = runner.Run(seed_dir);
      if (!seed_dir.empty()) {
        std::ofstream out(seed_dir / "results.csv");
        WriteResultsCsv(out, ResultTable{per_seed[i]});
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  const std::size_t jobs = std::min(config.jobs, config.seeds.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < config.seeds.size(); i = next++) run_one(i);
      });
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) internal::Fail(e);
  }
  ResultTable table;
  for (auto& rows : per_seed) {
    for (auto& r : rows) table.rows.push_back(std::move(r));
  }
  if (!root.empty()) {
    std::ofstream csv(root / "results.csv");
    WriteResultsCsv(csv, table);
    std::ofstream text(root / "report.txt");
    EmitReport(table, ReportFormat::kText, text);
  }
  return table;
}

SweepGrid SweepGrid::Parse(std::string_view json_text) {
  const json j = ParseJsonText(json_text, "grid");
  CheckKeys(j, "grid", {"lr", "weight_decay"});
  SweepGrid g;
  Read(j, "lr", g.lr, "grid");
  Read(j, "weight_decay", g.weight_decay, "grid");
  LECO_CHECK(!g.lr.empty() && !g.weight_decay.empty(),
             "grid: 'lr' and 'weight_decay' must both be nonempty lists");
  return g;
}

SweepGrid SweepGrid::Load(const std::string& path) { return Parse(SlurpFile(path, "grid file")); }

void SweepResult::WriteCellsCsv(std::ostream& out) const {
  out << "arm,lr,weight_decay,val_macc,selected\n";
  for (const auto& c : cells) {
    out << c.arm << ',' << FormatDouble(c.lr) << ',' << FormatDouble(c.weight_decay) << ','
        << FormatDouble(c.val_macc) << ',' << (c.selected ? 1 : 0) << '\n';
  }
}

SweepResult Sweep(const ExperimentConfig& config, const SweepGrid& grid,
                  const RunOptions& options) {
  LECO_CHECK(!grid.lr.empty() && !grid.weight_decay.empty(), "sweep: empty grid");
  struct CellRun {
    double lr, wd;
    ResultTable table;
  };
  std::vector<CellRun> runs;
  for (double lr : grid.lr) {
    for (double wd : grid.weight_decay) {
      ExperimentConfig c = config;
      c.train.base_lr = lr;
      c.train.weight_decay = wd;
      runs.push_back({lr, wd, RunExperiment(c, options)});
    }
  }
  SweepResult out;
  for (const auto& arm : config.arms) {
    std::size_t best = 0;
    double best_val = -1.0;
    const std::size_t first_cell = out.cells.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      std::vector<double> vals;
      for (const auto& r : runs[i].table.rows) {
        if (r.arm == arm.name && r.level == r.tp) vals.push_back(r.val_macc);
      }
      const double v = Mean(vals);
      out.cells.push_back({arm.name, runs[i].lr, runs[i].wd, v, false});
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    out.cells[first_cell + best].selected = true;
    for (const auto& r : runs[best].table.rows) {
      if (r.arm == arm.name) out.table.rows.push_back(r);
    }
  }
  if (!config.out.empty()) {
    const fs::path dir = fs::path(config.out) / ("sweep-" + ConfigHash(config));
    fs::create_directories(dir);
    std::ofstream cells(dir / "sweep_cells.csv");
    out.WriteCellsCsv(cells);
    std::ofstream csv(dir / "results.csv");
    WriteResultsCsv(csv, out.table);
  }
  return out;
}

}  // namespace leco
