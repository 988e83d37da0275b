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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "leco/error.hpp"
#include "leco/harness.hpp"
#include "leco/hierinfer.hpp"
#include "leco/ontology.hpp"
#include "leco/text_util.hpp"

namespace {

namespace fs = std::filesystem;

std::vector<std::uint64_t> ParseSeedList(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : leco::SplitString(text, ',')) {
    const long long v = leco::ParseInt(part);
    LECO_CHECK(v >= 0, "seed ", v, " is negative");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  LECO_CHECK(!seeds.empty(), "--seeds is empty");
  return seeds;
}

void ReportTable(const leco::ResultTable& table, std::ostream& out) {
  leco::EmitReport(table, leco::ReportFormat::kText, out);
}

int Fail(const std::string& command, const std::string& kind, const std::string& message) {
  nlohmann::json err = {{"status", "error"}, {"command", command}, {"kind", kind},
                        {"message", message}};
  std::cerr << err.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning with evolving class ontologies: experiments on synthetic data"};
  app.require_subcommand(1);

  std::string config_path, seeds_text, out_dir, grid_path;
  std::size_t jobs = 0;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run every arm of an experiment config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seeds", seeds_text, "Comma-separated seed list, e.g. 0,1,2,3,4");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--jobs", jobs, "Seeds trained in parallel");
  run->add_flag("--quiet", quiet, "No per-TP progress lines");

  auto* sweep = app.add_subcommand("sweep", "Grid search over learning rate and weight decay");
  sweep->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid_path, "Grid file: {\"lr\": [...], \"weight_decay\": [...]}")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--seeds", seeds_text, "Comma-separated seed list");
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_option("--jobs", jobs, "Seeds trained in parallel");
  sweep->add_flag("--quiet", quiet, "No per-TP progress lines");

  std::string spec_path;
  std::uint64_t data_seed = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic hierarchical dataset");
  gen->add_option("--spec", spec_path, "Data spec (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--seed", data_seed, "Random seed")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string pairs_path, taxonomy_out, mask_out;
  auto* infer = app.add_subcommand("infer-hierarchy",
                                   "Infer the old-to-new parent map from paired labels");
  infer->add_option("--pairs", pairs_path, "Lines of '<old_id> <new_id> <weight>'")
      ->required()
      ->check(CLI::ExistingFile);
  infer->add_option("--out", taxonomy_out, "Output taxonomy file")->required();
  infer->add_option("--mask-out", mask_out, "Optional per-item mismatch mask (0/1 per line)");

  std::string in_path, format = "text", report_out;
  auto* report = app.add_subcommand("report", "Render a result table");
  report->add_option("--in", in_path, "Run directory or results file")->required();
  report->add_option("--format", format, "csv, json or text")
      ->check(CLI::IsMember({"csv", "json", "text"}));
  report->add_option("--out", report_out, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return Fail(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(),
                "usage", e.what());
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (*run || *sweep) {
      leco::ExperimentConfig config = leco::LoadExperimentConfig(config_path);
      if (!seeds_text.empty()) config.seeds = ParseSeedList(seeds_text);
      if (!out_dir.empty()) config.out = out_dir;
      if (jobs > 0) config.jobs = jobs;
      if (config.out.empty()) config.out = "runs";
      config.Validate();
      leco::RunOptions options;
      if (!quiet) options.progress = &std::cerr;
      if (*run) {
        const auto table = leco::RunExperiment(config, options);
        ReportTable(table, std::cout);
        std::cout << "results: " << (fs::path(config.out) / leco::ConfigHash(config)).string()
                  << '\n';
      } else {
        const auto result = leco::Sweep(config, leco::SweepGrid::Load(grid_path), options);
        result.WriteCellsCsv(std::cout);
        std::cout << '\n';
        ReportTable(result.table, std::cout);
        std::cout << "results: "
                  << (fs::path(config.out) / ("sweep-" + leco::ConfigHash(config))).string()
                  << '\n';
      }
    } else if (*gen) {
      leco::GenerateDataFiles(leco::DataJob::Load(spec_path), data_seed, out_dir);
      std::cout << "wrote " << out_dir << '\n';
    } else if (*infer) {
      const auto items = leco::ReadPairedLabelingFile(pairs_path);
      LECO_CHECK(!items.empty(), "no paired labels in '", pairs_path, "'");
      std::size_t num_old = 0, num_new = 0;
      for (const auto& it : items) {
        num_old = std::max(num_old, static_cast<std::size_t>(it.old_label) + 1);
        num_new = std::max(num_new, static_cast<std::size_t>(it.new_label) + 1);
      }
      const auto parents = leco::InferParentMap(items, num_new, num_old);
      std::vector<std::vector<std::string>> names(2);
      for (std::size_t i = 0; i < num_old; ++i) names[0].push_back("old_" + std::to_string(i));
      for (std::size_t i = 0; i < num_new; ++i) names[1].push_back("new_" + std::to_string(i));
      std::vector<std::vector<leco::LabelId>> maps = {std::vector<leco::LabelId>(num_old, -1),
                                                      parents};
      std::ofstream out(taxonomy_out);
      LECO_CHECK(out, "cannot write '", taxonomy_out, "'");
      leco::WriteTaxonomyRecords(out, names, maps);
      const auto mask = leco::MismatchMask(items, parents);
      if (!mask_out.empty()) {
        std::ofstream m(mask_out);
        LECO_CHECK(m, "cannot write '", mask_out, "'");
        for (bool b : mask) m << (b ? 1 : 0) << '\n';
      }
      std::cout << "old classes " << num_old << ", new classes " << num_new
                << ", masked fraction " << leco::FormatDouble(leco::MaskedFraction(items, mask))
                << '\n';
    } else if (*report) {
      const auto table = leco::LoadResults(in_path);
      const auto fmt = leco::ParseReportFormat(format);
      if (report_out.empty()) {
        leco::EmitReport(table, fmt, std::cout);
      } else {
        std::ofstream out(report_out);
        LECO_CHECK(out, "cannot write '", report_out, "'");
        leco::EmitReport(table, fmt, out);
      }
    }
  } catch (const leco::Error& e) {
    return Fail(command, "invalid", e.what());
  } catch (const std::exception& e) {
    return Fail(command, "internal", e.what());
  }
  return 0;
}
