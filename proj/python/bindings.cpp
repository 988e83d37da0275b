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


#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "leco/error.hpp"
#include "leco/harness.hpp"
#include "leco/hierinfer.hpp"
#include "leco/losses.hpp"
#include "leco/metrics.hpp"
#include "leco/ontology.hpp"
#include "leco/trainer.hpp"

namespace py = pybind11;
using namespace leco;

namespace {

py::dict RowToDict(const ResultRow& r) {
  py::dict d;
  d["arm"] = r.arm;
  d["tp"] = r.tp;
  d["seed"] = r.seed;
  d["level"] = r.level;
  d["test_macc"] = r.test_macc;
  d["val_macc"] = r.val_macc;
  d["best_iteration"] = r.best_iteration;
  d["labeled"] = r.labeled;
  d["fine_labeled"] = r.fine_labeled;
  return d;
}

py::list TableToList(const ResultTable& t) {
  py::list out;
  for (const auto& r : t.rows) out.append(RowToDict(r));
  return out;
}

ResultTable ListToTable(const py::list& rows) {
  ResultTable t;
  for (const auto& item : rows) {
    const auto d = item.cast<py::dict>();
    ResultRow r;
    r.arm = d["arm"].cast<std::string>();
    r.tp = d["tp"].cast<std::size_t>();
    r.seed = d["seed"].cast<std::uint64_t>();
    r.level = d["level"].cast<std::size_t>();
    r.test_macc = d["test_macc"].cast<double>();
    r.val_macc = d["val_macc"].cast<double>();
    r.best_iteration = d["best_iteration"].cast<std::size_t>();
    r.labeled = d["labeled"].cast<std::size_t>();
    r.fine_labeled = d["fine_labeled"].cast<std::size_t>();
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "LECO core bindings";
  py::register_exception<Error>(m, "LecoError", PyExc_ValueError);

  py::class_<Taxonomy>(m, "Taxonomy")
      .def_static(
          "balanced",
          [](std::size_t roots, const std::vector<std::size_t>& branching) {
            return Taxonomy::Balanced(roots, branching);
          },
          py::arg("roots"), py::arg("branching"))
      .def_static(
          "random",
          [](const std::vector<std::size_t>& sizes, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return Taxonomy::Random(sizes, rng);
          },
          py::arg("level_sizes"), py::arg("seed"))
      .def_static(
          "from_parent_maps",
          [](std::size_t root_size, const std::vector<std::vector<LabelId>>& maps) {
            return Taxonomy::FromParentMaps(root_size, maps);
          },
          py::arg("root_size"), py::arg("parent_maps"))
      .def_static("load", &ReadTaxonomyFile, py::arg("path"))
      .def("dumps",
           [](const Taxonomy& t) {
             std::ostringstream os;
             WriteTaxonomy(os, t);
             return os.str();
           })
      .def_property_readonly("num_levels", &Taxonomy::num_levels)
      .def_property_readonly("level_sizes", &Taxonomy::level_sizes)
      .def("parent", &Taxonomy::parent, py::arg("level"), py::arg("label"))
      .def("children", &Taxonomy::children, py::arg("level"), py::arg("label"))
      .def("coarsen", &Taxonomy::Coarsen, py::arg("label"), py::arg("level"),
           py::arg("target_level"))
      .def(
          "edge_matrix",
          [](const Taxonomy& t, std::size_t fine, std::size_t coarse) {
            return t.BuildEdgeMatrix(fine, coarse).ToDense();
          },
          py::arg("fine_level"), py::arg("coarse_level"));

  m.def(
      "marginalize",
      [](const std::vector<double>& q, const Eigen::MatrixXd& edges) {
        return Marginalize(q, EdgeMatrix::FromDense(edges));
      },
      py::arg("q"), py::arg("edges"));

  m.def(
      "infer_parent_map",
      [](const std::vector<LabelId>& old_labels, const std::vector<LabelId>& new_labels,
         const std::vector<double>& weights, std::size_t num_new, std::size_t num_old) {
        LECO_CHECK(old_labels.size() == new_labels.size(),
                   "infer_parent_map: label lists differ in length");
        LECO_CHECK(weights.empty() || weights.size() == old_labels.size(),
                   "infer_parent_map: weights must match the labels");
        std::vector<PairedItem> items(old_labels.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
          items[i] = {old_labels[i], new_labels[i], weights.empty() ? 1.0 : weights[i]};
        }
        const auto parents = InferParentMap(items, num_new, num_old);
        const auto mask = MismatchMask(items, parents);
        return py::make_tuple(parents, std::vector<bool>(mask.begin(), mask.end()),
                              MaskedFraction(items, mask));
      },
      py::arg("old_labels"), py::arg("new_labels"), py::arg("weights") = std::vector<double>{},
      py::arg("num_new"), py::arg("num_old"),
      "Returns (parent_map, mismatch_mask, masked_fraction).");

  m.def("cosine_lr", &CosineLr, py::arg("k"), py::arg("total"), py::arg("eta"));

  m.def(
      "mean_class_accuracy",
      [](const std::vector<LabelId>& predictions, const std::vector<LabelId>& truths,
         std::size_t num_classes) { return MeanClassAccuracy(predictions, truths, num_classes).macc; },
      py::arg("predictions"), py::arg("truths"), py::arg("num_classes"));

  m.def(
      "cross_entropy",
      [](const Eigen::VectorXd& q, const Eigen::VectorXd& target) {
        auto r = CrossEntropy(q, target);
        return py::make_tuple(r.loss, r.logit_grad);
      },
      py::arg("q"), py::arg("target"), "Returns (loss, logit_gradient).");

  m.def(
      "refine_condition",
      [](const Eigen::VectorXd& q, LabelId coarse, const Eigen::MatrixXd& edges)
          -> std::optional<Eigen::VectorXd> {
        return RefineCondition(q, coarse, EdgeMatrix::FromDense(edges));
      },
      py::arg("q"), py::arg("coarse_label"), py::arg("edges"));

  m.def(
      "refine_filter_accepts",
      [](const Eigen::VectorXd& q, LabelId coarse, const Eigen::MatrixXd& edges) {
        return RefineFilter(PseudoLabelSelfTraining(q, StMode::kHard), coarse,
                            EdgeMatrix::FromDense(edges))
            .accepted;
      },
      py::arg("q"), py::arg("coarse_label"), py::arg("edges"));

  m.def(
      "resolve_config",
      [](const std::string& json_text) {
        return ResolvedConfigJson(ParseExperimentConfig(json_text));
      },
      py::arg("json_text"));

  m.def(
      "config_hash",
      [](const std::string& json_text) { return ConfigHash(ParseExperimentConfig(json_text)); },
      py::arg("json_text"));

  m.def(
      "run_experiment",
      [](const std::string& json_text, std::optional<std::vector<std::uint64_t>> seeds,
         std::optional<std::string> out) {
        auto config = ParseExperimentConfig(json_text);
        if (seeds) config.seeds = *seeds;
        if (out) config.out = *out;
        config.Validate();
        ResultTable table;
        {
          py::gil_scoped_release release;
          table = RunExperiment(config);
        }
        return TableToList(table);
      },
      py::arg("json_text"), py::arg("seeds") = py::none(), py::arg("out") = py::none(),
      "Runs an experiment config (JSON text) and returns its result rows.");

  m.def(
      "generate_data",
      [](const std::string& json_text, std::uint64_t seed, const std::string& out) {
        GenerateDataFiles(DataJob::Parse(json_text), seed, out);
      },
      py::arg("json_text"), py::arg("seed"), py::arg("out"));

  m.def(
      "load_results",
      [](const std::string& path) { return TableToList(LoadResults(path)); }, py::arg("path"));

  m.def(
      "report",
      [](const py::list& rows, const std::string& format) {
        std::ostringstream os;
        EmitReport(ListToTable(rows), ParseReportFormat(format), os);
        return os.str();
      },
      py::arg("rows"), py::arg("format") = "text");
}
