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

#include "leco/hierinfer.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "leco/error.hpp"
#include "leco/text_util.hpp"

namespace leco {
namespace {

void CheckItem(const PairedItem& item, std::size_t index, std::size_t num_new,
               std::size_t num_old) {
  LECO_CHECK(item.old_label >= 0 && static_cast<std::size_t>(item.old_label) < num_old,
             "paired item ", index, ": old label ", item.old_label, " out of range [0, ", num_old,
             ")");
  LECO_CHECK(item.new_label >= 0 && static_cast<std::size_t>(item.new_label) < num_new,
             "paired item ", index, ": new label ", item.new_label, " out of range [0, ", num_new,
             ")");
  LECO_CHECK(item.weight >= 0.0, "paired item ", index, ": negative weight ", item.weight);
}

}  // namespace

std::vector<LabelId> InferParentMap(std::span<const PairedItem> items, std::size_t num_new,
                                    std::size_t num_old) {
  LECO_CHECK(num_new > 0 && num_old > 0, "infer_parent_map: empty label sets");
  // Co-occurrence table, new x old.
  std::vector<double> counts(num_new * num_old, 0.0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    CheckItem(items[i], i, num_new, num_old);
    counts[static_cast<std::size_t>(items[i].new_label) * num_old +
           static_cast<std::size_t>(items[i].old_label)] += items[i].weight;
  }
  std::vector<LabelId> parents(num_new);
  for (std::size_t c = 0; c < num_new; ++c) {
    const double* row = counts.data() + c * num_old;
    std::size_t best = 0;
    double total = 0.0;
    for (std::size_t o = 0; o < num_old; ++o) {
      total += row[o];
      if (row[o] > row[best]) best = o;
    }
    LECO_CHECK(total > 0.0, "infer_parent_map: new label ", c,
               " has no co-occurrence evidence");
    parents[c] = static_cast<LabelId>(best);
  }
  return parents;
}

std::vector<bool> MismatchMask(std::span<const PairedItem> items,
                               std::span<const LabelId> parent_map) {
  std::vector<bool> mask(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    LECO_CHECK(item.new_label >= 0 &&
                   static_cast<std::size_t>(item.new_label) < parent_map.size(),
               "mismatch_mask: item ", i, " new label ", item.new_label, " out of range");
    LECO_CHECK(item.old_label >= 0, "mismatch_mask: item ", i, " has negative old label");
    mask[i] = item.old_label != parent_map[static_cast<std::size_t>(item.new_label)];
  }
  return mask;
}

double MaskedFraction(std::span<const PairedItem> items, const std::vector<bool>& mask) {
  LECO_CHECK(items.size() == mask.size(), "masked_fraction: size mismatch");
  double masked = 0.0, total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    total += items[i].weight;
    if (mask[i]) masked += items[i].weight;
  }
  return total > 0.0 ? masked / total : 0.0;
}

std::vector<PairedItem> ReadPairedLabeling(std::istream& in) {
  std::vector<PairedItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' ||
        line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::istringstream is(line);
    PairedItem item;
    LECO_CHECK(static_cast<bool>(is >> item.old_label >> item.new_label >> item.weight),
               "pairs line ", line_no, ": expected `<old_id> <new_id> <weight>`");
    LECO_CHECK(item.weight >= 0.0, "pairs line ", line_no, ": negative weight");
    items.push_back(item);
  }
  return items;
}

std::vector<PairedItem> ReadPairedLabelingFile(const std::string& path) {
  std::ifstream in(path);
  LECO_CHECK(in.good(), "cannot open pairs file ", path);
  return ReadPairedLabeling(in);
}

void WritePairedLabeling(std::ostream& out, std::span<const PairedItem> items) {
  for (const auto& item : items) {
    out << item.old_label << ' ' << item.new_label << ' ' << FormatDouble(item.weight) << '\n';
  }
}

}  // namespace leco
