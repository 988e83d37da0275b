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

#ifndef LECO_HIERINFER_HPP_
#define LECO_HIERINFER_HPP_

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "leco/ontology.hpp"

namespace leco {

// One observation of a sample (or pixel region) labeled under both the old
// and the new ontology. `weight` is the number of samples/pixels it stands for.
struct PairedItem {
  LabelId old_label = 0;
  LabelId new_label = 0;
  double weight = 1.0;
};

// Parent of each new label = the old label with the largest total
// co-occurrence weight, counted over the whole corpus. Ties go to the smallest
// old id. Throws if some new label has no positive-weight evidence.
std::vector<LabelId> InferParentMap(std::span<const PairedItem> items, std::size_t num_new,
                                    std::size_t num_old);

// mask[i] is true when items[i].old_label disagrees with the inferred parent
// of items[i].new_label; such items are excluded from coarse supervision.
std::vector<bool> MismatchMask(std::span<const PairedItem> items,
                               std::span<const LabelId> parent_map);

// Weighted fraction of masked items.
double MaskedFraction(std::span<const PairedItem> items, const std::vector<bool>& mask);

// Text lines `<old_id> <new_id> <weight>`; '#' comments allowed.
std::vector<PairedItem> ReadPairedLabeling(std::istream& in);
std::vector<PairedItem> ReadPairedLabelingFile(const std::string& path);
void WritePairedLabeling(std::ostream& out, std::span<const PairedItem> items);

}  // namespace leco

#endif  // LECO_HIERINFER_HPP_
