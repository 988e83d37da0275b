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

#ifndef LECO_TEXT_UTIL_HPP_
#define LECO_TEXT_UTIL_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace leco {

// Shortest decimal form that parses back to the identical double.
std::string FormatDouble(double v);
double ParseDouble(std::string_view s);
long long ParseInt(std::string_view s);

std::vector<std::string> SplitString(std::string_view s, char sep);

// 64-bit FNV-1a, printed as 16 hex digits.
std::string Fnv1aHex(std::string_view data);

}  // namespace leco

#endif  // LECO_TEXT_UTIL_HPP_
