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

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "leco/error.hpp"
#include "leco/text_util.hpp"

using namespace leco;

TEST_CASE("doubles round trip through their shortest text") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(ParseDouble(FormatDouble(v)) == v);
  }
  CHECK(FormatDouble(0.5) == "0.5");
  CHECK(std::isnan(ParseDouble(FormatDouble(std::numeric_limits<double>::quiet_NaN()))));
}

TEST_CASE("number parsing is strict") {
  CHECK(ParseInt(" 42 ") == 42);
  CHECK(ParseInt("-3") == -3);
  CHECK_THROWS_AS(ParseInt("4x"), Error);
  CHECK_THROWS_AS(ParseInt(""), Error);
  CHECK_THROWS_AS(ParseDouble("1.5.2"), Error);
}

TEST_CASE("split keeps empty fields") {
  CHECK(SplitString("a,,b", ',') == std::vector<std::string>{"a", "", "b"});
  CHECK(SplitString("", ',') == std::vector<std::string>{""});
}

TEST_CASE("fnv-1a reference values") {
  CHECK(Fnv1aHex("") == "cbf29ce484222325");
  CHECK(Fnv1aHex("a") == "af63dc4c8601ec8c");
  CHECK(Fnv1aHex("foobar") == "85944171f73967e8");
}
