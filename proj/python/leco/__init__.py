# Copyright 2026 The LECO Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Learning with an evolving class ontology."""

from leco._core import (
    LecoError,
    Taxonomy,
    config_hash,
    cosine_lr,
    cross_entropy,
    generate_data,
    infer_parent_map,
    load_results,
    marginalize,
    mean_class_accuracy,
    refine_condition,
    refine_filter_accepts,
    report,
    resolve_config,
    run_experiment,
)

__all__ = [
    "LecoError",
    "Taxonomy",
    "config_hash",
    "cosine_lr",
    "cross_entropy",
    "generate_data",
    "infer_parent_map",
    "load_results",
    "marginalize",
    "mean_class_accuracy",
    "refine_condition",
    "refine_filter_accepts",
    "report",
    "resolve_config",
    "run_experiment",
]
