# Copyright 2026 The phri Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Cooperative-game pHRI control with a learned intent predictor."""

from phri._core import (
    SCHEMA_VERSION,
    FormatError,
    GameController,
    InvalidArgument,
    Model,
    NumericalError,
    __version__,
    care_residual,
    discretize,
    init_model,
    load_model,
    read_episode,
    rollout,
    solve_care,
    solve_lyapunov,
    state_space,
    welch_t_test,
)

__all__ = [
    "SCHEMA_VERSION",
    "FormatError",
    "GameController",
    "InvalidArgument",
    "Model",
    "NumericalError",
    "__version__",
    "care_residual",
    "discretize",
    "init_model",
    "load_model",
    "read_episode",
    "rollout",
    "solve_care",
    "solve_lyapunov",
    "state_space",
    "welch_t_test",
]
