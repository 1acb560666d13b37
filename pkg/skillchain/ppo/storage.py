# Copyright 2025 The Skillchain Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Rollout storage for PPO updates."""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from skillchain.envs.trajectory import Trajectory
from skillchain.errors import InputError


@dataclass
class TrajectoryBatch:
    """A (T steps x N envs) rollout segment.

    `values` carries one extra row: the bootstrap values after the last
    step. `means` and `log_std` describe the sampling policy and feed the
    analytic KL estimate. `episodes` lists the episodes that finished inside
    the segment.
    """

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    means: np.ndarray
    log_std: np.ndarray
    episodes: List[Trajectory] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_envs(self) -> int:
        return self.rewards.shape[1]

    @property
    def size(self) -> int:
        return self.rewards.size

    def validate(self) -> "TrajectoryBatch":
        """Raises InputError unless shapes align and rewards are finite."""
        t, n = self.rewards.shape
        expected = {
            "obs": (t, n),
            "actions": (t, n),
            "log_probs": (t, n),
            "dones": (t, n),
            "means": (t, n),
            "values": (t + 1, n),
        }
        for name, lead in expected.items():
            if getattr(self, name).shape[:2] != lead:
                raise InputError(
                    f"Batch field '{name}' has shape "
                    f"{getattr(self, name).shape}, expected leading {lead}."
                )
        if not np.all(np.isfinite(self.rewards)):
            raise InputError("Batch holds non-finite rewards.")
        return self

    def flat(self) -> Dict[str, np.ndarray]:
        """Per-step fields flattened to (T * N, ...)."""
        n = self.size
        return {
            "obs": self.obs.reshape(n, -1),
            "actions": self.actions.reshape(n, -1),
            "log_probs": self.log_probs.reshape(n),
            "means": self.means.reshape(n, -1),
        }

    @property
    def success_rate(self) -> float:
        if not self.episodes:
            return float("nan")
        return float(np.mean([e.success for e in self.episodes]))

    @property
    def mean_return(self) -> float:
        if not self.episodes:
            return float("nan")
        return float(np.mean([e.total_reward for e in self.episodes]))


def concat_batches(parts: Sequence[TrajectoryBatch]) -> TrajectoryBatch:
    """Joins worker segments along the environment axis."""
    if len(parts) == 1:
        return parts[0]

    def cat(name):
        return np.concatenate([getattr(p, name) for p in parts], axis=1)

    episodes = [e for p in parts for e in p.episodes]
    return TrajectoryBatch(
        obs=cat("obs"),
        actions=cat("actions"),
        log_probs=cat("log_probs"),
        rewards=cat("rewards"),
        values=cat("values"),
        dones=cat("dones"),
        means=cat("means"),
        log_std=parts[0].log_std,
        episodes=episodes,
    )
