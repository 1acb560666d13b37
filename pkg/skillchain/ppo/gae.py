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

"""Generalized advantage estimation."""

from typing import Tuple

import numpy as np

from skillchain.errors import InputError


def compute_gae(
    rewards,
    values,
    dones,
    gamma: float,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (advantages, returns) for one rollout segment.

    Args:
        rewards: (T,) or (T, N) rewards.
        values: (T + 1,) or (T + 1, N) value estimates; the last row is the
          bootstrap value of the state after the segment.
        dones: (T,) or (T, N) flags; a done step does not bootstrap.
        gamma: Discount factor.
        lam: GAE smoothing factor.

    Raises:
        InputError: if the array lengths do not line up.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if (
        rewards.shape != dones.shape
        or values.shape[0] != rewards.shape[0] + 1
        or values.shape[1:] != rewards.shape[1:]
    ):
        raise InputError(
            f"GAE needs T rewards/dones and T + 1 values; got rewards "
            f"{rewards.shape}, values {values.shape}, dones {dones.shape}."
        )
    not_done = 1.0 - dones
    advantages = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0]) if rewards.ndim > 1 else 0.0
    for t in reversed(range(rewards.shape[0])):
        delta = rewards[t] + gamma * values[t + 1] * not_done[t] - values[t]
        running = delta + gamma * lam * not_done[t] * running
        advantages[t] = running
    return advantages, advantages + values[:-1]


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Rescales to mean 0 and standard deviation 1 over the whole batch."""
    advantages = np.asarray(advantages, dtype=np.float64)
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8)
