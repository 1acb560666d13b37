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

"""Episode records, terminal windows and trajectory CSV export."""

import os
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from skillchain import csvio
from skillchain.envs.state import ACTION_FIELDS, EnvState, obs_fields
from skillchain.errors import InputError
from skillchain.nn.attention import fit_window

DEFAULT_WINDOW = 10

TRAJECTORY_HEAD = ("episode", "stage", "step", "reward", "success", "done")


@dataclass
class Trajectory:
    """One stage episode.

    `observations` holds the reset observation followed by one observation
    per step, so it is one longer than `actions` and `rewards`.
    """

    stage: int
    observations: List[np.ndarray] = field(default_factory=list)
    actions: List[np.ndarray] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    shaped_rewards: List[float] = field(default_factory=list)
    success: bool = False
    episode: int = 0
    initial_state: Optional[EnvState] = None
    final_state: Optional[EnvState] = None

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    @property
    def shaped_return(self) -> float:
        """Return under the training reward; the task return if unshaped."""
        if not self.shaped_rewards:
            return self.total_reward
        return float(sum(self.shaped_rewards))


def terminal_window(
    trajectory: Union[Trajectory, Sequence[np.ndarray]],
    length: int = DEFAULT_WINDOW,
) -> np.ndarray:
    """Returns the last `length` observations as a (length, obs) array.

    Shorter trajectories are front-padded with their first observation.

    Raises:
        InputError: if the trajectory has no observations.
    """
    obs = (
        trajectory.observations
        if isinstance(trajectory, Trajectory)
        else trajectory
    )
    if len(obs) == 0:
        raise InputError("Cannot take a window of an empty trajectory.")
    return fit_window(np.stack([np.asarray(o) for o in obs[-length:]]), length)


def trajectory_columns(suite: str) -> List[str]:
    obs_cols = [f"obs_{name}" for name in obs_fields(suite)]
    act_cols = [f"act_{name}" for name in ACTION_FIELDS]
    return list(TRAJECTORY_HEAD) + obs_cols + act_cols


def trajectory_rows(suite: str, trajectory: Trajectory) -> Iterable[dict]:
    """One row per step: the observation after it and the action taken."""
    cols = trajectory_columns(suite)
    obs_cols = cols[len(TRAJECTORY_HEAD) : -len(ACTION_FIELDS)]
    act_cols = cols[-len(ACTION_FIELDS) :]
    last = len(trajectory.rewards) - 1
    for t, reward in enumerate(trajectory.rewards):
        row = {
            "episode": trajectory.episode,
            "stage": trajectory.stage,
            "step": t + 1,
            "reward": float(reward),
            "success": trajectory.success and t == last,
            "done": t == last,
        }
        row.update(zip(obs_cols, map(float, trajectory.observations[t + 1])))
        row.update(zip(act_cols, map(float, trajectory.actions[t])))
        yield row


def export_trajectories_csv(
    path: os.PathLike, suite: str, trajectories: Iterable[Trajectory]
) -> int:
    """Writes step rows of all trajectories; returns the number of rows."""

    def rows():
        for traj in trajectories:
            yield from trajectory_rows(suite, traj)

    return csvio.write_csv(path, trajectory_columns(suite), rows())
