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

"""Terminal-window and return buffers that feed a feasibility model.

Each entry pairs the last W observations of a predecessor episode with the
return the successor sub-policy realized from that boundary. Failed
successor episodes are stored too; the success flag is kept for threshold
calibration.
"""

import collections
import logging
import os
import threading
from dataclasses import dataclass
from typing import Deque, List, Tuple

import numpy as np

from skillchain.envs.trajectory import (
    DEFAULT_WINDOW,
    Trajectory,
    terminal_window,
)
from skillchain.errors import CheckpointError, InputError
from skillchain.nn import serialization

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TerminalWindow:
    window: np.ndarray
    stage: int
    episode: int
    ret: float
    success: bool


class FeasibilityBuffers:
    """Fixed-capacity ring of (window, return, success) entries.

    Appends may come from several rollout threads; all access goes through
    one lock, and `snapshot` hands training a consistent copy.
    """

    def __init__(
        self,
        stage: int,
        capacity: int = 2000,
        window_length: int = DEFAULT_WINDOW,
    ):
        if capacity < 1:
            raise InputError(f"Buffer capacity must be positive: {capacity}.")
        self.stage = stage
        self.capacity = capacity
        self.window_length = window_length
        self._entries: Deque[TerminalWindow] = collections.deque(
            maxlen=capacity
        )
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def add(
        self, window, ret: float, success: bool, episode: int = 0
    ) -> TerminalWindow:
        window = np.asarray(window, dtype=np.float64)
        if window.shape[0] != self.window_length:
            window = terminal_window(list(window), self.window_length)
        if not np.all(np.isfinite(window)) or not np.isfinite(ret):
            raise InputError("Terminal windows and returns must be finite.")
        entry = TerminalWindow(
            window=window,
            stage=self.stage,
            episode=episode,
            ret=float(ret),
            success=bool(success),
        )
        with self._lock:
            self._entries.append(entry)
        return entry

    def snapshot(self) -> List[TerminalWindow]:
        with self._lock:
            return list(self._entries)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns stacked (windows, returns, successes) in insertion order."""
        entries = self.snapshot()
        if not entries:
            return (
                np.zeros((0, self.window_length, 0)),
                np.zeros(0),
                np.zeros(0, dtype=bool),
            )
        return (
            np.stack([e.window for e in entries]),
            np.array([e.ret for e in entries]),
            np.array([e.success for e in entries]),
        )

    @property
    def num_successes(self) -> int:
        return sum(e.success for e in self.snapshot())

    def to_arrays(self, prefix: str = "") -> dict:
        windows, returns, successes = self.arrays()
        episodes = np.array([e.episode for e in self.snapshot()], dtype=float)
        return {
            f"{prefix}windows": windows,
            f"{prefix}returns": returns,
            f"{prefix}successes": successes.astype(np.float64),
            f"{prefix}episodes": episodes,
        }

    def metadata(self) -> dict:
        return {
            "stage": self.stage,
            "capacity": self.capacity,
            "window_length": self.window_length,
        }

    @classmethod
    def from_arrays(
        cls, arrays: dict, metadata: dict, prefix: str = ""
    ) -> "FeasibilityBuffers":
        buffers = cls(
            stage=int(metadata["stage"]),
            capacity=int(metadata["capacity"]),
            window_length=int(metadata["window_length"]),
        )
        try:
            windows = arrays[f"{prefix}windows"]
            returns = arrays[f"{prefix}returns"]
            successes = arrays[f"{prefix}successes"]
            episodes = arrays[f"{prefix}episodes"]
        except KeyError as e:
            raise CheckpointError(f"Buffer arrays missing: {e}") from e
        for w, r, s, ep in zip(windows, returns, successes, episodes):
            buffers.add(w, float(r), bool(s), int(ep))
        return buffers


def record_transition(
    buffers: FeasibilityBuffers,
    trajectory: Trajectory,
    subtask_return: float,
    success_flag: bool,
) -> FeasibilityBuffers:
    """Stores the terminal window of `trajectory` with the successor's return.

    `trajectory` is the predecessor episode that ended at the boundary;
    `subtask_return` and `success_flag` describe the successor episode that
    started there.
    """
    buffers.add(
        terminal_window(trajectory, buffers.window_length),
        subtask_return,
        success_flag,
        trajectory.episode,
    )
    return buffers


def save_buffers(path: os.PathLike, buffers: FeasibilityBuffers) -> None:
    serialization.save_arrays(path, buffers.to_arrays(), buffers.metadata())
    logger.info("Saved %d feasibility samples to %s", len(buffers), path)


def load_buffers(path: os.PathLike) -> FeasibilityBuffers:
    """Raises CheckpointError if the file is missing or corrupt."""
    arrays, metadata = serialization.load_arrays(path)
    return FeasibilityBuffers.from_arrays(arrays, metadata)
