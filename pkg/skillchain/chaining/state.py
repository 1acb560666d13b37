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

"""Chain state: sub-policies, feasibility models and their buffers."""

import collections
import dataclasses
import threading
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional

import numpy as np

from skillchain.config import ChainSpec
from skillchain.envs.state import EnvState
from skillchain.errors import CheckpointError
from skillchain.feasibility.buffers import FeasibilityBuffers
from skillchain.feasibility.model import TransitionModel
from skillchain.ppo.agent import ActorCritic

PHASE_EMPTY = "empty"
PHASE_FORWARD = "forward"
PHASE_BACKWARD = "backward"
PHASE_MONOLITHIC = "monolithic"


class InitialStateBuffer:
    """Ring of full environment states admitted as stage start states."""

    def __init__(self, capacity: int = 1000):
        self.capacity = capacity
        self._states: Deque[EnvState] = collections.deque(maxlen=capacity)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._states)

    def add(self, state: EnvState) -> None:
        with self._lock:
            self._states.append(state)

    def clear(self) -> None:
        with self._lock:
            self._states.clear()

    def states(self) -> List[EnvState]:
        with self._lock:
            return list(self._states)

    def sample(self, rng: np.random.Generator) -> Optional[EnvState]:
        """Uniform draw; None when the buffer is empty."""
        with self._lock:
            if not self._states:
                return None
            return self._states[int(rng.integers(len(self._states)))]


def _plain(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def state_to_dict(state: EnvState) -> Dict[str, Any]:
    """JSON-ready dict holding only plain Python scalars."""
    out = {k: _plain(v) for k, v in dataclasses.asdict(state).items()}
    for name in ("prev_action", "obs_bias", "action_bias"):
        out[name] = [float(v) for v in getattr(state, name)]
    return out


def state_from_dict(data: Dict[str, Any]) -> EnvState:
    try:
        values = dict(data)
        for name in ("prev_action", "obs_bias", "action_bias"):
            values[name] = tuple(values.get(name, ()))
        return EnvState(**values)
    except TypeError as e:
        raise CheckpointError(
            f"Stored environment state is invalid: {e}"
        ) from e


@dataclass
class ChainState:
    """Everything a trained chain needs for fine-tuning and execution.

    Lists are indexed by zero-based stage. `models[i]` is the feasibility
    model of stage i, scoring terminal windows of stage i - 1, so
    `models[0]` is always None; likewise `init_buffers[i]` holds the start
    states of stage i admitted from stage i - 1 successes.
    """

    spec: ChainSpec
    policies: List[ActorCritic] = field(default_factory=list)
    models: List[Optional[TransitionModel]] = field(default_factory=list)
    feasibility_buffers: List[Optional[FeasibilityBuffers]] = field(
        default_factory=list
    )
    init_buffers: List[Optional[InitialStateBuffer]] = field(
        default_factory=list
    )
    method: str = "ours"
    phase: str = PHASE_EMPTY
    iteration: int = 0
    history: Dict[str, List[Dict[str, float]]] = field(default_factory=dict)

    @property
    def num_stages(self) -> int:
        return len(self.spec.stages)

    @property
    def monolithic(self) -> bool:
        return self.phase == PHASE_MONOLITHIC

    def calibrated_models(self) -> List[Optional[TransitionModel]]:
        """Models usable for switching; uncalibrated entries become None."""
        return [
            m if m is not None and m.threshold is not None else None
            for m in self.models
        ]

    @classmethod
    def empty(cls, spec: ChainSpec, method: str = "ours") -> "ChainState":
        k = len(spec.stages)
        return cls(
            spec=spec,
            models=[None] * k,
            feasibility_buffers=[None] * k,
            init_buffers=[None]
            + [InitialStateBuffer(spec.buffer_capacity) for _ in range(k - 1)],
            method=method,
        )
