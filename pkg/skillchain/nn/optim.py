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

"""Adam optimizer and gradient utilities."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Tuple

import numpy as np

from skillchain.errors import ConfigError

logger = logging.getLogger(__name__)

AdamState = Tuple[int, Dict[str, np.ndarray], Dict[str, np.ndarray]]


@dataclass
class StepStats:
    grad_norm: float
    rejected: bool


class Adam:
    """Adaptive-moment optimizer over a dict of named arrays."""

    def __init__(
        self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
    ):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.steps = 0
        self.rejected = 0

    def step(
        self,
        params: Mapping[str, np.ndarray],
        grads: Mapping[str, np.ndarray],
        lr: float,
    ) -> Tuple[Dict[str, np.ndarray], StepStats]:
        """Returns updated copies of `params`.

        A gradient with any non-finite entry leaves parameters and moments
        untouched and is reported as rejected.
        """
        for name, value in params.items():
            grad = grads.get(name)
            if grad is None or grad.shape != value.shape:
                raise ConfigError(
                    f"Gradient for '{name}' is missing or mis-shaped."
                )
        norm = global_norm(grads)
        if not math.isfinite(norm):
            self.rejected += 1
            logger.warning("Rejected a non-finite gradient update.")
            return {k: v.copy() for k, v in params.items()}, StepStats(
                grad_norm=norm, rejected=True
            )
        self.steps += 1
        bias1 = 1.0 - self.beta1**self.steps
        bias2 = 1.0 - self.beta2**self.steps
        updated = {}
        for name, value in params.items():
            grad = grads[name]
            m = self.m.get(name, np.zeros_like(value))
            v = self.v.get(name, np.zeros_like(value))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.m[name], self.v[name] = m, v
            step = lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            updated[name] = value - step
        return updated, StepStats(grad_norm=norm, rejected=False)

    def snapshot(self) -> AdamState:
        return self.steps, dict(self.m), dict(self.v)

    def restore(self, snapshot: AdamState) -> None:
        """Rewinds step count and moments to a `snapshot()`."""
        self.steps, m, v = snapshot
        self.m, self.v = dict(m), dict(v)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    total = 0.0
    for grad in grads.values():
        total += float(np.sum(grad * grad))
    return math.sqrt(total)


def clip_by_global_norm(
    grads: Mapping[str, np.ndarray], max_norm: float
) -> Tuple[Dict[str, np.ndarray], float]:
    """Scales gradients so their joint L2 norm is at most `max_norm`."""
    norm = global_norm(grads)
    if not math.isfinite(norm) or norm <= max_norm or max_norm <= 0.0:
        return dict(grads), norm
    scale = max_norm / (norm + 1e-12)
    return {k: g * scale for k, g in grads.items()}, norm
