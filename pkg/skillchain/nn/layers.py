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

"""Dense networks and the diagonal-Gaussian policy head."""

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from skillchain.errors import ConfigError
from skillchain.nn import autodiff as ad
from skillchain.nn.autodiff import GradientTape, Node

ACTIVATIONS = ("tanh", "elu", "none")

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _activate(x: Node, activation: str) -> Node:
    if activation == "tanh":
        return ad.tanh(x)
    if activation == "elu":
        return ad.elu(x)
    return x


@dataclass
class DenseParams:
    """Weights and biases of a multilayer perceptron.

    `arrays` holds `w{i}` of shape (sizes[i], sizes[i + 1]) and `b{i}` of
    shape (sizes[i + 1],); `activations[i]` applies after layer i.
    """

    sizes: Tuple[int, ...]
    activations: Tuple[str, ...]
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        activation: str = "elu",
        output_activation: str = "none",
        output_scale: float = 1.0,
    ) -> "DenseParams":
        """Returns LeCun-normal weights and zero biases.

        Args:
            sizes: Layer widths, input first and output last.
            rng: Source of randomness for the weights.
            activation: Hidden-layer activation, 'tanh' or 'elu'.
            output_activation: Activation after the last layer.
            output_scale: Multiplier on the last layer's initial weights;
              policy means use a small value so initial actions stay near 0.
        """
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2:
            raise ConfigError(f"An MLP needs at least 2 sizes, got {sizes}.")
        n_layers = len(sizes) - 1
        activations = (activation,) * (n_layers - 1) + (output_activation,)
        arrays = {}
        for i in range(n_layers):
            scale = 1.0 / math.sqrt(sizes[i])
            if i == n_layers - 1:
                scale *= output_scale
            arrays[f"w{i}"] = rng.normal(0.0, scale, (sizes[i], sizes[i + 1]))
            arrays[f"b{i}"] = np.zeros(sizes[i + 1])
        params = cls(sizes=sizes, activations=activations, arrays=arrays)
        params.validate()
        return params

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def validate(self) -> None:
        """Raises ConfigError if shapes disagree or entries are not finite."""
        if len(self.activations) != self.n_layers:
            raise ConfigError(
                f"{len(self.activations)} activations for "
                f"{self.n_layers} layers."
            )
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ConfigError(f"Unknown activation '{act}'.")
        for i in range(self.n_layers):
            w = self.arrays.get(f"w{i}")
            b = self.arrays.get(f"b{i}")
            if w is None or b is None:
                raise ConfigError(f"Layer {i} is missing its weights.")
            if w.shape != (self.sizes[i], self.sizes[i + 1]):
                raise ConfigError(
                    f"w{i} has shape {w.shape}, expected "
                    f"{(self.sizes[i], self.sizes[i + 1])}."
                )
            if b.shape != (self.sizes[i + 1],):
                raise ConfigError(f"b{i} has shape {b.shape}.")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigError(f"Layer {i} has non-finite entries.")

    def copy(self) -> "DenseParams":
        return DenseParams(
            sizes=self.sizes,
            activations=self.activations,
            arrays={k: v.copy() for k, v in self.arrays.items()},
        )


def mlp_apply(
    arrays: Mapping[str, Node],
    activations: Sequence[str],
    x: Node,
) -> Node:
    """Runs the layers on nodes; used inside larger differentiable models."""
    h = x
    for i, act in enumerate(activations):
        h = _activate(h @ arrays[f"w{i}"] + arrays[f"b{i}"], act)
    return h


def mlp_forward(
    params: DenseParams,
    x,
    tape: Optional[GradientTape] = None,
    scope: str = "",
):
    """Evaluates the network on a vector or a batch of row vectors.

    Returns a numpy array, or a tracked `Node` when `tape` is given.

    Raises:
        ConfigError: if the input width does not match the first layer.
    """
    value = ad.value_of(x)
    if value.shape[-1] != params.sizes[0]:
        raise ConfigError(
            f"Input has width {value.shape[-1]}, the network expects "
            f"{params.sizes[0]}."
        )
    squeeze = value.ndim == 1
    node = x if isinstance(x, Node) else ad.as_node(value)
    if squeeze:
        node = ad.reshape(node, (1, -1))
    if tape is not None:
        arrays = tape.watch(params.arrays, scope)
    else:
        arrays = {k: ad.as_node(v) for k, v in params.arrays.items()}
    out = mlp_apply(arrays, params.activations, node)
    if squeeze:
        out = ad.reshape(out, (out.shape[-1],))
    return out if tape is not None else out.value


@dataclass
class GaussianPolicyHead:
    """State-independent log standard deviations of a diagonal Gaussian."""

    log_std: np.ndarray

    @classmethod
    def init(cls, action_dim: int, init_std: float = 0.8):
        if init_std <= 0.0:
            raise ConfigError(f"init_std must be positive, got {init_std}.")
        return cls(log_std=np.full(action_dim, math.log(init_std)))

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    @property
    def arrays(self) -> Dict[str, np.ndarray]:
        return {"log_std": self.log_std}


def gaussian_sample(
    head: GaussianPolicyHead, mean: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Draws actions around `mean` and returns them with their log-density."""
    mean = np.asarray(mean, dtype=np.float64)
    action = mean + head.std * rng.standard_normal(mean.shape)
    return action, gaussian_log_prob(mean, head.log_std, action)


def gaussian_log_prob(mean, log_std, action):
    """Sum over the last axis of the diagonal-Gaussian log-density.

    Works on numpy arrays, or on nodes when `mean`/`log_std` are tracked.
    """
    if isinstance(mean, Node) or isinstance(log_std, Node):
        z = (ad.as_node(action) - mean) * ad.exp(ad.neg(log_std))
        per_dim = ad.neg(log_std) - _HALF_LOG_2PI - 0.5 * ad.square(z)
        return ad.sum(per_dim, axis=-1)
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-log_std - _HALF_LOG_2PI - 0.5 * z * z, axis=-1)


def gaussian_kl(
    mean_old: np.ndarray,
    log_std_old: np.ndarray,
    mean_new: np.ndarray,
    log_std_new: np.ndarray,
) -> np.ndarray:
    """Analytic KL(old || new) per row."""
    var_old = np.exp(2.0 * log_std_old)
    var_new = np.exp(2.0 * log_std_new)
    terms = (
        log_std_new
        - log_std_old
        + (var_old + (mean_old - mean_new) ** 2) / (2.0 * var_new)
        - 0.5
    )
    return np.sum(terms, axis=-1)
