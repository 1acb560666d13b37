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

"""Multi-head self-attention encoder for short observation windows.

The encoder embeds each step, adds a sinusoidal position code, runs one
multi-head self-attention block, pools the steps with learned attention
weights and projects the pooled vector to the model width.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from skillchain.errors import ConfigError, InputError
from skillchain.nn import autodiff as ad
from skillchain.nn.autodiff import GradientTape, Node


def sinusoidal_positions(length: int, width: int) -> np.ndarray:
    """Returns the (length, width) sinusoidal position table."""
    positions = np.arange(length, dtype=np.float64)[:, None]
    rates = np.power(10000.0, -np.arange(0, width, 2) / width)
    table = np.zeros((length, width))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: width // 2])
    return table


def fit_window(window, length: int) -> np.ndarray:
    """Truncates or front-pads a (steps, obs) window to exactly `length` steps.

    Shorter windows repeat their earliest observation at the front.

    Raises:
        InputError: if the window is empty.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[0] == 0:
        raise InputError("A window needs at least one observation.")
    if window.shape[0] >= length:
        return window[window.shape[0] - length :]
    pad = np.repeat(window[:1], length - window.shape[0], axis=0)
    return np.concatenate([pad, window], axis=0)


@dataclass
class AttentionEncoder:
    """Parameters of the window encoder.

    arrays:
        w_in (obs_dim, width), b_in (width,): step embedding.
        wq, wk, wv (heads, width, width // heads): per-head projections.
        pool (width, 1): temporal pooling scores.
        w_out (width, width), b_out (width,): output projection.
    """

    obs_dim: int
    width: int
    heads: int
    window_length: int
    positional: bool = True
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(
        cls,
        obs_dim: int,
        rng: np.random.Generator,
        width: int = 32,
        heads: int = 2,
        window_length: int = 10,
        positional: bool = True,
    ) -> "AttentionEncoder":
        if heads <= 0 or width % heads != 0:
            raise ConfigError(
                f"Head count {heads} must divide model width {width}."
            )
        if window_length < 1:
            raise ConfigError("window_length must be at least 1.")
        head_width = width // heads
        s_in = 1.0 / math.sqrt(obs_dim)
        s_w = 1.0 / math.sqrt(width)
        arrays = {
            "w_in": rng.normal(0.0, s_in, (obs_dim, width)),
            "b_in": np.zeros(width),
            "wq": rng.normal(0.0, s_w, (heads, width, head_width)),
            "wk": rng.normal(0.0, s_w, (heads, width, head_width)),
            "wv": rng.normal(0.0, s_w, (heads, width, head_width)),
            "pool": rng.normal(0.0, s_w, (width, 1)),
            "w_out": rng.normal(0.0, s_w, (width, width)),
            "b_out": np.zeros(width),
        }
        return cls(
            obs_dim=obs_dim,
            width=width,
            heads=heads,
            window_length=window_length,
            positional=positional,
            arrays=arrays,
        )

    @property
    def head_width(self) -> int:
        return self.width // self.heads

    def copy(self) -> "AttentionEncoder":
        return AttentionEncoder(
            obs_dim=self.obs_dim,
            width=self.width,
            heads=self.heads,
            window_length=self.window_length,
            positional=self.positional,
            arrays={k: v.copy() for k, v in self.arrays.items()},
        )


def _as_batch(enc: AttentionEncoder, window) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.ndim == 2:
        window = window[None]
    if window.ndim != 3 or window.shape[1] == 0:
        raise InputError("A window needs at least one observation.")
    if window.shape[-1] != enc.obs_dim:
        raise ConfigError(
            f"Window observations have width {window.shape[-1]}, the "
            f"encoder expects {enc.obs_dim}."
        )
    if window.shape[1] != enc.window_length:
        window = np.stack([fit_window(w, enc.window_length) for w in window])
    return window


def encode_nodes(
    enc: AttentionEncoder, arrays: Mapping[str, Node], x: np.ndarray
) -> Dict[str, Node]:
    """Runs the encoder on a (batch, steps, obs) array.

    Returns the embedding under "embedding" plus the intermediate attention
    matrix ("attention") and pooling weights ("pooling").
    """
    n, steps, _ = x.shape
    h = ad.as_node(x) @ arrays["w_in"] + arrays["b_in"]
    if enc.positional:
        h = h + sinusoidal_positions(steps, enc.width)
    h4 = ad.reshape(h, (n, 1, steps, enc.width))
    q = h4 @ arrays["wq"]
    k = h4 @ arrays["wk"]
    v = h4 @ arrays["wv"]
    scores = (q @ ad.transpose(k, (0, 1, 3, 2))) * (
        1.0 / math.sqrt(enc.head_width)
    )
    attention = ad.softmax(scores, axis=-1)
    mixed = attention @ v
    mixed = ad.reshape(
        ad.transpose(mixed, (0, 2, 1, 3)), (n, steps, enc.width)
    )
    pooling = ad.softmax(mixed @ arrays["pool"], axis=1)
    pooled = ad.sum(pooling * mixed, axis=1)
    embedding = pooled @ arrays["w_out"] + arrays["b_out"]
    return {
        "embedding": embedding,
        "attention": attention,
        "pooling": pooling,
    }


def attention_encode(
    enc: AttentionEncoder,
    window,
    tape: Optional[GradientTape] = None,
    scope: str = "",
):
    """Encodes one (steps, obs) window or a (batch, steps, obs) stack.

    Windows are fitted to the encoder's window length first. Returns a
    (width,) or (batch, width) array, or a tracked node when `tape` is given.

    Raises:
        InputError: if a window is empty.
    """
    single = np.asarray(window).ndim == 2
    x = _as_batch(enc, window)
    if tape is not None:
        arrays = tape.watch(enc.arrays, scope)
    else:
        arrays = {k: ad.as_node(v) for k, v in enc.arrays.items()}
    out = encode_nodes(enc, arrays, x)["embedding"]
    if single:
        out = out[0]
    return out if tape is not None else out.value


def attention_weights(enc: AttentionEncoder, window) -> np.ndarray:
    """Returns the (batch, heads, steps, steps) self-attention matrix."""
    x = _as_batch(enc, window)
    arrays = {k: ad.as_node(v) for k, v in enc.arrays.items()}
    return encode_nodes(enc, arrays, x)["attention"].value
