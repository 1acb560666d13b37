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

"""Transition feasibility regressors, threshold calibration and scores.

A feasibility model maps the terminal observation window of a predecessor
sub-task to the return its successor is expected to collect from there.
Two oracles share one interface: the attention regressor trained on
recorded (window, return) pairs, and the successor's PPO value function
read at the boundary observation.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Union

import numpy as np

from skillchain.config import FeasibilityConfig
from skillchain.errors import (
    CalibrationError,
    CheckpointError,
    NotEnoughSamplesError,
)
from skillchain.feasibility.buffers import FeasibilityBuffers
from skillchain.nn import autodiff as ad
from skillchain.nn.attention import (
    AttentionEncoder,
    attention_encode,
    encode_nodes,
    fit_window,
)
from skillchain.nn.autodiff import GradientTape
from skillchain.nn.layers import DenseParams, mlp_apply, mlp_forward
from skillchain.nn.optim import Adam
from skillchain.ppo.agent import ActorCritic

logger = logging.getLogger(__name__)

ENCODER_SCOPE = "encoder/"
HEAD_SCOPE = "head/"


class TransitionModel(Protocol):
    stage: int
    threshold: Optional[float]
    target_mean: float
    target_std: float
    window_length: int

    def predict(self, window) -> Union[float, np.ndarray]: ...


@dataclass
class FeasibilityModel:
    """Attention encoder plus regression head over terminal windows.

    Targets are z-scored with `target_mean`/`target_std` during training;
    `predict` returns values in return units. `threshold` is None until
    calibration.
    """

    encoder: AttentionEncoder
    head: DenseParams
    stage: int = 1
    target_mean: float = 0.0
    target_std: float = 1.0
    threshold: Optional[float] = None
    losses: List[float] = field(default_factory=list)

    @classmethod
    def init(
        cls,
        obs_dim: int,
        config: FeasibilityConfig,
        rng: np.random.Generator,
        stage: int = 1,
    ) -> "FeasibilityModel":
        encoder = AttentionEncoder.init(
            obs_dim,
            rng,
            width=config.width,
            heads=config.heads,
            window_length=config.window_length,
            positional=config.positional,
        )
        head = DenseParams.init(
            (config.width,) + tuple(config.hidden) + (1,),
            rng,
            activation="elu",
            output_scale=0.1,
        )
        return cls(encoder=encoder, head=head, stage=stage)

    @property
    def window_length(self) -> int:
        return self.encoder.window_length

    @property
    def calibrated(self) -> bool:
        return self.threshold is not None

    def params(self) -> Dict[str, np.ndarray]:
        out = {ENCODER_SCOPE + k: v for k, v in self.encoder.arrays.items()}
        out.update({HEAD_SCOPE + k: v for k, v in self.head.arrays.items()})
        return out

    def with_params(self, params: Dict[str, np.ndarray]) -> "FeasibilityModel":
        encoder = self.encoder.copy()
        head = self.head.copy()
        for key, value in params.items():
            if key.startswith(ENCODER_SCOPE):
                encoder.arrays[key[len(ENCODER_SCOPE) :]] = np.array(value)
            elif key.startswith(HEAD_SCOPE):
                head.arrays[key[len(HEAD_SCOPE) :]] = np.array(value)
        head.validate()
        return dataclasses.replace(
            self, encoder=encoder, head=head, losses=list(self.losses)
        )

    def predict_standardized(self, window) -> Union[float, np.ndarray]:
        embedding = attention_encode(self.encoder, window)
        out = mlp_forward(self.head, embedding)
        return float(out[0]) if out.ndim == 1 else out[:, 0]

    def predict(self, window) -> Union[float, np.ndarray]:
        """F(window) in return units for one window or a stack of windows."""
        z = self.predict_standardized(window)
        return z * self.target_std + self.target_mean


@dataclass
class ValueFeasibility:
    """Uses the successor's value estimate at the boundary observation."""

    agent: ActorCritic
    stage: int = 1
    window_length: int = 1
    target_mean: float = 0.0
    target_std: float = 1.0
    threshold: Optional[float] = None

    @property
    def calibrated(self) -> bool:
        return self.threshold is not None

    def predict(self, window) -> Union[float, np.ndarray]:
        window = np.asarray(window, dtype=np.float64)
        values = self.agent.value_of(window[..., -1, :])
        return float(values) if values.ndim == 0 else values


def _scoped(arrays, scope: str):
    return {
        k[len(scope) :]: v for k, v in arrays.items() if k.startswith(scope)
    }


def _loss(model, arrays, x, y) -> ad.Node:
    enc = _scoped(arrays, ENCODER_SCOPE)
    head = _scoped(arrays, HEAD_SCOPE)
    embedding = encode_nodes(model.encoder, enc, x)["embedding"]
    pred = mlp_apply(head, model.head.activations, embedding)
    pred = ad.reshape(pred, (pred.shape[0],))
    return ad.mean(ad.square(pred - y))


def regression_gradients(model: FeasibilityModel, x, y):
    """Loss and gradients of the z-scored squared error on one minibatch."""
    with GradientTape() as tape:
        arrays = tape.watch(model.params())
        loss = _loss(model, arrays, x, y)
    return float(loss.value), tape.backward(loss)


def _standardize(returns: np.ndarray):
    mean = float(np.mean(returns))
    std = float(np.std(returns))
    return mean, (std if std > 1e-8 else 1.0)


def train_feasibility(
    model: FeasibilityModel,
    buffers: FeasibilityBuffers,
    epochs: int = 100,
    lr: float = 1e-3,
    minibatch_size: int = 32,
    rng: Optional[np.random.Generator] = None,
) -> FeasibilityModel:
    """Fits F to the buffered returns by mean squared error.

    Returns a new, uncalibrated model; `losses` holds the full-buffer loss
    after every epoch.

    Raises:
        NotEnoughSamplesError: if the buffer holds fewer than
          `minibatch_size` entries.
    """
    windows, returns, _ = buffers.arrays()
    n = len(returns)
    if n < minibatch_size:
        raise NotEnoughSamplesError(
            f"Feasibility model for stage {model.stage} needs at least "
            f"{minibatch_size} samples, the buffer holds {n}.",
            details={"stage": model.stage, "samples": n},
        )
    rng = rng if rng is not None else np.random.default_rng(0)
    if windows.shape[1] != model.window_length:
        windows = np.stack(
            [fit_window(w, model.window_length) for w in windows]
        )
    mean, std = _standardize(returns)
    targets = (returns - mean) / std
    model = dataclasses.replace(
        model, target_mean=mean, target_std=std, threshold=None, losses=[]
    )
    optimizer = Adam()
    params = model.params()
    batches = math.ceil(n / minibatch_size)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for b in range(batches):
            idx = order[b * minibatch_size : (b + 1) * minibatch_size]
            _, grads = regression_gradients(
                model, windows[idx], targets[idx]
            )
            params, _ = optimizer.step(params, grads, lr)
            model = model.with_params(params)
        residual = model.predict_standardized(windows) - targets
        full = float(np.mean(residual**2))
        model.losses.append(full)
        logger.debug(
            "Feasibility stage %d epoch %d loss %.5f", model.stage, epoch, full
        )
    logger.info(
        "Trained feasibility model for stage %d on %d samples (loss %.4f).",
        model.stage,
        n,
        model.losses[-1] if model.losses else float("nan"),
    )
    return model


def fit_value_feasibility(
    agent: ActorCritic, buffers: FeasibilityBuffers, stage: int
) -> ValueFeasibility:
    """Builds the value-function oracle, scaled over the buffered windows."""
    model = ValueFeasibility(
        agent=agent, stage=stage, window_length=buffers.window_length
    )
    windows, _, _ = buffers.arrays()
    if len(windows):
        values = np.atleast_1d(model.predict(windows))
        mean, std = _standardize(values)
        model = dataclasses.replace(model, target_mean=mean, target_std=std)
    return model


def calibrate_threshold(
    model: TransitionModel,
    buffers: FeasibilityBuffers,
    percentile: float = 25.0,
    min_successes: int = 20,
) -> float:
    """Returns h, the `percentile` of F over windows whose successor succeeded.

    Percentiles interpolate linearly between order statistics.

    Raises:
        CalibrationError: if fewer than `min_successes` successes were
          recorded, or if h is not positive (scores would be meaningless).
    """
    windows, _, successes = buffers.arrays()
    count = int(np.sum(successes))
    if count < min_successes:
        raise CalibrationError(
            f"Stage {model.stage} has {count} successful episodes recorded; "
            f"calibration needs {min_successes}. Train the successor longer "
            "or record more rollouts.",
            details={"stage": model.stage, "successes": count},
        )
    values = np.atleast_1d(model.predict(windows[successes]))
    h = float(np.percentile(values, percentile))
    if not h > 0.0:
        raise CalibrationError(
            f"Stage {model.stage} threshold {h:.4f} is not positive.",
            details={"stage": model.stage, "threshold": h},
        )
    return h


def calibrate(
    model: TransitionModel,
    buffers: FeasibilityBuffers,
    percentile: float = 25.0,
    min_successes: int = 20,
):
    """Returns a copy of `model` with its threshold set."""
    h = calibrate_threshold(model, buffers, percentile, min_successes)
    logger.info("Stage %d feasibility threshold h = %.4f", model.stage, h)
    return dataclasses.replace(model, threshold=h)


def feasibility_score(model: TransitionModel, window) -> float:
    """c = F(window) / h.

    Raises:
        CalibrationError: if the model has no threshold.
    """
    if model.threshold is None:
        raise CalibrationError(
            f"Feasibility model for stage {model.stage} is not calibrated."
        )
    return float(model.predict(window)) / model.threshold


def feasibility_bonus(model: TransitionModel, window) -> float:
    """F(window) relative to the threshold, in target standard deviations.

    Positive exactly when the score exceeds 1. An uncalibrated model is
    measured against its target mean instead.
    """
    reference = (
        model.threshold if model.threshold is not None else model.target_mean
    )
    return (float(model.predict(window)) - reference) / model.target_std


def model_to_arrays(model: TransitionModel, prefix: str = ""):
    """Returns (arrays, metadata) for checkpointing.

    The value oracle stores only its scalars; it is rebuilt around the
    successor's policy on load.
    """
    meta = {
        "stage": model.stage,
        "target_mean": model.target_mean,
        "target_std": model.target_std,
        "threshold": model.threshold,
        "window_length": model.window_length,
    }
    if isinstance(model, ValueFeasibility):
        meta["kind"] = "value"
        return {}, meta
    enc = model.encoder
    meta.update(
        kind="attention",
        obs_dim=enc.obs_dim,
        width=enc.width,
        heads=enc.heads,
        positional=enc.positional,
        head_sizes=list(model.head.sizes),
        head_activations=list(model.head.activations),
    )
    arrays = {prefix + k: v for k, v in model.params().items()}
    arrays[prefix + "losses"] = np.asarray(model.losses, dtype=np.float64)
    return arrays, meta


def model_from_arrays(
    arrays: Dict[str, np.ndarray],
    meta: dict,
    prefix: str = "",
    agent: Optional[ActorCritic] = None,
) -> TransitionModel:
    """Inverse of `model_to_arrays`.

    Raises:
        CheckpointError: if arrays are missing or the value oracle has no
          policy to wrap.
    """
    common = dict(
        stage=int(meta["stage"]),
        target_mean=float(meta["target_mean"]),
        target_std=float(meta["target_std"]),
        threshold=meta["threshold"],
    )
    if meta["kind"] == "value":
        if agent is None:
            raise CheckpointError("Value feasibility needs its policy.")
        return ValueFeasibility(
            agent=agent, window_length=int(meta["window_length"]), **common
        )
    own = {
        k[len(prefix) :]: v for k, v in arrays.items() if k.startswith(prefix)
    }
    try:
        enc_arrays = {
            k[len(ENCODER_SCOPE) :]: v.copy()
            for k, v in own.items()
            if k.startswith(ENCODER_SCOPE)
        }
        head_arrays = {
            k[len(HEAD_SCOPE) :]: v.copy()
            for k, v in own.items()
            if k.startswith(HEAD_SCOPE)
        }
        encoder = AttentionEncoder(
            obs_dim=int(meta["obs_dim"]),
            width=int(meta["width"]),
            heads=int(meta["heads"]),
            window_length=int(meta["window_length"]),
            positional=bool(meta["positional"]),
            arrays=enc_arrays,
        )
        head = DenseParams(
            sizes=tuple(meta["head_sizes"]),
            activations=tuple(meta["head_activations"]),
            arrays=head_arrays,
        )
        head.validate()
        losses = [float(v) for v in own.get("losses", np.zeros(0))]
    except KeyError as e:
        raise CheckpointError(f"Feasibility model field missing: {e}") from e
    return FeasibilityModel(
        encoder=encoder, head=head, losses=losses, **common
    )
