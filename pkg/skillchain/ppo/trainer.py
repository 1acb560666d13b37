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

"""Clipped-surrogate PPO updates and the per-stage training loop."""

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from skillchain import csvio
from skillchain.config import NoiseConfig, PpoHyper
from skillchain.envs.suites import TaskSuite
from skillchain.errors import TrainingError
from skillchain.nn import autodiff as ad
from skillchain.nn.autodiff import GradientTape
from skillchain.nn.layers import gaussian_kl, gaussian_log_prob, mlp_apply
from skillchain.nn.optim import Adam, clip_by_global_norm
from skillchain.ppo.agent import (
    LOG_STD,
    POLICY_SCOPE,
    VALUE_SCOPE,
    ActorCritic,
)
from skillchain.ppo.gae import compute_gae, normalize_advantages
from skillchain.ppo.rollout import (
    Initializer,
    RewardShaper,
    collect_rollout,
    make_workers,
)
from skillchain.ppo.storage import TrajectoryBatch

logger = logging.getLogger(__name__)

LR_MIN = 1e-6
LR_MAX = 1e-2
MAX_CONSECUTIVE_ABORTS = 3

_LOSS_KEYS = ("policy_loss", "value_loss", "entropy", "clip_fraction")

STATS_COLUMNS = (
    "update",
    "mean_return",
    "success_rate",
    "episodes",
    "kl",
    "clip_fraction",
    "policy_loss",
    "value_loss",
    "entropy",
    "lr",
    "grad_norm",
)


def adapt_lr(current_lr: float, measured_kl: float, desired_kl: float) -> float:
    """Adjusts the learning rate toward a target KL per epoch."""
    lr = current_lr
    if measured_kl > 2.0 * desired_kl:
        lr = current_lr / 1.5
    elif measured_kl < desired_kl / 2.0:
        lr = current_lr * 1.5
    return min(max(lr, LR_MIN), LR_MAX)


def _loss_nodes(
    tape: GradientTape,
    agent: ActorCritic,
    mb: Dict[str, np.ndarray],
    hyper: PpoHyper,
) -> Dict[str, ad.Node]:
    p = tape.watch(agent.policy.arrays, POLICY_SCOPE)
    v = tape.watch(agent.value.arrays, VALUE_SCOPE)
    log_std = tape.watch({LOG_STD: agent.head.log_std})[LOG_STD]
    obs = ad.as_node(mb["obs"])
    mean = mlp_apply(p, agent.policy.activations, obs)
    log_prob = gaussian_log_prob(mean, log_std, mb["actions"])
    ratio = ad.exp(log_prob - mb["log_probs"])
    adv = mb["advantages"]
    clipped = ad.clip(ratio, 1.0 - hyper.clip, 1.0 + hyper.clip)
    surrogate = ad.minimum(ratio * adv, clipped * adv)
    policy_loss = ad.neg(ad.mean(surrogate))
    pred = mlp_apply(v, agent.value.activations, obs)
    pred = ad.reshape(pred, (pred.shape[0],))
    value_loss = ad.mean(ad.square(pred - mb["returns"]))
    entropy = ad.sum(log_std) + 0.5 * (1.0 + math.log(2.0 * math.pi)) * (
        log_std.shape[0]
    )
    loss = (
        policy_loss
        + hyper.value_coef * value_loss
        - hyper.entropy_coef * entropy
    )
    return {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "ratio": ratio,
        "log_prob": log_prob,
    }


def policy_gradients(
    agent: ActorCritic, minibatch: Dict[str, np.ndarray], hyper: PpoHyper
) -> Tuple[Dict[str, np.ndarray], Dict[str, float]]:
    """Gradients of the PPO loss on one minibatch, plus scalar diagnostics.

    The minibatch holds obs, actions, log_probs, advantages and returns.

    Raises:
        TrainingError: if the loss is not finite.
    """
    with GradientTape() as tape:
        nodes = _loss_nodes(tape, agent, minibatch, hyper)
    loss = float(nodes["loss"].value)
    if not math.isfinite(loss):
        raise TrainingError(
            "PPO loss is not finite.",
            details={
                "policy_loss": float(nodes["policy_loss"].value),
                "value_loss": float(nodes["value_loss"].value),
            },
        )
    grads = tape.backward(nodes["loss"])
    ratio = nodes["ratio"].value
    info = {
        "loss": loss,
        "policy_loss": float(nodes["policy_loss"].value),
        "value_loss": float(nodes["value_loss"].value),
        "entropy": float(nodes["entropy"].value),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > hyper.clip)),
    }
    return grads, info


def _measure_kl(
    agent: ActorCritic, data: Dict[str, np.ndarray], log_std_old, estimator
) -> float:
    mean_new = agent.mean(data["obs"])
    if estimator == "analytic":
        kl = gaussian_kl(
            data["means"], log_std_old, mean_new, agent.head.log_std
        )
        return float(np.mean(kl))
    log_new = gaussian_log_prob(mean_new, agent.head.log_std, data["actions"])
    return float(abs(np.mean(data["log_probs"] - log_new)))


def ppo_update(
    agent: ActorCritic,
    batch: TrajectoryBatch,
    hyper: PpoHyper,
    optimizer: Adam,
    rng: np.random.Generator,
    lr: Optional[float] = None,
) -> Tuple[ActorCritic, Dict[str, float]]:
    """Runs `epochs` x `minibatches` clipped-surrogate steps on one batch.

    Returns the updated agent and stats: mean KL, clip fraction, losses,
    final learning rate and mean gradient norm. The input agent is not
    modified.

    Raises:
        TrainingError: if any minibatch loss is not finite; the update is
          abandoned, the optimizer is rewound to its state before the
          call and the caller keeps the previous agent.
    """
    lr = hyper.lr if lr is None else lr
    advantages, returns = compute_gae(
        batch.rewards, batch.values, batch.dones, hyper.gamma, hyper.gae_lambda
    )
    data = batch.flat()
    data["advantages"] = normalize_advantages(advantages.reshape(-1))
    data["returns"] = returns.reshape(-1)
    size = batch.size
    mb_size = size // hyper.minibatches
    params = agent.params()
    current = agent
    totals: Dict[str, List[float]] = {
        k: [] for k in _LOSS_KEYS + ("kl", "grad_norm")
    }
    saved = optimizer.snapshot()
    try:
        for epoch in range(hyper.epochs):
            order = rng.permutation(size)
            for m in range(hyper.minibatches):
                idx = order[m * mb_size : (m + 1) * mb_size]
                mb = {k: v[idx] for k, v in data.items()}
                grads, info = policy_gradients(current, mb, hyper)
                grads, norm = clip_by_global_norm(grads, hyper.max_grad_norm)
                params, _ = optimizer.step(params, grads, lr)
                current = agent.with_params(params)
                for key in _LOSS_KEYS:
                    totals[key].append(info[key])
                totals["grad_norm"].append(norm)
                logger.debug(
                    "epoch %d minibatch %d loss %.4f", epoch, m, info["loss"]
                )
            kl = _measure_kl(current, data, batch.log_std, hyper.kl_estimator)
            totals["kl"].append(kl)
            if hyper.lr_schedule == "adaptive":
                lr = adapt_lr(lr, kl, hyper.desired_kl)
    except TrainingError:
        optimizer.restore(saved)
        raise
    stats = {k: float(np.mean(v)) for k, v in totals.items()}
    stats["lr"] = lr
    return current, stats


def has_converged(rates: Sequence[float], window: int, tol: float) -> bool:
    """True once the windowed mean success rate stops improving by `tol`."""
    if len(rates) < 2 * window:
        return False
    recent = float(np.mean(rates[-window:]))
    previous = float(np.mean(rates[-2 * window : -window]))
    return recent - previous < tol


@dataclass
class UpdateStats:
    update: int
    mean_return: float
    success_rate: float
    episodes: int
    kl: float
    clip_fraction: float
    policy_loss: float
    value_loss: float
    entropy: float
    lr: float
    grad_norm: float

    def row(self) -> Dict[str, float]:
        return dataclasses.asdict(self)


@dataclass
class TrainResult:
    agent: ActorCritic
    history: List[UpdateStats] = field(default_factory=list)
    converged: bool = False

    @property
    def success_rates(self) -> List[float]:
        return [h.success_rate for h in self.history]


class StageTrainer:
    """Trains one sub-policy with PPO until convergence or an update cap.

    Args:
        suite: Task suite providing the stage dynamics.
        stage: Stage index to train.
        hyper: PPO hyperparameters of the stage.
        initializer: Source of initial states (None means native reset).
        seed: Seed sequence; rollout workers and minibatch order derive
          independent streams from it.
        agent: Starting agent; a fresh one is initialized when omitted.
        noise: Observation and action noise.
        shaper: Optional reward shaping (used for fine-tuning).
        workers: Rollout worker count; 1 keeps everything single-threaded.
    """

    def __init__(
        self,
        suite: TaskSuite,
        stage: int,
        hyper: PpoHyper,
        initializer: Initializer,
        seed: np.random.SeedSequence,
        agent: Optional[ActorCritic] = None,
        noise: NoiseConfig = NoiseConfig(),
        shaper: Optional[RewardShaper] = None,
        workers: int = 1,
    ):
        init_seed, worker_seed, update_seed = seed.spawn(3)
        self.suite = suite
        self.stage = stage
        self.hyper = hyper
        self.agent = agent or ActorCritic.init(
            suite.obs_dim,
            suite.action_dim,
            hyper,
            np.random.default_rng(init_seed),
        )
        self.optimizer = Adam()
        self.lr = hyper.lr
        self.rng = np.random.default_rng(update_seed)
        self.workers = make_workers(
            suite,
            stage,
            hyper.num_envs,
            initializer,
            worker_seed,
            workers,
            noise,
            shaper,
        )
        self.history: List[UpdateStats] = []
        self._aborts = 0
        self._last_rate = 0.0

    def update_once(
        self, pool: Optional[ThreadPoolExecutor] = None
    ) -> UpdateStats:
        batch = collect_rollout(
            self.workers, self.agent, self.hyper.segment_length, pool
        )
        try:
            agent, stats = ppo_update(
                self.agent, batch, self.hyper, self.optimizer, self.rng, self.lr
            )
        except TrainingError as e:
            self._aborts += 1
            logger.warning(
                "Stage %d update %d aborted: %s",
                self.stage,
                len(self.history),
                e.message,
            )
            if self._aborts >= MAX_CONSECUTIVE_ABORTS:
                raise
            stats = {k: float("nan") for k in STATS_COLUMNS}
            stats["lr"] = self.lr
            agent = self.agent
        else:
            self._aborts = 0
        self.agent = agent
        self.lr = stats["lr"]
        if batch.episodes:
            self._last_rate = batch.success_rate
        record = UpdateStats(
            update=len(self.history),
            mean_return=batch.mean_return,
            success_rate=self._last_rate,
            episodes=len(batch.episodes),
            kl=stats["kl"],
            clip_fraction=stats["clip_fraction"],
            policy_loss=stats["policy_loss"],
            value_loss=stats["value_loss"],
            entropy=stats["entropy"],
            lr=stats["lr"],
            grad_norm=stats["grad_norm"],
        )
        self.history.append(record)
        return record

    def train(
        self,
        max_updates: int,
        convergence_window: int = 50,
        convergence_tol: float = 0.01,
    ) -> TrainResult:
        converged = False
        pool = (
            ThreadPoolExecutor(max_workers=len(self.workers))
            if len(self.workers) > 1
            else None
        )
        try:
            for _ in range(max_updates):
                record = self.update_once(pool)
                if record.update % 10 == 0:
                    logger.info(
                        "Stage %d update %d: success %.3f return %.3f "
                        "kl %.4f lr %.2e",
                        self.stage,
                        record.update,
                        record.success_rate,
                        record.mean_return,
                        record.kl,
                        record.lr,
                    )
                rates = [h.success_rate for h in self.history]
                if has_converged(rates, convergence_window, convergence_tol):
                    converged = True
                    break
        finally:
            if pool is not None:
                pool.shutdown()
        logger.info(
            "Stage %d finished after %d updates (converged=%s).",
            self.stage,
            len(self.history),
            converged,
        )
        return TrainResult(
            agent=self.agent, history=list(self.history), converged=converged
        )


def write_stats_csv(path, history: Sequence[UpdateStats]) -> int:
    return csvio.write_csv(path, STATS_COLUMNS, (h.row() for h in history))
