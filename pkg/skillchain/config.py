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

"""Run configuration models, suite presets and config hashing.

Every model forbids unknown keys, so a JSON config that misspells a field is
rejected instead of silently ignored. The published schema is
`RunConfig.model_json_schema()`.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    model_validator,
)

from skillchain.errors import ConfigError

load_dotenv()

Suite = Literal["blockchain", "toolflip"]
Method = Literal["ours", "policy_seq", "v_chain", "rl_scratch", "curriculum"]
Template = Literal["search", "orient", "grasp", "insert"]

OUTPUT_ROOT_ENV = "SKILLCHAIN_OUTPUT_ROOT"
LOG_LEVEL_ENV = "SKILLCHAIN_LOG_LEVEL"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NoiseConfig(_Model):
    """Additive Gaussian noise on observations and actions.

    Correlated components are drawn once per reset and held for the episode;
    uncorrelated components are drawn every step. A run config may set
    `"noise": "randomized"` to use the randomized preset.
    """

    obs_correlated: float = Field(0.0, ge=0.0)
    obs_uncorrelated: float = Field(0.0, ge=0.0)
    action_correlated: float = Field(0.0, ge=0.0)
    action_uncorrelated: float = Field(0.0, ge=0.0)

    @classmethod
    def randomized(cls) -> "NoiseConfig":
        return cls(
            obs_correlated=0.001,
            obs_uncorrelated=0.002,
            action_correlated=0.015,
            action_uncorrelated=0.05,
        )

    @property
    def enabled(self) -> bool:
        return any(
            v > 0.0
            for v in (
                self.obs_correlated,
                self.obs_uncorrelated,
                self.action_correlated,
                self.action_uncorrelated,
            )
        )


class RewardParams(_Model):
    """Constants of one reward template; unused entries stay 0."""

    lam1: float = 0.0
    lam2: float = 0.0
    lam3: float = 0.0
    lam4: float = 0.0
    alpha0: float = 0.0
    alpha1: float = 0.0
    e0: float = 0.0


class SuccessParams(_Model):
    visibility: float = Field(0.8, gt=0.0, le=1.0)
    band: float = Field(1.0, gt=0.0)
    lift: float = Field(0.15, gt=0.0)
    pos_tol: float = Field(0.02, gt=0.0)
    angle_tol: float = Field(0.15, gt=0.0)


class PpoHyper(_Model):
    gamma: float = Field(0.96, gt=0.0, le=1.0)
    gae_lambda: float = Field(0.95, gt=0.0, le=1.0)
    clip: float = Field(0.2, gt=0.0)
    lr: float = Field(3e-4, gt=0.0)
    desired_kl: float = Field(0.016, gt=0.0)
    lr_schedule: Literal["adaptive", "fixed"] = "adaptive"
    kl_estimator: Literal["sample", "analytic"] = "sample"
    minibatches: int = Field(4, ge=1)
    epochs: int = Field(5, ge=1)
    segment_length: int = Field(8, ge=1)
    num_envs: int = Field(16, ge=1)
    entropy_coef: float = Field(0.0, ge=0.0)
    value_coef: float = Field(1.0, ge=0.0)
    max_grad_norm: float = Field(1.0, gt=0.0)
    init_std: float = Field(0.8, gt=0.0)
    hidden: Tuple[int, ...] = (64, 64)
    activation: Literal["tanh", "elu"] = "elu"

    @model_validator(mode="after")
    def _check_minibatches(self) -> "PpoHyper":
        if self.batch_size % self.minibatches != 0:
            raise ValueError(
                f"minibatches={self.minibatches} must divide the batch of "
                f"{self.segment_length} x {self.num_envs} steps."
            )
        return self

    @property
    def batch_size(self) -> int:
        return self.segment_length * self.num_envs


class SubTaskSpec(_Model):
    """One stage of a chain: reward template, success rule and horizon."""

    name: str
    template: Template
    reward: RewardParams
    success: SuccessParams = SuccessParams()
    horizon: int = Field(..., ge=2)
    ppo: PpoHyper = PpoHyper()
    depth_range: Tuple[float, float] = (0.5, 1.0)

    @model_validator(mode="after")
    def _check_depth_range(self) -> "SubTaskSpec":
        lo, hi = self.depth_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"depth_range {self.depth_range} outside [0,1].")
        return self


class FeasibilityConfig(_Model):
    window_length: int = Field(10, ge=1)
    width: int = Field(32, ge=1)
    heads: int = Field(2, ge=1)
    hidden: Tuple[int, ...] = (64,)
    positional: bool = True
    epochs: int = Field(100, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    minibatch_size: int = Field(32, ge=1)
    capacity: int = Field(2000, ge=1)
    percentile: float = Field(25.0, ge=0.0, le=100.0)
    min_successes: int = Field(20, ge=1)
    rollout_episodes: int = Field(200, ge=1)
    target: Literal["combined", "task"] = "combined"
    discounted: bool = False
    oracle: Literal["feasibility", "value"] = "feasibility"
    allow_uncalibrated: bool = False

    @model_validator(mode="after")
    def _check_heads(self) -> "FeasibilityConfig":
        if self.width % self.heads != 0:
            raise ValueError(
                f"heads={self.heads} must divide width={self.width}."
            )
        return self


class ChainSpec(_Model):
    suite: Suite
    stages: List[SubTaskSpec] = Field(..., min_length=1)
    lam1: float = Field(1.0, ge=0.0)
    lam2: float = Field(0.5, ge=0.0)
    outer_iterations: int = Field(1, ge=0)
    warm_start: bool = True
    buffer_capacity: int = Field(1000, ge=1)
    init_buffer_episodes: int = Field(200, ge=1)
    max_updates: int = Field(300, ge=1)
    finetune_updates: int = Field(150, ge=1)
    convergence_window: int = Field(50, ge=1)
    convergence_tol: float = Field(0.01, ge=0.0)
    min_success_rate: float = Field(0.3, ge=0.0, le=1.0)
    feasibility: FeasibilityConfig = FeasibilityConfig()

    @model_validator(mode="after")
    def _check_chain(self) -> "ChainSpec":
        if self.lam1 == 0.0 and self.lam2 == 0.0:
            raise ValueError("lam1 and lam2 must not both be 0.")
        for stage in self.stages:
            if stage.horizon <= self.feasibility.window_length:
                raise ValueError(
                    f"Stage '{stage.name}' horizon {stage.horizon} must "
                    f"exceed the window length "
                    f"{self.feasibility.window_length}."
                )
        return self

    @property
    def stage_names(self) -> List[str]:
        return [s.name for s in self.stages]

    def with_feasibility(self, **changes: Any) -> "ChainSpec":
        feas = self.feasibility.model_copy(update=changes)
        return _revalidate(self.model_copy(update={"feasibility": feas}))

    def with_changes(self, **changes: Any) -> "ChainSpec":
        return _revalidate(self.model_copy(update=changes))


class ExecConfig(_Model):
    switch_budget: int = Field(3, ge=0)
    ema: float = Field(1.0, gt=0.0, le=1.0)
    auto_approach: bool = False
    approach_radius: float = Field(0.05, gt=0.0)
    min_dwell: Optional[int] = Field(None, ge=1)
    max_episode_steps: Optional[int] = Field(None, ge=1)
    deterministic_actions: bool = True


class PerturbationConfig(_Model):
    """Drops the held object mid-episode to exercise recovery."""

    enabled: bool = False
    probability: float = Field(1.0, ge=0.0, le=1.0)
    stages: Tuple[str, ...] = ("grasp", "insert", "reorient")
    knock_angle: float = Field(1.5, ge=0.0)


class RunConfig(_Model):
    suite: Suite = "blockchain"
    chain: Optional[ChainSpec] = None
    methods: List[Method] = Field(default_factory=lambda: ["ours"])
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: str = "runs"
    window_length: Optional[int] = Field(None, ge=0)
    executor: ExecConfig = ExecConfig()
    noise: NoiseConfig = NoiseConfig()
    perturbation: PerturbationConfig = PerturbationConfig()
    eval_episodes: int = Field(200, ge=1)
    deterministic: bool = True
    workers: int = Field(1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        if data.get("chain") is None:
            data["chain"] = default_chain_spec(data.get("suite", "blockchain"))
        if data.get("noise") == "randomized":
            data["noise"] = NoiseConfig.randomized()
        return data

    @model_validator(mode="after")
    def _check_suite(self) -> "RunConfig":
        if self.chain.suite != self.suite:
            raise ValueError(
                f"chain.suite '{self.chain.suite}' differs from suite "
                f"'{self.suite}'."
            )
        return self

    def effective_chain(self) -> ChainSpec:
        """Returns the chain with the run-level window length applied.

        Window length 0 means the feasibility model sees only the final
        observation, which is a window of one step.
        """
        if self.window_length is None:
            return self.chain
        return self.chain.with_feasibility(
            window_length=max(self.window_length, 1)
        )

    def with_changes(self, **changes: Any) -> "RunConfig":
        return _revalidate(self.model_copy(update=changes))

    def output_root(self) -> Path:
        return Path(os.getenv(OUTPUT_ROOT_ENV) or self.output_dir)


def _revalidate(model: BaseModel) -> BaseModel:
    try:
        return type(model).model_validate(model.model_dump())
    except ValidationError as e:
        raise ConfigError(
            f"Invalid {type(model).__name__}.", details=_errors(e)
        ) from e


def _errors(e: ValidationError) -> List[Dict[str, Any]]:
    return json.loads(e.json(include_url=False))


def _stage(
    name: str,
    template: str,
    reward: Dict[str, float],
    horizon: int,
    minibatches: int,
    epochs: int,
    segment: int,
    gamma: float,
) -> SubTaskSpec:
    return SubTaskSpec(
        name=name,
        template=template,
        reward=RewardParams(**reward),
        horizon=horizon,
        ppo=PpoHyper(
            minibatches=minibatches,
            epochs=epochs,
            segment_length=segment,
            gamma=gamma,
        ),
    )


SEARCH_REWARD = dict(lam1=5.0, lam2=1.0, lam3=-0.001, lam4=-0.003, e0=0.2)
ORIENT_REWARD = dict(lam1=1.0, lam2=1.0, lam3=-0.001, lam4=-0.003, e0=0.6)
GRASP_REWARD = dict(lam1=1.0, lam2=-0.001, lam3=-0.003, alpha0=-5.0, e0=0.1)
INSERT_REWARD = dict(
    lam1=1.0,
    lam2=0.0,
    lam3=-0.001,
    lam4=-0.003,
    alpha0=20.0,
    alpha1=1.0,
    e0=0.06,
)


def default_chain_spec(suite: str) -> ChainSpec:
    """Returns the preset chain for a built-in suite.

    Args:
        suite: 'blockchain' (search, orient, grasp, insert) or 'toolflip'
          (grasp, reorient).

    Raises:
        ConfigError: for an unknown suite.
    """
    if suite == "blockchain":
        stages = [
            _stage("search", "search", SEARCH_REWARD, 60, 4, 5, 8, 0.96),
            _stage("orient", "orient", ORIENT_REWARD, 60, 4, 10, 20, 0.96),
            _stage("grasp", "grasp", GRASP_REWARD, 40, 8, 2, 8, 0.9),
            _stage("insert", "insert", INSERT_REWARD, 40, 8, 2, 8, 0.9),
        ]
    elif suite == "toolflip":
        stages = [
            _stage("grasp", "grasp", GRASP_REWARD, 40, 4, 5, 8, 0.96),
            _stage("reorient", "insert", INSERT_REWARD, 60, 4, 10, 20, 0.96),
        ]
    else:
        raise ConfigError(f"Unknown suite '{suite}'.")
    return ChainSpec(suite=suite, stages=stages)


def smoke_config(output_dir: str = "runs/smoke") -> RunConfig:
    """Tiny two-stage ToolFlip run that exercises the whole pipeline."""
    base = default_chain_spec("toolflip")
    tiny_ppo = dict(hidden=(16, 16), num_envs=8)
    stages = [
        s.model_copy(update={"ppo": s.ppo.model_copy(update=tiny_ppo)})
        for s in base.stages
    ]
    chain = base.model_copy(
        update={
            "stages": stages,
            "max_updates": 15,
            "finetune_updates": 10,
            "convergence_window": 5,
            "init_buffer_episodes": 24,
            "min_success_rate": 0.0,
            "feasibility": FeasibilityConfig(
                width=8,
                heads=2,
                hidden=(8,),
                epochs=5,
                rollout_episodes=24,
                minibatch_size=8,
                min_successes=1,
                allow_uncalibrated=True,
            ),
        }
    )
    return RunConfig(
        suite="toolflip",
        chain=_revalidate(chain),
        seeds=[0],
        output_dir=output_dir,
        eval_episodes=10,
    )


def load_run_config(path: os.PathLike) -> RunConfig:
    """Reads and validates a JSON run config.

    Raises:
        ConfigError: if the file is unreadable, not JSON, or fails schema
          validation; `details` carries the validation error list.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config '{path}': {e}") from e
    return parse_run_config(data)


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError("Invalid run config.", details=_errors(e)) from e


def config_hash(config: BaseModel) -> str:
    """SHA-256 of the canonical JSON form; any field change changes it."""
    canonical = json.dumps(
        config.model_dump(mode="json"),
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def config_schema() -> Dict[str, Any]:
    return RunConfig.model_json_schema()
