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

"""The BlockChain-2D and ToolFlip-2D task suites.

Both suites share one planar world: a position-controlled hand with a
rotating wrist and a parallel gripper, and one object. The hand moves
kinematically by `clip(action, -1, 1)` times its per-step limits. The free
object follows a damped semi-implicit Euler update driven by hand contact.

Stage couplings:
  * A buried object (visibility at most 0.5) cannot be moved. Digging near
    it with a moving hand reduces the buried depth.
  * A grasp binds when the gripper closes (rising through 0.8 after having
    been open below 0.2) with the hand within 5 cm of the object, aligned
    within 0.4 rad (modulo pi), and low enough. In BlockChain-2D the object
    must also lie in the graspable band |angle| <= 1 rad.
  * Closing on an object spinning faster than 1 rad/s slips with
    probability proportional to its speed.
  * BlockChain-2D: while held, the wrist can turn at most pi/2 away from its
    angle at grasp time, so the grasp orientation limits insertion.
  * ToolFlip-2D: the object is a tool with a handle; the in-hand turn rate
    scales with the grasp point's distance from the tool's center.
  * Grasp stages lower the hand during the first half of the horizon and
    then lift it at a fixed rate.
"""

import abc
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from skillchain.config import NoiseConfig, SubTaskSpec
from skillchain.envs import rewards
from skillchain.envs.state import (
    ACTION_DIM,
    HANDLE_LENGTH,
    WORKSPACE,
    EnvState,
    StepResult,
    check_state,
    obs_fields,
    observe,
    wrap_angle,
)
from skillchain.errors import ConfigError, InputError, UsageError

logger = logging.getLogger(__name__)

DT = 0.05
MAX_STEP = 0.03
MAX_TURN = 0.15
MAX_GRIP = 0.25
DAMPING = 0.8
SPIN_ACCEL = 8.0
NUDGE_GAIN = 0.2
CONTACT_RADIUS = 0.06
DIG_RADIUS = 0.08
DIG_RATE = 0.06
MOVABLE_VISIBILITY = 0.5
GRASP_RADIUS = 0.05
GRASP_ALIGN = 0.4
GRASP_HEIGHT = 0.05
GRIP_OPEN = 0.2
GRIP_CLOSED = 0.8
GRIP_RELEASE = 0.5
GRASPABLE_BAND = 1.0
LIFT_RATE = 0.02
SLIP_SPEED = 1.0
SLIP_GAIN = 0.5
IN_HAND_LIMIT = math.pi / 2.0
MIN_LEVERAGE = 0.1


def _clip_ws(v: float) -> float:
    return min(max(v, -WORKSPACE), WORKSPACE)


def grip_alignment(hand_angle: float, obj_angle: float) -> float:
    """Absolute wrist misalignment modulo pi, in [0, pi/2]."""
    return abs(wrap_angle(2.0 * (hand_angle - obj_angle))) / 2.0


def leverage(grasp_offset: float) -> float:
    """In-hand turn-rate factor for a tool held at `grasp_offset`."""
    ratio = abs(grasp_offset) / (HANDLE_LENGTH / 2.0)
    return min(max(ratio, MIN_LEVERAGE), 1.0)


def success(spec: SubTaskSpec, state: EnvState) -> bool:
    """Evaluates the stage's success predicate on `state`."""
    crit = spec.success
    if spec.template == "search":
        return state.visibility >= crit.visibility
    if spec.template == "orient":
        return abs(state.obj_angle) <= crit.band
    if spec.template == "grasp":
        return state.held and state.hand_z >= crit.lift
    pos_err, angle_err = rewards.goal_errors(state)
    return pos_err <= crit.pos_tol and abs(angle_err) <= crit.angle_tol


class TaskSuite(abc.ABC):
    """A multi-stage task: shared dynamics plus per-stage specs."""

    name: str = ""

    def __init__(self, stages: Sequence[SubTaskSpec]):
        if not stages:
            raise ConfigError("A suite needs at least one stage.")
        self.stages: List[SubTaskSpec] = list(stages)

    @property
    def obs_dim(self) -> int:
        return len(obs_fields(self.name))

    @property
    def action_dim(self) -> int:
        return ACTION_DIM

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @abc.abstractmethod
    def sample_native(
        self, rng: np.random.Generator, spec: SubTaskSpec
    ) -> EnvState:
        """Draws a first-stage initial state."""

    @abc.abstractmethod
    def naive_sampler(self, stage: int, rng: np.random.Generator) -> EnvState:
        """Draws an initial state for `stage` without a predecessor policy."""

    @abc.abstractmethod
    def _can_bind(self, state: EnvState) -> Tuple[bool, float]:
        """Returns whether a closing grip binds, and the grasp offset."""

    @abc.abstractmethod
    def _held_position(
        self, hand_x: float, hand_y: float, obj_angle: float, offset: float
    ) -> Tuple[float, float]:
        """Object position implied by the hand pose while held."""

    def _turn(self, state: EnvState, turn: float) -> float:
        return wrap_angle(state.hand_angle + turn)

    def enter_stage(self, state: EnvState, stage: int) -> EnvState:
        """Resets per-stage bookkeeping and keeps the world untouched."""
        if not 0 <= stage < self.num_stages:
            raise UsageError(f"{self.name} has no stage {stage}.")
        return state.replace(
            stage=stage, step=0, start_angle=state.obj_angle, dropped=False
        )

    def reset(
        self,
        stage: int = 0,
        init: Optional[EnvState] = None,
        rng: Optional[np.random.Generator] = None,
        noise: NoiseConfig = NoiseConfig(),
    ) -> Tuple[EnvState, np.ndarray]:
        """Starts an episode of `stage`.

        Args:
            stage: Zero-based stage index.
            init: External initial state, e.g. from a terminal buffer. Used
              verbatim apart from stage bookkeeping. Required after stage 0.
            rng: Randomness for the native sampler and correlated noise.
            noise: Noise configuration; correlated biases are drawn here.

        Raises:
            InvalidStateError: if `init` violates the state invariants.
            UsageError: if a later stage is reset without `init`.
        """
        rng = rng if rng is not None else np.random.default_rng()
        if init is None:
            if stage != 0:
                raise UsageError(
                    f"Stage {stage} starts from a predecessor's terminal "
                    "state; pass `init` or use naive_sampler."
                )
            state = self.sample_native(rng, self.stages[0])
        else:
            state = check_state(init, self.name)
        state = self.enter_stage(state, stage)
        obs_bias: Tuple[float, ...] = ()
        action_bias: Tuple[float, ...] = ()
        if noise.obs_correlated > 0.0:
            obs_bias = tuple(
                rng.normal(0.0, noise.obs_correlated, self.obs_dim)
            )
        if noise.action_correlated > 0.0:
            action_bias = tuple(
                rng.normal(0.0, noise.action_correlated, ACTION_DIM)
            )
        state = state.replace(obs_bias=obs_bias, action_bias=action_bias)
        return state, self.observe(state, noise, rng)

    def observe(
        self,
        state: EnvState,
        noise: NoiseConfig,
        rng: np.random.Generator,
    ) -> np.ndarray:
        obs = observe(state)
        if state.obs_bias:
            obs = obs + np.asarray(state.obs_bias)
        if noise.obs_uncorrelated > 0.0:
            obs = obs + rng.normal(0.0, noise.obs_uncorrelated, obs.shape)
        return obs

    def step(
        self,
        state: EnvState,
        action,
        noise: NoiseConfig,
        rng: np.random.Generator,
    ) -> StepResult:
        """Advances one control step of the state's current stage.

        Raises:
            InputError: if the action has the wrong length or is not finite.
        """
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (ACTION_DIM,) or not np.all(np.isfinite(a)):
            raise InputError(
                f"Action must be {ACTION_DIM} finite numbers, got {action!r}."
            )
        a = np.clip(a, -1.0, 1.0)
        if state.action_bias:
            a = a + np.asarray(state.action_bias)
        if noise.action_uncorrelated > 0.0:
            a = a + rng.normal(0.0, noise.action_uncorrelated, ACTION_DIM)
        a = np.clip(a, -1.0, 1.0)
        spec = self.stages[state.stage]
        nxt = self.integrate(state, a, spec, rng)
        nxt = nxt.replace(
            step=state.step + 1, prev_action=tuple(float(v) for v in a)
        )
        reward = rewards.stage_reward(spec.template, nxt, spec.reward)
        ok = success(spec, nxt)
        done = ok or nxt.step >= spec.horizon
        return StepResult(nxt, self.observe(nxt, noise, rng), reward, ok, done)

    def integrate(
        self,
        state: EnvState,
        a: np.ndarray,
        spec: SubTaskSpec,
        rng: np.random.Generator,
    ) -> EnvState:
        """Applies the world dynamics for an already clipped action."""
        hand_x = _clip_ws(state.hand_x + a[0] * MAX_STEP)
        hand_y = _clip_ws(state.hand_y + a[1] * MAX_STEP)
        hand_vx = (hand_x - state.hand_x) / DT
        hand_vy = (hand_y - state.hand_y) / DT
        grip = min(max(state.grip + a[3] * MAX_GRIP, 0.0), 1.0)
        hand_z = state.hand_z
        if spec.template == "grasp":
            if state.step < spec.horizon // 2:
                hand_z = max(hand_z - LIFT_RATE, 0.0)
            else:
                hand_z = hand_z + LIFT_RATE

        held = state.held
        dropped = state.dropped
        if held:
            hand_angle = self._turn(state, a[2] * MAX_TURN)
            obj_angle = wrap_angle(hand_angle + state.grasp_rel_angle)
            obj_x, obj_y = self._held_position(
                hand_x, hand_y, obj_angle, state.grasp_offset
            )
            nxt = state.replace(
                hand_x=hand_x,
                hand_y=hand_y,
                hand_angle=hand_angle,
                hand_z=hand_z,
                grip=grip,
                obj_x=obj_x,
                obj_y=obj_y,
                obj_angle=obj_angle,
                obj_vx=(obj_x - state.obj_x) / DT,
                obj_vy=(obj_y - state.obj_y) / DT,
                obj_omega=wrap_angle(obj_angle - state.obj_angle) / DT,
            )
            if grip < GRIP_RELEASE:
                nxt = nxt.replace(
                    held=False,
                    dropped=hand_z > GRASP_HEIGHT,
                    obj_vx=0.0,
                    obj_vy=0.0,
                    obj_omega=0.0,
                    grip_armed=grip <= GRIP_OPEN,
                )
            return nxt

        hand_angle = wrap_angle(state.hand_angle + a[2] * MAX_TURN)
        dist = math.hypot(hand_x - state.obj_x, hand_y - state.obj_y)
        movable = (
            state.visibility > MOVABLE_VISIBILITY and hand_z < GRASP_HEIGHT
        )
        contact = dist < CONTACT_RADIUS and grip < GRIP_RELEASE
        omega = DAMPING * state.obj_omega
        vx = DAMPING * state.obj_vx
        vy = DAMPING * state.obj_vy
        if contact and movable:
            omega += SPIN_ACCEL * a[2] * DT
            vx += NUDGE_GAIN * hand_vx
            vy += NUDGE_GAIN * hand_vy
        obj_x = _clip_ws(state.obj_x + vx * DT)
        obj_y = _clip_ws(state.obj_y + vy * DT)
        obj_angle = wrap_angle(state.obj_angle + omega * DT)

        depth = state.depth
        if depth > 0.0 and hand_z < GRASP_HEIGHT:
            proximity = max(0.0, 1.0 - dist / DIG_RADIUS)
            stroke = math.hypot(a[0], a[1])
            depth = max(depth - DIG_RATE * proximity * stroke, 0.0)

        nxt = state.replace(
            hand_x=hand_x,
            hand_y=hand_y,
            hand_angle=hand_angle,
            hand_z=hand_z,
            grip=grip,
            obj_x=obj_x,
            obj_y=obj_y,
            obj_angle=obj_angle,
            obj_vx=vx,
            obj_vy=vy,
            obj_omega=omega,
            depth=depth,
            dropped=dropped,
        )
        closing = state.grip < GRIP_CLOSED <= grip and state.grip_armed
        armed = grip <= GRIP_OPEN or (state.grip_armed and not closing)
        nxt = nxt.replace(grip_armed=armed)
        if not closing:
            return nxt
        binds, offset = self._can_bind(nxt)
        if not binds:
            return nxt
        speed = abs(nxt.obj_omega)
        if speed > SLIP_SPEED and rng.random() < min(1.0, SLIP_GAIN * speed):
            logger.debug("Grasp slipped on an object spinning at %.2f", speed)
            return nxt
        bx, by = self._held_position(hand_x, hand_y, obj_angle, offset)
        return nxt.replace(
            held=True,
            dropped=False,
            obj_x=bx,
            obj_y=by,
            obj_vx=0.0,
            obj_vy=0.0,
            obj_omega=0.0,
            grasp_rel_angle=wrap_angle(obj_angle - hand_angle),
            grasp_hand_angle=hand_angle,
            grasp_offset=offset,
        )


def _uniform_angle(rng: np.random.Generator) -> float:
    return wrap_angle(rng.uniform(-math.pi, math.pi))


def _near(
    rng: np.random.Generator, x: float, y: float, lo: float, hi: float
) -> Tuple[float, float]:
    radius = rng.uniform(lo, hi)
    heading = rng.uniform(-math.pi, math.pi)
    return (
        _clip_ws(x + radius * math.cos(heading)),
        _clip_ws(y + radius * math.sin(heading)),
    )


class BlockChainSuite(TaskSuite):
    """Dig out a buried block, turn it, grasp and lift it, then insert it."""

    name = "blockchain"

    def sample_native(
        self, rng: np.random.Generator, spec: SubTaskSpec
    ) -> EnvState:
        obj_x, obj_y = rng.uniform(-0.3, 0.3, 2)
        hand_x, hand_y = _near(rng, obj_x, obj_y, 0.1, 0.3)
        goal_x, goal_y = rng.uniform(-0.3, 0.3, 2)
        lo, hi = spec.depth_range
        return EnvState(
            suite=self.name,
            hand_x=hand_x,
            hand_y=hand_y,
            hand_angle=_uniform_angle(rng),
            grip=0.0,
            obj_x=float(obj_x),
            obj_y=float(obj_y),
            obj_angle=_uniform_angle(rng),
            goal_x=float(goal_x),
            goal_y=float(goal_y),
            goal_angle=float(rng.uniform(-1.5, 1.5)),
            depth=float(rng.uniform(lo, hi)),
        )

    def naive_sampler(self, stage: int, rng: np.random.Generator) -> EnvState:
        """Uninformed start for `stage`: uncovered block, random poses.

        Stages after grasping start with the block already in hand at a
        random grasp orientation, resting on the table.
        """
        state = self.sample_native(rng, self.stages[0])
        if stage > 0:
            state = state.replace(depth=0.0)
        if self.stages[stage].template == "insert":
            state = state.replace(
                obj_x=state.hand_x,
                obj_y=state.hand_y,
                obj_angle=state.hand_angle,
                grip=1.0,
                held=True,
                grip_armed=False,
                grasp_rel_angle=0.0,
                grasp_hand_angle=state.hand_angle,
            )
        return self.enter_stage(state, stage)

    def _can_bind(self, state: EnvState) -> Tuple[bool, float]:
        dx, dy = state.hand_x - state.obj_x, state.hand_y - state.obj_y
        dist = math.hypot(dx, dy)
        ok = (
            dist < GRASP_RADIUS
            and state.hand_z < GRASP_HEIGHT
            and state.visibility > MOVABLE_VISIBILITY
            and grip_alignment(state.hand_angle, state.obj_angle) < GRASP_ALIGN
            and abs(state.obj_angle) <= GRASPABLE_BAND
        )
        return ok, 0.0

    def _held_position(self, hand_x, hand_y, obj_angle, offset):
        return hand_x, hand_y

    def _turn(self, state: EnvState, turn: float) -> float:
        swing = wrap_angle(state.hand_angle + turn - state.grasp_hand_angle)
        swing = min(max(swing, -IN_HAND_LIMIT), IN_HAND_LIMIT)
        return wrap_angle(state.grasp_hand_angle + swing)


class ToolFlipSuite(TaskSuite):
    """Grasp a tool by its handle, then turn and place it in hand.

    The object position is the tool's center; the handle spans
    `HANDLE_LENGTH` along its angle.
    """

    name = "toolflip"

    def sample_native(
        self, rng: np.random.Generator, spec: SubTaskSpec
    ) -> EnvState:
        obj_x, obj_y = rng.uniform(-0.3, 0.3, 2)
        obj_angle = _uniform_angle(rng)
        hand_x, hand_y = _near(rng, obj_x, obj_y, 0.05, 0.15)
        goal_x, goal_y = _near(rng, obj_x, obj_y, 0.0, 0.2)
        turn = rng.uniform(1.5, 2.5) * rng.choice([-1.0, 1.0])
        return EnvState(
            suite=self.name,
            hand_x=hand_x,
            hand_y=hand_y,
            hand_angle=_uniform_angle(rng),
            grip=0.0,
            obj_x=float(obj_x),
            obj_y=float(obj_y),
            obj_angle=obj_angle,
            goal_x=goal_x,
            goal_y=goal_y,
            goal_angle=wrap_angle(obj_angle + turn),
        )

    def naive_sampler(self, stage: int, rng: np.random.Generator) -> EnvState:
        """Uninformed start for `stage`: later stages hold the tool at a
        uniformly random point of its handle."""
        state = self.sample_native(rng, self.stages[0])
        if stage > 0:
            offset = float(
                rng.uniform(-HANDLE_LENGTH / 2.0, HANDLE_LENGTH / 2.0)
            )
            hand_angle = state.obj_angle
            obj_x, obj_y = self._held_position(
                state.hand_x, state.hand_y, state.obj_angle, offset
            )
            state = state.replace(
                obj_x=obj_x,
                obj_y=obj_y,
                hand_angle=hand_angle,
                grip=1.0,
                held=True,
                grip_armed=False,
                grasp_rel_angle=0.0,
                grasp_hand_angle=hand_angle,
                grasp_offset=offset,
            )
        return self.enter_stage(state, stage)

    def _can_bind(self, state: EnvState) -> Tuple[bool, float]:
        ux, uy = math.cos(state.obj_angle), math.sin(state.obj_angle)
        dx, dy = state.hand_x - state.obj_x, state.hand_y - state.obj_y
        along = dx * ux + dy * uy
        across = abs(-dx * uy + dy * ux)
        half = HANDLE_LENGTH / 2.0
        ok = (
            across < GRASP_RADIUS
            and abs(along) <= half
            and state.hand_z < GRASP_HEIGHT
            and grip_alignment(state.hand_angle, state.obj_angle) < GRASP_ALIGN
        )
        return ok, along

    def _held_position(self, hand_x, hand_y, obj_angle, offset):
        return (
            hand_x - offset * math.cos(obj_angle),
            hand_y - offset * math.sin(obj_angle),
        )

    def _turn(self, state: EnvState, turn: float) -> float:
        scaled = turn * leverage(state.grasp_offset)
        return wrap_angle(state.hand_angle + scaled)


SUITES = {"blockchain": BlockChainSuite, "toolflip": ToolFlipSuite}


def make_suite(name: str, stages: Sequence[SubTaskSpec]) -> TaskSuite:
    """Builds a suite by name.

    Raises:
        ConfigError: for an unknown suite name.
    """
    try:
        return SUITES[name](stages)
    except KeyError:
        raise ConfigError(f"Unknown suite '{name}'.") from None
