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

"""Stage reward templates.

Action and torque penalties read the action stored on the state by the last
step. The toy suites have no motor torques, so the torque term uses the
action scaled by the object's speed, which vanishes at rest.
"""

import math

from skillchain.config import (
    GRASP_REWARD,
    INSERT_REWARD,
    ORIENT_REWARD,
    SEARCH_REWARD,
    RewardParams,
)
from skillchain.envs.state import HANDLE_LENGTH, EnvState, wrap_angle

SEARCH = RewardParams(**SEARCH_REWARD)
ORIENT = RewardParams(**ORIENT_REWARD)
GRASP = RewardParams(**GRASP_REWARD)
INSERT = RewardParams(**INSERT_REWARD)


def action_sq(state: EnvState) -> float:
    return sum(a * a for a in state.prev_action)


def torque_sq(state: EnvState) -> float:
    speed_sq = state.obj_vx**2 + state.obj_vy**2 + state.obj_omega**2
    return action_sq(state) * speed_sq


def hand_object_distance(state: EnvState) -> float:
    """Planar distance from the hand to the object.

    For the tool this is the distance to the closest point of its handle.
    """
    dx = state.hand_x - state.obj_x
    dy = state.hand_y - state.obj_y
    if state.suite == "toolflip":
        ux, uy = math.cos(state.obj_angle), math.sin(state.obj_angle)
        half = HANDLE_LENGTH / 2.0
        along = max(-half, min(half, dx * ux + dy * uy))
        dx -= along * ux
        dy -= along * uy
    return math.hypot(dx, dy)


def grasp_distance(state: EnvState) -> float:
    planar = hand_object_distance(state)
    return math.hypot(planar, state.hand_z - state.obj_z)


def goal_errors(state: EnvState):
    """Returns (position error, wrapped angle error) to the goal pose."""
    pos = math.hypot(state.obj_x - state.goal_x, state.obj_y - state.goal_y)
    return pos, wrap_angle(state.obj_angle - state.goal_angle)


def reward_search(state: EnvState, params: RewardParams = SEARCH) -> float:
    dist = hand_object_distance(state)
    return (
        params.lam1 * state.visibility
        + params.lam2 * min(params.e0 - dist, 0.0)
        + params.lam3 * action_sq(state)
        + params.lam4 * torque_sq(state)
    )


def reward_orient(
    state: EnvState, initial_angle: float, params: RewardParams = ORIENT
) -> float:
    """Rewards unsigned rotation away from `initial_angle`, goal-agnostic."""
    turned = abs(wrap_angle(state.obj_angle - initial_angle))
    dist = hand_object_distance(state)
    return (
        params.lam1 * turned
        + params.lam2 * min(params.e0 - dist, 0.0)
        + params.lam3 * action_sq(state)
        + params.lam4 * torque_sq(state)
    )


def reward_grasp(state: EnvState, params: RewardParams = GRASP) -> float:
    """Exponential reach term, flat inside `e0`, zero once dropped.

    `alpha0` is negative, so the term decays with distance beyond `e0`.
    """
    reach = 0.0
    if not state.dropped:
        excess = max(grasp_distance(state) - params.e0, 0.0)
        reach = math.exp(params.alpha0 * excess)
    return (
        params.lam1 * reach
        + params.lam2 * action_sq(state)
        + params.lam3 * torque_sq(state)
    )


def reward_insert(state: EnvState, params: RewardParams = INSERT) -> float:
    pos_err, angle_err = goal_errors(state)
    d_a = min(max(abs(math.sin(angle_err / 2.0)), 0.0), 1.0)
    align = math.exp(
        -(params.alpha0 * pos_err + params.alpha1 * 2.0 * math.asin(d_a))
    )
    return (
        params.lam1 * align
        + params.lam2 * min(params.e0 - pos_err, 0.0)
        + params.lam3 * action_sq(state)
        + params.lam4 * torque_sq(state)
    )


def stage_reward(
    template: str, state: EnvState, params: RewardParams
) -> float:
    if template == "search":
        return reward_search(state, params)
    if template == "orient":
        return reward_orient(state, state.start_angle, params)
    if template == "grasp":
        return reward_grasp(state, params)
    return reward_insert(state, params)
