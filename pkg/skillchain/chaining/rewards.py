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

"""Fine-tuning reward that adds the successor's feasibility at termination."""

from typing import Optional

from skillchain.envs.trajectory import Trajectory, terminal_window
from skillchain.feasibility.model import TransitionModel, feasibility_bonus


def combined_reward(
    r_task: float,
    f_value: float,
    lam1: float,
    lam2: float,
    is_terminal_step: bool,
) -> float:
    """lam1 * r_task, plus lam2 * f_value on the episode's last step."""
    reward = lam1 * r_task
    if is_terminal_step:
        reward += lam2 * f_value
    return reward


class FeasibilityShaper:
    """Reward shaper for `RolloutWorker`: scores the trailing window when an
    episode ends. Without a model it only rescales the task reward."""

    def __init__(
        self,
        model: Optional[TransitionModel],
        lam1: float = 1.0,
        lam2: float = 0.5,
    ):
        self.model = model
        self.lam1 = lam1
        self.lam2 = lam2

    def f_value(self, trajectory: Trajectory) -> float:
        if self.model is None:
            return 0.0
        window = terminal_window(trajectory, self.model.window_length)
        return feasibility_bonus(self.model, window)

    def __call__(
        self, reward: float, trajectory: Trajectory, done: bool
    ) -> float:
        f = self.f_value(trajectory) if done and self.lam2 != 0.0 else 0.0
        return combined_reward(reward, f, self.lam1, self.lam2, done)
