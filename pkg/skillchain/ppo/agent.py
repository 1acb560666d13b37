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

"""Gaussian actor with a separate value network."""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from skillchain.config import PpoHyper
from skillchain.nn.layers import (
    DenseParams,
    GaussianPolicyHead,
    gaussian_sample,
    mlp_forward,
)

POLICY_SCOPE = "policy/"
VALUE_SCOPE = "value/"
LOG_STD = "log_std"


@dataclass
class ActorCritic:
    """A sub-policy: mean network, state-independent std and value network.

    Instances are treated as values; updates return new instances.
    """

    policy: DenseParams
    head: GaussianPolicyHead
    value: DenseParams

    @classmethod
    def init(
        cls,
        obs_dim: int,
        action_dim: int,
        hyper: PpoHyper,
        rng: np.random.Generator,
    ) -> "ActorCritic":
        hidden = tuple(hyper.hidden)
        policy = DenseParams.init(
            (obs_dim,) + hidden + (action_dim,),
            rng,
            activation=hyper.activation,
            output_scale=0.01,
        )
        value = DenseParams.init(
            (obs_dim,) + hidden + (1,), rng, activation=hyper.activation
        )
        head = GaussianPolicyHead.init(action_dim, hyper.init_std)
        return cls(policy=policy, head=head, value=value)

    @property
    def obs_dim(self) -> int:
        return self.policy.sizes[0]

    def params(self) -> Dict[str, np.ndarray]:
        """All trainable arrays under scoped names."""
        out = {POLICY_SCOPE + k: v for k, v in self.policy.arrays.items()}
        out.update({VALUE_SCOPE + k: v for k, v in self.value.arrays.items()})
        out[LOG_STD] = self.head.log_std
        return out

    def with_params(self, params: Mapping[str, np.ndarray]) -> "ActorCritic":
        def pick(scope):
            return {
                k[len(scope) :]: np.array(v, dtype=np.float64)
                for k, v in params.items()
                if k.startswith(scope)
            }

        policy = DenseParams(
            self.policy.sizes, self.policy.activations, pick(POLICY_SCOPE)
        )
        value = DenseParams(
            self.value.sizes, self.value.activations, pick(VALUE_SCOPE)
        )
        policy.validate()
        value.validate()
        head = GaussianPolicyHead(np.array(params[LOG_STD], dtype=np.float64))
        return ActorCritic(policy=policy, head=head, value=value)

    def copy(self) -> "ActorCritic":
        return self.with_params(self.params())

    def mean(self, obs) -> np.ndarray:
        return mlp_forward(self.policy, obs)

    def value_of(self, obs) -> np.ndarray:
        out = mlp_forward(self.value, obs)
        return out[..., 0]

    def act(self, obs) -> np.ndarray:
        """Deterministic action: the policy mean."""
        return self.mean(obs)

    def sample(
        self, obs, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (action, log_prob, mean) for a vector or batch of obs."""
        mean = self.mean(obs)
        action, log_prob = gaussian_sample(self.head, mean, rng)
        return action, log_prob, mean


class StochasticPolicy:
    """Adapts an ActorCritic to the `act(obs)` protocol with sampling."""

    def __init__(
        self, agent: ActorCritic, rng: Optional[np.random.Generator] = None
    ):
        self.agent = agent
        self.rng = rng if rng is not None else np.random.default_rng()

    def act(self, obs) -> np.ndarray:
        return self.agent.sample(obs, self.rng)[0]
