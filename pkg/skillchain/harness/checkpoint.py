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

"""Saving and loading a whole ChainState.

Arrays live in the versioned container of `skillchain.nn.serialization`
under the names `policy/{i}/...`, `model/{i}/...` and `fbuf/{i}/...`.
Everything else (spec, phase, history, start-state buffers) goes in the
JSON metadata. Saving a loaded chain reproduces the original bytes.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from skillchain.chaining.state import (
    ChainState,
    InitialStateBuffer,
    state_from_dict,
    state_to_dict,
)
from skillchain.config import ChainSpec
from skillchain.errors import (
    CheckpointError,
    CheckpointVersionError,
    ConfigError,
)
from skillchain.feasibility.buffers import FeasibilityBuffers
from skillchain.feasibility.model import model_from_arrays, model_to_arrays
from skillchain.nn import serialization
from skillchain.nn.layers import DenseParams, GaussianPolicyHead
from skillchain.ppo.agent import (
    LOG_STD,
    POLICY_SCOPE,
    VALUE_SCOPE,
    ActorCritic,
)

logger = logging.getLogger(__name__)

CHAIN_KIND = "chain_state"
CHAIN_LAYOUT = 1


def _agent_meta(agent: ActorCritic) -> Dict[str, Any]:
    return {
        "policy_sizes": list(agent.policy.sizes),
        "policy_activations": list(agent.policy.activations),
        "value_sizes": list(agent.value.sizes),
        "value_activations": list(agent.value.activations),
    }


def _agent_from(
    arrays: Dict[str, np.ndarray], meta: Dict[str, Any], prefix: str
) -> ActorCritic:
    def pick(scope: str) -> Dict[str, np.ndarray]:
        full = prefix + scope
        return {
            k[len(full) :]: v.copy()
            for k, v in arrays.items()
            if k.startswith(full)
        }

    policy = DenseParams(
        tuple(int(s) for s in meta["policy_sizes"]),
        tuple(meta["policy_activations"]),
        pick(POLICY_SCOPE),
    )
    value = DenseParams(
        tuple(int(s) for s in meta["value_sizes"]),
        tuple(meta["value_activations"]),
        pick(VALUE_SCOPE),
    )
    try:
        policy.validate()
        value.validate()
    except ConfigError as e:
        raise CheckpointError(f"Stored policy is invalid: {e}") from e
    head = GaussianPolicyHead(arrays[prefix + LOG_STD].copy())
    return ActorCritic(policy=policy, head=head, value=value)


def chain_to_arrays(
    state: ChainState,
) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Flattens a chain into (arrays, metadata) for the container."""
    arrays: Dict[str, np.ndarray] = {}
    policies = []
    for i, agent in enumerate(state.policies):
        prefix = f"policy/{i}/"
        arrays.update({prefix + k: v for k, v in agent.params().items()})
        policies.append(_agent_meta(agent))
    models: List[Optional[Dict[str, Any]]] = []
    for i, model in enumerate(state.models):
        if model is None:
            models.append(None)
            continue
        model_arrays, meta = model_to_arrays(model, f"model/{i}/")
        arrays.update(model_arrays)
        models.append(meta)
    buffers: List[Optional[Dict[str, Any]]] = []
    for i, buf in enumerate(state.feasibility_buffers):
        if buf is None:
            buffers.append(None)
            continue
        arrays.update(buf.to_arrays(f"fbuf/{i}/"))
        buffers.append(buf.metadata())
    init_states = [
        None
        if buf is None
        else {
            "capacity": buf.capacity,
            "states": [state_to_dict(s) for s in buf.states()],
        }
        for buf in state.init_buffers
    ]
    metadata = {
        "kind": CHAIN_KIND,
        "layout": CHAIN_LAYOUT,
        "spec": state.spec.model_dump(mode="json"),
        "method": state.method,
        "phase": state.phase,
        "iteration": state.iteration,
        "history": state.history,
        "policies": policies,
        "models": models,
        "feasibility_buffers": buffers,
        "init_buffers": init_states,
    }
    return arrays, metadata


def chain_from_arrays(
    arrays: Dict[str, np.ndarray], metadata: Dict[str, Any]
) -> ChainState:
    """Inverse of `chain_to_arrays`.

    Raises:
        CheckpointVersionError: if the chain layout is not supported.
        CheckpointError: if a field is missing or malformed.
    """
    if metadata.get("kind") != CHAIN_KIND:
        raise CheckpointError("Container does not hold a chain state.")
    if metadata.get("layout") != CHAIN_LAYOUT:
        raise CheckpointVersionError(
            f"Chain layout {metadata.get('layout')} needs migration to "
            f"layout {CHAIN_LAYOUT}.",
            details={"found": metadata.get("layout"), "expected": CHAIN_LAYOUT},
        )
    try:
        spec = ChainSpec.model_validate(metadata["spec"])
    except ValidationError as e:
        raise CheckpointError(f"Stored chain spec is invalid: {e}") from e
    try:
        policies = [
            _agent_from(arrays, meta, f"policy/{i}/")
            for i, meta in enumerate(metadata["policies"])
        ]
        models = []
        for i, meta in enumerate(metadata["models"]):
            if meta is None:
                models.append(None)
                continue
            agent = policies[i] if i < len(policies) else None
            models.append(model_from_arrays(arrays, meta, f"model/{i}/", agent))
        fbufs = [
            None
            if meta is None
            else FeasibilityBuffers.from_arrays(arrays, meta, f"fbuf/{i}/")
            for i, meta in enumerate(metadata["feasibility_buffers"])
        ]
        init_buffers: List[Optional[InitialStateBuffer]] = []
        for stored in metadata["init_buffers"]:
            if stored is None:
                init_buffers.append(None)
                continue
            buf = InitialStateBuffer(int(stored["capacity"]))
            for s in stored["states"]:
                buf.add(state_from_dict(s))
            init_buffers.append(buf)
        return ChainState(
            spec=spec,
            policies=policies,
            models=models,
            feasibility_buffers=fbufs,
            init_buffers=init_buffers,
            method=metadata["method"],
            phase=metadata["phase"],
            iteration=int(metadata["iteration"]),
            history=metadata["history"],
        )
    except KeyError as e:
        raise CheckpointError(f"Checkpoint field missing: {e}") from e


def dumps_chain(state: ChainState) -> bytes:
    arrays, metadata = chain_to_arrays(state)
    return serialization.dumps_arrays(arrays, metadata)


def loads_chain(blob: bytes) -> ChainState:
    arrays, metadata = serialization.loads_arrays(blob)
    return chain_from_arrays(arrays, metadata)


def save_chain(state: ChainState, path: os.PathLike) -> None:
    """Writes a chain checkpoint; the target only ever holds a whole file."""
    arrays, metadata = chain_to_arrays(state)
    serialization.save_arrays(path, arrays, metadata)
    logger.info(
        "Saved %s chain (%s, %d policies) to %s",
        state.method,
        state.phase,
        len(state.policies),
        path,
    )


def load_chain(path: os.PathLike) -> ChainState:
    """Reads a chain checkpoint.

    Raises:
        CheckpointError: if the file is missing, truncated or corrupt.
        CheckpointVersionError: if it needs migration.
    """
    arrays, metadata = serialization.load_arrays(Path(path))
    return chain_from_arrays(arrays, metadata)
