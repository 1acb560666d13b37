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

"""Exceptions raised by the skill chaining framework.

Every error derives from `SkillchainError` so the CLI and the MCP tools can
turn any failure into a machine-readable payload with `to_dict`.
"""

from typing import Any, Dict, List, Optional


class SkillchainError(Exception):
    """Base class for all framework errors."""

    def __init__(self, message: str, details: Optional[Any] = None):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """Returns a JSON-serializable description of the error."""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class ConfigError(SkillchainError, ValueError):
    """Invalid configuration, including parameter shape mismatches."""


class UsageError(SkillchainError):
    """An API was called in a way it does not support."""


class InputError(SkillchainError, ValueError):
    """Invalid runtime input such as an empty window or a non-finite action."""


class InvalidStateError(SkillchainError, ValueError):
    """An externally provided environment state violates its invariants."""

    def __init__(self, message: str, diagnostics: List[str]):
        super().__init__(message, details=diagnostics)
        self.diagnostics = diagnostics


class NotEnoughSamplesError(SkillchainError):
    """A buffer holds fewer samples than an operation requires."""


class CalibrationError(SkillchainError):
    """A feasibility model is uncalibrated or cannot be calibrated."""


class TrainingError(SkillchainError):
    """A training step produced a non-finite loss."""


class StageFailedError(SkillchainError):
    """A chain stage did not reach its minimum success rate."""

    def __init__(self, stage: int, success_rate: float, required: float):
        super().__init__(
            f"Stage {stage} reached success rate {success_rate:.3f}, "
            f"below the required {required:.3f}.",
            details={
                "stage": stage,
                "success_rate": success_rate,
                "required": required,
            },
        )
        self.stage = stage
        self.success_rate = success_rate


class CheckpointError(SkillchainError):
    """A checkpoint file is corrupt, truncated or otherwise unreadable."""


class CheckpointVersionError(CheckpointError):
    """A checkpoint was written by an incompatible format version."""
