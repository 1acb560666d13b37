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

"""Statistics for comparing methods over seeds."""

from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from skillchain.errors import InputError


class SignTest(NamedTuple):
    wins: int
    losses: int
    ties: int
    p_value: float


def mean_std(values: Sequence[float]) -> Tuple[float, Optional[float]]:
    """Mean and sample standard deviation; the std of one value is None."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InputError("Cannot summarize an empty list of values.")
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1))


def sign_test(
    a: Sequence[float], b: Sequence[float], alternative: str = "greater"
) -> SignTest:
    """One-sided paired sign test of a against b; ties are dropped.

    With no untied pairs the p-value is 1.
    """
    if len(a) != len(b):
        raise InputError(
            f"Paired samples differ in length: {len(a)}, {len(b)}."
        )
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    wins = int(np.sum(diff > 0))
    losses = int(np.sum(diff < 0))
    ties = int(np.sum(diff == 0))
    n = wins + losses
    if n == 0:
        return SignTest(wins, losses, ties, 1.0)
    result = stats.binomtest(wins, n, 0.5, alternative=alternative)
    return SignTest(wins, losses, ties, float(result.pvalue))


def auroc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Area under the ROC curve from the Mann-Whitney U statistic.

    Raises:
        InputError: unless both classes are present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pos, neg = scores[labels], scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise InputError("AUROC needs both positive and negative examples.")
    u = stats.mannwhitneyu(pos, neg, alternative="two-sided").statistic
    return float(u) / (pos.size * neg.size)


def ks_test(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and p-value."""
    result = stats.kstest(np.asarray(a), np.asarray(b))
    return float(result.statistic), float(result.pvalue)
