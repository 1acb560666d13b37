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

"""Per-method, per-condition success tables aggregated over seeds."""

import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from skillchain import csvio
from skillchain.errors import InputError
from skillchain.harness.stats import mean_std, sign_test

RESULT_COLUMNS = (
    "method",
    "condition",
    "seed",
    "success",
    "stage_success",
)
SUMMARY_COLUMNS = (
    "method",
    "condition",
    "seeds",
    "mean",
    "std",
    "stage_mean",
)


@dataclass
class SeedResult:
    method: str
    condition: str
    seed: int
    success: float
    stage_success: List[float] = field(default_factory=list)

    def row(self) -> dict:
        return {
            "method": self.method,
            "condition": self.condition,
            "seed": self.seed,
            "success": self.success,
            "stage_success": ";".join(repr(v) for v in self.stage_success),
        }


@dataclass
class Summary:
    method: str
    condition: str
    seeds: int
    mean: float
    std: Optional[float]
    stage_mean: List[float]

    def row(self) -> dict:
        return {
            "method": self.method,
            "condition": self.condition,
            "seeds": self.seeds,
            "mean": self.mean,
            "std": self.std,
            "stage_mean": ";".join(repr(v) for v in self.stage_mean),
        }


@dataclass
class ResultTable:
    """Raw per-seed success rates with mean and std over seeds.

    The std of a single seed is None and is written as an empty cell.
    """

    rows: List[SeedResult] = field(default_factory=list)

    def add(
        self,
        method: str,
        condition: str,
        seed: int,
        success: float,
        stage_success: Sequence[float] = (),
    ) -> None:
        self.rows.append(
            SeedResult(
                method,
                condition,
                int(seed),
                float(success),
                [float(v) for v in stage_success],
            )
        )

    def extend(self, other: "ResultTable") -> None:
        self.rows.extend(other.rows)

    def keys(self) -> List[Tuple[str, str]]:
        seen: Dict[Tuple[str, str], None] = {}
        for r in self.rows:
            seen.setdefault((r.method, r.condition), None)
        return list(seen)

    def raw(self, method: str, condition: str = "") -> Dict[int, float]:
        """Seed to success rate for one (method, condition)."""
        return {
            r.seed: r.success
            for r in self.rows
            if r.method == method and r.condition == condition
        }

    def summary(self) -> List[Summary]:
        out = []
        for method, condition in self.keys():
            group = [
                r
                for r in self.rows
                if r.method == method and r.condition == condition
            ]
            mean, std = mean_std([r.success for r in group])
            stages = [r.stage_success for r in group if r.stage_success]
            stage_mean = []
            if stages and all(len(s) == len(stages[0]) for s in stages):
                stage_mean = [
                    sum(col) / len(col) for col in zip(*stages)
                ]
            out.append(
                Summary(method, condition, len(group), mean, std, stage_mean)
            )
        return out

    def write(self, path: os.PathLike) -> None:
        """Writes raw rows to `path` and the summary next to it."""
        csvio.write_csv(path, RESULT_COLUMNS, (r.row() for r in self.rows))
        summary_path = os.fspath(path)
        if summary_path.endswith(".csv"):
            summary_path = summary_path[: -len(".csv")]
        csvio.write_csv(
            summary_path + "_summary.csv",
            SUMMARY_COLUMNS,
            (s.row() for s in self.summary()),
        )

    @classmethod
    def read(cls, path: os.PathLike) -> "ResultTable":
        """Reads a raw results CSV.

        Raises:
            InputError: if a required column is missing or a cell is bad.
        """
        table = cls()
        for row in csvio.read_csv(path):
            try:
                stages = row["stage_success"]
                table.add(
                    row["method"],
                    row["condition"],
                    int(row["seed"]),
                    float(row["success"]),
                    [float(v) for v in stages.split(";")] if stages else [],
                )
            except (KeyError, ValueError) as e:
                raise InputError(f"Bad results row in '{path}': {e}") from e
        return table


def compare(
    table_a: ResultTable,
    method_a: str,
    table_b: ResultTable,
    method_b: str,
    condition_a: str = "",
    condition_b: str = "",
) -> dict:
    """Paired comparison over the seeds both tables share.

    Returns the mean gap (a minus b) and a one-sided sign-test p-value for
    a > b.

    Raises:
        InputError: if the two methods share no seed.
    """
    a = table_a.raw(method_a, condition_a)
    b = table_b.raw(method_b, condition_b)
    seeds = sorted(set(a) & set(b))
    if not seeds:
        raise InputError(
            f"No common seeds between '{method_a}' and '{method_b}'."
        )
    xs = [a[s] for s in seeds]
    ys = [b[s] for s in seeds]
    test = sign_test(xs, ys)
    return {
        "a": method_a,
        "b": method_b,
        "seeds": seeds,
        "mean_a": sum(xs) / len(xs),
        "mean_b": sum(ys) / len(ys),
        "gap": (sum(xs) - sum(ys)) / len(seeds),
        "wins": test.wins,
        "losses": test.losses,
        "ties": test.ties,
        "p_value": test.p_value,
    }
