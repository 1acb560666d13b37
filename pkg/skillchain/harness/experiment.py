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

"""Seeded multi-run experiments, ablations and report exports.

An experiment directory is keyed by the config hash:

    <root>/<hash[:12]>/
        config.json         the validated run config
        manifest.json       hash, package versions, per-run wall times
        RESUME              present while (method, seed) runs remain
        results.csv         raw per-seed success rates
        results_summary.csv mean and std over seeds
        <method>/seed_<s>/
            chain.ckpt      trained chain
            metrics/*.csv   per-update training statistics
            episodes.csv    evaluation episode reports
            result.json     marks the run complete

Rerunning a config skips runs that already have a `result.json`.
"""

import logging
import math
import platform
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from skillchain import csvio
from skillchain.chaining.baselines import run_method
from skillchain.chaining.state import ChainState
from skillchain.config import NoiseConfig, RunConfig, config_hash
from skillchain.envs.state import wrap_angle
from skillchain.envs.suites import make_suite
from skillchain.errors import CalibrationError, SkillchainError, UsageError
from skillchain.executor.runner import (
    evaluate_chain,
    stage_success_rates,
    write_episode_reports,
)
from skillchain.feasibility.model import TransitionModel
from skillchain.harness.checkpoint import load_chain, save_chain
from skillchain.harness.results import ResultTable
from skillchain.ppo.trainer import STATS_COLUMNS

logger = logging.getLogger(__name__)

RESUME_MARKER = "RESUME"
LANDSCAPE_COLUMNS = ("theta", "x", "y", "F", "c", "feasible")
SWEEP_COLUMNS = (
    "method",
    "seed",
    "budget",
    "success",
    "mean_switches",
    "max_switches",
    "restarts",
)
DEFAULT_WINDOWS = (0, 5, 10, 15)
DEFAULT_BUDGETS = (0, 1, 2, 3)

_VERSIONED = ("skillchain", "numpy", "scipy", "pydantic", "mcp")


def package_versions() -> Dict[str, str]:
    """Installed versions of the packages that shape results."""
    versions = {"python": platform.python_version()}
    for name in _VERSIONED:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


@dataclass
class ExperimentResult:
    directory: Path
    table: ResultTable
    manifest: dict = field(default_factory=dict)


def experiment_dir(config: RunConfig, root: Optional[Path] = None) -> Path:
    root = Path(root) if root is not None else config.output_root()
    return root / config_hash(config)[:12]


def run_dir(directory: Path, method: str, seed: int) -> Path:
    return directory / method / f"seed_{seed}"


def write_metrics(directory: Path, chain: ChainState) -> None:
    """One CSV per training phase and stage, named after its history key."""
    for key, rows in chain.history.items():
        name = key.replace("/", "_") + ".csv"
        csvio.write_csv(directory / "metrics" / name, STATS_COLUMNS, rows)


def _train_and_evaluate(
    config: RunConfig, directory: Path, method: str, seed: int, workers: int
) -> dict:
    out = run_dir(directory, method, seed)
    ckpt = out / "chain.ckpt"
    spec = config.effective_chain()
    started = time.perf_counter()
    chain = run_method(
        method,
        spec,
        seed,
        config.noise,
        workers,
        checkpoint=lambda state: save_chain(state, ckpt),
    )
    train_seconds = time.perf_counter() - started
    save_chain(chain, ckpt)
    write_metrics(out, chain)
    started = time.perf_counter()
    reports = evaluate_chain(
        chain,
        config.executor,
        config.eval_episodes,
        seed,
        config.noise,
        config.perturbation,
        workers,
    )
    eval_seconds = time.perf_counter() - started
    write_episode_reports(out / "episodes.csv", reports)
    result = {
        "method": method,
        "seed": seed,
        "success": float(np.mean([r.success for r in reports])),
        "stage_success": stage_success_rates(reports),
        "episodes": len(reports),
        "train_seconds": train_seconds,
        "eval_seconds": eval_seconds,
    }
    csvio.write_json(out / "result.json", result)
    return result


def run_experiment(
    config: RunConfig,
    root: Optional[Path] = None,
    condition: str = "",
) -> ExperimentResult:
    """Trains and evaluates every (method, seed) pair of `config`.

    Deterministic mode runs everything on one thread. Otherwise independent
    runs go to a thread pool of `config.workers` threads.

    Args:
        config: Validated run config.
        root: Output root; defaults to the config's, which the
          SKILLCHAIN_OUTPUT_ROOT environment variable overrides.
        condition: Label stored with every result row.

    Raises:
        SkillchainError: from the first failing run, after completed runs
          and the RESUME marker have been written. Other exceptions
          propagate unchanged once results.csv and manifest.json exist.
    """
    directory = experiment_dir(config, root)
    directory.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config)
    csvio.write_json(directory / "config.json", config.model_dump(mode="json"))
    pairs = [(m, s) for m in config.methods for s in config.seeds]
    results: Dict[Tuple[str, int], dict] = {}
    for method, seed in pairs:
        done = run_dir(directory, method, seed) / "result.json"
        if done.exists():
            logger.info("Skipping completed run %s/seed_%d.", method, seed)
            results[(method, seed)] = csvio.read_json(done)
    todo = [p for p in pairs if p not in results]
    marker = directory / RESUME_MARKER
    if todo:
        csvio.write_json(marker, {"remaining": [list(p) for p in todo]})

    failure: Optional[BaseException] = None
    lock = threading.Lock()
    parallel = (
        not config.deterministic and config.workers > 1 and len(todo) > 1
    )
    rollout_workers = 1 if config.deterministic or parallel else config.workers

    def one(pair: Tuple[str, int]) -> None:
        method, seed = pair
        logger.info("Run %s seed %d.", method, seed)
        result = _train_and_evaluate(
            config, directory, method, seed, rollout_workers
        )
        with lock:
            results[pair] = result
            remaining = [p for p in pairs if p not in results]
            if remaining:
                csvio.write_json(
                    marker, {"remaining": [list(p) for p in remaining]}
                )

    try:
        if parallel:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                for future in [pool.submit(one, p) for p in todo]:
                    future.result()
        else:
            for pair in todo:
                one(pair)
    except SkillchainError as e:
        logger.error("Experiment %s stopped: %s", digest[:12], e.message)
        failure = e
    except BaseException as e:
        logger.error("Experiment %s crashed: %r", digest[:12], e)
        failure = e
        raise
    finally:
        table, manifest = _write_outputs(
            directory, digest, pairs, results, condition, failure
        )
    if failure is not None:
        raise failure
    if marker.exists():
        marker.unlink()
    return ExperimentResult(directory, table, manifest)


def _write_outputs(
    directory: Path,
    digest: str,
    pairs: Sequence[Tuple[str, int]],
    results: Dict[Tuple[str, int], dict],
    condition: str,
    failure: Optional[BaseException],
) -> Tuple[ResultTable, dict]:
    """Writes results.csv and manifest.json for the runs that finished."""
    table = ResultTable()
    for method, seed in pairs:
        if (method, seed) in results:
            r = results[(method, seed)]
            table.add(method, condition, seed, r["success"], r["stage_success"])
    table.write(directory / "results.csv")
    manifest = {
        "config_hash": digest,
        "versions": package_versions(),
        "complete": failure is None,
        "runs": {
            f"{m}/{s}": {
                "train_seconds": results[(m, s)]["train_seconds"],
                "eval_seconds": results[(m, s)]["eval_seconds"],
            }
            for m, s in pairs
            if (m, s) in results
        },
    }
    if isinstance(failure, SkillchainError):
        manifest["error"] = failure.to_dict()
    elif failure is not None:
        manifest["error"] = {
            "error": type(failure).__name__,
            "message": str(failure),
            "details": None,
        }
    csvio.write_json(directory / "manifest.json", manifest)
    return table, manifest


def ablate_window(
    config: RunConfig,
    windows: Sequence[int] = DEFAULT_WINDOWS,
    root: Optional[Path] = None,
) -> ResultTable:
    """One full pipeline per window length; W=0 sees only the last state."""
    table = ResultTable()
    for w in windows:
        result = run_experiment(
            config.with_changes(window_length=w), root, condition=f"W={w}"
        )
        table.extend(result.table)
    return table


def sweep_switch_budget(
    config: RunConfig,
    budgets: Sequence[int] = DEFAULT_BUDGETS,
    root: Optional[Path] = None,
) -> ResultTable:
    """Evaluates trained chains under drops with several switch budgets.

    Chains are trained first if the experiment has not been run. Each
    budget is evaluated on the same episode seeds.
    """
    trained = run_experiment(config, root)
    directory = trained.directory
    perturbation = config.perturbation.model_copy(update={"enabled": True})
    table = ResultTable()
    rows = []
    for method in config.methods:
        for seed in config.seeds:
            out = run_dir(directory, method, seed)
            chain = load_chain(out / "chain.ckpt")
            for budget in budgets:
                executor = config.executor.model_copy(
                    update={"switch_budget": budget}
                )
                reports = evaluate_chain(
                    chain,
                    executor,
                    config.eval_episodes,
                    seed,
                    config.noise,
                    perturbation,
                    1 if config.deterministic else config.workers,
                )
                write_episode_reports(
                    out / f"episodes_budget_{budget}.csv", reports
                )
                success = float(np.mean([r.success for r in reports]))
                table.add(
                    method,
                    f"budget={budget}",
                    seed,
                    success,
                    stage_success_rates(reports),
                )
                switches = [r.switches for r in reports]
                rows.append(
                    {
                        "method": method,
                        "seed": seed,
                        "budget": budget,
                        "success": success,
                        "mean_switches": float(np.mean(switches)),
                        "max_switches": max(switches),
                        "restarts": sum(r.restarts for r in reports),
                    }
                )
    csvio.write_csv(directory / "sweep_budget.csv", SWEEP_COLUMNS, rows)
    table.write(directory / "sweep_budget_results.csv")
    return table


def landscape_rows(
    model: TransitionModel,
    suite_name: str,
    chain_spec,
    resolution: int = 21,
    angles: int = 8,
    extent: float = 0.2,
    seed: int = 0,
) -> List[dict]:
    """Scores a grid of object poses around the goal.

    The base state is the suite's naive start for the model's stage with
    zero velocities. For every (theta, x, y) the object is placed at the
    goal offset by (x, y) with angle theta; the hand keeps its pose relative
    to the object. Each window repeats the resulting observation.

    Raises:
        CalibrationError: if the model is not calibrated.
        UsageError: for a grid resolution or angle count below 1.
    """
    if model.threshold is None:
        raise CalibrationError(
            f"Stage {model.stage} feasibility model is not calibrated."
        )
    if resolution < 1 or angles < 1:
        raise UsageError("Landscape grids need at least one point per axis.")
    suite = make_suite(suite_name, chain_spec.stages)
    rng = np.random.default_rng(seed)
    base = suite.naive_sampler(model.stage, rng)
    if base.held:
        lift = chain_spec.stages[model.stage - 1].success.lift
        base = base.replace(hand_z=max(base.hand_z, lift))
    base = base.replace(stage=model.stage - 1)
    hx, hy = base.hand_x - base.obj_x, base.hand_y - base.obj_y
    thetas = np.linspace(-math.pi, math.pi, angles, endpoint=False)
    offsets = np.linspace(-extent, extent, resolution)
    quiet = NoiseConfig()
    poses, windows = [], []
    for theta in thetas:
        turn = wrap_angle(float(theta) - base.obj_angle)
        cos, sin = math.cos(turn), math.sin(turn)
        for x in offsets:
            for y in offsets:
                ox, oy = base.goal_x + float(x), base.goal_y + float(y)
                state = base.replace(
                    obj_x=ox,
                    obj_y=oy,
                    obj_angle=float(theta),
                    hand_x=ox + cos * hx - sin * hy,
                    hand_y=oy + sin * hx + cos * hy,
                    hand_angle=wrap_angle(base.hand_angle + turn),
                    grasp_hand_angle=wrap_angle(base.grasp_hand_angle + turn),
                )
                obs = suite.observe(state, quiet, rng)
                poses.append((float(theta), float(x), float(y)))
                windows.append(np.repeat(obs[None], model.window_length, 0))
    values = np.atleast_1d(
        np.asarray(model.predict(np.stack(windows)), dtype=np.float64)
    )
    if values.size == 1 and len(poses) > 1:
        values = np.full(len(poses), float(values[0]))
    rows = []
    for (theta, x, y), f in zip(poses, values):
        c = float(f) / model.threshold
        rows.append(
            {
                "theta": theta,
                "x": x,
                "y": y,
                "F": float(f),
                "c": c,
                "feasible": c > 1.0,
            }
        )
    return rows


def export_feasibility_landscape(
    chain: ChainState,
    path: Path,
    stage: Optional[int] = None,
    resolution: int = 21,
    angles: int = 8,
    extent: float = 0.2,
    seed: int = 0,
) -> int:
    """Writes the landscape of one stage's feasibility model to CSV.

    `stage` defaults to the last stage, whose model scores the hand-over
    from its predecessor. Returns the number of rows written.

    Raises:
        UsageError: if the chain has no model for `stage`.
        CalibrationError: if that model is not calibrated.
    """
    stage = chain.num_stages - 1 if stage is None else stage
    if not 0 < stage < len(chain.models) or chain.models[stage] is None:
        raise UsageError(
            f"The chain has no feasibility model for stage {stage}."
        )
    rows = landscape_rows(
        chain.models[stage],
        chain.spec.suite,
        chain.spec,
        resolution,
        angles,
        extent,
        seed,
    )
    count = csvio.write_csv(path, LANDSCAPE_COLUMNS, rows)
    feasible = sum(r["feasible"] for r in rows)
    logger.info(
        "Wrote %d landscape rows (%d feasible) to %s", count, feasible, path
    )
    return count
