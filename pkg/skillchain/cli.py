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


"""Command-line interface.

Every verb prints a JSON object on success. Failures print the error's
JSON payload to stderr and exit with 2 for configuration errors and 1 for
everything else.
"""

import functools
import json
import os
from pathlib import Path
from typing import Any, Callable, List, Optional

import typer
from mcp.server.fastmcp.utilities.logging import configure_logging

from skillchain import csvio
from skillchain.config import (
    LOG_LEVEL_ENV,
    ExecConfig,
    PerturbationConfig,
    RunConfig,
    config_schema,
    load_run_config,
    smoke_config,
)
from skillchain.errors import CalibrationError, ConfigError, SkillchainError
from skillchain.executor.runner import evaluate_chain, write_episode_reports
from skillchain.harness import experiment
from skillchain.harness.checkpoint import load_chain
from skillchain.harness.results import ResultTable, compare as compare_tables
from skillchain.tools.utils import summarize_reports

app = typer.Typer(
    name="skillchain",
    help="Train, evaluate and analyze skill chains.",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOpt = typer.Option(None, "--config", help="JSON run config.")
SeedOpt = typer.Option(None, "--seed", help="Run a single seed.")
OutOpt = typer.Option(None, "--out", help="Output root directory.")
DeterministicOpt = typer.Option(
    None,
    "--deterministic/--fast",
    help="Single-threaded reproducible runs, or parallel workers.",
)


def _emit(payload: Any) -> None:
    typer.echo(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _guarded(fn: Callable) -> Callable:
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SkillchainError as e:
            typer.echo(json.dumps(e.to_dict(), default=str), err=True)
            raise typer.Exit(2 if isinstance(e, ConfigError) else 1)

    return wrapper


def _run_config(
    config: Optional[Path],
    seed: Optional[int],
    deterministic: Optional[bool],
) -> RunConfig:
    run_config = load_run_config(config) if config else RunConfig()
    changes = {}
    if seed is not None:
        changes["seeds"] = [seed]
    if deterministic is not None:
        changes["deterministic"] = deterministic
    return run_config.with_changes(**changes) if changes else run_config


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"Expected comma-separated integers: {text}") from e


@app.callback()
def _setup() -> None:
    configure_logging(os.getenv(LOG_LEVEL_ENV, "INFO").upper())


@app.command()
@_guarded
def train(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    out: Optional[Path] = OutOpt,
    deterministic: Optional[bool] = DeterministicOpt,
) -> None:
    """Trains and evaluates every method and seed of a config."""
    result = experiment.run_experiment(
        _run_config(config, seed, deterministic), out
    )
    _emit(
        {
            "directory": result.directory,
            "results": [s.row() for s in result.table.summary()],
        }
    )


@app.command(name="eval")
@_guarded
def evaluate(
    checkpoint: Path = typer.Option(..., help="Trained chain.ckpt file."),
    episodes: int = typer.Option(200, help="Evaluation episodes."),
    budget: int = typer.Option(3, help="Switch budget per episode."),
    perturb: bool = typer.Option(False, help="Drop the held object."),
    auto_approach: bool = typer.Option(False, help="Approach macro."),
    seed: int = typer.Option(0, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", help="Episodes CSV."),
) -> None:
    """Evaluates a trained chain with feasibility-based switching."""
    chain = load_chain(checkpoint)
    reports = evaluate_chain(
        chain,
        ExecConfig(switch_budget=budget, auto_approach=auto_approach),
        episodes,
        seed,
        perturbation=PerturbationConfig(enabled=perturb),
    )
    if out is not None:
        write_episode_reports(out, reports)
    _emit(summarize_reports(reports))


@app.command(name="ablate-window")
@_guarded
def ablate_window(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    out: Optional[Path] = OutOpt,
    deterministic: Optional[bool] = DeterministicOpt,
    windows: str = typer.Option("0,5,10,15", help="Window lengths."),
) -> None:
    """Runs the full pipeline once per feasibility window length."""
    run_config = _run_config(config, seed, deterministic)
    table = experiment.ablate_window(run_config, _ints(windows), out)
    root = Path(out) if out else run_config.output_root()
    table.write(root / "ablate_window.csv")
    _emit([s.row() for s in table.summary()])


@app.command(name="sweep-budget")
@_guarded
def sweep_budget(
    config: Optional[Path] = ConfigOpt,
    seed: Optional[int] = SeedOpt,
    out: Optional[Path] = OutOpt,
    deterministic: Optional[bool] = DeterministicOpt,
    budgets: str = typer.Option("0,1,2,3", help="Switch budgets."),
) -> None:
    """Evaluates trained chains under drops for several switch budgets."""
    table = experiment.sweep_switch_budget(
        _run_config(config, seed, deterministic), _ints(budgets), out
    )
    _emit([s.row() for s in table.summary()])


@app.command()
@_guarded
def landscape(
    checkpoint: Path = typer.Option(..., help="Trained chain.ckpt file."),
    out: Path = typer.Option(..., "--out", help="Landscape CSV."),
    stage: Optional[int] = typer.Option(None, help="Scored stage."),
    resolution: int = typer.Option(21, help="Grid points per axis."),
    angles: int = typer.Option(8, help="Object angles."),
    extent: float = typer.Option(0.2, help="Grid half-width (m)."),
    seed: int = typer.Option(0, "--seed"),
) -> None:
    """Exports feasibility scores over a grid of object poses."""
    rows = experiment.export_feasibility_landscape(
        load_chain(checkpoint), out, stage, resolution, angles, extent, seed
    )
    _emit({"output": out, "rows": rows})


@app.command()
@_guarded
def smoke(
    out: Optional[Path] = OutOpt,
    seed: int = typer.Option(0, "--seed"),
) -> None:
    """Tiny two-stage run of the whole pipeline."""
    run_config = smoke_config().with_changes(seeds=[seed])
    result = experiment.run_experiment(run_config, out)
    ckpt = experiment.run_dir(result.directory, "ours", seed) / "chain.ckpt"
    payload = {
        "directory": result.directory,
        "results": [s.row() for s in result.table.summary()],
    }
    try:
        payload["landscape_rows"] = experiment.export_feasibility_landscape(
            load_chain(ckpt),
            result.directory / "landscape.csv",
            resolution=5,
            angles=4,
        )
    except CalibrationError as e:
        payload["landscape_skipped"] = e.message
    _emit(payload)


@app.command()
@_guarded
def schema(
    out: Optional[Path] = typer.Option(None, "--out", help="Schema file."),
) -> None:
    """Prints the run config JSON schema."""
    if out is not None:
        csvio.write_json(out, config_schema())
        _emit({"output": out})
        return
    _emit(config_schema())


@app.command()
@_guarded
def compare(
    a: Path = typer.Option(..., help="First results CSV."),
    method_a: str = typer.Option("ours", help="Method in the first table."),
    b: Path = typer.Option(..., help="Second results CSV."),
    method_b: str = typer.Option(..., help="Method in the second table."),
    condition_a: str = typer.Option("", help="Condition in the first."),
    condition_b: str = typer.Option("", help="Condition in the second."),
) -> None:
    """Paired per-seed comparison with a one-sided sign test."""
    _emit(
        compare_tables(
            ResultTable.read(a),
            method_a,
            ResultTable.read(b),
            method_b,
            condition_a,
            condition_b,
        )
    )


def main() -> None:
    app()


if __name__ == "__main__":
    main()
