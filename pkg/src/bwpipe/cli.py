"""Command-line entry points.

Exit codes: 0 success, 2 configuration validation failure, 3 stage
failure.  Heavy modules load inside commands so ``--threads`` can cap
BLAS pools before numpy initializes.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .config import ConfigError, StageError


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


def _load_config(config_path: str):
    from .config import PipelineConfig

    return PipelineConfig.from_file(config_path)


def _run_single_stage(config_path: str, stage: str, threads: int | None) -> None:
    _apply_threads(threads)
    try:
        cfg = _load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    from .pipeline import run_stage

    try:
        run_stage(cfg, stage)
    except StageError as exc:
        click.echo(f"stage error: {exc}", err=True)
        sys.exit(3)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"stage error [{stage}]: {type(exc).__name__}: {exc}", err=True)
        sys.exit(3)
    click.echo(f"{stage}: ok -> {cfg.output_dir / stage}")


@click.group()
def main() -> None:
    """Birth-weight regression pipeline."""


@main.command("init-config")
@click.option("--out", "out_path", default="bwpipe-config.json", show_default=True)
def init_config(out_path: str) -> None:
    """Write the default pipeline configuration."""
    from .config import DEFAULT_CONFIG

    Path(out_path).write_text(json.dumps(DEFAULT_CONFIG, indent=2, sort_keys=True), encoding="utf-8")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def validate(config_path: str) -> None:
    """Validate a configuration without running anything."""
    try:
        cfg = _load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"ok: config hash {cfg.config_hash()}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--threads", type=int, default=None, help="Cap worker/BLAS threads.")
def run(config_path: str, threads: int | None) -> None:
    """Run the full pipeline: filter, profile, impute, select, train,
    explain, report."""
    _apply_threads(threads)
    try:
        cfg = _load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    from .pipeline import run_pipeline

    try:
        out = run_pipeline(cfg)
    except StageError as exc:
        click.echo(f"stage error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"pipeline complete -> {out}")


def _stage_command(stage: str, help_text: str):
    @main.command(stage, help=help_text)
    @click.option("--config", "config_path", required=True, type=click.Path(exists=True))
    @click.option("--threads", type=int, default=None, help="Cap worker/BLAS threads.")
    def _cmd(config_path: str, threads: int | None) -> None:
        _run_single_stage(config_path, stage, threads)

    return _cmd


_stage_command("synth", "Generate the synthetic cohort named by the config preset.")
_stage_command("filter", "Apply the staged column filter plan to the input table.")
_stage_command("profile", "Profile the filtered table: stats, normality, weight classes.")
_stage_command("impute", "Fill missing cells: KNN for discrete, chained equations for continuous.")
_stage_command("select", "Score features with the configured methods and build the consensus set.")
_stage_command("train", "Split rows and fit the configured models on the training partition.")
_stage_command("explain", "Attribution matrices, importance rankings, and partial dependence.")
_stage_command("report", "Held-out metrics, residual diagnostics, and the comparison table.")


if __name__ == "__main__":
    main()
