#!/usr/bin/env python3
"""
Command line entry point of the multi-agent navigation simulator.

    python -m src.main run scenarios/corpus/head_on_open.yaml --out runs/head_on
    python -m src.main validate scenarios/corpus/warehouse_env1.yaml
    python -m src.main render runs/head_on/trajectory.csv scenarios/corpus/head_on_open.yaml --out head_on.svg
    python -m src.main gen-primitives --headings 16

Exit status: 0 when every agent reached its goal, 1 when an episode ended
with collisions or deadlocks, 2 on input errors.
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
import pandas as pd
from dotenv import load_dotenv
from tqdm import tqdm

from database.connection import close_redis_client
from database.reservation_store import create_reservation_store
from monitoring.alert_system import AlertSystem, jsonl_file_handler, logging_handler
from monitoring.config import get_runtime_config, update_config_from_env
from planning.errors import NavigationError
from planning.primitives import build_primitives, format_primitives
from scenarios.generator import WAREHOUSE_VARIANTS, generate as generate_layout
from scenarios.loader import load_scenario, save_scenario, scenario_problems
from scenarios.model import MODES
from scenarios.svg_render import render_scenario
from scenarios.trajectory_log import read_trajectory_csv
from simulation.orchestrator import run_episode

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_ANOMALIES = 1
EXIT_INPUT_ERROR = 2

INPUT_ERRORS = (NavigationError, OSError, ValueError)


def _fail(ctx: click.Context, error: Exception) -> None:
    logger.error(f"{type(error).__name__}: {error}")
    click.echo(f"error: {error}", err=True)
    ctx.exit(EXIT_INPUT_ERROR)


@click.group()
@click.option("--log-level", default=None, help="Logging level (defaults to NAV_LOG_LEVEL or INFO)")
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str]):
    """Decentralized multi-agent navigation simulator."""
    load_dotenv()
    try:
        update_config_from_env()
    except ValueError as e:
        click.echo(f"error: {e}", err=True)
        ctx.exit(EXIT_INPUT_ERROR)
    config = get_runtime_config()
    logging.basicConfig(level=(log_level or config.log_level).upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@cli.command()
@click.argument("scenario_file", type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (defaults to NAV_OUTPUT_DIR/<scenario name>)")
@click.option("--seed", type=int, default=None, help="Override the scenario seed")
@click.option("--mode", type=click.Choice(sorted(MODES)), default=None, help="Override the scenario mode flags")
@click.option("--render/--no-render", default=False, help="Also write episode.svg")
@click.pass_context
def run(ctx: click.Context, scenario_file: str, out_dir: Optional[str], seed: Optional[int],
        mode: Optional[str], render: bool):
    """Run one episode and write trajectory.csv, metrics.json, reservations.csv and the alert history."""
    config = get_runtime_config()
    try:
        scenario = load_scenario(scenario_file)
        out = Path(out_dir) if out_dir else Path(config.output_dir) / scenario.name
        alerts = AlertSystem()
        alerts.add_notification_handler(logging_handler)
        alerts.add_notification_handler(jsonl_file_handler(str(out / "alerts.jsonl")))
        store = create_reservation_store(config.reservation_backend, config.episode_namespace)
        result = run_episode(scenario, mode=mode, seed=seed, store=store, alert_system=alerts)
        result.write(out)
        alerts.save_alert_history(str(out / "alert_history.json"))
        if render:
            render_scenario(scenario, result.trajectory, out / "episode.svg")
    except INPUT_ERRORS as e:
        _fail(ctx, e)
        return
    finally:
        close_redis_client()

    metrics = result.metrics
    click.echo(f"{scenario.name} [{result.mode}] SR={metrics.success_rate:.3f} "
               f"reached={metrics.reached} collided={metrics.collided} deadlocked={metrics.deadlocked} "
               f"steps={metrics.steps} critical_alerts={len(alerts.get_alerts('CRITICAL'))}")
    ctx.exit(EXIT_ANOMALIES if metrics.anomalies else EXIT_SUCCESS)


@cli.command()
@click.argument("scenario_file", type=click.Path(dir_okay=False))
@click.pass_context
def validate(ctx: click.Context, scenario_file: str):
    """Check a scenario file and report every violated invariant."""
    try:
        scenario = load_scenario(scenario_file)
    except INPUT_ERRORS as e:
        _fail(ctx, e)
        return
    click.echo(f"{scenario_file}: ok ({len(scenario.agents)} agents, {len(scenario.corridors)} corridors)")


@cli.command()
@click.argument("trajectory_file", type=click.Path(dir_okay=False))
@click.argument("scenario_file", type=click.Path(dir_okay=False))
@click.option("--out", "out_file", type=click.Path(dir_okay=False), required=True, help="SVG file to write")
@click.option("--cells-at", type=int, default=None, help="Draw the buffered Voronoi cells at this step")
@click.pass_context
def render(ctx: click.Context, trajectory_file: str, scenario_file: str, out_file: str, cells_at: Optional[int]):
    """Render a recorded trajectory over its scenario map."""
    try:
        scenario = load_scenario(scenario_file)
        trajectory = read_trajectory_csv(trajectory_file)
        render_scenario(scenario, trajectory, out_file, cells_at)
    except INPUT_ERRORS as e:
        _fail(ctx, e)
        return
    click.echo(f"wrote {out_file}")


@cli.command("gen-primitives")
@click.option("--headings", type=click.Choice(["8", "16"]), default="8", help="Number of lattice headings")
@click.option("--turn-radius", type=float, default=1.0, help="Minimum turning radius in meters")
@click.option("--resolution", type=float, default=1.0, help="Cell size in meters")
@click.option("--out", "out_file", type=click.Path(dir_okay=False), default=None,
              help="File to write (standard output when omitted)")
@click.pass_context
def gen_primitives(ctx: click.Context, headings: str, turn_radius: float, resolution: float,
                   out_file: Optional[str]):
    """Print the motion primitive set in its text format."""
    try:
        text = format_primitives(build_primitives(int(headings), turn_radius, resolution))
        if out_file:
            Path(out_file).write_text(text, encoding="utf-8")
    except INPUT_ERRORS as e:
        _fail(ctx, e)
        return
    if not out_file:
        click.echo(text, nl=False)


@cli.command()
@click.argument("kind", type=click.Choice(sorted(WAREHOUSE_VARIANTS) + ["open", "random"]))
@click.option("--agents", "agent_count", type=int, default=10, show_default=True)
@click.option("--spacing", type=int, default=4, show_default=True, help="Cells between warehouse agents")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", nargs=2, type=int, default=(20, 20), show_default=True, help="Width and height in cells")
@click.option("--out", "out_file", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def generate(ctx: click.Context, kind: str, agent_count: int, spacing: int, seed: int, size, out_file: str):
    """Write a generated scenario file."""
    try:
        scenario = generate_layout(kind, agent_count, spacing, seed, size)
        problems = scenario_problems(scenario)
        if problems:
            raise ValueError(f"generated layout is invalid: {'; '.join(problems)}")
        save_scenario(scenario, out_file)
    except INPUT_ERRORS as e:
        _fail(ctx, e)
        return
    click.echo(f"wrote {out_file} ({len(scenario.agents)} agents)")


def _parse_counts(text: str) -> List[int]:
    return [int(token) for token in text.split(",") if token.strip()]


@cli.command()
@click.option("--variants", default="env1,env2", show_default=True)
@click.option("--agents", "agent_counts", default="10,20", show_default=True, help="Comma separated agent counts")
@click.option("--spacings", default="4,2", show_default=True, help="Comma separated agent spacings")
@click.option("--modes", default="full,baseline", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_file", type=click.Path(dir_okay=False), required=True, help="CSV table to write")
@click.pass_context
def bench(ctx: click.Context, variants: str, agent_counts: str, spacings: str, modes: str, seed: int,
          out_file: str):
    """Sweep warehouse layouts over agent counts, spacings and modes into one table."""
    try:
        counts = _parse_counts(agent_counts)
        gaps = _parse_counts(spacings)
        variant_names = [v.strip() for v in variants.split(",") if v.strip()]
        mode_names = [m.strip() for m in modes.split(",") if m.strip()]
        unknown = [m for m in mode_names if m not in MODES]
        if unknown:
            raise ValueError(f"unknown modes: {', '.join(unknown)}")
    except ValueError as e:
        _fail(ctx, e)
        return

    runs = [(v, n, s, m) for v in variant_names for n in counts for s in gaps for m in mode_names]
    rows = []
    for variant, count, spacing, mode in tqdm(runs, desc="bench", unit="episode"):
        try:
            scenario = generate_layout(variant, count, spacing, seed)
            result = run_episode(scenario, mode=mode)
        except INPUT_ERRORS as e:
            logger.warning(f"Skipping {variant} n={count} spacing={spacing} {mode}: {e}")
            continue
        m = result.metrics
        rows.append({"variant": variant, "agents": count, "spacing": spacing, "mode": mode,
                     "collided": m.collided, "deadlocked": m.deadlocked, "success_rate": m.success_rate,
                     "avg_path_length": m.avg_path_length, "shortest_path_avg": m.shortest_path_avg,
                     "steps": m.steps})

    table = pd.DataFrame(rows, columns=["variant", "agents", "spacing", "mode", "collided", "deadlocked",
                                        "success_rate", "avg_path_length", "shortest_path_avg", "steps"])
    Path(out_file).parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_file, index=False, float_format="%.6f")
    click.echo(table.to_string(index=False))
    if table.empty:
        ctx.exit(EXIT_INPUT_ERROR)
    ctx.exit(EXIT_ANOMALIES if (table["success_rate"] < 1.0).any() else EXIT_SUCCESS)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        code = cli.main(args=argv, prog_name="navsim", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_INPUT_ERROR
    return code if isinstance(code, int) else EXIT_SUCCESS


if __name__ == "__main__":
    sys.exit(main())
