"""Command-line interface.

Exit codes: 0 on success, 2 for configuration problems, 3 when a run
ends on a terminal physics condition (trajectory crossing, stiffness,
degenerate stencil, box exit).
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import ConfigError, list_presets, parse_config, parse_config_text, preset_text
from .records import TrajectoryRecord
from .runner import PairingError, compare_trajectories, emit_plot_data, run_experiment

EXIT_CONFIG = 2
EXIT_PHYSICS = 3


@click.group()
def main() -> None:
    """Grid-free Bohmian trajectory simulator with a wavepacket cross-check."""


@main.command()
@click.argument("config", type=str)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Output directory (default: ./runs/<name>).",
)
@click.option(
    "--override",
    "overrides",
    multiple=True,
    metavar="SECTION.KEY=VALUE",
    help="Override a config value; repeatable.",
)
@click.option("--no-figures", is_flag=True, help="Skip figure rendering.")
def run(config: str, out: Path | None, overrides, no_figures: bool) -> None:
    """Run the experiment described by CONFIG.

    CONFIG is a path to an INI file or the name of a bundled preset
    (see ``qtraj presets``).
    """
    try:
        if Path(config).exists():
            cfg = parse_config(config, overrides)
        else:
            cfg = parse_config_text(
                preset_text(config), overrides, source=f"preset:{config}"
            )
        if out is None:
            out = Path("runs") / cfg.name
        result = run_experiment(cfg, out, figures=not no_figures)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(f"{cfg.name}: {result.termination} (t = {result.manifest.get('t_final', 0)})")
    for name in result.files:
        click.echo(f"  {result.out_dir / name}")
    if result.status != "success":
        sys.exit(EXIT_PHYSICS)


@main.command()
@click.argument("record_a", type=click.Path(exists=True, path_type=Path))
@click.argument("record_b", type=click.Path(exists=True, path_type=Path))
@click.option(
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=Path("comparison.dat"),
    show_default=True,
    help="Comparison table destination.",
)
@click.option(
    "--window",
    nargs=2,
    type=float,
    default=None,
    help="Restrict the comparison to a time window.",
)
def compare(record_a: Path, record_b: Path, out: Path, window) -> None:
    """Compare two trajectory records pairwise.

    Arguments may be record files or run directories containing
    ``record.dat``.
    """

    def load(path: Path) -> TrajectoryRecord:
        if path.is_dir():
            path = path / "record.dat"
        return TrajectoryRecord.load(path)

    try:
        report = compare_trajectories(load(record_a), load(record_b), window=window)
    except (PairingError, ValueError) as exc:
        click.echo(f"comparison error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    emit_plot_data("comparison", out, report=report)
    worst = int(report.max_dev.argmax()) + report.index_base
    click.echo(
        f"window [{report.window[0]:g}, {report.window[1]:g}], "
        f"max deviation {report.max_dev.max():.6g} (element {worst})"
    )
    click.echo(str(out))


@main.command()
def presets() -> None:
    """List bundled experiment presets."""
    for name in list_presets():
        click.echo(name)


if __name__ == "__main__":
    main()
