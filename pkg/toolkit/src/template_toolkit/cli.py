"""Command-line entry points for the template toolkit."""

from __future__ import annotations

import sys

import click

from .bench import PD_FORMULA, bench_report
from .otsu import make_otsu_template


@click.group()
@click.version_option()
def main() -> None:
    """Template generation and benchmarking for the agcr codec."""


@main.command("make-template")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_path", type=click.Path(dir_okay=False, writable=True))
@click.option("--levels", type=click.IntRange(1, 255), default=2, show_default=True,
              help="Number of intensity classes in the mask.")
def make_template_cmd(input_path: str, output_path: str, levels: int) -> None:
    """Threshold INPUT_PATH into a label mask at OUTPUT_PATH."""
    try:
        make_otsu_template(input_path, levels, output_path)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {output_path} ({levels} levels)")


@main.command("bench")
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--codec", "codecs", multiple=True, default=("agcr", "bz2", "lzma"),
              show_default=True, help="Methods to benchmark (repeatable).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
              show_default=True, help="Directory for the CSV and plots.")
@click.option("--repeatable", is_flag=True,
              help="Zero the wall-clock column for byte-identical reruns.")
@click.option("--no-plots", is_flag=True, help="Skip figure generation.")
def bench_cmd(corpus_dir: str, codecs: tuple[str, ...], out_dir: str,
              repeatable: bool, no_plots: bool) -> None:
    """Benchmark every raster in CORPUS_DIR and write a report."""
    try:
        csv_path = bench_report(
            corpus_dir, codecs, out_dir, repeatable=repeatable, plots=not no_plots
        )
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {csv_path}")
    click.echo(PD_FORMULA)


if __name__ == "__main__":
    main()
