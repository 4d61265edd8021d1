"""Command-line front end: simulate, amplify, project, gen.

Exit codes: 0 success, 1 invalid configuration, 2 per-point failures
occurred (partial results are still written).
"""

from __future__ import annotations

import sys

import click
import numpy as np

from . import harness
from .aggregate import FrequencyEstimate, project_to_simplex


def _write(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _fail_invalid(message: str) -> None:
    click.echo(f"invalid config: {message}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Locally private sparse-vector aggregation experiments."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--master-seed", type=int, default=None, help="Mandatory; overrides the config file.")
@click.option("--n", default=None, help="Comma-separated user counts.")
@click.option("--d", default=None, help="Comma-separated dimensions.")
@click.option("--s", default=None, help="Comma-separated sparsities.")
@click.option("--epsilon", default=None, help="Comma-separated budgets.")
@click.option("--mechanism", default=None, help="Comma-separated mechanism names.")
@click.option("--repetitions", default=None)
@click.option("--metrics", default=None, help="Subset of tve,mae.")
@click.option("--target", default=None, type=click.Choice(harness.TARGETS))
@click.option("--projection", default=None, help="true or false.")
@click.option("--report", default=None, type=click.Choice(harness.REPORTS))
@click.option("--full-scale", "full_scale", is_flag=True, default=False,
              help="Fill unset grid fields with the full-scale defaults "
                   "(n=100000, d=512, s=4..32, the nine-point epsilon grid) "
                   "instead of the desk-scale ones.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv")
def simulate(config_path, master_seed, n, d, s, epsilon, mechanism, repetitions,
             metrics, target, projection, report, full_scale, out, fmt):
    """Run an experiment grid and emit one row per (point, metric)."""
    raw: dict[str, str] = {}
    try:
        if config_path is not None:
            with open(config_path) as fh:
                raw = harness.parse_config_text(fh.read())
        if full_scale:
            full = {
                "n": "100000", "d": "512", "s": "4, 8, 16, 32",
                "epsilon": "0.001, 0.01, 0.1, 0.2, 0.4, 0.8, 1.0, 1.5, 2.0",
            }
            for key, value in full.items():
                raw.setdefault(key, value)
        overrides = {
            "n": n, "d": d, "s": s, "epsilon": epsilon, "mechanism": mechanism,
            "repetitions": repetitions, "metrics": metrics, "target": target,
            "projection": projection, "report": report,
        }
        for key, value in overrides.items():
            if value is not None:
                raw[key] = str(value)
        if master_seed is not None:
            raw["master_seed"] = str(master_seed)
        config = harness.build_config(raw)
    except (ValueError, OSError) as exc:
        _fail_invalid(str(exc))
    rows, errors = harness.run_experiment(config)
    _write(harness.rows_to_csv(rows) if fmt == "csv" else harness.rows_to_jsonl(rows), out)
    for err in errors:
        click.echo(f"point failed: {err}", err=True)
    sys.exit(2 if errors else 0)


@main.command()
@click.option("--n", default="10000", help="Comma-separated batch sizes.")
@click.option("--s", default="4", help="Comma-separated sparsities.")
@click.option("--epsilon", default="0.5,1.0,2.0", help="Comma-separated local budgets.")
@click.option("--delta", type=float, default=1e-6)
@click.option("--bounds", default="collision,clone,efmrtt",
              help="Subset of collision,clone,efmrtt.")
@click.option("--t", "t_fixed", type=int, default=None,
              help="Fixed output size; default is the per-point optimum.")
@click.option("--tolerance", type=float, default=1e-4)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv")
def amplify(n, s, epsilon, delta, bounds, t_fixed, tolerance, out, fmt):
    """Amplified budgets eps_c and log2 amplification ratios."""
    try:
        n_list = [int(v) for v in n.split(",") if v.strip()]
        s_list = [int(v) for v in s.split(",") if v.strip()]
        eps_list = [float(v) for v in epsilon.split(",") if v.strip()]
        bound_list = [b.strip() for b in bounds.split(",") if b.strip()]
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0,1)")
        rows, errors = harness.run_amplification_sweep(
            n_list, s_list, eps_list, delta, bound_list, tolerance, t_fixed
        )
    except ValueError as exc:
        _fail_invalid(str(exc))
    _write(harness.rows_to_csv(rows) if fmt == "csv" else harness.rows_to_jsonl(rows), out)
    for err in errors:
        click.echo(f"point failed: {err}", err=True)
    sys.exit(2 if errors else 0)


@main.command()
@click.option("--s", type=int, required=True, help="Scale: estimates sum to s after projection.")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="CSV, one comma-separated estimate vector per line.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def project(s, in_path, out):
    """Project each line of a CSV of frequency estimates onto the simplex."""
    try:
        if s < 1:
            raise ValueError("s must be >= 1")
        lines = []
        with open(in_path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                values = np.array([float(v) for v in line.split(",")])
                est = FrequencyEstimate(values=values, n=1)
                projected = project_to_simplex(est, s).values
                lines.append(",".join(f"{v:.17g}" for v in projected))
    except ValueError as exc:
        _fail_invalid(str(exc))
    _write("\n".join(lines) + "\n", out)
    sys.exit(0)


@main.command()
@click.option("--n", type=int, required=True)
@click.option("--d", type=int, required=True)
@click.option("--s", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def gen(n, d, s, seed, out):
    """Dump a synthetic dataset, one user per line as signed dimensions."""
    try:
        rng = np.random.default_rng(seed)
        supports, signs = harness.gen_synthetic_arrays(n, d, s, rng)
    except ValueError as exc:
        _fail_invalid(str(exc))
    lines = []
    for i in range(n):
        lines.append(" ".join(f"{'+' if b > 0 else '-'}{j}" for j, b in zip(supports[i], signs[i])))
    _write("\n".join(lines) + "\n", out)
    sys.exit(0)


if __name__ == "__main__":
    main()
