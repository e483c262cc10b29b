"""Command-line entry points: run, oracle, sweep.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 I/O error. `AFDPS_SEED` in the environment overrides the config's
master seed. Output files are only overwritten with --force.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import datetime
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .dynamics import run_sampler
from .errors import ConfigError, DegeneracyError, NumericalDivergenceError
from .metrics import evaluate_run, posterior_grid_table
from .oracle import exact_posterior_gmm, grid_density
from .rng import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_SWEEP_PARAMS = {
    "N": ("dynamics.n_particles", int),
    "eps": ("score.error_eps", float),
    "eta": ("dynamics.eta", float),
    "K": ("schedule.num_steps", int),
}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def trace_csv_rows(trace, dim: int):
    header = (
        ["step", "sigma", "ess"]
        + [f"mean_{d}" for d in range(dim)]
        + [f"var_{d}" for d in range(dim)]
        + ["resampled", "max_abs_I"]
    )
    rows = [
        [row.step, row.sigma, row.ess, *row.mean, *row.var, row.resampled, row.max_abs_I]
        for row in trace
    ]
    return header, rows


def particles_csv_rows(ensemble):
    header = (
        ["id"]
        + [f"x_{d}" for d in range(ensemble.dim)]
        + ["log_weight", "norm_weight"]
    )
    norm = ensemble.normalized_weights()
    rows = [
        [j, *ensemble.positions[j], ensemble.log_weights[j], norm[j]]
        for j in range(ensemble.n_particles)
    ]
    return header, rows


def build_metadata(config: RunConfig, runtime_seconds: float | None) -> dict:
    return {
        "artifact_version": __version__,
        "wall_clock_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "runtime_seconds": runtime_seconds,
        "config": config.raw,
        "provenance": {
            "defaulted_fields": sorted(config.defaulted_fields),
            "stage1_method": config.stage1.method,
            "resample_threshold": config.raw["dynamics"]["resample"]["threshold"],
            "estimator": config.dynamics.estimator,
        },
    }


def _apply_seed_env(config: RunConfig) -> RunConfig:
    env = os.environ.get("AFDPS_SEED")
    if env is None:
        return config
    try:
        seed = int(env)
    except ValueError as exc:
        raise ConfigError(f"AFDPS_SEED must be an integer, got {env!r}") from exc
    raw = copy.deepcopy(config.raw)
    raw["master_seed"] = seed
    return RunConfig.from_dict(raw)


def _prepare_out_dir(out: str, filenames: list[str], force: bool) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not force:
        existing = [f for f in filenames if (out_dir / f).exists()]
        if existing:
            raise FileExistsError(
                f"refusing to overwrite {existing} in {out_dir}; pass --force"
            )
    return out_dir


def cmd_run(config_path: str, out: str, force: bool = False) -> int:
    config = _apply_seed_env(load_config(config_path))
    out_dir = _prepare_out_dir(
        out, ["metadata.json", "trace.csv", "particles.csv", "metrics.json"], force
    )
    t0 = time.perf_counter()
    try:
        result = run_sampler(config)
    except NumericalDivergenceError as err:
        if err.partial_trace:
            header, rows = trace_csv_rows(err.partial_trace, config.prior.dim)
            write_csv(out_dir / "trace.csv", header, rows)
        write_json(
            out_dir / "error.json",
            {
                "error": "numerical-divergence",
                "step_index": err.step_index,
                "particle_ids": err.particle_ids,
                "what": err.what,
            },
        )
        raise
    runtime = time.perf_counter() - t0
    report = evaluate_run(result, config, runtime_seconds=runtime)

    write_json(out_dir / "metadata.json", build_metadata(config, runtime))
    header, rows = trace_csv_rows(result.trace, result.final.dim)
    write_csv(out_dir / "trace.csv", header, rows)
    header, rows = particles_csv_rows(result.final)
    write_csv(out_dir / "particles.csv", header, rows)
    payload = report.to_dict()
    payload["estimate"] = result.estimate.tolist()
    write_json(out_dir / "metrics.json", payload)
    return EXIT_OK


def cmd_oracle(config_path: str, sigma: float, out: str, force: bool = False) -> int:
    config = _apply_seed_env(load_config(config_path))
    if sigma < 0:
        raise ConfigError(f"--sigma must be non-negative, got {sigma}")
    out_dir = _prepare_out_dir(out, ["density.csv", "posterior_gmm.json"], force)

    from .likelihood import LinearGaussianLikelihood

    wrote = []
    posterior = None
    if isinstance(config.likelihood, LinearGaussianLikelihood):
        posterior = exact_posterior_gmm(config.prior, config.likelihood, sigma)
        write_json(
            out_dir / "posterior_gmm.json",
            {
                "sigma": sigma,
                "weights": posterior.weights.tolist(),
                "means": posterior.means.tolist(),
                "covariances": posterior.covariances.tolist(),
            },
        )
        wrote.append("posterior_gmm.json")
    if config.metrics.grid is not None:
        grid = config.metrics.grid
        if posterior is not None:
            table = grid_density(posterior.log_density, grid)
        else:
            noised = config.prior.noised(sigma)
            table = grid_density(
                lambda x: noised.log_density(x) - config.likelihood.mu(x), grid
            )
        header = [f"center_{d}" for d in range(grid.dim)] + ["probability"]
        rows = [
            [*grid.centers[i], table.probs[i]] for i in range(grid.centers.shape[0])
        ]
        write_csv(out_dir / "density.csv", header, rows)
        wrote.append("density.csv")
    if not wrote:
        raise ConfigError(
            "oracle: nothing to compute; need a linear-gaussian likelihood "
            "(for posterior_gmm.json) or a metrics.grid (for density.csv)"
        )
    return EXIT_OK


def _sweep_entry(raw_config: dict, param: str, value, repeat: int) -> dict:
    """One sweep run; top-level so process pools can pickle it."""
    dotted, cast = _SWEEP_PARAMS[param]
    raw = copy.deepcopy(raw_config)
    node = raw
    *parents, leaf = dotted.split(".")
    for p in parents:
        node = node[p]
    node[leaf] = cast(value)
    base_seed = raw["master_seed"]
    value_tag = int(float(value) * 10**6)
    raw["master_seed"] = derive_seed(base_seed, "sweep", param, value_tag, repeat)
    config = RunConfig.from_dict(raw)
    t0 = time.perf_counter()
    result = run_sampler(config)
    runtime = time.perf_counter() - t0
    report = evaluate_run(result, config, runtime_seconds=runtime)
    return {
        "param": param,
        "value": value,
        "repeat": repeat,
        "tv": report.final_tv,
        "w_dist": report.w_dist,
        "ess_min": report.ess_min,
        "runtime_s": runtime,
    }


def cmd_sweep(
    config_path: str,
    param: str,
    values: list,
    repeats: int,
    out: str,
    jobs: int | None = None,
    force: bool = False,
) -> int:
    config = _apply_seed_env(load_config(config_path))
    if param not in _SWEEP_PARAMS:
        raise ConfigError(
            f"--param must be one of {sorted(_SWEEP_PARAMS)}, got {param!r}"
        )
    if not values:
        raise ConfigError("--values must be a non-empty list")
    if repeats < 1:
        raise ConfigError(f"--repeats must be >= 1, got {repeats}")
    out_dir = _prepare_out_dir(out, ["sweep.csv"], force)

    tasks = [(value, repeat) for value in values for repeat in range(repeats)]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_sweep_entry, config.raw, param, value, repeat)
                for value, repeat in tasks
            ]
            rows = [f.result() for f in futures]
    else:
        rows = [_sweep_entry(config.raw, param, value, repeat) for value, repeat in tasks]

    header = ["param", "value", "repeat", "tv", "w_dist", "ess_min", "runtime_s"]
    csv_rows = []
    for row in rows:
        csv_rows.append(
            [
                row["param"],
                row["value"],
                row["repeat"],
                "" if row["tv"] is None else row["tv"],
                "" if row["w_dist"] is None else row["w_dist"],
                row["ess_min"],
                row["runtime_s"],
            ]
        )
    lines = [",".join(header)]
    for row in csv_rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _parse_values(text: str, param: str) -> list:
    _, cast = _SWEEP_PARAMS.get(param, (None, float))
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(cast(float(part)) if cast is int else cast(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afdps",
        description=(
            "Weighted-particle diffusion posterior sampling with exact "
            "Gaussian-mixture oracles"
        ),
    )
    parser.add_argument("--version", action="version", version=f"afdps {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one sampling experiment")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p_oracle = sub.add_parser("oracle", help="write exact posterior artifacts")
    p_oracle.add_argument("--config", required=True)
    p_oracle.add_argument("--sigma", required=True, type=float, help="noise level")
    p_oracle.add_argument("--out", required=True)
    p_oracle.add_argument("--force", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, choices=sorted(_SWEEP_PARAMS))
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--repeats", type=int, default=1)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--jobs", type=int, default=None, help="worker processes")
    p_sweep.add_argument("--force", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.force)
        if args.command == "oracle":
            return cmd_oracle(args.config, args.sigma, args.out, args.force)
        return cmd_sweep(
            args.config,
            args.param,
            _parse_values(args.values, args.param),
            args.repeats,
            args.out,
            args.jobs,
            args.force,
        )
    except ConfigError as err:
        print(f"afdps: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalDivergenceError, DegeneracyError) as err:
        print(f"afdps: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"afdps: I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
