"""Batch front end.

    delaykit run <config.json> [--out DIR] [--threads N] [--strict]
    delaykit validate <config.json> [--strict]

Each run writes one directory, named by UTC timestamp and a hash of the
resolved configuration, holding the result CSVs, ``metadata.json``,
``summary.txt`` and the resolved ``config.json``. The thread count for
trajectory solving comes from ``--threads``, else the DELAYKIT_THREADS
environment variable, else 1. Exit codes: 0 success, 2 invalid input,
3 numerical failure, 4 insufficient statistics.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .billiard.escape import classical_delay_histogram, histogram_tail_fit, monte_carlo_escape, semiclassical_s
from .billiard.trajectories import find_all_trajectories
from .config import RunConfig, parse_config
from .distribution import (
    all_channel_distributions,
    autocorrelation_distribution_em,
    autocorrelation_distribution_qm,
    delay_distribution_em,
    delay_distribution_qm,
    total_mass,
)
from .errors import ApproximationDomainError, DelayKitError, InvalidParameterError
from .moments import moment_report, monochromatic_limit_check, second_moment_smallband, wigner_smith_trace
from .smatrix import unitarity_defect

logger = logging.getLogger("delaykit")

CATEGORIES = {1: "error", 2: "invalid input", 3: "numerical failure", 4: "insufficient statistics"}


def _g(x) -> str:
    return f"{x:.12g}"


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _run_dir(root: Path, digest: str) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = root / f"{stamp}_{digest[:12]}"
    path, n = base, 1
    while path.exists():
        path = Path(f"{base}-{n}")
        n += 1
    path.mkdir(parents=True)
    return path


def _threads(arg) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("DELAYKIT_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise InvalidParameterError(f"DELAYKIT_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise InvalidParameterError("thread count must be at least 1")
    return n


# ---------------------------------------------------------------- tasks


def _grid(cfg):
    g = cfg.grid
    return None if g is None else np.linspace(g.min, g.max, g.points)


def _distributions(cfg, model, env):
    grid = _grid(cfg)
    if cfg.f is None:
        return all_channel_distributions(model, env, cfg.i, cfg.dispersion, grid)
    fn = delay_distribution_em if cfg.dispersion == "em" else delay_distribution_qm
    return [fn(model, env, cfg.i, cfg.f, grid)]


def _defect(model, env):
    lo, hi = env.support
    try:
        return unitarity_defect(model, np.linspace(lo, hi, 401), "k")
    except DelayKitError as err:
        logger.warning("unitarity defect not evaluated: %s", err)
        return None


def task_distribution(cfg, out, ctx):
    model, env = ctx["model"], ctx["envelope"]
    dists = _distributions(cfg, model, env)
    for d in dists:
        d.to_csv(out / f"distribution_i{d.i}_f{d.f}.csv")
    res = {
        "channels": [{"f": d.f, "mass": d.mass, "expected_mass": d.expected_mass} for d in dists],
        "unitarity_defect": _defect(model, env),
        "quadrature_step": dists[0].meta["quadrature_step"],
        "grid": [float(dists[0].grid[0]), float(dists[0].grid[-1]), len(dists[0].grid)],
    }
    if cfg.f is None:
        res["total_mass"] = total_mass(dists, cfg.tolerances.mass)
    lines = [f"channel {cfg.i} -> {d.f}: mass {d.mass:.8f}" for d in dists]
    if "total_mass" in res:
        lines.append(f"total mass {res['total_mass']:.8f}")
    return res, lines


def task_moments(cfg, out, ctx):
    model, env = ctx["model"], ctx["envelope"]
    dists = _distributions(cfg, model, env)
    rows, reports = [], []
    for d in dists:
        if d.mass <= 1e-14:
            continue
        r = moment_report(d, model).to_dict()
        if cfg.dispersion == "em":
            try:
                r["second_moment_smallband"] = second_moment_smallband(model, d.i, d.f, env.k0, env.sigma)
            except ApproximationDomainError as err:
                r["second_moment_smallband"] = None
                r["smallband_note"] = str(err)
        reports.append(r)
        rows.append([d.f] + [_g(r[k]) if r[k] is not None else "" for k in MOMENT_COLUMNS])
    _write_csv(out / "moments.csv", ["f"] + list(MOMENT_COLUMNS), rows)
    res = {"moments": reports, "unitarity_defect": _defect(model, env)}
    if cfg.f is None:
        res["total_mass"] = total_mass(dists, cfg.tolerances.mass)
    lines = [f"channel {cfg.i} -> {r['f']}: <delay> {r['mean']:.8g}, <delay^2> {r['second_moment']:.8g}" for r in reports]
    return res, lines


MOMENT_COLUMNS = (
    "mass",
    "mean",
    "second_moment",
    "variance",
    "mean_unnormalized",
    "second_moment_unnormalized",
    "wigner_smith_reference",
)


def task_ws_limit(cfg, out, ctx):
    model = ctx["model"]
    f = cfg.i if cfg.f is None else cfg.f
    table = monochromatic_limit_check(model, cfg.i, f, cfg.E0, cfg.sigma_sequence, kind=cfg.dispersion)
    table.to_csv(out / "convergence.csv")
    res = {
        "monotone": table.monotone,
        "ws_reference": table.rows[0].ws_reference,
        "final_abs_error": table.rows[-1].abs_error,
    }
    if cfg.dispersion == "qm":
        try:
            res["ws_trace"] = wigner_smith_trace(model, cfg.E0)
        except DelayKitError as err:
            res["ws_trace"] = None
            logger.warning("trace not evaluated: %s", err)
    lines = [f"sigma {r.sigma:.4g}: mean {r.mean:.8g}, error {r.abs_error:.3g}" for r in table.rows]
    lines.append("errors non-increasing" if table.monotone else "errors NOT monotone")
    return res, lines


def task_autocorrelation(cfg, out, ctx):
    model, env = ctx["model"], ctx["envelope"]
    f = cfg.i if cfg.f is None else cfg.f
    grid = _grid(cfg)
    if cfg.dispersion == "em":
        direct = delay_distribution_em(model, env, cfg.i, f, grid)
        route = autocorrelation_distribution_em(model, env, cfg.i, f, direct.grid)
    else:
        direct = delay_distribution_qm(model, env, cfg.i, f, grid)
        route = autocorrelation_distribution_qm(model, env, cfg.i, f, direct.grid)
    peak = direct.density.max()
    dev = float(np.abs(route.density - direct.density).max() / peak) if peak > 0 else 0.0
    _write_csv(
        out / "autocorrelation.csv",
        ["delay", "density", "direct_density"],
        [[_g(x), _g(a), _g(b)] for x, a, b in zip(direct.grid, route.density, direct.density)],
    )
    res = {"route": route.meta["route"], "max_relative_deviation": dev, "within_tolerance": dev < cfg.tolerances.route}
    return res, [f"{route.meta['route']} route vs direct: max relative deviation {dev:.3g}"]


def _dump_trajectories(path, trajs, m_max):
    header = ["code"] + [f"theta_{m}" for m in range(1, m_max + 1)] + ["length", "amplitude", "residual"]
    rows = []
    for t in trajs:
        th = [_g(x) for x in t.theta] + [""] * (m_max - len(t.theta))
        rows.append(["-".join(str(a) for a in t.code)] + th + [_g(t.length), _g(t.amplitude), _g(t.residual)])
    _write_csv(path, header, rows)


def _trajectories(cfg, ctx):
    b = cfg.billiard
    with ctx["executor"] as ex:
        return find_all_trajectories(ctx["geometry"], b.omega_i, b.omega_f, b.m_max, ex)


def task_billiard_s(cfg, out, ctx):
    b = cfg.billiard
    trajs = _trajectories(cfg, ctx)
    _dump_trajectories(out / "trajectories.csv", trajs, b.m_max)
    sc = semiclassical_s(ctx["geometry"], b.omega_i, b.omega_f, b.k, b.m_max, trajectories=trajs, weights=b.weights)
    _write_csv(
        out / "shells.csv",
        ["bounces", "re", "im", "abs"],
        [[m, _g(v.real), _g(v.imag), _g(abs(v))] for m, v in sorted(sc.shells.items())],
    )
    res = {
        "s_re": sc.value.real,
        "s_im": sc.value.imag,
        "s_abs": abs(sc.value),
        "truncation_estimate": sc.shell_estimate,
        "n_trajectories": sc.n_trajectories,
    }
    return res, [f"S = {sc.value:.8g} from {sc.n_trajectories} trajectories (last shell {sc.shell_estimate:.3g})"]


def task_billiard_classical(cfg, out, ctx):
    b = cfg.billiard
    trajs = _trajectories(cfg, ctx)
    _dump_trajectories(out / "trajectories.csv", trajs, b.m_max)
    hist = classical_delay_histogram(
        ctx["geometry"], b.omega_i, b.omega_f, b.m_max, b.bin_width, weights=b.weights, trajectories=trajs
    )
    _write_csv(
        out / "histogram.csv",
        ["s_lo", "s_hi", "mass"],
        [[_g(lo), _g(hi), _g(m)] for lo, hi, m in zip(hist.edges[:-1], hist.edges[1:], hist.mass)],
    )
    fit = histogram_tail_fit(hist)
    res = {"tail_gamma": fit.gamma, "tail_correlation": fit.correlation, "n_trajectories": len(trajs)}
    return res, [f"{len(trajs)} trajectories; shell tail decay rate {fit.gamma:.4g} (r = {fit.correlation:.4f})"]


def task_escape(cfg, out, ctx):
    e = cfg.escape
    curve = monte_carlo_escape(ctx["geometry"], e.n_samples, e.s_max, cfg.seed, e.n_grid, e.window)
    _write_csv(out / "survival.csv", ["s", "survival"], [[_g(s), _g(p)] for s, p in zip(curve.s, curve.survival)])
    fit = curve.fit
    res = {
        "gamma": fit.gamma,
        "correlation": fit.correlation,
        "stderr": fit.stderr,
        "window": list(fit.window),
        "exponential": curve.exponential,
        "flags": curve.flags,
        "n_samples": curve.n_samples,
    }
    lines = [f"escape rate {fit.gamma:.5g} +- {fit.stderr:.2g} (r = {fit.correlation:.5f}) on {fit.window}"]
    lines += [f"flag: {x}" for x in curve.flags]
    return res, lines


TASK_RUNNERS = {
    "distribution": task_distribution,
    "moments": task_moments,
    "ws_limit": task_ws_limit,
    "autocorrelation": task_autocorrelation,
    "billiard_s": task_billiard_s,
    "billiard_classical": task_billiard_classical,
    "escape": task_escape,
}


def _versions():
    import pydantic
    import scipy

    return {
        "delaykit": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.__version__,
    }


def run(cfg: RunConfig, out_root=None, threads: int = 1, base_dir=None) -> Path:
    """Execute one configured task and return the run directory."""
    ctx = {}
    if cfg.model is not None:
        ctx["model"] = cfg.build_model(base_dir)
    if cfg.envelope is not None:
        ctx["envelope"] = cfg.build_envelope()
    if cfg.geometry is not None:
        ctx["geometry"] = cfg.build_geometry()
    ctx["executor"] = ThreadPoolExecutor(threads) if threads > 1 else nullcontext(None)

    digest = config_hash(cfg)
    root = Path(out_root or cfg.output_dir or "runs")
    out = _run_dir(root, digest)
    resolved = cfg.model_dump(mode="json")
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")

    t0 = time.perf_counter()
    results, lines = TASK_RUNNERS[cfg.task](cfg, out, ctx)
    elapsed = time.perf_counter() - t0

    meta = {
        "task": cfg.task,
        "config_hash": digest,
        "inputs": resolved,
        "versions": _versions(),
        "seed": cfg.seed,
        "threads": threads,
        "runtime_seconds": elapsed,
        "results": results,
    }
    (out / "metadata.json").write_text(json.dumps(_clean(meta), indent=2, sort_keys=True) + "\n")
    summary = [f"delaykit {__version__}: task {cfg.task}", f"config hash {digest[:12]}", ""] + lines
    summary += ["", f"runtime {elapsed:.2f} s", f"outputs in {out}"]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return out


def _parser():
    p = argparse.ArgumentParser(prog="delaykit", description="Delay-time distributions of scattered wave packets.")
    p.add_argument("--version", action="version", version=f"delaykit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a run configuration")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, default=None, help="parent directory for run outputs (default ./runs)")
    r.add_argument("--threads", type=int, default=None, help="worker threads (default DELAYKIT_THREADS or 1)")
    r.add_argument("--strict", action="store_true", help="reject unknown configuration keys")
    v = sub.add_parser("validate", help="check a configuration and print it with defaults filled in")
    v.add_argument("config", type=Path)
    v.add_argument("--strict", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="delaykit: %(levelname)s: %(message)s")
    try:
        cfg = parse_config(args.config, strict=args.strict)
        if args.command == "validate":
            print(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True))
            return 0
        out = run(cfg, args.out, _threads(args.threads), base_dir=args.config.parent)
        print(out)
        return 0
    except DelayKitError as err:
        print(f"delaykit: {CATEGORIES.get(err.exit_code, 'error')}: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
