"""Command line front end: ``run`` one configuration or ``bench`` several.

Exit status: 0 success, 2 input error, 3 no validated gap, 4 tolerance
failure (inner solver, conditioning, step size), 5 guard violation, 1 any
other library error.

Reports are JSON (``schema_version`` 1; floats written with ``repr`` so they
parse back bit for bit) or a one-row CSV with ``.17g`` floats. Eigenvalues
are in normalized units; multiply by ``scale**2`` for the input's units
(``rayleigh_original`` does this). Wall time is only included with
``--timing`` so that identical configurations give byte-identical reports.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .driver import gapfree_eigenvalue, search_delta_hat, shrink_exact, shrink_inexact
from .errors import InputError, ShrinkPcaError
from .ingest import load_input
from .linalg import SeededRng, random_unit_vector
from .oracle import MAX_DIM, dense_eigendecompose
from .power import pm_iterations, power_method

SCHEMA_VERSION = 1
MODES = ("gap", "gapfree", "shrink-exact", "power-baseline")
WORKERS_ENV = "SHRINKPCA_WORKERS"

SYNTAX_HELP = """input: a file path, or a synthetic instance
  plant d=<int> n=<int> spectrum=<spectrum> [seed=<int>]
with <spectrum> one of geometric(a,b,k) (lambda_i = a (b/a)^i, i < k),
linear(a,b,k) or values(l1,l2,...), zero padded to d."""


@dataclass
class RunConfig:
    input: str
    mode: str = "gap"
    inner: str = "svrg"
    epsilon: float = 1e-3
    p: float = 0.1
    delta_hat: float | None = None
    search_gap: bool = False
    seed: int = 0
    subsample: bool = False
    schedule: str = "practical"
    tol: float = 1e-10
    format: str = "libsvm"
    out: str | None = None
    out_format: str = "json"
    timing: bool = False

    def validate(self):
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}")
        if self.inner not in ("exact", "svrg", "catalyst"):
            raise InputError(f"unknown inner solver {self.inner!r}")
        if self.mode in ("gap", "shrink-exact", "power-baseline"):
            if self.delta_hat is None and not self.search_gap:
                raise InputError(f"mode {self.mode} needs --delta-hat or --search-gap")
        if self.out_format not in ("json", "csv"):
            raise InputError(f"unknown output format {self.out_format!r}")
        if self.schedule not in ("theoretical", "practical"):
            raise InputError(f"unknown schedule {self.schedule!r}")
        if not 0.0 < self.epsilon < 1.0 or not 0.0 < self.p < 1.0:
            raise InputError("epsilon and p must lie in (0, 1)")
        if self.delta_hat is not None and not 0.0 < self.delta_hat <= 1.0:
            raise InputError("delta_hat must lie in (0, 1]")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        return self


@dataclass
class Counters:
    loops: int = 0
    inner_calls: int = 0
    svrg_epochs: int = 0
    component_grads: int = 0
    full_grads: int = 0
    matvecs: int = 0
    search_inner_calls: int = 0
    passes: float = 0.0


@dataclass
class RunReport:
    config: dict
    status: str = "ok"
    exit_code: int = 0
    error: str | None = None
    d: int = 0
    n: int = 0
    nnz: int = 0
    scale: float = 1.0
    delta_hat: float | None = None
    delta_hat_source: str | None = None
    rayleigh: float | None = None
    rayleigh_original: float | None = None
    lambda_f: float | None = None
    m1: int | None = None
    m2: int | None = None
    eps_tilde: float | None = None
    subsample_size: int | None = None
    lambdas: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    counters: Counters = field(default_factory=Counters)
    oracle: dict | None = None
    w_f: list | None = None
    wall_time: float | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["wall_time"] is None:
            del out["wall_time"]
        return out

    def flat(self) -> dict:
        """Scalar fields with dotted keys (vectors and trajectories dropped)."""
        row = {}
        for k, v in self.to_dict().items():
            if isinstance(v, dict):
                for k2, v2 in v.items():
                    if not isinstance(v2, (list, dict)):
                        row[f"{k}.{k2}"] = v2
            elif not isinstance(v, list):
                row[k] = v
        return row


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def render(report: RunReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"
    row = report.flat()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(row))
    w.writerow([_fmt(v) for v in row.values()])
    return buf.getvalue()


def _oracle_block(data, w_f, extra=None) -> dict | None:
    if data.d > MAX_DIM:
        return None
    o = dense_eigendecompose(data.dense_covariance())
    w = np.asarray(w_f, dtype=float)
    block = {
        "lambda1": o.lambda1,
        "delta": o.delta,
        "alignment": min(max(o.alignment(w), 0.0), 1.0),
        "rayleigh_gap": o.lambda1 - float(w @ data.matvec(w)) / float(w @ w),
    }
    if extra:
        block.update(extra)
    return block


def _gap(cfg: RunConfig, data, rng, report: RunReport) -> float:
    if cfg.delta_hat is not None:
        report.delta_hat_source = "user"
        return cfg.delta_hat
    est = search_delta_hat(data, cfg.epsilon, cfg.p, rng=rng)
    report.delta_hat_source = "search"
    report.counters.search_inner_calls = est.oracle_calls
    return est.delta_hat


def _execute(cfg: RunConfig, data, report: RunReport):
    root = SeededRng(cfg.seed)
    gap_rng, run_rng = root.spawn(2)
    report.d, report.n, report.nnz, report.scale = data.d, data.n, data.nnz_total, data.scale
    c = report.counters
    if cfg.mode == "power-baseline":
        gap = _gap(cfg, data, gap_rng, report)
        report.delta_hat = gap
        # lambda_1 <= 1 after normalization, so 1/delta_hat bounds the condition number
        T = pm_iterations("accurate", data.d, cfg.p, cfg.epsilon, kappa=max(1.0, 1.0 / gap))
        w0 = random_unit_vector(run_rng, data.d)
        u1 = None
        if data.d <= MAX_DIM:
            u1 = dense_eigendecompose(data.dense_covariance()).u1
        hit = []

        def watch(k, w):
            if u1 is not None and not hit and (w @ u1) ** 2 >= 1.0 - cfg.epsilon:
                hit.append(k)

        w_f = power_method(data, w0, T, callback=watch)
        c.matvecs = T
        c.passes = float(T)
        report.m2 = T
        report.rayleigh = float(w_f @ data.matvec(w_f))
        report.w_f = w_f.tolist()
        extra = {"steps_to_target": hit[0] if hit else None}
        report.oracle = _oracle_block(data, w_f, extra if u1 is not None else None)
        report.rayleigh_original = report.rayleigh * data.scale ** 2
        return
    if cfg.mode == "gapfree":
        res = gapfree_eigenvalue(data, cfg.epsilon, cfg.p, inner=cfg.inner, rng=run_rng,
                                 subsample=cfg.subsample, mode=cfg.schedule,
                                 practical_tol=cfg.tol)
        report.delta_hat = None
    else:
        gap = _gap(cfg, data, gap_rng, report)
        report.delta_hat = gap
        if cfg.mode == "shrink-exact":
            res = shrink_exact(data, gap, cfg.epsilon, cfg.p, rng=run_rng)
        else:
            res = shrink_inexact(data, gap, cfg.epsilon, cfg.p, inner=cfg.inner, rng=run_rng,
                                 mode=cfg.schedule, practical_tol=cfg.tol)
    st = res.inner_stats
    c.loops = res.loops
    c.inner_calls = res.oracle_calls
    c.svrg_epochs = st.epochs
    c.component_grads = st.component_grads
    c.full_grads = st.full_grads
    c.passes = st.passes(data.n)
    report.rayleigh = res.rayleigh
    report.rayleigh_original = res.rayleigh * data.scale ** 2
    report.lambda_f = res.lambda_f
    report.m1, report.m2 = res.schedule.m1, res.schedule.m2
    report.eps_tilde = res.schedule.eps_tilde
    report.subsample_size = res.subsample_size
    report.lambdas = list(res.state.lambdas)
    report.deltas = list(res.state.deltas)
    report.w_f = res.w_f.tolist()
    report.oracle = _oracle_block(data, res.w_f)


def run(config: RunConfig, data=None) -> RunReport:
    """Execute one configuration; library errors become a report with an exit code."""
    report = RunReport(config=asdict(config))
    t0 = time.perf_counter()
    try:
        config.validate()
        if data is None:
            data = load_input(config.input, config.format)
        _execute(config, data, report)
    except ShrinkPcaError as exc:
        report.status = type(exc).__name__
        report.exit_code = exc.exit_code
        report.error = str(exc)
    if config.timing:
        report.wall_time = time.perf_counter() - t0
    return report


BENCH_FIELDS = ("config", "mode", "inner", "seed", "status", "exit_code", "loops", "inner_calls",
                "svrg_epochs", "component_grads", "full_grads", "matvecs", "passes",
                "alignment", "rayleigh_gap", "wall_time", "error")
SUMMARY_FIELDS = ("loops", "inner_calls", "svrg_epochs", "component_grads", "full_grads",
                  "matvecs", "passes", "alignment", "rayleigh_gap", "wall_time")


def _bench_cell(args):
    i, cfg = args
    cfg = RunConfig(**{**asdict(cfg), "timing": True})
    rep = run(cfg)
    o = rep.oracle or {}
    c = rep.counters
    return {
        "config": i, "mode": cfg.mode, "inner": cfg.inner, "seed": cfg.seed,
        "status": rep.status, "exit_code": rep.exit_code, "loops": c.loops,
        "inner_calls": c.inner_calls, "svrg_epochs": c.svrg_epochs,
        "component_grads": c.component_grads, "full_grads": c.full_grads,
        "matvecs": c.matvecs, "passes": c.passes, "alignment": o.get("alignment"),
        "rayleigh_gap": o.get("rayleigh_gap"), "wall_time": rep.wall_time, "error": rep.error,
    }


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def bench(configs, repeats: int = 1, workers: int | None = None):
    """One row per ``(config, seed)`` with seeds ``seed, seed+1, ...``; returns ``(rows, summary)``.

    Rows come back in config-then-seed order whatever the completion order.
    Failed runs are rows with their status and exit code.
    """
    configs = list(configs)
    if not configs:
        raise InputError("bench needs at least one configuration")
    if repeats < 1:
        raise InputError("repeats must be at least 1")
    workers = default_workers() if workers is None else max(1, int(workers))
    cells = [(i, RunConfig(**{**asdict(c), "seed": c.seed + r}))
             for i, c in enumerate(configs) for r in range(repeats)]
    if workers == 1:
        rows = [_bench_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_cell, cells))
    summary = []
    for i, cfg in enumerate(configs):
        mine = [r for r in rows if r["config"] == i]
        entry = {"config": i, "mode": cfg.mode, "inner": cfg.inner, "runs": len(mine),
                 "ok": sum(r["exit_code"] == 0 for r in mine)}
        for k in SUMMARY_FIELDS:
            vals = [r[k] for r in mine if r["exit_code"] == 0 and r[k] is not None]
            entry[f"median_{k}"] = statistics.median(vals) if vals else None
        summary.append(entry)
    return rows, summary


def render_bench(rows, summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in BENCH_FIELDS])
    w.writerow([])
    w.writerow(["# summary"])
    keys = list(summary[0])
    w.writerow(keys)
    for s in summary:
        w.writerow([_fmt(s[k]) for k in keys])
    return buf.getvalue()


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="shrinkpca", description="Leading eigenvector by shrinking shift-and-invert.",
        epilog=SYNTAX_HELP, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, bench_mode=False):
        p.add_argument("--input", required=True, help="data file or 'plant ...' instance")
        p.add_argument("--format", choices=("libsvm", "csv"), default="libsvm")
        if bench_mode:
            p.add_argument("--mode", choices=MODES, action="append",
                           help="repeat to bench several modes")
        else:
            p.add_argument("--mode", choices=MODES, default="gap")
        p.add_argument("--inner", choices=("exact", "svrg", "catalyst"), default="svrg")
        p.add_argument("--epsilon", type=float, default=1e-3)
        p.add_argument("--p", type=float, default=0.1)
        p.add_argument("--delta-hat", type=float, default=None)
        p.add_argument("--search-gap", action="store_true")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--subsample", action="store_true")
        p.add_argument("--schedule", choices=("theoretical", "practical"), default="practical")
        p.add_argument("--tol", type=float, default=1e-10, help="practical inner tolerance")
        p.add_argument("--out", default=None, help="output path (default stdout)")

    r = sub.add_parser("run", help="run one configuration", epilog=SYNTAX_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(r)
    r.add_argument("--out-format", choices=("json", "csv"), default="json")
    r.add_argument("--timing", action="store_true", help="include wall time in the report")
    b = sub.add_parser("bench", help="compare configurations over seeds", epilog=SYNTAX_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(b, bench_mode=True)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--workers", type=int, default=None,
                   help=f"parallel cells (default ${WORKERS_ENV} or 1)")
    return ap


def _config_from(ns, mode) -> RunConfig:
    return RunConfig(
        input=ns.input, mode=mode, inner=ns.inner, epsilon=ns.epsilon, p=ns.p,
        delta_hat=ns.delta_hat, search_gap=ns.search_gap, seed=ns.seed, subsample=ns.subsample,
        schedule=ns.schedule, tol=ns.tol, format=ns.format, out=ns.out,
        out_format=getattr(ns, "out_format", "json"), timing=getattr(ns, "timing", False),
    )


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def main(argv=None) -> int:
    try:
        ns = _parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else InputError.exit_code
    try:
        if ns.command == "run":
            cfg = _config_from(ns, ns.mode)
            rep = run(cfg)
            _emit(render(rep, cfg.out_format), cfg.out)
            if rep.exit_code:
                print(f"shrinkpca: {rep.status}: {rep.error}", file=sys.stderr)
            return rep.exit_code
        modes = ns.mode or ["gap"]
        cfgs = [_config_from(ns, m) for m in modes]
        rows, summary = bench(cfgs, ns.repeats, ns.workers)
        _emit(render_bench(rows, summary), ns.out)
        return 0
    except ShrinkPcaError as exc:
        print(f"shrinkpca: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
