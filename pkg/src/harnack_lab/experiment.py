"""Config-driven experiments: simulate, evaluate the requested checks, write artifacts."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from . import dynamics, harnack, oracles
from .config import ConfigError, ExperimentConfig, sweep_combos
from .harnack import MarginRecord

CSV_HEADER = "t,kind,min_margin,argmin_index,tolerance"
GENERATOR = "PCG64"
THREADS_ENV = "HARNACK_LAB_THREADS"

REPORT_ROWS = (
    ("trace", "trace inequality"),
    ("constrained_trace", "constrained trace inequality"),
    ("matrix", "matrix inequality"),
    ("constrained_matrix", "constrained matrix inequality"),
    ("interpolated", "interpolated surface inequality"),
    ("gradient", "gradient estimate"),
    ("integrated_log_heat", "integrated log-heat inequality"),
    ("integrated_log_sobolev_eps", "integrated log-Sobolev inequality"),
)


@dataclass
class KindResult:
    name: str
    row: str
    records: list[MarginRecord]
    passed: bool
    dominance_ok: bool | None = None
    final_margin: np.ndarray | None = field(default=None, repr=False)

    @property
    def worst(self) -> MarginRecord:
        return min(self.records, key=lambda r: r.min_margin)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    kinds: list[KindResult]
    oracle_demo: dict[str, float] | None = None

    @property
    def passed(self) -> bool:
        return all(k.passed for k in self.kinds)


# simulation ----------------------------------------------------------------------

def simulate(cfg: ExperimentConfig, inject_fault: bool = False) -> dynamics.Trajectory:
    spec = cfg.flow_spec()
    grid = spec.grid
    i, c = cfg.init, cfg.constrained
    if c.enabled:
        phi0, psi0 = dynamics.constrained_pair(grid, i.seed, c.seed2, c.c0, i.max_freq, i.amplitude)
        traj = dynamics.run_pair(spec, phi0, psi0, c.c0)
    else:
        init = dynamics.initial_field(grid, i.seed, i.max_freq, i.amplitude, cfg.offset())
        traj = dynamics.run(spec, init)
    if inject_fault:
        corrupt(traj)
    return traj


def corrupt(traj: dynamics.Trajectory, node: int | None = None) -> None:
    """Fault injection: scale one node of the middle snapshot by ``e^{-1}`` in every member."""
    k = len(traj.times) // 2
    j = traj.grid.size // 2 if node is None else node
    idx = np.unravel_index(j, traj.grid.shape)
    traj.psi[(k,) + idx] *= math.exp(-1.0)
    if traj.phi is not None:
        traj.phi[(k,) + idx] *= math.exp(-1.0)


# evaluation ----------------------------------------------------------------------

def _row_for(name: str, cfg: ExperimentConfig) -> str:
    if name != "integrated":
        return name
    return "integrated_log_heat" if cfg.flow.equation == "log_heat" else "integrated_log_sobolev_eps"


def integrated_records(cfg: ExperimentConfig, traj: dynamics.Trajectory) -> list[MarginRecord]:
    """Seeded random quadruples ``(x1, t1, x2, t2)`` at snapshot times; margin is ``rhs - lhs``."""
    rng = np.random.default_rng(cfg.check.path_seed)
    tol = harnack.tolerance(traj.grid, traj.dt, cfg.check.tol_C)
    usable = np.flatnonzero(traj.times >= cfg.time.t_min)
    records = []
    for _ in range(cfg.check.integrated_samples):
        i1, i2 = np.sort(rng.choice(usable, size=2, replace=False))
        x1, x2 = (int(v) for v in rng.integers(0, traj.grid.size, size=2))
        r = harnack.integrated_check(traj, x1, float(traj.times[i1]), x2, float(traj.times[i2]), tol=tol)
        records.append(MarginRecord(float(traj.times[i2]), r.rhs - r.lhs, x2, tol))
    return records


def evaluate(cfg: ExperimentConfig, traj: dynamics.Trajectory, keep_final: bool = False) -> list[KindResult]:
    out = []
    for name, kind in cfg.harnack_kinds():
        row = _row_for(name, cfg)
        if kind is None:
            recs = integrated_records(cfg, traj)
            out.append(KindResult(name, row, recs, all(r.passed for r in recs)))
            continue
        rep = harnack.verify(traj, kind, t_min=cfg.time.t_min, tol_C=cfg.check.tol_C)
        final = harnack.margin_field(traj, kind, len(traj.times) - 1) if keep_final else None
        out.append(KindResult(name, row, rep.records, rep.overall_pass, rep.dominance_ok, final))
    return out


def oracle_demo(cfg: ExperimentConfig) -> dict[str, float]:
    """Log-Gaussian residuals at ``t = ln 2`` for the corrected and the printed family."""
    a = cfg.flow.a if cfg.flow.equation == "log_heat" else 1.0
    n = cfg.grid().manifold_dim
    p = oracles.LogGaussianParams(a, n, 0.0)
    pts = [np.zeros(n), np.full(n, 0.5)]
    t = [math.log(2.0)]
    return {
        "a": a,
        "n": n,
        "corrected": oracles.pde_residual(oracles.log_gaussian_handle(p), pts, t, a).max_abs_residual,
        "printed": oracles.pde_residual(oracles.log_gaussian_handle(p, True), pts, t, a).max_abs_residual,
    }


def run_experiment(cfg: ExperimentConfig, inject_fault: bool = False, paper_variant_oracle: bool = False,
                   keep_final: bool = False) -> ExperimentResult:
    traj = simulate(cfg, inject_fault)
    demo = oracle_demo(cfg) if paper_variant_oracle else None
    return ExperimentResult(cfg, evaluate(cfg, traj, keep_final), demo)


# artifacts -----------------------------------------------------------------------

def seed_line(cfg: ExperimentConfig) -> str:
    return (f"# generator={GENERATOR} seed={cfg.init.seed} seed2={cfg.constrained.seed2} "
            f"path_seed={cfg.check.path_seed}")


def csv_rows(kind: KindResult) -> list[str]:
    return [f"{r.t!r},{kind.name},{r.min_margin!r},{r.argmin_index},{r.tolerance!r}" for r in kind.records]


def summary_lines(result: ExperimentResult) -> list[str]:
    lines = []
    for k in result.kinds:
        w = k.worst
        status = "PASS" if k.passed else "FAIL"
        line = (f"{k.name}: {status} worst_margin={w.min_margin:.6g} at t={w.t:.6g} "
                f"node={w.argmin_index} tol={w.tolerance:.3g}")
        if k.dominance_ok is not None:
            line += f" dominance={'ok' if k.dominance_ok else 'violated'}"
        lines.append(line)
    if result.oracle_demo is not None:
        d = result.oracle_demo
        lines.append(
            f"log-Gaussian residual at t=ln 2 (a={d['a']:g}, n={d['n']}): "
            f"corrected={d['corrected']:.3e} printed={d['printed']:.3e}"
        )
    lines.append(f"overall: {'PASS' if result.passed else 'FAIL'}")
    return lines


def status_document(result: ExperimentResult) -> dict:
    return {
        "generator": GENERATOR,
        "seed": result.config.init.seed,
        "passed": result.passed,
        "config": result.config.to_dict(),
        "kinds": [
            {
                "name": k.name,
                "row": k.row,
                "passed": k.passed,
                "worst_margin": k.worst.min_margin,
                "worst_t": k.worst.t,
                "worst_index": k.worst.argmin_index,
                "tolerance": k.worst.tolerance,
                "dominance_ok": k.dominance_ok,
                "records": len(k.records),
            }
            for k in result.kinds
        ],
        "oracle_demo": result.oracle_demo,
    }


def write_artifacts(result: ExperimentResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = seed_line(result.config)
    written = []
    every = []
    for k in result.kinds:
        rows = csv_rows(k)
        every.extend(rows)
        path = out / f"margins_{k.name}.csv"
        path.write_text("\n".join([head, CSV_HEADER, *rows]) + "\n")
        written.append(path)
    agg = out / "margins.csv"
    agg.write_text("\n".join([head, CSV_HEADER, *every]) + "\n")
    summary = out / "summary.txt"
    summary.write_text(head + "\n" + "\n".join(summary_lines(result)) + "\n")
    status = out / "status.json"
    status.write_text(json.dumps(status_document(result), indent=2, sort_keys=True) + "\n")
    return [*written, agg, summary, status]


# sweeps ----------------------------------------------------------------------------

def worker_count(n_jobs: int) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}")
    return max(1, min(cap, n_jobs))


def _sweep_job(job):
    index, combo, cfg, out_dir = job
    try:
        result = run_experiment(cfg, keep_final=True)
    except (dynamics.PositivityError, dynamics.RatioBoundError) as exc:
        return index, combo, cfg, None, str(exc)
    write_artifacts(result, Path(out_dir) / f"combo_{index:03d}")
    return index, combo, cfg, result, None


def restrict(grid_fine, field: np.ndarray, n_coarse: int) -> np.ndarray:
    """Sample a fine-grid field at the coarse grid's nodes."""
    n_fine = grid_fine.n
    if n_fine % n_coarse:
        raise ValueError(f"resolution {n_fine} is not a multiple of {n_coarse}")
    m = n_fine // n_coarse
    if grid_fine.is_torus:
        return field[(slice(None, None, m),) * grid_fine.dim]
    j = np.arange(n_coarse)
    if m % 2:
        return field[..., m * j + (m - 1) // 2]
    return 0.5 * (field[..., m * j + m // 2 - 1] + field[..., m * j + m // 2])


def observed_order(fields: list[tuple[int, np.ndarray]], grid_for) -> float | None:
    """Richardson order from final-time margin fields at three or more resolutions."""
    if len(fields) < 3:
        return None
    fields = sorted(fields, key=lambda p: p[0])
    errors, res = [], []
    try:
        for (n0, f0), (n1, f1) in zip(fields, fields[1:]):
            errors.append(float(np.max(np.abs(f0 - restrict(grid_for(n1), f1, n0)))))
            res.append(n0)
    except ValueError:
        return float("nan")
    if len(errors) < 2:
        return None
    rep = oracles.orders_from_errors(errors, res)
    if rep.exact:
        return float("inf")
    return rep.refinement_orders[-1]


SWEEP_HEADER = "combo,a,epsilon,seed,resolution,kind,worst_margin,passed,observed_order"


def run_sweep(cfg: ExperimentConfig, out_dir: str | Path) -> tuple[bool, list[str]]:
    """Run every sweep combination; returns ``(all_passed, csv_lines)`` and writes ``sweep.csv``."""
    combos = sweep_combos(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, combo, sub, str(out)) for i, (combo, sub) in enumerate(combos)]
    workers = worker_count(len(jobs))
    if workers == 1:
        done = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_sweep_job, jobs))
    done.sort(key=lambda d: d[0])

    # group by everything except resolution for the observed order
    groups: dict[tuple, list] = {}
    for index, combo, sub, result, err in done:
        key = tuple((k, v) for k, v in sorted(combo.items()) if k != "resolution")
        groups.setdefault(key, []).append((index, combo, sub, result))
    orders: dict[tuple[tuple, str], float | None] = {}
    for key, members in groups.items():
        if any(m[3] is None for m in members):
            continue
        for kname, _ in members[0][2].harnack_kinds():
            if kname == "integrated":
                continue
            fields = []
            for _, combo, sub, result in members:
                k = next(k for k in result.kinds if k.name == kname)
                fields.append((sub.manifold.n, k.final_margin))
            orders[(key, kname)] = observed_order(fields, partial(_grid_at, members[0][2]))

    lines = [seed_line(cfg), SWEEP_HEADER]
    all_passed = True
    for index, combo, sub, result, err in done:
        key = tuple((k, v) for k, v in sorted(combo.items()) if k != "resolution")
        a = "" if sub.flow.a is None else repr(sub.flow.a)
        eps = "" if sub.flow.epsilon is None else repr(sub.flow.epsilon)
        prefix = f"{index},{a},{eps},{sub.init.seed},{sub.manifold.n}"
        if result is None:
            all_passed = False
            for kname, _ in sub.harnack_kinds():
                lines.append(f"{prefix},{kname},,false,")
            continue
        for k in result.kinds:
            order = orders.get((key, k.name))
            order_s = "" if order is None else repr(order)
            all_passed = all_passed and k.passed
            lines.append(f"{prefix},{k.name},{k.worst.min_margin!r},{'true' if k.passed else 'false'},{order_s}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    return all_passed, lines


def _grid_at(cfg: ExperimentConfig, n: int):
    return replace(cfg, manifold=replace(cfg.manifold, n=n)).grid()


# report ----------------------------------------------------------------------------

def collect_status(root: str | Path) -> list[dict]:
    root = Path(root)
    docs = []
    for path in sorted(root.rglob("status.json")):
        try:
            docs.append(json.loads(path.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(str(path), f"unreadable artifact ({exc})") from None
    return docs


def report_table(docs: list[dict]) -> tuple[list[str], bool]:
    """Summary table with one row per inequality; rows without artifacts read ``not run``."""
    agg: dict[str, dict] = {}
    for doc in docs:
        for k in doc["kinds"]:
            row = agg.setdefault(k["row"], {"passed": True, "worst": math.inf, "runs": 0})
            row["passed"] = row["passed"] and bool(k["passed"])
            row["worst"] = min(row["worst"], float(k["worst_margin"]))
            row["runs"] += 1
    width = max(len(label) for _, label in REPORT_ROWS)
    lines = [f"{'check':<{width}}  {'status':<8}  {'worst_margin':>14}  runs"]
    ok = True
    for key, label in REPORT_ROWS:
        row = agg.get(key)
        if row is None:
            lines.append(f"{label:<{width}}  {'not run':<8}  {'-':>14}  0")
            continue
        ok = ok and row["passed"]
        status = "pass" if row["passed"] else "FAIL"
        lines.append(f"{label:<{width}}  {status:<8}  {row['worst']:>14.6g}  {row['runs']}")
    return lines, ok
