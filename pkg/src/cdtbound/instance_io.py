"""Instance files, random instance generation and benchmark runs."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .bounds import BOUND_NAMES, pipeline_order, run_pipeline
from .errors import AssumptionError, CdtError, ParseError, ValidationError
from .model import CdtInstance, check_interior_assumption, ellipsoid_value
from .trs import TrsProblem, solve_both

log = logging.getLogger(__name__)

REPORT_HEADER = ["instance", "bound", "lb", "ub", "rel_gap", "lambda", "iterations", "time_ms", "solved"]
SUMMARY_HEADER = ["bound", "count", "solved", "avg_gap", "max_gap", "avg_time_ms", "max_time_ms"]


def _num(x: float) -> str:
    return format(float(x), ".17g")


def dumps_instance(inst: CdtInstance) -> str:
    """Canonical text: fixed key order, 17 significant digits per float."""
    arrays = (inst.Q, inst.q, inst.A, inst.a, np.array([inst.a0]))
    if not all(np.all(np.isfinite(x)) for x in arrays):
        raise ValidationError("refusing to serialize non-finite data")

    def vec(v):
        return "[" + ", ".join(_num(x) for x in v) + "]"

    def mat(M):
        return "[\n    " + ",\n    ".join(vec(row) for row in M) + "\n  ]"

    meta = dict(inst.meta or {})
    if inst.name:
        meta.setdefault("name", inst.name)
    parts = [
        f'  "n": {inst.n}',
        f'  "Q": {mat(inst.Q)}',
        f'  "q": {vec(inst.q)}',
        f'  "A": {mat(inst.A)}',
        f'  "a": {vec(inst.a)}',
        f'  "a0": {_num(inst.a0)}',
    ]
    if meta:
        parts.append(f'  "meta": {json.dumps(meta, sort_keys=True)}')
    return "{\n" + ",\n".join(parts) + "\n}\n"


def write_instance(inst: CdtInstance, path) -> None:
    text = dumps_instance(inst)
    Path(path).write_text(text, encoding="utf-8")


def loads_instance(text: str, name: str = "", check_assumption: bool = True) -> CdtInstance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("instance file must hold a JSON object")
    missing = {"n", "Q", "q", "A", "a", "a0"} - data.keys()
    if missing:
        raise ParseError(f"missing keys: {sorted(missing)}")
    try:
        Q = np.array(data["Q"], dtype=float)
        A = np.array(data["A"], dtype=float)
        q = np.array(data["q"], dtype=float)
        a = np.array(data["a"], dtype=float)
        a0 = float(data["a0"])
        n = int(data["n"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed numeric data: {exc}") from exc
    meta = data.get("meta") or {}
    if q.shape != (n,):
        raise ValidationError(f"q has shape {q.shape}, expected ({n},)")
    inst = CdtInstance(Q, q, A, a, a0, name=meta.get("name", name), meta=meta or None)
    if check_assumption and not check_interior_assumption(inst).satisfied:
        raise AssumptionError("interior assumption violated: a0 is not above the ellipsoid minimum over the ball")
    return inst


def read_instance(path, check_assumption: bool = True) -> CdtInstance:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return loads_instance(text, name=path.stem, check_assumption=check_assumption)


def _random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    Z = rng.standard_normal((n, n))
    Qm, R = np.linalg.qr(Z)
    return Qm * np.sign(np.diag(R))


def generate_instance(n: int, seed: int, max_attempts: int = 1000) -> CdtInstance:
    """Random instance whose plain TRS has a local-nonglobal minimizer and violates E at its global one.

    Objective: ``U' D U`` with ``D ~ U[-5, 5]`` (two smallest eigenvalues at
    least 0.1 apart) and a normal linear term shrunk until the local-nonglobal
    minimizer exists. Ellipsoid: eigenvalues in ``[0.5, 3]``, ``a ~ N(0, 0.25)``,
    ``a0`` halfway between the ellipsoid values of the two TRS minimizers.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng([n, seed])
    for _ in range(max_attempts):
        d = np.sort(rng.uniform(-5.0, 5.0, n))
        if d[1] - d[0] < 0.1:
            continue
        U = _random_orthogonal(rng, n)
        Q = U.T @ np.diag(d) @ U
        Q = 0.5 * (Q + Q.T)
        q = rng.standard_normal(n)
        glob = lng = None
        for _ in range(60):
            glob, lng = solve_both(TrsProblem(Q, q, 1.0))
            if lng is not None:
                break
            q = 0.5 * q
        if lng is None:
            continue
        W = _random_orthogonal(rng, n)
        A = W.T @ np.diag(rng.uniform(0.5, 3.0, n)) @ W
        A = 0.5 * (A + A.T)
        a = 0.5 * rng.standard_normal(n)
        probe = CdtInstance(Q, q, A, a, 0.0)
        e_glob = ellipsoid_value(probe, glob.x)
        e_lng = ellipsoid_value(probe, lng.x)
        if not e_glob > e_lng:
            continue
        a0 = 0.5 * (e_glob + e_lng)
        inst = CdtInstance(Q, q, A, a, a0, name=f"cdt_n{n}_s{seed}", meta={"n": n, "seed": seed})
        if not check_interior_assumption(inst).satisfied:
            continue
        # canonical round trip so the in-memory instance equals what is written
        return loads_instance(dumps_instance(inst))
    raise CdtError(f"instance generation failed after {max_attempts} attempts (n={n}, seed={seed})")


def _round12(x: float) -> float:
    return float(format(x, ".12g")) if math.isfinite(x) else x


@dataclass
class BenchRecord:
    instance: str
    bound: str
    lb: float
    ub: float
    rel_gap: float
    lam: float
    iterations: int
    time_ms: float
    solved: bool

    def __post_init__(self):
        for k in ("lb", "ub", "rel_gap", "lam", "time_ms"):
            setattr(self, k, _round12(float(getattr(self, k))))
        self.iterations = int(self.iterations)
        self.solved = bool(int(self.solved))

    def row(self) -> list:
        g = lambda x: format(x, ".12g")
        return [self.instance, self.bound, g(self.lb), g(self.ub), g(self.rel_gap), g(self.lam),
                str(self.iterations), g(self.time_ms), "1" if self.solved else "0"]


@dataclass
class BenchResult:
    records: list
    aggregates: dict
    failures: list = field(default_factory=list)


def _solve_one(args) -> tuple:
    inst, selection, eps, tol = args
    try:
        res = run_pipeline(inst, selection, eps=eps, tol=tol)
    except (CdtError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return inst.name, None, f"{type(exc).__name__}: {exc}"
    recs = []
    for b in selection:
        rep = res.reports[b]
        cert = res.certificates[b]
        recs.append(BenchRecord(inst.name, b, rep.lb, res.ub, cert.rel_gap, rep.final_lambda,
                                rep.iterations, 1000.0 * res.cumulative_time[b], cert.solved))
    return inst.name, recs, None


def aggregate(records: Sequence[BenchRecord]) -> dict:
    """Per-bound summary; gaps of the two-cut bounds are averaged over their unsolved instances,
    and the twoopt time over instances twocut left unsolved."""
    by_bound = {}
    for r in records:
        by_bound.setdefault(r.bound, []).append(r)
    twocut_solved = {r.instance for r in by_bound.get("twocut", []) if r.solved}
    out = {}
    for b in BOUND_NAMES:
        rs = by_bound.get(b)
        if not rs:
            continue
        gaps = [r.rel_gap for r in rs]
        gap_pool = [r.rel_gap for r in rs if not r.solved] if b in ("twocut", "twoopt") else gaps
        times = [r.time_ms for r in rs]
        time_pool = [r.time_ms for r in rs if r.instance not in twocut_solved] if b == "twoopt" else times
        out[b] = {
            "count": len(rs),
            "solved": sum(r.solved for r in rs),
            "avg_gap": math.fsum(gap_pool) / len(gap_pool) if gap_pool else 0.0,
            "max_gap": max(gaps),
            "avg_time_ms": math.fsum(time_pool) / len(time_pool) if time_pool else 0.0,
            "max_time_ms": max(times),
        }
    return out


def benchmark_run(instances: Iterable[CdtInstance], selection: Sequence[str] = BOUND_NAMES,
                  eps: Optional[float] = None, tol: Optional[float] = None,
                  jobs: int = 1) -> BenchResult:
    instances = list(instances)
    if not instances:
        raise ValueError("no instances to run")
    selection = [b for b in BOUND_NAMES if b in set(selection)]
    if not selection:
        raise ValueError("empty bound selection")
    pipeline_order(selection)
    tasks = [(inst, selection, eps, tol) for inst in instances]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_one, tasks))
    else:
        results = [_solve_one(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    records, failures = [], []
    for name, recs, err in results:
        if err is not None:
            log.warning("instance %s failed: %s", name, err)
            failures.append((name, err))
        else:
            records.extend(recs)
    return BenchResult(records, aggregate(records), failures)


def write_report(result: BenchResult, path) -> Path:
    """Write the record CSV and a ``<stem>.summary.csv`` next to it; returns the summary path."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in result.records:
            w.writerow(r.row())
    summary = path.with_name(path.stem + ".summary.csv")
    with summary.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for b, agg in result.aggregates.items():
            w.writerow([b, agg["count"], agg["solved"]] +
                       [format(agg[k], ".12g") for k in SUMMARY_HEADER[3:]])
    return summary


def read_report(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [BenchRecord(r["instance"], r["bound"], float(r["lb"]), float(r["ub"]), float(r["rel_gap"]),
                        float(r["lambda"]), int(r["iterations"]), float(r["time_ms"]), int(r["solved"]))
            for r in rows]


def read_summary(path) -> dict:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for r in rows:
        out[r["bound"]] = {"count": int(r["count"]), "solved": int(r["solved"]),
                           **{k: float(r[k]) for k in SUMMARY_HEADER[3:]}}
    return out


def instance_files(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError(f"{directory} is not a readable directory")
    return sorted(p for p in directory.iterdir() if p.suffix == ".json")


def default_jobs() -> int:
    return os.cpu_count() or 1


__all__ = [
    "BenchRecord", "BenchResult", "aggregate", "benchmark_run", "dumps_instance", "generate_instance",
    "instance_files", "loads_instance", "read_instance", "read_report", "read_summary",
    "write_instance", "write_report", "asdict",
]
