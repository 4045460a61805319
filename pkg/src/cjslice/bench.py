"""Experiment harness: restart-by-restart diagnostics against reference eigenvectors.

An experiment is a list of problems (matrix + windows), a list of solver
configurations and a list of seeds. Every (problem, window, config, seed)
combination is one run; every outer iteration of a run produces one
:class:`DiagnosticsRow`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la

from .linalg import SparseHermitian, estimate_bounds, hermitian_eig
from .mmio import load_matrix_market
from .solver import RestartInfo, SolverConfig, solve
from .synthetic import make_spectrum, synthetic_spectrum

log = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = (
    "problem", "a", "b", "config", "mode", "seed", "restart",
    "eps_ev", "n_in", "n_ev", "n_potential", "kappa_xhat", "sin_xhat",
    "max_relres", "converged", "status",
    "t_moments", "t_qr", "t_projection", "t_removal", "t_wall",
)
TIMING_COLUMNS = ("t_moments", "t_qr", "t_projection", "t_removal", "t_wall")


def _orthonormal(X: np.ndarray) -> np.ndarray:
    Q, _ = la.qr(X, mode="economic")
    return Q


def subspace_deviation(U, X_ref, orthonormalize: bool = True) -> float:
    """``||(I - U U^H) X_ref||_2``: sine of the largest angle from ``range(X_ref)`` to ``range(U)``.

    Evaluated from the projected-out block rather than ``sqrt(1 - sigma_min^2)``
    so that tiny deviations keep full relative accuracy.
    """
    U = np.asarray(U)
    X = np.asarray(X_ref)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] == 0:
        return 0.0
    if orthonormalize:
        X = _orthonormal(X)
    W = X - U @ (U.conj().T @ X)
    W = W - U @ (U.conj().T @ W)
    eps = float(np.linalg.norm(W, 2))
    return min(1.0, max(0.0, eps))


def subspace_deviation_cosine(U, X_ref) -> float:
    """Same quantity as ``sqrt(1 - sigma_min(U^H X)^2)``; loses accuracy below ~1e-8."""
    X = _orthonormal(np.asarray(X_ref))
    s = la.svdvals(np.asarray(U).conj().T @ X)
    smin = float(min(1.0, s.min())) if s.size == X.shape[1] else 0.0
    return math.sqrt(max(0.0, 1.0 - smin * smin))


def condition_number(X) -> float:
    s = la.svdvals(np.asarray(X))
    if s.size == 0:
        return math.nan
    return math.inf if s[-1] == 0 else float(s[0] / s[-1])


def subspace_angle_sine(X_hat, X_ref) -> float:
    """``sin angle(range(X_hat), range(X_ref))`` for equal-dimensional spaces."""
    X_hat = np.asarray(X_hat)
    if X_hat.shape[1] == 0 or np.asarray(X_ref).shape[1] == 0:
        return math.nan
    return subspace_deviation(_orthonormal(X_hat), X_ref)


@dataclass
class DiagnosticsRow:
    problem: str
    a: float
    b: float
    config: str
    mode: str
    seed: int
    restart: int
    eps_ev: float = math.nan
    n_in: int = -1
    n_ev: int = -1
    n_potential: int = -1
    kappa_xhat: float = math.nan
    sin_xhat: float = math.nan
    max_relres: float = math.nan
    converged: bool = False
    status: str = "ok"
    t_moments: float = 0.0
    t_qr: float = 0.0
    t_projection: float = 0.0
    t_removal: float = 0.0
    t_wall: float = 0.0

    def as_row(self) -> dict:
        return {c: getattr(self, c) for c in DIAGNOSTIC_COLUMNS}


@dataclass
class ProblemSpec:
    name: str
    windows: list[tuple[float, float]]
    path: str | None = None
    synthetic: dict | None = None

    def __post_init__(self) -> None:
        if (self.path is None) == (self.synthetic is None):
            raise ValueError(f"problem {self.name!r}: give exactly one of 'path' or 'synthetic'")
        if not self.windows:
            raise ValueError(f"problem {self.name!r}: no windows")
        self.windows = [(float(a), float(b)) for a, b in self.windows]


@dataclass
class ExperimentSpec:
    problems: list[ProblemSpec]
    configs: dict[str, dict]
    seeds: list[int]
    name: str = "experiment"
    bounds_margin: float = 0.01
    lanczos_iters: int = 80
    use_true_count: bool = True
    workers: int = 1
    outputs: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.configs:
            raise ValueError("experiment needs at least one solver config")
        if not self.problems:
            raise ValueError("experiment needs at least one problem")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ValueError("seeds must be a nonempty list of distinct integers")
        for name, cfg in self.configs.items():
            bad = {"window", "seed"} & set(cfg)
            if bad:
                raise ValueError(f"config {name!r} must not set {sorted(bad)}; they come from the run matrix")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        data["problems"] = [ProblemSpec(**p) for p in data["problems"]]
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class LoadedProblem:
    name: str
    A: SparseHermitian
    eigenvalues: np.ndarray | None
    eigenvectors: object | None

    def reference(self, a: float, b: float):
        if self.eigenvalues is None:
            return None, None
        idx = np.flatnonzero((self.eigenvalues >= a) & (self.eigenvalues <= b))
        X = self.eigenvectors[:, idx]
        if hasattr(X, "toarray"):
            X = X.toarray()
        return self.eigenvalues[idx], np.asarray(X)


def build_synthetic(gen: dict):
    """Instantiate a synthetic problem from its JSON description.

    Keys: ``n``, ``lo``, ``hi``, optional ``kind``, ``spectrum_seed``,
    ``doubles``, ``clusters``, ``pinned``, ``basis``, ``block``, ``seed``,
    ``complex``.
    """
    n = int(gen["n"])
    lam = make_spectrum(
        n, float(gen.get("lo", -1.0)), float(gen.get("hi", 1.0)),
        seed=int(gen.get("spectrum_seed", 0)), kind=gen.get("kind", "uniform"),
        doubles=gen.get("doubles", ()), clusters=[tuple(c) for c in gen.get("clusters", ())],
        pinned=gen.get("pinned", ()),
    )
    return synthetic_spectrum(n, lam, seed=int(gen.get("seed", 0)), basis=gen.get("basis", "banded"),
                              block=int(gen.get("block", 8)), complex_=bool(gen.get("complex", False)))


def load_problem(spec: ProblemSpec, dense_reference_limit: int = 5000) -> LoadedProblem:
    if spec.synthetic is not None:
        prob = build_synthetic(spec.synthetic)
        return LoadedProblem(spec.name, prob.A, prob.eigenvalues, prob.eigenvectors)
    A = load_matrix_market(spec.path)
    if A.n <= dense_reference_limit:
        lam, X = hermitian_eig(A.toarray())
        return LoadedProblem(spec.name, A, lam, X)
    log.warning("%s: n=%d too large for a dense reference; eps_ev will be NaN", spec.name, A.n)
    return LoadedProblem(spec.name, A, None, None)


def _row_from_info(info: RestartInfo, base: dict, X_ref, n_ev: int, t_wall: float) -> DiagnosticsRow:
    row = DiagnosticsRow(**base, restart=info.k)
    row.n_in = info.status.count
    row.n_ev = n_ev
    row.n_potential = int(info.potential.size)
    row.max_relres = info.status.max_relres
    row.converged = info.status.converged
    if X_ref is not None:
        row.eps_ev = subspace_deviation(info.moments.U, X_ref, orthonormalize=False)
    if info.vectors.shape[1]:
        row.kappa_xhat = condition_number(info.vectors)
        if X_ref is not None and info.vectors.shape[1] == X_ref.shape[1]:
            row.sin_xhat = subspace_angle_sine(info.vectors, X_ref)
    for key in ("moments", "qr", "projection", "removal"):
        setattr(row, f"t_{key}", float(info.timings.get(key, 0.0)))
    row.t_wall = t_wall
    return row


def run_single(problem: LoadedProblem, bounds, window, cfg_name: str, cfg: dict, seed: int,
               use_true_count: bool = True) -> tuple[list[DiagnosticsRow], dict]:
    """One solver run with per-restart diagnostics. Failures become an error row."""
    a, b = window
    lam_ref, X_ref = problem.reference(a, b)
    n_ev = -1 if lam_ref is None else int(lam_ref.size)
    options = dict(cfg)
    if use_true_count and n_ev >= 0 and "n_target" not in options:
        options["n_target"] = n_ev
    base = {"problem": problem.name, "a": a, "b": b, "config": cfg_name,
            "mode": options.get("mode", "rrr"), "seed": seed}
    rows: list[DiagnosticsRow] = []
    clock = [time.perf_counter()]

    def cb(info: RestartInfo) -> None:
        now = time.perf_counter()
        rows.append(_row_from_info(info, base, X_ref, n_ev, now - clock[0]))
        clock[0] = time.perf_counter()

    try:
        config = SolverConfig(window=window, seed=seed, **options)
        rep = solve(problem.A, bounds, config, callback=cb)
    except Exception as exc:  # harness keeps going
        log.exception("run %s/%s seed %d failed", problem.name, cfg_name, seed)
        rows.append(DiagnosticsRow(**base, restart=0, status=f"error: {type(exc).__name__}: {exc}"))
        return rows, {"converged": False, "converged_at": None, "error": str(exc)}
    return rows, {"converged": rep.converged, "converged_at": rep.converged_at,
                  "restarts": rep.restarts, "n_pairs": rep.n_pairs, "degree": rep.degree, "ell": rep.ell}


def _run_problem(spec: ExperimentSpec, pspec: ProblemSpec):
    problem = load_problem(pspec)
    bounds = estimate_bounds(problem.A, spec.bounds_margin, spec.lanczos_iters, seed=0)
    rows: list[DiagnosticsRow] = []
    runs: list[dict] = []
    for window in pspec.windows:
        for cfg_name, cfg in spec.configs.items():
            for seed in spec.seeds:
                r, meta = run_single(problem, bounds, window, cfg_name, cfg, seed, spec.use_true_count)
                rows.extend(r)
                runs.append({"problem": pspec.name, "a": window[0], "b": window[1],
                             "config": cfg_name, "seed": seed, **meta})
    return rows, runs


def _summarize(rows: list[DiagnosticsRow], runs: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for run in runs:
        groups.setdefault((run["problem"], run["a"], run["b"], run["config"]), []).append(run)
    out = []
    for (prob, a, b, cfg), rs in groups.items():
        conv = [r["converged_at"] for r in rs if r.get("converged_at") is not None]
        sel = [row for row in rows if (row.problem, row.a, row.b, row.config) == (prob, a, b, cfg)
               and row.status == "ok"]
        mism = [row.eps_ev for row in sel if row.n_in != row.n_ev and not math.isnan(row.eps_ev)]
        viol = [row for row in sel if row.n_in != row.n_ev and row.eps_ev <= 1e-3]
        out.append({
            "problem": prob, "a": a, "b": b, "config": cfg,
            "runs": len(rs),
            "converged_runs": len(conv),
            "avg_restarts": float(np.mean(conv)) if conv else None,
            "min_eps_ev_with_mismatch": float(min(mism)) if mism else None,
            "mismatches_below_1e-3": len(viol),
            "points": len(sel),
        })
    return out


def run_experiment(spec: ExperimentSpec) -> tuple[list[DiagnosticsRow], list[dict], list[dict]]:
    """Execute every run of ``spec``; returns (rows, per-run metadata, summary)."""
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            parts = list(pool.map(_run_problem, [spec] * len(spec.problems), spec.problems))
    else:
        parts = [_run_problem(spec, p) for p in spec.problems]
    rows = [r for part in parts for r in part[0]]
    runs = [r for part in parts for r in part[1]]
    return rows, runs, _summarize(rows, runs)


def rows_to_csv(rows: list[DiagnosticsRow], include_timing: bool = True) -> str:
    cols = [c for c in DIAGNOSTIC_COLUMNS if include_timing or c not in TIMING_COLUMNS]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        d = row.as_row()
        writer.writerow({c: d[c] for c in cols})
    return buf.getvalue()


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_json_safe(v) for v in x]
    return x


def experiment_json(rows, runs, summary) -> str:
    return json.dumps(_json_safe({
        "columns": list(DIAGNOSTIC_COLUMNS),
        "rows": [r.as_row() for r in rows],
        "runs": runs,
        "summary": summary,
    }), indent=1)


def write_outputs(spec: ExperimentSpec, rows, runs, summary, csv_path=None, json_path=None) -> None:
    csv_path = csv_path or spec.outputs.get("csv")
    json_path = json_path or spec.outputs.get("json")
    if csv_path:
        Path(csv_path).write_text(rows_to_csv(rows))
    if json_path:
        Path(json_path).write_text(experiment_json(rows, runs, summary))


def config_variant(cfg: dict, **changes) -> dict:
    out = dict(cfg)
    out.update(changes)
    return out


__all__ = [
    "DIAGNOSTIC_COLUMNS", "DiagnosticsRow", "ExperimentSpec", "ProblemSpec", "LoadedProblem",
    "condition_number", "experiment_json", "load_problem", "rows_to_csv", "run_experiment",
    "run_single", "subspace_angle_sine", "subspace_deviation", "subspace_deviation_cosine",
    "write_outputs", "build_synthetic", "config_variant", "desk_suite",
]


def desk_suite() -> list[ProblemSpec]:
    """Five synthetic problems (n = 500..2000) with interior and near-edge windows.

    One carries an exactly double eigenvalue and one a pair 1e-8 apart,
    both inside their windows. Window edges stay well away from eigenvalues.
    """
    def gen(n, seed, **kw):
        return {"n": n, "lo": -1.0, "hi": 1.0, "spectrum_seed": 10 + seed, "seed": seed, **kw}

    return [
        ProblemSpec("interior-500", [(0.1, 0.2)], synthetic=gen(500, 1)),
        ProblemSpec("double-1000", [(0.08, 0.15)], synthetic=gen(1000, 2, doubles=[0.1032])),
        ProblemSpec("cluster-1000", [(-0.3, -0.24)], synthetic=gen(1000, 3, clusters=[[-0.27, 1e-8]])),
        ProblemSpec("edge-1500", [(-0.999, -0.94)], synthetic=gen(1500, 4)),
        ProblemSpec("interior-2000", [(0.5, 0.53)], synthetic=gen(2000, 5)),
    ]
