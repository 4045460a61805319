"""Restarted CJ-SS-RR and CJ-SS-RRR interval eigensolvers."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .filters import (
    FilterPlan,
    MomentBlock,
    Window,
    build_moments,
    degree_heuristic,
    estimate_eigencount,
    map_window,
)
from .linalg import SparseHermitian, SpectralBounds, block_matvec
from .projection import (
    RefinedSet,
    RitzSet,
    build_reduced_pencil,
    rayleigh_ritz,
    refine_set,
    select_potential,
)
from .removal import (
    RemovalReport,
    cluster_refined,
    refined_removal,
    residual_removal,
    resolve_multiplicity,
    tsvd_removal,
)

log = logging.getLogger(__name__)

MODES = ("rrr", "rr-residual", "rr-tsvd")
# "auto": bounds-based norm for rrr, sqrt(|A|_1 |A|_inf) for the rr modes
NORMS = ("auto", "bounds", "sqrt")


@dataclass
class SolverConfig:
    window: tuple[float, float]
    M: int = 8
    ell: int | None = None
    degree: int | None = None
    D: float = 2.0
    K: float = 5.0
    tol: float = 1e-12
    mode: str = "rrr"
    delta: float = 1e-4
    trunc_tol: float = 1e-12
    C: float = 1.0
    kappa: float = 1.0
    max_restarts: int = 10
    seed: int = 0
    n_target: int | None = None
    eigencount_samples: int = 100
    oversample: float = 1.5
    refined_method: str = "qr"
    multiplicity: str = "block"
    norm: str = "auto"
    stop_on_convergence: bool = True

    def __post_init__(self) -> None:
        a, b = self.window
        self.window = (float(a), float(b))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.ell is not None and self.ell < 1:
            raise ValueError("ell must be at least 1")
        if self.multiplicity not in ("block", "off"):
            raise ValueError("multiplicity must be 'block' or 'off'")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be at least 1")
        if not 1 <= self.D <= 8 or not 1 <= self.K <= 10:
            log.warning("degree heuristic constants outside the usual ranges D in [1,8], K in [1,10]")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["window"] = list(self.window)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ConvergenceStatus:
    converged: bool
    count: int
    n_target: int
    max_relres: float
    anomaly: str | None = None


def convergence_test(resnorms, norm_a: float, tol: float, n_target: int) -> ConvergenceStatus:
    """Converged iff exactly ``n_target`` pairs are retained and all have relres < tol.

    Retaining more than ``n_target`` pairs is reported as an over-count anomaly.
    """
    rel = np.asarray(resnorms, dtype=float) / norm_a
    count = rel.size
    max_rel = float(rel.max()) if count else 0.0
    all_small = bool(np.all(rel < tol))
    anomaly = None
    if count > n_target:
        anomaly = "over-count"
    converged = count == n_target and all_small
    return ConvergenceStatus(converged, count, n_target, max_rel, anomaly)


def restart_matrix(moments: MomentBlock) -> np.ndarray:
    """Next starting block: the first ``ell`` columns of ``S``, i.e. ``S_0``."""
    return moments.moment(0).copy()


@dataclass
class RestartInfo:
    """Everything computed in one outer iteration, passed to callbacks."""

    k: int
    moments: MomentBlock
    ritz: RitzSet
    potential: np.ndarray
    refined: RefinedSet | None
    report: RemovalReport
    values: np.ndarray
    vectors: np.ndarray
    relres: np.ndarray
    status: ConvergenceStatus
    timings: dict


@dataclass
class SolveReport:
    values: np.ndarray
    vectors: np.ndarray
    relres: np.ndarray
    converged: bool
    converged_at: int | None
    restarts: int
    n_target: int
    n_target_source: str
    degree: int
    ell: int
    norm_a: float
    norm_convention: str
    bounds: SpectralBounds
    config: SolverConfig
    trace: list[dict] = field(default_factory=list)
    removal_history: list[dict] = field(default_factory=list)
    anomalies: list[str] = field(default_factory=list)
    eigencount: dict | None = None
    timings: dict = field(default_factory=dict)

    @property
    def n_pairs(self) -> int:
        return int(self.values.size)

    def to_dict(self, include_vectors: bool = False, include_timing: bool = True) -> dict:
        out = {
            "converged": self.converged,
            "converged_at": self.converged_at,
            "restarts": self.restarts,
            "n_pairs": self.n_pairs,
            "n_target": self.n_target,
            "n_target_source": self.n_target_source,
            "eigenvalues": [float(v) for v in self.values],
            "relres": [float(r) for r in self.relres],
            "degree": self.degree,
            "ell": self.ell,
            "norm_a": self.norm_a,
            "norm_convention": self.norm_convention,
            "bounds": self.bounds.to_dict(),
            "config": self.config.to_dict(),
            "anomalies": list(self.anomalies),
            "eigencount": self.eigencount,
            "trace": [dict(r) for r in self.trace],
            "removal_history": self.removal_history,
        }
        if include_vectors:
            vec = self.vectors
            if np.iscomplexobj(vec):
                out["vectors"] = {"real": vec.real.T.tolist(), "imag": vec.imag.T.tolist()}
            else:
                out["vectors"] = vec.T.tolist()
        if include_timing:
            out["timings"] = self.timings
        else:
            for row in out["trace"]:
                for key in [k for k in row if k.startswith("t_")]:
                    del row[key]
        return out

    def to_json(self, include_vectors: bool = False, include_timing: bool = True, **kw) -> str:
        return json.dumps(self.to_dict(include_vectors, include_timing), **kw)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        if self.trace:
            writer = csv.DictWriter(buf, fieldnames=list(self.trace[0]))
            writer.writeheader()
            writer.writerows(self.trace)
        return buf.getvalue()


def _start_block(n: int, ell: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, ell))


def _setup(A: SparseHermitian, bounds: SpectralBounds, config: SolverConfig):
    window = map_window(bounds, *config.window)
    d = config.degree if config.degree is not None else degree_heuristic(window, config.M, config.D, config.K)
    d = max(d, config.M - 1, 1)
    eig = None
    if config.n_target is not None:
        n_target, source = int(config.n_target), "user"
    else:
        eig = estimate_eigencount(A, bounds, window, d, config.eigencount_samples, config.seed)
        n_target, source = eig.count, "estimate"
    return window, d, n_target, source, eig


def _choose_ell(config: SolverConfig, n_target: int, n: int) -> int:
    if config.ell is not None:
        ell = config.ell
        if config.M * ell < n_target:
            raise ValueError(f"M*ell = {config.M * ell} is smaller than the target count {n_target}")
    else:
        ell = max(1, math.ceil(config.oversample * n_target / config.M))
    if config.M * ell > n:
        raise ValueError(f"subspace dimension M*ell = {config.M * ell} exceeds n = {n}")
    return ell


def solve(A: SparseHermitian, bounds: SpectralBounds, config: SolverConfig, V0=None,
          callback: Callable[[RestartInfo], None] | None = None) -> SolveReport:
    """Run the restarted solver selected by ``config.mode``.

    ``V0`` overrides the seeded standard-normal starting block. ``callback``
    is invoked after every outer iteration.
    """
    t_start = time.perf_counter()
    window, d, n_target, source, eig = _setup(A, bounds, config)
    rrr = config.mode == "rrr"
    if config.norm == "bounds" or (config.norm == "auto" and rrr):
        norm_a, norm_conv = bounds.norm, "max-abs-bounds"
    else:
        norm_a, norm_conv = A.norm_est, "sqrt-norm1-norminf"
    eig_dict = None if eig is None else dataclasses.asdict(eig)

    def report(values, vectors, relres, converged, converged_at, restarts, ell, trace, hist, anomalies):
        return SolveReport(values, vectors, relres, converged, converged_at, restarts, n_target, source,
                           d, ell, float(norm_a), norm_conv, bounds, config, trace, hist, anomalies,
                           eig_dict, {"total": time.perf_counter() - t_start})

    if n_target == 0 and V0 is None:
        empty = np.zeros((A.n, 0))
        return report(np.zeros(0), empty, np.zeros(0), True, 0, 0, 0, [], [],
                      ["empty-window"])

    if V0 is None:
        ell = _choose_ell(config, n_target, A.n)
        V = _start_block(A.n, ell, config.seed)
    else:
        V = np.asarray(V0)
        if V.ndim == 1:
            V = V[:, None]
        ell = V.shape[1]
        if config.M * ell > A.n:
            raise ValueError(f"subspace dimension M*ell = {config.M * ell} exceeds n = {A.n}")

    plan = FilterPlan.build(window, config.M, d)
    trace: list[dict] = []
    hist: list[dict] = []
    anomalies: list[str] = []
    converged_at = None
    last = None
    prev_count = None
    for k in range(1, config.max_restarts + 1):
        info = _iterate(A, bounds, V, plan, window, config, norm_a, k, n_target)
        status = info.status
        # An estimated target is only a guide: accept a stable, fully converged count near it.
        if (not status.converged and source == "estimate" and status.count > 0
                and status.max_relres < config.tol and status.count == prev_count
                and abs(status.count - eig.mean) <= max(1.0, 3 * eig.stderr)):
            status = dataclasses.replace(status, converged=True, anomaly="count-differs-from-estimate")
            info.status = status
        prev_count = status.count
        if status.anomaly and status.anomaly not in anomalies:
            anomalies.append(status.anomaly)
        trace.append(_trace_row(info))
        hist.append({"restart": k, **info.report.to_dict()})
        if callback is not None:
            callback(info)
        last = info
        if status.converged and converged_at is None:
            converged_at = k
            if config.stop_on_convergence:
                break
        V = restart_matrix(info.moments)
    if not last.status.converged:
        anomalies.append("not-converged")
    return report(last.values, last.vectors, last.relres, last.status.converged, converged_at,
                  last.k, ell, trace, hist, anomalies)


def _iterate(A, bounds, V, plan, window: Window, config: SolverConfig, norm_a, k, n_target) -> RestartInfo:
    moments = build_moments(A, bounds, V, plan)
    t = dict(moments.timings)
    t1 = time.perf_counter()
    U = moments.U
    AU = block_matvec(A, U)
    t2 = time.perf_counter()
    t["projection"] = t2 - t1
    ritz = rayleigh_ritz(A, U, AU)
    potential = select_potential(ritz, window)
    refined = None
    if config.mode == "rrr":
        if potential.size:
            pencil = build_reduced_pencil(A, U, AU)
            refined = refine_set(A, U, pencil, ritz.values[potential], norm_a, AU, config.refined_method)
        t3 = time.perf_counter()
        t["projection"] += t3 - t2
        if refined is None:
            rep = RemovalReport("refined", [], [])
            values = np.zeros(0)
            vectors = np.zeros((A.n, 0))
            res = np.zeros(0)
        else:
            part = cluster_refined(refined, config.kappa)
            exterior = ritz.values[~window.contains(ritz.values)]
            rep = refined_removal(part, refined, config.C, exterior)
            if config.multiplicity == "block":
                rep, refined = resolve_multiplicity(rep, refined, pencil, U, AU, exterior)
            # refined values that left the window approximate exterior eigenvalues
            lam = refined.ref_values
            inside = window.contains(lam, atol=config.tol * norm_a)
            drop = [i for i in rep.retained if not inside[i]]
            if drop:
                rep.retained = [i for i in rep.retained if inside[i]]
                rep.removed = sorted(rep.removed + drop)
            keep = np.asarray(rep.retained, dtype=int)
            values = lam[keep]
            vectors = refined.vectors[:, keep]
            res = refined.resnorms[keep]
        t["removal"] = time.perf_counter() - t3
    else:
        t3 = time.perf_counter()
        t["projection"] += t3 - t2
        if config.mode == "rr-residual":
            rep = residual_removal(ritz, window, A, config.delta, norm_a)
            keep = potential[np.asarray(rep.retained, dtype=int)]
            src = ritz
        else:
            rep = tsvd_removal(moments.S, A, window, config.trunc_tol)
            src = rep.ritz
            keep = select_potential(src, window)[np.asarray(rep.retained, dtype=int)]
        values = src.values[keep]
        vectors = src.vectors[:, keep]
        res = src.residual_norms(A)[keep]
        t["removal"] = time.perf_counter() - t3
    order = np.argsort(values, kind="stable")
    values, vectors, res = values[order], vectors[:, order], res[order]
    status = convergence_test(res, norm_a, config.tol, n_target)
    return RestartInfo(k, moments, ritz, potential, refined, rep, values, vectors, res / norm_a,
                       status, t)


def _trace_row(info: RestartInfo) -> dict:
    st = info.status
    row = {
        "restart": info.k,
        "n_potential": int(info.potential.size),
        "n_in": st.count,
        "n_target": st.n_target,
        "max_relres": st.max_relres,
        "converged": st.converged,
        "anomaly": st.anomaly or "",
        "rank_warning": info.moments.rank_warning,
    }
    for key, val in info.timings.items():
        row[f"t_{key}"] = val
    return row


def run_cjssrr(A: SparseHermitian, bounds: SpectralBounds, config: SolverConfig, **kw) -> SolveReport:
    """Restarted Rayleigh-Ritz variant; ``config.mode`` must be a baseline removal mode."""
    if config.mode == "rrr":
        raise ValueError("run_cjssrr needs mode 'rr-residual' or 'rr-tsvd'")
    return solve(A, bounds, config, **kw)


def run_cjssrrr(A: SparseHermitian, bounds: SpectralBounds, config: SolverConfig, **kw) -> SolveReport:
    """Restarted refined Rayleigh-Ritz variant with rank-based removal."""
    if config.mode != "rrr":
        config = dataclasses.replace(config, mode="rrr")
    return solve(A, bounds, config, **kw)
