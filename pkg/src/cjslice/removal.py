"""Spurious Ritz value removal: the refined rank-based approach and two baselines.

Indices in a :class:`RemovalReport` refer to positions in the set that was
filtered: the refined set for ``refined`` mode, the potential Ritz pairs
for ``residual`` and ``tsvd`` modes.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .filters import Window
from .linalg import SparseHermitian, dense_svd, hermitian_eig
from .projection import ReducedPencil, RefinedSet, RitzSet, _phase_fix, rayleigh_ritz, select_potential

CLUSTER_GATE = 1e-3


@dataclass
class ClusterPartition:
    clusters: list[list[int]]
    active: np.ndarray  # per index: passed the relative-residual gate

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def cluster_of(self) -> np.ndarray:
        lab = np.empty(self.active.size, dtype=int)
        for ci, members in enumerate(self.clusters):
            lab[members] = ci
        return lab


def _components(n: int, edges) -> list[list[int]]:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def cluster_refined(refined: RefinedSet, kappa: float = 1.0, gate: float = CLUSTER_GATE) -> ClusterPartition:
    """Connected components of ``|l_i - l_j| <= kappa (||r_i|| + ||r_j||)``.

    Only indices whose relative residual is at most ``gate`` take part;
    the others stay singletons.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    lam = refined.ref_values
    res = refined.resnorms
    active = refined.relres <= gate
    idx = np.flatnonzero(active)
    edges = []
    for a in range(idx.size):
        i = idx[a]
        for j in idx[a + 1:]:
            if abs(lam[i] - lam[j]) <= kappa * (res[i] + res[j]):
                edges.append((i, j))
    clusters = _components(lam.size, edges)
    clusters.sort(key=lambda c: (float(np.min(lam[c])), c[0]))
    return ClusterPartition(clusters, active)


@dataclass
class GapEstimate:
    gaps: np.ndarray
    fallback: np.ndarray
    unavailable: np.ndarray


def gap_estimates(partition: ClusterPartition, refined: RefinedSet, exterior=None) -> GapEstimate:
    """Distance from each refined value to the refined values of other clusters.

    With a single cluster the nearest value in ``exterior`` (Ritz values
    outside the window) is used instead, and flagged; with none available
    the gap is NaN and flagged unavailable.
    """
    lam = refined.ref_values
    n = lam.size
    gaps = np.full(n, np.nan)
    fallback = np.zeros(n, dtype=bool)
    unavailable = np.zeros(n, dtype=bool)
    labels = partition.cluster_of()
    ext = np.asarray([] if exterior is None else exterior, dtype=float)
    for i in range(n):
        others = lam[labels != labels[i]]
        if others.size:
            gaps[i] = np.min(np.abs(others - lam[i]))
        elif ext.size:
            gaps[i] = np.min(np.abs(ext - lam[i]))
            fallback[i] = True
        else:
            unavailable[i] = True
    return GapEstimate(gaps, fallback, unavailable)


@dataclass
class RemovalReport:
    mode: str
    retained: list[int]
    removed: list[int]
    clusters: list[list[int]] = field(default_factory=list)
    singular_values: list[list[float]] = field(default_factory=list)
    thresholds: list[float] = field(default_factory=list)
    gaps: list[float] = field(default_factory=list)
    gap_fallback: list[int] = field(default_factory=list)
    skipped_clusters: list[int] = field(default_factory=list)
    unconverged: list[int] = field(default_factory=list)
    multiplicities: list[int] = field(default_factory=list)
    block_clusters: list[int] = field(default_factory=list)
    basis_dim: int | None = None
    ritz: RitzSet | None = field(default=None, repr=False)

    @property
    def n_in(self) -> int:
        return len(self.retained)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "n_in": self.n_in,
            "retained": list(map(int, self.retained)),
            "removed": list(map(int, self.removed)),
        }
        if self.mode == "refined":
            out.update(
                clusters=[list(map(int, c)) for c in self.clusters],
                singular_values=self.singular_values,
                thresholds=[None if math.isnan(t) else t for t in self.thresholds],
                gaps=[None if math.isnan(g) else g for g in self.gaps],
                gap_fallback=self.gap_fallback,
                skipped_clusters=self.skipped_clusters,
                unconverged=self.unconverged,
                multiplicities=self.multiplicities,
                block_clusters=self.block_clusters,
            )
        if self.basis_dim is not None:
            out["basis_dim"] = int(self.basis_dim)
        return out


def refined_removal(partition: ClusterPartition, refined: RefinedSet, C: float = 1.0,
                    exterior=None) -> RemovalReport:
    """Keep, per cluster, as many refined vectors as the numerical rank of ``Z_i``.

    The rank threshold is ``sqrt(n_i) * max_j C ||r_ij|| / g_ij``. Within a
    cluster the vectors with the smallest residual norms are kept.
    """
    gap = gap_estimates(partition, refined, exterior)
    retained: list[int] = []
    removed: list[int] = []
    svals: list[list[float]] = []
    thresholds: list[float] = []
    skipped: list[int] = []
    unconverged: list[int] = []
    res = refined.resnorms
    for ci, members in enumerate(partition.clusters):
        members = sorted(members, key=lambda i: (res[i], refined.ref_values[i], i))
        if not all(partition.active[members]):
            # only singletons can be inactive
            retained.extend(members)
            unconverged.extend(members)
            svals.append([])
            thresholds.append(math.nan)
            continue
        if np.any(gap.unavailable[members]):
            retained.extend(members)
            skipped.append(ci)
            svals.append([])
            thresholds.append(math.nan)
            continue
        Z = refined.prim_refined[:, members]
        s = dense_svd(Z)[1]
        tau = math.sqrt(len(members)) * float(np.max(C * res[members] / gap.gaps[members]))
        rank = int(np.count_nonzero(s > tau))
        retained.extend(members[:rank])
        removed.extend(members[rank:])
        svals.append([float(x) for x in s])
        thresholds.append(tau)
    kept = set(retained)
    return RemovalReport(
        "refined", sorted(retained), sorted(removed),
        clusters=[list(c) for c in partition.clusters],
        singular_values=svals, thresholds=thresholds,
        gaps=[float(g) for g in gap.gaps],
        gap_fallback=[int(i) for i in np.flatnonzero(gap.fallback)],
        skipped_clusters=skipped, unconverged=sorted(unconverged),
        multiplicities=[sum(1 for i in c if i in kept) for c in partition.clusters],
    )


def resolve_multiplicity(report: RemovalReport, refined: RefinedSet, pencil: ReducedPencil, U, AU,
                         exterior=None) -> tuple[RemovalReport, RefinedSet]:
    """Recover multiple eigenvalues that the rank test undercounts.

    Refined vectors computed for nearly equal shifts all land on the same
    best-approximated direction of a multiple eigenvalue, so ``Z_i`` loses
    rank although the subspace holds the whole eigenspace. For every cluster
    of size ``n >= 2`` this counts the singular values of ``H - mu J``
    (``mu`` the refined value with the smallest residual) among its ``n``
    smallest that lie below ``sqrt(tau) * gap``, a level halfway (on a log
    scale) between the residual scale ``tau * gap`` and the gap. ``gap`` is
    the distance from ``mu`` to the nearest Ritz value outside the cluster.
    When that count is at least 2 and not below the rank of ``Z_i``, the
    cluster is replaced by the Rayleigh-Ritz pairs of the corresponding
    orthonormal block of right singular vectors.
    """
    clusters = report.clusters
    if not clusters:
        return report, refined
    ext = np.asarray([] if exterior is None else exterior, dtype=float)
    Z = refined.prim_refined.copy()
    X = refined.vectors.copy()
    lam = refined.ref_values.copy()
    Rres = refined.residuals.copy()
    rnorm = refined.resnorms.copy()
    retained = set(report.retained)
    mult = list(report.multiplicities)
    blocks: list[int] = []
    labels = np.empty(lam.size, dtype=int)
    for ci, members in enumerate(clusters):
        labels[members] = ci
    for ci, members in enumerate(clusters):
        tau = report.thresholds[ci]
        n_hat = len(members)
        if n_hat < 2 or not math.isfinite(tau) or tau >= 1.0:
            continue
        order = sorted(members, key=lambda i: (rnorm[i], lam[i], i))
        mu = lam[order[0]]
        others = np.concatenate([ext, refined.base_values[labels != ci]])
        if others.size == 0:
            continue
        gap = float(np.min(np.abs(others - mu)))
        level = math.sqrt(tau) * gap
        _, s, Vh = dense_svd(pencil.H - mu * pencil.J, full_matrices=True)
        p = pencil.dim
        sig = np.zeros(p)
        sig[: s.size] = s
        small = sig[p - n_hat:][::-1]  # ascending
        m = int(np.count_nonzero(small <= level))
        rank = sum(1 for i in members if i in retained)
        if m < 2 or m < rank:
            continue
        W = Vh[p - m:][::-1].conj().T
        AUW = AU @ W
        XW = U @ W
        vals, Y = hermitian_eig(XW.conj().T @ AUW)
        keep = order[:m]
        for j, idx in enumerate(keep):
            z = W @ Y[:, j]
            x = XW @ Y[:, j]
            ph = _phase_fix(x)
            z, x = z * ph, x * ph
            r = AUW @ (Y[:, j] * ph) - vals[j] * x
            Z[:, idx], X[:, idx], lam[idx] = z, x, vals[j]
            Rres[:, idx], rnorm[idx] = r, np.linalg.norm(r)
        retained.difference_update(members)
        retained.update(keep)
        mult[ci] = m
        blocks.append(ci)
    if not blocks:
        return report, refined
    all_idx = set(report.retained) | set(report.removed)
    new_report = dataclasses.replace(
        report, retained=sorted(retained), removed=sorted(all_idx - retained),
        multiplicities=mult, block_clusters=blocks,
    )
    new_set = dataclasses.replace(refined, prim_refined=Z, vectors=X, ref_values=lam,
                                  residuals=Rres, resnorms=rnorm)
    return new_report, new_set


def tsvd_removal(S, A: SparseHermitian, window: Window, trunc_tol: float = 1e-12) -> RemovalReport:
    """Rayleigh-Ritz on the truncated left singular basis of the raw moment block.

    Every Ritz value in the window is retained. The Ritz set is attached to
    the report; retained indices are positions in its potential list.
    """
    if trunc_tol < 0:
        raise ValueError("trunc_tol must be nonnegative")
    Usv, s, _ = dense_svd(np.asarray(S))
    keep = s.size if trunc_tol == 0 else int(np.count_nonzero(s > trunc_tol * s[0]))
    ritz = rayleigh_ritz(A, Usv[:, :keep])
    pot = select_potential(ritz, window)
    return RemovalReport("tsvd", list(range(pot.size)), [], basis_dim=keep, ritz=ritz)


def residual_removal(ritz: RitzSet, window: Window, A: SparseHermitian, delta: float = 1e-4,
                     norm_a: float | None = None) -> RemovalReport:
    """Keep potential Ritz pairs whose relative residual is below ``delta``.

    The default norm is ``sqrt(||A||_1 ||A||_inf)``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if norm_a is None:
        norm_a = A.norm_est
    pot = select_potential(ritz, window)
    rel = ritz.residual_norms(A)[pot] / norm_a
    keep = np.flatnonzero(rel < delta)
    drop = np.flatnonzero(rel >= delta)
    return RemovalReport("residual", keep.tolist(), drop.tolist(), ritz=ritz)
