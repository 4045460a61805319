"""Chebyshev-Jackson series of shifted Chebyshev-times-step functions.

The spectrum is mapped to [-1, 1] by ``l(t) = (2t - lmax - lmin) / (lmax - lmin)``.
For a window ``[a_m, b_m]`` in mapped coordinates, moment ``k`` uses the
polynomial ``p_k(t) = T_k((2t - a_m - b_m) / (b_m - a_m))`` and the series

    F_d(p_k)(t) = c_0^(k)/2 + sum_{j=1..d} rho_j c_j^(k) T_j(t)

with Jackson factors ``rho_j`` and coefficients

    c_j^(k) = 2/pi * int_{a_m}^{b_m} p_k(t) T_j(t) / sqrt(1 - t^2) dt.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import SparseHermitian, SpectralBounds, block_matvec, dense_qr

log = logging.getLogger(__name__)

_MAX_QUAD_NODES = 2**20
_GL_ORDER = 16


class WindowError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Window:
    a: float
    b: float
    a_m: float
    b_m: float

    @property
    def width(self) -> float:
        return self.b_m - self.a_m

    def contains(self, t, atol: float = 0.0):
        t = np.asarray(t)
        return (t >= self.a - atol) & (t <= self.b + atol)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "a_m": self.a_m, "b_m": self.b_m}


def map_window(bounds: SpectralBounds, a: float, b: float) -> Window:
    if bounds.is_degenerate:
        raise WindowError(
            f"degenerate spectral bounds [{bounds.lambda_min_est}, {bounds.lambda_max_est}]"
        )
    if not a < b:
        raise WindowError(f"window needs a < b, got [{a}, {b}]")
    lo, hi = bounds.lambda_min_est, bounds.lambda_max_est
    if a < lo or b > hi:
        raise WindowError(
            f"window [{a}, {b}] is not inside the spectral bounds [{lo}, {hi}]; "
            "re-estimate the bounds with a larger margin or more Lanczos steps"
        )
    span = hi - lo
    return Window(a, b, (2 * a - hi - lo) / span, (2 * b - hi - lo) / span)


def jackson_factors(d: int) -> np.ndarray:
    if d < 1:
        raise ValueError("degree must be at least 1")
    alpha = math.pi / (d + 2)
    j = np.arange(d + 1)
    return (np.sin((j + 1) * alpha) / ((d + 2) * math.sin(alpha))
            + (1 - (j + 1) / (d + 2)) * np.cos(j * alpha))


def _moment_polys(theta: np.ndarray, window: Window, M: int) -> np.ndarray:
    """``p_k(cos theta)`` for k = 0..M-1, shape (M, len(theta))."""
    s = (2 * np.cos(theta) - window.a_m - window.b_m) / (window.b_m - window.a_m)
    P = np.empty((M, theta.size))
    P[0] = 1.0
    if M > 1:
        P[1] = s
    for k in range(2, M):
        P[k] = 2 * s * P[k - 1] - P[k - 2]
    return P


def _quad_coefficients(window: Window, M: int, d: int, panels: int) -> np.ndarray:
    theta_b = math.acos(window.b_m)
    theta_a = math.acos(window.a_m)
    x, w = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = np.linspace(theta_b, theta_a, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    P = _moment_polys(nodes, window, M) * weights
    j = np.arange(d + 1)
    out = np.zeros((M, d + 1))
    chunk = max(256, 2**22 // (d + 1))
    for start in range(0, nodes.size, chunk):
        sl = slice(start, start + chunk)
        out += P[:, sl] @ np.cos(np.outer(nodes[sl], j))
    return (2 / math.pi) * out


def chebyshev_coefficients(window: Window, M: int, d: int, tol: float = 1e-13) -> np.ndarray:
    """Coefficient table ``coeff[k, j]`` for k < M, j <= d.

    Uses ``t = cos(theta)``, which removes the ``1/sqrt(1-t^2)`` weight, and
    composite Gauss-Legendre in theta with panel doubling until no
    coefficient moves by more than ``tol``.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if d < M - 1:
        raise ValueError("degree d must be at least M - 1")
    if not -1.0 <= window.a_m < window.b_m <= 1.0:
        raise WindowError(f"mapped window [{window.a_m}, {window.b_m}] is not inside [-1, 1]")
    length = math.acos(window.a_m) - math.acos(window.b_m)
    # Integrand is a trig polynomial of frequency <= d + M - 1; ~8 rad per panel.
    panels = max(2, math.ceil((d + M) * length / 8.0))
    prev = _quad_coefficients(window, M, d, panels)
    delta = math.inf
    while _GL_ORDER * panels * 2 <= _MAX_QUAD_NODES:
        panels *= 2
        cur = _quad_coefficients(window, M, d, panels)
        delta = float(np.max(np.abs(cur - prev)))
        prev = cur
        if delta <= tol:
            return cur
    raise QuadratureError(
        f"coefficient quadrature did not converge at {_MAX_QUAD_NODES} nodes; "
        f"worst coefficient change {delta:.3e}"
    )


def degree_heuristic(window: Window, M: int, D: float = 2.0, K: float = 5.0) -> int:
    w = window.width
    if w <= 0:
        raise WindowError("mapped window width must be positive")
    val = D * math.pi**2 / w ** (4 / 3) + math.pi**2 * (M - 1) ** 2 / (K**2 * w)
    return max(3, math.ceil(val) - 2)


@dataclass
class FilterPlan:
    d: int
    M: int
    rho: np.ndarray
    coeff: np.ndarray
    window: Window

    @classmethod
    def build(cls, window: Window, M: int, d: int) -> "FilterPlan":
        return cls(d, M, jackson_factors(d), chebyshev_coefficients(window, M, d), window)

    @property
    def damped(self) -> np.ndarray:
        """Series weights ``g[k, j]``: ``c_0/2`` at j=0 and ``rho_j c_j`` after."""
        g = self.coeff * self.rho[None, :]
        g[:, 0] = 0.5 * self.coeff[:, 0]
        return g

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "M": self.M,
            "window": self.window.to_dict(),
            "rho": self.rho.tolist(),
            "coeff": self.coeff.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "FilterPlan":
        return cls(
            int(data["d"]),
            int(data["M"]),
            np.asarray(data["rho"], dtype=float),
            np.asarray(data["coeff"], dtype=float),
            Window(**data["window"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "FilterPlan":
        return cls.from_dict(json.loads(text))


def clenshaw(weights: np.ndarray, t):
    """Evaluate ``sum_j weights[j] T_j(t)`` by Clenshaw's recurrence."""
    t = np.asarray(t, dtype=float)
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    for wj in weights[:0:-1]:
        b1, b2 = 2 * t * b1 - b2 + wj, b1
    return t * b1 - b2 + weights[0]


def scalar_filter_eval(plan: FilterPlan, k: int, t):
    """Value of the damped series for moment ``k`` at mapped point(s) ``t``."""
    if not 0 <= k < plan.M:
        raise IndexError(f"moment index {k} out of range for M={plan.M}")
    return clenshaw(plan.damped[k], t)


@dataclass
class MomentBlock:
    S: np.ndarray
    ell: int
    M: int
    U: np.ndarray
    R: np.ndarray
    matvecs: int
    rank_warning: bool = False
    min_rdiag_ratio: float = field(default=math.nan)
    timings: dict = field(default_factory=dict)

    def moment(self, k: int) -> np.ndarray:
        return self.S[:, k * self.ell:(k + 1) * self.ell]


def _mapped_matvec(A: SparseHermitian, bounds: SpectralBounds, X: np.ndarray) -> np.ndarray:
    return (block_matvec(A, X) - bounds.center * X) / bounds.half_width


def apply_series(A: SparseHermitian, bounds: SpectralBounds, V: np.ndarray,
                 weights: np.ndarray) -> tuple[np.ndarray, int]:
    """Apply every row of ``weights`` as a Chebyshev series in ``l(A)`` to ``V``.

    One three-term recurrence is shared by all rows. Returns the stacked
    blocks ``(S_0, ..., S_{M-1})`` and the number of block matvecs used.
    """
    weights = np.atleast_2d(weights)
    M, dp1 = weights.shape
    n, ell = V.shape
    dtype = np.result_type(V.dtype, A.dtype, np.float64)
    S = np.zeros((n, M, ell), dtype=dtype)
    W_prev = np.asarray(V, dtype=dtype)
    S += W_prev[:, None, :] * weights[None, :, 0, None]
    matvecs = 0
    if dp1 > 1:
        W = _mapped_matvec(A, bounds, W_prev)
        matvecs += 1
        S += W[:, None, :] * weights[None, :, 1, None]
        for j in range(2, dp1):
            W, W_prev = 2 * _mapped_matvec(A, bounds, W) - W_prev, W
            matvecs += 1
            S += W[:, None, :] * weights[None, :, j, None]
    return S.reshape(n, M * ell), matvecs


def build_moments(A: SparseHermitian, bounds: SpectralBounds, V, plan: FilterPlan) -> MomentBlock:
    """Moment block ``S_k = F_d(p_k)(l(A)) V`` and its QR factors."""
    V = np.asarray(V)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[0] != A.n:
        raise ValueError(f"starting block has {V.shape[0]} rows, operator has {A.n}")
    ell = V.shape[1]
    if plan.M * ell > A.n:
        raise ValueError(f"M*ell = {plan.M * ell} exceeds n = {A.n}")
    t0 = time.perf_counter()
    S, matvecs = apply_series(A, bounds, V, plan.damped)
    t1 = time.perf_counter()
    U, R = dense_qr(S)
    t2 = time.perf_counter()
    normS = np.linalg.norm(R, 2) if R.size else 0.0
    rdiag = np.abs(np.diag(R))
    ratio = float(rdiag.min() / normS) if normS > 0 else 0.0
    low_rank = ratio < 1e-14
    if low_rank:
        log.info("moment block is numerically rank deficient (min|R_ii|/||S|| = %.2e)", ratio)
    return MomentBlock(S, ell, plan.M, U, R, matvecs, low_rank, ratio,
                       {"moments": t1 - t0, "qr": t2 - t1})


@dataclass(frozen=True)
class EigencountEstimate:
    count: int
    mean: float
    stderr: float
    samples: int


def estimate_eigencount(A: SparseHermitian, bounds: SpectralBounds, window: Window, d: int,
                        samples: int = 100, seed: int = 0,
                        plan: FilterPlan | None = None) -> EigencountEstimate:
    """Hutchinson trace estimate of ``F_d(1)(l(A))`` with Rademacher probes."""
    if samples < 10:
        raise ValueError("samples must be at least 10")
    if plan is None or plan.d != d:
        plan = FilterPlan.build(window, 1, d)
    rng = np.random.default_rng(seed)
    Z = rng.choice(np.array([-1.0, 1.0]), size=(A.n, samples))
    FZ, _ = apply_series(A, bounds, Z, plan.damped[:1])
    vals = np.real(np.einsum("ij,ij->j", Z, FZ))
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(samples))
    return EigencountEstimate(max(0, int(round(mean))), mean, stderr, samples)
