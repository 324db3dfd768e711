"""Schmidt-orthogonal sweeps for small K-equation, M-unknown nonlinear systems.

One sweep walks the linearized equations in order. Each equation's normal
``g_k`` is orthogonalized against the previous search directions through the
correction matrix ``P``::

    d_k = P_k g_k
    P_{k+1} = P_k - d_k d_k^T / (d_k^T d_k + eps)

and the iterate moves to that equation's tangent hyperplane (scaled by the
relaxation ``beta``). For a consistent linear system with K = M this lands
on the exact solution after one sweep.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .forward import LinearizedEq

__all__ = [
    "SolveOptions",
    "SolverState",
    "DirectionExhausted",
    "TraceRow",
    "SolveTrace",
    "schmidt_step",
    "step_size",
    "sweep",
    "solve_system",
    "newton_solve",
    "adapt_beta",
    "sweep_rays",
]


class DirectionExhausted(ArithmeticError):
    """The search direction carries no new information for this equation."""


@dataclass
class SolveOptions:
    beta0: float = 0.9
    eps: float = 1e-8
    kappa: float = 1.0
    max_outer: int = 50
    tol_residual: float = 1e-24
    direction_tol: float = 1e-10

    def __post_init__(self):
        if not 0 <= self.beta0 <= 1:
            raise ValueError("beta0 must be in [0, 1]")
        if not 0 <= self.kappa <= 1:
            raise ValueError("kappa must be in [0, 1]")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


@dataclass
class SolverState:
    x: np.ndarray
    p_mat: np.ndarray
    beta: float
    kappa: float = 1.0
    eps: float = 1e-8
    sweep_count: int = 0
    outer_count: int = 0
    skipped: int = 0
    min_denominator: float = np.inf
    # (k, x_k, alpha_k) for the most recent sweep
    steps: list = field(default_factory=list)

    @classmethod
    def start(cls, x0, opts: SolveOptions, beta: float | None = None) -> "SolverState":
        x0 = np.array(x0, dtype=float)
        return cls(
            x=x0,
            p_mat=np.eye(x0.size),
            beta=opts.beta0 if beta is None else beta,
            kappa=opts.kappa,
            eps=opts.eps,
        )


def schmidt_step(p_mat: np.ndarray, g: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    # projecting twice restores the orthogonality lost to rounding when g is
    # nearly in the span of earlier directions; P is a projector, so in exact
    # arithmetic the second product changes nothing
    d = p_mat @ (p_mat @ g)
    denom = d @ d + eps
    if denom == 0.0:
        return d, p_mat.copy()
    return d, p_mat - np.outer(d, d) / denom


def step_size(eq: LinearizedEq, d: np.ndarray, x: np.ndarray, tiny: float = 0.0) -> float:
    """Step along ``d`` that puts ``x`` on the tangent hyperplane of ``eq``."""
    gd = float(eq.g @ d)
    if abs(gd) <= tiny or gd == 0.0:
        raise DirectionExhausted(f"g.d = {gd:.3e}")
    return eq.residual(x) / gd


def sweep(st: SolverState, eqs: Sequence[LinearizedEq], opts: SolveOptions) -> SolverState:
    """One pass over ``eqs``; P restarts from the identity."""
    x = st.x.copy()
    P = np.eye(x.size)
    steps = []
    skipped = st.skipped
    min_den = st.min_denominator
    for k, eq in enumerate(eqs):
        g = np.asarray(eq.g, dtype=float)
        d, P_next = schmidt_step(P, g, st.eps)
        if math.sqrt(d @ d) <= opts.direction_tol * math.sqrt(g @ g):
            skipped += 1
            continue
        direction = st.kappa * d + (1.0 - st.kappa) * g
        gd = float(g @ direction)
        # never divide by less than eps
        if gd <= st.eps or gd == 0.0:
            skipped += 1
            continue
        alpha = step_size(eq, direction, x)
        min_den = min(min_den, gd)
        x = x + st.beta * alpha * direction
        P = P_next
        steps.append((k, x.copy(), alpha))
    return SolverState(
        x=x,
        p_mat=P,
        beta=st.beta,
        kappa=st.kappa,
        eps=st.eps,
        sweep_count=st.sweep_count + 1,
        outer_count=st.outer_count,
        skipped=skipped,
        min_denominator=min_den,
        steps=steps,
    )


@dataclass
class TraceRow:
    outer: int
    k: int
    x: tuple
    alpha: float
    beta: float


@dataclass
class SolveTrace:
    rows: list = field(default_factory=list)
    # squared residual sum at each expansion point, including the final one
    residuals: list = field(default_factory=list)
    outer_iterations: int = 0

    def path(self) -> np.ndarray:
        return np.array([r.x for r in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            m = len(self.rows[0].x) if self.rows else 0
            w.writerow(["outer", "k"] + [f"x{i + 1}" for i in range(m)] + ["alpha", "beta"])
            for r in self.rows:
                w.writerow([r.outer, r.k, *[repr(float(v)) for v in r.x], repr(float(r.alpha)), repr(float(r.beta))])


def _residual(eqs: Sequence[LinearizedEq]) -> float:
    return float(sum((eq.p_meas - eq.p_model) ** 2 for eq in eqs))


def solve_system(
    x0,
    builders: Sequence[Callable[[np.ndarray], LinearizedEq]],
    opts: SolveOptions,
) -> tuple[np.ndarray, SolveTrace]:
    """Relinearize at the current iterate and sweep until the residual is small.

    ``builders[k](x)`` returns the linearization of equation k at ``x``.
    """
    if not builders:
        raise ValueError("need at least one equation")
    st = SolverState.start(x0, opts)
    trace = SolveTrace()
    trace.rows.append(TraceRow(0, -1, tuple(st.x), 0.0, st.beta))
    for outer in range(opts.max_outer + 1):
        eqs = [b(st.x) for b in builders]
        res = _residual(eqs)
        trace.residuals.append(res)
        if res <= opts.tol_residual or outer == opts.max_outer:
            break
        st = sweep(st, eqs, opts)
        st.outer_count = outer + 1
        for k, xk, alpha in st.steps:
            trace.rows.append(TraceRow(outer + 1, k, tuple(xk), alpha, st.beta))
        trace.outer_iterations = outer + 1
    return st.x, trace


def newton_solve(
    x0,
    builders: Sequence[Callable[[np.ndarray], LinearizedEq]],
    opts: SolveOptions,
    path: list | None = None,
) -> np.ndarray:
    """Newton-Raphson on G(x) = p for square systems, using the same Jacobian rows."""
    x = np.array(x0, dtype=float)
    if len(builders) != x.size:
        raise ValueError(f"Newton needs K == M, got K={len(builders)}, M={x.size}")
    if path is not None:
        path.append(x.copy())
    for _ in range(opts.max_outer):
        eqs = [b(x) for b in builders]
        if _residual(eqs) <= opts.tol_residual:
            break
        J = np.array([eq.a_row for eq in eqs])
        F = np.array([eq.p_model - eq.p_meas for eq in eqs])
        if np.linalg.cond(J) > 1e14:
            raise np.linalg.LinAlgError("singular Jacobian")
        x = x - np.linalg.solve(J, F)
        if path is not None:
            path.append(x.copy())
    return x


def adapt_beta(dp: float, df, t: float, beta: float, beta_red: float) -> tuple[float, bool]:
    """Shrink beta (and ask for a revert) when the sweep made things worse."""
    if dp > 1 or np.any(np.asarray(df) >= t):
        return beta * beta_red, True
    return beta, False


def sweep_rays(
    X: np.ndarray,
    A: np.ndarray,
    B: np.ndarray,
    beta: float,
    kappa: float = 1.0,
    eps: float = 1e-8,
    direction_tol: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """The same sweep applied independently to many rays.

    X is [R, M]; A is [K, R, M] gradient rows and B is [K, R] intercepts.
    Returns the iterate after all K equations, the iterate after the first
    one, and counters (skipped steps, smallest step denominator used).
    """
    X = np.array(X, dtype=float)
    K, R, M = A.shape
    P = np.broadcast_to(np.eye(M), (R, M, M)).copy()
    X1 = X.copy()
    skipped = 0
    min_den = np.inf
    for k in range(K):
        g = A[k]
        d = np.einsum("rij,rj->ri", P, np.einsum("rij,rj->ri", P, g))
        dd = np.einsum("ri,ri->r", d, d)
        direction = kappa * d + (1.0 - kappa) * g
        gd = np.einsum("ri,ri->r", g, direction)
        ok = (np.sqrt(dd) > direction_tol * np.linalg.norm(g, axis=1)) & (gd > eps) & (gd != 0.0)
        skipped += int(R - np.count_nonzero(ok))
        if np.any(ok):
            min_den = min(min_den, float(gd[ok].min()))
        resid = B[k] - np.einsum("ri,ri->r", g, X)
        alpha = np.where(ok, resid / np.where(ok, gd, 1.0), 0.0)
        X = X + (beta * alpha)[:, None] * direction
        denom = np.where(ok, dd + eps, 1.0)
        upd = np.einsum("ri,rj->rij", d, d) / denom[:, None, None]
        P = np.where(ok[:, None, None], P - upd, P)
        if k == 0:
            X1 = X.copy()
    return X, X1, {"skipped": skipped, "min_denominator": min_den}
