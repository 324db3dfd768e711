"""Polychromatic projection model, its linearization, and measurement simulation.

For a ray with basis-material line integrals ``q`` (g/cm^2 when densities are
g/cm^3 and lengths cm) the log-transmission under spectrum ``s`` is

    p(q) = -ln sum_w s_w * delta * exp(-sum_m theta[m, w] * q[m])

Every sum is evaluated in log-sum-exp form so large attenuations (gold inserts)
neither overflow nor underflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit, prange

from .geometry import FanBeamGeometry, ImageGrid, Sinogram, system_matrix
from .spectra import MaterialTable, Spectrum

__all__ = [
    "MM_TO_CM",
    "ProjectionError",
    "LinearizedEq",
    "poly_project",
    "poly_project_many",
    "linearize",
    "linearize_many",
    "PolyEquation",
    "simulate_acquisition",
    "add_poisson_noise",
]

# mm geometry, cm^2/g attenuation tables
MM_TO_CM = 0.1


class ProjectionError(ArithmeticError):
    pass


@dataclass
class LinearizedEq:
    """First-order model ``a_row . x = b`` of one equation around ``q0``."""

    a_row: np.ndarray
    b: float
    p_meas: float
    p_model: float

    @property
    def g(self) -> np.ndarray:
        return self.a_row

    def residual(self, x) -> float:
        """b - a_row . x; zero on the tangent hyperplane."""
        return float(self.b - self.a_row @ np.asarray(x, dtype=float))


def _log_weights(s: Spectrum) -> np.ndarray:
    w = np.asarray(s.weights, dtype=float) * s.delta
    if not np.any(w > 0):
        raise ProjectionError(f"spectrum {s.label!r} has no positive weight")
    with np.errstate(divide="ignore"):
        return np.log(w)


@njit(parallel=True, cache=True)
def _poly_kernel(Q, theta, logw, want_grad, p_out, g_out):
    R, M = Q.shape
    W = theta.shape[1]
    for r in prange(R):
        buf = np.empty(W)
        mx = -np.inf
        for w in range(W):
            e = logw[w]
            for m in range(M):
                e -= Q[r, m] * theta[m, w]
            buf[w] = e
            if e > mx:
                mx = e
        if not np.isfinite(mx):
            p_out[r] = np.nan
            continue
        phi = 0.0
        for w in range(W):
            x = np.exp(buf[w] - mx)
            buf[w] = x
            phi += x
        p_out[r] = -(np.log(phi) + mx)
        if want_grad:
            for m in range(M):
                acc = 0.0
                for w in range(W):
                    acc += buf[w] * theta[m, w]
                g_out[r, m] = acc / phi


def _evaluate(Q, s: Spectrum, t: MaterialTable | None, theta, want_grad: bool):
    """p(Q) and, optionally, its gradient rows; zero-weight energies are dropped."""
    Q = np.ascontiguousarray(np.atleast_2d(np.asarray(Q, dtype=float)))
    theta = t.for_spectrum(s) if theta is None else theta
    logw = _log_weights(s)
    keep = np.isfinite(logw)
    theta = np.ascontiguousarray(theta[:, keep], dtype=float)
    logw = np.ascontiguousarray(logw[keep])
    R, M = Q.shape
    p = np.empty(R)
    grad = np.empty((R, M) if want_grad else (0, M))
    _poly_kernel(Q, theta, logw, want_grad, p, grad)
    if not np.all(np.isfinite(p)):
        raise ProjectionError("non-finite exponent in polychromatic sum")
    return p, grad


def poly_project_many(Q, s: Spectrum, t: MaterialTable, theta: np.ndarray | None = None) -> np.ndarray:
    """Vectorized polychromatic projection for rays stacked as rows of ``Q`` [R, M]."""
    return _evaluate(Q, s, t, theta, False)[0]


def poly_project(q, s: Spectrum, t: MaterialTable) -> float:
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ProjectionError("non-finite material projection")
    return float(poly_project_many(q[None, :], s, t)[0])


def linearize_many(Q, s: Spectrum, t: MaterialTable, p_meas, theta: np.ndarray | None = None):
    """Gradient rows A [R, M], intercepts b [R] and model values p(Q) [R].

    The gradient of p is Theta_m / Phi with Theta_m = sum_w s_w theta_mw e^(..)
    and Phi = sum_w s_w e^(..); the common shift cancels in the ratio.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    p_model, A = _evaluate(Q, s, t, theta, True)
    b = np.asarray(p_meas, dtype=float) + np.einsum("rm,rm->r", A, Q) - p_model
    return A, b, p_model


def linearize(q0, s: Spectrum, t: MaterialTable, p_meas: float) -> LinearizedEq:
    q0 = np.asarray(q0, dtype=float)
    if not np.all(np.isfinite(q0)):
        raise ProjectionError("non-finite expansion point")
    A, b, p_model = linearize_many(q0[None, :], s, t, [p_meas])
    return LinearizedEq(A[0], float(b[0]), float(p_meas), float(p_model[0]))


class PolyEquation:
    """One equation ``p(q) = p_meas``; calling it linearizes at ``q``.

    Caches the spectrum-aligned coefficients, so it is the cheap way to feed
    per-ray solvers.
    """

    def __init__(self, s: Spectrum, t: MaterialTable, p_meas: float):
        self.theta = t.for_spectrum(s)
        self.logw = _log_weights(s)
        self.p_meas = float(p_meas)

    def _eval(self, q):
        E = self.logw - np.asarray(q, dtype=float) @ self.theta
        shift = E.max()
        X = np.exp(E - shift)
        phi = X.sum()
        return -(np.log(phi) + shift), X, phi

    def value(self, q) -> float:
        return float(self._eval(q)[0])

    def __call__(self, q) -> LinearizedEq:
        q = np.asarray(q, dtype=float)
        p, X, phi = self._eval(q)
        a = self.theta @ X / phi
        return LinearizedEq(a, float(self.p_meas + a @ q - p), self.p_meas, float(p))


def simulate_acquisition(
    images: Sequence[ImageGrid],
    geometries: Sequence[FanBeamGeometry],
    spectra: Sequence[Spectrum],
    t: MaterialTable,
    length_scale: float = MM_TO_CM,
) -> list[Sinogram]:
    """Noise-free polychromatic sinograms, one per (geometry, spectrum) pair."""
    if len(geometries) != len(spectra):
        raise ValueError("one geometry per spectrum")
    if len(images) != t.n_materials:
        raise ValueError(f"{len(images)} material images for {t.n_materials} materials")
    grid = images[0]
    out = []
    for g, s in zip(geometries, spectra):
        R = system_matrix(g, grid.nx, grid.ny, float(grid.pixel_size), float(length_scale))
        Q = np.stack([R.matvec(im.values) for im in images], axis=1)
        p = poly_project_many(Q, s, t)
        out.append(Sinogram(p, g, s.label))
    return out


def add_poisson_noise(s: Sinogram, i0: float, seed: int) -> Sinogram:
    """Counts N ~ Poisson(i0 e^-p); returns -ln(max(N, 1) / i0)."""
    if i0 < 1:
        raise ValueError("i0 must be >= 1")
    # rays that miss the object give -ln(sum s), a few ulps either side of 0
    if np.any(s.data < -1e-12):
        raise ValueError("projection values must be nonnegative")
    rng = np.random.Generator(np.random.Philox(seed))
    counts = rng.poisson(i0 * np.exp(-np.maximum(s.data, 0.0)))
    return s.like(-np.log(np.maximum(counts, 1) / i0))
