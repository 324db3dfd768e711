"""Multi-spectral decomposition loop: per-ray SOMA sweep, ART image update, re-projection.

Each outer iteration

1. projects the current material images along the reference rays (spectrum 1's
   geometry), linearizes every spectrum's polychromatic model there and runs one
   orthogonalized sweep per ray;
2. optionally checks the sweep (residual ratio ``dp``, image-change ratio
   ``df_m``) and falls back to the first-equation iterate with a smaller beta;
3. adds ``lam * ART(q_new - q_old)`` to each material image.

Spectra measured along other ray sets are first resampled onto the reference
rays by view-angle interpolation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .forward import MM_TO_CM, linearize_many, poly_project_many
from .geometry import FanBeamGeometry, ImageGrid, RayPath, Sinogram, system_matrix
from .metrics import distance_data_arrays, distance_image
from .soma import SolveOptions, adapt_beta, sweep_rays
from .spectra import MaterialTable, Spectrum

__all__ = [
    "ReconConfig",
    "IterationLog",
    "ReconResult",
    "DivergenceError",
    "estimate_projection",
    "estimate_sinogram",
    "decompose_all",
    "update_images",
    "run_reconstruction",
    "beta_schedule",
    "synth_monochromatic",
]


class DivergenceError(RuntimeError):
    pass


@dataclass
class ReconConfig:
    lam: float = 0.9
    solver: SolveOptions = field(default_factory=SolveOptions)
    t_thresh: float = 1.5
    beta_red: float = 0.9
    # (beta0, ratio, total_n) for exponential beta decay; None keeps beta fixed
    beta_decay: tuple | None = None
    max_iters: int = 10
    stop_d_image: float | None = None
    stop_d_data: float | None = None
    # None: decide from the geometries
    consistent: bool | None = None
    interp: str = "linear"
    adaptive: bool = True
    # "off": dp test only; "image": f against ART of the full q iterates;
    # "increment": ART of the q changes
    df_form: str = "off"
    art_sweeps: int = 1
    art_relax: float = 1.0
    length_scale: float = MM_TO_CM
    keep_history: bool = False

    def __post_init__(self):
        if not 0 < self.lam < 2:
            raise ValueError("lam must be in (0, 2)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.interp not in ("nearest", "linear"):
            raise ValueError("interp must be 'nearest' or 'linear'")
        if self.df_form not in ("off", "image", "increment"):
            raise ValueError("df_form must be 'off', 'image' or 'increment'")
        if self.art_sweeps < 1:
            raise ValueError("art_sweeps must be >= 1")


@dataclass
class IterationLog:
    iteration: int
    d_data: float
    d_image: float
    beta: float
    seconds: float
    dp: float = math.nan
    df: tuple = ()
    reverted: bool = False
    skipped: int = 0
    min_denominator: float = math.inf


@dataclass
class ReconResult:
    images: list
    q_sinograms: list
    log: list
    history: list = field(default_factory=list)
    beta: float = math.nan

    def write_log_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,D_data,D_image,beta,seconds,dp,reverted\n")
            for r in self.log:
                fh.write(
                    f"{r.iteration},{float(r.d_data)!r},{float(r.d_image)!r},{float(r.beta)!r},{r.seconds:.6f},"
                    f"{float(r.dp)!r},{int(r.reverted)}\n"
                )


def beta_schedule(beta0: float, kappa_ratio: float, n: int, total_n: int) -> float:
    """Exponential decay beta0 * ratio^((n-1)/N)."""
    if not 0 < kappa_ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    if n < 1:
        raise ValueError("n starts at 1")
    return beta0 * kappa_ratio ** ((n - 1) / total_n)


def _check_resample(src: FanBeamGeometry, ref: FanBeamGeometry):
    if (src.n_det, src.det_cell, src.sod, src.sdd) != (ref.n_det, ref.det_cell, ref.sod, ref.sdd):
        raise ValueError("interpolation needs identical detector layout and distances")


def _view_coordinate(src: FanBeamGeometry, angle_deg) -> np.ndarray:
    u = (np.asarray(angle_deg, dtype=float) - src.start_angle) / src.view_step
    snap = np.abs(u - np.round(u)) < 1e-9
    u = np.where(snap, np.round(u), u)
    if math.isclose(src.angular_range, 360.0):
        return np.mod(u, src.n_views)
    return np.clip(u, 0, src.n_views - 1)


def _interp_views(data: np.ndarray, src: FanBeamGeometry, u: np.ndarray, dets: np.ndarray, mode: str):
    n = src.n_views
    periodic = math.isclose(src.angular_range, 360.0)
    if mode == "nearest":
        v = np.floor(u + 0.5).astype(np.int64)
        v = np.mod(v, n) if periodic else np.minimum(v, n - 1)
        return data[v, dets]
    v0 = np.floor(u).astype(np.int64)
    w = u - v0
    v1 = np.mod(v0 + 1, n) if periodic else np.minimum(v0 + 1, n - 1)
    return (1.0 - w) * data[v0, dets] + w * data[v1, dets]


def estimate_projection(s_k: Sinogram, g_k: FanBeamGeometry, target: RayPath, mode: str = "linear") -> float:
    """Value of ``s_k`` interpolated in view angle at the target ray's source angle (same det)."""
    angle = math.degrees(target.angle)
    # compare against the view angles in the geometry's own branch of the circle
    angle = g_k.start_angle + math.remainder(angle - g_k.start_angle, 360.0)
    u = _view_coordinate(g_k, [angle])
    return float(_interp_views(s_k.data, g_k, u, np.array([target.det]), mode)[0])


def estimate_sinogram(s_k: Sinogram, ref: FanBeamGeometry, mode: str = "linear") -> Sinogram:
    """Resample a measured sinogram onto every ray of the reference geometry."""
    src = s_k.geometry
    if src == ref:
        return s_k.like(s_k.data.copy())
    _check_resample(src, ref)
    angles = ref.start_angle + np.arange(ref.n_views) * ref.view_step
    u = _view_coordinate(src, angles)
    uu = np.repeat(u, ref.n_det)
    dets = np.tile(np.arange(ref.n_det), ref.n_views)
    vals = _interp_views(s_k.data, src, uu, dets, mode)
    return Sinogram(vals, ref, s_k.spectrum_label)


def _targets(sinograms, geometries, cfg: ReconConfig) -> np.ndarray:
    ref = geometries[0]
    consistent = cfg.consistent
    if consistent is None:
        consistent = all(g == ref for g in geometries)
    rows = []
    for k, s in enumerate(sinograms):
        if k == 0 or consistent:
            if s.geometry.n_rays != ref.n_rays:
                raise ValueError("consistent data must share the reference ray set")
            rows.append(s.data.ravel())
        else:
            rows.append(estimate_sinogram(s, ref, cfg.interp).data.ravel())
    return np.stack(rows)


def _linearize_all(Q, targets, spectra, thetas):
    K = len(spectra)
    R, M = Q.shape
    A = np.empty((K, R, M))
    B = np.empty((K, R))
    P = np.empty((K, R))
    for k, s in enumerate(spectra):
        A[k], B[k], P[k] = linearize_many(Q, s, None, targets[k], theta=thetas[k])
    return A, B, P


def _sweep(Q, targets, spectra, thetas, beta, opts: SolveOptions):
    A, B, P = _linearize_all(Q, targets, spectra, thetas)
    X_K, X_1, stats = sweep_rays(Q, A, B, beta, opts.kappa, opts.eps, opts.direction_tol)
    return X_K, X_1, stats, P


def decompose_all(
    sinograms: Sequence[Sinogram],
    geometries: Sequence[FanBeamGeometry],
    spectra: Sequence[Spectrum],
    materials: MaterialTable,
    q_init: Sequence[Sinogram],
    cfg: ReconConfig,
    beta: float | None = None,
) -> list[Sinogram]:
    """One SOMA sweep on every reference ray, starting from ``q_init`` (one sinogram per material)."""
    ref = geometries[0]
    if len(q_init) != materials.n_materials:
        raise ValueError("one initial sinogram per material")
    for q in q_init:
        if q.geometry.n_views != ref.n_views or q.geometry.n_det != ref.n_det:
            raise ValueError("q_init does not match the reference geometry")
    targets = _targets(sinograms, geometries, cfg)
    thetas = [materials.for_spectrum(s) for s in spectra]
    Q = np.stack([q.data.ravel() for q in q_init], axis=1)
    beta = cfg.solver.beta0 if beta is None else beta
    X_K, _, _, _ = _sweep(Q, targets, spectra, thetas, beta, cfg.solver)
    return [Sinogram(X_K[:, m], ref, materials.names[m]) for m in range(materials.n_materials)]


def update_images(
    f_prev: Sequence[ImageGrid],
    q_new: Sequence[Sinogram],
    q_prev: Sequence[Sinogram],
    geometry: FanBeamGeometry,
    lam: float,
    sweeps: int = 1,
    relax: float = 1.0,
    length_scale: float = MM_TO_CM,
) -> list[ImageGrid]:
    """f + lam * ART(q_new - q_prev) for each material; no clipping."""
    out = []
    for f, qn, qp in zip(f_prev, q_new, q_prev):
        R = system_matrix(geometry, f.nx, f.ny, float(f.pixel_size), float(length_scale))
        delta = R.kaczmarz(qn.data - qp.data, sweeps, relax)
        out.append(f.like(f.values.ravel() + lam * delta))
    return out


def synth_monochromatic(images: Sequence[ImageGrid], materials: MaterialTable, energy: int) -> ImageGrid:
    """Linear attenuation sum_m mac[m, E] * f_m (1/cm for g/cm^3 images)."""
    col = materials.energy_columns([energy])[0]
    acc = np.zeros(images[0].shape)
    for m, im in enumerate(images):
        acc = acc + materials.mac[m, col] * im.values
    return images[0].like(acc)


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def run_reconstruction(
    measured: Sequence[Sinogram],
    geometries: Sequence[FanBeamGeometry],
    spectra: Sequence[Spectrum],
    materials: MaterialTable,
    cfg: ReconConfig,
    f_true: Sequence[ImageGrid] | None = None,
    grid: ImageGrid | None = None,
    f_init: Sequence[ImageGrid] | None = None,
    beta_init: float | None = None,
    start_iter: int = 0,
    on_iteration: Callable[[dict], None] | None = None,
) -> ReconResult:
    """Run the decomposition/reconstruction/update loop.

    ``grid`` fixes the image size when neither ``f_true`` nor ``f_init`` is given.
    ``beta_init`` and ``start_iter`` resume an interrupted run.
    ``on_iteration`` receives a dict of intermediate arrays after every iteration.
    """
    K, M = len(spectra), materials.n_materials
    if len(measured) != K or len(geometries) != K:
        raise ValueError("one sinogram and one geometry per spectrum")
    if K < 2 or K < M:
        raise ValueError(f"need K >= max(2, M) spectra, got K={K}, M={M}")
    for s in spectra:
        s.check_normalized()
    template = f_init[0] if f_init else (f_true[0] if f_true else grid)
    if template is None:
        raise ValueError("pass grid, f_true or f_init to fix the image size")
    nx, ny, ps = template.nx, template.ny, float(template.pixel_size)
    scale = float(cfg.length_scale)

    ref = geometries[0]
    consistent = cfg.consistent if cfg.consistent is not None else all(g == ref for g in geometries)
    # spectra whose rays need an estimated intercept on the reference rays
    mismatched = [k for k in range(K) if k > 0 and not consistent]
    for k in range(K):
        if k not in mismatched and measured[k].geometry.n_rays != ref.n_rays:
            raise ValueError("consistent data must share the reference ray set")
    for k in mismatched:
        _check_resample(geometries[k], ref)

    R_ref = system_matrix(ref, nx, ny, ps, scale)
    own_R = [system_matrix(g, nx, ny, ps, scale) for g in geometries]
    thetas = [materials.for_spectrum(s) for s in spectra]
    meas = [s.data.ravel() for s in measured]
    # the estimated intercepts do not depend on the iterate, so resample once
    targets = _targets(measured, geometries, cfg)

    if f_init is not None:
        f = [np.array(im.values, dtype=float).ravel() for im in f_init]
    else:
        f = [np.zeros(nx * ny) for _ in range(M)]
    truth = [im.values.ravel() for im in f_true] if f_true is not None else None
    beta_base = cfg.solver.beta0 if beta_init is None else beta_init
    reduction = 1.0
    opts = cfg.solver

    def art(b):
        return R_ref.kaczmarz(b, cfg.art_sweeps, cfg.art_relax)

    def reproject(f_imgs):
        return np.stack([R_ref.matvec(v) for v in f_imgs], axis=1)

    def model_state(Q):
        """Linearization on the reference rays plus each spectrum's model on its own rays."""
        A = np.empty((K, Q.shape[0], M))
        P = np.empty((K, Q.shape[0]))
        own = []
        for k in range(K):
            A[k], _, P[k] = linearize_many(Q, spectra[k], None, np.zeros(Q.shape[0]), theta=thetas[k])
            if k in mismatched:
                Qk = np.stack([own_R[k].matvec(v) for v in f], axis=1)
                own.append(poly_project_many(Qk, spectra[k], None, theta=thetas[k]))
            else:
                own.append(P[k])
        return A, P, own

    log: list[IterationLog] = []
    history = []
    Q = reproject(f)
    A, P, own = model_state(Q)
    beta = beta_base
    for it in range(start_iter, start_iter + cfg.max_iters):
        t0 = time.perf_counter()
        n = it + 1
        if cfg.beta_decay is not None:
            b0, ratio, total = cfg.beta_decay
            beta = beta_schedule(b0, ratio, n, total) * reduction
        else:
            beta = beta_base * reduction

        B = targets + np.einsum("krm,rm->kr", A, Q) - P
        X_K, X_1, stats = sweep_rays(Q, A, B, beta, opts.kappa, opts.eps, opts.direction_tol)
        if not (np.all(np.isfinite(X_K)) and np.all(np.isfinite(X_1))):
            raise DivergenceError(f"iteration {n}: non-finite material projections (beta={beta:.4g})")

        dp, df, reverted = math.nan, (), False
        steps = [art(X_K[:, m] - Q[:, m]) for m in range(M)]
        Q_next = X_K
        if cfg.adaptive:
            num = den = 0.0
            for k in range(K):
                num += float(np.sum((targets[k] - poly_project_many(X_K, spectra[k], None, theta=thetas[k])) ** 2))
                den += float(np.sum((targets[k] - poly_project_many(X_1, spectra[k], None, theta=thetas[k])) ** 2))
            dp = _ratio(num, den)
            img_1 = None
            if cfg.df_form == "increment":
                img_1 = [art(X_1[:, m] - Q[:, m]) for m in range(M)]
                chg_K, chg_1 = steps, img_1
            elif cfg.df_form == "image":
                chg_K = [f[m] - art(X_K[:, m]) for m in range(M)]
                chg_1 = [f[m] - art(X_1[:, m]) for m in range(M)]
            if cfg.df_form != "off":
                df = tuple(_ratio(float(chg_K[m] @ chg_K[m]), float(chg_1[m] @ chg_1[m])) for m in range(M))
            _, reverted = adapt_beta(dp, df, cfg.t_thresh, beta, cfg.beta_red)
            if reverted:
                reduction *= cfg.beta_red
                Q_next = X_1
                steps = img_1 if img_1 is not None else [art(X_1[:, m] - Q[:, m]) for m in range(M)]

        f = [f[m] + cfg.lam * steps[m] for m in range(M)]
        if not all(np.all(np.isfinite(v)) for v in f):
            raise DivergenceError(f"iteration {n}: non-finite image values")

        Q_prev = Q
        Q = reproject(f)
        A, P, own = model_state(Q)
        d_data = distance_data_arrays(meas, own)
        d_image = distance_image(truth, f) if truth is not None else math.nan
        log.append(
            IterationLog(
                iteration=n,
                d_data=d_data,
                d_image=d_image,
                beta=beta,
                seconds=time.perf_counter() - t0,
                dp=dp,
                df=df,
                reverted=reverted,
                skipped=stats["skipped"],
                min_denominator=stats["min_denominator"],
            )
        )
        if cfg.keep_history:
            history.append([template.like(v.copy()) for v in f])
        if on_iteration is not None:
            on_iteration({"iteration": n, "q_prev": Q_prev, "q_K": X_K, "q_1": X_1, "q_next": Q_next, "log": log[-1]})
        if cfg.stop_d_image is not None and d_image < cfg.stop_d_image:
            break
        if cfg.stop_d_data is not None and d_data < cfg.stop_d_data:
            break

    images = [template.like(v) for v in f]
    q_sinos = [Sinogram(Q[:, m], ref, materials.names[m]) for m in range(M)]
    next_beta = (beta_base * reduction) if cfg.beta_decay is None else beta
    return ReconResult(images, q_sinos, log, history, beta=next_beta)
