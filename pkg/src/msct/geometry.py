"""Fan-beam geometry, exact ray tracing and the discrete projection operator.

Coordinates are in mm with the rotation center at the origin. Pixel (iy, ix)
of an ``ny x nx`` image covers ``[x0 + ix*ps, x0 + (ix+1)*ps]`` along x with
``x0 = -nx*ps/2`` (same for y); the flat pixel index is ``iy*nx + ix``.

Rays are enumerated view-major: row ``view*n_det + det`` of the system matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
import scipy.sparse as sp

__all__ = [
    "FanBeamGeometry",
    "ImageGrid",
    "RayPath",
    "SparseRow",
    "Sinogram",
    "SystemMatrix",
    "ray_path",
    "trace",
    "system_matrix",
    "forward_project",
    "back_project",
    "art_reconstruct",
]


@dataclass(frozen=True)
class FanBeamGeometry:
    sod: float
    sdd: float
    n_det: int
    det_cell: float
    n_views: int
    start_angle: float = 0.0
    angular_range: float = 360.0

    def __post_init__(self):
        if not 0 < self.sod < self.sdd:
            raise ValueError("need 0 < sod < sdd")
        if self.n_det < 1 or self.n_views < 1:
            raise ValueError("n_det and n_views must be >= 1")
        if not self.det_cell > 0:
            raise ValueError("det_cell must be positive")

    @property
    def n_rays(self) -> int:
        return self.n_views * self.n_det

    @property
    def view_step(self) -> float:
        """Angular spacing between views, degrees."""
        return self.angular_range / self.n_views

    def view_angles(self) -> np.ndarray:
        """Source angles in radians, one per view."""
        return np.radians(self.start_angle + np.arange(self.n_views) * self.view_step)

    def rotated(self, offset_deg: float) -> "FanBeamGeometry":
        return FanBeamGeometry(
            self.sod, self.sdd, self.n_det, self.det_cell, self.n_views,
            self.start_angle + offset_deg, self.angular_range,
        )

    def same_rays(self, other: "FanBeamGeometry") -> bool:
        return self == other

    def fov_radius(self) -> float:
        half = self.n_det * self.det_cell / 2.0
        return self.sod * math.sin(math.atan2(half, self.sdd))

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Source and detector-cell-center coordinates for all rays, each [n_rays, 2]."""
        phi = self.view_angles()
        c, s = np.cos(phi), np.sin(phi)
        offs = (np.arange(self.n_det) - (self.n_det - 1) / 2.0) * self.det_cell
        src = np.stack([self.sod * c, self.sod * s], axis=1)
        ctr = src - self.sdd * np.stack([c, s], axis=1)
        u = np.stack([-s, c], axis=1)
        det = ctr[:, None, :] + offs[None, :, None] * u[:, None, :]
        src = np.repeat(src, self.n_det, axis=0)
        return src, det.reshape(-1, 2)


@dataclass
class ImageGrid:
    nx: int
    ny: int
    pixel_size: float
    values: np.ndarray = None

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or not self.pixel_size > 0:
            raise ValueError("need nx, ny >= 1 and pixel_size > 0")
        if self.values is None:
            self.values = np.zeros((self.ny, self.nx))
        else:
            v = np.asarray(self.values, dtype=float)
            if v.size != self.nx * self.ny:
                raise ValueError(f"values has {v.size} entries, grid needs {self.nx * self.ny}")
            self.values = v.reshape(self.ny, self.nx)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def like(self, values=None) -> "ImageGrid":
        return ImageGrid(self.nx, self.ny, self.pixel_size, values)

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.pixel_size
        y = (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.pixel_size
        return np.meshgrid(x, y)


@dataclass(frozen=True)
class RayPath:
    source: tuple
    detector_point: tuple
    view: int
    det: int

    def __post_init__(self):
        if tuple(self.source) == tuple(self.detector_point):
            raise ValueError("degenerate ray: source equals detector point")

    @property
    def angle(self) -> float:
        """Source angle, radians."""
        return math.atan2(self.source[1], self.source[0])


@dataclass
class SparseRow:
    indices: np.ndarray
    lengths: np.ndarray

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.lengths.tolist()))

    def dot(self, values: np.ndarray) -> float:
        return float(np.dot(self.lengths, np.ravel(values)[self.indices]))


@dataclass
class Sinogram:
    data: np.ndarray
    geometry: FanBeamGeometry
    spectrum_label: str = ""

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.size != self.geometry.n_rays:
            raise ValueError(f"sinogram has {d.size} bins, geometry needs {self.geometry.n_rays}")
        self.data = d.reshape(self.geometry.n_views, self.geometry.n_det)

    def like(self, data, label=None) -> "Sinogram":
        return Sinogram(data, self.geometry, self.spectrum_label if label is None else label)


def ray_path(g: FanBeamGeometry, view: int, det: int) -> RayPath:
    if not 0 <= view < g.n_views:
        raise IndexError(f"view {view} out of range [0, {g.n_views})")
    if not 0 <= det < g.n_det:
        raise IndexError(f"det {det} out of range [0, {g.n_det})")
    phi = math.radians(g.start_angle + view * g.view_step)
    c, s = math.cos(phi), math.sin(phi)
    src = (g.sod * c, g.sod * s)
    off = (det - (g.n_det - 1) / 2.0) * g.det_cell
    dst = (src[0] - g.sdd * c - off * s, src[1] - g.sdd * s + off * c)
    return RayPath(src, dst, view, det)


@numba.njit(cache=True)
def _siddon(sx, sy, ex, ey, nx, ny, ps, idx_out, len_out):
    """Exact intersection lengths of segment (sx,sy)-(ex,ey) with the pixel grid."""
    xmin = -nx * ps / 2.0
    ymin = -ny * ps / 2.0
    xmax = -xmin
    ymax = -ymin
    dx = ex - sx
    dy = ey - sy
    length = math.sqrt(dx * dx + dy * dy)
    amin = 0.0
    amax = 1.0
    if dx != 0.0:
        a0 = (xmin - sx) / dx
        a1 = (xmax - sx) / dx
        amin = max(amin, min(a0, a1))
        amax = min(amax, max(a0, a1))
    elif sx < xmin or sx > xmax:
        return 0
    if dy != 0.0:
        a0 = (ymin - sy) / dy
        a1 = (ymax - sy) / dy
        amin = max(amin, min(a0, a1))
        amax = min(amax, max(a0, a1))
    elif sy < ymin or sy > ymax:
        return 0
    if amin >= amax:
        return 0

    alphas = np.empty(nx + ny + 4)
    na = 0
    alphas[na] = amin
    na += 1
    alphas[na] = amax
    na += 1
    if dx != 0.0:
        for i in range(nx + 1):
            a = (xmin + i * ps - sx) / dx
            if amin < a < amax:
                alphas[na] = a
                na += 1
    if dy != 0.0:
        for i in range(ny + 1):
            a = (ymin + i * ps - sy) / dy
            if amin < a < amax:
                alphas[na] = a
                na += 1
    al = np.sort(alphas[:na])

    n = 0
    tiny = 1e-12 * ps
    for i in range(na - 1):
        seg = (al[i + 1] - al[i]) * length
        if seg <= tiny:
            continue
        mid = 0.5 * (al[i] + al[i + 1])
        ix = int(math.floor((sx + mid * dx - xmin) / ps))
        iy = int(math.floor((sy + mid * dy - ymin) / ps))
        ix = min(max(ix, 0), nx - 1)
        iy = min(max(iy, 0), ny - 1)
        j = iy * nx + ix
        if n > 0 and idx_out[n - 1] == j:
            len_out[n - 1] += seg
        else:
            idx_out[n] = j
            len_out[n] = seg
            n += 1
    return n


def trace(ray: RayPath, grid: ImageGrid) -> SparseRow:
    cap = grid.nx + grid.ny + 4
    idx = np.empty(cap, dtype=np.int64)
    lens = np.empty(cap)
    n = _siddon(
        float(ray.source[0]), float(ray.source[1]),
        float(ray.detector_point[0]), float(ray.detector_point[1]),
        grid.nx, grid.ny, float(grid.pixel_size), idx, lens,
    )
    return SparseRow(idx[:n].copy(), lens[:n].copy())


@numba.njit(parallel=True, cache=True)
def _count_rows(src, dst, nx, ny, ps):
    n_rays = src.shape[0]
    counts = np.zeros(n_rays, dtype=np.int64)
    cap = nx + ny + 4
    for r in numba.prange(n_rays):
        idx = np.empty(cap, dtype=np.int64)
        lens = np.empty(cap)
        counts[r] = _siddon(src[r, 0], src[r, 1], dst[r, 0], dst[r, 1], nx, ny, ps, idx, lens)
    return counts


@numba.njit(parallel=True, cache=True)
def _fill_rows(src, dst, nx, ny, ps, indptr, indices, data):
    n_rays = src.shape[0]
    cap = nx + ny + 4
    for r in numba.prange(n_rays):
        idx = np.empty(cap, dtype=np.int64)
        lens = np.empty(cap)
        n = _siddon(src[r, 0], src[r, 1], dst[r, 0], dst[r, 1], nx, ny, ps, idx, lens)
        start = indptr[r]
        for k in range(n):
            indices[start + k] = idx[k]
            data[start + k] = lens[k]


@numba.njit(cache=True)
def _row_norm2(indptr, data):
    out = np.zeros(indptr.shape[0] - 1)
    for r in range(out.shape[0]):
        for k in range(indptr[r], indptr[r + 1]):
            out[r] += data[k] * data[k]
    return out


@numba.njit(parallel=True, cache=True)
def _csr_matvec(indptr, indices, data, x, out):
    for r in numba.prange(out.shape[0]):
        acc = 0.0
        for k in range(indptr[r], indptr[r + 1]):
            acc += data[k] * x[indices[k]]
        out[r] = acc


@numba.njit(cache=True)
def _csr_rmatvec(indptr, indices, data, y, out):
    # sequential scatter keeps the summation order fixed
    for r in range(indptr.shape[0] - 1):
        v = y[r]
        if v == 0.0:
            continue
        for k in range(indptr[r], indptr[r + 1]):
            out[indices[k]] += data[k] * v


@numba.njit(cache=True)
def _kaczmarz(indptr, indices, data, row_norm2, b, x, sweeps, relax):
    for _ in range(sweeps):
        for r in range(indptr.shape[0] - 1):
            nrm = row_norm2[r]
            if nrm == 0.0:
                continue
            acc = 0.0
            for k in range(indptr[r], indptr[r + 1]):
                acc += data[k] * x[indices[k]]
            c = relax * (b[r] - acc) / nrm
            if c == 0.0:
                continue
            for k in range(indptr[r], indptr[r + 1]):
                x[indices[k]] += c * data[k]


class SystemMatrix:
    """The projection operator R for one geometry and image grid, stored as CSR.

    ``length_scale`` multiplies every intersection length, e.g. 0.1 turns mm
    path lengths into cm for use with cm^2/g attenuation tables.
    """

    def __init__(self, g: FanBeamGeometry, nx: int, ny: int, pixel_size: float, length_scale: float = 1.0):
        self.geometry = g
        self.nx, self.ny, self.pixel_size = nx, ny, float(pixel_size)
        self.length_scale = float(length_scale)
        src, dst = g.endpoints()
        counts = _count_rows(src, dst, nx, ny, self.pixel_size)
        indptr = np.zeros(g.n_rays + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int64)
        data = np.empty(indptr[-1])
        _fill_rows(src, dst, nx, ny, self.pixel_size, indptr, indices, data)
        if self.length_scale != 1.0:
            data *= self.length_scale
        self.indptr, self.indices, self.data = indptr, indices, data
        self.row_norm2 = _row_norm2(indptr, data)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.geometry.n_rays, self.nx * self.ny)

    def row(self, r: int) -> SparseRow:
        a, b = self.indptr[r], self.indptr[r + 1]
        return SparseRow(self.indices[a:b].copy(), self.data[a:b].copy())

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(self.geometry.n_rays)
        _csr_matvec(self.indptr, self.indices, self.data, np.ascontiguousarray(x, dtype=float).ravel(), out)
        return out

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros(self.nx * self.ny)
        _csr_rmatvec(self.indptr, self.indices, self.data, np.ascontiguousarray(y, dtype=float).ravel(), out)
        return out

    def kaczmarz(self, b: np.ndarray, sweeps: int = 1, relax: float = 1.0, x0: np.ndarray | None = None) -> np.ndarray:
        x = np.zeros(self.nx * self.ny) if x0 is None else np.array(x0, dtype=float).ravel()
        _kaczmarz(
            self.indptr, self.indices, self.data, self.row_norm2,
            np.ascontiguousarray(b, dtype=float).ravel(), x, int(sweeps), float(relax),
        )
        return x


@lru_cache(maxsize=4)
def system_matrix(g: FanBeamGeometry, nx: int, ny: int, pixel_size: float, length_scale: float = 1.0) -> SystemMatrix:
    return SystemMatrix(g, nx, ny, pixel_size, length_scale)


def _matrix_for(g: FanBeamGeometry, grid: ImageGrid, length_scale: float) -> SystemMatrix:
    return system_matrix(g, grid.nx, grid.ny, float(grid.pixel_size), float(length_scale))


def forward_project(img: ImageGrid, g: FanBeamGeometry, length_scale: float = 1.0, label: str = "") -> Sinogram:
    R = _matrix_for(g, img, length_scale)
    return Sinogram(R.matvec(img.values), g, label)


def back_project(s: Sinogram, g: FanBeamGeometry, grid: ImageGrid, length_scale: float = 1.0) -> ImageGrid:
    """Apply R^T. ``grid`` supplies the image dimensions; its values are ignored."""
    if s.geometry.n_views != g.n_views or s.geometry.n_det != g.n_det:
        raise ValueError("sinogram dimensions do not match geometry")
    R = _matrix_for(g, grid, length_scale)
    return grid.like(R.rmatvec(s.data))


def art_reconstruct(
    s: Sinogram,
    g: FanBeamGeometry,
    grid: ImageGrid,
    sweeps: int = 1,
    relax: float = 1.0,
    length_scale: float = 1.0,
) -> ImageGrid:
    """Kaczmarz sweeps from a zero image, rays in view-major order."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if not 0 < relax <= 2:
        raise ValueError("relax must be in (0, 2]")
    if s.geometry.n_views != g.n_views or s.geometry.n_det != g.n_det:
        raise ValueError("sinogram dimensions do not match geometry")
    R = _matrix_for(g, grid, length_scale)
    return grid.like(R.kaczmarz(s.data, sweeps, relax))
