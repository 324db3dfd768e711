import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msct.geometry import (
    FanBeamGeometry,
    ImageGrid,
    RayPath,
    Sinogram,
    art_reconstruct,
    back_project,
    forward_project,
    ray_path,
    system_matrix,
    trace,
)

GEOM = FanBeamGeometry(541.0, 949.0, 64, 4.0, 45)
GRID = ImageGrid(32, 32, 6.0)


def clipped_chord(p0, p1, half_w, half_h):
    """Length of segment p0-p1 inside [-half_w, half_w] x [-half_h, half_h] (Liang-Barsky)."""
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 + half_w), (dx, half_w - x0), (-dy, y0 + half_h), (dy, half_h - y0)):
        if p == 0:
            if q < 0:
                return 0.0
            continue
        t = q / p
        if p < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
    return max(t1 - t0, 0.0) * math.hypot(dx, dy)


def test_geometry_validation():
    with pytest.raises(ValueError):
        FanBeamGeometry(949.0, 541.0, 10, 1.0, 10)
    with pytest.raises(ValueError):
        FanBeamGeometry(541.0, 949.0, 0, 1.0, 10)
    with pytest.raises(ValueError):
        FanBeamGeometry(541.0, 949.0, 10, 0.0, 10)


def test_central_ray_passes_through_origin():
    g = FanBeamGeometry(500.0, 1000.0, 5, 1.0, 8)
    r = ray_path(g, 0, 2)
    (sx, sy), (dx, dy) = r.source, r.detector_point
    assert sx == pytest.approx(500.0) and sy == pytest.approx(0.0)
    # origin lies on the segment
    assert abs(sx * dy - sy * dx) < 1e-9
    assert math.hypot(dx - sx, dy - sy) == pytest.approx(1000.0)


def test_start_angle_rotates_source():
    a = ray_path(GEOM, 3, 10)
    b = ray_path(GEOM.rotated(0.25), 3, 10)
    assert math.degrees(b.angle - a.angle) == pytest.approx(0.25)


@pytest.mark.parametrize("view, det", [(45, 0), (-1, 0), (0, 64)])
def test_ray_path_bounds(view, det):
    with pytest.raises(IndexError):
        ray_path(GEOM, view, det)


@given(st.integers(0, 43), st.integers(0, 63))
def test_view_shift_periodicity(view, det):
    shifted = GEOM.rotated(GEOM.view_step)
    a, b = ray_path(shifted, view, det), ray_path(GEOM, view + 1, det)
    np.testing.assert_allclose(a.source, b.source, atol=1e-9)
    np.testing.assert_allclose(a.detector_point, b.detector_point, atol=1e-9)


def test_degenerate_ray_rejected():
    with pytest.raises(ValueError):
        RayPath((1.0, 1.0), (1.0, 1.0), 0, 0)


def test_trace_single_pixel_axis_and_diagonal():
    grid = ImageGrid(1, 1, 2.0)
    row = trace(RayPath((-5.0, 0.0), (5.0, 0.0), 0, 0), grid)
    assert row.entries == [(0, pytest.approx(2.0))]
    row = trace(RayPath((-3.0, -3.0), (3.0, 3.0), 0, 0), ImageGrid(1, 1, 1.5))
    assert row.lengths.sum() == pytest.approx(1.5 * math.sqrt(2))


def test_trace_miss_gives_empty_row():
    row = trace(RayPath((-500.0, 200.0), (500.0, 200.0), 0, 0), GRID)
    assert row.indices.size == 0


@given(
    st.floats(0, 2 * math.pi),
    st.floats(-150, 150),
    st.floats(0, 2 * math.pi),
)
def test_trace_lengths_sum_to_clipped_chord(phi, offset, tilt):
    src = (300 * math.cos(phi), 300 * math.sin(phi))
    direction = (math.cos(phi + math.pi + 0.3 * math.sin(tilt)), math.sin(phi + math.pi + 0.3 * math.sin(tilt)))
    dst = (src[0] + 600 * direction[0] - offset * direction[1], src[1] + 600 * direction[1] + offset * direction[0])
    row = trace(RayPath(src, dst, 0, 0), GRID)
    half = GRID.nx * GRID.pixel_size / 2
    expect = clipped_chord(src, dst, half, half)
    assert row.lengths.sum() == pytest.approx(expect, rel=1e-9, abs=1e-9)
    assert np.all(row.lengths > 0)
    assert len(set(row.indices.tolist())) == row.indices.size
    assert row.indices.size == 0 or (row.indices.min() >= 0 and row.indices.max() < GRID.nx * GRID.ny)


def test_trace_is_deterministic():
    r = ray_path(GEOM, 7, 20)
    a, b = trace(r, GRID), trace(r, GRID)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.lengths, b.lengths)


def test_system_matrix_rows_match_trace():
    R = system_matrix(GEOM, GRID.nx, GRID.ny, GRID.pixel_size)
    for r in (0, 100, 1500, GEOM.n_rays - 1):
        row = trace(ray_path(GEOM, r // GEOM.n_det, r % GEOM.n_det), GRID)
        np.testing.assert_array_equal(R.row(r).indices, row.indices)
        np.testing.assert_allclose(R.row(r).lengths, row.lengths, rtol=1e-14)


def test_forward_project_linear(rng):
    f = GRID.like(rng.uniform(0, 1, GRID.shape))
    assert not forward_project(GRID.like(), GEOM).data.any()
    np.testing.assert_allclose(
        forward_project(f.like(2.5 * f.values), GEOM).data, 2.5 * forward_project(f, GEOM).data, rtol=1e-12
    )


def test_uniform_disk_central_ray_chord():
    n, ps, radius, rho = 512, 0.25, 40.0, 1.3
    grid = ImageGrid(n, n, ps)
    x, y = grid.pixel_centers()
    disk = grid.like(np.where(x**2 + y**2 <= radius**2, rho, 0.0))
    g = FanBeamGeometry(500.0, 1000.0, 3, 1.0, 4)
    p = forward_project(disk, g).data
    # staircase boundary costs at most about one pixel of chord at each end
    assert p[:, 1] == pytest.approx(rho * 2 * radius, abs=rho * 2 * ps)


def test_adjointness(rng):
    for _ in range(10):
        f = rng.standard_normal(GRID.shape)
        p = rng.standard_normal((GEOM.n_views, GEOM.n_det))
        lhs = float(forward_project(GRID.like(f), GEOM).data.ravel() @ p.ravel())
        rhs = float(f.ravel() @ back_project(Sinogram(p, GEOM), GEOM, GRID).values.ravel())
        assert abs(lhs - rhs) <= 1e-8 * abs(lhs) + 1e-12


def test_back_project_single_bin_support():
    p = np.zeros((GEOM.n_views, GEOM.n_det))
    p[5, 30] = 1.0
    img = back_project(Sinogram(p, GEOM), GEOM, GRID).values.ravel()
    row = trace(ray_path(GEOM, 5, 30), GRID)
    assert set(np.flatnonzero(img)) == set(row.indices.tolist())
    assert not back_project(Sinogram(np.zeros_like(p), GEOM), GEOM, GRID).values.any()


def test_back_project_dimension_mismatch():
    other = FanBeamGeometry(541.0, 949.0, 32, 4.0, 45)
    with pytest.raises(ValueError):
        back_project(Sinogram(np.zeros(other.n_rays), other), GEOM, GRID)


def test_art_residual_decreases_per_sweep(rng):
    f = GRID.like(rng.uniform(0, 1, GRID.shape))
    s = forward_project(f, GEOM)
    R = system_matrix(GEOM, GRID.nx, GRID.ny, GRID.pixel_size)
    prev = np.linalg.norm(s.data)
    for sweeps in (1, 2, 3, 4):
        rec = art_reconstruct(s, GEOM, GRID, sweeps=sweeps)
        res = np.linalg.norm(R.matvec(rec.values) - s.data.ravel())
        assert res < prev
        prev = res


def test_art_single_ray_is_exact_projection():
    g = FanBeamGeometry(500.0, 1000.0, 1, 1.0, 1)
    grid = ImageGrid(8, 8, 2.0)
    s = Sinogram(np.array([3.0]), g)
    rec = art_reconstruct(s, g, grid)
    assert forward_project(rec, g).data[0, 0] == pytest.approx(3.0, rel=1e-12)
    half = art_reconstruct(s, g, grid, relax=0.5)
    assert forward_project(half, g).data[0, 0] == pytest.approx(1.5, rel=1e-12)


def test_art_zero_and_validation():
    s = Sinogram(np.zeros(GEOM.n_rays), GEOM)
    assert not art_reconstruct(s, GEOM, GRID).values.any()
    with pytest.raises(ValueError):
        art_reconstruct(s, GEOM, GRID, sweeps=0)
    with pytest.raises(ValueError):
        art_reconstruct(s, GEOM, GRID, relax=2.5)


def test_sinogram_checks_size():
    with pytest.raises(ValueError):
        Sinogram(np.zeros(7), GEOM)
