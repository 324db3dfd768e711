import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from msct.forward import (
    MM_TO_CM,
    ProjectionError,
    PolyEquation,
    add_poisson_noise,
    linearize,
    linearize_many,
    poly_project,
    poly_project_many,
    simulate_acquisition,
)
from msct.geometry import FanBeamGeometry, ImageGrid, Sinogram, forward_project, ray_path
from msct.spectra import Spectrum, builtin_materials, synthetic_spectrum
from msct.toy import toy_materials, toy_spectra

TABLE = builtin_materials(("water", "bone", "gold"))
SPECTRA = [synthetic_spectrum(40, (("aluminium", 1.5),)), synthetic_spectrum(80), synthetic_spectrum(140)]
q_vec = arrays(np.float64, 3, elements=st.floats(0, 5, allow_nan=False))


def test_toy_projection_values():
    low, high = toy_spectra()
    t = toy_materials()
    assert poly_project([1, 4], low, t) == pytest.approx(7.0914158169904296, abs=1e-12)
    assert poly_project([1, 4], high, t) == pytest.approx(4.862927815818591, abs=1e-12)


@pytest.mark.parametrize("s", SPECTRA, ids=lambda s: s.label)
def test_zero_path_gives_zero_projection(s):
    assert poly_project(np.zeros(3), s, TABLE) == pytest.approx(0.0, abs=1e-14)


def test_no_overflow_at_high_attenuation():
    s = SPECTRA[0]
    p = poly_project([0.0, 0.0, 40.0], s, TABLE)
    assert np.isfinite(p) and p > 50


def test_infinite_path_raises():
    with pytest.raises(ProjectionError):
        poly_project([np.inf, 0.0, 0.0], SPECTRA[1], TABLE)


def test_vectorized_matches_scalar(rng):
    Q = rng.uniform(0, 3, (20, 3))
    for s in SPECTRA:
        many = poly_project_many(Q, s, TABLE)
        eq = PolyEquation(s, TABLE, 0.0)
        np.testing.assert_allclose(many, [eq.value(q) for q in Q], rtol=1e-13)


@given(q_vec, st.integers(0, 2), st.integers(0, 2), st.floats(0.01, 2))
def test_monotone_in_each_material(q, s_idx, m, dq):
    s = SPECTRA[s_idx]
    q2 = q.copy()
    q2[m] += dq
    assert poly_project(q2, s, TABLE) >= poly_project(q, s, TABLE)


@given(arrays(np.float64, 2, elements=st.floats(0, 10, allow_nan=False)), st.booleans())
def test_beam_hardening_bounds_two_energy(q, high):
    # with two energies, p lies between the two monochromatic line integrals
    s = toy_spectra()[int(high)]
    t = toy_materials()
    theta = t.for_spectrum(s)
    lines = q @ theta
    p = poly_project(q, s, t) + np.log(s.weights.sum())
    assert lines.min() - 1e-12 <= p <= lines.max() + 1e-12


@given(q_vec, st.integers(0, 2))
def test_gradient_matches_central_differences(q, s_idx):
    s = SPECTRA[s_idx]
    eq = linearize(q, s, TABLE, 0.0)
    h = 1e-5
    fd = np.empty(3)
    for m in range(3):
        e = np.zeros(3)
        e[m] = h
        fd[m] = (poly_project(q + e, s, TABLE) - poly_project(q - e, s, TABLE)) / (2 * h)
    np.testing.assert_allclose(eq.a_row, fd, rtol=1e-5)
    assert np.all(eq.a_row > 0)


def test_monochromatic_is_exactly_linear(rng):
    s = Spectrum(np.array([70]), np.array([1.0]))
    col = TABLE.energy_columns([70])[0]
    for q in rng.uniform(0, 5, (10, 3)):
        eq = linearize(q, s, TABLE, 0.0)
        np.testing.assert_array_equal(eq.a_row, TABLE.mac[:, col])
        assert poly_project(q, s, TABLE) == pytest.approx(eq.a_row @ q, rel=1e-12)


def test_intercept_on_consistent_point(rng):
    q = rng.uniform(0, 2, 3)
    s = SPECTRA[1]
    eq = linearize(q, s, TABLE, poly_project(q, s, TABLE))
    assert eq.b == pytest.approx(eq.a_row @ q, rel=1e-12)
    assert eq.residual(q) == pytest.approx(0.0, abs=1e-12)


def test_linearize_many_matches_single(rng):
    Q = rng.uniform(0, 2, (5, 3))
    p_meas = rng.uniform(0, 5, 5)
    A, b, p = linearize_many(Q, SPECTRA[2], TABLE, p_meas)
    for r in range(5):
        eq = linearize(Q[r], SPECTRA[2], TABLE, p_meas[r])
        np.testing.assert_allclose(A[r], eq.a_row, rtol=1e-12)
        assert b[r] == pytest.approx(eq.b, rel=1e-12)
        assert p[r] == pytest.approx(eq.p_model, rel=1e-12)


GEOM = FanBeamGeometry(541.0, 949.0, 48, 6.0, 30)
GRID = ImageGrid(24, 24, 10.0)


def _images(rng):
    w = GRID.like(rng.uniform(0, 1, GRID.shape))
    b = GRID.like(rng.uniform(0, 0.5, GRID.shape))
    return [w, b]


def test_simulate_acquisition_zero_phantom():
    t = builtin_materials()
    sinos = simulate_acquisition([GRID.like(), GRID.like()], [GEOM, GEOM], SPECTRA[1:], t)
    for s in sinos:
        assert np.abs(s.data).max() < 1e-12


def test_simulate_acquisition_matches_per_ray_model(rng):
    t = builtin_materials()
    imgs = _images(rng)
    geoms = [GEOM, GEOM.rotated(0.25)]
    sinos = simulate_acquisition(imgs, geoms, SPECTRA[1:], t)
    for g, s, sino in zip(geoms, SPECTRA[1:], sinos):
        q = np.stack([forward_project(im, g, MM_TO_CM).data for im in imgs], axis=-1)
        assert sino.geometry == g
        for view, det in ((0, 0), (7, 20), (29, 47)):
            assert sino.data[view, det] == pytest.approx(poly_project(q[view, det], s, t), rel=1e-12)
    # rotated ray sets really differ
    assert ray_path(geoms[1], 3, 5) != ray_path(geoms[0], 3, 5)


def test_poisson_mean_at_unit_projection():
    i0 = 1e5
    g = FanBeamGeometry(541.0, 949.0, 100, 1.0, 100)
    s = Sinogram(np.ones(g.n_rays), g)
    noisy = add_poisson_noise(s, i0, seed=3)
    counts = i0 * np.exp(-noisy.data)
    mean, lam = counts.mean(), i0 * np.exp(-1)
    assert abs(mean - lam) <= 3 * np.sqrt(lam / counts.size)


def test_poisson_zero_projection_small_bias():
    g = FanBeamGeometry(541.0, 949.0, 50, 1.0, 20)
    noisy = add_poisson_noise(Sinogram(np.zeros(g.n_rays), g), 1e9, seed=0)
    assert abs(noisy.data.mean()) < 1e-5


def test_poisson_deterministic_and_seed_sensitive():
    g = FanBeamGeometry(541.0, 949.0, 50, 1.0, 20)
    s = Sinogram(np.full(g.n_rays, 2.0), g)
    a, b, c = add_poisson_noise(s, 1e4, 5), add_poisson_noise(s, 1e4, 5), add_poisson_noise(s, 1e4, 6)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_poisson_zero_counts_clipped():
    g = FanBeamGeometry(541.0, 949.0, 10, 1.0, 10)
    noisy = add_poisson_noise(Sinogram(np.full(g.n_rays, 30.0), g), 10, 0)
    assert np.all(noisy.data == pytest.approx(np.log(10)))


def test_poisson_rejects_bad_input():
    g = FanBeamGeometry(541.0, 949.0, 10, 1.0, 10)
    with pytest.raises(ValueError):
        add_poisson_noise(Sinogram(np.full(g.n_rays, -1.0), g), 1e4, 0)
    with pytest.raises(ValueError):
        add_poisson_noise(Sinogram(np.zeros(g.n_rays), g), 0.5, 0)
