import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from msct.metrics import MetricReport, distance_data, distance_image, psnr, report, rmse, ssim, write_reports

vec = arrays(np.float64, 16, elements=st.floats(-10, 10, allow_nan=False))


def test_distance_data_examples():
    p = [np.array([3.0, 4.0])]
    assert distance_data(p, p) == 0.0
    assert distance_data(p, [np.zeros(2)]) == 1.0
    assert distance_data(p, [np.array([3.0, 0.0])]) == pytest.approx(0.64)
    assert distance_data([p[0], 2 * p[0]], [np.zeros(2), np.zeros(2)]) == 2.0


def test_distance_image_examples():
    f = [np.array([1.0, 1.0])]
    assert distance_image(f, f) == 0.0
    assert distance_image(f, [np.array([1.0, 0.0])]) == pytest.approx(0.5)
    assert distance_image(f * 3, [np.zeros(2)] * 3) == 3.0


def test_distances_reject_zero_norm_and_mismatch():
    with pytest.raises(ValueError):
        distance_data([np.zeros(2)], [np.ones(2)])
    with pytest.raises(ValueError):
        distance_image([np.ones(2)], [np.ones(3)])


@given(vec, vec)
def test_distance_zero_iff_equal(a, b):
    if not a.any():
        return
    d = distance_image([a], [b])
    assert d >= 0
    assert (d == 0) == np.array_equal(a, b)


def test_psnr_examples():
    assert psnr(np.array([1.0]), np.array([0.5])) == pytest.approx(6.020599913279624)
    assert psnr(np.ones(4), np.ones(4)) == math.inf
    with pytest.raises(ValueError):
        psnr(np.zeros(4), np.ones(4))
    with pytest.raises(ValueError):
        psnr(np.ones(4), np.ones(5))


@given(vec, st.floats(0.1, 100))
def test_psnr_scale_invariant(noise, c):
    ref = np.linspace(0.5, 2.0, 16)
    est = ref + 0.01 * noise
    if np.array_equal(ref, est):
        return
    assert psnr(c * ref, c * est) == pytest.approx(psnr(ref, est), abs=1e-9)


def test_psnr_decreases_with_noise_amplitude(rng):
    ref = rng.uniform(0, 1, (32, 32))
    means = []
    for amp in (0.01, 0.02, 0.04):
        vals = [psnr(ref, ref + amp * rng.standard_normal(ref.shape)) for _ in range(100)]
        means.append((np.mean(vals), np.std(vals)))
    for (m0, s0), (m1, s1) in zip(means, means[1:]):
        assert m1 + 3 * s1 < m0 - 3 * s0


def test_rmse_examples():
    assert rmse(np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(3.5355339059327378)
    x = np.arange(9.0)
    assert rmse(x, x) == 0.0
    assert rmse(x, x + 0.25) == pytest.approx(0.25)


@given(vec, vec, vec)
def test_rmse_triangle_inequality(a, b, c):
    assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-9


def test_ssim_identical_and_shifted(rng):
    ref = rng.uniform(0, 1, (32, 32))
    assert ssim(ref, ref) == pytest.approx(1.0)
    shifted = ssim(ref, ref + 0.3)
    assert -1 <= shifted < 1


@given(arrays(np.float64, (12, 12), elements=st.floats(0, 5, allow_nan=False)))
def test_ssim_within_bounds(est):
    ref = np.arange(144.0).reshape(12, 12) / 10
    assert -1 <= ssim(ref, est) <= 1


def test_report_and_csv(tmp_path):
    refs = [np.ones((8, 8)), 2 * np.ones((8, 8))]
    r = report(refs, refs, ["water", "bone"], p_meas=[np.ones(3)], p_est=[np.ones(3)])
    assert isinstance(r, MetricReport)
    assert r.d_image == 0.0 and r.d_data == 0.0
    assert r.psnr["bone"] == math.inf and r.ssim["water"] == pytest.approx(1.0)
    r.iteration = 5
    write_reports(tmp_path / "m.csv", [r])
    text = (tmp_path / "m.csv").read_text().splitlines()
    assert text[0].startswith("iter,") and text[1].startswith("5,")
