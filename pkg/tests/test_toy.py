import time

import numpy as np
import pytest

from msct.toy import TOY_SOLUTION, run_toy, toy_spectra, toy_targets


def test_targets():
    np.testing.assert_allclose(toy_targets(), [7.0914158169904296, 4.862927815818591], rtol=1e-13)


def test_toy_spectra_are_raw():
    low, high = toy_spectra()
    assert low.raw and high.raw
    assert low.total == pytest.approx(0.0011)


def test_soma_and_newton_reach_solution():
    run = run_toy()
    np.testing.assert_allclose(run.soma_x, TOY_SOLUTION, atol=1e-6)
    np.testing.assert_allclose(run.newton_x, TOY_SOLUTION, atol=1e-8)
    assert run.soma_trace.outer_iterations <= 5
    np.testing.assert_array_equal(run.newton_path[0], [0.0, 0.0])


def test_relaxed_toy_still_converges():
    run = run_toy(beta=0.9, kappa=0.95, max_outer=200)
    np.testing.assert_allclose(run.soma_x, TOY_SOLUTION, atol=1e-6)


def test_toy_is_fast():
    run_toy()
    t0 = time.perf_counter()
    run_toy()
    assert time.perf_counter() - t0 < 0.05
