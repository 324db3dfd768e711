"""Two-spectrum, two-material toy system with known solution (bone, water) = (1, 4).

Four energies, two per spectrum. The spectrum weights already include the
energy bin width and do not sum to one, so they are stored raw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import PolyEquation, poly_project
from .soma import SolveOptions, SolveTrace, newton_solve, solve_system
from .spectra import MaterialTable, Spectrum

__all__ = ["TOY_SOLUTION", "toy_materials", "toy_spectra", "toy_targets", "toy_builders", "ToyRun", "run_toy"]

TOY_SOLUTION = np.array([1.0, 4.0])


def toy_materials() -> MaterialTable:
    return MaterialTable(
        energies=np.array([30, 40, 120, 130]),
        mac=np.array(
            [
                [0.2812, 0.1342, 0.0328, 0.0314],
                [0.0395, 0.0281, 0.0159, 0.0154],
            ]
        ),
        densities=np.array([1.92, 1.00]),
        names=("bone", "water"),
    )


def toy_spectra() -> tuple[Spectrum, Spectrum]:
    low = Spectrum(np.array([30, 40]), np.array([0.0002, 0.0009]), label="low", raw=True)
    high = Spectrum(np.array([120, 130]), np.array([0.0056, 0.0029]), label="high", raw=True)
    return low, high


def toy_targets(x=TOY_SOLUTION) -> np.ndarray:
    t = toy_materials()
    return np.array([poly_project(x, s, t) for s in toy_spectra()])


def toy_builders(targets=None) -> list[PolyEquation]:
    t = toy_materials()
    targets = toy_targets() if targets is None else targets
    return [PolyEquation(s, t, p) for s, p in zip(toy_spectra(), targets)]


@dataclass
class ToyRun:
    targets: np.ndarray
    soma_x: np.ndarray
    soma_trace: SolveTrace
    newton_x: np.ndarray
    newton_path: list


def run_toy(x0=(0.0, 0.0), beta: float = 1.0, kappa: float = 1.0, max_outer: int = 50) -> ToyRun:
    targets = toy_targets()
    builders = toy_builders(targets)
    opts = SolveOptions(beta0=beta, kappa=kappa, max_outer=max_outer)
    x, trace = solve_system(np.asarray(x0, dtype=float), builders, opts)
    path: list = []
    xn = newton_solve(np.asarray(x0, dtype=float), builders, SolveOptions(max_outer=max_outer), path=path)
    return ToyRun(targets, x, trace, xn, path)
