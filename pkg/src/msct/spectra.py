"""X-ray spectra and basis-material attenuation tables.

Spectra live on an integer keV grid. Weights are the per-bin spectral
fractions; ``delta`` is the bin-width multiplier applied inside the
polychromatic sum (1 for 1-keV grids, and also 1 for hand-built toy spectra
whose weights already fold the bin width in).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "SpectrumLoadError",
    "Spectrum",
    "MaterialTable",
    "load_spectrum",
    "load_two_column",
    "normalize",
    "mac_lookup",
    "load_material_table",
    "builtin_materials",
    "synthetic_spectrum",
    "BUILTIN_DENSITIES",
]

BUILTIN_DENSITIES = {
    "water": 1.0,
    "bone": 1.92,
    "gold": 19.32,
    "aluminium": 2.699,
    "copper": 8.96,
}


class SpectrumLoadError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    weights: np.ndarray
    label: str = ""
    delta: float = 1.0
    # raw spectra keep their weights as given (no sum-to-one requirement)
    raw: bool = False

    def __post_init__(self):
        e = np.asarray(self.energies)
        w = np.asarray(self.weights, dtype=float)
        if e.ndim != 1 or w.shape != e.shape or e.size < 1:
            raise ValueError("energies and weights must be 1-D of equal nonzero length")
        if not np.all(e == np.round(e)):
            raise ValueError("energies must be integer keV")
        if np.any(np.diff(e) <= 0):
            raise ValueError("energies must be strictly ascending")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        e = e.astype(np.int64)
        e.setflags(write=False)
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "weights", w)

    @property
    def total(self) -> float:
        return float(np.sum(self.weights) * self.delta)

    @property
    def is_normalized(self) -> bool:
        return abs(self.total - 1.0) <= 1e-12

    def check_normalized(self):
        if not self.raw and abs(self.total - 1.0) > 1e-9:
            raise ValueError(
                f"spectrum {self.label!r} sums to {self.total:.6g}; normalize it or mark it raw"
            )

    def __hash__(self):
        return hash((self.label, self.delta, self.raw, self.energies.tobytes(), self.weights.tobytes()))

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (
            self.label == other.label
            and self.delta == other.delta
            and self.raw == other.raw
            and np.array_equal(self.energies, other.energies)
            and np.array_equal(self.weights, other.weights)
        )


def load_two_column(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``keV value`` rows, whitespace or comma separated, '#' comments allowed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpectrumLoadError(f"{path}: {exc.strerror or exc}") from exc
    xs, ys = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise SpectrumLoadError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise SpectrumLoadError(f"{path}:{lineno}: not numeric: {line!r}") from None
        xs.append(x)
        ys.append(y)
    if not xs:
        raise SpectrumLoadError(f"{path}: no data rows")
    return np.array(xs), np.array(ys)


def _integer_grid(path, energies: np.ndarray) -> np.ndarray:
    if not np.all(energies == np.round(energies)):
        raise SpectrumLoadError(f"{path}: energies must be integer keV")
    e = energies.astype(np.int64)
    steps = np.diff(e)
    if np.any(steps <= 0):
        raise SpectrumLoadError(f"{path}: energies must be strictly ascending")
    return e


def load_spectrum(path, label: str | None = None, raw: bool = False) -> Spectrum:
    """Load a two-column (keV, weight) spectrum file. The grid must be uniform."""
    energies, weights = load_two_column(path)
    e = _integer_grid(path, energies)
    steps = np.diff(e)
    if steps.size and np.any(steps != steps[0]):
        raise SpectrumLoadError(f"{path}: non-uniform energy grid")
    bad = np.flatnonzero(weights < 0)
    if bad.size:
        raise SpectrumLoadError(f"{path}: negative weight at {e[bad[0]]} keV")
    return Spectrum(e, weights, label=label if label is not None else Path(path).stem, raw=raw)


def save_spectrum(s: Spectrum, path):
    lines = [f"# spectrum {s.label}", "# keV  weight"]
    lines += [f"{e:d} {w:.17g}" for e, w in zip(s.energies, s.weights)]
    Path(path).write_text("\n".join(lines) + "\n")


def normalize(s: Spectrum) -> Spectrum:
    total = float(np.sum(s.weights))
    if not total > 0:
        raise ValueError("cannot normalize an all-zero spectrum")
    return replace(s, weights=s.weights / (total * s.delta), raw=False)


@dataclass(frozen=True)
class MaterialTable:
    """Mass attenuation coefficients, ``mac[m, i]`` for material m at ``energies[i]``."""

    energies: np.ndarray
    mac: np.ndarray
    densities: tuple
    names: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.energies)
        mac = np.atleast_2d(np.asarray(self.mac, dtype=float))
        if e.ndim != 1 or mac.shape[1] != e.size:
            raise ValueError("mac must be [materials x energies]")
        if not np.all(e == np.round(e)) or np.any(np.diff(e) <= 0):
            raise ValueError("energies must be ascending integer keV")
        if not np.all(mac > 0):
            raise ValueError("mass attenuation coefficients must be positive")
        if len(self.names) != mac.shape[0] or len(self.densities) != mac.shape[0]:
            raise ValueError("one name and one density per material")
        e = e.astype(np.int64)
        e.setflags(write=False)
        mac = mac.copy()
        mac.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "mac", mac)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "densities", tuple(float(d) for d in self.densities))
        object.__setattr__(self, "_index", {int(v): i for i, v in enumerate(e)})

    @property
    def n_materials(self) -> int:
        return self.mac.shape[0]

    def material_index(self, material) -> int:
        if isinstance(material, str):
            try:
                return self.names.index(material)
            except ValueError:
                raise KeyError(f"unknown material {material!r}; have {self.names}") from None
        m = int(material)
        if not 0 <= m < self.n_materials:
            raise IndexError(f"material index {m} out of range")
        return m

    def energy_columns(self, energies) -> np.ndarray:
        cols = []
        for e in np.atleast_1d(energies):
            col = self._index.get(int(e)) if float(e).is_integer() else None
            if col is None:
                raise KeyError(f"{e} keV is not on the attenuation table grid")
            cols.append(col)
        return np.array(cols, dtype=np.int64)

    def for_spectrum(self, s: Spectrum) -> np.ndarray:
        """[M x len(s.energies)] coefficients aligned with a spectrum's bins."""
        return self.mac[:, self.energy_columns(s.energies)]

    def subset(self, materials: Sequence) -> "MaterialTable":
        idx = [self.material_index(m) for m in materials]
        return MaterialTable(
            self.energies,
            self.mac[idx],
            tuple(self.densities[i] for i in idx),
            tuple(self.names[i] for i in idx),
        )

    def __hash__(self):
        return hash((self.names, self.densities, self.energies.tobytes(), self.mac.tobytes()))

    def __eq__(self, other):
        if not isinstance(other, MaterialTable):
            return NotImplemented
        return (
            self.names == other.names
            and self.densities == other.densities
            and np.array_equal(self.energies, other.energies)
            and np.array_equal(self.mac, other.mac)
        )


def mac_lookup(t: MaterialTable, material, energy) -> float:
    m = t.material_index(material)
    col = t.energy_columns([energy])[0]
    return float(t.mac[m, col])


def load_material_table(paths: Sequence, names: Sequence[str], densities: Sequence[float]) -> MaterialTable:
    """Build a table from one two-column (keV, cm^2/g) file per material.

    All files must share the same energy grid; nothing is interpolated.
    """
    grid = None
    rows = []
    for path in paths:
        energies, mac = load_two_column(path)
        e = _integer_grid(path, energies)
        if grid is None:
            grid = e
        elif not np.array_equal(grid, e):
            raise SpectrumLoadError(f"{path}: energy grid differs from {paths[0]}")
        rows.append(mac)
    return MaterialTable(grid, np.vstack(rows), tuple(densities), tuple(names))


def _data_path(name: str) -> Path:
    return Path(str(resources.files("msct") / "data" / name))


def builtin_materials(names: Sequence[str] = ("water", "bone")) -> MaterialTable:
    """Bundled tables on a 20-150 keV grid: water, bone, gold, aluminium, copper."""
    paths = []
    for n in names:
        p = _data_path(f"mac_{n}.txt")
        if not p.exists():
            raise KeyError(f"no bundled attenuation table for {n!r}")
        paths.append(p)
    return load_material_table(paths, names, [BUILTIN_DENSITIES[n] for n in names])


_TUNGSTEN_LINES = ((59, 0.55), (58, 0.30), (67, 0.15))  # K-alpha1, K-alpha2, K-beta (keV, relative)


def synthetic_spectrum(
    kvp: int,
    filters: Sequence[tuple[str, float]] = (("aluminium", 2.5),),
    e_min: int = 20,
    line_fraction: float = 0.12,
    label: str | None = None,
) -> Spectrum:
    """Kramers bremsstrahlung plus tungsten K lines, hardened by filters (name, mm).

    A stand-in for tube-simulator output: the continuum is (kVp - E)/E photons per
    keV, the K lines carry ``line_fraction`` of the unfiltered photons when kVp
    exceeds the K edge (69.5 keV). The result is normalized.
    """
    e = np.arange(e_min, kvp, dtype=np.int64)
    if e.size == 0:
        raise ValueError("kvp must exceed e_min")
    w = (kvp - e) / e.astype(float)
    if kvp > 69.5:
        cont = w.sum()
        for energy, rel in _TUNGSTEN_LINES:
            if energy < kvp:
                w[energy - e_min] += line_fraction * cont * rel
    if filters:
        names = [f[0] for f in filters]
        tab = builtin_materials(names)
        cols = tab.energy_columns(e)
        for m, (_, mm) in enumerate(filters):
            w = w * np.exp(-tab.mac[m, cols] * tab.densities[m] * mm / 10.0)
    s = Spectrum(e, w, label=label or f"{kvp}kVp")
    return normalize(s)
