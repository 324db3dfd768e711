"""Ellipse-composition phantoms rasterized to per-material density images."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import ImageGrid

__all__ = ["EllipseSpec", "Phantom", "rasterize", "builtin", "load_phantom", "BUILTIN_PHANTOMS"]

WATER, BONE, GOLD = 1.00, 1.92, 19.32
LOW_CONTRAST = 0.05 * WATER


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple
    semi_axes: tuple
    angle: float
    material: int
    density: float

    def __post_init__(self):
        a, b = self.semi_axes
        if not (a > 0 and b > 0):
            raise ValueError("semi-axes must be positive")

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        t = math.radians(self.angle)
        c, s = math.cos(t), math.sin(t)
        dx, dy = x - self.center[0], y - self.center[1]
        u = c * dx + s * dy
        v = -s * dx + c * dy
        a, b = self.semi_axes
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0


@dataclass
class Phantom:
    ellipses: list
    materials: int
    names: tuple = field(default=())

    def __post_init__(self):
        for e in self.ellipses:
            if not 0 <= e.material < self.materials:
                raise ValueError(f"material index {e.material} out of range for M={self.materials}")


def rasterize(p: Phantom, nx: int, ny: int, pixel_size: float) -> list[ImageGrid]:
    """Pixel-center sampling; each ellipse adds its density to its material image."""
    if nx < 1 or ny < 1:
        raise ValueError("nx, ny must be >= 1")
    grid = ImageGrid(nx, ny, pixel_size)
    x, y = grid.pixel_centers()
    images = [np.zeros(grid.shape) for _ in range(p.materials)]
    for e in p.ellipses:
        images[e.material][e.contains(x, y)] += e.density
    return [grid.like(v) for v in images]


def _replace(ellipses, center, axes, angle, material, density, under=()):
    """Insert a region of ``material`` that displaces whatever ``under`` holds."""
    for m, d in under:
        ellipses.append(EllipseSpec(center, axes, angle, m, -d))
    ellipses.append(EllipseSpec(center, axes, angle, material, density))


def _thorax2() -> Phantom:
    W, B = 0, 1
    el: list[EllipseSpec] = [EllipseSpec((0.0, 0.0), (170.0, 115.0), 0.0, W, WATER)]
    # lungs, partially filled with water-equivalent tissue
    for sx in (-1, 1):
        el.append(EllipseSpec((sx * 75.0, 10.0), (55.0, 75.0), sx * 10.0, W, -0.7 * WATER))
    # spine and spinal canal
    _replace(el, (0.0, -80.0), (20.0, 17.0), 0.0, B, BONE, under=[(W, WATER)])
    _replace(el, (0.0, -85.0), (7.0, 6.0), 0.0, W, WATER, under=[(B, BONE)])
    # sternum
    _replace(el, (0.0, 100.0), (18.0, 6.0), 0.0, B, BONE, under=[(W, WATER)])
    # ribs
    for sx in (-1, 1):
        for cx, cy, ang in ((150.0, 20.0, 80.0), (140.0, -50.0, 60.0), (110.0, 70.0, 120.0)):
            _replace(el, (sx * cx, cy), (9.0, 5.0), sx * ang, B, BONE, under=[(W, WATER)])
    # low-contrast inserts
    for cx, cy, r in ((-14.0, -35.0, 7.0), (14.0, -35.0, 5.0), (0.0, 45.0, 12.0)):
        el.append(EllipseSpec((cx, cy), (r, r), 0.0, W, LOW_CONTRAST))
    return Phantom(el, 2, ("water", "bone"))


def _oral3() -> Phantom:
    W, B, G = 0, 1, 2
    el: list[EllipseSpec] = [EllipseSpec((0.0, 0.0), (45.0, 40.0), 0.0, W, WATER)]
    # mandible/maxilla ring: outer bone ellipse minus inner one
    _replace(el, (0.0, 5.0), (34.0, 30.0), 0.0, B, BONE, under=[(W, WATER)])
    _replace(el, (0.0, 5.0), (26.0, 22.0), 0.0, W, WATER, under=[(B, BONE)])
    # gold crowns seated in the ring
    for k, t in enumerate(np.linspace(200.0, 340.0, 6)):
        r = math.radians(t)
        cx, cy = 30.0 * math.cos(r), 5.0 + 26.0 * math.sin(r)
        if k in (1, 4):
            _replace(el, (cx, cy), (1.5, 1.5), 0.0, G, GOLD, under=[(B, BONE)])
    return Phantom(el, 3, ("water", "bone", "gold"))


BUILTIN_PHANTOMS = {"thorax2": _thorax2, "oral3": _oral3}


def builtin(name: str) -> Phantom:
    try:
        return BUILTIN_PHANTOMS[name]()
    except KeyError:
        raise KeyError(f"unknown phantom {name!r}; choose from {sorted(BUILTIN_PHANTOMS)}") from None


def load_phantom(path, materials: int | None = None) -> Phantom:
    """Read ``material cx cy a b angle density`` rows ('#' comments allowed).

    An optional ``materials = N`` line fixes M; otherwise M = max index + 1.
    """
    ellipses = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("materials"):
            materials = int(line.split("=", 1)[1])
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
        m = int(parts[0])
        cx, cy, a, b, ang, d = map(float, parts[1:])
        ellipses.append(EllipseSpec((cx, cy), (a, b), ang, m, d))
    if materials is None:
        materials = max((e.material for e in ellipses), default=-1) + 1
    return Phantom(ellipses, materials)
