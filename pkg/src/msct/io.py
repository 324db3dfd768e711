"""Raw little-endian arrays with a ``key = value`` sidecar header.

``name.raw`` holds the samples (row-major); ``name.hdr`` holds the shape,
sample type and enough geometry to reload without the run config. Images and
sinograms default to float32; checkpoints use float64 so a resumed run
continues bit-exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import FanBeamGeometry, ImageGrid, Sinogram

__all__ = ["save_image", "load_image", "save_sinogram", "load_sinogram", "read_header", "HeaderError"]

_DTYPES = {"float32": "<f4", "float64": "<f8"}
_GEOMETRY_KEYS = ("sod", "sdd", "n_det", "det_cell", "n_views", "start_angle", "angular_range")


class HeaderError(ValueError):
    pass


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".raw", ".hdr"):
        p = p.with_suffix("")
    return p.with_suffix(".raw"), p.with_suffix(".hdr")


def _write(path, data: np.ndarray, header: dict, dtype: str):
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
    raw, hdr = _paths(path)
    raw.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(data, dtype=_DTYPES[dtype]).tofile(raw)
    lines = [f"{k} = {v}" for k, v in {**header, "dtype": dtype, "byte_order": "little"}.items()]
    hdr.write_text("\n".join(lines) + "\n")
    return raw, hdr


def read_header(path) -> dict:
    _, hdr = _paths(path)
    try:
        text = hdr.read_text()
    except OSError as e:
        raise HeaderError(f"cannot read header {hdr}: {e}") from e
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HeaderError(f"{hdr}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _read(path, header: dict, count: int) -> np.ndarray:
    raw, _ = _paths(path)
    dtype = header.get("dtype", "float32")
    if dtype not in _DTYPES:
        raise HeaderError(f"unsupported dtype {dtype!r}")
    try:
        data = np.fromfile(raw, dtype=_DTYPES[dtype])
    except OSError as e:
        raise HeaderError(f"cannot read {raw}: {e}") from e
    if data.size != count:
        raise HeaderError(f"{raw}: expected {count} samples, found {data.size}")
    if not np.all(np.isfinite(data)):
        raise HeaderError(f"{raw}: non-finite samples")
    return data.astype(float)


def _need(header: dict, key: str, cast):
    try:
        return cast(header[key])
    except KeyError:
        raise HeaderError(f"header is missing {key!r}") from None
    except ValueError:
        raise HeaderError(f"header key {key!r} has bad value {header[key]!r}") from None


def save_image(img: ImageGrid, path, label: str = "", units: str = "g/cm^3", dtype: str = "float32"):
    header = {"kind": "image", "nx": img.nx, "ny": img.ny, "pixel_size": repr(float(img.pixel_size))}
    header.update({"units": units, "label": label})
    return _write(path, img.values, header, dtype)


def load_image(path) -> tuple[ImageGrid, dict]:
    h = read_header(path)
    if h.get("kind") != "image":
        raise HeaderError(f"{path}: not an image header")
    nx, ny = _need(h, "nx", int), _need(h, "ny", int)
    data = _read(path, h, nx * ny)
    return ImageGrid(nx, ny, _need(h, "pixel_size", float), data.reshape(ny, nx)), h


def save_sinogram(s: Sinogram, path, units: str = "", dtype: str = "float32"):
    g = s.geometry
    header = {"kind": "sinogram", "label": s.spectrum_label, "units": units}
    for k in _GEOMETRY_KEYS:
        v = getattr(g, k)
        header[k] = repr(float(v)) if isinstance(v, float) else v
    return _write(path, s.data, header, dtype)


def load_sinogram(path) -> Sinogram:
    h = read_header(path)
    if h.get("kind") != "sinogram":
        raise HeaderError(f"{path}: not a sinogram header")
    g = FanBeamGeometry(
        sod=_need(h, "sod", float),
        sdd=_need(h, "sdd", float),
        n_det=_need(h, "n_det", int),
        det_cell=_need(h, "det_cell", float),
        n_views=_need(h, "n_views", int),
        start_angle=_need(h, "start_angle", float),
        angular_range=_need(h, "angular_range", float),
    )
    data = _read(path, h, g.n_views * g.n_det)
    return Sinogram(data, g, h.get("label", ""))
