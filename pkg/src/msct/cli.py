"""Command-line entry points: simulate | decompose | toy | metrics.

Runs are configured by INI files (``[section]`` plus ``key = value``); every
run writes ``manifest.json`` with the resolved parameters next to its outputs.

Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 divergence.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import Scenario, build_dataset
from .forward import MM_TO_CM
from .geometry import ImageGrid
from .io import HeaderError, load_image, load_sinogram, save_image, save_sinogram
from .metrics import report, write_reports
from .pipeline import DivergenceError, ReconConfig, run_reconstruction, synth_monochromatic
from .soma import SolveOptions
from .spectra import SpectrumLoadError, builtin_materials, load_spectrum, save_spectrum
from .toy import run_toy

log = logging.getLogger("msct")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Config:
    """Typed access to an INI file; every error names section and key."""

    def __init__(self, path: str | None):
        self.path = path
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        if path is not None:
            try:
                with open(path) as fh:
                    self.cp.read_file(fh)
            except OSError as e:
                raise ConfigError(f"cannot read config {path}: {e}") from e
            except configparser.Error as e:
                raise ConfigError(f"{path}: {e}") from e
        self.used: dict = {}

    def _raw(self, section, key):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key)
        return None

    def get(self, section, key, cast=str, default=None, required=False):
        raw = self._raw(section, key)
        if raw is None:
            if required:
                raise ConfigError(f"missing [{section}] {key}")
            value = default
        else:
            try:
                value = cast(raw)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {e}") from None
        self.used.setdefault(section, {})[key] = value
        return value

    def getlist(self, section, key, cast=str, default=None, required=False):
        def split(raw):
            return [cast(v.strip()) for v in raw.split(",") if v.strip()]

        return self.get(section, key, split, default, required)

    def getbool(self, section, key, default=False):
        def cast(raw):
            v = raw.strip().lower()
            if v in ("1", "yes", "true", "on"):
                return True
            if v in ("0", "no", "false", "off"):
                return False
            raise ValueError("expected yes/no")

        return self.get(section, key, cast, default)


def _optional_float(raw: str):
    return None if raw.strip().lower() in ("", "none") else float(raw)


def _write_manifest(out: Path, command: str, args, cfg: Config, extra: dict | None = None):
    manifest = {
        "command": command,
        "config": str(args.config) if args.config else None,
        "out": str(out),
        "seed": args.seed,
        "threads": args.threads,
        "version": __version__,
        "parameters": cfg.used,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (tuple, set)):
        return list(v)
    return str(v)


def _preview(img: ImageGrid, path: Path, window: tuple[float, float]):
    """16-bit grayscale PNG of ``img`` clipped to ``window`` (needs Pillow)."""
    try:
        from PIL import Image
    except ImportError:
        log.warning("Pillow not installed; skipping preview %s", path)
        return
    lo, hi = window
    v = np.clip((img.values - lo) / (hi - lo), 0.0, 1.0)
    # row 0 of the grid is the bottom of the image
    arr = np.flipud(np.round(v * 65535.0)).astype(np.uint16)
    Image.fromarray(arr).save(path)


# ---------------------------------------------------------------- simulate


def _scenario_from(cfg: Config, seed: int | None) -> Scenario:
    d = Scenario()
    kvps = cfg.getlist("spectra", "kvp", float, required=True)
    filters = []
    for k in range(len(kvps)):
        raw = cfg.get("spectra", f"filters{k + 1}", str, default="aluminium:2.5")
        parts = []
        for item in raw.split(","):
            item = item.strip()
            if not item:
                continue
            name, _, mm = item.partition(":")
            try:
                parts.append((name.strip(), float(mm)))
            except ValueError:
                raise ConfigError(f"[spectra] filters{k + 1}: bad filter {item!r} (want name:mm)") from None
        filters.append(tuple(parts))
    offsets = cfg.getlist("geometry", "offsets", float, default=[0.0] * len(kvps))
    if len(offsets) != len(kvps):
        raise ConfigError(f"[geometry] offsets: {len(offsets)} values for {len(kvps)} spectra")
    i0 = cfg.get("noise", "i0", _optional_float, default=None)
    cfg_seed = cfg.get("noise", "seed", int, default=0)
    sc = Scenario(
        phantom=cfg.get("phantom", "name", str, default=d.phantom),
        materials=tuple(cfg.getlist("materials", "names", str, default=list(d.materials))),
        spectra=tuple((kv, f) for kv, f in zip(kvps, filters)),
        nx=cfg.get("phantom", "nx", int, default=d.nx),
        pixel_size=cfg.get("phantom", "pixel_size", float, default=d.pixel_size),
        sod=cfg.get("geometry", "sod", float, default=d.sod),
        sdd=cfg.get("geometry", "sdd", float, default=d.sdd),
        n_det=cfg.get("geometry", "n_det", int, default=d.n_det),
        det_cell=cfg.get("geometry", "det_cell", float, default=d.det_cell),
        n_views=cfg.get("geometry", "n_views", int, default=d.n_views),
        offsets=tuple(offsets),
        i0=i0,
        seed=cfg_seed if seed is None else seed,
    )
    cfg.used.setdefault("noise", {})["seed"] = sc.seed
    return sc


def cmd_simulate(args) -> int:
    cfg = Config(args.config)
    out = Path(args.out)
    sc = _scenario_from(cfg, args.seed)
    try:
        ds = build_dataset(sc)
    except KeyError as e:
        raise ConfigError(f"[phantom] name / [materials] names: {e}") from None
    out.mkdir(parents=True, exist_ok=True)
    names = list(ds.materials.names)
    for m, img in enumerate(ds.truth):
        save_image(img, out / f"truth_{names[m]}", label=names[m])
    sino_files, spec_files = [], []
    for k, (s, spec) in enumerate(zip(ds.sinograms, ds.spectra)):
        save_sinogram(s, out / f"sino_{k + 1}", units="-ln(I/I0)")
        save_spectrum(spec, out / f"spectrum_{k + 1}.txt")
        sino_files.append(f"sino_{k + 1}.hdr")
        spec_files.append(f"spectrum_{k + 1}.txt")
    recipe = configparser.ConfigParser()
    recipe["data"] = {
        "dir": str(out.resolve()),
        "sinograms": ", ".join(sino_files),
        "spectra": ", ".join(spec_files),
        "materials": ", ".join(names),
        "truth": ", ".join(f"truth_{n}.hdr" for n in names),
    }
    recipe["recon"] = {"max_iters": "30", "lam": "0.9", "beta0": "0.9"}
    with open(out / "decompose.ini", "w") as fh:
        recipe.write(fh)
    _write_manifest(out, "simulate", args, cfg, {"consistent": len(set(sc.offsets)) == 1})
    print(f"wrote {len(ds.sinograms)} sinograms and {len(ds.truth)} material images to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- decompose


def _recon_config(cfg: Config) -> ReconConfig:
    d = ReconConfig()
    so = SolveOptions()
    decay = cfg.getlist("recon", "beta_decay", float, default=None)
    if decay is not None and len(decay) != 3:
        raise ConfigError("[recon] beta_decay: want beta0, ratio, total_n")
    consistent = cfg.get("recon", "consistent", str, default="auto")
    try:
        return ReconConfig(
            lam=cfg.get("recon", "lam", float, default=d.lam),
            solver=SolveOptions(
                beta0=cfg.get("recon", "beta0", float, default=so.beta0),
                eps=cfg.get("recon", "eps", float, default=so.eps),
                kappa=cfg.get("recon", "kappa", float, default=so.kappa),
                direction_tol=cfg.get("recon", "direction_tol", float, default=so.direction_tol),
            ),
            t_thresh=cfg.get("recon", "t_thresh", float, default=d.t_thresh),
            beta_red=cfg.get("recon", "beta_red", float, default=d.beta_red),
            beta_decay=None if decay is None else (decay[0], decay[1], int(decay[2])),
            max_iters=cfg.get("recon", "max_iters", int, default=d.max_iters),
            stop_d_image=cfg.get("recon", "stop_d_image", _optional_float, default=None),
            stop_d_data=cfg.get("recon", "stop_d_data", _optional_float, default=None),
            consistent=None if consistent == "auto" else consistent.lower() in ("1", "yes", "true"),
            interp=cfg.get("recon", "interp", str, default=d.interp),
            adaptive=cfg.getbool("recon", "adaptive", default=d.adaptive),
            df_form=cfg.get("recon", "df_form", str, default=d.df_form),
            art_sweeps=cfg.get("recon", "art_sweeps", int, default=d.art_sweeps),
            art_relax=cfg.get("recon", "art_relax", float, default=d.art_relax),
            length_scale=cfg.get("recon", "length_scale", float, default=MM_TO_CM),
            keep_history=cfg.getbool("output", "snapshots", default=False),
        )
    except ValueError as e:
        raise ConfigError(f"[recon] {e}") from None


def _resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def cmd_decompose(args) -> int:
    cfg = Config(args.config)
    if args.config is None:
        raise ConfigError("decompose needs --config")
    base = Path(cfg.get("data", "dir", str, default=str(Path(args.config).parent)))
    sinos = [load_sinogram(_resolve(base, f)) for f in cfg.getlist("data", "sinograms", required=True)]
    spectra = [load_spectrum(_resolve(base, f)) for f in cfg.getlist("data", "spectra", required=True)]
    names = cfg.getlist("data", "materials", required=True)
    try:
        table = builtin_materials(names)
    except KeyError as e:
        raise ConfigError(f"[data] materials: {e}") from None
    truth_files = cfg.getlist("data", "truth", default=None)
    truth = [load_image(_resolve(base, f))[0] for f in truth_files] if truth_files else None
    rc = _recon_config(cfg)

    grid = None
    if truth is None:
        nx = cfg.get("data", "nx", int, required=True)
        grid = ImageGrid(nx, cfg.get("data", "ny", int, default=nx), cfg.get("data", "pixel_size", float, required=True))
    f_init, beta_init, start_iter = None, None, 0
    resume = cfg.get("recon", "resume", str, default=None)
    if resume:
        rdir = Path(resume)
        state = json.loads((rdir / "state.json").read_text())
        f_init = [load_image(rdir / f"f_{n}")[0] for n in names]
        beta_init, start_iter = float(state["beta"]), int(state["iteration"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = run_reconstruction(
            sinos,
            [s.geometry for s in sinos],
            spectra,
            table,
            rc,
            f_true=truth,
            grid=grid,
            f_init=f_init,
            beta_init=beta_init,
            start_iter=start_iter,
        )
    finally:
        _write_manifest(out, "decompose", args, cfg, {"recon": asdict(rc)})

    res.write_log_csv(out / "convergence.csv")
    window = {}
    for m, (name, img) in enumerate(zip(names, res.images)):
        save_image(img, out / f"material_{name}", label=name)
        save_sinogram(res.q_sinograms[m], out / f"q_{name}", units="g/cm^2")
        window[name] = cfg.getlist("output", f"window_{name}", float, default=[0.0, float(table.densities[m])])
    ckpt = out / "checkpoint"
    ckpt.mkdir(exist_ok=True)
    for name, img in zip(names, res.images):
        save_image(img, ckpt / f"f_{name}", label=name, dtype="float64")
    last = res.log[-1].iteration if res.log else start_iter
    (ckpt / "state.json").write_text(json.dumps({"iteration": last, "beta": res.beta}) + "\n")

    mono = cfg.get("output", "mono_kev", int, default=None)
    if mono is not None:
        try:
            save_image(synth_monochromatic(res.images, table, mono), out / f"mono_{mono}keV", units="1/cm")
        except KeyError as e:
            raise ConfigError(f"[output] mono_kev: {e}") from None
    if res.history:
        snap = out / "snapshots"
        for i, imgs in enumerate(res.history, start_iter + 1):
            for name, img in zip(names, imgs):
                save_image(img, snap / f"iter{i:04d}_{name}", label=name)
    if cfg.getbool("output", "preview", default=False):
        clip = cfg.getbool("output", "clip", default=True)
        for name, img in zip(names, res.images):
            shown = img.like(np.maximum(img.values, 0.0)) if clip else img
            _preview(shown, out / f"material_{name}.png", tuple(window[name]))
    d = res.log[-1] if res.log else None
    if d is not None:
        print(f"iter {d.iteration}: D_data={d.d_data:.3e} D_image={d.d_image:.3e} beta={d.beta:.4g}")
    return EXIT_OK


# ---------------------------------------------------------------- toy


def cmd_toy(args) -> int:
    cfg = Config(args.config)
    beta = cfg.get("toy", "beta", float, default=1.0)
    kappa = cfg.get("toy", "kappa", float, default=1.0)
    x0 = cfg.getlist("toy", "x0", float, default=[0.0, 0.0])
    run = run_toy(x0=x0, beta=beta, kappa=kappa)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run.soma_trace.write_csv(out / "soma_path.csv")
    with open(out / "newton_path.csv", "w") as fh:
        fh.write("iter,x1,x2\n")
        for i, x in enumerate(run.newton_path):
            fh.write(f"{i},{float(x[0])!r},{float(x[1])!r}\n")
    _write_manifest(out, "toy", args, cfg)
    p1, p2 = run.targets
    print(f"targets p = ({p1:.4f}, {p2:.4f})")
    print(f"SOMA   x = ({run.soma_x[0]:.10f}, {run.soma_x[1]:.10f}) after {run.soma_trace.outer_iterations} linearizations")
    print(f"Newton x = ({run.newton_x[0]:.10f}, {run.newton_x[1]:.10f}) after {len(run.newton_path) - 1} steps")
    return EXIT_OK


# ---------------------------------------------------------------- metrics


def cmd_metrics(args) -> int:
    cfg = Config(args.config)
    refs = args.ref or cfg.getlist("metrics", "ref", required=True)
    ests = args.est or cfg.getlist("metrics", "est", required=True)
    if len(refs) != len(ests):
        raise ConfigError(f"{len(refs)} reference images vs {len(ests)} estimates")
    ref_imgs, est_imgs, labels = [], [], []
    for r, e in zip(refs, ests):
        ri, rh = load_image(r)
        ei, _ = load_image(e)
        if ri.shape != ei.shape:
            raise HeaderError(f"{r} is {ri.shape}, {e} is {ei.shape}")
        ref_imgs.append(ri)
        est_imgs.append(ei)
        labels.append(rh.get("label") or Path(r).stem)
    rep = report(ref_imgs, est_imgs, labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_reports(out / "metrics.csv", [rep])
    _write_manifest(out, "metrics", args, cfg, {"ref": list(refs), "est": list(ests)})
    print(f"d_image = {rep.d_image:.6g}")
    for lab in labels:
        print(f"{lab}: psnr={rep.psnr[lab]:.4f} ssim={rep.ssim[lab]:.4f} rmse={rep.rmse[lab]:.6g}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "decompose": cmd_decompose, "toy": cmd_toy, "metrics": cmd_metrics}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None, help="overrides [noise] seed")
    common.add_argument("--threads", type=int, default=None, help="worker threads (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="msct", description="Multi-spectral CT material decomposition")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="simulate a multi-spectral acquisition")
    sub.add_parser("decompose", parents=[common], help="run the decomposition/reconstruction loop")
    sub.add_parser("toy", parents=[common], help="solve the two-spectrum toy system")
    m = sub.add_parser("metrics", parents=[common], help="score estimated images against references")
    m.add_argument("--ref", nargs="+", help="reference image headers")
    m.add_argument("--est", nargs="+", help="estimated image headers, same order")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("msct: error: --threads must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"msct: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as e:
        print(f"msct: diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (HeaderError, SpectrumLoadError, FileNotFoundError, OSError, ValueError) as e:
        print(f"msct: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
