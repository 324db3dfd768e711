"""Regenerate the bundled 1-keV mass attenuation tables.

The anchor values are NIST-style total mass attenuation coefficients
(cm^2/g, coherent scattering included) at the standard tabulation energies.
They are resampled onto an integer keV grid by log-log interpolation,
never across an absorption edge.

    python scripts/make_mac_tables.py
"""

from pathlib import Path

import numpy as np

E_MIN, E_MAX = 20, 150

# (keV, cm^2/g). Edges are given as a pair of rows at the same energy.
ANCHORS = {
    "water": [
        (20, 0.8096), (30, 0.3756), (40, 0.2683), (50, 0.2269), (60, 0.2059),
        (80, 0.1837), (100, 0.1707), (150, 0.1505),
    ],
    "bone": [  # cortical bone, ICRU-44
        (20, 4.001), (30, 1.331), (40, 0.6655), (50, 0.4242), (60, 0.3148),
        (80, 0.2229), (100, 0.1855), (150, 0.1480),
    ],
    "gold": [
        (20, 78.83), (30, 27.75), (40, 12.98), (50, 7.256), (60, 4.528),
        (80, 2.185), (80.725, 2.137), (80.725, 8.904), (100, 5.158),
        (150, 1.859),
    ],
    "aluminium": [
        (20, 3.441), (30, 1.128), (40, 0.5685), (50, 0.3681), (60, 0.2778),
        (80, 0.2018), (100, 0.1704), (150, 0.1378),
    ],
    "copper": [
        (20, 33.79), (30, 10.49), (40, 4.862), (50, 2.613), (60, 1.593),
        (80, 0.7630), (100, 0.4584), (150, 0.2217),
    ],
}

DENSITIES = {"water": 1.0, "bone": 1.92, "gold": 19.32, "aluminium": 2.699, "copper": 8.96}


def resample(anchors, energies):
    e = np.array([a[0] for a in anchors], dtype=float)
    v = np.array([a[1] for a in anchors], dtype=float)
    out = np.empty(len(energies))
    for i, x in enumerate(energies):
        # rightmost segment [e[j], e[j+1]] with e[j] <= x, skipping zero-width edge pairs
        j = np.searchsorted(e, x, side="right") - 1
        j = min(max(j, 0), len(e) - 2)
        while e[j + 1] == e[j]:
            j += 1
        t = np.log(x / e[j]) / np.log(e[j + 1] / e[j])
        out[i] = np.exp(np.log(v[j]) + t * (np.log(v[j + 1]) - np.log(v[j])))
    return out


def main():
    out_dir = Path(__file__).resolve().parents[1] / "src" / "msct" / "data"
    energies = np.arange(E_MIN, E_MAX + 1)
    for name, anchors in ANCHORS.items():
        mac = resample(anchors, energies)
        lines = [
            f"# {name} mass attenuation coefficient, cm^2/g",
            f"# density {DENSITIES[name]} g/cm^3",
            "# keV  mac",
        ]
        lines += [f"{e:d} {m:.6g}" for e, m in zip(energies, mac)]
        (out_dir / f"mac_{name}.txt").write_text("\n".join(lines) + "\n")
        print(f"wrote mac_{name}.txt ({len(energies)} rows)")


if __name__ == "__main__":
    main()
