import math

import numpy as np
import pytest

from msct.phantom import BUILTIN_PHANTOMS, EllipseSpec, Phantom, builtin, load_phantom, rasterize


def test_single_disk_hits_centre_pixel_only_in_its_material():
    p = Phantom([EllipseSpec((0.0, 0.0), (1.0, 1.0), 0.0, 0, 1.0)], 2)
    water, bone = rasterize(p, 3, 3, 1.0)
    assert water.values[1, 1] == 1.0
    assert not bone.values.any()


def test_overlapping_same_material_densities_add():
    p = Phantom(
        [EllipseSpec((0.0, 0.0), (5.0, 5.0), 0.0, 0, 1.0), EllipseSpec((0.0, 0.0), (2.0, 2.0), 0.0, 0, -0.2)], 1
    )
    (img,) = rasterize(p, 5, 5, 1.0)
    assert img.values[2, 2] == pytest.approx(0.8)
    assert img.values[0, 0] == 1.0


def test_disk_area_matches_analytic_area():
    r, ps = 40.0, 100.0 / 256
    p = Phantom([EllipseSpec((3.0, -7.0), (r, r), 0.0, 0, 1.0)], 1)
    (img,) = rasterize(p, 256, 256, ps)
    area = img.values.sum() * ps**2
    assert area == pytest.approx(math.pi * r * r, rel=0.02)


def test_rotated_ellipse_contains_its_major_axis_tip():
    e = EllipseSpec((0.0, 0.0), (10.0, 2.0), 90.0, 0, 1.0)
    assert e.contains(np.array(0.0), np.array(9.9))
    assert not e.contains(np.array(9.9), np.array(0.0))


def test_material_index_out_of_range_rejected():
    with pytest.raises(ValueError):
        Phantom([EllipseSpec((0.0, 0.0), (1.0, 1.0), 0.0, 2, 1.0)], 2)


def test_thorax2_has_water_and_bone_densities():
    p = builtin("thorax2")
    assert p.materials == 2
    water, bone = rasterize(p, 256, 256, 1.5)
    assert bone.values.max() == pytest.approx(1.92)
    assert water.values.max() == pytest.approx(1.05)


def test_oral3_has_gold_inserts():
    p = builtin("oral3")
    assert p.materials == 3
    imgs = rasterize(p, 128, 128, 0.8)
    assert imgs[2].values.max() == pytest.approx(19.32)
    assert imgs[1].values.max() == pytest.approx(1.92)


@pytest.mark.parametrize("name", sorted(BUILTIN_PHANTOMS))
def test_builtin_phantoms_are_nonnegative_with_disjoint_supports(name):
    imgs = rasterize(builtin(name), 128, 128, 3.0 if name == "thorax2" else 0.8)
    stack = np.stack([im.values for im in imgs])
    assert stack.min() >= -1e-12
    assert ((stack > 1e-12).sum(axis=0) <= 1).all()


def test_unknown_builtin_rejected():
    with pytest.raises(KeyError):
        builtin("nope")


def test_load_phantom_from_text(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("materials = 2\n# m cx cy a b angle density\n0 0 0 5 5 0 1.0\n1 0 0 1 1 0 1.92\n")
    p = load_phantom(f)
    assert p.materials == 2 and len(p.ellipses) == 2
    assert p.ellipses[1].density == 1.92


def test_rasterize_is_deterministic():
    a = rasterize(builtin("thorax2"), 64, 64, 6.0)
    b = rasterize(builtin("thorax2"), 64, 64, 6.0)
    for x, y in zip(a, b):
        assert np.array_equal(x.values, y.values)
