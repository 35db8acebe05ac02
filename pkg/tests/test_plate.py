import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import clamped_plate_frequencies
from srnah.plate import (PlateSpec, assemble_plate_operator, make_mask, node_coordinates,
                         solve_modes)

ALU = PlateSpec.isotropic()
D_ALU = ALU.d11


def test_ritz_oracle_reproduces_clamped_square_value():
    # classical clamped-square value: omega a^2 sqrt(rho h / D) = 35.985
    f = clamped_plate_frequencies(1.0, 1.0, 1.0, 0.3, 1.0, 0.35, 1.0)
    assert 2 * math.pi * f[0] == pytest.approx(35.985, abs=2e-3)


def test_rectangle_mask_is_full():
    m = make_mask("rectangle", {})
    assert m.shape == (16, 64) and m.dtype == np.uint8 and m.all()


def test_ellipse_covers_quarter_pi():
    m = make_mask("superellipse", {"p": 2.0, "ax": 1.0, "ay": 1.0})
    assert m.mean() == pytest.approx(math.pi / 4, rel=0.05)


@pytest.mark.parametrize("p,ax,ay", [(2.0, 0.9, 0.8), (4.0, 1.0, 1.0), (2.5, 0.95, 0.9)])
def test_violinoid_zero_waist_is_superellipse(p, ax, ay):
    v = make_mask("violinoid", {"p": p, "ax": ax, "ay": ay, "upper": 0.7, "waist": 0.0})
    s = make_mask("superellipse", {"p": p, "ax": ax, "ay": ay})
    np.testing.assert_array_equal(v, s)


def test_violinoid_has_a_waist():
    m = make_mask("violinoid", {"p": 2.0, "waist": 0.9, "upper": 0.7})
    width = m.sum(axis=0)
    mid = width[28:36].min()
    assert mid < width[:32].max() and mid < width[32:].max()


def test_mask_errors():
    with pytest.raises(ValueError):
        make_mask("hexagon", {})
    with pytest.raises(ValueError):
        make_mask("superellipse", {"p": 2.0, "ax": 0.01})
    with pytest.raises(ValueError):
        make_mask("violinoid", {"waist": 1.5})


@settings(max_examples=40, deadline=None)
@given(p=st.floats(1.5, 12.0), ax=st.floats(0.3, 1.0), ay=st.floats(0.3, 1.0),
       upper=st.floats(0.4, 1.0), waist=st.floats(0.0, 0.95))
def test_violinoid_masks_are_connected_binary(p, ax, ay, upper, waist):
    from scipy import ndimage
    m = make_mask("violinoid", {"p": p, "ax": ax, "ay": ay, "upper": upper, "waist": waist})
    assert set(np.unique(m)) <= {0, 1} and m.any()
    assert ndimage.label(m)[1] == 1


def test_isotropic_operator_is_scaled_biharmonic():
    mask = make_mask("violinoid", {})
    unit = PlateSpec(d11=1.0, d22=1.0, d12=0.3, d66=0.35)  # d12 + 2 d66 = 1
    a = assemble_plate_operator(ALU, mask)
    b = assemble_plate_operator(unit, mask)
    np.testing.assert_allclose(a.toarray(), D_ALU * b.toarray(), rtol=1e-12, atol=0)


@pytest.mark.parametrize("family", ["rectangle", "superellipse", "violinoid"])
def test_operator_symmetric(family):
    a = assemble_plate_operator(PlateSpec.orthotropic(), make_mask(family, {}))
    assert abs(a - a.T).max() == 0


def test_operator_needs_enough_points():
    mask = np.zeros((16, 64), dtype=np.uint8)
    mask[7:9, 30:34] = 1
    with pytest.raises(ValueError):
        assemble_plate_operator(ALU, mask)


def test_operator_on_sine_away_from_boundary():
    spec = PlateSpec.orthotropic()
    mask = make_mask("rectangle", {})
    x, y = node_coordinates(spec.lx, spec.ly)
    kx, ky = 2 * math.pi / spec.lx, math.pi / spec.ly
    phi = np.sin(kx * x) * np.sin(ky * y)
    a_phi = (assemble_plate_operator(spec, mask) @ phi.reshape(-1)).reshape(phi.shape)
    symbol = (spec.d11 * kx ** 4 + 2 * (spec.d12 + 2 * spec.d66) * kx ** 2 * ky ** 2
              + spec.d22 * ky ** 4)
    interior = np.zeros_like(mask, dtype=bool)
    interior[2:-2, 2:-2] = True
    interior &= np.abs(phi) > 0.3
    ratio = a_phi[interior] / (symbol * phi[interior])
    assert np.max(np.abs(ratio - 1)) < 0.02


def test_isotropic_rectangle_frequencies_match_clamped_ritz():
    spec = ALU
    modes = solve_modes(spec, make_mask("rectangle", {}), f_max=4000.0)
    ref = clamped_plate_frequencies(spec.lx, spec.ly, spec.d11, spec.d12, spec.d22, spec.d66,
                                    spec.mass_per_area)
    np.testing.assert_allclose(modes.frequencies[:5], ref[:5], rtol=0.05)


def test_orthotropic_rectangle_frequencies_match_clamped_ritz():
    spec = PlateSpec.orthotropic()
    modes = solve_modes(spec, make_mask("rectangle", {}))
    ref = clamped_plate_frequencies(spec.lx, spec.ly, spec.d11, spec.d12, spec.d22, spec.d66,
                                    spec.mass_per_area)
    np.testing.assert_allclose(modes.frequencies[:5], ref[:5], rtol=0.05)


@pytest.mark.parametrize("family", ["rectangle", "superellipse", "violinoid"])
def test_modes_contract(family):
    spec = PlateSpec.orthotropic(mask_family=family)
    mask = make_mask(family, {})
    modes = solve_modes(spec, mask)
    assert len(modes) > 5
    f = modes.frequencies
    assert np.all(f > 0) and np.all(np.diff(f) >= 0) and f[-1] <= 2000.0
    assert np.all(modes.shapes[:, mask == 0] == 0)
    np.testing.assert_allclose(np.abs(modes.shapes).max(axis=(1, 2)), 1.0)

    a = assemble_plate_operator(spec, mask)
    ii, jj = np.nonzero(mask)
    for k in range(len(modes)):
        phi = modes.shapes[k, ii, jj]
        lam = modes.eigenvalues[k]
        rhs = lam * phi
        assert np.linalg.norm(a @ phi - rhs) / np.linalg.norm(rhs) < 1e-8


def test_frequencies_scale_with_sqrt_of_rigidity():
    mask = make_mask("superellipse", {"p": 3.0})
    base = PlateSpec.isotropic()
    doubled = PlateSpec(lx=base.lx, ly=base.ly, h=base.h, rho=base.rho, d11=2 * base.d11,
                        d12=2 * base.d12, d22=2 * base.d22, d66=2 * base.d66)
    f1 = solve_modes(base, mask, f_max=3000.0).frequencies
    f2 = solve_modes(doubled, mask, f_max=3000.0 * math.sqrt(2)).frequencies
    n = min(len(f1), len(f2))
    np.testing.assert_allclose(f2[:n], math.sqrt(2) * f1[:n], rtol=1e-9)


def test_no_modes_below_fmax_warns(caplog):
    modes = solve_modes(PlateSpec.orthotropic(), make_mask("rectangle", {}), f_max=10.0)
    assert len(modes) == 0
    assert "no plate modes" in caplog.text


def test_plate_spec_validation():
    with pytest.raises(ValueError):
        PlateSpec(d11=1.0, d22=1.0, d12=2.0)
    with pytest.raises(ValueError):
        PlateSpec(h=-1.0)
    with pytest.raises(ValueError):
        PlateSpec(mask_family="circle")
