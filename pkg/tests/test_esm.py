import math

import numpy as np
import pytest

from srnah.dataset import Scene, synthesize_sample
from srnah.esm import (EsmConfig, gcv_scores, reconstruct_velocity, run_esm, select_lambda,
                       solve_esm_weights, source_grid, tikhonov, transfer_matrix, velocity_field)
from srnah.field import PhysicalConstants
from srnah.metrics import ncc
from srnah.plate import PlateSpec, make_mask, solve_modes

SCENE = Scene()
OMEGA = 2 * math.pi * 600.0


def cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_transfer_matrix_shape():
    g = transfer_matrix(SCENE, EsmConfig(), OMEGA)
    assert g.shape == (64, 480)
    assert np.all(np.isfinite(g))


def test_source_grid_below_plate():
    pts = source_grid(SCENE, EsmConfig()).points()
    assert pts.shape == (480, 3) and np.allclose(pts[:, 2], -0.02)


def test_tikhonov_matches_normal_equations(rng):
    g = cplx(rng, 16, 12)
    p = cplx(rng, 16)
    lam = 0.37
    w = tikhonov(g, p, lam)
    ref = np.linalg.solve(g.conj().T @ g + lam * np.eye(12), g.conj().T @ p)
    np.testing.assert_allclose(w, ref, rtol=1e-8, atol=1e-12)


def test_square_system_exact(rng):
    g = cplx(rng, 10, 10)
    w0 = cplx(rng, 10)
    np.testing.assert_allclose(tikhonov(g, g @ w0, 0.0), w0, rtol=1e-8)


def test_large_lambda_shrinks_weights(rng):
    g, p = cplx(rng, 20, 30), cplx(rng, 20)
    norms = [np.linalg.norm(tikhonov(g, p, lam)) for lam in (1e-3, 1e-1, 1e1, 1e3, 1e6)]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-4 * norms[0]


def test_negative_lambda_rejected(rng):
    with pytest.raises(ValueError):
        tikhonov(cplx(rng, 4, 4), cplx(rng, 4), -1.0)


def test_linear_in_pressure(rng):
    g = cplx(rng, 16, 24)
    p1, p2 = cplx(rng, 16), cplx(rng, 16)
    a, b = 2.0 - 1j, 0.5
    np.testing.assert_allclose(tikhonov(g, a * p1 + b * p2, 0.1),
                               a * tikhonov(g, p1, 0.1) + b * tikhonov(g, p2, 0.1), rtol=1e-10)


def test_residual_monotone_in_lambda(rng):
    g, p = cplx(rng, 20, 30), cplx(rng, 20)
    res = [np.linalg.norm(g @ tikhonov(g, p, lam) - p) for lam in np.logspace(-4, 2, 10)]
    assert all(a <= b + 1e-12 for a, b in zip(res, res[1:]))


def test_gcv_finite(rng):
    g, p = cplx(rng, 64, 120), cplx(rng, 64)
    scores = gcv_scores(g, p, np.logspace(-8, 2, 20))
    assert np.all(np.isfinite(scores)) and np.all(scores >= 0)


def test_single_source_velocity():
    # one equivalent source with weight w: v = -w/(j omega rho0) dg/dn, evaluated by hand
    cfg = EsmConfig(n_rows=1, n_cols=1)
    c = PhysicalConstants()
    q = source_grid(SCENE, cfg).points()[0]
    v = velocity_field(np.array([0.3 + 0.2j]), SCENE, cfg, OMEGA)
    pts = SCENE.velocity_grid().points()
    k = OMEGA / c.c
    ref = np.empty(len(pts), dtype=complex)
    for i, s in enumerate(pts):
        d = math.dist(s, q)
        g = np.exp(-1j * k * d) / (4 * math.pi * d)
        dgdn = -g * (1j * k + 1 / d) * (s[2] - q[2]) / d
        ref[i] = -(0.3 + 0.2j) * dgdn / (1j * OMEGA * c.rho0)
    np.testing.assert_allclose(v.reshape(-1), ref, rtol=1e-10)


def test_fixed_mode_requires_lambda():
    with pytest.raises(ValueError):
        EsmConfig(lambda_mode="fixed")
    with pytest.raises(ValueError):
        EsmConfig(lambda_mode="bogus")


@pytest.fixture(scope="module")
def rect_mode():
    spec = PlateSpec.orthotropic()
    mask = make_mask("rectangle", {})
    modes = solve_modes(spec, mask, 1200.0)
    s = synthesize_sample(SCENE, spec, mask, 3, modes)
    return s


def test_reconstructs_rectangle_mode(rect_mode):
    omega = 2 * math.pi * rect_mode.frequency
    cfg = EsmConfig()
    p = np.conj(rect_mode.pressure_complex)
    w = solve_esm_weights(p, SCENE, cfg, omega)
    img = reconstruct_velocity(w, SCENE, cfg, omega, rect_mode.mask)
    assert ncc(img, rect_mode.velocity, rect_mode.mask) >= 0.9


def test_gcv_close_to_oracle(rect_mode):
    omega = 2 * math.pi * rect_mode.frequency
    p = np.conj(rect_mode.pressure_complex)
    out = {}
    for mode in ("gcv", "oracle-sweep"):
        cfg = EsmConfig(lambda_mode=mode)
        lam = select_lambda(p, SCENE, cfg, omega, rect_mode.velocity, rect_mode.mask)
        img = reconstruct_velocity(solve_esm_weights(p, SCENE, cfg, omega, lam), SCENE, cfg,
                                   omega, rect_mode.mask)
        out[mode] = ncc(img, rect_mode.velocity, rect_mode.mask)
    assert out["gcv"] >= out["oracle-sweep"] - 0.05


def test_run_esm_on_dataset(tiny):
    idx = tiny.split("test")
    res = run_esm(tiny, idx)
    assert res.recon.shape == (len(idx), 16, 64)
    assert np.all(res.recon[tiny.mask[idx] == 0] == 0)
    assert np.all((res.ncc >= 0) & (res.ncc <= 1)) and np.all(res.lambdas > 0)
    assert res.ncc.mean() > 0.8
