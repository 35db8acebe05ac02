"""Equivalent-source baseline with Tikhonov regularization.

Equivalent sources use the ``exp(-j k d)`` propagator directly, so hologram
pressures must be given in that convention.  Pressures produced by
:func:`srnah.field.forward_rayleigh` carry the conjugated propagator; with a
real mode shape their complex conjugate is the matching field (see
:func:`run_esm`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Scene
from .field import Grid2D, green_matrices
from .metrics import ncc, nmse


@dataclass(frozen=True)
class EsmConfig:
    n_rows: int = 20  # along y
    n_cols: int = 24  # along x
    depth: float = 0.020  # below the plate plane
    lambda_mode: str = "gcv"  # fixed | gcv | oracle-sweep
    lam: float | None = None  # used in fixed mode
    # relative to the largest squared singular value of the transfer matrix
    lambda_grid: tuple = tuple(np.logspace(-10, 0, 41))

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError("equivalent-source depth must be positive")
        if self.lambda_mode not in ("fixed", "gcv", "oracle-sweep"):
            raise ValueError(f"unknown lambda mode {self.lambda_mode!r}")
        if self.lambda_mode == "fixed" and (self.lam is None or self.lam <= 0):
            raise ValueError("fixed lambda mode needs lam > 0")


def source_grid(scene: Scene, config: EsmConfig) -> Grid2D:
    """Equivalent sources spanning the velocity-grid bounding box, ``depth`` below the plate."""
    vg = scene.velocity_grid()
    y0, x0 = vg.origin[1], vg.origin[0]
    y1 = y0 + (vg.n_u - 1) * vg.u_step
    x1 = x0 + (vg.n_v - 1) * vg.v_step
    du = (y1 - y0) / (config.n_rows - 1) if config.n_rows > 1 else 1.0
    dv = (x1 - x0) / (config.n_cols - 1) if config.n_cols > 1 else 1.0
    return Grid2D(origin=(x0, y0, -config.depth), u_step=du, v_step=dv,
                  n_u=config.n_rows, n_v=config.n_cols)


def transfer_matrix(scene: Scene, config: EsmConfig, omega: float) -> np.ndarray:
    """``(M, n_sources)`` matrix of Green's functions from sources to microphones."""
    g, _ = green_matrices(source_grid(scene, config).points(), scene.hologram_grid().points(),
                          None, omega, scene.consts)
    return g.T


def tikhonov(g: np.ndarray, p: np.ndarray, lam: float, svd=None) -> np.ndarray:
    """``argmin ||G w - p||^2 + lam ||w||^2`` through the SVD of ``G``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    u, s, vh = np.linalg.svd(g, full_matrices=False) if svd is None else svd
    beta = u.conj().T @ p
    if lam == 0:
        keep = s > s[0] * max(g.shape) * np.finfo(float).eps
        filt = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    else:
        filt = s / (s * s + lam)
    return vh.conj().T @ (filt * beta)


def gcv_scores(g: np.ndarray, p: np.ndarray, lams, svd=None) -> np.ndarray:
    """Generalized cross-validation ``m ||(I - A) p||^2 / trace(I - A)^2`` per lambda."""
    u, s, vh = np.linalg.svd(g, full_matrices=False) if svd is None else svd
    m = g.shape[0]
    beta = u.conj().T @ p
    outside = max(float(np.vdot(p, p).real - np.vdot(beta, beta).real), 0.0)
    scores = []
    for lam in lams:
        f = s * s / (s * s + lam)
        resid = float(np.sum((1.0 - f) ** 2 * np.abs(beta) ** 2)) + outside
        scores.append(m * resid / (m - f.sum()) ** 2)
    return np.asarray(scores)


def lambda_values(g_svals: np.ndarray, config: EsmConfig) -> np.ndarray:
    grid = np.asarray(config.lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    return grid * g_svals[0] ** 2


def solve_esm_weights(pressure, scene: Scene, config: EsmConfig, omega: float,
                      lam: float | None = None) -> np.ndarray:
    """Equivalent-source weights for one hologram measurement.

    ``lam`` overrides the configured selection; ``None`` uses the fixed value
    or the GCV choice.
    """
    p = np.asarray(pressure, dtype=complex).reshape(-1)
    g = transfer_matrix(scene, config, omega)
    if lam is None:
        if config.lambda_mode == "fixed":
            lam = config.lam
        elif config.lambda_mode == "gcv":
            lam = select_lambda(p, scene, config, omega)
        else:
            raise ValueError("oracle-sweep needs a ground truth; pass lam explicitly")
    if config.lambda_mode == "fixed" and lam <= 0:
        raise ValueError("fixed lambda must be positive")
    return tikhonov(g, p, lam)


def velocity_field(weights, scene: Scene, config: EsmConfig, omega: float) -> np.ndarray:
    """Complex normal velocity on the velocity grid, ``(n1, n2)``.

    ``v(s) = -1 / (j omega rho0) * sum_i w_i dg(s, q_i)/dn``.
    """
    if omega == 0:
        raise ValueError("velocity reconstruction needs omega != 0")
    vg = scene.velocity_grid()
    _, dg = green_matrices(vg.points(), source_grid(scene, config).points(), vg.normal,
                           omega, scene.consts)
    v = -(dg @ np.asarray(weights, dtype=complex)) / (1j * omega * scene.consts.rho0)
    return v.reshape(vg.shape)


def reconstruct_velocity(weights, scene: Scene, config: EsmConfig, omega: float,
                         mask=None) -> np.ndarray:
    """Masked, max-normalized velocity magnitude image."""
    mag = np.abs(velocity_field(weights, scene, config, omega))
    if mask is not None:
        mag = mag * np.asarray(mask)
    peak = mag.max()
    return mag / peak if peak > 0 else mag


def select_lambda(pressure, scene: Scene, config: EsmConfig, omega: float,
                  truth=None, mask=None) -> float:
    p = np.asarray(pressure, dtype=complex).reshape(-1)
    g = transfer_matrix(scene, config, omega)
    svd = np.linalg.svd(g, full_matrices=False)
    lams = lambda_values(svd[1], config)
    if len(lams) == 1:
        return float(lams[0])
    if config.lambda_mode == "oracle-sweep":
        if truth is None:
            raise ValueError("oracle-sweep lambda selection needs the true velocity")
        _, dg = green_matrices(scene.velocity_grid().points(), source_grid(scene, config).points(),
                               scene.velocity_grid().normal, omega, scene.consts)
        m = np.ones(truth.shape) if mask is None else mask
        scores = [ncc(np.abs(dg @ tikhonov(g, p, lam, svd)).reshape(truth.shape), truth, m)
                  for lam in lams]
        return float(lams[int(np.argmax(scores))])
    return float(lams[int(np.argmin(gcv_scores(g, p, lams, svd)))])


@dataclass
class EsmResult:
    sample_ids: np.ndarray
    recon: np.ndarray  # (K, n1, n2)
    lambdas: np.ndarray
    ncc: np.ndarray
    nmse: np.ndarray
    freqs: np.ndarray = field(default_factory=lambda: np.zeros(0))


def run_esm(dataset, indices, config: EsmConfig = EsmConfig(), pressures=None) -> EsmResult:
    """Baseline reconstructions for dataset samples ``indices``.

    ``pressures`` optionally replaces the stored complex hologram pressures
    (e.g. noisy copies), one ``(m1, m2)`` array per index.
    """
    if dataset.pressure_complex is None and pressures is None:
        raise ValueError("the ESM baseline needs complex hologram pressures")
    scene = dataset.scene()
    indices = np.asarray(indices, dtype=np.int64)
    recon = np.zeros((len(indices),) + dataset.velocity.shape[1:])
    lams, nccs, nmses = [], [], []
    cache: dict = {}
    for k, idx in enumerate(indices):
        omega = 2.0 * math.pi * float(dataset.freqs[idx])
        p = dataset.pressure_complex[idx] if pressures is None else pressures[k]
        # synthesized pressures use the conjugated propagator
        p = np.conj(np.asarray(p, dtype=complex)).reshape(-1)
        if omega not in cache:
            g = transfer_matrix(scene, config, omega)
            vg = scene.velocity_grid()
            _, dg = green_matrices(vg.points(), source_grid(scene, config).points(),
                                   vg.normal, omega, scene.consts)
            cache = {omega: (g, np.linalg.svd(g, full_matrices=False), dg)}
        g, svd, dg = cache[omega]
        mask = dataset.mask[idx]
        truth = dataset.velocity[idx].astype(float)
        lam_grid = lambda_values(svd[1], config)
        if config.lambda_mode == "fixed":
            lam = config.lam
        elif config.lambda_mode == "gcv":
            lam = float(lam_grid[int(np.argmin(gcv_scores(g, p, lam_grid, svd)))])
        else:
            scores = [ncc(np.abs(dg @ tikhonov(g, p, lm, svd)).reshape(truth.shape), truth, mask)
                      for lm in lam_grid]
            lam = float(lam_grid[int(np.argmax(scores))])
        w = tikhonov(g, p, lam, svd)
        mag = np.abs(dg @ w).reshape(truth.shape) * mask
        img = mag / mag.max() if mag.max() > 0 else mag
        recon[k] = img
        lams.append(lam)
        nccs.append(ncc(img, truth, mask))
        nmses.append(nmse(img, truth, mask))
    return EsmResult(indices, recon, np.asarray(lams), np.asarray(nccs), np.asarray(nmses),
                     dataset.freqs[indices].astype(float))
