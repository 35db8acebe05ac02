"""Free-field Green's function and discretized Kirchhoff-Helmholtz operators.

Time convention follows the hologram model used throughout the package:
``p_H = G_p^H p_S - j w rho0 G_v^H v`` with ``g = exp(-j k d) / (4 pi d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SingularEvaluationError(ValueError):
    """Raised when a field point coincides with a source point."""


@dataclass(frozen=True)
class PhysicalConstants:
    rho0: float = 1.2
    c: float = 343.0

    def __post_init__(self):
        if not (self.rho0 > 0 and self.c > 0):
            raise ValueError(f"rho0 and c must be positive, got {self.rho0}, {self.c}")


@dataclass(frozen=True)
class Grid2D:
    """Uniform planar grid, enumerated row-major over (u, v).

    ``point(i, j) = origin + i * u_step * u_axis + j * v_step * v_axis``.
    """

    origin: tuple[float, float, float]
    u_step: float
    v_step: float
    n_u: int
    n_v: int
    u_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    v_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.u_step <= 0 or self.v_step <= 0:
            raise ValueError("grid steps must be positive")
        if self.n_u < 1 or self.n_v < 1:
            raise ValueError("grid counts must be >= 1")
        if not np.isclose(np.linalg.norm(self.normal), 1.0):
            raise ValueError("grid normal must be a unit vector")

    @property
    def size(self) -> int:
        return self.n_u * self.n_v

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_u, self.n_v)

    @property
    def cell_area(self) -> float:
        return self.u_step * self.v_step

    def points(self) -> np.ndarray:
        """All grid points as an ``(n_u * n_v, 3)`` array."""
        i, j = np.meshgrid(np.arange(self.n_u), np.arange(self.n_v), indexing="ij")
        o = np.asarray(self.origin, dtype=float)
        u = np.asarray(self.u_axis, dtype=float)
        v = np.asarray(self.v_axis, dtype=float)
        pts = o + (i.reshape(-1, 1) * self.u_step) * u + (j.reshape(-1, 1) * self.v_step) * v
        return pts

    def point(self, i: int, j: int) -> np.ndarray:
        return (np.asarray(self.origin, dtype=float)
                + i * self.u_step * np.asarray(self.u_axis, dtype=float)
                + j * self.v_step * np.asarray(self.v_axis, dtype=float))


@dataclass(frozen=True)
class GreenOperator:
    g_v: np.ndarray  # (N, M)
    g_p: np.ndarray  # (N, M)
    omega: float
    consts: PhysicalConstants = field(default_factory=PhysicalConstants)

    @property
    def n_sources(self) -> int:
        return self.g_v.shape[0]

    @property
    def n_holo(self) -> int:
        return self.g_v.shape[1]


def green(r, s, omega: float, consts: PhysicalConstants = PhysicalConstants()) -> complex:
    """Free-field Green's function ``exp(-j (omega/c) d) / (4 pi d)``."""
    d = float(np.linalg.norm(np.asarray(r, dtype=float) - np.asarray(s, dtype=float)))
    if d == 0.0:
        raise SingularEvaluationError(f"coincident points r = s = {tuple(r)}")
    return complex(np.exp(-1j * (omega / consts.c) * d) / (4.0 * np.pi * d))


def green_normal_derivative(r, s, n, omega: float,
                            consts: PhysicalConstants = PhysicalConstants()) -> complex:
    """Derivative of :func:`green` with respect to the source point ``s`` along ``n``."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    n = np.asarray(n, dtype=float)
    diff = s - r
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise SingularEvaluationError(f"coincident points r = s = {tuple(r)}")
    g = np.exp(-1j * (omega / consts.c) * d) / (4.0 * np.pi * d)
    return complex(-g * (1j * omega / consts.c + 1.0 / d) * float(diff @ n) / d)


def green_matrices(sources: np.ndarray, targets: np.ndarray, normal, omega: float,
                   consts: PhysicalConstants = PhysicalConstants()):
    """Vectorized Green's function and its source-normal derivative.

    Returns ``(g, dg)``, both ``(len(sources), len(targets))``.
    """
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    diff = sources[:, None, :] - targets[None, :, :]  # s - r
    d = np.linalg.norm(diff, axis=-1)
    if np.any(d == 0.0):
        n_idx, m_idx = np.argwhere(d == 0.0)[0]
        raise SingularEvaluationError(
            f"source point {n_idx} coincides with target point {m_idx}")
    k = omega / consts.c
    g = np.exp(-1j * k * d) / (4.0 * np.pi * d)
    if normal is None:
        return g, None
    normal = np.asarray(normal, dtype=float)
    proj = diff @ normal if normal.ndim == 1 else np.einsum("nmk,nk->nm", diff, normal)
    dg = -g * (1j * k + 1.0 / d) * proj / d
    return g, dg


def build_green_operator(source_grid: Grid2D, holo_grid: Grid2D, omega: float,
                         consts: PhysicalConstants = PhysicalConstants()) -> GreenOperator:
    g_v, g_p = green_matrices(source_grid.points(), holo_grid.points(),
                              source_grid.normal, omega, consts)
    return GreenOperator(g_v=g_v, g_p=g_p, omega=float(omega), consts=consts)


def _check_len(name: str, vec: np.ndarray, n: int) -> np.ndarray:
    vec = np.asarray(vec)
    if vec.ndim != 1 or vec.shape[0] != n:
        raise ValueError(f"{name} must have length {n}, got shape {vec.shape}")
    return vec


def forward_kh(op: GreenOperator, surface_pressure, velocity, area_weight: float) -> np.ndarray:
    """Discrete Kirchhoff-Helmholtz estimate of the hologram pressure."""
    p_s = _check_len("surface_pressure", surface_pressure, op.n_sources)
    v = _check_len("velocity", velocity, op.n_sources)
    rho0 = op.consts.rho0
    return area_weight * (op.g_p.conj().T @ p_s - 1j * op.omega * rho0 * (op.g_v.conj().T @ v))


def forward_rayleigh(op: GreenOperator, velocity, area_weight: float) -> np.ndarray:
    """Rayleigh integral for a planar source in an infinite rigid baffle."""
    v = _check_len("velocity", velocity, op.n_sources)
    return -2j * op.omega * op.consts.rho0 * area_weight * (op.g_v.conj().T @ v)
