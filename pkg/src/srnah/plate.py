"""Plate outlines and a finite-difference modal solver for flat orthotropic plates.

The velocity grid has ``n1`` rows along y and ``n2`` columns along x.  Grid
nodes sit at ``((i + 1) * hy, (j + 1) * hx)`` with ``hx = lx / (n2 + 1)`` and
``hy = ly / (n1 + 1)``, so the edges of the bounding box are the first
clamped nodes outside a full-rectangle mask.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy import ndimage

log = logging.getLogger(__name__)

MASK_FAMILIES = ("rectangle", "superellipse", "violinoid")

# Sitka-spruce-like engineering constants (grain along x)
SPRUCE = dict(e_l=10.8e9, e_r=0.84e9, g_lr=0.69e9, nu_lr=0.37, rho=400.0)


@dataclass(frozen=True)
class PlateSpec:
    lx: float = 0.40
    ly: float = 0.20
    h: float = 3.0e-3
    rho: float = SPRUCE["rho"]
    # 3 mm spruce-like plate, see PlateSpec.orthotropic()
    d11: float = 24.5615
    d12: float = 0.7068
    d22: float = 1.9103
    d66: float = 1.5525
    mask_family: str = "rectangle"
    mask_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.lx, self.ly, self.h, self.rho) <= 0:
            raise ValueError("lx, ly, h and rho must be positive")
        if min(self.d11, self.d22, self.d66) <= 0 or self.d11 * self.d22 <= self.d12 ** 2:
            raise ValueError("bending rigidities are not positive definite")
        if self.mask_family not in MASK_FAMILIES:
            raise ValueError(f"unknown mask family {self.mask_family!r}")

    @property
    def mass_per_area(self) -> float:
        return self.rho * self.h

    @classmethod
    def orthotropic(cls, e_l=SPRUCE["e_l"], e_r=SPRUCE["e_r"], g_lr=SPRUCE["g_lr"],
                    nu_lr=SPRUCE["nu_lr"], h=3.0e-3, rho=SPRUCE["rho"], **kw) -> "PlateSpec":
        """Build from engineering constants, longitudinal (grain) axis along x."""
        nu_rl = nu_lr * e_r / e_l
        den = 12.0 * (1.0 - nu_lr * nu_rl)
        h3 = h ** 3
        return cls(h=h, rho=rho, d11=e_l * h3 / den, d22=e_r * h3 / den,
                   d12=nu_lr * e_r * h3 / den, d66=g_lr * h3 / 12.0, **kw)

    @classmethod
    def isotropic(cls, e=70e9, nu=0.3, h=3.0e-3, rho=2700.0, **kw) -> "PlateSpec":
        d = e * h ** 3 / (12.0 * (1.0 - nu ** 2))
        return cls(h=h, rho=rho, d11=d, d22=d, d12=nu * d, d66=(1.0 - nu) * d / 2.0, **kw)


@dataclass(frozen=True)
class ModeSet:
    frequencies: np.ndarray  # (K,), Hz, ascending
    shapes: np.ndarray  # (K, n1, n2), max |.| = 1 on the mask
    eigenvalues: np.ndarray  # (K,), of the stiffness operator

    def __len__(self):
        return len(self.frequencies)


def node_coordinates(lx: float, ly: float, n1: int = 16, n2: int = 64):
    """Physical (x, y) node coordinates, each ``(n1, n2)``."""
    hx, hy = lx / (n2 + 1), ly / (n1 + 1)
    x = (np.arange(n2) + 1) * hx
    y = (np.arange(n1) + 1) * hy
    return np.meshgrid(x, y)


def _superellipse(xn, yn, p, ax, ay, cx=0.0):
    with np.errstate(divide="ignore"):
        return np.abs((xn - cx) / ax) ** p + np.abs(yn / ay) ** p <= 1.0


MASK_BOUNDS = {
    "superellipse": {"p": (1.5, 12.0), "ax": (0.3, 1.0), "ay": (0.3, 1.0)},
    "violinoid": {"p": (1.5, 12.0), "ax": (0.3, 1.0), "ay": (0.3, 1.0),
                  "upper": (0.4, 1.0), "waist": (0.0, 0.95)},
}
MASK_DEFAULTS = {
    "superellipse": {"p": 2.0, "ax": 1.0, "ay": 1.0},
    "violinoid": {"p": 2.5, "ax": 1.0, "ay": 1.0, "upper": 0.8, "waist": 0.7},
}


def make_mask(family: str, params: dict | None = None, n1: int = 16, n2: int = 64) -> np.ndarray:
    """Binary outline mask on the ``n1 x n2`` velocity grid.

    Shapes are drawn in pixel-centred coordinates normalized so the grid
    spans ``[-1, 1]`` on both axes.  ``superellipse`` keeps ``|x/ax|^p + |y/ay|^p <= 1``.  ``violinoid``
    is the union of a lower and an upper bout (the upper one ``upper`` times
    narrower); ``waist`` shifts the bouts apart, pinching the outline between
    them.  With ``waist = 0`` the union is a single superellipse.
    """
    if family not in MASK_FAMILIES:
        raise ValueError(f"unknown mask family {family!r}")
    if family == "rectangle":
        return np.ones((n1, n2), dtype=np.uint8)

    p = dict(MASK_DEFAULTS[family])
    p.update(params or {})
    for name, (lo, hi) in MASK_BOUNDS[family].items():
        if not lo <= p[name] <= hi:
            raise ValueError(f"{family} parameter {name}={p[name]} outside [{lo}, {hi}]")

    xn, yn = np.meshgrid((2 * np.arange(n2) + 1) / n2 - 1.0, (2 * np.arange(n1) + 1) / n1 - 1.0)
    if family == "superellipse":
        m = _superellipse(xn, yn, p["p"], p["ax"], p["ay"])
    else:
        half = p["ax"] * (1.0 - p["waist"] / 2.0)
        shift = p["ax"] - half
        lower = _superellipse(xn, yn, p["p"], half, p["ay"], cx=-shift)
        upper = _superellipse(xn, yn, p["p"], half, p["ay"] * p["upper"], cx=shift)
        m = lower | upper

    if not m.any():
        raise ValueError(f"{family} parameters {p} produce an empty mask")
    labels, n_comp = ndimage.label(m)
    if n_comp > 1:
        raise ValueError(f"{family} parameters {p} produce a disconnected mask")
    return m.astype(np.uint8)


def _stencil(spec: PlateSpec, hx: float, hy: float) -> dict:
    """13-point stencil of d11 dx^4 + 2 (d12 + 2 d66) dx^2 dy^2 + d22 dy^4, keyed by (di, dj)."""
    st: dict[tuple[int, int], float] = {}

    def add(o, c):
        st[o] = st.get(o, 0.0) + c

    for k, c in zip((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)):
        add((0, k), spec.d11 * c / hx ** 4)
        add((k, 0), spec.d22 * c / hy ** 4)
    b = 2.0 * (spec.d12 + 2.0 * spec.d66)
    second = {-1: 1.0, 0: -2.0, 1: 1.0}
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            add((di, dj), b * second[di] * second[dj] / (hx * hy) ** 2)
    return st


def assemble_plate_operator(spec: PlateSpec, mask: np.ndarray) -> sp.csr_matrix:
    """Finite-difference bending operator restricted to the masked nodes.

    Nodes outside the mask are held at zero.  A stencil arm of length two
    whose midpoint lies outside the mask reaches a ghost node, which mirrors
    the node itself (zero slope at the clamped edge) and so only adds to the
    diagonal.  The result is symmetric.
    """
    mask = np.asarray(mask).astype(bool)
    n1, n2 = mask.shape
    if mask.sum() < 12:
        raise ValueError(f"mask has {int(mask.sum())} interior points, need >= 12")
    hx, hy = spec.lx / (n2 + 1), spec.ly / (n1 + 1)
    st = _stencil(spec, hx, hy)

    padded = np.zeros((n1 + 4, n2 + 4), dtype=bool)
    padded[2:-2, 2:-2] = mask
    index = -np.ones((n1 + 4, n2 + 4), dtype=np.int64)
    ii, jj = np.nonzero(mask)
    n = len(ii)
    index[ii + 2, jj + 2] = np.arange(n)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for (di, dj), c in st.items():
        qi, qj = ii + 2 + di, jj + 2 + dj
        inside = padded[qi, qj]
        if abs(di) == 2 or abs(dj) == 2:
            mid_inside = padded[ii + 2 + di // 2, jj + 2 + dj // 2]
            diag += np.where(~mid_inside, c, 0.0)
            inside = inside & mid_inside
        src = np.nonzero(inside)[0]
        rows.append(src)
        cols.append(index[qi[src], qj[src]])
        vals.append(np.full(len(src), c))
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    a = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return a.tocsr()


def solve_modes(spec: PlateSpec, mask: np.ndarray, f_max: float = 2000.0) -> ModeSet:
    """Eigenpairs of ``A phi = lambda (rho h) phi`` with frequency at most ``f_max``."""
    mask = np.asarray(mask).astype(bool)
    a = assemble_plate_operator(spec, mask)
    mu = spec.mass_per_area
    lam_max = mu * (2.0 * math.pi * f_max) ** 2
    try:
        lam, vec = scipy.linalg.eigh(a.toarray(), subset_by_value=(-np.inf, lam_max),
                                     driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"plate eigensolver failed: {exc}") from exc

    n1, n2 = mask.shape
    shapes = np.zeros((len(lam), n1, n2))
    ii, jj = np.nonzero(mask)
    for k in range(len(lam)):
        phi = vec[:, k]
        # fix sign so the largest entry is positive; makes output deterministic
        peak = np.argmax(np.abs(phi))
        phi = phi / phi[peak]
        shapes[k, ii, jj] = phi
    freqs = np.sqrt(np.maximum(lam, 0.0) / mu) / (2.0 * math.pi)
    if len(lam) == 0:
        log.warning("no plate modes below %.1f Hz", f_max)
    return ModeSet(frequencies=freqs, shapes=shapes, eigenvalues=lam)
