"""Synthetic hologram/velocity dataset: sample synthesis, noise, on-disk format."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .field import Grid2D, PhysicalConstants, build_green_operator, forward_rayleigh
from .plate import MASK_FAMILIES, SPRUCE, ModeSet, PlateSpec, make_mask, solve_modes

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DATA_FILES = ("pressure.f32", "velocity.f32", "freqs.f32", "mask.u8", "scales.f32",
              "pressure_complex.f32")


def n_threads() -> int:
    """Worker cap from ``NAH_THREADS`` (defaults to the CPU count)."""
    env = os.environ.get("NAH_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Scene:
    lx: float = 0.40
    ly: float = 0.20
    n1: int = 16
    n2: int = 64
    m1: int = 8
    m2: int = 8
    standoff: float = 0.02
    consts: PhysicalConstants = field(default_factory=PhysicalConstants)

    @property
    def hx(self) -> float:
        return self.lx / (self.n2 + 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.n1 + 1)

    def velocity_grid(self) -> Grid2D:
        # rows run along y, columns along x; matches the (n1, n2) image layout
        return Grid2D(origin=(self.hx, self.hy, 0.0), u_step=self.hy, v_step=self.hx,
                      n_u=self.n1, n_v=self.n2)

    def hologram_grid(self) -> Grid2D:
        """``m1 x m2`` microphones spanning the velocity-grid bounding box at ``z = standoff``."""
        du = (self.ly - 2 * self.hy) / (self.m1 - 1) if self.m1 > 1 else self.ly
        dv = (self.lx - 2 * self.hx) / (self.m2 - 1) if self.m2 > 1 else self.lx
        return Grid2D(origin=(self.hx, self.hy, self.standoff), u_step=du, v_step=dv,
                      n_u=self.m1, n_v=self.m2)


@dataclass
class Sample:
    pressure: np.ndarray  # (m1, m2) in [0, 1]
    velocity: np.ndarray  # (n1, n2) in [0, 1]
    mask: np.ndarray  # (n1, n2) uint8
    frequency: float
    pressure_scale: float
    velocity_scale: float
    pressure_complex: np.ndarray | None = None  # complex (m1, m2), divided by pressure_scale


def synthesize_sample(scene: Scene, spec: PlateSpec, mask: np.ndarray, mode_index: int,
                      modes: ModeSet | None = None) -> Sample:
    """Velocity and hologram-pressure images for one plate mode."""
    if modes is None:
        modes = solve_modes(spec, mask)
    if not 0 <= mode_index < len(modes):
        raise IndexError(f"mode {mode_index} not available ({len(modes)} modes)")
    shape = modes.shapes[mode_index]
    freq = float(modes.frequencies[mode_index])
    omega = 2.0 * math.pi * freq
    op = build_green_operator(scene.velocity_grid(), scene.hologram_grid(), omega, scene.consts)
    p = forward_rayleigh(op, shape.reshape(-1).astype(complex), scene.hx * scene.hy)
    if not np.all(np.isfinite(p)):
        raise RuntimeError(f"non-finite hologram pressure for mode {mode_index}")

    p_img = p.reshape(scene.m1, scene.m2)
    p_scale = float(np.abs(p_img).max())
    v_mag = np.abs(shape)
    v_scale = float(v_mag.max())
    return Sample(pressure=np.abs(p_img) / p_scale, velocity=v_mag / v_scale,
                  mask=np.asarray(mask, dtype=np.uint8), frequency=freq,
                  pressure_scale=p_scale, velocity_scale=v_scale,
                  pressure_complex=p_img / p_scale)


# --- noise -----------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def awgn(image: np.ndarray, snr_db: float, rng_seed=None) -> np.ndarray:
    """``image`` plus white Gaussian noise of power ``mean(image**2) / 10**(snr/10)``.

    Complex input receives circular complex noise of the same total power.
    """
    image = np.asarray(image)
    power = float(np.mean(np.abs(image) ** 2))
    if power == 0.0:
        raise ValueError("SNR is undefined for an all-zero image")
    if not np.isfinite(snr_db) and snr_db > 0:
        return image.copy()
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    sigma2 = power / 10.0 ** (snr_db / 10.0)
    rng = _rng(rng_seed)
    if np.iscomplexobj(image):
        noise = (rng.standard_normal(image.shape) + 1j * rng.standard_normal(image.shape))
        return image + noise * math.sqrt(sigma2 / 2.0)
    return image + rng.standard_normal(image.shape) * math.sqrt(sigma2)


def add_noise(pressure_image: np.ndarray, snr_db: float, rng_seed=None) -> np.ndarray:
    """Noisy normalized magnitude image: AWGN, clip at zero, re-normalize to max 1."""
    noisy = np.clip(awgn(pressure_image, snr_db, rng_seed), 0.0, None)
    peak = noisy.max()
    return noisy / peak if peak > 0 else noisy


def add_complex_noise(pressure: np.ndarray, snr_db: float, rng_seed=None):
    """AWGN on the complex field; returns ``(normalized magnitude, noisy complex)``."""
    noisy = awgn(np.asarray(pressure, dtype=complex), snr_db, rng_seed)
    mag = np.abs(noisy)
    return mag / mag.max(), noisy


# --- dataset generation ----------------------------------------------------

@dataclass
class SynthConfig:
    plates: dict = field(default_factory=lambda: {f: 10 for f in MASK_FAMILIES})
    seed: int = 0
    f_max: float = 2000.0
    standoff: float = 0.02
    lx: float = 0.40
    ly: float = 0.20
    thickness: tuple = (2.6e-3, 3.4e-3)
    jitter: float = 0.1  # relative spread of material constants
    split: tuple = (0.8, 0.1, 0.1)
    max_modes: int | None = None  # per plate, lowest first

    def __post_init__(self):
        self.thickness = tuple(self.thickness)
        self.split = tuple(self.split)
        unknown = set(self.plates) - set(MASK_FAMILIES)
        if unknown:
            raise ValueError(f"unknown mask families {sorted(unknown)}")
        if any(int(n) < 0 for n in self.plates.values()) or sum(self.plates.values()) == 0:
            raise ValueError("plate counts must be non-negative and not all zero")
        if len(self.split) != 3 or min(self.split) < 0 or not math.isclose(sum(self.split), 1.0):
            raise ValueError(f"split must be three non-negative fractions summing to 1, got {self.split}")
        if not (self.f_max > 0 and self.standoff > 0 and self.lx > 0 and self.ly > 0):
            raise ValueError("f_max, standoff, lx and ly must be positive")
        if not 0 < self.thickness[0] <= self.thickness[1]:
            raise ValueError(f"bad thickness range {self.thickness}")

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("config must be a JSON object")
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**raw)

    def scene(self) -> Scene:
        return Scene(lx=self.lx, ly=self.ly, standoff=self.standoff)


def _draw_mask_params(family: str, rng: np.random.Generator) -> dict:
    if family == "superellipse":
        return {"p": rng.uniform(1.8, 6.0), "ax": rng.uniform(0.75, 1.0),
                "ay": rng.uniform(0.75, 1.0)}
    if family == "violinoid":
        return {"p": rng.uniform(2.0, 3.0), "ax": rng.uniform(0.85, 1.0),
                "ay": rng.uniform(0.8, 1.0), "upper": rng.uniform(0.6, 0.85),
                "waist": rng.uniform(0.5, 0.9)}
    return {}


def draw_plates(config: SynthConfig) -> list[PlateSpec]:
    rng = np.random.default_rng(config.seed)
    specs = []
    for family in MASK_FAMILIES:
        for _ in range(int(config.plates.get(family, 0))):
            params = {k: round(float(v), 6) for k, v in _draw_mask_params(family, rng).items()}
            j = lambda: 1.0 + rng.uniform(-config.jitter, config.jitter)  # noqa: E731
            specs.append(PlateSpec.orthotropic(
                e_l=SPRUCE["e_l"] * j(), e_r=SPRUCE["e_r"] * j(), g_lr=SPRUCE["g_lr"] * j(),
                nu_lr=SPRUCE["nu_lr"], rho=SPRUCE["rho"] * j(),
                h=rng.uniform(*config.thickness), lx=config.lx, ly=config.ly,
                mask_family=family, mask_params=params))
    return specs


def split_plates(families: list[str], fractions, seed: int) -> dict[str, list[int]]:
    """Plate-level split with exact overall proportions, interleaved across mask families."""
    rng = np.random.default_rng([seed, 1])
    queues = []
    for family in MASK_FAMILIES:
        ids = [i for i, f in enumerate(families) if f == family]
        queues.append([ids[k] for k in rng.permutation(len(ids))])
    order = []
    while any(queues):
        for q in queues:
            if q:
                order.append(q.pop(0))
    n = len(order)
    n_test = int(round(fractions[2] * n))
    n_val = int(round(fractions[1] * n))
    return {"train": sorted(order[n_test + n_val:]),
            "val": sorted(order[n_test:n_test + n_val]),
            "test": sorted(order[:n_test])}


def _plate_samples(scene: Scene, spec: PlateSpec, f_max: float, max_modes):
    mask = make_mask(spec.mask_family, spec.mask_params, scene.n1, scene.n2)
    modes = solve_modes(spec, mask, f_max)
    count = len(modes) if max_modes is None else min(len(modes), max_modes)
    return [synthesize_sample(scene, spec, mask, k, modes) for k in range(count)]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class DatasetManifest:
    D: int
    grids: dict
    standoff: float
    seed: int
    splits: dict
    files: dict
    sample_plate: list
    plates: list
    config: dict
    version: int = FORMAT_VERSION

    def to_json(self) -> str:
        d = asdict(self)
        order = ["version", "D", "grids", "standoff", "seed", "splits", "files",
                 "sample_plate", "plates", "config"]
        return json.dumps({k: d[k] for k in order}, indent=1) + "\n"


def build_dataset(config: SynthConfig, out_dir, overwrite: bool = False) -> DatasetManifest:
    """Generate all samples and write the dataset directory."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not overwrite:
        raise FileExistsError(f"output directory {out} already exists and is not empty")
    scene = config.scene()
    specs = draw_plates(config)
    log.info("solving %d plates", len(specs))
    with ThreadPoolExecutor(max_workers=n_threads()) as pool:
        per_plate = list(pool.map(
            lambda s: _plate_samples(scene, s, config.f_max, config.max_modes), specs))

    samples, sample_plate = [], []
    for pid, group in enumerate(per_plate):
        samples += group
        sample_plate += [pid] * len(group)
    if not samples:
        raise ValueError("configuration produced no samples")

    plate_split = split_plates([s.mask_family for s in specs], config.split, config.seed)
    splits = {name: [i for i, p in enumerate(sample_plate) if p in set(ids)]
              for name, ids in plate_split.items()}

    out.mkdir(parents=True, exist_ok=True)
    arrays = {
        "pressure.f32": np.stack([s.pressure for s in samples]).astype("<f4"),
        "velocity.f32": np.stack([s.velocity for s in samples]).astype("<f4"),
        "freqs.f32": np.array([s.frequency for s in samples], dtype="<f4"),
        "mask.u8": np.stack([s.mask for s in samples]).astype(np.uint8),
        "scales.f32": np.array([[s.pressure_scale, s.velocity_scale] for s in samples],
                               dtype="<f4"),
        "pressure_complex.f32": np.stack(
            [np.stack([s.pressure_complex.real, s.pressure_complex.imag], axis=-1)
             for s in samples]).astype("<f4"),
    }
    for name, arr in arrays.items():
        (out / name).write_bytes(np.ascontiguousarray(arr).tobytes())

    cfg = asdict(config)
    manifest = DatasetManifest(
        D=len(samples),
        grids={"pressure": [scene.m1, scene.m2], "velocity": [scene.n1, scene.n2],
               "lx": scene.lx, "ly": scene.ly},
        standoff=scene.standoff, seed=config.seed, splits=splits,
        files={name: _sha256(out / name) for name in arrays},
        sample_plate=sample_plate,
        plates=[{"family": s.mask_family, "params": s.mask_params, "h": s.h, "rho": s.rho,
                 "d11": s.d11, "d12": s.d12, "d22": s.d22, "d66": s.d66} for s in specs],
        config={k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()})
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    log.info("wrote %d samples to %s", len(samples), out)
    return manifest


@dataclass
class Dataset:
    """In-memory view of a dataset directory."""

    manifest: dict
    pressure: np.ndarray  # (D, m1, m2) float32
    velocity: np.ndarray  # (D, n1, n2) float32
    freqs: np.ndarray  # (D,)
    mask: np.ndarray  # (D, n1, n2) uint8
    scales: np.ndarray  # (D, 2)
    pressure_complex: np.ndarray | None  # (D, m1, m2) complex64

    def __len__(self):
        return len(self.freqs)

    def split(self, name: str) -> np.ndarray:
        return np.asarray(self.manifest["splits"][name], dtype=np.int64)

    def scene(self) -> Scene:
        g = self.manifest["grids"]
        return Scene(lx=g["lx"], ly=g["ly"], n1=g["velocity"][0], n2=g["velocity"][1],
                     m1=g["pressure"][0], m2=g["pressure"][1],
                     standoff=self.manifest["standoff"])


def load_dataset(path, verify: bool = True) -> Dataset:
    path = Path(path)
    manifest_file = path / "manifest.json"
    if not manifest_file.exists():
        raise FileNotFoundError(f"{manifest_file} not found")
    manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
    if manifest.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset version {manifest.get('version')}")
    d = manifest["D"]
    m1, m2 = manifest["grids"]["pressure"]
    n1, n2 = manifest["grids"]["velocity"]
    if verify:
        for name, digest in manifest["files"].items():
            if _sha256(path / name) != digest:
                raise ValueError(f"checksum mismatch for {name}")

    def read(name, dtype, shape):
        return np.fromfile(path / name, dtype=dtype).reshape(shape)

    pc = None
    if (path / "pressure_complex.f32").exists():
        raw = read("pressure_complex.f32", "<f4", (d, m1, m2, 2))
        pc = (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64)
    return Dataset(manifest=manifest,
                   pressure=read("pressure.f32", "<f4", (d, m1, m2)).astype(np.float32),
                   velocity=read("velocity.f32", "<f4", (d, n1, n2)).astype(np.float32),
                   freqs=read("freqs.f32", "<f4", (d,)).astype(np.float32),
                   mask=read("mask.u8", np.uint8, (d, n1, n2)),
                   scales=read("scales.f32", "<f4", (d, 2)).astype(np.float32),
                   pressure_complex=pc)
