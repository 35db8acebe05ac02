"""Per-sample metrics, SNR sweeps and report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import add_complex_noise, add_noise
from .esm import EsmConfig, run_esm
from .metrics import MetricRecord, band_aggregate, ncc, nmse
from .srcnn import predict_batched

SNR_LIST = (30.0, 25.0, 20.0, 15.0, 10.0, 5.0)


def score(dataset, indices, recon, method: str, snr_db=None) -> list[MetricRecord]:
    """Masked NCC / NMSE of ``recon[k]`` against sample ``indices[k]``."""
    out = []
    for k, idx in enumerate(indices):
        truth, mask = dataset.velocity[idx], dataset.mask[idx]
        out.append(MetricRecord(sample_id=int(idx), frequency=float(dataset.freqs[idx]),
                                snr_db=snr_db, ncc=ncc(recon[k], truth, mask),
                                nmse=nmse(recon[k], truth, mask), method=method))
    return out


def summarize(records) -> dict:
    records = list(records)
    methods = sorted({r.method for r in records})
    summary = {}
    for m in methods:
        rs = [r for r in records if r.method == m]
        nccs = np.array([r.ncc for r in rs])
        nmses = np.array([r.nmse for r in rs])
        summary[m] = {"count": len(rs), "NCC_avg": float(nccs.mean()),
                      "NCC_min": float(nccs.min()), "NCC_std": float(nccs.std()),
                      "NMSE_avg": float(nmses.mean())}
    bands = band_aggregate(records)
    summary["bands"] = [b.__dict__ for b in bands]
    return summary


def _noise_seed(seed: int, sample: int, snr_db: float):
    return [int(seed), int(sample), int(round(snr_db * 1000))]


@dataclass
class SweepRow:
    snr_db: float
    method: str
    mean: float
    std: float
    count: int


def snr_sweep(model, dataset, indices, snrs=SNR_LIST, seeds=(0,),
              esm_config: EsmConfig | None = EsmConfig(), noise_domain: str = "magnitude"):
    """NCC under additive white Gaussian noise for each SNR (dB) and method.

    The network input gets noise on the normalized magnitude image
    (``noise_domain="magnitude"``) or on the complex field before taking the
    magnitude (``"complex"``).  The ESM baseline always receives the noisy
    complex field.  ``snr = inf`` reproduces the noiseless evaluation.
    Returns ``(rows, records)``.
    """
    if model is None:
        raise ValueError("SNR sweep needs trained weights")
    if noise_domain not in ("magnitude", "complex"):
        raise ValueError(f"unknown noise domain {noise_domain!r}")
    indices = np.asarray(indices, dtype=np.int64)
    records, rows = [], []
    for snr in snrs:
        per_method: dict[str, list] = {}
        for seed in seeds:
            if noise_domain == "magnitude" or math.isinf(snr):
                px = np.stack([add_noise(dataset.pressure[i], snr, _noise_seed(seed, i, snr))
                               if not math.isinf(snr) else dataset.pressure[i] for i in indices])
            else:
                px = np.stack([add_complex_noise(dataset.pressure_complex[i], snr,
                                                 _noise_seed(seed, i, snr))[0] for i in indices])
            recon = predict_batched(model, px, dataset.mask[indices])
            recs = score(dataset, indices, recon, "srcnn", snr)
            if esm_config is not None and dataset.pressure_complex is not None:
                pc = [dataset.pressure_complex[i] if math.isinf(snr) else
                      add_complex_noise(dataset.pressure_complex[i], snr,
                                        _noise_seed(seed, i, snr))[1] for i in indices]
                res = run_esm(dataset, indices, esm_config, pressures=pc)
                recs += score(dataset, indices, res.recon, "esm", snr)
            records += recs
            for r in recs:
                per_method.setdefault(r.method, []).append(r.ncc)
        for method in sorted(per_method):
            v = np.array(per_method[method])
            rows.append(SweepRow(float(snr), method, float(v.mean()), float(v.std()), len(v)))
    return rows, records


# --- report files ----------------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    return f"{x:.9g}"


def write_metrics_csv(records, path) -> list[MetricRecord]:
    """Per-sample rows ordered by ascending NMSE (ties by method, then sample id)."""
    ordered = sorted(records, key=lambda r: (r.nmse, r.method, r.sample_id))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "sample_id", "method", "frequency_hz", "snr_db", "ncc", "nmse_db"])
        for rank, r in enumerate(ordered):
            w.writerow([rank, r.sample_id, r.method, _fmt(r.frequency), _fmt(r.snr_db),
                        _fmt(r.ncc), _fmt(r.nmse)])
    return ordered


def write_bands_csv(summary, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "band", "f_lo", "f_hi", "count", "ncc_mean", "ncc_std"])
        for b in summary["bands"]:
            w.writerow([b["method"], b["band"], _fmt(b["f_lo"]), _fmt(b["f_hi"]), b["count"],
                        _fmt(b["mean"]), _fmt(b["std"])])


def write_snr_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["snr_db", "method", "ncc_mean", "ncc_std", "count"])
        for r in rows:
            w.writerow([_fmt(r.snr_db), r.method, _fmt(r.mean), _fmt(r.std), r.count])


def _plots(ordered, summary, rows, out: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "srnah"
    meta = {"Date": None}
    methods = sorted({r.method for r in ordered})

    fig, axes = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    for m in methods:
        rs = [r for r in ordered if r.method == m]
        x = np.arange(len(rs))
        axes[0].plot(x, [r.nmse for r in rs], label=m)
        axes[1].plot(x, [r.ncc for r in rs], label=m)
        axes[1].axhline(summary[m]["NCC_avg"], ls="--", lw=0.8)
    axes[0].set_ylabel("NMSE [dB]")
    axes[1].set_ylabel("NCC")
    axes[1].set_xlabel("sample (ascending NMSE)")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(out / "ordered_metrics.svg", metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 200.0 / (len(methods) + 1)
    for k, m in enumerate(methods):
        bs = [b for b in summary["bands"] if b["method"] == m and b["mean"] is not None]
        centers = [b["f_lo"] + (k + 1) * width for b in bs]
        ax.errorbar(centers, [b["mean"] for b in bs], yerr=[b["std"] for b in bs], fmt="o",
                    capsize=3, label=m)
    ax.set_xlabel("frequency band [Hz]")
    ax.set_ylabel("NCC")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "ncc_bands.svg", metadata=meta)
    plt.close(fig)

    if rows:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for m in sorted({r.method for r in rows}):
            rs = [r for r in rows if r.method == m and math.isfinite(r.snr_db)]
            ax.errorbar([r.snr_db for r in rs], [r.mean for r in rs], yerr=[r.std for r in rs],
                        fmt="o-", capsize=3, label=m)
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("NCC")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "ncc_snr.svg", metadata=meta)
        plt.close(fig)


def write_report(records, out_dir, sweep_rows=None, plots: bool = True) -> dict:
    """``metrics.csv``, ``bands.csv``, ``summary.json`` (+ ``snr.csv`` and SVG figures)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = write_metrics_csv(records, out / "metrics.csv")
    summary = summarize(records)
    write_bands_csv(summary, out / "bands.csv")
    if sweep_rows:
        write_snr_csv(sweep_rows, out / "snr.csv")
        summary["snr"] = [r.__dict__ for r in sweep_rows]
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    if plots:
        _plots(ordered, summary, sweep_rows or [], out)
    return summary
