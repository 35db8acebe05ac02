"""Desk-scale reproduction: dataset, training, ESM comparison, SNR sweep.

    python3 scripts/run_desk.py --out runs/desk [--config scripts/desk.json]
"""

import argparse
import json
import logging
from pathlib import Path

from srnah.dataset import SynthConfig
from srnah.experiment import run_pipeline
from srnah.srcnn import TrainConfig

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=HERE / "desk.json")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise-domain", default="magnitude", choices=["magnitude", "complex"])
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    summary = run_pipeline(SynthConfig.from_json(args.config), args.out,
                           TrainConfig(epochs=args.epochs, seed=args.seed),
                           noise_domain=args.noise_domain)
    for m in ("srcnn", "esm"):
        s = summary[m]
        print(f"{m:6s} NCC_avg {s['NCC_avg']:.4f}  NCC_min {s['NCC_min']:.4f}  "
              f"NMSE_avg {s['NMSE_avg']:.2f} dB")
    for row in summary.get("snr", []):
        print(f"SNR {row['snr_db']:5.1f} dB  {row['method']:6s} NCC {row['mean']:.4f} "
              f"+- {row['std']:.4f}")
    print(json.dumps(summary["timings"], indent=1))


if __name__ == "__main__":
    main()
