"""``nah`` command line: synth, train, infer, baseline esm, eval."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

log = logging.getLogger("srnah")

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2
VALIDATION_ERRORS = (ValueError, FileNotFoundError, FileExistsError, KeyError)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _write_recon(out: Path, recon: np.ndarray, meta: dict, filename: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / filename).write_bytes(np.ascontiguousarray(recon, dtype="<f4").tobytes())
    meta = dict(meta, file=filename, shape=list(recon.shape))
    (out / "recon.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")


def read_recon(pred_dir) -> tuple[dict, np.ndarray]:
    pred = Path(pred_dir)
    meta = json.loads((pred / "recon.json").read_text(encoding="utf-8"))
    recon = np.fromfile(pred / meta["file"], dtype="<f4").reshape(meta["shape"])
    return meta, recon


def cmd_synth(args):
    from .dataset import SynthConfig, build_dataset

    config = SynthConfig.from_json(args.config) if args.config else SynthConfig()
    if args.seed is not None:
        config.seed = args.seed
    manifest = build_dataset(config, args.out, overwrite=args.overwrite)
    print(f"wrote {manifest.D} samples to {args.out} "
          f"(train {len(manifest.splits['train'])}, val {len(manifest.splits['val'])}, "
          f"test {len(manifest.splits['test'])})")


def cmd_train(args):
    from .dataset import load_dataset
    from .srcnn import TrainConfig, save_weights, train

    data = load_dataset(args.data)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch, seed=args.seed, lr=args.lr,
                         early_stop_patience=None if args.no_early_stop else 20)
    model, history = train(data, config)
    out = save_weights(model, args.out)
    history.to_csv(out / "history.csv")
    (out / "train_config.json").write_text(json.dumps(asdict(config), indent=1) + "\n",
                                           encoding="utf-8")
    print(f"best epoch {history.best_epoch} val loss {history.best_val_loss:.6g}; "
          f"weights in {out}")


def cmd_infer(args):
    from .dataset import load_dataset
    from .srcnn import load_weights, predict_batched

    data = load_dataset(args.data)
    model = load_weights(args.model)
    idx = data.split(args.split)
    recon = predict_batched(model, data.pressure[idx], data.mask[idx])
    _write_recon(Path(args.out), recon,
                 {"method": "srcnn", "split": args.split, "sample_ids": idx.tolist(),
                  "model": str(Path(args.model).resolve())}, "recon.f32")
    print(f"wrote {len(idx)} reconstructions to {args.out}")


def cmd_esm(args):
    import csv

    from .dataset import load_dataset
    from .esm import EsmConfig, run_esm

    data = load_dataset(args.data)
    config = EsmConfig(lambda_mode=args.lambda_mode, lam=args.lam)
    if config.lambda_mode == "oracle-sweep":
        log.warning("oracle-sweep uses the ground truth; results are not a fair baseline")
    idx = data.split(args.split)
    res = run_esm(data, idx, config)
    out = Path(args.out)
    _write_recon(out, res.recon, {"method": "esm", "split": args.split,
                                  "sample_ids": idx.tolist(), "lambda_mode": args.lambda_mode},
                 "esm_recon.f32")
    with open(out / "esm.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "lambda", "ncc", "nmse_db"])
        for i, lam, c, e in zip(idx, res.lambdas, res.ncc, res.nmse):
            w.writerow([int(i), f"{lam:.9g}", f"{c:.9g}", f"{e:.9g}"])
    print(f"ESM ({args.lambda_mode}) mean NCC {res.ncc.mean():.4f}, "
          f"mean NMSE {res.nmse.mean():.2f} dB over {len(idx)} samples")


def cmd_eval(args):
    from .dataset import load_dataset
    from .evaluation import score, snr_sweep, write_report
    from .srcnn import load_weights

    data = load_dataset(args.data)
    records, rows = [], None
    model = None
    for pred_dir in [args.pred] + (args.compare or []):
        meta, recon = read_recon(pred_dir)
        ids = np.asarray(meta["sample_ids"], dtype=np.int64)
        if len(ids) != len(recon) or (len(ids) and ids.max() >= len(data)):
            raise ValueError(f"reconstructions in {pred_dir} do not match the dataset")
        records += score(data, ids, recon, meta["method"])
        if meta["method"] == "srcnn" and model is None:
            model = load_weights(meta["model"])
            sweep_ids = ids
    if args.snr:
        if model is None:
            raise ValueError("--snr needs SRCNN reconstructions produced by `nah infer`")
        rows, _ = snr_sweep(model, data, sweep_ids, args.snr, args.seeds,
                            noise_domain=args.noise_domain)
    summary = write_report(records, args.out, rows, plots=not args.no_plots)
    for m in sorted(k for k in summary if k not in ("bands", "snr")):
        s = summary[m]
        print(f"{m}: n={s['count']} NCC_avg={s['NCC_avg']:.4f} NCC_min={s['NCC_min']:.4f} "
              f"NMSE_avg={s['NMSE_avg']:.2f} dB")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nah", description="Near-field acoustic holography toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--config", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--overwrite", action="store_true")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train the network")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--no-early-stop", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="predict velocity images")
    i.add_argument("--model", type=Path, required=True)
    i.add_argument("--data", type=Path, required=True)
    i.add_argument("--out", type=Path, required=True)
    i.add_argument("--split", default="test", choices=["train", "val", "test"])
    i.set_defaults(func=cmd_infer)

    b = sub.add_parser("baseline", help="reference reconstructions")
    bsub = b.add_subparsers(dest="baseline", required=True)
    e = bsub.add_parser("esm", help="equivalent source method with Tikhonov regularization")
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--lambda-mode", default="gcv", choices=["fixed", "gcv", "oracle-sweep"])
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--split", default="test", choices=["train", "val", "test"])
    e.set_defaults(func=cmd_esm)

    v = sub.add_parser("eval", help="metrics, band table, SNR sweep")
    v.add_argument("--pred", type=Path, required=True)
    v.add_argument("--data", type=Path, required=True)
    v.add_argument("--out", type=Path, required=True)
    v.add_argument("--compare", type=Path, action="append",
                   help="extra reconstruction directory (e.g. ESM output)")
    v.add_argument("--snr", type=_floats)
    v.add_argument("--seeds", type=_ints, default=[0])
    v.add_argument("--noise-domain", default="magnitude", choices=["magnitude", "complex"])
    v.add_argument("--no-plots", action="store_true")
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    import os

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limit = os.environ.get("NAH_THREADS")
    try:
        if limit:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=max(1, int(limit))):
                args.func(args)
        else:
            args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"nah: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"nah: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
