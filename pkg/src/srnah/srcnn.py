"""Encoder / bottleneck / decoder / super-resolution network and its training loop."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .nn import functional as F
from .nn.optim import AdamState, adam_step
from .nn.tensor import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArchitectureSpec:
    encoder_filters: tuple = (16, 32, 32, 64)
    decoder_filters: tuple = (32, 16, 8)
    sr_filters: tuple = (8, 8)
    sr_strides: tuple = ((1, 2), (1, 2), (2, 2))
    kernel: int = 3
    input_shape: tuple = (8, 8)
    output_shape: tuple = (16, 64)
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "sr_strides", tuple(tuple(s) for s in self.sr_strides))
        for name in ("encoder_filters", "decoder_filters", "sr_filters", "input_shape",
                     "output_shape"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.trace()

    def trace(self) -> list[tuple[str, tuple[int, int, int]]]:
        """(stage, (channels, h, w)) after every block; raises on an inconsistent spec."""
        n_pool = len(self.encoder_filters) - 1
        if len(self.decoder_filters) != n_pool:
            raise ValueError("need one decoder block per pooling stage")
        if len(self.sr_filters) != len(self.sr_strides) - 1:
            raise ValueError("need one SR filter count per SR stride except the last")
        h, w = self.input_shape
        if h % 2 ** n_pool or w % 2 ** n_pool:
            raise ValueError(f"input {self.input_shape} not divisible by 2**{n_pool}")
        steps = []
        for k, c in enumerate(self.encoder_filters):
            steps.append((f"enc{k + 1}", (c, h, w)))
            if k < n_pool:
                h, w = h // 2, w // 2
        for k, c in enumerate(self.decoder_filters):
            h, w = h * 2, w * 2
            steps.append((f"dec{k + 1}", (c, h, w)))
        for k, (sh, sw) in enumerate(self.sr_strides):
            h, w = h * sh, w * sw
            c = self.sr_filters[k] if k < len(self.sr_filters) else 1
            steps.append((f"sr{k + 1}", (c, h, w)))
        if (h, w) != tuple(self.output_shape):
            raise ValueError(f"architecture yields {(h, w)}, expected {self.output_shape}")
        return steps


class SRCNN:
    """Ordered named parameters and batch-norm buffers of the network.

    Doubles as the persisted weight set; :meth:`forward` runs the graph.
    """

    def __init__(self, spec: ArchitectureSpec, params: OrderedDict, buffers: OrderedDict):
        self.spec = spec
        self.params = params
        self.buffers = buffers

    # -- construction -------------------------------------------------------
    @classmethod
    def build(cls, spec: ArchitectureSpec = ArchitectureSpec(), seed: int = 0,
              dtype=np.float32) -> "SRCNN":
        rng = np.random.default_rng(seed)
        k = spec.kernel
        params: OrderedDict = OrderedDict()
        buffers: OrderedDict = OrderedDict()

        def conv(name, cout, cin, transpose=False):
            shape = (cin, cout, k, k) if transpose else (cout, cin, k, k)
            params[f"{name}.weight"] = Tensor(F.he_uniform(rng, shape, cin * k * k, dtype),
                                              requires_grad=True, name=f"{name}.weight")
            params[f"{name}.bias"] = Tensor(np.zeros(cout, dtype), requires_grad=True,
                                            name=f"{name}.bias")

        def bn(name, c):
            params[f"{name}.gamma"] = Tensor(np.ones(c, dtype), requires_grad=True,
                                             name=f"{name}.gamma")
            params[f"{name}.beta"] = Tensor(np.zeros(c, dtype), requires_grad=True,
                                            name=f"{name}.beta")
            buffers[f"{name}.running_mean"] = np.zeros(c, dtype)
            buffers[f"{name}.running_var"] = np.ones(c, dtype)

        cin = 1
        enc = spec.encoder_filters
        for i, c in enumerate(enc, start=1):
            conv(f"enc{i}.conv1", c, cin)
            bn(f"enc{i}.bn1", c)
            conv(f"enc{i}.conv2", c, c)
            bn(f"enc{i}.bn2", c)
            cin = c
        for i, c in enumerate(spec.decoder_filters, start=1):
            skip = enc[len(enc) - 1 - i]
            conv(f"dec{i}.up", c, cin, transpose=True)
            bn(f"dec{i}.bn0", c)
            conv(f"dec{i}.conv1", c, c + skip)
            bn(f"dec{i}.bn1", c)
            conv(f"dec{i}.conv2", c, c)
            bn(f"dec{i}.bn2", c)
            cin = c
        for i, c in enumerate(spec.sr_filters, start=1):
            conv(f"sr{i}.up", c, cin, transpose=True)
            bn(f"sr{i}.bn", c)
            cin = c
        conv("out.up", 1, cin, transpose=True)
        return cls(spec, params, buffers)

    # -- graph --------------------------------------------------------------
    def _conv_block(self, x, name, bn_name, train):
        y = F.relu(F.conv2d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"]))
        return self._bn(y, bn_name, train)

    def _bn(self, x, name, train):
        return F.batchnorm(x, self.params[f"{name}.gamma"], self.params[f"{name}.beta"],
                           self.buffers[f"{name}.running_mean"],
                           self.buffers[f"{name}.running_var"], train,
                           self.spec.bn_momentum, self.spec.bn_eps)

    def _up(self, x, name, stride):
        return F.conv2d_transpose(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"],
                                  stride=stride)

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        """Raw network output ``(B, 1, 16, 64)`` for pressure images ``(B, 1, 8, 8)``."""
        n_enc = len(self.spec.encoder_filters)
        skips = []
        for i in range(1, n_enc + 1):
            x = self._conv_block(x, f"enc{i}.conv1", f"enc{i}.bn1", train)
            x = self._conv_block(x, f"enc{i}.conv2", f"enc{i}.bn2", train)
            if i < n_enc:
                skips.append(x)
                x = F.maxpool2x2(x)
        for i in range(1, len(self.spec.decoder_filters) + 1):
            x = self._bn(F.relu(self._up(x, f"dec{i}.up", (2, 2))), f"dec{i}.bn0", train)
            x = F.concat_channels(x, skips.pop())
            x = self._conv_block(x, f"dec{i}.conv1", f"dec{i}.bn1", train)
            x = self._conv_block(x, f"dec{i}.conv2", f"dec{i}.bn2", train)
        strides = self.spec.sr_strides
        for i in range(1, len(self.spec.sr_filters) + 1):
            x = self._bn(F.relu(self._up(x, f"sr{i}.up", strides[i - 1])), f"sr{i}.bn", train)
        return F.relu(self._up(x, "out.up", strides[-1]))

    __call__ = forward

    # -- bookkeeping ----------------------------------------------------------
    def state(self) -> OrderedDict:
        """Every tensor by name, parameters first then buffers (persistence order)."""
        out = OrderedDict((k, p.data) for k, p in self.params.items())
        out.update(self.buffers)
        return out

    def snapshot(self) -> OrderedDict:
        return OrderedDict((k, v.copy()) for k, v in self.state().items())

    def restore(self, snap: OrderedDict) -> None:
        for k, v in snap.items():
            if k in self.params:
                self.params[k].data[...] = v
            else:
                self.buffers[k][...] = v

    def astype(self, dtype) -> "SRCNN":
        params = OrderedDict(
            (k, Tensor(p.data.astype(dtype), requires_grad=True, name=k))
            for k, p in self.params.items())
        buffers = OrderedDict((k, v.astype(dtype)) for k, v in self.buffers.items())
        return SRCNN(self.spec, params, buffers)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self.params.values())


ModelWeights = SRCNN


def build_model(spec: ArchitectureSpec = ArchitectureSpec(), seed: int = 0) -> SRCNN:
    return SRCNN.build(spec, seed)


def _as_batch(images: np.ndarray, shape) -> np.ndarray:
    a = np.asarray(images, dtype=np.float32)
    if a.shape == tuple(shape):
        a = a[None]
    if a.ndim == 3:
        a = a[:, None]
    return a


def predict(model: SRCNN, pressure, mask) -> np.ndarray:
    """Masked velocity estimate.  Accepts one ``(8, 8)`` image or a batch ``(B, 8, 8)``."""
    single = np.ndim(pressure) == 2
    x = _as_batch(pressure, model.spec.input_shape).astype(model.params["out.up.bias"].dtype)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in pressure input")
    m = _as_batch(mask, model.spec.output_shape)
    out = F.hadamard(model.forward(Tensor(x), train=False), m).data[:, 0]
    return out[0] if single else out


def predict_batched(model: SRCNN, pressure, mask, batch_size: int = 256) -> np.ndarray:
    parts = [predict(model, pressure[i:i + batch_size], mask[i:i + batch_size])
             for i in range(0, len(pressure), batch_size)]
    return np.concatenate(parts) if parts else np.zeros((0,) + model.spec.output_shape)


# --- training ------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    plateau_factor: float = 0.2
    plateau_patience: int = 10
    early_stop_patience: int | None = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.plateau_patience < 1 or (self.early_stop_patience is not None
                                         and self.early_stop_patience < 1):
            raise ValueError("patience values must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class History:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best_val_loss(self) -> float:
        return self.records[self.best_epoch - 1].val_loss

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for r in self.records:
                w.writerow([r.epoch, f"{r.train_loss:.9g}", f"{r.val_loss:.9g}", f"{r.lr:.9g}"])


def _arrays(data, idx):
    x = data.pressure[idx][:, None].astype(np.float32)
    y = data.velocity[idx][:, None].astype(np.float32)
    b = data.mask[idx][:, None].astype(np.float32)
    return x, y, b


def evaluate_loss(model: SRCNN, x, y, b, batch_size: int = 256) -> float:
    """Mean masked MSE over a whole split, inference mode."""
    total = 0.0
    for i in range(0, len(x), batch_size):
        pred = model.forward(Tensor(x[i:i + batch_size]), train=False)
        loss = F.mse_masked_loss(pred, y[i:i + batch_size], b[i:i + batch_size])
        total += float(loss.data) * pred.data.size
    return total / y.size


def train(data, config: TrainConfig = TrainConfig(), model: SRCNN | None = None,
          spec: ArchitectureSpec = ArchitectureSpec(), train_idx=None, val_idx=None):
    """Fit the network with Adam on the masked MSE loss.

    ``data`` is a :class:`~srnah.dataset.Dataset` (or anything with ``pressure``,
    ``velocity``, ``mask`` arrays and ``split(name)``).  The learning rate drops
    by ``plateau_factor`` after ``plateau_patience`` epochs without validation
    improvement; training stops after ``early_stop_patience`` such epochs.  The
    best-validation weights are restored before returning ``(model, history)``.
    """
    train_idx = data.split("train") if train_idx is None else np.asarray(train_idx)
    val_idx = data.split("val") if val_idx is None else np.asarray(val_idx)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("training needs non-empty train and validation splits")
    xt, yt, bt = _arrays(data, train_idx)
    xv, yv, bv = _arrays(data, val_idx)

    model = model if model is not None else SRCNN.build(spec, config.seed)
    opt = AdamState(lr=config.lr)
    rng = np.random.default_rng([config.seed, 2])
    history = History()
    best, best_snap = math.inf, model.snapshot()
    plateau_wait = stop_wait = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(xt))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            sel = order[start:start + config.batch_size]
            model.zero_grad()
            pred = model.forward(Tensor(xt[sel]), train=True)
            loss = F.mse_masked_loss(pred, yt[sel], bt[sel])
            if not np.isfinite(loss.data):
                raise FloatingPointError(
                    f"non-finite training loss at epoch {epoch}, batch starting {start} "
                    f"(lr={opt.lr:g})")
            loss.backward()
            adam_step(opt, model.params)
            total += float(loss.data) * len(sel)
        train_loss = total / len(xt)
        val_loss = evaluate_loss(model, xv, yv, bv)
        if not np.isfinite(val_loss):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        history.records.append(EpochRecord(epoch, train_loss, val_loss, opt.lr))
        log.info("epoch %d train %.5g val %.5g lr %.3g", epoch, train_loss, val_loss, opt.lr)

        if val_loss < best:
            best, best_snap = val_loss, model.snapshot()
            history.best_epoch = epoch
            plateau_wait = stop_wait = 0
            continue
        plateau_wait += 1
        stop_wait += 1
        if plateau_wait >= config.plateau_patience:
            opt.lr *= config.plateau_factor
            plateau_wait = 0
        if config.early_stop_patience is not None and stop_wait >= config.early_stop_patience:
            history.stopped_early = True
            break

    model.restore(best_snap)
    return model, history


# --- persistence -----------------------------------------------------------------

def save_weights(model: SRCNN, out_dir, optimizer: AdamState | None = None) -> Path:
    """Write ``weights.json`` and the little-endian ``weights.f32`` blob."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensors = list(model.state().items())
    kinds = ["param" if k in model.params else "buffer" for k, _ in tensors]
    if optimizer is not None:
        for name in model.params:
            tensors.append((f"adam.m.{name}", optimizer.m[name]))
            tensors.append((f"adam.v.{name}", optimizer.v[name]))
            kinds += ["adam_m", "adam_v"]
    blob = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for _, v in tensors)
    (out / "weights.f32").write_bytes(blob)
    meta = {
        "format": "srnah-weights",
        "version": 1,
        "architecture": asdict(model.spec),
        "tensors": [{"name": k, "shape": list(v.shape), "kind": kind}
                    for (k, v), kind in zip(tensors, kinds)],
        "optimizer_state": optimizer is not None,
        "optimizer": ({"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                       "eps": optimizer.eps, "t": optimizer.t} if optimizer is not None else None),
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    (out / "weights.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    return out


def load_weights(model_dir) -> SRCNN:
    d = Path(model_dir)
    meta = json.loads((d / "weights.json").read_text(encoding="utf-8"))
    blob = (d / "weights.f32").read_bytes()
    if hashlib.sha256(blob).hexdigest() != meta["sha256"]:
        raise ValueError(f"weights blob checksum mismatch in {d}")
    spec = ArchitectureSpec(**meta["architecture"])
    model = SRCNN.build(spec, seed=0)
    flat = np.frombuffer(blob, dtype="<f4")
    pos = 0
    expected = model.state()
    for entry in meta["tensors"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        values = flat[pos:pos + n].reshape(entry["shape"]).astype(np.float32)
        pos += n
        if entry["kind"] not in ("param", "buffer"):
            continue
        name = entry["name"]
        if name not in expected or expected[name].shape != values.shape:
            raise ValueError(f"tensor {name} does not match the architecture")
        if name in model.params:
            model.params[name].data[...] = values
        else:
            model.buffers[name][...] = values
    if pos != flat.size:
        raise ValueError("weights blob length does not match manifest")
    return model


def copy_model(model: SRCNN) -> SRCNN:
    return copy.deepcopy(model)
