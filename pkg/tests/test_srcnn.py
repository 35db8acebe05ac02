import numpy as np
import pytest

import srnah.srcnn as S
from srnah.nn import Tensor, mse_masked_loss
from srnah.srcnn import (ArchitectureSpec, SRCNN, TrainConfig, load_weights, predict,
                         predict_batched, save_weights, train)


class ArrayData:
    """Minimal stand-in for a dataset: arrays plus split indices."""

    def __init__(self, pressure, velocity, mask, splits):
        self.pressure, self.velocity, self.mask, self._splits = pressure, velocity, mask, splits

    def split(self, name):
        return np.asarray(self._splits[name])


def random_data(n, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0, 1, (n, 8, 8)).astype(np.float32)
    m = (rng.uniform(size=(n, 16, 64)) > 0.2).astype(np.uint8)
    v = (rng.uniform(0, 1, (n, 16, 64)) * m).astype(np.float32)
    ids = list(range(n))
    return ArrayData(p, v, m, {"train": ids, "val": ids, "test": ids})


def conv_count(cin, cout, k=3):
    return cin * cout * k * k + cout


def test_parameter_count_matches_hand_count():
    enc, dec = (16, 32, 32, 64), (32, 16, 8)
    n = 0
    cin = 1
    for c in enc:
        n += conv_count(cin, c) + conv_count(c, c) + 4 * c
        cin = c
    skips = enc[-2::-1]
    for c, s in zip(dec, skips):
        n += conv_count(cin, c) + 2 * c + conv_count(c + s, c) + conv_count(c, c) + 4 * c
        cin = c
    for c in (8, 8):
        n += conv_count(cin, c) + 2 * c
        cin = c
    n += conv_count(cin, 1)
    assert SRCNN.build().n_params == n == 156001


def test_shape_trace():
    tr = dict(ArchitectureSpec().trace())
    assert tr["enc1"] == (16, 8, 8) and tr["enc4"] == (64, 1, 1)
    assert tr["dec3"] == (8, 8, 8)
    assert tr["sr1"] == (8, 8, 16) and tr["sr2"] == (8, 8, 32) and tr["sr3"] == (1, 16, 64)


def test_inconsistent_spec_rejected():
    with pytest.raises(ValueError):
        ArchitectureSpec(output_shape=(16, 32))
    with pytest.raises(ValueError):
        ArchitectureSpec(decoder_filters=(32, 16))


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_predict_shape_and_mask(seed, rng):
    model = SRCNN.build(seed=seed)
    mask = (rng.uniform(size=(16, 64)) > 0.5).astype(np.uint8)
    out = predict(model, rng.uniform(size=(8, 8)), mask)
    assert out.shape == (16, 64)
    assert np.all(out[mask == 0] == 0) and np.all(out >= 0)
    batch = predict(model, rng.uniform(size=(5, 8, 8)), np.stack([mask] * 5))
    assert batch.shape == (5, 16, 64)


def test_predict_rejects_non_finite():
    with pytest.raises(ValueError):
        predict(SRCNN.build(), np.full((8, 8), np.nan), np.ones((16, 64)))


def test_end_to_end_probe_gradients(rng):
    model = SRCNN.build(seed=3, dtype=np.float64)
    x = rng.uniform(size=(2, 1, 8, 8))
    y = rng.uniform(size=(2, 1, 16, 64))
    b = (rng.uniform(size=(2, 1, 16, 64)) > 0.3).astype(float)

    def loss():
        return mse_masked_loss(model.forward(Tensor(x), train=True), y, b)

    model.zero_grad()
    loss().backward()
    probes = [("enc1.conv1.weight", (0, 0, 1, 1)), ("enc4.conv2.weight", (3, 5, 1, 1)),
              ("dec1.up.weight", (2, 4, 0, 2)), ("dec3.conv2.bias", (1,)),
              ("sr2.bn.gamma", (3,)), ("out.up.weight", (4, 0, 1, 2)), ("out.up.bias", (0,))]
    eps = 1e-6
    for name, idx in probes:
        p = model.params[name]
        analytic = p.grad[idx]
        orig = p.data[idx]
        p.data[idx] = orig + eps
        fp = float(loss().data)
        p.data[idx] = orig - eps
        fm = float(loss().data)
        p.data[idx] = orig
        numeric = (fp - fm) / (2 * eps)
        assert abs(analytic - numeric) <= 1e-4 * max(abs(numeric), 1e-8), name


def test_overfits_small_set(tiny):
    ids = np.arange(50)
    _, hist = train(tiny, TrainConfig(epochs=200, early_stop_patience=None, seed=1),
                    train_idx=ids, val_idx=ids)
    first, last = hist.records[0].train_loss, min(r.train_loss for r in hist.records)
    assert first / last >= 100


def _scripted_val(monkeypatch, values):
    seen = []

    def fake(model, *a, **k):
        seen.append(model.snapshot())
        return values[min(len(seen), len(values)) - 1]

    monkeypatch.setattr(S, "evaluate_loss", fake)
    return seen


def test_plateau_and_early_stop(monkeypatch):
    seen = _scripted_val(monkeypatch, [1.0, 2.0])
    model, hist = train(random_data(8), TrainConfig(epochs=100, batch_size=4))
    lrs = [r.lr for r in hist.records]
    assert len(hist.records) == 21 and hist.stopped_early
    assert lrs[:11] == [1e-3] * 11
    assert lrs[11:21] == pytest.approx([2e-4] * 10)
    assert hist.best_epoch == 1
    for k, v in model.state().items():
        np.testing.assert_array_equal(v, seen[0][k])


def test_best_weights_restored_without_early_stop(monkeypatch):
    seen = _scripted_val(monkeypatch, [3.0, 1.0, 2.0, 2.0, 2.0])
    model, hist = train(random_data(8), TrainConfig(epochs=5, batch_size=4,
                                                    early_stop_patience=None))
    assert hist.best_epoch == 2 and len(hist.records) == 5
    for k, v in model.state().items():
        np.testing.assert_array_equal(v, seen[1][k])


def test_returned_weights_reproduce_best_val_loss(tiny):
    model, hist = train(tiny, TrainConfig(epochs=4, batch_size=8, seed=2))
    x, y, b = S._arrays(tiny, tiny.split("val"))
    assert S.evaluate_loss(model, x, y, b) == hist.best_val_loss


def test_lr_drops_are_exact_factor(monkeypatch):
    _scripted_val(monkeypatch, [5.0] + [6.0] * 40)
    _, hist = train(random_data(8), TrainConfig(epochs=45, batch_size=4,
                                                early_stop_patience=None))
    lrs = [r.lr for r in hist.records]
    for a, b in zip(lrs, lrs[1:]):
        assert b == a or b == pytest.approx(0.2 * a, rel=1e-12)
    assert sum(b != a for a, b in zip(lrs, lrs[1:])) == 4


def test_training_is_deterministic(tmp_path):
    data = random_data(20, seed=2)
    cfg = TrainConfig(epochs=3, batch_size=8, seed=5)
    m1, h1 = train(data, cfg)
    m2, h2 = train(data, cfg)
    h1.to_csv(tmp_path / "a.csv")
    h2.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    for (k, a), b in zip(m1.state().items(), m2.state().values()):
        np.testing.assert_array_equal(a, b, err_msg=k)


def test_empty_split_rejected():
    data = random_data(4)
    data._splits["val"] = []
    with pytest.raises(ValueError):
        train(data, TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(plateau_factor=1.5)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_weights_round_trip(tmp_path, rng):
    model = SRCNN.build(seed=9)
    x = rng.uniform(size=(3, 8, 8))
    m = np.ones((3, 16, 64))
    save_weights(model, tmp_path / "w")
    again = load_weights(tmp_path / "w")
    np.testing.assert_array_equal(predict_batched(model, x, m), predict_batched(again, x, m))
    assert again.n_params == model.n_params


def test_weights_checksum(tmp_path):
    save_weights(SRCNN.build(), tmp_path / "w")
    raw = bytearray((tmp_path / "w" / "weights.f32").read_bytes())
    raw[10] ^= 1
    (tmp_path / "w" / "weights.f32").write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        load_weights(tmp_path / "w")
