"""Central finite-difference probes covering every layer type."""
import numpy as np

from coroscreen.classifier import layers as ly
from coroscreen.classifier.network import Model, ModelSpec

_H = 1e-6


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def _center_diff(f, arr, idx) -> float:
    old = arr[idx]
    arr[idx] = old + _H
    fp = f()
    arr[idx] = old - _H
    fm = f()
    arr[idx] = old
    return (fp - fm) / (2.0 * _H)


def _coords(rng, arr, n=3):
    flat = [tuple(int(v) for v in np.unravel_index(i, arr.shape))
            for i in rng.choice(arr.size, size=min(n, arr.size), replace=False)]
    return flat


def _probe_layer(layer, x, rng, train=False, mask_seed=None) -> float:
    """Project the output with fixed weights and compare every gradient
    path (params and input) against central differences."""
    def run():
        r = np.random.default_rng(mask_seed) if mask_seed is not None else None
        return layer.forward(x, train=train, rng=r)

    proj = rng.normal(size=run().shape)
    f = lambda: float(np.sum(run() * proj))
    f()                              # refresh caches for backward
    dx = layer.backward(proj)
    worst = 0.0
    for name, grad in layer.grads.items():
        for idx in _coords(rng, layer.params[name]):
            worst = max(worst, _rel_err(grad[idx], _center_diff(f, layer.params[name], idx)))
    for idx in _coords(rng, x):
        worst = max(worst, _rel_err(dx[idx], _center_diff(f, x, idx)))
    return worst


def _away_from_zero(x, margin=5e-3):
    return x + np.sign(x) * margin


def _probe_network(rng) -> float:
    spec = ModelSpec(input_shape=(8, 6), conv_channels=(2, 3), dense_units=5,
                     dropout=0.25)
    model = Model.initial(spec, seed=int(rng.integers(1 << 31)))
    x = rng.normal(size=(2, 8, 6, 1))
    y = rng.integers(0, 2, size=2).astype(float)

    def f():
        return ly.bce_with_logits(model.forward(x, train=False), y)[0]

    loss, dz = ly.bce_with_logits(model.forward(x, train=False), y)
    dx = model.backward(dz)
    worst = 0.0
    for layer in model.layers:
        for name, grad in layer.grads.items():
            for idx in _coords(rng, layer.params[name], n=2):
                worst = max(worst, _rel_err(grad[idx],
                                            _center_diff(f, layer.params[name], idx)))
    for idx in _coords(rng, x, n=3):
        worst = max(worst, _rel_err(dx[idx], _center_diff(f, x, idx)))
    return worst


def run_gradient_probes(seed: int = 0) -> tuple[int, float]:
    """Returns (number of probes, worst relative error)."""
    rng = np.random.default_rng(seed)
    probes = 0
    worst = 0.0

    for _ in range(25):
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        layer = ly.Conv2D(cin, cout, rng)
        x = rng.normal(size=(2, int(rng.integers(3, 7)), int(rng.integers(3, 7)), cin))
        worst = max(worst, _probe_layer(layer, x, rng))
        probes += 1

    for _ in range(25):
        nin, nout = int(rng.integers(2, 9)), int(rng.integers(1, 6))
        layer = ly.Dense(nin, nout, rng)
        x = rng.normal(size=(3, nin))
        worst = max(worst, _probe_layer(layer, x, rng))
        probes += 1

    for _ in range(15):
        layer = ly.MaxPool2D()
        x = rng.normal(size=(2, int(rng.integers(2, 8)), int(rng.integers(2, 8)),
                             int(rng.integers(1, 4))))
        worst = max(worst, _probe_layer(layer, x, rng))
        probes += 1

    for _ in range(10):
        layer = ly.ReLU()
        x = _away_from_zero(rng.normal(size=(3, int(rng.integers(2, 10)))))
        worst = max(worst, _probe_layer(layer, x, rng))
        probes += 1

    for i in range(10):
        layer = ly.Dropout(0.4)
        x = rng.normal(size=(3, int(rng.integers(2, 10))))
        worst = max(worst, _probe_layer(layer, x, rng, train=True, mask_seed=1000 + i))
        probes += 1

    for _ in range(5):
        layer = ly.Flatten()
        x = rng.normal(size=(2, 3, int(rng.integers(2, 5)), 2))
        worst = max(worst, _probe_layer(layer, x, rng))
        probes += 1

    for _ in range(10):
        z = _away_from_zero(rng.normal(size=(4, 1)))
        y = rng.integers(0, 2, size=4).astype(float)
        _, dz = ly.bce_with_logits(z, y)
        f = lambda: ly.bce_with_logits(z, y)[0]
        for idx in _coords(rng, z):
            worst = max(worst, _rel_err(dz[idx], _center_diff(f, z, idx)))
        probes += 1

    for _ in range(10):
        worst = max(worst, _probe_network(rng))
        probes += 1

    return probes, worst
