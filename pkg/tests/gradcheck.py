"""Finite-difference gradient checks shared by the unit and acceptance tests.

Each check returns the worst relative error across parameter and input
gradients; callers compare against the 1e-4 threshold.
"""

import numpy as np

from attitude_ensemble.nn import layers as L
from attitude_ensemble.nn.network import Network, NetworkSpec, loss_and_grads
from oracles import central_difference, rel_error

TOL = 1e-4
# Biases feeding straight into batchnorm have an exactly zero gradient; the
# finite difference is then pure rounding noise (~1e-10), so a relative error
# is meaningless. Pairs where both norms sit under this floor count as equal.
ZERO_FLOOR = 1e-7


def grad_error(analytic, numeric):
    if max(np.linalg.norm(analytic), np.linalg.norm(numeric)) < ZERO_FLOOR:
        return 0.0
    return rel_error(analytic, numeric)


def _layer_objective(layer, x, r, train, mask_seed):
    def f():
        rng = np.random.default_rng(mask_seed)
        return float(np.sum(layer.forward(x, train=train, rng=rng) * r))

    return f


def check_layer(layer, in_shape, seed, train=True, spread=1.0):
    """Worst relative error for ``sum(layer(x) * R)`` w.r.t. x and every parameter."""
    rng = np.random.default_rng(seed)
    layer.init_params(rng, np.float64)
    for key, p in layer.params.items():
        # Perturb away from the deterministic init (zero biases, unit gammas).
        p += 0.3 * rng.standard_normal(p.shape)
    layer.needs_input_grad = True
    x = spread * rng.standard_normal(in_shape)
    y_shape = layer.forward(x, train=train, rng=np.random.default_rng(seed)).shape
    out = rng.standard_normal(y_shape)
    f = _layer_objective(layer, x, out, train, seed)
    f()
    dx = layer.backward(out.copy())
    errors = {"input": grad_error(dx, central_difference(f, x))}
    for key, p in layer.params.items():
        f()
        layer.backward(out.copy())
        analytic = layer.grads[key].copy()
        errors[key] = grad_error(analytic, central_difference(f, p))
    return errors


LAYER_CASES = {
    "conv-3x3-pad1": (lambda: L.Conv2D(2, 3, 3, 1, 1), (2, 2, 5, 5)),
    "conv-2x2-stride2": (lambda: L.Conv2D(2, 2, 2, 2, 0), (2, 2, 6, 6)),
    "conv-3x3-stride2-pad1": (lambda: L.Conv2D(1, 2, 3, 2, 1), (3, 1, 5, 5)),
    "relu": (lambda: L.ReLU(), (3, 2, 4, 4)),
    "maxpool-2": (lambda: L.MaxPool2D(2), (2, 2, 4, 4)),
    "maxpool-3-stride2": (lambda: L.MaxPool2D(3, 2), (2, 2, 7, 7)),
    "batchnorm-4d": (lambda: L.BatchNorm(3), (4, 3, 3, 3)),
    "batchnorm-2d": (lambda: L.BatchNorm(5), (6, 5)),
    "dropout": (lambda: L.Dropout(0.4), (4, 10)),
    "flatten": (lambda: L.Flatten(), (2, 3, 2, 2)),
    "dense": (lambda: L.Dense(6, 4), (5, 6)),
}

NETWORK_CASES = {
    "conv-bn-pool-dropout-dense": "input(2,6,6) conv(3,3,1,1) batchnorm relu maxpool(2) flatten dropout(0.25) "
    "dense(9) softmax(9)",
    "conv-relu-dense": "input(1,5,5) conv(2,3,1,0) relu maxpool(3,1) flatten dense(9) softmax(9)",
    "dense-softmax-head": "input(2,2,2) flatten dense(7) batchnorm relu dense(9) softmax(9)",
}


def check_network(text, seed, batch=5):
    """Worst relative error of loss_and_grads against finite differences of the loss."""
    net = Network(NetworkSpec.from_text(text), seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1000)
    for p in net.params:
        p += 0.1 * rng.standard_normal(p.shape)
    x = rng.standard_normal((batch,) + net.spec.input_shape)
    y = rng.integers(0, 9, batch)

    def f():
        return loss_and_grads(net, x, y)[0]  # rng=None -> the same dropout mask every call

    _, grads = loss_and_grads(net, x, y)
    grads = [g.copy() for g in grads]
    return {name: grad_error(g, central_difference(f, p)) for (name, _, _, p), g in zip(net.named_params(), grads)}
