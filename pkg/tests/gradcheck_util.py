"""Central finite-difference oracle used by the gradient-check tests."""

import numpy as np


def numeric_grad(f, x, eps=1e-6):
    """Central differences of a scalar-valued f() w.r.t. array x (mutated in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def rel_error(a, b):
    """Normwise relative error between two gradient arrays."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def check_layer_gradients(layer, x, rng, eps=1e-6):
    """Compare a layer's analytic input/param gradients against finite differences.

    Returns the worst relative error across the input gradient and every
    parameter gradient.
    """
    out = layer.forward(x)
    proj = rng.standard_normal(out.shape)

    def loss():
        return float((layer.forward(x) * proj).sum())

    layer.zero_grad()
    layer.forward(x)
    dx = layer.backward(proj.copy())

    worst = 0.0
    if dx is not None:
        worst = max(worst, rel_error(dx, numeric_grad(loss, x, eps)))
    for p in layer.params():
        worst = max(worst, rel_error(p.grad, numeric_grad(loss, p.data, eps)))
    return worst
