"""Shared test oracles: finite-difference gradients and kink-safe sampling."""

import numpy as np

from sgdlab.mlp import grad_loss, init_network, network_output


def batch_hinge(layers, layers0, X, y, alpha):
    F = network_output(layers, X) - network_output(layers0, X)
    return float(np.maximum(0.0, 1.0 / alpha - y * F).mean())


def fd_grads(m, X, y, alpha, h=1e-6):
    """Central finite differences of the batch hinge loss, per layer."""
    grads = []
    for li in range(len(m.layers)):
        g = np.zeros_like(m.layers[li])
        it = np.nditer(g, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            up = [w.copy() for w in m.layers]
            dn = [w.copy() for w in m.layers]
            up[li][idx] += h
            dn[li][idx] -= h
            g[idx] = (batch_hinge(up, m.w0_snapshot, X, y, alpha)
                      - batch_hinge(dn, m.w0_snapshot, X, y, alpha)) / (2 * h)
        grads.append(g)
    return grads


def kink_safe_case(rng, depth, d=4, width=5, B=4, alpha=1.0, perturb=False):
    """Random net and batch with preactivations and margins away from kinks.

    With ``perturb`` the current weights are moved off the init snapshot so
    the centered predictor is nonzero.
    """
    while True:
        seed = int(rng.integers(1 << 30))
        m = init_network(depth, width, d, seed)
        if perturb:
            m.layers = [w * (1.0 + 0.3 * rng.standard_normal(w.shape))
                        for w in m.layers]
        X = rng.standard_normal((B, d))
        y = np.where(rng.random(B) < 0.5, 1.0, -1.0)
        ok = True
        A = X
        for W in m.layers[:-1]:
            Z = A @ W
            if np.min(np.abs(Z)) < 1e-3:
                ok = False
                break
            A = np.maximum(Z, 0.0)
        if not ok:
            continue
        F = network_output(m.layers, X) - network_output(m.w0_snapshot, X)
        if np.min(np.abs(1.0 / alpha - y * F)) < 1e-3:
            continue
        if perturb and np.min(np.abs(F)) < 1e-3:
            continue
        return m, X, y


def rel_grad_error(m, X, y, alpha):
    bp = grad_loss(m, X, y, alpha)
    fd = fd_grads(m, X, y, alpha)
    scale = max(max(np.max(np.abs(g)) for g in fd), 1e-12)
    return max(np.max(np.abs(a - b)) for a, b in zip(bp, fd)) / scale
