"""Numba-compiled inner loops for the SGD trainers.

These kernels mutate the weight arrays in place and are called once per
epoch (or per trajectory segment) by the Python drivers, which own batch
index generation, loss checks, and bookkeeping.  All arithmetic is plain
IEEE double precision (no fastmath), so trajectories are deterministic
given the batch index stream.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def perceptron_hinge(X, y, w, alpha_inv, sqrt_d):
    """Full-batch hinge loss of the linear predictor w.x/sqrt(d); inf if non-finite."""
    P = X.shape[0]
    d = X.shape[1]
    tot = 0.0
    for i in range(P):
        f = 0.0
        for j in range(d):
            f += w[j] * X[i, j]
        if not np.isfinite(f):
            return np.inf
        g = alpha_inv - y[i] * f / sqrt_d
        if g > 0.0:
            tot += g
    return tot / P


@njit(cache=True)
def perceptron_steps(X, y, w, idx, eta, B, alpha_inv, sqrt_d):
    """Run idx.size // B SGD steps of the margin hinge on the perceptron."""
    n = idx.shape[0] // B
    d = X.shape[1]
    coef = eta / B / sqrt_d
    for k in range(n):
        for b in range(B):
            i = idx[k * B + b]
            f = 0.0
            for j in range(d):
                f += w[j] * X[i, j]
            if alpha_inv - y[i] * f / sqrt_d > 0.0:
                c = coef * y[i]
                for j in range(d):
                    w[j] += c * X[i, j]


@njit(cache=True)
def mlp_forward(X, W0, WH, WO):
    """Raw network output f(w, x) for a batch: ReLU hidden layers, linear readout."""
    A = np.maximum(np.dot(X, W0), 0.0)
    for l in range(WH.shape[0]):
        A = np.maximum(np.dot(A, WH[l]), 0.0)
    return np.dot(A, WO)


@njit(cache=True)
def mlp_hinge_steps(X, y, F0, W0, WH, WO, idx, eta, B, alpha_inv):
    """SGD steps of the margin hinge on the centered predictor F = f - f0.

    F0 holds the frozen initial-network outputs on the training set.
    """
    n = idx.shape[0] // B
    nh = WH.shape[0]
    for k in range(n):
        bi = idx[k * B:(k + 1) * B]
        Xb = X[bi]
        acts = np.empty((nh + 1, B, W0.shape[1]))
        acts[0] = np.maximum(np.dot(Xb, W0), 0.0)
        for l in range(nh):
            acts[l + 1] = np.maximum(np.dot(acts[l], WH[l]), 0.0)
        f = np.dot(acts[nh], WO)
        delta = np.zeros(B)
        active = False
        for b in range(B):
            i = bi[b]
            if alpha_inv - y[i] * (f[b] - F0[i]) > 0.0:
                delta[b] = eta / B * y[i]
                active = True
        if not active:
            continue
        G = np.outer(delta, WO)
        WO += np.dot(acts[nh].T, delta)
        for l in range(nh - 1, -1, -1):
            G = G * (acts[l + 1] > 0.0)
            Gprev = np.dot(G, WH[l].T)
            WH[l] += np.dot(acts[l].T, G)
            G = Gprev
        G = G * (acts[0] > 0.0)
        W0 += np.dot(Xb.T, G)


@njit(cache=True)
def mlp_xent_steps(X, y, F0, W0, WH, WO, idx, eta, B, alpha):
    """SGD steps of the margin-scaled logistic loss (1/alpha) log(1 + exp(-y alpha F))."""
    n = idx.shape[0] // B
    nh = WH.shape[0]
    for k in range(n):
        bi = idx[k * B:(k + 1) * B]
        Xb = X[bi]
        acts = np.empty((nh + 1, B, W0.shape[1]))
        acts[0] = np.maximum(np.dot(Xb, W0), 0.0)
        for l in range(nh):
            acts[l + 1] = np.maximum(np.dot(acts[l], WH[l]), 0.0)
        f = np.dot(acts[nh], WO)
        delta = np.empty(B)
        for b in range(B):
            i = bi[b]
            z = -y[i] * alpha * (f[b] - F0[i])
            if z > 0.0:
                s = 1.0 / (1.0 + np.exp(-z))
            else:
                ez = np.exp(z)
                s = ez / (1.0 + ez)
            delta[b] = eta / B * y[i] * s
        G = np.outer(delta, WO)
        WO += np.dot(acts[nh].T, delta)
        for l in range(nh - 1, -1, -1):
            G = G * (acts[l + 1] > 0.0)
            Gprev = np.dot(G, WH[l].T)
            WH[l] += np.dot(acts[l].T, G)
            G = Gprev
        G = G * (acts[0] > 0.0)
        W0 += np.dot(Xb.T, G)
