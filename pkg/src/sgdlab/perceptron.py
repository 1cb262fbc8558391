"""Linear classifier F(w, x) = w.x/sqrt(d) trained to exactly zero hinge loss.

The weight starts at zero, so the total weight change of a run is just
||w||, the informative component is w1 = w . true_normal, and the noise
picked up from mini-batch sampling lives in the perpendicular block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sgdlab._kernels import perceptron_hinge, perceptron_steps
from sgdlab.data import Dataset
from sgdlab.records import RunRecord, TrainConfig


@dataclass
class PerceptronState:
    """Weights plus the training clock t = steps * eta."""

    w: np.ndarray
    t: float = 0.0
    steps: int = 0


def predict(w: np.ndarray, x: np.ndarray):
    """Model output w.x/sqrt(d) for a single point or a (n, d) batch."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"dimension mismatch: w has d={w.shape[0]}, x has {x.shape[-1]}")
    out = x @ w / math.sqrt(w.shape[0])
    return float(out) if np.ndim(out) == 0 else out


def hinge_loss(outputs, labels, alpha: float) -> float:
    """Mean margin hinge (1/P) sum max(0, 1/alpha - y F)."""
    outputs = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if outputs.shape != labels.shape:
        raise ValueError("outputs and labels must have equal length")
    return float(np.maximum(0.0, 1.0 / alpha - labels * outputs).mean())


def draw_batches(rng: np.random.Generator, P: int, B: int, n_steps: int) -> np.ndarray:
    """n_steps batches of B distinct indices, uniform over B-subsets of range(P).

    Returned flat with shape (n_steps * B,).  Duplicated rows of the i.i.d.
    draw are rejected and redrawn, which conditions the law on distinctness.
    """
    if B > P:
        raise ValueError(f"batch_size {B} exceeds P {P}")
    if B == P:
        return np.tile(np.arange(P, dtype=np.int64), n_steps)
    if B == 1:
        return rng.integers(0, P, size=n_steps, dtype=np.int64)
    if B == 2:
        i = rng.integers(0, P, size=n_steps, dtype=np.int64)
        j = rng.integers(0, P - 1, size=n_steps, dtype=np.int64)
        j += j >= i
        return np.column_stack([i, j]).reshape(-1)
    if B > P // 2:
        out = np.empty((n_steps, B), dtype=np.int64)
        for k in range(n_steps):
            out[k] = rng.permutation(P)[:B]
        return out.reshape(-1)
    out = rng.integers(0, P, size=(n_steps, B), dtype=np.int64)
    while True:
        srt = np.sort(out, axis=1)
        bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
        if bad.size == 0:
            return out.reshape(-1)
        out[bad] = rng.integers(0, P, size=(bad.size, B), dtype=np.int64)


def sgd_step(state: PerceptronState, ds: Dataset, cfg: TrainConfig,
             rng: np.random.Generator) -> PerceptronState:
    """One SGD step: draw B distinct indices, add (eta/B) sum_active y x/sqrt(d)."""
    if cfg.batch_size > ds.P:
        raise ValueError("batch_size exceeds dataset size")
    idx = draw_batches(rng, ds.P, cfg.batch_size, 1)
    w = state.w.copy()
    perceptron_steps(ds.points, ds.labels, w, idx, cfg.eta, cfg.batch_size,
                     1.0 / cfg.alpha, math.sqrt(ds.d))
    return PerceptronState(w=w, t=state.t + cfg.eta, steps=state.steps + 1)


def _train_error(X, y, w) -> float:
    F = X @ w
    return float(np.mean(np.where(F > 0, 1.0, -1.0) != y))


def train_to_zero(ds: Dataset, cfg: TrainConfig, test_ds: Dataset | None = None,
                  record_trajectory: bool = False, return_state: bool = False):
    """Run SGD until the full-batch hinge loss is exactly zero.

    The loss is evaluated once per epoch (every ceil(P/B) steps); training
    stops at the first epoch boundary with loss == 0.0.  The run is flagged
    diverged when the loss is non-finite, the weight norm exceeds
    cfg.divergence_norm, or cfg.max_steps is exhausted.  Trajectory
    checkpoints, when requested, follow a geometric step cadence 1, 2, 4, ...
    """
    P, d = ds.P, ds.d
    if cfg.batch_size > P:
        raise ValueError("batch_size exceeds dataset size")
    rng = np.random.default_rng(cfg.seed)
    X, y = ds.points, ds.labels
    w = np.zeros(d)
    sqrt_d = math.sqrt(d)
    alpha_inv = 1.0 / cfg.alpha
    B = cfg.batch_size
    epoch_steps = math.ceil(P / B)
    steps = 0
    diverged = False
    traj: list | None = [] if record_trajectory else None
    next_ckpt = 1

    def checkpoint():
        w1c = float(w @ ds.true_normal) if ds.true_normal is not None else None
        wpc = (float(np.linalg.norm(w - w1c * ds.true_normal))
               if ds.true_normal is not None else None)
        traj.append((steps * cfg.eta, w1c, wpc, _train_error(X, y, w)))

    while True:
        idx = draw_batches(rng, P, B, epoch_steps)
        if record_trajectory:
            done = 0
            while done < epoch_steps:
                seg = epoch_steps - done
                if steps < next_ckpt <= steps + seg:
                    seg = next_ckpt - steps
                perceptron_steps(X, y, w, idx[done * B:(done + seg) * B],
                                 cfg.eta, B, alpha_inv, sqrt_d)
                done += seg
                steps += seg
                if steps == next_ckpt:
                    checkpoint()
                    next_ckpt *= 2
        else:
            perceptron_steps(X, y, w, idx, cfg.eta, B, alpha_inv, sqrt_d)
            steps += epoch_steps
        loss = perceptron_hinge(X, y, w, alpha_inv, sqrt_d)
        wnorm = float(np.sqrt(np.sum(w * w)))
        if not math.isfinite(loss) or not math.isfinite(wnorm) or wnorm > cfg.divergence_norm:
            diverged = True
            break
        if loss == 0.0:
            break
        if steps >= cfg.max_steps:
            diverged = True
            break

    finite = bool(np.all(np.isfinite(w)))
    w1 = float(w @ ds.true_normal) if finite and ds.true_normal is not None else None
    wperp = (float(np.linalg.norm(w - w1 * ds.true_normal))
             if w1 is not None else None)
    test_error = None
    if test_ds is not None and finite and not diverged:
        test_error = _train_error(test_ds.points, test_ds.labels, w)
    record = RunRecord(
        t_star=steps * cfg.eta,
        steps=steps,
        diverged=diverged,
        alpha=cfg.alpha,
        eta=cfg.eta,
        batch_size=B,
        temperature=cfg.temperature,
        P=P,
        d=d,
        seed=cfg.seed,
        chi=ds.chi,
        w1_final=w1,
        w_perp_norm=wperp,
        delta_w=float(np.linalg.norm(w)) if finite else None,
        test_error=test_error,
        trajectory=traj,
    )
    if return_state:
        return record, PerceptronState(w=w, t=steps * cfg.eta, steps=steps)
    return record


def fitting_margin_check(w: np.ndarray, ds: Dataset, alpha: float) -> np.ndarray:
    """Per-point fitting condition w1 |x1| + y w_perp . x_perp >= sqrt(d)/alpha.

    All entries true exactly when the hinge loss vanishes (teacher labels).
    """
    if ds.true_normal is None:
        raise ValueError("fitting condition requires a dataset with a true normal")
    n = ds.true_normal
    w = np.asarray(w, dtype=np.float64)
    w1 = float(w @ n)
    wp = w - w1 * n
    x1 = ds.points @ n
    xp = ds.points - np.outer(x1, n)
    lhs = w1 * np.abs(x1) + ds.labels * (xp @ wp)
    return lhs >= math.sqrt(ds.d) / alpha


def alignment_ratio(w: np.ndarray, true_normal: np.ndarray | None = None) -> float:
    """Boundary alignment w1 / ||w_perp||; inf signals perfect alignment.

    Without an explicit normal the first coordinate axis is used.
    """
    w = np.asarray(w, dtype=np.float64)
    if true_normal is None:
        w1, wp = float(w[0]), w[1:]
    else:
        w1 = float(w @ true_normal)
        wp = w - w1 * true_normal
    wp_norm = float(np.linalg.norm(wp))
    if wp_norm == 0.0:
        return math.inf
    return w1 / wp_norm
