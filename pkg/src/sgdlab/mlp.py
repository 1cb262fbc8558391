"""Small fully-connected ReLU networks trained by hinge-to-zero SGD.

The predictor is centered at initialization, F(w, x) = f(w, x) - f(w0, x),
so F is identically zero before the first step.  Layers carry no biases,
which keeps the network positively homogeneous of degree D+1 in its
weights.  Hidden weights are initialized with standard deviation
1/sqrt(fan_in) and the scalar readout with 1/width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sgdlab._kernels import mlp_forward, mlp_hinge_steps, mlp_xent_steps
from sgdlab.data import Dataset
from sgdlab.records import RunRecord, TrainConfig, derive_seed
from sgdlab.perceptron import draw_batches


class GridExhaustedError(RuntimeError):
    """The temperature grid does not bracket the convergence boundary."""


@dataclass
class MlpState:
    """Current weights, the frozen initial weights, and the training clock.

    layers = [(d, h), (h, h) * (depth-1), (h,)] for depth >= 1 hidden layers;
    a depth-0 state is a bare linear readout [(d,)].
    """

    layers: list[np.ndarray]
    w0_snapshot: list[np.ndarray]
    t: float = 0.0
    steps: int = 0

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def d(self) -> int:
        return self.layers[0].shape[0]

    @property
    def width(self) -> int:
        return self.layers[0].shape[1] if self.depth >= 1 else 1


def init_network(depth: int, width: int, d: int, seed: int) -> MlpState:
    """Gaussian initialization: hidden std 1/sqrt(fan_in), readout std 1/width.

    depth counts hidden layers; depth = 0 degenerates to a linear readout
    over the input (readout rule with fan-in d).
    """
    if depth < 0 or width < 1 or d < 1:
        raise ValueError("depth must be >= 0, width and d >= 1")
    rng = np.random.default_rng(seed)
    if depth == 0:
        layers = [rng.normal(0.0, 1.0 / d, size=d)]
    else:
        layers = [rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, width))]
        for _ in range(depth - 1):
            layers.append(rng.normal(0.0, 1.0 / math.sqrt(width), size=(width, width)))
        layers.append(rng.normal(0.0, 1.0 / width, size=width))
    snapshot = []
    for w in layers:
        w0 = w.copy()
        w0.setflags(write=False)
        snapshot.append(w0)
    return MlpState(layers=layers, w0_snapshot=snapshot)


def network_output(layers: list[np.ndarray], X: np.ndarray) -> np.ndarray:
    """Raw output f(w, x): ReLU hidden layers, linear scalar readout."""
    A = X
    for W in layers[:-1]:
        A = np.maximum(A @ W, 0.0)
    return A @ layers[-1]


def centered_predictor(m: MlpState, x: np.ndarray):
    """F(w, x) = f(w^t, x) - f(w^0, x); identically zero at initialization."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    F = network_output(m.layers, X) - network_output(m.w0_snapshot, X)
    return float(F[0]) if single else F


def grad_loss(m: MlpState, batch_points: np.ndarray, batch_labels: np.ndarray,
              alpha: float) -> list[np.ndarray]:
    """Exact gradient of the batch hinge loss (1/B) sum max(0, 1/alpha - y F).

    Only points with unmet margin contribute (Heaviside gate); the result
    matches the layer shapes of ``m.layers``.
    """
    X = np.atleast_2d(np.asarray(batch_points, dtype=np.float64))
    y = np.asarray(batch_labels, dtype=np.float64).reshape(-1)
    B = X.shape[0]
    acts = [X]
    A = X
    for W in m.layers[:-1]:
        A = np.maximum(A @ W, 0.0)
        acts.append(A)
    F = A @ m.layers[-1] - network_output(m.w0_snapshot, X)
    gate = (1.0 / alpha - y * F) > 0.0
    c = np.where(gate, -y / B, 0.0)
    grads: list[np.ndarray] = [np.empty(0)] * len(m.layers)
    grads[-1] = acts[-1].T @ c
    G = np.outer(c, m.layers[-1])
    for l in range(len(m.layers) - 2, -1, -1):
        G = G * (acts[l + 1] > 0.0)
        grads[l] = acts[l].T @ G
        G = G @ m.layers[l].T
    return grads


def _pack(layers):
    D = len(layers) - 1
    W0 = np.ascontiguousarray(layers[0])
    if D >= 2:
        WH = np.stack([np.ascontiguousarray(w) for w in layers[1:-1]])
    else:
        WH = np.empty((0, W0.shape[1], W0.shape[1]))
    WO = np.ascontiguousarray(layers[-1])
    return W0, WH, WO


def _unpack(W0, WH, WO):
    return [W0] + [WH[i] for i in range(WH.shape[0])] + [WO]


def _norm_sq(layers) -> float:
    # overflow to inf is fine: it trips the divergence check
    with np.errstate(over="ignore"):
        return float(sum(np.sum(w * w) for w in layers))


def _delta_w(layers, layers0) -> float:
    with np.errstate(over="ignore"):
        num = math.sqrt(sum(np.sum((a - b) ** 2) for a, b in zip(layers, layers0)))
    return num / math.sqrt(_norm_sq(layers0))


def _sign_error(F, y) -> float:
    return float(np.mean(np.where(F > 0, 1.0, -1.0) != y))


def _regime(alpha: float) -> str:
    return "lazy" if alpha >= 1.0 else "feature"


def sgd_train(ds: Dataset, cfg: TrainConfig, depth: int = 5, width: int = 64,
              test_ds: Dataset | None = None, record_trajectory: bool = False,
              return_state: bool = False):
    """Hinge-to-zero SGD on the centered predictor; same loop contract as the
    perceptron trainer.

    The network is initialized from a stream derived from cfg.seed, batches
    from another, so a run is fully determined by (ds, cfg, depth, width).
    Records delta_w = ||w - w0|| / ||w0|| over all parameters concatenated.
    """
    if depth < 1:
        raise ValueError("sgd_train requires at least one hidden layer")
    P = ds.P
    if cfg.batch_size > P:
        raise ValueError("batch_size exceeds dataset size")
    state0 = init_network(depth, width, ds.d, derive_seed(cfg.seed, "init"))
    W0, WH, WO = _pack(state0.layers)
    layers0 = state0.w0_snapshot
    F0 = mlp_forward(ds.points, W0, WH, WO)
    rng = np.random.default_rng(derive_seed(cfg.seed, "batch"))
    X, y = ds.points, ds.labels
    alpha_inv = 1.0 / cfg.alpha
    B = cfg.batch_size
    epoch_steps = math.ceil(P / B)
    norm0 = math.sqrt(_norm_sq(layers0))
    steps = 0
    diverged = False
    traj: list | None = [] if record_trajectory else None
    next_ckpt = 1

    def margins_ok():
        F = mlp_forward(X, W0, WH, WO) - F0
        if not np.all(np.isfinite(F)):
            return math.inf, None
        return float(np.maximum(0.0, alpha_inv - y * F).mean()), F

    while True:
        idx = draw_batches(rng, P, B, epoch_steps)
        if record_trajectory:
            done = 0
            while done < epoch_steps:
                seg = epoch_steps - done
                if steps < next_ckpt <= steps + seg:
                    seg = next_ckpt - steps
                mlp_hinge_steps(X, y, F0, W0, WH, WO,
                                idx[done * B:(done + seg) * B], cfg.eta, B, alpha_inv)
                done += seg
                steps += seg
                if steps == next_ckpt:
                    _, F = margins_ok()
                    err = _sign_error(F, y) if F is not None else None
                    traj.append((steps * cfg.eta, None, None, err))
                    next_ckpt *= 2
        else:
            mlp_hinge_steps(X, y, F0, W0, WH, WO, idx, cfg.eta, B, alpha_inv)
            steps += epoch_steps
        loss, _ = margins_ok()
        nsq = _norm_sq([W0, WH, WO])
        if not math.isfinite(loss) or not math.isfinite(nsq) or math.sqrt(nsq) > cfg.divergence_norm:
            diverged = True
            break
        if loss == 0.0:
            break
        if steps >= cfg.max_steps:
            diverged = True
            break

    layers = _unpack(W0, WH, WO)
    finite = all(np.all(np.isfinite(w)) for w in layers)
    test_error = None
    if test_ds is not None and finite and not diverged:
        Fte = (mlp_forward(test_ds.points, W0, WH, WO)
               - network_output(layers0, test_ds.points))
        test_error = _sign_error(Fte, test_ds.labels)
    record = RunRecord(
        t_star=steps * cfg.eta,
        steps=steps,
        diverged=diverged,
        alpha=cfg.alpha,
        eta=cfg.eta,
        batch_size=B,
        temperature=cfg.temperature,
        P=P,
        d=ds.d,
        seed=cfg.seed,
        chi=ds.chi,
        delta_w=_delta_w(layers, layers0) if finite else None,
        test_error=test_error,
        trajectory=traj,
        depth=depth,
        width=width,
        regime_alpha=_regime(cfg.alpha),
        loss_kind="hinge",
    )
    if return_state:
        state = MlpState(layers=layers, w0_snapshot=layers0,
                         t=steps * cfg.eta, steps=steps)
        return record, state
    return record


@dataclass(frozen=True)
class EarlyStopConfig:
    """Checkpoint cadence (steps), patience (checkpoints), validation fraction."""

    checkpoint_every: int
    patience: int
    validation_fraction: float

    def __post_init__(self):
        if self.checkpoint_every < 1 or self.patience < 1:
            raise ValueError("checkpoint_every and patience must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")


def cross_entropy_train_early_stop(ds: Dataset, cfg: TrainConfig, es: EarlyStopConfig,
                                   depth: int = 5, width: int = 64,
                                   test_ds: Dataset | None = None,
                                   return_state: bool = False):
    """Train on the margin-scaled logistic loss with validation early stopping.

    At each checkpoint the weights and validation error are stored; training
    terminates once the training error is zero and the validation error has
    not improved for ``patience`` checkpoints.  The returned record reflects
    the best checkpoint; ``exhausted`` is set when the step budget ran out
    first (the best checkpoint is still returned).
    """
    if depth < 1:
        raise ValueError("cross_entropy_train_early_stop requires at least one hidden layer")
    n_val = int(round(ds.P * es.validation_fraction))
    if n_val < 1 or ds.P - n_val < 1:
        raise ValueError("validation split is empty (adjust validation_fraction)")
    perm = np.random.default_rng(derive_seed(cfg.seed, "val")).permutation(ds.P)
    vi, ti = perm[:n_val], perm[n_val:]
    X, y = ds.points[ti], ds.labels[ti]
    Xv, yv = ds.points[vi], ds.labels[vi]
    P = X.shape[0]
    if cfg.batch_size > P:
        raise ValueError("batch_size exceeds training split size")
    state0 = init_network(depth, width, ds.d, derive_seed(cfg.seed, "init"))
    W0, WH, WO = _pack(state0.layers)
    layers0 = state0.w0_snapshot
    F0 = mlp_forward(X, W0, WH, WO)
    F0v = mlp_forward(Xv, W0, WH, WO)
    rng = np.random.default_rng(derive_seed(cfg.seed, "batch"))
    B = cfg.batch_size
    steps = 0
    diverged = False
    exhausted = False
    best: tuple | None = None  # (val_error, steps, layer copies)
    stale = 0
    last_val = None
    while True:
        idx = draw_batches(rng, P, B, es.checkpoint_every)
        mlp_xent_steps(X, y, F0, W0, WH, WO, idx, cfg.eta, B, cfg.alpha)
        steps += es.checkpoint_every
        F = mlp_forward(X, W0, WH, WO) - F0
        Fv = mlp_forward(Xv, W0, WH, WO) - F0v
        nsq = _norm_sq([W0, WH, WO])
        if (not np.all(np.isfinite(F)) or not np.all(np.isfinite(Fv))
                or not math.isfinite(nsq) or math.sqrt(nsq) > cfg.divergence_norm):
            diverged = True
            break
        train_err = _sign_error(F, y)
        last_val = _sign_error(Fv, yv)
        if best is None or last_val < best[0]:
            best = (last_val, steps, [w.copy() for w in _unpack(W0, WH, WO)])
            stale = 0
        else:
            stale += 1
        if train_err == 0.0 and stale >= es.patience:
            break
        if steps >= cfg.max_steps:
            exhausted = True
            break
    if best is None:
        layers_best, best_steps, best_val = _unpack(W0, WH, WO), steps, None
    else:
        best_val, best_steps, layers_best = best
    finite = all(np.all(np.isfinite(w)) for w in layers_best)
    test_error = None
    if test_ds is not None and finite:
        Fte = (network_output(layers_best, test_ds.points)
               - network_output(layers0, test_ds.points))
        test_error = _sign_error(Fte, test_ds.labels)
    record = RunRecord(
        t_star=best_steps * cfg.eta,
        steps=best_steps,
        diverged=diverged,
        alpha=cfg.alpha,
        eta=cfg.eta,
        batch_size=B,
        temperature=cfg.temperature,
        P=ds.P,
        d=ds.d,
        seed=cfg.seed,
        chi=ds.chi,
        delta_w=_delta_w(layers_best, layers0) if finite else None,
        test_error=test_error,
        depth=depth,
        width=width,
        regime_alpha=_regime(cfg.alpha),
        loss_kind="xent",
        val_error=best_val,
        final_val_error=last_val,
        exhausted=exhausted,
    )
    if return_state:
        state = MlpState(layers=layers_best, w0_snapshot=layers0,
                         t=best_steps * cfg.eta, steps=best_steps)
        return record, state
    return record


def _input_grad(layers, x):
    A = x
    masks = []
    for W in layers[:-1]:
        Z = A @ W
        masks.append(Z > 0.0)
        A = np.maximum(Z, 0.0)
    g = layers[-1]
    for W, mask in zip(reversed(layers[:-1]), reversed(masks)):
        g = W @ (g * mask)
    return g


def input_gradient(m: MlpState, x: np.ndarray) -> np.ndarray:
    """d_x F at x, backpropagated to the input through both weight sets."""
    x = np.asarray(x, dtype=np.float64)
    return _input_grad(m.layers, x) - _input_grad(m.w0_snapshot, x)


def input_gradient_alignment(m: MlpState, x_star: np.ndarray,
                             true_normal: np.ndarray) -> tuple[float, float]:
    """Norms of the informative and noise components of d_x F at x_star.

    Meaningful when x_star sits near the model boundary (|F| small); the
    ratio parallel/perp estimates the local boundary alignment.
    """
    if true_normal is None:
        raise ValueError("alignment probe requires a true-boundary normal")
    g = input_gradient(m, x_star)
    par = float(g @ true_normal)
    perp = g - par * np.asarray(true_normal, dtype=np.float64)
    return abs(par), float(np.linalg.norm(perp))


def bisect_tmax(probe, t_grid, rel_width: float = 0.25) -> float:
    """Largest converging temperature: grid scan from the top plus log bisection.

    ``probe(T) -> bool`` reports convergence.  Raises GridExhaustedError when
    the grid's top converges or nothing converges (the grid must straddle
    the boundary).
    """
    ts = sorted(float(t) for t in t_grid)
    if len(ts) < 2 or ts[0] <= 0:
        raise ValueError("t_grid must hold at least two positive temperatures")
    lo = None
    for i in range(len(ts) - 1, -1, -1):
        if probe(ts[i]):
            if i == len(ts) - 1:
                raise GridExhaustedError("top of the temperature grid converges")
            lo, hi = ts[i], ts[i + 1]
            break
    if lo is None:
        raise GridExhaustedError("no temperature in the grid converges")
    while hi / lo > 1.0 + rel_width:
        mid = math.sqrt(lo * hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return lo


def find_tmax(ds: Dataset, t_grid, *, alpha: float, depth: int = 5, width: int = 64,
              batch_size: int = 16, max_steps: int = 200_000, seed: int = 0,
              divergence_norm: float = 1e8, rel_width: float = 0.25) -> float:
    """Largest temperature at which hinge-to-zero training converges on ds."""

    def probe(T: float) -> bool:
        cfg = TrainConfig.from_temperature(
            alpha, T, batch_size, seed=derive_seed(seed, "tmax", float(T).hex()),
            max_steps=max_steps, divergence_norm=divergence_norm)
        return not sgd_train(ds, cfg, depth=depth, width=width).diverged

    return bisect_tmax(probe, t_grid, rel_width=rel_width)
