import math

import numpy as np
import pytest

from sgdlab.data import ChiDistribution, Dataset, sample_chi_dataset
from sgdlab.mlp import (
    EarlyStopConfig,
    GridExhaustedError,
    MlpState,
    bisect_tmax,
    centered_predictor,
    cross_entropy_train_early_stop,
    find_tmax,
    grad_loss,
    init_network,
    input_gradient,
    input_gradient_alignment,
    network_output,
    sgd_train,
)
from sgdlab.perceptron import alignment_ratio, draw_batches
from sgdlab.records import TrainConfig


from helpers import batch_hinge as _batch_hinge
from helpers import fd_grads as _fd_grads
from helpers import kink_safe_case as _kink_safe_case
from helpers import rel_grad_error as _rel_grad_error


def test_init_statistics():
    m = init_network(2, 512, 64, seed=0)
    assert m.layers[0].shape == (64, 512)
    assert m.layers[1].shape == (512, 512)
    assert m.layers[2].shape == (512,)
    assert m.layers[0].std() == pytest.approx(1 / math.sqrt(64), rel=0.05)
    assert m.layers[1].std() == pytest.approx(1 / math.sqrt(512), rel=0.05)
    assert m.layers[2].std() == pytest.approx(1 / 512, rel=0.05)


def test_init_deterministic_and_frozen():
    a = init_network(3, 8, 4, seed=7)
    b = init_network(3, 8, 4, seed=7)
    for wa, wb in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)
    with pytest.raises(ValueError):
        a.w0_snapshot[0][0, 0] = 1.0  # snapshot is read-only


def test_centered_predictor_zero_at_init(rng):
    m = init_network(3, 16, 6, seed=4)
    X = rng.standard_normal((100, 6))
    assert np.array_equal(centered_predictor(m, X), np.zeros(100))
    assert centered_predictor(m, X[0]) == 0.0


def test_relu_homogeneity(rng):
    depth = 3
    m = init_network(depth, 10, 5, seed=2)
    X = rng.standard_normal((7, 5))
    base = network_output(m.layers, X)
    lam = 1.7
    scaled = network_output([lam * w for w in m.layers], X)
    assert np.allclose(scaled, lam ** (depth + 1) * base, rtol=1e-12)


def test_depth_zero_reduces_to_perceptron(rng):
    m = init_network(0, 1, 6, seed=3)
    m.layers[0] = m.layers[0] + rng.standard_normal(6) * 0.1
    X = rng.standard_normal((5, 6))
    delta = m.layers[0] - m.w0_snapshot[0]
    from sgdlab.perceptron import predict

    assert np.allclose(centered_predictor(m, X),
                       predict(delta, X) * math.sqrt(6), rtol=1e-12)


def test_grad_matches_finite_differences(rng):
    for depth in (2, 5):
        for _ in range(2):
            m, X, y = _kink_safe_case(rng, depth)
            assert _rel_grad_error(m, X, y, alpha=1.0) < 1e-5


def test_grad_zero_when_all_satisfied(rng):
    m, X, y = _kink_safe_case(rng, 2, alpha=1e6, perturb=True)
    F = centered_predictor(m, X)
    y_fit = np.where(F > 0, 1.0, -1.0)  # every point satisfied at margin 0+
    grads = grad_loss(m, X, y_fit, alpha=1e6)
    for g in grads:
        assert np.array_equal(g, np.zeros_like(g))


def test_grad_single_active_point(rng):
    m, X, y = _kink_safe_case(rng, 2, B=3, alpha=1e6, perturb=True)
    F = centered_predictor(m, X)
    y_one = np.where(F > 0, 1.0, -1.0)
    y_one[1] = -y_one[1]  # exactly one violated point at huge alpha
    grads = grad_loss(m, X, y_one, alpha=1e6)
    # oracle: -y/B * dF/dw via finite differences of the single output
    h = 1e-6
    for li in range(len(m.layers)):
        g = np.zeros_like(m.layers[li])
        it = np.nditer(g, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            up = [w.copy() for w in m.layers]
            dn = [w.copy() for w in m.layers]
            up[li][idx] += h
            dn[li][idx] -= h
            g[idx] = (network_output(up, X[1:2])[0] - network_output(dn, X[1:2])[0]) / (2 * h)
        expect = -y_one[1] / 3 * g
        assert np.max(np.abs(grads[li] - expect)) < 1e-5 * max(1.0, np.max(np.abs(expect)))


def test_hinge_kernel_matches_reference_updates():
    ds = sample_chi_dataset(ChiDistribution(chi=0.0, d=4), 8, seed=5)
    cfg = TrainConfig(alpha=2.0, eta=0.05, batch_size=4, seed=9, max_steps=100)
    from sgdlab._kernels import mlp_forward, mlp_hinge_steps
    from sgdlab.mlp import _pack
    from sgdlab.records import derive_seed

    state = init_network(2, 5, 4, derive_seed(cfg.seed, "init"))
    W0, WH, WO = _pack(state.layers)
    F0 = mlp_forward(ds.points, W0, WH, WO)
    rng = np.random.default_rng(derive_seed(cfg.seed, "batch"))
    idx = draw_batches(rng, 8, 4, 3)
    ref = MlpState(layers=[w.copy() for w in state.layers],
                   w0_snapshot=state.w0_snapshot)
    for k in range(3):
        b = idx[4 * k:4 * (k + 1)]
        grads = grad_loss(ref, ds.points[b], ds.labels[b], cfg.alpha)
        ref.layers = [w - cfg.eta * g for w, g in zip(ref.layers, grads)]
    mlp_hinge_steps(ds.points, ds.labels, F0, W0, WH, WO, idx, cfg.eta, 4, 1 / cfg.alpha)
    got = [W0] + [WH[i] for i in range(WH.shape[0])] + [WO]
    for a, b in zip(got, ref.layers):
        assert np.allclose(a, b, rtol=0, atol=1e-13)


def _separable_dataset(P=8, d=6, seed=0, gap=2.0):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((P, d))
    pts[:, 0] = gap * np.where(np.arange(P) % 2 == 0, 1.0, -1.0)
    return Dataset(points=pts, labels=np.sign(pts[:, 0]),
                   true_normal=np.eye(d)[0], chi=None)


def test_sgd_train_reaches_exact_zero():
    ds = _separable_dataset()
    cfg = TrainConfig(alpha=1.0, eta=0.05, batch_size=8, seed=3, max_steps=500_000)
    rec, state = sgd_train(ds, cfg, depth=2, width=16, return_state=True)
    assert not rec.diverged
    F = centered_predictor(state, ds.points)
    assert float(np.maximum(0.0, 1.0 / cfg.alpha - ds.labels * F).mean()) == 0.0
    assert rec.t_star == pytest.approx(rec.steps * cfg.eta)
    assert rec.delta_w > 0
    rec2 = sgd_train(ds, cfg, depth=2, width=16)
    assert rec2.to_json_line() == rec.to_json_line()


def test_sgd_train_divergence_flagged():
    ds = _separable_dataset()
    cfg = TrainConfig(alpha=2 ** -6, eta=50.0, batch_size=8, seed=3, max_steps=20_000)
    rec = sgd_train(ds, cfg, depth=3, width=16)
    assert rec.diverged


def test_xent_early_stopping():
    ds = _separable_dataset(P=16)
    cfg = TrainConfig(alpha=1.0, eta=0.2, batch_size=12, seed=6, max_steps=200_000)
    es = EarlyStopConfig(checkpoint_every=4, patience=5, validation_fraction=0.25)
    rec, state = cross_entropy_train_early_stop(ds, cfg, es, depth=2, width=16,
                                                return_state=True)
    assert not rec.diverged and not rec.exhausted
    assert rec.loss_kind == "xent"
    assert rec.val_error is not None and rec.final_val_error is not None
    assert rec.val_error <= rec.final_val_error  # argmin checkpoint returned
    assert rec.steps * cfg.eta == pytest.approx(rec.t_star)
    # best-checkpoint weights classify the training split perfectly at the end
    F = centered_predictor(state, ds.points)
    assert np.mean(np.where(F > 0, 1.0, -1.0) != ds.labels) <= 0.25


def test_xent_budget_exhaustion_flagged():
    ds = _separable_dataset(P=16)
    cfg = TrainConfig(alpha=1.0, eta=1e-7, batch_size=4, seed=6, max_steps=8)
    es = EarlyStopConfig(checkpoint_every=5, patience=3, validation_fraction=0.25)
    rec = cross_entropy_train_early_stop(ds, cfg, es, depth=2, width=8)
    assert rec.exhausted
    assert rec.val_error is not None  # best checkpoint still returned


def test_input_gradient_finite_differences(rng):
    m, X, _ = _kink_safe_case(rng, 3, d=5, width=6)
    x = X[0]
    g = input_gradient(m, x)
    h = 1e-6
    fd = np.zeros(5)
    for j in range(5):
        up, dn = x.copy(), x.copy()
        up[j] += h
        dn[j] -= h
        fd[j] = (centered_predictor(m, up) - centered_predictor(m, dn)) / (2 * h)
    scale = max(np.max(np.abs(fd)), 1e-12)
    assert np.max(np.abs(g - fd)) / scale < 1e-5


def test_input_gradient_alignment_perceptron_case(rng):
    m = init_network(0, 1, 5, seed=11)
    m.layers[0] = m.layers[0] + rng.standard_normal(5)
    n = np.eye(5)[0]
    par, perp = input_gradient_alignment(m, np.zeros(5), n)
    delta = m.layers[0] - m.w0_snapshot[0]
    assert par / perp == pytest.approx(abs(alignment_ratio(delta)), rel=1e-12)


def test_input_gradient_rotation_equivariance(rng):
    m, X, _ = _kink_safe_case(rng, 2, d=4, width=6)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    rot_layers = [q @ m.layers[0]] + [w.copy() for w in m.layers[1:]]
    rot_snap = [q @ m.w0_snapshot[0]] + [w.copy() for w in m.w0_snapshot[1:]]
    m_rot = MlpState(layers=rot_layers, w0_snapshot=rot_snap)
    x = X[0]
    g = input_gradient(m, x)
    g_rot = input_gradient(m_rot, q @ x)
    assert np.allclose(g_rot, q @ g, rtol=0, atol=1e-12)


def test_bisect_tmax_monotone_oracle():
    grid = np.geomspace(1e-3, 10.0, 13)
    tm = bisect_tmax(lambda T: T <= 0.1, grid)
    assert tm <= 0.1 < tm * 1.25
    with pytest.raises(GridExhaustedError):
        bisect_tmax(lambda T: True, grid)
    with pytest.raises(GridExhaustedError):
        bisect_tmax(lambda T: False, grid)


def test_find_tmax_smoke():
    ds = sample_chi_dataset(ChiDistribution(chi=0.0, d=8), 64, seed=1)
    tm = find_tmax(ds, np.geomspace(1e-3, 30.0, 10), alpha=2.0**10, depth=2,
                   width=16, batch_size=8, max_steps=30_000, seed=0)
    assert 1e-3 < tm < 30.0


@pytest.mark.slow
def test_feature_regime_weight_scale():
    # full-batch, small eta: delta_w grows as alpha^(-1/(depth+1)) when alpha << 1
    depth, P = 5, 128
    alphas = [2.0 ** -k for k in (4, 6, 8, 10)]
    dws = []
    for alpha in alphas:
        eta = 0.02 * (alpha * 2 ** 4) ** (2.0 / 3.0)  # keep full-batch GD stable
        ds = sample_chi_dataset(ChiDistribution(chi=1.5, d=16), P, seed=77)
        cfg = TrainConfig(alpha=alpha, eta=eta, batch_size=P, seed=7,
                          max_steps=5_000_000)
        rec = sgd_train(ds, cfg, depth=depth, width=64)
        assert not rec.diverged, f"alpha={alpha} diverged"
        dws.append(rec.delta_w)
    from sgdlab.scaling import fit_power_law

    slope = fit_power_law(alphas, dws).exponent
    assert slope == pytest.approx(-1.0 / (depth + 1), abs=0.2)


def _sweep_curves(records, y="delta_w"):
    groups = {}
    for r in records:
        if r.diverged or getattr(r, y) is None:
            continue
        groups.setdefault(r.P, {}).setdefault(r.temperature, []).append(getattr(r, y))
    return [(P, [(T, float(np.exp(np.mean(np.log(v)))))
                 for T, v in sorted(groups[P].items())])
            for P in sorted(groups)]


@pytest.mark.slow
def test_lazy_regime_scaling_exponents():
    # desk-scale lazy sweep: delta ~ 1, gamma in the 0.3-0.5 band (+-0.2 fit
    # error), t* P-exponent ~ 1.3
    from sgdlab.scaling import fit_two_var_scaling
    from sgdlab.sweep import SweepSpec, run_sweep

    spec = SweepSpec(
        model_kind="mlp",
        grid={"alpha": [2.0**15], "temperature": list(np.geomspace(0.0125, 0.095, 7)),
              "batch_size": [16], "P": [128, 256, 512, 1024], "chi": [1.5],
              "d": [16], "depth": [5], "width": [64]},
        replicas=4, base_seed=811, budget=400_000)
    recs = [r for r in run_sweep(spec).records if not r.diverged]
    fT, fP = fit_two_var_scaling(recs, "temperature", "P", "delta_w")
    _, fb = fit_two_var_scaling(recs, "temperature", "P", "t_star")
    assert fT.exponent == pytest.approx(1.0, abs=0.2)
    assert 0.3 - 0.2 <= fP.exponent <= 0.5 + 0.2
    assert fb.exponent == pytest.approx(1.3, abs=0.2)


@pytest.mark.slow
def test_feature_regime_crossover_consistency():
    # low-T plateau ~ P^zeta, high-T branch ~ T^delta P^gamma, crossover
    # T_c ~ P^-a with a = (gamma - zeta)/delta within 0.25
    from sgdlab.scaling import extract_crossover
    from sgdlab.sweep import SweepSpec, run_sweep

    spec = SweepSpec(
        model_kind="mlp",
        grid={"alpha": [2.0**-4], "temperature": list(np.geomspace(3e-5, 9e-3, 15)),
              "batch_size": [16], "P": [256, 512, 1024, 2048], "chi": [1.5],
              "d": [16], "depth": [5], "width": [64]},
        replicas=3, base_seed=516, budget=2_000_000)
    records = run_sweep(spec).records
    fit = extract_crossover(_sweep_curves(records))
    assert 0.0 < fit.plateau_exponent_zeta < 0.3
    assert fit.powerlaw_branch.exponent > 0.15
    tcs = [fit.T_c[P] for P in sorted(fit.T_c)]
    assert all(b <= a * 1.5 for a, b in zip(tcs, tcs[1:]))  # T_c drifts down with P
    assert abs(fit.a_exponent - fit.a_from_exponents) <= 0.25
