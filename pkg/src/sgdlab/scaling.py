"""Power-law fits, curve collapse, and crossover extraction from run records.

All fits are ordinary least squares on log-transformed data.  Collapse
quality is the mean squared log-deviation between curves after rescaling
the abscissa by P^a; the bracket where the score stays within twice its
minimum operationalizes the by-eye error bar of roughly +-0.2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NonCrossoverError(ValueError):
    """A curve lacks the plateau or the rising branch needed for T_c extraction."""


class EmptyOverlapError(ValueError):
    """Rescaled curves share no common abscissa range."""


@dataclass(frozen=True)
class PowerLawFit:
    """y = prefactor * x^exponent fitted on logs."""

    exponent: float
    prefactor: float
    stderr: float
    r_squared: float


@dataclass(frozen=True)
class CollapseResult:
    """Best collapse exponent with the 2x-score degradation bracket."""

    best_exponent: float
    score_at_best: float
    bracket: tuple[float, float]

    def __post_init__(self):
        if not self.bracket[0] <= self.best_exponent <= self.bracket[1]:
            raise ValueError("bracket must contain the best exponent")


@dataclass(frozen=True)
class CrossoverFit:
    """Plateau/branch decomposition of y(T) curves at several P.

    plateau levels scale as P^zeta, the branch as T^delta P^gamma, and the
    crossover temperature as P^(-a); consistency requires
    a ~= (gamma - zeta) / delta.
    """

    plateau_level: float
    plateau_exponent_zeta: float
    powerlaw_branch: PowerLawFit
    T_c: dict
    a_exponent: float
    gamma_exponent: float

    @property
    def a_from_exponents(self) -> float:
        return (self.gamma_exponent - self.plateau_exponent_zeta) / self.powerlaw_branch.exponent


def _as_xy(xs, ys):
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys must have equal length")
    if xs.size < 3:
        raise ValueError("need at least 3 points for a power-law fit")
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(xs)) or not np.all(np.isfinite(ys)):
        raise ValueError("power-law fits require positive finite data")
    return np.log(xs), np.log(ys)


def fit_power_law(xs, ys) -> PowerLawFit:
    """OLS of log y on log x; stderr of the slope from the residual variance."""
    lx, ly = _as_xy(xs, ys)
    n = lx.size
    A = np.column_stack([np.ones(n), lx])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("xs are all equal; exponent is unidentifiable")
    stderr = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else 0.0
    return PowerLawFit(exponent=float(coef[1]), prefactor=float(math.exp(coef[0])),
                       stderr=stderr, r_squared=r2)


def _field(rec, name):
    if isinstance(rec, dict):
        return rec[name]
    return getattr(rec, name)


def fit_two_var_scaling(records, x1_field: str, x2_field: str,
                        y_field: str) -> tuple[PowerLawFit, PowerLawFit]:
    """Bilinear OLS on logs: log y = c + e1 log x1 + e2 log x2.

    Returns one PowerLawFit per variable; both carry the joint R^2 and the
    common prefactor exp(c).  Records may be RunRecords or plain mappings;
    the caller filters diverged runs.
    """
    rows = [(float(_field(r, x1_field)), float(_field(r, x2_field)),
             float(_field(r, y_field))) for r in records]
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[0] < 4:
        raise ValueError("need at least 4 records for a two-variable fit")
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("two-variable fits require positive finite data")
    if np.unique(arr[:, 0]).size < 3 or np.unique(arr[:, 1]).size < 3:
        raise ValueError("need >= 3 distinct values in each variable")
    L = np.log(arr)
    A = np.column_stack([np.ones(arr.shape[0]), L[:, 0], L[:, 1]])
    gram = A.T @ A
    if np.linalg.matrix_rank(gram) < 3:
        raise ValueError("degenerate design matrix")
    coef, *_ = np.linalg.lstsq(A, L[:, 2], rcond=None)
    resid = L[:, 2] - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((L[:, 2] - L[:, 2].mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    dof = max(arr.shape[0] - 3, 1)
    cov = np.linalg.inv(gram) * (ss_res / dof)
    pref = float(math.exp(coef[0]))
    f1 = PowerLawFit(exponent=float(coef[1]), prefactor=pref,
                     stderr=float(math.sqrt(cov[1, 1])), r_squared=r2)
    f2 = PowerLawFit(exponent=float(coef[2]), prefactor=pref,
                     stderr=float(math.sqrt(cov[2, 2])), r_squared=r2)
    return f1, f2


_GRID_POINTS = 64


def _rescaled_log_curves(curves, a: float):
    out = []
    for P, pts in curves:
        pts = sorted((float(t), float(v)) for t, v in pts)
        if len(pts) < 2:
            raise ValueError("each curve needs at least 2 points")
        x = np.array([p[0] for p in pts])
        v = np.array([p[1] for p in pts])
        if np.any(x <= 0) or np.any(v <= 0):
            raise ValueError("collapse requires positive coordinates")
        out.append((np.log(x * float(P) ** a), np.log(v)))
    return out


def collapse_score(curves, a: float) -> float:
    """Mean squared log-deviation between curves after rescaling T -> T P^a.

    Curves are (P, [(T, y), ...]) pairs; each is interpolated (linearly in
    log-log) onto a common grid spanning the overlap of the rescaled ranges.
    Zero means the rescaled curves coincide.
    """
    if len(curves) < 2:
        raise ValueError("collapse needs at least 2 curves")
    logs = _rescaled_log_curves(curves, a)
    lo = max(lx[0] for lx, _ in logs)
    hi = min(lx[-1] for lx, _ in logs)
    if not lo < hi:
        raise EmptyOverlapError("empty overlap after rescaling")
    grid = np.linspace(lo, hi, _GRID_POINTS)
    vals = np.stack([np.interp(grid, lx, lv) for lx, lv in logs])
    return float(np.mean((vals - vals.mean(axis=0)) ** 2))


def best_collapse_exponent(curves, a_grid) -> CollapseResult:
    """Minimize the collapse score over a_grid; bracket where score <= 2x minimum.

    Grid exponents that push the rescaled curves out of overlap entirely
    score as infinitely bad; the search fails only when no exponent leaves
    an overlap.
    """
    a_grid = np.asarray(sorted(float(a) for a in a_grid), dtype=np.float64)
    if a_grid.size < 2:
        raise ValueError("a_grid needs at least 2 values")
    if np.any(np.diff(a_grid) > 0.05 + 1e-12):
        raise ValueError("a_grid resolution must be <= 0.05")
    scores = np.empty(a_grid.size)
    for i, a in enumerate(a_grid):
        try:
            scores[i] = collapse_score(curves, a)
        except EmptyOverlapError:
            scores[i] = math.inf
    if not np.any(np.isfinite(scores)):
        raise EmptyOverlapError("no grid exponent leaves the curves overlapping")
    k = int(np.argmin(scores))
    within = a_grid[scores <= 2.0 * scores[k]]
    return CollapseResult(best_exponent=float(a_grid[k]), score_at_best=float(scores[k]),
                          bracket=(float(within.min()), float(within.max())))


_PLATEAU_SLOPE = 0.15


def extract_crossover(curves) -> CrossoverFit:
    """Split each y(T) curve into a low-T plateau and a high-T power-law branch.

    Per curve, the plateau ends at the first 3-point rolling log-slope
    >= 0.15 and T_c is the intersection of the plateau level with that
    curve's own branch fit.  Plateau levels across P give zeta and the T_c
    values give a.  The branch exponents (delta, gamma) come from one
    pooled two-variable fit over every curve's branch points, which is far
    more stable than extrapolated per-curve prefactors; a is still fitted
    independently of them.  Raises NonCrossoverError when a curve has no
    plateau or no rising branch.
    """
    if len(curves) < 3:
        raise ValueError("crossover extraction needs at least 3 curves (distinct P)")
    Ps, levels, tcs = [], [], []
    pooled = []
    for P, pts in curves:
        pts = sorted((float(t), float(v)) for t, v in pts)
        if len(pts) < 6:
            raise ValueError("each curve needs at least 6 points")
        lx = np.log([p[0] for p in pts])
        lv = np.log([p[1] for p in pts])
        slopes = (lv[2:] - lv[:-2]) / (lx[2:] - lx[:-2])
        rising = np.nonzero(slopes >= _PLATEAU_SLOPE)[0]
        if rising.size == 0:
            raise NonCrossoverError(f"curve P={P} has no rising branch")
        j = int(rising[0])
        if j == 0:
            raise NonCrossoverError(f"curve P={P} has no low-T plateau")
        plateau = slice(0, j + 1)
        branch = slice(j + 2, len(pts))
        if branch.stop - branch.start < 3:
            raise NonCrossoverError(f"curve P={P} has too short a rising branch")
        level = float(np.exp(np.mean(lv[plateau])))
        bfit = fit_power_law(np.exp(lx[branch]), np.exp(lv[branch]))
        if bfit.exponent <= 0:
            raise NonCrossoverError(f"curve P={P} branch is not rising")
        Ps.append(float(P))
        levels.append(level)
        tcs.append((level / bfit.prefactor) ** (1.0 / bfit.exponent))
        pooled.extend({"T": float(np.exp(x)), "P": float(P), "y": float(np.exp(v))}
                      for x, v in zip(lx[branch], lv[branch]))
    zeta_fit = fit_power_law(Ps, levels)
    tc_fit = fit_power_law(Ps, tcs)
    branch_T, branch_P = fit_two_var_scaling(pooled, "T", "P", "y")
    return CrossoverFit(
        plateau_level=zeta_fit.prefactor,
        plateau_exponent_zeta=zeta_fit.exponent,
        powerlaw_branch=branch_T,
        T_c={int(p): tc for p, tc in zip(Ps, tcs)},
        a_exponent=-tc_fit.exponent,
        gamma_exponent=branch_P.exponent,
    )


def exponent_report(records, collapse_a: float | None = None,
                    crossover: CrossoverFit | None = None) -> dict:
    """Summary table of the fitted exponents: b, gamma, delta, gamma/delta, a, zeta.

    delta and gamma come from the two-variable fit of delta_w, b from the
    fit of t_star.  a is taken from a collapse exponent when given, else
    from the crossover fit; zeta requires a crossover fit.  The dict is
    JSON-serializable.
    """
    fT, fP = fit_two_var_scaling(records, "temperature", "P", "delta_w")
    _, fb = fit_two_var_scaling(records, "temperature", "P", "t_star")
    a = collapse_a if collapse_a is not None else (
        crossover.a_exponent if crossover is not None else None)
    return {
        "b": fb.exponent,
        "gamma": fP.exponent,
        "delta": fT.exponent,
        "gamma_over_delta": fP.exponent / fT.exponent,
        "a": a,
        "zeta": crossover.plateau_exponent_zeta if crossover is not None else None,
        "stderr": {"b": fb.stderr, "gamma": fP.stderr, "delta": fT.stderr},
    }
