"""Extreme-value machinery for the maximum of c / |x1| over a training set.

With c standard normal and |x1| drawn from the chi-parametrized density,
the ratio q = c/|x1| is heavy-tailed with density K (1 + q^2/sigma^2)
^(-(chi+2)/2), so the maximum of P draws converges, once rescaled by a_P,
to a Frechet law with shape chi+1.  The typical maximum therefore grows as
P^(1/(1+chi)), which is the predicted exponent gamma of the informative
weight component.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from sgdlab.records import derive_seed


@dataclass(frozen=True)
class RatioDistribution:
    """Law of q = c / |x1|: c ~ N(0, sigma^2), |x1| from the chi density."""

    chi: float
    sigma: float = 1.0

    def __post_init__(self):
        if self.chi < 0:
            raise ValueError(f"chi must be >= 0, got {self.chi}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @property
    def K(self) -> float:
        """Normalizing constant Gamma((chi+2)/2) / (sqrt(pi) sigma Gamma((chi+1)/2))."""
        return math.exp(math.lgamma((self.chi + 2.0) / 2.0)
                        - math.lgamma((self.chi + 1.0) / 2.0)) / (math.sqrt(math.pi) * self.sigma)


def q_pdf(rd: RatioDistribution, q):
    """Density K (1 + q^2/sigma^2)^(-(chi+2)/2); integrates to one."""
    q = np.asarray(q, dtype=np.float64)
    out = rd.K * (1.0 + (q / rd.sigma) ** 2) ** (-(rd.chi + 2.0) / 2.0)
    return float(out) if out.ndim == 0 else out


def frechet_scale(P: int, chi: float, sigma: float = 1.0) -> float:
    """Scale sequence a_P = (K sigma^(chi+2) P / (chi+1))^(-1/(chi+1)).

    a_P * M_P converges in law to the Frechet distribution; equivalently
    P * Prob(q > 1/a_P) -> 1.
    """
    if P < 1:
        raise ValueError("P must be >= 1")
    K = RatioDistribution(chi, sigma).K
    return (K * sigma ** (chi + 2.0) * P / (chi + 1.0)) ** (-1.0 / (chi + 1.0))


def frechet_cdf(t, chi: float):
    """Limiting CDF exp(-t^(-chi-1)) for t > 0, zero otherwise."""
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.where(t > 0.0, np.exp(-np.where(t > 0.0, t, 1.0) ** (-chi - 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class MaxStatistic:
    """Trial maxima of c/|x1| over P draws, with their mean and median."""

    P: int
    mean_MP: float
    samples: np.ndarray

    @property
    def median_MP(self) -> float:
        """Typical value of the maximum; finite-variance estimator for every chi
        (the ensemble mean has no population counterpart at chi = 0, where the
        Frechet shape equals one)."""
        return float(np.median(self.samples))


def sample_max_statistic(P: int, chi: float, trials: int, seed: int) -> MaxStatistic:
    """Monte Carlo law of M_P = max over P draws of c/|x1|.

    Each trial runs on its own pair of derived streams (index-merged, so
    trials are independently parallelizable), and the streams are shared
    across calls with different P: trial maxima are prefix-coupled, which
    leaves every marginal law exact while strongly reducing the noise of
    slope estimates of the typical maximum versus P.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if P < 1:
        raise ValueError("P must be >= 1")
    shape = (chi + 1.0) / 2.0
    out = np.empty(trials)
    for t in range(trials):
        rng_c = np.random.default_rng(derive_seed(seed, t, "c"))
        rng_x = np.random.default_rng(derive_seed(seed, t, "x"))
        c = rng_c.standard_normal(P)
        x = np.sqrt(2.0 * rng_x.gamma(shape, 1.0, size=P))
        while np.any(x == 0.0):
            zero = x == 0.0
            x[zero] = np.sqrt(2.0 * rng_x.gamma(shape, 1.0, size=int(zero.sum())))
        out[t] = float(np.max(c / x))
    return MaxStatistic(P=P, mean_MP=float(out.mean()), samples=out)


def predicted_gamma(chi: float) -> float:
    """Predicted exponent of the informative weight growth: 1/(1+chi)."""
    if chi < 0:
        raise ValueError("chi must be >= 0")
    return 1.0 / (1.0 + chi)


def maxima_to_csv(stats, path) -> None:
    """Write trial maxima as rows (P, trial, max_value); accepts one or many."""
    if isinstance(stats, MaxStatistic):
        stats = [stats]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["P", "trial", "max_value"])
        for st in stats:
            for i, v in enumerate(st.samples):
                writer.writerow([st.P, i, repr(float(v))])
