"""Calibrated empirical sampling and the telescoping-product estimator.

Two workhorses shared by every estimator in the package:

* ``sample_empirical`` draws a frequency table mu_hat at one temperature,
  either with a raw draw count or with the (eps, gamma, p0) calibration
  whose size guarantees the two-sided "well-estimation" bounds.
* ``estimate_products`` estimates all prefix products of the means of a
  list of nonnegative sources, by sample means amplified with a median
  over independent trials.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .oracle import OracleHandle
from .profiles import ConstantsProfile

__all__ = [
    "calibrated_sample_size",
    "EmpiricalDistribution",
    "sample_empirical",
    "well_estimates",
    "estimate_pi",
    "ProductEstimates",
    "estimate_products",
    "bernoulli_source",
    "interval_indicator_source",
    "tilt_source",
]

# Switch running products into the log domain past these magnitudes.
_LINEAR_HI = 1e100
_LINEAR_LO = 1e-100


def calibrated_sample_size(
    eps: float,
    gamma: float,
    p0: float,
    profile: ConstantsProfile | None = None,
) -> int:
    """Draw count N = ceil(3 e^eps ln(4/gamma) / ((1-e^-eps)^2 p0)).

    With N this large, the empirical frequency of any fixed energy set
    with true mass p satisfies, with probability at least 1-gamma, both
    |p_hat - p| <= eps (p + p0) and the two-sided multiplicative bound
    checked by :func:`well_estimates`.  A profile may scale N down for
    desk-sized runs (scale 1 reproduces the bound verbatim).
    """
    if not (eps > 0 and 0 < gamma <= 0.5 and 0 < p0 <= 1):
        raise DomainError("need eps > 0, gamma in (0, 1/2], p0 in (0, 1]")
    n = 3.0 * math.exp(eps) * math.log(4.0 / gamma) / ((1.0 - math.exp(-eps)) ** 2 * p0)
    if profile is not None:
        n *= profile.calibration_scale
    return max(1, math.ceil(n))


@dataclass
class EmpiricalDistribution:
    """Frequency table mu_hat_beta from n_draws oracle draws."""

    beta: float
    n_draws: int
    support: np.ndarray
    freq: np.ndarray  # raw counts aligned with support
    calibration: dict | None = None

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        self.freq = np.asarray(self.freq, dtype=float)
        if int(round(self.freq.sum())) != self.n_draws:
            raise DomainError("frequency table does not sum to n_draws")

    def prob(self, x: float) -> float:
        idx = np.searchsorted(self.support, x)
        if idx >= self.support.size or self.support[idx] != x:
            return 0.0
        return float(self.freq[idx]) / self.n_draws

    def prob_less(self, chi: float) -> float:
        """mu_hat of [0, chi)."""
        return float(self.freq[self.support < chi].sum()) / self.n_draws

    def prob_geq(self, chi: float) -> float:
        """mu_hat of [chi, n]."""
        return float(self.freq[self.support >= chi].sum()) / self.n_draws

    def prob_leq(self, chi: float) -> float:
        return float(self.freq[self.support <= chi].sum()) / self.n_draws

    def as_dict(self) -> dict:
        return {
            "beta": self.beta,
            "n_draws": self.n_draws,
            "freq": {format(x, ".17g"): int(c) for x, c in zip(self.support, self.freq) if c},
            "calibration": self.calibration,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def sample_empirical(
    oracle: OracleHandle,
    beta: float,
    spec,
    profile: ConstantsProfile | None = None,
) -> EmpiricalDistribution:
    """Draw an empirical distribution at beta.

    ``spec`` is either a raw positive draw count or an (eps, gamma, p0)
    triple routed through :func:`calibrated_sample_size`.
    """
    calibration = None
    if isinstance(spec, (tuple, list)):
        eps, gamma, p0 = spec
        n_draws = calibrated_sample_size(eps, gamma, p0, profile)
        calibration = {"eps": eps, "gamma": gamma, "p0": p0, "n_draws": n_draws}
    else:
        n_draws = int(spec)
        if n_draws < 1:
            raise DomainError("raw draw count must be at least 1")
    counts = oracle.sample_counts(beta, n_draws)
    return EmpiricalDistribution(beta, n_draws, oracle.support, counts, calibration)


def well_estimates(p_hat: float, p: float, eps: float, p0: float) -> bool:
    """Check the two-sided calibrated-sampling guarantee (test utility).

    True iff |p_hat - p| <= eps (p + p0) and additionally
    p_hat in [e^-eps p, e^eps p] when p >= e^-eps p0, or p_hat < p0 when
    p < e^-eps p0.
    """
    if not (eps > 0 and 0 < p0 <= 1 and 0 <= p <= 1 and p_hat >= 0):
        raise DomainError("arguments out of range")
    if abs(p_hat - p) > eps * (p + p0):
        return False
    if p >= math.exp(-eps) * p0:
        return math.exp(-eps) * p <= p_hat <= math.exp(eps) * p
    return p_hat < p0


def estimate_pi(
    x: float,
    alpha: float,
    nu: float,
    q_hat_alpha: float,
    mu_hat_alpha_x: float,
    beta_min: float,
    eps: float,
    delta: float,
) -> tuple[float, float]:
    """Count estimate and error bar from a ratio estimate and a frequency.

    pi_hat(x) = Q_hat(alpha) e^((beta_min - alpha) x) mu_hat_alpha(x)
    u(x)     = 0.5 Q_hat(alpha) e^((beta_min - alpha) x) eps (delta nu + mu_hat_alpha(x))
    """
    if q_hat_alpha <= 0 or mu_hat_alpha_x < 0:
        raise DomainError("need q_hat_alpha > 0 and mu_hat_alpha_x >= 0")
    tilt = q_hat_alpha * math.exp((beta_min - alpha) * x)
    pi_hat = tilt * mu_hat_alpha_x
    u = 0.5 * tilt * eps * (delta * nu + mu_hat_alpha_x)
    return pi_hat, u


# ---------------------------------------------------------------------------
# Telescoping products
# ---------------------------------------------------------------------------

# A source draws r i.i.d. copies of its nonnegative variable and returns
# the sample mean.  Oracle-backed sources charge the oracle r draws.
Source = Callable[[int], float]


def bernoulli_source(oracle: OracleHandle, beta: float, energy: float) -> Source:
    """Mean of r indicators 1{x == energy}, x ~ mu_beta."""
    mask = oracle.support == energy
    if not mask.any():
        raise DomainError(f"energy {energy!r} not in oracle support")

    def draw_mean(r: int) -> float:
        return oracle.sample_indicator_sum(beta, r, mask) / r

    return draw_mean


def interval_indicator_source(oracle: OracleHandle, beta: float, chi: float) -> Source:
    """Mean of r indicators 1{x >= chi}, x ~ mu_beta."""
    mask = oracle.support >= chi

    def draw_mean(r: int) -> float:
        return oracle.sample_indicator_sum(beta, r, mask) / r

    return draw_mean


def tilt_source(oracle: OracleHandle, beta: float, rate: float) -> Source:
    """Mean of r copies of exp(rate * K), K ~ mu_beta."""
    weights = np.exp(rate * oracle.support)

    def draw_mean(r: int) -> float:
        counts = oracle.sample_counts(beta, r)
        return float(np.dot(counts / r, weights))

    return draw_mean


class BatchedTiltSources:
    """Vector of tilt sources sharing one oracle, drawn a whole trial at a time.

    Source i is exp(rates[i] * K) with K ~ mu at betas[i]; one call to
    ``trial_means`` draws r copies of every source (cost r * len(betas))
    and returns the vector of sample means.  This keeps product
    estimation over very long cooling schedules out of per-source python
    loops.
    """

    def __init__(self, oracle: OracleHandle, betas, rates):
        self.oracle = oracle
        self.betas = np.asarray(betas, dtype=float)
        self.rates = np.asarray(rates, dtype=float)
        if self.betas.shape != self.rates.shape:
            raise DomainError("betas and rates must align")
        self.weights = np.exp(np.outer(self.rates, oracle.support))
        self._draw = oracle.counts_many_sampler(self.betas)

    def __len__(self) -> int:
        return int(self.betas.size)

    def trial_means(self, r: int) -> np.ndarray:
        counts = self._draw(r)
        return (counts * self.weights).sum(axis=1) / r


@dataclass
class ProductEstimates:
    """Prefix-product estimates; index 0 is the empty product 1."""

    values: np.ndarray
    log_values: np.ndarray
    alpha: float
    eps: float
    gamma: float
    r_per_trial: int
    k_trials: int
    total_draws: int
    degenerate: bool = field(default=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.log_values = np.asarray(self.log_values, dtype=float)
        if self.values[0] != 1.0:
            raise DomainError("index 0 of a product estimate must equal 1")
        if np.any(self.values < 0):
            raise DomainError("product estimates must be nonnegative")
        self.degenerate = bool(np.any(self.values == 0.0))


def estimate_products(
    sources: Sequence[Source],
    alpha: float,
    eps: float,
    gamma: float,
    profile: ConstantsProfile | None = None,
) -> ProductEstimates:
    """Estimate prod_{j<=i} E[X_j] for every prefix i = 0..N.

    Each of k = odd ceil(3 ln(1/gamma)) trials draws r = ceil(100 alpha
    / eps^2) copies of every source (profile constants), forms running
    products of the sample means, and the per-index medians are returned.
    When the relative variances satisfy sum_i S[X_i] <= N + alpha, every
    estimate is within e^(+-eps) of the true prefix product with
    probability at least 1 - gamma.

    Products are tracked in linear arithmetic (bit-exact for constant
    sources) and switch to the log domain past 1e100 / 1e-100.
    """
    if alpha <= 0 or not (0 < eps) or not (0 < gamma < 1):
        raise DomainError("need alpha > 0, eps > 0, gamma in (0, 1)")
    prof_rate = 100.0 if profile is None else profile.product_rate
    trial_rate = 3.0 if profile is None else profile.trial_rate
    batched = hasattr(sources, "trial_means")
    n_sources = len(sources)
    r = max(1, math.ceil(prof_rate * alpha / eps**2))
    k = max(1, math.ceil(trial_rate * math.log(1.0 / gamma)))
    if k % 2 == 0:
        k += 1

    trials_lin = np.empty((k, n_sources + 1))
    trials_log = np.empty((k, n_sources + 1))
    for trial in range(k):
        if batched:
            means = np.asarray(sources.trial_means(r), dtype=float)
            if means.shape != (n_sources,):
                raise DomainError("trial_means returned the wrong number of sources")
            if np.any(means < 0):
                raise DomainError("sources must produce nonnegative values")
            trials_lin[trial, 0] = 1.0
            trials_log[trial, 0] = 0.0
            with np.errstate(divide="ignore", over="ignore", under="ignore"):
                trials_log[trial, 1:] = np.cumsum(np.log(means))
                lin = np.cumprod(means)
                # cumprod silently under/overflows; fall back to exp(log)
                degraded = (lin == 0.0) | ~np.isfinite(lin) | (np.abs(lin) > _LINEAR_HI) | (
                    np.abs(lin) < _LINEAR_LO
                )
                degraded &= trials_log[trial, 1:] > -np.inf
                trials_lin[trial, 1:] = np.where(
                    degraded, np.exp(trials_log[trial, 1:]), lin
                )
            continue
        lin, use_lin = 1.0, True
        log_acc = 0.0
        trials_lin[trial, 0] = 1.0
        trials_log[trial, 0] = 0.0
        for i, source in enumerate(sources, start=1):
            mean = float(source(r))
            if mean < 0:
                raise DomainError("sources must produce nonnegative values")
            if use_lin:
                lin = lin * mean
                if lin != 0.0 and not (_LINEAR_LO < abs(lin) < _LINEAR_HI):
                    use_lin = False
            log_acc = log_acc + (math.log(mean) if mean > 0 else -math.inf)
            if use_lin:
                trials_lin[trial, i] = lin
            else:
                trials_lin[trial, i] = math.exp(log_acc) if log_acc < 709.0 else math.inf
            trials_log[trial, i] = log_acc

    med_idx = k // 2
    if k == 1:
        rows = np.zeros(n_sources + 1, dtype=int)
    else:
        rows = np.argpartition(trials_log, med_idx, axis=0)[med_idx, :]
    cols = np.arange(n_sources + 1)
    values = trials_lin[rows, cols]
    log_values = trials_log[rows, cols]
    return ProductEstimates(
        values=values,
        log_values=log_values,
        alpha=alpha,
        eps=eps,
        gamma=gamma,
        r_per_trial=r,
        k_trials=k,
        total_draws=k * n_sources * r,
    )
