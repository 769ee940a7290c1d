"""Noisy temperature search.

Three layers, innermost first:

1. :func:`noisy_binary_search` locates the gap where a sorted family of
   unknown Bernoulli means crosses a target band, with constant success
   probability.  Implemented as a multiplicative-weights posterior over
   the N+2 gaps, queried at the posterior's weighted median.
2. :func:`quantized_search` discretizes a temperature window into a grid
   fine enough that grid steps change the tail mass mu_beta([chi, n]) by
   a controlled factor, and maps the located gap back to a temperature.
3. :func:`binary_search` wraps the quantized search in an exponential
   back-off over window sizes, verifying each candidate with a calibrated
   sample, to reach failure probability gamma on an unbounded interval.

A returned beta is "good" when it lies in Lambda_tau(beta_left,
beta_right, chi): mass at least tau on both sides of chi, with either
condition waived at the matching interval endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .instance import GibbsInstance
from .oracle import OracleHandle
from .profiles import ConstantsProfile, get_profile
from .sampling import sample_empirical

__all__ = [
    "noisy_binary_search",
    "quantized_search",
    "binary_search",
    "LambdaWitness",
    "lambda_witness",
]

# Sampler for indexed Bernoulli families: (index, batch) -> number of successes.
BernoulliFamily = Callable[[int, int], int]


def noisy_binary_search(
    bernoulli_family: BernoulliFamily,
    n_vars: int,
    alpha: float,
    nu: float,
    rng: np.random.Generator,
    profile: ConstantsProfile | None = None,
) -> int:
    """Find a gap [x_v, x_{v+1}] intersecting [alpha-nu, alpha+nu].

    The family has unknown nondecreasing means x_0 <= ... <= x_{n_vars},
    with conventions x_{-1} = 0 and x_{n_vars+1} = 1; the return value v
    lies in {-1, ..., n_vars}.  With probability at least 3/4 the gap is
    correct.  The posterior update uses the two-point likelihood model
    (alpha - nu vs alpha + nu); sampling stops when one gap holds 0.95 of
    the posterior mass or the profile budget runs out, and the posterior
    mode is returned.
    """
    if n_vars < 0:
        raise DomainError("family size must be nonnegative")
    if not (0 < alpha < 1 and 0 < nu < 1):
        raise DomainError("alpha and nu must lie in (0, 1)")
    profile = profile or get_profile()
    n_gaps = n_vars + 2  # gaps -1..n_vars
    log_w = np.zeros(n_gaps)
    p_lo = min(max(alpha - nu, 1e-6), 1 - 1e-6)
    p_hi = min(max(alpha + nu, 1e-6), 1 - 1e-6)
    budget = math.ceil(profile.search_budget_rate * math.log(n_gaps) / nu**2)
    spent = 0
    while spent < budget:
        w = np.exp(log_w - log_w.max())
        w /= w.sum()
        if w.max() >= 0.95:
            break
        # weighted median over variable indices 0..n_vars: mass of gaps
        # below i should straddle 1/2
        cum = np.cumsum(w)
        i = int(np.searchsorted(cum[:-1], 0.5))
        i = min(max(i, 0), n_vars)
        m = min(profile.search_batch, budget - spent)
        h = int(bernoulli_family(i, m))
        if not 0 <= h <= m:
            raise DomainError("bernoulli family returned an invalid success count")
        spent += m
        # gaps g >= i carry the low model, g < i the high model
        lo_update = h * math.log(p_lo) + (m - h) * math.log1p(-p_lo)
        hi_update = h * math.log(p_hi) + (m - h) * math.log1p(-p_hi)
        log_w[i + 1 :] += lo_update
        log_w[: i + 1] += hi_update
    return int(np.argmax(log_w)) - 1


def _grid_size(n: float, width: float, tau_prime: float) -> int:
    # Grid step small enough that mass odds move by less than the tau'
    # slack across one step; the log factor follows the quantization
    # argument (with the 1 + 2 tau' numerator term its algebra requires).
    gap = math.log((1 - tau_prime) * (1 + 2 * tau_prime) / (tau_prime * (3 - 2 * tau_prime)))
    return max(1, math.ceil(n * width / (2.0 * gap)))


def quantized_search(
    oracle: OracleHandle,
    beta_left_p: float,
    beta_right_p: float,
    chi: float,
    tau_prime: float,
    profile: ConstantsProfile | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """One constant-confidence pass over the window [beta_left_p, beta_right_p].

    Simulates the Bernoulli family X_i = 1{x >= chi} with x ~ mu at the
    i-th grid temperature and runs :func:`noisy_binary_search` at
    alpha = 1/2, nu = (1/2 - tau_prime)/2.  The located gap maps back to
    the gap midpoint, or clamps to a window endpoint.
    """
    if not (0 < tau_prime < 0.5):
        raise DomainError("tau_prime must lie in (0, 1/2)")
    if beta_left_p > beta_right_p:
        raise DomainError("invalid window")
    if beta_left_p == beta_right_p:
        return beta_left_p
    profile = profile or get_profile()
    rng = rng if rng is not None else oracle.spawn_rng("quantized-search")
    n_grid = _grid_size(max(oracle.n, 1.0), beta_right_p - beta_left_p, tau_prime)
    grid = np.linspace(beta_left_p, beta_right_p, n_grid + 1)
    mask = oracle.support >= chi

    def family(i: int, m: int) -> int:
        return oracle.sample_indicator_sum(float(grid[i]), m, mask)

    nu = (0.5 - tau_prime) / 2.0
    v = noisy_binary_search(family, n_grid, 0.5, nu, rng, profile)
    if v == -1:
        return beta_left_p
    if v >= n_grid:
        return beta_right_p
    return float(0.5 * (grid[v] + grid[v + 1]))


def binary_search(
    oracle: OracleHandle,
    beta_left: float,
    beta_right: float,
    chi: float,
    gamma: float,
    tau: float,
    profile: ConstantsProfile | None = None,
) -> float:
    """Find beta in Lambda_tau(beta_left, beta_right, chi), w.p. >= 1 - gamma.

    Exponential back-off: iteration i searches only the window
    [max(beta_left, beta_right - 2^(2^i)), beta_right], then verifies the
    candidate with a calibrated sample against the threshold
    sqrt(tau tau'), spending failure budget gamma / 2^(i - i0 + 2).
    Terminates with probability one.
    """
    if not (0 < gamma < 1) or not (0 < tau < 0.5):
        raise DomainError("need gamma in (0,1) and tau in (0, 1/2)")
    if beta_left > beta_right:
        raise DomainError("invalid interval")
    if beta_left == beta_right:
        return beta_left
    profile = profile or get_profile()
    tau_prime = (0.5 + tau) / 2.0
    i0 = max(0, math.ceil(math.log2(math.log2(max(2.0, oracle.n / gamma)))))
    threshold = math.sqrt(tau * tau_prime)
    eps_verify = 0.5 * math.log(tau_prime / tau)
    for i in range(i0, i0 + 200):
        window = math.inf if 2**i > 1023 else 2.0 ** (2**i)
        left = max(beta_left, beta_right - window)
        beta = quantized_search(oracle, left, beta_right, chi, tau_prime, profile)
        gamma_i = gamma / 2.0 ** (i - i0 + 2)
        emp = sample_empirical(oracle, beta, (eps_verify, gamma_i, tau), profile)
        left_ok = beta == beta_left or emp.prob_less(chi) >= threshold
        right_ok = beta == beta_right or emp.prob_geq(chi) >= threshold
        if left_ok and right_ok:
            return beta
    raise DomainError("temperature search failed to terminate (budget exhausted)")


@dataclass(frozen=True)
class LambdaWitness:
    """Exact-model membership check of beta in Lambda_tau (test utility)."""

    beta: float
    chi: float
    tau: float
    beta_left: float
    beta_right: float
    left_ok: bool
    right_ok: bool

    @property
    def member(self) -> bool:
        return self.left_ok and self.right_ok


def lambda_witness(
    instance: GibbsInstance,
    beta: float,
    beta_left: float,
    beta_right: float,
    chi: float,
    tau: float,
) -> LambdaWitness:
    left_ok = beta == beta_left or instance.mu_less(beta, chi) >= tau
    right_ok = beta == beta_right or instance.mu_geq(beta, chi) >= tau
    return LambdaWitness(beta, chi, tau, beta_left, beta_right, left_ok, right_ok)
