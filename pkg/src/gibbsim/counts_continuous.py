"""Count estimation in the continuous setting.

Descends through temperatures found by noisy binary search; at each stop,
a large calibrated sample estimates the frequencies of all energies in
the newly uncovered bracket, and the all-temperatures ratio estimator
converts frequencies into lower-normalized counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GibbsError
from .oracle import OracleHandle
from .pitable import PiTable
from .profiles import ConstantsProfile, get_profile
from .ratio import pratio_all
from .sampling import estimate_pi, sample_empirical
from .search import binary_search

__all__ = ["PcoefTrace", "pcoef_continuous"]

_MAX_ITERATIONS = 10_000


@dataclass
class PcoefTrace:
    """Loop state for diagnostics: one record per iteration."""

    iterations: list = field(default_factory=list)
    total_cost: int = 0

    def add(self, t: int, alpha: float, x: float, n_draws: int) -> None:
        self.iterations.append({"t": t, "alpha": alpha, "x": x, "n_draws": n_draws})

    @property
    def T(self) -> int:
        return len(self.iterations)


def pcoef_continuous(
    oracle: OracleHandle,
    delta: float,
    eps: float,
    gamma: float,
    profile: ConstantsProfile | None = None,
) -> tuple[PiTable, PcoefTrace]:
    """Estimate all lower-normalized counts pi(x) with error bars.

    With probability at least 1 - gamma the output satisfies
    |pi_hat(x) - pi(x)| <= u(x) <= eps pi(x) (1 + delta/Delta(x)) for
    every positive count, and pi_hat(x) = 0 for zero counts.
    """
    if not (0 < delta < 1 and 0 < eps < 1 and 0 < gamma < 1):
        raise DomainError("delta, eps, gamma must lie in (0, 1)")
    profile = profile or get_profile()
    cost0 = oracle.cost
    support = oracle.support
    pi_hat = np.zeros(support.size)
    u = np.zeros(support.size)

    estimator = pratio_all(oracle, eps / 10.0, gamma / 4.0, profile)
    trace = PcoefTrace()
    x_prev = oracle.n
    alpha_prev = oracle.beta_max
    t = 0
    while True:
        t += 1
        if t > _MAX_ITERATIONS:
            raise GibbsError("count estimation failed to terminate")
        if alpha_prev > oracle.beta_min:
            alpha_t = binary_search(
                oracle, oracle.beta_min, alpha_prev, x_prev, gamma / (100.0 * t * t), 0.25, profile
            )
        else:
            alpha_t = oracle.beta_min  # degenerate interval: single pass at beta_min
        n_draws = math.ceil(
            profile.counts_sample_rate
            * math.log(50.0 * t * t / (delta * gamma))
            / (delta * eps**2)
        )
        emp = sample_empirical(oracle, alpha_t, n_draws)
        if alpha_t > oracle.beta_min:
            cum = np.cumsum(emp.freq) / emp.n_draws
            idx = int(np.searchsorted(cum, 0.01))
            x_t = float(support[min(idx, support.size - 1)])
        else:
            x_t = -math.inf
        q_hat_alpha = estimator.query(alpha_t)
        in_bracket = (support > x_t) & (support <= x_prev)
        for j in np.flatnonzero(in_bracket):
            pi_hat[j], u[j] = estimate_pi(
                float(support[j]),
                alpha_t,
                1.0 / 200.0,
                q_hat_alpha,
                emp.prob(float(support[j])),
                oracle.beta_min,
                eps,
                delta,
            )
        trace.add(t, alpha_t, x_t, n_draws)
        alpha_prev, x_prev = alpha_t, x_t
        if alpha_prev <= oracle.beta_min:
            break

    trace.total_cost = oracle.cost - cost0
    table = PiTable(
        support.copy(),
        pi_hat,
        u,
        meta={
            "delta": delta,
            "eps": eps,
            "gamma": gamma,
            "profile": profile.name,
            "beta_min": oracle.beta_min,
            "beta_max": oracle.beta_max,
            "total_cost": trace.total_cost,
            "iterations": trace.T,
        },
    )
    return table, trace
