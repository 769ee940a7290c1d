"""Named constant profiles for the estimators.

Every hard numeric constant that appears in an estimator lives here, so
that a run can be reproduced under either the worst-case-safe constants
(``paper``) or the smaller empirically validated ones that make desk-scale
experiments affordable (``desk``).  The two presets differ only in the
fields below; all derived quantities are computed from the active profile
at call time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ConstantsProfile:
    """One bundle of tunable constants.

    calibration_scale
        Multiplier on the calibrated sample size
        N = ceil(3 e^eps ln(4/gamma) / ((1-e^-eps)^2 p0)).  The bound is a
        Chernoff union bound with a lot of slack; 0.5 keeps every desk
        coverage statistic comfortably above target.
    product_rate
        The constant in r = ceil(product_rate * alpha / eps^2) draws per
        source and trial inside the telescoping-product estimator
        (worst-case-safe value 100).
    trial_rate
        k = odd ceil(trial_rate * ln(1/gamma)) median trials for the
        product estimator.
    ratio_all_k1_rate, ratio_all_k1_log
        k1 = ceil(ratio_all_k1_rate/eps^2 * ln(ratio_all_k1_log/gamma))
        descent runs in the hybrid all-temperatures ratio estimator
        (worst-case-safe values 400 and 30).
    ppe_k_rate
        The constant in k2 = ceil(ppe_k_rate * (1+ln n)/eps^2) for the
        paired-product stage of the hybrid estimator.
    counts_sample_rate
        The constant C in N_t = ceil(C * ln(50 t^2/(delta gamma)) /
        (delta eps^2)) for the continuous count estimator
        (worst-case-safe value 1e8, a union-bound artifact).
    search_budget_rate
        Sample budget ceil(search_budget_rate * ln(N+2)/nu^2) for one
        noisy-binary-search invocation before it falls back to the
        posterior mode.
    search_batch
        Draws taken per posterior update in noisy binary search (pure
        batching, does not change the posterior model).
    search_cost_rate
        Soft ceiling constant: median temperature-search cost should stay
        below search_cost_rate * log(n * max(q,2)/gamma).
    schedule_tau, schedule_lambda, schedule_nu
        Covering-schedule constants; e^nu/(tau lambda^3) ~ 2.73 so the
        inverse-weight bound 6 (n+1) rho holds with margin.
    dovetail_slice
        Nominal interleaving granularity (in draws) when racing two
        estimators; actual switching is per oracle call, see
        counts_integer.dovetail notes.
    """

    name: str
    calibration_scale: float
    product_rate: float
    trial_rate: float
    ratio_all_k1_rate: float
    ratio_all_k1_log: float
    ppe_k_rate: float
    counts_sample_rate: float
    search_budget_rate: float
    search_batch: int
    search_cost_rate: float
    schedule_tau: float = 0.45
    schedule_lambda: float = 0.95
    schedule_nu: float = 0.05
    dovetail_slice: int = 256

    def with_overrides(self, **kwargs) -> "ConstantsProfile":
        return replace(self, **kwargs)


PAPER = ConstantsProfile(
    name="paper",
    calibration_scale=1.0,
    product_rate=100.0,
    trial_rate=3.0,
    ratio_all_k1_rate=400.0,
    ratio_all_k1_log=30.0,
    ppe_k_rate=10.0,
    counts_sample_rate=1e8,
    search_budget_rate=40.0,
    search_batch=16,
    search_cost_rate=6000.0,
)

DESK = ConstantsProfile(
    name="desk",
    calibration_scale=0.5,
    product_rate=25.0,
    trial_rate=3.0,
    ratio_all_k1_rate=40.0,
    ratio_all_k1_log=30.0,
    ppe_k_rate=10.0,
    counts_sample_rate=30.0,
    search_budget_rate=40.0,
    search_batch=16,
    search_cost_rate=6000.0,
)

_PROFILES = {"paper": PAPER, "desk": DESK}


def get_profile(name: str | None = None) -> ConstantsProfile:
    """Look up a profile by name; None resolves via GIBBS_PROFILE, then desk."""
    if name is None:
        name = os.environ.get("GIBBS_PROFILE", "desk")
    try:
        return _PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown constants profile {name!r}; choose from {sorted(_PROFILES)}")
