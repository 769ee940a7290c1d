"""Partition-ratio estimation at all temperatures (continuous setting).

``tpa`` runs the random descent whose recorded temperatures form a
rate-k Poisson point process on the log-partition axis.  ``ppe`` turns a
TPA-derived cooling schedule into knot estimates of Q via paired tilted
telescoping products.  ``pratio_all`` is the hybrid: raw TPA counting up
to the temperature where log Q reaches ~4, then a PPE estimator for the
remaining interval.  The result answers queries at every alpha in
[beta_min, beta_max] without further sampling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .oracle import OracleHandle
from .profiles import ConstantsProfile, get_profile
from .sampling import BatchedTiltSources, estimate_products

__all__ = ["tpa", "ppe", "pratio_all", "query_ratio", "RatioEstimator"]


def tpa(
    oracle: OracleHandle,
    k: int,
    beta_lo: float | None = None,
    beta_hi: float | None = None,
) -> np.ndarray:
    """Union of k independent descent runs; sorted ascending.

    One run: start at beta_hi; repeatedly draw K ~ mu_beta and U uniform,
    stop when K = 0 or the next temperature beta + ln(U)/K falls below
    beta_lo, else record it and continue.  The step ln(U)/K is what makes
    P[next <= b] = Z(b)/Z(beta), i.e. the recorded points' log-partition
    values a rate-1 Poisson process per run.  Recorded points always lie
    in [beta_lo, beta_hi] because U < 1 and energies are positive.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    lo = oracle.beta_min if beta_lo is None else float(beta_lo)
    hi = oracle.beta_max if beta_hi is None else float(beta_hi)
    if lo > hi:
        raise DomainError("invalid temperature interval")
    rng = oracle.spawn_rng("tpa-uniform")
    betas = np.full(k, hi)
    recorded: list[np.ndarray] = []
    while betas.size:
        ks = oracle.sample_many(betas)
        us = rng.random(betas.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = betas + np.log(us) / np.where(ks > 0, ks, 1.0)
        alive = (ks > 0) & (nxt >= lo)
        recorded.append(nxt[alive])
        betas = nxt[alive]
    return np.sort(np.concatenate(recorded)) if recorded else np.empty(0)


@dataclass
class RatioEstimator:
    """Data structure answering Q_hat(alpha) with zero further sampling.

    Variants:
      * ``ppe``: knots with log estimates, queried by linear
        interpolation of log Q (knot estimates made nondecreasing, which
        preserves closeness since Q is increasing);
      * ``hybrid``: TPA point counting below ``beta_mid``, nested ppe
        estimator above;
      * ``integer``: Q_hat(alpha) = sum_i pi_hat(i) e^((alpha-beta_min) i).
    """

    variant: str
    beta_min: float
    beta_max: float
    eps: float
    gamma: float
    build_cost: int = 0
    # ppe fields
    knots: np.ndarray | None = None
    log_knots: np.ndarray | None = None
    raw_log_knots: np.ndarray | None = field(default=None, repr=False)
    # hybrid fields
    tpa_points: np.ndarray | None = None
    k1: int | None = None
    beta_mid: float | None = None
    tail: "RatioEstimator | None" = None
    # integer fields
    support: np.ndarray | None = None
    pi_hat: np.ndarray | None = None

    def query_log(self, alpha: float) -> float:
        if not (self.beta_min <= alpha <= self.beta_max):
            raise DomainError("query alpha outside [beta_min, beta_max]")
        if self.variant == "ppe":
            return self._ppe_log(alpha)
        if self.variant == "hybrid":
            head = self._count_log(min(alpha, self.beta_mid))
            if alpha <= self.beta_mid:
                return head
            return self._count_log(self.beta_mid) + self.tail.query_log(alpha)
        if self.variant == "integer":
            logs = np.where(
                self.pi_hat > 0,
                np.log(np.where(self.pi_hat > 0, self.pi_hat, 1.0))
                + (alpha - self.beta_min) * self.support,
                -np.inf,
            )
            m = logs.max()
            return float(m + math.log(np.sum(np.exp(logs - m))))
        raise DomainError(f"unknown estimator variant {self.variant!r}")

    def query(self, alpha: float) -> float:
        return math.exp(self.query_log(alpha))

    def _ppe_log(self, alpha: float) -> float:
        knots, logq = self.knots, self.log_knots
        if alpha <= knots[0]:
            return float(logq[0])
        if alpha >= knots[-1]:
            return float(logq[-1])
        i = int(np.searchsorted(knots, alpha, side="right"))
        i = min(max(i, 1), knots.size - 1)
        b0, b1 = knots[i - 1], knots[i]
        if b1 == b0:
            return float(logq[i])
        x = (alpha - b0) / (b1 - b0)
        return float((1 - x) * logq[i - 1] + x * logq[i])

    def _count_log(self, alpha: float) -> float:
        # b(beta_min, alpha) over the half-open interval [beta_min, alpha)
        return float(np.searchsorted(self.tpa_points, alpha, side="left")) / self.k1

    # -- serialization -------------------------------------------------------

    def as_dict(self) -> dict:
        out = {
            "variant": self.variant,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "eps": self.eps,
            "gamma": self.gamma,
            "build_cost": self.build_cost,
        }
        if self.variant == "ppe":
            out["knots"] = list(map(float, self.knots))
            out["log_knots"] = list(map(float, self.log_knots))
            out["raw_log_knots"] = list(map(float, self.raw_log_knots))
        elif self.variant == "hybrid":
            out["tpa_points"] = list(map(float, self.tpa_points))
            out["k1"] = self.k1
            out["beta_mid"] = self.beta_mid
            out["tail"] = self.tail.as_dict()
        else:
            out["support"] = list(map(float, self.support))
            out["pi_hat"] = list(map(float, self.pi_hat))
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RatioEstimator":
        common = dict(
            variant=data["variant"],
            beta_min=data["beta_min"],
            beta_max=data["beta_max"],
            eps=data["eps"],
            gamma=data["gamma"],
            build_cost=data.get("build_cost", 0),
        )
        if data["variant"] == "ppe":
            return cls(
                **common,
                knots=np.asarray(data["knots"], float),
                log_knots=np.asarray(data["log_knots"], float),
                raw_log_knots=np.asarray(data["raw_log_knots"], float),
            )
        if data["variant"] == "hybrid":
            return cls(
                **common,
                tpa_points=np.asarray(data["tpa_points"], float),
                k1=int(data["k1"]),
                beta_mid=float(data["beta_mid"]),
                tail=cls.from_dict(data["tail"]),
            )
        return cls(
            **common,
            support=np.asarray(data["support"], float),
            pi_hat=np.asarray(data["pi_hat"], float),
        )

    @classmethod
    def from_json(cls, text: str) -> "RatioEstimator":
        return cls.from_dict(json.loads(text))


def ppe(
    oracle: OracleHandle,
    k: int,
    eps: float,
    gamma: float,
    profile: ConstantsProfile | None = None,
    beta_lo: float | None = None,
    beta_hi: float | None = None,
) -> RatioEstimator:
    """Paired Product Estimator over [beta_lo, beta_hi].

    Draws TPA(k d) with d = ceil(ln(2/gamma)), keeps every d-th sorted
    point from a uniform offset as the cooling schedule, and estimates
    Q at the knots by two telescoping products of the tilted variables
    W_i = exp(+(gap/2) K) at the left knot and V_i = exp(-(gap/2) K) at
    the right knot.  For k >= 10 ln(z'(hi)/z'(lo)) / eps^2 the result is
    eps-close with probability at least 1 - gamma.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    if not (0 < eps < 1 and 0 < gamma < 1):
        raise DomainError("eps and gamma must lie in (0, 1)")
    profile = profile or get_profile()
    lo = oracle.beta_min if beta_lo is None else float(beta_lo)
    hi = oracle.beta_max if beta_hi is None else float(beta_hi)
    cost0 = oracle.cost
    d = max(1, math.ceil(math.log(2.0 / gamma)))
    pts = tpa(oracle, k * d, lo, hi)
    offset = int(oracle.spawn_rng("ppe-offset").integers(d)) if pts.size else 0
    knots = np.concatenate(([lo], pts[offset::d], [hi]))
    gaps = np.diff(knots)
    w_sources = BatchedTiltSources(oracle, knots[:-1], gaps / 2.0)
    v_sources = BatchedTiltSources(oracle, knots[1:], -gaps / 2.0)
    w_prod = estimate_products(w_sources, 2.0 * eps**2, eps / 4.0, gamma / 4.0, profile)
    v_prod = estimate_products(v_sources, 2.0 * eps**2, eps / 4.0, gamma / 4.0, profile)
    raw_log = w_prod.log_values - v_prod.log_values
    log_knots = np.maximum.accumulate(raw_log)
    return RatioEstimator(
        variant="ppe",
        beta_min=lo,
        beta_max=hi,
        eps=eps,
        gamma=gamma,
        build_cost=oracle.cost - cost0,
        knots=knots,
        log_knots=log_knots,
        raw_log_knots=raw_log,
    )


def pratio_all(
    oracle: OracleHandle,
    eps: float,
    gamma: float,
    profile: ConstantsProfile | None = None,
) -> RatioEstimator:
    """Universal ratio estimator for the continuous setting.

    With probability at least 1 - gamma, every query alpha satisfies
    |ln Q_hat(alpha) - ln Q(alpha)| <= eps simultaneously.
    """
    if not (0 < eps < 1 and 0 < gamma < 1):
        raise DomainError("eps and gamma must lie in (0, 1)")
    profile = profile or get_profile()
    cost0 = oracle.cost
    k1 = math.ceil(profile.ratio_all_k1_rate / eps**2 * math.log(profile.ratio_all_k1_log / gamma))
    points = tpa(oracle, k1)
    if points.size >= 4 * k1:
        beta_mid = float(points[4 * k1 - 1])
    else:
        beta_mid = oracle.beta_max
    k2 = math.ceil(profile.ppe_k_rate * (1.0 + math.log(max(oracle.n, 1.0))) / eps**2)
    tail = ppe(oracle, k2, eps / 2.0, gamma / 2.0, profile, beta_lo=beta_mid, beta_hi=oracle.beta_max)
    return RatioEstimator(
        variant="hybrid",
        beta_min=oracle.beta_min,
        beta_max=oracle.beta_max,
        eps=eps,
        gamma=gamma,
        build_cost=oracle.cost - cost0,
        tpa_points=points,
        k1=k1,
        beta_mid=beta_mid,
        tail=tail,
    )


def query_ratio(estimator: RatioEstimator, alpha: float) -> float:
    """Q_hat(alpha); performs no sampling."""
    return estimator.query(alpha)
