"""Integer-setting estimators built on covering schedules.

Ratio estimation telescopes Bernoulli products along a covering schedule;
count estimation brackets each integer energy with a searched temperature
and reads its frequency there; the log-concave variant reads every energy
directly at its covering segment's temperature.  The all-temperatures
ratio estimator for integer instances is a zero-cost reduction from a
count table.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .oracle import OracleHandle
from .pitable import PiTable
from .profiles import ConstantsProfile, get_profile
from .ratio import RatioEstimator, pratio_all
from .sampling import bernoulli_source, estimate_pi, estimate_products, sample_empirical
from .schedule import CoveringSchedule, find_covering_schedule, inv_weight
from .search import binary_search

__all__ = [
    "ScheduleRatios",
    "pratio_covering_schedule",
    "pratio_points_dovetail",
    "pcoef_integer",
    "pcoef_logconcave",
    "pratio_all_integer",
    "UNKNOWN",
    "derive_ptcoef",
]


@dataclass
class ScheduleRatios:
    """Ratio estimates Q_hat(beta_i) at the knots of a covering schedule."""

    betas: np.ndarray
    q_hat: np.ndarray
    log_q_hat: np.ndarray
    provenance: str  # "direct" | "continuous"
    cost: int
    details: dict | None = None

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        self.q_hat = np.asarray(self.q_hat, dtype=float)
        self.log_q_hat = np.asarray(self.log_q_hat, dtype=float)
        if self.q_hat[0] != 1.0:
            raise DomainError("Q_hat at the first knot must equal 1")
        if np.any(self.q_hat < 0):
            raise DomainError("ratio estimates must be nonnegative")


def pratio_covering_schedule(
    oracle: OracleHandle,
    schedule: CoveringSchedule,
    eps: float,
    gamma: float,
    profile: ConstantsProfile | None = None,
) -> ScheduleRatios:
    """Telescoping Bernoulli products along the schedule.

    X_i indicates the shared energy hi_{i-1} under mu at beta_{i-1}, Y_i
    indicates lo_i under mu at beta_i; prefix products of their means
    recover Q(beta_i) up to the explicit exponential tilt.  If the
    schedule is proper, all knots are eps-estimates with probability at
    least 1 - gamma.
    """
    if not (0 < eps < 1 and 0 < gamma < 1):
        raise DomainError("eps and gamma must lie in (0, 1)")
    profile = profile or get_profile()
    segs = schedule.segments
    t = len(segs) - 1
    cost0 = oracle.cost
    x_sources = [
        bernoulli_source(oracle, segs[i - 1].beta, segs[i - 1].hi) for i in range(1, t + 1)
    ]
    y_sources = [bernoulli_source(oracle, segs[i].beta, segs[i].lo) for i in range(1, t + 1)]
    alpha = inv_weight(schedule)
    x_prod = estimate_products(x_sources, alpha, eps / 2.0, gamma / 2.0, profile)
    y_prod = estimate_products(y_sources, alpha, eps / 2.0, gamma / 2.0, profile)
    tilt = np.zeros(t + 1)
    for i in range(1, t + 1):
        tilt[i] = tilt[i - 1] + (segs[i].beta - segs[i - 1].beta) * segs[i].lo
    log_q = x_prod.log_values - y_prod.log_values + tilt
    with np.errstate(over="ignore"):
        q = np.exp(log_q)
    q[0] = 1.0
    return ScheduleRatios(
        betas=np.array([s.beta for s in segs]),
        q_hat=q,
        log_q_hat=log_q,
        provenance="direct",
        cost=oracle.cost - cost0,
    )


# ---------------------------------------------------------------------------
# Dovetailing
# ---------------------------------------------------------------------------

class _Aborted(Exception):
    pass


class _DovetailGate:
    """Keeps two racing branches' oracle spend within one slice of each other.

    Branches pre-request spending credit; a request is granted when it
    would not push the requester more than one slice past the other
    branch's spend, or when both branches are blocked, in which case the
    smaller anticipated spend goes first (ties to branch 0).  Credit is
    granted in geometrically growing chunks so negotiations are rare.
    The grant sequence depends only on the branches' deterministic call
    sequences, so the race outcome is reproducible.  When one branch
    finishes, the other is aborted at its next request.
    """

    def __init__(self, slice_size: int = 256):
        self._cond = threading.Condition()
        self._slice = max(1, int(slice_size))
        self.spent = [0, 0]
        self.pending = [None, None]
        self.done = [False, False]
        self.failed = [None, None]
        self.winner = None
        self.max_requested = [0, 0]

    def request(self, who: int, amount: int) -> int:
        """Block until `amount` draws may be spent; returns granted credit >= amount.

        Exactly one branch runs at a time (the other is parked here), so
        the interleaving is a pure function of the two call sequences.
        """
        other = 1 - who
        with self._cond:
            self.max_requested[who] = max(self.max_requested[who], amount)
            self.pending[who] = amount
            self._cond.notify_all()
            while True:
                if self.winner is not None and self.winner != who:
                    self.pending[who] = None
                    self._cond.notify_all()
                    raise _Aborted()
                if self.failed[other] is not None or self.done[other]:
                    granted = amount + (1 << 40)  # no competitor left
                    break
                theirs = self.pending[other]
                if theirs is not None and (self.spent[who] + amount, who) <= (
                    self.spent[other] + theirs,
                    other,
                ):
                    # my turn; take enough credit to amortize negotiations
                    granted = amount + self._slice + self.spent[other] // 8
                    break
                self._cond.wait()
            self.pending[who] = None
            self.spent[who] += granted
            self._cond.notify_all()
            return granted

    def finish(self, who: int) -> None:
        with self._cond:
            self.done[who] = True
            if self.winner is None:
                self.winner = who
            self._cond.notify_all()

    def fail(self, who: int, err: BaseException) -> None:
        with self._cond:
            self.failed[who] = err
            self._cond.notify_all()


class _GatedOracle:
    """Oracle facade that draws down gate credit before each call."""

    def __init__(self, inner: OracleHandle, gate: _DovetailGate, who: int):
        self._inner = inner
        self._gate = gate
        self._who = who
        self._credit = 0

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def _tick(self, amount: int) -> None:
        if amount > self._credit:
            self._credit += self._gate.request(self._who, amount - self._credit)
        self._credit -= amount

    def sample(self, beta):
        self._tick(1)
        return self._inner.sample(beta)

    def sample_many(self, betas):
        self._tick(len(betas))
        return self._inner.sample_many(betas)

    def sample_counts(self, beta, n_draws):
        self._tick(int(n_draws))
        return self._inner.sample_counts(beta, n_draws)

    def sample_counts_many(self, betas, n_draws):
        self._tick(len(betas) * int(n_draws))
        return self._inner.sample_counts_many(betas, n_draws)

    def counts_many_sampler(self, betas):
        inner_draw = self._inner.counts_many_sampler(betas)
        width = len(np.asarray(betas))

        def draw(r):
            self._tick(width * int(r))
            return inner_draw(r)

        return draw

    def sample_indicator_sum(self, beta, n_draws, mask):
        self._tick(int(n_draws))
        return self._inner.sample_indicator_sum(beta, n_draws, mask)


def pratio_points_dovetail(
    oracle: OracleHandle,
    schedule: CoveringSchedule,
    eps: float,
    gamma: float,
    profile: ConstantsProfile | None = None,
) -> ScheduleRatios:
    """Race the schedule-direct and continuous knot estimators; first one wins.

    Both run with failure budget gamma/2 on independently seeded child
    handles, interleaved per oracle call; the loser is abandoned, so the
    total cost is at most twice the winner's plus the loser's one
    in-flight call.
    """
    profile = profile or get_profile()
    gate = _DovetailGate()
    child_direct = oracle.spawn("dovetail-direct")
    child_cont = oracle.spawn("dovetail-continuous")
    results: list = [None, None]

    def run_direct():
        try:
            gated = _GatedOracle(child_direct, gate, 0)
            results[0] = pratio_covering_schedule(gated, schedule, eps, gamma / 2.0, profile)
            gate.finish(0)
        except _Aborted:
            pass
        except BaseException as e:  # noqa: BLE001 - reported via the gate
            gate.fail(0, e)

    def run_cont():
        try:
            gated = _GatedOracle(child_cont, gate, 1)
            estimator = pratio_all(gated, eps, gamma / 2.0, profile)
            betas = np.array([s.beta for s in schedule.segments])
            log_q = np.array([estimator.query_log(b) for b in betas])
            log_q = log_q - log_q[0]
            results[1] = ScheduleRatios(
                betas=betas,
                q_hat=np.exp(log_q),
                log_q_hat=log_q,
                provenance="continuous",
                cost=0,
            )
            gate.finish(1)
        except _Aborted:
            pass
        except BaseException as e:  # noqa: BLE001
            gate.fail(1, e)

    threads = [threading.Thread(target=run_direct), threading.Thread(target=run_cont)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for err in gate.failed:
        if err is not None and gate.winner is None:
            raise err
    who = gate.winner
    if who is None:
        raise DomainError("both dovetail branches failed")
    out = results[who]
    out.cost = child_direct.cost + child_cont.cost
    out.details = {
        "winner": out.provenance,
        "cost_direct": child_direct.cost,
        "cost_continuous": child_cont.cost,
        "max_loser_call": gate.max_requested[1 - who],
    }
    return out


# ---------------------------------------------------------------------------
# Count estimation
# ---------------------------------------------------------------------------

def _safe_estimate_pi(x, alpha, nu, q_hat, mu_hat, beta_min, eps, delta):
    if q_hat <= 0 or not math.isfinite(q_hat):
        return 0.0, math.inf  # upstream product estimate degenerated
    return estimate_pi(x, alpha, nu, q_hat, mu_hat, beta_min, eps, delta)


def pcoef_integer(
    oracle: OracleHandle,
    delta: float,
    eps: float,
    gamma: float,
    profile: ConstantsProfile | None = None,
) -> PiTable:
    """Count estimation for general integer-valued distributions.

    Bridges each searched temperature alpha to a covering-schedule knot
    through the shared energy k: when k is still visible at alpha the
    ratio Q_hat(alpha) is read off directly, otherwise the estimate falls
    back to the adjacent knot with the weight-based accuracy parameter.
    """
    if not (0 < delta < 1 and 0 < eps < 1 and 0 < gamma < 1):
        raise DomainError("delta, eps, gamma must lie in (0, 1)")
    if not getattr(oracle, "integer_setting", True):
        raise DomainError("pcoef_integer requires an integer-setting instance")
    profile = profile or get_profile()
    cost0 = oracle.cost
    n = int(oracle.n)
    schedule = find_covering_schedule(oracle, gamma / 10.0, profile)
    segs = schedule.segments
    t = len(segs) - 1
    if t < 1:
        raise DomainError("covering schedule must span a nondegenerate temperature interval")
    ratios = pratio_covering_schedule(oracle, schedule, 0.01 * eps, gamma / 10.0, profile)
    gamma_cell = gamma / (10.0 * (n + 1) ** 2)
    knot_emps = [
        sample_empirical(oracle, s.beta, (0.01 * eps, gamma_cell, s.w), profile) for s in segs
    ]
    pi_hat = np.zeros(n + 1)
    u = np.zeros(n + 1)
    for j in range(n + 1):
        alpha = binary_search(
            oracle, oracle.beta_min, oracle.beta_max, float(j), gamma_cell, 0.25, profile
        )
        i = int(np.searchsorted(ratios.betas, alpha, side="right")) - 1
        i = min(max(i, 0), t - 1)
        k = segs[i].hi  # == segs[i+1].lo
        emp_alpha = sample_empirical(oracle, alpha, (0.01 * eps, gamma_cell, delta / 4.0), profile)
        if emp_alpha.prob(k) >= delta:
            q_alpha = (
                knot_emps[i].prob(k)
                / emp_alpha.prob(k)
                * math.exp((alpha - segs[i].beta) * k)
                * ratios.q_hat[i]
            )
            pi_hat[j], u[j] = _safe_estimate_pi(
                float(j), alpha, 0.25, q_alpha, emp_alpha.prob(float(j)),
                oracle.beta_min, eps, delta,
            )
        elif j >= k:
            pi_hat[j], u[j] = _safe_estimate_pi(
                float(j), segs[i + 1].beta, segs[i + 1].w / (8.0 * delta),
                float(ratios.q_hat[i + 1]), knot_emps[i + 1].prob(float(j)),
                oracle.beta_min, eps, delta,
            )
        else:
            pi_hat[j], u[j] = _safe_estimate_pi(
                float(j), segs[i].beta, segs[i].w / (8.0 * delta),
                float(ratios.q_hat[i]), knot_emps[i].prob(float(j)),
                oracle.beta_min, eps, delta,
            )
    return PiTable(
        np.arange(n + 1, dtype=float),
        pi_hat,
        u,
        meta={
            "delta": delta,
            "eps": eps,
            "gamma": gamma,
            "profile": profile.name,
            "beta_min": oracle.beta_min,
            "beta_max": oracle.beta_max,
            "total_cost": oracle.cost - cost0,
            "estimator": "pcoef_integer",
        },
    )


def pcoef_logconcave(
    oracle: OracleHandle,
    delta: float,
    eps: float,
    gamma: float,
    profile: ConstantsProfile | None = None,
) -> PiTable:
    """Count estimation specialized to log-concave counts.

    Log-concavity lets one covering segment vouch for every energy inside
    its interval, so each energy is read at its segment's temperature; no
    per-energy temperature search is needed.
    """
    if not (0 < delta < 1 and 0 < eps < 1 and 0 < gamma < 1):
        raise DomainError("delta, eps, gamma must lie in (0, 1)")
    if not getattr(oracle, "log_concave", False):
        raise DomainError("pcoef_logconcave requires log-concave counts")
    profile = profile or get_profile()
    cost0 = oracle.cost
    n = int(oracle.n)
    schedule = find_covering_schedule(oracle, gamma / 6.0, profile)
    ratios = pratio_points_dovetail(oracle, schedule, 0.1 * eps, gamma / 6.0, profile)
    w_bound = inv_weight(schedule)
    terms = [delta, 1.0 / w_bound] + ([1.0 / n] if n >= 1 else [])
    delta = min(terms)
    segs = list(schedule.segments)
    segs[0] = replace(segs[0], w=min(segs[0].w, delta / 2.0))
    segs[-1] = replace(segs[-1], w=min(segs[-1].w, delta / 2.0))
    pi_hat = np.zeros(n + 1)
    u = np.zeros(n + 1)
    for i, seg in enumerate(segs):
        emp = sample_empirical(
            oracle, seg.beta, (0.01 * eps, gamma / (6.0 * (n + 1)), seg.w), profile
        )
        lo = -1 if seg.lo == -math.inf else int(seg.lo)
        hi = n if seg.hi == math.inf else int(seg.hi)
        for k in range(lo + 1, hi + 1):
            pi_hat[k], u[k] = _safe_estimate_pi(
                float(k), seg.beta, 0.25, float(ratios.q_hat[i]), emp.prob(float(k)),
                oracle.beta_min, eps, delta,
            )
    return PiTable(
        np.arange(n + 1, dtype=float),
        pi_hat,
        u,
        meta={
            "delta": delta,
            "eps": eps,
            "gamma": gamma,
            "profile": profile.name,
            "beta_min": oracle.beta_min,
            "beta_max": oracle.beta_max,
            "total_cost": oracle.cost - cost0,
            "estimator": "pcoef_logconcave",
        },
    )


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def pratio_all_integer(pi_table: PiTable) -> RatioEstimator:
    """Universal ratio estimator from a count table; zero oracle draws.

    Q_hat(alpha) = sum_i pi_hat(i) e^((alpha - beta_min) i).  Feeding a
    table from a (1/n, 0.1 eps) count run yields an eps-close estimator.
    """
    meta = pi_table.meta
    if "beta_min" not in meta or "beta_max" not in meta:
        raise DomainError("pi table lacks temperature-interval metadata")
    return RatioEstimator(
        variant="integer",
        beta_min=float(meta["beta_min"]),
        beta_max=float(meta["beta_max"]),
        eps=float(meta.get("eps", 0.0)),
        gamma=float(meta.get("gamma", 0.0)),
        build_cost=0,
        support=pi_table.support.copy(),
        pi_hat=pi_table.pi_hat.copy(),
    )


class _Unknown:
    def __repr__(self):
        return "UNKNOWN"


UNKNOWN = _Unknown()


def derive_ptcoef(pi_table: PiTable, eps: float) -> dict:
    """Pairwise-consistent count estimates from a count table; zero draws.

    Keeps pi_hat(x) where the error bar is tight (u <= 0.2 eps pi_hat and
    pi_hat > 0), marks the rest UNKNOWN.  All kept pairs then have count
    ratios within e^(+-eps) whenever the source table met its contract.
    """
    out: dict = {}
    for x, p, e in zip(pi_table.support, pi_table.pi_hat, pi_table.u):
        if p > 0 and e <= 0.2 * eps * p:
            out[float(x)] = float(p)
        else:
            out[float(x)] = UNKNOWN
    return out
