"""Covering schedules for integer-valued Gibbs distributions.

A segment (beta, [lo, hi], w) promises mass at least w at both finite
interval ends under mu_beta.  A covering schedule chains segments so that
consecutive temperatures share a high-probability energy, which is what
makes telescoping ratio estimation along the schedule possible.

Construction: seed segments at beta_min and beta_max, repeatedly fill the
widest-gap half-integer with a temperature found by noisy binary search
plus a FindInterval call that picks good interval ends from one
calibrated sample, prune to a minimal pre-schedule, then "uncross" it
into a covering schedule (or report BOT when verification fails).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ScheduleRetryError
from .instance import GibbsInstance
from .oracle import OracleHandle
from .profiles import ConstantsProfile, get_profile
from .sampling import sample_empirical
from .search import binary_search

__all__ = [
    "Segment",
    "CoveringSchedule",
    "BOT",
    "inv_weight",
    "span",
    "find_interval",
    "build_pre_schedule",
    "minimalize",
    "uncross_schedule",
    "find_covering_schedule",
    "validate_pre_schedule",
    "is_pre_schedule",
    "segment_is_proper",
    "schedule_is_proper",
    "segment_is_extremal",
]

NEG = -math.inf
POS = math.inf


class _Bot:
    """Verification-failure sentinel returned by uncross_schedule."""

    def __repr__(self) -> str:
        return "BOT"

    def __bool__(self) -> bool:
        return False


BOT = _Bot()


@dataclass(frozen=True)
class Segment:
    beta: float
    lo: float  # sigma-minus: integer or -inf
    hi: float  # sigma-plus: integer or +inf
    w: float
    context: str = field(default="", compare=False)

    def __post_init__(self):
        if self.lo > self.hi:
            raise DomainError("segment interval must satisfy lo <= hi")
        if not (0.0 < self.w <= 1.0):
            raise DomainError("segment weight must lie in (0, 1]")
        for v in (self.lo, self.hi):
            if math.isfinite(v) and not float(v).is_integer():
                raise DomainError("finite segment ends must be integers")


def span(lo: float, hi: float, n: int) -> int:
    """Number of integers of {0..n} inside [lo, hi]."""
    left = 0 if lo == NEG else max(0, int(lo))
    right = n if hi == POS else min(n, int(hi))
    return max(0, right - left + 1)


def inv_weight(schedule) -> float:
    """Sum of reciprocal segment weights."""
    segments = schedule.segments if isinstance(schedule, CoveringSchedule) else schedule
    segments = list(segments)
    if not segments:
        raise DomainError("empty schedule")
    return float(sum(1.0 / s.w for s in segments))


@dataclass(frozen=True)
class CoveringSchedule:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        validate_covering_schedule(list(self.segments))

    @property
    def betas(self) -> np.ndarray:
        return np.array([s.beta for s in self.segments])

    @property
    def inv_weight(self) -> float:
        return inv_weight(self.segments)

    @property
    def t(self) -> int:
        return len(self.segments) - 1

    def as_dict(self) -> dict:
        return {
            "segments": [
                {"beta": s.beta, "lo": s.lo, "hi": s.hi, "w": s.w} for s in self.segments
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CoveringSchedule":
        data = json.loads(text)
        return cls(
            tuple(Segment(d["beta"], d["lo"], d["hi"], d["w"]) for d in data["segments"])
        )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_pre_schedule(
    segments: list[Segment],
    beta_min: float,
    beta_max: float,
    n: int,
    require_cover: bool = True,
) -> None:
    """Raise DomainError unless the sequence satisfies the pre-schedule invariants.

    I1 temperatures nondecreasing from beta_min to beta_max; I2 interval
    ends nondecreasing with the stated sentinels; I3 equal consecutive
    temperatures share an end; I4 infinite ends only at the matching
    extreme temperature; I0 (optional) the intervals cover everything.
    """
    if not segments:
        raise DomainError("empty pre-schedule")
    betas = [s.beta for s in segments]
    los = [s.lo for s in segments]
    his = [s.hi for s in segments]
    if betas[0] != beta_min or betas[-1] != beta_max:
        raise DomainError("I1: temperatures must start at beta_min and end at beta_max")
    if any(b2 < b1 for b1, b2 in zip(betas, betas[1:])):
        raise DomainError("I1: temperatures must be nondecreasing")
    if los[0] != NEG or his[-1] != POS:
        raise DomainError("I2: first lo must be -inf and last hi must be +inf")
    if any(l2 < l1 for l1, l2 in zip(los, los[1:])) or any(
        h2 < h1 for h1, h2 in zip(his, his[1:])
    ):
        raise DomainError("I2: interval ends must be nondecreasing")
    if any(l != NEG and l > n for l in los) or any(h != POS and h < 0 for h in his):
        raise DomainError("I2: finite ends must lie in {0..n}")
    for s1, s2 in zip(segments, segments[1:]):
        if s1.beta == s2.beta and s1.lo != s2.lo and s1.hi != s2.hi:
            raise DomainError("I3: equal temperatures must share an interval end")
    for s in segments:
        if s.lo == NEG and s.beta != beta_min:
            raise DomainError("I4: lo = -inf requires beta = beta_min")
        if s.hi == POS and s.beta != beta_max:
            raise DomainError("I4: hi = +inf requires beta = beta_max")
    if require_cover:
        for s1, s2 in zip(segments, segments[1:]):
            if s1.hi < s2.lo:
                raise DomainError("I0: intervals leave a gap")


def is_pre_schedule(segments, beta_min, beta_max, n, require_cover=True) -> bool:
    try:
        validate_pre_schedule(list(segments), beta_min, beta_max, n, require_cover)
        return True
    except DomainError:
        return False


def validate_covering_schedule(segments: list[Segment]) -> None:
    if not segments:
        raise DomainError("empty covering schedule")
    betas = [s.beta for s in segments]
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise DomainError("covering schedule temperatures must strictly increase")
    if segments[0].lo != NEG or segments[-1].hi != POS:
        raise DomainError("covering schedule must run from -inf to +inf")
    for s in segments:
        if not s.lo < s.hi:
            raise DomainError("covering schedule intervals must be nondegenerate")
    for s1, s2 in zip(segments, segments[1:]):
        if s1.hi != s2.lo:
            raise DomainError("consecutive intervals must chain: hi_i == lo_{i+1}")


# ---------------------------------------------------------------------------
# Exact-model audits (test utilities)
# ---------------------------------------------------------------------------

def segment_is_proper(instance: GibbsInstance, seg: Segment) -> bool:
    mu = instance.induced_mu(seg.beta)
    for k in (seg.lo, seg.hi):
        if math.isfinite(k):
            idx = np.searchsorted(instance.support, k)
            mass = float(mu[idx]) if idx < instance.support.size and instance.support[idx] == k else 0.0
            if mass < seg.w:
                return False
    return True


def schedule_is_proper(instance: GibbsInstance, schedule) -> bool:
    segments = schedule.segments if isinstance(schedule, CoveringSchedule) else schedule
    return all(segment_is_proper(instance, s) for s in segments)


def segment_is_extremal(
    instance: GibbsInstance,
    seg: Segment,
    lam: float,
    tol: float = 1e-12,
) -> bool:
    """Exact check of the decay bounds outside the segment interval."""
    n = int(instance.n)
    mu_dense = np.zeros(n + 1)
    mu = instance.induced_mu(seg.beta)
    mu_dense[instance.support.astype(int)] = mu
    spn = span(seg.lo, seg.hi, n)
    ok = True
    if seg.lo != NEG:
        lo = int(seg.lo)
        for k in range(0, lo):
            bound = (spn / (spn + (lo - k))) * mu_dense[lo] / lam
            ok = ok and mu_dense[k] <= bound + tol
    if seg.hi != POS:
        hi = int(seg.hi)
        for k in range(hi + 1, n + 1):
            bound = (spn / (spn + (k - hi))) * mu_dense[hi] / lam
            ok = ok and mu_dense[k] <= bound + tol
    return ok


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _oracle_rho(oracle: OracleHandle) -> float:
    if getattr(oracle, "log_concave", False):
        return math.e
    return 1.0 + math.log(oracle.n + 1.0)


def find_interval(
    oracle: OracleHandle,
    beta: float,
    a_minus,
    a_plus,
    profile: ConstantsProfile | None = None,
    context: str = "",
) -> Segment:
    """Pick good interval ends around beta from one calibrated sample.

    ``a_minus`` and ``a_plus`` are contiguous candidate ranges (or the
    singleton sentinel {-inf} / {+inf} when the end is forced).  Scores
    bias the outermost candidates by a factor lambda to keep the
    extremality slack from compounding across insertions; argmax ties
    break to the smallest index.
    """
    a_minus = list(a_minus)
    a_plus = list(a_plus)
    if not a_minus or not a_plus:
        raise DomainError("candidate sets must be nonempty")
    profile = profile or get_profile()
    lam = profile.schedule_lambda
    tau = profile.schedule_tau
    n = int(oracle.n)
    rho = _oracle_rho(oracle)
    phi = tau * lam**3 / rho
    h_minus, a_m = min(a_minus), max(a_minus)
    a_p, h_plus = min(a_plus), max(a_plus)
    s = span(h_minus, h_plus, n)
    emp = sample_empirical(
        oracle,
        beta,
        (0.5 * math.log(1.0 / lam), 1.0 / (4.0 * (n + 2) ** 2), phi / s),
        profile,
    )

    def score_weight(i: float) -> float:
        return math.sqrt(lam) if i in (h_minus, h_plus) else lam**1.5

    if a_minus == [NEG]:
        k_minus = NEG
    else:
        best, k_minus = -1.0, a_minus[0]
        for i in a_minus:
            val = (a_m - i + 1.0) * score_weight(i) * emp.prob(i)
            if val > best:
                best, k_minus = val, i
    if a_plus == [POS]:
        k_plus = POS
    else:
        best, k_plus = -1.0, a_plus[0]
        for i in a_plus:
            val = (i - a_p + 1.0) * score_weight(i) * emp.prob(i)
            if val > best:
                best, k_plus = val, i
    return Segment(beta, k_minus, k_plus, phi / span(k_minus, k_plus, n), context)


def build_pre_schedule(
    oracle: OracleHandle,
    profile: ConstantsProfile | None = None,
) -> list[Segment]:
    """Grow segments until the intervals cover everything, then minimalize."""
    profile = profile or get_profile()
    if not getattr(oracle, "integer_setting", True):
        raise DomainError("pre-schedules require an integer-setting instance")
    n = int(oracle.n)
    tau = profile.schedule_tau
    bmin, bmax = oracle.beta_min, oracle.beta_max
    if bmin >= bmax:
        raise DomainError("pre-schedule construction needs beta_min < beta_max")
    h_all = list(range(n + 1))
    segs = [
        find_interval(oracle, bmin, [NEG], h_all, profile, context="seed-min"),
        find_interval(oracle, bmax, h_all, [POS], profile, context="seed-max"),
    ]
    validate_pre_schedule(segs, bmin, bmax, n, require_cover=False)
    for _ in range(2 * n + 8):
        gap_at = next(
            (i for i in range(len(segs) - 1) if segs[i].hi < segs[i + 1].lo), None
        )
        if gap_at is None:
            break
        left, right = segs[gap_at], segs[gap_at + 1]
        # lower median of the half-integers strictly inside the gap
        gap_points = [left.hi + 0.5 + j for j in range(int(right.lo - left.hi))]
        ell = gap_points[(len(gap_points) - 1) // 2]
        beta = binary_search(
            oracle, left.beta, right.beta, ell, 1.0 / (4.0 * max(n, 1)), tau, profile
        )
        lo_from = 0 if left.lo == NEG else int(left.lo)
        hi_to = n if right.hi == POS else int(right.hi)
        if beta == left.beta:
            a_minus: list = [left.lo]
            a_plus: list = list(range(math.ceil(ell), hi_to + 1))
        elif beta == right.beta:
            a_minus = list(range(lo_from, math.floor(ell) + 1))
            a_plus = [right.hi]
        else:
            a_minus = list(range(lo_from, math.floor(ell) + 1))
            a_plus = list(range(math.ceil(ell), hi_to + 1))
        seg = find_interval(oracle, beta, a_minus, a_plus, profile, context=f"gap@{ell}")
        segs.insert(gap_at + 1, seg)
        validate_pre_schedule(segs, bmin, bmax, n, require_cover=False)
    else:
        raise ScheduleRetryError("gap filling failed to converge")
    return minimalize(segs, bmin, bmax, n)


def minimalize(
    segments: list[Segment],
    beta_min: float,
    beta_max: float,
    n: int,
) -> list[Segment]:
    """Drop removable segments (left-to-right scan, restart after removal)."""
    validate_pre_schedule(list(segments), beta_min, beta_max, n)
    segs = list(segments)
    changed = True
    while changed:
        changed = False
        for i in range(len(segs)):
            trial = segs[:i] + segs[i + 1 :]
            if trial and is_pre_schedule(trial, beta_min, beta_max, n):
                segs = trial
                changed = True
                break
    # minimality forces strict interleaving and strictly increasing betas
    for s1, s2 in zip(segs, segs[1:]):
        if not (s1.lo < s2.lo <= s1.hi < s2.hi and s1.beta < s2.beta):
            raise DomainError("minimalization produced a non-interleaving sequence")
    return segs


def uncross_schedule(
    oracle: OracleHandle,
    preschedule: list[Segment],
    gamma: float,
    profile: ConstantsProfile | None = None,
):
    """Convert a minimal pre-schedule into a covering schedule, or BOT.

    Verifies with calibrated samples that consecutive segments share an
    energy carrying mass at least e^(-nu/2) w at both temperatures; on
    success scales all weights by e^(-nu) so the output is proper with
    probability at least 1 - gamma whenever the input was proper.
    """
    profile = profile or get_profile()
    nu = profile.schedule_nu
    n = int(oracle.n)
    segs = list(preschedule)
    validate_pre_schedule(segs, oracle.beta_min, oracle.beta_max, n)
    t = len(segs) - 1
    emps = [
        sample_empirical(
            oracle,
            s.beta,
            (nu / 2.0, gamma / (4.0 * (t + 1)), math.exp(-nu / 2.0) * s.w),
            profile,
        )
        for s in segs
    ]
    bridges = [NEG]
    for i in range(1, t + 1):
        prev, cur = segs[i - 1], segs[i]
        choice = None
        for k in (prev.hi, cur.lo):  # prefer the left segment's upper end
            if (
                emps[i - 1].prob(k) >= math.exp(-nu / 2.0) * prev.w
                and emps[i].prob(k) >= math.exp(-nu / 2.0) * cur.w
            ):
                choice = k
                break
        if choice is None:
            return BOT
        bridges.append(choice)
    bridges.append(POS)
    out = tuple(
        Segment(segs[i].beta, bridges[i], bridges[i + 1], math.exp(-nu) * segs[i].w)
        for i in range(t + 1)
    )
    return CoveringSchedule(out)


def find_covering_schedule(
    oracle: OracleHandle,
    gamma: float,
    profile: ConstantsProfile | None = None,
    max_retries: int = 64,
) -> CoveringSchedule:
    """Retry build + uncross until verification passes.

    The result is always structurally valid; it is proper with
    probability at least 1 - gamma, and its inverse weight is at most
    e^nu 2 (n+1)/phi <= 6 (n+1) rho under the default constants.
    """
    if not (0 < gamma < 1):
        raise DomainError("gamma must lie in (0, 1)")
    profile = profile or get_profile()
    for _ in range(max_retries):
        pre = build_pre_schedule(oracle, profile)
        out = uncross_schedule(oracle, pre, gamma / 4.0, profile)
        if out is not BOT:
            return out
    raise ScheduleRetryError(f"no covering schedule after {max_retries} attempts")
