"""Exact model of a Gibbs distribution over an explicit finite energy support.

The family is mu_beta(x) = c_x e^(beta x) / Z(beta) with Z(beta) =
sum_j c_j e^(beta x_j).  Energies live in {0} union [1, n]; counts c_j are
nonnegative reals (they need not be integers).  All partition arithmetic
is done in the log domain so instances with counts like 2^(-i^2) or e^(k)
neither underflow nor overflow.

Everything here is deterministic and exact up to floating point; the
sampling side lives in :mod:`gibbsim.oracle`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "GibbsInstance",
    "log_partition",
    "log_ratio",
    "induced_mu",
    "mean_energy",
    "energy_variance",
    "delta_max",
    "delta_argmax",
    "find_betamax",
    "instance_to_json",
    "instance_from_json",
    "canonical_json",
]


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        # all -inf, or a stray +inf/nan
        return float(m) if m == -np.inf else float(np.sum(np.exp(a)))
    return float(m + np.log(np.sum(np.exp(a - m))))


@dataclass(frozen=True)
class GibbsInstance:
    """Energy support, counts, and the admissible temperature interval.

    ``integer_setting`` and ``log_concave`` are always recomputed from the
    data in ``__post_init__``; caller-supplied flags are ignored.
    """

    support: np.ndarray
    counts: np.ndarray
    beta_min: float
    beta_max: float
    log_counts: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    integer_setting: bool = field(default=False, compare=False)
    log_concave: bool = field(default=False, compare=False)

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        object.__setattr__(self, "support", support)
        if support.ndim != 1 or support.size == 0:
            raise DomainError("support must be a nonempty 1-D sequence")
        if np.any(np.diff(support) <= 0):
            raise DomainError("support must be strictly increasing")

        if self.log_counts is not None and self.counts is None:
            log_counts = np.asarray(self.log_counts, dtype=float)
            counts = np.exp(log_counts)
        else:
            counts = np.asarray(self.counts, dtype=float)
            if np.any(counts < 0) or np.any(~np.isfinite(counts)):
                raise DomainError("counts must be finite and nonnegative")
            with np.errstate(divide="ignore"):
                log_counts = np.log(counts)
        if log_counts.shape != support.shape:
            raise DomainError("support and counts must have equal length")
        if not np.any(log_counts > -np.inf):
            raise DomainError("at least one count must be positive")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "log_counts", log_counts)

        n = float(support[-1])
        bad = (support != 0) & ((support < 1) | (support > n))
        if np.any(bad):
            raise DomainError("every energy must lie in {0} union [1, n]")
        if not (math.isfinite(self.beta_min) and math.isfinite(self.beta_max)):
            raise DomainError("beta_min and beta_max must be finite")
        if self.beta_min > self.beta_max:
            raise DomainError("beta_min must not exceed beta_max")

        is_int = float(n).is_integer() and all(float(x).is_integer() for x in support)
        object.__setattr__(self, "integer_setting", bool(is_int))
        object.__setattr__(self, "log_concave", bool(is_int and self._check_log_concave()))

    def _check_log_concave(self) -> bool:
        # Dense integer count vector: omitted integers are zero counts.
        dense = self.dense_counts()
        nz = np.flatnonzero(dense > 0)
        if nz.size == 0:
            return False
        lo, hi = nz[0], nz[-1]
        if np.any(dense[lo : hi + 1] <= 0):
            return False  # zero counts must form a contiguous outside block
        block = dense[lo : hi + 1]
        return bool(np.all(block[1:-1] ** 2 >= block[:-2] * block[2:]))

    # -- derived attributes -------------------------------------------------

    @property
    def n(self) -> float:
        """Largest energy value."""
        return float(self.support[-1])

    @property
    def rho(self) -> float:
        """Harmonic-sum bound: e when log-concave, else 1 + ln(n+1)."""
        if self.log_concave:
            return math.e
        return 1.0 + math.log(self.n + 1.0)

    def dense_counts(self) -> np.ndarray:
        """Counts on the full integer grid 0..n (integer setting only)."""
        if not all(float(x).is_integer() for x in self.support):
            raise DomainError("dense_counts requires an integer support")
        n = int(self.n)
        dense = np.zeros(n + 1)
        dense[self.support.astype(int)] = self.counts
        return dense

    def index_of(self, x: float) -> int:
        idx = int(np.searchsorted(self.support, x))
        if idx >= self.support.size or self.support[idx] != x:
            raise DomainError(f"energy {x!r} is not in the support")
        return idx

    # -- exact reference math ----------------------------------------------

    def log_partition(self, beta: float) -> float:
        if not math.isfinite(beta):
            raise DomainError("beta must be finite")
        return _logsumexp(self.log_counts + beta * self.support)

    def log_ratio(self, beta1: float, beta2: float) -> float:
        return self.log_partition(beta2) - self.log_partition(beta1)

    @property
    def q(self) -> float:
        """Log partition ratio over the full temperature interval."""
        return self.log_ratio(self.beta_min, self.beta_max)

    def induced_mu(self, beta: float) -> np.ndarray:
        if not math.isfinite(beta):
            raise DomainError("beta must be finite")
        logits = self.log_counts + beta * self.support
        logits = logits - np.max(logits[np.isfinite(logits)])
        w = np.exp(logits)
        return w / w.sum()

    def mu(self, beta: float, x: float) -> float:
        return float(self.induced_mu(beta)[self.index_of(x)])

    def mu_geq(self, beta: float, chi: float) -> float:
        """mu_beta of the energy set [chi, n]."""
        p = self.induced_mu(beta)
        return float(p[self.support >= chi].sum())

    def mu_less(self, beta: float, chi: float) -> float:
        """mu_beta of the energy set [0, chi)."""
        p = self.induced_mu(beta)
        return float(p[self.support < chi].sum())

    def mean_energy(self, beta: float) -> float:
        return float(np.dot(self.support, self.induced_mu(beta)))

    def energy_variance(self, beta: float) -> float:
        p = self.induced_mu(beta)
        m = float(np.dot(self.support, p))
        return float(np.dot((self.support - m) ** 2, p))

    def pi(self) -> np.ndarray:
        """Lower-normalized counts pi(x) = mu_{beta_min}(x)."""
        return self.induced_mu(self.beta_min)

    def delta_max(self, x: float, iters: int = 200) -> float:
        """max over beta in [beta_min, beta_max] of mu_beta(x).

        ln mu_beta(x) is concave in beta (its derivative x - z'(beta) is
        decreasing), so ternary search is exact up to tolerance.
        """
        return self._delta(x, iters)[1]

    def delta_argmax(self, x: float, iters: int = 200) -> float:
        return self._delta(x, iters)[0]

    def _delta(self, x: float, iters: int) -> tuple[float, float]:
        j = self.index_of(x)
        if self.counts[j] == 0.0:
            return self.beta_min, 0.0
        lo, hi = self.beta_min, self.beta_max

        def val(beta: float) -> float:
            return float(self.induced_mu(beta)[j])

        for _ in range(iters):
            if hi - lo <= 1e-13 * max(1.0, abs(hi), abs(lo)):
                break
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if val(m1) < val(m2):
                lo = m1
            else:
                hi = m2
        candidates = [self.beta_min, lo, 0.5 * (lo + hi), hi, self.beta_max]
        best = max(candidates, key=val)
        return best, val(best)


# -- module-level functional aliases (thin wrappers over the methods) --------

def log_partition(instance: GibbsInstance, beta: float) -> float:
    return instance.log_partition(beta)


def log_ratio(instance: GibbsInstance, beta1: float, beta2: float) -> float:
    return instance.log_ratio(beta1, beta2)


def induced_mu(instance: GibbsInstance, beta: float) -> np.ndarray:
    return instance.induced_mu(beta)


def mean_energy(instance: GibbsInstance, beta: float) -> float:
    return instance.mean_energy(beta)


def energy_variance(instance: GibbsInstance, beta: float) -> float:
    return instance.energy_variance(beta)


def delta_max(instance: GibbsInstance, x: float) -> float:
    return instance.delta_max(x)


def delta_argmax(instance: GibbsInstance, x: float) -> float:
    return instance.delta_argmax(x)


def find_betamax(
    counts,
    beta_min: float,
    q_target: float,
    support=None,
    tol: float = 1e-9,
) -> float:
    """Smallest beta_max with ln(Z(beta_max)/Z(beta_min)) = q_target.

    Bisection on the increasing map beta -> z(beta_min, beta).  The target
    is unreachable when fewer than two distinct energies carry positive
    counts, in which case q is identically zero.
    """
    counts = np.asarray(counts, dtype=float)
    if support is None:
        support = np.arange(counts.size, dtype=float)
    support = np.asarray(support, dtype=float)
    if q_target < 0:
        raise DomainError("q_target must be nonnegative")
    probe = GibbsInstance(support, counts, beta_min, beta_min)
    if q_target == 0.0:
        return beta_min
    if np.count_nonzero(counts) < 2:
        raise DomainError("q is constant: need two distinct energies with positive counts")

    def z(beta: float) -> float:
        return probe.log_partition(beta) - probe.log_partition(beta_min)

    hi = beta_min + 1.0
    step = 1.0
    while z(hi) < q_target:
        step *= 2.0
        hi = beta_min + step
        if step > 1e12:
            raise DomainError("q_target unreachable")
    lo = beta_min
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if z(mid) < q_target:
            lo = mid
        else:
            hi = mid
        if abs(z(hi) - q_target) <= tol and abs(z(lo) - q_target) <= tol:
            break
    return 0.5 * (lo + hi)


# -- serialization ------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""

    def emit(o) -> str:
        if isinstance(o, dict):
            items = sorted((str(k), v) for k, v in o.items())
            body = ",".join(f"{json.dumps(k)}:{emit(v)}" for k, v in items)
            return "{" + body + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            return "[" + ",".join(emit(v) for v in o) + "]"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return _fmt(o)
        if o is None:
            return "null"
        return json.dumps(o, ensure_ascii=False)

    return emit(obj)


def instance_to_json(instance: GibbsInstance) -> str:
    return canonical_json(
        {
            "support": instance.support,
            "counts": instance.counts,
            "beta_min": instance.beta_min,
            "beta_max": instance.beta_max,
        }
    )


def instance_from_json(text: str) -> GibbsInstance:
    data = json.loads(text)
    support = data["support"]
    if "counts" in data:
        counts = np.asarray(data["counts"], dtype=float)
        return GibbsInstance(np.asarray(support, float), counts, data["beta_min"], data["beta_max"])
    if "log_counts" in data:
        log_counts = np.asarray(data["log_counts"], dtype=float)
        return GibbsInstance(
            np.asarray(support, float),
            np.exp(log_counts),
            data["beta_min"],
            data["beta_max"],
        )
    raise DomainError("instance JSON needs 'counts' or 'log_counts'")
