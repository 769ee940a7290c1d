"""Sampling oracles: beta -> x ~ mu_beta, with a monotone cost counter.

The cost model counts *draws*, never arithmetic: a batched request of N
draws costs exactly N.  Batched draws are returned as a frequency vector
aligned with the oracle's support (one multinomial), which is what every
calibrated-sampling routine consumes; estimators that need individual
values use :meth:`OracleHandle.sample` or :meth:`sample_many`.

Each handle owns one RNG stream derived from (seed, label); child handles
and auxiliary streams are derived with a spawn counter so the same call
sequence is bit-reproducible.
"""

from __future__ import annotations

import math
import threading
from typing import Sequence

import numpy as np

from .errors import DomainError
from .instance import GibbsInstance
from .rng import make_rng

__all__ = ["OracleHandle", "ExactOracle", "TVPerturbedOracle", "exact_oracle", "tv_perturbed_oracle"]


class OracleHandle:
    """Base class: cost accounting, metadata, and derived RNG streams.

    Subclasses implement :meth:`_distribution`, giving the sampled law at
    a query beta over ``support``.  ``cost`` increases by exactly the
    number of draws performed, and is also mirrored into the parent
    handle's counter when the handle was spawned from another.
    """

    def __init__(self, support, beta_min: float, beta_max: float, seed: int, label: str = "oracle"):
        self.support = np.asarray(support, dtype=float)
        self.beta_min = float(beta_min)
        self.beta_max = float(beta_max)
        self.seed = int(seed)
        self.label = str(label)
        self.cost = 0
        self.rng = make_rng(self.seed, self.label)
        self._spawned = 0
        self._parent: OracleHandle | None = None
        self._cost_lock = threading.Lock()
        self._dist_cache_beta: float | None = None
        self._dist_cache: np.ndarray | None = None

    # -- to be provided by subclasses ---------------------------------------

    def _distribution(self, beta: float) -> np.ndarray:
        raise NotImplementedError

    # -- metadata ------------------------------------------------------------

    @property
    def n(self) -> float:
        return float(self.support[-1])

    def _charge(self, k: int) -> None:
        with self._cost_lock:
            self.cost += k
        if self._parent is not None:
            self._parent._charge(k)

    def _check_beta(self, beta: float) -> None:
        if not math.isfinite(beta):
            raise DomainError("query beta must be finite")

    def _dist(self, beta: float) -> np.ndarray:
        if self._dist_cache_beta != beta:
            self._dist_cache = self._distribution(beta)
            self._dist_cache_beta = beta
        return self._dist_cache

    # -- draw API --------------------------------------------------------------

    def sample(self, beta: float) -> float:
        """One draw; returns the energy value."""
        self._check_beta(beta)
        p = self._dist(beta)
        u = self.rng.random()
        idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
        idx = min(idx, p.size - 1)
        self._charge(1)
        return float(self.support[idx])

    def sample_many(self, betas: Sequence[float]) -> np.ndarray:
        """One draw at each beta in the batch (len(betas) draws total)."""
        betas = np.asarray(betas, dtype=float)
        if betas.size == 0:
            return np.empty(0)
        if np.any(~np.isfinite(betas)):
            raise DomainError("query beta must be finite")
        out = np.empty(betas.size)
        for i, b in enumerate(betas):
            p = self._dist(float(b))
            u = self.rng.random()
            idx = min(int(np.searchsorted(np.cumsum(p), u, side="right")), p.size - 1)
            out[i] = self.support[idx]
        self._charge(int(betas.size))
        return out

    def sample_counts(self, beta: float, n_draws: int) -> np.ndarray:
        """Frequency vector (aligned with support) of n_draws i.i.d. draws."""
        if n_draws < 0:
            raise DomainError("n_draws must be nonnegative")
        self._check_beta(beta)
        p = self._dist(beta)
        counts = self.rng.multinomial(int(n_draws), p)
        self._charge(int(n_draws))
        return counts.astype(float)

    def sample_indicator_sum(self, beta: float, n_draws: int, mask: np.ndarray) -> int:
        """Number of draws landing in the masked energy set (binomial shortcut)."""
        if n_draws < 0:
            raise DomainError("n_draws must be nonnegative")
        self._check_beta(beta)
        p = float(self._dist(beta)[mask].sum())
        hits = int(self.rng.binomial(int(n_draws), min(max(p, 0.0), 1.0)))
        self._charge(int(n_draws))
        return hits

    def sample_counts_many(self, betas: Sequence[float], n_draws: int) -> np.ndarray:
        """Row-stacked frequency vectors: n_draws i.i.d. draws at each beta.

        Costs len(betas) * n_draws draws.  The generic implementation
        loops; instance-backed oracles vectorize.
        """
        return self.counts_many_sampler(betas)(n_draws)

    def counts_many_sampler(self, betas: Sequence[float]):
        """Reusable batch sampler for a fixed beta vector.

        Returns draw(r) -> (len(betas), support) frequency matrix of r
        i.i.d. draws per row, charging len(betas) * r per call.  Lets
        repeated trials over one cooling schedule amortize the
        distribution setup.
        """
        betas = np.asarray(betas, dtype=float)

        def draw(r: int) -> np.ndarray:
            out = np.empty((betas.size, self.support.size))
            for i, b in enumerate(betas):
                out[i] = self.rng.multinomial(int(r), self._dist(float(b)))
            self._charge(int(betas.size) * int(r))
            return out

        return draw

    # -- streams and children ----------------------------------------------

    def spawn_rng(self, label: str) -> np.random.Generator:
        """Auxiliary stream, independent of the draw stream, reproducible per call order."""
        self._spawned += 1
        return make_rng(self.seed, self.label, label, f"#{self._spawned}")

    def spawn(self, label: str) -> "OracleHandle":
        """Child handle over the same law; its draws also charge this handle."""
        child = self._make_child(label)
        child._parent = self
        return child

    def _make_child(self, label: str) -> "OracleHandle":
        raise NotImplementedError


class ExactOracle(OracleHandle):
    """Simulates the exact induced Gibbs law of a GibbsInstance."""

    def __init__(self, instance: GibbsInstance, seed: int, label: str = "exact"):
        super().__init__(instance.support, instance.beta_min, instance.beta_max, seed, label)
        self.instance = instance

    def _distribution(self, beta: float) -> np.ndarray:
        return self.instance.induced_mu(beta)

    def distributions(self, betas: np.ndarray) -> np.ndarray:
        """Row-stacked mu_beta for a batch of betas (no draws, no cost)."""
        logits = self.instance.log_counts[None, :] + np.outer(betas, self.instance.support)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return w / w.sum(axis=1, keepdims=True)

    def sample_many(self, betas: Sequence[float]) -> np.ndarray:
        betas = np.asarray(betas, dtype=float)
        if betas.size == 0:
            return np.empty(0)
        if np.any(~np.isfinite(betas)):
            raise DomainError("query beta must be finite")
        # fused unnormalized-cdf inverse sampling; one draw per row
        logits = self.instance.log_counts + betas[:, None] * self.instance.support
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        np.cumsum(logits, axis=1, out=logits)
        u = self.rng.random(betas.size) * logits[:, -1]
        idx = (logits < u[:, None]).sum(axis=1)
        idx = np.minimum(idx, self.support.size - 1)
        self._charge(int(betas.size))
        return self.support[idx]

    def counts_many_sampler(self, betas: Sequence[float]):
        # one batched multinomial over row-stacked laws; the row
        # distributions are computed once and shared across calls
        betas = np.asarray(betas, dtype=float)
        if np.any(~np.isfinite(betas)):
            raise DomainError("query beta must be finite")
        probs = self.distributions(betas) if betas.size else np.empty((0, self.support.size))
        probs = probs / probs.sum(axis=1, keepdims=True) if betas.size else probs

        def draw(r: int) -> np.ndarray:
            if betas.size == 0:
                return np.empty((0, self.support.size))
            counts = self.rng.multinomial(int(r), probs)
            self._charge(int(betas.size) * int(r))
            return counts.astype(float)

        return draw

    def _make_child(self, label: str) -> "ExactOracle":
        self._spawned += 1
        return ExactOracle(self.instance, self.seed, f"{self.label}/{label}#{self._spawned}")

    @property
    def integer_setting(self) -> bool:
        return self.instance.integer_setting

    @property
    def log_concave(self) -> bool:
        return self.instance.log_concave


class TVPerturbedOracle(OracleHandle):
    """Wraps an instance-backed oracle, moving d_tv mass between two energies.

    The perturbed law has total-variation distance exactly ``d_tv`` from
    mu_beta whenever the donor point carries enough mass; otherwise the
    shift is clipped and ``clipped`` is set.  Modes:

    - ``mass-shift-up``: move mass from the lowest to the highest energy;
    - ``mass-shift-down``: the reverse;
    - ``random-pair``: donor/receiver drawn once at construction.
    """

    MODES = ("mass-shift-up", "mass-shift-down", "random-pair")

    def __init__(self, base: OracleHandle, d_tv: float, mode: str, seed: int):
        if not 0.0 <= d_tv <= 1.0:
            raise DomainError("d_tv must lie in [0, 1]")
        if mode not in self.MODES:
            raise DomainError(f"mode must be one of {self.MODES}")
        if not hasattr(base, "instance"):
            raise DomainError("base oracle must expose its instance (exact oracle)")
        super().__init__(base.support, base.beta_min, base.beta_max, seed, f"tv({base.label})")
        self.instance = base.instance
        self.base = base
        self.d_tv = float(d_tv)
        self.mode = mode
        self.clipped = False
        s = self.support.size
        if mode == "mass-shift-up":
            self.src, self.dst = 0, s - 1
        elif mode == "mass-shift-down":
            self.src, self.dst = s - 1, 0
        else:
            pick = make_rng(seed, "tv-pair")
            self.src, self.dst = map(int, pick.choice(s, size=2, replace=False))

    def _distribution(self, beta: float) -> np.ndarray:
        p = self.instance.induced_mu(beta).copy()
        amount = min(self.d_tv, float(p[self.src]))
        if amount < self.d_tv:
            self.clipped = True
        p[self.src] -= amount
        p[self.dst] += amount
        return p

    def achieved_tv(self, beta: float) -> float:
        p = self.instance.induced_mu(beta)
        q = self._dist(beta)
        return 0.5 * float(np.abs(p - q).sum())

    @property
    def integer_setting(self) -> bool:
        return self.instance.integer_setting

    @property
    def log_concave(self) -> bool:
        return self.instance.log_concave

    def _make_child(self, label: str) -> "TVPerturbedOracle":
        self._spawned += 1
        child = TVPerturbedOracle(self.base, self.d_tv, self.mode, self.seed + self._spawned)
        # keep the same perturbation pair for random-pair children
        child.src, child.dst = self.src, self.dst
        return child


def exact_oracle(instance: GibbsInstance, seed: int, label: str = "exact") -> ExactOracle:
    return ExactOracle(instance, seed, label)


def tv_perturbed_oracle(base: OracleHandle, d_tv: float, mode: str, seed: int) -> TVPerturbedOracle:
    return TVPerturbedOracle(base, d_tv, mode, seed)
