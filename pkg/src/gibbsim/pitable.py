"""Count-estimate tables: pi_hat with error bars u, plus their contract check.

A table solves the count-estimation problem at (delta, eps) when, for
every energy x with c_x > 0, |pi_hat(x) - pi(x)| <= u(x) <= eps pi(x)
(1 + delta/Delta(x)), and pi_hat(x) = 0 whenever c_x = 0.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .instance import GibbsInstance

__all__ = ["PiTable", "pcount_violations"]


@dataclass
class PiTable:
    support: np.ndarray
    pi_hat: np.ndarray
    u: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        self.pi_hat = np.asarray(self.pi_hat, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if not (self.support.shape == self.pi_hat.shape == self.u.shape):
            raise DomainError("support, pi_hat, u must have equal length")
        if np.any(self.pi_hat < 0) or np.any(self.u < 0):
            raise DomainError("pi_hat and u must be nonnegative")

    def value(self, x: float) -> tuple[float, float]:
        idx = np.searchsorted(self.support, x)
        if idx >= self.support.size or self.support[idx] != x:
            raise DomainError(f"energy {x!r} not in the table")
        return float(self.pi_hat[idx]), float(self.u[idx])

    # -- serialization -------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,pi_hat,u\n")
        for x, p, e in zip(self.support, self.pi_hat, self.u):
            buf.write(f"{x:.17g},{p:.17g},{e:.17g}\n")
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "support": list(map(float, self.support)),
            "pi_hat": list(map(float, self.pi_hat)),
            "u": list(map(float, self.u)),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PiTable":
        d = json.loads(text)
        return cls(
            np.asarray(d["support"], float),
            np.asarray(d["pi_hat"], float),
            np.asarray(d["u"], float),
            d.get("meta", {}),
        )


def pcount_violations(
    table: PiTable,
    instance: GibbsInstance,
    delta: float,
    eps: float,
) -> list[str]:
    """Exact-model audit of the count-estimation contract; empty means it holds."""
    problems = []
    pi = instance.pi()
    for j, x in enumerate(instance.support):
        pi_hat, u = table.value(float(x))
        if instance.counts[j] == 0.0:
            if pi_hat != 0.0:
                problems.append(f"x={x}: pi_hat={pi_hat} but count is zero")
            continue
        delta_x = instance.delta_max(float(x))
        bound = eps * pi[j] * (1.0 + delta / delta_x)
        if abs(pi_hat - pi[j]) > u:
            problems.append(f"x={x}: |pi_hat - pi| = {abs(pi_hat - pi[j]):.3g} > u = {u:.3g}")
        if u > bound:
            problems.append(f"x={x}: u = {u:.3g} > eps pi (1 + delta/Delta) = {bound:.3g}")
    for x, pi_hat in zip(table.support, table.pi_hat):
        in_support = np.any(instance.support == x)
        if not in_support and pi_hat != 0.0:
            problems.append(f"x={x}: pi_hat={pi_hat} but energy not in support")
    return problems
