"""Instance generators and combinatorial applications.

Synthetic families: the real-rooted polynomial family (log-concave by
construction), the adversarial lower-bound envelopes with their
indistinguishability diagnostic Psi, and an energy-rescaling transform.

Applications: matchings and spanning connected subgraphs of small graphs,
counted exactly by enumeration, turned into Gibbs instances with the
standard temperature-interval choices, plus a Metropolis chain oracle for
matchings validated against the exact law on small graphs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, EnumerationLimitError
from .instance import GibbsInstance, find_betamax
from .oracle import OracleHandle

__all__ = [
    "Graph",
    "complete_graph",
    "cycle_graph",
    "path_graph",
    "petersen_graph",
    "graph_from_edge_list",
    "graph_from_adjacency_json",
    "count_matchings",
    "count_connected_spanning_subgraphs",
    "matchings_instance",
    "connected_subgraphs_instance",
    "MatchingChainOracle",
    "js_matching_oracle",
    "InstanceFamily",
    "logconcave_poly_instance",
    "lower_bound_family",
    "rescale_instance",
    "logconcave_harmonic_check",
]


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Graph:
    """Simple undirected graph: vertex count plus a canonical edge tuple."""

    num_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set()
        canon = []
        for u, v in self.edges:
            if u == v:
                raise DomainError("self-loops are not allowed")
            if not (0 <= u < self.num_vertices and 0 <= v < self.num_vertices):
                raise DomainError("edge endpoint out of range")
            e = (min(u, v), max(u, v))
            if e in seen:
                raise DomainError("duplicate edge")
            seen.add(e)
            canon.append(e)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def is_connected(self) -> bool:
        if self.num_vertices == 0:
            return False
        adj = [[] for _ in range(self.num_vertices)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.num_vertices


def complete_graph(k: int) -> Graph:
    return Graph(k, tuple((i, j) for i in range(k) for j in range(i + 1, k)))


def cycle_graph(k: int) -> Graph:
    if k < 3:
        raise DomainError("cycles need at least 3 vertices")
    return Graph(k, tuple((i, (i + 1) % k) for i in range(k)))


def path_graph(k: int) -> Graph:
    return Graph(k, tuple((i, i + 1) for i in range(k - 1)))


def petersen_graph() -> Graph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Graph(10, tuple(outer + spokes + inner))


def graph_from_edge_list(text: str) -> Graph:
    """Parse `u v` per line, 0-indexed; blank lines and # comments skipped."""
    edges = []
    top = -1
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DomainError(f"bad edge line: {line!r}")
        u, v = int(parts[0]), int(parts[1])
        edges.append((u, v))
        top = max(top, u, v)
    return Graph(top + 1, tuple(edges))


def graph_from_adjacency_json(text: str) -> Graph:
    """Parse {"num_vertices": n, "adjacency": {"0": [1, 2], ...}}."""
    data = json.loads(text)
    n = int(data["num_vertices"])
    edges = set()
    for u_str, nbrs in data["adjacency"].items():
        u = int(u_str)
        for v in nbrs:
            edges.add((min(u, int(v)), max(u, int(v))))
    return Graph(n, tuple(sorted(edges)))


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------

def count_matchings(graph: Graph, enumerate_limit: int = 16) -> list[int]:
    """M_i = number of i-edge matchings, for i = 0..floor(V/2).

    Subset DP over used-vertex masks; exact integers.
    """
    if graph.num_vertices > enumerate_limit:
        raise EnumerationLimitError(
            f"{graph.num_vertices} vertices exceeds the enumeration limit {enumerate_limit}"
        )
    nv = graph.num_vertices
    adj_mask = [0] * nv
    for u, v in graph.edges:
        adj_mask[u] |= 1 << v
        adj_mask[v] |= 1 << u
    max_size = nv // 2

    @lru_cache(maxsize=None)
    def counts_from(used: int) -> tuple[int, ...]:
        v = None
        for i in range(nv):
            if not used & (1 << i):
                v = i
                break
        if v is None:
            return (1,) + (0,) * max_size
        total = list(counts_from(used | (1 << v)))  # v stays unmatched
        free_nbrs = adj_mask[v] & ~used
        w = free_nbrs
        while w:
            u_bit = w & -w
            w ^= u_bit
            sub = counts_from(used | (1 << v) | u_bit)
            for k in range(max_size):
                total[k + 1] += sub[k]
        return tuple(total)

    out = list(counts_from(0))
    counts_from.cache_clear()
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


def count_connected_spanning_subgraphs(graph: Graph, enumerate_limit: int = 18) -> list[int]:
    """N_i = number of connected spanning edge-subsets of size i, i = 0..|E|."""
    if not graph.is_connected():
        raise DomainError("graph must be connected")
    m = graph.num_edges
    if m > enumerate_limit:
        raise EnumerationLimitError(f"{m} edges exceeds the enumeration limit {enumerate_limit}")
    nv = graph.num_vertices
    edges = graph.edges
    out = [0] * (m + 1)
    min_size = nv - 1
    for mask in range(1 << m):
        size = bin(mask).count("1")
        if size < min_size:
            continue
        parent = list(range(nv))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        comps = nv
        mm = mask
        while mm:
            bit = mm & -mm
            mm ^= bit
            u, v = edges[bit.bit_length() - 1]
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                comps -= 1
        if comps == 1:
            out[size] += 1
    return out


# ---------------------------------------------------------------------------
# Graph instances
# ---------------------------------------------------------------------------

def matchings_instance(graph: Graph, enumerate_limit: int = 16):
    """Counts M_i and the Gibbs instance over matching sizes.

    Temperature interval: beta_min = -ln|E| and beta_max = ln f with
    f = M_{v-1}/M_v taken exactly from the enumeration.  Requires an even
    vertex count and a perfect matching.
    """
    if graph.num_vertices % 2 != 0:
        raise DomainError("matchings instance needs an even number of vertices")
    m_counts = count_matchings(graph, enumerate_limit)
    v = graph.num_vertices // 2
    if len(m_counts) <= v or m_counts[v] == 0:
        raise DomainError("graph has no perfect matching")
    f = m_counts[v - 1] / m_counts[v]
    beta_min = -math.log(graph.num_edges)
    beta_max = math.log(f)
    instance = GibbsInstance(
        np.arange(v + 1, dtype=float), np.asarray(m_counts, dtype=float), beta_min, beta_max
    )
    return m_counts, instance


def connected_subgraphs_instance(graph: Graph, enumerate_limit: int = 18):
    """Counts N_i and the Gibbs instance with c_i = N_{|E| - i}.

    n = |E| - |V| + 1; temperature interval [-ln|E|, ln|E|].
    """
    n_counts = count_connected_spanning_subgraphs(graph, enumerate_limit)
    m = graph.num_edges
    n = m - graph.num_vertices + 1
    counts = [n_counts[m - i] for i in range(n + 1)]
    instance = GibbsInstance(
        np.arange(n + 1, dtype=float),
        np.asarray(counts, dtype=float),
        -math.log(m),
        math.log(m),
    )
    return n_counts, instance


# ---------------------------------------------------------------------------
# Matchings Markov chain oracle
# ---------------------------------------------------------------------------

class MatchingChainOracle(OracleHandle):
    """Lazy Metropolis chain over matchings, stationary weight e^(beta |M|).

    Moves: add an edge, delete an edge, or slide a matched edge to an
    adjacent free vertex.  Each draw runs an independent chain from the
    empty matching for T(beta) = ceil(mixing_constant |E| |V|^2
    (1 + e^beta) ln(1/d_tv_target)) steps and reports the matching size.
    Cost counts draws, not chain steps.
    """

    def __init__(
        self,
        graph: Graph,
        mixing_constant: float,
        d_tv_target: float,
        seed: int,
        beta_min: float | None = None,
        beta_max: float | None = None,
    ):
        if not (0 < d_tv_target < 1):
            raise DomainError("d_tv_target must lie in (0, 1)")
        if graph.num_edges == 0:
            raise DomainError("graph must have at least one edge")
        v_top = graph.num_vertices // 2
        if beta_min is None:
            beta_min = -math.log(graph.num_edges)
        if beta_max is None:
            beta_max = math.log(graph.num_edges)
        super().__init__(np.arange(v_top + 1, dtype=float), beta_min, beta_max, seed, "js-chain")
        self.graph = graph
        self.mixing_constant = float(mixing_constant)
        self.d_tv_target = float(d_tv_target)
        self._eu = np.array([e[0] for e in graph.edges])
        self._ev = np.array([e[1] for e in graph.edges])

    def steps_per_draw(self, beta: float) -> int:
        g = self.graph
        return math.ceil(
            self.mixing_constant
            * g.num_edges
            * g.num_vertices**2
            * (1.0 + math.exp(beta))
            * math.log(1.0 / self.d_tv_target)
        )

    def _run_chains(self, beta: float, n_chains: int) -> np.ndarray:
        g = self.graph
        t_steps = self.steps_per_draw(beta)
        match = np.full((n_chains, g.num_vertices), -1, dtype=np.int64)
        rows = np.arange(n_chains)
        p_add = min(1.0, math.exp(beta))
        p_del = min(1.0, math.exp(-beta))
        for _ in range(t_steps):
            live = self.rng.random(n_chains) < 0.5  # lazy step
            e_idx = self.rng.integers(g.num_edges, size=n_chains)
            accept = self.rng.random(n_chains)
            u = self._eu[e_idx]
            v = self._ev[e_idx]
            mu = match[rows, u]
            mv = match[rows, v]
            in_match = mu == v
            both_free = (mu < 0) & (mv < 0)
            do_del = live & in_match & (accept < p_del)
            do_add = live & both_free & (accept < p_add)
            do_slide_u = live & (mu >= 0) & (mv < 0) & ~in_match
            do_slide_v = live & (mv >= 0) & (mu < 0) & ~in_match
            if do_del.any():
                r = rows[do_del]
                match[r, u[do_del]] = -1
                match[r, v[do_del]] = -1
            if do_add.any():
                r = rows[do_add]
                match[r, u[do_add]] = v[do_add]
                match[r, v[do_add]] = u[do_add]
            if do_slide_u.any():
                r = rows[do_slide_u]
                match[r, mu[do_slide_u]] = -1
                match[r, u[do_slide_u]] = v[do_slide_u]
                match[r, v[do_slide_u]] = u[do_slide_u]
            if do_slide_v.any():
                r = rows[do_slide_v]
                match[r, mv[do_slide_v]] = -1
                match[r, v[do_slide_v]] = u[do_slide_v]
                match[r, u[do_slide_v]] = v[do_slide_v]
        return (match >= 0).sum(axis=1) // 2

    def sample(self, beta: float) -> float:
        self._check_beta(beta)
        size = int(self._run_chains(beta, 1)[0])
        self._charge(1)
        return float(size)

    def sample_counts(self, beta: float, n_draws: int) -> np.ndarray:
        self._check_beta(beta)
        sizes = self._run_chains(beta, int(n_draws))
        counts = np.bincount(sizes, minlength=self.support.size).astype(float)
        self._charge(int(n_draws))
        return counts[: self.support.size]

    def sample_many(self, betas) -> np.ndarray:
        betas = np.asarray(betas, dtype=float)
        out = np.array([self._run_chains(float(b), 1)[0] for b in betas], dtype=float)
        self._charge(int(betas.size))
        return out

    def sample_indicator_sum(self, beta: float, n_draws: int, mask: np.ndarray) -> int:
        counts = self.sample_counts(beta, n_draws)
        return int(counts[mask].sum())

    def _make_child(self, label: str) -> "MatchingChainOracle":
        self._spawned += 1
        return MatchingChainOracle(
            self.graph,
            self.mixing_constant,
            self.d_tv_target,
            self.seed + 7919 * self._spawned,
            self.beta_min,
            self.beta_max,
        )


def js_matching_oracle(
    graph: Graph,
    mixing_constant: float = 1.0,
    d_tv_target: float = 0.05,
    seed: int = 0,
    beta_min: float | None = None,
    beta_max: float | None = None,
) -> MatchingChainOracle:
    return MatchingChainOracle(graph, mixing_constant, d_tv_target, seed, beta_min, beta_max)


# ---------------------------------------------------------------------------
# Synthetic families
# ---------------------------------------------------------------------------

def logconcave_poly_instance(m: int, q_target: float) -> GibbsInstance:
    """Counts = coefficients of x^m prod_{k<m} (e^k + x); n = 2m, beta_min = 0.

    The polynomial is real-rooted, so the counts are log-concave; the
    first m counts vanish, which the rescaling construction relies on.
    """
    if m < 1:
        raise DomainError("m must be at least 1")
    coeffs = np.array([1.0])
    for k in range(m):
        coeffs = np.convolve(coeffs, np.array([math.exp(k), 1.0]))
    counts = np.zeros(2 * m + 1)
    counts[m:] = coeffs
    support = np.arange(2 * m + 1, dtype=float)
    beta_max = find_betamax(counts, 0.0, q_target, support=support)
    return GibbsInstance(support, counts, 0.0, beta_max)


@dataclass
class InstanceFamily:
    """A target instance with its indistinguishability envelope.

    ``psi`` is the grid maximum of log U_beta(x) over the temperature
    interval, where U multiplies the likelihood ratios between the base
    and each alternate; it is a diagnostic only.
    """

    kind: str
    base: GibbsInstance
    alternates: list[GibbsInstance]
    psi: float


def _psi_grid(base: GibbsInstance, alternates, grid: int = 2001) -> float:
    betas = np.linspace(base.beta_min, base.beta_max, grid)

    def z_curve(inst):
        logits = inst.log_counts[None, :] + np.outer(betas, inst.support)
        m = logits.max(axis=1, keepdims=True)
        return (m[:, 0] + np.log(np.exp(logits - m).sum(axis=1)))

    z0 = z_curve(base)
    best = -math.inf
    for j, x in enumerate(base.support):
        if base.counts[j] == 0:
            continue
        total = np.zeros_like(betas)
        usable = True
        for alt in alternates:
            ja = int(np.searchsorted(alt.support, x))
            if ja >= alt.support.size or alt.support[ja] != x or alt.counts[ja] == 0:
                usable = False
                break
            total += (base.log_counts[j] - alt.log_counts[ja]) + (z_curve(alt) - z0)
        if usable:
            best = max(best, float(total.max()))
    return best


def lower_bound_family(kind: str, params: dict) -> InstanceFamily:
    """Adversarial families used as test fixtures.

    Kinds: ``delta-pair`` (two-point instance, scaled ground count),
    ``poly-envelope`` (log-concave polynomial with e^(+-k nu) tilts),
    ``integer-comb`` (dyadic comb with odd teeth nudged by e^(+-nu)),
    ``rescaled`` (another kind squeezed onto a two-unit energy range).
    """
    params = dict(params)
    if kind == "delta-pair":
        delta, eps, q = params["delta"], params["eps"], params["q"]
        support = np.array([0.0, 1.0])
        base_counts = np.array([2.0 * delta, 1.0])
        beta_max = find_betamax(base_counts, 0.0, q, support=support)
        base = GibbsInstance(support, base_counts, 0.0, beta_max)
        alts = [
            GibbsInstance(support, np.array([2.0 * delta * math.exp(s * 3.0 * eps), 1.0]), 0.0, beta_max)
            for s in (-1.0, 1.0)
        ]
        return InstanceFamily(kind, base, alts, _psi_grid(base, alts))
    if kind == "poly-envelope":
        m, nu, q = params["m"], params["nu"], params["q"]
        base = logconcave_poly_instance(m, q)
        alts = []
        for s in (-1.0, 1.0):
            counts = base.counts * np.exp(s * nu * base.support)
            alts.append(GibbsInstance(base.support, counts, base.beta_min, base.beta_max))
        return InstanceFamily(kind, base, alts, _psi_grid(base, alts))
    if kind == "integer-comb":
        m, delta, nu = params["m"], params["delta"], params["nu"]
        if m < 1:
            raise DomainError("m must be at least 1")
        n = 4 * m
        counts = np.zeros(n + 1)
        for i in range(m + 1):
            counts[2 * m + 2 * i] = 2.0 ** (-(i**2))
        for i in range(m):
            counts[2 * m + 2 * i + 1] = 8.0 * delta * 2.0 ** (-i - i**2)
        support = np.arange(n + 1, dtype=float)
        q = params.get("q", m * math.log(2.0) * m)
        beta_max = find_betamax(counts, 0.0, q, support=support)
        base = GibbsInstance(support, counts, 0.0, beta_max)
        alts = []
        for i in range(m):
            for s in (1.0, -1.0):
                c = counts.copy()
                c[2 * m + 2 * i + 1] *= math.exp(s * nu)
                alts.append(GibbsInstance(support, c, 0.0, beta_max))
        return InstanceFamily(kind, base, alts, _psi_grid(base, alts))
    if kind == "rescaled":
        inner = lower_bound_family(params["base"], params["params"])
        scale = params.get("scale", 1.0 / inner.base.n)
        base = rescale_instance(inner.base, scale)
        alts = [rescale_instance(a, scale) for a in inner.alternates]
        return InstanceFamily(kind, base, alts, _psi_grid(base, alts))
    raise DomainError(f"unknown family kind {kind!r}")


def rescale_instance(instance: GibbsInstance, scale: float) -> GibbsInstance:
    """Energy rescale x -> scale x, beta -> beta/scale; mu is invariant.

    Zero-count support points are dropped first, since the rescaled
    energies must still lie in {0} union [1, n'].
    """
    if scale <= 0:
        raise DomainError("scale must be positive")
    keep = instance.counts > 0
    support = instance.support[keep] * scale
    counts = instance.counts[keep]
    n_new = support[-1]
    for x in support:
        if x != 0.0 and not (1.0 <= x <= n_new):
            raise DomainError(f"rescaled energy {x} falls outside {{0}} union [1, n]")
    return GibbsInstance(support, counts, instance.beta_min / scale, instance.beta_max / scale)


def logconcave_harmonic_check(a) -> bool:
    """True iff a is nonnegative, log-concave, and a_k <= 1/k (1-indexed).

    Callers may then assert sum(a) < e.
    """
    a = [float(v) for v in a]
    if any(v < 0 for v in a):
        return False
    if any(v > 1.0 / (k + 1) for k, v in enumerate(a)):
        return False
    for k in range(1, len(a) - 1):
        if a[k] * a[k] < a[k - 1] * a[k + 1]:
            return False
    return True
