"""Batch experiment harness: config, oracles, reports, scaling sweeps.

Everything here is plumbing around the estimators: deterministic
multi-seed runs with coverage statistics against exact ground truth,
cost accounting from the oracle counters, and JSON/CSV report emission.
Reports are byte-identical across reruns of the same config and seeds;
wall-clock timing goes to a separate sidecar file for that reason.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .counts_continuous import pcoef_continuous
from .counts_integer import pcoef_integer, pcoef_logconcave, pratio_covering_schedule
from .errors import DomainError, GibbsError
from .instance import GibbsInstance, canonical_json, instance_from_json
from .instances import (
    Graph,
    complete_graph,
    connected_subgraphs_instance,
    cycle_graph,
    graph_from_adjacency_json,
    graph_from_edge_list,
    js_matching_oracle,
    logconcave_poly_instance,
    lower_bound_family,
    matchings_instance,
    path_graph,
    petersen_graph,
)
from .oracle import ExactOracle, OracleHandle, exact_oracle, tv_perturbed_oracle
from .pitable import pcount_violations
from .profiles import ConstantsProfile, get_profile
from .ratio import pratio_all
from .schedule import find_covering_schedule, schedule_is_proper
from .instance import find_betamax

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "UsageError",
    "OracleProcessError",
    "ExternalOracle",
    "run_experiment",
    "bench_scaling",
    "make_instance",
    "make_graph",
]

TASKS = (
    "ratio-all",
    "ratio-point",
    "counts-continuous",
    "counts-integer",
    "counts-logconcave",
    "schedule",
    "count-matchings",
    "count-subgraphs",
    "bench",
)


class UsageError(GibbsError):
    """Bad configuration; maps to exit code 64."""


class OracleProcessError(GibbsError):
    """External oracle process failed; maps to exit code 70."""


@dataclass
class ExperimentConfig:
    task: str
    instance_file: str | None = None
    gen: str | None = None
    eps: float = 0.3
    gamma: float = 0.25
    delta: float = 0.1
    seeds: list[int] = field(default_factory=lambda: [1])
    profile: str | None = None
    oracle: str = "exact"
    out_dir: str | None = None
    assert_mode: bool = False
    jobs: int = 1
    sweep: str | None = None
    estimator: str | None = None

    def validate(self) -> None:
        if self.task not in TASKS:
            raise UsageError(f"unknown task {self.task!r}; choose from {TASKS}")
        for name, v in (("eps", self.eps), ("gamma", self.gamma), ("delta", self.delta)):
            if not (0.0 < v < 1.0):
                raise UsageError(f"{name} must lie in (0, 1), got {v}")
        if not self.seeds:
            raise UsageError("need at least one seed")
        if self.instance_file is None and self.gen is None:
            raise UsageError("provide --instance or --gen")
        if self.jobs < 1:
            raise UsageError("jobs must be at least 1")

    def as_dict(self) -> dict:
        return {
            "task": self.task,
            "instance_file": self.instance_file,
            "gen": self.gen,
            "eps": self.eps,
            "gamma": self.gamma,
            "delta": self.delta,
            "seeds": list(self.seeds),
            "profile": self.profile,
            "oracle": self.oracle,
            "assert_mode": self.assert_mode,
            "jobs": self.jobs,
            "sweep": self.sweep,
            "estimator": self.estimator,
        }


@dataclass
class RunReport:
    config: dict
    version: str
    profile: dict
    per_seed: list
    aggregate: dict
    files: dict = field(default_factory=dict)
    wall_time_s: float = 0.0  # excluded from the deterministic JSON

    def to_json(self) -> str:
        return canonical_json(
            {
                "config": self.config,
                "version": self.version,
                "profile": self.profile,
                "per_seed": self.per_seed,
                "aggregate": self.aggregate,
            }
        )


# ---------------------------------------------------------------------------
# Instance / oracle resolution
# ---------------------------------------------------------------------------

_GRAPHS = {
    "k2": lambda: path_graph(2),
    "k3": lambda: complete_graph(3),
    "k4": lambda: complete_graph(4),
    "c4": lambda: cycle_graph(4),
    "c5": lambda: cycle_graph(5),
    "c6": lambda: cycle_graph(6),
    "petersen": petersen_graph,
}


def _parse_kv(text: str) -> dict:
    out = {}
    if not text:
        return out
    for part in text.split(","):
        key, _, val = part.partition("=")
        if not _:
            raise UsageError(f"bad generator parameter {part!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            out[key.strip()] = val.strip()
    return out


def make_graph(spec: str) -> Graph:
    name = spec.lower()
    if name in _GRAPHS:
        return _GRAPHS[name]()
    if name.startswith("complete-"):
        return complete_graph(int(name.split("-")[1]))
    if name.startswith("cycle-"):
        return cycle_graph(int(name.split("-")[1]))
    if name.startswith("path-"):
        return path_graph(int(name.split("-")[1]))
    raise UsageError(f"unknown graph {spec!r}")


def _resolve_graph(config: ExperimentConfig) -> Graph:
    if config.instance_file is not None:
        try:
            text = open(config.instance_file).read()
        except OSError as e:
            raise UsageError(f"cannot read graph file: {e}")
        if text.lstrip().startswith("{"):
            return graph_from_adjacency_json(text)
        return graph_from_edge_list(text)
    spec = config.gen or ""
    if ":" in spec:
        spec = spec.split(":", 1)[1]
    return make_graph(spec)


def make_instance(config: ExperimentConfig) -> GibbsInstance:
    """Resolve the instance from a file or a generator spec."""
    if config.task in ("count-matchings", "count-subgraphs"):
        graph = _resolve_graph(config)
        if config.task == "count-matchings":
            return matchings_instance(graph)[1]
        return connected_subgraphs_instance(graph)[1]
    if config.instance_file is not None:
        try:
            text = open(config.instance_file).read()
        except OSError as e:
            raise UsageError(f"cannot read instance file: {e}")
        return instance_from_json(text)
    spec = config.gen
    kind, _, rest = spec.partition(":")
    params = _parse_kv(rest)
    if kind == "instance-a":
        return GibbsInstance(
            np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0, 1.0]), 0.0, params.get("beta_max", 1.0)
        )
    if kind == "logconcave-poly":
        return logconcave_poly_instance(int(params["m"]), params.get("q", 6.0))
    if kind in ("delta-pair", "integer-comb", "poly-envelope"):
        fam_params = dict(params)
        if kind == "poly-envelope" or kind == "integer-comb":
            fam_params.setdefault("nu", 0.3)
            fam_params["m"] = int(fam_params.get("m", 2))
        if kind == "delta-pair":
            fam_params.setdefault("eps", 0.1)
            fam_params.setdefault("q", 5.0)
            fam_params.setdefault("delta", 0.1)
        return lower_bound_family(kind, fam_params).base
    if kind == "counts":
        counts = [float(v) for v in str(params["c"]).split("+")]
        q = params.get("q", 6.0)
        beta_max = find_betamax(counts, 0.0, q)
        return GibbsInstance(np.arange(len(counts), dtype=float), np.array(counts), 0.0, beta_max)
    if kind in ("matchings", "subgraphs"):
        graph = make_graph(str(params.get("graph", rest)))
        if kind == "matchings":
            return matchings_instance(graph)[1]
        return connected_subgraphs_instance(graph)[1]
    raise UsageError(f"unknown generator {spec!r}")


class ExternalOracle(OracleHandle):
    """Child-process sampler speaking the line protocol `SAMPLE <beta>` -> `<x>`.

    Metadata (support, temperature interval) comes from the declared
    instance; only the draws come from the child.
    """

    def __init__(self, command: str, instance: GibbsInstance, seed: int):
        super().__init__(instance.support, instance.beta_min, instance.beta_max, seed, "external")
        self.instance = instance
        try:
            self._proc = subprocess.Popen(
                command,
                shell=True,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise OracleProcessError(f"cannot start oracle command: {e}")
        self._command = command

    def _ask(self, beta: float) -> float:
        try:
            self._proc.stdin.write(f"SAMPLE {beta!r}\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as e:
            raise OracleProcessError(f"oracle process I/O failed: {e}")
        if not line:
            raise OracleProcessError("oracle process closed its output")
        try:
            return float(line.strip())
        except ValueError:
            raise OracleProcessError(f"oracle produced a non-numeric sample: {line!r}")

    def sample(self, beta: float) -> float:
        self._check_beta(beta)
        x = self._ask(beta)
        self._charge(1)
        return x

    def sample_many(self, betas) -> np.ndarray:
        out = np.array([self._ask(float(b)) for b in np.asarray(betas, float)])
        self._charge(out.size)
        return out

    def sample_counts(self, beta: float, n_draws: int) -> np.ndarray:
        self._check_beta(beta)
        counts = np.zeros(self.support.size)
        for _ in range(int(n_draws)):
            x = self._ask(beta)
            idx = int(np.searchsorted(self.support, x))
            if idx >= self.support.size or self.support[idx] != x:
                raise OracleProcessError(f"sample {x} is outside the declared support")
            counts[idx] += 1
        self._charge(int(n_draws))
        return counts

    def sample_indicator_sum(self, beta: float, n_draws: int, mask) -> int:
        counts = self.sample_counts(beta, n_draws)
        return int(counts[np.asarray(mask)].sum())

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            self._proc.wait(timeout=5)

    def _make_child(self, label: str) -> "ExternalOracle":
        self._spawned += 1
        return ExternalOracle(self._command, self.instance, self.seed + self._spawned)


def build_oracle(config: ExperimentConfig, instance: GibbsInstance, seed: int) -> OracleHandle:
    spec = config.oracle
    kind, _, rest = spec.partition(":")
    params = _parse_kv(rest) if kind != "external" else {}
    if kind == "exact":
        return exact_oracle(instance, seed)
    if kind == "tv-perturbed":
        base = exact_oracle(instance, seed)
        return tv_perturbed_oracle(
            base,
            float(params.get("d_tv", 0.01)),
            str(params.get("mode", "mass-shift-up")),
            seed + 1,
        )
    if kind == "js-chain":
        graph = make_graph(str(params.get("graph", "k4")))
        return js_matching_oracle(
            graph,
            float(params.get("mixing", 1.0)),
            float(params.get("d_tv", 0.05)),
            seed,
            beta_min=instance.beta_min,
            beta_max=instance.beta_max,
        )
    if kind == "external":
        return ExternalOracle(rest, instance, seed)
    raise UsageError(f"unknown oracle spec {spec!r}")


# ---------------------------------------------------------------------------
# Per-seed task runners
# ---------------------------------------------------------------------------

def _ratio_metrics(instance: GibbsInstance, estimator, grid_points: int = 50) -> dict:
    grid = np.linspace(instance.beta_min, instance.beta_max, grid_points)
    exact = np.array([instance.log_ratio(instance.beta_min, b) for b in grid])
    approx = np.array([estimator.query_log(b) for b in grid])
    return {"sup_log_error": float(np.max(np.abs(approx - exact)))}


def _run_one_seed(config: ExperimentConfig, instance: GibbsInstance, profile, seed: int) -> dict:
    oracle = build_oracle(config, instance, seed)
    task = config.task
    result: dict = {"seed": seed}
    try:
        if task in ("ratio-all", "ratio-point"):
            est = pratio_all(oracle, config.eps, config.gamma, profile)
            if task == "ratio-all":
                m = _ratio_metrics(instance, est)
                result["metrics"] = m
                result["success"] = m["sup_log_error"] <= config.eps
            else:
                err = abs(est.query_log(instance.beta_max) - instance.q)
                result["metrics"] = {"abs_log_error": err}
                result["success"] = err <= config.eps
            result["estimator"] = est.as_dict() if seed == config.seeds[0] else None
        elif task == "counts-continuous":
            table, trace = pcoef_continuous(oracle, config.delta, config.eps, config.gamma, profile)
            violations = pcount_violations(table, instance, config.delta, config.eps)
            result["metrics"] = {"violations": violations, "iterations": trace.T}
            result["success"] = not violations
            result["pi_table"] = table.as_dict() if seed == config.seeds[0] else None
        elif task in ("counts-integer", "counts-logconcave"):
            fn = pcoef_integer if task == "counts-integer" else pcoef_logconcave
            table = fn(oracle, config.delta, config.eps, config.gamma, profile)
            violations = pcount_violations(table, instance, config.delta, config.eps)
            result["metrics"] = {"violations": violations}
            result["success"] = not violations
            result["pi_table"] = table.as_dict() if seed == config.seeds[0] else None
        elif task == "schedule":
            sched = find_covering_schedule(oracle, config.gamma, profile)
            n = int(instance.n)
            bound = 6.0 * (n + 1) * instance.rho
            proper = schedule_is_proper(instance, sched)
            result["metrics"] = {
                "inv_weight": sched.inv_weight,
                "inv_weight_bound": bound,
                "segments": len(sched.segments),
                "proper": proper,
            }
            result["success"] = proper and sched.inv_weight <= bound
            result["schedule"] = sched.as_dict() if seed == config.seeds[0] else None
        elif task in ("count-matchings", "count-subgraphs"):
            result.update(_run_counting_seed(config, instance, profile, oracle))
        else:
            raise UsageError(f"task {task!r} is not a per-seed task")
    finally:
        result["cost"] = oracle.cost
        if isinstance(oracle, ExternalOracle):
            oracle.close()
    return result


def _run_counting_seed(config, instance, profile, oracle) -> dict:
    # estimate pi, normalize by the known unit count (index 0), compare
    inner_eps = 0.4 * config.eps
    delta = min(0.1 / max(instance.n, 1.0), 0.5)
    table = pcoef_logconcave(oracle, delta, inner_eps, config.gamma, profile)
    pi = table.pi_hat
    if pi[0] <= 0:
        return {"success": False, "metrics": {"error": "zero estimate at the unit count"}}
    log_c_hat = np.log(np.where(pi > 0, pi, 1.0)) - instance.beta_min * table.support
    log_c_hat -= log_c_hat[0]
    exact = np.log(instance.counts) - np.log(instance.counts[0])
    err = float(np.max(np.abs(log_c_hat - exact)))
    return {
        "success": err <= config.eps and bool(np.all(pi > 0)),
        "metrics": {"max_log_count_error": err},
        "counts_est": [float(v) for v in np.exp(log_c_hat)],
    }


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

def _coverage_threshold(gamma: float, n_seeds: int) -> float:
    se = math.sqrt(gamma * (1.0 - gamma) / n_seeds)
    return max(0.0, (1.0 - gamma) - 3.0 * se)


def run_experiment(config: ExperimentConfig) -> RunReport:
    config.validate()
    if config.task == "bench":
        return bench_scaling(config)
    t0 = time.monotonic()
    profile = get_profile(config.profile)
    instance = make_instance(config)

    def one(seed: int) -> dict:
        return _run_one_seed(config, instance, profile, seed)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(one, config.seeds))
    else:
        rows = [one(s) for s in config.seeds]
    rows.sort(key=lambda r: r["seed"])

    successes = [bool(r.get("success")) for r in rows]
    costs = [int(r["cost"]) for r in rows]
    coverage = sum(successes) / len(successes)
    threshold = _coverage_threshold(config.gamma, len(config.seeds))
    aggregate = {
        "coverage": coverage,
        "coverage_threshold": threshold,
        "assert_pass": coverage >= threshold,
        "mean_cost": float(np.mean(costs)),
        "median_cost": float(np.median(costs)),
        "total_cost": int(np.sum(costs)),
        "n_seeds": len(config.seeds),
    }
    report = RunReport(
        config=config.as_dict(),
        version=_version_string(),
        profile=_profile_echo(profile),
        per_seed=rows,
        aggregate=aggregate,
        wall_time_s=time.monotonic() - t0,
    )
    if config.out_dir:
        _write_outputs(report, config)
    return report


def _version_string() -> str:
    build = os.environ.get("GIBBS_BUILD", "")
    return f"gibbsim-{__version__}" + (f"+{build}" if build else "")


def _profile_echo(profile: ConstantsProfile) -> dict:
    return {k: getattr(profile, k) for k in profile.__dataclass_fields__}


def _write_outputs(report: RunReport, config: ExperimentConfig) -> None:
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out, "timing.txt"), "w") as fh:
        fh.write(f"wall_time_s={report.wall_time_s:.3f}\n")
    report.files["report"] = os.path.join(out, "report.json")
    first = report.per_seed[0] if report.per_seed else {}
    table = first.get("pi_table")
    if table:
        with open(os.path.join(out, "pi_table.csv"), "w") as fh:
            fh.write("x,pi_hat,u\n")
            for x, p, u in zip(table["support"], table["pi_hat"], table["u"]):
                fh.write(f"{x:.17g},{p:.17g},{u:.17g}\n")
        report.files["pi_table"] = os.path.join(out, "pi_table.csv")
    est = first.get("estimator")
    if est and est.get("variant") == "hybrid":
        tail = est["tail"]
        with open(os.path.join(out, "ratio_knots.csv"), "w") as fh:
            fh.write("beta,log_q_hat\n")
            for b, lq in zip(tail["knots"], tail["log_knots"]):
                fh.write(f"{b:.17g},{lq:.17g}\n")
        report.files["ratio_knots"] = os.path.join(out, "ratio_knots.csv")
    counts = first.get("counts_est")
    if counts:
        with open(os.path.join(out, "counts.csv"), "w") as fh:
            fh.write("i,count_est\n")
            for i, c in enumerate(counts):
                fh.write(f"{i},{c:.17g}\n")
        report.files["counts"] = os.path.join(out, "counts.csv")


# ---------------------------------------------------------------------------
# Scaling bench
# ---------------------------------------------------------------------------

def _sweep_instances(config: ExperimentConfig):
    """Yield (axis_value, instance) along the sweep axis."""
    axis, _, values_text = (config.sweep or "").partition(":")
    values = [float(v) for v in values_text.split(",") if v]
    if len(values) < 3:
        raise UsageError("sweep needs at least 3 points")
    base_counts = np.array([1.0, 2.0, 1.0])
    if axis == "q":
        for q in values:
            beta_max = find_betamax(base_counts, 0.0, q)
            yield q, GibbsInstance(np.arange(3.0), base_counts, 0.0, beta_max)
    elif axis == "n":
        for n in values:
            yield n, logconcave_poly_instance(max(1, int(n) // 2), 6.0)
    elif axis in ("eps", "delta"):
        instance = make_instance(config) if (config.gen or config.instance_file) else GibbsInstance(
            np.arange(3.0), base_counts, 0.0, find_betamax(base_counts, 0.0, 6.0)
        )
        for v in values:
            yield v, instance
    else:
        raise UsageError(f"unknown sweep axis {axis!r}")


def bench_scaling(config: ExperimentConfig) -> RunReport:
    """Run the chosen estimator along a sweep; fit the log-log cost slope."""
    config.validate()
    if not config.sweep:
        raise UsageError("bench requires --sweep axis:v1,v2,...")
    t0 = time.monotonic()
    profile = get_profile(config.profile)
    estimator = config.estimator or "ratio-all"
    axis = config.sweep.partition(":")[0]
    points = []
    for value, instance in _sweep_instances(config):
        costs = []
        for seed in config.seeds:
            oracle = exact_oracle(instance, seed)
            eps, delta = config.eps, config.delta
            if axis == "eps":
                eps = value
            if axis == "delta":
                delta = value
            if estimator == "ratio-all":
                pratio_all(oracle, eps, config.gamma, profile)
            elif estimator == "counts-integer":
                pcoef_integer(oracle, delta, eps, config.gamma, profile)
            elif estimator == "counts-logconcave":
                pcoef_logconcave(oracle, delta, eps, config.gamma, profile)
            elif estimator == "counts-continuous":
                pcoef_continuous(oracle, delta, eps, config.gamma, profile)
            elif estimator == "schedule-ratios":
                sched = find_covering_schedule(oracle, config.gamma, profile)
                pratio_covering_schedule(oracle, sched, eps, config.gamma, profile)
            else:
                raise UsageError(f"unknown bench estimator {estimator!r}")
            costs.append(oracle.cost)
        points.append({"value": value, "costs": costs, "mean_cost": float(np.mean(costs))})

    # transform the axis so the theory predicts slope ~1 (or monotone for delta)
    def axis_scale(v: float) -> float:
        if axis == "eps":
            return 1.0 / v**2
        if axis == "delta":
            return 1.0 / v
        return v

    xs = np.log([axis_scale(p["value"]) for p in points])
    ys = np.log([p["mean_cost"] for p in points])
    slope = float(np.polyfit(xs, ys, 1)[0])
    rng = np.random.default_rng(0)
    boot = []
    for _ in range(200):
        ys_b = np.log(
            [np.mean(rng.choice(p["costs"], size=len(p["costs"]), replace=True)) for p in points]
        )
        boot.append(float(np.polyfit(xs, ys_b, 1)[0]))
    ci = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5)))
    monotone = all(
        points[i]["mean_cost"] <= points[i + 1]["mean_cost"]
        for i in range(len(points) - 1)
        if axis_scale(points[i]["value"]) <= axis_scale(points[i + 1]["value"])
    )
    aggregate = {
        "axis": axis,
        "slope": slope,
        "slope_ci": ci,
        "monotone_increasing": monotone,
        "points": points,
        "estimator": estimator,
    }
    report = RunReport(
        config=config.as_dict(),
        version=_version_string(),
        profile=_profile_echo(profile),
        per_seed=[],
        aggregate=aggregate,
        wall_time_s=time.monotonic() - t0,
    )
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        with open(os.path.join(config.out_dir, "report.json"), "w") as fh:
            fh.write(report.to_json() + "\n")
        with open(os.path.join(config.out_dir, "timing.txt"), "w") as fh:
            fh.write(f"wall_time_s={report.wall_time_s:.3f}\n")
    return report
