"""Benchmark harness: query partitioning, evidence drawing, ranking, CSV.

A benchmark run crosses circuits x query proportions x trials.  Each trial
partitions the variables, draws evidence, builds a fresh oracle per method
(timing includes oracle construction, excludes parsing) and ranks the
methods by the re-scored probability of their answers using competition
ranking.  Everything is keyed off counter-based streams derived from
(master seed, circuit, proportion, trial, method name), so a config runs to
identical records regardless of scheduling or method subsets.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .baselines import arg_max_product, independent_map, max_product
from .circuit import Circuit, evaluate_marginal, generate_random_circuit, load_circuit
from .inference import QuerySpec, ZeroEvidenceError, make_oracle, sample_joint
from .rng import DrawStream, as_stream, derive_seed
from .solvers import Budget, DeterministicEps, Exact, Pac, PacParams, budget_pac_map, naive_map, pac_map, pareto_delta, smooth_pac_map

ALL_METHODS = ("pac", "smooth", "budget", "naive", "mp", "amp", "ind")
DEFAULT_METHODS = ("pac", "smooth", "mp", "amp", "ind")

CSV_COLUMNS = (
    "dataset",
    "trial",
    "query_prop",
    "method",
    "log_p_hat",
    "rank",
    "runtime_ms",
    "cert",
    "epsilon",
    "delta",
    "draws",
    "timed_out",
)


@dataclass(frozen=True)
class BenchConfig:
    circuits: tuple[str, ...]
    query_proportions: tuple[float, ...] = (0.10, 0.25, 0.50)
    trials: int = 10
    methods: tuple[str, ...] = DEFAULT_METHODS
    epsilon: float = 0.01
    delta: float = 0.01
    sample_cap: int = 10**6
    batch_size: int = 5000
    exploit_period: int = 100
    radius: int = 1
    seed: int = 0
    evidence_mode: str = "model"

    def __post_init__(self):
        if not self.circuits:
            raise ValueError("config needs at least one circuit")
        if any(not (0.0 < p < 1.0) for p in self.query_proportions):
            raise ValueError("query proportions must lie in (0, 1)")
        if self.trials < 1 or self.sample_cap < 1 or self.batch_size < 1:
            raise ValueError("trials, sample_cap and batch_size must be >= 1")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.evidence_mode not in ("model", "uniform"):
            raise ValueError("evidence_mode must be 'model' or 'uniform'")


@dataclass(frozen=True)
class BenchRecord:
    dataset: str
    trial: int
    query_prop: float
    method: str
    log_p_hat: float | None
    rank: int | None
    runtime_ms: float
    cert: str
    epsilon: float | None
    delta: float | None
    draws: int
    timed_out: bool


_LIST_KEYS = {"circuits", "query_proportions", "methods"}
_INT_KEYS = {"trials", "sample_cap", "batch_size", "exploit_period", "radius", "seed"}
_FLOAT_KEYS = {"epsilon", "delta"}


def parse_bench_config(text: str) -> BenchConfig:
    """Parse `key = value` lines; list values are comma separated."""
    values: dict = {}
    known = {f.name for f in fields(BenchConfig)}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {ln}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ValueError(f"config line {ln}: unknown key {key!r}")
        if key in _LIST_KEYS:
            items = tuple(tok.strip() for tok in val.split(",") if tok.strip())
            if key == "query_proportions":
                items = tuple(float(tok) for tok in items)
            values[key] = items
        elif key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        else:
            values[key] = val
    return BenchConfig(**values)


def resolve_circuit(spec: str) -> tuple[str, Circuit]:
    """A circuit reference is a file path or a `gen:` generator spec.

    Generator specs look like ``gen:n=16/depth=3/fanout=2/seed=7`` (slash
    separated, so specs can sit in comma-separated config lists) and serve
    as their own dataset id.
    """
    if spec.startswith("gen:"):
        params = {}
        for tok in spec[4:].split("/"):
            key, _, val = tok.partition("=")
            params[key.strip()] = int(val)
        missing = {"n", "depth", "fanout", "seed"} - set(params)
        if missing:
            raise ValueError(f"generator spec {spec!r} missing {sorted(missing)}")
        return spec, generate_random_circuit(params["n"], params["depth"], params["fanout"], params["seed"])
    return Path(spec).stem, load_circuit(spec)


def random_query_partition(n: int, proportion: float, rng: int | DrawStream) -> QuerySpec:
    """Uniform query subset of size round(proportion * n); no nuisance vars.

    The returned spec carries only the query set; evidence variables are the
    complement and their values are filled by draw_evidence.
    """
    if not (0.0 < proportion < 1.0):
        raise ValueError("proportion must lie in (0, 1)")
    k = math.floor(proportion * n + 0.5)
    if k == 0 or k == n:
        raise ValueError(f"proportion {proportion} leaves an empty query or evidence set for n={n}")
    stream = as_stream(rng)
    order = np.argsort(stream.uniform_block(1, n).ravel(), kind="stable")
    return QuerySpec(tuple(sorted(int(v) for v in order[:k])))


def draw_evidence(
    circuit: Circuit, e_vars: tuple[int, ...], mode: str, rng: int | DrawStream
) -> dict[int, int]:
    """Evidence values for e_vars.

    `model` projects one unconditional joint sample onto the evidence set,
    which guarantees positive evidence probability; `uniform` draws fair
    bits, retrying up to 100 times before giving up on zero-mass evidence.
    """
    stream = as_stream(rng)
    e_vars = tuple(e_vars)
    if mode == "model":
        joint = sample_joint(circuit, 1, stream)[0]
        return {v: int(joint[v]) for v in e_vars}
    if mode != "uniform":
        raise ValueError("mode must be 'model' or 'uniform'")
    rest = [v for v in range(circuit.num_vars) if v not in set(e_vars)]
    for _ in range(100):
        bits = (stream.uniform_block(1, max(1, len(e_vars))).ravel() < 0.5).astype(int)
        evidence = {v: int(bits[i]) for i, v in enumerate(e_vars)}
        if evaluate_marginal(circuit, evidence, rest) > -np.inf:
            return evidence
    raise ZeroEvidenceError("uniform evidence sampling exhausted 100 retries")


def rank_methods(log_p_hats) -> list[int]:
    """Competition ranks, best first: rank = 1 + #(strictly better)."""
    values = list(log_p_hats)
    if not values:
        raise ValueError("need at least one record to rank")
    return [1 + sum(1 for other in values if other > mine) for mine in values]


def _run_method(method: str, circuit: Circuit, spec: QuerySpec, cfg: BenchConfig, seed: int):
    """Run one method; returns (q_hat, log_p_hat, cert_kind, eps, delta, draws, timed_out)."""
    stream = DrawStream(seed)
    params = PacParams(cfg.epsilon, cfg.delta)
    oracle = make_oracle(circuit, spec)
    if method == "pac":
        sol = pac_map(oracle, params, cap=cfg.sample_cap, rng=stream, batch_size=cfg.batch_size)
    elif method == "smooth":
        sol = smooth_pac_map(
            oracle,
            params,
            radius=cfg.radius,
            exploit_period=cfg.exploit_period,
            cap=cfg.sample_cap,
            rng=stream,
            batch_size=cfg.batch_size,
        )
    elif method == "budget":
        sol, _ = budget_pac_map(oracle, cfg.sample_cap, rng=stream)
    elif method == "naive":
        sol = naive_map(oracle, cfg.sample_cap, rng=stream)
    elif method == "mp":
        res = max_product(circuit, spec, oracle=oracle)
        return res.q_hat, res.log_p_hat, "", None, None, 0, False
    elif method == "amp":
        res = arg_max_product(circuit, spec, oracle=oracle)
        return res.q_hat, res.log_p_hat, "", None, None, 0, False
    elif method == "ind":
        res = independent_map(oracle)
        return res.q_hat, res.log_p_hat, "", None, None, 0, False
    else:
        raise ValueError(f"unknown method {method!r}")

    cert = sol.certificate
    if isinstance(cert, Exact):
        eps, delta = 0.0, 0.0
    elif isinstance(cert, DeterministicEps):
        eps, delta = cert.epsilon, 0.0
    elif isinstance(cert, Pac):
        eps, delta = cert.epsilon, cert.delta
    else:
        # Budget: report the config tolerance with its realized admissible level.
        p_hat = math.exp(sol.log_p_hat)
        eps = cfg.epsilon
        delta = 0.0 if cfg.epsilon >= 1.0 - p_hat else pareto_delta(p_hat, cfg.epsilon, sol.draws_used)
    timed_out = isinstance(cert, Budget) and method in ("pac", "smooth")
    return sol.q_hat, sol.log_p_hat, cert.kind, eps, delta, sol.draws_used, timed_out


def run_benchmark(cfg: BenchConfig) -> list[BenchRecord]:
    records: list[BenchRecord] = []
    resolved = [resolve_circuit(spec) for spec in cfg.circuits]
    for ci, (dataset, circuit) in enumerate(resolved):
        for pi, prop in enumerate(cfg.query_proportions):
            for trial in range(cfg.trials):
                base = derive_seed(cfg.seed, ci, pi, trial)
                try:
                    part = random_query_partition(circuit.num_vars, prop, DrawStream(derive_seed(base, "partition")))
                    e_vars = tuple(v for v in range(circuit.num_vars) if v not in set(part.query_vars))
                    evidence = draw_evidence(circuit, e_vars, cfg.evidence_mode, DrawStream(derive_seed(base, "evidence")))
                    spec = QuerySpec(part.query_vars, evidence, ())
                    spec.validate(circuit.num_vars)
                except Exception:
                    records.append(
                        BenchRecord(dataset, trial, prop, "instance", None, None, 0.0, "error", None, None, 0, False)
                    )
                    continue
                group: list[BenchRecord] = []
                for method in cfg.methods:
                    t0 = time.perf_counter()
                    try:
                        _, log_p, cert, eps, delta, draws, timed_out = _run_method(
                            method, circuit, spec, cfg, derive_seed(base, "method", method)
                        )
                        ms = (time.perf_counter() - t0) * 1000.0
                        group.append(
                            BenchRecord(dataset, trial, prop, method, log_p, None, ms, cert, eps, delta, draws, timed_out)
                        )
                    except Exception:
                        ms = (time.perf_counter() - t0) * 1000.0
                        group.append(
                            BenchRecord(dataset, trial, prop, method, None, None, ms, "error", None, None, 0, False)
                        )
                ok = [r for r in group if r.log_p_hat is not None]
                ranks = rank_methods([r.log_p_hat for r in ok]) if ok else []
                rank_of = {id(r): rank for r, rank in zip(ok, ranks)}
                records.extend(replace(r, rank=rank_of.get(id(r))) for r in group)
    return records


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(records, fileobj) -> None:
    """RFC-4180-style CSV with the mandatory header, LF line endings."""
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.dataset,
                r.trial,
                _fmt(r.query_prop),
                r.method,
                _fmt(r.log_p_hat),
                _fmt(r.rank),
                f"{r.runtime_ms:.3g}",
                r.cert,
                _fmt(r.epsilon),
                _fmt(r.delta),
                r.draws,
                _fmt(r.timed_out),
            ]
        )


def render_summary(records: list[BenchRecord]) -> str:
    """Mean rank per method per (dataset, proportion) plus ranked-highest counts."""
    methods = []
    for r in records:
        if r.method not in methods and r.rank is not None:
            methods.append(r.method)
    props = sorted({r.query_prop for r in records})
    datasets = []
    for r in records:
        if r.dataset not in datasets:
            datasets.append(r.dataset)
    lines = []
    for prop in props:
        lines.append(f"== query proportion {prop:g} ==")
        header = f"{'dataset':<28}" + "".join(f"{m:>9}" for m in methods)
        lines.append(header)
        highest = {m: 0 for m in methods}
        for ds in datasets:
            means = {}
            for m in methods:
                ranks = [r.rank for r in records if r.dataset == ds and r.query_prop == prop and r.method == m and r.rank is not None]
                if ranks:
                    means[m] = sum(ranks) / len(ranks)
            if not means:
                continue
            best = min(means.values())
            for m, mean in means.items():
                if mean == best:
                    highest[m] += 1
            lines.append(f"{ds:<28}" + "".join(f"{means.get(m, float('nan')):>9.2f}" for m in methods))
        lines.append(f"{'ranked highest':<28}" + "".join(f"{highest[m]:>9}" for m in methods))
        lines.append("")
    return "\n".join(lines)
