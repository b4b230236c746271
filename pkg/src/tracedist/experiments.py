"""Experiment presets and report emission.

Each preset is deterministic given its :class:`ExperimentConfig`; replications
get their own named sampler streams, so running them on a thread pool does
not change the output.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from . import bounds
from .builtins import builtin_chain, fig1
from .estimator import (
    decide_equivalence_black_box,
    estimate_fixed_k,
    estimate_infinite,
    estimate_unbounded,
    paired_samplers,
)
from .oracle import (
    finite_trace_distance,
    fixed_k_distance,
    infinite_trace_distance_approx,
    tv_lower_bound_demo,
)

PRESETS = (
    "tv-demo",
    "fixed-k-coverage",
    "unbounded-fig1",
    "infinite-cycles",
    "equivalence-precision",
    "lemma-fuzz",
)


@dataclass
class ExperimentConfig:
    preset: str
    seed: int = 0
    replications: int | None = None
    tau: float = 0.1
    pmin: float | None = None
    n: int | None = None
    alpha: float | None = None
    delta: float | None = None
    epsilon: float | None = None
    k: int | None = None
    steps: list = field(default_factory=lambda: [25, 100, 400])
    ci_method: str | None = None
    batch_size: int = 10_000
    grid: float = 0.1
    chains: int = 500
    threads: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {list(PRESETS)}")
        if self.replications is not None and self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass
class ExperimentReport:
    preset: str
    config: dict
    rows: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    chains: dict = field(default_factory=dict)
    csv_columns: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(**d)


def _map(fn, items, threads):
    if threads == 1:
        return [fn(x) for x in items]
    workers = None if threads == 0 else threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _pick(value, default):
    return default if value is None else value


def _tv_demo(cfg):
    rows = []
    for n in cfg.steps:
        ex = tv_lower_bound_demo(cfg.tau, n, exact=True)
        ap = tv_lower_bound_demo(cfg.tau, n, exact=False)
        rows.append({
            "tau": cfg.tau, "n": n, "c_n": ex.c_n,
            "p1_exact": ex.p1, "p2_exact": ex.p2, "gap_exact": ex.gap,
            "p1_normal": ap.p1, "p2_normal": ap.p2,
        })
    gaps = [r["gap_exact"] for r in rows]
    agg = {
        "gaps_increasing": all(a < b for a, b in zip(gaps, gaps[1:])),
        "max_normal_deviation": max(
            max(abs(r["p1_exact"] - r["p1_normal"]), abs(r["p2_exact"] - r["p2_normal"]))
            for r in rows
        ),
    }
    columns = ["tau", "n", "c_n", "p1_exact", "p2_exact", "gap_exact", "p1_normal", "p2_normal"]
    chains = {"fig1_0": fig1(0.0), "fig1_tau": fig1(cfg.tau)}
    return rows, agg, {}, chains, columns


def _fixed_k(cfg):
    c1, c2 = fig1(0.0), fig1(cfg.tau)
    k = _pick(cfg.k, 2)
    eps = _pick(cfg.epsilon, 0.02)
    alpha = _pick(cfg.alpha, 0.05)
    method = _pick(cfg.ci_method, "goodman")
    truth = fixed_k_distance(c1, c2, k)

    def one(rep):
        s1, s2 = paired_samplers(c1, c2, cfg.seed, rep)
        r = estimate_fixed_k(s1, s2, k, alpha, eps, method, cfg.batch_size)
        d = r.to_dict()
        d["replication"] = rep
        d["covered"] = r.contains(truth.value)
        return d

    rows = _map(one, range(_pick(cfg.replications, 200)), cfg.threads)
    conf = [r for r in rows if r["conforming"]]
    agg = {
        "replications": len(rows),
        "coverage": sum(r["covered"] for r in rows) / len(rows),
        "conforming": len(conf),
        "max_conforming_width": max((r["hi"] - r["lo"] for r in conf), default=None),
    }
    columns = ["replication", "lo", "hi", "point", "samples_a", "samples_b", "conforming", "covered"]
    return rows, agg, {"fixed_k": truth.to_dict()}, {"fig1_0": c1, "fig1_tau": c2}, columns


def _unbounded(cfg):
    base = fig1(0.0)
    pairs = {"identical": (base, base), "fig1": (base, fig1(cfg.tau))}
    p = _pick(cfg.pmin, 0.4)
    n = _pick(cfg.n, 2)
    delta = _pick(cfg.delta, 0.2)
    alpha = _pick(cfg.alpha, 0.1)
    method = _pick(cfg.ci_method, "bonferroni-hoeffding")
    reps = _pick(cfg.replications, 20)
    oracle = {name: finite_trace_distance(a, b, delta / 2).to_dict() for name, (a, b) in pairs.items()}

    def one(item):
        name, rep = item
        a, b = pairs[name]
        s1, s2 = paired_samplers(a, b, cfg.seed, rep)
        r = estimate_unbounded(s1, s2, p, n, alpha, delta, method, cfg.batch_size)
        d = r.to_dict()
        d.update(pair=name, replication=rep)
        return d

    rows = _map(one, [(name, r) for name in pairs for r in range(reps)], cfg.threads)
    agg = {}
    for name in pairs:
        sel = [r for r in rows if r["pair"] == name]
        conf = [r for r in sel if r["conforming"]]
        agg[name] = {
            "replications": len(sel),
            "conforming": len(conf),
            "contains_zero": sum(r["lo"] <= 0.0 <= r["hi"] for r in conf) / max(1, len(conf)),
            "min_hi": min((r["hi"] for r in conf), default=None),
        }
    columns = ["pair", "replication", "lo", "hi", "point", "k", "conforming"]
    return rows, agg, oracle, {"fig1_0": base, "fig1_tau": pairs["fig1"][1]}, columns


def _infinite(cfg):
    a, b = builtin_chain("cycle-ab"), builtin_chain("cycle-aa")
    p = _pick(cfg.pmin, 0.5)
    n = _pick(cfg.n, 2)
    delta = _pick(cfg.delta, 0.2)
    alpha = _pick(cfg.alpha, 0.05)
    method = _pick(cfg.ci_method, "bonferroni-hoeffding")
    oracle = infinite_trace_distance_approx(a, b, delta / 4)

    def one(rep):
        s1, s2 = paired_samplers(a, b, cfg.seed, rep)
        r = estimate_infinite(s1, s2, p, n, alpha, delta, method, cfg.batch_size)
        d = r.to_dict()
        d["replication"] = rep
        return d

    rows = _map(one, range(_pick(cfg.replications, 5)), cfg.threads)
    agg = {"contains_one": sum(r["lo"] <= 1.0 <= r["hi"] for r in rows) / len(rows)}
    columns = ["replication", "lo", "hi", "point", "k", "conforming"]
    return rows, agg, {"infinite": oracle.to_dict()}, {"cycle_ab": a, "cycle_aa": b}, columns


def _equivalence(cfg):
    base = fig1(0.0)
    pairs = {
        "fig1-vs-tau": (base, fig1(cfg.tau), False),
        "fig1-vs-unfolded": (base, builtin_chain("fig1-unfolded"), True),
    }
    alpha = _pick(cfg.alpha, 0.05)
    reps = _pick(cfg.replications, 100)

    def one(item):
        name, rep = item
        a, b, _ = pairs[name]
        s1, s2 = paired_samplers(a, b, cfg.seed, rep, observe_states=True)
        r = decide_equivalence_black_box(s1, s2, cfg.grid, alpha)
        d = r.to_dict()
        d.update(pair=name, replication=rep, correct=r.equivalent == pairs[name][2])
        return d

    rows = _map(one, [(name, r) for name in pairs for r in range(reps)], cfg.threads)
    agg = {
        name: sum(r["correct"] for r in rows if r["pair"] == name) / reps for name in pairs
    }
    columns = ["pair", "replication", "equivalent", "correct", "conforming"]
    chains = {"fig1_0": base, "fig1_tau": pairs["fig1-vs-tau"][1],
              "fig1_unfolded": pairs["fig1-vs-unfolded"][1]}
    return rows, agg, {}, chains, columns


def _lemma_fuzz(cfg):
    violations, checks, skipped, rows = bounds.fuzz(
        cfg.chains, cfg.seed, n_max=_pick(cfg.n, 4), p_min=_pick(cfg.pmin, 0.1)
    )
    agg = {"violations": violations, "checks": checks, "skipped": skipped,
           "total_violations": sum(violations.values())}
    return rows, agg, {}, {}, ["index", "n", "violations", "checks"]


_RUNNERS = {
    "tv-demo": _tv_demo,
    "fixed-k-coverage": _fixed_k,
    "unbounded-fig1": _unbounded,
    "infinite-cycles": _infinite,
    "equivalence-precision": _equivalence,
    "lemma-fuzz": _lemma_fuzz,
}


def run_preset(config: ExperimentConfig) -> ExperimentReport:
    rows, agg, oracle, chains, columns = _RUNNERS[config.preset](config)
    report = ExperimentReport(
        preset=config.preset,
        # the output location is not part of the experiment's identity
        config={k: v for k, v in asdict(config).items() if k != "out_dir"},
        rows=rows,
        aggregate=agg,
        oracle=oracle,
        chains={name: c.to_dict() for name, c in chains.items()},
        csv_columns=columns,
    )
    if config.out_dir:
        emit_report(report, config.out_dir)
    return report


def _csv_value(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def _flat_row(row: dict) -> dict:
    flat = dict(row)
    spc = flat.pop("samples_per_chain", None)
    if spc is not None:
        flat["samples_a"], flat["samples_b"] = spc
    return flat


def emit_report(report: ExperimentReport, directory) -> list:
    """Write ``report.json``, ``summary.csv`` and ``chains/*.json``; returns the paths."""
    try:
        os.makedirs(os.path.join(directory, "chains"), exist_ok=True)
        paths = []
        path = os.path.join(directory, "report.json")
        with open(path, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        paths.append(path)
        path = os.path.join(directory, "summary.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(report.csv_columns)
            for row in report.rows:
                flat = _flat_row(row)
                writer.writerow([_csv_value(flat.get(c)) for c in report.csv_columns])
        paths.append(path)
        for name, doc in report.chains.items():
            path = os.path.join(directory, "chains", f"{name}.json")
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)
            paths.append(path)
    except OSError as e:
        raise OSError(f"cannot write report to {directory}: {e}") from e
    return paths


def load_report(directory) -> ExperimentReport:
    with open(os.path.join(directory, "report.json")) as fh:
        return ExperimentReport.from_dict(json.load(fh))
