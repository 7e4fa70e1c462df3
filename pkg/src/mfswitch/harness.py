"""Replicated experiment studies with deterministic seeding and reporting.

A study bundles a model, a chain, and replication settings; running it
produces per-replica records, aggregate statistics with rate fits, and
pass/fail flags, all written atomically under one study directory. Replica
seeds are derived by hashing (master seed, replica, role), so results do
not depend on scheduling: rerunning with any thread count reproduces the
records byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import os
import csv
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import chain as chain_mod
from . import limit as limit_mod
from . import twoscale as twoscale_mod
from .chain import GeneratorMatrix, TwoScaleSpec, sample_path, transition_matrix
from .dynamics import SimConfig, simulate_with_chain
from .measure import (
    TestFunctionBundle,
    bump,
    coordinate_sum,
    regime_scaled,
    squared_norm,
)

__all__ = [
    "NonPositiveValue",
    "TooFewPoints",
    "UnknownStudyKind",
    "RateFit",
    "StudySpec",
    "StudyReport",
    "derive_seed",
    "fit_rate",
    "build_test_function",
    "run_study",
    "STUDY_KINDS",
]


class NonPositiveValue(ValueError):
    """Rate fitting needs strictly positive scales and values."""


class TooFewPoints(ValueError):
    """Rate fitting needs at least three points."""


class UnknownStudyKind(ValueError):
    """Study kind is not one of the supported pipelines."""


def derive_seed(master_seed: int, replica: int, role: str) -> int:
    """Collision-resistant 64-bit stream seed for (master, replica, role).

    Computed by hashing the triple, so adding replicas or roles never
    perturbs existing streams.
    """
    digest = hashlib.sha256(
        f"{int(master_seed)}|{int(replica)}|{role}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "big")


@dataclasses.dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit value ~ scale^slope on log-log axes."""

    slope: float
    intercept: float
    stderr: float
    ci: Tuple[float, float]
    n: int


def fit_rate(points: Sequence[Tuple[float, float]]) -> RateFit:
    """Fit log(value) = intercept + slope * log(scale) with a 95% CI.

    The confidence interval uses the Student-t quantile with n - 2 degrees
    of freedom; an exactly power-law input collapses the interval onto the
    slope.
    """
    pts = [(float(s), float(v)) for s, v in points]
    if len(pts) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(pts)}")
    if any(s <= 0 or v <= 0 for s, v in pts):
        raise NonPositiveValue("scales and values must be strictly positive")
    x = np.log([s for s, _ in pts])
    y = np.log([v for _, v in pts])
    n = len(pts)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = n - 2
    s2 = float(resid @ resid) / dof
    stderr = float(np.sqrt(s2 / sxx))
    tq = float(stats.t.ppf(0.975, dof))
    return RateFit(
        slope=slope,
        intercept=intercept,
        stderr=stderr,
        ci=(slope - tq * stderr, slope + tq * stderr),
        n=n,
    )


def build_test_function(spec: dict, dim: int = 1) -> TestFunctionBundle:
    """Construct a named test function from a plain-dict description."""
    kind = spec.get("kind")
    if kind == "squared_norm":
        return squared_norm(dim)
    if kind == "coordinate_sum":
        return coordinate_sum(dim)
    if kind == "bump":
        return bump(
            float(spec["radius"]), float(spec.get("center", 0.0)), dim
        )
    if kind == "regime_scaled":
        base = build_test_function(spec["base"], dim)
        return regime_scaled(base, [float(w) for w in spec["weights"]])
    raise ValueError(f"unknown test function kind {kind!r}")


# ---------------------------------------------------------------------------
# Study specification and report
# ---------------------------------------------------------------------------

STUDY_KINDS = ("lln", "martingale", "twoscale", "chain-checks")


@dataclasses.dataclass(frozen=True)
class StudySpec:
    """Everything needed to run one replicated study."""

    kind: str
    params: dict
    replicas: int
    seed: int
    sim: Optional[SimConfig] = None
    generator: Optional[GeneratorMatrix] = None
    initial_regime: int = 0
    twoscale: Optional[TwoScaleSpec] = None
    outdir: Optional[str] = None
    output_format: str = "csv"
    raw: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise UnknownStudyKind(
                f"kind {self.kind!r} not in {STUDY_KINDS}"
            )
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if self.output_format not in ("csv", "json"):
            raise ValueError("output format must be 'csv' or 'json'")


@dataclasses.dataclass(frozen=True)
class StudyReport:
    """Outcome of a study run: records, aggregates, flags, provenance."""

    study_id: str
    kind: str
    fieldnames: Tuple[str, ...]
    records: Tuple[dict, ...]
    aggregates: dict
    flags: Dict[str, bool]
    degraded: bool
    errors: Tuple[dict, ...]
    provenance: dict
    written: Tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return (not self.degraded) and all(self.flags.values())

    def text(self) -> str:
        lines = [f"study {self.study_id}", f"kind: {self.kind}"]
        for key in ("seed", "replicas", "package_version", "config_hash"):
            lines.append(f"{key}: {self.provenance.get(key)}")
        lines.append("")
        for key in sorted(self.aggregates):
            lines.append(f"{key}: {_fmt(self.aggregates[key])}")
        lines.append("")
        for name in sorted(self.flags):
            lines.append(
                f"check {name}: {'PASS' if self.flags[name] else 'FAIL'}"
            )
        if self.errors:
            lines.append("")
            for err in self.errors:
                lines.append(f"replica {err['replica']} failed: {err['error']}")
        lines.append("")
        status = "PASS" if self.passed else ("DEGRADED" if self.degraded else "FAIL")
        lines.append(f"overall: {status}")
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def _plain(obj):
    """Recursively convert numpy containers to JSON-serializable types."""
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# Pipelines: each returns (replica_fn, finalize_fn, fieldnames)
# ---------------------------------------------------------------------------


def _lln_pipeline(spec: StudySpec):
    if spec.sim is None or spec.generator is None:
        raise ValueError("lln studies need sim and generator sections")
    p = spec.params
    n_values = tuple(int(n) for n in p["n_values"])
    m_reference = int(p["m_reference"])
    t = float(p.get("checkpoint", spec.sim.horizon))
    bl_cap = p.get("bl_cap")
    approx_budget = int(p.get("approx_budget", 4096))
    window = tuple(p.get("slope_window", (-0.7, -0.3)))

    def replica_fn(r: int) -> List[dict]:
        dists, flags = limit_mod.lln_replica_distances(
            spec.sim, spec.generator, spec.initial_regime,
            n_values, m_reference, t, spec.seed, r, bl_cap, approx_budget,
        )
        return [
            {
                "replica": r,
                "n": n,
                "distance": float(d),
                "exact": int(flag),
            }
            for n, d, flag in zip(n_values, dists, flags)
        ]

    def finalize(rows: List[dict]):
        means, ses = [], []
        for n in n_values:
            vals = np.array([row["distance"] for row in rows if row["n"] == n])
            means.append(float(vals.mean()))
            ses.append(
                float(vals.std(ddof=1) / np.sqrt(len(vals)))
                if len(vals) > 1
                else 0.0
            )
        fit = fit_rate(list(zip(n_values, means)))
        aggregates = {
            "n_values": list(n_values),
            "m_reference": m_reference,
            "checkpoint": t,
            "mean_distance": means,
            "std_error": ses,
            "slope": fit.slope,
            "slope_ci": list(fit.ci),
        }
        flags = {
            "distance_strictly_decreasing": all(
                b < a for a, b in zip(means, means[1:])
            ),
            "slope_in_window": window[0] <= fit.slope <= window[1],
        }
        return aggregates, flags

    return replica_fn, finalize, ("replica", "n", "distance", "exact")


def _martingale_pipeline(spec: StudySpec):
    if spec.sim is None or spec.generator is None:
        raise ValueError("martingale studies need sim and generator sections")
    p = spec.params
    f = build_test_function(
        p.get("test_function", {"kind": "squared_norm"}), spec.sim.model.dim
    )
    t = float(p.get("time", spec.sim.horizon))
    window = tuple(p.get("variance_window", (0.7, 1.3)))
    cfg = dataclasses.replace(spec.sim, checkpoints=None)

    def replica_fn(r: int) -> List[dict]:
        traj, path = simulate_with_chain(
            cfg, spec.generator, spec.initial_regime,
            derive_seed(spec.seed, r, "run"),
        )
        report = limit_mod.martingale_residual(
            traj, path, spec.generator, cfg.model, f, t
        )
        return [
            {
                "replica": r,
                "m_f": report.value,
                "quad_var": report.quad_variation,
            }
        ]

    def finalize(rows: List[dict]):
        vals = np.array([row["m_f"] for row in rows])
        qvs = np.array([row["quad_var"] for row in rows])
        n = len(vals)
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        var = float(vals.var(ddof=1)) if n > 1 else 0.0
        mean_qv = float(qvs.mean())
        ratio = var / mean_qv if mean_qv > 0 else np.inf
        aggregates = {
            "fn": f.name,
            "time": t,
            "mean_m_f": mean,
            "se_m_f": se,
            "var_m_f": var,
            "mean_quad_var": mean_qv,
            "variance_ratio": ratio,
        }
        flags = {
            "mean_within_3se": abs(mean) <= 3.0 * se if se > 0 else mean == 0.0,
            "variance_matches_quadratic_variation": window[0] <= ratio <= window[1],
        }
        return aggregates, flags

    return replica_fn, finalize, ("replica", "m_f", "quad_var")


def _twoscale_pipeline(spec: StudySpec):
    if spec.sim is None or spec.twoscale is None:
        raise ValueError("twoscale studies need sim and twoscale sections")
    p = spec.params
    eps_values = tuple(float(e) for e in p["eps_values"])
    fns = tuple(
        build_test_function(d, spec.sim.model.dim)
        for d in p.get("test_functions", [{"kind": "squared_norm"}])
    )
    dt_max = float(p.get("dt_max", spec.sim.dt))
    control = p.get("control")
    initial_flat = int(p.get("initial_flat_state", spec.initial_regime))

    agg = chain_mod.aggregate(spec.twoscale)
    model = spec.sim.model
    avg_model = twoscale_mod.average_coefficients(model, agg)
    if control == "sigma":
        avg_model = twoscale_mod.sigma_averaged_control(model, agg)
    partition = agg.partition
    q_bar = agg.q_bar
    horizon = spec.sim.horizon

    per_eps = []
    for eps in eps_values:
        dt_eps = min(dt_max, eps / 10.0)
        q_eps = chain_mod.build_fast_generator(
            dataclasses.replace(spec.twoscale, epsilon=eps)
        )
        cfg_fast = dataclasses.replace(
            spec.sim, dt=dt_eps, checkpoints=(horizon,)
        )
        cfg_avg = SimConfig(
            avg_model, spec.sim.n_particles, horizon, dt_eps,
            spec.sim.initial, checkpoints=(horizon,),
        )
        per_eps.append((eps, q_eps, cfg_fast, cfg_avg))

    def replica_fn(r: int) -> List[dict]:
        rows: List[dict] = []
        for eps, q_eps, cfg_fast, cfg_avg in per_eps:
            rows.extend(
                twoscale_mod.two_scale_replica(
                    cfg_fast, cfg_avg, q_eps, q_bar, partition,
                    initial_flat, fns, spec.seed, r, eps,
                )
            )
        return rows

    def finalize(rows: List[dict]):
        cells = {}
        for f in fns:
            for eps in eps_values:
                sel = [
                    row for row in rows
                    if row["epsilon"] == eps and row["fn"] == f.name
                ]
                fast = np.array([row["fast"] for row in sel])
                avg = np.array([row["averaged"] for row in sel])
                n = len(sel)
                fast_se = (
                    float(fast.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
                )
                avg_se = float(avg.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
                cells[(f.name, eps)] = {
                    "fast_mean": float(fast.mean()),
                    "fast_se": fast_se,
                    "averaged_mean": float(avg.mean()),
                    "averaged_se": avg_se,
                    "diff": float(fast.mean() - avg.mean()),
                    "diff_se": float(np.hypot(fast_se, avg_se)),
                }
        gap_ok, match_ok = True, True
        for f in fns:
            gaps = [abs(cells[(f.name, eps)]["diff"]) for eps in eps_values]
            gap_ok &= all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
            last = cells[(f.name, eps_values[-1])]
            match_ok &= abs(last["diff"]) <= 3.0 * last["diff_se"]
        aggregates = {
            "eps_values": list(eps_values),
            "fns": [f.name for f in fns],
            "cells": {
                f"{name}@eps={eps:g}": cell
                for (name, eps), cell in cells.items()
            },
        }
        flags = {
            "gap_nonincreasing": bool(gap_ok),
            "matches_at_finest_eps": bool(match_ok),
        }
        return aggregates, flags

    return replica_fn, finalize, ("replica", "epsilon", "fn", "fast", "averaged")


def _chain_checks_pipeline(spec: StudySpec):
    if spec.generator is None:
        raise ValueError("chain-checks studies need a generator section")
    p = spec.params
    q = spec.generator
    init = spec.initial_regime
    t_marginal = float(p.get("t_marginal", 1.0))
    paths_per_replica = int(p.get("paths_per_replica", 5000))
    holding_per_replica = int(p.get("holding_per_replica", paths_per_replica // 5))
    tv_max = float(p.get("tv_max", 0.02))
    ks_level = float(p.get("ks_level", 0.01))
    exit_rate = float(q.exit_rates[init])
    holding_horizon = 30.0 / exit_rate if exit_rate > 0 else 1.0

    def replica_fn(r: int) -> List[dict]:
        rng = np.random.default_rng(derive_seed(spec.seed, r, "chain-check"))
        rows = []
        for k in range(paths_per_replica):
            path = sample_path(q, init, t_marginal, rng)
            rows.append(
                {
                    "replica": r,
                    "draw": k,
                    "kind": "marginal",
                    "value": float(path.state_at(t_marginal)),
                }
            )
        for k in range(holding_per_replica):
            path = sample_path(q, init, holding_horizon, rng)
            if path.jump_times.size:
                rows.append(
                    {
                        "replica": r,
                        "draw": k,
                        "kind": "holding",
                        "value": float(path.jump_times[0]),
                    }
                )
        return rows

    def finalize(rows: List[dict]):
        states = np.array(
            [int(row["value"]) for row in rows if row["kind"] == "marginal"]
        )
        holdings = np.array(
            [row["value"] for row in rows if row["kind"] == "holding"]
        )
        m = q.m0
        counts = np.bincount(states, minlength=m)
        empirical = counts / counts.sum()
        theoretical = transition_matrix(q, t_marginal)[init]
        tv = 0.5 * float(np.abs(empirical - theoretical).sum())
        if exit_rate > 0 and holdings.size:
            ks = stats.kstest(holdings, stats.expon(scale=1.0 / exit_rate).cdf)
            ks_stat, ks_p = float(ks.statistic), float(ks.pvalue)
        else:
            ks_stat, ks_p = 0.0, 1.0
        aggregates = {
            "t_marginal": t_marginal,
            "paths": int(counts.sum()),
            "empirical_marginal": [float(v) for v in empirical],
            "theoretical_marginal": [float(v) for v in theoretical],
            "total_variation": tv,
            "holding_samples": int(holdings.size),
            "ks_statistic": ks_stat,
            "ks_pvalue": ks_p,
        }
        flags = {
            "marginal_tv_below_max": tv <= tv_max,
            "holding_ks_not_rejected": ks_p >= ks_level,
        }
        return aggregates, flags

    return replica_fn, finalize, ("replica", "draw", "kind", "value")


_PIPELINES = {
    "lln": _lln_pipeline,
    "martingale": _martingale_pipeline,
    "twoscale": _twoscale_pipeline,
    "chain-checks": _chain_checks_pipeline,
}


# ---------------------------------------------------------------------------
# Execution and output
# ---------------------------------------------------------------------------


def _study_id(spec: StudySpec, config_hash: str) -> str:
    return f"{spec.kind}-{config_hash[:12]}"


def _config_hash(spec: StudySpec) -> str:
    basis = {
        "kind": spec.kind,
        "seed": spec.seed,
        "replicas": spec.replicas,
        "config": _plain(spec.raw) if spec.raw is not None else _plain(spec.params),
    }
    return hashlib.sha256(
        json.dumps(basis, sort_keys=True).encode()
    ).hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _csv_text(fieldnames: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\r\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(
            {
                k: (repr(v) if isinstance(v, float) else v)
                for k, v in row.items()
            }
        )
    return buf.getvalue()


def _write_outputs(report: StudyReport, spec: StudySpec) -> StudyReport:
    base = Path(spec.outdir) / report.study_id
    base.mkdir(parents=True, exist_ok=True)
    written = []
    by_replica: Dict[int, List[dict]] = {}
    for row in report.records:
        by_replica.setdefault(int(row["replica"]), []).append(row)
    for r in range(spec.replicas):
        rows = by_replica.get(r, [])
        if spec.output_format == "csv":
            target = base / f"replica-{r}.csv"
            _atomic_write_text(target, _csv_text(report.fieldnames, rows))
        else:
            target = base / f"replica-{r}.json"
            _atomic_write_text(
                target,
                json.dumps(_plain(rows), sort_keys=True, indent=2) + "\n",
            )
        written.append(str(target))
    summary = {
        "study": report.study_id,
        "kind": report.kind,
        "aggregates": _plain(report.aggregates),
        "checks": _plain(report.flags),
        "degraded": report.degraded,
        "errors": _plain(list(report.errors)),
        "provenance": _plain(report.provenance),
    }
    summary_path = base / "summary.json"
    _atomic_write_text(
        summary_path, json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )
    written.append(str(summary_path))
    report_path = base / "report.txt"
    _atomic_write_text(report_path, report.text())
    written.append(str(report_path))
    return dataclasses.replace(report, written=tuple(written))


def run_study(spec: StudySpec, threads: int = 1) -> StudyReport:
    """Execute every replica, aggregate, and (if outdir is set) write files.

    Replicas run independently with derived seeds; ``threads`` only selects
    the executor width and never changes any number. A replica that raises
    is recorded as an error and degrades the study instead of aborting it.
    """
    from . import __version__

    replica_fn, finalize, fieldnames = _PIPELINES[spec.kind](spec)

    results: List[Optional[List[dict]]] = [None] * spec.replicas
    errors: List[dict] = []

    def guarded(r: int):
        try:
            return r, replica_fn(r), None
        except Exception as exc:  # degraded study, not an abort
            return r, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(guarded, range(spec.replicas)))
    else:
        outcomes = [guarded(r) for r in range(spec.replicas)]
    for r, rows, err in outcomes:
        if err is None:
            results[r] = rows
        else:
            errors.append({"replica": r, "error": err})

    records: List[dict] = []
    for rows in results:
        if rows:
            records.extend(rows)
    degraded = bool(errors)
    if records:
        aggregates, flags = finalize(records)
    else:
        aggregates, flags = {}, {"any_replica_succeeded": False}

    config_hash = _config_hash(spec)
    provenance = {
        "config_hash": config_hash,
        "seed": spec.seed,
        "replicas": spec.replicas,
        "package_version": __version__,
        "kind": spec.kind,
    }
    report = StudyReport(
        study_id=_study_id(spec, config_hash),
        kind=spec.kind,
        fieldnames=tuple(fieldnames),
        records=tuple(records),
        aggregates=aggregates,
        flags=flags,
        degraded=degraded,
        errors=tuple(errors),
        provenance=provenance,
    )
    if spec.outdir is not None:
        report = _write_outputs(report, spec)
    return report
