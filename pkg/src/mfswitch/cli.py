"""Command-line harness: JSON-configured simulation and study runs.

Configs are strict JSON documents with sections ``model``, ``chain`` or
``twoscale``, ``sim``, ``study``, and ``output``. Unknown keys are rejected
(with a nearest-key suggestion) and all schema violations are reported
together. Exit codes: 0 on success, 1 when a study's checks fail or a run
errors, 2 on configuration problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import difflib
import hashlib
import json
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .chain import (
    GeneratorMatrix,
    TwoScaleSpec,
    path_to_csv,
    validate_generator,
)
from .dynamics import (
    CoefficientModel,
    InitialCondition,
    SimConfig,
    builtin_model,
    simulate_with_chain,
)
from .harness import STUDY_KINDS, StudySpec, run_study, _atomic_write_text
from .measure import (
    SupportTooLarge,
    bl_distance_approx,
    bl_distance_exact,
    measure_from_csv,
    wasserstein1_1d,
)

__all__ = [
    "ParseError",
    "SchemaViolation",
    "ConfigError",
    "ConfigDocument",
    "parse_config",
    "main",
]

DEFAULT_DT = 1e-3
DEFAULT_REPLICAS = 20


class ParseError(Exception):
    """Config text is not valid JSON."""

    def __init__(self, line: int, col: int, message: str):
        self.line, self.col, self.message = line, col, message
        super().__init__(f"line {line}, column {col}: {message}")


@dataclasses.dataclass(frozen=True)
class SchemaViolation:
    """One schema problem: the dotted key and why it is rejected."""

    key: str
    reason: str

    def __str__(self) -> str:
        return f"{self.key}: {self.reason}"


class ConfigError(Exception):
    """All schema violations found in one validation pass."""

    def __init__(self, violations: List[SchemaViolation]):
        self.violations = list(violations)
        super().__init__(
            "; ".join(str(v) for v in self.violations) or "invalid config"
        )


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_matrix(v) -> bool:
    return (
        isinstance(v, list)
        and len(v) >= 1
        and all(
            isinstance(row, list)
            and len(row) == len(v)
            and all(_is_num(x) for x in row)
            for row in v
        )
    )


class _Validator:
    def __init__(self):
        self.violations: List[SchemaViolation] = []

    def fail(self, key: str, reason: str) -> None:
        self.violations.append(SchemaViolation(key, reason))

    def check_keys(self, obj: dict, path: str, allowed, required=()):
        for key in obj:
            if key not in allowed:
                hint = difflib.get_close_matches(key, list(allowed), n=1)
                extra = f"; did you mean {hint[0]!r}?" if hint else ""
                self.fail(
                    f"{path}.{key}" if path else key,
                    f"unknown key{extra}",
                )
        for key in required:
            if key not in obj:
                self.fail(
                    f"{path}.{key}" if path else key, "required key is missing"
                )

    def section(self, doc: dict, name: str) -> Optional[dict]:
        value = doc.get(name)
        if value is None:
            return None
        if not isinstance(value, dict):
            self.fail(name, "must be an object")
            return None
        return value


_TEST_FN_KINDS = ("squared_norm", "coordinate_sum", "bump", "regime_scaled")


def _validate_test_function(v: _Validator, obj, path: str) -> None:
    if not isinstance(obj, dict):
        v.fail(path, "must be an object")
        return
    kind = obj.get("kind")
    if kind not in _TEST_FN_KINDS:
        v.fail(f"{path}.kind", f"must be one of {_TEST_FN_KINDS}")
        return
    if kind == "bump":
        v.check_keys(obj, path, ("kind", "radius", "center"), ("radius",))
        if "radius" in obj and not (_is_num(obj["radius"]) and obj["radius"] > 0):
            v.fail(f"{path}.radius", "must be a positive number")
        if "center" in obj and not _is_num(obj["center"]):
            v.fail(f"{path}.center", "must be a number")
    elif kind == "regime_scaled":
        v.check_keys(obj, path, ("kind", "base", "weights"), ("base", "weights"))
        if "base" in obj:
            _validate_test_function(v, obj["base"], f"{path}.base")
        w = obj.get("weights")
        if w is not None and not (
            isinstance(w, list) and w and all(_is_num(x) for x in w)
        ):
            v.fail(f"{path}.weights", "must be a nonempty list of numbers")
    else:
        v.check_keys(obj, path, ("kind",))


@dataclasses.dataclass(frozen=True)
class ConfigDocument:
    """Validated config: constructed objects plus the raw document."""

    model: CoefficientModel
    sim: SimConfig
    generator: Optional[GeneratorMatrix]
    initial_regime: int
    twoscale: Optional[TwoScaleSpec]
    study_kind: Optional[str]
    study_params: dict
    replicas: int
    seed: int
    output_dir: str
    output_format: str
    raw: dict

    def to_study_spec(
        self,
        *,
        kind: Optional[str] = None,
        seed: Optional[int] = None,
        replicas: Optional[int] = None,
        outdir: Optional[str] = None,
        output_format: Optional[str] = None,
    ) -> StudySpec:
        use_kind = kind or self.study_kind
        if use_kind is None:
            raise ConfigError(
                [SchemaViolation("study.kind", "required for study runs")]
            )
        return StudySpec(
            kind=use_kind,
            params=self.study_params,
            replicas=replicas if replicas is not None else self.replicas,
            seed=seed if seed is not None else self.seed,
            sim=self.sim,
            generator=self.generator,
            initial_regime=self.initial_regime,
            twoscale=self.twoscale,
            outdir=outdir if outdir is not None else self.output_dir,
            output_format=output_format or self.output_format,
            raw=self.raw,
        )


_MODEL_KINDS = ("mean-reverting-switch", "kernel-interaction")
_STUDY_PARAM_KEYS = {
    "lln": (
        "n_values", "m_reference", "checkpoint", "bl_cap",
        "approx_budget", "slope_window",
    ),
    "martingale": ("test_function", "time", "variance_window"),
    "twoscale": (
        "eps_values", "test_functions", "dt_max", "control",
        "initial_flat_state",
    ),
    "chain-checks": (
        "t_marginal", "paths_per_replica", "holding_per_replica",
        "tv_max", "ks_level",
    ),
}


def parse_config(text: str) -> ConfigDocument:
    """Parse and validate a config document; raise ParseError/ConfigError."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, exc.colno, exc.msg) from None
    if not isinstance(doc, dict):
        raise ConfigError(
            [SchemaViolation("", "top level must be a JSON object")]
        )

    v = _Validator()
    v.check_keys(
        doc, "", ("model", "chain", "twoscale", "sim", "study", "output"),
        ("model", "sim"),
    )

    # --- model ------------------------------------------------------------
    model = None
    regime_count = None
    dim = 1
    msec = v.section(doc, "model")
    if msec is not None:
        kind = msec.get("kind")
        if kind not in _MODEL_KINDS:
            v.fail("model.kind", f"must be one of {_MODEL_KINDS}")
        else:
            if kind == "mean-reverting-switch":
                v.check_keys(
                    msec, "model", ("kind", "pull", "push", "vol", "dim"),
                    ("pull", "push", "vol"),
                )
                lists = {k: msec.get(k) for k in ("pull", "push", "vol")}
            else:
                v.check_keys(
                    msec, "model", ("kind", "scale", "vol", "dim"),
                    ("scale", "vol"),
                )
                lists = {k: msec.get(k) for k in ("scale", "vol")}
            for name, val in lists.items():
                if val is not None and not (
                    isinstance(val, list) and val and all(_is_num(x) for x in val)
                ):
                    v.fail(f"model.{name}", "must be a nonempty list of numbers")
            if "dim" in msec and not (_is_int(msec["dim"]) and msec["dim"] >= 1):
                v.fail("model.dim", "must be a positive integer")
            lengths = {
                len(val) for val in lists.values() if isinstance(val, list)
            }
            if len(lengths) > 1:
                v.fail("model", "per-regime parameter lists differ in length")
            if not v.violations:
                dim = int(msec.get("dim", 1))
                params = {k: val for k, val in lists.items()}
                try:
                    model = builtin_model(kind, dim=dim, **params)
                    regime_count = model.regime_count
                except Exception as exc:
                    v.fail("model", str(exc))
    elif "model" in doc:
        pass  # already reported as not-an-object

    # --- chain / twoscale -------------------------------------------------
    generator = None
    twoscale_spec = None
    initial_regime = 0
    csec = v.section(doc, "chain")
    tsec = v.section(doc, "twoscale")
    if csec is not None and tsec is not None:
        v.fail("chain", "provide either chain or twoscale, not both")
    if csec is not None:
        v.check_keys(csec, "chain", ("rates", "initial"), ("rates",))
        rates = csec.get("rates")
        if rates is not None and not _is_matrix(rates):
            v.fail("chain.rates", "must be a square matrix of numbers")
        elif rates is not None:
            try:
                generator = validate_generator(rates)
            except Exception as exc:
                v.fail("chain.rates", str(exc))
        if "initial" in csec:
            if not _is_int(csec["initial"]):
                v.fail("chain.initial", "must be an integer state index")
            else:
                initial_regime = csec["initial"]
        if generator is not None and not (
            0 <= initial_regime < generator.m0
        ):
            v.fail("chain.initial", f"must lie in 0..{generator.m0 - 1}")
        if (
            generator is not None
            and regime_count is not None
            and generator.m0 != regime_count
        ):
            v.fail(
                "chain.rates",
                f"chain has {generator.m0} states but the model declares "
                f"{regime_count} regimes",
            )
    if tsec is not None:
        v.check_keys(
            tsec, "twoscale", ("blocks", "slow", "epsilon", "initial"),
            ("blocks", "slow", "epsilon"),
        )
        blocks_raw = tsec.get("blocks")
        slow_raw = tsec.get("slow")
        eps = tsec.get("epsilon")
        ok = True
        if not (
            isinstance(blocks_raw, list)
            and blocks_raw
            and all(_is_matrix(b) for b in blocks_raw)
        ):
            v.fail("twoscale.blocks", "must be a list of square matrices")
            ok = False
        if slow_raw is not None and not _is_matrix(slow_raw):
            v.fail("twoscale.slow", "must be a square matrix of numbers")
            ok = False
        if eps is not None and not (_is_num(eps) and eps > 0):
            v.fail("twoscale.epsilon", "must be a positive number")
            ok = False
        if "initial" in tsec:
            if not _is_int(tsec["initial"]):
                v.fail("twoscale.initial", "must be an integer flat state")
            else:
                initial_regime = tsec["initial"]
        if ok and blocks_raw is not None and slow_raw is not None and eps is not None:
            try:
                blocks = tuple(validate_generator(b) for b in blocks_raw)
                twoscale_spec = TwoScaleSpec(blocks, np.array(slow_raw), float(eps))
            except Exception as exc:
                v.fail("twoscale", str(exc))
        if (
            twoscale_spec is not None
            and regime_count is not None
            and twoscale_spec.m0 != regime_count
        ):
            v.fail(
                "twoscale.blocks",
                f"flat state space has {twoscale_spec.m0} states but the "
                f"model declares {regime_count} regimes",
            )
        if twoscale_spec is not None and not (
            0 <= initial_regime < twoscale_spec.m0
        ):
            v.fail("twoscale.initial", f"must lie in 0..{twoscale_spec.m0 - 1}")

    # --- sim ----------------------------------------------------------------
    sim = None
    ssec = v.section(doc, "sim")
    if ssec is not None:
        v.check_keys(
            ssec, "sim",
            ("particles", "horizon", "dt", "initial", "checkpoints"),
            ("particles", "horizon"),
        )
        particles = ssec.get("particles")
        horizon = ssec.get("horizon")
        dt = ssec.get("dt", DEFAULT_DT)
        if particles is not None and not (_is_int(particles) and particles >= 1):
            v.fail("sim.particles", "must be a positive integer")
        if horizon is not None and not (_is_num(horizon) and horizon > 0):
            v.fail("sim.horizon", "must be a positive number")
        if not (_is_num(dt) and dt > 0):
            v.fail("sim.dt", "must be a positive number")
        initial = InitialCondition()
        isec = ssec.get("initial")
        if isec is not None:
            if not isinstance(isec, dict):
                v.fail("sim.initial", "must be an object")
            else:
                ikind = isec.get("kind", "normal")
                if ikind == "normal":
                    v.check_keys(isec, "sim.initial", ("kind", "mean", "std"))
                    mean = isec.get("mean", 0.0)
                    std = isec.get("std", 1.0)
                    if not _is_num(mean):
                        v.fail("sim.initial.mean", "must be a number")
                    elif not (_is_num(std) and std >= 0):
                        v.fail("sim.initial.std", "must be a nonnegative number")
                    else:
                        initial = InitialCondition("normal", float(mean), float(std))
                elif ikind == "points":
                    v.check_keys(isec, "sim.initial", ("kind", "points"), ("points",))
                    pts = isec.get("points")
                    if not isinstance(pts, list) or not pts:
                        v.fail("sim.initial.points", "must be a nonempty list")
                    else:
                        try:
                            initial = InitialCondition(
                                "points", points=np.array(pts, dtype=float)
                            )
                        except Exception as exc:
                            v.fail("sim.initial.points", str(exc))
                else:
                    v.fail("sim.initial.kind", "must be 'normal' or 'points'")
        checkpoints = ssec.get("checkpoints")
        cps: Optional[Tuple[float, ...]] = None
        if checkpoints is not None:
            if not (
                isinstance(checkpoints, list)
                and checkpoints
                and all(_is_num(c) for c in checkpoints)
            ):
                v.fail("sim.checkpoints", "must be null or a list of numbers")
            else:
                cps = tuple(float(c) for c in checkpoints)
        if model is not None and not any(
            viol.key.startswith("sim") for viol in v.violations
        ):
            try:
                sim = SimConfig(
                    model, int(particles), float(horizon), float(dt), initial, cps
                )
            except Exception as exc:
                v.fail("sim", str(exc))

    # --- study --------------------------------------------------------------
    study_kind = None
    study_params: dict = {}
    replicas = DEFAULT_REPLICAS
    seed = 0
    stsec = v.section(doc, "study")
    if stsec is not None:
        kind = stsec.get("kind")
        if kind is not None and kind not in STUDY_KINDS:
            hint = difflib.get_close_matches(str(kind), STUDY_KINDS, n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            v.fail("study.kind", f"must be one of {STUDY_KINDS}{extra}")
        else:
            study_kind = kind
        allowed = ("kind", "replicas", "seed") + _STUDY_PARAM_KEYS.get(
            study_kind or "", ()
        )
        v.check_keys(stsec, "study", allowed)
        if "replicas" in stsec:
            if not (_is_int(stsec["replicas"]) and stsec["replicas"] >= 1):
                v.fail("study.replicas", "must be a positive integer")
            else:
                replicas = stsec["replicas"]
        if "seed" in stsec:
            if not _is_int(stsec["seed"]):
                v.fail("study.seed", "must be an integer")
            else:
                seed = stsec["seed"]
        if study_kind == "lln":
            nv = stsec.get("n_values")
            if not (
                isinstance(nv, list) and nv and all(_is_int(n) and n >= 1 for n in nv)
            ):
                v.fail("study.n_values", "must be a nonempty list of positive integers")
            mr = stsec.get("m_reference")
            if not (_is_int(mr) and mr >= 1):
                v.fail("study.m_reference", "must be a positive integer")
        elif study_kind == "martingale":
            if "test_function" in stsec:
                _validate_test_function(
                    v, stsec["test_function"], "study.test_function"
                )
        elif study_kind == "twoscale":
            ev = stsec.get("eps_values")
            if not (
                isinstance(ev, list)
                and ev
                and all(_is_num(e) and e > 0 for e in ev)
                and all(b < a for a, b in zip(ev, ev[1:]))
            ):
                v.fail(
                    "study.eps_values",
                    "must be a strictly decreasing list of positive numbers",
                )
            if "test_functions" in stsec:
                tfs = stsec["test_functions"]
                if not isinstance(tfs, list) or not tfs:
                    v.fail("study.test_functions", "must be a nonempty list")
                else:
                    for i, tf in enumerate(tfs):
                        _validate_test_function(v, tf, f"study.test_functions[{i}]")
            if "control" in stsec and stsec["control"] not in (None, "sigma"):
                v.fail("study.control", "must be null or 'sigma'")
        elif study_kind == "chain-checks":
            for key in ("t_marginal", "tv_max", "ks_level"):
                if key in stsec and not (_is_num(stsec[key]) and stsec[key] > 0):
                    v.fail(f"study.{key}", "must be a positive number")
            for key in ("paths_per_replica", "holding_per_replica"):
                if key in stsec and not (_is_int(stsec[key]) and stsec[key] >= 1):
                    v.fail(f"study.{key}", "must be a positive integer")
        study_params = {
            k: stsec[k]
            for k in stsec
            if k in _STUDY_PARAM_KEYS.get(study_kind or "", ())
        }
        if study_kind == "twoscale" and tsec is None:
            v.fail("twoscale", "twoscale studies need a twoscale section")
        if study_kind in ("lln", "martingale", "chain-checks") and csec is None:
            v.fail("chain", f"{study_kind} studies need a chain section")
    if csec is None and tsec is None:
        v.fail("chain", "either a chain or a twoscale section is required")

    # --- output -------------------------------------------------------------
    output_dir = "out"
    output_format = "csv"
    osec = v.section(doc, "output")
    if osec is not None:
        v.check_keys(osec, "output", ("dir", "format"))
        if "dir" in osec:
            if not isinstance(osec["dir"], str) or not osec["dir"]:
                v.fail("output.dir", "must be a nonempty string")
            else:
                output_dir = osec["dir"]
        if "format" in osec:
            if osec["format"] not in ("csv", "json"):
                v.fail("output.format", "must be 'csv' or 'json'")
            else:
                output_format = osec["format"]

    if v.violations:
        raise ConfigError(v.violations)

    return ConfigDocument(
        model=model,
        sim=sim,
        generator=generator,
        initial_regime=int(initial_regime),
        twoscale=twoscale_spec,
        study_kind=study_kind,
        study_params=study_params,
        replicas=int(replicas),
        seed=int(seed),
        output_dir=output_dir,
        output_format=output_format,
        raw=doc,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _load_config(path: str) -> ConfigDocument:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _cmd_simulate(args) -> int:
    doc = _load_config(args.config)
    if doc.generator is None:
        raise ConfigError(
            [SchemaViolation("chain", "simulate needs a chain section")]
        )
    seed = args.seed if args.seed is not None else doc.seed
    fmt = args.format or doc.output_format
    outdir = args.out or doc.output_dir
    traj, path = simulate_with_chain(
        doc.sim, doc.generator, doc.initial_regime, seed
    )
    digest = hashlib.sha256(
        json.dumps(
            {"config": doc.raw, "seed": seed}, sort_keys=True
        ).encode()
    ).hexdigest()
    base = Path(outdir) / f"simulate-{digest[:12]}"
    base.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        traj.to_csv(base / "trajectory.csv")
    else:
        payload = {
            "times": traj.times.tolist(),
            "regimes": traj.regimes.tolist(),
            "positions": traj.positions.tolist(),
        }
        _atomic_write_text(
            base / "trajectory.json",
            json.dumps(payload, sort_keys=True, indent=2) + "\n",
        )
    with open(base / "path.csv", "w", newline="", encoding="utf-8") as fh:
        path_to_csv(path, fh)
    from . import __version__

    terminal = traj.positions[-1]
    summary = {
        "command": "simulate",
        "final_time": float(traj.times[-1]),
        "final_regime": int(traj.regimes[-1]),
        "particles": traj.n,
        "dim": traj.dim,
        "recorded_times": int(traj.times.size),
        "jump_count": int(path.jump_times.size),
        "terminal_mean": [float(m) for m in terminal.mean(axis=0)],
        "terminal_second_moment": float((terminal**2).sum(axis=1).mean()),
        "provenance": {
            "config_hash": digest,
            "seed": seed,
            "package_version": __version__,
        },
    }
    _atomic_write_text(
        base / "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n"
    )
    print(f"simulate: wrote {base}")
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def _cmd_study(args, kind: str) -> int:
    doc = _load_config(args.config)
    if doc.study_kind is not None and doc.study_kind != kind:
        raise ConfigError(
            [
                SchemaViolation(
                    "study.kind",
                    f"config declares {doc.study_kind!r} but the "
                    f"subcommand runs {kind!r}",
                )
            ]
        )
    spec = doc.to_study_spec(
        kind=kind,
        seed=args.seed,
        replicas=args.replicas,
        outdir=args.out,
        output_format=args.format,
    )
    report = run_study(spec, threads=args.threads)
    sys.stdout.write(report.text())
    return 0 if report.passed else 1


def _cmd_metrics(args) -> int:
    mu = measure_from_csv(args.first)
    eta = measure_from_csv(args.second)
    result = {"first": args.first, "second": args.second}
    try:
        result["bl_distance"] = bl_distance_exact(mu, eta, cap=args.cap)
        result["bl_method"] = "exact"
    except SupportTooLarge:
        lb = bl_distance_approx(mu, eta, budget=args.budget)
        result["bl_distance"] = lb.value
        result["bl_method"] = f"lower-bound(budget={args.budget})"
    if mu.dim == 1 and eta.dim == 1:
        result["wasserstein1"] = wasserstein1_1d(mu, eta)
    if args.format == "json":
        print(json.dumps(result, sort_keys=True, indent=2))
    elif args.format == "csv":
        keys = sorted(result)
        print(",".join(keys))
        print(",".join(
            repr(result[k]) if isinstance(result[k], float) else str(result[k])
            for k in keys
        ))
    else:
        for key in sorted(result):
            print(f"{key}: {result[key]}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfswitch",
        description=(
            "Simulation and verification harness for mean-field particle "
            "systems with common regime switching"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_replicas=True):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument(
            "--format", choices=("csv", "json"), default=None,
            help="record format override",
        )
        if with_replicas:
            p.add_argument(
                "--replicas", type=int, default=None, help="replica count override"
            )
            p.add_argument(
                "--threads", type=int, default=1,
                help="executor width; never changes the numbers",
            )

    add_common(sub.add_parser("simulate", help="one run of the particle system"),
               with_replicas=False)
    for name in ("lln", "martingale", "twoscale"):
        add_common(sub.add_parser(name, help=f"replicated {name} study"))
    add_common(sub.add_parser("chain-check", help="chain sampler validation study"))

    metrics = sub.add_parser(
        "metrics", help="distances between two measure CSV files"
    )
    metrics.add_argument("first")
    metrics.add_argument("second")
    metrics.add_argument("--cap", type=int, default=2048)
    metrics.add_argument("--budget", type=int, default=4096)
    metrics.add_argument("--format", choices=("csv", "json", "text"), default="text")
    return parser


_SUBCOMMAND_KINDS = {
    "lln": "lln",
    "martingale": "martingale",
    "twoscale": "twoscale",
    "chain-check": "chain-checks",
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command in _SUBCOMMAND_KINDS:
            return _cmd_study(args, _SUBCOMMAND_KINDS[args.command])
        if args.command == "metrics":
            return _cmd_metrics(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ParseError as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure, not a config problem
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
