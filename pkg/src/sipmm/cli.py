"""Command-line front end.

    sipmm converge --preset example1 --paths 2000 --levels 5,6,7,8,9 \\
        --ref-level 12 --ref-scheme SIPMM --scheme SIPMM,SIPEM,BEM --seed 7 --out run1
    sipmm stress --preset example2 --paths 1000 --seed 1
    sipmm bench --preset example1 --paths 1000 --levels 6,7,8,9,10
    sipmm check

Configuration comes from a preset, a ``key=value`` file (``--config``), and
flags, in increasing order of precedence.  A manifest written by
``converge`` is itself a valid config file.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import secrets
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, SipmmError
from .harness import (
    ExperimentConfig,
    positivity_stress,
    run_self_check,
    run_strong_error,
    time_schemes,
)
from .model import EXAMPLE_1, EXAMPLE_2, EXAMPLE_3, ModelParams, Regime, classify_regime
from .output import emit_csv, emit_plot, fmt, write_manifest
from .projection import ProjectionConfig, default_exponent
from .schemes import SchemeKind, bem_residual, bem_step, explicit_part, positive_root

MODEL_KEYS = ("alpha_m1", "alpha_0", "alpha_1", "alpha_2", "sigma", "r", "rho", "x0")
RUN_KEYS = ("T", "q", "levels", "ref_level", "ref_scheme", "schemes", "paths", "seed", "error_norm")
KNOWN_KEYS = frozenset(MODEL_KEYS + RUN_KEYS + ("preset",))

PRESETS: dict[str, dict[str, object]] = {
    name: {**params.as_dict(), "T": 1.0}
    for name, params in (("example1", EXAMPLE_1), ("example2", EXAMPLE_2), ("example3", EXAMPLE_3))
}

# the published protocol: BEM reference at 2^-15, h = 2^-6..2^-10, 10^4 paths
PROTOCOL_DEFAULTS: dict[str, object] = {
    "levels": "6,7,8,9,10",
    "ref_level": 15,
    "ref_scheme": "BEM",
    "schemes": "SIPMM,BEM",
    "paths": 10_000,
}


class RegimeWarning(UserWarning):
    pass


def read_config_file(path) -> dict[str, tuple[str, str]]:
    """Parse ``key=value`` lines into ``{key: (value, origin)}``.

    Blank lines and ``#`` comments are skipped.  Keys prefixed ``config.``
    are accepted with the prefix removed and keys prefixed ``run.`` are
    ignored, so manifests can be fed back in.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config: {err.strerror}") from None
    out: dict[str, tuple[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        origin = f"{path}:{lineno}"
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{origin}: expected key=value, got {raw.strip()!r}")
        if key.startswith("run."):
            continue
        key = key.removeprefix("config.")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{origin}: unknown key {key!r}")
        out[key] = (value.strip(), origin)
    return out


def _convert(key: str, value, origin: str):
    try:
        if key in ("levels",):
            return tuple(int(v) for v in str(value).split(",") if v.strip())
        if key in ("schemes",):
            return tuple(SchemeKind.parse(v) for v in str(value).split(",") if v.strip())
        if key == "ref_scheme":
            return SchemeKind.parse(str(value))
        if key in ("ref_level", "paths", "seed"):
            return int(value)
        if key == "error_norm":
            return str(value)
        return float(value)
    except (ValueError, SipmmError) as err:
        raise ConfigError(f"{origin}: bad value for {key!r}: {err}") from None


def parse_config(
    path=None,
    *,
    preset: str | None = None,
    overrides: dict[str, object] | None = None,
    protocol_defaults: bool = True,
) -> ExperimentConfig:
    """Build and validate an ExperimentConfig.

    ``overrides`` maps config keys to flag values; missing model parameters
    raise ConfigError naming the key.  A CriticalHalfOnly parameter set
    emits RegimeWarning; an Inadmissible one raises ConfigError.  ``seed``
    must be present (the CLI draws one when the user gives none).
    """
    settings: dict[str, tuple[object, str]] = {}
    file_settings = read_config_file(path) if path is not None else {}
    preset = preset or (file_settings.get("preset", (None,))[0])
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"--preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        settings.update({k: (v, f"preset {preset}") for k, v in PRESETS[preset].items()})
    if protocol_defaults:
        for k, v in PROTOCOL_DEFAULTS.items():
            settings.setdefault(k, (v, "default"))
    settings.update({k: v for k, v in file_settings.items() if k != "preset"})
    for k, v in (overrides or {}).items():
        if v is not None:
            settings[k] = (v, "--" + k.replace("_", "-"))

    values = {}
    for key, (raw, origin) in settings.items():
        values[key] = _convert(key, raw, origin)
    for key in MODEL_KEYS:
        if key not in values:
            raise ConfigError(f"missing model parameter {key!r}")
    if "seed" not in values:
        raise ConfigError("missing 'seed'")

    params = ModelParams(**{k: values[k] for k in MODEL_KEYS})
    regime = classify_regime(params)
    if regime is Regime.INADMISSIBLE:
        raise ConfigError(
            f"parameters are inadmissible (r + 1 = {params.r + 1}, 2 rho = {2 * params.rho}, "
            f"alpha_2/sigma^2 = {params.alpha_2 / params.sigma**2}); no convergence theory applies"
        )
    if regime is Regime.CRITICAL_HALF_ONLY:
        warnings.warn(
            "critical case with alpha_2/sigma^2 < 4r + 1/2: the order-one guarantee "
            "does not apply to these parameters",
            RegimeWarning,
            stacklevel=2,
        )
    q = values.get("q", default_exponent(params.r))
    kwargs = dict(params=params, q=q, seed=values["seed"])
    for key, field_name in (
        ("T", "T"),
        ("levels", "levels"),
        ("ref_level", "ref_level"),
        ("ref_scheme", "ref_scheme"),
        ("schemes", "schemes"),
        ("paths", "num_paths"),
        ("error_norm", "error_norm"),
    ):
        if key in values:
            kwargs[field_name] = values[key]
    return ExperimentConfig(**kwargs)


def _model_only(args) -> tuple[ModelParams, float]:
    """Model parameters and q for commands that do not need a full protocol."""
    cfg = parse_config(
        args.config, preset=args.preset, overrides={"q": args.q, "seed": 0}, protocol_defaults=True
    )
    return cfg.params, cfg.q


def _flag_overrides(args) -> dict[str, object]:
    return {
        "schemes": args.scheme,
        "levels": args.levels,
        "ref_level": args.ref_level,
        "ref_scheme": args.ref_scheme,
        "paths": args.paths,
        "seed": args.seed,
        "q": args.q,
        "error_norm": getattr(args, "error_norm", None),
    }


def _resolve_seed(args) -> str:
    if args.seed is not None:
        return "flag"
    if args.config is not None and "seed" in read_config_file(args.config):
        return "config"
    args.seed = secrets.randbits(64)
    print(f"seed: {args.seed} (randomly drawn)", file=sys.stderr)
    return "random"


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def cmd_converge(args) -> int:
    source = _resolve_seed(args)
    cfg = parse_config(args.config, preset=args.preset, overrides=_flag_overrides(args))
    report = run_strong_error(cfg, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {"csv": emit_csv(report, out / "convergence.csv")}
    if len(cfg.levels) >= 2:
        artifacts["svg"] = emit_plot(report, out / "convergence.svg")
    manifest = out / "manifest.txt"
    entries: dict[str, object] = {
        "run.tool": "sipmm",
        "run.version": __version__,
        "run.command": "converge",
        "run.timestamp": _timestamp(),
        "run.seed_source": source,
        "run.threads": args.threads,
    }
    entries.update({f"run.artifact.{k}": v.name for k, v in artifacts.items()})
    entries["run.artifact.manifest"] = manifest.name
    entries.update({f"config.{k}": v for k, v in cfg.as_dict().items()})
    write_manifest(manifest, entries)

    print(f"{'scheme':6} {'level':>5} {'h':>12} {'rmse':>12}")
    for row in report.results:
        print(f"{row.scheme.value:6} {row.level:>5} {row.h:>12.6g} {row.rmse:>12.6g}")
    for scheme, fit in report.rates.items():
        print(f"{scheme.value}: fitted rate {fit.rate:.4f} (residual {fit.residual:.4f})")
    print(f"wrote {', '.join(str(p) for p in artifacts.values())}, {manifest}")
    return 0


def cmd_stress(args) -> int:
    if args.seed is None:
        _resolve_seed(args)
    params, q = _model_only(args)
    h_list = [float(h) for h in args.h_list.split(",")]
    report = positivity_stress(params, q, h_list, args.paths, args.seed)
    lines = ["scheme,h,steps,min_state,nonpositive"]
    for e in report.entries:
        lines.append(f"{e.scheme.value},{fmt(e.h)},{e.steps},{fmt(e.min_state)},{e.nonpositive}")
        status = "ok" if e.passed else "FAIL"
        print(f"{e.scheme.value:6} h={e.h:<8g} steps={e.steps:<6} min={e.min_state:.6g}  {status}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stress.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"T = {report.T:g}, paths = {report.num_paths}: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def cmd_bench(args) -> int:
    _resolve_seed(args)
    cfg = parse_config(args.config, preset=args.preset, overrides=_flag_overrides(args))
    times = time_schemes(cfg, repeats=args.repeats)
    lines = ["scheme,level,h,wall_time_s"]
    for (scheme, level), t in times.items():
        lines.append(f"{scheme.value},{level},{fmt(cfg.step(level))},{fmt(t)}")
        print(f"{scheme.value:6} level {level:>2}: {t:.4f} s")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    return 0


def _check_residuals(seed: int, n: int) -> bool:
    rng = np.random.default_rng(seed)
    params = EXAMPLE_1
    proj = ProjectionConfig.default(params.r)
    y = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), n))
    h = np.exp(rng.uniform(np.log(2.0**-15), np.log(0.5), n))
    dW = rng.standard_normal(n) * np.sqrt(h)
    worst = 0.0
    for milstein in (True, False):
        A = explicit_part(params, proj, y, h, dW, milstein)
        Y = positive_root(A, params.alpha_m1 * h)
        res = np.abs(Y * Y - A * Y - params.alpha_m1 * h) / np.maximum(1.0, Y * Y)
        worst = max(worst, float(res.max() / 1e-11))
    Y = bem_step(params, y, h, dW)
    G = np.abs(bem_residual(params, Y, y, h, dW)) / np.maximum(1.0, Y)
    worst = max(worst, float(G.max() / 1e-12))
    return worst <= 1.0


def cmd_check(args) -> int:
    """Reduced-size versions of the acceptance checks."""
    seed = 20240601 if args.seed is None else args.seed
    M = args.paths
    results = []

    for name in PRESETS:
        cfg = parse_config(preset=name, overrides={"seed": seed})
        rep = positivity_stress(cfg.params, cfg.q, [0.25, 1.0, 10.0], M, seed)
        results.append((f"positivity {name}", rep.passed))

    results.append(("step residuals", _check_residuals(seed, 10_000)))

    cfg = parse_config(
        preset="example1",
        overrides={"seed": seed, "paths": M, "levels": "5,6", "ref_level": 8, "ref_scheme": "SIPMM"},
    )
    results.append(("self-check rmse == 0", run_self_check(cfg).results[0].rmse == 0.0))

    for name in PRESETS:
        cfg = parse_config(
            preset=name,
            overrides={
                "seed": seed,
                "paths": M,
                "levels": "5,6,7,8,9",
                "ref_level": 12,
                "ref_scheme": "SIPMM",
                "schemes": "SIPMM,BEM",
            },
        )
        rep = run_strong_error(cfg, threads=args.threads)
        rate = rep.rates[SchemeKind.SIPMM].rate
        results.append((f"SIPMM rate {name} = {rate:.3f} in [0.80, 1.15]", 0.80 <= rate <= 1.15))
        bem = rep.rates[SchemeKind.BEM].rate
        results.append((f"BEM rate {name} = {bem:.3f} in [0.40, 0.80]", 0.40 <= bem <= 0.80))

    for label, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {label}")
    return 0 if all(ok for _, ok in results) else 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--q", type=float, help="truncation exponent (default 1/(2r-2))")
    p.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed; random if omitted")
    p.add_argument("--out", help="output directory")


def _add_protocol(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", help="comma-separated list of SIPMM, SIPEM, BEM")
    p.add_argument("--levels", help="comma-separated coarse levels l, h = T/2^l")
    p.add_argument("--ref-level", type=int)
    p.add_argument("--ref-scheme")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sipmm",
        description="Positivity-preserving Milstein schemes for the Ait-Sahalia model",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("converge", help="strong-error sweep; writes CSV, SVG and manifest")
    _add_common(p)
    _add_protocol(p)
    p.add_argument("--error-norm", choices=["terminal", "max"])
    p.set_defaults(func=cmd_converge, out="sipmm-out")

    p = sub.add_parser("stress", help="positivity stress test of the explicit schemes")
    _add_common(p)
    p.add_argument("--h-list", default="0.25,1,10")
    p.set_defaults(func=cmd_stress, paths=1000)

    p = sub.add_parser("bench", help="single-threaded timing of each scheme per level")
    _add_common(p)
    _add_protocol(p)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="reduced-size acceptance checks")
    p.add_argument("--paths", type=int, default=300)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error code=2 kind=ConfigError: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except SipmmError as err:
        print(f"error code={err.code} kind={type(err).__name__}: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
