"""Command-line front end.

Exit codes: 0 ok, 1 verification failure, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import verify
from .config import FIELD_NAMES, ConfigError, SystemConfig, dbm_to_mw
from .harness import SCHEMES, SweepSpec, run_sweep, run_trial
from .output import write_aggregate, write_json, write_raw, write_timing

log = logging.getLogger("cfmgm")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
OUT_DIR_ENV = "CFMGM_OUT_DIR"
SWEEP_KEYS = ("param", "values", "schemes", "trials")
DEGREE_FIELDS = ("aod_range",)

PRESETS = {
    "fig1": {"param": "users-per-group", "values": [16, 24, 32, 40, 48]},
    "fig2": {"param": "kappa-db", "values": [0, 2, 4, 6, 8, 10, 12]},
    "fig3": {"param": "txpower-dbm", "values": list(range(-6, 31, 3))},
    "table1": {"param": "users-per-group", "values": [16, 24, 32, 40, 48]},
}


def artifact_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


# -- configuration ---------------------------------------------------------

def _from_file_units(raw: dict) -> dict:
    out = dict(raw)
    for name in DEGREE_FIELDS:
        if name in out:
            out[name] = [math.radians(float(v)) for v in out[name]]
    return out


def _to_file_units(cfg: SystemConfig) -> dict:
    out = cfg.to_dict()
    for name in DEGREE_FIELDS:
        out[name] = [math.degrees(v) for v in out[name]]
    return out


def build_config(raw: dict, source: str = "config") -> SystemConfig:
    unknown = sorted(set(raw) - set(FIELD_NAMES))
    if unknown:
        raise ConfigError(f"{source}: unknown field(s) {', '.join(unknown)}")
    try:
        return SystemConfig(**_from_file_units(raw))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: bad value: {exc}") from None


def read_config_file(path: str | Path) -> tuple[dict, dict]:
    """Split a JSON config file into system fields and the optional ``sweep`` block."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    sweep = raw.pop("sweep", None) or {}
    if not isinstance(sweep, dict):
        raise ConfigError(f"{path}: 'sweep' must be an object")
    unknown = sorted(set(sweep) - set(SWEEP_KEYS))
    if unknown:
        raise ConfigError(f"{path}: unknown sweep field(s) {', '.join(unknown)}")
    return raw, sweep


def apply_overrides(system: dict, sweep: dict, overrides: list[str]) -> None:
    for item in overrides:
        key, sep, text = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        if key in SWEEP_KEYS:
            sweep[key] = value
        elif key in FIELD_NAMES:
            system[key] = value
        else:
            raise ConfigError(f"override: unknown field {key!r}")


def make_spec(cfg: SystemConfig, sweep: dict) -> SweepSpec:
    try:
        return SweepSpec(
            param=sweep.get("param", "none"),
            values=tuple(sweep.get("values", [0])),
            base=cfg,
            schemes=tuple(sweep.get("schemes", SCHEMES)),
            trials=sweep.get("trials"),
        )
    except TypeError as exc:
        raise ConfigError(f"sweep: {exc}") from None


def _gather(args) -> tuple[dict, dict]:
    system: dict = {}
    sweep: dict = {}
    if getattr(args, "preset", None):
        sweep.update(PRESETS[args.preset])
    if args.config:
        file_system, file_sweep = read_config_file(args.config)
        system.update(file_system)
        sweep.update(file_sweep)
    apply_overrides(system, sweep, args.override)
    if args.seed is not None:
        system["master_seed"] = args.seed
    return system, sweep


# -- commands ----------------------------------------------------------------

def cmd_verify(args) -> int:
    sizes = (args.n,) if args.n else (4, 8, 16)
    checks = verify.run_suite(sizes=sizes, seed=args.seed or 0, fault=args.inject_fault)
    failed = [c.name for c in checks if not c.passed]
    summary = {"passed": not failed, "failed": failed, "sizes": list(sizes), "checks": [c.as_dict() for c in checks]}
    print(json.dumps(summary, indent=2))
    return EXIT_OK if not failed else EXIT_VERIFY


def cmd_run(args) -> int:
    record_timing = args.timing or args.preset == "table1"
    preset = args.preset
    if args.manifest:
        try:
            manifest = json.loads(Path(args.manifest).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{args.manifest}: {exc}") from None
        sweep = dict(manifest["sweep"])
        record_timing = manifest.get("record_timing", False)
        preset = manifest.get("preset")
        internal = dict(manifest["config_internal"])
        if args.override:
            raise ConfigError("--override cannot be combined with --manifest")
        try:
            cfg = SystemConfig(**internal)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{args.manifest}: {exc}") from None
    else:
        system, sweep = _gather(args)
        cfg = build_config(system)
    spec = make_spec(cfg, sweep)

    out_dir = Path(args.out or os.environ.get(OUT_DIR_ENV, "results"))
    name = preset or ("sweep" if spec.param != "none" else "run")
    paths = {
        "raw": out_dir / f"{name}_raw.csv",
        "aggregate": out_dir / f"{name}_aggregate.csv",
        "manifest": out_dir / f"{name}_manifest.json",
    }
    if record_timing:
        paths["timing"] = out_dir / f"{name}_timing.csv"

    started = datetime.now(timezone.utc).isoformat()
    log.info("running %s: %d value(s) x %d trial(s), schemes %s",
             spec.param, len(spec.values), spec.n_trials, ",".join(spec.schemes))
    try:
        result = run_sweep(spec, workers=args.workers, record_timing=record_timing)
    except Exception as exc:  # noqa: BLE001
        log.error("run failed: %s", exc)
        return EXIT_RUNTIME
    write_raw(paths["raw"], result.raw)
    write_aggregate(paths["aggregate"], result.aggregate)
    if record_timing:
        _write_timing(paths["timing"], result)
    write_json(paths["manifest"], {
        "artifact_version": artifact_version(),
        "preset": preset,
        "config": _to_file_units(cfg),
        # exact internal values (radians) so a re-run is bit-for-bit identical
        "config_internal": cfg.to_dict(),
        "sweep": {"param": spec.param, "values": list(spec.values), "schemes": list(spec.schemes),
                  "trials": spec.n_trials},
        "master_seed": cfg.master_seed,
        "record_timing": record_timing,
        "workers": args.workers,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": {k: str(v) for k, v in paths.items()},
    })
    for row in result.aggregate:
        print(f"{row.scheme:7s} {row.sweep_param}={row.sweep_value:<8g} mean={row.mean_rate:.4f} "
              f"ci95=[{row.ci95_lo:.4f}, {row.ci95_hi:.4f}] n={row.n_trials} excluded={row.n_excluded}")
    return EXIT_OK


def _write_timing(path: Path, result) -> None:
    rows = []
    for value, trials in result.trials.items():
        for scheme in result.spec.schemes:
            times = [t.times[scheme] for t in trials if scheme in t.times]
            mean = float(np.mean(times)) if times else math.nan
            rows.append((scheme, result.spec.param, value, mean, len(times)))
    write_timing(path, rows)


def dof_report(cfg: SystemConfig, schemes, p_lo_dbm: float, p_hi_dbm: float, trials: int) -> list[dict]:
    """High-power slope of each scheme's rate measure against ``log2(P_t)``.

    CF-MGM uses ``E[log2(1 + t*)]``, which carries no slot normalization;
    baselines use their mean max-min rate.  The window is flagged when
    CF-MGM's mean fairness target at the low end is below 0 dB.
    """
    measures = {}
    low_snr = False
    for label, dbm in (("lo", p_lo_dbm), ("hi", p_hi_dbm)):
        pcfg = cfg.replace(tx_power_dbm=dbm)
        results = [run_trial(pcfg, t, schemes) for t in range(trials)]
        for scheme in schemes:
            if scheme == "cf-mgm":
                vals = [math.log2(1.0 + r.t_star) for r in results]
                if label == "lo" and np.mean([r.t_star for r in results]) < 1.0:
                    low_snr = True
            else:
                vals = [r.rates[scheme] for r in results]
            measures[(scheme, label)] = float(np.nanmean(vals))
    span = math.log2(dbm_to_mw(p_hi_dbm)) - math.log2(dbm_to_mw(p_lo_dbm))
    return [
        {
            "scheme": s,
            "slope": (measures[(s, "hi")] - measures[(s, "lo")]) / span,
            "measure_lo": measures[(s, "lo")],
            "measure_hi": measures[(s, "hi")],
            "p_lo_dbm": p_lo_dbm,
            "p_hi_dbm": p_hi_dbm,
            "below_noise_floor": low_snr,
        }
        for s in schemes
    ]


def cmd_dof(args) -> int:
    system, sweep = _gather(args)
    cfg = build_config(system)
    schemes = tuple(sweep.get("schemes", args.schemes.split(",")))
    trials = int(sweep.get("trials", args.trials))
    if not args.p_lo_dbm < args.p_hi_dbm:
        raise ConfigError("need --p-lo-dbm < --p-hi-dbm")
    try:
        report = dof_report(cfg, schemes, args.p_lo_dbm, args.p_hi_dbm, trials)
    except Exception as exc:  # noqa: BLE001
        log.error("dof failed: %s", exc)
        return EXIT_RUNTIME
    if report and report[0]["below_noise_floor"]:
        log.warning("window starts below the noise floor; slopes are not high-SNR estimates")
    print(json.dumps(report, indent=2))
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config or sweep field (repeatable)")
    p.add_argument("--seed", type=int, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfmgm", description="CSIT-free multi-group multicast simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the self-verification suite")
    p.add_argument("--n", type=int, help="run at this size only")
    p.add_argument("--seed", type=int)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="run a scenario or a sweep")
    _common(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--manifest", metavar="PATH", help="re-run exactly from a manifest")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_DIR_ENV} or ./results)")
    p.add_argument("--timing", action="store_true", help="record decision times in the raw CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("dof", help="estimate high-power rate slopes")
    _common(p)
    p.add_argument("--p-lo-dbm", type=float, default=20.0)
    p.add_argument("--p-hi-dbm", type=float, default=30.0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--schemes", default="cf-mgm,mrt")
    p.set_defaults(func=cmd_dof)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
