"""Command-line front end: describe scenarios, run campaigns, compare results.

Exit codes: 0 success, 1 campaign/runtime failure, 2 usage or configuration
error. All randomness flows from the resolved seed (flag, config file, or
the ENCKF_SEED environment variable, in that order); there are no hidden
entropy sources, so rerunning a command reproduces its CSV outputs byte for
byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import compare_report, read_report, run_campaign, write_report
from .scenarios import SCENARIO_NAMES, make_spec, scenario_constants

DEFAULT_SEED = 0

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


class CliError(Exception):
    """Usage/configuration problem; maps to exit code 2."""


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}")
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path) as fh:
            return json.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise CliError(f"could not parse config {path}: {exc}") from exc


def _parse_ensemble(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        values = [int(v) for v in text]
    else:
        try:
            values = [int(part) for part in str(text).split(",") if part.strip()]
        except ValueError as exc:
            raise CliError(f"bad --ensemble value {text!r}: {exc}") from exc
    if not values:
        raise CliError("--ensemble needs at least one size")
    return tuple(values)


def _parse_modes(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        modes = tuple(str(v) for v in text)
    else:
        modes = tuple(part.strip() for part in str(text).split(",") if part.strip())
    for mode in modes:
        if mode not in ("enkf", "enckf"):
            raise CliError(f"unknown mode {mode!r}; choose from enkf, enckf")
    if not modes:
        raise CliError("--modes needs at least one mode")
    return modes


def _resolve(flag_value, config: dict, key: str, default=None):
    """Flag wins over config file; config wins over the default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def cmd_describe(args) -> int:
    name = args.scenario
    if name not in SCENARIO_NAMES:
        print(
            f"unknown scenario {name!r}; available: {', '.join(SCENARIO_NAMES)}",
            file=sys.stderr,
        )
        return 2
    print(json.dumps(scenario_constants(name), indent=2))
    return 0


def cmd_run(args) -> int:
    config = _load_config(args.config) if args.config else {}
    scenario = _resolve(args.scenario, config, "scenario")
    if scenario is None:
        raise CliError("--scenario is required (flag or config file)")
    if scenario not in SCENARIO_NAMES:
        raise CliError(
            f"unknown scenario {scenario!r}; available: {', '.join(SCENARIO_NAMES)}"
        )
    seed = _resolve(args.seed, config, "seed")
    if seed is None:
        seed = int(os.environ.get("ENCKF_SEED", DEFAULT_SEED))
    ensemble = _resolve(args.ensemble, config, "ensemble")
    modes = _parse_modes(_resolve(args.modes, config, "modes", "enkf,enckf"))
    recenter = _resolve(args.recenter, config, "recenter", "on")
    if recenter not in ("on", "off"):
        raise CliError(f"--recenter must be 'on' or 'off', got {recenter!r}")
    workers = int(_resolve(args.workers, config, "workers", os.cpu_count() or 1))
    outdir = _resolve(args.out, config, "out", "enckf-results")
    overrides = config.get("overrides")

    try:
        spec = make_spec(
            scenario,
            steps=_resolve(args.steps, config, "steps"),
            mc_runs=_resolve(args.runs, config, "runs"),
            ensemble_sizes=_parse_ensemble(ensemble) if ensemble is not None else None,
            seed=int(seed),
            overrides=overrides,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    try:
        report = run_campaign(
            spec, modes=modes, recenter=(recenter == "on"), workers=workers
        )
        report.metadata["effective_config"] = {
            "scenario": spec.name,
            "steps": spec.steps,
            "runs": spec.mc_runs,
            "ensemble": list(spec.ensemble_sizes),
            "seed": spec.seed,
            "modes": list(modes),
            "recenter": recenter,
            "workers": workers,
            "out": outdir,
            "overrides": dict(overrides) if overrides else None,
        }
        paths = write_report(report, outdir)
    except Exception as exc:
        print(f"campaign failed: {exc}", file=sys.stderr)
        return 1

    print(f"scenario={spec.name} steps={spec.steps} runs={spec.mc_runs} seed={spec.seed}")
    print(f"{'mode':<8}{'m':>6}{'mean_rmse':>14}{'repairs':>10}")
    for mode in modes:
        for m in spec.ensemble_sizes:
            print(
                f"{mode:<8}{m:>6}{report.mean_rmse[(mode, m)]:>14.4f}"
                f"{report.repair_counts[(mode, m)]:>10}"
            )
    print(f"wrote {len(paths)} files to {outdir}")
    return 0


def cmd_compare(args) -> int:
    try:
        report = read_report(args.report_dir)
        summary = compare_report(report)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"cannot compare: {exc}", file=sys.stderr)
        return 2

    print(f"scenario={summary.scenario}")
    print(f"{'mode':<8}{'m':>6}{'mean_rmse':>14}")
    for (mode, m), value in sorted(summary.mean_rmse.items()):
        print(f"{mode:<8}{m:>6}{value:>14.4f}")
    for m, frac in sorted(summary.win_fraction.items()):
        print(f"enckf win fraction at m={m}: {frac:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enckf",
        description="Ensemble consider Kalman filter benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_desc = sub.add_parser("describe", help="print a scenario's constants as JSON")
    p_desc.add_argument("scenario")
    p_desc.set_defaults(func=cmd_describe)

    p_run = sub.add_parser("run", help="run a Monte Carlo campaign and write CSVs")
    p_run.add_argument("--scenario", choices=SCENARIO_NAMES)
    p_run.add_argument("--runs", type=int)
    p_run.add_argument("--steps", type=int)
    p_run.add_argument("--ensemble", help="comma-separated ensemble sizes, e.g. 13,21")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--modes", help="comma-separated subset of enkf,enckf")
    p_run.add_argument("--out", help="output directory (default enckf-results)")
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--config", help="TOML or JSON config file; flags override it")
    p_run.add_argument("--recenter", choices=("on", "off"))
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="summarize a results directory")
    p_cmp.add_argument("report_dir")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
