"""Monte Carlo campaign runner and RMSE aggregation.

A campaign runs N independent truth realizations and feeds each one to every
requested (filter mode, ensemble size) combination, so the comparison is
paired: both filters see identical truths and measurements. Aggregation is a
deterministic reduction keyed by run index, which makes results independent
of worker count and completion order.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from . import __version__
from .filters import FilterConfig, FilterRngs, init_filter, step
from .scenarios import Scenario, ScenarioSpec, build_scenario, generate_truth

DEFAULT_MODES = ("enkf", "enckf")

Key = tuple[str, int]  # (mode, ensemble size)


@dataclass(eq=False)
class RmseReport:
    """Per-epoch and aggregate RMSE for every (mode, ensemble size) pair.

    per_epoch maps (mode, m) to a (K, n) array: root mean squared estimation
    error across runs, per epoch and state component, epochs 1..K (the
    initial condition is excluded). mean_rmse averages that array over both
    axes; component_mean keeps the per-component averages.
    """

    scenario: str
    modes: tuple[str, ...]
    ensemble_sizes: tuple[int, ...]
    per_epoch: dict[Key, np.ndarray]
    mean_rmse: dict[Key, float]
    component_mean: dict[Key, np.ndarray]
    repair_counts: dict[Key, int]
    metadata: dict = field(default_factory=dict)


@dataclass(eq=False)
class ComparisonSummary:
    """Per-mode means and the consider filter's epoch-wise win fraction."""

    scenario: str
    mean_rmse: dict[Key, float]
    win_fraction: dict[int, float]  # per ensemble size; ties count as non-wins


def _model_for_mode(scenario: Scenario, mode: str):
    return scenario.model if mode == "enckf" else scenario.enkf_model()


def _single_run(
    spec: ScenarioSpec,
    modes: tuple[str, ...],
    recenter: bool,
    run_index: int,
) -> tuple[dict[Key, np.ndarray], dict[Key, int]]:
    """Squared errors and repair counts for one truth realization."""
    scenario = build_scenario(spec.name, spec.overrides)
    truth = generate_truth(scenario, spec, run_index)
    sq_errors: dict[Key, np.ndarray] = {}
    repairs: dict[Key, int] = {}
    for mode in modes:
        model = _model_for_mode(scenario, mode)
        for m in spec.ensemble_sizes:
            cfg = FilterConfig(
                ensemble_size=m, mode=mode, recenter_resample=recenter, seed=spec.seed
            )
            rngs = FilterRngs.from_seed(spec.seed, run_index)
            state = init_filter(model, scenario.x0_mean, scenario.P0, cfg, rngs)
            err = np.empty((spec.steps, model.state_dim))
            try:
                for k in range(spec.steps):
                    state, est = step(state, model, truth.measurements[k], cfg)
                    err[k] = est.mean_state - truth.states[k + 1]
            except Exception as exc:
                raise RuntimeError(
                    f"campaign failed at run {run_index}, mode {mode}, m={m}: {exc}"
                ) from exc
            sq_errors[(mode, m)] = err**2
            repairs[(mode, m)] = state.repair_stats.clamps
    return sq_errors, repairs


def _single_run_args(args):
    return _single_run(*args)


def run_campaign(
    spec: ScenarioSpec,
    modes: tuple[str, ...] = DEFAULT_MODES,
    recenter: bool = True,
    workers: int = 1,
) -> RmseReport:
    """Run the paired Monte Carlo campaign described by `spec`.

    RMSE at epoch k, component c is sqrt(mean over runs of squared posterior
    error); mean_rmse averages over epochs and components. Runs fan out over
    `workers` processes; results are identical for any worker count.
    """
    modes = tuple(modes)
    if not modes or any(mode not in DEFAULT_MODES for mode in modes):
        raise ValueError(f"modes must be a non-empty subset of {DEFAULT_MODES}")
    t0 = time.perf_counter()
    run_args = [(spec, modes, recenter, r) for r in range(spec.mc_runs)]
    if workers > 1 and spec.mc_runs > 1:
        with Pool(processes=min(workers, spec.mc_runs)) as pool:
            results = pool.map(_single_run_args, run_args)
    else:
        results = [_single_run(*args) for args in run_args]

    keys = [(mode, m) for mode in modes for m in spec.ensemble_sizes]
    state_dim = build_scenario(spec.name, spec.overrides).model.state_dim
    sq_sum = {key: np.zeros((spec.steps, state_dim)) for key in keys}
    repair_counts = {key: 0 for key in keys}
    for sq_errors, repairs in results:
        for key in keys:
            sq_sum[key] += sq_errors[key]
            repair_counts[key] += repairs[key]

    per_epoch = {key: np.sqrt(sq_sum[key] / spec.mc_runs) for key in keys}
    mean_rmse = {key: float(np.mean(per_epoch[key])) for key in keys}
    component_mean = {key: per_epoch[key].mean(axis=0) for key in keys}
    metadata = {
        "scenario": spec.name,
        "steps": spec.steps,
        "mc_runs": spec.mc_runs,
        "ensemble_sizes": list(spec.ensemble_sizes),
        "seed": spec.seed,
        "modes": list(modes),
        "recenter_resample": recenter,
        "overrides": dict(spec.overrides) if spec.overrides else None,
        "rmse_definition": "per-epoch RMSE across runs, epochs 1..K; "
        "mean over epochs then components",
        "repair_counts": {f"{mode},m={m}": repair_counts[(mode, m)] for mode, m in keys},
        "wall_clock_s": round(time.perf_counter() - t0, 3),
        "version": __version__,
    }
    return RmseReport(
        scenario=spec.name,
        modes=modes,
        ensemble_sizes=spec.ensemble_sizes,
        per_epoch=per_epoch,
        mean_rmse=mean_rmse,
        component_mean=component_mean,
        repair_counts=repair_counts,
        metadata=metadata,
    )


def compare_report(report: RmseReport) -> ComparisonSummary:
    """Summarize a two-mode report: means plus the consider win fraction.

    The win fraction for ensemble size m is the share of (epoch, component)
    cells where the consider filter's RMSE is strictly below the baseline's;
    ties count as non-wins.
    """
    if not {"enkf", "enckf"} <= set(report.modes):
        raise ValueError("comparison needs both filter modes in the report")
    win_fraction = {}
    for m in report.ensemble_sizes:
        enkf = report.per_epoch[("enkf", m)]
        enckf = report.per_epoch[("enckf", m)]
        win_fraction[m] = float(np.mean(enckf < enkf))
    return ComparisonSummary(
        scenario=report.scenario,
        mean_rmse=dict(report.mean_rmse),
        win_fraction=win_fraction,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def per_epoch_filename(scenario: str, mode: str, m: int) -> str:
    return f"{scenario}_{mode}_m{m}.csv"


def write_report(report: RmseReport, outdir: str) -> list[str]:
    """Write per-epoch CSVs, the summary CSV, and the JSON metadata sidecar.

    Files are staged with a .partial suffix and renamed once everything has
    been written, so an interrupted write never leaves files that look
    complete. Returns the final paths. CSV bytes are reproducible for equal
    seeds; the metadata sidecar additionally carries wall-clock time.
    """
    os.makedirs(outdir, exist_ok=True)
    staged: list[tuple[str, str]] = []

    def stage(name: str) -> str:
        final = os.path.join(outdir, name)
        partial = final + ".partial"
        staged.append((partial, final))
        return partial

    for (mode, m), rmse in report.per_epoch.items():
        with open(stage(per_epoch_filename(report.scenario, mode, m)), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "component", "rmse"])
            for k in range(rmse.shape[0]):
                for c in range(rmse.shape[1]):
                    writer.writerow([k + 1, c + 1, _fmt(rmse[k, c])])

    both_modes = {"enkf", "enckf"} <= set(report.modes)
    with open(stage("summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "m", "mean_rmse", "win_fraction", "repair_count"])
        for mode in report.modes:
            other = "enkf" if mode == "enckf" else "enckf"
            for m in report.ensemble_sizes:
                # win fraction: cells where this mode strictly beats the other
                if both_modes:
                    win = _fmt(
                        np.mean(report.per_epoch[(mode, m)] < report.per_epoch[(other, m)])
                    )
                else:
                    win = ""
                writer.writerow(
                    [mode, m, _fmt(report.mean_rmse[(mode, m)]), win,
                     report.repair_counts[(mode, m)]]
                )

    with open(stage("metadata.json"), "w") as fh:
        json.dump(report.metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for partial, final in staged:
        os.replace(partial, final)
    return [final for _, final in staged]


def read_report(outdir: str) -> RmseReport:
    """Rebuild a report from a results directory written by `write_report`.

    Validates CSV structure and reports the offending file and line on
    malformed input. Repair counts and aggregate means are recomputed from
    the summary CSV and per-epoch files.
    """
    meta_path = os.path.join(outdir, "metadata.json")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"missing metadata sidecar: {meta_path}")
    with open(meta_path) as fh:
        metadata = json.load(fh)
    scenario = metadata["scenario"]
    modes = tuple(metadata["modes"])
    sizes = tuple(int(m) for m in metadata["ensemble_sizes"])
    steps = int(metadata["steps"])

    per_epoch: dict[Key, np.ndarray] = {}
    for mode in modes:
        for m in sizes:
            path = os.path.join(outdir, per_epoch_filename(scenario, mode, m))
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing per-epoch file: {path}")
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != ["epoch", "component", "rmse"]:
                    raise ValueError(f"{path}:1: bad header {header!r}")
                cells: dict[tuple[int, int], float] = {}
                for lineno, row in enumerate(reader, start=2):
                    try:
                        k, c, value = int(row[0]), int(row[1]), float(row[2])
                    except (IndexError, ValueError) as exc:
                        raise ValueError(f"{path}:{lineno}: bad row {row!r}") from exc
                    cells[(k, c)] = value
            n = max(c for _, c in cells)
            if len(cells) != steps * n:
                raise ValueError(f"{path}: expected {steps * n} rows, got {len(cells)}")
            rmse = np.empty((steps, n))
            for (k, c), value in cells.items():
                rmse[k - 1, c - 1] = value
            per_epoch[(mode, m)] = rmse

    repair_counts = {
        (mode, m): int(metadata["repair_counts"][f"{mode},m={m}"])
        for mode in modes
        for m in sizes
    }
    return RmseReport(
        scenario=scenario,
        modes=modes,
        ensemble_sizes=sizes,
        per_epoch=per_epoch,
        mean_rmse={key: float(np.mean(arr)) for key, arr in per_epoch.items()},
        component_mean={key: arr.mean(axis=0) for key, arr in per_epoch.items()},
        repair_counts=repair_counts,
        metadata=metadata,
    )
