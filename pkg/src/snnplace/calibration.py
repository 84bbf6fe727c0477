"""Hyperparameter calibration: grid search over (tau_gi, theta).

The search trains one small ensemble per inhibitory-conductance time
constant on a calibration place range that is geographically disjoint
from the test range, then scores every threshold value against the
calibration queries.  Thresholding is post-hoc — it only re-flags neurons
from cached reference totals — so each trained ensemble is reused across
the whole theta axis, and sweeping a threshold over cached query
responses is exactly equal to a fresh detect-and-evaluate run.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .ensemble import (
    EnsembleModel,
    collect_query_responses,
    detect_hyperactive,
    partition_reference,
    train_ensemble,
)
from .errors import ConfigError
from .expert import ExpertConfig
from .imaging import EncodingConfig, PatchNormConfig, derive_seed
from .metrics import precision_at_100_recall, records_from_responses
from .network import SimulationParams

DEFAULT_TAU_GI_GRID = (0.5, 1.0, 2.0, 4.0)
DEFAULT_THETA_GRID = tuple(float(t) for t in range(20, 201, 20))


@dataclass(frozen=True)
class CalibrationPlan:
    """Grids plus the calibration place range [cal_start, cal_stop)."""

    tau_gi_grid: tuple[float, ...] = DEFAULT_TAU_GI_GRID
    theta_grid: tuple[float, ...] = DEFAULT_THETA_GRID
    cal_start: int = 0
    cal_stop: int = 25

    def validate(self) -> None:
        if not self.tau_gi_grid or not self.theta_grid:
            raise ConfigError("calibration grids must be non-empty")
        if any(t <= 0 for t in self.tau_gi_grid):
            raise ConfigError("tau_gi values must be > 0")
        if not 0 <= self.cal_start < self.cal_stop:
            raise ConfigError("calibration place range is empty or negative")


@dataclass
class CalibrationReport:
    """Score matrix over the grid and the selected cell."""

    tau_gi_grid: tuple[float, ...]
    theta_grid: tuple[float, ...]
    scores: np.ndarray          # (n_tau, n_theta) precision at 100% recall
    cell_seconds: np.ndarray    # scoring time per cell
    train_seconds: np.ndarray   # ensemble training+totals time per tau row
    chosen_tau_gi: float
    chosen_theta: float
    files_read: tuple[str, ...] = ()

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau_gi_ms", "theta", "p_at_100r", "cell_seconds"])
            for i, tau in enumerate(self.tau_gi_grid):
                for j, theta in enumerate(self.theta_grid):
                    writer.writerow([tau, theta, self.scores[i, j], self.cell_seconds[i, j]])

    def write_chosen_json(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(
                {"tau_gi_ms": self.chosen_tau_gi, "theta": self.chosen_theta},
                fh, indent=1, sort_keys=True,
            )
            fh.write("\n")


def _select(scores: np.ndarray, taus, thetas) -> tuple[float, float]:
    """Argmax cell; ties prefer the smaller theta, then the smaller tau_gi."""
    best = None
    for i, tau in enumerate(taus):
        for j, theta in enumerate(thetas):
            key = (-scores[i, j], theta, tau)
            if best is None or key < best[0]:
                best = (key, tau, theta)
    return best[1], best[2]


def run_grid_search(
    plan: CalibrationPlan,
    cal_reference: np.ndarray,
    cal_queries: np.ndarray,
    cal_truths,
    expert_cfg: ExpertConfig,
    sim: SimulationParams,
    encoding: EncodingConfig,
    patch: PatchNormConfig,
    global_seed: int,
    workers: int = 1,
    files_read: tuple[str, ...] = (),
) -> CalibrationReport:
    """Evaluate every (tau_gi, theta) pair on the calibration split.

    ``cal_reference`` is (n_traverses, n_cal_places, H, W) holding only the
    calibration range; ``cal_truths`` are place ids local to that range.
    One ensemble is trained per tau_gi and shared by all theta cells.
    """
    plan.validate()
    n_tau, n_theta = len(plan.tau_gi_grid), len(plan.theta_grid)
    scores = np.zeros((n_tau, n_theta))
    cell_seconds = np.zeros((n_tau, n_theta))
    train_seconds = np.zeros(n_tau)
    part = partition_reference(cal_reference.shape[1], expert_cfg.places_per_expert)

    for i, tau_gi in enumerate(plan.tau_gi_grid):
        tick = time.perf_counter()
        model = train_ensemble(
            cal_reference, part, expert_cfg, sim.with_tau_gi(tau_gi),
            encoding, patch, derive_cal_seed(global_seed, tau_gi), workers,
        )
        detect_hyperactive(model, cal_reference, None, workers)
        responses = collect_query_responses(model, cal_queries, workers)
        train_seconds[i] = time.perf_counter() - tick
        for j, theta in enumerate(plan.theta_grid):
            tick = time.perf_counter()
            records = records_from_responses(model, responses, cal_truths, theta=theta)
            scores[i, j] = precision_at_100_recall(records)
            cell_seconds[i, j] = time.perf_counter() - tick

    chosen_tau, chosen_theta = _select(scores, plan.tau_gi_grid, plan.theta_grid)
    return CalibrationReport(
        tau_gi_grid=plan.tau_gi_grid,
        theta_grid=plan.theta_grid,
        scores=scores,
        cell_seconds=cell_seconds,
        train_seconds=train_seconds,
        chosen_tau_gi=chosen_tau,
        chosen_theta=chosen_theta,
        files_read=tuple(files_read),
    )


def derive_cal_seed(global_seed: int, tau_gi: float) -> int:
    """Distinct training seed per tau_gi row (tau encoded in fixed point)."""
    return derive_seed(global_seed, 1000 + int(round(tau_gi * 1000)))


def theta_sweep(
    model: EnsembleModel,
    queries: np.ndarray,
    truths,
    thetas=DEFAULT_THETA_GRID,
    workers: int = 1,
    responses: np.ndarray | None = None,
) -> list[tuple[float, float]]:
    """Precision at 100% recall as a function of the hyperactivity threshold.

    Always evaluates the unfiltered baseline (theta = 0) first, then every
    grid value; responses are simulated once and every threshold is scored
    from that cache.
    """
    if responses is None:
        responses = collect_query_responses(model, queries, workers)
    curve = []
    for theta in [0.0] + [float(t) for t in thetas if t != 0]:
        records = records_from_responses(model, responses, truths, theta=theta)
        curve.append((theta, precision_at_100_recall(records)))
    return curve


def select_theta(curve) -> float:
    """Pick the calibrated threshold from a sweep curve.

    Maximizes precision over the candidate thresholds (the theta = 0
    baseline is not a candidate); ties prefer the smaller threshold.
    """
    candidates = [(theta, p) for theta, p in curve if theta > 0]
    if not candidates:
        raise ConfigError("sweep curve holds no positive thresholds")
    best = max(p for _, p in candidates)
    return min(theta for theta, p in candidates if p == best)


def write_theta_sweep_csv(path: str | os.PathLike, curve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "p_at_100r"])
        writer.writerows(curve)
