"""Wrap-aware angular errors and RMSE scoring against a reference trajectory."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import EvaluationError
from .scene import Trajectory
from .tracker import SmoothedEstimate, Source, wrap_angle


class Scoring(str, Enum):
    ACTIVE_ONLY = "active-only"
    ALL_EMITTED = "all-emitted"


@dataclass(frozen=True)
class ScoreReport:
    rmse_azimuth_deg: float
    rmse_elevation_deg: float | None
    n_scored_blocks: int
    n_skipped_blocks: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BlockError:
    frame_index: int
    time_s: float
    azimuth_error_deg: float
    elevation_error_deg: float | None


def angular_error(estimate_deg, truth_deg, circular: bool = True):
    """Absolute error in degrees; circular errors are wrapped to (-180, 180] first."""
    diff = np.asarray(estimate_deg, float) - np.asarray(truth_deg, float)
    if circular:
        diff = wrap_angle(diff)
    out = np.abs(diff)
    return out if np.ndim(out) else float(out)


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(values))))


def block_errors(
    estimates: Iterable[SmoothedEstimate],
    truth: Trajectory,
    scoring: Scoring | str = Scoring.ACTIVE_ONLY,
    *,
    with_elevation: bool = True,
) -> tuple[list[BlockError], int]:
    """Errors of every scorable block plus the number of skipped blocks.

    A block is skipped when it has no direction, when active-only scoring is
    requested and it was not corrected, or when its timestamp falls outside
    the truth span.
    """
    scoring = Scoring(scoring)
    errors: list[BlockError] = []
    skipped = 0
    for est in estimates:
        usable = est.direction is not None and (
            scoring is Scoring.ALL_EMITTED or est.source is Source.CORRECTED
        )
        if not usable or not (truth.start <= est.time_s <= truth.end):
            skipped += 1
            continue
        t_az, t_el = truth.sample(est.time_s)
        e_az = angular_error(est.direction.azimuth_deg, float(t_az), circular=True)
        e_el = (
            angular_error(est.direction.elevation_deg, float(t_el), circular=False)
            if with_elevation
            else None
        )
        errors.append(BlockError(est.frame_index, est.time_s, e_az, e_el))
    return errors, skipped


def rmse(
    estimates: Iterable[SmoothedEstimate],
    truth: Trajectory,
    scoring: Scoring | str = Scoring.ACTIVE_ONLY,
    *,
    with_elevation: bool = True,
) -> ScoreReport:
    errors, skipped = block_errors(estimates, truth, scoring, with_elevation=with_elevation)
    if not errors:
        raise EvaluationError("no scorable blocks")
    az = np.array([e.azimuth_error_deg for e in errors])
    el = _rms(np.array([e.elevation_error_deg for e in errors])) if with_elevation else None
    return ScoreReport(_rms(az), el, len(errors), skipped)


def write_errors_csv(path: str | Path, errors: list[BlockError]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block_index", "time_s", "azimuth_error_deg", "elevation_error_deg"])
        for e in errors:
            el = "" if e.elevation_error_deg is None else f"{e.elevation_error_deg:.6f}"
            w.writerow([e.frame_index, f"{e.time_s:.6f}", f"{e.azimuth_error_deg:.6f}", el])
