"""Mapping wavefront residuals to interferometric visibility and lock state.

A single-parameter overlap model connects residual wavefront variance to
fringe visibility: v = v0 exp(-kappa sigma^2 / 2), with v0 the visibility
under ambient conditions. The proportionality between the sensor's
slope-variance metric and the true wavefront variance is absorbed into
kappa during calibration, so calibrated maps are fed slope-variance values
directly. Phase-lock feasibility is a threshold model on visibility and
slope variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from .skr import DomainError

__all__ = [
    "LockStatus",
    "LockThresholds",
    "VisibilityMap",
    "VisibilityPoint",
    "CalibrationFit",
    "visibility_from_residual",
    "calibrate_map",
    "lock_status",
    "lock_duration",
    "LUCKY_LOCK_DURATION_S",
    "LUCKY_ACQUISITION_FACTOR",
]

# Transient locks under strong turbulence last about two seconds and take
# over three times as long to acquire.
LUCKY_LOCK_DURATION_S = 2.0
LUCKY_ACQUISITION_FACTOR = 3.0


class LockStatus(Enum):
    LOCKED = "locked"
    LUCKY = "lucky"
    UNLOCKED = "unlocked"


@dataclass(frozen=True)
class LockThresholds:
    """Operating limits of the phase lock.

    Without adaptive optics no lock survives above ``no_ao_limit`` slope
    variance; between ``min_visibility`` and ``lock_visibility`` a lock is
    only achieved transiently once the slope variance exceeds
    ``lucky_slope_variance``.
    """

    lock_visibility: float = 0.02
    min_visibility: float = 0.005
    lucky_slope_variance: float = 0.025
    no_ao_limit: float = 0.2


@dataclass(frozen=True)
class VisibilityMap:
    """Calibrated residual-variance-to-visibility model."""

    ambient_visibility: float
    coupling_coefficient: float

    def __post_init__(self):
        if not 0.0 < self.ambient_visibility <= 1.0:
            raise DomainError(
                f"ambient visibility {self.ambient_visibility} outside (0, 1]")
        if self.coupling_coefficient < 0.0:
            raise DomainError("coupling coefficient must be non-negative")


@dataclass(frozen=True)
class VisibilityPoint:
    """One visibility measurement or prediction."""

    slope_variance: float
    visibility: float
    ao_enabled: bool
    lock_status: LockStatus
    visibility_std: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise DomainError(f"visibility {self.visibility} outside [0, 1]")
        if self.visibility_std < 0.0:
            raise DomainError("visibility std must be non-negative")


@dataclass(frozen=True)
class CalibrationFit:
    """Calibration output with per-point residuals."""

    map: VisibilityMap
    residuals: np.ndarray
    rms: float


def visibility_from_residual(vmap: VisibilityMap,
                             residual_variance: float) -> float:
    """Overlap-attenuated visibility v0 exp(-kappa sigma^2 / 2)."""
    if residual_variance < 0.0:
        raise DomainError(f"residual variance {residual_variance} < 0")
    return vmap.ambient_visibility * math.exp(
        -vmap.coupling_coefficient * residual_variance / 2.0)


def calibrate_map(reference_points,
                  ambient_visibility: float | None = None) -> CalibrationFit:
    """Least-squares fit of the coupling coefficient to reference pairs.

    ``reference_points`` is a sequence of (slope_variance, visibility)
    pairs. The ambient visibility is pinned: either passed explicitly or
    taken from the pair with the smallest slope variance. Only kappa is
    fitted, by minimising the squared visibility error.
    """
    pts = np.asarray(list(reference_points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise DomainError("calibration needs at least two (sv, vis) pairs")
    sv, vis = pts[:, 0], pts[:, 1]
    if np.unique(sv).size != sv.size:
        raise DomainError("slope variances must be distinct")
    if np.all(vis == vis[0]) and np.unique(sv).size > 1 and vis[0] != 0:
        # constant visibility over distinct variances has no decay to fit
        raise DomainError("degenerate calibration input: constant visibility")
    v0 = ambient_visibility
    if v0 is None:
        v0 = float(vis[np.argmin(sv)])
    if not 0.0 < v0 <= 1.0:
        raise DomainError(f"ambient visibility {v0} outside (0, 1]")

    def sse(kappa: float) -> float:
        r = v0 * np.exp(-kappa * sv / 2.0) - vis
        return float(r @ r)

    # bracket the optimum on a log grid, then refine
    grid = np.geomspace(1e-3, 1e7, 2001)
    values = [sse(k) for k in grid]
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(sse, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-9})
    kappa = float(res.x)
    residuals = v0 * np.exp(-kappa * sv / 2.0) - vis
    return CalibrationFit(
        map=VisibilityMap(ambient_visibility=v0, coupling_coefficient=kappa),
        residuals=residuals,
        rms=float(np.sqrt(np.mean(residuals**2))),
    )


def lock_status(visibility: float, slope_variance: float, ao_enabled: bool,
                thresholds: LockThresholds = LockThresholds()) -> LockStatus:
    """Classify the phase lock for an operating point."""
    if not (math.isfinite(visibility) and math.isfinite(slope_variance)):
        raise DomainError("lock classification needs finite inputs")
    if not ao_enabled and slope_variance > thresholds.no_ao_limit:
        return LockStatus.UNLOCKED
    if visibility >= thresholds.lock_visibility:
        return LockStatus.LOCKED
    if visibility > thresholds.min_visibility and \
            slope_variance > thresholds.lucky_slope_variance:
        return LockStatus.LUCKY
    return LockStatus.UNLOCKED


def lock_duration(status: LockStatus) -> float:
    """Expected phase-lock hold time in seconds for a lock state."""
    if status is LockStatus.LOCKED:
        return math.inf
    if status is LockStatus.LUCKY:
        return LUCKY_LOCK_DURATION_S
    return 0.0
