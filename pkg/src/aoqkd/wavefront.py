"""Shack-Hartmann frame model and synthetic heat-gun turbulence.

The sensor is a 6x6 lenslet grid over the unit pupil; the four corner
sub-apertures carry too little light and are excluded, leaving 32 valid
sub-apertures. Turbulence is synthesised as temporally correlated Zernike
aberrations whose slope signatures are sampled at the sub-aperture
centres, with log-normal intensity fluctuation standing in for
scintillation. Mode amplitudes follow a two-pole (cascaded first-order)
process: a single pole leaves a 1/f^2 spectral tail above any realistic
loop bandwidth, which would dominate closed-loop residuals; the double
pole keeps the configured correlation time while rolling off as 1/f^4.
Each named setting is scaled so its long-run open-loop slope variance
converges to a configured target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.signal import lfilter

from .skr import DomainError

__all__ = [
    "GRID",
    "N_SUBAPS",
    "VALID_MASK",
    "N_VALID",
    "LowIntensityError",
    "WfsFrame",
    "TurbulenceSetting",
    "TurbulenceGenerator",
    "LoopMode",
    "SlopeStats",
    "spot_slope",
    "frame_mean_slope",
    "slope_variance",
    "generate_turbulence_frame",
    "mean_slopes",
    "wavefront_power",
    "zernike_slope_tables",
    "subaperture_centers",
    "preset_setting",
    "preset_labels",
]

GRID = 6
N_SUBAPS = GRID * GRID

VALID_MASK = np.ones((GRID, GRID), dtype=bool)
for _r in (0, GRID - 1):
    for _c in (0, GRID - 1):
        VALID_MASK[_r, _c] = False
VALID_MASK.setflags(write=False)
N_VALID = int(VALID_MASK.sum())  # 32

_CORNER_INTENSITY = 5e-3  # corners carry insignificant light


class LowIntensityError(DomainError):
    """A valid sub-aperture fell below the detectability floor."""


class LoopMode(Enum):
    OPEN = "open"
    CLOSED = "closed"


def subaperture_centers() -> tuple[np.ndarray, np.ndarray]:
    """(x, y) centres of the 6x6 sub-apertures on the [-1, 1] pupil."""
    c = (2.0 * np.arange(GRID) + 1.0) / GRID - 1.0
    x, y = np.meshgrid(c, c, indexing="xy")
    return x, y


# Zernike polynomials, Noll indices 2..15, unit RMS over the unit disk.
def _zernike_values(j: int, x, y):
    r2 = x * x + y * y
    s3, s5, s6, s8, s10 = (math.sqrt(k) for k in (3, 5, 6, 8, 10))
    table = {
        2: lambda: 2.0 * x,
        3: lambda: 2.0 * y,
        4: lambda: s3 * (2.0 * r2 - 1.0),
        5: lambda: 2.0 * s6 * x * y,
        6: lambda: s6 * (x * x - y * y),
        7: lambda: s8 * y * (3.0 * r2 - 2.0),
        8: lambda: s8 * x * (3.0 * r2 - 2.0),
        9: lambda: s8 * y * (3.0 * x * x - y * y),
        10: lambda: s8 * x * (x * x - 3.0 * y * y),
        11: lambda: s5 * (6.0 * r2 * r2 - 6.0 * r2 + 1.0),
        12: lambda: s10 * (x * x - y * y) * (4.0 * r2 - 3.0),
        13: lambda: 2.0 * s10 * x * y * (4.0 * r2 - 3.0),
        14: lambda: s10 * (r2 * r2 - 8.0 * x * x * y * y),
        15: lambda: 4.0 * s10 * x * y * (x * x - y * y),
    }
    try:
        return table[j]()
    except KeyError:
        raise DomainError(f"unsupported Zernike index {j}") from None


NOLL_MODES = tuple(range(2, 16))
N_MODES = len(NOLL_MODES)

_FD_STEP = 1e-6


def zernike_slope_tables() -> tuple[np.ndarray, np.ndarray]:
    """Per-mode x/y wavefront gradients at the sub-aperture centres.

    Returns two (n_modes, 6, 6) arrays.
    """
    x, y = subaperture_centers()
    gx = np.empty((N_MODES, GRID, GRID))
    gy = np.empty((N_MODES, GRID, GRID))
    for i, j in enumerate(NOLL_MODES):
        gx[i] = (_zernike_values(j, x + _FD_STEP, y)
                 - _zernike_values(j, x - _FD_STEP, y)) / (2.0 * _FD_STEP)
        gy[i] = (_zernike_values(j, x, y + _FD_STEP)
                 - _zernike_values(j, x, y - _FD_STEP)) / (2.0 * _FD_STEP)
    return gx, gy


_GX, _GY = zernike_slope_tables()
_GX_FLAT = _GX.reshape(N_MODES, N_SUBAPS)
_GY_FLAT = _GY.reshape(N_MODES, N_SUBAPS)


@dataclass(frozen=True)
class WfsFrame:
    """One sensor exposure: spot displacements and intensities on the grid."""

    slopes_x: np.ndarray
    slopes_y: np.ndarray
    intensities: np.ndarray
    valid_mask: np.ndarray = field(default_factory=lambda: VALID_MASK)

    def __post_init__(self):
        for name in ("slopes_x", "slopes_y", "intensities", "valid_mask"):
            arr = getattr(self, name)
            if arr.shape != (GRID, GRID):
                raise DomainError(f"{name} must be {GRID}x{GRID}, got {arr.shape}")
        if int(self.valid_mask.sum()) != N_VALID:
            raise DomainError(
                f"valid mask must select exactly {N_VALID} sub-apertures")
        for r in (0, GRID - 1):
            for c in (0, GRID - 1):
                if self.valid_mask[r, c]:
                    raise DomainError("corner sub-apertures cannot be valid")


def spot_slope(x: float, y: float) -> float:
    """Radial spot displacement sqrt(x^2 + y^2)."""
    return math.hypot(x, y)


def frame_mean_slope(frame: WfsFrame,
                     min_intensity_fraction: float = 0.01) -> float:
    """Mean radial slope over the valid sub-apertures.

    Raises :class:`LowIntensityError` when any valid sub-aperture intensity
    falls below ``min_intensity_fraction`` of the mean valid intensity.
    """
    m = frame.valid_mask
    inten = frame.intensities[m]
    floor = min_intensity_fraction * float(np.mean(inten))
    if np.any(inten < floor):
        raise LowIntensityError(
            f"sub-aperture intensity below {floor:.3g} detectability floor")
    return float(np.mean(np.hypot(frame.slopes_x[m], frame.slopes_y[m])))


@dataclass(frozen=True)
class SlopeStats:
    """Per-frame mean slopes and their variance for one run."""

    per_frame_mean_slope: np.ndarray
    slope_variance: float
    frame_count: int
    loop_mode: LoopMode


def slope_variance(frames, loop_mode: LoopMode = LoopMode.OPEN) -> SlopeStats:
    """Unbiased variance of the per-frame mean slope over a frame sequence."""
    means = np.array([frame_mean_slope(f) for f in frames])
    if means.size < 2:
        raise DomainError("slope variance needs at least two frames")
    return SlopeStats(
        per_frame_mean_slope=means,
        slope_variance=float(np.var(means, ddof=1)),
        frame_count=int(means.size),
        loop_mode=loop_mode,
    )


def mean_slopes(slopes_x: np.ndarray, slopes_y: np.ndarray) -> np.ndarray:
    """Per-frame mean radial slope for stacked (n, 6, 6) slope arrays."""
    mag = np.hypot(slopes_x, slopes_y)
    return mag[:, VALID_MASK].mean(axis=1)


def wavefront_power(slopes_x: np.ndarray, slopes_y: np.ndarray) -> np.ndarray:
    """Per-frame mean squared slope over valid sub-apertures.

    Serves as the residual wavefront variance proxy; its square root is the
    residual wavefront RMS.
    """
    power = slopes_x**2 + slopes_y**2
    return power[:, VALID_MASK].mean(axis=1)


@dataclass(frozen=True)
class TurbulenceSetting:
    """A heat-gun power setting, characterised by its slope-variance target."""

    label: str
    orientation: str
    target_slope_variance: float
    temporal_correlation: float
    mode_amplitudes: tuple[float, ...]
    intensity_sigma: float = 0.1

    def __post_init__(self):
        if self.label not in ("ambient", "low", "medium", "high"):
            raise DomainError(f"unknown setting label {self.label!r}")
        if self.orientation not in ("across", "along"):
            raise DomainError(f"unknown orientation {self.orientation!r}")
        if self.target_slope_variance < 0.0:
            raise DomainError("target slope variance must be non-negative")
        if not 0.0 <= self.temporal_correlation < 1.0:
            raise DomainError("temporal correlation must lie in [0, 1)")
        if len(self.mode_amplitudes) != N_MODES:
            raise DomainError(
                f"expected {N_MODES} mode amplitudes, got {len(self.mode_amplitudes)}")


# Calibration of the per-setting amplitude scale: frames simulated at unit
# scale with a fixed internal seed, long enough that the variance estimate
# settles well inside the acceptance band.
_CALIBRATION_FRAMES = 60_000
_CALIBRATION_SEED = 0x5EED
_scale_cache: dict[tuple, float] = {}


def _setting_key(setting: TurbulenceSetting) -> tuple:
    return (setting.target_slope_variance, setting.temporal_correlation,
            setting.mode_amplitudes)


def _unit_scale_slope_variance(setting: TurbulenceSetting) -> float:
    gen = TurbulenceGenerator(setting, seed=_CALIBRATION_SEED, _unit_scale=True)
    sx, sy, _ = gen.frames(_CALIBRATION_FRAMES)
    return float(np.var(mean_slopes(sx, sy), ddof=1))


def _calibrated_scale(setting: TurbulenceSetting) -> float:
    key = _setting_key(setting)
    if key not in _scale_cache:
        if setting.target_slope_variance == 0.0 or \
                not any(setting.mode_amplitudes):
            _scale_cache[key] = 0.0 if setting.target_slope_variance == 0.0 else 1.0
        else:
            v1 = _unit_scale_slope_variance(setting)
            _scale_cache[key] = math.sqrt(setting.target_slope_variance / v1)
    return _scale_cache[key]


class TurbulenceGenerator:
    """Seeded stream of turbulent sensor frames for one setting.

    Frame draws are consumed strictly per frame, so the stream is identical
    whether frames are pulled one at a time or in blocks.
    """

    def __init__(self, setting: TurbulenceSetting, seed: int,
                 _unit_scale: bool = False):
        self.setting = setting
        self._rng = np.random.default_rng(seed)
        scale = 1.0 if _unit_scale else _calibrated_scale(setting)
        self._sigmas = scale * np.asarray(setting.mode_amplitudes)
        rho = setting.temporal_correlation
        # double pole at rho; innovation gain normalises to unit
        # stationary variance
        q = rho * rho
        self._den = np.array([1.0, -2.0 * rho, q])
        self._innov_gain = math.sqrt((1.0 - q) ** 3 / (1.0 + q))
        self._zi = np.zeros((2, N_MODES))
        burn = int(round(10.0 / max(1.0 - rho, 1e-3)))
        warmup = self._rng.standard_normal((burn, N_MODES)) * \
            (self._innov_gain * self._sigmas)
        _, self._zi = lfilter([1.0], self._den, warmup, axis=0, zi=self._zi)

    def frames(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Next ``n`` frames as (slopes_x, slopes_y, intensities) stacks."""
        if n < 1:
            raise DomainError("frame count must be positive")
        draws = self._rng.standard_normal((n, N_MODES + N_SUBAPS))
        innov = draws[:, :N_MODES] * (self._innov_gain * self._sigmas)
        amps, self._zi = lfilter([1.0], self._den, innov, axis=0, zi=self._zi)
        sx = (amps @ _GX_FLAT).reshape(n, GRID, GRID)
        sy = (amps @ _GY_FLAT).reshape(n, GRID, GRID)
        sig = self.setting.intensity_sigma
        inten = np.exp(sig * draws[:, N_MODES:] - 0.5 * sig * sig)
        inten = inten.reshape(n, GRID, GRID)
        inten[:, ~VALID_MASK] *= _CORNER_INTENSITY
        return sx, sy, inten


def generate_turbulence_frame(setting: TurbulenceSetting,
                              gen: TurbulenceGenerator) -> WfsFrame:
    """Draw the next frame from ``gen`` (created for the same setting)."""
    if gen.setting is not setting and gen.setting != setting:
        raise DomainError("generator was created for a different setting")
    sx, sy, inten = gen.frames(1)
    return WfsFrame(slopes_x=sx[0], slopes_y=sy[0], intensities=inten[0])


# ---------------------------------------------------------------------------
# named presets
#
# Relative per-mode RMS weights tuned once against the bundled reference
# tables: the low-order group is what the mirror corrects well, the
# high-order tail sets how much residual survives a closed loop.

# tip, tilt, defocus, oblique astigmatism and the two comas: shapes the
# mirror reproduces to a few percent
_LOW_ORDER_PROFILE = np.array(
    [1.0, 1.0, 0.5, 0.35, 0.0, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
# vertical astigmatism, trefoils, secondary astigmatism and quadrafoil:
# largely outside the mirror's sampled-slope range
_HIGH_ORDER_PROFILE = np.array(
    [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.5, 0.0, 0.0, 1.0])

# per-(channel, label, orientation): (target sv, pole coefficient,
# high-order mix, intensity sigma); mixes are tuned so that the mapped
# post-correction visibility reproduces the reference AO columns.
_PRESETS: dict[tuple[str, str, str], tuple[float, float, float, float]] = {
    ("cm60", "ambient", "across"): (6.5e-6, 0.95, 0.150, 0.02),
    ("cm60", "low", "across"): (6.5e-4, 0.95, 0.164, 0.10),
    ("cm60", "medium", "across"): (0.0065, 0.95, 0.118, 0.25),
    ("cm60", "high", "across"): (0.018, 0.93, 0.145, 0.45),
    ("m30", "ambient", "across"): (3.5e-4, 0.95, 0.050, 0.05),
    ("m30", "low", "across"): (4.0e-4, 0.95, 0.050, 0.10),
    ("m30", "medium", "across"): (0.0032, 0.95, 0.050, 0.20),
    ("m30", "high", "across"): (0.0164, 0.93, 0.189, 0.40),
    ("m30", "ambient", "along"): (3.5e-4, 0.95, 0.050, 0.05),
    ("m30", "low", "along"): (0.0017, 0.97, 0.030, 0.15),
    ("m30", "medium", "along"): (0.0342, 0.97, 0.146, 0.35),
    ("m30", "high", "along"): (0.0526, 0.97, 0.182, 0.50),
}


def preset_labels(channel: str, orientation: str = "across") -> list[str]:
    """Setting labels configured for a channel, weakest first."""
    labels = [k[1] for k in _PRESETS
              if k[0] == channel and k[2] == orientation]
    order = {"ambient": 0, "low": 1, "medium": 2, "high": 3}
    return sorted(labels, key=order.__getitem__)


def preset_setting(channel: str, label: str,
                   orientation: str = "across") -> TurbulenceSetting:
    """Bundled turbulence setting for a channel fixture."""
    try:
        target, rho, mix, isig = _PRESETS[(channel, label, orientation)]
    except KeyError:
        raise DomainError(
            f"no preset for channel={channel!r} label={label!r} "
            f"orientation={orientation!r}") from None
    profile = (1.0 - mix) * _LOW_ORDER_PROFILE + mix * _HIGH_ORDER_PROFILE
    return TurbulenceSetting(
        label=label,
        orientation=orientation,
        target_slope_variance=target,
        temporal_correlation=rho,
        mode_amplitudes=tuple(profile),
        intensity_sigma=isig,
    )
