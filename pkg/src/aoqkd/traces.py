"""Homodyne trace processing: shot-noise normalisation and noise estimates.

Three oscilloscope traces define a measurement: the coherent-state trace
(signal + LO), the shot-noise trace (LO only) and the dark-noise trace
(no light). The coherent-state trace is sectioned into windows and each
window is normalised to the true shot noise (shot minus dark); the shot
and dark traces are treated as stationary and their variances are taken
over the full record. Traces are assumed already demodulated to baseband.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .skr import DetectionScheme, DomainError

__all__ = [
    "TraceKind",
    "Trace",
    "TraceSet",
    "WindowedVariances",
    "TraceFormatError",
    "DegenerateDetectorError",
    "normalize_to_snu",
    "excess_noise_estimate",
    "excess_noise_estimate_model_consistent",
    "synthesize_traceset",
    "inferred_visibility",
    "fringe_visibility",
    "trace_mean_magnitude",
    "read_trace",
    "write_trace",
    "write_windowed_csv",
]

DEFAULT_SAMPLES = 1_000_000
DEFAULT_DURATION_S = 0.240
DEFAULT_WINDOW_COUNT = 20

_BINARY_MAGIC = b"AOQKDTRC"
_BINARY_HEADER = struct.Struct("<8sQQQ")  # magic, kind code, samples, duration_us


class TraceFormatError(ValueError):
    """A trace file failed to parse."""


class DegenerateDetectorError(DomainError):
    """Shot-noise variance does not exceed dark-noise variance."""


class TraceKind(Enum):
    COHERENT_STATE = "coherent_state"
    SHOT_NOISE = "shot_noise"
    DARK_NOISE = "dark_noise"


_KIND_CODES = {TraceKind.COHERENT_STATE: 1, TraceKind.SHOT_NOISE: 2,
               TraceKind.DARK_NOISE: 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class Trace:
    """One recorded voltage trace with sampling metadata."""

    samples: np.ndarray
    duration: float
    kind: TraceKind

    def __post_init__(self):
        object.__setattr__(self, "samples",
                           np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 1:
            raise TraceFormatError("trace samples must be one-dimensional")
        if self.duration <= 0.0:
            raise TraceFormatError(f"duration {self.duration} must be positive")

    def __len__(self) -> int:
        return self.samples.size

    def variance(self) -> float:
        """Unbiased sample variance over the full record."""
        return float(np.var(self.samples, ddof=1))


@dataclass(frozen=True)
class TraceSet:
    """Coherent-state, shot-noise and dark-noise traces of equal geometry."""

    cs: Trace
    sn: Trace
    dn: Trace

    def __post_init__(self):
        lengths = {len(self.cs), len(self.sn), len(self.dn)}
        if len(lengths) != 1:
            raise TraceFormatError(f"trace lengths differ: {sorted(lengths)}")
        durations = {self.cs.duration, self.sn.duration, self.dn.duration}
        if len(durations) != 1:
            raise TraceFormatError(f"trace durations differ: {sorted(durations)}")


@dataclass(frozen=True)
class WindowedVariances:
    """Per-window Bob variances plus the whole-record electronic noise."""

    v_b_per_window: np.ndarray
    v_el: float
    window_size: int
    window_duration: float

    @property
    def window_count(self) -> int:
        return int(self.v_b_per_window.size)


def normalize_to_snu(ts: TraceSet,
                     window_count: int = DEFAULT_WINDOW_COUNT) -> WindowedVariances:
    """Window the coherent-state trace and normalise to the true shot noise.

    V_B[w] = Var(CS_w) / (Var(SN) - Var(DN)) per window, and
    v_el = Var(DN) / (Var(SN) - Var(DN)) from the full records.
    """
    n = len(ts.cs)
    if window_count < 1 or n % window_count != 0:
        raise DomainError(
            f"window count {window_count} does not divide {n} samples")
    sn_var = ts.sn.variance()
    dn_var = ts.dn.variance()
    true_shot = sn_var - dn_var
    if true_shot <= 0.0:
        raise DegenerateDetectorError(
            f"Var(SN)={sn_var} does not exceed Var(DN)={dn_var}")
    window_size = n // window_count
    windows = ts.cs.samples.reshape(window_count, window_size)
    v_b = np.var(windows, axis=1, ddof=1) / true_shot
    return WindowedVariances(
        v_b_per_window=v_b,
        v_el=dn_var / true_shot,
        window_size=window_size,
        window_duration=ts.cs.duration / window_count,
    )


def excess_noise_estimate(v_b: float, v_el: float, transmittance: float,
                          detection: DetectionScheme) -> float:
    """Excess noise xi = mu (V_B - v_el - 1) / T, exactly as defined.

    The modulated signal power is not subtracted; see
    :func:`excess_noise_estimate_model_consistent` for the variant that
    removes it.
    """
    if transmittance <= 0.0:
        raise DomainError(f"transmittance {transmittance} must be positive")
    return detection.mu * (v_b - v_el - 1.0) / transmittance


def excess_noise_estimate_model_consistent(
        v_b: float, v_el: float, transmittance: float,
        detector_efficiency: float, visibility: float,
        modulation_variance: float) -> float:
    """Excess noise with the modulated signal power removed first:

    xi = (V_B - v_el - 1 - eta T V_A) / (eta T),  eta = eta_vis eta_det.
    """
    eta_t = visibility**2 * detector_efficiency * transmittance
    if eta_t <= 0.0:
        raise DomainError(f"effective transmittance {eta_t} must be positive")
    return (v_b - v_el - 1.0 - eta_t * modulation_variance) / eta_t


def synthesize_traceset(v_b_target: float, v_el_target: float,
                        samples: int = DEFAULT_SAMPLES,
                        seed: int = 0,
                        duration: float = DEFAULT_DURATION_S) -> TraceSet:
    """Generate Gaussian traces whose population variances hit the targets.

    Units are chosen so the true shot noise (SN minus DN variance) is one;
    the coherent-state trace then has variance ``v_b_target`` and the dark
    trace ``v_el_target``. Deterministic for a fixed seed.
    """
    if v_b_target < 0.0 or v_el_target < 0.0:
        raise DomainError("synthesis targets must be non-negative")
    rng = np.random.default_rng(seed)
    cs = rng.standard_normal(samples) * np.sqrt(v_b_target)
    sn = rng.standard_normal(samples) * np.sqrt(1.0 + v_el_target)
    if v_el_target == 0.0:
        dn = np.zeros(samples)
    else:
        dn = rng.standard_normal(samples) * np.sqrt(v_el_target)
    return TraceSet(
        cs=Trace(cs, duration, TraceKind.COHERENT_STATE),
        sn=Trace(sn, duration, TraceKind.SHOT_NOISE),
        dn=Trace(dn, duration, TraceKind.DARK_NOISE),
    )


class InferredVisibility(NamedTuple):
    value: float      # clamped to [0, 1]
    raw: float        # unclamped, for diagnostics


def inferred_visibility(cs_mean_current: float, cs_mean_baseline: float,
                        visibility_baseline: float) -> InferredVisibility:
    """Visibility inferred from the drop in mean coherent-state power.

    The current mean of the demodulated trace magnitude is referenced to a
    baseline measurement whose fringe visibility is known.
    """
    if cs_mean_baseline <= 0.0:
        raise DomainError(f"baseline mean {cs_mean_baseline} must be positive")
    if not 0.0 < visibility_baseline <= 1.0:
        raise DomainError(
            f"baseline visibility {visibility_baseline} outside (0, 1]")
    raw = (cs_mean_current / cs_mean_baseline) * visibility_baseline
    return InferredVisibility(value=min(max(raw, 0.0), 1.0), raw=raw)


def fringe_visibility(i_max: float, i_min: float) -> float:
    """Fringe contrast (I_max - I_min) / (I_max + I_min)."""
    if i_min > i_max:
        raise DomainError(f"I_min={i_min} exceeds I_max={i_max}")
    if i_min < 0.0:
        raise DomainError(f"I_min={i_min} must be non-negative")
    if i_max + i_min <= 0.0:
        raise DomainError("I_max + I_min must be positive")
    return (i_max - i_min) / (i_max + i_min)


def trace_mean_magnitude(trace: Trace) -> float:
    """Mean absolute value of a demodulated trace."""
    return float(np.mean(np.abs(trace.samples)))


# ---------------------------------------------------------------------------
# file formats


def _read_text_trace(path: Path) -> Trace:
    meta: dict[str, str] = {}
    values: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    meta[key.strip()] = val.strip()
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise TraceFormatError(
                    f"{path}:{lineno}: not a number: {line!r}") from None
    for key in ("kind", "duration_ms", "samples"):
        if key not in meta:
            raise TraceFormatError(f"{path}: missing header field {key!r}")
    try:
        kind = TraceKind(meta["kind"])
    except ValueError:
        raise TraceFormatError(
            f"{path}: unknown trace kind {meta['kind']!r}") from None
    declared = int(meta["samples"])
    if declared != len(values):
        raise TraceFormatError(
            f"{path}: header declares {declared} samples, found {len(values)}")
    return Trace(np.array(values), float(meta["duration_ms"]) / 1e3, kind)


def _read_binary_trace(path: Path) -> Trace:
    blob = path.read_bytes()
    if len(blob) < _BINARY_HEADER.size:
        raise TraceFormatError(f"{path}: truncated header "
                               f"({len(blob)} < {_BINARY_HEADER.size} bytes)")
    magic, code, count, duration_us = _BINARY_HEADER.unpack_from(blob)
    if magic != _BINARY_MAGIC:
        raise TraceFormatError(f"{path}: bad magic {magic!r}")
    if code not in _CODE_KINDS:
        raise TraceFormatError(f"{path}: unknown kind code {code}")
    payload = blob[_BINARY_HEADER.size:]
    expected = count * 8
    if len(payload) != expected:
        raise TraceFormatError(
            f"{path}: payload is {len(payload)} bytes at offset "
            f"{_BINARY_HEADER.size}, expected {expected}")
    samples = np.frombuffer(payload, dtype="<f8").copy()
    return Trace(samples, duration_us / 1e6, _CODE_KINDS[code])


def read_trace(path) -> Trace:
    """Load a trace from the text or packed binary format (autodetected)."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            head = fh.read(len(_BINARY_MAGIC))
    except OSError as exc:
        raise TraceFormatError(f"{path}: {exc}") from exc
    if head == _BINARY_MAGIC:
        return _read_binary_trace(path)
    return _read_text_trace(path)


def write_trace(trace: Trace, path, binary: bool = False) -> None:
    """Write a trace in the text format, or the packed binary one."""
    path = Path(path)
    if binary:
        header = _BINARY_HEADER.pack(_BINARY_MAGIC, _KIND_CODES[trace.kind],
                                     len(trace), round(trace.duration * 1e6))
        path.write_bytes(header + trace.samples.astype("<f8").tobytes())
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind: {trace.kind.value}\n")
        fh.write(f"# duration_ms: {trace.duration * 1e3:.6f}\n")
        fh.write(f"# samples: {len(trace)}\n")
        for v in trace.samples:
            fh.write(f"{float(v)!r}\n")


def write_windowed_csv(wv: WindowedVariances, path) -> None:
    """Emit per-window variances as ``window_index, v_b_snu, v_el_snu``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("window_index,v_b_snu,v_el_snu\n")
        for i, v in enumerate(wv.v_b_per_window):
            fh.write(f"{i},{float(v)!r},{float(wv.v_el)!r}\n")
