"""Secret-key-rate chain for Gaussian-modulated coherent-state CVQKD.

Implements the asymptotic collective-attack key rate for a channel whose
effective transmittance is scaled by the squared interferometric visibility:
every occurrence of the transmittance T is multiplied by eta_vis. Electronic
(dark) noise is trusted: it is part of the modelled measured variance at Bob
but is subtracted again before the eavesdropper covariance is formed, so it
never contributes to the Holevo bound.

Units: all variances in shot-noise units (vacuum variance = 1), all
information quantities in bits per channel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

__all__ = [
    "DomainError",
    "DetectionScheme",
    "SystemParams",
    "TwoModeCovariance",
    "SkrResult",
    "OptimalModulation",
    "correlation_coefficient",
    "bob_variance_model",
    "build_covariance",
    "symplectic_spectrum",
    "lambda3",
    "g_function",
    "mutual_information",
    "holevo_bound",
    "compute_skr",
    "optimize_modulation_variance",
    "max_tolerable_excess_noise",
]

# numerical guard bands
_EIG_TOL = 1e-9      # allowed negativity of the symplectic discriminant
_G_TOL = 1e-12       # allowed negativity of the entropy-function argument

# golden-section interior ratio
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class DomainError(ValueError):
    """A quantity was evaluated outside its physical domain."""


class DetectionScheme(Enum):
    """Quadrature measurement at Bob: one quadrature or both."""

    HOMODYNE = "homodyne"
    HETERODYNE = "heterodyne"

    @property
    def mu(self) -> int:
        """Quadrature multiplicity: 1 for homodyne, 2 for heterodyne."""
        return 1 if self is DetectionScheme.HOMODYNE else 2


@dataclass(frozen=True)
class SystemParams:
    """Scalar channel, detector and protocol parameters.

    ``visibility`` is the amplitude visibility sqrt(eta_vis) in [0, 1];
    its square scales the transmittance everywhere it appears.
    """

    transmittance: float
    detector_efficiency: float
    visibility: float
    modulation_variance: float
    excess_noise: float
    electronic_noise: float
    reconciliation_efficiency: float
    detection: DetectionScheme

    def __post_init__(self):
        for name, lo, hi in (
            ("transmittance", 0.0, 1.0),
            ("detector_efficiency", 0.0, 1.0),
            ("visibility", 0.0, 1.0),
            ("reconciliation_efficiency", 0.0, 1.0),
        ):
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise DomainError(f"{name}={v} outside [{lo}, {hi}]")
        for name in ("modulation_variance", "excess_noise", "electronic_noise"):
            v = getattr(self, name)
            if v < 0.0:
                raise DomainError(f"{name}={v} must be non-negative")
        if not isinstance(self.detection, DetectionScheme):
            raise DomainError(f"detection={self.detection!r} is not a DetectionScheme")

    @property
    def modulation_amplitude(self) -> float:
        """Coherent-state amplitude alpha with V_A = 2 alpha^2."""
        return math.sqrt(self.modulation_variance / 2.0)

    @property
    def effective_transmittance(self) -> float:
        """eta_vis * eta_det * T, the product degrading the signal path."""
        return self.visibility**2 * self.detector_efficiency * self.transmittance

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class TwoModeCovariance:
    """The (V, V_B, Z) triple defining the two-mode covariance matrix.

    The matrix is [[V I, Z sigma_z], [Z sigma_z, V_B I]] in 2x2 blocks.
    """

    v: float
    v_b: float
    z: float

    @property
    def spectrum(self):
        return symplectic_spectrum(self)


@dataclass(frozen=True)
class SkrResult:
    """Key-rate evaluation with all intermediates exposed."""

    mutual_information: float
    holevo_bound: float
    skr: float
    symplectic_eigenvalues: tuple[float, float, float]
    positive: bool


@dataclass(frozen=True)
class OptimalModulation:
    """Outcome of the modulation-variance search."""

    modulation_variance: float
    skr: float
    positive: bool


def correlation_coefficient(params: SystemParams) -> float:
    """Alice-Bob correlation Z = 2 sqrt(eta_vis eta_det T) sqrt(a^4 + a^2)."""
    a2 = params.modulation_variance / 2.0
    gain = params.visibility**2 * params.detector_efficiency * params.transmittance
    if gain < 0.0 or a2 < 0.0:
        raise DomainError("negative radicand in correlation coefficient")
    return 2.0 * math.sqrt(gain) * math.sqrt(a2 * a2 + a2)


def bob_variance_model(params: SystemParams) -> float:
    """Modelled variance measured at Bob, electronic noise included:

    V_B = 1 + eta_vis eta_det T (2 alpha^2 + xi) + v_el
    """
    eta = params.effective_transmittance
    return 1.0 + eta * (params.modulation_variance + params.excess_noise) \
        + params.electronic_noise


def build_covariance(params: SystemParams,
                     measured_v_b: float | None = None) -> TwoModeCovariance:
    """Covariance triple from system parameters.

    ``measured_v_b`` substitutes a trace-derived Bob variance for the
    modelled one; the correlation coefficient stays model-based.
    """
    v_b = bob_variance_model(params) if measured_v_b is None else measured_v_b
    return TwoModeCovariance(
        v=params.modulation_variance + 1.0,
        v_b=v_b,
        z=correlation_coefficient(params),
    )


def symplectic_spectrum(cov: TwoModeCovariance) -> tuple[float, float]:
    """Symplectic eigenvalues (lambda1 >= lambda2) of the two-mode matrix.

    Closed form via Delta = V^2 + V_B^2 - 2 Z^2 and D = V V_B - Z^2:
    lambda_{1,2}^2 = (Delta +- sqrt(Delta^2 - 4 D^2)) / 2.
    """
    v, v_b, z = cov.v, cov.v_b, cov.z
    delta = v * v + v_b * v_b - 2.0 * z * z
    det = v * v_b - z * z
    rad = delta * delta - 4.0 * det * det
    if rad < -_EIG_TOL:
        raise DomainError(f"non-physical covariance: discriminant {rad} < 0")
    rad = max(rad, 0.0)
    s = math.sqrt(rad)
    l1 = math.sqrt(max((delta + s) / 2.0, 0.0))
    l2 = math.sqrt(max((delta - s) / 2.0, 0.0))
    return l1, l2


def lambda3(cov: TwoModeCovariance, detection: DetectionScheme) -> float:
    """Symplectic eigenvalue of Alice's state conditioned on Bob's outcome."""
    v, v_b, z = cov.v, cov.v_b, cov.z
    if detection is DetectionScheme.HOMODYNE:
        if v_b <= 0.0:
            raise DomainError(f"V_B={v_b} must be positive for homodyne")
        rad = v * (v - z * z / v_b)
        if rad < 0.0:
            raise DomainError(f"negative radicand {rad} in homodyne lambda3")
        return math.sqrt(rad)
    if v_b + 1.0 <= 0.0:
        raise DomainError(f"V_B+1={v_b + 1.0} must be positive for heterodyne")
    return v - z * z / (v_b + 1.0)


def g_function(x: float) -> float:
    """Bosonic entropy function G(x) = (x+1) log2(x+1) - x log2 x, G(0) = 0."""
    if x < -_G_TOL:
        raise DomainError(f"G argument {x} < 0")
    if x <= 0.0:
        return 0.0
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


def mutual_information(params: SystemParams) -> float:
    """Alice-Bob mutual information in bits per channel use.

    Homodyne carries a 1/2 prefactor; heterodyne uses the same expression
    without it (both quadratures measured).
    """
    eta = params.effective_transmittance
    a2 = params.modulation_variance / 2.0
    arg = 1.0 + 2.0 * eta * a2 / (2.0 + eta * params.excess_noise)
    i_ab = math.log2(arg)
    if params.detection is DetectionScheme.HOMODYNE:
        i_ab *= 0.5
    return i_ab


def holevo_bound(cov: TwoModeCovariance, detection: DetectionScheme) -> float:
    """Eavesdropper information bound S_BE = G1 + G2 - G3 in bits."""
    l1, l2 = symplectic_spectrum(cov)
    l3 = lambda3(cov, detection)
    terms = []
    for lam in (l1, l2, l3):
        x = (lam - 1.0) / 2.0
        if x < -_EIG_TOL:
            raise DomainError(f"symplectic eigenvalue {lam} below vacuum")
        terms.append(g_function(max(x, 0.0)))
    return terms[0] + terms[1] - terms[2]


def compute_skr(params: SystemParams,
                measured_v_b: float | None = None) -> SkrResult:
    """Secret key rate beta I_AB - S_BE, negative values returned as-is.

    The eavesdropper covariance uses Bob's variance with the trusted
    electronic noise subtracted; ``measured_v_b``, when given, is treated
    as electronics-inclusive and corrected the same way.
    """
    v_b_raw = bob_variance_model(params) if measured_v_b is None else measured_v_b
    v_b_eve = v_b_raw - params.electronic_noise
    cov = TwoModeCovariance(
        v=params.modulation_variance + 1.0,
        v_b=v_b_eve,
        z=correlation_coefficient(params),
    )
    i_ab = mutual_information(params)
    s_be = holevo_bound(cov, params.detection)
    skr = params.reconciliation_efficiency * i_ab - s_be
    l1, l2 = symplectic_spectrum(cov)
    return SkrResult(
        mutual_information=i_ab,
        holevo_bound=s_be,
        skr=skr,
        symplectic_eigenvalues=(l1, l2, lambda3(cov, params.detection)),
        positive=skr > 0.0,
    )


def _golden_section(f, lo: float, hi: float, xatol: float) -> float:
    """Maximise a unimodal scalar function on [lo, hi]."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xatol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimize_modulation_variance(params: SystemParams,
                                 bounds: tuple[float, float] = (1e-3, 40.0),
                                 ) -> OptimalModulation:
    """Modulation variance maximising the key rate over ``bounds``.

    A 64-point log-spaced scan guards against non-unimodality, then
    golden-section search refines the bracketing interval to 1e-4 SNU.
    The stored modulation variance of ``params`` is ignored.
    """
    lo, hi = bounds
    if not 0.0 < lo < hi:
        raise DomainError(f"invalid search bounds ({lo}, {hi})")

    def skr_at(v_a: float) -> float:
        return compute_skr(params.with_(modulation_variance=v_a)).skr

    grid = [lo * (hi / lo) ** (i / 63.0) for i in range(64)]
    values = [skr_at(v) for v in grid]
    best = max(range(64), key=values.__getitem__)
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, 63)]
    v_star = _golden_section(skr_at, a, b, xatol=1e-4)
    s_star = skr_at(v_star)
    if s_star < values[best]:  # refinement must never lose to the scan
        v_star, s_star = grid[best], values[best]
    return OptimalModulation(modulation_variance=v_star, skr=s_star,
                             positive=s_star > 0.0)


def max_tolerable_excess_noise(params: SystemParams,
                               va_bounds: tuple[float, float] = (1e-3, 40.0),
                               xi_tol: float = 1e-5) -> float:
    """Largest excess noise keeping the optimised key rate non-negative.

    Bisection on xi in [0, 1] SNU with the modulation variance re-optimised
    at every probe. Channels with no key at xi = 0 return 0.
    """

    def best_skr(xi: float) -> float:
        p = params.with_(excess_noise=xi)
        return optimize_modulation_variance(p, va_bounds).skr

    if best_skr(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    if best_skr(hi) >= 0.0:
        return hi
    while hi - lo > xi_tol:
        mid = 0.5 * (lo + hi)
        if best_skr(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
