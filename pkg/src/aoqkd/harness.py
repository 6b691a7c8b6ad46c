"""Scenario engine: turbulence sweeps and derived channel analyses.

A sweep cell is one (setting, seed): the turbulence run is characterised
open-loop, the same frames are driven through the adaptive-optics loop,
and the open/closed slope variances are mapped to visibilities through the
calibrated overlap model. Key rates for both detection schemes are then
evaluated at those visibilities. Negative rates are kept and flagged,
never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import refdata
from .aoloop import AoLoopState, make_loop, run_characterization
from .config import ScenarioConfig, config_hash
from .skr import (
    DetectionScheme,
    bob_variance_model,
    compute_skr,
    correlation_coefficient,
    max_tolerable_excess_noise,
    optimize_modulation_variance,
)
from .visibility import (
    CalibrationFit,
    LockStatus,
    calibrate_map,
    lock_status,
    visibility_from_residual,
)
from .wavefront import preset_setting

__all__ = ["SweepRow", "SkrPoint", "channel_visibility_map", "run_sweep",
           "sweep_rows_to_csv", "evaluate_skr_point", "max_xi_curve",
           "provenance_line", "write_csv", "mean_ao_visibilities",
           "mean_visibility_difference"]


@dataclass(frozen=True)
class SweepRow:
    """One sweep result cell (a setting/seed either with or without AO)."""

    setting: str
    orientation: str
    ao: bool
    slope_variance: float
    visibility: float
    skr_hom: float
    skr_het: float
    lock: LockStatus
    seed: int

    @property
    def negative_hom(self) -> bool:
        return self.skr_hom <= 0.0

    @property
    def negative_het(self) -> bool:
        return self.skr_het <= 0.0


@dataclass(frozen=True)
class SkrPoint:
    """Single-point key-rate evaluation with printable intermediates."""

    visibility: float
    detection: DetectionScheme
    z: float
    v_b_model: float
    lambda1: float
    lambda2: float
    lambda3: float
    mutual_information: float
    holevo_bound: float
    skr: float
    positive: bool


def channel_visibility_map(config: ScenarioConfig,
                           dataset=None) -> CalibrationFit:
    """Calibrate the overlap model from a channel's no-AO reference table.

    The ambient visibility is pinned to the fixture value; only the
    coupling coefficient is fitted. Custom channels reuse the 60 cm table
    unless ``dataset`` points elsewhere.
    """
    source = dataset
    if source is None:
        source = config.channel if config.channel in refdata.CHANNELS else "cm60"
    rows = refdata.load_reference(source)
    points = refdata.no_ao_points(rows, orientation="across")
    return calibrate_map(points, ambient_visibility=config.ambient_visibility)


def evaluate_skr_point(config: ScenarioConfig, visibility: float,
                       detection: DetectionScheme) -> SkrPoint:
    """Evaluate the key rate at one visibility with all intermediates."""
    params = config.system_params(visibility, detection)
    result = compute_skr(params)
    l1, l2, l3 = result.symplectic_eigenvalues
    return SkrPoint(
        visibility=visibility,
        detection=detection,
        z=correlation_coefficient(params),
        v_b_model=bob_variance_model(params),
        lambda1=l1,
        lambda2=l2,
        lambda3=l3,
        mutual_information=result.mutual_information,
        holevo_bound=result.holevo_bound,
        skr=result.skr,
        positive=result.positive,
    )


def run_sweep(config: ScenarioConfig,
              vmap: CalibrationFit | None = None,
              loop: AoLoopState | None = None,
              optimize_modulation: bool = False) -> list[SweepRow]:
    """Run the full setting x {AO on, off} x seed sweep for a scenario.

    The fixture modulation variances are used as measured; pass
    ``optimize_modulation`` to re-optimise the modulation variance at every
    operating point instead.
    """
    fit = vmap or channel_visibility_map(config)
    loop = loop or make_loop()
    channel = config.channel if config.channel != "custom" else "cm60"
    rows: list[SweepRow] = []
    for label in config.settings:
        setting = preset_setting(channel, label, config.orientation)
        for seed in config.seeds:
            run = run_characterization(setting, loop_enabled=True,
                                       frames=config.frames, seed=seed,
                                       loop=loop)
            open_sv = run.open_stats.slope_variance
            closed_sv = run.closed_stats.slope_variance
            for ao, sv_for_map in ((False, open_sv), (True, closed_sv)):
                vis = visibility_from_residual(fit.map, sv_for_map)
                skrs = {}
                for det in DetectionScheme:
                    params = config.system_params(vis, det)
                    if optimize_modulation:
                        skrs[det] = optimize_modulation_variance(params).skr
                    else:
                        skrs[det] = compute_skr(params).skr
                rows.append(SweepRow(
                    setting=label,
                    orientation=config.orientation,
                    ao=ao,
                    slope_variance=open_sv,
                    visibility=vis,
                    skr_hom=skrs[DetectionScheme.HOMODYNE],
                    skr_het=skrs[DetectionScheme.HETERODYNE],
                    lock=lock_status(vis, open_sv, ao),
                    seed=seed,
                ))
    return rows


def max_xi_curve(config: ScenarioConfig, detection: DetectionScheme,
                 t_values) -> list[tuple[float, float]]:
    """Maximum tolerable excess noise versus transmittance.

    The curve is the generic channel limit: unit visibility, with the
    modulation variance re-optimised at every probe.
    """
    curve = []
    for t in t_values:
        if not 0.0 < t <= 1.0:
            raise ValueError(f"transmittance {t} outside (0, 1]")
        params = config.system_params(1.0, detection).with_(transmittance=t)
        curve.append((float(t), max_tolerable_excess_noise(params)))
    return curve


def provenance_line(config: ScenarioConfig) -> str:
    seeds = ",".join(str(s) for s in config.seeds)
    return f"# provenance: config_sha256={config_hash(config)} seeds={seeds}"


def write_csv(path, header: str, lines, config: ScenarioConfig) -> None:
    """Write an output CSV with the provenance comment and header row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(provenance_line(config) + "\n")
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")


def sweep_rows_to_csv(rows: list[SweepRow], path,
                      config: ScenarioConfig) -> None:
    header = ("setting,orientation,ao,slope_variance,visibility,"
              "skr_hom,skr_het,lock_status,seed,negative_hom,negative_het")
    lines = []
    for r in rows:
        lines.append(
            f"{r.setting},{r.orientation},{'on' if r.ao else 'off'},"
            f"{r.slope_variance!r},{r.visibility!r},{r.skr_hom!r},"
            f"{r.skr_het!r},{r.lock.value},{r.seed},"
            f"{int(r.negative_hom)},{int(r.negative_het)}")
    write_csv(path, header, lines, config)


def mean_ao_visibilities(rows: list[SweepRow]) -> dict[str, float]:
    """Seed-averaged AO visibility per setting label."""
    out: dict[str, float] = {}
    for label in {r.setting for r in rows}:
        vals = [r.visibility for r in rows if r.setting == label and r.ao]
        out[label] = float(np.mean(vals))
    return out


def mean_visibility_difference(rows: list[SweepRow]) -> dict[str, float]:
    """Seed-averaged AO minus no-AO visibility per setting label."""
    out: dict[str, float] = {}
    for label in {r.setting for r in rows}:
        ao = [r.visibility for r in rows if r.setting == label and r.ao]
        no = [r.visibility for r in rows if r.setting == label and not r.ao]
        out[label] = float(np.mean(ao) - np.mean(no))
    return out
