"""Acceptance checks: every release criterion as a callable returning a
machine-readable pass/fail record.

The checks are deliberately self-contained (they rebuild what they verify
from the bundled fixtures and fixed seeds) so a single run of
``aoqkd validate`` reproduces the whole quantitative contract of the
package. Dataset checks recompute every derived column of the bundled
reference tables from the raw columns.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import refdata
from .aoloop import make_loop, rejection_ratio, run_characterization
from .config import CM60, M30, ScenarioConfig
from .harness import (
    channel_visibility_map,
    mean_ao_visibilities,
    mean_visibility_difference,
    run_sweep,
    sweep_rows_to_csv,
)
from .skr import (
    DetectionScheme,
    SystemParams,
    build_covariance,
    compute_skr,
    max_tolerable_excess_noise,
    optimize_modulation_variance,
    symplectic_spectrum,
)
from .traces import normalize_to_snu, synthesize_traceset
from .visibility import calibrate_map
from .wavefront import preset_setting

__all__ = ["CriterionResult", "dataset_checks", "acceptance_checks",
           "all_checks"]

_SETTLE_ORDER = {"ambient": 0, "low": 1, "medium": 2, "high": 3}


@dataclass(frozen=True)
class CriterionResult:
    criterion: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.criterion}: {self.detail}"


def _brute_force_spectrum(v: float, v_b: float, z: float) -> tuple[float, float]:
    """Moduli of the eigenvalues of i Omega Gamma for the 4x4 matrix."""
    i2 = np.eye(2)
    sz = np.diag([1.0, -1.0])
    gamma = np.block([[v * i2, z * sz], [z * sz, v_b * i2]])
    omega1 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    omega = np.block([[omega1, np.zeros((2, 2))], [np.zeros((2, 2)), omega1]])
    lams = np.sort(np.abs(np.linalg.eigvals(1j * omega @ gamma)))[::-1]
    return float(lams[0]), float(lams[2])


def check_symplectic_oracle(samples: int = 1000, seed: int = 20_601,
                            tol: float = 1e-9) -> CriterionResult:
    """C1: closed-form eigenvalues track a brute-force decomposition."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(samples):
        params = SystemParams(
            transmittance=rng.uniform(0.0, 1.0),
            detector_efficiency=rng.uniform(0.0, 1.0),
            visibility=rng.uniform(0.0, 1.0),
            modulation_variance=rng.uniform(0.0, 60.0),
            excess_noise=rng.uniform(0.0, 0.5),
            electronic_noise=rng.uniform(0.0, 0.1),
            reconciliation_efficiency=0.9,
            detection=DetectionScheme.HOMODYNE,
        )
        cov = build_covariance(params)
        l1, l2 = symplectic_spectrum(cov)
        b1, b2 = _brute_force_spectrum(cov.v, cov.v_b, cov.z)
        worst = max(worst, abs(l1 - b1), abs(l2 - b2))
    elapsed = time.perf_counter() - t0
    ok = worst <= tol and elapsed < 5.0
    return CriterionResult(
        "C1-symplectic-oracle", ok,
        f"worst |closed-brute| = {worst:.3e} over {samples} samples "
        f"(tol {tol:g}), {elapsed:.2f}s")


def check_max_xi() -> CriterionResult:
    """C2: tolerable-noise figures at the two bench transmittances.

    Computed at unit visibility with the modulation variance re-optimised
    at every bisection probe.
    """
    t0 = time.perf_counter()
    cases = [
        ("hom T=0.4433", DetectionScheme.HOMODYNE, 0.4433, 0.005, 0.003),
        ("hom T=0.0644", DetectionScheme.HOMODYNE, 0.0644, 0.011, 0.006),
        ("het T=0.4433", DetectionScheme.HETERODYNE, 0.4433, 0.006, 0.003),
    ]
    details = []
    ok = True
    for name, det, t, expect, tol in cases:
        params = CM60.system_params(1.0, det).with_(transmittance=t)
        xi = max_tolerable_excess_noise(params)
        good = abs(xi - expect) <= tol
        ok &= good
        details.append(f"{name}: xi_max={xi:.5f} expected {expect}+-{tol}"
                       f" [{'ok' if good else 'OUT'}]")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 30.0
    return CriterionResult("C2-max-excess-noise", ok,
                           "; ".join(details) + f"; {elapsed:.1f}s")


def check_optimal_modulation() -> CriterionResult:
    """C3: optimiser recovers the bench modulation variances."""
    base_h = CM60.system_params(CM60.ambient_visibility,
                                DetectionScheme.HOMODYNE)
    base_t = CM60.system_params(CM60.ambient_visibility,
                                DetectionScheme.HETERODYNE)
    hom = optimize_modulation_variance(base_h)
    het = optimize_modulation_variance(base_t)
    ok = abs(hom.modulation_variance - 0.3) <= 0.15 and \
        abs(het.modulation_variance - 2.0) <= 1.0
    return CriterionResult(
        "C3-optimal-modulation", ok,
        f"hom V_A*={hom.modulation_variance:.4f} (0.3+-0.15), "
        f"het V_A*={het.modulation_variance:.4f} (2.0+-1.0)")


_CM60_AO_VIS = (0.60, 0.55, 0.45, 0.26)
_M30_AO_VIS = (0.55, 0.5694, 0.5424, 0.4364)


def check_positive_key() -> CriterionResult:
    """C4: strictly positive rates at the measured AO visibilities."""
    t0 = time.perf_counter()
    ok = True
    worst = np.inf
    for config, vis_list in ((CM60, _CM60_AO_VIS), (M30, _M30_AO_VIS)):
        for vis in vis_list:
            for det in DetectionScheme:
                res = compute_skr(config.system_params(vis, det))
                ok &= res.skr > 0.0 and res.positive == (res.skr > 0.0)
                worst = min(worst, res.skr)
    # at very small visibility only the sign flag is contracted
    low = compute_skr(M30.system_params(0.06, DetectionScheme.HOMODYNE))
    ok &= low.positive == (low.skr > 0.0)
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 1.0
    return CriterionResult(
        "C4-positive-key", ok,
        f"min SKR over both channels/detections = {worst:.3e} bits/use, "
        f"{elapsed:.2f}s")


@lru_cache(maxsize=4)
def _sweep_pair(config: ScenarioConfig):
    fit = channel_visibility_map(config)
    rows = run_sweep(config, vmap=fit)
    return fit, rows


def check_ao_ordering() -> CriterionResult:
    """C5: AO never hurts; difference profiles peak where measured;
    calibration fits stay inside their error budgets."""
    problems = []
    fit60, rows60 = _sweep_pair(CM60)
    fit30, rows30 = _sweep_pair(M30)
    for name, rows in (("cm60", rows60), ("m30", rows30)):
        by_cell = {}
        for r in rows:
            by_cell.setdefault((r.setting, r.seed), {})[r.ao] = r
        for (label, seed), pair in by_cell.items():
            ao, no = pair[True], pair[False]
            if ao.visibility < no.visibility:
                problems.append(f"{name} {label}/{seed}: vis AO<noAO")
            if ao.skr_hom < no.skr_hom or ao.skr_het < no.skr_het:
                problems.append(f"{name} {label}/{seed}: SKR AO<noAO")
    diff60 = mean_visibility_difference(rows60)
    if not (diff60["medium"] > diff60["low"] and
            diff60["medium"] > diff60["high"]):
        problems.append(f"cm60 difference profile {diff60} not peaked at medium")
    diff30 = mean_visibility_difference(rows30)
    if not all(diff30["high"] > diff30[k] for k in ("ambient", "low", "medium")):
        problems.append(f"m30 difference profile {diff30} not peaked at high")
    if fit60.rms > 0.08:
        problems.append(f"cm60 calibration RMS {fit60.rms:.6f} > 0.08")
    if fit30.rms > 0.10:
        problems.append(f"m30 calibration RMS {fit30.rms:.6f} > 0.10")
    detail = "; ".join(problems) if problems else (
        f"cm60 diffs {({k: round(v, 3) for k, v in diff60.items()})}, "
        f"m30 diffs {({k: round(v, 3) for k, v in diff30.items()})}, "
        f"fit RMS {fit60.rms:.4f}/{fit30.rms:.4f}")
    return CriterionResult("C5-ao-ordering", not problems, detail)


def check_ao_visibility_match() -> CriterionResult:
    """S1: seed-mean AO visibilities land on the 60 cm reference column."""
    _, rows = _sweep_pair(CM60)
    means = mean_ao_visibilities(rows)
    targets = dict(zip(("ambient", "low", "medium", "high"), _CM60_AO_VIS))
    misses = {k: (round(means[k], 3), targets[k]) for k in targets
              if abs(means[k] - targets[k]) > 0.08}
    detail = ", ".join(f"{k}: {round(means[k], 3)} vs {targets[k]}"
                       for k in targets)
    return CriterionResult("S1-ao-visibility-match", not misses,
                           detail + (f"; OUT: {misses}" if misses else ""))


def check_heterodyne_gain() -> CriterionResult:
    """C6: het/hom AO gain ratio at the medium-setting visibilities."""
    def gain(det):
        hi = compute_skr(CM60.system_params(0.45, det)).skr
        lo = compute_skr(CM60.system_params(0.15, det)).skr
        return hi - lo

    ratio = gain(DetectionScheme.HETERODYNE) / gain(DetectionScheme.HOMODYNE)
    ok = 5.0 <= ratio <= 20.0
    return CriterionResult("C6-heterodyne-gain", ok,
                           f"gain ratio = {ratio:.2f}, expected in [5, 20]")


def check_trace_roundtrip(trials: int = 1000, samples: int = 100_000,
                          windows: int = 2) -> CriterionResult:
    """C7: synthesised traces recover their targets inside the 5% band."""
    t0 = time.perf_counter()
    v_b, v_el = 1.05, 0.027
    good = 0
    for trial in range(trials):
        ts = synthesize_traceset(v_b, v_el, samples=samples,
                                 seed=31_000 + trial)
        wv = normalize_to_snu(ts, window_count=windows)
        if np.all(np.abs(wv.v_b_per_window - v_b) <= 0.05 * v_b) and \
                abs(wv.v_el - v_el) <= 0.05 * v_el:
            good += 1
    elapsed = time.perf_counter() - t0
    rate = good / trials
    ok = rate >= 0.99 and elapsed < 60.0
    return CriterionResult(
        "C7-trace-roundtrip", ok,
        f"{good}/{trials} trials inside the 5% band "
        f"({samples}-sample traces, {windows} windows), {elapsed:.1f}s")


def check_slope_variance_targets(seed: int = 1) -> CriterionResult:
    """C8: simulated open-loop slope variance matches the bench table;
    the closed loop removes at least 80% at low and medium settings."""
    targets = {"ambient": 6.5e-6, "low": 6.5e-4, "medium": 0.0065,
               "high": 0.018}
    problems = []
    details = []
    loop = make_loop()
    for label, target in targets.items():
        setting = preset_setting("cm60", label)
        run = run_characterization(setting, loop_enabled=True, seed=seed,
                                   loop=loop)
        sv = run.open_stats.slope_variance
        details.append(f"{label}: sv={sv:.3g}")
        if abs(sv - target) > 0.30 * target:
            problems.append(f"{label} open sv {sv:.3g} vs {target:.3g} +-30%")
        if label in ("low", "medium"):
            ratio = run.closed_wavefront_variance / run.open_wavefront_variance
            sv_ratio = run.closed_stats.slope_variance / sv
            details.append(f"{label}: closed/open power={ratio:.3f} "
                           f"sv={sv_ratio:.3f}")
            if ratio > 0.2 or sv_ratio > 0.2:
                problems.append(
                    f"{label} closed/open {ratio:.3f} (power) "
                    f"{sv_ratio:.3f} (sv) exceeds 0.2")
        else:
            if run.closed_wavefront_variance >= run.open_wavefront_variance:
                problems.append(f"{label} closed loop did not reduce variance")
    return CriterionResult(
        "C8-slope-variance-targets", not problems,
        "; ".join(problems) if problems else "; ".join(details))


def check_loop_bandwidth() -> CriterionResult:
    """C9: -3 dB rejection crossover at 135 Hz within 15%."""
    loop = make_loop()
    target = 1.0 / np.sqrt(2.0)

    def excess(freq: float) -> float:
        return rejection_ratio(loop, freq) - target

    lo, hi = 40.0, 400.0
    if excess(lo) > 0.0 or excess(hi) < 0.0:
        return CriterionResult("C9-loop-bandwidth", False,
                               "rejection does not bracket -3 dB in 40-400 Hz")
    for _ in range(24):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    crossover = 0.5 * (lo + hi)
    ok = abs(crossover - 135.0) <= 0.15 * 135.0
    return CriterionResult(
        "C9-loop-bandwidth", ok,
        f"-3 dB crossover at {crossover:.1f} Hz (135 +- 15% band)")


def check_sweep_determinism(tmp_dir) -> CriterionResult:
    """C10: repeated sweeps with one config produce byte-identical CSVs."""
    config = CM60.with_(settings=("low",), seeds=(1, 2), frames=1500)
    out = []
    for tag in ("a", "b"):
        rows = run_sweep(config)
        path = Path(tmp_dir) / f"sweep_{tag}.csv"
        sweep_rows_to_csv(rows, path, config)
        out.append(path.read_bytes())
    ok = out[0] == out[1]
    return CriterionResult(
        "C10-determinism", ok,
        "byte-identical sweep CSVs" if ok else "sweep CSVs differ between runs")


# ---------------------------------------------------------------------------
# dataset-derived checks (fast; these run against any reference CSV pair)


def dataset_checks(cm60_rows=None, m30_rows=None) -> list[CriterionResult]:
    cm60_rows = cm60_rows or refdata.load_reference("cm60")
    m30_rows = m30_rows or refdata.load_reference("m30")
    results = []

    def diffs(rows, orientation):
        ao = {r.setting: r.visibility
              for r in refdata.rows_for(rows, orientation, True)}
        no = {r.setting: r.visibility
              for r in refdata.rows_for(rows, orientation, False)}
        return {s: ao[s] - no[s] for s in ao
                if ao.get(s) is not None and no.get(s) is not None}

    d60 = diffs(cm60_rows, "across")
    expected60 = {"ambient": 0.0, "low": 0.22, "medium": 0.30, "high": 0.20}
    bad = {s: round(d60[s], 4) for s in expected60
           if abs(d60.get(s, np.inf) - expected60[s]) > 5e-3}
    results.append(CriterionResult(
        "D1-difference-columns", not bad,
        f"cm60 recomputed differences {({s: round(v, 3) for s, v in d60.items()})}"
        + (f"; mismatches {bad}" if bad else "")))

    order_bad = []
    for name, rows in (("cm60", cm60_rows), ("m30", m30_rows)):
        for orientation in ("across", "along"):
            ao = {r.setting: r.visibility
                  for r in refdata.rows_for(rows, orientation, True)}
            no = {r.setting: r.visibility
                  for r in refdata.rows_for(rows, orientation, False)}
            for s in ao:
                if ao[s] is not None and no.get(s) is not None \
                        and ao[s] < no[s]:
                    order_bad.append(f"{name} {orientation} {s}")
    results.append(CriterionResult(
        "D2-ao-ordering-rows", not order_bad,
        "AO >= no-AO on every row" if not order_bad
        else f"violations: {order_bad}"))

    d30 = diffs(m30_rows, "across")
    peaks_ok = d60 and max(d60, key=d60.get) == "medium" \
        and d30 and max(d30, key=d30.get) == "high"
    results.append(CriterionResult(
        "D3-difference-peaks", bool(peaks_ok),
        f"cm60 peak at {max(d60, key=d60.get) if d60 else '?'}, "
        f"m30 across peak at {max(d30, key=d30.get) if d30 else '?'}"))

    fit60 = calibrate_map(refdata.no_ao_points(cm60_rows),
                          ambient_visibility=0.60)
    fit30 = calibrate_map(refdata.no_ao_points(m30_rows),
                          ambient_visibility=0.55)
    ok = fit60.rms <= 0.08 and fit30.rms <= 0.10
    results.append(CriterionResult(
        "D4-calibration-fit", ok,
        f"fit RMS cm60={fit60.rms:.6f} (<=0.08), m30={fit30.rms:.6f} (<=0.10)"))
    return results


def acceptance_checks(tmp_dir) -> list[CriterionResult]:
    """All numbered acceptance criteria, in order."""
    return [
        check_symplectic_oracle(),
        check_max_xi(),
        check_optimal_modulation(),
        check_positive_key(),
        check_ao_ordering(),
        check_heterodyne_gain(),
        check_trace_roundtrip(),
        check_slope_variance_targets(),
        check_loop_bandwidth(),
        check_sweep_determinism(tmp_dir),
    ]


def all_checks(tmp_dir, quick: bool = False,
               cm60_rows=None, m30_rows=None) -> list[CriterionResult]:
    results = dataset_checks(cm60_rows, m30_rows)
    if not quick:
        results.extend(acceptance_checks(tmp_dir))
        results.append(check_ao_visibility_match())
    return results
