"""Tests for trace normalisation, noise estimates and trace file I/O."""

import numpy as np
import pytest

from aoqkd.skr import DetectionScheme, DomainError
from aoqkd.traces import (
    DegenerateDetectorError,
    Trace,
    TraceFormatError,
    TraceKind,
    TraceSet,
    excess_noise_estimate,
    excess_noise_estimate_model_consistent,
    fringe_visibility,
    inferred_visibility,
    normalize_to_snu,
    read_trace,
    synthesize_traceset,
    trace_mean_magnitude,
    write_trace,
    write_windowed_csv,
)

XI_EST_REFERENCE = 0.05188360027069734  # mu (1.05 - 0.027 - 1) / 0.4433


def constant_variance_traceset(cs_var, sn_var, dn_var, n=2000, seed=3):
    """Gaussian traces with sample variances forced exactly to targets."""
    rng = np.random.default_rng(seed)

    def forced(var, kind):
        x = rng.standard_normal(n)
        x = (x - x.mean()) / x.std(ddof=1)
        return Trace(x * np.sqrt(var), 0.240, kind)

    return TraceSet(cs=forced(cs_var, TraceKind.COHERENT_STATE),
                    sn=forced(sn_var, TraceKind.SHOT_NOISE),
                    dn=forced(dn_var, TraceKind.DARK_NOISE))


class TestNormalizeToSnu:
    def test_plain_arithmetic(self):
        # whole-record variances 2.0 / 1.5 / 0.5: true shot noise is 1.0,
        # so V_B = 2.0/1.0 and v_el = 0.5/1.0
        ts = constant_variance_traceset(2.0, 1.5, 0.5)
        wv = normalize_to_snu(ts, window_count=1)
        assert wv.v_b_per_window[0] == pytest.approx(2.0, rel=1e-12)
        assert wv.v_el == pytest.approx(0.5, rel=1e-12)

    def test_shot_noise_limited(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(10_000)
        cs = Trace(x.copy(), 0.240, TraceKind.COHERENT_STATE)
        sn = Trace(x.copy(), 0.240, TraceKind.SHOT_NOISE)
        dn = Trace(np.zeros(10_000), 0.240, TraceKind.DARK_NOISE)
        wv = normalize_to_snu(TraceSet(cs, sn, dn), window_count=1)
        assert wv.v_b_per_window[0] == pytest.approx(1.0, rel=1e-12)
        assert wv.v_el == 0.0

    def test_synthetic_recovery_within_band(self):
        # 5% band at 50k-sample windows holds with large margin
        ts = synthesize_traceset(1.05, 0.027, samples=1_000_000, seed=9)
        wv = normalize_to_snu(ts, window_count=20)
        assert wv.window_size == 50_000
        assert np.all(np.abs(wv.v_b_per_window - 1.05) < 0.05 * 1.05)
        assert wv.v_el == pytest.approx(0.027, rel=0.05)

    def test_degenerate_detector(self):
        ts = constant_variance_traceset(1.0, 0.5, 0.5)
        with pytest.raises(DegenerateDetectorError):
            normalize_to_snu(ts, window_count=1)

    def test_window_count_must_divide(self):
        ts = constant_variance_traceset(2.0, 1.5, 0.5, n=2000)
        with pytest.raises(DomainError):
            normalize_to_snu(ts, window_count=3)

    def test_gain_invariance(self):
        ts = synthesize_traceset(1.05, 0.027, samples=40_000, seed=5)
        wv = normalize_to_snu(ts, window_count=4)
        gain = 37.5

        def scaled(tr):
            return Trace(tr.samples * gain, tr.duration, tr.kind)

        wv2 = normalize_to_snu(TraceSet(scaled(ts.cs), scaled(ts.sn),
                                        scaled(ts.dn)), window_count=4)
        assert wv2.v_b_per_window == pytest.approx(wv.v_b_per_window,
                                                   rel=1e-12)
        assert wv2.v_el == pytest.approx(wv.v_el, rel=1e-12)

    def test_windowing_conservation(self):
        # mean of per-window variances tracks the whole-trace variance
        ts = synthesize_traceset(1.05, 0.027, samples=500_000, seed=13)
        wv = normalize_to_snu(ts, window_count=10)
        true_shot = ts.sn.variance() - ts.dn.variance()
        whole = ts.cs.variance() / true_shot
        assert np.mean(wv.v_b_per_window) == pytest.approx(whole, rel=0.02)


class TestExcessNoiseEstimate:
    def test_shot_noise_limited_gives_zero(self):
        assert excess_noise_estimate(1.027, 0.027, 0.4433,
                                     DetectionScheme.HOMODYNE) == \
            pytest.approx(0.0, abs=1e-12)

    def test_reference_value(self):
        assert excess_noise_estimate(1.05, 0.027, 0.4433,
                                     DetectionScheme.HOMODYNE) == \
            pytest.approx(XI_EST_REFERENCE, rel=1e-12)

    def test_mu_linearity(self):
        hom = excess_noise_estimate(1.05, 0.027, 0.4433,
                                    DetectionScheme.HOMODYNE)
        het = excess_noise_estimate(1.05, 0.027, 0.4433,
                                    DetectionScheme.HETERODYNE)
        assert het == pytest.approx(2 * hom, rel=1e-12)

    def test_zero_transmittance(self):
        with pytest.raises(DomainError):
            excess_noise_estimate(1.05, 0.027, 0.0, DetectionScheme.HOMODYNE)

    def test_model_roundtrip_identity(self):
        # feeding the modelled Bob variance back recovers
        # mu * eta_vis eta_det T (V_A + xi) / T exactly
        from aoqkd.skr import SystemParams, bob_variance_model
        p = SystemParams(transmittance=0.4433, detector_efficiency=1.0,
                         visibility=1.0, modulation_variance=0.3,
                         excess_noise=0.01, electronic_noise=0.027,
                         reconciliation_efficiency=0.9,
                         detection=DetectionScheme.HOMODYNE)
        v_b = bob_variance_model(p)
        xi_est = excess_noise_estimate(v_b, 0.027, 0.4433,
                                       DetectionScheme.HOMODYNE)
        assert xi_est == pytest.approx(0.3 + 0.01, rel=1e-10)

    def test_model_consistent_variant_removes_signal(self):
        from aoqkd.skr import SystemParams, bob_variance_model
        p = SystemParams(transmittance=0.4433, detector_efficiency=0.99,
                         visibility=0.6, modulation_variance=0.3,
                         excess_noise=0.01, electronic_noise=0.027,
                         reconciliation_efficiency=0.9,
                         detection=DetectionScheme.HOMODYNE)
        v_b = bob_variance_model(p)
        xi = excess_noise_estimate_model_consistent(
            v_b, 0.027, 0.4433, 0.99, 0.6, 0.3)
        assert xi == pytest.approx(0.01, rel=1e-9)


class TestSynthesizeTraceset:
    def test_zero_noise_targets(self):
        ts = synthesize_traceset(1.0, 0.0, samples=10_000, seed=2)
        assert np.all(ts.dn.samples == 0.0)
        assert ts.cs.variance() == pytest.approx(ts.sn.variance(), rel=0.1)

    def test_seed_determinism(self):
        a = synthesize_traceset(1.05, 0.027, samples=5_000, seed=77)
        b = synthesize_traceset(1.05, 0.027, samples=5_000, seed=77)
        assert np.array_equal(a.cs.samples, b.cs.samples)
        assert np.array_equal(a.sn.samples, b.sn.samples)
        assert np.array_equal(a.dn.samples, b.dn.samples)

    def test_negative_target_rejected(self):
        with pytest.raises(DomainError):
            synthesize_traceset(-0.1, 0.0)


class TestVisibilityHelpers:
    def test_inferred_identity(self):
        v = inferred_visibility(0.8, 0.8, 0.6)
        assert v.value == pytest.approx(0.6)

    def test_inferred_proportionality(self):
        v = inferred_visibility(0.4, 0.8, 0.6)
        assert v.value == pytest.approx(0.3)

    def test_inferred_zero(self):
        assert inferred_visibility(0.0, 0.8, 0.6).value == 0.0

    def test_inferred_clamps_but_reports_raw(self):
        v = inferred_visibility(2.0, 0.8, 0.6)
        assert v.value == 1.0
        assert v.raw == pytest.approx(1.5)

    def test_inferred_zero_baseline(self):
        with pytest.raises(DomainError):
            inferred_visibility(0.5, 0.0, 0.6)

    def test_fringe_perfect(self):
        assert fringe_visibility(1.0, 0.0) == 1.0

    def test_fringe_none(self):
        assert fringe_visibility(0.7, 0.7) == 0.0

    def test_fringe_half(self):
        assert fringe_visibility(3.0, 1.0) == pytest.approx(0.5)

    def test_fringe_scale_invariance(self):
        for c in (0.1, 2.0, 1000.0):
            assert fringe_visibility(3.0 * c, 1.0 * c) == pytest.approx(
                0.5, rel=1e-12)

    def test_fringe_errors(self):
        with pytest.raises(DomainError):
            fringe_visibility(1.0, 2.0)
        with pytest.raises(DomainError):
            fringe_visibility(0.0, 0.0)

    def test_trace_mean_magnitude(self):
        tr = Trace(np.array([1.0, -1.0, 3.0, -3.0]), 0.1,
                   TraceKind.COHERENT_STATE)
        assert trace_mean_magnitude(tr) == pytest.approx(2.0)


class TestTraceFiles:
    def test_text_roundtrip(self, tmp_path):
        ts = synthesize_traceset(1.05, 0.027, samples=200, seed=4)
        path = tmp_path / "cs.txt"
        write_trace(ts.cs, path)
        back = read_trace(path)
        assert back.kind is TraceKind.COHERENT_STATE
        assert back.duration == pytest.approx(0.240)
        assert np.array_equal(back.samples, ts.cs.samples)

    def test_binary_roundtrip(self, tmp_path):
        ts = synthesize_traceset(1.05, 0.027, samples=200, seed=4)
        path = tmp_path / "sn.bin"
        write_trace(ts.sn, path, binary=True)
        back = read_trace(path)
        assert back.kind is TraceKind.SHOT_NOISE
        assert back.duration == pytest.approx(0.240)
        assert np.array_equal(back.samples, ts.sn.samples)

    def test_text_error_names_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# kind: shot_noise\n# duration_ms: 240\n"
                        "# samples: 2\n0.5\nnot-a-number\n")
        with pytest.raises(TraceFormatError, match="bad.txt:5"):
            read_trace(path)

    def test_text_sample_count_mismatch(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("# kind: dark_noise\n# duration_ms: 240\n"
                        "# samples: 3\n0.5\n")
        with pytest.raises(TraceFormatError, match="declares 3"):
            read_trace(path)

    def test_binary_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(TraceFormatError):
            read_trace(path)

    def test_binary_truncated_payload(self, tmp_path):
        ts = synthesize_traceset(1.0, 0.0, samples=64, seed=1)
        path = tmp_path / "trunc.bin"
        write_trace(ts.cs, path, binary=True)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(TraceFormatError, match="payload"):
            read_trace(path)

    def test_windowed_csv(self, tmp_path):
        ts = synthesize_traceset(1.05, 0.027, samples=1000, seed=6)
        wv = normalize_to_snu(ts, window_count=4)
        path = tmp_path / "out.csv"
        write_windowed_csv(wv, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "window_index,v_b_snu,v_el_snu"
        assert len(lines) == 5


class TestTraceSetValidation:
    def test_length_mismatch(self):
        a = Trace(np.zeros(10), 0.1, TraceKind.COHERENT_STATE)
        b = Trace(np.zeros(11), 0.1, TraceKind.SHOT_NOISE)
        c = Trace(np.zeros(10), 0.1, TraceKind.DARK_NOISE)
        with pytest.raises(TraceFormatError):
            TraceSet(a, b, c)

    def test_duration_mismatch(self):
        a = Trace(np.zeros(10), 0.1, TraceKind.COHERENT_STATE)
        b = Trace(np.zeros(10), 0.2, TraceKind.SHOT_NOISE)
        c = Trace(np.zeros(10), 0.1, TraceKind.DARK_NOISE)
        with pytest.raises(TraceFormatError):
            TraceSet(a, b, c)
