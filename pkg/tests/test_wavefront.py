"""Tests for the sensor frame model and the turbulence generator."""

import math

import numpy as np
import pytest

from aoqkd.skr import DomainError
from aoqkd.wavefront import (
    GRID,
    LoopMode,
    LowIntensityError,
    N_MODES,
    N_VALID,
    VALID_MASK,
    TurbulenceGenerator,
    TurbulenceSetting,
    WfsFrame,
    frame_mean_slope,
    generate_turbulence_frame,
    mean_slopes,
    preset_labels,
    preset_setting,
    slope_variance,
    spot_slope,
    subaperture_centers,
    zernike_slope_tables,
)


def make_frame(sx=None, sy=None, inten=None):
    z = np.zeros((GRID, GRID))
    return WfsFrame(
        slopes_x=z if sx is None else sx,
        slopes_y=z if sy is None else sy,
        intensities=np.ones((GRID, GRID)) if inten is None else inten,
    )


def quiet_setting(amplitudes=None, target=1e-4, rho=0.9):
    amps = tuple(amplitudes) if amplitudes is not None else \
        (1.0, 1.0) + (0.0,) * (N_MODES - 2)
    return TurbulenceSetting(label="low", orientation="across",
                             target_slope_variance=target,
                             temporal_correlation=rho,
                             mode_amplitudes=amps)


class TestGeometry:
    def test_valid_mask_excludes_corners(self):
        assert N_VALID == 32
        for r in (0, GRID - 1):
            for c in (0, GRID - 1):
                assert not VALID_MASK[r, c]

    def test_centers_span_unit_pupil(self):
        x, y = subaperture_centers()
        assert x.min() == pytest.approx(-5.0 / 6.0)
        assert x.max() == pytest.approx(5.0 / 6.0)
        assert np.allclose(x, y.T)

    def test_tilt_gradients_are_constant(self):
        gx, gy = zernike_slope_tables()
        assert np.allclose(gx[0], 2.0, atol=1e-6)   # tip
        assert np.allclose(gy[0], 0.0, atol=1e-6)
        assert np.allclose(gy[1], 2.0, atol=1e-6)   # tilt


class TestWfsFrame:
    def test_corner_validity_rejected(self):
        mask = VALID_MASK.copy()
        mask[0, 0] = True
        mask[1, 1] = False
        with pytest.raises(DomainError):
            make_frame().__class__(
                slopes_x=np.zeros((GRID, GRID)),
                slopes_y=np.zeros((GRID, GRID)),
                intensities=np.ones((GRID, GRID)),
                valid_mask=mask)

    def test_wrong_shape_rejected(self):
        with pytest.raises(DomainError):
            WfsFrame(slopes_x=np.zeros((5, 5)),
                     slopes_y=np.zeros((GRID, GRID)),
                     intensities=np.ones((GRID, GRID)))


class TestSpotSlope:
    def test_pythagorean(self):
        assert spot_slope(3.0, 4.0) == 5.0

    def test_zero(self):
        assert spot_slope(0.0, 0.0) == 0.0

    def test_sign_independent(self):
        assert spot_slope(-1.0, 0.0) == 1.0


class TestFrameMeanSlope:
    def test_zero_frame(self):
        assert frame_mean_slope(make_frame()) == 0.0

    def test_constant_field(self):
        sx = np.full((GRID, GRID), 0.6)
        sy = np.full((GRID, GRID), 0.8)
        assert frame_mean_slope(make_frame(sx, sy)) == pytest.approx(1.0)

    def test_matches_direct_recomputation(self):
        rng = np.random.default_rng(8)
        sx = rng.standard_normal((GRID, GRID))
        sy = rng.standard_normal((GRID, GRID))
        frame = make_frame(sx, sy)
        direct = np.mean([math.hypot(sx[r, c], sy[r, c])
                          for r in range(GRID) for c in range(GRID)
                          if VALID_MASK[r, c]])
        assert frame_mean_slope(frame) == pytest.approx(direct, rel=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(9)
        sx = rng.standard_normal((GRID, GRID))
        sy = rng.standard_normal((GRID, GRID))
        theta = 0.7
        rx = math.cos(theta) * sx - math.sin(theta) * sy
        ry = math.sin(theta) * sx + math.cos(theta) * sy
        assert frame_mean_slope(make_frame(rx, ry)) == pytest.approx(
            frame_mean_slope(make_frame(sx, sy)), rel=1e-12)

    def test_low_intensity_raises(self):
        inten = np.ones((GRID, GRID))
        inten[2, 3] = 1e-5
        with pytest.raises(LowIntensityError):
            frame_mean_slope(make_frame(inten=inten))


class TestSlopeVariance:
    def test_identical_frames(self):
        frames = [make_frame() for _ in range(5)]
        assert slope_variance(frames).slope_variance == 0.0

    def test_two_frame_arithmetic(self):
        f0 = make_frame()
        f1 = make_frame(sx=np.full((GRID, GRID), 2.0))
        stats = slope_variance([f0, f1], LoopMode.OPEN)
        # means are 0 and 2 -> unbiased variance 2
        assert stats.slope_variance == pytest.approx(2.0)
        assert stats.frame_count == 2
        assert stats.loop_mode is LoopMode.OPEN

    def test_needs_two_frames(self):
        with pytest.raises(DomainError):
            slope_variance([make_frame()])


class TestTurbulenceGenerator:
    def test_zero_amplitudes_give_zero_slopes(self):
        setting = quiet_setting(amplitudes=(0.0,) * N_MODES, target=0.0)
        gen = TurbulenceGenerator(setting, seed=1)
        sx, sy, inten = gen.frames(10)
        assert np.all(sx == 0.0)
        assert np.all(sy == 0.0)
        assert np.all(inten > 0.0)

    def test_seed_determinism(self):
        setting = quiet_setting()
        a = TurbulenceGenerator(setting, seed=5).frames(50)
        b = TurbulenceGenerator(setting, seed=5).frames(50)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_block_size_invariance(self):
        setting = quiet_setting()
        whole = TurbulenceGenerator(setting, seed=5).frames(20)
        gen = TurbulenceGenerator(setting, seed=5)
        parts = [gen.frames(1) for _ in range(20)]
        sx = np.concatenate([p[0] for p in parts])
        assert np.array_equal(sx, whole[0])

    def test_generate_turbulence_frame(self):
        setting = quiet_setting()
        gen = TurbulenceGenerator(setting, seed=3)
        frame = generate_turbulence_frame(setting, gen)
        assert isinstance(frame, WfsFrame)
        assert frame.slopes_x.shape == (GRID, GRID)

    def test_scale_calibration_hits_target(self):
        setting = quiet_setting(target=2e-4)
        gen = TurbulenceGenerator(setting, seed=11)
        sx, sy, _ = gen.frames(20_000)
        sv = float(np.var(mean_slopes(sx, sy), ddof=1))
        assert sv == pytest.approx(2e-4, rel=0.3)

    def test_corner_intensities_insignificant(self):
        setting = quiet_setting()
        _, _, inten = TurbulenceGenerator(setting, seed=2).frames(100)
        corner_mean = inten[:, ~VALID_MASK].mean()
        valid_mean = inten[:, VALID_MASK].mean()
        assert corner_mean < 0.02 * valid_mean


class TestPresets:
    def test_labels_ordered(self):
        assert preset_labels("cm60") == ["ambient", "low", "medium", "high"]

    def test_unknown_preset(self):
        with pytest.raises(DomainError):
            preset_setting("cm60", "extreme")

    def test_targets_monotone(self):
        for channel, orientation in (("cm60", "across"), ("m30", "across"),
                                     ("m30", "along")):
            targets = [preset_setting(channel, lab, orientation)
                       .target_slope_variance
                       for lab in preset_labels(channel, orientation)]
            assert targets == sorted(targets)
            assert targets[0] == min(targets)

    def test_open_loop_variance_monotone_for_matched_seeds(self):
        values = []
        for label in preset_labels("cm60"):
            setting = preset_setting("cm60", label)
            sx, sy, _ = TurbulenceGenerator(setting, seed=21).frames(4000)
            values.append(float(np.var(mean_slopes(sx, sy), ddof=1)))
        assert values == sorted(values)

    def test_intensity_fluctuation_grows_with_setting(self):
        sigmas = [preset_setting("cm60", lab).intensity_sigma
                  for lab in preset_labels("cm60")]
        assert sigmas == sorted(sigmas)


class TestSettingValidation:
    def test_bad_label(self):
        with pytest.raises(DomainError):
            TurbulenceSetting(label="hurricane", orientation="across",
                              target_slope_variance=1.0,
                              temporal_correlation=0.9,
                              mode_amplitudes=(1.0,) * N_MODES)

    def test_bad_correlation(self):
        with pytest.raises(DomainError):
            quiet_setting(rho=1.0)

    def test_bad_mode_count(self):
        with pytest.raises(DomainError):
            TurbulenceSetting(label="low", orientation="across",
                              target_slope_variance=1.0,
                              temporal_correlation=0.9,
                              mode_amplitudes=(1.0, 2.0))
