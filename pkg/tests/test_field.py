import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_field
from holograph.errors import InvalidArgumentError
from holograph.field import (
    ComplexField,
    DetectorLayout,
    GridSpec,
    PhaseMask,
    detect,
    diff_msg,
    fresnel_transfer,
    intensity,
    make_detector_layout,
    modulate,
    propagate,
)
from oracles import gaussian_waist, second_moment_waist


def test_gridspec_validation():
    with pytest.raises(InvalidArgumentError):
        GridSpec(n=1)
    with pytest.raises(InvalidArgumentError):
        GridSpec(pitch=0.0)
    with pytest.raises(InvalidArgumentError):
        GridSpec(wavelength=-1.0)
    g = GridSpec(n=200)
    assert g.wavenumber == pytest.approx(2 * math.pi / 532e-9)
    assert g.frequency_spacing == pytest.approx(1 / (200 * 36e-6))
    f = g.frequencies()
    assert f[0] == 0 and f[100] == pytest.approx(-100 / (200 * 36e-6))


def test_field_rejects_shape_and_nan(grid64):
    with pytest.raises(InvalidArgumentError):
        ComplexField(grid64, np.zeros((10, 10)))
    bad = np.zeros((64, 64), complex)
    bad[0, 0] = np.nan
    with pytest.raises(InvalidArgumentError):
        ComplexField(grid64, bad)


class TestTransfer:
    def test_zero_distance_is_one(self, grid64):
        h = fresnel_transfer(grid64, 0.0).values
        assert np.array_equal(h, np.ones_like(h))

    @pytest.mark.parametrize("z", [0.0, 1e-3, 0.2794, 3.7])
    def test_unit_modulus(self, z):
        h = fresnel_transfer(GridSpec(n=48, pitch=20e-6), z).values
        assert np.max(np.abs(np.abs(h) - 1)) < 1e-15

    def test_dc_phase_is_kz_mod_2pi(self):
        grid = GridSpec(n=200, pitch=36e-6, wavelength=532e-9)
        h = fresnel_transfer(grid, 0.2794).values
        expected = (2 * math.pi * 0.2794 / 532e-9) % (2 * math.pi)
        got = np.angle(h[0, 0]) % (2 * math.pi)
        # direct evaluation of k*z ~ 3.3e6 rad is itself only good to ~1e-9 rad
        assert abs(got - expected) < 1e-8

    def test_quadratic_phase_at_one_frequency(self):
        grid = GridSpec(n=32, pitch=10e-6, wavelength=633e-9)
        z = 0.05
        h = fresnel_transfer(grid, z).values
        fx = 3 / (32 * 10e-6)
        fy = -5 / (32 * 10e-6)
        phase = 2 * math.pi * z / 633e-9 - math.pi * 633e-9 * z * (fx ** 2 + fy ** 2)
        assert abs(h[-5, 3] - complex(math.cos(phase), math.sin(phase))) < 1e-9

    def test_negative_distance_rejected(self, grid64):
        with pytest.raises(InvalidArgumentError):
            fresnel_transfer(grid64, -1.0)


class TestPropagate:
    def test_zero_distance_identity(self, grid64, rng):
        f = random_field(grid64, rng)
        assert np.max(np.abs(propagate(f, 0.0).values - f.values)) <= 1e-12

    def test_semigroup(self, grid64, rng):
        f = random_field(grid64, rng)
        a = propagate(propagate(f, 0.13), 0.29)
        b = propagate(f, 0.42)
        assert np.max(np.abs(a.values - b.values)) <= 1e-10

    def test_energy_preserved(self, grid64, rng):
        f = random_field(grid64, rng)
        for z in (0.01, 0.2794, 2.0):
            assert abs(propagate(f, z).energy() - f.energy()) / f.energy() <= 1e-12

    def test_linearity(self, grid64, rng):
        f, g = random_field(grid64, rng), random_field(grid64, rng)
        a, b = 0.3 - 0.8j, -0.6 + 0.1j
        lhs = propagate(ComplexField(grid64, a * f.values + b * g.values), 0.2794).values
        rhs = a * propagate(f, 0.2794).values + b * propagate(g, 0.2794).values
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    @pytest.mark.parametrize("z", [0.2794, 1.5, 3.0])
    def test_gaussian_beam_waist(self, z):
        grid = GridSpec(n=256, pitch=36e-6, wavelength=532e-9)
        w0 = 20 * grid.pitch
        x = (np.arange(grid.n) - grid.n // 2) * grid.pitch
        r2 = x[None, :] ** 2 + x[:, None] ** 2
        f = ComplexField(grid, np.exp(-r2 / w0 ** 2))
        wx, wy = second_moment_waist(intensity(propagate(f, z)), grid.pitch)
        expected = gaussian_waist(z, w0, grid.wavelength)
        assert abs(wx - expected) / expected < 0.02
        assert abs(wy - expected) / expected < 0.02

    def test_padding_reduces_wraparound(self):
        grid = GridSpec(n=32, pitch=36e-6)
        v = np.zeros((32, 32), complex)
        v[0:4, 0:4] = 1.0  # beam hugging the corner
        f = ComplexField(grid, v)
        periodic = intensity(propagate(f, 0.2794))
        padded = intensity(propagate(f, 0.2794, pad=True))
        # the far corner receives wrapped light only in the periodic model
        assert padded[-4:, -4:].sum() < periodic[-4:, -4:].sum()
        assert propagate(f, 0.2794, pad=True).energy() <= f.energy() + 1e-12


class TestModulate:
    def test_zero_phase_identity(self, grid64, rng):
        f = random_field(grid64, rng)
        assert np.array_equal(modulate(f, PhaseMask.zeros(grid64)).values, f.values)

    def test_pi_phase_negates(self, grid64, rng):
        f = random_field(grid64, rng)
        out = modulate(f, PhaseMask(grid64, np.full((64, 64), np.pi))).values
        assert np.max(np.abs(out + f.values)) < 1e-15

    def test_modulus_unchanged(self, grid64, rng):
        f = random_field(grid64, rng)
        mask = PhaseMask(grid64, rng.uniform(-50, 50, (64, 64)))
        out = modulate(f, mask)
        assert np.max(np.abs(np.abs(out.values) - np.abs(f.values))) <= 1e-14

    def test_grid_mismatch(self, grid64, rng):
        f = random_field(grid64, rng)
        with pytest.raises(InvalidArgumentError):
            modulate(f, PhaseMask.zeros(GridSpec(n=64, pitch=1e-5)))


class TestDiffMsg:
    def test_composition_bitwise(self, grid64, rng):
        f = random_field(grid64, rng)
        mask = PhaseMask(grid64, rng.uniform(0, 2 * np.pi, (64, 64)))
        a = diff_msg(f, mask, 0.2794).values
        b = modulate(propagate(f, 0.2794), mask).values
        assert np.array_equal(a, b)

    def test_identity_case(self, grid64, rng):
        f = random_field(grid64, rng)
        out = diff_msg(f, PhaseMask.zeros(grid64), 0.0)
        assert np.max(np.abs(out.values - f.values)) <= 1e-12

    def test_energy(self, grid64, rng):
        f = random_field(grid64, rng)
        mask = PhaseMask(grid64, rng.uniform(0, 2 * np.pi, (64, 64)))
        out = diff_msg(f, mask)
        assert abs(out.energy() - f.energy()) / f.energy() <= 1e-12


class TestIntensityDetect:
    def test_intensity_basics(self, grid64, rng):
        assert np.all(intensity(ComplexField.zeros(grid64)) == 0)
        v = np.zeros((64, 64), complex)
        v[3, 7] = 3 + 4j
        assert intensity(ComplexField(grid64, v))[3, 7] == 25.0
        f = random_field(grid64, rng)
        g = ComplexField(grid64, np.exp(1j * 0.7) * f.values)
        assert np.allclose(intensity(f), intensity(g), rtol=1e-14, atol=0)

    def test_uniform_intensity(self):
        layout = make_detector_layout(64, 4, side=10)
        assert np.array_equal(detect(np.ones((64, 64)), layout), np.full(4, 100.0))
        assert np.array_equal(detect(np.zeros((64, 64)), layout), np.zeros(4))

    def test_single_bright_pixel_matches_brute_force(self, rng):
        layout = make_detector_layout(64, 7, side=8)
        for c, (r0, c0, h, w) in enumerate(layout.regions):
            img = np.zeros((64, 64))
            img[r0 + h // 2, c0 + w - 1] = 2.5
            got = detect(img, layout)
            brute = np.zeros(7)
            for i in range(64):
                for j in range(64):
                    for cc, (rr, ccol, hh, ww) in enumerate(layout.regions):
                        if rr <= i < rr + hh and ccol <= j < ccol + ww:
                            brute[cc] += img[i, j]
            assert np.array_equal(got, brute)
            assert np.flatnonzero(got).tolist() == [c]

    def test_region_sum_bounded_by_total(self, rng):
        img = rng.random((64, 64))
        layout = make_detector_layout(64, 5, side=10, gap=2)
        s = detect(img, layout)
        assert np.all(s >= 0) and s.sum() <= img.sum()

    def test_out_of_bounds_region(self):
        layout = DetectorLayout(1, ((60, 60, 10, 10),))
        with pytest.raises(InvalidArgumentError):
            detect(np.ones((64, 64)), layout)


class TestDetectorLayout:
    def test_default_layout_rule(self):
        lay = make_detector_layout(200, 7)
        # 3x3 lattice of 20 px squares, 20 px gaps: extent 100, offset 50
        assert lay.regions[0] == (50, 50, 20, 20)
        assert lay.regions[2] == (50, 130, 20, 20)
        assert lay.regions[3] == (90, 50, 20, 20)
        assert lay.regions[6] == (130, 50, 20, 20)
        assert len(lay.regions) == 7

    def test_overlap_rejected(self):
        with pytest.raises(InvalidArgumentError):
            DetectorLayout(2, ((0, 0, 5, 5), (4, 4, 5, 5)))

    def test_count_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            DetectorLayout(2, ((0, 0, 5, 5),))

    def test_too_large(self):
        with pytest.raises(InvalidArgumentError):
            make_detector_layout(16, 9, side=20)

    @given(st.integers(1, 16), st.integers(1, 6), st.integers(0, 6))
    def test_layout_always_valid(self, c, side, gap):
        m = math.ceil(math.sqrt(c))
        n = m * side + (m - 1) * gap + 3
        lay = make_detector_layout(n, c, side=side, gap=gap)
        lay.validate_for(n)
        assert len(lay.regions) == c


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_unitarity_and_semigroup_property(seed, z1, z2):
    grid = GridSpec(n=32)
    f = random_field(grid, np.random.default_rng(seed))
    a = propagate(f, z1)
    assert abs(a.energy() - 1.0) <= 1e-12
    b = propagate(a, z2)
    c = propagate(f, z1 + z2)
    # the carrier phase 2*pi*z/lambda is only known to an ulp of z/lambda
    phase_ulp = 2 * np.pi * np.spacing((z1 + z2) / grid.wavelength)
    tol = 4 * phase_ulp * np.max(np.abs(f.values)) + 1e-12
    assert np.max(np.abs(b.values - c.values)) <= tol
