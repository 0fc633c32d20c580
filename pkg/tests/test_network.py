import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_field
from holograph.errors import FormatError, InvalidArgumentError, NumericError
from holograph.field import ComplexField, GridSpec, diff_msg, detect, make_detector_layout, propagate
from holograph.network import (
    argmax_lowest,
    SETUPS,
    NetworkConfig,
    SkipChannel,
    build_setup,
    detector_sums,
    forward,
    forward_batch,
    load_checkpoint,
    merge,
    predict,
    save_checkpoint,
)
from holograph.reference import reference_detector_field
from holograph.training import TrainState

Z = 0.2794


def random_net(grid, rng, layers=6, skips=(), classes=2, side=4, **kw):
    return NetworkConfig.create(grid, num_layers=layers, skips=skips, num_classes=classes,
                                region_side=side, rng=rng, **kw)


class TestSetups:
    def test_table(self):
        expected = {
            "none": [],
            "1": [(0, 2), (0, 3)],
            "2": [(0, 4), (0, 5), (0, 6)],
            "3": [(1, 4), (2, 4)],
            "4": [(3, 5), (3, 6)],
            "5": [(0, 4), (1, 4), (2, 4)],
            "6": [(0, 4), (1, 5), (2, 6)],
        }
        for key, pairs in expected.items():
            got = [(s.from_layer, s.to_layer) for s in build_setup(key)]
            assert got == pairs
        assert build_setup(2) == build_setup("2")

    def test_custom_and_errors(self):
        assert build_setup(["0->3", (1, 2)]) == [SkipChannel(0, 3), SkipChannel(1, 2)]
        with pytest.raises(InvalidArgumentError):
            build_setup("7")
        with pytest.raises(InvalidArgumentError):
            SkipChannel(3, 3)
        with pytest.raises(InvalidArgumentError):
            SkipChannel(-1, 2)
        assert SkipChannel(1, 4).hops == 3
        assert set(SETUPS) >= {"none", "1", "2", "3", "4", "5", "6"}

    def test_skip_past_last_layer(self, grid64):
        with pytest.raises(InvalidArgumentError):
            NetworkConfig.create(grid64, num_layers=3, skips="2", region_side=4)


class TestMerge:
    def test_identical_exact(self, grid64, rng):
        f = random_field(grid64, rng)
        for m in (1, 2, 3, 5):
            assert np.array_equal(merge([f] * m).values, f.values)

    def test_with_zero_halves(self, grid64, rng):
        f = random_field(grid64, rng)
        out = merge([f, ComplexField.zeros(grid64)])
        assert np.array_equal(out.values, f.values / 2)

    def test_mean(self, grid64, rng):
        fs = [random_field(grid64, rng) for _ in range(3)]
        out = merge(fs).values
        assert np.max(np.abs(out - sum(f.values for f in fs) / 3)) <= 1e-15

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            merge([])


class TestForward:
    def test_single_layer_equals_diff_msg(self, grid64, rng):
        net = random_net(grid64, rng, layers=1)
        f = random_field(grid64, rng)
        inten, fields = forward(net, f)
        ref = diff_msg(f, net.masks[0], Z).values
        assert np.max(np.abs(fields[1].values - ref)) <= 1e-12
        assert np.max(np.abs(inten - np.abs(ref) ** 2)) <= 1e-13

    def test_skip_free_left_fold(self, grid64, rng):
        net = random_net(grid64, rng, layers=6)
        f = random_field(grid64, rng)
        _, fields = forward(net, f)
        g = f
        for mask in net.masks:
            g = diff_msg(g, mask, Z)
        assert np.max(np.abs(fields[-1].values - g.values)) <= 1e-12

    def test_linearity_oracle_skip_0_4(self, grid64, rng):
        net = NetworkConfig.create(grid64, num_layers=6, skips=[(0, 4)], region_side=4)
        f = random_field(grid64, rng)
        _, fields = forward(net, f)
        expected = (propagate(f, 6 * Z).values + propagate(f, 7 * Z).values) / 2
        assert np.max(np.abs(fields[-1].values - expected)) <= 1e-10

    def test_zero_theta_superposition(self, grid64, rng):
        net = NetworkConfig.create(grid64, num_layers=6, skips="2", region_side=4)
        f, g = random_field(grid64, rng), random_field(grid64, rng)
        a, b = 0.7 + 0.2j, -1.1j
        out = forward_batch(net, np.stack([f.values, g.values, a * f.values + b * g.values])).layer_fields[-1]
        assert np.max(np.abs(out[2] - (a * out[0] + b * out[1]))) <= 1e-10

    @pytest.mark.parametrize("setup", ["none", "1", "2", "3", "4", "5", "6"])
    def test_engine_matches_literal_reference(self, setup, rng):
        grid = GridSpec(n=24)
        net = random_net(grid, rng, layers=6, skips=setup, classes=3, side=3)
        batch = np.stack([random_field(grid, rng).values for _ in range(3)])
        fast = forward_batch(net, batch).detector_field
        slow = reference_detector_field(net, batch)
        assert np.max(np.abs(fast - slow)) <= 1e-12

    def test_detector_hops(self, grid64, rng):
        net = random_net(grid64, rng, layers=2, detector_hops=1)
        f = random_field(grid64, rng)
        cache = forward_batch(net, f.values)
        expected = propagate(ComplexField(grid64, cache.layer_fields[-1]), Z).values
        assert np.max(np.abs(cache.detector_field - expected)) <= 1e-12

    def test_energy_never_grows(self, grid64, rng):
        for setup in ("none", "2", "5"):
            net = random_net(grid64, rng, skips=setup)
            f = random_field(grid64, rng)
            _, fields = forward(net, f)
            for layer in fields:
                assert layer.energy() <= 1.0 + 1e-12
            if setup == "none":
                assert abs(fields[-1].energy() - 1.0) <= 1e-12

    def test_zero_input(self, grid64, rng):
        net = random_net(grid64, rng, skips="2")
        inten, _ = forward(net, ComplexField.zeros(grid64))
        assert np.all(inten == 0)

    def test_batch_matches_single(self, grid64, rng):
        net = random_net(grid64, rng, skips="6")
        fs = [random_field(grid64, rng) for _ in range(4)]
        batch = forward_batch(net, np.stack([f.values for f in fs])).intensity
        for i, f in enumerate(fs):
            single, _ = forward(net, f)
            assert np.array_equal(batch[i], single)

    def test_non_finite_raises(self, grid64, rng):
        net = random_net(grid64, rng, layers=2)
        bad = np.zeros((64, 64), complex)
        bad[0, 0] = np.inf
        with pytest.raises(NumericError, match="layer 1"):
            forward_batch(net, bad)

    def test_shape_mismatch(self, grid64, rng):
        net = random_net(grid64, rng, layers=2)
        with pytest.raises(InvalidArgumentError):
            forward_batch(net, np.zeros((32, 32)))


class TestPredict:
    def test_concentrated_region(self, grid64):
        lay = make_detector_layout(64, 4, side=8)
        # zero masks over a negligible distance act as the identity
        grid = GridSpec(n=64, layer_distance=1e-12)
        net = NetworkConfig.create(grid, num_layers=1, detector=lay)
        r0, c0, h, w = lay.regions[2]
        v = np.zeros((64, 64), complex)
        v[r0:r0 + h, c0:c0 + w] = 1.0
        assert predict(net, ComplexField(grid, v)) == 2

    def test_ties_go_low(self):
        assert argmax_lowest(np.array([1.0, 3.0, 2.0, 3.0])) == 1
        assert argmax_lowest(np.zeros(4)) == 0
        assert argmax_lowest(np.array([[0.0, 5.0, 5.0], [2.0, 2.0, 1.0]])).tolist() == [1, 0]
        grid = GridSpec(n=64, layer_distance=1e-12)
        net = NetworkConfig.create(grid, num_layers=1, num_classes=4, region_side=8)
        assert predict(net, ComplexField.zeros(grid)) == 0

    def test_brute_force_readout(self, grid64, rng):
        net = random_net(grid64, rng, skips="2", classes=5, side=6)
        for _ in range(5):
            f = random_field(grid64, rng)
            inten, _ = forward(net, f)
            sums = []
            for r0, c0, h, w in net.detector.regions:
                total = 0.0
                for i in range(r0, r0 + h):
                    for j in range(c0, c0 + w):
                        total += inten[i, j]
                sums.append(total)
            best = max(range(5), key=lambda c: (sums[c], -c))
            assert predict(net, f) == best
            assert np.allclose(detector_sums(inten, net.detector), sums, rtol=1e-13, atol=0)
            assert np.array_equal(detect(inten, net.detector), detector_sums(inten, net.detector))


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        grid = GridSpec(n=20, pitch=30e-6, wavelength=633e-9, layer_distance=0.1)
        net = random_net(grid, rng, layers=6, skips="6", classes=3, side=3)
        state = TrainState.fresh(net)
        state.m[2][:] = rng.standard_normal((20, 20))
        path = tmp_path / "c.hgr"
        save_checkpoint(net, state, path)
        loaded, moments = load_checkpoint(path)
        assert loaded.grid == grid
        assert loaded.skips == net.skips
        assert loaded.detector.regions == net.detector.regions
        for a, b in zip(net.thetas(), loaded.thetas()):
            assert a.tobytes() == b.tobytes()
        assert moments[0][2].tobytes() == state.m[2].tobytes()
        save_checkpoint(loaded, TrainState(loaded.thetas(), moments[0], moments[1], 0, 0, 0, state.hyper),
                        tmp_path / "d.hgr")
        assert (tmp_path / "d.hgr").read_bytes() == path.read_bytes()

    def test_layout_of_header(self, tmp_path, rng):
        grid = GridSpec(n=8)
        net = random_net(grid, rng, layers=2, skips=[(0, 2)], classes=2, side=2)
        save_checkpoint(net, None, tmp_path / "c.hgr")
        raw = (tmp_path / "c.hgr").read_bytes()
        assert raw[:4] == b"HGR1"
        assert np.frombuffer(raw[4:20], "<u4").tolist() == [1, 8, 2, 1]
        assert np.frombuffer(raw[20:28], "<u4").tolist() == [0, 2]
        size = 4 + 16 + 8 + 24 + 4 + 2 * 16 + 2 * 64 * 8 + 1
        assert len(raw) == size and raw[-1] == 0
        _, moments = load_checkpoint(tmp_path / "c.hgr")
        assert moments is None

    def test_bad_magic(self, tmp_path, rng):
        net = random_net(GridSpec(n=8), rng, layers=1, side=2)
        p = tmp_path / "c.hgr"
        save_checkpoint(net, None, p)
        p.write_bytes(b"XXXX" + p.read_bytes()[4:])
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(p)

    def test_bad_version(self, tmp_path, rng):
        net = random_net(GridSpec(n=8), rng, layers=1, side=2)
        p = tmp_path / "c.hgr"
        save_checkpoint(net, None, p)
        raw = bytearray(p.read_bytes())
        raw[4] = 9
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            load_checkpoint(p)

    def test_truncated_names_section(self, tmp_path, rng):
        net = random_net(GridSpec(n=8), rng, layers=2, side=2)
        p = tmp_path / "c.hgr"
        save_checkpoint(net, None, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:len(raw) - 100])
        with pytest.raises(FormatError, match="mask 2") as info:
            load_checkpoint(p)
        assert "offset" in str(info.value)
        p.write_bytes(raw[:10])
        with pytest.raises(FormatError, match="header"):
            load_checkpoint(p)

    def test_trailing_bytes(self, tmp_path, rng):
        net = random_net(GridSpec(n=8), rng, layers=1, side=2)
        p = tmp_path / "c.hgr"
        save_checkpoint(net, None, p)
        p.write_bytes(p.read_bytes() + b"\0")
        with pytest.raises(FormatError):
            load_checkpoint(p)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from(["none", "1", "3", "5"]))
def test_output_energy_bounded(seed, setup):
    rng = np.random.default_rng(seed)
    grid = GridSpec(n=16)
    net = random_net(grid, rng, skips=setup, side=2)
    cache = forward_batch(net, random_field(grid, rng).values)
    assert np.sum(cache.intensity) <= 1.0 + 1e-12
