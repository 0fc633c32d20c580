"""Diffractive layer stack with optical skip channels.

Layer 0 is the input plane; layers ``1..L`` each run one diffractive step
(propagate by the layer distance ``z``, then phase-modulate). A skip channel
``a -> b`` taps the field right after layer ``a``'s modulation, propagates it
over ``(b - a) z`` and is averaged (equal weights) with the mainline field
entering layer ``b``. The field leaving layer ``L`` is read out as intensity.

The batched engine below keeps everything in the spectral domain where it
can: because propagation is a diagonal multiply after an FFT, the spectrum
of a merged field is the mean of the (transfer-multiplied) branch spectra.
Each layer therefore costs one FFT and one inverse FFT regardless of how
many skips arrive at it.
"""

from __future__ import annotations

import functools
import io
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from holograph.errors import FormatError, InvalidArgumentError, NumericError
from holograph.field import (
    ComplexField,
    DetectorLayout,
    GridSpec,
    PhaseMask,
    detect,
    make_detector_layout,
    transfer_array,
)

__all__ = [
    "SkipChannel",
    "NetworkConfig",
    "SETUPS",
    "build_setup",
    "forward",
    "predict",
    "merge",
    "ForwardCache",
    "forward_batch",
    "detector_sums",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True, order=True)
class SkipChannel:
    from_layer: int
    to_layer: int

    def __post_init__(self):
        if self.from_layer < 0 or self.to_layer <= self.from_layer:
            raise InvalidArgumentError(
                f"skip channel {self.from_layer}->{self.to_layer} must satisfy 0 <= from < to"
            )

    @property
    def hops(self) -> int:
        return self.to_layer - self.from_layer

    def __str__(self):
        return f"{self.from_layer}->{self.to_layer}"


SETUPS: dict[str, tuple[tuple[int, int], ...]] = {
    "none": (),
    "1": ((0, 2), (0, 3)),
    "2": ((0, 4), (0, 5), (0, 6)),
    "3": ((1, 4), (2, 4)),
    "4": ((3, 5), (3, 6)),
    "5": ((0, 4), (1, 4), (2, 4)),
    "6": ((0, 4), (1, 5), (2, 6)),
}


def build_setup(setup) -> list[SkipChannel]:
    """Skip channels of a named setup (``1``-``6`` or ``"none"``).

    An explicit sequence of ``(from, to)`` pairs or ``"a->b"`` strings is
    passed through as channels.
    """
    if isinstance(setup, (list, tuple)):
        out = []
        for item in setup:
            if isinstance(item, SkipChannel):
                out.append(item)
            elif isinstance(item, str):
                a, _, b = item.partition("->")
                try:
                    out.append(SkipChannel(int(a), int(b)))
                except ValueError:
                    raise InvalidArgumentError(f"cannot parse skip channel {item!r}") from None
            else:
                a, b = item
                out.append(SkipChannel(int(a), int(b)))
        return out
    key = str(setup).strip().lower()
    if key not in SETUPS:
        raise InvalidArgumentError(
            f"unknown skip setup {setup!r}; expected one of {', '.join(SETUPS)} or an explicit list"
        )
    return [SkipChannel(a, b) for a, b in SETUPS[key]]


@dataclass(frozen=True, eq=False)
class NetworkConfig:
    grid: GridSpec
    masks: tuple[PhaseMask, ...]
    skips: tuple[SkipChannel, ...] = ()
    detector: DetectorLayout | None = None
    feature_layers: int = 3
    # free-space hops (multiples of z) between the last layer and the detector
    detector_hops: int = 0

    def __post_init__(self):
        object.__setattr__(self, "masks", tuple(self.masks))
        object.__setattr__(self, "skips", tuple(self.skips))
        if not self.masks:
            raise InvalidArgumentError("network needs at least one layer")
        for i, m in enumerate(self.masks):
            if m.grid != self.grid:
                raise InvalidArgumentError(f"mask {i + 1} is sampled on a different grid")
        seen = set()
        for s in self.skips:
            if s.to_layer > self.num_layers:
                raise InvalidArgumentError(
                    f"skip {s} ends past the last layer ({self.num_layers})"
                )
            key = (s.from_layer, s.to_layer)
            if key in seen:
                raise InvalidArgumentError(f"duplicate skip channel {s}")
            seen.add(key)
        if self.detector is None:
            raise InvalidArgumentError("network config needs a detector layout")
        if self.detector_hops < 0:
            raise InvalidArgumentError("detector_hops must be >= 0")
        self.detector.validate_for(self.grid.n)

    @property
    def num_layers(self) -> int:
        return len(self.masks)

    @property
    def num_classes(self) -> int:
        return self.detector.num_classes

    @classmethod
    def create(
        cls,
        grid: GridSpec,
        num_layers: int = 6,
        skips=(),
        num_classes: int = 2,
        detector: DetectorLayout | None = None,
        region_side: int = 20,
        thetas: Sequence[np.ndarray] | None = None,
        rng: np.random.Generator | None = None,
        feature_layers: int = 3,
        detector_hops: int = 0,
    ) -> "NetworkConfig":
        """Convenience constructor.

        Phases come from ``thetas`` if given, else i.i.d. uniform on
        ``[0, 2 pi)`` from ``rng``, else zero.
        """
        if thetas is None:
            if rng is None:
                thetas = [np.zeros((grid.n, grid.n)) for _ in range(num_layers)]
            else:
                thetas = [rng.uniform(0.0, 2 * np.pi, size=(grid.n, grid.n)) for _ in range(num_layers)]
        if detector is None:
            detector = make_detector_layout(grid.n, num_classes, side=region_side)
        return cls(
            grid=grid,
            masks=tuple(PhaseMask(grid, t) for t in thetas),
            skips=tuple(build_setup(skips)),
            detector=detector,
            feature_layers=feature_layers,
            detector_hops=detector_hops,
        )

    def thetas(self) -> list[np.ndarray]:
        return [m.theta for m in self.masks]

    def with_thetas(self, thetas: Sequence[np.ndarray]) -> "NetworkConfig":
        if len(thetas) != self.num_layers:
            raise InvalidArgumentError(f"expected {self.num_layers} phase arrays, got {len(thetas)}")
        return replace(self, masks=tuple(PhaseMask(self.grid, t) for t in thetas))

    def incoming(self) -> dict[int, list[int]]:
        """Destination layer -> sorted source layers."""
        out: dict[int, list[int]] = {}
        for s in sorted(self.skips):
            out.setdefault(s.to_layer, []).append(s.from_layer)
        return out


def merge(fields: Sequence[ComplexField]) -> ComplexField:
    """Equal-weight complex mean of fields arriving at one plane."""
    if not fields:
        raise InvalidArgumentError("nothing to merge")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise InvalidArgumentError("merged fields must share a grid")
    if len(fields) == 1:
        return fields[0]
    # shifted mean: exact when all branches are identical
    base = fields[0].values
    delta = np.zeros_like(base)
    for f in fields[1:]:
        delta += f.values - base
    return ComplexField(grid, base + delta / len(fields))


@functools.lru_cache(maxsize=64)
def _transfer(grid: GridSpec, hops: int) -> np.ndarray:
    h = transfer_array(grid, hops * grid.layer_distance)
    h.setflags(write=False)
    return h


@dataclass
class ForwardCache:
    """Intermediates of a batched forward pass, consumed by the reverse pass.

    ``layer_fields[b]`` is the ``(B, n, n)`` field leaving layer ``b``
    (``layer_fields[0]`` is the input); ``transmissions[b - 1]`` is
    ``exp(1j theta_b)``. ``detector_field`` is the field on the detector
    plane (the last layer's output unless ``detector_hops > 0``).
    """

    layer_fields: list[np.ndarray]
    transmissions: list[np.ndarray]
    detector_field: np.ndarray
    intensity: np.ndarray
    sums: np.ndarray = field(default=None)


def _check_finite(arr: np.ndarray, layer: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite field values after layer {layer}")


def forward_batch(config: NetworkConfig, inputs: np.ndarray, check_finite: bool = True) -> ForwardCache:
    """Run a batch of input fields, shape ``(B, n, n)`` or ``(n, n)``."""
    inputs = np.asarray(inputs, dtype=np.complex128)
    n = config.grid.n
    if inputs.shape[-2:] != (n, n):
        raise InvalidArgumentError(f"input fields have shape {inputs.shape}, grid is {n}x{n}")
    incoming = config.incoming()
    sources = {s.from_layer for s in config.skips}
    h_layer = _transfer(config.grid, 1)
    trans = [np.exp(1j * m.theta) for m in config.masks]

    layer_fields = [inputs]
    spectra: dict[int, np.ndarray] = {}
    current = sfft.fft2(inputs)
    if 0 in sources:
        spectra[0] = current
    L = config.num_layers
    for b in range(1, L + 1):
        srcs = incoming.get(b)
        if srcs:
            delta = np.zeros_like(current)
            for a in srcs:
                delta += _transfer(config.grid, b - a) * spectra[a] - current
            u = current + delta / (len(srcs) + 1)
        else:
            u = current
        s = sfft.ifft2(h_layer * u)
        s *= trans[b - 1]
        if check_finite:
            _check_finite(s, b)
        layer_fields.append(s)
        if b < L:
            current = sfft.fft2(s)
            if b in sources:
                spectra[b] = current
    out = layer_fields[-1]
    if config.detector_hops:
        out = sfft.ifft2(_transfer(config.grid, config.detector_hops) * sfft.fft2(out))
    inten = out.real ** 2 + out.imag ** 2
    return ForwardCache(layer_fields, trans, out, inten, detector_sums(inten, config.detector))


def detector_sums(intensity_maps: np.ndarray, layout: DetectorLayout) -> np.ndarray:
    """Region sums for a batch of intensity maps, shape ``(..., C)``."""
    return np.stack(
        [intensity_maps[..., r0:r0 + h, c0:c0 + w].sum(axis=(-2, -1)) for r0, c0, h, w in layout.regions],
        axis=-1,
    )


def forward(config: NetworkConfig, input_field: ComplexField) -> tuple[np.ndarray, list[ComplexField]]:
    """Detector-plane intensity and the field leaving every layer (index 0 = input)."""
    if input_field.grid != config.grid:
        raise InvalidArgumentError("input field grid differs from the network grid")
    cache = forward_batch(config, input_field.values)
    fields = [ComplexField(config.grid, f) for f in cache.layer_fields]
    return cache.intensity, fields


def argmax_lowest(sums: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(sums, axis=-1)


def predict(config: NetworkConfig, input_field: ComplexField) -> int:
    inten, _ = forward(config, input_field)
    return int(argmax_lowest(detect(inten, config.detector)))


# --- checkpoint files ------------------------------------------------------

MAGIC = b"HGR1"
VERSION = 1


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int, section: str) -> bytes:
        if self.pos + size > len(self.data):
            raise FormatError(
                f"truncated checkpoint: section '{section}' needs {size} bytes, "
                f"{len(self.data) - self.pos} remain",
                offset=self.pos,
            )
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str, section: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), section))

    def array(self, count: int, section: str) -> np.ndarray:
        raw = self.take(8 * count, section)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def _atomic_write(path: Path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    tmp.replace(path)


def save_checkpoint(config: NetworkConfig, state, path) -> None:
    """Write masks, topology and optional Adam moments.

    ``state`` may be ``None`` or any object with ``m`` and ``v`` lists of
    arrays (a :class:`holograph.training.TrainState`); moments are stored
    when both are present.
    """
    g = config.grid
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IIII", VERSION, g.n, config.num_layers, len(config.skips)))
    for s in config.skips:
        buf.write(struct.pack("<II", s.from_layer, s.to_layer))
    buf.write(struct.pack("<ddd", g.wavelength, g.layer_distance, g.pitch))
    buf.write(struct.pack("<I", config.detector.num_classes))
    for region in config.detector.regions:
        buf.write(struct.pack("<IIII", *region))
    for m in config.masks:
        buf.write(np.ascontiguousarray(m.theta, dtype="<f8").tobytes())
    m_list = getattr(state, "m", None) if state is not None else None
    v_list = getattr(state, "v", None) if state is not None else None
    if m_list is not None and v_list is not None:
        buf.write(b"\x01")
        for m_arr, v_arr in zip(m_list, v_list):
            buf.write(np.ascontiguousarray(m_arr, dtype="<f8").tobytes())
            buf.write(np.ascontiguousarray(v_arr, dtype="<f8").tobytes())
    else:
        buf.write(b"\x00")
    _atomic_write(Path(path), buf.getvalue())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`.

    Returns ``(config, moments)`` where ``moments`` is ``None`` or a pair of
    lists ``(m, v)``.
    """
    data = Path(path).read_bytes()
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    version_at = r.pos
    version, n, L, num_skips = r.unpack("<IIII", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=version_at)
    skips = []
    for _ in range(num_skips):
        at = r.pos
        a, b = r.unpack("<II", "skips")
        try:
            skips.append(SkipChannel(a, b))
        except InvalidArgumentError as exc:
            raise FormatError(str(exc), offset=at) from None
    wavelength, distance, pitch = r.unpack("<ddd", "grid")
    grid = GridSpec(n=n, pitch=pitch, wavelength=wavelength, layer_distance=distance)
    (num_classes,) = r.unpack("<I", "detector")
    regions = [r.unpack("<IIII", "detector") for _ in range(num_classes)]
    detector = DetectorLayout(num_classes, tuple(regions))
    thetas = [r.array(n * n, f"mask {i + 1}").reshape(n, n) for i in range(L)]
    (flag,) = r.unpack("<B", "optimizer flag")
    moments = None
    if flag == 1:
        m_list, v_list = [], []
        for i in range(L):
            m_list.append(r.array(n * n, f"optimizer layer {i + 1}").reshape(n, n))
            v_list.append(r.array(n * n, f"optimizer layer {i + 1}").reshape(n, n))
        moments = (m_list, v_list)
    elif flag != 0:
        raise FormatError(f"optimizer flag must be 0 or 1, got {flag}", offset=r.pos - 1)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after checkpoint", offset=r.pos)
    config = NetworkConfig(
        grid=grid,
        masks=tuple(PhaseMask(grid, t) for t in thetas),
        skips=tuple(skips),
        detector=detector,
        feature_layers=min(3, L),
    )
    return config, moments
