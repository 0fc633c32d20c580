"""Scalar Fresnel diffraction on a periodic sampling grid.

Fields are ``n x n`` complex arrays, row index = y, column index = x.
Propagation uses the closed-form Fresnel transfer function

    H(fx, fy; z) = exp(i k z) * exp(-i pi lambda z (fx^2 + fy^2))

sampled on the FFT frequency grid, so ``propagate`` is exactly unitary and
``H(z1) H(z2) = H(z1 + z2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from holograph.errors import InvalidArgumentError

__all__ = [
    "GridSpec",
    "ComplexField",
    "PhaseMask",
    "DetectorLayout",
    "fresnel_transfer",
    "transfer_array",
    "propagate",
    "modulate",
    "diff_msg",
    "intensity",
    "detect",
    "make_detector_layout",
]

DEFAULT_PITCH = 36e-6
DEFAULT_WAVELENGTH = 532e-9
DEFAULT_LAYER_DISTANCE = 0.2794


@dataclass(frozen=True)
class GridSpec:
    """Sampling metadata of one optical plane (SI units)."""

    n: int = 200
    pitch: float = DEFAULT_PITCH
    wavelength: float = DEFAULT_WAVELENGTH
    layer_distance: float = DEFAULT_LAYER_DISTANCE

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgumentError(f"grid size must be an integer >= 2, got {self.n}")
        for name in ("pitch", "wavelength", "layer_distance"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidArgumentError(f"{name} must be positive and finite, got {value}")

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def frequency_spacing(self) -> float:
        return 1.0 / (self.n * self.pitch)

    def frequencies(self) -> np.ndarray:
        """1-D spatial frequencies in FFT order, ``{-n/2..n/2-1} / (n pitch)``."""
        return sfft.fftfreq(self.n, d=self.pitch)


def _check_grid_array(grid: GridSpec, values: np.ndarray, what: str) -> None:
    if values.shape != (grid.n, grid.n):
        raise InvalidArgumentError(
            f"{what} has shape {values.shape}, expected {(grid.n, grid.n)}"
        )
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError(f"{what} contains non-finite entries")


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        _check_grid_array(self.grid, values, "field")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ComplexField":
        return cls(grid, np.zeros((grid.n, grid.n), dtype=np.complex128))

    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True, eq=False)
class PhaseMask:
    """Trainable phase profile; applied as ``exp(1j * theta)``. No wrapping."""

    grid: GridSpec
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        _check_grid_array(self.grid, theta, "phase mask")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "PhaseMask":
        return cls(grid, np.zeros((grid.n, grid.n)))

    def transmission(self) -> np.ndarray:
        return np.exp(1j * self.theta)


@dataclass(frozen=True)
class DetectorLayout:
    """``num_classes`` disjoint pixel rectangles ``(row0, col0, height, width)``."""

    num_classes: int
    regions: tuple[tuple[int, int, int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        regions = tuple(tuple(int(v) for v in r) for r in self.regions)
        object.__setattr__(self, "regions", regions)
        if self.num_classes < 1:
            raise InvalidArgumentError("detector needs at least one class")
        if len(regions) != self.num_classes:
            raise InvalidArgumentError(
                f"expected {self.num_classes} regions, got {len(regions)}"
            )
        for r in regions:
            if len(r) != 4 or r[2] < 1 or r[3] < 1 or r[0] < 0 or r[1] < 0:
                raise InvalidArgumentError(f"malformed detector region {r}")
        for i, a in enumerate(regions):
            for b in regions[i + 1:]:
                rows = a[0] < b[0] + b[2] and b[0] < a[0] + a[2]
                cols = a[1] < b[1] + b[3] and b[1] < a[1] + a[3]
                if rows and cols:
                    raise InvalidArgumentError(f"detector regions {a} and {b} overlap")

    def validate_for(self, n: int) -> None:
        for r0, c0, h, w in self.regions:
            if r0 + h > n or c0 + w > n:
                raise InvalidArgumentError(
                    f"detector region {(r0, c0, h, w)} exceeds the {n}x{n} grid"
                )

    def mask_stack(self, n: int) -> np.ndarray:
        """Boolean ``(C, n, n)`` indicator of each region."""
        self.validate_for(n)
        out = np.zeros((self.num_classes, n, n), dtype=bool)
        for c, (r0, c0, h, w) in enumerate(self.regions):
            out[c, r0:r0 + h, c0:c0 + w] = True
        return out


def make_detector_layout(n: int, num_classes: int, side: int = 20, gap: int | None = None) -> DetectorLayout:
    """Square regions on a centred ``ceil(sqrt(C))`` x ``ceil(sqrt(C))`` lattice.

    Cells are filled row-major; trailing cells stay unused. ``gap`` (the
    spacing between neighbouring squares) defaults to ``side``.
    """
    if num_classes < 1:
        raise InvalidArgumentError("num_classes must be >= 1")
    gap = side if gap is None else gap
    m = math.ceil(math.sqrt(num_classes))
    extent = m * side + (m - 1) * gap
    if side < 1 or gap < 0 or extent > n:
        raise InvalidArgumentError(
            f"{m}x{m} detector lattice with side={side}, gap={gap} needs {extent} px, grid has {n}"
        )
    offset = (n - extent) // 2
    regions = []
    for c in range(num_classes):
        i, j = divmod(c, m)
        regions.append((offset + i * (side + gap), offset + j * (side + gap), side, side))
    return DetectorLayout(num_classes, tuple(regions))


def _constant_phase(wavelength: float, distance: float) -> float:
    # k*z mod 2pi via the fractional part of z/lambda keeps ~1e-10 rad accuracy
    cycles = distance / wavelength
    return 2 * math.pi * (cycles - math.floor(cycles))


def transfer_array(grid: GridSpec, distance: float, n: int | None = None) -> np.ndarray:
    """Raw ``(n, n)`` transfer-function samples in FFT order.

    ``n`` overrides the grid size (used for zero-padded propagation) while
    keeping the pitch.
    """
    if not (math.isfinite(distance) and distance >= 0):
        raise InvalidArgumentError(f"propagation distance must be >= 0, got {distance}")
    n = grid.n if n is None else n
    f = sfft.fftfreq(n, d=grid.pitch)
    f2 = f[:, None] ** 2 + f[None, :] ** 2
    quad = -math.pi * grid.wavelength * distance * f2
    return np.exp(1j * (quad + _constant_phase(grid.wavelength, distance)))


def fresnel_transfer(grid: GridSpec, distance: float) -> ComplexField:
    return ComplexField(grid, transfer_array(grid, distance))


def propagate(field: ComplexField, distance: float, pad: bool = False) -> ComplexField:
    """Free-space propagation ``iFFT(FFT(f) * H(distance))``.

    With ``pad=True`` the field is embedded in a ``2n`` grid of zeros before
    propagating and cropped back, suppressing periodic wrap-around. The
    padded operator is no longer unitary.
    """
    if not pad:
        h = transfer_array(field.grid, distance)
        return ComplexField(field.grid, sfft.ifft2(sfft.fft2(field.values) * h))
    n = field.grid.n
    lo = n // 2
    big = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    big[lo:lo + n, lo:lo + n] = field.values
    h = transfer_array(field.grid, distance, n=2 * n)
    out = sfft.ifft2(sfft.fft2(big) * h)
    return ComplexField(field.grid, out[lo:lo + n, lo:lo + n])


def modulate(field: ComplexField, mask: PhaseMask) -> ComplexField:
    if field.grid != mask.grid:
        raise InvalidArgumentError("field and phase mask are sampled on different grids")
    return ComplexField(field.grid, field.values * mask.transmission())


def diff_msg(field: ComplexField, mask: PhaseMask, distance: float | None = None) -> ComplexField:
    """One diffractive layer: propagate by ``distance`` then phase-modulate.

    ``distance`` defaults to the grid's layer distance.
    """
    if distance is None:
        distance = field.grid.layer_distance
    return modulate(propagate(field, distance), mask)


def intensity(field: ComplexField) -> np.ndarray:
    v = field.values
    return v.real ** 2 + v.imag ** 2


def detect(intensity_map: np.ndarray, layout: DetectorLayout) -> np.ndarray:
    """Sum of intensity inside each detector region, shape ``(C,)``."""
    intensity_map = np.asarray(intensity_map, dtype=np.float64)
    if intensity_map.ndim != 2 or intensity_map.shape[0] != intensity_map.shape[1]:
        raise InvalidArgumentError(f"intensity map must be square, got {intensity_map.shape}")
    layout.validate_for(intensity_map.shape[0])
    return np.array(
        [intensity_map[r0:r0 + h, c0:c0 + w].sum() for r0, c0, h, w in layout.regions]
    )
