"""Literal, slow forward model used as an independent check.

Every skip branch is propagated separately and merged in the spatial
domain, exactly as the topology reads; nothing is shared with the spectral
engine in :mod:`holograph.network`. Arithmetic can be carried out in
``np.longdouble`` so that finite differences have a noise floor several
orders of magnitude below float64.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

from holograph.network import NetworkConfig


def _transfer(config: NetworkConfig, hops: int, dtype) -> np.ndarray:
    grid = config.grid
    real = np.longdouble if dtype == np.clongdouble else np.float64
    n = grid.n
    idx = np.fft.fftfreq(n, d=1.0 / n).astype(real)  # integer frequency indices
    f = idx / (real(n) * real(grid.pitch))
    f2 = f[:, None] ** 2 + f[None, :] ** 2
    z = real(hops) * real(grid.layer_distance)
    cycles = z / real(grid.wavelength)
    const = real(2) * real(np.pi) * (cycles - np.floor(cycles))
    phase = const - real(np.pi) * real(grid.wavelength) * z * f2
    return (np.cos(phase) + 1j * np.sin(phase)).astype(dtype)


def _propagate(values, h):
    return sfft.ifft2(sfft.fft2(values) * h)


def reference_detector_field(config: NetworkConfig, inputs, thetas=None, dtype=np.complex128) -> np.ndarray:
    """Field on the detector plane for ``inputs`` of shape ``(..., n, n)``."""
    thetas = config.thetas() if thetas is None else thetas
    real = np.longdouble if dtype == np.clongdouble else np.float64
    s = np.asarray(inputs).astype(dtype)
    taps = {0: s}
    incoming = config.incoming()
    h1 = _transfer(config, 1, dtype)
    for b in range(1, config.num_layers + 1):
        branches = [s] + [_propagate(taps[a], _transfer(config, b - a, dtype)) for a in incoming.get(b, [])]
        merged = sum(branches[1:], branches[0]) / len(branches) if len(branches) > 1 else s
        theta = np.asarray(thetas[b - 1]).astype(real)
        w = (np.cos(theta) + 1j * np.sin(theta)).astype(dtype)
        s = _propagate(merged, h1) * w
        taps[b] = s
    if config.detector_hops:
        s = _propagate(s, _transfer(config, config.detector_hops, dtype))
    return s


def reference_loss(config: NetworkConfig, inputs, targets, thetas=None, dtype=np.complex128, normalize=False):
    """Mean softmax-MSE loss computed from :func:`reference_detector_field`."""
    out = reference_detector_field(config, inputs, thetas, dtype)
    inten = out.real ** 2 + out.imag ** 2
    sums = np.stack(
        [inten[..., r0:r0 + h, c0:c0 + w].sum(axis=(-2, -1)) for r0, c0, h, w in config.detector.regions],
        axis=-1,
    )
    sums = np.atleast_2d(sums)
    if normalize:
        sums = sums / sums.sum(axis=-1, keepdims=True)
    z = sums - sums.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    t = np.zeros_like(p)
    t[np.arange(p.shape[0]), np.atleast_1d(targets)] = 1
    return np.mean(np.mean((p - t) ** 2, axis=-1))
