"""Simulation and training of diffractive optical graph classifiers.

The package is organised as:

* :mod:`holograph.field` -- scalar Fresnel diffraction primitives.
* :mod:`holograph.network` -- layer stack, optical skip channels, readout,
  checkpoint files.
* :mod:`holograph.training` -- softmax-MSE loss, hand-written reverse mode,
  Adam, the training loop and finite-difference checking.
* :mod:`holograph.graphprep` -- dataset loading, PCA, push-based personalized
  PageRank and input-field assembly.
* :mod:`holograph.cli` -- the ``holograph`` command line driver.
"""

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
from holograph.network import (
    NetworkConfig,
    SkipChannel,
    build_setup,
    forward,
    load_checkpoint,
    predict,
    save_checkpoint,
)

__all__ = [
    "ComplexField",
    "DetectorLayout",
    "GridSpec",
    "NetworkConfig",
    "PhaseMask",
    "SkipChannel",
    "build_setup",
    "detect",
    "diff_msg",
    "forward",
    "fresnel_transfer",
    "intensity",
    "load_checkpoint",
    "make_detector_layout",
    "modulate",
    "predict",
    "propagate",
    "save_checkpoint",
]

__version__ = "0.1.0"
