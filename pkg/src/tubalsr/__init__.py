"""Tensor sparse coding for radio-map super-resolution and fingerprint localization.

Modules:

- ``tensor``: t-product algebra, t-SVD, tubal rank, energy CDFs
- ``sparse``: ISTA-T and its unrolled LISTA-T variant
- ``dictionary``: dictionary learning through the Lagrange dual
- ``superres``: patch-based super-resolution, interpolation baseline, PSNR
- ``adversarial``: discriminator and generator refinement
- ``localization``: weighted KNN and a softmax cell classifier
- ``synth``: planted low-rank tensors and path-loss radio maps
- ``cli``: batch experiments (``python -m tubalsr``)
"""
from .radiomap import RadioMap
from .tensor import tprod, tsvd, ttranspose

__version__ = "0.1.0"

__all__ = ["RadioMap", "tprod", "tsvd", "ttranspose", "__version__"]
