"""Volumetric skull reconstruction toolkit.

NRRD/NIfTI volume I/O, synthetic skull phantoms and defect injection, a 3D
convolutional autoencoder trained with soft Dice loss, and similarity-transform
registration for implant extraction. The heavy lifting lives in the compiled
`_core` extension; this package just re-exports it.
"""

try:
    from skullkit._core import *  # noqa: F401,F403  (installed layout)
    from skullkit import _core as _impl
except ImportError:  # in-tree build: _core.so on PYTHONPATH next to the build dir
    from _core import *  # noqa: F401,F403
    import _core as _impl

__version__ = _impl.__version__
