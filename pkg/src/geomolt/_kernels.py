"""Backend selection for the hot kernels.

The compiled module is used when it imports cleanly; setting
GEOMOLT_PURE_PYTHON=1 forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("GEOMOLT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

polygon_jets = _impl.polygon_jets
ternary_digits = _impl.ternary_digits
cantor_values = _impl.cantor_values
radial_h = _pykernels.radial_h
MOLLIFIER_C2 = _pykernels.MOLLIFIER_C2
