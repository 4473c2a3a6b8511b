"""Hot-loop kernels with a compiled core and a pure numpy fallback.

The compiled module (masktext._kernels._speed, built from _speed.pyx) is
preferred when importable; otherwise the numpy implementation in _pure is
used. Set MASKTEXT_PURE=1 to force the fallback. Both backends implement
the same contracts and agree to floating-point tolerance.
"""

import os

from . import _pure

if os.environ.get("MASKTEXT_PURE"):
    _impl = _pure
    HAVE_COMPILED = False
else:
    try:
        from . import _speed as _impl  # type: ignore[attr-defined]

        HAVE_COMPILED = True
    except ImportError:
        _impl = _pure
        HAVE_COMPILED = False

majority_downsample = _impl.majority_downsample
crf_mean_field = _impl.crf_mean_field


def backend_name() -> str:
    return "compiled" if HAVE_COMPILED else "pure"
