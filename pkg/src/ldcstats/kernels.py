"""Backend selection for the hot loops.

The compiled extension ``ldcstats._ckernels`` is used when it has been built;
otherwise the NumPy versions in ``ldcstats._kernels_py`` take over. Setting
``LDCSTATS_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("LDCSTATS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

crossnobis_batch = _impl.crossnobis_batch
sigma_k_batch = _impl.sigma_k_batch
fold_sums = _impl.fold_sums


def available_backends():
    backends = {"python": _kernels_py}
    try:
        from . import _ckernels
        backends["cython"] = _ckernels
    except ImportError:
        pass
    return backends
