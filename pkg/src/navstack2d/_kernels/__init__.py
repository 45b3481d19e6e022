"""Hot-kernel backend selection.

The compiled Cython core is preferred when its extension module built; the
NumPy fallback is always available and computes the same values. Set
``NAVSTACK2D_KERNELS=fallback`` (or ``compiled``) to force a backend.
"""

import os

from . import _fallback

_requested = os.environ.get("NAVSTACK2D_KERNELS", "").strip().lower()

if _requested in ("fallback", "py", "python", "numpy"):
    _impl = _fallback
    COMPILED = False
elif _requested in ("compiled", "core", "cython"):
    from . import _core as _impl  # type: ignore[no-redef]

    COMPILED = True
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        _impl = _fallback
        COMPILED = False

BACKEND = "compiled" if COMPILED else "fallback"

OCCUPIED = _fallback.OCCUPIED
PARAMS_SIZE = 11
P_VMAX = _fallback.P_VMAX
P_WMAX = _fallback.P_WMAX
P_AMAX = _fallback.P_AMAX
P_WDMAX = _fallback.P_WDMAX
P_RHOMIN = _fallback.P_RHOMIN
P_RADIUS = _fallback.P_RADIUS
P_KAPPA = _fallback.P_KAPPA
P_SH = _fallback.P_SH
P_SV = _fallback.P_SV
P_SA = _fallback.P_SA
P_SO = _fallback.P_SO

inflate_costs = _impl.inflate_costs
raycast_scene = _impl.raycast_scene
teb_residuals = _impl.teb_residuals
teb_jacobian = _impl.teb_jacobian
teb_residual_size = _fallback.teb_residual_size
teb_block_slices = _fallback.teb_block_slices
