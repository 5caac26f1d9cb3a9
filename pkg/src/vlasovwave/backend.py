"""Selects the compiled particle-grid kernels, falling back to numpy.

Set VLASOVWAVE_BACKEND=python to force the fallback.
"""
from __future__ import annotations

import os

from . import _fallback

NAME = "python"
impl = _fallback

if os.environ.get("VLASOVWAVE_BACKEND", "").lower() != "python":
    try:
        from . import _core as impl  # type: ignore[no-redef]

        NAME = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        impl = _fallback

deposit = impl.deposit
deposit_dipole = impl.deposit_dipole
gather_value = impl.gather_value
gather_grad = impl.gather_grad
gather_hess = impl.gather_hess
laplacian = impl.laplacian
coulomb_direct = impl.coulomb_direct
