"""Kernel dispatch: numba when enabled and importable, numpy otherwise."""
from .. import _backend
from . import _numpy as numpy_impl

if _backend.USE_NUMBA:
    from . import _numba as active
else:
    active = numpy_impl

BACKEND = _backend.BACKEND

hermite_eval = active.hermite_eval
cole_hopf_eval = active.cole_hopf_eval
soft_fixed_point = active.soft_fixed_point
soft_direct_max = active.soft_direct_max
sde_paths = active.sde_paths
enum_energies = active.enum_energies
enum_logsumexp = active.enum_logsumexp
gibbs_moments = active.gibbs_moments
cluster_stats = active.cluster_stats


def get_impl(name: str):
    """Return the kernel module for ``"numba"`` or ``"numpy"``."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import _numba
        return _numba
    raise ValueError(f"unknown backend {name!r}")
