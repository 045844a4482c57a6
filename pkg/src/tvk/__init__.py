"""Anisotropic total variation: energies, extremal atoms, certificates and a 1D solver.

Submodules load on first access so that thread settings can be applied
before numerical libraries start.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("linalg", "norms", "fields", "energy", "atoms", "witness", "gcg", "io", "plotting", "cli")

_EXPORTS = {
    "MatrixNormSpec": "norms", "VectorBallSpec": "norms", "gauge": "norms", "dual_spec": "norms",
    "dual_gauge": "norms", "frobenius": "norms", "schatten": "norms", "kyfan": "norms",
    "mixed_rows": "norms", "mixed_cols": "norms", "lp_ball": "norms", "octagon": "norms",
    "Domain": "fields", "PolygonalField": "fields", "GridField": "fields", "SimpleSetSpec": "fields",
    "tv": "energy", "td": "energy", "tv_exact": "energy", "td_exact": "energy", "tv_grid": "energy",
    "td_grid": "energy", "anisotropic_perimeter": "energy", "coarea_check": "energy",
    "Atom": "atoms", "AtomSpec": "atoms",
    "certify": "witness", "max_step": "witness", "verify_certificate": "witness",
    "Observation": "gcg", "GcgState": "gcg", "solve": "gcg", "lmo": "gcg", "duality_gap": "gcg",
}

__all__ = list(_SUBMODULES) + list(_EXPORTS)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f"{__name__}.{name}")
    if name in _EXPORTS:
        return getattr(importlib.import_module(f"{__name__}.{_EXPORTS[name]}"), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
