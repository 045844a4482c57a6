"""Numerical extremality certificates.

A unit-energy field u0 is not extremal in the energy ball as soon as some
nonzero direction z (outside the quotient kernel) keeps both u0 + t z and
u0 - t z inside the ball for a t > 0; then u0 is their midpoint.  By
convexity the feasible steps form an interval [0, t*], found by doubling
or halving followed by bisection.  Directions come from a catalog that
mirrors where non-extremality can hide: value perturbations on the fixed
partition (an exact face analysis for piecewise constant fields),
per-region bumps, rigid perturbations for BD fields, polar perturbations
for the hedgehog, and seeded random fields.

Finding no decomposition is evidence, not proof, of extremality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from . import energy, norms
from .atoms import Atom
from .fields import GridField, PolygonalField, _grid_quotient, grid_gradient

BISECTIONS = 30
MAX_DOUBLINGS = 30
MIN_STEP = 2.0 ** -60
EXACT_TOL = 1e-14
GRID_TOL = 1e-12
STEP_THRESHOLD = 1e-4
VERIFY_TOL = 1e-9


class WitnessError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter spaces


class _Space:
    """Flat parameter vectors for the fields sharing the partition (or grid) of u0."""

    def __init__(self, atom: Atom):
        self.atom = atom
        u = atom.field
        self.spec = atom.norm
        if isinstance(u, GridField):
            self.kind = "grid"
            self.x0 = u.values.ravel().copy()
            valid = grid_gradient(u)[1]
            # cells on the far faces never have a full stencil
            self._valid_inner = valid[tuple(slice(0, -1) for _ in range(u.d))].astype(float)
        elif atom.energy_kind == "td":
            self.kind = "rigid"
            self.x0 = u.affine.ravel().copy()
        else:
            if not u.is_constant:
                raise WitnessError("tv atoms must be piecewise constant")
            self.kind = "pc"
            self.x0 = u.constant_values.ravel().copy()
        self.u = u

    # fields and energies
    def field(self, x):
        u = self.u
        if self.kind == "grid":
            return u.with_values(np.asarray(x).reshape(u.values.shape))
        if self.kind == "rigid":
            return u.with_affine(np.asarray(x).reshape(u.affine.shape))
        return u.with_values(np.asarray(x).reshape(u.n_cells, u.n))

    def energies(self, xs):
        xs = np.atleast_2d(xs)
        u = self.u
        if self.kind == "pc":
            return energy.tv_exact_batch(u, xs.reshape(len(xs), u.n_cells, u.n), self.spec)
        if self.kind == "rigid":
            return energy.td_exact_batch(u, xs.reshape((len(xs),) + u.affine.shape), self.spec).sum(axis=-1)
        vals = xs.reshape((len(xs),) + u.values.shape)
        inner = (slice(None),) + tuple(slice(0, -1) for _ in range(u.d))
        grads = []
        for k in range(u.d):
            shifted = tuple(slice(1, None) if j == k else slice(0, -1) for j in range(u.d))
            grads.append((vals[(slice(None),) + shifted] - vals[inner]) / u.h[k])
        grad = np.stack(grads, axis=-1)
        if self.atom.energy_kind == "td":
            grad = 0.5 * (grad + np.swapaxes(grad, -1, -2))
        if self.spec.kind == "frobenius":
            g = np.sqrt(np.einsum("...ij,...ij->...", grad, grad))
        else:
            g = norms.gauge(self.spec, grad)
        return (g * self._valid_inner).reshape(len(xs), -1).sum(axis=1) * u.cell_volume

    # geometry of the parameter space
    def inner(self, x, y):
        return self.field(x).l2_inner(self.field(y))

    def norm(self, x):
        return math.sqrt(max(self.inner(x, x), 0.0))

    def project(self, x):
        """Remove the quotient-kernel component (constants or rigid motions)."""
        if self.kind == "grid":
            return _grid_quotient(self.field(x), self.atom.quotient).values.ravel()
        u = self.field(x)
        basis = [self.field(b) for b in self.kernel_basis()]
        gram = np.array([[f.l2_inner(g) for g in basis] for f in basis])
        coef = np.linalg.solve(gram, np.array([f.l2_inner(u) for f in basis]))
        out = np.asarray(x, dtype=float).copy()
        for c, b in zip(coef, self.kernel_basis()):
            out -= c * b
        return out

    def kernel_basis(self):
        u = self.u
        out = []
        if self.kind == "pc":
            for i in range(u.n):
                v = np.zeros((u.n_cells, u.n))
                v[:, i] = 1.0
                out.append(v.ravel())
            return out
        d = u.d
        for i in range(u.n):
            a = np.zeros(u.affine.shape)
            a[:, i, d] = 1.0
            out.append(a.ravel())
        if self.atom.quotient == "rigid":
            for i in range(d):
                for j in range(i + 1, d):
                    a = np.zeros(u.affine.shape)
                    a[:, i, j], a[:, j, i] = -1.0, 1.0
                    out.append(a.ravel())
        return out

    def unit(self, x, project=True):
        if project:
            x = self.project(x)
        nrm = self.norm(x)
        return None if nrm <= 1e-10 else x / nrm


# ---------------------------------------------------------------------------
# step search


def _max_step_space(space: _Space, z, tol: float):
    e0 = float(space.energies(space.x0)[0])
    if abs(e0 - 1.0) > 1e-8:
        raise WitnessError(f"u0 must have unit energy, got {e0}")
    bound = e0 + tol * max(1.0, e0)
    calls = [0]

    def feasible(t):
        calls[0] += 1
        en = space.energies(np.stack([space.x0 + t * z, space.x0 - t * z]))
        return bool(np.max(en) <= bound)

    t = 1.0
    if feasible(t):
        lo = t
        for _ in range(MAX_DOUBLINGS):
            t *= 2
            if not feasible(t):
                break
            lo = t
        else:
            return lo, {"unbounded": True, "evaluations": calls[0]}
        hi = t
    else:
        hi = t
        while True:
            t /= 2
            if t < MIN_STEP:
                return 0.0, {"evaluations": calls[0]}
            if feasible(t):
                lo = t
                break
            hi = t
    for _ in range(BISECTIONS):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo, {"evaluations": calls[0]}


def max_step(atom: Atom, z, tol: Optional[float] = None) -> float:
    """
    Largest t with energy(u0 + t z) and energy(u0 - t z) both at most 1 + tol.

    ``z`` is a field on the partition (or grid) of ``atom.field`` or a flat
    parameter vector.  The search doubles or halves from t = 1 and then
    bisects 30 times; the result is symmetric in z by construction.
    """
    space = _Space(atom)
    if isinstance(z, (PolygonalField, GridField)):
        z = _flatten(space, z)
    if tol is None:
        tol = GRID_TOL if space.kind == "grid" else EXACT_TOL
    return _max_step_space(space, np.asarray(z, dtype=float), tol)[0]


def _flatten(space, f):
    if space.kind == "grid":
        return f.values.ravel().copy()
    if space.kind == "rigid":
        return f.affine.ravel().copy()
    return f.constant_values.ravel().copy()


# ---------------------------------------------------------------------------
# catalog


@dataclass
class Direction:
    cls: str
    label: str
    vector: np.ndarray


def _null_space_abs(C, P, tol=1e-10):
    if len(C) == 0:
        return np.eye(P)
    _, s, vt = np.linalg.svd(C, full_matrices=True)
    rank = int(np.sum(s > tol))
    return vt[rank:].T


def _face_basis(space: _Space):
    """Basis of value perturbations keeping every edge term affine and the total energy flat."""
    u, spec = space.u, space.spec
    cells, n = u.n_cells, u.n
    x0 = space.x0.reshape(cells, n)
    e = u.edges
    value_ball, scale = norms.rank_one_profile(spec)
    P = cells * n
    rows, slope = [], np.zeros(P)
    for k in range(len(e)):
        L = np.zeros((n, P))
        L[:, e.plus[k] * n:(e.plus[k] + 1) * n] += np.eye(n)
        L[:, e.minus[k] * n:(e.minus[k] + 1) * n] -= np.eye(n)
        J = L @ space.x0
        W = value_ball.linearity_subspace(J)
        rows.append((np.eye(n) - W @ W.T) @ L)
        if np.any(J):
            weight = float(scale(e.normal[k])) * e.length[k]
            slope += weight * (value_ball.gradient(J) @ L)
    C = np.concatenate(rows) if rows else np.zeros((0, P))
    # absolute cutoff: projector round-off must not count as a constraint
    N = _null_space_abs(C, P)
    if N.shape[1] == 0:
        return N
    s = slope @ N
    if np.linalg.norm(s) > 1e-12:
        N = N @ null_space(s[None, :])
    # drop the constant kernel and orthonormalise in L^2
    vecs = [space.project(N[:, j]) for j in range(N.shape[1])]
    areas = np.repeat(u.moments[:, -1, -1], n)
    M = np.array(vecs).T * np.sqrt(np.maximum(areas, 0.0))[:, None]
    if M.size == 0:
        return np.zeros((P, 0))
    uu, sv, _ = np.linalg.svd(M, full_matrices=False)
    keep = sv > 1e-9 * max(1.0, sv.max() if sv.size else 1.0)
    basis = uu[:, keep] / np.sqrt(np.where(areas > 0, areas, 1.0))[:, None]
    return basis


def face_dimension_estimate(atom: Atom) -> int:
    """
    Dimension of the face of the TV ball at a piecewise constant u0, within
    its partition class and modulo constants.

    Computed from edge-wise linearity subspaces of the rank-one value ball
    and the total slope; 0 means no fixed-partition perturbation keeps the
    energy at 1, i.e. u0 is extremal among fields on its partition.
    """
    space = _Space(atom)
    if space.kind != "pc":
        raise WitnessError("face dimension is defined for piecewise constant atoms")
    e0 = float(space.energies(space.x0)[0])
    if abs(e0 - 1.0) > 1e-8:
        raise WitnessError(f"u0 must have unit energy, got {e0}")
    return int(_face_basis(space).shape[1])


def _polar_directions(space: _Space):
    u = space.u
    x = u.centers()
    r = np.linalg.norm(x, axis=-1)
    r = np.where(r > 0, r, 1.0)
    er = x / r[..., None]
    ephi = np.stack([x[..., 1], -x[..., 0]], axis=-1) / r[..., None]
    phi = np.arctan2(x[..., 1], x[..., 0])
    profiles = {"1": np.ones_like(r), "r": r, "r2": r ** 2, "cos(pi r)": np.cos(np.pi * r),
                "cos(2pi r)": np.cos(2 * np.pi * r)}
    means = {"1": 1.0, "r": 0.5, "r2": 1 / 3, "cos(pi r)": 0.0, "cos(2pi r)": 0.0}
    out = []
    for name, f in profiles.items():
        for fname, frame in (("e_r", er), ("e_phi", ephi)):
            out.append((f"{name} {fname}", f[..., None] * frame))
            out.append((f"({name} - mean) {fname}", (f - means[name])[..., None] * frame))
    for k in (1, 2, 3):
        for trig, g in (("cos", np.cos(k * phi)), ("sin", np.sin(k * phi))):
            for fname, frame in (("e_r", er), ("e_phi", ephi)):
                out.append((f"{trig}({k} phi) {fname}", g[..., None] * frame))
    masked = []
    for label, v in out:
        masked.append((label, np.where(u.mask[..., None], v, 0.0).ravel()))
    return masked


def build_catalog(atom: Atom, count: int = 500, seed: int = 0, classes=None):
    """
    Ordered search directions for an atom.

    Structured classes come first; seeded random directions fill the
    catalog up to ``count`` entries.  All directions are projected off the
    quotient kernel and have unit L^2 norm, except family-supplied
    ("family") directions, which keep the scaling of the atom.
    """
    space = _Space(atom)
    rng = np.random.default_rng(seed)
    dirs = []
    allowed = (lambda c: True) if classes is None else (lambda c: c in classes)

    def add(cls, label, v, project=True, normalize=True):
        if not allowed(cls):
            return
        if normalize:
            v = space.unit(v, project)
        elif project:
            v = space.project(v)
        if v is not None and np.any(v):
            dirs.append(Direction(cls, label, v))

    for k, z in enumerate(atom.directions.get("family", [])):
        add("family", f"family direction {k}", _flatten(space, z), project=True, normalize=False)

    u = space.u
    if space.kind == "pc":
        cells, n = u.n_cells, u.n
        basis = _face_basis(space)
        for j in range(basis.shape[1]):
            add("face", f"face basis {j}", basis[:, j], project=False)
        for c in range(cells):
            if u.moments[c, -1, -1] <= 0:
                continue
            for i in range(n):
                v = np.zeros((cells, n))
                v[c, i] = 1.0
                add("bump", f"cell {c} component {i}", v.ravel())
        value_ball, _ = norms.rank_one_profile(space.spec)
        if value_ball.is_polyhedral and n > 1:
            verts = value_ball.vertex_array()[:16]
            for c in range(cells):
                if u.moments[c, -1, -1] <= 0:
                    continue
                for a in range(len(verts)):
                    for b in range(a + 1, len(verts)):
                        if np.allclose(verts[a], -verts[b]):
                            continue
                        v = np.zeros((cells, n))
                        v[c] = verts[a] - verts[b]
                        add("vertex-diff", f"cell {c} vertices {a}-{b}", v.ravel())
    elif space.kind == "rigid":
        d = u.d
        gens = []
        for i in range(u.n):
            g = np.zeros((u.n, d + 1))
            g[i, d] = 1.0
            gens.append((f"shift e{i + 1}", g))
        g = np.zeros((u.n, d + 1))
        g[0, 1], g[1, 0] = 1.0, -1.0
        gens.append(("skew", g))
        for c in range(u.n_cells):
            if u.moments[c, -1, -1] <= 1e-14:
                continue
            for label, g in gens:
                a = np.zeros(u.affine.shape)
                a[c] = g
                add("bump", f"cell {c} {label}", a.ravel())
    else:
        for label, v in _polar_directions(space):
            add("polar", label, v)

    add("scale", "u0 itself", space.x0.copy())

    while len(dirs) < count:
        k = len(dirs)
        if space.kind == "pc":
            v = rng.standard_normal(space.x0.shape)
        elif space.kind == "rigid":
            a = np.zeros(u.affine.shape)
            a[:, :, u.d] = rng.standard_normal((u.n_cells, u.n))
            s = rng.standard_normal(u.n_cells)
            a[:, 0, 1], a[:, 1, 0] = s, -s
            v = a.ravel()
        else:
            v = _random_grid_direction(space, rng, smooth=(k % 2 == 0))
        before = len(dirs)
        add("random", f"random {k}", v)
        if len(dirs) == before:
            break
    return dirs


def _random_grid_direction(space, rng, smooth=True):
    u = space.u
    if not smooth:
        return np.where(u.mask[..., None], rng.standard_normal(u.values.shape), 0.0).ravel()
    x = u.centers()
    out = np.zeros(u.values.shape)
    for _ in range(6):
        k = rng.integers(-3, 4, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.standard_normal(u.n)
        out += amp * np.cos(np.pi * (x @ k) + phase)[..., None]
    return np.where(u.mask[..., None], out, 0.0).ravel()


# ---------------------------------------------------------------------------
# certificates


@dataclass
class DecompositionCertificate:
    status: str
    atom: Atom
    tol: float
    threshold: float
    catalog_size: int
    seed: int
    direction: Optional[np.ndarray] = None
    direction_class: str = ""
    direction_label: str = ""
    direction_index: int = -1
    step: float = 0.0
    energies: tuple = ()
    per_class: dict = field(default_factory=dict)
    max_step_observed: float = 0.0
    face_dimension: Optional[int] = None
    steps: list = field(default_factory=list)

    @property
    def decomposable(self) -> bool:
        return self.status == "decomposable"

    def halves(self):
        space = _Space(self.atom)
        v = space.field(space.x0 + self.step * self.direction)
        w = space.field(space.x0 - self.step * self.direction)
        return v, w

    def to_dict(self) -> dict:
        out = {"schema": "tvk.certificate/1", "status": self.status, "atom": self.atom.spec.to_dict(),
               "norm": self.atom.norm.to_dict(), "energy_kind": self.atom.energy_kind,
               "tol": self.tol, "threshold": self.threshold, "catalog_size": self.catalog_size,
               "seed": self.seed, "max_step_observed": self.max_step_observed,
               "per_class": self.per_class, "face_dimension": self.face_dimension}
        if self.decomposable:
            out["direction"] = {"class": self.direction_class, "label": self.direction_label,
                                "index": self.direction_index}
            out["step"] = self.step
            out["energies"] = list(self.energies)
            out["profile"] = step_profile(self)
            if self.atom.is_exact:
                v, w = self.halves()
                space = _Space(self.atom)
                out["u0"] = self.atom.field.to_dict()
                out["z"] = space.field(self.direction).to_dict()
                out["v"], out["w"] = v.to_dict(), w.to_dict()
        return out


def step_profile(cert: DecompositionCertificate, points: int = 41, span: float = 2.0) -> dict:
    """Energies of u0 +- t z for t on [0, span * t*] (decomposable certificates)."""
    space = _Space(cert.atom)
    ts = np.linspace(0.0, span * cert.step, points)
    xs = np.concatenate([space.x0 + ts[:, None] * cert.direction, space.x0 - ts[:, None] * cert.direction])
    en = space.energies(xs)
    return {"t": ts.tolist(), "plus": en[:points].tolist(), "minus": en[points:].tolist()}


def certify(atom: Atom, directions: int = 500, seed: int = 0, tol: Optional[float] = None,
            threshold: Optional[float] = None, classes=None, record_steps: bool = False
            ) -> DecompositionCertificate:
    """
    Search the direction catalog for a midpoint decomposition of a unit-energy atom.

    Returns the first direction (in catalog order) whose maximal step
    exceeds the threshold and whose halves re-verify; otherwise reports
    ``no-decomposition-found`` with the largest step seen in each class.

    Parameters
    ----------
    directions : int
        Catalog size; structured classes first, random directions fill up.
    tol : float, optional
        Energy slack in the step search (default 1e-14 exact, 1e-12 grid).
    threshold : float, optional
        Minimal step counted as a decomposition (default 1e-4 exact,
        max(1e-4, 5h) on grids).
    """
    space = _Space(atom)
    grid = space.kind == "grid"
    if tol is None:
        tol = GRID_TOL if grid else EXACT_TOL
    if threshold is None:
        threshold = max(STEP_THRESHOLD, 5 * max(atom.field.h)) if grid else STEP_THRESHOLD
    catalog = build_catalog(atom, directions, seed, classes)
    if not catalog:
        raise WitnessError("empty direction catalog")
    face_dim = face_dimension_estimate(atom) if space.kind == "pc" else None
    per_class: dict = {}
    steps = []
    best = 0.0
    cert = DecompositionCertificate("no-decomposition-found", atom, tol, threshold, len(catalog), seed,
                                    face_dimension=face_dim)
    for idx, d in enumerate(catalog):
        t, _ = _max_step_space(space, d.vector, tol)
        stats = per_class.setdefault(d.cls, {"count": 0, "max_step": 0.0, "argmax": ""})
        stats["count"] += 1
        if t > stats["max_step"]:
            stats["max_step"], stats["argmax"] = t, d.label
        best = max(best, t)
        if record_steps:
            steps.append((d.cls, d.label, t))
        if t > threshold:
            en = space.energies(np.stack([space.x0 + t * d.vector, space.x0 - t * d.vector]))
            trial = DecompositionCertificate("decomposable", atom, tol, threshold, len(catalog), seed,
                                             d.vector, d.cls, d.label, idx, t, tuple(float(x) for x in en),
                                             per_class, best, face_dim, steps)
            if verify_certificate(trial).passed:
                return trial
    cert.per_class, cert.max_step_observed, cert.steps = per_class, best, steps
    return cert


@dataclass
class Verification:
    passed: bool
    energies: tuple
    midpoint_error: float
    separation: float
    reasons: list


def verify_certificate(cert: DecompositionCertificate, spec: Optional[norms.MatrixNormSpec] = None,
                       tol: float = VERIFY_TOL) -> Verification:
    """
    Independently re-evaluate a decomposable certificate.

    The halves are rebuilt from (u0, z, t*) and evaluated with the single
    field energy routines; both must stay within 1 + tol, their midpoint
    must be u0, and they must differ.
    """
    reasons = []
    if not cert.decomposable or cert.direction is None:
        return Verification(False, (), float("nan"), 0.0, ["certificate is not decomposable"])
    atom = cert.atom
    spec = spec or atom.norm
    space = _Space(atom)
    u0 = atom.field
    v, w = cert.halves()
    fn = energy.tv if atom.energy_kind == "tv" else energy.td
    e0 = fn(u0, spec).value
    ev, ew = fn(v, spec).value, fn(w, spec).value
    if ev > e0 + tol or ew > e0 + tol:
        reasons.append(f"energy exceeds the ball: {ev}, {ew}")
    mid = 0.5 * (_flatten(space, v) + _flatten(space, w)) - space.x0
    mid_err = float(np.max(np.abs(mid))) if mid.size else 0.0
    if mid_err > tol:
        reasons.append(f"midpoint identity violated by {mid_err}")
    sep = space.norm(space.project(_flatten(space, v) - _flatten(space, w)))
    if sep <= tol:
        reasons.append("halves coincide in the quotient")
    return Verification(not reasons, (ev, ew), mid_err, sep, reasons)
