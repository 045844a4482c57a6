"""Extremal (and deliberately non-extremal) atoms of TV_K and TD_K balls.

Each constructor returns an :class:`Atom`: a unit-energy field together
with an :class:`AtomSpec` recording the family, its parameters, which
structural result licenses the expected verdict, and that verdict
(``True``, ``False`` or ``None`` for unknown).  The verdict is derived only
from checked hypotheses (norm conditions, simplicity, flatness); the
witness module tests it independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import energy, norms
from .fields import (GridField, PolygonalField, SimpleSetSpec, _as_affine, disc, interval, make_piecewise,
                     piecewise_constant_1d, rect_poly, rectangle, sample_function, square)

FAMILIES = ("jump1d", "scalar-indicator", "vector-indicator", "three-value", "bd-rigid",
            "bd-flat-counterexample", "hedgehog", "octagon-threevalue")

# provenance strings each family can carry; "custom" atoms are uncharted
PROVENANCE = {
    "jump1d": ["1d-jump-extremals"],
    "scalar-indicator": ["simple-set-indicator"],
    "vector-indicator": ["rank-one-indicator", "additive-blocks"],
    "three-value": ["three-value", "polygon-three-value"],
    "bd-rigid": ["bd-rigid-nonflat"],
    "bd-flat-counterexample": ["bd-flat-interface"],
    "hedgehog": ["hedgehog"],
    "octagon-threevalue": ["polygon-three-value"],
    "custom": ["uncharted"],
}

# margin above which a sampled symmetric strict convexity check is trusted
SYM_STRICT_MARGIN = 1e-6


class AtomError(ValueError):
    pass


@dataclass
class AtomSpec:
    family: str
    params: dict
    provenance: str
    expected_extremal: Optional[bool]
    reasons: list = field(default_factory=list)

    def to_dict(self):
        exp = "unknown" if self.expected_extremal is None else bool(self.expected_extremal)
        return {"family": self.family, "params": self.params, "provenance": self.provenance,
                "expected_extremal": exp, "reasons": list(self.reasons)}


@dataclass
class Atom:
    """Unit-energy field with metadata.

    ``energy_kind`` is "tv" or "td"; ``quotient`` is the kernel that is
    factored out ("constants" or "rigid").  ``raw_energy`` is the energy
    before normalisation.  ``directions`` holds optional family-specific
    search directions scaled like the field.
    """

    spec: AtomSpec
    field: Union[PolygonalField, GridField]
    norm: norms.MatrixNormSpec
    energy_kind: str
    quotient: str
    raw_energy: float
    directions: dict = field(default_factory=dict)

    @property
    def is_exact(self):
        return isinstance(self.field, PolygonalField)

    def energy(self, u=None) -> float:
        u = self.field if u is None else u
        fn = energy.tv if self.energy_kind == "tv" else energy.td
        return fn(u, self.norm).value

    def to_dict(self):
        out = {"atom": self.spec.to_dict(), "norm": self.norm.to_dict(), "energy_kind": self.energy_kind,
               "quotient": self.quotient, "raw_energy": self.raw_energy}
        if self.is_exact:
            out["field"] = self.field.to_dict()
        else:
            out["grid"] = self.field.to_dict(values=False)
        return out


def _as_matrix_spec(norm, n, d):
    if isinstance(norm, norms.VectorBallSpec):
        if d == 1:
            return norms.vector_norm_spec(norm)
        if n == 1:
            return norms.mixed_rows(norms.lp_ball(1, 2), norm)
        raise AtomError("vector balls only stand for 1D value norms or scalar perimeter norms")
    if (norm.n, norm.d) != (n, d):
        raise AtomError(f"norm acts on {norm.n}x{norm.d} matrices, field needs {n}x{d}")
    return norm


def _normalize(u, spec, kind):
    fn = energy.tv_exact if kind == "tv" else energy.td_exact
    e = fn(u, spec).value
    if not e > 0:
        raise AtomError("field has zero energy")
    return u / e, e


def atom_custom(u: PolygonalField, spec: norms.MatrixNormSpec, energy_kind: str = "tv") -> Atom:
    """
    Any polygonal field scaled to unit energy.

    No catalogued family covers such a field, so ``expected_extremal`` is unknown and
    the provenance is "uncharted".
    """
    if energy_kind not in ("tv", "td"):
        raise AtomError(f"unknown energy kind {energy_kind!r}")
    if energy_kind == "td" and not u.is_rigid:
        raise AtomError("td atoms need infinitesimal rigid motions as cell values")
    spec = _as_matrix_spec(spec, u.n, u.d)
    v, e = _normalize(u, spec, energy_kind)
    meta = AtomSpec("custom", {"field": u.to_dict(), "energy_kind": energy_kind}, "uncharted", None,
                    ["outside the catalogued families"])
    return Atom(meta, v, spec, energy_kind, "constants" if energy_kind == "tv" else "rigid", e)


# -- 1D -------------------------------------------------------------------------


def atom_jump1d(t: float, b, ball: norms.VectorBallSpec, T: float = 1.0) -> Atom:
    """b * 1_(t, T) on (0, T); extremal exactly when b is an extreme point of the ball."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if not 0 < t < T:
        raise AtomError("jump location must lie inside (0, T)")
    if abs(float(ball.gauge(b)) - 1.0) > 1e-10:
        raise AtomError("b must lie on the unit sphere of the value norm")
    spec = norms.vector_norm_spec(ball)
    u = piecewise_constant_1d(interval(0.0, T), [t], [np.zeros_like(b), b])
    extreme = ball.is_extreme_direction(b)
    reason = "b is an extreme point of K" if extreme else "b lies inside a face of K"
    meta = AtomSpec("jump1d", {"t": t, "b": b.tolist(), "T": T, "ball": ball.to_dict()},
                    "1d-jump-extremals", extreme, [reason])
    return Atom(meta, u, spec, "tv", "constants", 1.0)


# -- indicators -------------------------------------------------------------------


def atom_scalar_indicator(E: SimpleSetSpec, norm) -> Atom:
    """1_E / TV_K(1_E) for a scalar norm (1 x 2 matrices or a perimeter ball on R^2)."""
    spec = _as_matrix_spec(norm, 1, 2)
    u, e = _normalize(make_piecewise(E.domain, [(E.polygons, [1.0])]), spec, "tv")
    ind, comp = E.check_simplicity()
    simple = ind and comp
    reasons = [f"E indecomposable: {ind}", f"complement indecomposable: {comp}"]
    meta = AtomSpec("scalar-indicator", {"E": E.to_dict()}, "simple-set-indicator", simple, reasons)
    return Atom(meta, u, spec, "tv", "constants", e)


def _is_additive_l1(spec):
    return spec.kind == "mixed-rows" and spec.kv.kind == "lp" and spec.kv.p == 1 and spec.n > 1


def atom_vector_indicator(E: SimpleSetSpec, b, spec: norms.MatrixNormSpec, samples: int = 1000,
                          seed: int = 0) -> Atom:
    """b 1_E normalised to unit TV_K.

    Expected extremal when E is simple, b points to an extreme point of the
    rank-one value ball, and the norm is rank-one isotropic or satisfies
    the strict rank-one inequality under left orthogonal invariance.  For
    mixed-rows(l1, Ks) norms the ball splits into scalar blocks and only
    axis directions survive.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if not np.any(b):
        raise AtomError("b must be nonzero")
    u, e = _normalize(make_piecewise(E.domain, [(E.polygons, b)]), spec, "tv")
    value_ball, _ = norms.rank_one_profile(spec)
    ind, comp = E.check_simplicity()
    reasons = [f"E indecomposable: {ind}", f"complement indecomposable: {comp}"]
    expected: Optional[bool]
    provenance = "rank-one-indicator"
    if not (ind and comp):
        expected = False
        reasons.append("E is not simple")
    elif not value_ball.is_extreme_direction(b):
        expected = False
        reasons.append("b is not an extreme direction of the rank-one value ball")
    elif _is_additive_l1(spec):
        provenance = "additive-blocks"
        expected = bool(np.count_nonzero(np.abs(b) > 1e-12) == 1)
        reasons.append("additive norm: extremal only along a single block")
    else:
        iso = norms.check_rank_one_isotropy(spec, samples=samples, seed=seed)
        clunky = norms.check_clunky_condition(spec, samples=samples, seed=seed)
        reasons.append(f"rank-one isotropy: {iso.passed}; strict rank-one inequality: {clunky.passed}")
        expected = True if (iso.passed or clunky.passed) else None
    meta = AtomSpec("vector-indicator", {"E": E.to_dict(), "b": b.tolist()}, provenance, expected, reasons)
    return Atom(meta, u, spec, "tv", "constants", e)


# -- three values -----------------------------------------------------------------


def boundary_lengths(u: PolygonalField, ids1, ids2):
    """(mu1, mu2, mu_minus): free boundary of each set in the domain and their shared interface."""
    s1, s2 = set(ids1), set(ids2)
    e = u.edges
    mu1 = mu2 = mum = 0.0
    for i, j, ln in zip(e.minus, e.plus, e.length):
        a, b = int(i) in s1, int(j) in s1
        c, d = int(i) in s2, int(j) in s2
        if (a and d) or (b and c):
            mum += ln
        elif a != b:
            mu1 += ln
        elif c != d:
            mu2 += ln
    return mu1, mu2, mum


def atom_three_value(E1: SimpleSetSpec, E2: SimpleSetSpec, b1, b2, spec: norms.MatrixNormSpec,
                     samples: int = 1000, seed: int = 0, family: str = "three-value") -> Atom:
    """b1 1_E1 + b2 1_E2 normalised to unit TV_K.

    Expected extremal when all three interface lengths are positive, both
    sets are simple, and either the norm is rank-one isotropic or the value
    ball is polyhedral with b1, b2 and b1 - b2 all pointing to vertices.
    If one of the three jumps is not an extreme direction a split exists.
    """
    b1 = np.atleast_1d(np.asarray(b1, dtype=float))
    b2 = np.atleast_1d(np.asarray(b2, dtype=float))
    if not (np.any(b1) and np.any(b2)):
        raise AtomError("values must be nonzero")
    if len(b1) > 1 and np.linalg.matrix_rank(np.stack([b1, b2]), tol=1e-12) < 2:
        raise AtomError("values must not be collinear")
    if E1.domain != E2.domain:
        raise AtomError("sets live in different domains")
    if E1.geometry.intersection(E2.geometry).area > 1e-9:
        raise AtomError("sets overlap")
    raw = make_piecewise(E1.domain, [(E1.polygons, b1), (E2.polygons, b2)])
    k1 = len(E1.polygons)
    mu1, mu2, mum = boundary_lengths(raw, range(k1), range(k1, k1 + len(E2.polygons)))
    if min(mu1, mu2, mum) <= 1e-12:
        raise AtomError(f"interface lengths must be positive, got {(mu1, mu2, mum)}")
    u, e = _normalize(raw, spec, "tv")
    value_ball, _ = norms.rank_one_profile(spec)
    simple = E1.is_simple and E2.is_simple
    ext = [value_ball.is_extreme_direction(v) for v in (b1, b2, b1 - b2)]
    reasons = [f"mu = {(mu1, mu2, mum)}", f"sets simple: {simple}",
               f"extreme directions b1, b2, b1-b2: {ext}"]
    provenance = "three-value"
    if not simple:
        expected = None
    elif not all(ext):
        expected = False
        reasons.append("a jump value is not an extreme direction")
    else:
        iso = norms.check_rank_one_isotropy(spec, samples=samples, seed=seed)
        reasons.append(f"rank-one isotropy: {iso.passed}")
        if iso.passed:
            expected = True
        elif value_ball.is_polyhedral and spec.kind.startswith("mixed") and _euclidean_space_part(spec):
            provenance = "polygon-three-value"
            expected = True
        else:
            expected = None
    params = {"E1": E1.to_dict(), "E2": E2.to_dict(), "b1": b1.tolist(), "b2": b2.tolist(),
              "mu": [mu1, mu2, mum]}
    return Atom(AtomSpec(family, params, provenance, expected, reasons), u, spec, "tv", "constants", e)


def _euclidean_space_part(spec):
    ks = spec.ks
    return ks.kind == "lp" and ks.p == 2


def octagon_vertex(j: int) -> np.ndarray:
    a = 2 * np.pi * j / 8
    return np.array([np.cos(a), np.sin(a)])


def atom_octagon_three_value(j: int = 2) -> Atom:
    """Three-value atom with octagon values y_j, y_{j-2} for mixed-cols(octagon, l2)."""
    dom = rectangle(0, 4, 0, 4)
    E1 = SimpleSetSpec(dom, (rect_poly(1, 2, 1.5, 2.5),))
    E2 = SimpleSetSpec(dom, (rect_poly(2, 3, 1.5, 2.5),))
    spec = norms.mixed_cols(norms.octagon(), norms.lp_ball(2, 2))
    return atom_three_value(E1, E2, octagon_vertex(j), octagon_vertex(j - 2), spec, family="octagon-threevalue")


# -- BD -----------------------------------------------------------------------------


def _rigid_value(w, d=2):
    if isinstance(w, dict):
        return w
    w = np.asarray(w, dtype=float)
    if w.shape == (d,):
        return {"shift": w.tolist()}
    if w.shape == (d, d + 1):
        lin = w[:, :d]
        if not np.allclose(lin, -lin.T, atol=1e-12):
            raise AtomError("linear part of a rigid motion must be skew")
        return {"matrix": lin.tolist(), "shift": w[:, d].tolist()}
    raise AtomError("rigid motion must be a shift vector, an n x (d+1) matrix or a dict")


def interface_is_flat(u: PolygonalField, tol: float = 1e-12) -> bool:
    """True when all edges carrying a jump lie on one straight line."""
    e = u.edges
    jumps = u.affine[e.plus] - u.affine[e.minus]
    active = np.any(np.abs(jumps) > tol, axis=(1, 2))
    if not np.any(active):
        return True
    pts = np.concatenate([e.p0[active], e.p1[active]])
    centered = pts - pts[0]
    return bool(np.linalg.matrix_rank(centered, tol=1e-9) <= 1)


def atom_bd_rigid(E: SimpleSetSpec, w, spec: norms.MatrixNormSpec, samples: int = 200, seed: int = 0) -> Atom:
    """w 1_E for a rigid motion w, normalised to unit TD_K."""
    if spec.n != spec.d:
        raise AtomError("BD atoms need n = d")
    m = _as_affine(_rigid_value(w), 2, 2)
    if not np.any(m):
        raise AtomError("w must be nonzero")
    base = make_piecewise(E.domain, [(E.polygons, np.ones(2))])
    aff = np.zeros_like(base.affine)
    aff[: len(E.polygons)] = m
    raw = base.with_affine(aff)
    u, e = _normalize(raw, spec, "td")
    flat = interface_is_flat(raw)
    ind, comp = E.check_simplicity()
    reasons = [f"flat interface: {flat}", f"E simple: {ind and comp}"]
    sym = norms.check_sym_rank_one_strict_convexity(spec, samples=samples, seed=seed)
    reasons.append(f"symmetric rank-one strict convexity margin: {sym.worst:.3e}")
    if flat:
        expected = False
    elif not (ind and comp):
        expected = None
    elif sym.passed and sym.worst > SYM_STRICT_MARGIN:
        expected = True
    else:
        expected = None
    params = {"E": E.to_dict(), "w": m.tolist()}
    return Atom(AtomSpec("bd-rigid", params, "bd-rigid-nonflat", expected, reasons), u, spec, "td", "rigid", e)


def atom_bd_flat_counterexample(spec: Optional[norms.MatrixNormSpec] = None):
    """
    The flat-interface triple on (-1, 1)^2.

    u0 = e2 1_{x2 < 0}; z = A x above the axis and -A x below, with
    A = [[0, 1], [-1, 0]]; u1 = u0 + z / 4 and u2 = u0 - z / 4.  All three
    have the same TD and u0 is their midpoint.

    Returns
    -------
    atom : Atom
        Normalised u0 with the direction z (scaled like u0) attached.
    u0, u1, u2 : PolygonalField
        Raw fields.
    lam : float
        Always 1/2.
    """
    spec = spec or norms.frobenius(2, 2)
    dom = rectangle(-1, 1, -1, 1)
    lower, upper = rect_poly(-1, 1, -1, 0), rect_poly(-1, 1, 0, 1)
    u0 = PolygonalField(dom, [lower, upper], [[0.0, 1.0], [0.0, 0.0]])
    z = PolygonalField(dom, [lower, upper], [{"skew": -1.0, "shift": [0, 0]}, {"skew": 1.0, "shift": [0, 0]}], n=2)
    u1, u2 = u0 + z * 0.25, u0 - z * 0.25
    unit, e = _normalize(u0, spec, "td")
    meta = AtomSpec("bd-flat-counterexample", {}, "bd-flat-interface", False,
                    ["interface is a single straight segment"])
    atom = Atom(meta, unit, spec, "td", "rigid", e, {"family": [z / e]})
    return atom, u0, u1, u2, 0.5


# -- hedgehog -------------------------------------------------------------------------


def hedgehog_field(shape=(128, 128)) -> GridField:
    return sample_function(disc(), shape, lambda x: x / np.linalg.norm(x, axis=-1, keepdims=True))


def atom_hedgehog(shape=(128, 128)) -> Atom:
    """x / |x| on the unit disc sampled on a grid, normalised by its Frobenius grid TV."""
    spec = norms.frobenius(2, 2)
    u = hedgehog_field(shape)
    e = energy.tv_grid(u, spec).value
    h = u.h[0]
    meta = AtomSpec("hedgehog", {"shape": list(u.grid_shape), "h": h}, "hedgehog", True,
                    ["not piecewise constant; grid atoms are extremal only up to O(h)"])
    return Atom(meta, u / e, spec, "tv", "constants", e)


# -- JSON construction -----------------------------------------------------------------


def atom_from_dict(data: dict) -> Atom:
    """Build an atom from a JSON description (see ``schemas/atom.schema.json``)."""
    fam = data.get("family")
    p = data.get("params", {})
    try:
        if fam == "jump1d":
            ball = norms.VectorBallSpec.from_dict(p["ball"], len(p["b"]))
            return atom_jump1d(float(p["t"]), p["b"], ball, float(p.get("T", 1.0)))
        if fam == "hedgehog":
            return atom_hedgehog(tuple(p.get("shape", (128, 128))))
        if fam == "bd-flat-counterexample":
            return atom_bd_flat_counterexample()[0]
        if fam == "octagon-threevalue":
            return atom_octagon_three_value(int(p.get("j", 2)))
        spec = norms.MatrixNormSpec.from_dict(data["norm"])
        if fam == "scalar-indicator":
            return atom_scalar_indicator(SimpleSetSpec.from_dict(p["E"]), spec)
        if fam == "vector-indicator":
            return atom_vector_indicator(SimpleSetSpec.from_dict(p["E"]), p["b"], spec)
        if fam == "three-value":
            return atom_three_value(SimpleSetSpec.from_dict(p["E1"]), SimpleSetSpec.from_dict(p["E2"]),
                                    p["b1"], p["b2"], spec)
        if fam == "bd-rigid":
            return atom_bd_rigid(SimpleSetSpec.from_dict(p["E"]), p["w"], spec)
        if fam == "custom":
            return atom_custom(PolygonalField.from_dict(p["field"]), spec, p.get("energy_kind", "tv"))
    except KeyError as exc:
        raise AtomError(f"atom description missing {exc}") from None
    raise AtomError(f"unknown atom family {fam!r}")


# -- fixture battery -------------------------------------------------------------------


def fixture_battery(hedgehog_shape=(128, 128), include_grid: bool = True):
    """
    Named atoms spanning every family, with known expected verdicts.

    Returns a list of (name, atom).  Set ``include_grid=False`` to skip the
    hedgehog, whose certification dominates the run time.
    """
    l1, l2, linf, oct_ = norms.lp_ball(2, 1), norms.lp_ball(2, 2), norms.lp_ball(2, norms.INF), norms.octagon()
    frob = norms.frobenius(2, 2)
    add = norms.mixed_rows(l1, l2)
    mid = (octagon_vertex(0) + octagon_vertex(1)) / 2
    dom3 = rectangle(0, 3, 0, 3)
    sq = SimpleSetSpec(dom3, (square((1.5, 1.5), 1),))
    two = SimpleSetSpec(dom3, (square((0.8, 0.8), 0.5), square((2, 2), 0.5)))
    frame = SimpleSetSpec(dom3, (rect_poly(0.5, 2.5, 0.5, 1), rect_poly(0.5, 2.5, 2, 2.5),
                                 rect_poly(0.5, 1, 1, 2), rect_poly(2, 2.5, 1, 2)))
    dom4 = rectangle(0, 4, 0, 4)
    E1 = SimpleSetSpec(dom4, (rect_poly(1, 2, 1.5, 2.5),))
    E2 = SimpleSetSpec(dom4, (rect_poly(2, 3, 1.5, 2.5),))
    box2 = rectangle(-1, 1, -1, 1)
    centre = SimpleSetSpec(box2, (square((0, 0), 1),))
    rot = {"matrix": [[0, -1], [1, 0]], "shift": [0, 0]}
    out = [
        ("jump-l2", atom_jump1d(0.5, [0.6, 0.8], l2)),
        ("jump-l1-axis", atom_jump1d(0.5, [1, 0], l1)),
        ("jump-l1-face", atom_jump1d(0.5, [0.5, 0.5], l1)),
        ("jump-linf-corner", atom_jump1d(0.5, [1, 1], linf)),
        ("jump-linf-face", atom_jump1d(0.5, [1, 0], linf)),
        ("jump-octagon-vertex", atom_jump1d(0.3, octagon_vertex(1), oct_)),
        ("jump-octagon-edge", atom_jump1d(0.3, mid / oct_.gauge(mid), oct_)),
        ("scalar-square-l2", atom_scalar_indicator(sq, l2)),
        ("scalar-square-l1", atom_scalar_indicator(sq, l1)),
        ("scalar-two-squares", atom_scalar_indicator(two, l2)),
        ("scalar-frame", atom_scalar_indicator(frame, l2)),
        ("vector-frobenius-axis", atom_vector_indicator(sq, [1, 0], frob)),
        ("vector-frobenius-diagonal", atom_vector_indicator(sq, np.array([1, 1]) / np.sqrt(2), frob)),
        ("vector-additive-two-block", atom_vector_indicator(sq, [0.5, 0.5], add)),
        ("vector-additive-axis", atom_vector_indicator(sq, [1, 0], add)),
        ("vector-spectral", atom_vector_indicator(sq, [0.6, 0.8], norms.schatten(2, 2, norms.INF))),
        ("vector-mixed-cols", atom_vector_indicator(sq, [0.6, 0.8], norms.mixed_cols(l2, l1))),
        ("three-value-frobenius", atom_three_value(E1, E2, [1, 0], [0, 1], frob)),
        ("three-value-additive", atom_three_value(E1, E2, [1, 0], [0, 1], add)),
        ("three-value-octagon", atom_octagon_three_value(2)),
        ("bd-flat-half", atom_bd_rigid(SimpleSetSpec(box2, (rect_poly(-1, 1, -1, 0),)), [0, 1], frob)),
        ("bd-square-shift", atom_bd_rigid(centre, [0, 1], frob)),
        ("bd-square-rotation", atom_bd_rigid(centre, rot, frob)),
        ("bd-flat-counterexample", atom_bd_flat_counterexample()[0]),
    ]
    if include_grid:
        out.append(("hedgehog", atom_hedgehog(hedgehog_shape)))
    return out
