"""Vector fields on intervals, rectangles and discs.

Two representations are used throughout:

* :class:`PolygonalField` -- an exact field that is affine on each cell of
  a polygonal partition (intervals in 1D).  Constant values give piecewise
  constant BV fields; skew linear parts give piecewise rigid BD fields.
* :class:`GridField` -- values sampled at cell centres of a uniform grid,
  with a mask for cells outside a disc domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Point, Polygon, box
from shapely.ops import unary_union

SNAP = 1e-9


class FieldError(ValueError):
    """Invalid field, domain or set description."""


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Domain:
    """Bounded domain: ``interval`` (a, b), ``rectangle`` (a1, b1, a2, b2) or ``disc`` (cx, cy, r)."""

    shape: str
    bounds: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in self.bounds)
        object.__setattr__(self, "bounds", b)
        expected = {"interval": 2, "rectangle": 4, "disc": 3}
        if self.shape not in expected or len(b) != expected[self.shape]:
            raise FieldError(f"bad domain {self.shape!r} {self.bounds}")
        if self.shape == "disc":
            ok = b[2] > 0
        else:
            ok = all(b[2 * i] < b[2 * i + 1] for i in range(len(b) // 2))
        if not ok or not all(map(math.isfinite, b)):
            raise FieldError("domain must be bounded with positive measure")

    @property
    def d(self) -> int:
        return 1 if self.shape == "interval" else 2

    @property
    def measure(self) -> float:
        b = self.bounds
        if self.shape == "interval":
            return b[1] - b[0]
        if self.shape == "rectangle":
            return (b[1] - b[0]) * (b[3] - b[2])
        return math.pi * b[2] ** 2

    @property
    def box(self):
        """Bounding box as ((lo_1, ..., lo_d), (hi_1, ..., hi_d))."""
        b = self.bounds
        if self.shape == "interval":
            return (b[0],), (b[1],)
        if self.shape == "rectangle":
            return (b[0], b[2]), (b[1], b[3])
        return (b[0] - b[2], b[1] - b[2]), (b[0] + b[2], b[1] + b[2])

    def geometry(self):
        b = self.bounds
        if self.shape == "rectangle":
            return box(b[0], b[2], b[1], b[3])
        if self.shape == "disc":
            return Point(b[0], b[1]).buffer(b[2], quad_segs=256)
        raise FieldError("planar geometry only for 2D domains")

    def on_boundary_segment(self, p, q, tol=SNAP) -> bool:
        if self.shape != "rectangle":
            return False
        a1, b1, a2, b2 = self.bounds
        return any(abs(p[0] - x) <= tol and abs(q[0] - x) <= tol for x in (a1, b1)) or \
            any(abs(p[1] - y) <= tol and abs(q[1] - y) <= tol for y in (a2, b2))

    def to_dict(self):
        return {"shape": self.shape, "bounds": list(self.bounds)}

    @classmethod
    def from_dict(cls, data):
        return cls(data["shape"], tuple(data["bounds"]))


def interval(a: float = 0.0, b: float = 1.0) -> Domain:
    return Domain("interval", (a, b))


def rectangle(a1, b1, a2, b2) -> Domain:
    return Domain("rectangle", (a1, b1, a2, b2))


def disc(center=(0.0, 0.0), radius=1.0) -> Domain:
    return Domain("disc", (center[0], center[1], radius))


# ---------------------------------------------------------------------------
# polygon helpers


def _ccw(poly):
    poly = np.asarray(poly, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise FieldError("polygons need at least three planar vertices")
    if np.allclose(poly[0], poly[-1]):
        poly = poly[:-1]
    return poly[::-1].copy() if signed_area(poly) < 0 else poly


def signed_area(poly) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_moments(poly) -> np.ndarray:
    """Gram matrix of (x, y, 1) over a polygon: [[xx, xy, x], [xy, yy, y], [x, y, 1]] integrals."""
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    c = x0 * y1 - x1 * y0
    area = c.sum() / 2
    mx = ((x0 + x1) * c).sum() / 6
    my = ((y0 + y1) * c).sum() / 6
    mxx = ((x0 * x0 + x0 * x1 + x1 * x1) * c).sum() / 12
    myy = ((y0 * y0 + y0 * y1 + y1 * y1) * c).sum() / 12
    mxy = ((x0 * y1 + 2 * x0 * y0 + 2 * x1 * y1 + x1 * y0) * c).sum() / 24
    return np.array([[mxx, mxy, mx], [mxy, myy, my], [mx, my, area]])


def interval_moments(a, b) -> np.ndarray:
    return np.array([[(b ** 3 - a ** 3) / 3, (b ** 2 - a ** 2) / 2], [(b ** 2 - a ** 2) / 2, b - a]])


def domain_moments(domain: Domain) -> np.ndarray:
    b = domain.bounds
    if domain.shape == "interval":
        return interval_moments(b[0], b[1])
    if domain.shape == "rectangle":
        return polygon_moments(np.array([[b[0], b[2]], [b[1], b[2]], [b[1], b[3]], [b[0], b[3]]]))
    cx, cy, r = b
    area = math.pi * r * r
    second = area * r * r / 4
    return np.array([[second + area * cx * cx, area * cx * cy, area * cx],
                     [area * cx * cy, second + area * cy * cy, area * cy],
                     [area * cx, area * cy, area]])


# ---------------------------------------------------------------------------
# simple sets


@dataclass(frozen=True, eq=False)
class SimpleSetSpec:
    """A set E inside a planar domain, given as a union of simple polygons."""

    domain: Domain
    polygons: tuple

    def __post_init__(self):
        if self.domain.d != 2:
            raise FieldError("sets are planar")
        polys = tuple(_ccw(p) for p in self.polygons)
        for p in polys:
            if not Polygon(p).is_valid or abs(signed_area(p)) <= SNAP:
                raise FieldError("degenerate or self-intersecting polygon")
        object.__setattr__(self, "polygons", polys)
        if not self.area > SNAP:
            raise FieldError("set has (near) zero measure")
        if not self.domain.geometry().buffer(SNAP).covers(self.geometry):
            raise FieldError("set leaves the domain")
        if self.area >= self.domain.measure - SNAP:
            raise FieldError("set fills the domain")

    @cached_property
    def geometry(self):
        return unary_union([Polygon(p) for p in self.polygons])

    @property
    def area(self) -> float:
        return float(self.geometry.area)

    def complement(self):
        return self.domain.geometry().difference(self.geometry)

    def check_simplicity(self):
        """(E indecomposable, domain minus E indecomposable) via connectivity of polygon unions."""
        return _connected(self.geometry), _connected(self.complement())

    @property
    def is_simple(self) -> bool:
        a, b = self.check_simplicity()
        return a and b

    def to_dict(self):
        return {"domain": self.domain.to_dict(), "polygons": [p.tolist() for p in self.polygons]}

    @classmethod
    def from_dict(cls, data):
        return cls(Domain.from_dict(data["domain"]), tuple(np.array(p, float) for p in data["polygons"]))


def _components(geom):
    geom = geom.buffer(0)
    if isinstance(geom, Polygon):
        return [geom] if geom.area > SNAP else []
    if isinstance(geom, MultiPolygon):
        return [g for g in geom.geoms if g.area > SNAP]
    return [g for g in getattr(geom, "geoms", []) if isinstance(g, Polygon) and g.area > SNAP]


def _connected(geom) -> bool:
    # components sharing only a point stay separate pieces in a polygon union
    return len(_components(geom)) == 1


def square(center, side) -> np.ndarray:
    cx, cy = center
    s = side / 2
    return np.array([[cx - s, cy - s], [cx + s, cy - s], [cx + s, cy + s], [cx - s, cy + s]])


def rect_poly(x0, x1, y0, y1) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


# ---------------------------------------------------------------------------
# polygonal fields


@dataclass(frozen=True)
class EdgeSet:
    """Interior interfaces of a partition; ``normal`` points from region ``minus`` into ``plus``."""

    p0: np.ndarray
    p1: np.ndarray
    length: np.ndarray
    normal: np.ndarray
    plus: np.ndarray
    minus: np.ndarray

    def __len__(self):
        return len(self.length)


def _as_affine(value, n, d):
    """Convert a JSON-ish region value to an n x (d+1) affine matrix."""
    if isinstance(value, dict):
        shift = np.asarray(value.get("shift", np.zeros(n)), dtype=float)
        if "matrix" in value:
            lin = np.asarray(value["matrix"], dtype=float)
        elif "skew" in value:
            if d != 2:
                raise FieldError("scalar skew parameter only in 2D")
            s = float(value["skew"])
            lin = np.array([[0.0, s], [-s, 0.0]])
        else:
            lin = np.zeros((n, d))
        return np.concatenate([lin.reshape(n, d), shift.reshape(n, 1)], axis=1)
    arr = np.asarray(value, dtype=float)
    if arr.shape == (n,):
        return np.concatenate([np.zeros((n, d)), arr[:, None]], axis=1)
    if arr.shape == (n, d + 1):
        return arr
    raise FieldError(f"region value of shape {arr.shape} incompatible with n={n}")


class PolygonalField:
    """
    Field that is affine on each cell of a polygonal (1D: interval) partition.

    Parameters
    ----------
    domain : Domain
        Interval or rectangle.
    regions : sequence
        Polygons (arrays (k, 2)) in 2D or (a, b) pairs in 1D.  In 2D the
        part of the domain not covered by the explicit regions is a
        background cell with index ``len(regions)``; in 1D the intervals
        must tile the domain.
    values : array_like
        Per-cell affine maps of shape (cells, n, d + 1); ``u(x) = M[:, :d] x + M[:, d]``.
        Constant vectors of shape (cells, n) are also accepted.  ``cells`` is
        ``len(regions) + 1`` (background last) or ``len(regions)`` if the
        background value is zero.
    """

    def __init__(self, domain: Domain, regions: Sequence, values, n: Optional[int] = None):
        if domain.shape == "disc":
            raise FieldError("polygonal fields live on intervals or rectangles")
        self.domain = domain
        d = domain.d
        vals = list(values)
        if len(vals) not in (len(regions), len(regions) + 1) or not vals:
            raise FieldError("one value per region (plus optional background) expected")
        if d == 1:
            order = sorted(range(len(regions)), key=lambda i: float(regions[i][0]))
            self.regions = tuple((float(regions[i][0]), float(regions[i][1])) for i in order)
            vals = [vals[i] for i in order] + vals[len(regions):]
        else:
            self.regions = tuple(_ccw(p) for p in regions)
        if n is None:
            first = vals[0]
            n = len(first["shift"]) if isinstance(first, dict) else np.asarray(first).shape[0]
        mats = [_as_affine(v, n, d) for v in vals]
        if len(mats) == len(self.regions):
            mats.append(np.zeros((n, d + 1)))
        self.affine = np.array(mats)
        self.n, self.d = n, d
        self._validate()

    # -- construction helpers ------------------------------------------------
    def with_affine(self, affine) -> "PolygonalField":
        out = object.__new__(PolygonalField)
        out.__dict__.update({k: v for k, v in self.__dict__.items()
                             if k in ("domain", "regions", "n", "d", "background_area",
                                      "region_areas", "edges", "moments")})
        out.affine = np.array(affine, dtype=float).reshape(self.affine.shape)
        return out

    def with_values(self, values) -> "PolygonalField":
        """Same partition, constant values of shape (cells, n)."""
        vals = np.asarray(values, dtype=float).reshape(self.n_cells, self.n)
        aff = np.zeros_like(self.affine)
        aff[:, :, self.d] = vals
        return self.with_affine(aff)

    def __add__(self, other):
        return self.with_affine(self.affine + other.affine)

    def __sub__(self, other):
        return self.with_affine(self.affine - other.affine)

    def __mul__(self, c):
        return self.with_affine(self.affine * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self.with_affine(self.affine / float(c))

    # -- structure -------------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return len(self.affine)

    @property
    def constant_values(self) -> np.ndarray:
        return self.affine[:, :, self.d]

    @property
    def is_constant(self) -> bool:
        return not np.any(self.affine[:, :, : self.d])

    @property
    def is_rigid(self) -> bool:
        if self.n != self.d:
            return False
        lin = self.affine[:, :, : self.d]
        return bool(np.allclose(lin, -np.swapaxes(lin, 1, 2), atol=1e-12))

    @property
    def has_background(self) -> bool:
        return self.background_area > SNAP * max(1.0, self.domain.measure)

    def _validate(self):
        dom = self.domain
        if self.d == 1:
            a, b = dom.bounds
            pts = [a]
            for lo, hi in self.regions:
                if not lo < hi or abs(lo - pts[-1]) > SNAP:
                    raise FieldError("1D regions must tile the interval without gaps")
                pts.append(hi)
            if abs(pts[-1] - b) > SNAP:
                raise FieldError("1D regions must tile the interval")
            self.region_areas = np.array([hi - lo for lo, hi in self.regions])
            self.background_area = 0.0
            return
        geoms = [Polygon(p) for p in self.regions]
        for g in geoms:
            if not g.is_valid or g.area <= SNAP:
                raise FieldError("degenerate or self-intersecting region polygon")
        if not dom.geometry().buffer(SNAP).covers(unary_union(geoms)):
            raise FieldError("region leaves the domain")
        for i in range(len(geoms)):
            for j in range(i + 1, len(geoms)):
                if geoms[i].intersection(geoms[j]).area > SNAP * dom.measure:
                    raise FieldError(f"regions {i} and {j} overlap")
        self.region_areas = np.array([g.area for g in geoms])
        self.background_area = dom.measure - float(self.region_areas.sum())
        if self.background_area < -SNAP * dom.measure:
            raise FieldError("regions cover more than the domain")
        if np.any(self.affine[:, :, : self.d]) and self.n != self.d:
            raise FieldError("affine values require n = d")
        _ = self.edges  # fail early on inconsistent partitions

    @cached_property
    def moments(self) -> np.ndarray:
        """Per-cell Gram matrices of (x, 1) (background last)."""
        if self.d == 1:
            mom = [interval_moments(a, b) for a, b in self.regions]
            mom.append(np.zeros((2, 2)))
        else:
            mom = [polygon_moments(p) for p in self.regions]
            mom.append(domain_moments(self.domain) - np.sum(mom, axis=0))
        return np.array(mom)

    @cached_property
    def edges(self) -> EdgeSet:
        if self.d == 1:
            xs = np.array([hi for _, hi in self.regions[:-1]])
            k = len(xs)
            idx = np.arange(k)
            return EdgeSet(xs[:, None], xs[:, None], np.ones(k), np.ones((k, 1)), idx + 1, idx)
        return _planar_edges(self.domain, self.regions, self.has_background)

    # -- evaluation ------------------------------------------------------------
    def cell_index(self, points) -> np.ndarray:
        """Index of the cell containing each point (background for uncovered points)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.d == 1:
            pts = pts.reshape(-1, 1)
            ends = np.array([hi for _, hi in self.regions])
            return np.minimum(np.searchsorted(ends, pts[:, 0], side="right"), len(ends) - 1)
        out = np.full(len(pts), len(self.regions))
        for i, poly in enumerate(self.regions):
            inside = shapely.contains_xy(Polygon(poly), pts[:, 0], pts[:, 1])
            out[(out == len(self.regions)) & inside] = i
        return out

    def evaluate(self, points, cells=None) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        if cells is None:
            cells = self.cell_index(pts)
        m = self.affine[cells]
        return np.einsum("kij,kj->ki", m[:, :, : self.d], pts) + m[:, :, self.d]

    def l2_inner(self, other: "PolygonalField") -> float:
        """Exact L^2 inner product of two fields on this partition."""
        return float(np.einsum("cij,cjk,cik->", self.affine, self.moments, other.affine))

    def l2_norm(self) -> float:
        return math.sqrt(max(self.l2_inner(self), 0.0))

    # -- serialisation -----------------------------------------------------------
    def to_dict(self) -> dict:
        regions = []
        for reg, aff in zip(self.regions, self.affine):
            geom = {"interval": list(reg)} if self.d == 1 else {"polygon": np.asarray(reg).tolist()}
            geom["value"] = _value_to_json(aff, self.d)
            regions.append(geom)
        out = {"type": "polygonal", "domain": self.domain.to_dict(), "n": self.n, "regions": regions}
        if self.d == 2:
            out["background"] = _value_to_json(self.affine[-1], self.d)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PolygonalField":
        dom = Domain.from_dict(data["domain"])
        regs, vals = [], []
        for r in data["regions"]:
            regs.append(tuple(r["interval"]) if dom.d == 1 else np.array(r["polygon"], float))
            vals.append(r["value"])
        n = data.get("n")
        if n is None:
            v0 = vals[0]
            n = len(v0["shift"]) if isinstance(v0, dict) else len(v0)
        if "background" in data:
            vals.append(data["background"])
        return cls(dom, regs, vals, n=int(n))


def _value_to_json(aff, d):
    if not np.any(aff[:, :d]):
        return aff[:, d].tolist()
    return {"matrix": aff[:, :d].tolist(), "shift": aff[:, d].tolist()}


def _planar_edges(domain, regions, has_background):
    verts = np.concatenate(regions)
    owners: dict = {}
    background = len(regions)
    for r, poly in enumerate(regions):
        for k in range(len(poly)):
            p, q = poly[k], poly[(k + 1) % len(poly)]
            seg = q - p
            ln2 = float(seg @ seg)
            s = ((verts - p) @ seg) / ln2
            perp = np.abs((verts[:, 0] - p[0]) * seg[1] - (verts[:, 1] - p[1]) * seg[0]) / math.sqrt(ln2)
            cut = np.unique(np.concatenate([[0.0, 1.0], s[(perp <= SNAP) & (s > SNAP) & (s < 1 - SNAP)]]))
            for s0, s1 in zip(cut[:-1], cut[1:]):
                a, b = p + s0 * seg, p + s1 * seg
                key = tuple(sorted([tuple(np.round(a, 8)), tuple(np.round(b, 8))]))
                owners.setdefault(key, []).append((r, a, b))
    p0, p1, plus, minus = [], [], [], []
    for key in sorted(owners):
        occ = owners[key]
        if len(occ) > 2:
            raise FieldError("an edge is shared by more than two regions")
        r, a, b = occ[0]
        if len(occ) == 2:
            other = occ[1][0]
            if other == r:
                raise FieldError("region polygon traverses an edge twice")
        else:
            if domain.on_boundary_segment(a, b):
                continue
            if not has_background:
                raise FieldError("regions leave an uncovered gap")
            other = background
        # ccw polygon: inward normal is the left normal; orient it out of region r
        p0.append(a)
        p1.append(b)
        minus.append(r)
        plus.append(other)
    p0, p1 = np.array(p0).reshape(-1, 2), np.array(p1).reshape(-1, 2)
    seg = p1 - p0
    length = np.linalg.norm(seg, axis=1)
    normal = np.stack([seg[:, 1], -seg[:, 0]], axis=1) / np.where(length > 0, length, 1.0)[:, None]
    return EdgeSet(p0, p1, length, normal, np.array(plus, int), np.array(minus, int))


def piecewise_constant_1d(domain: Domain, breakpoints, values) -> PolygonalField:
    """1D field with value ``values[k]`` on the k-th interval between sorted breakpoints."""
    a, b = domain.bounds
    pts = [a] + sorted(float(t) for t in breakpoints) + [b]
    if any(not lo < hi for lo, hi in zip(pts[:-1], pts[1:])):
        raise FieldError("breakpoints must lie strictly inside the interval and be distinct")
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    return PolygonalField(domain, list(zip(pts[:-1], pts[1:])), list(vals), n=vals.shape[1])


def make_piecewise(domain: Domain, parts, n: Optional[int] = None) -> PolygonalField:
    """
    Piecewise constant field from disjoint sets with prescribed values.

    ``parts`` is a list of (polygons, value) pairs.  The rest of the domain
    has value 0: complement pieces other than the largest become explicit
    zero regions, so the remaining background is connected.
    """
    regions, values = [], []
    for polys, value in parts:
        value = np.atleast_1d(np.asarray(value, dtype=float))
        for p in polys:
            regions.append(_ccw(p))
            values.append(value)
    if n is None:
        n = len(values[0])
    covered = unary_union([Polygon(p) for p in regions])
    comps = sorted(_components(domain.geometry().difference(covered)), key=lambda g: -g.area)
    for comp in comps[1:]:
        if len(comp.interiors):
            raise FieldError("nested complement components are not supported")
        regions.append(np.array(comp.exterior.coords)[:-1])
        values.append(np.zeros(n))
    values.append(np.zeros(n))
    return PolygonalField(domain, regions, values, n=n)


def make_indicator(E: SimpleSetSpec, b) -> PolygonalField:
    """Field equal to b on E and 0 elsewhere."""
    return make_piecewise(E.domain, [(E.polygons, b)])


def region_adjacency(field: PolygonalField):
    """Adjacency lists of cells sharing interfaces of positive length."""
    adj = {i: set() for i in range(field.n_cells)}
    e = field.edges
    for i, j, ln in zip(e.minus, e.plus, e.length):
        if ln > SNAP:
            adj[int(i)].add(int(j))
            adj[int(j)].add(int(i))
    return adj


# ---------------------------------------------------------------------------
# quotient projections


def _kernel_affine_basis(n, d, mode):
    basis = []
    for i in range(n):
        m = np.zeros((n, d + 1))
        m[i, d] = 1.0
        basis.append(m)
    if mode == "rigid":
        if n != d:
            raise FieldError("rigid quotient needs n = d")
        for i in range(d):
            for j in range(i + 1, d):
                m = np.zeros((n, d + 1))
                m[i, j], m[j, i] = -1.0, 1.0
                basis.append(m)
    elif mode != "constants":
        raise FieldError(f"unknown quotient mode {mode!r}")
    return basis


def quotient_normalize(u, mode: str = "constants"):
    """Subtract the L^2 projection onto constants or onto infinitesimal rigid motions."""
    if isinstance(u, GridField):
        return _grid_quotient(u, mode)
    basis = _kernel_affine_basis(u.n, u.d, mode)
    fields = [u.with_affine(np.broadcast_to(m, u.affine.shape)) for m in basis]
    gram = np.array([[f.l2_inner(g) for g in fields] for f in fields])
    rhs = np.array([f.l2_inner(u) for f in fields])
    coef = np.linalg.solve(gram, rhs)
    shift = sum(c * m for c, m in zip(coef, basis))
    return u.with_affine(u.affine - shift)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class GridField:
    """
    Cell-centre samples of a field.

    ``values`` has shape ``grid_shape + (n,)``; ``lower`` is the corner of
    the grid box, ``h`` the spacing per axis and ``mask`` flags cells whose
    centre lies in the domain.
    """

    domain: Domain
    values: np.ndarray
    h: tuple
    lower: tuple
    mask: np.ndarray

    @property
    def grid_shape(self):
        return self.values.shape[:-1]

    @property
    def n(self):
        return self.values.shape[-1]

    @property
    def d(self):
        return len(self.grid_shape)

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def centers(self) -> np.ndarray:
        axes = [self.lower[k] + (np.arange(m) + 0.5) * self.h[k] for k, m in enumerate(self.grid_shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def with_values(self, values) -> "GridField":
        values = np.asarray(values, dtype=float)
        if values.shape[:-1] != self.grid_shape:
            raise FieldError("grid shape mismatch")
        return GridField(self.domain, values, self.h, self.lower, self.mask)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self.with_values(self.values / float(c))

    def l2_inner(self, other) -> float:
        w = self.mask[..., None]
        return float(np.sum(self.values * other.values * w) * self.cell_volume)

    def l2_norm(self) -> float:
        return math.sqrt(self.l2_inner(self))

    def to_dict(self, values: bool = True) -> dict:
        out = {"type": "grid", "domain": self.domain.to_dict(), "shape": list(self.grid_shape), "n": self.n,
               "h": list(self.h), "lower": list(self.lower)}
        if values:
            out["values"] = self.values.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GridField":
        dom = Domain.from_dict(data["domain"])
        grid = make_grid(dom, tuple(data["shape"]), int(data.get("n", 1)))
        if "values" in data:
            vals = np.asarray(data["values"], dtype=float)
            if vals.ndim == grid.d:
                vals = vals[..., None]
            grid = grid.with_values(vals)
        return grid


def make_grid(domain: Domain, shape, n: int = 1, avoid_center: bool = True) -> GridField:
    """Zero field on a uniform grid covering the domain's bounding box.

    For disc domains the grid is shifted by a third of a cell when a cell
    centre would coincide with the disc centre.
    """
    shape = tuple(int(m) for m in np.atleast_1d(shape))
    if len(shape) != domain.d or min(shape) < 1:
        raise FieldError("grid shape must have one positive entry per dimension")
    lo, hi = domain.box
    h = tuple((b - a) / m for a, b, m in zip(lo, hi, shape))
    lower = tuple(lo)
    grid = GridField(domain, np.zeros(shape + (n,)), h, lower, np.ones(shape, bool))
    if domain.shape == "disc":
        c = np.array(domain.bounds[:2])
        if avoid_center and np.min(np.linalg.norm(grid.centers() - c, axis=-1)) < min(h) / 4:
            lower = tuple(a + hk / 3 for a, hk in zip(lo, h))
            grid = GridField(domain, grid.values, h, lower, grid.mask)
        mask = np.linalg.norm(grid.centers() - c, axis=-1) < domain.bounds[2]
        grid = GridField(domain, grid.values, h, lower, mask)
    return grid


def sample_function(domain: Domain, shape, func, n: Optional[int] = None) -> GridField:
    """Grid field ``func(x)`` at cell centres; ``func`` maps (..., d) to (..., n)."""
    grid = make_grid(domain, shape, 1)
    vals = np.asarray(func(grid.centers()), dtype=float)
    if vals.ndim == grid.d:
        vals = vals[..., None]
    vals = np.where(grid.mask[..., None], vals, 0.0)
    return GridField(domain, vals, grid.h, grid.lower, grid.mask)


def rasterize(p: PolygonalField, shape) -> GridField:
    """Sample a polygonal field at cell centres (point location by containing region)."""
    grid = make_grid(p.domain, shape, p.n)
    pts = grid.centers().reshape(-1, p.d)
    vals = p.evaluate(pts).reshape(grid.grid_shape + (p.n,))
    return grid.with_values(vals)


def grid_gradient(u: GridField):
    """
    Forward-difference gradient.

    Returns
    -------
    grad : ndarray, shape grid_shape + (n, d)
    valid : ndarray of bool, shape grid_shape
        Cells inside the domain whose forward neighbours along every axis
        exist and are inside as well.  Other cells carry zeros.
    """
    vals, mask = u.values, u.mask
    grad = np.zeros(u.grid_shape + (u.n, u.d))
    valid = mask.copy()
    for k in range(u.d):
        sl_lo = [slice(None)] * u.d
        sl_hi = [slice(None)] * u.d
        sl_lo[k], sl_hi[k] = slice(0, -1), slice(1, None)
        lo, hi = tuple(sl_lo), tuple(sl_hi)
        grad[lo + (slice(None), k)] = (vals[hi] - vals[lo]) / u.h[k]
        nb = np.zeros_like(mask)
        nb[lo] = mask[hi]
        valid &= nb
    grad[~valid] = 0.0
    return grad, valid


def symmetrized_gradient(u: GridField):
    if u.n != u.d:
        raise FieldError("symmetrized gradient needs n = d")
    g, valid = grid_gradient(u)
    return 0.5 * (g + np.swapaxes(g, -1, -2)), valid


def _grid_quotient(u: GridField, mode):
    x = u.centers()
    w = u.mask.astype(float)
    basis = []
    for i in range(u.n):
        f = np.zeros(u.grid_shape + (u.n,))
        f[..., i] = 1.0
        basis.append(f)
    if mode == "rigid":
        if u.n != u.d:
            raise FieldError("rigid quotient needs n = d")
        for i in range(u.d):
            for j in range(i + 1, u.d):
                f = np.zeros(u.grid_shape + (u.n,))
                f[..., i], f[..., j] = -x[..., j], x[..., i]
                basis.append(f)
    elif mode != "constants":
        raise FieldError(f"unknown quotient mode {mode!r}")
    B = np.stack([b[u.mask] for b in basis], axis=0).reshape(len(basis), -1)
    v = u.values[u.mask].reshape(-1)
    coef = np.linalg.lstsq(B.T, v, rcond=None)[0]
    proj = sum(c * b for c, b in zip(coef, basis))
    return u.with_values((u.values - proj) * w[..., None])
