"""Vector and matrix norm algebra.

Gauges, dual gauges, extreme points of vector unit balls, and sampled
checks of the structural conditions that decide which piecewise constant
fields are extremal.  Every gauge is vectorised over leading axes: a
matrix norm on ``n x d`` matrices accepts arrays of shape ``(..., n, d)``.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import MAX_DIM, random_orthogonal, singular_values

INF = math.inf
_SYM_TOL = 1e-9

MATRIX_KINDS = ("frobenius", "schatten", "kyfan", "kyfan-dual", "mixed-rows", "mixed-cols")


class NormSpecError(ValueError):
    """Invalid norm description or argument shape."""


def conjugate_exponent(p: float) -> float:
    if p == 1:
        return INF
    if p == INF:
        return 1.0
    return p / (p - 1.0)


def _lp(x, p):
    ax = np.abs(x)
    if p == 1:
        return ax.sum(axis=-1)
    if p == INF:
        return ax.max(axis=-1)
    if p == 2:
        return np.sqrt(np.einsum("...i,...i->...", x, x))
    scale = ax.max(axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return safe[..., 0] * ((ax / safe) ** p).sum(axis=-1) ** (1.0 / p)


def _parse_p(p):
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity"):
            return INF
        p = float(p)
    p = float(p)
    if not p >= 1:
        raise NormSpecError(f"exponent p must lie in [1, inf], got {p}")
    return p


def _p_to_json(p):
    return "inf" if p == INF else (int(p) if float(p).is_integer() else p)


@dataclass(frozen=True)
class VectorBallSpec:
    """Unit ball of a norm on R^dim: an l^p ball or a symmetric polygon (dim 2)."""

    dim: int
    kind: str = "lp"
    p: float = 2.0
    vertices: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "lp":
            object.__setattr__(self, "p", _parse_p(self.p))
        elif self.kind == "polygon":
            object.__setattr__(self, "vertices", _validate_polygon(self.vertices))
            object.__setattr__(self, "dim", 2)
        else:
            raise NormSpecError(f"unknown vector ball kind {self.kind!r}")
        if not 1 <= self.dim <= MAX_DIM:
            raise NormSpecError(f"dimension must be in 1..{MAX_DIM}")

    # -- evaluation -------------------------------------------------------
    def gauge(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise NormSpecError(f"vector of length {x.shape[-1]} for a ball in R^{self.dim}")
        if self.kind == "lp":
            return _lp(x, self.p)
        return (x @ self.facet_normals().T).max(axis=-1)

    def dual(self) -> "VectorBallSpec":
        if self.kind == "lp":
            return VectorBallSpec(self.dim, "lp", conjugate_exponent(self.p))
        return VectorBallSpec(2, "polygon", vertices=tuple(map(tuple, self.facet_normals())))

    # -- structure --------------------------------------------------------
    @property
    def is_polyhedral(self) -> bool:
        return self.kind == "polygon" or self.p in (1, INF) or self.dim == 1

    @property
    def is_strictly_convex(self) -> bool:
        return self.kind == "lp" and 1 < self.p < INF and self.dim > 1

    @property
    def is_absolute(self) -> bool:
        """Invariance under coordinate sign flips (needed as outer ball of a mixed norm)."""
        if self.kind == "lp":
            return True
        verts = np.array(self.vertices)
        for axis in range(2):
            flipped = verts.copy()
            flipped[:, axis] *= -1
            if not _same_point_set(verts, flipped):
                return False
        return True

    def vertex_array(self) -> np.ndarray:
        """Extreme points of a polyhedral ball as an array (k, dim)."""
        if self.kind == "polygon":
            return np.array(self.vertices, dtype=float)
        if self.dim == 1:
            return np.array([[1.0], [-1.0]])
        if self.p == 1:
            eye = np.eye(self.dim)
            return np.concatenate([eye, -eye])
        if self.p == INF:
            signs = np.array(np.meshgrid(*[[1.0, -1.0]] * self.dim, indexing="ij"))
            return signs.reshape(self.dim, -1).T
        raise NormSpecError("ball has no finite vertex list")

    def facet_normals(self) -> np.ndarray:
        """Normals a_k with <a_k, x> <= 1 describing a polyhedral ball."""
        if self.kind == "polygon":
            return _polar_vertices(np.array(self.vertices, dtype=float))
        return self.dual().vertex_array()

    def face_vertices(self, x, tol=1e-9) -> np.ndarray:
        """Vertices of the smallest face containing x / gauge(x) (polyhedral balls)."""
        x = np.asarray(x, dtype=float)
        q = x / self.gauge(x)
        normals = self.facet_normals()
        active = normals[normals @ q >= 1 - tol]
        verts = self.vertex_array()
        on_face = np.all(verts @ active.T >= 1 - tol, axis=1)
        return verts[on_face]

    def linearity_subspace(self, x, tol=1e-9) -> np.ndarray:
        """Orthonormal basis (columns) of directions along which the gauge is affine near x."""
        x = np.asarray(x, dtype=float)
        if not np.any(x):
            return np.zeros((self.dim, 0))
        if not self.is_polyhedral:
            return (x / np.linalg.norm(x))[:, None]
        verts = self.face_vertices(x, tol)
        u, s, _ = np.linalg.svd(verts.T, full_matrices=False)
        return u[:, s > 1e-9 * max(1.0, s.max())]

    def gradient(self, x) -> np.ndarray:
        """A subgradient of the gauge at x != 0 (an active facet normal for polyhedral balls)."""
        x = np.asarray(x, dtype=float)
        if self.is_polyhedral:
            normals = self.facet_normals()
            return normals[int(np.argmax(normals @ x))]
        g = np.sign(x) * np.abs(x) ** (self.p - 1)
        return g / float(self.gauge(x)) ** (self.p - 1)

    def is_extreme_direction(self, x, tol=1e-9) -> bool:
        """True when x / gauge(x) is an extreme point of the ball."""
        x = np.asarray(x, dtype=float)
        if not np.any(x):
            return False
        if not self.is_polyhedral:
            return True
        return len(self.face_vertices(x, tol)) == 1

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        if self.kind == "lp":
            return {"kind": "lp", "dim": self.dim, "p": _p_to_json(self.p)}
        return {"kind": "polygon", "vertices": [list(v) for v in self.vertices]}

    @classmethod
    def from_dict(cls, data: dict, dim: Optional[int] = None) -> "VectorBallSpec":
        kind = data.get("kind", "lp")
        if kind == "octagon":
            return octagon()
        if kind == "polygon":
            return cls(2, "polygon", vertices=tuple(tuple(map(float, v)) for v in data["vertices"]))
        if kind == "lp":
            d = data.get("dim", dim)
            if d is None:
                raise NormSpecError("l^p ball needs a dimension")
            return cls(int(d), "lp", data.get("p", 2))
        raise NormSpecError(f"unknown vector ball kind {kind!r}")


def _same_point_set(a, b, tol=_SYM_TOL):
    return all(np.min(np.linalg.norm(b - v, axis=1)) <= tol for v in a)


def _validate_polygon(vertices):
    if vertices is None:
        raise NormSpecError("polygon ball needs vertices")
    verts = np.array(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 4:
        raise NormSpecError("polygon ball needs at least 4 planar vertices")
    if not _same_point_set(verts, -verts):
        raise NormSpecError("polygon ball must be centrally symmetric")
    order = np.argsort(np.arctan2(verts[:, 1], verts[:, 0]), kind="stable")
    verts = verts[order]
    for k in range(len(verts)):
        a, b, c = verts[k - 1], verts[k], verts[(k + 1) % len(verts)]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if cross <= _SYM_TOL:
            raise NormSpecError("polygon vertices must be in strictly convex position")
    return tuple(tuple(float(c) for c in v) for v in verts)


def _polar_vertices(verts):
    k = len(verts)
    out = np.empty_like(verts)
    for i in range(k):
        out[i] = np.linalg.solve(np.array([verts[i], verts[(i + 1) % k]]), np.ones(2))
    return out


def lp_ball(dim: int, p) -> VectorBallSpec:
    return VectorBallSpec(dim, "lp", p)


def polygon_ball(vertices) -> VectorBallSpec:
    return VectorBallSpec(2, "polygon", vertices=tuple(tuple(map(float, v)) for v in vertices))


def octagon() -> VectorBallSpec:
    """Regular octagon with vertices (cos(j pi/4), sin(j pi/4)), j = 0..7."""
    j = np.arange(8)
    return polygon_ball(np.stack([np.cos(2 * np.pi * j / 8), np.sin(2 * np.pi * j / 8)], axis=1))


# ---------------------------------------------------------------------------
# matrix norms


@dataclass(frozen=True)
class MatrixNormSpec:
    """A norm on n x d matrices.

    ``kind`` is one of frobenius, schatten (exponent ``p``), kyfan (order
    ``N``), kyfan-dual (the dual of kyfan ``N``), mixed-rows (``ks`` on each
    row, then ``kv`` on the vector of row values) or mixed-cols (``kv`` on
    each column, then ``ks``).
    """

    n: int
    d: int
    kind: str
    p: Optional[float] = None
    N: Optional[int] = None
    kv: Optional[VectorBallSpec] = None
    ks: Optional[VectorBallSpec] = None

    def __post_init__(self):
        kind = self.kind.replace("_", "-")
        object.__setattr__(self, "kind", kind)
        if kind not in MATRIX_KINDS:
            raise NormSpecError(f"unknown matrix norm kind {self.kind!r}")
        if not (1 <= self.n <= MAX_DIM and 1 <= self.d <= MAX_DIM):
            raise NormSpecError(f"n and d must lie in 1..{MAX_DIM}")
        if kind == "schatten":
            object.__setattr__(self, "p", _parse_p(self.p))
        if kind in ("kyfan", "kyfan-dual"):
            if self.N is None or not 1 <= int(self.N) <= min(self.n, self.d):
                raise NormSpecError("Ky Fan order N must satisfy 1 <= N <= min(n, d)")
            object.__setattr__(self, "N", int(self.N))
        if kind.startswith("mixed"):
            if self.kv is None or self.ks is None:
                raise NormSpecError("mixed norms need kv and ks balls")
            if self.kv.dim != self.n or self.ks.dim != self.d:
                raise NormSpecError("kv must live in R^n and ks in R^d")
            outer = self.kv if kind == "mixed-rows" else self.ks
            if not outer.is_absolute:
                raise NormSpecError("outer ball of a mixed norm must be sign-flip symmetric")

    @property
    def shape(self):
        return (self.n, self.d)

    def label(self) -> str:
        if self.kind == "schatten":
            return f"schatten({_p_to_json(self.p)})"
        if self.kind in ("kyfan", "kyfan-dual"):
            return f"{self.kind}({self.N})"
        if self.kind.startswith("mixed"):
            return f"{self.kind}({_ball_label(self.kv)},{_ball_label(self.ks)})"
        return self.kind

    def to_dict(self) -> dict:
        out = {"n": self.n, "d": self.d, "kind": self.kind}
        if self.kind == "schatten":
            out["p"] = _p_to_json(self.p)
        if self.kind in ("kyfan", "kyfan-dual"):
            out["N"] = self.N
        if self.kind.startswith("mixed"):
            out["kv"] = self.kv.to_dict()
            out["ks"] = self.ks.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MatrixNormSpec":
        try:
            n, d, kind = int(data["n"]), int(data["d"]), str(data["kind"]).replace("_", "-")
        except KeyError as exc:
            raise NormSpecError(f"norm spec missing field {exc}") from None
        if kind.startswith("mixed"):
            return cls(n, d, kind, kv=VectorBallSpec.from_dict(data["kv"], n),
                       ks=VectorBallSpec.from_dict(data["ks"], d))
        return cls(n, d, kind, p=data.get("p"), N=data.get("N"))


def _ball_label(ball):
    if ball.kind == "polygon":
        return "polygon"
    return f"l{_p_to_json(ball.p)}"


def frobenius(n: int, d: int) -> MatrixNormSpec:
    return MatrixNormSpec(n, d, "frobenius")


def schatten(n: int, d: int, p) -> MatrixNormSpec:
    return MatrixNormSpec(n, d, "schatten", p=p)


def kyfan(n: int, d: int, N: int) -> MatrixNormSpec:
    return MatrixNormSpec(n, d, "kyfan", N=N)


def mixed_rows(kv: VectorBallSpec, ks: VectorBallSpec) -> MatrixNormSpec:
    return MatrixNormSpec(kv.dim, ks.dim, "mixed-rows", kv=kv, ks=ks)


def mixed_cols(kv: VectorBallSpec, ks: VectorBallSpec) -> MatrixNormSpec:
    return MatrixNormSpec(kv.dim, ks.dim, "mixed-cols", kv=kv, ks=ks)


def vector_norm_spec(ball: VectorBallSpec) -> MatrixNormSpec:
    """Norm on n x 1 matrices acting as ``ball`` on the single column (1D domains)."""
    return mixed_rows(ball, lp_ball(1, 2))


def _check_shape(spec, a):
    a = np.asarray(a, dtype=float)
    if a.shape[-2:] != (spec.n, spec.d):
        raise NormSpecError(f"expected matrices of shape {(spec.n, spec.d)}, got {a.shape[-2:]}")
    return a


def gauge(spec: MatrixNormSpec, a):
    """|A|_K for a matrix or a stack of matrices."""
    a = _check_shape(spec, a)
    kind = spec.kind
    if kind == "frobenius":
        return np.sqrt(np.einsum("...ij,...ij->...", a, a))
    if kind == "mixed-rows":
        return spec.kv.gauge(spec.ks.gauge(a))
    if kind == "mixed-cols":
        return spec.ks.gauge(spec.kv.gauge(np.swapaxes(a, -1, -2)))
    sv = singular_values(a)
    if kind == "schatten":
        return _lp(sv, spec.p)
    if kind == "kyfan":
        return sv[..., : spec.N].sum(axis=-1)
    return np.maximum(sv[..., 0], sv.sum(axis=-1) / spec.N)


def dual_spec(spec: MatrixNormSpec) -> MatrixNormSpec:
    """The norm whose gauge is the dual of ``spec`` under the Frobenius pairing."""
    kind = spec.kind
    if kind == "frobenius":
        return spec
    if kind == "schatten":
        return MatrixNormSpec(spec.n, spec.d, "schatten", p=conjugate_exponent(spec.p))
    if kind == "kyfan":
        return MatrixNormSpec(spec.n, spec.d, "kyfan-dual", N=spec.N)
    if kind == "kyfan-dual":
        return MatrixNormSpec(spec.n, spec.d, "kyfan", N=spec.N)
    return MatrixNormSpec(spec.n, spec.d, kind, kv=spec.kv.dual(), ks=spec.ks.dual())


def dual_gauge(spec: MatrixNormSpec, a):
    """|A|_{K°} = sup{tr(A^T B) : |B|_K <= 1}, evaluated in closed form."""
    return gauge(dual_spec(spec), a)


def matrix_extreme_points(spec: MatrixNormSpec) -> Optional[np.ndarray]:
    """Vertex list of K when the ball is polyhedral and small enough to enumerate."""
    if spec.kind == "mixed-rows" and spec.d == 1 and spec.kv.is_polyhedral:
        return spec.kv.vertex_array()[:, :, None]
    return None


# ---------------------------------------------------------------------------
# variational dual


@dataclass
class VariationalResult:
    value: float
    converged: bool
    method: str
    maximizer: np.ndarray
    restarts: int = 0
    spread: float = 0.0


def dual_gauge_variational(spec: MatrixNormSpec, a, restarts: int = 20, tol: float = 1e-8,
                           seed: int = 0, max_iter: int = 2000) -> VariationalResult:
    """
    Dual norm by direct maximisation of tr(A^T B) over the unit ball of ``spec``.

    The ball is written as a convex constraint and handed to a conic solver
    whenever every piece of the norm has a conic form (Frobenius, Schatten
    1/2/inf, Ky Fan and its dual, mixed norms built from l^p and polygon
    balls).  Other Schatten exponents fall back to seeded multistart ascent
    of tr(A^T B) / |B|_K, which is smooth for 1 < p < inf.  Independent of
    the closed forms in :func:`dual_gauge`.
    """
    a = _check_shape(spec, a)
    problem = _conic_problem(spec)
    if problem is not None:
        prob, param, var = problem
        param.value = a
        # a tight first pass; an inaccurate finish is retried once at tol itself
        for attempt, eps in enumerate((tol * 1e-1, tol)):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    prob.solve(solver="CLARABEL", tol_gap_abs=eps, tol_gap_rel=eps, tol_feas=eps)
            except Exception:  # solver failure is reported, not raised
                return VariationalResult(float("nan"), False, "conic", np.zeros_like(a), restarts=attempt)
            if prob.status == "optimal":
                break
        ok = prob.status == "optimal"
        value = float(prob.value) if prob.value is not None else float("nan")
        maximizer = np.array(var.value) if var.value is not None else np.zeros_like(a)
        return VariationalResult(value, ok, "conic", maximizer, restarts=attempt)
    return _multistart_dual(spec, a, restarts, tol, seed, max_iter)


@functools.lru_cache(maxsize=64)
def _conic_problem(spec: MatrixNormSpec):
    import cvxpy as cp

    b = cp.Variable((spec.n, spec.d))
    constraints = _conic_ball(spec, b, cp)
    if constraints is None:
        return None
    a = cp.Parameter((spec.n, spec.d))
    prob = cp.Problem(cp.Maximize(cp.sum(cp.multiply(a, b))), constraints)
    return prob, a, b


def _conic_vector_le(ball, x, bound, cp):
    # constraint  |x|_ball <= bound
    if ball.kind == "polygon":
        return [ball.facet_normals() @ x <= bound]
    return [cp.norm(x, ball.p) <= bound] if ball.p in (1, 2, INF) else [cp.pnorm(x, ball.p) <= bound]


def _conic_ball(spec, b, cp):
    kind = spec.kind
    if kind == "frobenius" or (kind == "schatten" and spec.p == 2):
        return [cp.norm(b, "fro") <= 1]
    if kind == "schatten":
        if spec.p == 1:
            return [cp.normNuc(b) <= 1]
        if spec.p == INF:
            return [cp.sigma_max(b) <= 1]
        return None
    if kind in ("kyfan", "kyfan-dual"):
        dil = cp.bmat([[np.zeros((spec.n, spec.n)), b], [b.T, np.zeros((spec.d, spec.d))]])
        dil = (dil + dil.T) / 2
        if kind == "kyfan":
            return [cp.lambda_sum_largest(dil, spec.N) <= 1]
        return [cp.lambda_max(dil) <= 1, cp.normNuc(b) <= spec.N]
    inner, outer = (spec.ks, spec.kv) if kind == "mixed-rows" else (spec.kv, spec.ks)
    pieces = [b[i, :] for i in range(spec.n)] if kind == "mixed-rows" else [b[:, j] for j in range(spec.d)]
    r = cp.Variable(len(pieces))
    cons = []
    for i, piece in enumerate(pieces):
        cons += _conic_vector_le(inner, piece, r[i], cp)
    cons += _conic_vector_le(outer, r, 1, cp)
    return cons


def _multistart_dual(spec, a, restarts, tol, seed, max_iter):
    from scipy.optimize import minimize

    rng = np.random.default_rng(seed)
    flat = a.ravel()

    def neg_ratio(theta):
        g = gauge(spec, theta.reshape(spec.shape))
        return -np.dot(flat, theta) / g if g > 0 else 0.0

    starts = [flat] + [rng.standard_normal(flat.size) for _ in range(max(restarts - 1, 0))]
    values, points = [], []
    for x0 in starts:
        if not np.any(x0):
            continue
        res = minimize(neg_ratio, x0, method="BFGS", options={"gtol": tol * 1e-2, "maxiter": max_iter})
        values.append(-res.fun)
        points.append(res.x)
    order = np.argsort(values)[::-1]
    best = values[order[0]]
    agree = [v for v in values if best - v <= 1e2 * tol * max(1.0, abs(best))]
    theta = points[order[0]]
    return VariationalResult(float(best), len(agree) >= 2, "multistart",
                             (theta / gauge(spec, theta.reshape(spec.shape))).reshape(spec.shape),
                             restarts=len(values), spread=float(best - values[order[-1]]))


# ---------------------------------------------------------------------------
# extreme points of vector balls


@dataclass
class ExtremePointOracle:
    """Extreme points of a vector unit ball.

    ``points`` is the finite vertex list for polyhedral balls and None for
    strictly convex ones, where every unit vector is extreme and
    :meth:`argmax` gives the maximiser of a linear functional.
    """

    ball: VectorBallSpec
    points: Optional[np.ndarray]

    def argmax(self, c):
        """Extreme point b maximising c . b, batched over leading axes of c."""
        c = np.asarray(c, dtype=float)
        if self.points is not None:
            idx = np.argmax(c @ self.points.T, axis=-1)
            return self.points[idx]
        q = conjugate_exponent(self.ball.p)
        if self.ball.p == 2:
            nrm = np.linalg.norm(c, axis=-1, keepdims=True)
            return c / np.where(nrm > 0, nrm, 1.0)
        w = np.sign(c) * np.abs(c) ** (q - 1)
        nrm = self.ball.gauge(w)[..., None]
        return w / np.where(nrm > 0, nrm, 1.0)

    def parameterize(self, theta):
        """Point of the unit sphere at angle theta (planar l^p balls)."""
        if self.ball.dim != 2:
            raise NormSpecError("angular parameterisation only for planar balls")
        theta = np.asarray(theta, dtype=float)
        x = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return x / self.ball.gauge(x)[..., None]

    def contains(self, b, tol=1e-9) -> bool:
        b = np.asarray(b, dtype=float)
        if self.points is not None:
            return bool(np.min(np.linalg.norm(self.points - b, axis=1)) <= tol)
        return abs(float(self.ball.gauge(b)) - 1.0) <= tol


def ball_extreme_points(ball: VectorBallSpec) -> ExtremePointOracle:
    if ball.is_polyhedral:
        return ExtremePointOracle(ball, ball.vertex_array())
    if ball.kind == "lp" and 1 < ball.p < INF:
        return ExtremePointOracle(ball, None)
    raise NormSpecError(f"unsupported ball {ball}")


# ---------------------------------------------------------------------------
# rank-one structure and sampled conditions


def rank_one_profile(spec: MatrixNormSpec):
    """Return (value_ball, scale) with |b (x) nu|_K = scale(nu) * |b|_value_ball."""
    if spec.kind.startswith("mixed"):
        return spec.kv, spec.ks.gauge
    return lp_ball(spec.n, 2), lambda nu: _lp(np.asarray(nu, dtype=float), 2)


def outer(b, a):
    return np.asarray(b, dtype=float)[..., :, None] * np.asarray(a, dtype=float)[..., None, :]


def sym_outer(a, b):
    m = outer(a, b)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


@dataclass
class ConditionReport:
    condition: str
    spec: str
    passed: bool
    samples: int
    seed: int
    worst: float
    tol: float
    witness: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    note: str = "sampled evidence only"

    def to_dict(self) -> dict:
        return {"condition": self.condition, "spec": self.spec, "passed": bool(self.passed),
                "samples": self.samples, "seed": self.seed, "worst": float(self.worst),
                "tol": self.tol, "witness": self.witness, "details": self.details, "note": self.note}


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _probe_vectors(dim):
    probes = [np.eye(dim)[i] for i in range(dim)]
    if dim > 1:
        probes.append(np.ones(dim) / math.sqrt(dim))
    return np.array(probes)


def check_rank_one_isotropy(spec: MatrixNormSpec, samples: int = 1000, seed: int = 0,
                            tol: float = 1e-10) -> ConditionReport:
    """Sampled check of |b (x) nu|_K = |b| for unit nu."""
    rng = np.random.default_rng(seed)
    bp, nup = _probe_vectors(spec.n), _probe_vectors(spec.d)
    b = np.concatenate([np.repeat(bp, len(nup), axis=0), _unit_rows(rng.standard_normal((samples, spec.n)))])
    nu = np.concatenate([np.tile(nup, (len(bp), 1)), _unit_rows(rng.standard_normal((samples, spec.d)))])
    dev = np.abs(gauge(spec, outer(b, nu)) - 1.0)
    k = int(np.argmax(dev))
    value = float(gauge(spec, outer(b[k], nu[k])))
    return ConditionReport("rank-one-isotropy", spec.label(), bool(dev[k] <= tol), len(b), seed,
                           float(dev[k]), tol, {"b": b[k].tolist(), "nu": nu[k].tolist(), "value": value})


def check_left_orthogonal_invariance(spec: MatrixNormSpec, samples: int = 500, seed: int = 0,
                                     tol: float = 1e-10) -> ConditionReport:
    rng = np.random.default_rng(seed)
    qs = np.array([random_orthogonal(spec.n, rng) for _ in range(samples)])
    a = rng.standard_normal((samples, spec.n, spec.d))
    ga = gauge(spec, a)
    dev = np.abs(gauge(spec, qs @ a) - ga) / ga
    k = int(np.argmax(dev))
    return ConditionReport("left-orthogonal-invariance", spec.label(), bool(dev[k] <= tol), samples, seed,
                           float(dev[k]), tol, {"Q": qs[k].tolist(), "A": a[k].tolist()})


def check_clunky_condition(spec: MatrixNormSpec, samples: int = 1000, seed: int = 0,
                           tol: float = 1e-10) -> ConditionReport:
    """
    Left orthogonal invariance plus |b1| |e1 (x) nu|_K < |b (x) nu|_K.

    Sampled over unit b away from +-e1 (both signs give equality) and unit
    nu.  ``worst`` is the smallest margin divided by (1 - |b1|).
    """
    inv = check_left_orthogonal_invariance(spec, samples=min(samples, 500), seed=seed, tol=tol)
    rng = np.random.default_rng(seed + 1)
    b = _unit_rows(rng.standard_normal((samples, spec.n)))
    b = b[np.abs(b[:, 0]) < 1 - 1e-6]
    nu = _unit_rows(rng.standard_normal((len(b), spec.d)))
    e1 = np.zeros(spec.n)
    e1[0] = 1.0
    margin = gauge(spec, outer(b, nu)) - np.abs(b[:, 0]) * gauge(spec, outer(np.broadcast_to(e1, b.shape), nu))
    rel = margin / (1 - np.abs(b[:, 0]))
    k = int(np.argmin(rel))
    passed = inv.passed and bool(rel[k] > tol) if spec.n > 1 else inv.passed
    return ConditionReport("clunky", spec.label(), passed, len(b), seed, float(rel[k]), tol,
                           {"b": b[k].tolist(), "nu": nu[k].tolist(), "margin": float(margin[k])},
                           {"invariance_passed": inv.passed, "invariance_deviation": inv.worst})


def check_sym_rank_one_strict_convexity(spec: MatrixNormSpec, samples: int = 200, seed: int = 0,
                                        tol: float = 1e-9, a=None, b=None, nu=None,
                                        grid: int = 101) -> ConditionReport:
    """Sampled strict convexity of lambda -> |((1-lambda) a + lambda b) (.) nu|_K."""
    if spec.n != spec.d:
        raise NormSpecError("symmetrised rank-one condition needs n = d")
    rng = np.random.default_rng(seed)
    lam = np.linspace(0.0, 1.0, grid)
    if a is not None:
        triples = [(np.asarray(a, float), np.asarray(b, float), np.asarray(nu, float))]
        rejected = 0
    else:
        triples, rejected = [], 0
        while len(triples) < samples:
            aa, bb, nn = _unit_rows(rng.standard_normal((3, spec.d)))
            if abs(aa @ bb) > 0.99:
                rejected += 1
                continue
            triples.append((aa, bb, nn))
    worst, witness = INF, {}
    for aa, bb, nn in triples:
        path = (1 - lam)[:, None] * aa + lam[:, None] * bb
        f = gauge(spec, sym_outer(path, np.broadcast_to(nn, path.shape)))
        second = f[:-2] - 2 * f[1:-1] + f[2:]
        m = float(second.min())
        if m < worst:
            worst, witness = m, {"a": aa.tolist(), "b": bb.tolist(), "nu": nn.tolist()}
    return ConditionReport("sym-strict", spec.label(), bool(worst > tol), len(triples), seed, worst, tol,
                           witness, {"rejected": rejected, "grid": grid})


CONDITIONS: dict = {
    "rank-one-isotropy": check_rank_one_isotropy,
    "left-orthogonal-invariance": check_left_orthogonal_invariance,
    "clunky": check_clunky_condition,
    "sym-strict": check_sym_rank_one_strict_convexity,
}
