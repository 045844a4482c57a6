"""Fully corrective conditional gradient for 1D TV_K-regularised inversion.

Solves ``min_u 1/2 |A u - f|^2 + alpha TV_K(u)`` over vector signals on
(0, T).  The unit TV_K ball modulo constants has the jump atoms
``b 1_(t, T)`` with ``b`` an extreme point of K as its extreme points, so
the linear minimisation oracle scans jump locations and picks ``b`` from
``Ext(K)``.  After every insertion the coefficients of all atoms are
re-optimised (nonnegative, constants free and unpenalised).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar, nnls
from scipy.special import erf

from . import norms

T_GRID = 1024
T_TOL = 1e-10
POLISH_PEAKS = 8
INNER_TOL = 1e-10
PRUNE_TOL = 1e-12


class GcgError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# observations


@dataclass
class Observation:
    """
    Linear measurements of a signal on (0, T).

    ``kind`` is "pointwise" (``(A u)_j = u(s_j)``) or "convolution"
    (``(A u)_j = int k(s_j - x) u(x) dx`` with a Gaussian kernel of width
    ``sigma``).  ``f`` has shape (m, n).
    """

    locations: np.ndarray
    f: np.ndarray
    kind: str = "pointwise"
    T: float = 1.0
    sigma: float = 0.0
    noise: dict = field(default_factory=dict)

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float)
        f = np.asarray(self.f, dtype=float)
        self.f = f[:, None] if f.ndim == 1 else f
        if self.locations.ndim != 1 or len(self.locations) != len(self.f):
            raise GcgError("one data row per sample location expected")
        if np.any(self.locations <= 0) or np.any(self.locations >= self.T):
            raise GcgError("sample locations must lie strictly inside (0, T)")
        if self.kind not in ("pointwise", "convolution"):
            raise GcgError(f"unknown observation kind {self.kind!r}")
        if self.kind == "convolution" and not self.sigma > 0:
            raise GcgError("convolution needs a positive kernel width")

    @property
    def n(self):
        return self.f.shape[1]

    def step_response(self, t) -> np.ndarray:
        """phi(t)_j = (A 1_(t, T))_j for an array of t; shape (..., m)."""
        t = np.asarray(t, dtype=float)[..., None]
        s = self.locations
        if self.kind == "pointwise":
            return (s > t).astype(float)
        c = math.sqrt(2.0) * self.sigma
        return 0.5 * (erf((s - t) / c) - erf((s - self.T) / c))

    def constant_response(self) -> np.ndarray:
        return self.step_response(0.0)

    def apply_atoms(self, ts, bs):
        """A applied to sum_k b_k 1_(t_k, T); shape (m, n)."""
        if len(ts) == 0:
            return np.zeros_like(self.f)
        phi = self.step_response(np.asarray(ts))
        return phi.T @ np.asarray(bs)

    def to_dict(self):
        return {"kind": self.kind, "T": self.T, "sigma": self.sigma, "locations": self.locations.tolist(),
                "f": self.f.tolist(), "noise": self.noise}


# ---------------------------------------------------------------------------
# state


@dataclass
class GcgState:
    """
    Iterate ``u = constant + sum_j c_j b_j 1_(t_j, T)`` with histories.

    Directions ``b_j`` are extreme points of K (unit gauge) and ``c_j > 0``.
    ``objective[k]`` and ``gap[k]`` are recorded before the k-th insertion.
    """

    positions: list = field(default_factory=list)
    directions: list = field(default_factory=list)
    coefficients: list = field(default_factory=list)
    constant: np.ndarray = None
    objective: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    converged: bool = False
    flags: list = field(default_factory=list)
    iterations: int = 0

    def jumps(self):
        """Merged jumps (t, c b) sorted by location."""
        out: dict = {}
        for t, b, c in zip(self.positions, self.directions, self.coefficients):
            out.setdefault(t, 0.0)
            out[t] = out[t] + c * np.asarray(b)
        return sorted(out.items())

    def support(self, resolution: float) -> list:
        """Jump locations with neighbours closer than ``resolution`` grouped (mass-weighted mean)."""
        groups = []
        for t, v in self.jumps():
            w = float(np.linalg.norm(v))
            if groups and t - groups[-1][-1][0] <= resolution:
                groups[-1].append((t, w))
            else:
                groups.append([(t, w)])
        return [sum(t * w for t, w in g) / max(sum(w for _, w in g), 1e-300) for g in groups]

    def evaluate(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.broadcast_to(self.constant, (len(x), len(self.constant))).copy()
        for t, b, c in zip(self.positions, self.directions, self.coefficients):
            u += (x > t)[:, None] * (c * np.asarray(b))
        return u

    def to_dict(self):
        return {"schema": "tvk.gcg-state/1",
                "atoms": [{"t": float(t), "b": [float(v) for v in b], "c": float(c)}
                          for t, b, c in zip(self.positions, self.directions, self.coefficients)],
                "constant": [float(v) for v in self.constant],
                "objective": [float(v) for v in self.objective], "gap": [float(v) for v in self.gap],
                "converged": self.converged, "iterations": self.iterations, "flags": list(self.flags)}


def _ball(spec):
    if isinstance(spec, norms.VectorBallSpec):
        return spec
    if spec.d != 1:
        raise GcgError("1D solver needs an n x 1 norm")
    return norms.rank_one_profile(spec)[0]


def tv_value(jumps, ball) -> float:
    return float(sum(ball.gauge(v) for _, v in jumps))


def objective(state: GcgState, obs: Observation, alpha: float, ball) -> float:
    """Data misfit plus alpha * TV_K of the iterate (merged jumps)."""
    r = _residual(state, obs)
    return 0.5 * float(np.sum(r * r)) + alpha * tv_value(state.jumps(), ball)


def _residual(state, obs):
    au = obs.apply_atoms(state.positions, [c * np.asarray(b) for b, c in zip(state.directions, state.coefficients)])
    return au + np.outer(obs.constant_response(), state.constant) - obs.f


# ---------------------------------------------------------------------------
# linear minimisation oracle


@dataclass
class LmoResult:
    t: Optional[float]
    b: Optional[np.ndarray]
    value: float

    @property
    def null(self):
        return self.t is None


def _candidate_ts(obs: Observation):
    if obs.kind == "pointwise":
        s = np.unique(obs.locations)
        edges = np.concatenate([[0.0], s, [obs.T]])
        return 0.5 * (edges[:-1] + edges[1:]), False
    return (np.arange(T_GRID) + 0.5) * obs.T / T_GRID, True


def lmo(residual: np.ndarray, obs: Observation, spec) -> LmoResult:
    """
    Atom b 1_(t, T) minimising <A* r, atom>, i.e. maximising |rho(t)|_{K dual}.

    ``rho(t) = sum_j phi_j(t) r_j``.  Pointwise data give a piecewise
    constant rho, scanned exactly at gap midpoints; convolution data are
    scanned on a 1024-point grid and polished by golden-section search.
    """
    ball = _ball(spec)
    dual = ball.dual()
    oracle = norms.ball_extreme_points(ball)
    r = np.asarray(residual, dtype=float)
    ts, smooth = _candidate_ts(obs)

    def score(t):
        rho = obs.step_response(t) @ r
        return dual.gauge(rho), rho

    vals, _ = score(ts)
    k = int(np.argmax(vals))
    t_best, v_best = float(ts[k]), float(vals[k])
    if smooth:
        # polish every leading local maximum; the global one can sit between grid points
        h = obs.T / T_GRID
        padded = np.concatenate([[-np.inf], vals, [-np.inf]])
        peaks = np.nonzero((vals >= padded[:-2]) & (vals >= padded[2:]))[0]
        peaks = peaks[np.argsort(-vals[peaks], kind="stable")][:POLISH_PEAKS]
        for k in peaks:
            lo, hi = max(ts[k] - h, 0.0), min(ts[k] + h, obs.T)
            res = minimize_scalar(lambda t: -score(t)[0], bounds=(lo, hi), method="bounded",
                                  options={"xatol": T_TOL})
            if -res.fun > v_best:
                t_best, v_best = float(res.x), float(-res.fun)
    if v_best <= 1e-14 * max(1.0, float(np.abs(r).max(initial=0.0))):
        return LmoResult(None, None, 0.0)
    rho = score(np.array([t_best]))[1][0]
    b = oracle.argmax(-rho)
    return LmoResult(t_best, np.asarray(b, dtype=float), v_best)


# ---------------------------------------------------------------------------
# corrective step


def _constant_projector(obs):
    """Projector removing the span of constant responses (one per component)."""
    m, n = obs.f.shape
    c = obs.constant_response()
    C = np.kron(c[:, None], np.eye(n))  # (m n, n), row-major (j, i)
    Q, _ = np.linalg.qr(C)
    return Q


def _corrective(state, obs, alpha, warm=None):
    """
    Exact coefficient update: NNLS over atom weights with constants eliminated.

    Returns (coefficients, constant, ok, kkt residual).
    """
    m, n = obs.f.shape
    f = obs.f.ravel()
    cr = obs.constant_response()
    if not state.positions:
        return np.zeros(0), (cr @ obs.f) / float(cr @ cr), True, 0.0
    Q = _constant_projector(obs)
    M = _atom_matrix(state, obs)
    PM = M - Q @ (Q.T @ M)
    G = PM.T @ PM
    p = PM.T @ f - alpha
    # QR of the ridge-augmented design avoids squaring its condition number
    delta = 1e-14 * max(float(np.trace(G)), 1.0)
    R = np.linalg.qr(np.vstack([PM, math.sqrt(delta) * np.eye(len(G))]), mode="r")
    G = R.T @ R
    d = np.linalg.solve(R.T, p)
    c, _ = nnls(R, d, maxiter=50 * max(len(p), 10))
    c = _refine_active(G, p, c)
    q = lambda x: 0.5 * x @ G @ x - p @ x  # noqa: E731
    if warm is not None and q(warm) < q(c):
        c = warm
    grad = G @ c - p
    scale = max(1.0, float(np.abs(p).max()))
    kkt = max(float(np.max(np.abs(grad[c > 0]), initial=0.0)), float(-np.min(grad[c <= 0], initial=0.0)))
    rest = (f - M @ c).reshape(m, n)
    const = (cr @ rest) / float(cr @ cr)
    return c, const, kkt <= 1e-6 * scale, kkt


def _refine_active(G, p, c):
    """Re-solve the stationarity system on the active set; keep it if it stays feasible and helps."""
    act = c > 0
    if not act.any():
        return c
    ca = np.linalg.lstsq(G[np.ix_(act, act)], p[act], rcond=None)[0]
    if np.all(ca > 0):
        trial = np.zeros_like(c)
        trial[act] = ca
        q = lambda x: 0.5 * x @ G @ x - p @ x  # noqa: E731
        if q(trial) <= q(c):
            return trial
    return c


def _atom_matrix(state, obs):
    return np.array([np.outer(obs.step_response(t), b).ravel()
                     for t, b in zip(state.positions, state.directions)]).T


def _split_jump(v, ball):
    """Write a jump v as a conic combination of extreme points with weights summing to |v|_K."""
    g = float(ball.gauge(v))
    if g <= PRUNE_TOL:
        return []
    if ball.is_extreme_direction(v):
        return [(v / g, g)]
    verts = ball.face_vertices(v)
    w, _ = nnls(verts.T, v / g)
    return [(verts[k], g * w[k]) for k in range(len(verts)) if g * w[k] > PRUNE_TOL]


def _merge_and_prune(state, ball):
    """Drop zero coefficients and rewrite each location's total jump with minimal weight."""
    groups: dict = {}
    for t, b, c in zip(state.positions, state.directions, state.coefficients):
        if c > PRUNE_TOL:
            groups.setdefault(t, []).append(c * np.asarray(b))
    pos, dirs, coef = [], [], []
    for t in sorted(groups):
        for b, c in _split_jump(np.sum(groups[t], axis=0), ball):
            pos.append(t)
            dirs.append(b)
            coef.append(c)
    state.positions, state.directions, state.coefficients = pos, dirs, coef


# ---------------------------------------------------------------------------
# solver


def duality_gap(state: GcgState, obs: Observation, alpha: float, spec, lmo_result=None) -> float:
    """
    Frank-Wolfe gap for the penalised problem.

    With phi = objective(u) and M = phi / alpha bounding TV_K at any
    minimiser, the gap is ``<A* r, u> + alpha TV_K(u) + M max(0, eta - alpha)``
    where eta is the oracle value: the larger of the linearised decreases
    toward 0 and toward M times the oracle atom.  When the constants are
    optimal for the current atoms it bounds objective(u) minus the optimum.
    """
    ball = _ball(spec)
    r = _residual(state, obs)
    if lmo_result is None:
        lmo_result = lmo(r, obs, ball)
    tv_u = tv_value(state.jumps(), ball)
    phi = 0.5 * float(np.sum(r * r)) + alpha * tv_u
    budget = phi / alpha
    return float(np.sum(r * (r + obs.f))) + alpha * tv_u + budget * max(0.0, lmo_result.value - alpha)


def alpha_max(obs: Observation, spec) -> float:
    """
    Smallest alpha for which the constant fit is optimal (u has no jumps).

    Constants are free, so this is the oracle value at the residual of the
    best constant fit rather than at the raw data.
    """
    ball = _ball(spec)
    st = GcgState(constant=np.zeros(obs.n))
    st.constant = _corrective(st, obs, 1.0)[1]
    return lmo(_residual(st, obs), obs, ball).value


def solve(obs: Observation, alpha: float, spec, max_iter: int = 100, gap_tol: float = 1e-9) -> GcgState:
    """
    Fully corrective conditional gradient over jump atoms.

    Each iteration inserts the oracle atom, re-solves the nonnegative
    coefficient problem exactly (NNLS with constants eliminated), prunes
    zero coefficients and rewrites atoms sharing a location as a minimal
    conic combination of extreme points.  Stops when the gap drops below
    ``gap_tol``; inner-solve failures and objective increases are recorded
    in ``state.flags``.
    """
    if not alpha > 0:
        raise GcgError("alpha must be positive")
    ball = _ball(spec)
    state = GcgState(constant=np.zeros(obs.n))
    state.constant = _corrective(state, obs, alpha)[1]
    for it in range(max_iter + 1):
        r = _residual(state, obs)
        res = lmo(r, obs, ball)
        gap = duality_gap(state, obs, alpha, ball, res)
        state.gap.append(gap)
        state.objective.append(objective(state, obs, alpha, ball))
        state.iterations = it
        if gap <= gap_tol or res.null:
            state.converged = True
            break
        if it == max_iter:
            break
        if res.value <= alpha * (1 + 1e-12):
            # no atom improves the objective; remaining gap is from the corrective tolerance
            state.converged = gap <= max(gap_tol, 1e-8 * max(1.0, state.objective[-1]))
            if not state.converged:
                state.flags.append("stalled: oracle value below alpha with positive gap")
            break
        state.positions.append(res.t)
        state.directions.append(res.b)
        state.coefficients.append(0.0)
        prev = state.objective[-1]
        c, const, ok, kkt = _corrective(state, obs, alpha, warm=np.array(state.coefficients, dtype=float))
        if not ok:
            state.flags.append(f"inner solve KKT residual {kkt:.2e} at iteration {it}")
        state.coefficients = [float(v) for v in c]
        state.constant = const
        _merge_and_prune(state, ball)
        new = objective(state, obs, alpha, ball)
        if new > prev + 1e-10 * max(1.0, abs(prev)):
            state.flags.append(f"objective increased at iteration {it}")
    return state


def check_extremal_atoms(state: GcgState, spec) -> bool:
    """Every atom direction is an extreme point of K with unit gauge."""
    ball = _ball(spec)
    oracle = norms.ball_extreme_points(ball)
    return all(oracle.contains(b, tol=1e-9) and ball.is_extreme_direction(b) for b in state.directions)


def synthetic_observation(seed: int, kind: str, spec, m: int = 64, noise: float = 0.0,
                          sigma: float = 0.02):
    """
    Seeded test problem with 1 + seed % 3 jumps.

    Jumps sit in (0.15, 0.85) at least 0.15 apart, with values that are
    extreme points of K scaled by U(1, 2), on top of a random constant.
    Samples are at the m cell midpoints of (0, 1).  Returns the observation
    and the true jump locations.
    """
    ball = _ball(spec)
    rng = np.random.default_rng(seed)
    k = 1 + seed % 3
    ts = np.sort(rng.uniform(0.15, 0.85, k))
    while k > 1 and np.min(np.diff(ts)) < 0.15:
        ts = np.sort(rng.uniform(0.15, 0.85, k))
    oracle = norms.ball_extreme_points(ball)
    bs = [oracle.argmax(rng.standard_normal(ball.dim)) * rng.uniform(1, 2) for _ in ts]
    s = (np.arange(m) + 0.5) / m
    sig = sigma if kind == "convolution" else 0.0
    clean = Observation(s, np.zeros((m, ball.dim)), kind=kind, sigma=sig)
    f = clean.apply_atoms(ts, bs) + rng.standard_normal(ball.dim) * 0.3
    if noise > 0:
        f = f + noise * rng.standard_normal(f.shape)
    obs = Observation(s, f, kind=kind, sigma=sig, noise={"seed": seed, "std": noise})
    return obs, ts


# ---------------------------------------------------------------------------
# dense reference solver


def _project_polygon(y, verts):
    """Euclidean projection of rows of y onto the convex polygon with ccw vertices."""
    normals = norms._polar_vertices(verts)
    inside = np.max(y @ normals.T, axis=1) <= 1
    out = y.copy()
    if inside.all():
        return out
    q = y[~inside]
    a, b = verts, np.roll(verts, -1, axis=0)
    ab = b - a
    s = np.clip(np.einsum("pkj,kj->pk", q[:, None, :] - a[None], ab) / np.sum(ab * ab, axis=1), 0, 1)
    cand = a[None] + s[..., None] * ab[None]
    dist = np.sum((cand - q[:, None, :]) ** 2, axis=2)
    out[~inside] = cand[np.arange(len(q)), np.argmin(dist, axis=1)]
    return out


def _project_l1(y, radius=1.0):
    """Row-wise projection onto the l1 ball (sort-based)."""
    a = np.abs(y)
    inside = a.sum(axis=1) <= radius
    out = y.copy()
    if inside.all():
        return out
    u = -np.sort(-a[~inside], axis=1)
    css = np.cumsum(u, axis=1) - radius
    k = np.arange(1, y.shape[1] + 1)
    rho = np.sum(u - css / k > 0, axis=1)
    theta = css[np.arange(len(u)), rho - 1] / rho
    out[~inside] = np.sign(y[~inside]) * np.maximum(a[~inside] - theta[:, None], 0)
    return out


def project_dual_ball(ball: norms.VectorBallSpec, y: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean projection onto the polar ball K°."""
    y = np.asarray(y, dtype=float)
    if ball.kind == "polygon":
        return _project_polygon(y, ball.dual().vertex_array())
    if ball.p == 2:
        nrm = np.linalg.norm(y, axis=1, keepdims=True)
        return y / np.maximum(nrm, 1.0)
    if ball.p == 1:
        return np.clip(y, -1.0, 1.0)
    if np.isinf(ball.p):
        return _project_l1(y)
    raise GcgError("dense solver supports l1, l2, l-infinity and polygon balls")


@dataclass
class OracleResult:
    objective: float
    jumps: list
    constant: np.ndarray
    iterations: int
    converged: bool


def grid_oracle(obs: Observation, alpha: float, spec, cells: int = 4096, method: str = "conic",
                max_iter: int = 5000, tol: float = 1e-8) -> OracleResult:
    """
    Reference solution with jumps restricted to the boundaries of a uniform grid.

    The discrete problem is the group lasso
    ``min 1/2 |Phi^T x + c - f|^2 + alpha sum_i |x_i|_K`` over jumps ``x_i`` at
    the ``cells - 1`` interior grid boundaries and free constants ``c``.
    ``method="conic"`` solves it with an interior-point conic solver;
    ``method="admm"`` runs ADMM with an exact Woodbury x-update, which is
    accurate for sampled data but slow on blurred data.
    """
    ball = _ball(spec)
    t = np.arange(1, cells) * obs.T / cells
    if method == "conic":
        z, it, converged = _oracle_conic(obs, alpha, ball, t)
    elif method == "admm":
        z, it, converged = _oracle_admm(obs, alpha, ball, t, max_iter, tol)
    else:
        raise GcgError(f"unknown oracle method {method!r}")
    scale = max(float(np.abs(z).max(initial=0.0)), 1.0)
    active = np.nonzero(np.any(np.abs(z) > 1e-9 * scale, axis=1))[0]
    st = GcgState(constant=np.zeros(obs.n))
    st.positions = [float(t[i]) for i in active]
    st.directions = [z[i] for i in active]
    st.coefficients = [1.0] * len(active)
    cr = obs.constant_response()
    st.constant = (cr @ (obs.f - obs.apply_atoms(st.positions, st.directions))) / float(cr @ cr)
    return OracleResult(objective(st, obs, alpha, ball), st.jumps(), st.constant, it, converged)


def _oracle_conic(obs, alpha, ball, t):
    import cvxpy as cp

    m, n = obs.f.shape
    B = obs.step_response(t).T
    cr = obs.constant_response()
    z = cp.Variable((len(t), n))
    c = cp.Variable(n)
    fit = B @ z + np.reshape(cr, (m, 1)) @ cp.reshape(c, (1, n), order="F") - obs.f
    if ball.is_polyhedral:
        pen = cp.sum(cp.max(z @ ball.facet_normals().T, axis=1))
    else:
        pen = cp.sum(cp.norm(z, ball.p, axis=1))
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(fit) + alpha * pen))
    prob.solve(solver="CLARABEL")
    ok = prob.status == "optimal"
    if z.value is None:
        raise GcgError(f"conic oracle failed: {prob.status}")
    return np.asarray(z.value), int(prob.solver_stats.num_iters or 0), ok


def _oracle_admm(obs, alpha, ball, t, max_iter, tol):
    m, n = obs.f.shape
    cells = len(t) + 1
    cr = obs.constant_response()
    qc = cr / np.linalg.norm(cr)
    B = obs.step_response(t).T  # (m, N)
    B = B - np.outer(qc, qc @ B)
    f_p = obs.f - np.outer(qc, qc @ obs.f)
    Btf = B.T @ f_p
    rho = max(float(np.linalg.norm(B, 2)) ** 2 / cells, 1e-6)

    def factor(r):
        return np.linalg.cholesky(r * np.eye(m) + B @ B.T)

    L = factor(rho)
    z = np.zeros((len(t), n))
    w = np.zeros_like(z)
    converged = False
    for it in range(1, max_iter + 1):
        rhs = Btf + rho * (z - w)
        y = np.linalg.solve(L.T, np.linalg.solve(L, B @ rhs))
        x = (rhs - B.T @ y) / rho
        v = x + w
        z_old = z
        z = v - (alpha / rho) * project_dual_ball(ball, v * (rho / alpha))
        w = w + x - z
        r_norm = np.linalg.norm(x - z)
        s_norm = rho * np.linalg.norm(z - z_old)
        if (r_norm <= tol * max(np.linalg.norm(x), np.linalg.norm(z), 1.0)
                and s_norm <= tol * max(rho * np.linalg.norm(w), 1.0)):
            converged = True
            break
        if it % 50 == 0 and (r_norm > 10 * s_norm or s_norm > 10 * r_norm):
            k = 2.0 if r_norm > s_norm else 0.5
            rho *= k
            w /= k
            L = factor(rho)
    return z, it, converged
