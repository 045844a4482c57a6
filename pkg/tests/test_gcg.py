import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tvk import gcg, norms
from tvk.gcg import GcgError, GcgState, Observation
from tvk.norms import INF, lp_ball, octagon

S = (np.arange(16) + 0.5) / 16


def _obs(f=None, **kw):
    return Observation(S, np.zeros((16, 2)) if f is None else f, **kw)


def test_observation_validation():
    with pytest.raises(GcgError):
        Observation([0.0, 0.5], np.zeros((2, 1)))
    with pytest.raises(GcgError):
        Observation([0.5], np.zeros((2, 1)))
    with pytest.raises(GcgError):
        Observation([0.5], np.zeros((1, 1)), kind="convolution")
    with pytest.raises(GcgError):
        Observation([0.5], np.zeros((1, 1)), kind="fourier")


def test_step_response():
    obs = _obs()
    np.testing.assert_array_equal(obs.step_response(0.3), (S > 0.3).astype(float))
    conv = _obs(kind="convolution", sigma=1e-4)
    # a narrow kernel reproduces point samples away from the jump
    np.testing.assert_allclose(conv.step_response(0.3), (S > 0.3).astype(float), atol=1e-12)


def test_lmo_l1_picks_axis_and_gap():
    r = np.zeros((16, 2))
    r[4] = [1.0, 0.0]
    r[9] = [-2.0, 1.0]
    res = gcg.lmo(r, _obs(), lp_ball(2, 1))
    # rho(t) = r_9 for s_4 < t < s_9; |rho|_inf = 2, attained by b = e1
    assert S[4] < res.t < S[9]
    np.testing.assert_array_equal(res.b, [1.0, 0.0])
    assert res.value == pytest.approx(2.0)


def test_lmo_l2_normalises_rho():
    r = np.zeros((16, 2))
    r[12] = [3.0, -4.0]
    res = gcg.lmo(r, _obs(), lp_ball(2, 2))
    np.testing.assert_allclose(res.b, [-0.6, 0.8])
    assert res.value == pytest.approx(5.0)
    assert res.t < S[12]


def test_lmo_zero_residual_is_null():
    assert gcg.lmo(np.zeros((16, 2)), _obs(), lp_ball(2, 2)).null


def test_lmo_convolution_matches_dense_scan(rng):
    obs = _obs(kind="convolution", sigma=0.03)
    r = rng.standard_normal((16, 2))
    r -= r.mean(axis=0)
    ball = octagon()
    res = gcg.lmo(r, obs, ball)
    ts = np.linspace(1e-6, 1 - 1e-6, 200001)
    dense = ball.dual().gauge(obs.step_response(ts) @ r).max()
    assert res.value >= dense - 1e-9
    assert res.value == pytest.approx(dense, rel=1e-8)


def test_lmo_needs_column_norm():
    with pytest.raises(GcgError):
        gcg.lmo(np.zeros((16, 2)), _obs(), norms.frobenius(2, 2))


def test_matrix_spec_accepted():
    spec = norms.mixed_rows(lp_ball(2, 1), lp_ball(1, 2))
    r = np.zeros((16, 2))
    r[8] = [0.0, 1.0]
    assert gcg.lmo(r, _obs(), spec).value == pytest.approx(1.0)


def test_alpha_max_threshold():
    obs, _ = gcg.synthetic_observation(0, "pointwise", lp_ball(2, 2))
    am = gcg.alpha_max(obs, lp_ball(2, 2))
    above = gcg.solve(obs, am * 1.001, lp_ball(2, 2))
    assert above.jumps() == [] and above.converged
    np.testing.assert_allclose(above.constant, obs.f.mean(axis=0), atol=1e-12)
    below = gcg.solve(obs, am * 0.9, lp_ball(2, 2))
    assert len(below.jumps()) >= 1


@pytest.mark.parametrize("seed, kind, ball", [
    (0, "pointwise", lp_ball(2, 2)),
    (2, "pointwise", octagon()),
    (4, "convolution", lp_ball(2, 1)),
    (7, "pointwise", lp_ball(2, INF)),
])
def test_solver_invariants(seed, kind, ball):
    obs, ts = gcg.synthetic_observation(seed, kind, ball)
    st_ = gcg.solve(obs, 0.05 * gcg.alpha_max(obs, ball), ball, max_iter=200)
    assert st_.converged and not st_.flags
    obj = np.array(st_.objective)
    assert np.all(np.diff(obj) <= 1e-10 * np.abs(obj[:-1]))
    assert min(st_.gap) >= -1e-12
    assert gcg.check_extremal_atoms(st_, ball)
    assert all(c > 0 for c in st_.coefficients)
    res = 2 / 1024 if kind == "convolution" else 1 / 64
    found = st_.support(res)
    assert len(found) == len(ts)
    np.testing.assert_allclose(found, ts, atol=1 / 64)


def test_gap_bounds_suboptimality():
    ball = lp_ball(2, 2)
    obs, _ = gcg.synthetic_observation(1, "pointwise", ball)
    alpha = 0.05 * gcg.alpha_max(obs, ball)
    final = gcg.solve(obs, alpha, ball).objective[-1]
    early = gcg.solve(obs, alpha, ball, max_iter=1)
    assert early.objective[-1] - final <= early.gap[-1] + 1e-12


def test_merged_jumps_and_support():
    st_ = GcgState(positions=[0.5, 0.2, 0.5, 0.21], directions=[[1, 0], [0, 1], [0, 1], [0, 1]],
                   coefficients=[1.0, 2.0, 3.0, 2.0], constant=np.zeros(2))
    jumps = st_.jumps()
    assert [t for t, _ in jumps] == [0.2, 0.21, 0.5]
    np.testing.assert_array_equal(jumps[2][1], [1.0, 3.0])
    assert st_.support(0.05) == pytest.approx([0.205, 0.5])
    np.testing.assert_allclose(st_.evaluate([0.1, 0.3, 0.9]), [[0, 0], [0, 4], [1, 7]])


def test_state_dict_schema_tag():
    d = GcgState(constant=np.zeros(2)).to_dict()
    assert d["schema"] == "tvk.gcg-state/1" and d["atoms"] == []


def test_alpha_must_be_positive():
    with pytest.raises(GcgError):
        gcg.solve(_obs(), 0.0, lp_ball(2, 2))


def test_oracle_methods_agree():
    ball = lp_ball(2, 2)
    obs, _ = gcg.synthetic_observation(3, "pointwise", ball, m=32)
    alpha = 0.05 * gcg.alpha_max(obs, ball)
    conic = gcg.grid_oracle(obs, alpha, ball, cells=256)
    admm = gcg.grid_oracle(obs, alpha, ball, cells=256, method="admm", max_iter=20000, tol=1e-10)
    assert conic.converged
    assert admm.objective == pytest.approx(conic.objective, rel=1e-6)
    gcg_obj = gcg.solve(obs, alpha, ball).objective[-1]
    # the grid restricts jump locations, so it cannot beat the continuous problem
    assert conic.objective >= gcg_obj - 1e-9 * gcg_obj


BALLS = [lp_ball(2, 1), lp_ball(2, 2), lp_ball(2, INF), octagon()]


@given(y=arrays(float, (6, 2), elements=st.floats(-4, 4)), k=st.integers(0, 3),
       z=arrays(float, (6, 2), elements=st.floats(-1, 1)))
def test_dual_projection_is_euclidean_projection(y, k, z):
    ball = BALLS[k]
    dual = ball.dual()
    p = gcg.project_dual_ball(ball, y)
    assert np.all(dual.gauge(p) <= 1 + 1e-12)
    np.testing.assert_allclose(gcg.project_dual_ball(ball, p), p, atol=1e-12)
    # variational inequality against feasible points
    zf = z / np.maximum(dual.gauge(z), 1.0)[:, None]
    assert np.all(np.einsum("ij,ij->i", y - p, zf - p) <= 1e-9)
