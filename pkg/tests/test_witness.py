import json

import numpy as np
import pytest

from tvk import atoms, io, norms, witness
from tvk.fields import SimpleSetSpec, interval, piecewise_constant_1d, rectangle, square
from tvk.norms import lp_ball


def _right_cell(z):
    return piecewise_constant_1d(interval(0, 1), [0.5], [[0.0, 0.0], z])


def test_max_step_on_l1_face():
    a = atoms.atom_jump1d(0.5, [0.5, 0.5], lp_ball(2, 1))
    # the jump (0.5 + t, 0.5 - t) keeps unit l^1 norm up to t = 1/2
    t = witness.max_step(a, _right_cell([1.0, -1.0]))
    assert t == pytest.approx(0.5, rel=1e-8)
    assert witness.max_step(a, _right_cell([-1.0, 1.0])) == pytest.approx(t, rel=1e-12)


def test_max_step_strictly_convex_is_tiny():
    a = atoms.atom_jump1d(0.5, [0.6, 0.8], lp_ball(2, 2))
    # |b + t z|^2 = 1 + t^2 for the tangent z, so t* ~ sqrt(2 tol)
    t = witness.max_step(a, _right_cell([-0.8, 0.6]))
    assert t <= 1e-6
    assert t == pytest.approx(np.sqrt(2 * witness.EXACT_TOL), rel=0.05)


def test_catalog_is_seeded_and_normalised():
    sq = SimpleSetSpec(rectangle(0, 3, 0, 3), (square((1.5, 1.5), 1),))
    a = atoms.atom_vector_indicator(sq, [1.0, 0.0], norms.frobenius(2, 2))
    c1 = witness.build_catalog(a, 60, seed=3)
    c2 = witness.build_catalog(a, 60, seed=3)
    assert len(c1) == 60
    assert [d.label for d in c1] == [d.label for d in c2]
    for d1, d2 in zip(c1, c2):
        np.testing.assert_array_equal(d1.vector, d2.vector)
    assert {"bump", "random"} <= {d.cls for d in c1}


def test_flat_counterexample_certificate():
    atom = atoms.atom_bd_flat_counterexample()[0]
    cert = witness.certify(atom, directions=50)
    assert cert.decomposable and cert.direction_class == "family"
    assert cert.step >= 0.25 - 1e-6
    ver = witness.verify_certificate(cert)
    assert ver.passed
    assert max(ver.energies) <= 1 + 1e-9 and ver.separation > 0


def test_extremal_atom_not_decomposed():
    cert = witness.certify(atoms.atom_jump1d(0.5, [1.0, 0.0], lp_ball(2, 1)), directions=60)
    assert cert.status == "no-decomposition-found"
    assert cert.max_step_observed <= 1e-6
    assert sum(c["count"] for c in cert.per_class.values()) == cert.catalog_size
    assert not witness.verify_certificate(cert).passed


def test_tampered_certificate_fails_verification():
    cert = witness.certify(atoms.atom_jump1d(0.5, [0.5, 0.5], lp_ball(2, 1)), directions=30)
    assert cert.decomposable
    cert.step *= 3
    ver = witness.verify_certificate(cert)
    assert not ver.passed and "exceeds" in ver.reasons[0]


def test_certificate_json_and_profile():
    cert = witness.certify(atoms.atom_jump1d(0.5, [1.0, 0.0], lp_ball(2, norms.INF)), directions=30)
    d = cert.to_dict()
    json.loads(io.dumps(d))
    prof = d["profile"]
    inside = np.array(prof["t"]) <= d["step"]
    assert np.all(np.array(prof["plus"])[inside] <= 1 + 1e-9)
    assert np.max(prof["plus"]) > 1


def test_face_dimension_of_jump_atoms():
    assert witness.face_dimension_estimate(atoms.atom_jump1d(0.5, [1.0, 0.0], lp_ball(2, 1))) == 0
    assert witness.face_dimension_estimate(atoms.atom_jump1d(0.5, [0.5, 0.5], lp_ball(2, 1))) >= 1


def test_small_hedgehog_grid_directions():
    a = atoms.atom_hedgehog((24, 24))
    cat = witness.build_catalog(a, 80, seed=0)
    assert {d.cls for d in cat} >= {"polar", "random"}
    t = witness.max_step(a, cat[0].vector)
    assert t >= 0
