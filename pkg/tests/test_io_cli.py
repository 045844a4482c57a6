import json
import subprocess
import sys

import numpy as np
import pytest

from tvk import gcg, io, norms
from tvk.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, main
from tvk.fields import SimpleSetSpec, make_indicator, rectangle, square

FROB = json.dumps({"kind": "frobenius", "n": 2, "d": 2})
SQUARE_FIELD = make_indicator(SimpleSetSpec(rectangle(0, 3, 0, 3), (square((1.5, 1.5), 1),)), [1.0, 0.0])


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------------------
# io


def test_dumps_is_canonical():
    a = io.dumps({"b": np.float64(1.5), "a": np.arange(3), "c": float("inf")})
    assert a == io.dumps({"c": float("inf"), "a": [0, 1, 2], "b": 1.5})
    assert json.loads(a)["c"] == "inf"
    assert io.digest({"x": 1, "y": 2}) == io.digest({"y": 2, "x": 1})


def test_json_errors_carry_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "kind": "frobenius"\n  "n": 2\n}\n')
    with pytest.raises(io.InputError, match=r"bad.json:3:3"):
        io.read_json(bad)
    with pytest.raises(io.InputError, match="No such file"):
        io.read_json(tmp_path / "missing.json")


def test_schema_validation_names_the_path():
    with pytest.raises(io.InputError, match="<norm>: n: 'two' is not of type"):
        io.load_norm({"kind": "frobenius", "n": "two", "d": 2})


def test_norm_loading():
    assert io.load_norm(json.loads(FROB)) == norms.frobenius(2, 2)
    spec = io.load_norm({"kind": "lp", "dim": 2, "p": 1})
    assert spec.shape == (2, 1)
    with pytest.raises(io.InputError):
        io.load_norm({"kind": "kyfan", "n": 2, "d": 2, "N": 5})


def test_field_round_trip_through_loader():
    u = io.load_field(json.loads(io.dumps(SQUARE_FIELD.to_dict())))
    np.testing.assert_array_equal(u.affine, SQUARE_FIELD.affine)


def test_samples_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("s,u1,u2\n0.25,1,2\n0.75,3,4\n")
    loc, vals = io.read_samples_csv(p)
    np.testing.assert_array_equal(loc, [0.25, 0.75])
    np.testing.assert_array_equal(vals, [[1, 2], [3, 4]])
    p.write_text("0.25,1,2\n0.75,x,4\n")
    with pytest.raises(io.InputError, match=r"d.csv:2:2"):
        io.read_samples_csv(p)
    p.write_text("0.25,1,2\n0.75,3\n")
    with pytest.raises(io.InputError, match=r"d.csv:2:1: expected 3 columns"):
        io.read_samples_csv(p)


# ---------------------------------------------------------------------------
# cli


def test_norm_eval(capsys):
    code, out, _ = run(capsys, "norm", "eval", "--spec", '{"kind": "schatten", "n": 2, "d": 2, "p": 1}',
                       "--matrix", "[[1, 2], [3, 4]]")
    assert code == EXIT_OK
    s = np.linalg.svd([[1, 2], [3, 4]], compute_uv=False)
    res = json.loads(out)
    assert res["value"] == pytest.approx(s.sum())
    assert res["dual"] == pytest.approx(s.max())


def test_norm_dual_variational(capsys):
    spec = '{"kind": "mixed-rows", "n": 2, "d": 2, "kv": {"kind": "lp", "p": 1}, "ks": {"kind": "lp", "p": 2}}'
    code, out, _ = run(capsys, "norm", "dual", "--spec", spec, "--matrix", "[[3, 4], [0, 1]]")
    res = json.loads(out)
    assert code == EXIT_OK and res["converged"]
    assert res["variational"] == pytest.approx(5.0, rel=1e-6)
    assert res["closed_form"] == pytest.approx(5.0)


def test_norm_check(capsys):
    code, out, _ = run(capsys, "norm", "check", "--spec", FROB, "--condition", "rank-one-isotropy",
                       "--samples", "20")
    assert code == EXIT_OK and json.loads(out)["conditions"]["rank-one-isotropy"]["passed"]


def test_tv_and_perimeter(capsys, tmp_path):
    fpath = tmp_path / "field.json"
    io.write_json(SQUARE_FIELD.to_dict(), fpath)
    code, out, _ = run(capsys, "tv", "--field", str(fpath), "--spec", FROB, "--breakdown")
    res = json.loads(out)
    assert code == EXIT_OK and res["value"] == pytest.approx(4.0) and len(res["breakdown"]) == 4
    E = SimpleSetSpec(rectangle(0, 3, 0, 3), (square((1.5, 1.5), 1),)).to_dict()
    code, out, _ = run(capsys, "perimeter", "--set", json.dumps(E), "--norm", '{"kind": "lp", "dim": 2, "p": 1}')
    assert code == EXIT_OK and json.loads(out)["perimeter"] == pytest.approx(4.0)


def test_field_rasterize(capsys):
    code, out, _ = run(capsys, "field", "rasterize", "--field", io.dumps(SQUARE_FIELD.to_dict()), "--shape", "12")
    res = json.loads(out)
    assert code == EXIT_OK and res["type"] == "grid" and res["shape"] == [12, 12]


def test_input_errors_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  \"kind\" \"frobenius\"\n}")
    code, _, err = run(capsys, "norm", "eval", "--spec", str(bad), "--matrix", "[[1]]")
    assert code == EXIT_INPUT and "bad.json:2:10" in err
    assert run(capsys, "norm", "eval")[0] == EXIT_INPUT
    assert run(capsys, "frobnicate")[0] == EXIT_INPUT
    assert run(capsys, "norm", "eval", "--spec", FROB, "--matrix", "[[1, 2, 3]]")[0] == EXIT_INPUT
    assert run(capsys, "atoms", "make")[0] == EXIT_INPUT
    assert run(capsys, "--help")[0] == EXIT_OK


def test_check_writes_certificate_and_manifest(capsys, tmp_path):
    out = tmp_path / "cx"
    code, _, _ = run(capsys, "--reproducible", "check", "--atom", "flat-counterexample", "--directions", "40",
                     "--plot", "--out", str(out))
    assert code == EXIT_OK
    cert = io.read_json(out / "certificate.json")
    assert cert["status"] == "decomposable" and cert["step"] >= 0.25 - 1e-6
    man = io.read_json(out / "manifest.json")
    assert man["schema"] == "tvk.manifest/1"
    assert man["artifacts"] == ["certificate.json", "certificate.svg"]
    io.validate(man, "manifest")
    io.validate(cert, "certificate")


def _write_problem(tmp_path, alpha_frac=0.05, **cfg_extra):
    ball = norms.lp_ball(2, 2)
    obs, ts = gcg.synthetic_observation(2, "pointwise", ball)
    io.write_csv(tmp_path / "data.csv", ["s", "u1", "u2"], [[s, *f] for s, f in zip(obs.locations, obs.f)])
    cfg = {"alpha": alpha_frac * gcg.alpha_max(obs, ball), "spec": ball.to_dict(), **cfg_extra}
    io.write_json(cfg, tmp_path / "cfg.json")
    return ts


def test_solve_outputs(capsys, tmp_path):
    ts = _write_problem(tmp_path)
    out = tmp_path / "run"
    code, _, _ = run(capsys, "--reproducible", "solve", "--data", str(tmp_path / "data.csv"),
                     "--config", str(tmp_path / "cfg.json"), "--out", str(out))
    assert code == EXIT_OK
    state = io.read_json(out / "state.json")
    io.validate(state, "gcg-state")
    assert state["converged"] and state["extremal_atoms"]
    jumps = np.loadtxt(out / "jumps.csv", delimiter=",", skiprows=1, ndmin=2)
    assert len(jumps) == len(ts)
    assert sorted(io.read_json(out / "manifest.json")["artifacts"]) == ["gap.svg", "jumps.csv",
                                                                        "solution.svg", "state.json"]
    # re-plotting the state reproduces the SVG byte for byte
    code, _, _ = run(capsys, "--reproducible", "plot", "--artifact", str(out / "state.json"),
                     "--out", str(tmp_path / "again.svg"))
    assert code == EXIT_OK
    assert (tmp_path / "again.svg").read_bytes() == (out / "solution.svg").read_bytes()


def test_solve_reports_non_convergence(capsys, tmp_path):
    _write_problem(tmp_path, max_iter=1)
    code, _, err = run(capsys, "solve", "--data", str(tmp_path / "data.csv"), "--config",
                       str(tmp_path / "cfg.json"), "--out", str(tmp_path / "run"))
    assert code == EXIT_NUMERIC and "gap tolerance" in err


def test_solve_rejects_unknown_config_keys(capsys, tmp_path):
    _write_problem(tmp_path, colour="blue")
    code, _, err = run(capsys, "solve", "--data", str(tmp_path / "data.csv"), "--config",
                       str(tmp_path / "cfg.json"), "--out", str(tmp_path / "run"))
    assert code == EXIT_INPUT and "colour" in err


def test_threads_flag_sets_environment(monkeypatch, capsys):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    import os

    assert run(capsys, "--threads", "2", "atoms", "list")[0] == EXIT_OK
    assert os.environ["OMP_NUM_THREADS"] == "2"


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tvk.cli", "atoms", "list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "hedgehog" in json.loads(proc.stdout)["families"]


def test_norm_eval_reads_csv_matrix(capsys, tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,2\n3,4\n")
    code, out, _ = run(capsys, "norm", "eval", "--spec", FROB, "--matrix", str(p))
    assert code == EXIT_OK and json.loads(out)["value"] == pytest.approx(np.sqrt(30))
    p.write_text("1,2\n3,x\n")
    assert run(capsys, "norm", "eval", "--spec", FROB, "--matrix", str(p))[0] == EXIT_INPUT


def test_grid_field_sidecar_round_trip(capsys, tmp_path):
    side = tmp_path / "grid.json"
    code, _, _ = run(capsys, "field", "rasterize", "--field", io.dumps(SQUARE_FIELD.to_dict()), "--shape", "12",
                     "--out", str(side))
    assert code == EXIT_OK
    meta = io.read_json(side)
    assert meta["values_csv"] == "grid.csv" and "values" not in meta
    g = io.load_field(meta, str(side))
    assert g.values.shape == (12, 12, 2)
    assert g.values[..., 0].sum() * g.cell_volume == pytest.approx(1.0)
    code, out, _ = run(capsys, "tv", "--field", str(side), "--spec", FROB)
    assert code == EXIT_OK and json.loads(out)["method"] == "grid-quadrature"
    (tmp_path / "grid.csv").write_text("u1,u2\n0,0\n")
    assert run(capsys, "tv", "--field", str(side), "--spec", FROB)[0] == EXIT_INPUT


def test_atoms_catalog_and_make_by_family(capsys, tmp_path):
    code, out, _ = run(capsys, "atoms", "catalog")
    cat = {row["family"]: row["provenance"] for row in json.loads(out)["families"]}
    assert code == EXIT_OK and cat["custom"] == ["uncharted"]
    E1 = {"domain": {"shape": "rectangle", "bounds": [0, 4, 0, 4]}, "polygons": [[[1, 1.5], [2, 1.5], [2, 2.5], [1, 2.5]]]}
    E2 = {"domain": E1["domain"], "polygons": [[[2, 1.5], [3, 1.5], [3, 2.5], [2, 2.5]]]}
    params = tmp_path / "p.json"
    io.write_json({"E1": E1, "E2": E2, "b1": [1, 0], "b2": [0, 1]}, params)
    code, _, _ = run(capsys, "atoms", "make", "--family", "three-value", "--params", str(params), "--spec", FROB,
                     "--out", str(tmp_path / "a"))
    assert code == EXIT_OK
    atom = io.read_json(tmp_path / "a" / "atom.json")
    assert atom["atom"]["family"] == "three-value" and atom["atom"]["expected_extremal"] is True
    assert io.read_json(tmp_path / "a" / "manifest.json")["artifacts"] == ["atom.json"]
    assert run(capsys, "atoms", "make", "--family", "spiral", "--spec", FROB)[0] == EXIT_INPUT
