"""Command-line interface: ``tvk <command> ...``.

Exit codes: 0 success, 2 input error (including usage errors), 3 when a
numerical routine raised a failure flag.  Commands that write an output
directory also write ``manifest.json`` describing the run.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _emit(obj, out=None):
    from . import io

    text = io.dumps(obj)
    if out:
        io.write_json(obj, out)
    sys.stdout.write(text)


def _manifest(args, outdir, artifacts, config):
    from pathlib import Path

    from . import __version__, io

    man = {"schema": "tvk.manifest/1", "command": args.command, "config_digest": io.digest(config),
           "seed": getattr(args, "seed", None), "artifacts": sorted(artifacts), "tool_version": __version__}
    io.write_json(man, Path(outdir) / "manifest.json")
    return man


def _matrix(text):
    """Inline JSON array, or a path to a CSV file with one matrix row per line."""
    from pathlib import Path

    import numpy as np

    from . import io

    if not text.lstrip().startswith("[") and Path(text).is_file():
        try:
            a = np.loadtxt(text, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise io.InputError(f"{text}: {exc}") from None
    else:
        a = np.asarray(io.loads(text, "<matrix>"), dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


# ---------------------------------------------------------------------------
# commands


def cmd_norm(args):
    from . import io, norms

    spec = io.load_norm(io.load_json_arg(args.spec), args.spec)
    if args.action == "eval":
        a = _matrix(args.matrix)
        out = {"spec": spec.label(), "value": float(norms.gauge(spec, a)), "dual": float(norms.dual_gauge(spec, a))}
    elif args.action == "dual":
        out = {"spec": spec.label(), "dual_spec": norms.dual_spec(spec).to_dict()}
        if args.matrix:
            a = _matrix(args.matrix)
            res = norms.dual_gauge_variational(spec, a, seed=args.seed)
            out.update({"closed_form": float(norms.dual_gauge(spec, a)), "variational": res.value,
                        "method": res.method, "converged": res.converged})
            if not res.converged:
                _emit(out, args.out)
                raise NumericalFailure("variational dual did not converge")
    else:
        names = list(norms.CONDITIONS) if args.condition == "all" else [args.condition]
        out = {"spec": spec.label(), "conditions": {}}
        for name in names:
            rep = norms.CONDITIONS[name](spec, samples=args.samples, seed=args.seed)
            out["conditions"][name] = rep.to_dict()
    _emit(out, args.out)
    return EXIT_OK


def cmd_field(args):
    from . import fields, io

    u = io.load_field(io.load_json_arg(args.field), args.field)
    if args.action == "rasterize":
        if not isinstance(u, fields.PolygonalField):
            raise io.InputError("rasterize needs a polygonal field")
        g = fields.rasterize(u, tuple(args.shape) if len(args.shape) > 1 else (args.shape[0],) * u.d)
        if args.out:
            io.write_grid_field(g, args.out)
            sys.stdout.write(io.dumps({"written": args.out}))
            return EXIT_OK
        out = g.to_dict()
    else:
        out = fields.quotient_normalize(u, args.mode).to_dict()
    if args.out:
        io.write_json(out, args.out)
        sys.stdout.write(io.dumps({"written": args.out}))
    else:
        sys.stdout.write(io.dumps(out))
    return EXIT_OK


def cmd_energy(args):
    from . import energy, io

    u = io.load_field(io.load_json_arg(args.field), args.field)
    spec = io.load_norm(io.load_json_arg(args.spec), args.spec)
    fn = energy.tv if args.command == "tv" else energy.td
    try:
        rep = fn(u, spec)
    except (energy.EnergyError, ValueError) as exc:
        raise io.InputError(str(exc)) from None
    out = rep.to_dict(breakdown_limit=10000 if args.breakdown else 0)
    _emit(out, args.out)
    return EXIT_OK


def cmd_perimeter(args):
    from . import energy, io, norms

    E = io.load_set(io.load_json_arg(args.set), args.set)
    k_obj = io.load_json_arg(args.norm)
    k = io.load_norm(k_obj, args.norm) if k_obj.get("kind") in norms.MATRIX_KINDS else io.load_ball(k_obj)
    _emit({"perimeter": energy.anisotropic_perimeter(E, k), "area": E.area}, args.out)
    return EXIT_OK


def cmd_coarea(args):
    from . import energy, fields, io

    u = io.load_field(io.load_json_arg(args.field), args.field)
    spec = io.load_norm(io.load_json_arg(args.spec), args.spec)
    if isinstance(u, fields.PolygonalField):
        if not args.shape:
            raise io.InputError("polygonal fields need --shape for the grid check")
        u = fields.rasterize(u, tuple(args.shape) if len(args.shape) > 1 else (args.shape[0],) * u.d)
    try:
        rep = energy.coarea_check(u, spec, levels=args.levels, perimeter=args.perimeter)
    except energy.EnergyError as exc:
        raise io.InputError(str(exc)) from None
    _emit(rep.to_dict(), args.out)
    return EXIT_OK


def _atom_from_arg(value):
    from . import atoms, io

    builtin = {"hedgehog": lambda: atoms.atom_hedgehog(),
               "flat-counterexample": lambda: atoms.atom_bd_flat_counterexample()[0],
               "octagon-threevalue": lambda: atoms.atom_octagon_three_value()}
    if value in builtin:
        return builtin[value](), {"builtin": value}
    obj = io.load_json_arg(value)
    return io.load_atom(obj, value), obj


def cmd_atoms(args):
    from pathlib import Path

    from . import atoms, io

    if args.action == "list":
        _emit({"families": list(atoms.FAMILIES)})
        return EXIT_OK
    if args.action == "catalog":
        _emit({"families": [{"family": f, "provenance": atoms.PROVENANCE[f]} for f in atoms.PROVENANCE]})
        return EXIT_OK
    if args.family:
        config = {"family": args.family, "params": io.load_json_arg(args.params) if args.params else {}}
        if args.spec:
            config["norm"] = io.load_json_arg(args.spec)
        atom = io.load_atom(config, "<atoms make>")
    else:
        atom, config = _atom_from_arg(args.atom)
    out = atom.to_dict()
    if args.out:
        outdir = Path(args.out)
        io.write_json(out, outdir / "atom.json")
        _manifest(args, outdir, ["atom.json"], config)
        sys.stdout.write(io.dumps({"written": str(outdir / "atom.json")}))
    else:
        sys.stdout.write(io.dumps(out))
    return EXIT_OK


def cmd_check(args):
    from pathlib import Path

    from . import io, plotting, witness

    atom, config = _atom_from_arg(args.atom)
    cert = witness.certify(atom, directions=args.directions, seed=args.seed)
    data = cert.to_dict()
    outdir = Path(args.out)
    io.write_json(data, outdir / "certificate.json")
    artifacts = ["certificate.json"]
    if args.plot:
        plotting.plot_certificate(data, outdir / "certificate.svg", args.reproducible)
        artifacts.append("certificate.svg")
    _manifest(args, outdir, artifacts, {"atom": config, "directions": args.directions, "seed": args.seed})
    sys.stdout.write(str(outdir / "certificate.json") + "\n")
    if cert.decomposable and not witness.verify_certificate(cert).passed:
        raise NumericalFailure("certificate failed re-verification")
    return EXIT_OK


def cmd_solve(args):
    from pathlib import Path

    import numpy as np

    from . import gcg, io, plotting

    loc, vals = io.read_samples_csv(args.data)
    cfg = io.validate(io.load_json_arg(args.config), "gcg-config", args.config)
    ball = io.load_ball(cfg["spec"], args.config)
    try:
        obs = gcg.Observation(loc, vals, kind=cfg.get("kind", "pointwise"), T=float(cfg.get("T", 1.0)),
                              sigma=float(cfg.get("sigma", 0.0)), noise=cfg.get("noise", {}))
    except gcg.GcgError as exc:
        raise io.InputError(f"{args.data}: {exc}") from None
    if ball.dim != obs.n:
        raise io.InputError(f"norm acts on R^{ball.dim} but the data have {obs.n} components")
    state = gcg.solve(obs, float(cfg["alpha"]), ball, max_iter=int(cfg.get("max_iter", 100)),
                      gap_tol=float(cfg.get("gap_tol", 1e-9)))
    data = state.to_dict()
    data["observation"] = obs.to_dict()
    data["alpha"] = float(cfg["alpha"])
    data["extremal_atoms"] = gcg.check_extremal_atoms(state, ball)
    outdir = Path(args.out)
    io.write_json(data, outdir / "state.json")
    io.write_csv(outdir / "jumps.csv", ["t"] + [f"jump_{k + 1}" for k in range(obs.n)],
                 [[t] + list(np.asarray(v, dtype=float)) for t, v in state.jumps()])
    plotting.plot_gcg(data, outdir / "solution.svg", args.reproducible)
    plotting.plot_gap(data, outdir / "gap.svg", args.reproducible)
    _manifest(args, outdir, ["state.json", "jumps.csv", "solution.svg", "gap.svg"],
              {"config": cfg, "data": obs.to_dict()})
    sys.stdout.write(str(outdir / "state.json") + "\n")
    if state.flags or not state.converged or not data["extremal_atoms"]:
        sys.stderr.write("; ".join(state.flags or ["solver did not reach the gap tolerance"]) + "\n")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_plot(args):
    from . import io, plotting

    data = io.read_json(args.artifact)
    try:
        path = plotting.plot_artifact(data, args.out, args.reproducible)
    except plotting.PlotError as exc:
        raise io.InputError(f"{args.artifact}: {exc}") from None
    sys.stdout.write(str(path) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvk", description="Anisotropic total variation toolkit.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for linear algebra (default: $TVK_THREADS, else library default)")
    p.add_argument("--reproducible", action="store_true",
                   help="omit timestamps from SVG output so reruns are byte-identical")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def out_arg(q, help="also write the JSON result to this file"):
        q.add_argument("--out", default=None, help=help)

    q = sub.add_parser("norm", help="evaluate, dualise or check matrix norms")
    q.add_argument("action", choices=["eval", "dual", "check"])
    q.add_argument("--spec", required=True, help="norm JSON (inline or path)")
    q.add_argument("--matrix", help="matrix as a JSON nested list or a CSV file")
    q.add_argument("--condition", default="all", choices=["all", "rank-one-isotropy",
                                                          "left-orthogonal-invariance", "clunky", "sym-strict"])
    q.add_argument("--samples", type=int, default=200)
    q.add_argument("--seed", type=int, default=0)
    out_arg(q)
    q.set_defaults(func=cmd_norm)

    q = sub.add_parser("field", help="rasterize or quotient-normalize a field")
    q.add_argument("action", choices=["rasterize", "normalize"])
    q.add_argument("--field", required=True, help="field JSON (inline or path)")
    q.add_argument("--shape", type=int, nargs="+", default=[64], help="grid cells per axis")
    q.add_argument("--mode", default="constants", choices=["constants", "rigid"])
    out_arg(q, "write the field JSON here instead of stdout")
    q.set_defaults(func=cmd_field)

    for name, what in (("tv", "TV_K"), ("td", "TD_K")):
        q = sub.add_parser(name, help=f"{what} of a field (exact on polygons, quadrature on grids)")
        q.add_argument("--field", required=True)
        q.add_argument("--spec", required=True)
        q.add_argument("--breakdown", action="store_true", help="include per-edge or per-cell contributions")
        out_arg(q)
        q.set_defaults(func=cmd_energy)

    q = sub.add_parser("perimeter", help="anisotropic perimeter of a polygonal set")
    q.add_argument("--set", required=True, help="set JSON with domain and polygons")
    q.add_argument("--norm", required=True, help="vector ball on R^2 or a 1 x 2 matrix norm")
    out_arg(q)
    q.set_defaults(func=cmd_perimeter)

    q = sub.add_parser("coarea", help="compare TV with the integral of level-set perimeters")
    q.add_argument("--field", required=True)
    q.add_argument("--spec", required=True)
    q.add_argument("--levels", type=int, default=64)
    q.add_argument("--perimeter", default="contour", choices=["contour", "grid"],
                   help="level-set perimeter estimate")
    q.add_argument("--shape", type=int, nargs="+", help="grid for polygonal inputs")
    out_arg(q)
    q.set_defaults(func=cmd_coarea)

    q = sub.add_parser("atoms", help="list atom families or build one")
    q.add_argument("action", choices=["list", "catalog", "make"])
    q.add_argument("--atom", help="atom JSON or a built-in name (hedgehog, flat-counterexample, "
                                  "octagon-threevalue)")
    q.add_argument("--family", help="family name, with --params and --spec instead of --atom")
    q.add_argument("--params", help="family parameters JSON (inline or path)")
    q.add_argument("--spec", help="matrix norm JSON (inline or path)")
    q.add_argument("--out", help="output directory")
    q.set_defaults(func=cmd_atoms)

    q = sub.add_parser("check", help="search for a midpoint decomposition of an atom")
    q.add_argument("--atom", required=True, help="atom JSON or a built-in name")
    q.add_argument("--directions", type=int, default=500)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--plot", action="store_true", help="also render certificate.svg")
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_check)

    q = sub.add_parser("solve", help="1D TV_K-regularised inversion by conditional gradient")
    q.add_argument("--data", required=True, help="CSV: location, value_1, ..., value_n")
    q.add_argument("--config", required=True, help="config JSON: alpha, spec, max_iter, gap_tol, kind, sigma")
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_solve)

    q = sub.add_parser("plot", help="render an artifact (field, certificate or solver state) as SVG")
    q.add_argument("--artifact", required=True)
    q.add_argument("--out", required=True, help="SVG path")
    q.set_defaults(func=cmd_plot)
    return p


def _apply_threads(threads):
    if threads is None:
        env = os.environ.get("TVK_THREADS")
        threads = int(env) if env and env.isdigit() else None
    if threads:
        for var in THREAD_VARS:
            os.environ[var] = str(threads)
    return threads


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    _apply_threads(args.threads)
    if args.command == "atoms" and args.action == "make" and not (args.atom or args.family):
        parser.print_usage(sys.stderr)
        sys.stderr.write("tvk: error: atoms make needs --atom or --family\n")
        return EXIT_INPUT
    from . import io

    try:
        return args.func(args)
    except io.InputError as exc:
        sys.stderr.write(f"tvk: error: {exc}\n")
        return EXIT_INPUT
    except NumericalFailure as exc:
        sys.stderr.write(f"tvk: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as exc:
        sys.stderr.write(f"tvk: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
