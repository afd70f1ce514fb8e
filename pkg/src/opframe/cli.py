"""Command-line front end.

Every command prints a short summary; with ``--out DIR`` it also writes a JSON
report (plus CSV exports where relevant) into DIR.  Exit status: 0 success,
1 validation failure or bad input file, 2 usage error.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import sys
from io import StringIO
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .decompose import Infeasible, decompose_feasible, max_entropy_section, preimage_dimension
from .dynamics import (COIN, FAKE_OSCILLATOR, OscillatorState, check_convexity_preservation,
                       check_group_law, coin_flow, find_two_futures, get_flow, lift_trajectory)
from .empirical import (StateVector, check_e3, extract_state, reconstruct_frequencies, tally,
                        validate_e1_e2)
from .errors import OpframeError
from .models import chsh_context_freqs, coin_schema, chsh_schema, pr_box_state
from .ontology import classify
from .quantum import (build_representation, expectation, observable, spectrum,
                      state_vector, verify_representation)
from .schema import enumerate_coordinates
from .statespace import affine_dimension, contains, deterministic_vertices, h_representation, is_vertex

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_TOL = 1e-9
DENSE_EXPORT_CAP = 1024


class UsageError(Exception):
    pass


def data_path(name: str) -> Path:
    return Path(resources.files("opframe") / "data" / name)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(args) -> str:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out", "func", "json")}
    files = {}
    for key in ("schema", "state", "meas_freqs"):
        if cfg.get(key):
            files[key] = _file_digest(cfg[key])
    for key in ("log", "model"):
        files[key] = [_file_digest(p) for p in cfg.get(key) or []]
    cfg["files"] = files
    return io.sha256_of(cfg)


def tolerances(args) -> dict:
    return {"tol": args.tol, "rank_rtol": 1e-8, "negative_mass": 1e-9, "feasibility": 1e-8}


# -- input assembly -----------------------------------------------------------

def _schema(args, default=None):
    if args.schema:
        return io.load_schema(args.schema)
    if default is not None:
        return default
    raise UsageError("--schema is required for this command")


def _tables(args, schema):
    tables = []
    for p in args.log or []:
        tables.append(tally(schema, io.read_run_log(p, schema)))
    for p in args.model or []:
        tables.append(io.read_model(p, schema))
    return tables


def _read_state(path, coords) -> StateVector:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise io.FormatError(path, e.lineno, f"invalid JSON: {e.msg}") from None
    if isinstance(raw, dict) and "values" in raw and isinstance(raw["values"], list):
        return StateVector(coords, raw["values"])
    if isinstance(raw, list):
        return StateVector(coords, raw)
    if not isinstance(raw, dict):
        raise io.FormatError(path, None, "state must be a label->value map or a list")
    z = np.zeros(coords.dim)
    for label, v in raw.items():
        try:
            z[coords.parse_label(label)] = float(v)
        except (KeyError, OpframeError) as e:
            raise io.FormatError(path, None, f"unknown coordinate {label!r}: {e}") from None
    return StateVector(coords, z)


def _read_meas_freqs(path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise io.FormatError(path, e.lineno, f"invalid JSON: {e.msg}") from None
    return {tuple(n.strip() for n in k.split(",")): float(v) for k, v in raw.items()}


def _state(args, schema, coords):
    if args.state:
        return _read_state(args.state, coords)
    tables = _tables(args, schema)
    if not tables:
        raise UsageError("give --state, --log or --model")
    return extract_state(tables[0], coords)


# -- commands -----------------------------------------------------------------

def cmd_validate(args, out):
    schema = _schema(args)
    tables = _tables(args, schema)
    if not tables:
        raise UsageError("validate needs --log or --model")
    reports = [validate_e1_e2(t, tol=min(args.tol, 1e-12) if t.analytic else 1e-12) for t in tables]
    result = {"tables": [r.to_dict() for r in reports]}
    ok = all(r.passed for r in reports)
    for i, r in enumerate(reports):
        for c in r.checks:
            print(f"table {i} {c.name:30s} {'PASS' if c.passed else 'FAIL'} {', '.join(c.offenders)}")
    if len(tables) >= 2:
        e3 = check_e3(tables, tol=args.e3_tol)
        result["e3"] = e3.to_dict()
        ok = ok and e3.passed
        print(f"E3 max deviation {e3.max_deviation:.3g} (tol {e3.tol:.3g}) "
              f"{'PASS' if e3.passed else 'FAIL'} {e3.worst or ''}")
    out["result"] = result
    return EXIT_OK if ok else EXIT_FAIL


def cmd_state(args, out):
    schema = _schema(args)
    tables = _tables(args, schema)
    if not tables:
        raise UsageError("state needs --log or --model")
    coords = enumerate_coordinates(schema)
    Z = extract_state(tables[0], coords)
    out["result"] = {"Z": Z.as_dict(), "violations": Z.invariant_violations()}
    out["exports"] = [("state.csv", lambda p: io.export_state(p, Z))]
    print("Z = (" + ", ".join(f"{v:.6g}" for v in Z.values) + ")")
    for label, v in Z.as_dict().items():
        print(f"  {label} = {v:.6g}")
    return EXIT_OK


def cmd_reconstruct(args, out):
    schema = _schema(args)
    coords = enumerate_coordinates(schema)
    tables = _tables(args, schema)
    if args.state and args.meas_freqs:
        Z = _read_state(args.state, coords)
        freqs = _read_meas_freqs(args.meas_freqs)
        source = None
    elif tables:
        source = tables[0]
        Z = extract_state(source, coords)
        freqs = {(schema.names[r],): source.p_meas([r]) for r in range(schema.m)}
        for P in coords.possible_sets:
            freqs[tuple(schema.names[r] for r in sorted(P))] = source.p_meas(P)
    else:
        raise UsageError("reconstruct needs --state with --meas-freqs, or --log/--model")
    table = reconstruct_frequencies(Z, freqs, cap=args.cap or 20)
    res = {"model": io.model_to_json(table)["atoms"]}
    roundtrip = float(np.abs(extract_state(table, coords).values - Z.values).max())
    res["roundtrip_max_error"] = roundtrip
    if source is not None:
        keys = set(source.weights) | set(table.weights)
        res["max_atom_deviation"] = max(abs(source.weights.get(k, 0) - table.weights.get(k, 0))
                                        for k in keys)
    out["result"] = res
    out["exports"] = [("model.json", lambda p: io.write_model(p, table))]
    for desc, w in res["model"].items():
        print(f"  {desc:40s} {w:.6g}")
    print(f"round trip max error {roundtrip:.3g}")
    return EXIT_OK


def cmd_polytope(args, out):
    schema = _schema(args)
    coords = enumerate_coordinates(schema)
    poly = h_representation(coords)
    verts = deterministic_vertices(coords, cap=args.cap or 10 ** 6)
    counts = {c: poly.count(c) for c in dict.fromkeys(poly.classes)}
    res = {"ambient_dimension": poly.d, "affine_dimension": affine_dimension(poly),
           "row_counts": counts, "vertex_count": len(verts),
           "vertices": [verts.descriptor(t) for t in range(len(verts))]}
    print(f"ambient dimension {poly.d}, affine dimension {res['affine_dimension']}, "
          f"{len(poly.classes)} rows, {len(verts)} deterministic vertices")
    if args.state or args.log or args.model:
        Z = _state(args, schema, coords)
        m = contains(poly, Z, args.tol)
        res["contains"] = m.inside
        res["violated"] = m.violated
        print(f"contains: {m.inside}")
        if m.inside:
            cert = is_vertex(poly, Z, args.tol)
            res["is_vertex"] = {"is_vertex": cert.is_vertex, "rank": cert.rank, "d": cert.d,
                                "active": cert.active}
            print(f"is_vertex: {cert.is_vertex} (rank {cert.rank} of {cert.d})")
    out["result"] = res
    out["exports"] = [("polytope.csv", lambda p: io.export_polytope(p, poly)),
                  ("vertices.csv", lambda p: io.export_vertices(p, verts))]
    return EXIT_OK


def cmd_decompose(args, out):
    schema = _schema(args)
    coords = enumerate_coordinates(schema)
    Z = _state(args, schema, coords)
    verts = deterministic_vertices(coords, cap=args.cap or 10 ** 6)
    feas = decompose_feasible(verts, Z)
    if isinstance(feas, Infeasible):
        out["result"] = {"feasible": False, "certificate": feas.to_dict(coords)}
        print(f"Infeasible: separating functional value {feas.value:.6g} > vertex bound {feas.bound:.6g}")
        return EXIT_OK
    sec = max_entropy_section(verts, Z)
    dim = preimage_dimension(verts, Z)
    out["result"] = {"feasible": True, "weights": feas.as_dict(), "sigma": sec.weights.as_dict(),
                     "feasibility_residual": sec.feasibility_residual, "kkt_residual": sec.kkt_residual,
                     "entropy": sec.weights.entropy(), "preimage_dimension": dim}
    out["exports"] = [("sigma.csv", lambda p: io.export_weights(p, verts, sec.lam))]
    print(f"feasible; preimage dimension {dim}; entropy {sec.weights.entropy():.6g}")
    for desc, w in sec.weights.as_dict().items():
        if w > 0:
            print(f"  {desc:30s} {w:.6g}")
    return EXIT_OK


def cmd_ontology(args, out):
    schema = _schema(args)
    coords = enumerate_coordinates(schema)
    Z = _state(args, schema, coords)
    rep = classify(Z, cap=args.cap or 16)
    out["result"] = rep.to_dict(coords)
    print(f"{rep.case}: no-signaling {'pass' if rep.no_signaling.passed else 'fail'}, "
          f"classical {'yes' if rep.classical.member else 'no'}")
    if not rep.classical.member:
        c = rep.classical.certificate
        print(f"  certificate value {c.value:.6g} vs classical bound {c.bound:.6g}")
    return EXIT_OK


def _grid(args, default):
    if not args.grid:
        return default
    try:
        return [float(x) for x in args.grid.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--grid must be comma-separated numbers, got {args.grid!r}") from None


def cmd_simulate(args, out):
    schema = _schema(args, coin_schema())
    coords = enumerate_coordinates(schema)
    verts = deterministic_vertices(coords)
    flow = get_flow(args.flow or "coin")
    grid = _grid(args, [0.0, 1.0, 2.0])
    rng = np.random.default_rng(args.seed)
    zh = args.z_h
    if zh is None:
        # 0.8 is a fixed point of the coin flow; start group flows where they move
        zh = 0.7 if flow.kind == "group" else 0.8
    res = {"flow": flow.name, "grid": grid}
    if flow.kind == "group":
        x0 = np.array([zh, 1 - zh, 0.0])
        audit = check_group_law(flow, rng, grid=grid)
        res["group_law"] = audit.to_dict()
        print(f"group law: {'PASS' if audit.passed else 'FAIL'} "
              f"(composition {audit.max_composition:.3g}, inverse {audit.max_inverse:.3g})")
        t = grid[-1]
        conv = check_convexity_preservation(flow, t, [0.7, 0.3, 0], [0.3, 0.7, 0], 0.5)
        res["convexity"] = conv.to_dict()
        print(f"convexity at t={t:g}: residual {conv.residual:.3g}")
    else:
        x0 = OscillatorState(zh, args.direction)
        wit = find_two_futures(flow, rng)
        res["two_futures"] = None if wit is None else {
            "Z": wit.Z, "t": wit.t, "futures": [wit.future_a, wit.future_b],
            "states": [vars(wit.state_a), vars(wit.state_b)]}
        if wit is not None:
            print(f"Z={wit.Z[0]:.4g} has two futures at t={wit.t:.4g}: "
                  f"{wit.future_a[0]:.4g} vs {wit.future_b[0]:.4g}")
    samples = lift_trajectory(flow, x0, grid, verts)
    res["trajectory"] = [{"t": s.t, "Z": s.Z.tolist(), "lambda": None if s.lam is None else s.lam.tolist(),
                          "feasible": s.feasible} for s in samples]
    for s in samples:
        print(f"  t={s.t:g} Z=({', '.join(f'{v:.4f}' for v in s.Z)})")
    out["exports"] = [("trajectory.csv", lambda p: io.export_trajectory(p, coords, verts, samples))]
    out["result"] = res
    if flow.kind == "group" and flow.name == "coin" and not res["group_law"]["passed"]:
        return EXIT_FAIL
    return EXIT_OK


def cmd_qrep(args, out):
    schema = _schema(args)
    coords = enumerate_coordinates(schema)
    verts = deterministic_vertices(coords)
    rep = build_representation(verts, cap=args.cap or 10 ** 6)
    cert = verify_representation(rep, np.random.default_rng(args.seed))
    res = {"manifest": rep.manifest(), "certificate": cert.to_dict()}
    print(f"dimension {rep.dim}; disjoint {cert.disjoint}; covering {cert.covering}; "
          f"max deviation {cert.max_deviation:.3g}")
    if args.state or args.log or args.model:
        Z = _state(args, schema, coords)
        sec = max_entropy_section(verts, Z)
        if isinstance(sec, Infeasible):
            res["state"] = {"feasible": False, "certificate": sec.to_dict(coords)}
            print("state has no decomposition over the deterministic vertices")
        else:
            psi = state_vector(rep, sec.lam)
            obs = {}
            for r, ms in enumerate(schema.measurements):
                if ms.values is not None:
                    o = observable(rep, r)
                    obs[ms.name] = {"expectation": expectation(rep, psi, o), "spectrum": sorted(spectrum(o))}
            res["state"] = {"feasible": True, "amplitudes": {str(k): v for k, v in sorted(psi.amplitudes.items())},
                            "norm": psi.norm(), "observables": obs}
            for name, o in obs.items():
                print(f"  <{name}> = {o['expectation']:.6g}, spectrum {o['spectrum']}")
    out["result"] = res
    out["exports"] = [("manifest.json", lambda p: io.write_json(p, rep.manifest()))]
    if args.dense:
        if rep.dim > DENSE_EXPORT_CAP:
            raise UsageError(f"--dense: dimension {rep.dim} exceeds {DENSE_EXPORT_CAP}")
        out["exports"] += _dense_exports(rep)
    return EXIT_OK if cert.passed else EXIT_FAIL


def _dense_exports(rep):
    schema = rep.schema
    exports = []
    for (r, i), P in sorted(rep.projectors.items()):
        label = schema.label(schema.outcome_id(r, i))
        exports.append((f"projector_{label}.csv", lambda p, P=P: io.export_matrix(p, rep.projector_matrix(P))))
    for r, ms in enumerate(schema.measurements):
        if ms.values is not None:
            o = observable(rep, r)
            exports.append((f"observable_{ms.name}.csv", lambda p, o=o: io.export_matrix(p, o.matrix(rep.dim))))
    return exports


def demo_results(seed: int = 0) -> dict:
    """Numbers reproduced by ``demo``; also used by the tests."""
    coin = coin_schema()
    coords = enumerate_coordinates(coin)
    runs = io.read_run_log(data_path("coin_8_2.csv"), coin)
    Z = extract_state(tally(coin, runs), coords)
    poly = h_representation(coords)
    verts = deterministic_vertices(coords)
    z1, z2 = [0.7, 0.3, 0.0], [0.3, 0.7, 0.0]
    f1, f2, fm = coin_flow(2, z1), coin_flow(2, z2), coin_flow(2, [0.5, 0.5, 0.0])
    rng = np.random.default_rng(seed)
    chsh = enumerate_coordinates(chsh_schema())
    pr = pr_box_state(chsh)
    pr_table = reconstruct_frequencies(pr, chsh_context_freqs())
    report = classify(pr)
    cert = report.classical.certificate
    return {
        "coin_state": Z.values.tolist(),
        "coin_affine_dimension": affine_dimension(poly),
        "coin_vertices": verts.matrix.tolist(),
        "F2(0.7,0.3,0)": f1.tolist(),
        "F2(0.3,0.7,0)": f2.tolist(),
        "F2(0.5,0.5,0)": fm.tolist(),
        "mixture_of_images": (0.5 * f1 + 0.5 * f2).tolist(),
        "coin_group_law": check_group_law(COIN, rng).passed,
        "oscillator_as_map_group_law": check_group_law(FAKE_OSCILLATOR, rng).passed,
        "pr_box": {
            "contains": contains(h_representation(chsh), pr).inside,
            "is_vertex": is_vertex(h_representation(chsh), pr).is_vertex,
            "no_signaling": report.no_signaling.passed,
            "classical": report.classical.member,
            "certificate_value": cert.value, "classical_bound": cert.bound,
            "decomposable": bool(decompose_feasible(deterministic_vertices(chsh), pr)),
            "case": report.case,
            "roundtrip_error": float(np.abs(extract_state(pr_table, chsh).values - pr.values).max()),
        },
    }


def cmd_demo(args, out):
    res = demo_results(args.seed)
    out["result"] = res
    fmt = lambda v: "(" + ", ".join(f"{x:.2f}" for x in v) + ")"
    print("coin state from the 8:2 log      ", fmt(res["coin_state"]))
    print("coin polytope affine dimension   ", res["coin_affine_dimension"])
    print("deterministic vertices           ", ", ".join(fmt(v) for v in res["coin_vertices"]))
    for key in ("F2(0.7,0.3,0)", "F2(0.3,0.7,0)", "F2(0.5,0.5,0)"):
        print(f"{key:33s}", fmt(res[key]), f"[{res[key][0]:.4f}]")
    print("1/2 F2(Z1) + 1/2 F2(Z2)          ", fmt(res["mixture_of_images"]),
          f"[{res['mixture_of_images'][0]:.4f}]")
    print("coin flow group law              ", "PASS" if res["coin_group_law"] else "FAIL")
    print("oscillator as a Z-only map       ", "PASS" if res["oscillator_as_map_group_law"] else "FAIL")
    pr = res["pr_box"]
    print("PR box: contains", pr["contains"], "| vertex", pr["is_vertex"], "| no-signaling", pr["no_signaling"],
          "| classical", pr["classical"], f"| value {pr['certificate_value']:.3g} vs bound {pr['classical_bound']:.3g}",
          "| decomposable", pr["decomposable"], "|", pr["case"])
    return EXIT_OK


COMMANDS = {
    "validate": (cmd_validate, "check positivity, outcome logic and context independence"),
    "state": (cmd_state, "extract the state vector Z"),
    "reconstruct": (cmd_reconstruct, "rebuild atom frequencies from Z and measurement frequencies"),
    "polytope": (cmd_polytope, "H-representation, vertices, membership and vertex test"),
    "decompose": (cmd_decompose, "feasibility, max-entropy weights, preimage dimension"),
    "ontology": (cmd_ontology, "no-signaling and classical-membership classification"),
    "simulate": (cmd_simulate, "run a flow, audit the group law and convexity, lift the trajectory"),
    "qrep": (cmd_qrep, "build and verify the Hilbert-space representation"),
    "demo": (cmd_demo, "reproduce the coin, dynamics and PR-box numbers"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opframe", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (func, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.set_defaults(func=func)
        s.add_argument("--schema", help="schema JSON")
        s.add_argument("--log", action="append", help="run-log CSV (repeatable)")
        s.add_argument("--model", action="append", help="analytic model JSON (repeatable)")
        s.add_argument("--state", help="state JSON: label -> value map")
        s.add_argument("--meas-freqs", dest="meas_freqs", help="measurement-frequency JSON")
        s.add_argument("--out", help="directory for the JSON report and CSV exports")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--tol", type=float, default=DEFAULT_TOL)
        s.add_argument("--e3-tol", dest="e3_tol", type=float, default=None)
        s.add_argument("--flow", help="flow name: coin, oscillator, oscillator-as-map, identity, swap")
        s.add_argument("--grid", help="comma-separated times")
        s.add_argument("--z-h", dest="z_h", type=float, default=None,
                       help="initial z_H for simulate (default 0.7 for group flows, 0.8 otherwise)")
        s.add_argument("--direction", choices=("down", "up"), default="down")
        s.add_argument("--cap", type=int, default=None)
        s.add_argument("--json", action="store_true", help="print the JSON report to stdout")
        s.add_argument("--dense", action="store_true", help="qrep: also export dense projector/observable CSVs")
    return p


def _check_paths(parser, args):
    for key in ("schema", "state", "meas_freqs"):
        v = getattr(args, key)
        if v and not Path(v).exists():
            parser.error(f"--{key.replace('_', '-')}: no such file {v}")
    for key in ("log", "model"):
        for v in getattr(args, key) or []:
            if not Path(v).exists():
                parser.error(f"--{key}: no such file {v}")
    if args.tol <= 0:
        parser.error("--tol must be positive")
    if args.seed < 0 or args.seed >= 2 ** 64:
        parser.error("--seed must fit in 64 unsigned bits")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_paths(parser, args)
    out = {}
    # with --json stdout carries only the report
    quiet = contextlib.redirect_stdout(StringIO()) if args.json else contextlib.nullcontext()
    try:
        with quiet:
            status = args.func(args, out)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"opframe: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as e:
        print(f"opframe: error: {e.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except (OpframeError, ZeroDivisionError) as e:
        print(f"opframe: error: {e}", file=sys.stderr)
        return EXIT_FAIL
    report = {"command": args.command, "version": __version__, "config_hash": config_hash(args),
              "tolerances": tolerances(args), "seed": args.seed, "exit_status": status,
              "result": out.get("result")}
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True, default=io._jsonable))
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        io.write_json(d / f"{args.command}.json", report)
        for name, writer in out.get("exports", []):
            writer(d / name)
    return status


if __name__ == "__main__":
    sys.exit(main())
