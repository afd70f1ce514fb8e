"""File formats: schema JSON, run-log CSV, analytic model JSON, CSV exports."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .empirical import FrequencyTable, Run
from .errors import FormatError, MalformedRun, SchemaError
from .schema import MeasurementSchema, atom_of_run, build_schema, mask_of, set_bits

RUN_LOG_HEADER = ["run_id", "performed", "outcomes"]


def stable_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def sha256_of(obj) -> str:
    return hashlib.sha256(stable_json(obj).encode()).hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def load_schema(path) -> MeasurementSchema:
    path = Path(path)
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(path, e.lineno, f"invalid JSON: {e.msg}") from None
    try:
        return build_schema(config)
    except (SchemaError, KeyError, TypeError) as e:
        raise FormatError(path, None, f"invalid schema: {e}") from None


def _split_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(";") if p.strip()]


def parse_run_row(row: dict) -> Run:
    performed = tuple(_split_list(row["performed"] or ""))
    outcomes = []
    for part in _split_list(row["outcomes"] or ""):
        meas, sep, outcome = part.partition("=")
        if not sep:
            raise MalformedRun(f"outcome entry {part!r} is not of the form measurement=outcome")
        outcomes.append((meas.strip(), outcome.strip()))
    return Run(row["run_id"], performed, tuple(outcomes))


def read_run_log(path, schema: MeasurementSchema) -> list[Run]:
    """Read and check a run log; every problem is reported with its line number."""
    path = Path(path)
    runs = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != RUN_LOG_HEADER:
            raise FormatError(path, 1, f"header must be {','.join(RUN_LOG_HEADER)}")
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise FormatError(path, line, "expected exactly 3 fields")
            try:
                run = parse_run_row(row)
                atom_of_run(schema, run.performed, run.outcomes)
            except (MalformedRun, SchemaError) as e:
                raise FormatError(path, line, str(e)) from None
            runs.append(run)
    if not runs:
        raise FormatError(path, None, "run log has no runs")
    return runs


def write_run_log(path, runs) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_LOG_HEADER)
        for run in runs:
            w.writerow([run.run_id, ";".join(run.performed),
                        ";".join(f"{m}={o}" for m, o in run.outcomes)])


def atom_descriptor(schema: MeasurementSchema, eps: int, eta: int) -> str:
    performed = ";".join(schema.names[r] for r in set_bits(eta))
    outcomes = ";".join(schema.label(k) for k in set_bits(eps))
    return f"{performed}|{outcomes}"


def parse_atom_descriptor(schema: MeasurementSchema, text: str) -> tuple[int, int]:
    """``"A1;B1|A1=0;B1=1"`` -> (eps, eta).  No consistency checks: analytic
    tables may describe atoms that break the outcome logic on purpose."""
    performed, sep, outcomes = text.partition("|")
    if not sep:
        raise SchemaError(f"atom descriptor {text!r} lacks '|'")
    eta = mask_of(schema.index(n) for n in _split_list(performed))
    ids = []
    for part in _split_list(outcomes):
        meas, _, outcome = part.partition("=")
        ids.append(schema.lookup_outcome(meas.strip(), outcome.strip()))
    return mask_of(ids), eta


def read_model(path, schema: MeasurementSchema) -> FrequencyTable:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(path, e.lineno, f"invalid JSON: {e.msg}") from None
    atoms = raw.get("atoms", raw) if isinstance(raw, dict) else None
    if not isinstance(atoms, dict):
        raise FormatError(path, None, "model must map atom descriptors to weights")
    weights = {}
    for desc, w in atoms.items():
        try:
            key = parse_atom_descriptor(schema, desc)
        except SchemaError as e:
            raise FormatError(path, None, f"atom {desc!r}: {e}") from None
        w = float(w)
        if w < 0:
            raise FormatError(path, None, f"atom {desc!r} has negative weight")
        if w > 0:
            weights[key] = weights.get(key, 0.0) + w
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-12:
        raise FormatError(path, None, f"atom weights sum to {total!r}, not 1")
    return FrequencyTable(schema, weights, n_runs=None)


def model_to_json(table: FrequencyTable) -> dict:
    return {"atoms": {atom_descriptor(table.schema, eps, eta): w
                      for (eps, eta), w in sorted(table.weights.items())}}


def write_model(path, table: FrequencyTable) -> None:
    write_json(path, model_to_json(table))


def table_from_descriptors(schema: MeasurementSchema, atoms: dict[str, float]) -> FrequencyTable:
    weights = {}
    for desc, w in atoms.items():
        key = parse_atom_descriptor(schema, desc)
        weights[key] = weights.get(key, 0.0) + float(w)
    return FrequencyTable(schema, weights, n_runs=None)


# -- CSV exports ----------------------------------------------------------------

def write_rows(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def export_polytope(path, poly) -> None:
    header = ["id", "kind", "b", *poly.coords.labels()]
    kinds = ["equality" if e else "inequality" for e in poly.is_eq]
    write_rows(path, header, ([i, k, b, *row] for i, k, b, row in
                              zip(poly.ids, kinds, poly.offsets, poly.normals)))


def export_vertices(path, vertices) -> None:
    header = ["vertex", *vertices.coords.labels()]
    write_rows(path, header, ([vertices.descriptor(t), *map(int, row)]
                              for t, row in enumerate(vertices.matrix)))


def export_weights(path, vertices, lam) -> None:
    write_rows(path, ["vertex", "weight"],
               ([vertices.descriptor(t), float(w)] for t, w in enumerate(lam)))


def export_state(path, Z) -> None:
    write_rows(path, ["coordinate", "value"], zip(Z.coords.labels(), Z.values))


def export_trajectory(path, coords, vertices, samples) -> None:
    header = ["t", *coords.labels(), *(f"lambda[{vertices.descriptor(t)}]" for t in range(len(vertices)))]
    rows = []
    for s in samples:
        lam = s.lam if s.lam is not None else [float("nan")] * len(vertices)
        rows.append([s.t, *s.Z, *lam])
    write_rows(path, header, rows)


def export_matrix(path, matrix) -> None:
    """Dense matrix as headerless CSV, one row per line."""
    write_rows(path, None, np.asarray(matrix))
