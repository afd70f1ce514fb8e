"""The polytope of possible states: H-representation, membership, vertices."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import CapExceeded, DimensionMismatch, OutsidePolytope
from .schema import CoordinateIndex, MeasurementSchema, enumerate_coordinates

ROW_TOL = 1e-9
RANK_RTOL = 1e-8
DEFAULT_VERTEX_CAP = 10 ** 6

# row classes, in emission order
NONNEG, UPPER, MONOTONE, NORM_SINGLE, NORM_CONJ, ZERO = (
    "nonneg", "upper", "monotone", "norm_single", "norm_conj", "zero")
EQUALITY_CLASSES = (NORM_SINGLE, NORM_CONJ, ZERO)


@dataclass
class Polytope:
    """Rows ``normals @ z <= offsets`` (inequalities) or ``== offsets`` (equalities)."""

    coords: CoordinateIndex
    normals: np.ndarray
    offsets: np.ndarray
    classes: list[str]
    ids: list[str]

    @property
    def d(self) -> int:
        return self.coords.dim

    @property
    def is_eq(self) -> np.ndarray:
        return np.array([c in EQUALITY_CLASSES for c in self.classes])

    def count(self, cls: str) -> int:
        return sum(c == cls for c in self.classes)

    def residuals(self, z) -> np.ndarray:
        """Row violation amounts: positive means violated."""
        r = self.normals @ np.asarray(z, dtype=float) - self.offsets
        eq = self.is_eq
        r[eq] = np.abs(r[eq])
        return r


def h_representation(schema_or_coords) -> Polytope:
    coords = _coords(schema_or_coords)
    schema = coords.schema
    d = coords.dim
    rows, offs, classes, ids = [], [], [], []

    def add(vec, b, cls, ident):
        rows.append(vec)
        offs.append(b)
        classes.append(cls)
        ids.append(f"{cls}[{ident}]")

    def unit(*pairs):
        v = np.zeros(d)
        for pos, val in pairs:
            v[pos] += val
        return v

    for pos in range(d):
        add(unit((pos, -1.0)), 0.0, NONNEG, coords.label(pos))
    for k in coords.singles:
        add(unit((k, 1.0)), 1.0, UPPER, coords.label(k))
    for pos in range(len(coords.singles), d):
        key = coords.keys[pos]
        for sub in itertools.combinations(key, len(key) - 1):
            sp = coords.position(sub)
            add(unit((pos, 1.0), (sp, -1.0)), 0.0, MONOTONE,
                f"{coords.label(pos)}<={coords.label(sp)}")
    for r in range(schema.m):
        add(unit(*[(k, 1.0) for k in schema.outcome_ids(r)]), 1.0, NORM_SINGLE, schema.names[r])
    for P in coords.possible_sets:
        add(unit(*[(c, 1.0) for c in coords.context_members(P)]), 1.0, NORM_CONJ,
            ",".join(schema.names[r] for r in sorted(P)))
    for pos in coords.zero_positions():
        add(unit((pos, 1.0)), 0.0, ZERO, coords.label(pos))
    return Polytope(coords, np.array(rows), np.array(offs), classes, ids)


def _coords(obj) -> CoordinateIndex:
    if isinstance(obj, CoordinateIndex):
        return obj
    if isinstance(obj, MeasurementSchema):
        return enumerate_coordinates(obj)
    if isinstance(obj, Polytope):
        return obj.coords
    raise TypeError(f"expected a schema or coordinate index, got {type(obj).__name__}")


def _vec(poly: Polytope, z) -> np.ndarray:
    z = getattr(z, "values", z)
    z = np.asarray(z, dtype=float)
    if z.shape != (poly.d,):
        raise DimensionMismatch(f"vector of shape {z.shape} against ambient dimension {poly.d}")
    return z


@dataclass
class Membership:
    inside: bool
    violated: list[tuple[str, float]] = field(default_factory=list)

    def __bool__(self):
        return self.inside


def contains(poly: Polytope, z, tol: float = ROW_TOL) -> Membership:
    res = poly.residuals(_vec(poly, z))
    bad = np.flatnonzero(res > tol)
    return Membership(len(bad) == 0, [(poly.ids[i], float(res[i])) for i in bad])


def numerical_rank(rows: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if rows.size == 0:
        return 0
    s = np.linalg.svd(rows, compute_uv=False)
    if s[0] == 0:
        return 0
    return int((s > rtol * s[0]).sum())


@dataclass
class VertexCertificate:
    is_vertex: bool
    rank: int
    d: int
    active: list[str]

    def __bool__(self):
        return self.is_vertex


def is_vertex(poly: Polytope, f, tol: float = ROW_TOL) -> VertexCertificate:
    """Vertex test: the normals of the active rows must span the ambient space."""
    f = _vec(poly, f)
    member = contains(poly, f, tol)
    if not member:
        raise OutsidePolytope(f"point violates {len(member.violated)} rows, e.g. {member.violated[0][0]}")
    slack = poly.offsets - poly.normals @ f
    active = poly.is_eq | (np.abs(slack) <= tol)
    rank = numerical_rank(poly.normals[active])
    return VertexCertificate(rank == poly.d, rank, poly.d, [poly.ids[i] for i in np.flatnonzero(active)])


def implicit_equalities(poly: Polytope, tol: float = ROW_TOL) -> np.ndarray:
    """Boolean mask of inequality rows that hold with equality on the whole polytope."""
    eq = poly.is_eq
    A_ub, b_ub = poly.normals[~eq], poly.offsets[~eq]
    A_eq, b_eq = poly.normals[eq], poly.offsets[eq]
    bounds = [(None, None)] * poly.d
    implicit = np.zeros(len(poly.classes), dtype=bool)
    ineq_idx = np.flatnonzero(~eq)
    for j, i in enumerate(ineq_idx):
        # maximize slack b_i - a_i z  <=>  minimize a_i z
        res = linprog(poly.normals[i], A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=bounds, method="highs")
        if res.status == 2:
            raise OutsidePolytope("polytope is empty")
        if res.status == 0 and poly.offsets[i] - res.fun <= tol:
            implicit[i] = True
    return implicit


def affine_dimension(poly: Polytope) -> int:
    rows = poly.normals[poly.is_eq | implicit_equalities(poly)]
    return poly.d - numerical_rank(rows)


@dataclass
class VertexSet:
    coords: CoordinateIndex
    assignments: list[tuple[int, ...]]
    matrix: np.ndarray  # |Theta| x d, binary

    def __len__(self):
        return len(self.assignments)

    def __iter__(self):
        return iter(self.matrix)

    def descriptor(self, theta: int) -> str:
        schema = self.coords.schema
        return ";".join(f"{ms.name}={ms.outcomes[i]}"
                        for ms, i in zip(schema.measurements, self.assignments[theta]))

    def index_of(self, assignment) -> int:
        return self.assignments.index(tuple(assignment))


def vertex_of(coords: CoordinateIndex, assignment) -> np.ndarray:
    """Deterministic vertex of one assignment: chosen singles and consistent free conjunctions are 1."""
    schema = coords.schema
    chosen = {schema.outcome_id(r, i) for r, i in enumerate(assignment)}
    w = np.zeros(coords.dim)
    for k in chosen:
        w[k] = 1.0
    for pos in coords.free_positions():
        if chosen.issuperset(coords.keys[pos]):
            w[pos] = 1.0
    return w


def deterministic_vertices(schema_or_coords, cap: int = DEFAULT_VERTEX_CAP) -> VertexSet:
    coords = _coords(schema_or_coords)
    schema = coords.schema
    if schema.vertex_count > cap:
        raise CapExceeded(f"{schema.vertex_count} deterministic vertices exceed cap {cap}")
    assignments = list(itertools.product(*(range(ms.n) for ms in schema.measurements)))
    W = np.array([vertex_of(coords, a) for a in assignments])
    return VertexSet(coords, assignments, W)
