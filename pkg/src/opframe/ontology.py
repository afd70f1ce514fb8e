"""Ontological classification of states: contextual, no-signaling, classical."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .decompose import Infeasible, make_certificate, separating_functional
from .errors import CapExceeded
from .schema import CoordinateIndex

NS_TOL = 1e-9
LP_TOL = 1e-8
DEFAULT_OUTCOME_CAP = 16

CASE1, CASE2, CASE3 = "Case1", "Case2", "Case3"


def _split(Z):
    return Z.coords, np.asarray(Z.values, dtype=float)


@dataclass
class NoSignalingReport:
    passed: bool
    violations: list[dict] = field(default_factory=list)
    max_residual: float = 0.0

    def to_dict(self) -> dict:
        return {"passed": self.passed, "max_residual": self.max_residual, "violations": self.violations}


def check_no_signaling(Z, tol: float = NS_TOL) -> NoSignalingReport:
    """Marginal consistency: summing a context's extra measurements out recovers the smaller context."""
    coords, z = _split(Z)
    schema = coords.schema
    contexts = [frozenset([r]) for r in range(schema.m)] + list(coords.possible_sets)
    violations = []
    worst = 0.0
    for pos in [*coords.singles, *coords.free_positions()]:
        key = coords.keys[pos]
        T = schema.meas_of(key)
        for T2 in contexts:
            if not T2 > T:
                continue
            extra = sorted(T2 - T)
            total = 0.0
            for choice in itertools.product(*(schema.outcome_ids(r) for r in extra)):
                total += z[coords.position(key + choice)]
            res = abs(total - z[pos])
            worst = max(worst, res)
            if res > tol:
                violations.append({
                    "coordinate": coords.label(pos),
                    "context": ",".join(schema.names[r] for r in sorted(T2)),
                    "marginal": total, "value": float(z[pos]), "residual": res})
    return NoSignalingReport(not violations, violations, worst)


def truth_assignments(schema):
    """All one-outcome-per-measurement assignments, as tuples of outcome indices."""
    return list(itertools.product(*(range(ms.n) for ms in schema.measurements)))


def event_matrix(coords: CoordinateIndex, assignments) -> np.ndarray:
    """Row per coordinate, column per assignment: does the assignment make the event true."""
    schema = coords.schema
    A = np.zeros((coords.dim, len(assignments)))
    for j, a in enumerate(assignments):
        true_ids = {schema.outcome_id(r, i) for r, i in enumerate(a)}
        for pos, key in enumerate(coords.keys):
            A[pos, j] = float(true_ids.issuperset(key))
    return A


@dataclass
class MembershipReport:
    member: bool
    witness: dict[tuple[int, ...], float] | None = None
    certificate: Infeasible | None = None
    residual: float | None = None

    def witness_labels(self, schema) -> dict[str, float]:
        if not self.witness:
            return {}
        return {";".join(f"{ms.name}={ms.outcomes[i]}" for ms, i in zip(schema.measurements, a)): w
                for a, w in self.witness.items()}


def classical_membership(Z, cap: int = DEFAULT_OUTCOME_CAP, tol: float = LP_TOL) -> MembershipReport:
    """Is ``Z`` the marginal of one distribution over truth assignments?

    Assignments putting two outcomes of one measurement on are excluded up
    front, so the LP has one column per consistent assignment.
    """
    coords, z = _split(Z)
    schema = coords.schema
    if schema.M > cap:
        raise CapExceeded(f"M = {schema.M} outcomes exceeds cap {cap}")
    assignments = truth_assignments(schema)
    A = event_matrix(coords, assignments)
    n = len(assignments)
    res = linprog(np.zeros(n), A_eq=np.vstack([A, np.ones((1, n))]), b_eq=np.append(z, 1.0),
                  bounds=[(0, None)] * n, method="highs")
    if res.status == 0:
        q = np.clip(res.x, 0, None)
        q /= q.sum()
        resid = float(np.abs(A @ q - z).max())
        if resid <= tol:
            witness = {a: float(w) for a, w in zip(assignments, q) if w > 1e-12}
            return MembershipReport(True, witness, None, resid)
    y, _, _ = separating_functional(A.T, z)
    return MembershipReport(False, None, make_certificate(A.T, z, y))


@dataclass
class OntologyReport:
    case: str
    no_signaling: NoSignalingReport
    classical: MembershipReport

    def to_dict(self, coords=None) -> dict:
        schema = coords.schema if coords is not None else None
        cl = {"member": self.classical.member}
        if self.classical.member:
            cl["witness"] = self.classical.witness_labels(schema) if schema else \
                {str(k): v for k, v in self.classical.witness.items()}
            cl["residual"] = self.classical.residual
        else:
            cl["certificate"] = self.classical.certificate.to_dict(coords)
        return {"case": self.case, "no_signaling": self.no_signaling.to_dict(), "classical": cl}


def classify(Z, cap: int = DEFAULT_OUTCOME_CAP) -> OntologyReport:
    ns = check_no_signaling(Z)
    cl = classical_membership(Z, cap)
    if cl.member:
        case = CASE3
    elif ns.passed:
        case = CASE2
    else:
        case = CASE1
    return OntologyReport(case, ns, cl)
