"""Barycentric weights over deterministic vertices and the max-entropy section."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .empirical import StateVector
from .errors import DimensionMismatch
from .statespace import VertexSet, numerical_rank

FEAS_TOL = 1e-8
SUPPORT_TOL = 1e-9
NEWTON_GTOL = 1e-10
NEWTON_MAXIT = 200


@dataclass
class SimplexWeights:
    vertices: VertexSet
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.vertices),):
            raise DimensionMismatch(f"{self.weights.shape[0]} weights for {len(self.vertices)} vertices")
        if np.any(self.weights < -1e-12) or abs(self.weights.sum() - 1) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    def entropy(self) -> float:
        return entropy(self.weights)

    def as_dict(self) -> dict[str, float]:
        return {self.vertices.descriptor(t): float(w) for t, w in enumerate(self.weights)}


@dataclass
class Infeasible:
    """No convex combination of vertices reproduces the state.

    ``functional`` separates the state from every vertex: its value on the state
    exceeds ``bound`` = the maximum over vertices.  ``value``/``bound`` are
    rescaled so the vertex range is [-2, 2].
    """

    functional: np.ndarray
    raw_value: float
    raw_bound: float
    raw_low: float
    value: float
    bound: float
    reason: str = "state outside the convex hull of the deterministic vertices"

    def __bool__(self):
        return False

    def to_dict(self, coords=None) -> dict:
        out = {"feasible": False, "reason": self.reason, "value": self.value, "bound": self.bound,
               "raw_value": self.raw_value, "raw_bound": self.raw_bound, "raw_low": self.raw_low}
        if coords is not None:
            out["functional"] = {coords.label(i): float(c)
                                 for i, c in enumerate(self.functional) if abs(c) > 1e-12}
        else:
            out["functional"] = [float(c) for c in self.functional]
        return out


def entropy(lam) -> float:
    lam = np.asarray(lam, dtype=float)
    pos = lam[lam > 0]
    return float(-(pos * np.log(pos)).sum())


def _z(vertices: VertexSet, Z) -> np.ndarray:
    z = np.asarray(getattr(Z, "values", Z), dtype=float)
    if z.shape != (vertices.coords.dim,):
        raise DimensionMismatch(f"state of shape {z.shape}, vertices live in dimension {vertices.coords.dim}")
    return z


def recompose(vertices: VertexSet, lam) -> StateVector:
    w = lam.weights if isinstance(lam, SimplexWeights) else np.asarray(lam, dtype=float)
    return StateVector(vertices.coords, vertices.matrix.T @ w)


def separating_functional(W: np.ndarray, z: np.ndarray):
    """Maximize ``y.z - t`` over ``W y <= t``, ``|y| <= 1``; returns (y, t, gap)."""
    n, d = W.shape
    c = np.concatenate([-z, [1.0]])
    A = np.hstack([W, -np.ones((n, 1))])
    bounds = [(-1.0, 1.0)] * d + [(None, None)]
    res = linprog(c, A_ub=A, b_ub=np.zeros(n), bounds=bounds, method="highs")
    y, t = res.x[:d], res.x[d]
    return y, t, float(y @ z - t)


def make_certificate(W: np.ndarray, z: np.ndarray, y: np.ndarray) -> Infeasible:
    # coordinates that vanish on every vertex and on z carry no information
    y = np.where((W == 0).all(axis=0) & (z == 0), 0.0, y)
    vals = W @ y
    hi, lo = float(vals.max()), float(vals.min())
    v = float(y @ z)
    mid, half = (hi + lo) / 2, (hi - lo) / 2
    scale = 2.0 / half if half > 0 else 1.0
    return Infeasible(y, v, hi, lo, (v - mid) * scale, (hi - mid) * scale)


def decompose_feasible(vertices: VertexSet, Z, tol: float = FEAS_TOL):
    """A feasible weight vector for ``Z``, or :class:`Infeasible` with a certificate."""
    z = _z(vertices, Z)
    W = vertices.matrix
    n = len(vertices)
    A_eq = np.vstack([W.T, np.ones((1, n))])
    b_eq = np.concatenate([z, [1.0]])
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
    if res.status == 0:
        lam = np.clip(res.x, 0, None)
        lam /= lam.sum()
        if np.abs(W.T @ lam - z).max() <= tol:
            return SimplexWeights(vertices, lam)
    y, t, gap = separating_functional(W, z)
    cert = make_certificate(W, z, y)
    if gap <= tol:
        cert.reason = "LP reported no feasible weights within tolerance"
    return cert


def support(vertices: VertexSet, Z, tol: float = SUPPORT_TOL):
    """Vertices that carry positive weight in some decomposition of ``Z``.

    Returns a boolean mask, or :class:`Infeasible`.
    """
    first = decompose_feasible(vertices, Z)
    if not first:
        return first
    z = _z(vertices, Z)
    W = vertices.matrix
    n = len(vertices)
    A_eq = np.vstack([W.T, np.ones((1, n))])
    b_eq = np.concatenate([z, [1.0]])
    found = first.weights > tol
    while not found.all():
        # any decomposition putting mass on the still-unresolved vertices?
        c = np.where(found, 0.0, -1.0)
        res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=[(0, 1)] * n, method="highs")
        if res.status != 0 or -res.fun <= tol:
            break
        found |= res.x > tol
    return found


def preimage_dimension(vertices: VertexSet, Z):
    """Dimension of the set of weight vectors mapping to ``Z`` (or Infeasible)."""
    mask = support(vertices, Z)
    if isinstance(mask, Infeasible):
        return mask
    B = np.vstack([vertices.matrix[mask].T, np.ones((1, int(mask.sum())))])
    return int(mask.sum()) - numerical_rank(B)


@dataclass
class SectionResult:
    weights: SimplexWeights
    support: np.ndarray
    feasibility_residual: float
    kkt_residual: float
    iterations: int
    converged: bool

    @property
    def lam(self) -> np.ndarray:
        return self.weights.weights


def _row_basis(B: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the row space of ``B``."""
    u, s, vt = np.linalg.svd(B, full_matrices=False)
    r = int((s > 1e-8 * s[0]).sum()) if s.size and s[0] > 0 else 0
    return vt[:r], u[:, :r], s[:r]


def _maxent_dual(B: np.ndarray, c: np.ndarray, gtol: float, maxit: int):
    """Minimize ``sum exp(B^T y) - y.c`` by damped Newton; returns (lam, iters, grad norm)."""
    y = np.zeros(B.shape[0])

    def f(y):
        return np.exp(B.T @ y).sum() - y @ c

    fy = f(y)
    gnorm = np.inf
    for it in range(1, maxit + 1):
        lam = np.exp(B.T @ y)
        g = B @ lam - c
        gnorm = float(np.linalg.norm(g))
        if gnorm <= gtol:
            return lam, it - 1, gnorm
        H = (B * lam) @ B.T
        step = np.linalg.solve(H, g)
        alpha = 1.0
        while True:
            y_new = y - alpha * step
            f_new = f(y_new)
            if f_new <= fy or alpha < 1e-12:
                break
            alpha *= 0.5
        y, fy = y_new, f_new
    lam = np.exp(B.T @ y)
    return lam, maxit, float(np.linalg.norm(B @ lam - c))


def max_entropy_section(vertices: VertexSet, Z, gtol: float = NEWTON_GTOL, maxit: int = NEWTON_MAXIT):
    """The maximal-entropy weight vector among all decompositions of ``Z``.

    Vertices that carry no weight in any decomposition are removed first; on
    the remaining support the solution has the exponential-family form and is
    found from the dual.  Returns :class:`SectionResult` or :class:`Infeasible`.
    """
    z = _z(vertices, Z)
    mask = support(vertices, Z)
    if isinstance(mask, Infeasible):
        return mask
    W = vertices.matrix
    idx = np.flatnonzero(mask)
    B_full = np.vstack([np.ones((1, idx.size)), W[idx].T])
    c_full = np.concatenate([[1.0], z])
    rows, U, s = _row_basis(B_full)
    # the constraint B_full lam = c_full restricted to the row space
    c = (U.T @ c_full) / s
    lam_s, iters, gnorm = _maxent_dual(rows, c, gtol, maxit)
    lam = np.zeros(len(vertices))
    lam[idx] = lam_s
    lam /= lam.sum()
    feas = float(np.abs(W.T @ lam - z).max())
    # stationarity: log lam on the support lies in the row space of the constraints
    logl = np.log(lam[idx])
    kkt = float(np.linalg.norm(logl - rows.T @ (rows @ logl)))
    return SectionResult(SimplexWeights(vertices, lam), mask, feas, kkt, iters, gnorm <= gtol)


@dataclass
class ProbeRow:
    t: float
    distance: float | None
    feasible: bool


def section_continuity_probe(vertices: VertexSet, Z, direction, steps=None, t0: float = 0.1,
                             n_steps: int = 3) -> list[ProbeRow]:
    """Max-norm distance between the sections at ``Z`` and ``Z + t*direction``.

    Default step schedule is ``t0, t0/2, ...`` (``n_steps`` values).
    """
    z = _z(vertices, Z)
    delta = np.asarray(direction, dtype=float)
    if steps is None:
        steps = [t0 / 2 ** k for k in range(n_steps)]
    base = max_entropy_section(vertices, z)
    if isinstance(base, Infeasible):
        raise ValueError("probe base point is not decomposable")
    rows = []
    for t in steps:
        out = max_entropy_section(vertices, z + t * delta)
        if isinstance(out, Infeasible):
            rows.append(ProbeRow(float(t), None, False))
        else:
            rows.append(ProbeRow(float(t), float(np.abs(out.lam - base.lam).max()), True))
    return rows
