"""Exact real Hilbert-space representation built from the deterministic vertices.

The space is a direct sum of one block per vertex; each block has the basis of
outcome tuples ``(j_1, ..., j_m)``.  Every projector is a coordinate subspace,
so it is stored as a frozenset of global basis indices and lattice operations
are set operations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .decompose import Infeasible, SimplexWeights, max_entropy_section, recompose
from .dynamics import Flow, evolve
from .errors import CapExceeded, SchemaError
from .statespace import VertexSet

DEFAULT_DIM_CAP = 10 ** 6


@dataclass(frozen=True)
class QuantumRep:
    vertices: VertexSet
    block: int  # basis tuples per vertex block
    strides: tuple[int, ...]
    i0: tuple[int, ...]
    projectors: dict  # (r, i) -> frozenset of global indices

    @property
    def schema(self):
        return self.vertices.coords.schema

    @property
    def dim(self) -> int:
        return len(self.vertices) * self.block

    def basis_index(self, theta: int, tup) -> int:
        return theta * self.block + sum(j * s for j, s in zip(tup, self.strides))

    def basis_tuple(self, index: int) -> tuple[int, tuple[int, ...]]:
        theta, local = divmod(index, self.block)
        tup = []
        for s in self.strides:
            j, local = divmod(local, s)
            tup.append(j)
        return theta, tuple(tup)

    def projector(self, k: int) -> frozenset:
        """Projector of the outcome with global id ``k``."""
        return self.projectors[self.schema.outcome_of(k)]

    def event(self, outcomes) -> frozenset:
        """Meet of the outcome projectors: set intersection."""
        outcomes = list(outcomes)
        out = self.projector(outcomes[0])
        for k in outcomes[1:]:
            out = out & self.projector(k)
        return out

    def complement(self, P: frozenset) -> frozenset:
        return frozenset(range(self.dim)) - P

    def projector_matrix(self, P: frozenset) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        idx = sorted(P)
        m[idx, idx] = 1.0
        return m

    def manifest(self) -> dict:
        schema = self.schema
        return {
            "dimension": self.dim,
            "block_size": self.block,
            "blocks": {str(t): self.vertices.descriptor(t) for t in range(len(self.vertices))},
            "i0": {schema.names[r]: schema.measurements[r].outcomes[i] for r, i in enumerate(self.i0)},
            "projectors": {schema.label(schema.outcome_id(r, i)): sorted(P)
                           for (r, i), P in sorted(self.projectors.items())},
        }


def build_representation(vertices: VertexSet, i0=None, absorb_residual: bool = True,
                         cap: int = DEFAULT_DIM_CAP) -> QuantumRep:
    """Block-diagonal representation with one block per deterministic vertex.

    Inside block theta the raw subspace of outcome i of measurement r is
    the set of tuples with j_r = i when the vertex picks i, else empty.  The
    tuples not covered by any raw subspace of r are added to outcome ``i0[r]``
    (default: the last outcome).  ``absorb_residual=False`` skips that step
    and exists only to exercise the covering check.
    """
    schema = vertices.coords.schema
    ns = [ms.n for ms in schema.measurements]
    block = math.prod(ns)
    if len(vertices) * block > cap:
        raise CapExceeded(f"representation dimension {len(vertices) * block} exceeds cap {cap}")
    if i0 is None:
        i0 = tuple(n - 1 for n in ns)
    i0 = tuple(i0)
    if len(i0) != schema.m or any(not 0 <= i < n for i, n in zip(i0, ns)):
        raise SchemaError("i0 needs one valid outcome index per measurement")
    strides = tuple(math.prod(ns[r + 1:]) for r in range(schema.m))
    tuples = list(itertools.product(*(range(n) for n in ns)))
    local = [[[j for j, tup in enumerate(tuples) if tup[r] == i] for i in range(ns[r])]
             for r in range(schema.m)]
    sets = {(r, i): set() for r in range(schema.m) for i in range(ns[r])}
    for theta, assign in enumerate(vertices.assignments):
        base = theta * block
        for r, chosen in enumerate(assign):
            sets[(r, chosen)].update(base + j for j in local[r][chosen])
            if absorb_residual:
                rest = (base + j for i in range(ns[r]) if i != chosen for j in local[r][i])
                sets[(r, i0[r])].update(rest)
    projectors = {key: frozenset(v) for key, v in sets.items()}
    return QuantumRep(vertices, block, strides, i0, projectors)


@dataclass
class AmplitudeVector:
    dim: int
    amplitudes: dict[int, float]

    def norm(self) -> float:
        return math.sqrt(sum(a * a for a in self.amplitudes.values()))

    def dense(self) -> np.ndarray:
        v = np.zeros(self.dim)
        for i, a in self.amplitudes.items():
            v[i] = a
        return v

    def weight_on(self, P: frozenset) -> float:
        return sum(a * a for i, a in self.amplitudes.items() if i in P)


def _weights(rep: QuantumRep, lam) -> np.ndarray:
    w = lam.weights if isinstance(lam, SimplexWeights) else np.asarray(lam, dtype=float)
    if w.shape != (len(rep.vertices),):
        raise ValueError(f"{w.shape[0]} weights for {len(rep.vertices)} blocks")
    return w


def state_vector(rep: QuantumRep, lam) -> AmplitudeVector:
    """Amplitude sqrt(lam_theta) on the vertex's own tuple in block theta."""
    w = _weights(rep, lam)
    amps = {}
    for theta, assign in enumerate(rep.vertices.assignments):
        if w[theta] > 0:
            amps[rep.basis_index(theta, assign)] = math.sqrt(w[theta])
    return AmplitudeVector(rep.dim, amps)


o_map = state_vector


def weights_of(psi: AmplitudeVector, rep: QuantumRep) -> np.ndarray:
    """Inverse of :func:`o_map` on its image."""
    lam = np.zeros(len(rep.vertices))
    for i, a in psi.amplitudes.items():
        lam[i // rep.block] += a * a
    return lam


def _outcome_ids(rep: QuantumRep, C) -> list[int]:
    coords = rep.vertices.coords
    if isinstance(C, str):
        return list(coords.keys[coords.parse_label(C)])
    if isinstance(C, (int, np.integer)):
        return [int(C)]
    C = list(C)
    if not coords.has(C):
        raise KeyError(f"no coordinate for outcome set {C}")
    return C


def trace_probability(rep: QuantumRep, psi: AmplitudeVector, C) -> float:
    return psi.weight_on(rep.event(_outcome_ids(rep, C)))


@dataclass
class RepresentationCertificate:
    disjoint: bool
    covering: bool
    overlaps: list[str]
    uncovered: dict[str, int]
    max_deviation: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.disjoint and self.covering and self.max_deviation <= 1e-12

    def to_dict(self) -> dict:
        return {"passed": self.passed, "disjoint": self.disjoint, "covering": self.covering,
                "overlaps": self.overlaps, "uncovered": self.uncovered,
                "max_deviation": self.max_deviation, "trials": self.trials}


def verify_representation(rep: QuantumRep, rng: np.random.Generator | None = None,
                          trials: int = 100) -> RepresentationCertificate:
    schema = rep.schema
    full = frozenset(range(rep.dim))
    overlaps, uncovered = [], {}
    for r in range(schema.m):
        n = schema.measurements[r].n
        for i, j in itertools.combinations(range(n), 2):
            if rep.projectors[(r, i)] & rep.projectors[(r, j)]:
                overlaps.append(f"{schema.label(schema.outcome_id(r, i))}/{schema.label(schema.outcome_id(r, j))}")
        union = frozenset().union(*(rep.projectors[(r, i)] for i in range(n)))
        if union != full:
            uncovered[schema.names[r]] = len(full - union)
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    coords = rep.vertices.coords
    for _ in range(trials):
        lam = rng.dirichlet(np.ones(len(rep.vertices)))
        psi = state_vector(rep, lam)
        z = recompose(rep.vertices, lam).values
        for pos, key in enumerate(coords.keys):
            worst = max(worst, abs(trace_probability(rep, psi, key) - z[pos]))
    return RepresentationCertificate(not overlaps, not uncovered, overlaps, uncovered, worst, trials)


@dataclass(frozen=True)
class Observable:
    r: int
    labels: tuple[float, ...]
    projectors: tuple[frozenset, ...]

    def matrix(self, dim: int) -> np.ndarray:
        diag = np.zeros(dim)
        for a, P in zip(self.labels, self.projectors):
            diag[sorted(P)] = a
        return np.diag(diag)


def observable(rep: QuantumRep, r: int) -> Observable:
    ms = rep.schema.measurements[r]
    if ms.values is None:
        raise SchemaError(f"measurement {ms.name!r} has no real outcome labels")
    return Observable(r, tuple(ms.values), tuple(rep.projectors[(r, i)] for i in range(ms.n)))


def expectation(rep: QuantumRep, psi: AmplitudeVector, obs: Observable) -> float:
    return sum(a * psi.weight_on(P) for a, P in zip(obs.labels, obs.projectors))


def spectrum(obs: Observable) -> set[float]:
    """Eigenvalues: the labels whose eigenspace is nonzero."""
    return {a for a, P in zip(obs.labels, obs.projectors) if P}


def relabel(obs: Observable, f) -> Observable:
    new = tuple(float(f(a)) for a in obs.labels)
    if len(set(new)) != len(new):
        raise ValueError("relabeling map is not injective on the outcome labels")
    return Observable(obs.r, new, obs.projectors)


@dataclass
class DynamicsSample:
    t: float
    psi: AmplitudeVector | None
    norm_residual: float | None


@dataclass
class DynamicsPath:
    samples: list[DynamicsSample]
    max_norm_residual: float
    max_group_residual: float | None

    def to_dict(self) -> dict:
        return {"max_norm_residual": self.max_norm_residual,
                "max_group_residual": self.max_group_residual,
                "samples": [{"t": s.t, "feasible": s.psi is not None, "norm_residual": s.norm_residual,
                             "amplitudes": None if s.psi is None else
                             {str(k): v for k, v in sorted(s.psi.amplitudes.items())}}
                            for s in self.samples]}


def _lift(rep: QuantumRep, z):
    sec = max_entropy_section(rep.vertices, z)
    if isinstance(sec, Infeasible):
        return None
    return o_map(rep, sec.lam)


def represent_dynamics(rep: QuantumRep, flow: Flow, x0, grid) -> DynamicsPath:
    """Psi(t) = O(sigma(Z(t))) on the grid, with norm and group-law residuals.

    For group flows, G_s(Psi_t) = O(sigma(F_s(D(O^-1(Psi_t))))) is compared
    with Psi_{t+s} for every grid pair.
    """
    grid = [float(t) for t in grid]
    samples = []
    for t in grid:
        psi = _lift(rep, evolve(flow, x0, t))
        samples.append(DynamicsSample(t, psi, None if psi is None else abs(psi.norm() - 1.0)))
    norms = [s.norm_residual for s in samples if s.norm_residual is not None]
    group = None
    if flow.kind == "group":
        group = 0.0
        for ti, si in itertools.product(range(len(grid)), repeat=2):
            a = samples[ti].psi
            if a is None:
                continue
            direct = _lift(rep, flow(grid[ti] + grid[si], x0))
            z_t = recompose(rep.vertices, weights_of(a, rep)).values
            via = _lift(rep, flow(grid[si], z_t))
            if direct is None or via is None:
                continue
            group = max(group, float(np.abs(direct.dense() - via.dense()).max()))
    return DynamicsPath(samples, max(norms) if norms else 0.0, group)
