"""Relative-frequency models built from run logs, and the state vector Z.

A :class:`FrequencyTable` stores the weight of every atom as a pair
``(eps, eta)`` of bitmasks: ``eps`` over outcome ids and ``eta`` over
measurement indices.  Tables tallied from well-formed runs always have
``eta == eta_of(eps)``; analytic tables may violate that on purpose so the
E2 checks have something to find.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CapExceeded, DimensionMismatch, NegativeMass, SchemaError, UnmeasuredContext
from .schema import (CoordinateIndex, MeasurementSchema, atom_of_run, enumerate_coordinates,
                     eta_of, mask_of, set_bits)

NORMALIZATION_TOL = 1e-12
NEGATIVE_MASS_TOL = 1e-9
DEFAULT_MAX_OUTCOMES = 20


@dataclass(frozen=True)
class Run:
    run_id: str
    performed: tuple[str, ...]
    outcomes: tuple[tuple[str, str], ...]


@dataclass
class FrequencyTable:
    schema: MeasurementSchema
    weights: dict[tuple[int, int], float]
    n_runs: int | None = None
    counts: dict[tuple[int, int], int] | None = field(default=None, repr=False)
    _arrays: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def analytic(self) -> bool:
        return self.n_runs is None

    def _cols(self):
        if self._arrays is None:
            keys = list(self.weights)
            eps = np.array([k[0] for k in keys], dtype=np.int64)
            eta = np.array([k[1] for k in keys], dtype=np.int64)
            w = np.array([self.weights[k] for k in keys], dtype=float)
            c = np.array([self.counts[k] for k in keys], dtype=np.int64) if self.counts else None
            self._arrays = (eps, eta, w, c)
        return self._arrays

    def mass(self, outcomes: Iterable[int] = (), meas: Iterable[int] = ()):
        """Unnormalized mass of an event: a run count for tallied tables, else a weight."""
        eps, eta, w, c = self._cols()
        omask = mask_of(outcomes)
        mmask = mask_of(meas)
        sel = ((eps & omask) == omask) & ((eta & mmask) == mmask)
        return int(c[sel].sum()) if c is not None else float(w[sel].sum())

    def total(self) -> float:
        return float(sum(self.weights.values()))

    def _norm(self, mass) -> float:
        return mass / self.n_runs if self.counts else float(mass)

    def p_meas(self, meas: Iterable[int]) -> float:
        """Frequency of the conjunction of the given measurement operations."""
        return self._norm(self.mass((), meas))

    def p_event(self, outcomes: Iterable[int], meas: Iterable[int] = ()) -> float:
        """Frequency of (conjunction of outcomes) AND (conjunction of measurements)."""
        return self._norm(self.mass(outcomes, meas))

    def conditional(self, outcomes: Sequence[int]) -> float:
        """p(outcomes | their measurements performed); exact count ratio for tallied tables."""
        meas = self.schema.meas_of(outcomes)
        denom = self.mass((), meas)
        if denom <= 0:
            raise UnmeasuredContext(self.schema.names[r] for r in sorted(meas))
        return self.mass(outcomes, meas) / denom


def table_from_counts(schema: MeasurementSchema, counts: Mapping[int, int]) -> FrequencyTable:
    n = sum(counts.values())
    if n == 0:
        raise ValueError("empty run log")
    keyed = {(eps, eta_of(schema, eps)): c for eps, c in sorted(counts.items())}
    weights = {k: c / n for k, c in keyed.items()}
    return FrequencyTable(schema, weights, n_runs=n, counts=keyed)


def count_runs(schema: MeasurementSchema, runs: Iterable) -> Counter:
    """Atom counts of a run log; partial counts merge with ``+``."""
    counts = Counter()
    for run in runs:
        if isinstance(run, Run):
            counts[atom_of_run(schema, run.performed, run.outcomes)] += 1
        else:
            performed, outcomes = run
            counts[atom_of_run(schema, performed, outcomes)] += 1
    return counts


def tally(schema: MeasurementSchema, runs: Iterable) -> FrequencyTable:
    """Relative frequencies of the atoms hit by a run log.

    ``runs`` yields :class:`Run` objects or ``(performed, outcomes)`` pairs.
    """
    return table_from_counts(schema, count_runs(schema, runs))


def sample_runs(table: FrequencyTable, n: int, rng: np.random.Generator) -> list[Run]:
    """Draw ``n`` runs i.i.d. from the atom weights of ``table``."""
    schema = table.schema
    keys = list(table.weights)
    p = np.array([table.weights[k] for k in keys], dtype=float)
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    draws = rng.choice(len(keys), size=n, p=p)
    runs = []
    for j, idx in enumerate(draws):
        eps, eta = keys[idx]
        performed = tuple(schema.names[r] for r in set_bits(eta))
        outcomes = tuple(schema.label(k).split("=", 1) for k in set_bits(eps))
        runs.append(Run(str(j), performed, tuple(tuple(o) for o in outcomes)))
    return runs


# -- validation -------------------------------------------------------------

@dataclass
class Check:
    name: str
    rule: str
    passed: bool
    offenders: list[str] = field(default_factory=list)


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": [{"name": c.name, "rule": c.rule, "passed": c.passed,
                            "offenders": c.offenders} for c in self.checks]}


def _meas_label(schema, meas) -> str:
    return "{" + ",".join(schema.names[r] for r in sorted(meas)) + "}"


def validate_e1_e2(table: FrequencyTable, tol: float = NORMALIZATION_TOL) -> ValidationReport:
    """Check positivity of performable contexts (E1) and the outcome logic (E2).

    Failures are report entries; nothing here raises.
    """
    schema = table.schema
    coords = enumerate_coordinates(schema)
    checks = []

    bad = [schema.names[r] for r in range(schema.m) if table.p_meas([r]) <= 0]
    checks.append(Check("E1.single", "p(a_r) > 0 for every measurement", not bad, bad))

    bad = [_meas_label(schema, P) for P in coords.possible_sets if table.p_meas(P) <= 0]
    checks.append(Check("E1.context", "p(a_r1 & ... & a_rL) > 0 for every possible set", not bad, bad))

    minimal = [s for s in schema.impossible if not any(t < s for t in schema.impossible)]
    bad = [_meas_label(schema, s) for s in sorted(minimal, key=sorted) if table.p_meas(s) > tol]
    checks.append(Check("E1.impossible", "p(a_r1 & ... & a_rL) = 0 for impossible sets", not bad, bad))

    bad = []
    for k in range(schema.M):
        r, _ = schema.outcome_of(k)
        if abs(table.p_event([k]) - table.p_event([k], [r])) > tol:
            bad.append(schema.label(k))
    checks.append(Check("E2.outcome_needs_measurement", "p(a_r & X) = p(X)", not bad, bad))

    bad = []
    for r in range(schema.m):
        for k1, k2 in itertools.combinations(schema.outcome_ids(r), 2):
            if table.p_event([k1, k2]) > tol:
                bad.append(schema.label(k1) + "&" + schema.label(k2))
    checks.append(Check("E2.exclusive_outcomes", "p(X_i & X_j) = 0 for outcomes of one measurement",
                        not bad, bad))

    bad = []
    for r in range(schema.m):
        pa = table.p_meas([r])
        if pa <= 0:
            continue
        total = sum(table.p_event([k], [r]) for k in schema.outcome_ids(r)) / pa
        if abs(total - 1.0) > tol:
            bad.append(f"{schema.names[r]} (sum={total:.12g})")
    checks.append(Check("E2.single_normalization", "sum_k p(X_k | a_r) = 1", not bad, bad))

    bad = []
    for P in coords.possible_sets:
        pa = table.p_meas(P)
        if pa <= 0:
            continue
        total = sum(table.p_event(coords.keys[c], P) for c in coords.context_members(P)) / pa
        if abs(total - 1.0) > tol:
            bad.append(f"{_meas_label(schema, P)} (sum={total:.12g})")
    checks.append(Check("E2.context_normalization", "sum p(X_k1 & ... & X_kL | a_r1 & ... & a_rL) = 1",
                        not bad, bad))
    return ValidationReport(checks)


# -- state vector -------------------------------------------------------------

@dataclass
class StateVector:
    coords: CoordinateIndex
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.coords.dim,):
            raise DimensionMismatch(f"state has {self.values.shape} entries, layout needs {self.coords.dim}")

    def __getitem__(self, key) -> float:
        if isinstance(key, str):
            return float(self.values[self.coords.parse_label(key)])
        if isinstance(key, (int, np.integer)):
            return float(self.values[key])
        return float(self.values[self.coords.position(key)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.coords.labels(), map(float, self.values)))

    def invariant_violations(self, tol: float = 1e-9) -> list[str]:
        """Normalization and monotonicity defects (empty list for a valid state)."""
        schema, coords, z = self.coords.schema, self.coords, self.values
        out = []
        for r in range(schema.m):
            s = z[list(schema.outcome_ids(r))].sum()
            if abs(s - 1) > tol:
                out.append(f"normalization {schema.names[r]}: {s:.12g}")
        for P in coords.possible_sets:
            s = z[coords.context_members(P)].sum()
            if abs(s - 1) > tol:
                out.append(f"normalization {_meas_label(schema, P)}: {s:.12g}")
        for pos in coords.free_positions():
            key = coords.keys[pos]
            for sub in itertools.combinations(key, len(key) - 1):
                if z[pos] > z[coords.position(sub)] + tol:
                    out.append(f"monotone {coords.label(pos)} > {coords.label(coords.position(sub))}")
        for pos in coords.zero_positions():
            if z[pos] != 0:
                out.append(f"zero-forced {coords.label(pos)} = {z[pos]}")
        return out


def estimate_state(table: FrequencyTable, coords: CoordinateIndex | None = None) -> np.ndarray:
    """Conditional frequencies per coordinate, NaN where the context is unmeasured."""
    coords = coords or enumerate_coordinates(table.schema)
    out = np.zeros(coords.dim)
    zero = set(coords.zero_positions())
    for pos, key in enumerate(coords.keys):
        if pos in zero:
            continue
        meas = table.schema.meas_of(key)
        denom = table.mass((), meas)
        out[pos] = table.mass(key, meas) / denom if denom > 0 else math.nan
    return out


def extract_state(table: FrequencyTable, coords: CoordinateIndex | None = None) -> StateVector:
    coords = coords or enumerate_coordinates(table.schema)
    schema = table.schema
    for meas in [frozenset([r]) for r in range(schema.m)] + list(coords.possible_sets):
        if table.mass((), meas) <= 0:
            raise UnmeasuredContext(schema.names[r] for r in sorted(meas))
    return StateVector(coords, estimate_state(table, coords))


@dataclass
class E3Report:
    labels: list[str]
    deviation: np.ndarray
    tol: float
    worst: str | None
    max_deviation: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol

    def to_dict(self) -> dict:
        return {"passed": self.passed, "tol": self.tol, "max_deviation": self.max_deviation,
                "worst": self.worst,
                "deviation": {l: (None if math.isnan(d) else float(d))
                              for l, d in zip(self.labels, self.deviation)}}


def check_e3(tables: Sequence[FrequencyTable], tol: float | None = None) -> E3Report:
    """Compare the state estimates of several tables over one schema.

    Each table contributes the coordinates whose context it measured.  The
    default tolerance is ``3/sqrt(N_min)`` for tallied tables and 1e-9 when all
    tables are analytic.
    """
    if len(tables) < 2:
        raise ValueError("check_e3 needs at least two tables")
    schema = tables[0].schema
    for t in tables[1:]:
        if t.schema != schema:
            raise SchemaError("tables are over different schemas")
    coords = enumerate_coordinates(schema)
    est = np.array([estimate_state(t, coords) for t in tables])
    if tol is None:
        sizes = [t.n_runs for t in tables if t.n_runs is not None]
        tol = 3.0 / math.sqrt(min(sizes)) if sizes else 1e-9
    with np.errstate(invalid="ignore"):
        hi = np.nanmax(np.where(np.isnan(est), -np.inf, est), axis=0)
        lo = np.nanmin(np.where(np.isnan(est), np.inf, est), axis=0)
    seen = (~np.isnan(est)).sum(axis=0)
    dev = np.where(seen >= 2, hi - lo, np.nan)
    if np.all(np.isnan(dev)):
        return E3Report(coords.labels(), dev, tol, None, 0.0)
    worst = int(np.nanargmax(dev))
    return E3Report(coords.labels(), dev, tol, coords.label(worst), float(dev[worst]))


# -- reconstruction -----------------------------------------------------------

def _meas_key(schema: MeasurementSchema, key) -> frozenset[int]:
    if isinstance(key, str):
        key = [key]
    return frozenset(r if isinstance(r, int) else schema.index(r) for r in key)


def normalize_meas_freqs(schema: MeasurementSchema, meas_freqs: Mapping) -> dict[frozenset[int], float]:
    """Key measurement frequencies by index sets and check admissibility."""
    coords = enumerate_coordinates(schema)
    freqs = {_meas_key(schema, k): float(v) for k, v in meas_freqs.items()}
    for r in range(schema.m):
        p = freqs.get(frozenset([r]))
        if p is None or not 0 < p <= 1:
            raise ValueError(f"p({schema.names[r]}) must be given in (0, 1]")
    for P in coords.possible_sets:
        p = freqs.get(P)
        if p is None or not 0 < p <= 1:
            raise ValueError(f"p({_meas_label(schema, P)}) must be given in (0, 1]")
    for s in schema.impossible:
        if freqs.get(s, 0.0) != 0.0:
            raise ValueError(f"impossible set {_meas_label(schema, s)} must have frequency 0")
    for P, p in freqs.items():
        for r in P:
            sub = P - {r}
            if sub and freqs.get(sub, 1.0) < p - NEGATIVE_MASS_TOL:
                raise ValueError(f"measurement frequencies not monotone at {_meas_label(schema, P)}")
    return freqs


def superset_sums(Z: StateVector, meas_freqs: Mapping, cap: int = DEFAULT_MAX_OUTCOMES) -> np.ndarray:
    """g(C) = frequency of the outcome conjunction C, for every C as a bitmask."""
    coords = Z.coords
    schema = coords.schema
    M = schema.M
    if M > cap:
        raise CapExceeded(f"M = {M} outcomes exceeds cap {cap}")
    freqs = normalize_meas_freqs(schema, meas_freqs)
    owner = [schema.outcome_of(k)[0] for k in range(M)]
    g = np.zeros(1 << M)
    g[0] = 1.0
    for mask in range(1, 1 << M):
        ids = set_bits(mask)
        meas = frozenset(owner[k] for k in ids)
        if len(meas) < len(ids) or meas in schema.impossible:
            continue
        g[mask] = Z.values[coords.position(ids)] * freqs[meas]
    return g


def mobius_superset(g: np.ndarray) -> np.ndarray:
    """Invert ``g(C) = sum_{e >= C} d(e)`` over the subset lattice, O(M 2^M)."""
    d = np.array(g, dtype=float)
    n = d.size
    M = n.bit_length() - 1
    for k in range(M):
        view = d.reshape(-1, 2, 1 << k)
        view[:, 0, :] -= view[:, 1, :]
    return d


def zeta_superset(d: np.ndarray) -> np.ndarray:
    """Forward transform matching :func:`mobius_superset`."""
    g = np.array(d, dtype=float)
    M = g.size.bit_length() - 1
    for k in range(M):
        view = g.reshape(-1, 2, 1 << k)
        view[:, 0, :] += view[:, 1, :]
    return g


def reconstruct_frequencies(Z: StateVector, meas_freqs: Mapping,
                            cap: int = DEFAULT_MAX_OUTCOMES) -> FrequencyTable:
    """Unique atom weights reproducing Z under the given measurement frequencies.

    ``meas_freqs`` maps measurement names / index sets (singles and every
    possible set) to their frequencies.  Raises :class:`NegativeMass` when the
    solution has an atom below -1e-9.
    """
    schema = Z.coords.schema
    delta = mobius_superset(superset_sums(Z, meas_freqs, cap))
    worst = int(np.argmin(delta))
    if delta[worst] < -NEGATIVE_MASS_TOL:
        atom = "&".join(schema.label(k) for k in set_bits(worst)) or "(nothing)"
        raise NegativeMass(atom, float(delta[worst]))
    weights = {}
    for eps in np.flatnonzero(delta > 0):
        eps = int(eps)
        weights[(eps, eta_of(schema, eps))] = float(delta[eps])
    return FrequencyTable(schema, weights, n_runs=None)
