"""Measurement setups and the combinatorial index sets derived from them.

Outcomes are addressed by a global integer id ``k`` in ``range(M)``; ids run
through the measurements in order and, inside a measurement, through its
outcomes in order.  The same order fixes the bit layout of an atom index
``eps``: bit ``k`` is set iff outcome ``k`` occurred in the run.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import MalformedRun, SchemaError


@dataclass(frozen=True)
class Measurement:
    name: str
    outcomes: tuple[str, ...]
    values: tuple[float, ...] | None = None

    @property
    def n(self) -> int:
        return len(self.outcomes)


@dataclass(frozen=True)
class MeasurementSchema:
    measurements: tuple[Measurement, ...]
    impossible: frozenset[frozenset[int]]
    offsets: tuple[int, ...] = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.measurements)

    @property
    def M(self) -> int:
        return self.offsets[-1] + self.measurements[-1].n

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(ms.name for ms in self.measurements)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown measurement {name!r}") from None

    def outcome_id(self, r: int, i: int) -> int:
        return self.offsets[r] + i

    def outcome_of(self, k: int) -> tuple[int, int]:
        """Inverse of :meth:`outcome_id`: global id -> (measurement, outcome)."""
        for r in range(self.m - 1, -1, -1):
            if k >= self.offsets[r]:
                return r, k - self.offsets[r]
        raise IndexError(k)

    def outcome_ids(self, r: int) -> range:
        return range(self.offsets[r], self.offsets[r] + self.measurements[r].n)

    def lookup_outcome(self, meas: str, outcome: str) -> int:
        r = self.index(meas)
        try:
            i = self.measurements[r].outcomes.index(outcome)
        except ValueError:
            raise SchemaError(f"measurement {meas!r} has no outcome {outcome!r}") from None
        return self.outcome_id(r, i)

    def label(self, k: int) -> str:
        r, i = self.outcome_of(k)
        return f"{self.measurements[r].name}={self.measurements[r].outcomes[i]}"

    def is_impossible(self, meas_set: Iterable[int]) -> bool:
        return frozenset(meas_set) in self.impossible

    def meas_of(self, outcomes: Iterable[int]) -> frozenset[int]:
        return frozenset(self.outcome_of(k)[0] for k in outcomes)

    @property
    def vertex_count(self) -> int:
        count = 1
        for ms in self.measurements:
            count *= ms.n
        return count


def _upward_closure(seeds: Iterable[frozenset[int]], m: int) -> frozenset[frozenset[int]]:
    seeds = list(seeds)
    closed = set()
    everything = range(m)
    for seed in seeds:
        rest = [r for r in everything if r not in seed]
        for extra in range(len(rest) + 1):
            for add in itertools.combinations(rest, extra):
                closed.add(seed | frozenset(add))
    return frozenset(closed)


def build_schema(config: Mapping) -> MeasurementSchema:
    """Build a schema from a config mapping (the parsed schema JSON).

    ``config["measurements"]`` is a list of ``{name, outcomes, values?}`` and
    ``config["impossible"]`` (optional) a list of lists of measurement names.
    The impossible family is stored upward-closed.
    """
    raw = config.get("measurements")
    if not raw:
        raise SchemaError("schema needs at least one measurement")
    measurements = []
    seen = set()
    for entry in raw:
        name = str(entry["name"])
        if name in seen:
            raise SchemaError(f"duplicate measurement name {name!r}")
        seen.add(name)
        outcomes = tuple(str(o) for o in entry["outcomes"])
        if len(outcomes) < 1:
            raise SchemaError(f"measurement {name!r} needs at least one outcome")
        if len(set(outcomes)) != len(outcomes):
            raise SchemaError(f"duplicate outcome name in measurement {name!r}")
        values = entry.get("values")
        if values is not None:
            values = tuple(float(v) for v in values)
            if len(values) != len(outcomes):
                raise SchemaError(f"measurement {name!r}: {len(values)} labels for {len(outcomes)} outcomes")
            if len(set(values)) != len(values):
                raise SchemaError(f"measurement {name!r}: outcome labels must be pairwise distinct")
        measurements.append(Measurement(name, outcomes, values))

    names = [ms.name for ms in measurements]
    seeds = []
    for group in config.get("impossible", []) or []:
        idx = set()
        for name in group:
            if name not in names:
                raise SchemaError(f"impossible set references unknown measurement {name!r}")
            idx.add(names.index(name))
        if len(idx) < 2:
            raise SchemaError(f"impossible set {sorted(group)} has fewer than 2 measurements; "
                              "single measurements are always performable")
        seeds.append(frozenset(idx))

    offsets = tuple(itertools.accumulate([0] + [ms.n for ms in measurements[:-1]]))
    return MeasurementSchema(tuple(measurements), _upward_closure(seeds, len(measurements)), offsets)


def schema_to_config(schema: MeasurementSchema) -> dict:
    """Inverse of :func:`build_schema`; impossible sets are emitted closed."""
    out = []
    for ms in schema.measurements:
        entry = {"name": ms.name, "outcomes": list(ms.outcomes)}
        if ms.values is not None:
            entry["values"] = list(ms.values)
        out.append(entry)
    impossible = sorted(sorted(schema.names[r] for r in s) for s in schema.impossible)
    return {"measurements": out, "impossible": impossible}


@dataclass(frozen=True)
class Conjunction:
    outcomes: tuple[int, ...]
    meas: frozenset[int]
    zero_forced: bool


@dataclass(frozen=True)
class CoordinateIndex:
    """Coordinate layout of state vectors: singles first, then conjunctions."""

    schema: MeasurementSchema
    singles: tuple[int, ...]
    conjunctions: tuple[Conjunction, ...]
    possible_sets: tuple[frozenset[int], ...]
    _pos: dict = field(repr=False, compare=False, hash=False)

    @property
    def dim(self) -> int:
        return len(self.singles) + len(self.conjunctions)

    @cached_property
    def keys(self) -> list[tuple[int, ...]]:
        return [(k,) for k in self.singles] + [c.outcomes for c in self.conjunctions]

    def position(self, key: Iterable[int]) -> int:
        """Coordinate position of an outcome set (KeyError if it has none)."""
        return self._pos[tuple(sorted(key))]

    def has(self, key: Iterable[int]) -> bool:
        return tuple(sorted(key)) in self._pos

    def label(self, pos: int) -> str:
        return "&".join(self.schema.label(k) for k in self.keys[pos])

    def labels(self) -> list[str]:
        return [self.label(p) for p in range(self.dim)]

    def parse_label(self, text: str) -> int:
        ids = []
        for part in text.split("&"):
            meas, _, outcome = part.partition("=")
            ids.append(self.schema.lookup_outcome(meas.strip(), outcome.strip()))
        return self.position(ids)

    def free_positions(self) -> list[int]:
        base = len(self.singles)
        return [base + j for j, c in enumerate(self.conjunctions) if not c.zero_forced]

    def zero_positions(self) -> list[int]:
        base = len(self.singles)
        return [base + j for j, c in enumerate(self.conjunctions) if c.zero_forced]

    def context_members(self, meas_set: frozenset[int]) -> list[int]:
        """Free coordinates selecting one outcome from every measurement of ``meas_set``."""
        if len(meas_set) == 1:
            (r,) = meas_set
            return [self.position([k]) for k in self.schema.outcome_ids(r)]
        members = []
        for combo in itertools.product(*(self.schema.outcome_ids(r) for r in sorted(meas_set))):
            members.append(self.position(combo))
        return members


def enumerate_coordinates(schema: MeasurementSchema) -> CoordinateIndex:
    """All singles and every size>=2 outcome set whose measurements are not impossible.

    Conjunctions are ordered by size, then lexicographically by outcome ids.
    A conjunction holding two outcomes of one measurement is zero-forced.
    """
    M = schema.M
    singles = tuple(range(M))
    owner = [schema.outcome_of(k)[0] for k in range(M)]
    conjunctions = []
    for size in range(2, M + 1):
        for combo in itertools.combinations(range(M), size):
            meas = frozenset(owner[k] for k in combo)
            if len(meas) >= 2 and meas in schema.impossible:
                continue
            conjunctions.append(Conjunction(combo, meas, zero_forced=len(meas) < size))
    possible = []
    for size in range(2, schema.m + 1):
        for combo in itertools.combinations(range(schema.m), size):
            fs = frozenset(combo)
            if fs not in schema.impossible:
                possible.append(fs)
    pos = {(k,): k for k in singles}
    for j, c in enumerate(conjunctions):
        pos[c.outcomes] = M + j
    return CoordinateIndex(schema, singles, tuple(conjunctions), tuple(possible), pos)


def _as_index(schema: MeasurementSchema, r) -> int:
    return r if isinstance(r, int) else schema.index(r)


def atom_of_run(schema: MeasurementSchema, performed: Iterable, outcomes) -> int:
    """Atom index ``eps`` (an int bitmask over global outcome ids) of one run.

    ``performed`` holds measurement names or indices; ``outcomes`` is either a
    mapping measurement -> outcome name or an iterable of such pairs.
    """
    done = [_as_index(schema, r) for r in performed]
    if len(set(done)) != len(done):
        raise MalformedRun("measurement listed twice in one run")
    done_set = frozenset(done)
    if len(done_set) >= 2 and done_set in schema.impossible:
        names = sorted(schema.names[r] for r in done_set)
        raise MalformedRun(f"jointly impossible measurements performed together: {names}")
    pairs = outcomes.items() if isinstance(outcomes, Mapping) else outcomes
    eps = 0
    got = set()
    for meas, outcome in pairs:
        r = _as_index(schema, meas)
        name = schema.names[r]
        if r not in done_set:
            raise MalformedRun(f"outcome recorded for {name!r} which was not performed")
        if r in got:
            raise MalformedRun(f"two outcomes recorded for {name!r}")
        got.add(r)
        if isinstance(outcome, int) and not isinstance(outcome, bool):
            i = outcome
            if not 0 <= i < schema.measurements[r].n:
                raise MalformedRun(f"outcome index {i} out of range for {name!r}")
        else:
            try:
                i = schema.measurements[r].outcomes.index(str(outcome))
            except ValueError:
                raise MalformedRun(f"{name!r} has no outcome {outcome!r}") from None
        eps |= 1 << schema.outcome_id(r, i)
    missing = done_set - got
    if missing:
        raise MalformedRun("performed measurement without an outcome: "
                           + ", ".join(sorted(schema.names[r] for r in missing)))
    return eps


def eta_of(schema: MeasurementSchema, eps: int) -> int:
    """Performed-measurement bitmask implied by an outcome bitmask."""
    eta = 0
    for r in range(schema.m):
        for k in schema.outcome_ids(r):
            if eps >> k & 1:
                eta |= 1 << r
                break
    return eta


def eps_bits(schema: MeasurementSchema, eps: int) -> tuple[int, ...]:
    return tuple(eps >> k & 1 for k in range(schema.M))


def set_bits(mask: int) -> list[int]:
    out = []
    k = 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return out


def mask_of(ids: Iterable[int]) -> int:
    mask = 0
    for k in ids:
        mask |= 1 << k
    return mask


def outcome_sequence(schema: MeasurementSchema, assignment: Sequence[int]) -> tuple[int, ...]:
    """Global outcome ids chosen by a one-outcome-per-measurement assignment."""
    return tuple(schema.outcome_id(r, i) for r, i in enumerate(assignment))
