"""Ready-made schemas and states used by the demo, the CLI and the tests."""
from __future__ import annotations

import itertools

import numpy as np

from .empirical import StateVector
from .schema import CoordinateIndex, MeasurementSchema, build_schema, enumerate_coordinates

COIN_CONFIG = {"measurements": [{"name": "toss", "outcomes": ["H", "T"], "values": [1, 0]}]}

CHSH_CONFIG = {
    "measurements": [
        {"name": n, "outcomes": ["0", "1"], "values": [1, -1]} for n in ("A1", "A2", "B1", "B2")
    ],
    "impossible": [["A1", "A2"], ["B1", "B2"]],
}


def coin_schema() -> MeasurementSchema:
    return build_schema(COIN_CONFIG)


def chsh_schema() -> MeasurementSchema:
    return build_schema(CHSH_CONFIG)


def grid_schema(ns, impossible=(), values=True) -> MeasurementSchema:
    """Schema with measurements ``M1..Mm`` having ``ns[r]`` outcomes named 0..n-1."""
    ms = []
    for r, n in enumerate(ns):
        entry = {"name": f"M{r + 1}", "outcomes": [str(i) for i in range(n)]}
        if values:
            entry["values"] = [float(i) for i in range(n)]
        ms.append(entry)
    return build_schema({"measurements": ms,
                         "impossible": [[f"M{r + 1}" for r in group] for group in impossible]})


def state_from_labels(coords: CoordinateIndex, values: dict[str, float]) -> StateVector:
    """State with the listed coordinates set and every other coordinate 0."""
    z = np.zeros(coords.dim)
    for label, v in values.items():
        z[coords.parse_label(label)] = v
    return StateVector(coords, z)


def pr_box_state(coords: CoordinateIndex | None = None) -> StateVector:
    """PR box: uniform marginals, A2/B2 anti-correlated, all other pairs correlated."""
    coords = coords or enumerate_coordinates(chsh_schema())
    values = {}
    for a, b in itertools.product(("A1", "A2"), ("B1", "B2")):
        anti = a == "A2" and b == "B2"
        for x, y in itertools.product("01", repeat=2):
            values[f"{a}={x}&{b}={y}"] = 0.5 if (x != y) == anti else 0.0
    for name in ("A1", "A2", "B1", "B2"):
        values[f"{name}=0"] = values[f"{name}=1"] = 0.5
    return state_from_labels(coords, values)


def chsh_context_freqs() -> dict[tuple[str, ...], float]:
    """Each of the four allowed pair contexts performed in a quarter of the runs."""
    freqs = {(n,): 0.5 for n in ("A1", "A2", "B1", "B2")}
    for a, b in itertools.product(("A1", "A2"), ("B1", "B2")):
        freqs[(a, b)] = 0.25
    return freqs


def pair_state(pairs, singles=(0.5, 0.5, 0.5, 0.5)) -> StateVector:
    """Two binary measurements with the given singles and the four cross pairs (00,01,10,11)."""
    coords = enumerate_coordinates(grid_schema((2, 2)))
    s = dict(zip(("M1=0", "M1=1", "M2=0", "M2=1"), singles))
    p = dict(zip(("M1=0&M2=0", "M1=0&M2=1", "M1=1&M2=0", "M1=1&M2=1"), pairs))
    return state_from_labels(coords, {**s, **p})


def marginal_mismatch_state() -> StateVector:
    return pair_state((0.4, 0.2, 0.1, 0.3))


def product_state() -> StateVector:
    return pair_state((0.25, 0.25, 0.25, 0.25))
