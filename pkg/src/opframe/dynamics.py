"""Time evolution of states and audits of the group law and of convexity."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .decompose import Infeasible, max_entropy_section
from .errors import DomainError

GROUP_TOL = 1e-9
COIN_HI, COIN_LO = 0.8, 0.2
SPAN = 0.6  # COIN_HI - COIN_LO, written out to keep the phase boundary exact
OSC_PERIOD = 2 * SPAN
DOWN, UP = "down", "up"


@dataclass
class Flow:
    """A named time-evolution rule.

    ``kind == "group"``: ``rule(t, z) -> z``.
    ``kind == "trajectory"``: ``rule(t, state) -> (z, state)`` where ``state``
    carries whatever Z alone does not determine.
    """

    name: str
    kind: str
    rule: Callable
    sample: Callable | None = None  # rng -> point of the domain (z or internal state)
    observe: Callable | None = None  # internal state -> z, trajectory kind only

    def __call__(self, t, x):
        return self.rule(t, x)


def _arr(Z) -> np.ndarray:
    return np.asarray(getattr(Z, "values", Z), dtype=float)


# -- coin ---------------------------------------------------------------------

def coin_flow(t: float, Z) -> np.ndarray:
    """Logistic drift of the coin state from the Heads-biased end toward the Tails-biased end."""
    z = _arr(Z)
    zh = float(z[0])
    if not COIN_LO - 1e-12 <= zh <= COIN_HI + 1e-12:
        raise DomainError(f"z_H = {zh} outside [{COIN_LO}, {COIN_HI}]")
    u = (COIN_HI - zh) / SPAN
    if u <= 0.0:
        fu = 0.0
    elif u >= 1.0:
        fu = 1.0
    else:
        fu = u / (u + (1 - u) * math.exp(-t))
    fh = COIN_HI - SPAN * fu
    return np.array([fh, 1.0 - fh, 0.0])


def _coin_sample(rng):
    zh = rng.uniform(COIN_LO, COIN_HI)
    return np.array([zh, 1.0 - zh, 0.0])


COIN = Flow("coin", "group", coin_flow, _coin_sample)


# -- oscillator ---------------------------------------------------------------

@dataclass(frozen=True)
class OscillatorState:
    z_h: float
    direction: str = DOWN

    def __post_init__(self):
        if self.direction not in (DOWN, UP):
            raise DomainError(f"direction must be {DOWN!r} or {UP!r}")
        if not COIN_LO - 1e-12 <= self.z_h <= COIN_HI + 1e-12:
            raise DomainError(f"z_h = {self.z_h} outside [{COIN_LO}, {COIN_HI}]")


def _phase(state: OscillatorState) -> float:
    if state.direction == DOWN:
        return COIN_HI - state.z_h
    return SPAN + (state.z_h - COIN_LO)


def _from_phase(s: float) -> OscillatorState:
    s = s % OSC_PERIOD
    if s < SPAN:
        return OscillatorState(COIN_HI - s, DOWN)
    return OscillatorState(COIN_LO + (s - SPAN), UP)


def coin_vector(zh: float) -> np.ndarray:
    return np.array([zh, 1.0 - zh, 0.0])


def oscillator_flow(t: float, state: OscillatorState):
    """Triangle wave between the two biased coin states at unit speed in z_H."""
    new = _from_phase(_phase(state) + t)
    return coin_vector(new.z_h), new


def _osc_sample(rng):
    return OscillatorState(rng.uniform(COIN_LO, COIN_HI), DOWN if rng.random() < 0.5 else UP)


OSCILLATOR = Flow("oscillator", "trajectory", oscillator_flow, _osc_sample,
                  observe=lambda st: coin_vector(st.z_h))


def oscillator_as_map(t: float, Z) -> np.ndarray:
    """The oscillator forced into a Z-only map by assuming every state moves down."""
    z, _ = oscillator_flow(t, OscillatorState(float(_arr(Z)[0]), DOWN))
    return z


FAKE_OSCILLATOR = Flow("oscillator-as-map", "group", oscillator_as_map, _coin_sample)
IDENTITY = Flow("identity", "group", lambda t, Z: _arr(Z).copy(), _coin_sample)


def swap_flow(t: float, Z) -> np.ndarray:
    """Exchange the two coin outcomes; linear, used as a convexity control."""
    z = _arr(Z)
    return np.array([z[1], z[0], z[2]]) if int(round(t)) % 2 else z.copy()


SWAP = Flow("swap", "group", swap_flow, _coin_sample)


def relaxation_flow(center) -> Flow:
    """Affine contraction toward ``center``: Z(t) = c + exp(-t) (Z - c)."""
    c = _arr(center)

    def rule(t, Z):
        return c + math.exp(-t) * (_arr(Z) - c)

    return Flow("relaxation", "group", rule)


FLOWS = {f.name: f for f in (COIN, OSCILLATOR, FAKE_OSCILLATOR, IDENTITY, SWAP)}


def get_flow(name: str) -> Flow:
    try:
        return FLOWS[name]
    except KeyError:
        raise KeyError(f"unknown flow {name!r}; choose from {sorted(FLOWS)}") from None


# -- audits -------------------------------------------------------------------

@dataclass
class GroupLawReport:
    flow: str
    samples: int
    max_composition: float
    max_inverse: float
    tol: float
    worst: dict | None = None

    @property
    def passed(self) -> bool:
        return self.max_composition <= self.tol and self.max_inverse <= self.tol

    def to_dict(self) -> dict:
        return {"flow": self.flow, "passed": self.passed, "samples": self.samples,
                "max_composition": self.max_composition, "max_inverse": self.max_inverse,
                "tol": self.tol, "worst": self.worst}


def check_group_law(flow: Flow, rng: np.random.Generator, n: int = 50, tmax: float = 10.0,
                    grid=(), points=None, tol: float = GROUP_TOL) -> GroupLawReport:
    """Audit F_{t+s} = F_s o F_t and F_{-t} o F_t = id on sampled (t, s, Z).

    Samples are the user ``grid`` times paired with themselves plus ``n``
    uniform draws from [-tmax, tmax].
    """
    if flow.kind != "group":
        raise ValueError(f"flow {flow.name!r} is not a group-kind map")
    grid = [float(g) for g in grid]
    pairs = [(t, s) for t in grid for s in grid]
    pairs += [tuple(rng.uniform(-tmax, tmax, size=2)) for _ in range(n)]
    if points is None:
        points = [flow.sample(rng) for _ in pairs]
    comp = inv = 0.0
    worst = None
    for (t, s), z in zip(pairs, points):
        z = _arr(z)
        ft = flow(t, z)
        e1 = float(np.abs(flow(t + s, z) - flow(s, ft)).max())
        e2 = float(np.abs(flow(-t, ft) - z).max())
        if worst is None or max(e1, e2) > max(comp, inv):
            worst = {"t": float(t), "s": float(s), "Z": z.tolist(), "composition": e1, "inverse": e2}
        comp, inv = max(comp, e1), max(inv, e2)
    return GroupLawReport(flow.name, len(pairs), comp, inv, tol, worst)


@dataclass
class TwoFutures:
    """Two internal states with the same Z whose futures differ."""

    Z: list[float]
    t: float
    state_a: object
    state_b: object
    future_a: list[float]
    future_b: list[float]

    @property
    def gap(self) -> float:
        return float(np.abs(np.subtract(self.future_a, self.future_b)).max())


def find_two_futures(flow: Flow, rng: np.random.Generator, n: int = 50, t=None,
                     tol: float = GROUP_TOL):
    """Search for a Z that is not a Cauchy datum of a trajectory-kind flow.

    For each sampled internal state, look for another internal state with the
    same Z (the reversed direction for the oscillator, later points of the
    trajectory otherwise) whose image at some probe time differs.  Returns
    :class:`TwoFutures` or None.
    """
    if flow.kind != "trajectory":
        raise ValueError("only trajectory-kind flows carry extra internal state")
    states = [flow.sample(rng) for _ in range(n)]
    ts = [t] if t is not None else list(rng.uniform(0.05, OSC_PERIOD, size=4))
    for st in states:
        z0 = flow.observe(st)
        for other in _same_z_states(flow, st, rng):
            if np.abs(flow.observe(other) - z0).max() > tol or other == st:
                continue
            for tt in ts:
                fa, _ = flow(tt, st)
                fb, _ = flow(tt, other)
                if np.abs(fa - fb).max() > tol:
                    return TwoFutures(z0.tolist(), float(tt), st, other, fa.tolist(), fb.tolist())
    return None


def _same_z_states(flow: Flow, state, rng, probes: int = 256):
    if isinstance(state, OscillatorState):
        yield OscillatorState(state.z_h, UP if state.direction == DOWN else DOWN)
        return
    # generic fallback: walk the trajectory and keep states that revisit Z
    z0 = flow.observe(state)
    for t in np.linspace(0.01, 10, probes):
        z, st = flow(float(t), state)
        if np.abs(z - z0).max() <= 1e-9:
            yield st


@dataclass
class ConvexityReport:
    t: float
    alpha: float
    image_of_mixture: list[float]
    mixture_of_images: list[float]
    residual: float
    tol: float

    @property
    def preserved(self) -> bool:
        return self.residual <= self.tol

    def to_dict(self) -> dict:
        return {"t": self.t, "alpha": self.alpha, "image_of_mixture": self.image_of_mixture,
                "mixture_of_images": self.mixture_of_images, "residual": self.residual,
                "preserved": self.preserved}


def check_convexity_preservation(flow: Flow, t: float, Z1, Z2, alpha: float,
                                 tol: float = GROUP_TOL) -> ConvexityReport:
    z1, z2 = _arr(Z1), _arr(Z2)
    image_of_mix = flow(t, alpha * z1 + (1 - alpha) * z2)
    mix_of_images = alpha * flow(t, z1) + (1 - alpha) * flow(t, z2)
    res = float(np.abs(image_of_mix - mix_of_images).max())
    return ConvexityReport(float(t), float(alpha), image_of_mix.tolist(), mix_of_images.tolist(), res, tol)


@dataclass
class LiftSample:
    t: float
    Z: np.ndarray
    lam: np.ndarray | None
    residual: float | None
    feasible: bool


def evolve(flow: Flow, x0, t: float) -> np.ndarray:
    if flow.kind == "group":
        return flow(t, x0)
    z, _ = flow(t, x0)
    return z


def lift_trajectory(flow: Flow, x0, grid, vertices) -> list[LiftSample]:
    """Sample Z(t) on ``grid`` and attach the max-entropy weights of each sample."""
    out = []
    for t in grid:
        z = evolve(flow, x0, float(t))
        sec = max_entropy_section(vertices, z)
        if isinstance(sec, Infeasible):
            out.append(LiftSample(float(t), z, None, None, False))
        else:
            out.append(LiftSample(float(t), z, sec.lam, sec.feasibility_residual, True))
    return out
