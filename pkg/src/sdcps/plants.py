"""LTI plant models, state estimation, tiered feedback laws, and node mobility."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DimensionMismatch, MissingNeighborEstimate,
                     NotObservable, UncoveredPlant)


@dataclass(frozen=True)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    process_noise_std: float = 0.0
    measurement_noise_std: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        D = np.atleast_2d(np.asarray(self.D, dtype=np.float64))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch("A must be square")
        if B.shape[0] != n:
            raise DimensionMismatch("B rows must match state dimension")
        if C.shape[1] != n:
            raise DimensionMismatch("C columns must match state dimension")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch("D must be p x m")
        if self.process_noise_std < 0 or self.measurement_noise_std < 0:
            raise ValueError("noise std must be non-negative")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class PlantState:
    x: np.ndarray
    x_hat: np.ndarray
    u: np.ndarray
    y: np.ndarray
    k: int = 0


def initial_state(model: PlantModel, x0) -> PlantState:
    x0 = np.asarray(x0, dtype=np.float64).reshape(model.n)
    return PlantState(x=x0, x_hat=x0.copy(),
                      u=np.zeros(model.m), y=model.C @ x0, k=0)


def step_plant(model: PlantModel, state: PlantState, u, rng=None) -> PlantState:
    """One discrete step: x' = A x + B u, y' = C x' + D u (plus optional noise)."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if u.shape[0] != model.m:
        raise DimensionMismatch(f"input dim {u.shape[0]} != {model.m}")
    x_next = model.A @ state.x + model.B @ u
    if rng is not None and model.process_noise_std > 0:
        x_next = x_next + rng.gen.normal(0, model.process_noise_std, model.n)
    y_next = model.C @ x_next + model.D @ u
    if rng is not None and model.measurement_noise_std > 0:
        y_next = y_next + rng.gen.normal(0, model.measurement_noise_std, model.p)
    return PlantState(x=x_next, x_hat=state.x_hat, u=u, y=y_next, k=state.k + 1)


def observability_matrix(model: PlantModel) -> np.ndarray:
    blocks = [model.C]
    Ak = np.eye(model.n)
    for _ in range(model.n - 1):
        Ak = Ak @ model.A
        blocks.append(model.C @ Ak)
    return np.vstack(blocks)


def estimate(model: PlantModel, state: PlantState, y, u,
             mode: str = "FULL_OBS", L=None) -> PlantState:
    """Update the state estimate from a fresh measurement.

    FULL_OBS assumes C = I, D = 0 and reads the state straight off the
    output. LUENBERGER runs x_hat' = A x_hat + B u + L (y - C x_hat) with a
    caller-supplied gain.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if mode == "FULL_OBS":
        x_hat = y.copy()
        if x_hat.shape[0] != model.n:
            raise DimensionMismatch("FULL_OBS needs p == n")
    elif mode == "LUENBERGER":
        if np.linalg.matrix_rank(observability_matrix(model)) < model.n:
            raise NotObservable("observability matrix rank-deficient")
        L = np.atleast_2d(np.asarray(L, dtype=np.float64))
        x_hat = model.A @ state.x_hat + model.B @ u + L @ (y - model.C @ state.x_hat)
    else:
        raise ValueError(f"unknown estimator mode {mode!r}")
    return replace(state, x_hat=x_hat)


def self_control(K, x_hat) -> np.ndarray:
    """Autonomous feedback u = K x_hat."""
    K = np.atleast_2d(np.asarray(K, dtype=np.float64))
    x_hat = np.asarray(x_hat, dtype=np.float64).reshape(-1)
    if K.shape[1] != x_hat.shape[0]:
        raise DimensionMismatch(f"gain cols {K.shape[1]} != state dim {x_hat.shape[0]}")
    return K @ x_hat


def local_control(gains: dict, estimates: dict) -> np.ndarray:
    """Neighborhood feedback u = sum_j K_j x_hat_j over self plus neighbors."""
    missing = set(gains) - set(estimates)
    if missing:
        raise MissingNeighborEstimate(f"no estimate for {sorted(missing)}")
    u = None
    for j in sorted(gains):
        term = self_control(gains[j], estimates[j])
        u = term if u is None else u + term
    if u is None:
        raise MissingNeighborEstimate("empty gain map")
    return u


@dataclass
class GainSchedule:
    gains: dict = field(default_factory=dict)  # (level, node_id) -> K
    epoch: int = 0

    def gain_for(self, level: int, node: int):
        return self.gains[(level, node)]


def design_gains(hierarchy, rules: dict, plant_nodes: list[int],
                 schedule: GainSchedule | None = None) -> GainSchedule:
    """Assign feedback gains down the tree from per-level rules.

    `rules` maps a tree level to either a constant gain matrix or a callable
    `node_id -> matrix`. Every plant node must be covered by its level's rule.
    """
    schedule = schedule or GainSchedule()
    new_gains = dict(schedule.gains)
    for node in plant_nodes:
        level = hierarchy.level[node]
        rule = rules.get(level)
        if rule is None:
            raise UncoveredPlant(f"no gain rule for node {node} at level {level}")
        K = rule(node) if callable(rule) else rule
        new_gains[(level, node)] = np.atleast_2d(np.asarray(K, dtype=np.float64))
    return GainSchedule(gains=new_gains, epoch=schedule.epoch + 1)


@dataclass(frozen=True)
class MobilityState:
    position: tuple[float, float]
    velocity: tuple[float, float]


def step_mobility(mob: MobilityState, dt: float) -> MobilityState:
    """Constant-velocity motion over dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    px, py = mob.position
    vx, vy = mob.velocity
    return MobilityState(position=(px + vx * dt, py + vy * dt),
                         velocity=mob.velocity)
