"""
Cart on a frictionless inclined plane.

The inclination omega is the only dynamics parameter. A counter force
a in [-a_max, a_max] opposes the gravity component F_g * sin(omega); once
F_g * |sin(omega)| exceeds a_max no policy can hold the cart, so the task is
feasible exactly for |omega| <= arcsin(a_max / F_g).
"""

import math
from dataclasses import dataclass, replace
from typing import Any, Mapping, Optional

import numpy as np

from ..services.distributions import BoundedSupport
from ..services.estimator import Predicate, SuccessIndicator, TrajectorySummary
from .base import Environment, Policy

BALANCED = "balanced"


@dataclass(frozen=True)
class InclinedPlaneConfig:
    gravity: float = 9.81
    a_max: float = 9.81 / math.sqrt(2.0)
    dt: float = 0.05
    horizon: int = 200
    band: float = 0.1
    hold_steps: int = 25
    half_length: float = 1.0
    init_spread: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.a_max <= self.gravity:
            raise ValueError(f"a_max must lie in (0, gravity={self.gravity}], got {self.a_max}")
        if self.hold_steps > self.horizon:
            raise ValueError(f"hold_steps ({self.hold_steps}) cannot exceed horizon ({self.horizon})")
        if self.dt <= 0 or self.horizon < 1 or self.band <= 0 or self.half_length <= self.band:
            raise ValueError("invalid inclined-plane geometry or timing")


@dataclass(frozen=True)
class PlaneState:
    x: float
    v: float
    t: int = 0


def plane_step(state: PlaneState, action: float, omega: float, cfg: InclinedPlaneConfig) -> PlaneState:
    """Semi-implicit Euler step with unit mass; the action is clamped to +-a_max."""
    a = min(max(float(action), -cfg.a_max), cfg.a_max)
    v = state.v + cfg.dt * (a - cfg.gravity * math.sin(omega))
    x = state.x + cfg.dt * v
    return PlaneState(x, v, state.t + 1)


def feasible_half_width(cfg: InclinedPlaneConfig) -> float:
    return math.asin(cfg.a_max / cfg.gravity)


def plane_rollout(policy: Policy, omega: float, cfg: InclinedPlaneConfig,
                  rng: np.random.Generator) -> TrajectorySummary:
    """One episode from rest near the center.

    Reward per step is 1 while |x| <= band, otherwise -|x| / half_length. The
    episode stops early when the cart leaves the plane. In-band steps are
    counted cumulatively.
    """
    state = PlaneState(float(rng.uniform(-cfg.init_spread, cfg.init_spread)), 0.0)
    rows = []
    total, in_band, exited = 0.0, 0, False
    for _ in range(cfg.horizon):
        current = np.array([state.x, state.v])
        history = np.asarray(rows, dtype=float).reshape(-1, 3)
        action = min(max(float(policy.act(history, current)), -cfg.a_max), cfg.a_max)
        rows.append((state.x, state.v, action / cfg.a_max))
        state = plane_step(state, action, omega, cfg)
        if abs(state.x) <= cfg.band:
            in_band += 1
            total += 1.0
        else:
            total -= min(abs(state.x), cfg.half_length) / cfg.half_length
        if abs(state.x) > cfg.half_length:
            exited = True
            break
    return TrajectorySummary(
        return_value=total,
        steps=state.t,
        fields={"in_band_steps": in_band, "success": in_band >= cfg.hold_steps, "exited": exited},
    )


class ScriptedBalancePolicy:
    """Reference controller: cancels the gravity estimate from the last transition, then PD on x.

    The gravity component is recovered as a_prev - (v_t - v_{t-1}) / dt, which
    is exact for the plane's update rule.
    """

    def __init__(self, cfg: InclinedPlaneConfig, kp: float = 10.0, kd: float = 5.0):
        self.cfg = cfg
        self.kp = kp
        self.kd = kd

    def act(self, history: np.ndarray, state: np.ndarray) -> float:
        x, v = float(state[0]), float(state[1])
        gravity_term = 0.0
        if len(history):
            _, v_prev, a_norm = history[-1]
            gravity_term = a_norm * self.cfg.a_max - (v - v_prev) / self.cfg.dt
        action = gravity_term - self.kp * x - self.kd * v
        return min(max(action, -self.cfg.a_max), self.cfg.a_max)


class InclinedPlaneEnvironment(Environment):
    name = "inclined_plane"
    observation_size = 3

    def __init__(self, cfg: Optional[InclinedPlaneConfig] = None,
                 support: Optional[BoundedSupport] = None):
        self.cfg = cfg or InclinedPlaneConfig()
        support = support or BoundedSupport((-math.pi / 2,), (math.pi / 2,), ("omega",))
        if support.dims != 1:
            raise ValueError("the inclined plane has a single dynamics parameter")
        if support.lo[0] < -math.pi / 2 - 1e-12 or support.hi[0] > math.pi / 2 + 1e-12:
            raise ValueError("inclination support must lie within [-pi/2, pi/2]")
        super().__init__(support, np.zeros(1) if support.contains([0.0])[0] else None)
        self.action_scale = self.cfg.a_max

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "InclinedPlaneEnvironment":
        params = dict(params)
        support = None
        if "support" in params:
            lo, hi = params.pop("support")
            support = BoundedSupport((lo,), (hi,), ("omega",))
        return cls(replace(InclinedPlaneConfig(), **params), support)

    @property
    def omega_c(self) -> float:
        return feasible_half_width(self.cfg)

    def rollout(self, policy, xi, rng, progress=0) -> TrajectorySummary:
        omega = float(np.atleast_1d(xi)[0])
        return plane_rollout(policy, omega, self.cfg, rng)

    @property
    def predicates(self) -> Mapping[str, Predicate]:
        return {BALANCED: lambda summary: bool(summary.fields["in_band_steps"] >= self.cfg.hold_steps)}

    @property
    def default_return_threshold(self) -> float:
        # reward off the band is never positive, so J >= hold_steps implies balance
        return float(self.cfg.hold_steps)

    def default_indicator(self) -> SuccessIndicator:
        return SuccessIndicator.environment_predicate(BALANCED)

    def scripted_policy(self) -> ScriptedBalancePolicy:
        return ScriptedBalancePolicy(self.cfg)
