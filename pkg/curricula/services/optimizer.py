"""
Per-iteration distribution updates.

- `doraemon_step`: maximize entropy subject to an estimated success rate of at
  least alpha and a KL trust region of size epsilon around the start point.
- `backup_step`: maximize the estimated success rate inside the trust region,
  used to restore feasibility when the current distribution falls below alpha.

Both work on the unconstrained parameter vector of `distributions.to_vector`.
Candidates come from several solver starts (the start point itself, a step
along the objective gradient scaled to the trust-region edge, and seeded
perturbations); every candidate is pulled back towards the start point until
it is feasible, and the best one is returned. The start point is always a
candidate, so a step never ends worse than where it began.
"""

import enum
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..errors import InfeasibleStartError
from . import distributions as dist
from .distributions import DistributionSpec
from .estimator import EpisodeRecord, records_arrays

_log = logging.getLogger('curricula.main')

_TIE_TOL = 1e-12
_BISECTION_STEPS = 50


class StepStatus(str, enum.Enum):
    MAIN_OK = "MainStepOk"
    BACKUP_OK = "BackupStepOk"
    STALLED = "Stalled"


@dataclass(frozen=True)
class StepConfig:
    alpha: float = 0.5
    epsilon: float = 0.05
    tol_kl: float = 1e-4
    tol_g: float = 1e-3
    tol_entropy: float = 1e-6
    max_iterations: int = 200
    restarts: int = 3
    penalty_schedule: Tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0)
    method: str = "slsqp"
    perturbation: float = 0.05
    seed: int = 0
    clip: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.method not in ("slsqp", "penalty"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.restarts < 0 or self.max_iterations < 1:
            raise ValueError("restarts must be >= 0 and max_iterations >= 1")
        object.__setattr__(self, 'penalty_schedule', tuple(float(m) for m in self.penalty_schedule))


@dataclass(frozen=True)
class StepResult:
    phi_next: DistributionSpec
    entropy: float
    kl_from_start: float
    estimated_success: float
    status: StepStatus
    solver_iters: int = 0
    entropy_before: float = float("nan")
    success_before: float = float("nan")

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "entropy_before": self.entropy_before,
            "entropy_after": self.entropy,
            "kl": self.kl_from_start,
            "G_hat_before": self.success_before,
            "G_hat_after": self.estimated_success,
            "solver_iters": self.solver_iters,
        }


class _Problem:
    """Entropy, KL and success estimate as functions of the parameter vector."""

    def __init__(self, phi_start: DistributionSpec, records: Sequence[EpisodeRecord],
                 phi_sampling: DistributionSpec, clip: Optional[float]):
        dist.check_comparable(phi_start, phi_sampling)
        self.start = phi_start
        self.theta0 = dist.to_vector(phi_start)
        self.bounds = dist.vector_bounds(phi_start)
        self.xi, self.successes = records_arrays(records)
        self.log_q = dist.log_pdf(phi_sampling, self.xi)
        self.clip = clip

    def spec(self, theta: np.ndarray) -> DistributionSpec:
        return dist.from_vector(self.start, theta)

    def entropy(self, theta):
        return dist.entropy(self.spec(theta))

    def entropy_grad(self, theta):
        return dist.entropy_gradient(self.spec(theta))

    def kl(self, theta):
        return dist.kl_divergence(self.spec(theta), self.start)

    def kl_grad(self, theta):
        return dist.kl_gradient(self.spec(theta), self.start)

    def _weights(self, theta):
        w = np.exp(dist.log_pdf(self.spec(theta), self.xi) - self.log_q)
        if self.clip is None:
            return w, np.ones_like(w, dtype=bool)
        return np.minimum(w, self.clip), w < self.clip

    def success(self, theta):
        w, _ = self._weights(theta)
        return float(np.mean(w * self.successes))

    def success_grad(self, theta):
        w, active = self._weights(theta)
        score = dist.log_pdf_gradient(self.spec(theta), self.xi)
        coeff = w * self.successes * active
        return coeff @ score / len(coeff)

    def clip_to_bounds(self, theta):
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.clip(theta, lo, hi)


def solver_gradients(phi: DistributionSpec, records: Sequence[EpisodeRecord],
                     phi_ref: DistributionSpec, clip: Optional[float] = None) -> Dict[str, np.ndarray]:
    """Gradients of entropy(phi), KL(phi || phi_ref) and G_hat(records, phi_ref, phi)
    with respect to the transformed parameters of `phi`."""
    problem = _Problem(phi_ref, records, phi_ref, clip)
    theta = dist.to_vector(phi)
    return {
        "grad_entropy": problem.entropy_grad(theta),
        "grad_kl": problem.kl_grad(theta),
        "grad_success": problem.success_grad(theta),
    }


# ---------------------------------------------------------------------------
# solver back-ends


@dataclass
class _Run:
    theta: np.ndarray
    iterations: int
    converged: bool


def _slsqp(problem: _Problem, x0: np.ndarray, objective: str, cfg: StepConfig,
           g_floor: Optional[float]) -> _Run:
    if objective == "entropy":
        fun, jac = problem.entropy, problem.entropy_grad
    else:
        fun, jac = problem.success, problem.success_grad
    constraints = [{"type": "ineq",
                    "fun": lambda t: cfg.epsilon - problem.kl(t),
                    "jac": lambda t: -problem.kl_grad(t)}]
    if g_floor is not None:
        constraints.append({"type": "ineq",
                            "fun": lambda t: problem.success(t) - g_floor,
                            "jac": problem.success_grad})
    try:
        res = minimize(lambda t: -fun(t), x0, jac=lambda t: -jac(t), method="SLSQP",
                       bounds=problem.bounds, constraints=constraints,
                       options={"maxiter": cfg.max_iterations, "ftol": 1e-12})
    except (ValueError, FloatingPointError) as e:
        _log.debug("SLSQP raised from start %s: %s", x0, e)
        return _Run(x0, 0, False)
    theta = res.x if np.all(np.isfinite(res.x)) else x0
    return _Run(problem.clip_to_bounds(theta), int(res.nit), bool(res.success))


def _penalty_ascent(problem: _Problem, x0: np.ndarray, objective: str, cfg: StepConfig,
                    g_floor: Optional[float]) -> _Run:
    """Projected gradient ascent on an exact-penalty merit with backtracking."""
    fun = problem.entropy if objective == "entropy" else problem.success
    jac = problem.entropy_grad if objective == "entropy" else problem.success_grad

    def merit(theta, mu):
        value = fun(theta) - mu * max(0.0, problem.kl(theta) - cfg.epsilon)
        if g_floor is not None:
            value -= mu * max(0.0, g_floor - problem.success(theta))
        return value

    def merit_grad(theta, mu):
        grad = jac(theta)
        if problem.kl(theta) > cfg.epsilon:
            grad = grad - mu * problem.kl_grad(theta)
        if g_floor is not None and problem.success(theta) < g_floor:
            grad = grad + mu * problem.success_grad(theta)
        return grad

    theta = problem.clip_to_bounds(x0)
    iterations, converged = 0, False
    for mu in cfg.penalty_schedule:
        for _ in range(cfg.max_iterations):
            iterations += 1
            current = merit(theta, mu)
            grad = merit_grad(theta, mu)
            step, moved = 1.0, False
            while step > 1e-10:
                candidate = problem.clip_to_bounds(theta + step * grad)
                if merit(candidate, mu) >= current + 1e-4 * grad @ (candidate - theta):
                    moved = True
                    break
                step *= 0.5
            if not moved or np.linalg.norm(candidate - theta) < 1e-10:
                converged = True
                break
            theta = candidate
    return _Run(theta, iterations, converged)


_BACKENDS = {"slsqp": _slsqp, "penalty": _penalty_ascent}


# ---------------------------------------------------------------------------
# candidate generation and selection


def _edge_start(problem: _Problem, direction: np.ndarray, epsilon: float) -> Optional[np.ndarray]:
    """Point along `direction` from the start whose KL equals epsilon."""
    norm = np.linalg.norm(direction)
    if not np.isfinite(norm) or norm < 1e-14:
        return None
    d = direction / norm
    hi = 1.0
    while problem.kl(problem.theta0 + hi * d) < epsilon and hi < 1e3:
        hi *= 2.0
    lo = 0.0
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if problem.kl(problem.theta0 + mid * d) <= epsilon:
            lo = mid
        else:
            hi = mid
    return problem.clip_to_bounds(problem.theta0 + lo * d)


def _starts(problem: _Problem, objective_grad: np.ndarray, cfg: StepConfig) -> List[np.ndarray]:
    starts = [problem.theta0.copy()]
    edge = _edge_start(problem, objective_grad, cfg.epsilon)
    if edge is not None:
        starts.append(edge)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        noise = rng.normal(0.0, cfg.perturbation, size=problem.theta0.shape)
        starts.append(problem.clip_to_bounds(problem.theta0 + noise))
    return starts


def _is_feasible(problem: _Problem, theta: np.ndarray, cfg: StepConfig, g_floor: Optional[float]) -> bool:
    if problem.kl(theta) > cfg.epsilon:
        return False
    return g_floor is None or problem.success(theta) >= g_floor


def _polish(problem: _Problem, theta: np.ndarray, cfg: StepConfig, g_floor: Optional[float]) -> np.ndarray:
    """Largest feasible point found by bisection on the segment start -> theta."""
    if _is_feasible(problem, theta, cfg, g_floor):
        return theta
    lo, hi = 0.0, 1.0
    direction = theta - problem.theta0
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if _is_feasible(problem, problem.theta0 + mid * direction, cfg, g_floor):
            lo = mid
        else:
            hi = mid
    return problem.theta0 + lo * direction


@dataclass
class _Candidate:
    theta: np.ndarray
    score: float
    entropy: float
    index: int


def _select(candidates: List[_Candidate]) -> _Candidate:
    best_score = max(c.score for c in candidates)
    tied = [c for c in candidates if c.score >= best_score - _TIE_TOL]
    best_entropy = max(c.entropy for c in tied)
    tied = [c for c in tied if c.entropy >= best_entropy - _TIE_TOL]
    return min(tied, key=lambda c: c.index)


def _solve(problem: _Problem, objective: str, cfg: StepConfig, g_floor: Optional[float]) -> Tuple[_Candidate, int, bool]:
    grad0 = problem.entropy_grad(problem.theta0) if objective == "entropy" else problem.success_grad(problem.theta0)
    backend = _BACKENDS[cfg.method]
    candidates, total_iters, any_converged = [], 0, False
    for index, x0 in enumerate(_starts(problem, grad0, cfg)):
        if index == 0:
            run = _Run(x0, 0, False)
            theta = x0
        else:
            run = backend(problem, x0, objective, cfg, g_floor)
            theta = _polish(problem, run.theta, cfg, g_floor)
        total_iters += run.iterations
        any_converged = any_converged or run.converged
        score = problem.entropy(theta) if objective == "entropy" else problem.success(theta)
        candidates.append(_Candidate(theta, score, problem.entropy(theta), index))
    return _select(candidates), total_iters, any_converged


def _result(problem: _Problem, chosen: _Candidate, status: StepStatus, iters: int,
            entropy_before: float, success_before: float, cfg: StepConfig) -> StepResult:
    phi_next = problem.spec(chosen.theta)
    kl = dist.kl_divergence(phi_next, problem.start)
    assert kl <= cfg.epsilon + cfg.tol_kl, f"trust region violated: KL={kl} > {cfg.epsilon}"
    return StepResult(
        phi_next=phi_next,
        entropy=dist.entropy(phi_next),
        kl_from_start=kl,
        estimated_success=problem.success(chosen.theta),
        status=status,
        solver_iters=iters,
        entropy_before=entropy_before,
        success_before=success_before,
    )


def _stalled(problem: _Problem, iters: int, entropy_before: float, success_before: float) -> StepResult:
    return StepResult(problem.start, entropy_before, 0.0, success_before, StepStatus.STALLED, iters,
                      entropy_before, success_before)


def doraemon_step(phi_start: DistributionSpec, records: Sequence[EpisodeRecord], cfg: StepConfig,
                  phi_sampling: Optional[DistributionSpec] = None,
                  allow_infeasible_start: bool = False) -> StepResult:
    """Entropy-maximizing update inside the trust region around `phi_start`.

    Success is estimated by importance weighting against `phi_sampling`, the
    distribution the records were drawn from (defaults to `phi_start`).
    Raises InfeasibleStartError when the start point itself misses alpha,
    unless `allow_infeasible_start`, in which case the success floor drops to
    the start point's own estimate.
    """
    phi_sampling = phi_sampling or phi_start
    problem = _Problem(phi_start, records, phi_sampling, cfg.clip)
    entropy_before = problem.entropy(problem.theta0)
    success_before = problem.success(problem.theta0)
    if success_before < cfg.alpha - cfg.tol_g and not allow_infeasible_start:
        raise InfeasibleStartError(
            f"start point has estimated success {success_before:.4f} < alpha={cfg.alpha}; "
            "solve backup_step first"
        )
    g_floor = min(cfg.alpha, success_before)
    chosen, iters, converged = _solve(problem, "entropy", cfg, g_floor)
    improved = chosen.score > entropy_before + cfg.tol_entropy
    if not converged and not improved:
        _log.warning("Main step stalled after %d solver iterations", iters)
        return _stalled(problem, iters, entropy_before, success_before)
    result = _result(problem, chosen, StepStatus.MAIN_OK, iters, entropy_before, success_before, cfg)
    assert result.entropy >= entropy_before - cfg.tol_entropy
    _log.debug("Main step: entropy %.4f -> %.4f, KL %.2e, G_hat %.3f -> %.3f",
               entropy_before, result.entropy, result.kl_from_start, success_before, result.estimated_success)
    return result


def backup_step(phi_current: DistributionSpec, records: Sequence[EpisodeRecord], cfg: StepConfig,
                phi_sampling: Optional[DistributionSpec] = None) -> StepResult:
    """Success-maximizing update inside the trust region around `phi_current`."""
    phi_sampling = phi_sampling or phi_current
    problem = _Problem(phi_current, records, phi_sampling, cfg.clip)
    entropy_before = problem.entropy(problem.theta0)
    success_before = problem.success(problem.theta0)
    chosen, iters, converged = _solve(problem, "success", cfg, None)
    improved = chosen.score > success_before + cfg.tol_g
    if not converged and not improved:
        _log.warning("Backup step stalled after %d solver iterations", iters)
        return _stalled(problem, iters, entropy_before, success_before)
    result = _result(problem, chosen, StepStatus.BACKUP_OK, iters, entropy_before, success_before, cfg)
    assert result.estimated_success >= success_before - cfg.tol_g
    _log.debug("Backup step: G_hat %.3f -> %.3f, entropy %.4f -> %.4f",
               success_before, result.estimated_success, entropy_before, result.entropy)
    return result
