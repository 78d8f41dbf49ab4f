"""
Parametric sampling distributions over bounded dynamics-parameter spaces.

Two independent (per-dimension) families are provided:

- IndependentBeta: each dimension is a Beta(a, b) rescaled from [0, 1] onto
  [lo, hi]. Be(1, 1) is the uniform, i.e. the maximum-entropy member.
- IndependentTruncatedGaussian: each dimension is a Gaussian(mean, std)
  renormalized over [lo, hi].

Specs are immutable values. All entropies and KL divergences are in nats and
are computed on the physical support. Optimization code works on the
transformed parameter vector returned by `to_vector` (log-shapes for Beta,
unit-space mean and log unit-space std for the truncated Gaussian).
"""

import enum
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special, stats
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from ..errors import SamplingError, SupportError

_log = logging.getLogger('curricula.main')

BETA_SHAPE_FLOOR = 0.05
REJECTION_RETRY_CAP = 1000
# Samples are kept this far (in unit space) from the support edges.
_EDGE_EPS = 1e-12
_HALF_LOG_2PI_E = 0.5 * math.log(2.0 * math.pi * math.e)


class Family(str, enum.Enum):
    BETA = "IndependentBeta"
    TRUNC_GAUSS = "IndependentTruncatedGaussian"


def _as_tuple(values: Any) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class BoundedSupport:
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        lo, hi = _as_tuple(self.lo), _as_tuple(self.hi)
        if len(lo) < 1 or len(lo) != len(hi):
            raise SupportError(f"support bounds must be non-empty and of equal length, got {len(lo)} and {len(hi)}")
        for d, (l, h) in enumerate(zip(lo, hi)):
            if not (math.isfinite(l) and math.isfinite(h) and l < h):
                raise SupportError(f"dimension {d}: require finite lo < hi, got [{l}, {h}]")
        names = tuple(str(n) for n in self.names) or tuple(f"xi_{d}" for d in range(len(lo)))
        if len(names) != len(lo):
            raise SupportError(f"expected {len(lo)} dimension names, got {len(names)}")
        object.__setattr__(self, 'lo', lo)
        object.__setattr__(self, 'hi', hi)
        object.__setattr__(self, 'names', names)

    @property
    def dims(self) -> int:
        return len(self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi)

    @property
    def width(self) -> np.ndarray:
        return self.hi_array - self.lo_array

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo_array + self.hi_array)

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.width)))

    def contains(self, xi: Any) -> np.ndarray:
        points = np.atleast_2d(np.asarray(xi, dtype=float))
        return np.all((points >= self.lo_array) & (points <= self.hi_array), axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {"dims": self.dims, "lo": list(self.lo), "hi": list(self.hi), "names": list(self.names)}

    @classmethod
    def unit(cls, dims: int) -> "BoundedSupport":
        return cls(lo=(0.0,) * dims, hi=(1.0,) * dims)


@dataclass(frozen=True)
class BetaParams:
    a: Tuple[float, ...]
    b: Tuple[float, ...]

    def __post_init__(self):
        a, b = _as_tuple(self.a), _as_tuple(self.b)
        if len(a) != len(b):
            raise ValueError("Beta shape vectors must have equal length")
        if not all(x > 0 and math.isfinite(x) for x in a + b):
            raise ValueError(f"Beta shapes must be positive and finite, got a={a}, b={b}")
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', b)

    @property
    def dims(self) -> int:
        return len(self.a)

    def as_rows(self) -> list:
        return [[a, b] for a, b in zip(self.a, self.b)]


@dataclass(frozen=True)
class TruncGaussParams:
    mean: Tuple[float, ...]
    std: Tuple[float, ...]

    def __post_init__(self):
        mean, std = _as_tuple(self.mean), _as_tuple(self.std)
        if len(mean) != len(std):
            raise ValueError("mean and std vectors must have equal length")
        if not all(math.isfinite(m) for m in mean) or not all(s > 0 and math.isfinite(s) for s in std):
            raise ValueError(f"truncated Gaussian requires finite mean and positive std, got std={std}")
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'std', std)

    @property
    def dims(self) -> int:
        return len(self.mean)

    def as_rows(self) -> list:
        return [[m, s] for m, s in zip(self.mean, self.std)]


Params = Union[BetaParams, TruncGaussParams]
_PARAMS_TYPE = {Family.BETA: BetaParams, Family.TRUNC_GAUSS: TruncGaussParams}


@dataclass(frozen=True)
class DistributionSpec:
    support: BoundedSupport
    family: Family
    params: Params

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, 'family', family)
        if not isinstance(self.params, _PARAMS_TYPE[family]):
            raise ValueError(f"{family.value} expects {_PARAMS_TYPE[family].__name__}, got {type(self.params).__name__}")
        if self.params.dims != self.support.dims:
            raise ValueError(f"params have {self.params.dims} dimensions, support has {self.support.dims}")

    @property
    def dims(self) -> int:
        return self.support.dims


# ---------------------------------------------------------------------------
# construction helpers


def beta_spec(support: BoundedSupport, a: Any, b: Any) -> DistributionSpec:
    a = np.broadcast_to(np.asarray(a, dtype=float), (support.dims,))
    b = np.broadcast_to(np.asarray(b, dtype=float), (support.dims,))
    return DistributionSpec(support, Family.BETA, BetaParams(a, b))


def trunc_gauss_spec(support: BoundedSupport, mean: Any, std: Any) -> DistributionSpec:
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (support.dims,))
    std = np.broadcast_to(np.asarray(std, dtype=float), (support.dims,))
    return DistributionSpec(support, Family.TRUNC_GAUSS, TruncGaussParams(mean, std))


def max_entropy_spec(support: BoundedSupport, family: Union[Family, str] = Family.BETA) -> DistributionSpec:
    """Uniform Be(1,1) for Beta; midpoint mean with std = hi - lo for the truncated Gaussian."""
    family = Family(family)
    if family is Family.BETA:
        return beta_spec(support, 1.0, 1.0)
    return trunc_gauss_spec(support, support.midpoint, support.width)


def initial_spec(support: BoundedSupport,
                 family: Union[Family, str] = Family.BETA,
                 total_concentration: float = 200.0,
                 center: Optional[Sequence[float]] = None) -> DistributionSpec:
    """Narrow starting distribution, Be(100, 100) at the support center by default.

    `center` is given in unit space, one value per dimension. The truncated
    Gaussian member is entropy-matched to the Beta one.
    """
    family = Family(family)
    c = np.full(support.dims, 0.5) if center is None else np.asarray(center, dtype=float)
    if c.shape != (support.dims,) or np.any((c <= 0) | (c >= 1)):
        raise ValueError(f"initial center must hold {support.dims} values in (0, 1), got {center}")
    a = total_concentration * c
    b = total_concentration * (1.0 - c)
    beta = beta_spec(support, a, b)
    if family is Family.BETA:
        return beta
    unit_entropy = _beta_unit_entropy(np.asarray(a), np.asarray(b))
    unit_std = np.exp(unit_entropy - _HALF_LOG_2PI_E)
    return trunc_gauss_spec(support, support.lo_array + c * support.width, unit_std * support.width)


# ---------------------------------------------------------------------------
# unit-space mapping


def _check_inside(support: BoundedSupport, points: np.ndarray) -> None:
    inside = (points >= support.lo_array) & (points <= support.hi_array)
    if not np.all(inside):
        row, dim = np.argwhere(~inside)[0]
        raise SupportError(
            f"value {points[row, dim]!r} in dimension {dim} lies outside [{support.lo[dim]}, {support.hi[dim]}]"
        )


def to_unit(obj: Any, support: Optional[BoundedSupport] = None):
    """Affine map of a spec or of points onto [0, 1]^n.

    For points, `support` is required; a spec carries its own.
    """
    if isinstance(obj, DistributionSpec):
        unit = BoundedSupport.unit(obj.dims)
        unit = BoundedSupport(unit.lo, unit.hi, obj.support.names)
        if obj.family is Family.BETA:
            return DistributionSpec(unit, obj.family, obj.params)
        lo, w = obj.support.lo_array, obj.support.width
        return trunc_gauss_spec(unit, (np.asarray(obj.params.mean) - lo) / w, np.asarray(obj.params.std) / w)
    if support is None:
        raise ValueError("to_unit on points requires a support")
    points = np.asarray(obj, dtype=float)
    _check_inside(support, np.atleast_2d(points))
    return (points - support.lo_array) / support.width


def from_unit(obj: Any, support: BoundedSupport):
    """Inverse of `to_unit` onto `support`."""
    if isinstance(obj, DistributionSpec):
        if obj.family is Family.BETA:
            return DistributionSpec(support, obj.family, obj.params)
        lo, w = support.lo_array, support.width
        return trunc_gauss_spec(support, lo + np.asarray(obj.params.mean) * w, np.asarray(obj.params.std) * w)
    points = np.asarray(obj, dtype=float)
    _check_inside(BoundedSupport.unit(support.dims), np.atleast_2d(points))
    return support.lo_array + points * support.width


# ---------------------------------------------------------------------------
# truncated Gaussian helpers (unit-free: everything in standardized bounds)


def _log_diff_ndtr(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """log(Phi(upper) - Phi(lower)) computed in the tail that keeps precision."""
    flip = lower > 0
    lo = np.where(flip, -upper, lower)
    hi = np.where(flip, -lower, upper)
    log_hi = special.log_ndtr(hi)
    log_lo = special.log_ndtr(lo)
    return log_hi + np.log(-np.expm1(log_lo - log_hi))


def _tg_terms(mean, std, lo, hi):
    alpha = (lo - mean) / std
    beta = (hi - mean) / std
    log_z = _log_diff_ndtr(alpha, beta)
    log_norm_pdf = lambda t: -0.5 * t * t - 0.5 * math.log(2.0 * math.pi)
    r_alpha = np.exp(log_norm_pdf(alpha) - log_z)
    r_beta = np.exp(log_norm_pdf(beta) - log_z)
    return alpha, beta, log_z, r_alpha, r_beta


def _tg_arrays(spec: DistributionSpec):
    return (np.asarray(spec.params.mean), np.asarray(spec.params.std),
            spec.support.lo_array, spec.support.hi_array)


def _tg_entropy_per_dim(spec: DistributionSpec) -> np.ndarray:
    mean, std, lo, hi = _tg_arrays(spec)
    alpha, beta, log_z, r_a, r_b = _tg_terms(mean, std, lo, hi)
    return _HALF_LOG_2PI_E + np.log(std) + log_z + 0.5 * (alpha * r_a - beta * r_b)


def _tg_moments(spec: DistributionSpec) -> Tuple[np.ndarray, np.ndarray]:
    mean, std, lo, hi = _tg_arrays(spec)
    alpha, beta, _, r_a, r_b = _tg_terms(mean, std, lo, hi)
    m = mean + std * (r_a - r_b)
    var = std ** 2 * (1.0 + alpha * r_a - beta * r_b - (r_a - r_b) ** 2)
    return m, np.maximum(var, 0.0)


# ---------------------------------------------------------------------------
# Beta helpers (unit interval)


def _beta_arrays(spec: DistributionSpec) -> Tuple[np.ndarray, np.ndarray]:
    return np.asarray(spec.params.a), np.asarray(spec.params.b)


def _beta_unit_entropy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (special.betaln(a, b) - (a - 1.0) * special.digamma(a) - (b - 1.0) * special.digamma(b)
            + (a + b - 2.0) * special.digamma(a + b))


def _beta_kl(ap, bp, aq, bq) -> np.ndarray:
    sp, sq = ap + bp, aq + bq
    return (special.betaln(aq, bq) - special.betaln(ap, bp)
            + (ap - aq) * special.digamma(ap) + (bp - bq) * special.digamma(bp)
            + (sq - sp) * special.digamma(sp))


# ---------------------------------------------------------------------------
# public operations


def log_pdf(spec: DistributionSpec, xi: Any, permissive: bool = False):
    """Log-density of one point (returns float) or of a batch of points (returns array).

    Out-of-support points raise SupportError unless `permissive` is set, in
    which case they get -inf.
    """
    points = np.asarray(xi, dtype=float)
    single = points.ndim <= 1
    points = np.atleast_2d(points).reshape(-1, spec.dims)
    inside = spec.support.contains(points)
    if not permissive:
        _check_inside(spec.support, points)
    safe = np.where(inside[:, None], points, spec.support.midpoint)

    if spec.family is Family.BETA:
        a, b = _beta_arrays(spec)
        u = (safe - spec.support.lo_array) / spec.support.width
        per_dim = special.xlogy(a - 1.0, u) + special.xlog1py(b - 1.0, -u) - special.betaln(a, b)
        per_dim = per_dim - np.log(spec.support.width)
    else:
        mean, std, lo, hi = _tg_arrays(spec)
        _, _, log_z, _, _ = _tg_terms(mean, std, lo, hi)
        z = (safe - mean) / std
        per_dim = -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) - np.log(std) - log_z

    values = np.where(inside, np.sum(per_dim, axis=1), -np.inf)
    return float(values[0]) if single else values


def entropy(spec: DistributionSpec) -> float:
    """Differential entropy (nats) on the physical support."""
    if spec.family is Family.BETA:
        a, b = _beta_arrays(spec)
        return float(np.sum(_beta_unit_entropy(a, b)) + spec.support.log_volume)
    return float(np.sum(_tg_entropy_per_dim(spec)))


def check_comparable(p: DistributionSpec, q: DistributionSpec) -> None:
    if p.family is not q.family:
        raise SupportError(f"family mismatch: {p.family.value} vs {q.family.value}")
    if p.support.lo != q.support.lo or p.support.hi != q.support.hi:
        raise SupportError("support mismatch between distributions")


def kl_divergence(p: DistributionSpec, q: DistributionSpec) -> float:
    """KL(p || q) in nats, summed over independent dimensions."""
    check_comparable(p, q)
    if p.family is Family.BETA:
        ap, bp = _beta_arrays(p)
        aq, bq = _beta_arrays(q)
        per_dim = _beta_kl(ap, bp, aq, bq)
    else:
        mq, sq, lo, hi = _tg_arrays(q)
        _, _, log_zq, _, _ = _tg_terms(mq, sq, lo, hi)
        m_p, var_p = _tg_moments(p)
        cross = 0.5 * math.log(2.0 * math.pi) + np.log(sq) + log_zq + (var_p + (m_p - mq) ** 2) / (2.0 * sq ** 2)
        per_dim = cross - _tg_entropy_per_dim(p)
    return max(float(np.sum(per_dim)), 0.0)


def mean(spec: DistributionSpec) -> np.ndarray:
    if spec.family is Family.BETA:
        a, b = _beta_arrays(spec)
        return spec.support.lo_array + spec.support.width * a / (a + b)
    return _tg_moments(spec)[0]


def std(spec: DistributionSpec) -> np.ndarray:
    if spec.family is Family.BETA:
        a, b = _beta_arrays(spec)
        return spec.support.width * np.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))
    return np.sqrt(_tg_moments(spec)[1])


def cdf(spec: DistributionSpec, values: Any, dim: int = 0) -> np.ndarray:
    """Marginal CDF of dimension `dim` (used by goodness-of-fit checks)."""
    x = np.asarray(values, dtype=float)
    lo, w = spec.support.lo[dim], spec.support.width[dim]
    if spec.family is Family.BETA:
        return stats.beta.cdf((x - lo) / w, spec.params.a[dim], spec.params.b[dim])
    m, s = spec.params.mean[dim], spec.params.std[dim]
    return stats.truncnorm.cdf(x, (lo - m) / s, (spec.support.hi[dim] - m) / s, loc=m, scale=s)


# ---------------------------------------------------------------------------
# sampling


class _Rejected(Exception):
    def __init__(self, dimension: int):
        super().__init__(dimension)
        self.dimension = dimension


def _rejection_sample_tg(spec: DistributionSpec, count: int, rng: np.random.Generator,
                         retry_cap: int) -> np.ndarray:
    mean, std_, lo, hi = _tg_arrays(spec)
    out = np.empty((count, spec.dims))
    pending = np.ones_like(out, dtype=bool)
    mean_b = np.broadcast_to(mean, out.shape)
    std_b = np.broadcast_to(std_, out.shape)

    def _draw_pending():
        out[pending] = rng.normal(mean_b[pending], std_b[pending])
        pending[:] = ~((out > lo) & (out < hi))
        if pending.any():
            raise _Rejected(int(np.argwhere(pending)[0][1]))

    try:
        for attempt in Retrying(stop=stop_after_attempt(retry_cap),
                                retry=retry_if_exception_type(_Rejected), reraise=True):
            with attempt:
                _draw_pending()
    except _Rejected as exc:
        _log.error(f"Rejection sampling gave up in dimension {exc.dimension} after {retry_cap} rounds")
        raise SamplingError(
            f"rejection sampling exceeded {retry_cap} consecutive rejections in dimension {exc.dimension}",
            dimension=exc.dimension,
        ) from exc
    return out


def sample(spec: DistributionSpec, count: int, rng: np.random.Generator,
           method: str = "rejection", retry_cap: int = REJECTION_RETRY_CAP) -> np.ndarray:
    """Draw `count` points, shape (count, dims), strictly inside the support.

    `method` only matters for the truncated Gaussian: "rejection" redraws
    out-of-bounds values (bounded by `retry_cap` consecutive rejections),
    "inverse_cdf" samples the truncated law directly.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    lo, w = spec.support.lo_array, spec.support.width
    if spec.family is Family.BETA:
        a, b = _beta_arrays(spec)
        u = rng.beta(a, b, size=(count, spec.dims))
        u = np.clip(u, _EDGE_EPS, 1.0 - _EDGE_EPS)
        return lo + u * w
    if method == "rejection":
        return _rejection_sample_tg(spec, count, rng, retry_cap)
    if method == "inverse_cdf":
        mean_, std_, lo_, hi_ = _tg_arrays(spec)
        draws = stats.truncnorm.rvs((lo_ - mean_) / std_, (hi_ - mean_) / std_, loc=mean_, scale=std_,
                                    size=(count, spec.dims), random_state=rng)
        return np.clip(draws, lo + _EDGE_EPS * w, lo + (1.0 - _EDGE_EPS) * w)
    raise ValueError(f"unknown sampling method {method!r}")


# ---------------------------------------------------------------------------
# transformed parameter vector


def to_vector(spec: DistributionSpec) -> np.ndarray:
    """Unconstrained parameters, laid out per dimension: [p0_d0, p1_d0, p0_d1, ...]."""
    if spec.family is Family.BETA:
        a, b = _beta_arrays(spec)
        return np.stack([np.log(a), np.log(b)], axis=1).ravel()
    unit = to_unit(spec)
    return np.stack([np.asarray(unit.params.mean), np.log(unit.params.std)], axis=1).ravel()


def from_vector(template: DistributionSpec, theta: np.ndarray) -> DistributionSpec:
    pairs = np.asarray(theta, dtype=float).reshape(template.dims, 2)
    if template.family is Family.BETA:
        return beta_spec(template.support, np.exp(pairs[:, 0]), np.exp(pairs[:, 1]))
    w = template.support.width
    return trunc_gauss_spec(template.support, template.support.lo_array + pairs[:, 0] * w, np.exp(pairs[:, 1]) * w)


def vector_bounds(spec: DistributionSpec) -> list:
    """Box bounds on the transformed vector used by the solvers."""
    if spec.family is Family.BETA:
        pair = [(math.log(BETA_SHAPE_FLOOR), math.log(1e6))] * 2
    else:
        pair = [(-1.0, 2.0), (math.log(1e-4), math.log(10.0))]
    return pair * spec.dims


def _central_difference(fn: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h
        grad[i] = (fn(theta + step) - fn(theta - step)) / (2.0 * h)
    return grad


def entropy_gradient(spec: DistributionSpec) -> np.ndarray:
    """d entropy / d to_vector(spec)."""
    if spec.family is Family.BETA:
        a, b = _beta_arrays(spec)
        tri_s = special.polygamma(1, a + b)
        ga = a * (-(a - 1.0) * special.polygamma(1, a) + (a + b - 2.0) * tri_s)
        gb = b * (-(b - 1.0) * special.polygamma(1, b) + (a + b - 2.0) * tri_s)
        return np.stack([ga, gb], axis=1).ravel()
    return _central_difference(lambda t: entropy(from_vector(spec, t)), to_vector(spec))


def kl_gradient(p: DistributionSpec, q: DistributionSpec) -> np.ndarray:
    """d KL(p || q) / d to_vector(p)."""
    check_comparable(p, q)
    if p.family is Family.BETA:
        ap, bp = _beta_arrays(p)
        aq, bq = _beta_arrays(q)
        tri_sp = special.polygamma(1, ap + bp)
        ds = (ap + bp) - (aq + bq)
        ga = ap * ((ap - aq) * special.polygamma(1, ap) - ds * tri_sp)
        gb = bp * ((bp - bq) * special.polygamma(1, bp) - ds * tri_sp)
        return np.stack([ga, gb], axis=1).ravel()
    return _central_difference(lambda t: kl_divergence(from_vector(p, t), q), to_vector(p))


def log_pdf_gradient(spec: DistributionSpec, xi: np.ndarray) -> np.ndarray:
    """Per-point score d log_pdf(xi_k) / d to_vector(spec), shape (n, 2 * dims)."""
    points = np.atleast_2d(np.asarray(xi, dtype=float))
    u = (points - spec.support.lo_array) / spec.support.width
    if spec.family is Family.BETA:
        a, b = _beta_arrays(spec)
        psi_s = special.digamma(a + b)
        ga = a * (np.log(u) - special.digamma(a) + psi_s)
        gb = b * (np.log1p(-u) - special.digamma(b) + psi_s)
    else:
        unit = to_unit(spec)
        m, s = np.asarray(unit.params.mean), np.asarray(unit.params.std)
        alpha, beta, _, r_a, r_b = _tg_terms(m, s, 0.0, 1.0)
        z = (u - m) / s
        ga = z / s - (r_a - r_b) / s
        gb = -1.0 + z * z - (alpha * r_a - beta * r_b)
    return np.stack([ga, gb], axis=2).reshape(points.shape[0], -1)


# ---------------------------------------------------------------------------
# serialization


def spec_to_dict(spec: DistributionSpec) -> Dict[str, Any]:
    return {
        "family": spec.family.value,
        "dims": spec.dims,
        "lo": list(spec.support.lo),
        "hi": list(spec.support.hi),
        "names": list(spec.support.names),
        "params": spec.params.as_rows(),
    }


def spec_from_dict(data: Dict[str, Any]) -> DistributionSpec:
    support = BoundedSupport(data["lo"], data["hi"], tuple(data.get("names") or ()))
    rows = np.asarray(data["params"], dtype=float).reshape(support.dims, 2)
    if int(data.get("dims", support.dims)) != support.dims:
        raise ValueError("serialized dims do not match bounds")
    family = Family(data["family"])
    if family is Family.BETA:
        return beta_spec(support, rows[:, 0], rows[:, 1])
    return trunc_gauss_spec(support, rows[:, 0], rows[:, 1])
