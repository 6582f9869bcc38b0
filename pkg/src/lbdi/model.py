"""Closed-form kernels of the linear birth-death process with immigration.

The process jumps ``i -> i+1`` at rate ``lam*i + nu`` and ``i -> i-1`` at
rate ``mu*i``.  Transition probabilities over a window of length ``t`` are
available in closed form as a finite signed sum, which is what every other
module builds on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError

# relative gap below which lam and mu are treated as equal
EQUAL_RATES_RTOL = 1e-12
# how far outside [0, 1] round-off is allowed to push a probability
CLAMP_TOL = 1e-12

DEFAULT_N_STATES = 5


@dataclass(frozen=True)
class Params:
    """Rate triple of the process (per unit time)."""

    lam: float
    mu: float
    nu: float

    def __post_init__(self):
        for name in ("lam", "mu", "nu"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite rate, got {value!r}")

    @property
    def is_positive_recurrent(self) -> bool:
        return self.lam < self.mu

    @property
    def r(self) -> float:
        """Immigration-to-birth ratio ``nu / lam``."""
        return self.nu / self.lam

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lam, self.mu, self.nu)


@dataclass(frozen=True)
class ObservationScheme:
    delta_t: float
    horizon: float

    def __post_init__(self):
        if not self.delta_t > 0 or not self.horizon > 0:
            raise DomainError("delta_t and horizon must be positive")

    @property
    def n_obs(self) -> int:
        return int(math.floor(self.horizon / self.delta_t + 1e-9))


@dataclass(frozen=True)
class TruncationConfig:
    """Hidden-state cutoff ``n_states`` (states 0..N) and emission cutoff ``y_max``."""

    n_states: int = DEFAULT_N_STATES
    y_max: int | None = None

    def __post_init__(self):
        if self.n_states < 2:
            raise DomainError("n_states must be at least 2")
        if self.y_max is not None and self.y_max < 1:
            raise DomainError("y_max must be at least 1")

    def resolve_y_max(self, max_observed: int = 0) -> int:
        """Emission cutoff: explicit value, else ``N + max observed + 5``."""
        if self.y_max is not None:
            return max(self.y_max, max_observed)
        return self.n_states + int(max_observed) + 5


@dataclass(frozen=True)
class TruncatedKernel:
    n_states: int
    entries: np.ndarray
    delta_t: float


@dataclass(frozen=True)
class StationaryDist:
    weights: np.ndarray
    tail_mass: float


def generator_rates(params: Params, i: int) -> tuple[float, float, float]:
    """Birth, death and total exit rate out of state ``i``."""
    if i < 0:
        raise DomainError("state index must be nonnegative")
    birth = params.lam * i + params.nu
    death = params.mu * i
    return birth, death, birth + death


def _rates_equal(params: Params) -> bool:
    return abs(params.lam - params.mu) <= EQUAL_RATES_RTOL * max(params.lam, params.mu)


def _kernel_scalars(params: Params, t: float) -> tuple[float, float, float]:
    """Return ``(q, 1 - q, c)`` with ``c = 1 - (mu/lam + 1)(1 - q)``.

    ``1 - q`` and ``c`` are formed without subtracting from 1 so that they
    keep full relative precision as ``t -> 0``.
    """
    lam, mu = params.lam, params.mu
    if _rates_equal(params):
        lt = lam * t
        return 1.0 / (1.0 + lt), lt / (1.0 + lt), (1.0 - lt) / (1.0 + lt)
    em1 = math.expm1((lam - mu) * t)  # e^{(lam-mu)t} - 1
    denom = (mu - lam) - lam * em1  # mu - lam e^{(lam-mu)t}
    q = (mu - lam) / denom
    one_minus_q = -lam * em1 / denom
    c = ((mu - lam) + mu * em1) / denom
    return q, one_minus_q, c


def q_of_t(params: Params, t: float) -> float:
    """Negative-binomial success probability of the law started at 0."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    return _kernel_scalars(params, t)[0]


def _log_gbinom(top: float, k: int) -> float:
    """log of the generalized binomial coefficient C(top, k) for top > k - 1."""
    return math.lgamma(top + 1.0) - math.lgamma(k + 1.0) - math.lgamma(top - k + 1.0)


def _clamp_probability(value: float, where: str) -> float:
    if 0.0 <= value <= 1.0:
        return value
    if -CLAMP_TOL <= value < 0.0:
        return 0.0
    if 1.0 < value <= 1.0 + CLAMP_TOL:
        return 1.0
    raise ConsistencyError(f"{where} evaluated to {value!r}, outside [0, 1]")


def _transition_prob(params: Params, scalars, i: int, j: int) -> float:
    q, omq, c = scalars
    r = params.r
    ratio = params.mu / params.lam
    if omq == 0.0:
        return 1.0 if i == j else 0.0
    log_qr = r * math.log(q)
    log_omq = math.log(omq)
    log_ratio = math.log(ratio)
    terms = []
    for l in range(min(i, j) + 1):
        if l > 0 and c == 0.0:
            break
        log_mag = (
            log_qr
            + math.log(math.comb(i, l))
            + (math.lgamma(r + i + j - l) - math.lgamma(j - l + 1.0) - math.lgamma(r + i))
            + (i - l) * log_ratio
            + (i + j - 2 * l) * log_omq
        )
        if l > 0:
            log_mag += l * math.log(abs(c))
        sign = -1.0 if (c < 0 and l % 2 == 1) else 1.0
        terms.append(sign * math.exp(log_mag))
    return _clamp_probability(math.fsum(terms), f"p[{i},{j}]")


def transition_prob(params: Params, t: float, i: int, j: int) -> float:
    """``P(X_t = j | X_0 = i)`` from the closed-form finite sum."""
    if not t > 0:
        raise DomainError("t must be positive")
    if i < 0 or j < 0:
        raise DomainError("states must be nonnegative")
    return _transition_prob(params, _kernel_scalars(params, t), i, j)


def kernel_block(params: Params, t: float, n_rows: int, n_cols: int) -> np.ndarray:
    """Untruncated ``p_{i,j}(t)`` for ``i < n_rows`` and ``j < n_cols``."""
    if not t > 0:
        raise DomainError("t must be positive")
    scalars = _kernel_scalars(params, t)
    out = np.empty((n_rows, n_cols))
    for i in range(n_rows):
        for j in range(n_cols):
            out[i, j] = _transition_prob(params, scalars, i, j)
    return out


def truncated_kernel(
    params: Params, delta_t: float, trunc: TruncationConfig | None = None
) -> TruncatedKernel:
    """Transition matrix on {0..N}; column N collects all mass above N-1."""
    trunc = trunc or TruncationConfig()
    n = trunc.n_states
    block = kernel_block(params, delta_t, n + 1, n)
    tail = 1.0 - block.sum(axis=1)
    tail[(tail < 0) & (tail > -1e-12)] = 0.0
    if np.any(tail < 0):
        raise ConsistencyError("truncated rows sum above one")
    entries = np.column_stack([block, tail])
    return TruncatedKernel(n_states=n, entries=entries, delta_t=float(delta_t))


def stationary_pmf(params: Params, i: int) -> float:
    """Invariant negative-binomial probability of state ``i``."""
    if not params.is_positive_recurrent:
        raise DomainError("no invariant law unless lam < mu")
    rho = params.lam / params.mu
    r = params.r
    log_p = _log_gbinom(r + i - 1.0, i) + i * math.log(rho) + r * math.log1p(-rho)
    return math.exp(log_p)


def stationary_dist(params: Params, trunc: TruncationConfig | None = None) -> StationaryDist:
    """Invariant law on {0..N-1}, with the mass of {N, N+1, ...} in slot N."""
    trunc = trunc or TruncationConfig()
    n = trunc.n_states
    head = np.array([stationary_pmf(params, i) for i in range(n)])
    tail = max(0.0, 1.0 - math.fsum(head))
    return StationaryDist(weights=np.append(head, tail), tail_mass=tail)


def mean_at(params: Params, t: float, i: int) -> float:
    """``E[X_t | X_0 = i]``."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    if _rates_equal(params):
        return params.nu * t + i
    d = params.lam - params.mu
    return params.nu / d * math.expm1(d * t) + i * math.exp(d * t)
