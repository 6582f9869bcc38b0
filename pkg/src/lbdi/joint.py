"""Joint law of (end state, number of deaths) over one observation period.

No closed form is available, so the law is computed by uniformization of
the jump process on ``(x, y)``: ``(x, y) -> (x+1, y)`` at rate
``lam*x + nu`` and ``(x, y) -> (x-1, y+1)`` at rate ``mu*x``.  Births out of
``x = N`` and deaths past ``y = y_max`` are dropped, so the computed law is
sub-stochastic and the missing mass is reported as leakage.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .errors import DomainError, ToleranceError
from .model import Params, TruncatedKernel, TruncationConfig

POISSON_TAIL = 1e-12
MAX_TERMS = 200_000
DEGENERATE_P = 1e-14


@dataclass(frozen=True)
class JointKernel:
    """``entries[i, j, y] = P(X_dt = j, deaths = y | X_0 = i)`` on the truncated grid."""

    n_states: int
    y_max: int
    delta_t: float
    entries: np.ndarray
    leakage: np.ndarray

    def marginal(self) -> np.ndarray:
        return self.entries.sum(axis=2)


@dataclass(frozen=True)
class EmissionTable:
    """``psi[i, j, y] = P(deaths = y | X_0 = i, X_dt = j)``."""

    psi: np.ndarray
    degenerate: np.ndarray

    @property
    def y_max(self) -> int:
        return self.psi.shape[2] - 1


def feasible_mask(n_states: int, y_max: int) -> np.ndarray:
    """True where ``j >= i - y``: deaths must cover the net decrease."""
    i = np.arange(n_states + 1)[:, None, None]
    j = np.arange(n_states + 1)[None, :, None]
    y = np.arange(y_max + 1)[None, None, :]
    return j >= i - y


def joint_kernel(
    params: Params,
    delta_t: float,
    trunc: TruncationConfig | None = None,
    y_max: int | None = None,
    tail_tol: float = POISSON_TAIL,
) -> JointKernel:
    trunc = trunc or TruncationConfig()
    if not delta_t > 0:
        raise DomainError("delta_t must be positive")
    n = trunc.n_states
    ymax = trunc.resolve_y_max() if y_max is None else int(y_max)
    lam, mu, nu = params.as_tuple()

    x = np.arange(n + 1, dtype=float)
    birth = lam * x + nu
    death = mu * x
    unif_rate = (lam + mu) * n + nu
    stay = 1.0 - (birth + death) / unif_rate
    up = birth / unif_rate
    down = death / unif_rate

    lt = unif_rate * delta_t
    k_max = int(poisson.isf(tail_tol, lt)) + 1
    if k_max > MAX_TERMS:
        raise ToleranceError(f"uniformization needs {k_max} terms (> {MAX_TERMS})")
    weights = poisson.pmf(np.arange(k_max + 1), lt)

    v = np.zeros((n + 1, n + 1, ymax + 1))
    v[np.arange(n + 1), np.arange(n + 1), 0] = 1.0
    out = weights[0] * v
    for k in range(1, k_max + 1):
        nxt = v * stay[None, :, None]
        nxt[:, 1:, :] += v[:, :-1, :] * up[None, :-1, None]
        nxt[:, :-1, 1:] += v[:, 1:, :-1] * down[None, 1:, None]
        v = nxt
        out += weights[k] * v

    out[~feasible_mask(n, ymax)] = 0.0
    leakage = 1.0 - out.sum(axis=(1, 2))
    return JointKernel(n, ymax, float(delta_t), out, leakage)


def emission_table(kernel: JointKernel, transition: TruncatedKernel) -> EmissionTable:
    """Conditional law of the death count given both ends of the period."""
    if kernel.n_states != transition.n_states or not np.isclose(kernel.delta_t, transition.delta_t):
        raise DomainError("joint and transition kernels disagree on N or delta_t")
    n, ymax = kernel.n_states, kernel.y_max
    joint = kernel.entries
    row_mass = joint.sum(axis=2)
    degenerate = (transition.entries < DEGENERATE_P) | (row_mass <= 0.0)
    psi = np.zeros_like(joint)
    ok = ~degenerate
    psi[ok] = joint[ok] / row_mass[ok][:, None]
    for i, j in zip(*np.nonzero(degenerate)):
        psi[i, j, max(0, i - j)] = 1.0
    return EmissionTable(psi, degenerate)
