"""Estimators of the rate triple from one-period transition probabilities.

The three transition probabilities ``p00``, ``p01`` and ``p10`` determine
``(lam, mu, nu)`` in closed form through the Lambert W function.  This module
holds that inverse map, its Jacobian, the asymptotic covariance of the
plug-in estimator built on the transition-count MLE, and a least-squares
alternative that matches a whole estimated kernel.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, InsufficientData, NonConvergence, SingularInversion
from .lambertw import lambert_w0
from .model import Params, TruncationConfig, _kernel_scalars, kernel_block, stationary_pmf

log = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class ProbTriple:
    p00: float
    p01: float
    p10: float

    def validate(self) -> None:
        for name in ("p00", "p01", "p10"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise DomainError(f"{name}={v!r} must lie strictly inside (0, 1)")
        if self.p00 + self.p01 > 1.0:
            raise DomainError("p00 + p01 exceeds one")

    def as_array(self) -> np.ndarray:
        return np.array([self.p00, self.p01, self.p10])


@dataclass(frozen=True)
class InversionIntermediates:
    q: float
    u: float
    r: float
    lambert_arg: float


@dataclass(frozen=True)
class AsymptoticCovariance:
    sigma_prime: np.ndarray
    jacobian: np.ndarray
    sigma: np.ndarray

    @property
    def std_devs(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sigma))


@dataclass(frozen=True)
class CountMatrix:
    counts: np.ndarray

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @classmethod
    def from_series(cls, x_series, n_states: int | None = None) -> "CountMatrix":
        """Tabulate one-step transitions of an observed integer chain."""
        x = np.asarray(x_series, dtype=np.int64)
        size = int(x.max()) + 1 if n_states is None else n_states + 1
        size = max(size, 2)
        counts = np.zeros((size, size), dtype=np.int64)
        np.add.at(counts, (np.minimum(x[:-1], size - 1), np.minimum(x[1:], size - 1)), 1)
        return cls(counts)


@dataclass
class PluginEstimate:
    params: Params
    triple: ProbTriple
    std_errors: np.ndarray
    covariance: np.ndarray


@dataclass
class LeastSquaresResult:
    params: Params
    objective: float
    converged: bool
    n_iter: int
    message: str = ""
    history: list = field(default_factory=list)


def forward_triple(params: Params, delta_t: float) -> ProbTriple:
    """``(p00, p01, p10)`` of the process over one period."""
    q, omq, _ = _kernel_scalars(params, delta_t)
    qr = q ** params.r
    return ProbTriple(qr, qr * params.r * omq, qr * (params.mu / params.lam) * omq)


def inversion_intermediates(triple: ProbTriple) -> InversionIntermediates:
    triple.validate()
    p00, p01, p10 = float(triple.p00), float(triple.p01), float(triple.p10)
    lp = math.log(p00)
    # p00^(p00/p01 + 1) ln(p00) / p01, evaluated in log space
    arg = -math.exp((p00 / p01 + 1.0) * lp + math.log(-lp) - math.log(p01))
    w = lambert_w0(arg)
    q = p01 / (p00 * lp) * w
    u = 1.0 - p10 / p00
    if not (0.0 < q < 1.0):
        raise DomainError(f"q={q!r} outside (0, 1)")
    if not (0.0 < u < 1.0):
        raise DomainError(f"u={u!r} outside (0, 1); p10 must be below p00")
    if abs(q - u) < SINGULAR_TOL:
        raise SingularInversion("q and u coincide; inverse map is singular")
    r = lp / math.log(q)
    # the consistent Lambert root is q ln q / (1 - q)
    expected = q * math.log(q) / (1.0 - q)
    if not math.isclose(w, expected, rel_tol=1e-8, abs_tol=1e-12):
        raise DomainError("Lambert root inconsistent with the recovered q")
    return InversionIntermediates(q=q, u=u, r=r, lambert_arg=arg)


def _rates_from_qur(q, u, r, delta_t):
    log_uq = math.log(u / q)
    lam = log_uq * (q - 1.0) / (delta_t * (q - u))
    mu = log_uq * (u - 1.0) / (delta_t * (q - u))
    return lam, mu, r * lam


def invert_g(triple: ProbTriple, delta_t: float) -> Params:
    """Recover ``(lam, mu, nu)`` from ``(p00, p01, p10)`` over a period ``delta_t``."""
    if not delta_t > 0:
        raise DomainError("delta_t must be positive")
    inter = inversion_intermediates(triple)
    lam, mu, nu = _rates_from_qur(inter.q, inter.u, inter.r, delta_t)
    if not (lam > 0 and mu > 0 and nu > 0):
        raise DomainError(f"inversion produced nonpositive rates {(lam, mu, nu)}")
    return Params(lam, mu, nu)


def jacobian_g(triple: ProbTriple, delta_t: float) -> np.ndarray:
    """Jacobian of the inverse map: rows (lam, mu, nu), columns (p00, p01, p10).

    Chain rule through the intermediates q, u and r:
    ``dq/dp00 = q(ln p00 + 1)(1 - q) / (q p00 ln p00 + p01)``,
    ``dq/dp01 = q(q - 1) / (p01 (q + p01 / (p00 ln p00)))``, ``dq/dp10 = 0``,
    ``du/dp00 = (1 - u)/p00``, ``du/dp10 = -1/p00``, and
    ``r = ln p00 / ln q``.
    """
    inter = inversion_intermediates(triple)
    q, u, r = inter.q, inter.u, inter.r
    p00, p01 = triple.p00, triple.p01
    lp = math.log(p00)
    lq = math.log(q)
    dt = delta_t

    dq = np.array([
        q * (lp + 1.0) * (1.0 - q) / (q * p00 * lp + p01),
        q * (q - 1.0) / (p01 * (q + p01 / (p00 * lp))),
        0.0,
    ])
    du = np.array([(1.0 - u) / p00, 0.0, -1.0 / p00])
    dr = np.array([1.0 / (p00 * lq), 0.0, 0.0]) - lp / (lq * lq * q) * dq

    log_uq = math.log(u / q)
    d = q - u
    lam = log_uq * (q - 1.0) / (dt * d)
    mu = log_uq * (u - 1.0) / (dt * d)
    # partials of lam and mu with respect to q and u
    lam_q = (-(q - 1.0) / q + log_uq - log_uq * (q - 1.0) / d) / (dt * d)
    lam_u = ((q - 1.0) / u + log_uq * (q - 1.0) / d) / (dt * d)
    mu_q = (-(u - 1.0) / q - log_uq * (u - 1.0) / d) / (dt * d)
    mu_u = ((u - 1.0) / u + log_uq + log_uq * (u - 1.0) / d) / (dt * d)

    dlam = lam_q * dq + lam_u * du
    dmu = mu_q * dq + mu_u * du
    dnu = r * dlam + lam * dr
    return np.vstack([dlam, dmu, dnu])


def _sigma_prime_from(p00, p01, p10, w0, w1) -> np.ndarray:
    """Multinomial covariance of the three ratios; ``w0``/``w1`` weight rows 0 and 1."""
    return np.array([
        [p00 * (1.0 - p00) / w0, -p00 * p01 / w0, 0.0],
        [-p00 * p01 / w0, p01 * (1.0 - p01) / w0, 0.0],
        [0.0, 0.0, p10 * (1.0 - p10) / w1],
    ])


def sigma_prime(params: Params, delta_t: float) -> np.ndarray:
    """Limiting covariance of the normalized transition-count MLE of the triple."""
    if not params.is_positive_recurrent:
        raise DomainError("asymptotic covariance needs lam < mu")
    t = forward_triple(params, delta_t)
    return _sigma_prime_from(
        t.p00, t.p01, t.p10, stationary_pmf(params, 0), stationary_pmf(params, 1)
    )


def asymptotic_covariance(params: Params, delta_t: float) -> AsymptoticCovariance:
    """``Dg Sigma' Dg^T`` at the true parameters."""
    sp = sigma_prime(params, delta_t)
    jac = jacobian_g(forward_triple(params, delta_t), delta_t)
    sigma = jac @ sp @ jac.T
    return AsymptoticCovariance(sp, jac, 0.5 * (sigma + sigma.T))


def mle_triple(counts: CountMatrix) -> tuple[ProbTriple, int, int]:
    """Transition-count ratios for 0->0, 0->1 and 1->0 plus their row totals."""
    c = np.asarray(counts.counts)
    totals = c.sum(axis=1)
    if c.shape[0] < 2 or totals[0] == 0 or totals[1] == 0:
        raise InsufficientData("need at least one observed transition out of states 0 and 1")
    n0, n1 = int(totals[0]), int(totals[1])
    triple = ProbTriple(float(c[0, 0] / n0), float(c[0, 1] / n0), float(c[1, 0] / n1))
    return triple, n0, n1


def plugin_estimate(triple: ProbTriple, delta_t: float, n_from_0: int, n_from_1: int) -> PluginEstimate:
    """Plug-in rates with delta-method standard errors from the observed counts."""
    params = invert_g(triple, delta_t)
    jac = jacobian_g(triple, delta_t)
    sp = _sigma_prime_from(triple.p00, triple.p01, triple.p10, n_from_0, n_from_1)
    cov = jac @ sp @ jac.T
    cov = 0.5 * (cov + cov.T)
    return PluginEstimate(params, triple, np.sqrt(np.clip(np.diag(cov), 0.0, None)), cov)


def _ls_objective(theta, p_hat, delta_t, n):
    try:
        params = Params(*theta)
        model = kernel_block(params, delta_t, n, n)
    except Exception:
        return np.inf
    return float(np.sum((model - p_hat[:n, :n]) ** 2))


def least_squares_fit(
    p_hat,
    delta_t: float,
    trunc: TruncationConfig,
    init: Params,
    max_iter: int = 500,
    gtol: float = 1e-10,
    strict: bool = False,
) -> LeastSquaresResult:
    """Fit rates so the closed-form kernel matches ``p_hat`` on rows/cols 0..N-1.

    The last row and column of ``p_hat`` carry truncation bias and are left
    out.  L-BFGS-B runs on rates scaled by ``init`` with central-difference
    gradients; rates are kept strictly positive by the box.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    n = trunc.n_states
    if p_hat.shape[0] < n + 1 or p_hat.shape[1] < n + 1:
        raise DomainError("p_hat smaller than the truncation")
    scale = np.array(init.as_tuple())
    # objective values are O(1e-6); rescale so gtol is meaningful
    obj_scale = 1e4

    def f(z):
        return obj_scale * _ls_objective(z * scale, p_hat, delta_t, n)

    def grad(z):
        g = np.empty(3)
        for k in range(3):
            h = 1e-6 * max(abs(z[k]), 1e-3)
            zp, zm = z.copy(), z.copy()
            zp[k] += h
            zm[k] = max(z[k] - h, 1e-12)
            g[k] = (f(zp) - f(zm)) / (zp[k] - zm[k])
        return g

    history = []
    res = minimize(
        f,
        np.ones(3),
        jac=grad,
        method="L-BFGS-B",
        bounds=[(1e-8, None)] * 3,
        callback=lambda z: history.append(f(z) / obj_scale),
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-16, "maxcor": 20},
    )
    theta = [float(v) for v in res.x * scale]
    converged = bool(res.success) or res.nit < max_iter
    if not converged:
        if strict:
            raise NonConvergence(f"least-squares fit did not converge: {res.message}")
        log.warning("least-squares fit hit iteration cap: %s", res.message)
    return LeastSquaresResult(
        params=Params(*theta),
        objective=float(res.fun) / obj_scale,
        converged=converged,
        n_iter=int(res.nit),
        message=str(res.message),
        history=history,
    )
