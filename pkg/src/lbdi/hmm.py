"""Baum-Welch on the pair chain Z_n = (X_{n-1}, X_n) with death-count emissions.

The pair chain moves ``(i, j) -> (j, k)`` with probability ``p[j, k]``; every
other pair transition is zero.  The recursions below never build the dense
``(N+1)^2 x (N+1)^2`` matrix: the forward step at ``(i, j)`` only reads the
column sum ``sum_h alpha(h, i)`` and the backward value at ``(i, j)`` only
depends on ``j``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from .errors import DomainError, LBDIError, ZeroLikelihood
from .estimators import ProbTriple, invert_g
from .joint import emission_table, joint_kernel
from .model import Params, TruncationConfig, stationary_dist, truncated_kernel

log = logging.getLogger(__name__)

AGGREGATIONS = ("predecessor-mean", "weighted")


@dataclass(frozen=True)
class HmmModel:
    p_matrix: np.ndarray  # (S, S) hidden one-step kernel
    psi: np.ndarray  # (S, S, Y+1) emission law per pair
    rho: np.ndarray  # (S, S) law of the first pair
    delta_t: float

    @property
    def n_states(self) -> int:
        return self.p_matrix.shape[0] - 1

    @property
    def y_max(self) -> int:
        return self.psi.shape[2] - 1

    def triple(self) -> ProbTriple:
        p = self.p_matrix
        return ProbTriple(float(p[0, 0]), float(p[0, 1]), float(p[1, 0]))


@dataclass
class ForwardBackward:
    alpha: np.ndarray  # (T, S, S), each slice sums to 1
    scales: np.ndarray  # (T,)
    log_likelihood: float
    beta_j: np.ndarray | None = None  # (T, S), beta(i, j) = beta_j[t, j]

    @property
    def beta(self) -> np.ndarray:
        """Scaled backward values broadcast over the first pair index."""
        s = self.beta_j.shape[1]
        return np.broadcast_to(self.beta_j[:, None, :], (self.beta_j.shape[0], s, s))


@dataclass
class PosteriorStats:
    gamma: np.ndarray  # (T, S, S)
    xi_sums: np.ndarray  # (S, S, S): [i, j, k] expected count of (i, j) -> (j, k)
    gamma_trans: np.ndarray  # (S, S): gamma summed over t = 1..T-1
    gamma_total: np.ndarray  # (S, S): gamma summed over t = 1..T
    emission_counts: np.ndarray  # (S, S, Y+1)


@dataclass
class EmStepInfo:
    log_likelihood: float
    empty_rows: int = 0
    carried_pij: int = 0


@dataclass
class StartResult:
    start_params: Params
    model: HmmModel | None = None
    loglik_trace: list = field(default_factory=list)
    triple_trace: list = field(default_factory=list)
    final_loglik: float = -math.inf
    n_iters: int = 0
    converged: bool = False
    params: Params | None = None
    error: str | None = None
    flags: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.params is not None

    @property
    def fitted(self) -> bool:
        """EM finished, even if the kernel could not be inverted."""
        return self.model is not None and math.isfinite(self.final_loglik)


@dataclass
class BaumWelchFit:
    model: HmmModel
    p_triple: ProbTriple
    params: Params | None
    loglik_trace: list
    n_iters: int
    converged: bool
    start_params: Params
    final_loglik: float
    starts: list
    chosen: int


# -- compiled kernels ---------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _forward_kernel(p, psi, rho, y):
    T = y.shape[0]
    S = p.shape[0]
    alpha = np.zeros((T, S, S))
    scales = np.zeros(T)
    c = 0.0
    for i in range(S):
        for j in range(S):
            a = rho[i, j] * psi[i, j, y[0]]
            alpha[0, i, j] = a
            c += a
    scales[0] = c
    if c <= 0.0:
        return alpha, scales, 0
    for i in range(S):
        for j in range(S):
            alpha[0, i, j] /= c
    col = np.zeros(S)
    for t in range(1, T):
        for i in range(S):
            s = 0.0
            for h in range(S):
                s += alpha[t - 1, h, i]
            col[i] = s
        c = 0.0
        yt = y[t]
        for i in range(S):
            ci = col[i]
            for j in range(S):
                a = psi[i, j, yt] * p[i, j] * ci
                alpha[t, i, j] = a
                c += a
        scales[t] = c
        if c <= 0.0:
            return alpha, scales, t
        for i in range(S):
            for j in range(S):
                alpha[t, i, j] /= c
    return alpha, scales, -1


@nb.njit(cache=True, nogil=True)
def _backward_kernel(p, psi, y, scales):
    T = y.shape[0]
    S = p.shape[0]
    b = np.zeros((T, S))
    for j in range(S):
        b[T - 1, j] = 1.0
    for t in range(T - 1, 0, -1):
        yt = y[t]
        for j in range(S):
            s = 0.0
            for k in range(S):
                s += p[j, k] * psi[j, k, yt] * b[t, k]
            b[t - 1, j] = s / scales[t]
    return b


@nb.njit(cache=True, nogil=True)
def _accumulate_kernel(alpha, b, p, psi, y, scales, n_y):
    T = y.shape[0]
    S = p.shape[0]
    xi = np.zeros((S, S, S))
    g_trans = np.zeros((S, S))
    g_total = np.zeros((S, S))
    em = np.zeros((S, S, n_y))
    gamma = np.zeros((T, S, S))
    w = np.zeros((S, S))
    for t in range(T):
        yt = y[t]
        for i in range(S):
            for j in range(S):
                g = alpha[t, i, j] * b[t, j]
                gamma[t, i, j] = g
                g_total[i, j] += g
                em[i, j, yt] += g
                if t < T - 1:
                    g_trans[i, j] += g
        if t < T - 1:
            yn = y[t + 1]
            inv = 1.0 / scales[t + 1]
            for j in range(S):
                for k in range(S):
                    w[j, k] = p[j, k] * psi[j, k, yn] * b[t + 1, k] * inv
            for i in range(S):
                for j in range(S):
                    a = alpha[t, i, j]
                    if a == 0.0:
                        continue
                    for k in range(S):
                        xi[i, j, k] += a * w[j, k]
    return gamma, xi, g_trans, g_total, em


# -- public API ---------------------------------------------------------------


def _check_obs(model: HmmModel, y) -> np.ndarray:
    y = np.ascontiguousarray(np.asarray(y, dtype=np.int64))
    if y.ndim != 1 or y.size == 0:
        raise DomainError("observations must be a nonempty 1-d sequence")
    if y.min() < 0:
        raise DomainError("observations must be nonnegative counts")
    if y.max() > model.y_max:
        raise ZeroLikelihood(f"observation {int(y.max())} exceeds emission support {model.y_max}")
    return y


def init_model(
    params0: Params, delta_t: float, trunc: TruncationConfig | None = None, max_observed: int = 0
) -> HmmModel:
    """Initial model built from the closed-form kernels of ``params0``."""
    trunc = trunc or TruncationConfig()
    if not params0.is_positive_recurrent:
        raise DomainError("initial rates must satisfy lam < mu")
    kernel = truncated_kernel(params0, delta_t, trunc)
    jk = joint_kernel(params0, delta_t, trunc, y_max=trunc.resolve_y_max(max_observed))
    psi = emission_table(jk, kernel).psi
    pi = stationary_dist(params0, trunc).weights
    rho = pi[:, None] * kernel.entries
    rho /= rho.sum()
    return HmmModel(kernel.entries.copy(), psi, rho, float(delta_t))


def forward(model: HmmModel, y) -> ForwardBackward:
    y = _check_obs(model, y)
    alpha, scales, bad = _forward_kernel(model.p_matrix, model.psi, model.rho, y)
    if bad >= 0:
        raise ZeroLikelihood(f"observation {int(y[bad])} at step {bad + 1} has zero probability")
    return ForwardBackward(alpha, scales, float(np.sum(np.log(scales))))


def backward(model: HmmModel, y, scales) -> np.ndarray:
    """Scaled backward values ``beta_j[t, j]`` (shared by every pair ending in j)."""
    y = _check_obs(model, y)
    return _backward_kernel(model.p_matrix, model.psi, y, np.asarray(scales, dtype=float))


def forward_backward(model: HmmModel, y) -> ForwardBackward:
    fb = forward(model, y)
    fb.beta_j = backward(model, y, fb.scales)
    return fb


def posterior(model: HmmModel, y, fb: ForwardBackward | None = None) -> PosteriorStats:
    y = _check_obs(model, y)
    if fb is None or fb.beta_j is None:
        fb = forward_backward(model, y)
    gamma, xi, g_trans, g_total, em = _accumulate_kernel(
        fb.alpha, fb.beta_j, model.p_matrix, model.psi, y, fb.scales, model.y_max + 1
    )
    return PosteriorStats(gamma, xi, g_trans, g_total, em)


def aggregate_pij(q_updates, previous=None, rule: str = "predecessor-mean", weights=None):
    """Collapse per-predecessor estimates ``q_updates[h, i, j]`` of ``p[i, j]``.

    ``predecessor-mean`` averages over predecessors ``h`` whose estimate is
    nonzero; ``weighted`` uses ``weights[h, i]`` (expected visits to pair
    ``(h, i)``) instead.  Entries with no usable predecessor keep
    ``previous[i, j]``.  Rows are renormalized.  Returns ``(p, n_carried)``.
    """
    q = np.asarray(q_updates, dtype=float)
    s = q.shape[0]
    prev = np.full((s, s), 1.0 / s) if previous is None else np.asarray(previous, dtype=float)
    if rule == "predecessor-mean":
        nonzero = (q != 0.0).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = q.sum(axis=0) / nonzero
        empty = nonzero == 0
    elif rule == "weighted":
        if weights is None:
            raise DomainError("weighted aggregation needs predecessor weights")
        wts = np.asarray(weights, dtype=float)
        num = np.einsum("hi,hij->ij", wts, q)
        den = wts.sum(axis=0)[:, None] * np.ones((1, s))
        with np.errstate(invalid="ignore", divide="ignore"):
            p = num / den
        empty = den <= 0.0
    else:
        raise DomainError(f"unknown aggregation rule {rule!r}")
    p = np.where(empty, prev, p)
    rows = p.sum(axis=1, keepdims=True)
    bad_rows = rows[:, 0] <= 0.0
    p[bad_rows] = prev[bad_rows]
    p /= p.sum(axis=1, keepdims=True)
    return p, int(empty.sum())


def em_step(model: HmmModel, y, aggregation: str = "weighted"):
    """One adapted Baum-Welch update.  Returns ``(new_model, info)``.

    ``info.log_likelihood`` is the data log-likelihood under ``model``
    (before the update).
    """
    y = _check_obs(model, y)
    fb = forward_backward(model, y)
    stats = posterior(model, y, fb)
    s = model.n_states + 1

    # pair-transition estimates Q[(i,j) -> (j,k)] stored as q[i, j, k]
    trans_ok = stats.gamma_trans > 0.0
    q = np.zeros((s, s, s))
    np.divide(stats.xi_sums, stats.gamma_trans[:, :, None], out=q, where=trans_ok[:, :, None])
    # rows never visited before the last step keep the previous model
    q[~trans_ok] = model.p_matrix[np.nonzero(~trans_ok)[1]]

    p_new, carried = aggregate_pij(q, model.p_matrix, aggregation, weights=stats.gamma_trans)

    tot_ok = stats.gamma_total > 0.0
    psi = model.psi.copy()
    psi[tot_ok] = stats.emission_counts[tot_ok] / stats.gamma_total[tot_ok][:, None]

    rho = stats.gamma[0] / stats.gamma[0].sum()
    info = EmStepInfo(fb.log_likelihood, empty_rows=int((~trans_ok).sum()), carried_pij=carried)
    return replace(model, p_matrix=p_new, psi=psi, rho=rho), info


def log_likelihood(model: HmmModel, y) -> float:
    return forward(model, y).log_likelihood


def run_em(model: HmmModel, y, max_iters: int = 500, tol: float = 1e-9, aggregation: str = "weighted"):
    """Iterate :func:`em_step` until the p-matrix moves less than ``tol`` (Frobenius)."""
    trace, triples = [], []
    converged = False
    flags = {"empty_rows": 0, "carried_pij": 0}
    n = 0
    for n in range(1, max_iters + 1):
        new, info = em_step(model, y, aggregation)
        trace.append(info.log_likelihood)
        triples.append(tuple(new.p_matrix[[0, 0, 1], [0, 1, 0]]))
        flags["empty_rows"] = max(flags["empty_rows"], info.empty_rows)
        flags["carried_pij"] = max(flags["carried_pij"], info.carried_pij)
        change = np.linalg.norm(new.p_matrix - model.p_matrix)
        model = new
        if change < tol:
            converged = True
            break
    return model, trace, triples, n, converged, flags


def fit_start(
    y, params0: Params, delta_t: float, trunc: TruncationConfig, max_iters: int = 500, tol: float = 1e-9,
    aggregation: str = "weighted",
) -> StartResult:
    res = StartResult(start_params=params0)
    try:
        y = np.asarray(y, dtype=np.int64)
        model = init_model(params0, delta_t, trunc, max_observed=int(y.max()))
        model, trace, triples, n, conv, flags = run_em(model, y, max_iters, tol, aggregation)
        res.model, res.loglik_trace, res.triple_trace = model, trace, triples
        res.n_iters, res.converged, res.flags = n, conv, flags
        res.final_loglik = log_likelihood(model, y)
        res.params = invert_g(model.triple(), delta_t)
    except LBDIError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        log.info("start %s failed: %s", params0, res.error)
    return res


def fit(
    y,
    init_grid,
    delta_t: float = 1.0,
    trunc: TruncationConfig | None = None,
    max_iters: int = 500,
    tol: float = 1e-9,
    aggregation: str = "weighted",
    require_inversion: bool = True,
) -> BaumWelchFit:
    """Multi-start EM; keeps the start whose final model has the highest likelihood.

    With ``require_inversion=False`` starts whose kernel falls outside the
    inverse map's domain stay eligible (``params`` is then None), which is
    what a least-squares fit on the full kernel needs.
    """
    trunc = trunc or TruncationConfig()
    grid = list(init_grid)
    if not grid:
        raise DomainError("init_grid is empty")
    starts = [fit_start(y, p0, delta_t, trunc, max_iters, tol, aggregation) for p0 in grid]
    usable = [k for k, s in enumerate(starts) if (s.ok if require_inversion else s.fitted)]
    if not usable:
        raise LBDIError("every start failed: " + "; ".join(s.error or "?" for s in starts))
    best = max(usable, key=lambda k: starts[k].final_loglik)
    b = starts[best]
    return BaumWelchFit(
        model=b.model,
        p_triple=b.model.triple(),
        params=b.params,
        loglik_trace=b.loglik_trace,
        n_iters=b.n_iters,
        converged=b.converged,
        start_params=b.start_params,
        final_loglik=b.final_loglik,
        starts=starts,
        chosen=best,
    )


def write_trace_csv(fit_result: BaumWelchFit, path) -> None:
    """One row per (start, iteration): loglik before the update and the updated triple."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start", "iteration", "loglik", "p00", "p01", "p10"])
        for k, s in enumerate(fit_result.starts):
            for it, (ll, tr) in enumerate(zip(s.loglik_trace, s.triple_trace), start=1):
                w.writerow([k, it, repr(float(ll))] + [repr(float(v)) for v in tr])
