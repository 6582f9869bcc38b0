"""Exact (Gillespie) simulation of the process and its two observation schemes."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import Params


def make_rng(seed, replication: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, replication)``.

    Passing a Generator returns it unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence([int(seed), int(replication)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Path:
    """Piecewise-constant trajectory; ``states[k]`` holds from ``jump_times[k]`` on."""

    jump_times: np.ndarray
    states: np.ndarray
    x0: int
    horizon: float

    def state_at(self, t) -> np.ndarray:
        """Right-continuous evaluation at time(s) ``t``."""
        k = np.searchsorted(self.jump_times, t, side="right")
        full = np.concatenate([[self.x0], self.states])
        return full[k]

    @property
    def events(self) -> np.ndarray:
        """+1 for births, -1 for deaths."""
        prev = np.concatenate([[self.x0], self.states[:-1]])
        return self.states - prev

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "state", "event"])
            writer.writerow([repr(0.0), self.x0, ""])
            for t, s, e in zip(self.jump_times, self.states, self.events):
                writer.writerow([repr(float(t)), int(s), "birth" if e > 0 else "death"])


@dataclass(frozen=True)
class ObservationSeries:
    """``x_series[n] = X(n dt)`` for n = 0..n_obs; ``y_series[n-1]`` deaths in ((n-1)dt, n dt]."""

    x_series: np.ndarray
    y_series: np.ndarray
    delta_t: float

    @property
    def births(self) -> np.ndarray:
        return np.diff(self.x_series) + self.y_series


def simulate_path(params: Params, x0: int, horizon: float, seed=0) -> Path:
    """Event-driven simulation on (0, horizon]."""
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    if x0 < 0:
        raise DomainError("x0 must be nonnegative")
    rng = make_rng(seed)
    lam, mu, nu = params.as_tuple()
    times, states = [], []
    t, x = 0.0, int(x0)
    while True:
        birth = lam * x + nu
        total = birth + mu * x
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t > horizon:
            break
        x += 1 if rng.random() * total < birth else -1
        times.append(t)
        states.append(x)
    return Path(np.asarray(times, dtype=float), np.asarray(states, dtype=np.int64), int(x0), float(horizon))


def discretize(path: Path, delta_t: float) -> ObservationSeries:
    """Sample X on the grid n*dt and count deaths per window."""
    if not 0 < delta_t <= path.horizon:
        raise DomainError("delta_t must lie in (0, horizon]")
    n_obs = int(np.floor(path.horizon / delta_t + 1e-9))
    grid = np.arange(n_obs + 1) * delta_t
    x_series = path.state_at(grid)
    death_times = path.jump_times[path.events < 0]
    cum_deaths = np.searchsorted(death_times, grid, side="right")
    return ObservationSeries(x_series.astype(np.int64), np.diff(cum_deaths).astype(np.int64), float(delta_t))


def sample_stationary(params: Params, seed=0, size=None):
    """Draw from the invariant negative binomial as a gamma-Poisson mixture."""
    if not params.is_positive_recurrent:
        raise DomainError("no invariant law unless lam < mu")
    rng = make_rng(seed)
    scale = params.lam / (params.mu - params.lam)
    draw = rng.poisson(rng.gamma(params.r, scale, size=size))
    return int(draw) if size is None else draw.astype(np.int64)


def simulate_endpoints(params: Params, x0, t: float, n_paths: int, seed=0):
    """Vectorized batch: end state and death count after time ``t`` for many paths.

    ``x0`` is a scalar or an array of length ``n_paths``.
    """
    rng = make_rng(seed)
    lam, mu, nu = params.as_tuple()
    x = np.broadcast_to(np.asarray(x0, dtype=np.int64), (n_paths,)).copy()
    deaths = np.zeros(n_paths, dtype=np.int64)
    clock = np.zeros(n_paths)
    active = np.arange(n_paths)
    while active.size:
        xa = x[active]
        birth = lam * xa + nu
        total = birth + mu * xa
        alive = total > 0
        active, xa, birth, total = active[alive], xa[alive], birth[alive], total[alive]
        clock[active] += rng.exponential(1.0, size=active.size) / total
        jumping = clock[active] <= t
        active, birth, total = active[jumping], birth[jumping], total[jumping]
        up = rng.random(active.size) * total < birth
        x[active] += np.where(up, 1, -1)
        deaths[active] += ~up
    return x, deaths
