"""Principal branch of the Lambert W function for real arguments."""
from __future__ import annotations

import math

from .errors import DomainError

_BRANCH_POINT = -math.exp(-1.0)
_MAX_ITER = 64


def _initial_guess(x: float) -> float:
    if x < -0.25:
        # series in p = sqrt(2(e x + 1)) around the branch point
        p = math.sqrt(max(0.0, 2.0 * (math.e * x + 1.0)))
        return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
    if x < math.e:
        return math.log1p(x)
    lx = math.log(x)
    return lx - math.log(lx)


def lambert_w0(x: float) -> float:
    """Solve ``w * exp(w) = x`` for ``w >= -1``.

    Halley iteration from a branch-point series seed (x near -1/e), a
    ``log1p`` seed for moderate x and the asymptotic ``log x - log log x``
    otherwise.
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("lambert_w0 of NaN")
    if x < _BRANCH_POINT:
        # accept arguments that round-off pushed just past the branch point
        if x >= _BRANCH_POINT * (1.0 + 4e-16):
            return -1.0
        raise DomainError(f"lambert_w0 undefined below -1/e, got {x!r}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf

    w = _initial_guess(x)
    for _ in range(_MAX_ITER):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_new = w - step
        if w_new < -1.0:
            w_new = -1.0 + 0.5 * (w + 1.0)
        if abs(w_new - w) <= 4e-16 * (1.0 + abs(w_new)):
            w = w_new
            break
        w = w_new
    return w
