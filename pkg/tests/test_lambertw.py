import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import lambertw

from lbdi.errors import DomainError
from lbdi.lambertw import lambert_w0


def test_special_values():
    assert lambert_w0(0.0) == 0.0
    assert lambert_w0(math.e) == pytest.approx(1.0, rel=1e-15)
    assert lambert_w0(-math.exp(-1.0)) == pytest.approx(-1.0, abs=1e-7)


def test_identity_on_log_grid():
    # 200 points spread over (-1/e, 1e3], denser near the branch point
    neg = -math.exp(-1.0) * (1 - np.logspace(-14, 0, 100, endpoint=False))
    pos = np.logspace(-12, 3, 100)
    for x in np.concatenate([neg, pos]):
        w = lambert_w0(x)
        assert abs(w * math.exp(w) - x) <= 1e-13 * abs(x), x


@given(st.floats(-math.exp(-1.0) + 1e-12, 1e6))
def test_matches_scipy(x):
    assert lambert_w0(x) == pytest.approx(lambertw(x).real, rel=1e-12, abs=1e-13)


@given(st.floats(1e-9, 1 - 1e-9))
def test_inverts_q_log_q(q):
    # the argument seen by the inversion; its root is q ln q / (1 - q) in (-1, 0)
    w = q * math.log(q) / (1 - q)
    x = w * math.exp(w)
    # forming x already rounds; near w = -1 that error is amplified by 1/(1 + w)
    cond = abs(w / (1 + w))
    assert abs(lambert_w0(x) - w) <= 8 * np.finfo(float).eps * cond + 1e-15


def test_below_branch_point_rejected():
    with pytest.raises(DomainError):
        lambert_w0(-0.4)
