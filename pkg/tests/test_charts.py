"""The polar cap chart used by the stepper near |z| = q."""
import math

import numpy as np
import pytest

from optojosephson import _kernels
from optojosephson.integrate import (IntegratorConfig, from_chart, integrate,
                                     integrate_cartesian_oracle, to_chart)
from optojosephson.model import State, SystemParams

PARAMS = [
    SystemParams(g=0.2, lam=0.1, n0=1000.0),
    SystemParams(g=0.2, lam=0.1, n0=1000.0, kappa=0.02, gamma=0.01),
    SystemParams(g=0.3, lam=0.05, n0=400.0, kappa=0.05, gamma=0.02, n_th=30.0),
]


def near_pole_states(rng, n):
    out = []
    for _ in range(n):
        q = rng.uniform(0.3, 1.5)
        w = q * rng.uniform(1e-4, 0.3)
        z = rng.choice([-1.0, 1.0]) * math.sqrt(q * q - w * w)
        out.append(np.array([rng.normal(0, 50), rng.normal(0, 20), z,
                             rng.uniform(-math.pi, math.pi), q]))
    return out


def cap_copy(s):
    w = math.sqrt(s[4] ** 2 - s[2] ** 2)
    return np.array([s[0], s[1], w * math.cos(s[3]), w * math.sin(s[3]), s[4],
                     math.copysign(1.0, s[2])])


@pytest.mark.parametrize("params", PARAMS)
def test_cap_field_is_the_chain_rule_image_of_the_polar_field(params):
    rng = np.random.default_rng(11)
    par = params.as_array()
    for s in near_pole_states(rng, 40):
        dx, dp, dz, dph, dq = _kernels.base_field(*s, par)
        w = math.sqrt(s[4] ** 2 - s[2] ** 2)
        dw = (s[4] * dq - s[2] * dz) / w
        du = dw * math.cos(s[3]) - w * math.sin(s[3]) * dph
        dv = dw * math.sin(s[3]) + w * math.cos(s[3]) * dph
        got = _kernels.cap_field(*cap_copy(s), par)
        np.testing.assert_allclose(got, [dx, dp, du, dv, dq], rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("params", PARAMS)
def test_cap_jacobian_matches_finite_differences(params):
    rng = np.random.default_rng(12)
    par = params.as_array()
    for s in near_pole_states(rng, 20):
        c = cap_copy(s)
        jac = np.empty((5, 5))
        _kernels.cap_jacobian_into(*c, par, jac)
        fd = np.empty((5, 5))
        for j in range(5):
            h = 1e-7 * max(1.0, abs(c[j]))
            hi, lo = c.copy(), c.copy()
            hi[j] += h
            lo[j] -= h
            fd[:, j] = (np.array(_kernels.cap_field(*hi, par))
                        - np.array(_kernels.cap_field(*lo, par))) / (2 * h)
        scale = np.maximum(1.0, np.abs(jac))
        assert np.max(np.abs(jac - fd) / scale) < 1e-5


def test_transition_jacobians_are_inverse():
    rng = np.random.default_rng(13)
    for s in near_pole_states(rng, 20):
        to_cap, to_polar = np.empty((5, 5)), np.empty((5, 5))
        _kernels.polar_to_cap_jac(np.append(s, 0.0), to_cap)
        _kernels.cap_to_polar_jac(cap_copy(s), to_polar)
        np.testing.assert_allclose(to_polar @ to_cap, np.eye(5), atol=1e-8)


def test_chart_rows_round_trip():
    rng = np.random.default_rng(14)
    for s in near_pole_states(rng, 20) + [np.array([1.0, 2.0, 0.1, 2.0, 1.0])]:
        row = to_chart(s)
        assert row[5] in (-1.0, 0.0, 1.0)
        back = from_chart(row)
        np.testing.assert_allclose(back[[0, 1, 2, 4]], s[[0, 1, 2, 4]], atol=1e-12)
        assert math.cos(back[3] - s[3]) == pytest.approx(1.0, abs=1e-9)


def test_start_exactly_at_the_pole_matches_the_oracle():
    params = SystemParams(g=0.2, lam=0.1, n0=1000.0)
    s0 = State(0.0, 0.0, 1.0, 0.0, 1.0)
    # chaotic at these values (lambda_1 ~ 0.5), so keep the window short
    cfg = IntegratorConfig(t_end=20.0, sample_dt=0.5, rtol=1e-12, atol=1e-12)
    traj = integrate(params, s0, cfg)
    oracle = integrate_cartesian_oracle(params, s0, cfg)
    cols = [0, 1, 2, 4]
    scale = np.maximum(1.0, np.abs(oracle.values[:, cols]))
    assert np.max(np.abs(traj.values[:, cols] - oracle.values[:, cols]) / scale) < 1e-6
    assert traj.raw[0, 5] == 1.0


def test_switch_carries_tangent_vectors_along():
    s = np.array([3.0, -1.0, 0.99995, 0.7, 1.0])
    y = np.concatenate([np.append(s, 0.0), np.eye(5).ravel()])
    assert _kernels.switch_charts(y, _kernels.MODE_TANGENT)
    assert y[5] == 1.0
    back = np.empty((5, 5))
    _kernels.cap_to_polar_jac(y[:6], back)
    np.testing.assert_allclose(back @ y[6:].reshape(5, 5), np.eye(5), atol=1e-8)
