import math

import numpy as np
import pytest

from optojosephson.analysis.regime import RegimeThresholds, classify_regime, count_sign_changes
from optojosephson.integrate import IntegratorConfig, Trajectory, integrate
from optojosephson.model import State, symmetry_values
from optojosephson.scenarios import SCENARIOS

S0 = SCENARIOS["fig3a"].initial


def _evidence_finite(label):
    return all(math.isfinite(v) for v in (label.max_lyapunov, label.mean_abs_z, label.final_q))


def test_uncoupled_cavity_is_rabi():
    params = SCENARIOS["fig3a"].params.replace(lam=0.0)
    label = classify_regime(integrate(params, S0, IntegratorConfig(t_end=200.0)))
    assert label.label == "rabi"
    assert _evidence_finite(label) and not label.short_window


def test_benchmark_a_is_chaotic(fig3a_traj):
    label = classify_regime(fig3a_traj)
    assert label.label == "chaotic"
    assert label.z_sign_changes >= 2 and label.max_lyapunov > 0.005


def test_cold_photon_loss_decays():
    sc = SCENARIOS["fig3c"]
    label = classify_regime(integrate(sc.params, sc.initial, IntegratorConfig(t_end=400.0)))
    assert label.label == "decayed"
    assert label.final_q == pytest.approx(math.exp(-8.0), abs=1e-6)


def test_weak_coupling_is_josephson():
    params = SCENARIOS["fig3a"].params.replace(lam=0.01)  # C = 2
    label = classify_regime(integrate(params, S0, IntegratorConfig(t_end=200.0)))
    assert label.label == "josephson"
    assert label.z_sign_changes > 0 and label.max_lyapunov < 0.005


def test_thresholds_are_configurable(fig3a_traj):
    lax = RegimeThresholds(chaotic_exponent=10.0)
    assert classify_regime(fig3a_traj, thresholds=lax).label == "josephson"
    assert classify_regime(fig3a_traj, max_lyapunov=0.0).label == "josephson"


def test_label_is_parity_invariant(fig3a_traj):
    params = fig3a_traj.params
    s0 = fig3a_traj.state(0)
    mirror = State(-s0.x, -s0.p, -s0.z, -s0.phi, s0.q)
    mirrored = integrate(params, mirror, fig3a_traj.config)
    # negation commutes with every floating-point operation in the stepper
    np.testing.assert_allclose(mirrored.values[:, [0, 1, 2, 4]],
                               symmetry_values(fig3a_traj.values)[:, [0, 1, 2, 4]], atol=1e-12)
    a, b = classify_regime(fig3a_traj), classify_regime(mirrored)
    assert a.label == b.label
    assert a.z_sign_changes == b.z_sign_changes
    assert a.mean_abs_z == pytest.approx(b.mean_abs_z, rel=1e-12)


def test_short_window_flagged():
    params = SCENARIOS["fig3a"].params.replace(lam=0.0)
    label = classify_regime(integrate(params, S0, IntegratorConfig(t_end=100.0)))
    assert label.short_window  # 10 pi / g = 157


def test_sign_change_counter():
    assert count_sign_changes(np.array([1.0, 0.0, -1.0, -2.0, 3.0])) == 2
    assert count_sign_changes(np.array([0.5, 0.2])) == 0
