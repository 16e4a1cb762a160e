import json
import math

import numpy as np
import pytest

from optojosephson.exceptions import StiffnessError, UnsupportedConfigurationError, DomainError
from optojosephson.integrate import (CSV_HEADER, IntegratorConfig, SectionSpec, integrate,
                                     integrate_cartesian_oracle, sample_times, section_crossings)
from optojosephson.model import State, SystemParams, energy_values, symmetry_values
from optojosephson.scenarios import SCENARIOS

from conftest import random_states

RABI = SystemParams(g=0.2, lam=0.0, n0=1000.0)


def rabi_z(t, s0: State, g):
    # the Bloch vector precesses about the tunnelling axis at angular frequency 2g
    w0 = math.sqrt(s0.q ** 2 - s0.z ** 2)
    return s0.z * np.cos(2 * g * t) + w0 * math.sin(s0.phi) * np.sin(2 * g * t)


def test_samples_are_on_the_requested_grid(fig3a_traj):
    np.testing.assert_array_equal(fig3a_traj.times, sample_times(200.0, 0.01))
    assert fig3a_traj.times[0] == 0.0 and fig3a_traj.times[-1] == pytest.approx(200.0)
    assert fig3a_traj.step_stats["accepted"] > 0
    assert np.all(np.abs(fig3a_traj.phi) <= math.pi)


def test_energy_conserved_without_losses(fig3a_traj):
    e = fig3a_traj.energy()
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-6


def test_fig3a_inversion_keeps_switching(fig3a_traj):
    z = fig3a_traj.z
    assert np.count_nonzero(np.diff(np.sign(z)) != 0) >= 2


def test_rabi_oscillation_matches_closed_form():
    s0 = State(0, 0, 0.6, 1.3, 1.0)
    traj = integrate(RABI, s0, IntegratorConfig(t_end=100.0, sample_dt=0.05))
    np.testing.assert_allclose(traj.z, rabi_z(traj.times, s0, 0.2), atol=1e-7)
    np.testing.assert_allclose(traj.x, 0.0, atol=1e-15)


@pytest.mark.parametrize("kappa, n_th", [(0.02, 0.0), (0.02, 200.0), (0.1, 50.0), (0.005, 700.0)])
def test_photon_number_relaxes_as_derived(kappa, n_th):
    params = SCENARIOS["fig3a"].params.replace(kappa=kappa, gamma=0.01, n_th=n_th)
    traj = integrate(params, SCENARIOS["fig3a"].initial, IntegratorConfig(t_end=200.0, sample_dt=0.1))
    t = traj.times
    q_inf = 2 * n_th / params.n0
    expected = np.exp(-kappa * t) + q_inf * (1 - np.exp(-kappa * t))
    np.testing.assert_allclose(traj.q, expected, atol=1e-8, rtol=0)


@pytest.mark.parametrize("name", ["fig3a", "fig3c"])
def test_cartesian_oracle_agrees(name):
    sc = SCENARIOS[name]
    cfg = IntegratorConfig(t_end=20.0, rtol=1e-12, atol=1e-12, sample_dt=0.01)
    a = integrate(sc.params, sc.initial, cfg)
    b = integrate_cartesian_oracle(sc.params, sc.initial, cfg)
    diff = np.abs(a.values - b.values)
    diff[:, 3] = np.abs(np.angle(np.exp(1j * (a.phi - b.phi))))
    assert diff.max() < 1e-6


def test_oracle_rejects_thermal_bath():
    with pytest.raises(UnsupportedConfigurationError):
        integrate_cartesian_oracle(SCENARIOS["fig3d"].params, SCENARIOS["fig3d"].initial)


def test_parity_commutes_with_the_flow():
    rng = np.random.default_rng(7)
    cfg = IntegratorConfig(t_end=20.0, sample_dt=0.1)
    params = SCENARIOS["fig3c"].params
    for y in random_states(rng, 3, q_range=(0.5, 1.0), margin=0.1, x_scale=5.0):
        s0 = State.from_array(y)
        direct = integrate(params, s0, cfg)
        mirrored = integrate(params, State.from_array(symmetry_values(y)), cfg)
        np.testing.assert_allclose(symmetry_values(direct.values)[:, [0, 1, 2, 4]],
                                   mirrored.values[:, [0, 1, 2, 4]], atol=1e-9)


def test_step_underflow_reports_partial_trajectory():
    cfg = IntegratorConfig(t_end=1.0, h_max=1e-20, h_init=1e-20)
    with pytest.raises(StiffnessError) as info:
        integrate(SCENARIOS["fig3a"].params, SCENARIOS["fig3a"].initial, cfg)
    assert info.value.partial is not None
    assert len(info.value.partial.times) >= 1


def test_config_validation():
    with pytest.raises(DomainError, match="rtol"):
        IntegratorConfig(rtol=0)
    with pytest.raises(DomainError, match="h_init"):
        IntegratorConfig(h_init=1.0, h_max=0.1)
    with pytest.raises(DomainError, match="tolerance"):
        IntegratorConfig.from_dict({"tolerance": 1})


def test_csv_and_metadata_export(tmp_path):
    traj = integrate(RABI, State(0, 0, 0.6, 0.0, 1.0), IntegratorConfig(t_end=1.0, sample_dt=0.25))
    paths = traj.save(tmp_path / "run", "csv")
    text = paths[0].read_text(encoding="utf-8").splitlines()
    assert text[0] == CSV_HEADER
    assert len(text) == 1 + 5
    table = np.loadtxt(paths[0], delimiter=",", skiprows=1)
    # 17 significant digits reproduce the doubles exactly
    np.testing.assert_array_equal(table[:, 1:6], traj.values)
    np.testing.assert_array_equal(table[:, 6], energy_values(traj.values, RABI))
    meta = json.loads(paths[1].read_text(encoding="utf-8"))
    assert SystemParams.from_dict(meta["params"]) == RABI
    assert IntegratorConfig.from_dict(meta["config"]) == traj.config
    assert meta["step_stats"]["accepted"] > 0

    paths = traj.save(tmp_path / "run", "json")
    data = json.loads(paths[0].read_text(encoding="utf-8"))
    assert data["t"] == traj.times.tolist() and data["z"] == traj.z.tolist()


def test_section_crossings_hit_the_analytic_times():
    s0 = State(0, 0, 0.6, 0.0, 1.0)
    traj = integrate(RABI, s0, IntegratorConfig(t_end=40.0, sample_dt=0.1))
    crossings = section_crossings(traj, SectionSpec("z", 0.0))
    # z = 0.6 cos(0.4 t) vanishes at t = (pi/2 + k pi) / 0.4
    expected = (math.pi / 2 + math.pi * np.arange(len(crossings))) / 0.4
    assert len(crossings) == 5
    np.testing.assert_allclose([c.time for c in crossings], expected, atol=1e-8)
    assert all(abs(c.state.z) < 1e-9 for c in crossings)

    rising = section_crossings(traj, SectionSpec("z", 0.0, "rising"))
    assert [c.time for c in rising] == pytest.approx(expected[1::2], abs=1e-8)


def test_dense_output_between_samples():
    s0 = State(0, 0, 0.6, 0.7, 1.0)
    traj, dense = integrate(RABI, s0, IntegratorConfig(t_end=10.0, sample_dt=1.0), keep_dense=True)
    t = np.linspace(0.05, 9.95, 37)
    np.testing.assert_allclose(dense(t)[:, 2], rabi_z(t, s0, 0.2), atol=1e-8)
    np.testing.assert_allclose(dense(traj.times)[:, 2], traj.z, atol=1e-12)
