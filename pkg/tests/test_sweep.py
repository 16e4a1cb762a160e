import json

import numpy as np
import pytest

from optojosephson import sweep as sweep_mod
from optojosephson.analysis.regime import classify_regime
from optojosephson.exceptions import DomainError, SpecHashMismatch
from optojosephson.integrate import IntegratorConfig, integrate
from optojosephson.model import SystemParams
from optojosephson.scenarios import SCENARIOS
from optojosephson.sweep import (PAPER_DEFAULT_STATE, SweepSpec, default_axes, load_checkpoint,
                                 resume_sweep, run_sweep)

BASE = SCENARIOS["fig3a"].params
SHORT = IntegratorConfig(t_end=10.0, sample_dt=0.5)


def _grid_spec(**kw):
    spec = dict(base=BASE, axes=(("n0", (100.0, 400.0, 1000.0)), ("kappa", (0.0, 0.01, 0.02, 0.05))),
                task="final_state", integrator=SHORT)
    spec.update(kw)
    return SweepSpec(**spec)


def test_single_cell_matches_direct_classification():
    spec = SweepSpec(base=BASE, axes=(("lambda", (0.1,)),), task="classify_regime")
    (cell,) = run_sweep(spec).cells
    direct = classify_regime(integrate(BASE, PAPER_DEFAULT_STATE, IntegratorConfig()))
    assert cell.result["label"] == "chaotic"
    assert cell.result == direct.to_dict()


def test_cells_are_row_major():
    diagram = run_sweep(_grid_spec())
    assert [c.index for c in diagram.cells] == list(range(12))
    assert diagram.cells[5].axis_indices == (1, 1)
    assert diagram.cells[5].axis_values == (400.0, 0.01)
    assert diagram.cells[5].diagnostics["params"]["kappa"] == 0.01
    assert diagram.status == "complete"
    assert all(c.wall_time >= 0 for c in diagram.cells)
    q = diagram.grid("energy")
    assert q.shape == (3, 4)


def test_worker_count_does_not_change_results():
    one = run_sweep(_grid_spec(workers=1)).to_ndjson()
    two = run_sweep(_grid_spec(workers=2)).to_ndjson()
    assert one == two


def test_export_schema(tmp_path):
    diagram = run_sweep(_grid_spec())
    nd, summary = diagram.write(tmp_path)
    lines = [json.loads(l) for l in nd.read_text(encoding="utf-8").splitlines()]
    assert len(lines) == 12
    assert all(l["schema_version"] == sweep_mod.SCHEMA_VERSION for l in lines)
    assert all("wall_time" not in l for l in lines)
    data = json.loads(summary.read_text(encoding="utf-8"))
    assert data["schema_version"] == sweep_mod.SCHEMA_VERSION
    assert data["n_completed"] == 12 and data["n_failed"] == 0
    assert SweepSpec.from_dict(data["spec"]).spec_hash() == diagram.spec.spec_hash()


def test_partial_then_resume_matches_full_run(tmp_path):
    full = run_sweep(_grid_spec()).to_ndjson()
    ckpt = tmp_path / "ck.ndjson"
    partial = run_sweep(_grid_spec(checkpoint_path=str(ckpt)), max_new_cells=5)
    assert partial.status == "partial" and len(partial.cells) == 5
    header, cells = load_checkpoint(ckpt)
    assert header["schema_version"] == sweep_mod.SCHEMA_VERSION
    assert sorted(cells) == [0, 1, 2, 3, 4]
    resumed = resume_sweep(ckpt)
    assert resumed.status == "complete"
    assert resumed.to_ndjson() == full


def test_interrupted_run_resumes(tmp_path, monkeypatch):
    ckpt = tmp_path / "ck.ndjson"
    spec = _grid_spec(checkpoint_path=str(ckpt))
    real = sweep_mod.compute_cell
    calls = []

    def flaky(spec, flat):
        if len(calls) == 7:
            raise KeyboardInterrupt
        calls.append(flat)
        return real(spec, flat)

    monkeypatch.setattr(sweep_mod, "compute_cell", flaky)
    with pytest.raises(KeyboardInterrupt):
        run_sweep(spec)
    monkeypatch.setattr(sweep_mod, "compute_cell", real)
    _, cells = load_checkpoint(ckpt)
    assert len(cells) == 7
    assert resume_sweep(ckpt, spec).to_ndjson() == run_sweep(_grid_spec()).to_ndjson()


def test_resume_of_complete_sweep_is_a_no_op(tmp_path, monkeypatch):
    ckpt = tmp_path / "ck.ndjson"
    done = run_sweep(_grid_spec(checkpoint_path=str(ckpt)))

    def boom(*args):
        raise AssertionError("no cell should be recomputed")

    monkeypatch.setattr(sweep_mod, "compute_cell", boom)
    assert resume_sweep(ckpt).to_ndjson() == done.to_ndjson()


def test_resume_rejects_other_spec(tmp_path):
    ckpt = tmp_path / "ck.ndjson"
    run_sweep(_grid_spec(checkpoint_path=str(ckpt)), max_new_cells=2)
    with pytest.raises(SpecHashMismatch):
        resume_sweep(ckpt, _grid_spec(task="classify_regime"))
    # runtime-only fields do not enter the hash
    assert resume_sweep(ckpt, _grid_spec(workers=3)).status == "complete"


def test_failed_cells_are_recorded_not_raised():
    bad = IntegratorConfig(t_end=1.0, h_init=1e-20, h_max=1e-20)
    diagram = run_sweep(_grid_spec(integrator=bad, axes=(("n0", (100.0, 200.0)),)))
    assert diagram.status == "complete"
    assert all(c.result is None and "StiffnessError" in c.diagnostics["error"] for c in diagram.cells)
    assert diagram.summary()["n_failed"] == 2


def test_fixed_point_sweep_reports_pitchfork():
    spec = SweepSpec(base=BASE.replace(n0=10.0), axes=(("n0", tuple(np.arange(15.0, 26.0))),),
                     task="fixed_point_count")
    events = run_sweep(spec).summary()["bifurcations"]
    pitchforks = [e for e in events if e["type"] == "pitchfork"]
    assert len(pitchforks) == 1
    lo, hi = pitchforks[0]["bracket"]
    assert lo <= 20.0 <= hi


def test_max_lyapunov_task():
    spec = SweepSpec(base=BASE, axes=(("lambda", (0.0, 0.1)),), task="max_lyapunov",
                     lyapunov=sweep_mod.LyapunovSettings(horizon=300.0, transient=50.0))
    rabi, chaos = run_sweep(spec).cells
    assert rabi.result["max_lyapunov"] < 5e-3 < chaos.result["max_lyapunov"]


@pytest.mark.parametrize("kwargs, field", [
    (dict(axes=(("mass", (1.0,)),)), "axes"),
    (dict(axes=(("n0", ()),)), "axes"),
    (dict(axes=(("n0", (1.0, 3.0, 2.0)),)), "monotone"),
    (dict(axes=(("g", (0.1,)), ("n0", (10.0,)), ("kappa", (0.0,)))), "axes"),
    (dict(axes=(("n0", (0.5,)),)), "n0"),
    (dict(task="plot"), "task"),
    (dict(workers=0), "workers"),
    (dict(initial_state="random"), "initial_state"),
])
def test_spec_validation(kwargs, field):
    with pytest.raises(DomainError, match=field):
        _grid_spec(**kwargs)


def test_spec_round_trip_and_grid_form():
    spec = _grid_spec()
    assert SweepSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
    data = {"base": BASE.to_dict(), "axes": [{"name": "kappa", "start": 0.0, "stop": 0.1, "num": 5}]}
    assert SweepSpec.from_dict(data).axes[0][1] == tuple(np.linspace(0, 0.1, 5))
    with pytest.raises(DomainError, match="colour"):
        SweepSpec.from_dict({**data, "colour": 1})


def test_default_axes_are_valid():
    SweepSpec(base=BASE, axes=default_axes("damped", 4))
    thermal = SystemParams(g=0.2, lam=0.1, n0=1000.0, gamma=0.01, kappa=0.02, n_th=200.0)
    SweepSpec(base=thermal, axes=default_axes("thermal", 4))
