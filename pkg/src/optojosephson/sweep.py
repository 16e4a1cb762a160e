"""Parameter-grid sweeps producing phase diagrams, with checkpoint/resume.

Cells are independent: each one rebuilds its parameters from the spec and runs
its task from scratch, so results do not depend on the worker count or on the
order in which cells finish.  Completed cells are appended to an NDJSON
checkpoint (header line + one line per cell) that is rewritten atomically.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .analysis.bifurcation import DERIVED_CONTROLS, classify_branch_change, params_for
from .analysis.fixed_points import find_fixed_points
from .analysis.lyapunov import LYAPUNOV_CONFIG, lyapunov_spectrum
from .analysis.regime import classify_regime
from .exceptions import DomainError, SpecHashMismatch
from .integrate import IntegratorConfig, integrate
from .model import PARAM_KEYS, State, SystemParams, energy

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TASKS = ("classify_regime", "max_lyapunov", "final_state", "fixed_point_count")
AXIS_NAMES = PARAM_KEYS + DERIVED_CONTROLS + ("d",)
CHECKPOINT_SECONDS = 30.0
CHECKPOINT_CELLS = 64

PAPER_DEFAULT_STATE = State(x=0.0, p=0.0, z=0.95, phi=0.0, q=1.0)


@dataclass(frozen=True)
class LyapunovSettings:
    horizon: float = 2000.0
    renorm_dt: float = 1.0
    transient: float = 100.0

    def to_dict(self):
        return {"horizon": self.horizon, "renorm_dt": self.renorm_dt, "transient": self.transient}


@dataclass(frozen=True)
class SweepSpec:
    base: SystemParams
    axes: Tuple[Tuple[str, Tuple[float, ...]], ...]
    task: str = "classify_regime"
    integrator: IntegratorConfig = IntegratorConfig()
    lyapunov: LyapunovSettings = LyapunovSettings()
    initial_state: Union[State, str] = "paper_default"
    workers: int = 1
    checkpoint_path: Optional[str] = None

    def __post_init__(self):
        axes = tuple((str(name), tuple(float(v) for v in values)) for name, values in self.axes)
        object.__setattr__(self, "axes", axes)
        if not 1 <= len(axes) <= 2:
            raise DomainError("axes: need one or two axes")
        names = [name for name, _ in axes]
        if len(set(names)) != len(names):
            raise DomainError("axes: duplicate axis name")
        for name, values in axes:
            if name not in AXIS_NAMES:
                raise DomainError(f"axes: unknown parameter {name!r}; expected one of {', '.join(AXIS_NAMES)}")
            if not values:
                raise DomainError(f"axes: axis {name!r} is empty")
            if not all(math.isfinite(v) for v in values):
                raise DomainError(f"axes: axis {name!r} has non-finite values")
            steps = np.diff(values)
            if len(values) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
                raise DomainError(f"axes: axis {name!r} is not strictly monotone")
        if self.task not in TASKS:
            raise DomainError(f"task: unknown task {self.task!r}; expected one of {', '.join(TASKS)}")
        if isinstance(self.initial_state, str) and self.initial_state != "paper_default":
            raise DomainError(f"initial_state: expected a state object or 'paper_default'")
        if isinstance(self.workers, bool) or not isinstance(self.workers, int) or self.workers < 1:
            raise DomainError("workers: must be an integer >= 1")
        # every cell must map onto valid parameters
        for values in product(*(v for _, v in axes)):
            self.cell_params(values)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(v) for _, v in self.axes)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def state0(self) -> State:
        return PAPER_DEFAULT_STATE if self.initial_state == "paper_default" else self.initial_state

    def cell_params(self, values: Sequence[float]) -> SystemParams:
        params = self.base
        for (name, _), value in zip(self.axes, values):
            if name == "d":
                params = params.replace(kappa=2.0 * params.g * value)
            else:
                params = params_for(params, name, value)
        return params

    def cell_index(self, flat: int) -> Tuple[Tuple[int, ...], Tuple[float, ...]]:
        idx = np.unravel_index(flat, self.shape)
        idx = tuple(int(i) for i in idx)
        values = tuple(self.axes[k][1][i] for k, i in enumerate(idx))
        return idx, values

    def to_dict(self, with_runtime: bool = True) -> dict:
        out = {
            "base": self.base.to_dict(),
            "axes": [{"name": name, "values": list(values)} for name, values in self.axes],
            "task": self.task,
            "integrator": self.integrator.to_dict(),
            "lyapunov": self.lyapunov.to_dict(),
            "initial_state": (self.initial_state if isinstance(self.initial_state, str)
                              else self.initial_state.to_dict()),
        }
        if with_runtime:
            out["workers"] = self.workers
            out["checkpoint_path"] = self.checkpoint_path
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        known = {"base", "axes", "task", "integrator", "lyapunov", "initial_state",
                 "workers", "checkpoint_path", "schema_version"}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown sweep field(s): {', '.join(sorted(unknown))}")
        if "base" not in data or "axes" not in data:
            raise DomainError("sweep spec needs 'base' and 'axes'")
        base = SystemParams.from_dict(data["base"])
        axes = []
        for k, axis in enumerate(data["axes"]):
            if not isinstance(axis, dict) or "name" not in axis:
                raise DomainError(f"axes[{k}]: expected an object with 'name'")
            if "values" in axis:
                values = axis["values"]
            elif {"start", "stop", "num"} <= set(axis):
                values = np.linspace(axis["start"], axis["stop"], int(axis["num"])).tolist()
            else:
                raise DomainError(f"axes[{k}]: give 'values' or 'start'/'stop'/'num'")
            axes.append((axis["name"], values))
        init = data.get("initial_state", "paper_default")
        if isinstance(init, dict):
            init = State.from_dict(init)
        lyap = data.get("lyapunov", {})
        unknown = set(lyap) - {"horizon", "renorm_dt", "transient"}
        if unknown:
            raise DomainError(f"lyapunov: unknown field(s) {', '.join(sorted(unknown))}")
        return cls(base=base, axes=tuple(axes), task=data.get("task", "classify_regime"),
                   integrator=IntegratorConfig.from_dict(data.get("integrator", {})),
                   lyapunov=LyapunovSettings(**lyap), initial_state=init,
                   workers=data.get("workers", 1), checkpoint_path=data.get("checkpoint_path"))

    def spec_hash(self) -> str:
        canonical = json.dumps(self.to_dict(with_runtime=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class SweepCell:
    index: int
    axis_indices: Tuple[int, ...]
    axis_values: Tuple[float, ...]
    result: Optional[dict]
    diagnostics: dict
    wall_time: float = 0.0

    def export_dict(self) -> dict:
        return {"index": self.index, "axis_indices": list(self.axis_indices),
                "axis_values": list(self.axis_values), "result": self.result,
                "diagnostics": self.diagnostics}

    def checkpoint_dict(self) -> dict:
        out = self.export_dict()
        out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SweepCell":
        return cls(index=data["index"], axis_indices=tuple(data["axis_indices"]),
                   axis_values=tuple(data["axis_values"]), result=data["result"],
                   diagnostics=data["diagnostics"], wall_time=data.get("wall_time", 0.0))


@dataclass
class PhaseDiagram:
    spec: SweepSpec
    cells: List[SweepCell]
    status: str

    def grid(self, key: str) -> np.ndarray:
        """Result field ``key`` arranged on the axis grid (object array)."""
        out = np.empty(self.spec.shape, dtype=object)
        for cell in self.cells:
            out[cell.axis_indices] = None if cell.result is None else cell.result.get(key)
        return out

    def to_ndjson(self) -> str:
        lines = [json.dumps({"schema_version": SCHEMA_VERSION, **cell.export_dict()}, sort_keys=True)
                 for cell in self.cells]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "status": self.status, "task": self.spec.task,
               "spec_hash": self.spec.spec_hash(), "spec": self.spec.to_dict(with_runtime=False),
               "n_cells": self.spec.n_cells, "n_completed": len(self.cells),
               "n_failed": sum(1 for c in self.cells if c.result is None)}
        if self.spec.task == "classify_regime":
            out["label_counts"] = dict(sorted(Counter(
                c.result["label"] for c in self.cells if c.result).items()))
        if self.spec.task == "fixed_point_count":
            out["bifurcations"] = self._branch_transitions()
        return out

    def _branch_transitions(self) -> List[dict]:
        by_idx = {c.axis_indices: c for c in self.cells}
        events = []
        for axis, (name, values) in enumerate(self.spec.axes):
            for idx in sorted(by_idx):
                nxt = list(idx)
                nxt[axis] += 1
                nxt = tuple(nxt)
                a, b = by_idx.get(idx), by_idx.get(nxt)
                if a is None or b is None or a.result is None or b.result is None:
                    continue
                ka, kb = Counter(map(tuple, a.result["branches"])), Counter(map(tuple, b.result["branches"]))
                for side, diff in (("appeared", kb - ka), ("vanished", ka - kb)):
                    for kind, _ in classify_branch_change(diff):
                        events.append({"type": kind, "axis": name, "direction": side,
                                       "cells": [a.index, b.index],
                                       "bracket": [values[idx[axis]], values[nxt[axis]]],
                                       "count_change": [a.result["count"], b.result["count"]]})
        return events

    def write(self, output_dir) -> List[Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        nd = output_dir / "phase_diagram.ndjson"
        nd.write_text(self.to_ndjson(), encoding="utf-8")
        sm = output_dir / "summary.json"
        sm.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return [nd, sm]


def _run_task(spec: SweepSpec, params: SystemParams) -> dict:
    s0 = spec.state0
    if spec.task == "fixed_point_count":
        fps = find_fixed_points(params)
        return {"count": len(fps),
                "branches": sorted([fp.family, (0 if abs(fp.state.z) <= 1e-9 else 1 if fp.state.z > 0 else -1)]
                                   for fp in fps),
                "stable": sum(1 for fp in fps if fp.stability == "stable")}
    if spec.task == "max_lyapunov":
        ly = spec.lyapunov
        res = lyapunov_spectrum(params, s0, ly.horizon, ly.renorm_dt, ly.transient,
                                n_vectors=1, config=LYAPUNOV_CONFIG)
        return {"max_lyapunov": res.max_exponent}
    traj = integrate(params, s0, spec.integrator)
    if spec.task == "final_state":
        final = traj.final_state
        return {"state": final.to_dict(), "energy": energy(final, params)}
    label = classify_regime(traj, params)
    return label.to_dict()


def compute_cell(spec: SweepSpec, flat: int) -> SweepCell:
    """Run the task for one cell; failures are recorded, never raised."""
    idx, values = spec.cell_index(flat)
    start = time.perf_counter()
    params = spec.cell_params(values)
    diagnostics = {"params": params.to_dict()}
    try:
        result = _run_task(spec, params)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not abort the sweep
        result = None
        diagnostics["error"] = f"{type(exc).__name__}: {exc}"
    return SweepCell(flat, idx, values, result, diagnostics, time.perf_counter() - start)


def _write_checkpoint(path: Path, spec: SweepSpec, done: Dict[int, SweepCell]) -> None:
    header = {"kind": "header", "schema_version": SCHEMA_VERSION,
              "spec_hash": spec.spec_hash(), "spec": spec.to_dict()}
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for flat in sorted(done):
            fh.write(json.dumps(done[flat].checkpoint_dict(), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path) -> Tuple[dict, Dict[int, SweepCell]]:
    """Return ``(header, cells)`` from an NDJSON checkpoint."""
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"checkpoint_path: no checkpoint at {path}")
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise DomainError(f"checkpoint {path} is empty")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise DomainError(f"checkpoint {path} has no header line")
    cells = {}
    for line in lines[1:]:
        cell = SweepCell.from_dict(json.loads(line))
        cells[cell.index] = cell
    return header, cells


def _execute(spec: SweepSpec, done: Dict[int, SweepCell], max_new_cells: Optional[int]) -> PhaseDiagram:
    pending = [i for i in range(spec.n_cells) if i not in done]
    if max_new_cells is not None:
        pending = pending[:max_new_cells]
    ckpt = Path(spec.checkpoint_path) if spec.checkpoint_path else None
    last_flush = time.monotonic()
    since_flush = 0

    def record(cell: SweepCell):
        nonlocal last_flush, since_flush
        done[cell.index] = cell
        since_flush += 1
        if ckpt is not None and (since_flush >= CHECKPOINT_CELLS
                                 or time.monotonic() - last_flush >= CHECKPOINT_SECONDS):
            _write_checkpoint(ckpt, spec, done)
            last_flush = time.monotonic()
            since_flush = 0

    try:
        if spec.workers == 1 or len(pending) <= 1:
            for flat in pending:
                record(compute_cell(spec, flat))
        else:
            with ProcessPoolExecutor(max_workers=spec.workers) as pool:
                futures = [pool.submit(compute_cell, spec, flat) for flat in pending]
                for fut in as_completed(futures):
                    record(fut.result())
    finally:
        if ckpt is not None:
            _write_checkpoint(ckpt, spec, done)
    cells = [done[i] for i in sorted(done)]
    status = "complete" if len(cells) == spec.n_cells else "partial"
    log.info("sweep %s: %d/%d cells", status, len(cells), spec.n_cells)
    return PhaseDiagram(spec=spec, cells=cells, status=status)


def run_sweep(spec: SweepSpec, *, max_new_cells: Optional[int] = None) -> PhaseDiagram:
    """Compute every cell of ``spec`` from scratch.

    ``max_new_cells`` bounds the work done in this call (the diagram is then
    ``partial`` and can be finished with :func:`resume_sweep`).  An existing
    checkpoint at ``spec.checkpoint_path`` is overwritten.
    """
    return _execute(spec, {}, max_new_cells)


def resume_sweep(checkpoint_path, spec: Optional[SweepSpec] = None, *,
                 workers: Optional[int] = None, max_new_cells: Optional[int] = None) -> PhaseDiagram:
    """Finish a sweep from its checkpoint, computing only the missing cells.

    When ``spec`` is given its hash must match the checkpoint header.

    Raises
    ------
    SpecHashMismatch
        The checkpoint belongs to a different specification.
    """
    header, cells = load_checkpoint(checkpoint_path)
    stored = SweepSpec.from_dict(header["spec"])
    if spec is None:
        spec = stored
    if spec.spec_hash() != header["spec_hash"]:
        raise SpecHashMismatch(f"checkpoint {checkpoint_path} was written for spec "
                               f"{header['spec_hash'][:12]}, not {spec.spec_hash()[:12]}")
    changes = {"checkpoint_path": str(checkpoint_path)}
    if workers is not None:
        changes["workers"] = workers
    spec = SweepSpec(**{**{f: getattr(spec, f) for f in spec.__dataclass_fields__}, **changes})
    return _execute(spec, cells, max_new_cells)


def default_axes(kind: str = "damped", n: int = 10) -> Tuple[Tuple[str, Tuple[float, ...]], ...]:
    """Default phase-diagram axes.

    ``damped``: C (through N0) against kappa; ``thermal``: C~ (through lambda)
    against D (through kappa).
    """
    if kind == "damped":
        return (("c", tuple(np.geomspace(0.01, 10.0, n))), ("kappa", tuple(np.linspace(0.0, 0.05, n))))
    if kind == "thermal":
        return (("c_tilde", tuple(np.geomspace(0.05, 5.0, n))), ("d", tuple(np.linspace(0.1, 2.0, n))))
    raise DomainError(f"unknown axes preset {kind!r}")
