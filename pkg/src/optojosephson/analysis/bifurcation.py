"""Parameter scans of the fixed-point structure and bifurcation detection."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import DomainError, OptoJosephsonError
from ..integrate import Crossing
from ..model import PARAM_KEYS, SystemParams, control_params, param_attr
from .fixed_points import STABILITY_TOL, FixedPoint, find_fixed_points

DERIVED_CONTROLS = ("c", "c_damped", "c_tilde")
# pitchfork pairs: broken_pair (or thermal) with both signs of z
PHI_PI_FAMILIES = ("symmetric_pi", "broken_pair")


def params_for(base: SystemParams, control: str, value: float) -> SystemParams:
    """Parameters with one physical or derived control set to ``value``.

    Derived controls: ``c`` and ``c_damped`` are reached through N0,
    ``c_tilde`` through lambda (it does not depend on N0).
    """
    value = float(value)
    if control == "c":
        return base.replace(n0=base.g / (base.lam ** 2 * value))
    if control == "c_damped":
        damp = 1.0 + base.gamma ** 2 / 4.0
        return base.replace(n0=base.g * damp / (base.lam ** 2 * value))
    if control == "c_tilde":
        if base.n_th <= 0:
            raise DomainError("c_tilde requires n_th > 0")
        damp = 1.0 + base.gamma ** 2 / 4.0
        return base.replace(lam=math.sqrt(base.g * damp / (2.0 * value * base.n_th)))
    return base.replace(**{param_attr(control): value})


def _check_control(control: str):
    if control not in PARAM_KEYS and control not in DERIVED_CONTROLS:
        raise DomainError(f"unknown control {control!r}; expected one of "
                          f"{', '.join(PARAM_KEYS + DERIVED_CONTROLS)}")


@dataclass(frozen=True)
class BifurcationEvent:
    type: str
    bracket: Tuple[int, int]
    location: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"type": self.type, "bracket": list(self.bracket),
                "location": self.location, "detail": self.detail}


@dataclass
class BifurcationScan:
    control: str
    grid: np.ndarray
    base: SystemParams
    branches: List[List[FixedPoint]]
    events: List[BifurcationEvent]
    failures: Dict[int, str] = field(default_factory=dict)
    degenerate: List[int] = field(default_factory=list)

    def counts(self, families: Optional[Sequence[str]] = None) -> List[int]:
        return [sum(1 for fp in cell if families is None or fp.family in families)
                for cell in self.branches]

    def events_of(self, kind: str) -> List[BifurcationEvent]:
        return [ev for ev in self.events if ev.type == kind]

    def to_dict(self) -> dict:
        return {
            "control": self.control,
            "base": self.base.to_dict(),
            "grid": [float(v) for v in self.grid],
            "branches": [[fp.to_dict() for fp in cell] for cell in self.branches],
            "events": [ev.to_dict() for ev in self.events],
            "failures": {str(k): v for k, v in self.failures.items()},
            "degenerate_cells": list(self.degenerate),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _key(fp: FixedPoint, tol: float = 1e-9) -> Tuple[str, int]:
    z = fp.state.z
    return fp.family, (0 if abs(z) <= tol else (1 if z > 0 else -1))


def classify_branch_change(appeared: Counter) -> List[Tuple[str, List[Tuple[str, int]]]]:
    """Group appearing (or vanishing) branch keys into bifurcation types.

    A symmetric pair of one family (both signs of z) is a pitchfork; a
    pitchfork-branch point meeting an outer-branch point of the same sign is
    a saddle-node.  Anything left over is reported as ``branch_change``.
    """
    remaining = Counter(appeared)
    out = []
    for sign in (1, -1):
        if remaining[("broken_pair", sign)] and remaining[("thermal", sign)]:
            remaining[("broken_pair", sign)] -= 1
            remaining[("thermal", sign)] -= 1
            out.append(("saddle_node", [("broken_pair", sign), ("thermal", sign)]))
    for family in ("broken_pair", "thermal"):
        while remaining[(family, 1)] and remaining[(family, -1)]:
            remaining[(family, 1)] -= 1
            remaining[(family, -1)] -= 1
            out.append(("pitchfork", [(family, 1), (family, -1)]))
    leftovers = [k for k, n in remaining.items() for _ in range(n) if n > 0]
    if leftovers:
        out.append(("branch_change", leftovers))
    return out


def _degenerate(params: SystemParams, q: Optional[float], rtol: float = 1e-12) -> bool:
    cp = control_params(params)
    if params.kappa == 0.0:
        qq = 1.0 if q is None else q
        return math.isfinite(cp.c_damped) and abs(cp.c_damped - qq) <= rtol * qq
    if params.n_th > 0 and cp.c_tilde is not None and math.isfinite(cp.c_tilde):
        return (abs(cp.c_tilde - 1.0) <= rtol
                or abs(cp.c_tilde - cp.saddle_node) <= rtol * max(cp.saddle_node, 1.0))
    return False


def _used_eigenvalues(fp: FixedPoint, params: SystemParams) -> np.ndarray:
    ev = np.asarray(fp.eigenvalues, dtype=complex)
    return ev[:4] if params.kappa == 0.0 else ev


def _det_block(fp: FixedPoint, params: SystemParams) -> float:
    return float(np.prod(_used_eigenvalues(fp, params)).real)


def _unstable_oscillatory(fp: FixedPoint, params: SystemParams, tol: float) -> int:
    ev = _used_eigenvalues(fp, params)
    return int(np.count_nonzero((ev.real > tol) & (np.abs(ev.imag) > tol)))


def _lead_complex_re(fp: FixedPoint, params: SystemParams, tol: float) -> float:
    ev = _used_eigenvalues(fp, params)
    cplx = ev[np.abs(ev.imag) > tol]
    return float(np.max(cplx.real)) if len(cplx) else float("nan")


def _interp_root(x0, x1, f0, f1):
    if math.isfinite(f0) and math.isfinite(f1) and f0 * f1 < 0:
        return x0 + (x1 - x0) * f0 / (f0 - f1)
    return 0.5 * (x0 + x1)


def bifurcation_scan(base: SystemParams, control: str, grid: Sequence[float],
                     q: Optional[float] = None, tol: float = STABILITY_TOL) -> BifurcationScan:
    """Enumerate and classify fixed points along ``grid`` and detect bifurcations.

    At each grid value the closed-form equilibria are refined by Newton and the
    refined points of the previous cell are continued as additional seeds.
    Events are reported between neighbouring non-degenerate cells:

    * ``pitchfork`` / ``saddle_node`` where the set of branches changes,
      disambiguated by symmetry (a pitchfork creates an S-symmetric pair);
    * ``hopf`` where a complex-conjugate pair crosses Re = 0 on a branch
      present in both cells.

    A grid value sitting exactly on a bifurcation is marked degenerate and
    excluded from branch-count comparisons; its neighbours bracket the event.
    """
    _check_control(control)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3:
        raise DomainError("grid needs at least 3 points")
    steps = np.diff(grid)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise DomainError("grid must be strictly monotone")

    branches: List[List[FixedPoint]] = []
    cell_params: List[SystemParams] = []
    failures: Dict[int, str] = {}
    degenerate: List[int] = []
    seeds: List[FixedPoint] = []
    for i, value in enumerate(grid):
        try:
            params = params_for(base, control, value)
            fps = find_fixed_points(params, q=q, seeds=seeds)
        except (OptoJosephsonError, ValueError, ArithmeticError) as exc:
            failures[i] = f"{type(exc).__name__}: {exc}"
            branches.append([])
            cell_params.append(None)
            continue
        if _degenerate(params, q):
            degenerate.append(i)
        branches.append(fps)
        cell_params.append(params)
        seeds = fps

    usable = [i for i in range(len(grid)) if i not in failures and i not in degenerate]
    events: List[BifurcationEvent] = []
    for i, j in zip(usable[:-1], usable[1:]):
        events.extend(_compare_cells(i, j, grid, branches, cell_params, degenerate, tol))
    return BifurcationScan(control=control, grid=grid, base=base, branches=branches,
                           events=events, failures=failures, degenerate=degenerate)


def _compare_cells(i, j, grid, branches, cell_params, degenerate, tol):
    events = []
    keys_i = Counter(_key(fp) for fp in branches[i])
    keys_j = Counter(_key(fp) for fp in branches[j])
    between = [k for k in degenerate if min(i, j) < k < max(i, j)]
    sym_i = _find(branches[i], ("symmetric_pi", 0))
    sym_j = _find(branches[j], ("symmetric_pi", 0))

    for side, diff in (("appeared", keys_j - keys_i), ("vanished", keys_i - keys_j)):
        if not diff:
            continue
        owner = j if side == "appeared" else i
        for kind, keys in classify_branch_change(diff):
            pair = [fp for fp in branches[owner] if _key(fp) in keys]
            detail = {"direction": side, "branches": [f"{f}{'+' if s > 0 else '-'}" for f, s in keys],
                      "pair_stability": sorted({fp.stability for fp in pair})}
            if between:
                location = float(grid[between[0]])
            elif kind == "pitchfork" and sym_i is not None and sym_j is not None:
                location = _interp_root(grid[i], grid[j], _det_block(sym_i, cell_params[i]),
                                        _det_block(sym_j, cell_params[j]))
            else:
                location = 0.5 * float(grid[i] + grid[j])
            if kind == "pitchfork":
                stable_pair = all(fp.stability == "stable" for fp in pair)
                unstable_pair = all(fp.is_unstable for fp in pair)
                detail["criticality"] = ("supercritical" if stable_pair else
                                         "subcritical" if unstable_pair else "neutral")
            events.append(BifurcationEvent(kind, (i, j), location, detail))

    for key in set(keys_i) & set(keys_j):
        a = _find(branches[i], key)
        b = _find(branches[j], key)
        na = _unstable_oscillatory(a, cell_params[i], tol)
        nb = _unstable_oscillatory(b, cell_params[j], tol)
        if na != nb:
            location = _interp_root(grid[i], grid[j], _lead_complex_re(a, cell_params[i], tol),
                                    _lead_complex_re(b, cell_params[j], tol))
            events.append(BifurcationEvent("hopf", (i, j), location,
                                           {"branch": f"{key[0]}{'+' if key[1] > 0 else '-' if key[1] < 0 else ''}",
                                            "unstable_complex_before": na,
                                            "unstable_complex_after": nb}))
    return events


def _find(cell: List[FixedPoint], key) -> Optional[FixedPoint]:
    for fp in cell:
        if _key(fp) == key:
            return fp
    return None


@dataclass(frozen=True)
class SectionPeriod:
    period: float
    spread: float
    n_clusters: int


def section_period(crossings: List[Crossing], coordinate: str = "z",
                   cluster_tol: float = 1e-3) -> SectionPeriod:
    """Return-time statistics of section crossings.

    ``n_clusters`` counts distinct return values of ``coordinate``; a period-1
    orbit returns to one cluster, a period-doubled orbit to two, and so on.
    Chaotic or quasi-periodic motion gives a count close to the number of
    crossings.
    """
    if len(crossings) < 2:
        return SectionPeriod(float("nan"), float("nan"), len(crossings))
    times = np.array([c.time for c in crossings])
    gaps = np.diff(times)
    values = np.sort([getattr(c.state, coordinate) for c in crossings])
    n_clusters = 1 + int(np.count_nonzero(np.diff(values) > cluster_tol))
    return SectionPeriod(float(np.mean(gaps) * n_clusters), float(np.std(gaps)), n_clusters)
