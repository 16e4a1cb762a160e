"""Time integration of the mean-field equations.

The main integrator is an explicit Dormand-Prince 5(4) pair with local
extrapolation, a max-norm step controller and a quartic continuous extension.
Steps are clipped to land on the output grid, so every reported sample is a
step node rather than an interpolated value.

The (z, phi) coordinates have a pole at |z| = q that chaotic orbits brush
past now and then.  While the transverse amplitude W = sqrt(q^2 - z^2) is
small the stepper works in the components u + iv = W exp(i phi) instead,
where that point is an ordinary one.  Samples are always reported as
(x, p, z, phi, q).

Chaotic trajectories are only pointwise meaningful over short horizons; treat
long runs statistically (regime labels, sections, Lyapunov exponents).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import _kernels
from .exceptions import (DivergenceError, DomainError, StiffnessError,
                         UnsupportedConfigurationError)
from .model import (STATE_FIELDS, State, SystemParams, energy_values,
                    wrap_phase_array)

CSV_HEADER = "t,x,p,z,phi,q,energy"
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    h_init: float = 1e-3
    h_max: float = 0.1
    t_end: float = 200.0
    sample_dt: float = 0.01

    def __post_init__(self):
        for name in ("rtol", "atol", "h_init", "h_max", "t_end", "sample_dt"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise DomainError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.h_init > self.h_max:
            raise DomainError(f"h_init ({self.h_init}) must not exceed h_max ({self.h_max})")

    def replace(self, **changes) -> "IntegratorConfig":
        return IntegratorConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "IntegratorConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise DomainError(f"unknown integrator field(s): {', '.join(sorted(unknown))}")
        return cls(**data)


def to_chart(y) -> np.ndarray:
    """Integrator row ``[x, p, a, b, q, chart]`` for a public state vector."""
    out = np.empty(_kernels.CS)
    _kernels.public_to_copy(np.asarray(y, dtype=float), out, 0)
    return out


def from_chart(rows) -> np.ndarray:
    """Public ``(x, p, z, phi, q)`` rows, phi wrapped, from integrator rows."""
    rows = np.asarray(rows, dtype=float)
    a, b, q, sgn = rows[..., 2], rows[..., 3], rows[..., 4], rows[..., 5]
    cap = sgn != 0.0
    z = np.where(cap, sgn * np.sqrt(np.maximum(q * q - a * a - b * b, 0.0)), a)
    phi = wrap_phase_array(np.where(cap, np.arctan2(b, a), b))
    return np.stack([rows[..., 0], rows[..., 1], z, phi, q], axis=-1)


def sample_times(t_end: float, dt: float) -> np.ndarray:
    n = int(math.floor(t_end / dt + 1e-9))
    times = dt * np.arange(n + 1, dtype=float)
    if t_end - times[-1] > 1e-12 * max(1.0, t_end):
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


@dataclass
class Trajectory:
    """Sampled solution.

    ``values`` has one row ``(x, p, z, phi, q)`` per entry of ``times`` with
    phi wrapped.  ``phi_unwrapped`` removes the 2 pi jumps between samples,
    and ``raw`` holds the integrator rows (see ``to_chart``) when available.
    """

    times: np.ndarray
    values: np.ndarray
    params: SystemParams
    config: IntegratorConfig
    step_stats: dict = field(default_factory=dict)
    phi_unwrapped: Optional[np.ndarray] = None
    raw: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.times)

    @property
    def x(self):
        return self.values[:, 0]

    @property
    def p(self):
        return self.values[:, 1]

    @property
    def z(self):
        return self.values[:, 2]

    @property
    def phi(self):
        return self.values[:, 3]

    @property
    def q(self):
        return self.values[:, 4]

    def state(self, i: int) -> State:
        return State.from_array(self.values[i])

    @property
    def states(self) -> List[State]:
        return [State.from_array(row) for row in self.values]

    @property
    def final_state(self) -> State:
        return self.state(-1)

    def energy(self) -> np.ndarray:
        return energy_values(self.values, self.params)

    def window(self, t_start: float, t_stop: float = math.inf) -> np.ndarray:
        """Boolean mask selecting samples with t_start <= t <= t_stop."""
        return (self.times >= t_start) & (self.times <= t_stop)

    def metadata(self) -> dict:
        return {"params": self.params.to_dict(), "config": self.config.to_dict(),
                "step_stats": self.step_stats, "n_samples": len(self.times)}

    def to_csv(self, path) -> None:
        table = np.column_stack([self.times, self.values, self.energy()])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            np.savetxt(fh, table, fmt=FLOAT_FMT, delimiter=",")

    def to_json_dict(self) -> dict:
        out = self.metadata()
        out["t"] = self.times.tolist()
        for i, name in enumerate(STATE_FIELDS):
            out[name] = self.values[:, i].tolist()
        out["energy"] = self.energy().tolist()
        return out

    def save(self, stem, fmt: str = "csv") -> List[Path]:
        """Write ``<stem>.csv`` (or ``.json``) plus a ``<stem>.meta.json`` sidecar."""
        stem = Path(stem)
        written = []
        if fmt == "csv":
            data_path = stem.parent / (stem.name + ".csv")
            self.to_csv(data_path)
        elif fmt == "json":
            data_path = stem.parent / (stem.name + ".json")
            data_path.write_text(json.dumps(self.to_json_dict()), encoding="utf-8")
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written.append(data_path)
        meta_path = stem.parent / (stem.name + ".meta.json")
        meta_path.write_text(json.dumps(self.metadata(), indent=2), encoding="utf-8")
        written.append(meta_path)
        return written


class DenseOutput:
    """Piecewise quartic interpolant over accepted steps.

    Calling it returns ``(x, p, z, phi, q)`` rows; ``raw`` returns the
    interpolated integrator rows instead.
    """

    def __init__(self, t, h, y, k):
        self.t = t
        self.h = h
        self.y = y
        self.k = k

    @property
    def t_min(self):
        return float(self.t[0])

    @property
    def t_max(self):
        return float(self.t[-1] + self.h[-1])

    def __call__(self, t):
        return from_chart(self.raw(t))

    def raw(self, t):
        times = np.atleast_1d(np.asarray(t, dtype=float))
        order = np.argsort(times, kind="stable")
        out = np.empty((len(times), self.y.shape[1]))
        sorted_out = np.empty_like(out)
        _kernels.dense_eval_many(self.t, self.h, self.y, self.k, len(self.t),
                                 times[order], sorted_out)
        out[order] = sorted_out
        return out[0] if np.ndim(t) == 0 else out


def _initial_vector(s0: State) -> np.ndarray:
    return to_chart(s0.as_array())


def run_kernel(y0, t0, t1, params: SystemParams, config: IntegratorConfig, *,
               mode=_kernels.MODE_TANGENT, times=None, keep_dense=False, h=None):
    """Thin wrapper around the compiled stepper; returns the raw result tuple.

    ``y0`` is in the integrator layout (see ``to_chart``).
    """
    if times is None:
        times = np.empty(0)
    return _kernels.dopri5(np.ascontiguousarray(y0, dtype=float), float(t0), float(t1),
                           float(config.h_init if h is None else h), params.as_array(),
                           mode, config.rtol, config.atol, config.h_max,
                           np.ascontiguousarray(times, dtype=float), keep_dense)


def _raise_for_status(status, t, message_parts, partial):
    if status == _kernels.STATUS_STEP_UNDERFLOW:
        raise StiffnessError(f"step size underflow at t = {t:.6g}" + message_parts, partial)
    if status == _kernels.STATUS_NONFINITE:
        raise DivergenceError(f"non-finite state at t = {t:.6g}" + message_parts, partial)


def integrate(params: SystemParams, s0: State, config: IntegratorConfig = IntegratorConfig(),
              *, keep_dense: bool = False):
    """Integrate from ``s0`` over ``[0, config.t_end]``.

    ``s0`` may sit at |z| = q (all light in one mode); its phase is then
    irrelevant.

    With ``keep_dense=True`` a ``(Trajectory, DenseOutput)`` pair is returned.

    Raises
    ------
    StiffnessError
        The step size underflowed; ``err.partial`` holds the samples so far.
    DivergenceError
        The state became non-finite.
    """
    times = sample_times(config.t_end, config.sample_dt)
    res = run_kernel(_initial_vector(s0), 0.0, config.t_end, params, config,
                     times=times, keep_dense=keep_dense)
    (y, t, h, n_acc, n_rej, status, samples, n_samples,
     dense_t, dense_h, dense_y, dense_k, n_dense) = res
    raw = samples[:n_samples].copy()
    values = from_chart(raw)
    traj = Trajectory(times=times[:n_samples], values=values, params=params, config=config,
                      step_stats={"accepted": int(n_acc), "rejected": int(n_rej)},
                      phi_unwrapped=np.unwrap(values[:, 3]), raw=raw)
    _raise_for_status(status, t, "", traj)
    if keep_dense:
        dense = DenseOutput(dense_t[:n_dense].copy(), dense_h[:n_dense].copy(),
                            dense_y[:n_dense].copy(), dense_k[:n_dense].copy())
        return traj, dense
    return traj


def _cartesian_rhs(t, u, g, lam, n0, kappa, gamma):
    x, p, ar, ai, br, bi = u
    n_a = ar * ar + ai * ai
    n_b = br * br + bi * bi
    z = n_a - n_b
    # da/dt = -i lam x a - i g b - kappa/2 a ; db/dt = +i lam x b - i g a - kappa/2 b
    d_ar = lam * x * ai + g * bi - 0.5 * kappa * ar
    d_ai = -lam * x * ar - g * br - 0.5 * kappa * ai
    d_br = -lam * x * bi + g * ai - 0.5 * kappa * br
    d_bi = lam * x * br - g * ar - 0.5 * kappa * bi
    return [p - 0.5 * gamma * x, -x - 0.5 * gamma * p - lam * n0 * z, d_ar, d_ai, d_br, d_bi]


def integrate_cartesian_oracle(params: SystemParams, s0: State,
                               config: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Independent cross-check integrating normalized mode amplitudes.

    Uses amplitudes a, b with |a|^2 + |b|^2 = q, |a|^2 - |b|^2 = z and
    arg(conj(a) b) = phi, stepped by scipy's DOP853.  The amplitude equations
    are linear in (a, b) and have no pole at |z| = q.  Only valid without a
    thermal bath (N_th = 0), whose incoherent pumping has no amplitude form.
    """
    if params.n_th != 0.0:
        raise UnsupportedConfigurationError("Cartesian oracle requires n_th = 0")
    q0 = max(s0.q, 0.0)
    amp_a = math.sqrt(max(0.5 * (q0 + s0.z), 0.0))
    amp_b = math.sqrt(max(0.5 * (q0 - s0.z), 0.0))
    u0 = [s0.x, s0.p, amp_a, 0.0, amp_b * math.cos(s0.phi), amp_b * math.sin(s0.phi)]
    times = sample_times(config.t_end, config.sample_dt)
    sol = solve_ivp(_cartesian_rhs, (0.0, config.t_end), u0, method="DOP853",
                    t_eval=times, rtol=config.rtol, atol=config.atol,
                    first_step=config.h_init, max_step=config.h_max,
                    args=(params.g, params.lam, params.n0, params.kappa, params.gamma))
    if sol.status != 0:
        raise DivergenceError(f"oracle integration failed: {sol.message}")
    x, p, ar, ai, br, bi = sol.y
    a = ar + 1j * ai
    b = br + 1j * bi
    n_a = np.abs(a) ** 2
    n_b = np.abs(b) ** 2
    values = np.column_stack([x, p, n_a - n_b, np.angle(np.conj(a) * b), n_a + n_b])
    return Trajectory(times=sol.t, values=values, params=params, config=config,
                      step_stats={"nfev": int(sol.nfev), "method": "DOP853"},
                      phi_unwrapped=np.unwrap(values[:, 3]))


@dataclass(frozen=True)
class SectionSpec:
    coordinate: str
    level: float
    direction: str = "both"

    def __post_init__(self):
        if self.coordinate not in STATE_FIELDS:
            raise DomainError(f"section coordinate must be one of {STATE_FIELDS}, "
                              f"got {self.coordinate!r}")
        if self.direction not in ("rising", "falling", "both"):
            raise DomainError(f"direction must be rising, falling or both, got {self.direction!r}")
        if not math.isfinite(self.level):
            raise DomainError("section level must be finite")


class Crossing(NamedTuple):
    time: float
    state: State


def _section_residual(values, spec: SectionSpec):
    col = STATE_FIELDS.index(spec.coordinate)
    r = values[..., col] - spec.level
    if spec.coordinate == "phi":
        r = wrap_phase_array(r)
    return r


def section_crossings(traj: Trajectory, spec: SectionSpec, *, tol: float = 1e-9) -> List[Crossing]:
    """Transversal crossings of a coordinate level.

    Sign changes between consecutive samples are refined by re-integrating the
    bracketing sample interval with dense output and root-finding on the
    interpolant.  Samples lying exactly on the level without a sign change
    (tangencies) are not reported.
    """
    if len(traj) < 2:
        return []
    r = _section_residual(traj.values, spec)
    left, right = r[:-1], r[1:]
    rising = (left < 0) & (right > 0)
    falling = (left > 0) & (right < 0)
    if spec.direction == "rising":
        mask = rising
    elif spec.direction == "falling":
        mask = falling
    else:
        mask = rising | falling
    if spec.coordinate == "phi":
        # discard jumps of the wrapped residual across +-pi
        mask &= np.abs(right - left) < math.pi
    crossings = []
    cfg = traj.config
    for i in np.flatnonzero(mask):
        t0, t1 = float(traj.times[i]), float(traj.times[i + 1])
        y0 = traj.raw[i] if traj.raw is not None else to_chart(traj.values[i])
        res = run_kernel(y0, t0, t1, traj.params, cfg,
                         h=min(cfg.h_init, t1 - t0), keep_dense=True)
        n_dense = res[12]
        dense = DenseOutput(res[8][:n_dense], res[9][:n_dense], res[10][:n_dense],
                            res[11][:n_dense])

        def fun(t):
            return float(_section_residual(dense(t), spec))

        f0, f1 = fun(t0), fun(t1)
        if f0 == 0.0:
            t_root = t0
        elif f1 == 0.0:
            t_root = t1
        elif f0 * f1 > 0:
            # the re-integrated interval disagrees with the samples at round-off level
            continue
        else:
            t_root = brentq(fun, t0, t1, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            # secant polish if the residual is still above tolerance
            for _ in range(5):
                fr = fun(t_root)
                if abs(fr) < tol:
                    break
                dt = 1e-9 * max(1.0, abs(t_root))
                slope = (fun(t_root + dt) - fr) / dt
                if slope == 0.0:
                    break
                t_root -= fr / slope
        y = dense(t_root)
        state = State(y[0], y[1], y[2], y[3], y[4])
        crossings.append(Crossing(float(t_root), state))
    return crossings
