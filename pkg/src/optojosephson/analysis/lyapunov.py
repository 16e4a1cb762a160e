"""Lyapunov exponents by tangent-space QR and by co-integrated trajectory pairs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .. import _kernels
from .._kernels import CS
from ..exceptions import DivergenceError, DomainError, StiffnessError
from ..integrate import IntegratorConfig, run_kernel, to_chart
from ..model import State, SystemParams

LYAPUNOV_CONFIG = IntegratorConfig(rtol=1e-9, atol=1e-12, h_max=0.1)


@dataclass
class LyapunovResult:
    exponents: np.ndarray
    horizon: float
    renorm_dt: float
    transient: float
    # running estimates, rows of (time, exponent_1, ..., exponent_k)
    trace: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    params: Optional[SystemParams] = None

    @property
    def max_exponent(self) -> float:
        return float(self.exponents[0])

    @property
    def total(self) -> float:
        return float(np.sum(self.exponents))

    def to_dict(self) -> dict:
        return {
            "exponents": [float(v) for v in self.exponents],
            "sum": self.total,
            "horizon": self.horizon,
            "renorm_dt": self.renorm_dt,
            "transient": self.transient,
            "params": self.params.to_dict() if self.params else None,
            "convergence_trace": self.trace.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_status(res, what):
    status, t = res[5], res[1]
    if status == _kernels.STATUS_STEP_UNDERFLOW:
        raise StiffnessError(f"{what}: step size underflow at t = {t:.6g}")
    if status == _kernels.STATUS_NONFINITE:
        raise DivergenceError(f"{what}: non-finite state at t = {t:.6g}")


def _advance(y, t0, t1, params, config, mode, h):
    res = run_kernel(y, t0, t1, params, config, mode=mode, h=h)
    _check_status(res, "Lyapunov integration")
    return res[0], res[2]


def _validate(horizon, renorm_dt, transient):
    if not (renorm_dt > 0 and horizon > 0):
        raise DomainError("horizon and renorm_dt must be positive")
    if not 0 <= transient < horizon:
        raise DomainError("transient must lie in [0, horizon)")
    if horizon - transient < renorm_dt:
        raise DomainError("averaging window shorter than one renormalization interval")


def _to_public(y):
    """Tangent map from the chart of copy ``y`` to the public chart."""
    m = np.empty((5, 5))
    if y[5] == 0.0:
        return np.eye(5)
    _kernels.cap_to_polar_jac(y[:CS], m)
    return m


def _from_public(y):
    m = np.empty((5, 5))
    if y[5] == 0.0:
        return np.eye(5)
    pub = np.empty(5)
    _kernels.copy_to_public(y, 0, pub)
    _kernels.polar_to_cap_jac(np.append(pub, 0.0), m)
    return m


def lyapunov_spectrum(params: SystemParams, s0: State, horizon: float, renorm_dt: float = 1.0,
                      transient: float = 0.0, *, n_vectors: int = 5,
                      config: IntegratorConfig = LYAPUNOV_CONFIG,
                      trace_every: Optional[int] = None) -> LyapunovResult:
    """Leading ``n_vectors`` Lyapunov exponents, sorted descending.

    Tangent vectors are propagated with the analytic Jacobian alongside the
    state and re-orthonormalized by Householder QR every ``renorm_dt``.  The
    exponents average the log stretch factors over ``[transient, horizon]``.
    Their sum over all five vectors equals the (constant) phase-space
    divergence -(gamma + 2 kappa).

    Lengths are always measured in the public (x, p, z, phi, q) chart: when
    the stepper is on a cap chart at a renormalization time the vectors are
    mapped back before the QR step.
    """
    _validate(horizon, renorm_dt, transient)
    if not 1 <= n_vectors <= 5:
        raise DomainError("n_vectors must be between 1 and 5")
    y = to_chart(s0.as_array())
    h = config.h_init
    if transient > 0:
        y, h = _advance(y, 0.0, transient, params, config, _kernels.MODE_TANGENT, h)
    k = n_vectors
    basis = _from_public(y) @ np.eye(5)[:, :k]
    n_int = int(round((horizon - transient) / renorm_dt))
    if trace_every is None:
        trace_every = max(1, n_int // 100)
    sums = np.zeros(k)
    trace = []
    yy = np.concatenate([y, basis.ravel()])
    t = transient
    for i in range(1, n_int + 1):
        t_next = transient + i * renorm_dt
        yy, h = _advance(yy, t, t_next, params, config, _kernels.MODE_TANGENT, h)
        t = t_next
        vecs = _to_public(yy) @ yy[CS:].reshape(5, k)
        qmat, rmat = np.linalg.qr(vecs)
        diag = np.abs(np.diag(rmat))
        if np.any(diag == 0) or not np.all(np.isfinite(diag)):
            raise DivergenceError(f"tangent vectors degenerated at t = {t:.6g}")
        sums += np.log(diag)
        yy[CS:] = (_from_public(yy) @ qmat).ravel()
        if i % trace_every == 0 or i == n_int:
            trace.append([t, *(sums / (t - transient))])
    elapsed = n_int * renorm_dt
    # QR ordering matches the Oseledets ordering only asymptotically
    exponents = np.sort(sums / elapsed)[::-1]
    return LyapunovResult(exponents=exponents, horizon=transient + elapsed, renorm_dt=renorm_dt,
                          transient=transient, trace=np.array(trace), params=params)


def _embed(copy):
    # pole-free coordinates: membrane, inversion and the transverse Bloch components
    x, p, a, b, q, sgn = copy
    if sgn == 0.0:
        w = math.sqrt(max(q * q - a * a, 0.0))
        return np.array([x, p, a, w * math.cos(b), w * math.sin(b), q])
    z = sgn * math.sqrt(max(q * q - a * a - b * b, 0.0))
    return np.array([x, p, z, a, b, q])


def _unembed(e, like):
    """Integrator copy for embedded point ``e`` in the chart of ``like``."""
    x, p, z, u, v, q = e
    if like[5] == 0.0:
        ph = like[3] + math.remainder(math.atan2(v, u) - like[3], 2.0 * math.pi)
        return np.array([x, p, z, ph, q, 0.0])
    return np.array([x, p, u, v, q, like[5]])


def max_lyapunov_two_trajectory(params: SystemParams, s0: State, horizon: float,
                                d0: float = 1e-8, *, renorm_dt: float = 1.0,
                                transient: float = 0.0,
                                config: IntegratorConfig = LYAPUNOV_CONFIG) -> float:
    """Largest exponent from a reference and a perturbed copy (Benettin).

    Both copies are integrated as one 12-dimensional system so they share the
    step sequence; the separation is rescaled to ``d0`` every ``renorm_dt``.
    The perturbation points along (1, 1, 1, 1, 0) so the photon number, a
    conserved quantity without losses, is left untouched.

    Distances are measured in the embedded coordinates, where the Bloch
    components (W cos phi, W sin phi), W = sqrt(q^2 - z^2), replace phi.  In
    the raw chart a phase offset is stretched by 1/W near |z| = q, which adds
    a large O(1/horizon) bias.
    """
    if not 1e-10 <= d0 <= 1e-6:
        raise DomainError("d0 must lie in [1e-10, 1e-6]")
    _validate(horizon, renorm_dt, transient)
    y = to_chart(s0.as_array())
    h = config.h_init
    if transient > 0:
        y, h = _advance(y, 0.0, transient, params, config, _kernels.MODE_TANGENT, h)
    direction = np.array([1.0, 1.0, 1.0, 1.0, 0.0]) / 2.0
    pub = np.empty(5)
    _kernels.copy_to_public(y, 0, pub)
    e_ref = _embed(y)
    e_pert = _embed(np.append(pub + d0 * direction, 0.0))
    e_pert = e_ref + (e_pert - e_ref) * (d0 / np.linalg.norm(e_pert - e_ref))
    yy = np.concatenate([y, _unembed(e_pert, y)])
    n_int = int(round((horizon - transient) / renorm_dt))
    total = 0.0
    t = transient
    for i in range(1, n_int + 1):
        t_next = transient + i * renorm_dt
        yy, h = _advance(yy, t, t_next, params, config, _kernels.MODE_PAIR, h)
        t = t_next
        e_ref, e_pert = _embed(yy[:CS]), _embed(yy[CS:])
        dist = float(np.linalg.norm(e_pert - e_ref))
        if dist == 0.0 or not math.isfinite(dist):
            raise DivergenceError(f"separation degenerated at t = {t:.6g}")
        total += math.log(dist / d0)
        yy[CS:] = _unembed(e_ref + (e_pert - e_ref) * (d0 / dist), yy[:CS])
    return total / (n_int * renorm_dt)


def finite_time_max_lyapunov(params: SystemParams, s0: State, duration: float,
                             renorm_dt: float = 1.0,
                             config: IntegratorConfig = LYAPUNOV_CONFIG) -> float:
    """Largest exponent over ``[duration/2, duration]``, after a transient of
    half the window spent aligning the tangent vector."""
    result = lyapunov_spectrum(params, s0, horizon=duration, renorm_dt=renorm_dt,
                               transient=0.0, n_vectors=1, config=config, trace_every=1)
    times = result.trace[:, 0]
    sums = result.trace[:, 1] * times
    if len(times) < 3:
        return result.max_exponent
    half = min(int(np.searchsorted(times, 0.5 * duration)), len(times) - 2)
    return float((sums[-1] - sums[half]) / (times[-1] - times[half]))
