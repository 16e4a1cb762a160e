"""Mean-field model of a membrane-in-the-middle cavity.

Variables (all dimensionless, time in units of the inverse membrane frequency):

    x, p  membrane position and momentum
    z     photon inversion (n_a - n_b) / N0
    phi   relative phase arg(a^dagger b)
    q     photon loss fraction (n_a + n_b) / N0

Equations of motion::

    dx/dt   = p - gamma x / 2
    dp/dt   = -x - gamma p / 2 - lambda N0 z
    dz/dt   = 2 g sqrt(q^2 - z^2) sin(phi) - kappa z
    dphi/dt = 2 lambda x - 2 g z cos(phi) / sqrt(q^2 - z^2)
    dq/dt   = -kappa q + 2 kappa N_th / N0

The bare cavity frequency has been removed by going to the frame rotating
with the total photon number, so only ``g`` and ``lambda`` remain.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .exceptions import DomainError

EPS_REG = _kernels.EPS_REG
# slack allowed on |z| <= q for states produced by an integrator
Z_TOL = 1e-9
# sqrt(q^2 - z^2) below this makes the Jacobian entries blow up like W**-3
SINGULAR_W = 1e-6

STATE_FIELDS = ("x", "p", "z", "phi", "q")
PARAM_KEYS = ("g", "lambda", "n0", "kappa", "gamma", "n_th")


class NearSingularJacobianWarning(RuntimeWarning):
    """Jacobian evaluated close to the |z| = q coordinate pole."""


def wrap_phase(phi: float) -> float:
    """Map an angle onto (-pi, pi]."""
    r = math.remainder(phi, 2.0 * math.pi)
    return math.pi if r == -math.pi else r


def wrap_phase_array(phi: np.ndarray) -> np.ndarray:
    r = np.remainder(phi + np.pi, 2.0 * np.pi) - np.pi
    return np.where(r == -np.pi, np.pi, r)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants in units of the membrane frequency.

    ``lam`` is the optomechanical coupling; it is serialized under the key
    ``"lambda"``.
    """

    g: float
    lam: float
    n0: float
    kappa: float = 0.0
    gamma: float = 0.0
    n_th: float = 0.0

    def __post_init__(self):
        for name in ("g", "lam", "n0", "kappa", "gamma", "n_th"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise DomainError(f"{_key(name)} must be a number, got {value!r}")
            value = float(value)
            if not math.isfinite(value):
                raise DomainError(f"{_key(name)} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.g <= 0:
            raise DomainError(f"g must be > 0, got {self.g}")
        for name in ("lam", "kappa", "gamma", "n_th"):
            if getattr(self, name) < 0:
                raise DomainError(f"{_key(name)} must be >= 0, got {getattr(self, name)}")
        if self.n0 < 1:
            raise DomainError(f"n0 must be >= 1, got {self.n0}")

    @property
    def lossless(self) -> bool:
        return self.kappa == 0.0 and self.gamma == 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.g, self.lam, self.n0, self.kappa, self.gamma, self.n_th])

    def replace(self, **changes) -> "SystemParams":
        if "lambda" in changes:
            changes["lam"] = changes.pop("lambda")
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {"g": self.g, "lambda": self.lam, "n0": self.n0,
                "kappa": self.kappa, "gamma": self.gamma, "n_th": self.n_th}

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        unknown = set(data) - set(PARAM_KEYS)
        if unknown:
            raise DomainError(f"unknown parameter field(s): {', '.join(sorted(unknown))}")
        for key in ("g", "lambda", "n0"):
            if key not in data:
                raise DomainError(f"missing parameter field: {key}")
        kwargs = {("lam" if k == "lambda" else k): v for k, v in data.items()}
        return cls(**kwargs)


def _key(attr: str) -> str:
    return "lambda" if attr == "lam" else attr


def param_attr(key: str) -> str:
    """Translate a serialized parameter key into the attribute name."""
    if key not in PARAM_KEYS and key != "lam":
        raise DomainError(f"unknown parameter name {key!r}; expected one of {', '.join(PARAM_KEYS)}")
    return "lam" if key == "lambda" else key


@dataclass(frozen=True)
class State:
    x: float
    p: float
    z: float
    phi: float
    q: float

    def __post_init__(self):
        for name in STATE_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise DomainError(f"state field {name} must be a number, got {value!r}")
            value = float(value)
            if not math.isfinite(value):
                raise DomainError(f"state field {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "phi", wrap_phase(self.phi))
        if self.q < -Z_TOL:
            raise DomainError(f"q must be >= 0, got {self.q}")
        if abs(self.z) > self.q + Z_TOL:
            raise DomainError(f"|z| = {abs(self.z)} exceeds q = {self.q}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.p, self.z, self.phi, self.q])

    @classmethod
    def from_array(cls, values) -> "State":
        x, p, z, phi, q = (float(v) for v in values)
        return cls(x, p, z, phi, q)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in STATE_FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "State":
        unknown = set(data) - set(STATE_FIELDS)
        if unknown:
            raise DomainError(f"unknown state field(s): {', '.join(sorted(unknown))}")
        missing = [k for k in STATE_FIELDS if k not in data]
        if missing:
            raise DomainError(f"missing state field(s): {', '.join(missing)}")
        return cls(**{k: data[k] for k in STATE_FIELDS})


@dataclass(frozen=True)
class StateDerivative:
    dx: float
    dp: float
    dz: float
    dphi: float
    dq: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dp, self.dz, self.dphi, self.dq])


@dataclass(frozen=True)
class ControlParams:
    """Dimensionless combinations that locate the bifurcations.

    c         g / (lambda^2 N0); pitchfork of the lossless system at c = 1
    c_damped  c (1 + gamma^2 / 4); pitchfork with membrane damping
    d         kappa / (2 g); super- (d < 1) or subcritical (d > 1)
    q0        2 N_th / N0, the thermal photon fraction
    c_tilde   c_damped / q0, only defined when q0 > 0
    """

    c: float
    c_damped: float
    d: float
    q0: float
    c_tilde: Optional[float] = None

    @property
    def saddle_node(self) -> Optional[float]:
        """c_tilde of the saddle-node pair, 2d / (1 + d^2)."""
        return 2.0 * self.d / (1.0 + self.d * self.d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def control_params(params: SystemParams) -> ControlParams:
    if params.lam == 0.0:
        c = math.inf
    else:
        c = params.g / (params.lam ** 2 * params.n0)
    c_damped = c * (1.0 + params.gamma ** 2 / 4.0)
    d = params.kappa / (2.0 * params.g)
    q0 = 2.0 * params.n_th / params.n0
    c_tilde = c_damped / q0 if q0 > 0 else None
    return ControlParams(c=c, c_damped=c_damped, d=d, q0=q0, c_tilde=c_tilde)


def derivatives(s: State, params: SystemParams) -> StateDerivative:
    """Right-hand side of the mean-field equations.

    The ``sqrt(q^2 - z^2)`` in the phase equation is clamped from below at
    ``EPS_REG``; the pole at |z| = q is a coordinate artifact.
    """
    values = (s.x, s.p, s.z, s.phi, s.q)
    if not all(math.isfinite(v) for v in values):
        raise DomainError("non-finite state")
    return StateDerivative(*_kernels.base_field(*values, params.as_array()))


def energy(s: State, params: SystemParams) -> float:
    """First integral of the lossless equations.

    E = p^2/2 + x^2/2 + lambda N0 x z + g N0 sqrt(q^2 - z^2) cos(phi).
    (z, phi) are canonical up to the factor 2 / N0, so this is conserved when
    gamma = kappa = 0.
    """
    if abs(s.z) > s.q + Z_TOL:
        raise DomainError(f"|z| = {abs(s.z)} exceeds q = {s.q}")
    w = math.sqrt(max(s.q * s.q - s.z * s.z, 0.0))
    return (0.5 * s.p * s.p + 0.5 * s.x * s.x + params.lam * params.n0 * s.x * s.z
            + params.g * params.n0 * w * math.cos(s.phi))


def energy_values(values: np.ndarray, params: SystemParams) -> np.ndarray:
    """Vectorized :func:`energy` over rows of ``(x, p, z, phi, q)``."""
    x, p, z, phi, q = np.asarray(values, dtype=float).T
    w = np.sqrt(np.maximum(q * q - z * z, 0.0))
    return (0.5 * p * p + 0.5 * x * x + params.lam * params.n0 * x * z
            + params.g * params.n0 * w * np.cos(phi))


def jacobian(s: State, params: SystemParams) -> np.ndarray:
    """Analytic 5x5 Jacobian of :func:`derivatives` in (x, p, z, phi, q) order.

    Emits :class:`NearSingularJacobianWarning` when ``sqrt(q^2 - z^2)`` is below
    ``SINGULAR_W``.
    """
    w2 = s.q * s.q - s.z * s.z
    if w2 < SINGULAR_W ** 2:
        warnings.warn(f"Jacobian near the |z| = q pole (q^2 - z^2 = {w2:.3g})",
                      NearSingularJacobianWarning, stacklevel=2)
    jac = np.empty((5, 5))
    _kernels.jacobian_into(s.x, s.p, s.z, s.phi, s.q, params.as_array(), jac)
    return jac


def jacobian_values(y: np.ndarray, params: SystemParams) -> np.ndarray:
    """Jacobian at a raw (unwrapped) state vector; no domain checks."""
    jac = np.empty((5, 5))
    _kernels.jacobian_into(y[0], y[1], y[2], y[3], y[4], params.as_array(), jac)
    return jac


def divergence(params: SystemParams) -> float:
    """Phase-space volume contraction rate, -(gamma + 2 kappa), at every state."""
    return -(params.gamma + 2.0 * params.kappa)


def apply_symmetry(s: State) -> State:
    """Parity (x, p, z, phi, q) -> (-x, -p, -z, -phi, q)."""
    return State(-s.x, -s.p, -s.z, -s.phi, s.q)


def symmetry_values(values: np.ndarray) -> np.ndarray:
    """Parity on rows of ``(x, p, z, phi, q)``; phi is re-wrapped."""
    out = np.array(values, dtype=float, copy=True)
    out[..., :4] *= -1.0
    out[..., 3] = wrap_phase_array(out[..., 3])
    return out
