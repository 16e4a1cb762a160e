"""Labelling trajectories as Rabi, Josephson, self-trapped, chaotic or decayed."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..integrate import Trajectory
from ..model import SystemParams
from .lyapunov import LYAPUNOV_CONFIG, finite_time_max_lyapunov

REGIMES = ("rabi", "josephson", "self_trapped", "chaotic", "decayed")


@dataclass(frozen=True)
class RegimeThresholds:
    """Decision thresholds; desk-scale defaults, not physical constants."""

    decayed_fraction: float = 0.05
    trapped_mean_abs_z: float = 0.1
    chaotic_exponent: float = 0.005
    rabi_membrane_ratio: float = 0.1
    rabi_swing: float = 1.8
    lyapunov_renorm_dt: float = 1.0


@dataclass(frozen=True)
class RegimeLabel:
    label: str
    max_lyapunov: float
    mean_abs_z: float
    z_sign_changes: int
    final_q: float
    short_window: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def count_sign_changes(values: np.ndarray) -> int:
    signs = np.sign(values)
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def classify_regime(traj: Trajectory, params: Optional[SystemParams] = None,
                    thresholds: RegimeThresholds = RegimeThresholds(),
                    max_lyapunov: Optional[float] = None) -> RegimeLabel:
    """Assign a dynamical regime, checking in order:

    1. decayed: final q below ``decayed_fraction`` of the initial q;
    2. self_trapped: over the last half of the window z keeps one sign and
       the mean |z| exceeds ``trapped_mean_abs_z``;
    3. chaotic: finite-time largest Lyapunov exponent above ``chaotic_exponent``;
    4. rabi: the membrane-induced detuning lambda N0 max|x| stays below
       ``rabi_membrane_ratio * g`` while z swings over ``rabi_swing`` times mean q;
    5. josephson otherwise.

    The exponent is measured over the second half of the trajectory window
    starting from its first sample, unless ``max_lyapunov`` is supplied.
    Windows shorter than ten tunnelling periods (10 pi / g) are flagged.
    """
    params = traj.params if params is None else params
    duration = float(traj.times[-1] - traj.times[0])
    short = duration < 10.0 * math.pi / params.g
    late = traj.times >= traj.times[0] + 0.5 * duration
    z_late = traj.z[late]
    q_start, q_end = float(traj.q[0]), float(traj.q[-1])
    mean_abs_z = float(np.mean(np.abs(z_late)))
    sign_changes = count_sign_changes(z_late)

    if max_lyapunov is None:
        max_lyapunov = finite_time_max_lyapunov(params, traj.state(0), duration,
                                                renorm_dt=thresholds.lyapunov_renorm_dt,
                                                config=LYAPUNOV_CONFIG)
    evidence = dict(max_lyapunov=float(max_lyapunov), mean_abs_z=mean_abs_z,
                    z_sign_changes=sign_changes, final_q=q_end, short_window=short)

    if q_end < thresholds.decayed_fraction * q_start:
        return RegimeLabel("decayed", **evidence)
    if sign_changes == 0 and mean_abs_z > thresholds.trapped_mean_abs_z:
        return RegimeLabel("self_trapped", **evidence)
    if max_lyapunov > thresholds.chaotic_exponent:
        return RegimeLabel("chaotic", **evidence)
    detuning = params.lam * params.n0 * float(np.max(np.abs(traj.x)))
    swing = float(np.max(traj.z) - np.min(traj.z))
    if detuning < thresholds.rabi_membrane_ratio * params.g and swing > thresholds.rabi_swing * float(np.mean(traj.q)):
        return RegimeLabel("rabi", **evidence)
    return RegimeLabel("josephson", **evidence)
