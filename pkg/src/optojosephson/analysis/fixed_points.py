"""Equilibria, their Newton refinement and linear stability."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .. import _kernels
from ..exceptions import ConvergenceError, EigensolverError
from ..model import (ControlParams, State, SystemParams, control_params,
                     jacobian_values, wrap_phase)

FAMILIES = ("symmetric_pi", "broken_pair", "symmetric_zero", "vacuum", "thermal")
STABILITY_TOL = 1e-9
RESIDUAL_TOL = 1e-12
MAX_NEWTON_ITER = 50


@dataclass(frozen=True)
class FixedPoint:
    """An equilibrium with its family label and linear stability.

    ``eigenvalues`` are those of the 5x5 Jacobian.  Without photon loss the
    photon number is conserved and contributes an exact zero eigenvalue, which
    is left out of the stability decision.
    """

    state: State
    family: str
    eigenvalues: Tuple[complex, ...] = ()
    stability: Optional[str] = None
    residual: float = float("nan")

    @property
    def is_unstable(self) -> bool:
        return self.stability in ("unstable", "saddle")

    def to_dict(self) -> dict:
        return {
            "state": self.state.to_dict(),
            "family": self.family,
            "stability": self.stability,
            "residual": self.residual,
            "eigenvalues": [[float(ev.real), float(ev.imag)] for ev in self.eigenvalues],
        }


def residual_norm(y: np.ndarray, params: SystemParams) -> float:
    return float(np.max(np.abs(_field(y, params))))


def _field(y, params):
    return np.array(_kernels.base_field(y[0], y[1], y[2], y[3], y[4], params.as_array()))


def _make(values, family, params) -> FixedPoint:
    y = np.asarray(values, dtype=float)
    state = State(y[0], y[1], y[2], wrap_phase(y[3]), y[4])
    fp = FixedPoint(state=state, family=family, residual=residual_norm(state.as_array(), params))
    return classify_stability(fp, params)


def _thermal_roots(cp: ControlParams):
    """Roots v = W^2 / q0^2 of v^2 / c~^2 - (1 + D^2) v + D^2 = 0 inside (0, 1).

    Returns ``[(v, family), ...]``.  The root that reaches v = 1 at c~ = 1 is the
    pitchfork branch (``broken_pair``); the other is the outer branch that
    meets it in the saddle-node (``thermal``).
    """
    ct, d = cp.c_tilde, cp.d
    if ct is None or not math.isfinite(ct):
        return []
    b = 1.0 + d * d
    disc = b * b - 4.0 * d * d / (ct * ct)
    if disc < 0:
        return []
    root = math.sqrt(disc)
    v_plus = 0.5 * ct * ct * (b + root)
    v_minus = 0.5 * ct * ct * (b - root)
    pitchfork_plus = d < 1.0
    out = []
    for v, is_plus in ((v_plus, True), (v_minus, False)):
        if 0.0 < v < 1.0:
            out.append((v, "broken_pair" if is_plus == pitchfork_plus else "thermal"))
        if disc == 0.0:
            break
    return out


def closed_form_states(params: SystemParams, q: Optional[float] = None) -> List[Tuple[np.ndarray, str]]:
    """Closed-form equilibria as ``(vector, family)`` pairs, without stability.

    ``q`` fixes the conserved photon fraction when kappa = 0 (default 1).
    """
    cp = control_params(params)
    damp = 1.0 + params.gamma ** 2 / 4.0
    lam_n0 = params.lam * params.n0
    out = []
    if params.kappa == 0.0:
        qq = 1.0 if q is None else float(q)
        out.append((np.array([0.0, 0.0, 0.0, math.pi, qq]), "symmetric_pi"))
        out.append((np.array([0.0, 0.0, 0.0, 0.0, qq]), "symmetric_zero"))
        if params.lam > 0 and cp.c_damped < qq:
            z_star = math.sqrt(qq * qq - cp.c_damped ** 2)
            for sign in (1.0, -1.0):
                z = sign * z_star
                x = -lam_n0 * z / damp
                out.append((np.array([x, 0.5 * params.gamma * x, z, math.pi, qq]), "broken_pair"))
        return out
    if params.n_th == 0.0:
        return [(np.zeros(5), "vacuum")]
    q0 = cp.q0
    out.append((np.array([0.0, 0.0, 0.0, math.pi, q0]), "symmetric_pi"))
    out.append((np.array([0.0, 0.0, 0.0, 0.0, q0]), "symmetric_zero"))
    if params.lam > 0:
        for v, family in _thermal_roots(cp):
            w = q0 * math.sqrt(v)
            z_abs = q0 * math.sqrt(1.0 - v)
            for sign in (1.0, -1.0):
                z = sign * z_abs
                phi = math.atan2(cp.d * z / w, -w / cp.c_damped)
                x = -lam_n0 * z / damp
                out.append((np.array([x, 0.5 * params.gamma * x, z, phi, q0]), family))
    return out


def fixed_points_closed_form(params: SystemParams, q: Optional[float] = None) -> List[FixedPoint]:
    """Every closed-form equilibrium for the given loss configuration.

    * no photon loss: z = 0 points at phi = pi and phi = 0, plus the
      symmetry-broken pair z = +-sqrt(q^2 - c_damped^2), x = -lambda N0 z / (1 + gamma^2/4)
      when c_damped < q;
    * photon loss, no bath: only the empty cavity;
    * photon loss with a thermal bath: q = q0 = 2 N_th / N0 with z = 0 points and up
      to two symmetric pairs whose existence follows c_tilde and d.
    """
    return [_make(y, family, params) for y, family in closed_form_states(params, q)]


def _newton_vars(params: SystemParams):
    # without photon loss, q is a conserved quantity rather than an unknown
    return [0, 1, 2, 3] if params.kappa == 0.0 else [0, 1, 2, 3, 4]


def refine_fixed_point(guess: State, params: SystemParams, *, family: Optional[str] = None,
                       tol: float = RESIDUAL_TOL, max_iter: int = MAX_NEWTON_ITER) -> FixedPoint:
    """Damped Newton iteration on the vector field using the analytic Jacobian.

    Converged when the max-norm residual falls below ``tol * max(1, |x|, |p|)``.
    The phase is kept on the branch of the guess: an iterate drifting by more
    than pi in phi, or leaving |z| < q, is rejected.

    Raises
    ------
    ConvergenceError
        No root within ``max_iter`` iterations; carries the last iterate.
    """
    y = guess.as_array()
    phi_branch = y[3]
    idx = _newton_vars(params)
    f = _field(y, params)
    res = float(np.max(np.abs(f)))
    iterations = 0
    # the field cancels terms of size |x|, so its rounding floor scales with |x|
    while res >= tol * max(1.0, abs(y[0]), abs(y[1])):
        if iterations >= max_iter:
            raise ConvergenceError(f"Newton did not converge in {max_iter} iterations "
                                   f"(residual {res:.3g})", State.from_array(y), res)
        jac = jacobian_values(y, params)[np.ix_(idx, idx)]
        try:
            step = np.linalg.solve(jac, -f[idx])
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}", State.from_array(y), res) from exc
        alpha = 1.0
        while True:
            trial = y.copy()
            trial[idx] += alpha * step
            admissible = (abs(trial[2]) < trial[4] or trial[4] == 0.0) and trial[4] >= 0.0
            if admissible and abs(trial[3] - phi_branch) <= math.pi:
                f_trial = _field(trial, params)
                res_trial = float(np.max(np.abs(f_trial)))
                if np.isfinite(res_trial) and res_trial < (1.0 - 1e-4 * alpha) * res:
                    break
            alpha *= 0.5
            if alpha < 1.0 / 1024:
                raise ConvergenceError("line search failed; iterate left the admissible "
                                       f"branch (residual {res:.3g})", State.from_array(y), res)
        y, f, res = trial, f_trial, res_trial
        iterations += 1
    state = State(y[0], y[1], y[2], wrap_phase(y[3]), y[4])
    if family is None:
        family = infer_family(state, params)
    fp = FixedPoint(state=state, family=family, residual=res)
    return classify_stability(fp, params)


def infer_family(state: State, params: SystemParams, tol: float = 1e-7) -> str:
    if state.q <= tol:
        return "vacuum"
    if abs(state.z) <= tol * max(state.q, 1.0):
        return "symmetric_pi" if math.cos(state.phi) < 0 else "symmetric_zero"
    if params.kappa > 0 and params.n_th > 0:
        v = (state.q ** 2 - state.z ** 2) / state.q ** 2
        roots = _thermal_roots(control_params(params))
        if roots:
            return min(roots, key=lambda r: abs(r[0] - v))[1]
    return "broken_pair"


def _vacuum_eigenvalues(params: SystemParams) -> np.ndarray:
    # The (z, phi) chart is singular at the empty cavity; linearize in the
    # bilinear Bloch coordinates instead (membrane: -gamma/2 +- i, since the
    # damping acts on x and p alike; inversion/coherence: -kappa +- 2ig;
    # photon number: -kappa).
    g, gamma, kappa = params.g, params.gamma, params.kappa
    return np.array([-gamma / 2 + 1j, -gamma / 2 - 1j,
                     -kappa + 2j * g, -kappa - 2j * g, -kappa + 0j])


def stability_label(eigenvalues, tol: float = STABILITY_TOL) -> str:
    """Stable / unstable / saddle / center / marginal from eigenvalue real parts.

    ``saddle`` is reported when growing and decaying directions coexist,
    ``unstable`` when growth occurs without any decaying direction.
    """
    ev = np.asarray(eigenvalues, dtype=complex)
    re = ev.real
    if np.all(re < -tol):
        return "stable"
    if np.any(re > tol):
        return "saddle" if np.any(re < -tol) else "unstable"
    if np.all(np.abs(re) < tol) and np.all(np.abs(ev.imag) > tol):
        return "center"
    return "marginal"


def classify_stability(fp: FixedPoint, params: SystemParams,
                       tol: float = STABILITY_TOL) -> FixedPoint:
    """Fill in eigenvalues and the stability label.

    The q row of the Jacobian is ``(0, 0, 0, 0, -kappa)``, so the spectrum is the
    (x, p, z, phi) block spectrum plus ``-kappa``.  For kappa = 0 that extra zero
    belongs to the conserved photon number and is not used for the label.
    """
    y = fp.state.as_array()
    if fp.family == "vacuum" or fp.state.q <= 0.0:
        ev = _vacuum_eigenvalues(params)
        return replace(fp, eigenvalues=tuple(complex(e) for e in ev), stability=stability_label(ev, tol))
    jac = jacobian_values(y, params)
    if not np.all(np.isfinite(jac)):
        raise EigensolverError("non-finite Jacobian at fixed point")
    try:
        block = np.linalg.eigvals(jac[:4, :4])
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(str(exc)) from exc
    block = block[np.lexsort((block.imag, -block.real))]
    ev = np.append(block, -params.kappa + 0j)
    used = block if params.kappa == 0.0 else ev
    return replace(fp, eigenvalues=tuple(complex(e) for e in ev), stability=stability_label(used, tol))


def find_fixed_points(params: SystemParams, q: Optional[float] = None,
                      seeds: Optional[List[FixedPoint]] = None, dedupe_tol: float = 1e-7) -> List[FixedPoint]:
    """Closed forms refined by Newton, plus points continued from ``seeds``.

    Seeds (typically the fixed points of a neighbouring parameter value) are
    refined under ``params`` and added when they land on a new equilibrium.
    Points that fail to refine are dropped.
    """
    found: List[FixedPoint] = []
    candidates = [(State.from_array(y), fam) for y, fam in closed_form_states(params, q)]
    for fp in seeds or []:
        candidates.append((fp.state, None))
    for guess, family in candidates:
        if family == "vacuum":
            found.append(_make(guess.as_array(), "vacuum", params))
            continue
        if guess.q ** 2 - guess.z ** 2 <= _kernels.EPS_REG ** 2:
            continue
        if q is not None and params.kappa == 0.0:
            guess = State(guess.x, guess.p, guess.z, guess.phi, q)
        try:
            fp = refine_fixed_point(guess, params, family=family)
        except ConvergenceError:
            continue
        if any(_same(fp.state, other.state, dedupe_tol) for other in found):
            continue
        found.append(fp)
    return found


def _same(a: State, b: State, tol: float) -> bool:
    d = a.as_array() - b.as_array()
    d[3] = wrap_phase(d[3])
    scale = np.array([max(1.0, abs(a.x)), max(1.0, abs(a.p)), 1.0, 1.0, 1.0])
    return bool(np.all(np.abs(d) / scale < tol))
