"""Effective generators for measurement-intervened dynamics and the classical
population (Pauli) equations they induce."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channels import (
    DephasingChannel,
    RateMatrix,
    basis_derivative,
    rates_from_transitions,
)
from .generators import dissipator
from .operators import (
    OrthonormalBasis,
    ValidationError,
    apply,
    eigenbasis,
    induced_trace_norm,
    is_hermitian,
    matrix_exp,
)
from .propagation import DEFAULT_TOL, StepStats, integrate_midpoint

VALIDITY_THRESHOLD = 0.3
QUADRATURE_NODES = 16
POPULATION_SLACK = 1e-8


class ValidityWarning(UserWarning):
    """The measurement interval is too long for the second-order expansion."""


def _channel(c):
    return c if isinstance(c, DephasingChannel) else DephasingChannel(c)


def diagonal_rates(S, basis):
    """Population generator of a diagonal-preserving superoperator.

    Returns the :class:`RateMatrix` with entries ``<k|S[|l><l|]|k>``.
    """
    d = basis.dim
    M = np.empty((d, d))
    for l in range(d):
        out = apply(S, basis.projector(l))
        M[:, l] = basis.populations(out)
    return RateMatrix(M, "dynamical")


def effective_generator_general(L, channel, interval, nodes=QUADRATURE_NODES,
                                warn_threshold=VALIDITY_THRESHOLD):
    """Second-order effective generator on one inter-measurement interval.

    Returns ``t -> Lam L(t) [Id + 1/2 int (L(s) - Lam L(s) Lam) ds] Lam`` where
    the integral over ``interval`` uses a ``nodes``-point midpoint rule.
    """
    lam = _channel(channel).superop
    a, b = map(float, interval)
    if not b > a:
        raise ValidationError(f"empty interval {interval!r}")
    dt = b - a
    s = a + dt * (np.arange(nodes) + 0.5) / nodes
    Ls = [L(x) for x in s]
    d2 = Ls[0].shape[0]
    strength = induced_trace_norm(L(0.5 * (a + b)), samples=64) * dt
    if strength > warn_threshold:
        warnings.warn(f"integrated generator strength {strength:.3g} over the interval exceeds "
                      f"{warn_threshold}; the second-order expansion may be inaccurate",
                      ValidityWarning, stacklevel=2)
    avg = sum(Ls) / nodes
    inner = np.eye(d2) + 0.5 * dt * (avg - lam @ avg @ lam)

    def L_eff(t):
        return lam @ L(t) @ inner @ lam
    return L_eff


def stroboscopic_generator(L, channel, gamma, tau):
    """Semigroup generator for measurements every ``tau`` under a constant generator.

    ``L`` is the dimensionless map (the full generator is ``gamma * L``);
    passing the full generator with ``gamma=1`` is equivalent.
    """
    lam = _channel(channel).superop
    L = np.asarray(L)
    first = lam @ L @ lam
    second = lam @ L @ L @ lam - first @ L @ lam
    return gamma * first + 0.5 * gamma ** 2 * tau * second


def _check_h(h):
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h, 1e-10):
        raise ValidationError("h must be Hermitian")
    return h


def gksl_effective_hamiltonian(h, basis, gamma, tau):
    """Lindblad form of the stroboscopic generator for ``L = -i gamma [h, .]``.

    Jump operators ``|k'><k|`` with rates ``gamma^2 tau |h_kk'|^2``.
    """
    h = _check_h(h)
    hb = basis.matrix_elements(h)
    d = basis.dim
    S = np.zeros((d * d, d * d), dtype=complex)
    for k in range(d):
        for kp in range(d):
            w = abs(hb[k, kp]) ** 2
            if k != kp and w > 0:
                A = np.outer(basis[kp], basis[k].conj())
                S += w * dissipator(A)
    return gamma ** 2 * tau * S


def pauli_rates_hamiltonian(h, basis, gamma, tau):
    """Pauli rates ``W[k, k'] = gamma^2 tau |h_kk'|^2`` for the transition k' -> k."""
    h = _check_h(h)
    hb = basis.matrix_elements(h)
    return rates_from_transitions(gamma ** 2 * tau * np.abs(hb) ** 2)


def escape_rates_hamiltonian(h, basis, gamma, tau):
    """Total escape rate per level, ``gamma^2 tau (<k|h^2|k> - <k|h|k>^2)``."""
    h = _check_h(h)
    hb = basis.matrix_elements(h)
    h2 = basis.matrix_elements(h @ h)
    return gamma ** 2 * tau * np.real(np.diag(h2) - np.diag(hb) ** 2)


def pauli_rates_dissipative(A_fn, gamma_fn, basis, t=0.0):
    """First-order Pauli rates of a single dissipator: ``W[k, k'] = gamma |<k|A|k'>|^2``."""
    A = np.asarray(A_fn(t) if callable(A_fn) else A_fn, dtype=complex)
    g = float(gamma_fn(t) if callable(gamma_fn) else gamma_fn)
    if g < 0:
        raise ValidationError(f"negative dissipation rate {g!r}")
    Ab = basis.matrix_elements(A)
    return rates_from_transitions(g * np.abs(Ab) ** 2)


@dataclass(frozen=True)
class DriftingRates:
    combined: RateMatrix
    drift: RateMatrix
    dynamical: RateMatrix
    t: float
    dt: float
    validity_ratio: float


def _char_time(H_fn, t, dt):
    w = np.linalg.eigvalsh(np.asarray(H_fn(t), dtype=complex))
    gap = np.min(np.diff(w)) if w.size > 1 else 1.0
    s = 1e-4 * dt
    dH = (np.asarray(H_fn(t + s)) - np.asarray(H_fn(t - s))) / (2 * s)
    rate = np.linalg.norm(dH, 2)
    return gap / rate if rate > 0 else 1.0


def drifting_basis_rates(H_fn, t_prev, t_next, h=None, return_parts=False,
                         warn_threshold=VALIDITY_THRESHOLD):
    """Rates for measurements in the instantaneous eigenbasis of ``H(t)``.

    With ``dt = t_next - t_prev`` and everything evaluated at the midpoint,
    the rate of ``l -> k`` is ``|<dk/dt|l>|^2 (1 + E_l^2 dt^2) dt``: the
    basis-drift part plus the dynamical part ``|<dk/dt|l>|^2 E_l^2 dt^3``.
    """
    dt = float(t_next) - float(t_prev)
    if not dt > 0:
        raise ValidationError("t_next must exceed t_prev")
    t = 0.5 * (t_prev + t_next)
    E, _ = eigenbasis(H_fn(t), 1e-10, time=t)

    def basis_fn(s):
        return eigenbasis(H_fn(s), 1e-10, time=s)[1]

    tc = _char_time(H_fn, t, dt)
    step = 1e-5 * tc if h is None else h
    b0, dV = basis_derivative(basis_fn, t, step)
    G = np.abs(dV.conj().T @ b0.matrix) ** 2  # G[k, l] = |<dk/dt|l>|^2
    np.fill_diagonal(G, 0.0)
    drift = rates_from_transitions(G * dt, "drift")
    dyn = rates_from_transitions(G * (E[None, :] ** 2) * dt ** 3, "dynamical")
    ratio = dt * float(np.sqrt(G.max())) if G.size else 0.0
    if ratio > warn_threshold:
        warnings.warn(f"measurement interval {dt:.3g} is long compared to the basis drift time "
                      f"(ratio {ratio:.3g})", ValidityWarning, stacklevel=2)
    combined = RateMatrix(drift.matrix + dyn.matrix, "combined")
    if return_parts:
        return DriftingRates(combined, drift, dyn, t, dt, ratio)
    return combined


@dataclass
class PauliSolution:
    times: np.ndarray
    populations: np.ndarray
    stats: StepStats
    out_of_range: bool = False

    @property
    def final(self):
        return self.populations[-1]


def _rate_array(R):
    return R.matrix if isinstance(R, RateMatrix) else np.asarray(R, dtype=float)


def solve_pauli(rates_fn, p0, t0, t1, tol=DEFAULT_TOL, t_eval=None, h_init=None):
    """Integrate ``dp/dt = W(t) p`` with exponential-midpoint steps.

    ``rates_fn(t)`` returns a :class:`RateMatrix` or a plain array. The
    solution is reported at ``t_eval`` (default: ``t0`` and ``t1``).
    """
    p = np.array(p0, dtype=float)
    if np.any(p < -POPULATION_SLACK) or abs(p.sum() - 1) > 1e-10:
        raise ValidationError(f"p0 is not a probability vector: {p0!r}")
    if t1 < t0:
        raise ValidationError("t1 precedes t0")
    if t_eval is None:
        t_eval = [t0, t1]
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0) or (t_eval.size and (t_eval[0] < t0 or t_eval[-1] > t1)):
        raise ValidationError("t_eval must be sorted within [t0, t1]")

    def step(y, t, h):
        return matrix_exp(h * _rate_array(rates_fn(t + 0.5 * h))) @ y

    stats = StepStats()
    out = []
    t = t0
    h = h_init
    for te in t_eval:
        if te > t:
            if h is None:
                scale = max(np.max(np.abs(_rate_array(rates_fn(0.5 * (t + te))))), 1e-300)
                h = min(te - t, max(tol ** (1 / 3) / scale, 1e-6 * (te - t)))
            p, stats = integrate_midpoint(step, p, t, te, tol, h, stats=stats)
            t = te
        out.append(p.copy())
    pops = np.array(out)
    bad = bool(pops.size and (pops.min() < -POPULATION_SLACK or pops.max() > 1 + POPULATION_SLACK))
    if bad:
        warnings.warn("populations left [0, 1] during the Pauli solve", stacklevel=2)
    return PauliSolution(t_eval, pops, stats, bad)


@dataclass
class StroboscopicRun:
    """Exact vs Pauli populations at the measurement times for one ``tau``."""

    tau: float
    gamma: float
    times: np.ndarray
    exact: np.ndarray
    pauli: np.ndarray
    offdiag: np.ndarray
    steps: int

    @property
    def max_deviation(self):
        return float(np.max(np.abs(self.exact - self.pauli))) if len(self.times) else 0.0


def stroboscopic_comparison(G, basis, taus, horizon, p0, scaling="fixed-g", g=1.0, tol=DEFAULT_TOL):
    """Compare exact intervened dynamics with the stroboscopic Pauli equation.

    ``G`` is a constant :class:`GeneratorSpec`. For ``scaling="fixed-g"`` the
    generator is rescaled by ``gamma = sqrt(g / tau)`` so that ``gamma^2 tau = g``;
    for ``"fixed-gamma"`` it is used as given. Measurements happen every
    ``tau`` in ``basis`` starting from the diagonal state with populations ``p0``.
    """
    from .propagation import MeasurementSchedule, intervened_evolution

    if scaling not in ("fixed-g", "fixed-gamma"):
        raise ValidationError(f"unknown scaling {scaling!r}")
    channel = DephasingChannel(basis)
    rho0 = basis.diagonal_operator(p0)
    runs = []
    for tau in map(float, taus):
        if tau <= 0:
            raise ValidationError("tau values must be positive")
        gamma = math.sqrt(g / tau) if scaling == "fixed-g" else 1.0
        L = G.scaled(gamma)
        n = int(math.floor(horizon / tau + 1e-9))
        sched = MeasurementSchedule.uniform(basis, 0.0, tau, n)
        traj = intervened_evolution(L, sched, rho0, 0.0, n * tau, tol)
        meas = traj.select("measure")
        exact = meas.populations(basis)
        # populations just before each measurement carry the same diagonal
        W = diagonal_rates(stroboscopic_generator(L(0.0), channel, 1.0, tau), basis)
        sol = solve_pauli(lambda t, W=W: W, p0, 0.0, n * tau, tol=tol, t_eval=np.asarray(meas.times))
        runs.append(StroboscopicRun(tau, gamma, np.asarray(meas.times), exact, sol.populations,
                                    meas.offdiag_norms(basis), int(traj.meta.get("accepted_steps", 0))))
    return runs


def halving_ratios(deviations):
    """Ratios of successive deviations for a sequence of halved ``tau`` values."""
    d = list(deviations)
    return [a / b if b > 0 else math.inf for a, b in zip(d, d[1:])]
