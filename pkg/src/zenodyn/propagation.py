"""Exact propagation, with and without interleaved nonselective measurements.

The integrator is the exponential midpoint rule (second-order Magnus):
each step applies ``exp(h * L(t + h/2))``. Step sizes adapt by comparing one
full step with two half steps (Richardson estimate).
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .channels import DephasingChannel, align_basis, DegenerateBasisError
from .operators import (
    OrthonormalBasis,
    ValidationError,
    check_density,
    eigenbasis,
    matrix_exp,
    unvec,
    vec,
)

DEFAULT_TOL = 1e-8
MAX_STEPS = 10_000_000
DEGENERACY_TOL = 1e-10


class NonConvergenceError(RuntimeError):
    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    min_step: float = np.inf
    max_step: float = 0.0

    def merge(self, other):
        self.accepted += other.accepted
        self.rejected += other.rejected
        self.min_step = min(self.min_step, other.min_step)
        self.max_step = max(self.max_step, other.max_step)
        return self

    def as_dict(self):
        return {"accepted_steps": self.accepted, "rejected_steps": self.rejected,
                "min_step": None if self.accepted == 0 else self.min_step,
                "max_step": None if self.accepted == 0 else self.max_step}


def integrate_midpoint(step, y, t0, t1, tol=DEFAULT_TOL, h_init=None, max_steps=MAX_STEPS,
                       stats=None):
    """Integrate with exponential-midpoint steps and step-doubling error control.

    ``step(y, t, h)`` must return the state advanced from ``t`` to ``t + h``
    by one midpoint-exponential step. A step is accepted when the estimated
    local error ``max|y_h - y_{h/2,h/2}| / 3`` is below ``tol``; rejected
    steps are halved.
    """
    stats = StepStats() if stats is None else stats
    if t1 < t0:
        raise ValidationError(f"t1={t1!r} precedes t0={t0!r}")
    span = t1 - t0
    if span == 0:
        return y, stats
    h = span if h_init is None else min(h_init, span)
    t = t0
    eps = 1e-14 * max(abs(t0), abs(t1), span)
    while t1 - t > eps:
        h = min(h, t1 - t)
        full = step(y, t, h)
        mid = step(y, t, 0.5 * h)
        half = step(mid, t + 0.5 * h, 0.5 * h)
        err = float(np.max(np.abs(full - half))) / 3.0
        if err <= tol or h <= eps:
            y = half
            t = t + h
            stats.accepted += 1
            stats.min_step = min(stats.min_step, h)
            stats.max_step = max(stats.max_step, h)
            grow = 2.0 if err == 0 else min(2.0, 0.9 * (tol / err) ** (1.0 / 3.0))
            h = h * max(grow, 1.0)
        else:
            stats.rejected += 1
            h = 0.5 * h
        if stats.accepted + stats.rejected > max_steps:
            raise NonConvergenceError(
                f"step budget of {max_steps} exhausted at t={t!r} (target {t1!r})",
                t=t, target=t1, step=h, **stats.as_dict())
    return y, stats


def _unitary(H, h):
    if H.shape == (2, 2):
        # H = c I + n.sigma  ->  exp(-i h H) = e^{-i h c} (cos(h|n|) I - i sin(h|n|) n.sigma/|n|)
        h00, h01, h10, h11 = complex(H[0, 0]), complex(H[0, 1]), complex(H[1, 0]), complex(H[1, 1])
        c = 0.5 * (h00 + h11).real
        z = 0.5 * (h00 - h11).real
        r = math.sqrt(z * z + abs(h10) ** 2)
        cs = math.cos(h * r)
        sn = math.sin(h * r) / r if r > 0 else h
        ph = cmath.exp(-1j * h * c)
        return ph * np.array([[cs - 1j * sn * z, -1j * sn * h01],
                              [-1j * sn * h10, cs + 1j * sn * z]])
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * h * w)) @ V.conj().T


def _generator_stepper(L):
    if L.is_hamiltonian:
        def step(rho, t, h):
            U = _unitary(L.hamiltonian(t + 0.5 * h, check=False), h)
            return U @ rho @ U.conj().T
        return step, False

    def step(v, t, h):
        return matrix_exp(h * L(t + 0.5 * h)) @ v
    return step, True


def _initial_step(L, t0, t1, tol):
    S = L(0.5 * (t0 + t1))
    scale = max(np.max(np.abs(S)), 1e-300)
    return min(t1 - t0, max(tol ** (1.0 / 3.0) / scale, 1e-6 * (t1 - t0)))


def propagate(L, rho, t0, t1, tol=DEFAULT_TOL, max_steps=MAX_STEPS, stats=None,
              return_stats=False):
    """Evolve ``rho`` under ``d rho/dt = L(t)[rho]`` from ``t0`` to ``t1``."""
    rho = np.asarray(rho, dtype=complex)
    if t1 < t0:
        raise ValidationError(f"t1={t1!r} precedes t0={t0!r}")
    stats = StepStats() if stats is None else stats
    if t1 == t0:
        return (rho.copy(), stats) if return_stats else rho.copy()
    if L.hamiltonian_fn is not None:
        L.hamiltonian(t0)
        L.hamiltonian(t1)
    step, vectorized = _generator_stepper(L)
    y = vec(rho) if vectorized else rho
    h0 = _initial_step(L, t0, t1, tol)
    y, stats = integrate_midpoint(step, y, t0, t1, tol, h0, max_steps, stats)
    out = unvec(y, rho.shape[0]) if vectorized else y
    out = 0.5 * (out + out.conj().T)
    return (out, stats) if return_stats else out


# -- measurement schedules ----------------------------------------------------

EIGENBASIS = "eigenbasis"
BasisSource = Union[OrthonormalBasis, Callable[[float], OrthonormalBasis], str]


@dataclass(frozen=True)
class MeasurementSchedule:
    """Measurement times, each paired with the basis used at that time.

    A basis source is a fixed :class:`OrthonormalBasis`, a callable returning
    one for a given time, or the string ``"eigenbasis"`` meaning the
    instantaneous eigenbasis of the generator's Hamiltonian.
    """

    times: tuple
    sources: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) != len(self.sources):
            raise ValidationError("times and basis sources differ in length")
        if any(not np.isfinite(t) for t in times):
            raise ValidationError("measurement times must be finite")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise ValidationError(f"measurement times must be strictly increasing ({a!r} then {b!r})")
        for s in self.sources:
            if not (isinstance(s, OrthonormalBasis) or callable(s) or s == EIGENBASIS):
                raise ValidationError(f"invalid basis source {s!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sources", tuple(self.sources))

    @classmethod
    def fixed(cls, basis, times):
        times = list(times)
        return cls(tuple(times), tuple([basis] * len(times)))

    @classmethod
    def uniform(cls, basis, t_start, tau, count):
        """``count`` measurements at ``t_start + tau, t_start + 2 tau, ...``."""
        return cls.fixed(basis, [t_start + tau * (n + 1) for n in range(count)])

    @classmethod
    def empty(cls):
        return cls((), ())

    def __len__(self):
        return len(self.times)

    def resolve(self, k, L=None, previous=None):
        """Basis used by the k-th measurement."""
        src, t = self.sources[k], self.times[k]
        if isinstance(src, OrthonormalBasis):
            basis = src
        elif callable(src):
            basis = src(t)
        else:
            if L is None:
                raise ValidationError("eigenbasis measurement requires a generator")
            try:
                _, basis = eigenbasis(L.hamiltonian(t), DEGENERACY_TOL, time=t)
            except ValidationError as exc:
                raise DegenerateBasisError(str(exc)) from exc
        if previous is not None and previous.dim == basis.dim:
            try:
                basis = align_basis(basis, previous)
            except DegenerateBasisError:
                pass
        return basis


@dataclass
class Trajectory:
    """Recorded states along a run.

    ``kinds`` labels each record (``start``, ``measure``, ``grid``, ``end``)
    and ``bases`` holds the measurement basis in force at the record.
    """

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    bases: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, t, rho, kind, basis):
        self.times.append(float(t))
        self.states.append(np.array(rho))
        self.kinds.append(kind)
        self.bases.append(basis)

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.states[-1]

    def populations(self, basis=None):
        """Array of shape (records, d) of diagonal elements.

        With ``basis=None`` each record is read in its own measurement basis.
        """
        rows = []
        for rho, b in zip(self.states, self.bases):
            b = basis if basis is not None else b
            rows.append(b.populations(rho) if b is not None else np.real(np.diag(rho)))
        return np.array(rows)

    def offdiag_norms(self, basis=None):
        out = []
        for rho, b in zip(self.states, self.bases):
            b = basis if basis is not None else b
            M = b.matrix_elements(rho) if b is not None else np.asarray(rho)
            out.append(float(np.linalg.norm(M - np.diag(np.diag(M)))))
        return np.array(out)

    def select(self, kind):
        idx = [i for i, k in enumerate(self.kinds) if k == kind]
        return Trajectory([self.times[i] for i in idx], [self.states[i] for i in idx],
                          [kind] * len(idx), [self.bases[i] for i in idx], dict(self.meta))


def intervened_evolution(L, schedule, rho0, t_start, t_end, tol=DEFAULT_TOL, grid=(),
                         prepare=True, scheme="exact", check_state=True):
    """Exact dynamics interrupted by nonselective measurements.

    Propagates between consecutive measurement times and applies the
    dephasing channel of each event. Records the initial state, the state
    right after every measurement, any requested ``grid`` times and the
    final state.

    With ``prepare=True`` the initial state is expected to be diagonal in
    the first measurement basis; if it is not, a warning is issued and the
    first channel is applied at ``t_start``.
    """
    if check_state:
        rho = check_density(rho0, herm_tol=1e-10, trace_tol=1e-10)
    else:
        rho = np.asarray(rho0, dtype=complex)
    times = schedule.times
    if times and (times[0] < t_start or times[-1] > t_end):
        raise ValidationError(
            f"measurement times [{times[0]!r}, {times[-1]!r}] fall outside [{t_start!r}, {t_end!r}]")
    if t_end < t_start:
        raise ValidationError("t_end precedes t_start")

    traj = Trajectory(meta={"scheme": scheme, "tol": tol, "t_start": t_start, "t_end": t_end,
                            "measurements": len(times)})
    stats = StepStats()
    basis = None
    if times:
        basis = schedule.resolve(0, L)
        if prepare:
            lam0 = DephasingChannel(basis)
            projected = lam0(rho)
            if np.max(np.abs(projected - rho)) > 1e-10:
                warnings.warn("initial state is not diagonal in the first measurement basis; "
                              "applying the first measurement at t_start", stacklevel=2)
                rho = projected
    traj.append(t_start, rho, "start", basis)

    checkpoints = sorted({float(g) for g in grid if t_start < g < t_end} | set(times))
    event_index = {t: k for k, t in enumerate(times)}
    t = t_start
    previous = basis
    for tc in checkpoints:
        if tc > t:
            rho, _ = propagate(L, rho, t, tc, tol, stats=stats, return_stats=True)
            t = tc
        if tc in event_index:
            k = event_index[tc]
            basis = schedule.resolve(k, L, previous)
            previous = basis
            rho = DephasingChannel(basis)(rho)
            traj.append(tc, rho, "measure", basis)
        else:
            traj.append(tc, rho, "grid", basis)
    if t_end > t:
        rho, _ = propagate(L, rho, t, t_end, tol, stats=stats, return_stats=True)
    traj.append(t_end, rho, "end", basis)
    traj.meta.update(stats.as_dict())
    return traj


@dataclass(frozen=True)
class ZenoRow:
    tau: float
    deviation: float
    predicted: float


def zeno_freeze_probe(L, basis, tau_list, horizon, rho0=None, tol=DEFAULT_TOL):
    """Population drift under uniform measurements of period ``tau``.

    For each ``tau`` the system starts in ``rho0`` (default: the first basis
    state), is measured every ``tau`` up to ``horizon``, and the largest
    deviation of the post-measurement populations from the initial ones is
    reported next to the prediction of the stroboscopic Pauli equation.
    """
    from .effective import diagonal_rates, solve_pauli, stroboscopic_generator

    taus = [float(x) for x in tau_list]
    if any(x <= 0 for x in taus):
        raise ValidationError("tau values must be positive")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValidationError("tau_list must be strictly decreasing")
    if rho0 is None:
        rho0 = basis.projector(0)
    p0 = basis.populations(rho0)
    channel = DephasingChannel(basis)
    rows = []
    for tau in taus:
        n = int(np.floor(horizon / tau + 1e-9))
        sched = MeasurementSchedule.uniform(basis, 0.0, tau, n)
        traj = intervened_evolution(L, sched, rho0, 0.0, n * tau, tol)
        pops = traj.select("measure").populations(basis)
        dev = float(np.max(np.abs(pops - p0))) if len(pops) else 0.0
        S = stroboscopic_generator(L(0.0), channel, 1.0, tau)
        W = diagonal_rates(S, basis)
        sol = solve_pauli(lambda t, W=W: W, p0, 0.0, n * tau, tol=tol,
                          t_eval=[tau * (m + 1) for m in range(n)])
        pred = float(np.max(np.abs(sol.populations - p0))) if n else 0.0
        rows.append(ZenoRow(tau, dev, pred))
    return rows


def adaptive_window(run, T0, tol, max_doublings=8):
    """Double a truncation half-width ``T`` until ``run(T)`` stops changing.

    ``run(T)`` returns a vector of terminal quantities. Returns
    ``(value, T, history)`` where the last two evaluations agree within
    ``tol`` in max-norm.
    """
    T = float(T0)
    prev = np.asarray(run(T))
    history = [(T, prev)]
    for _ in range(max_doublings):
        T *= 2.0
        cur = np.asarray(run(T))
        history.append((T, cur))
        if np.max(np.abs(cur - prev)) < tol:
            return cur, T, history
        prev = cur
    warnings.warn(f"truncation window did not converge within {max_doublings} doublings (T={T})",
                  stacklevel=2)
    return prev, T, history
