"""Landau-Zener sweep ``H(t) = delta * sx + eps * t * sz`` interrupted by
nonselective measurements in the instantaneous eigenbasis."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .effective import ValidityWarning, solve_pauli
from .generators import hamiltonian_generator
from .operators import OrthonormalBasis, ValidationError
from .propagation import (
    DEFAULT_TOL,
    MeasurementSchedule,
    adaptive_window,
    intervened_evolution,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
KINDS = ("uniform", "adapted", "none")
WINDOW_TOL = 1e-5
VALIDITY_THRESHOLD = 0.3


@dataclass(frozen=True)
class LZParams:
    delta: float
    eps: float

    def __post_init__(self):
        for name in ("delta", "eps"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def window(self):
        """Half-width ``2 delta / eps`` of the measurement window."""
        return 2 * self.delta / self.eps


def lz_hamiltonian(p):
    def H(t):
        return p.delta * SX + p.eps * t * SZ
    return H


def level_energy(p, t):
    """Positive eigenvalue ``sqrt(delta^2 + (eps t)^2)``."""
    return math.hypot(p.delta, p.eps * t)


def diabatic_basis(p, t):
    """Instantaneous eigenvectors ``(phi_0, phi_1)`` of ``H(t)``; phi_0 is the lower level.

    Both vectors are real, with the explicit smooth gauge of the closed-form
    expressions (no re-phasing).
    """
    E = level_energy(p, t)
    et = p.eps * t
    # E - eps t, written without cancellation for large positive t
    a = E - et if et <= 0 else p.delta ** 2 / (E + et)
    n = math.sqrt(2 * E * a)
    V = np.array([[a, p.delta], [-p.delta, a]], dtype=complex) / n
    return OrthonormalBasis(V, fix_gauge=False)


def basis_coupling_sq(p, t):
    """``|<d phi_1/dt | phi_0>|^2 = eps^2 delta^2 / (4 (delta^2 + (eps t)^2)^2)``."""
    E2 = p.delta ** 2 + (p.eps * t) ** 2
    return p.eps ** 2 * p.delta ** 2 / (4 * E2 ** 2)


def lz_formula(p):
    """Asymptotic probability ``exp(-pi delta^2 / eps)`` of staying in |0>."""
    return math.exp(-math.pi * p.delta ** 2 / p.eps)


@dataclass(frozen=True)
class LZSchedule:
    kind: str
    N: int
    times: tuple = field(default=())

    def __len__(self):
        return len(self.times)

    def spacings(self):
        return np.diff(self.times)

    def measurement_schedule(self, p):
        return MeasurementSchedule(self.times, tuple(lambda t: diabatic_basis(p, t) for _ in self.times))


def make_schedule(p, kind, N=0):
    """Measurement times on ``[-2 delta/eps, 2 delta/eps]``.

    ``uniform``: 2N+1 equally spaced times. ``adapted``: times
    ``sign(k) 2 delta |k| (|k| + 1) / (eps N (N + 1))`` for ``k = -N..N``,
    denser near the crossing. ``none``: no measurements.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")
    if kind == "none":
        return LZSchedule("none", 0, ())
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ValidationError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    w = p.window
    if kind == "uniform":
        times = np.linspace(-w, w, 2 * N + 1)
        times[N] = 0.0
    else:
        k = np.arange(-N, N + 1)
        times = np.sign(k) * w * np.abs(k) * (np.abs(k) + 1) / (N * (N + 1))
    times = np.unique(np.round(times, 15))  # identical times are one measurement
    return LZSchedule(kind, N, tuple(float(t) for t in times))


def lz_rate(p, t, spacing):
    """Right-hand-side coefficient of the effective equation for rho_11.

    ``d rho_11/dt = lz_rate * (1 - 2 rho_11)`` between measurements separated
    by ``spacing``.
    """
    E2 = p.delta ** 2 + (p.eps * t) ** 2
    return p.eps ** 2 * p.delta ** 2 * spacing / (4 * E2) * (1 / E2 + spacing ** 2)


def lz_rate_integral(p, a, b, spacing):
    """Exact ``int_a^b lz_rate dt`` for a constant spacing; ``a``/``b`` may be infinite."""
    D, e = p.delta, p.eps

    def F(t):
        u = math.copysign(math.inf, t) if math.isinf(t) else e * t / D
        at = math.atan(u)
        frac = 0.0 if math.isinf(u) else u / (1 + u * u)
        first = (frac + at) / (2 * D ** 3 * e)  # int dt / (D^2 + e^2 t^2)^2
        second = at / (D * e)                   # int dt / (D^2 + e^2 t^2)
        return e ** 2 * D ** 2 * spacing / 4 * (first + spacing ** 2 * second)

    return F(b) - F(a)


def validity_ratio(p, t, spacing):
    """``spacing`` relative to the basis drift time ``(delta^2 + (eps t)^2) / (eps delta)``."""
    return spacing * p.eps * p.delta / (p.delta ** 2 + (p.eps * t) ** 2)


@dataclass
class LZEffectiveResult:
    times: np.ndarray
    rho11: np.ndarray
    terminal: float
    tails: str
    max_validity_ratio: float
    fallback: bool = False


def lz_effective_ode(p, schedule, tol=DEFAULT_TOL, tails="frozen", samples_per_interval=0):
    """Integrate the effective population equation across a schedule.

    Starting from ``rho_11 = 0`` the equation is integrated over every
    interval between consecutive measurements, with the interval length as
    the spacing. Before the first and after the last measurement the
    population is held fixed (``tails="frozen"``) or keeps evolving with the
    boundary spacing to infinity (``tails="extend"``). Without measurements
    the exact unmeasured dynamics is returned instead.
    """
    if tails not in ("frozen", "extend"):
        raise ValidationError(f"tails must be 'frozen' or 'extend', got {tails!r}")
    times = list(schedule.times)
    if len(times) == 0:
        ex = lz_exact(p, schedule, tol=tol)
        return LZEffectiveResult(np.array([]), np.array([]), ex.terminal_rho11, tails, 0.0, fallback=True)
    if len(times) == 1:
        return LZEffectiveResult(np.array(times), np.zeros(1), 0.0, tails, 0.0)

    def relax(r, integral):
        return 0.5 - (0.5 - r) * math.exp(-2 * integral)

    s = np.diff(times)
    rho = 0.0
    if tails == "extend":
        rho = relax(rho, lz_rate_integral(p, -math.inf, times[0], s[0]))
    out_t, out_r = [times[0]], [rho]
    ratio = 0.0
    for m in range(1, len(times)):
        a, b, sp = times[m - 1], times[m], s[m - 1]
        tc = a if abs(a) < abs(b) else b
        if a <= 0 <= b:
            tc = 0.0
        ratio = max(ratio, validity_ratio(p, tc, sp))

        def W(t, sp=sp):
            f = lz_rate(p, t, sp)
            return np.array([[-f, f], [f, -f]])

        t_eval = np.linspace(a, b, samples_per_interval + 2)
        sol = solve_pauli(W, [1 - rho, rho], a, b, tol=tol, t_eval=t_eval)
        for te, pop in zip(t_eval[1:-1], sol.populations[1:-1]):
            out_t.append(float(te))
            out_r.append(float(pop[1]))
        rho = float(sol.final[1])
        out_t.append(b)
        out_r.append(rho)
    if ratio > VALIDITY_THRESHOLD:
        warnings.warn(f"measurement spacing exceeds the validity range of the effective equation "
                      f"(ratio {ratio:.3g} > {VALIDITY_THRESHOLD})", ValidityWarning, stacklevel=2)
    if tails == "extend":
        rho = relax(rho, lz_rate_integral(p, times[-1], math.inf, s[-1]))
    return LZEffectiveResult(np.array(out_t), np.array(out_r), rho, tails, ratio)


def lz_closed_form(p, kind, N):
    """Terminal excited-level population for the two schedules, as printed."""
    if kind not in ("uniform", "adapted"):
        raise ValidationError(f"closed form exists only for 'uniform' and 'adapted', got {kind!r}")
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N!r}")
    D, e = p.delta, p.eps
    if kind == "uniform":
        x = math.pi * (8 * D ** 4 + e ** 2 * N ** 2) / (2 * e ** 2 * N ** 3)
    else:
        x = ((N + 1) ** 2 + 4 * D ** 4 / (3 * e ** 2)) / (2 * (N + 1) ** 3)
    return 0.5 * (1 - math.exp(-x))


@dataclass
class LZExactResult:
    terminal_rho11: float
    terminal_p0: float
    T: float
    trajectory: object
    window_history: list


def default_window(p, schedule=None):
    T0 = 4 * max(p.window, 1 / math.sqrt(p.eps))
    if schedule is not None and len(schedule.times):
        T0 = max(T0, 1.5 * max(abs(t) for t in schedule.times))
    return T0


def lz_exact(p, schedule, tol=DEFAULT_TOL, window_tol=WINDOW_TOL, T0=None, max_doublings=8,
             grid=()):
    """Exact intervened evolution on ``[-T, T]`` with ``T`` grown until converged.

    The run starts in the lower instantaneous level at ``-T`` (which tends
    to |0> as T grows) and the terminal excited-level population is read
    in the instantaneous basis at ``+T``.
    """
    L = hamiltonian_generator(lz_hamiltonian(p))
    ms = schedule.measurement_schedule(p)
    T0 = default_window(p, schedule) if T0 is None else T0
    runs = {}

    def run(T):
        b0 = diabatic_basis(p, -T)
        rho0 = b0.projector(0)
        traj = intervened_evolution(L, ms, rho0, -T, T, tol, grid=[g for g in grid if -T < g < T],
                                    prepare=False)
        runs[T] = traj
        return [diabatic_basis(p, T).populations(traj.final)[1]]

    val, T, hist = adaptive_window(run, T0, window_tol, max_doublings)
    traj = runs[T]
    traj.bases = [b if b is not None else diabatic_basis(p, t) for t, b in zip(traj.times, traj.bases)]
    traj.bases[-1] = diabatic_basis(p, T)
    traj.bases[0] = diabatic_basis(p, -T)
    p0 = float(np.real(traj.final[0, 0]))
    return LZExactResult(float(val[0]), p0, T, traj, [(t, float(v[0])) for t, v in hist])


def lz_experiment(p, kind, N, tol=DEFAULT_TOL, tails="frozen", window_tol=WINDOW_TOL):
    """Exact, effective and closed-form terminal rho_11 for one schedule."""
    sched = make_schedule(p, kind, N)
    exact = lz_exact(p, sched, tol=tol, window_tol=window_tol)
    report = {
        "delta": p.delta, "eps": p.eps, "kind": kind, "N": int(sched.N),
        "measurements": len(sched), "regime_eps_over_delta2": p.eps / p.delta ** 2,
        "exact": exact.terminal_rho11, "exact_p0_computational": exact.terminal_p0,
        "truncation_T": exact.T, "exact_steps": exact.trajectory.meta.get("accepted_steps"),
        "lz_formula": lz_formula(p),
    }
    if kind == "none":
        report.update(effective=None, closed_form=None)
    else:
        eff = lz_effective_ode(p, sched, tol=tol, tails=tails)
        closed = lz_closed_form(p, kind, N)
        report.update(effective=eff.terminal, closed_form=closed,
                      validity_ratio=eff.max_validity_ratio, tails=tails)
    vals = {k: report[k] for k in ("exact", "effective", "closed_form") if report.get(k) is not None}
    devs = {}
    names = list(vals)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            devs[f"{a}-{b}"] = vals[a] - vals[b]
    report["deviations"] = devs
    report["N_times_rho11"] = {k: (sched.N * v if sched.N else None) for k, v in vals.items()}
    return report
