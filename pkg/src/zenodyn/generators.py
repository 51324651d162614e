"""Time-dependent generators of open-system dynamics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .operators import (
    ValidationError,
    choi_min_eigenvalue,
    commutator_superop,
    hermiticity_residual,
    induced_trace_norm,
    left,
    matrix_exp,
    right,
    sandwich,
    trace_residual,
)

HAMILTONIAN_TOL = 1e-10
GKSL_TRACE_TOL = 1e-10
GKSL_HERM_TOL = 1e-10
GKSL_CHOI_TOL = 1e-9


class ZeroStrengthError(ValueError):
    pass


def _constant(value):
    return lambda t: value


def _as_fn(x):
    return x if callable(x) else _constant(np.asarray(x))


def _as_rate_fn(x):
    return x if callable(x) else _constant(float(x))


@dataclass(frozen=True)
class GeneratorSpec:
    """A generator ``L(t)`` assembled from a Hamiltonian and jump operators.

    ``L(t)[X] = -i[H(t), X] + sum_j g_j(t) (A_j X A_j^+ - {A_j^+ A_j, X}/2)``.
    Calling a GeneratorSpec at a time returns the superoperator matrix.
    """

    dim: int
    hamiltonian_fn: Optional[Callable] = None
    jump_ops: tuple = ()
    time_dependent: bool = True
    scale: float = 1.0

    @property
    def kind(self):
        if self.hamiltonian_fn is not None and self.jump_ops:
            return "composite"
        if self.jump_ops:
            return "dissipative"
        return "hamiltonian"

    @property
    def is_hamiltonian(self):
        return not self.jump_ops

    def hamiltonian(self, t, check=True):
        """Effective Hamiltonian ``scale * H(t)`` (zero if none)."""
        if self.hamiltonian_fn is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        H = np.asarray(self.hamiltonian_fn(t), dtype=complex)
        if not check:
            return self.scale * H if self.scale != 1.0 else H
        if H.shape != (self.dim, self.dim):
            raise ValidationError(f"Hamiltonian at t={t!r} has shape {H.shape}, expected {(self.dim, self.dim)}")
        if np.max(np.abs(H - H.conj().T)) > HAMILTONIAN_TOL * max(1.0, np.max(np.abs(H))):
            raise ValidationError(f"Hamiltonian is not Hermitian at t={t!r}")
        return self.scale * H

    def jumps(self, t):
        """List of ``(A, rate)`` at time ``t`` with rates already scaled."""
        out = []
        for A_fn, rate_fn in self.jump_ops:
            rate = float(rate_fn(t))
            if rate < 0:
                raise ValidationError(f"negative dissipation rate {rate!r} at t={t!r}")
            out.append((np.asarray(A_fn(t), dtype=complex), self.scale * rate))
        return out

    def __call__(self, t):
        d = self.dim
        S = np.zeros((d * d, d * d), dtype=complex)
        if self.hamiltonian_fn is not None:
            S += commutator_superop(self.hamiltonian(t))
        for A, rate in self.jumps(t):
            S += rate * dissipator(A)
        return S

    def scaled(self, c):
        """Generator multiplied by a positive constant."""
        return GeneratorSpec(self.dim, self.hamiltonian_fn, self.jump_ops, self.time_dependent, self.scale * c)

    def __add__(self, other):
        if self.dim != other.dim:
            raise ValidationError("cannot add generators of different dimension")
        if self.hamiltonian_fn is None:
            H = other._scaled_h()
        elif other.hamiltonian_fn is None:
            H = self._scaled_h()
        else:
            h1, h2 = self._scaled_h(), other._scaled_h()
            H = lambda t: h1(t) + h2(t)
        jumps = tuple(self._scaled_jumps()) + tuple(other._scaled_jumps())
        return GeneratorSpec(self.dim, H, jumps, self.time_dependent or other.time_dependent)

    def _scaled_h(self):
        if self.hamiltonian_fn is None:
            return None
        fn, c = self.hamiltonian_fn, self.scale
        return fn if c == 1.0 else (lambda t: c * np.asarray(fn(t)))

    def _scaled_jumps(self):
        c = self.scale
        for A_fn, rate_fn in self.jump_ops:
            yield (A_fn, rate_fn if c == 1.0 else (lambda t, r=rate_fn: c * r(t)))


def dissipator(A):
    """Superoperator of ``X -> A X A^+ - {A^+ A, X}/2``."""
    A = np.asarray(A, dtype=complex)
    AdA = A.conj().T @ A
    return sandwich(A) - 0.5 * (left(AdA) + right(AdA))


def hamiltonian_generator(H_fn, time_dependent=None):
    """Unitary generator ``X -> -i[H(t), X]``; ``H_fn`` may be a constant matrix."""
    if time_dependent is None:
        time_dependent = callable(H_fn)
    fn = _as_fn(H_fn)
    d = np.asarray(fn(0.0)).shape[0]
    return GeneratorSpec(d, fn, (), time_dependent)


def dissipative_generator(A_fn, gamma_fn, time_dependent=None):
    """Single-channel Lindblad dissipator ``g(t) (A X A^+ - {A^+A, X}/2)``."""
    if time_dependent is None:
        time_dependent = callable(A_fn) or callable(gamma_fn)
    if not callable(gamma_fn) and float(gamma_fn) < 0:
        raise ValidationError(f"negative dissipation rate {gamma_fn!r}")
    a = _as_fn(A_fn)
    d = np.asarray(a(0.0)).shape[0]
    return GeneratorSpec(d, None, ((a, _as_rate_fn(gamma_fn)),), time_dependent)


def composite_generator(H_fn=None, jumps=(), dim=None):
    """Hamiltonian part plus any number of ``(A, rate)`` dissipators."""
    jump_ops = tuple((_as_fn(A), _as_rate_fn(r)) for A, r in jumps)
    h = None if H_fn is None else _as_fn(H_fn)
    if dim is None:
        probe = h(0.0) if h is not None else jump_ops[0][0](0.0)
        dim = np.asarray(probe).shape[0]
    td = callable(H_fn) or any(callable(A) or callable(r) for A, r in jumps)
    return GeneratorSpec(dim, h, jump_ops, td)


@dataclass(frozen=True)
class StrengthSplit:
    """``L(t) = gamma * normalized`` at one time."""

    t: float
    gamma: float
    normalized: np.ndarray = field(repr=False)


def split_strength(L, t=0.0, samples=1000, seed=0):
    """Factor ``L(t)`` into an estimated induced trace norm and a unit-norm map."""
    S = L(t) if callable(L) else np.asarray(L)
    if np.max(np.abs(S), initial=0.0) == 0:
        raise ZeroStrengthError(f"generator vanishes at t={t!r}")
    gamma = induced_trace_norm(S, samples=samples, seed=seed)
    return StrengthSplit(t, gamma, S / gamma)


@dataclass(frozen=True)
class GKSLReport:
    trace_residual: float
    hermiticity_residual: float
    min_choi_eigenvalue: float
    t_probe: float
    verdict: bool

    def __str__(self):
        flag = "GKSL-consistent" if self.verdict else "NOT GKSL-consistent"
        return (f"{flag}: trace residual {self.trace_residual:.2e}, "
                f"hermiticity residual {self.hermiticity_residual:.2e}, "
                f"min Choi eigenvalue of exp(L t) {self.min_choi_eigenvalue:.2e} (t={self.t_probe})")


def gksl_check(S, t_probe=1.0, trace_tol=GKSL_TRACE_TOL, herm_tol=GKSL_HERM_TOL,
               choi_tol=GKSL_CHOI_TOL):
    """Diagnose whether ``S`` generates a completely positive trace-preserving semigroup."""
    S = np.asarray(S)
    tr = trace_residual(S)
    herm = hermiticity_residual(S)
    lam = choi_min_eigenvalue(matrix_exp(S * t_probe))
    ok = tr <= trace_tol and herm <= herm_tol and lam >= -choi_tol
    return GKSLReport(tr, herm, lam, t_probe, bool(ok))
