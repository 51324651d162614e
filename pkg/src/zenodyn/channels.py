"""Nonselective (complete dephasing) measurement channels and the classical
rate matrices that describe a drifting measurement basis."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .operators import (
    OrthonormalBasis,
    ValidationError,
    BranchCutError,
    apply,
    principal_log,
    sandwich,
)

DOUBLY_STOCHASTIC_TOL = 1e-10
RATE_OFFDIAG_TOL = 1e-10
PROJECTION_TRIGGER = 1e-8
FD_STEP = 1e-5


class DegenerateBasisError(ValueError):
    pass


class ProjectedRateWarning(UserWarning):
    pass


class DephasingChannel:
    """Complete dephasing in a fixed orthonormal basis.

    ``X -> sum_k <k|X|k> |k><k|``. The superoperator is built once on
    construction and the object is treated as immutable afterwards.
    """

    def __init__(self, basis):
        if not isinstance(basis, OrthonormalBasis):
            basis = OrthonormalBasis(basis)
        self.basis = basis
        d = basis.dim
        S = np.zeros((d * d, d * d), dtype=complex)
        for k in range(d):
            P = basis.projector(k)
            S += sandwich(P)
        S.setflags(write=False)
        self._S = S

    @property
    def dim(self):
        return self.basis.dim

    @property
    def superop(self):
        return self._S

    def __call__(self, X):
        V = self.basis.matrix
        diag = np.einsum("ik,ij,jk->k", V.conj(), np.asarray(X), V)
        return (V * diag) @ V.conj().T

    def apply_superop(self, X):
        return apply(self._S, X)

    def __repr__(self):
        return f"DephasingChannel(dim={self.dim})"


def dephasing_channel(basis):
    return DephasingChannel(basis)


def overlap_matrix(prev, next):
    """Squared overlaps ``B[k', k] = |<k'_next|k_prev>|^2``.

    Rows index the new basis and columns the old one, so populations
    transform as ``p_next = B @ p_prev``. The result is doubly stochastic.
    """
    if prev.dim != next.dim:
        raise ValidationError(f"basis dimensions differ: {prev.dim} vs {next.dim}")
    return np.abs(next.matrix.conj().T @ prev.matrix) ** 2


def is_doubly_stochastic(B, tol=DOUBLY_STOCHASTIC_TOL):
    B = np.asarray(B)
    return bool(
        np.all(B >= -tol)
        and np.max(np.abs(B.sum(axis=0) - 1)) <= tol
        and np.max(np.abs(B.sum(axis=1) - 1)) <= tol
    )


@dataclass(frozen=True)
class RateMatrix:
    """Generator of a classical population dynamics ``dp/dt = matrix @ p``.

    ``matrix[k, l]`` for ``k != l`` is the rate of the transition ``l -> k``;
    columns sum to zero. ``kind`` is ``"drift"`` for basis-drift rates, or
    ``"dynamical"`` for rates induced by the generator. ``projected`` is set
    when negative off-diagonal rates had to be clamped.
    """

    matrix: np.ndarray
    kind: str = "dynamical"
    projected: bool = False

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def offdiag_min(self):
        M = self.matrix
        mask = ~np.eye(M.shape[0], dtype=bool)
        return float(M[mask].min()) if mask.any() else 0.0

    def column_sum_residual(self):
        return float(np.max(np.abs(self.matrix.sum(axis=0))))

    def is_valid(self, offdiag_tol=RATE_OFFDIAG_TOL, sum_tol=1e-9):
        return self.offdiag_min() >= -offdiag_tol and self.column_sum_residual() <= sum_tol

    def __add__(self, other):
        kind = self.kind if self.kind == other.kind else "combined"
        return RateMatrix(self.matrix + other.matrix, kind, self.projected or other.projected)

    def __mul__(self, c):
        return RateMatrix(self.matrix * c, self.kind, self.projected)

    __rmul__ = __mul__


def rates_from_transitions(W, kind="dynamical"):
    """Build a column-sum-zero rate matrix from off-diagonal ``W[k, l]`` (l -> k)."""
    W = np.array(W, dtype=float)
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(W, -W.sum(axis=0))
    return RateMatrix(W, kind)


def rate_from_overlap(B, dt, warn=True):
    """Rate matrix ``Q = log(B) / dt`` embedding a doubly stochastic step.

    Off-diagonal rates below ``-1e-8`` (a non-embeddable ``B``) are clamped
    to zero and the diagonal is repaired; the result is then flagged as
    ``projected`` and a :class:`ProjectedRateWarning` is emitted.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt!r}")
    B = np.asarray(B, dtype=float)
    try:
        L = principal_log(B)
    except BranchCutError as exc:
        raise BranchCutError(f"overlap matrix has no principal logarithm: {exc}", exc.eigenvalue) from exc
    if np.iscomplexobj(L):
        if np.max(np.abs(L.imag)) > 1e-8:
            raise BranchCutError("principal logarithm of the overlap matrix is not real", None)
        L = L.real
    Q = L / dt
    off = ~np.eye(Q.shape[0], dtype=bool)
    if Q[off].size and Q[off].min() < -PROJECTION_TRIGGER:
        if warn:
            warnings.warn(
                f"overlap matrix is not embeddable (min off-diagonal rate {Q[off].min():.3g}); "
                "negative rates clamped", ProjectedRateWarning, stacklevel=2)
        Q = np.where(off, np.maximum(Q, 0.0), 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=0))
        return RateMatrix(Q, "drift", projected=True)
    return RateMatrix(Q, "drift")


def align_basis(basis, reference):
    """Re-phase ``basis`` to be continuous with ``reference``.

    Raises :class:`DegenerateBasisError` if some vector has no overlap with
    its predecessor, in which case no gauge choice is meaningful.
    """
    ov = np.abs(np.einsum("ik,ik->k", reference.matrix.conj(), basis.matrix))
    if np.any(ov < 1e-12):
        raise DegenerateBasisError(
            "cannot fix phase gauge: a basis vector is orthogonal to its predecessor")
    return basis.aligned_to(reference)


def basis_derivative(basis_fn, t, h):
    """Central finite-difference derivative of the basis vectors at ``t``.

    Returns ``(basis(t), d/dt basis(t))`` with the neighbours phase-aligned
    to the central basis.
    """
    b0 = basis_fn(t)
    bp = align_basis(basis_fn(t + h), b0)
    bm = align_basis(basis_fn(t - h), b0)
    return b0, (bp.matrix - bm.matrix) / (2 * h)


def basis_drift_rates(basis_fn, t, dt, h=None, char_time=1.0):
    """Basis-drift rates ``Q[k', k] = |<dk'/dt|k>|^2 dt`` (k != k') at time ``t``.

    The derivative uses central differences with step ``h`` (default
    ``1e-5 * char_time``). Diagonal entries make the columns sum to zero.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt!r}")
    h = FD_STEP * char_time if h is None else h
    b0, dV = basis_derivative(basis_fn, t, h)
    G = np.abs(dV.conj().T @ b0.matrix) ** 2  # G[k', k] = |<dk'|k>|^2
    return rates_from_transitions(G * dt, kind="drift")
