"""Randomized invariant battery behind ``zenodyn check``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import unitary_group

from .channels import DephasingChannel, is_doubly_stochastic, overlap_matrix, rate_from_overlap
from .effective import (
    diagonal_rates,
    gksl_effective_hamiltonian,
    pauli_rates_hamiltonian,
    solve_pauli,
    stroboscopic_generator,
)
from .generators import commutator_superop, composite_generator, gksl_check
from .operators import (
    OrthonormalBasis,
    choi_matrix,
    is_completely_positive,
    is_trace_preserving,
    matrix_exp,
)
from .propagation import propagate

MAX_CHECK_DIM = 8


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    threshold: float
    passed: bool

    def row(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name:<34s} worst={self.worst:.3e}  limit={self.threshold:.1e}"


def random_hermitian(d, rng, scale=1.0):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (X + X.conj().T)


def random_connected_hermitian(d, rng, min_coupling=0.5):
    """Hermitian matrix whose off-diagonal entries all have modulus >= ``min_coupling``."""
    H = random_hermitian(d, rng)
    iu = np.triu_indices(d, 1)
    mag = min_coupling + rng.random(len(iu[0]))
    phase = np.exp(2j * np.pi * rng.random(len(iu[0])))
    H[iu] = mag * phase
    H[(iu[1], iu[0])] = np.conj(mag * phase)
    return H


def random_basis(d, rng):
    return OrthonormalBasis(unitary_group.rvs(d, random_state=rng) if d > 1 else np.eye(1))


def near_identity_basis(base, rng, size=0.05):
    """``base`` rotated by a small random unitary."""
    d = base.dim
    U = matrix_exp(-1j * random_hermitian(d, rng, size))
    return OrthonormalBasis(U @ base.matrix)


def _residual(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def check_idempotence(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            lam = DephasingChannel(random_basis(d, rng)).superop
            worst = max(worst, _residual(lam @ lam, lam))
    return worst


def check_first_order_vanishes(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            lam = DephasingChannel(random_basis(d, rng)).superop
            L = commutator_superop(random_hermitian(d, rng))
            worst = max(worst, float(np.max(np.abs(lam @ L @ lam))))
    return worst


def check_double_sandwich_vanishes(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            lam = DephasingChannel(random_basis(d, rng)).superop
            L = commutator_superop(random_hermitian(d, rng))
            worst = max(worst, float(np.max(np.abs(lam @ L @ lam @ L @ lam))))
    return worst


def check_channel_cptp(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            lam = DephasingChannel(random_basis(d, rng)).superop
            ok = is_completely_positive(lam) and is_trace_preserving(lam)
            worst = max(worst, max(0.0, -float(np.linalg.eigvalsh(choi_matrix(lam)).min())),
                        0.0 if ok else 1.0)
    return worst


def check_doubly_stochastic(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            B = overlap_matrix(random_basis(d, rng), random_basis(d, rng))
            worst = max(worst, float(np.max(np.abs(B.sum(0) - 1))), float(np.max(np.abs(B.sum(1) - 1))))
            if not is_doubly_stochastic(B):
                worst = max(worst, 1.0)
    return worst


def check_log_round_trip(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            b0 = random_basis(d, rng)
            B = overlap_matrix(b0, near_identity_basis(b0, rng))
            dt = 0.1
            Q = rate_from_overlap(B, dt, warn=False)
            if not Q.projected:
                worst = max(worst, _residual(matrix_exp(Q.matrix * dt), B))
    return worst


def check_gksl_effective(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            S = gksl_effective_hamiltonian(random_hermitian(d, rng), random_basis(d, rng), 1.0, 1.0)
            rep = gksl_check(S)
            worst = max(worst, rep.trace_residual, max(0.0, -rep.min_choi_eigenvalue),
                        0.0 if rep.verdict else 1.0)
    return worst


def check_strobe_matches_lindblad(rng, dims, trials):
    """On the diagonal sector the Lindblad form equals the stroboscopic generator."""
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            h, b = random_hermitian(d, rng), random_basis(d, rng)
            ch = DephasingChannel(b)
            lam = ch.superop
            strobe = stroboscopic_generator(commutator_superop(h), ch, 1.0, 1.0)
            lind = gksl_effective_hamiltonian(h, b, 1.0, 1.0)
            worst = max(worst, _residual(strobe, lind @ lam))
    return worst


def check_pauli_rates(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(trials):
            h, b = random_hermitian(d, rng), random_basis(d, rng)
            W = pauli_rates_hamiltonian(h, b, 1.0, 1.0)
            D = diagonal_rates(stroboscopic_generator(commutator_superop(h), b, 1.0, 1.0), b)
            worst = max(worst, _residual(W.matrix, D.matrix), W.column_sum_residual())
    return worst


def check_fixed_point(rng, dims, trials):
    worst = 0.0
    for d in dims:
        if d < 2:
            continue
        for _ in range(trials):
            b = random_basis(d, rng)
            h = b.matrix @ random_connected_hermitian(d, rng) @ b.matrix.conj().T
            W = pauli_rates_hamiltonian(h, b, 1.0, 1.0)
            p0 = np.zeros(d)
            p0[0] = 1.0
            sol = solve_pauli(lambda t: W, p0, 0.0, 50.0)
            worst = max(worst, float(np.max(np.abs(sol.final - 1.0 / d))))
    return worst


def check_propagation_positivity(rng, dims, trials):
    worst = 0.0
    for d in dims:
        for _ in range(max(1, trials // 4)):
            H = random_hermitian(d, rng)
            A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            L = composite_generator(H, [(A, 0.3)], dim=d)
            psi = unitary_group.rvs(d, random_state=rng)[:, 0] if d > 1 else np.ones(1)
            rho = propagate(L, np.outer(psi, psi.conj()), 0.0, 1.0, tol=1e-9)
            worst = max(worst, abs(np.trace(rho) - 1), _residual(rho, rho.conj().T),
                        max(0.0, -float(np.linalg.eigvalsh(rho).min())))
    return worst


BATTERY = [
    ("measurement idempotence", check_idempotence, 1e-11),
    ("first-order term vanishes", check_first_order_vanishes, 1e-11),
    ("second sandwich vanishes", check_double_sandwich_vanishes, 1e-11),
    ("measurement channel is CPTP", check_channel_cptp, 1e-10),
    ("overlap doubly stochastic", check_doubly_stochastic, 1e-10),
    ("overlap log round trip", check_log_round_trip, 1e-8),
    ("effective generator GKSL", check_gksl_effective, 1e-9),
    ("Lindblad form on diagonal sector", check_strobe_matches_lindblad, 1e-10),
    ("Pauli rates consistent", check_pauli_rates, 1e-10),
    ("maximally mixed fixed point", check_fixed_point, 1e-6),
    ("propagation keeps a density", check_propagation_positivity, 1e-8),
]


def run_battery(seed=0, max_dim=4, trials=10):
    """Run every invariant on random instances in dimensions ``2..max_dim``."""
    if not 1 <= max_dim <= MAX_CHECK_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_CHECK_DIM}], got {max_dim}")
    dims = list(range(2, max_dim + 1)) or [1]
    out = []
    for k, (name, fn, limit) in enumerate(BATTERY):
        rng = np.random.default_rng([seed, k])
        worst = fn(rng, dims, trials)
        out.append(CheckResult(name, worst, limit, bool(worst <= limit)))
    return out
