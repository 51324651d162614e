"""Dense operator and superoperator machinery.

Conventions used throughout the package:

* operators are ``(d, d)`` complex numpy arrays;
* superoperators are ``(d*d, d*d)`` complex arrays acting on column-stacked
  operators, i.e. ``vec(X)[i + d*j] == X[i, j]``, so that
  ``vec(A X B) == kron(B.T, A) @ vec(X)``.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg, optimize

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
ORTHONORMAL_TOL = 1e-10
CHOI_PSD_TOL = 1e-10


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class BranchCutError(ValueError):
    """Raised when a principal matrix logarithm does not exist."""

    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = eigenvalue


# -- vectorization -----------------------------------------------------------

def vec(X):
    """Column-stack a square matrix into a 1-D vector."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, dim=None):
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
        if dim * dim != v.size:
            raise ValidationError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape((dim, dim), order="F")


def superop_dim(S):
    """System dimension d of a d^2 x d^2 superoperator."""
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"superoperator must be square, got shape {S.shape}")
    d = int(round(np.sqrt(S.shape[0])))
    if d * d != S.shape[0]:
        raise ValidationError(f"superoperator size {S.shape[0]} is not a perfect square")
    return d


def apply(S, X):
    """Apply superoperator ``S`` to operator ``X``."""
    X = np.asarray(X)
    return unvec(np.asarray(S) @ vec(X), X.shape[0])


def left(A):
    """Superoperator of X -> A X."""
    A = np.asarray(A)
    return np.kron(np.eye(A.shape[0]), A)


def right(B):
    """Superoperator of X -> X B."""
    B = np.asarray(B)
    return np.kron(B.T, np.eye(B.shape[0]))


def sandwich(A, B=None):
    """Superoperator of X -> A X B (B defaults to A^dagger)."""
    A = np.asarray(A)
    B = A.conj().T if B is None else np.asarray(B)
    return np.kron(B.T, A)


def commutator_superop(H):
    """Superoperator of X -> -i [H, X]."""
    return -1j * (left(H) - right(H))


def identity_superop(d):
    return np.eye(d * d, dtype=complex)


def superop_from_map(fn, d):
    """Tabulate an arbitrary linear map on d x d operators."""
    S = np.zeros((d * d, d * d), dtype=complex)
    for col in range(d * d):
        E = np.zeros(d * d, dtype=complex)
        E[col] = 1.0
        S[:, col] = vec(fn(unvec(E, d)))
    return S


# -- elementary checks -------------------------------------------------------

def _as_square(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    return M


def is_hermitian(M, tol=HERMITIAN_TOL):
    M = np.asarray(M)
    return bool(np.max(np.abs(M - M.conj().T), initial=0.0) <= tol)


def check_density(rho, herm_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, psd_tol=PSD_TOL):
    """Validate a density operator and return it as a complex array.

    Raises :class:`ValidationError` naming the violated property.
    """
    rho = _as_square(np.asarray(rho, dtype=complex), "density operator")
    if not np.all(np.isfinite(rho)):
        raise ValidationError("density operator has non-finite entries")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValidationError(f"density operator is not Hermitian (residual {herm:.3g})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValidationError(f"density operator trace is {tr!r}, expected 1")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam < -psd_tol:
        raise ValidationError(f"density operator is not positive (min eigenvalue {lam:.3g})")
    return rho


def pure_state(psi):
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


class OrthonormalBasis:
    """An orthonormal basis stored as the columns of a unitary matrix.

    Each vector is put in a canonical phase gauge: its largest-magnitude
    component is real and positive.
    """

    def __init__(self, vectors, tol=ORTHONORMAL_TOL, fix_gauge=True):
        V = _as_square(np.array(vectors, dtype=complex), "basis")
        if not np.all(np.isfinite(V)):
            raise ValidationError("basis has non-finite entries")
        gram = V.conj().T @ V
        err = np.max(np.abs(gram - np.eye(V.shape[0])))
        if err > tol:
            raise ValidationError(f"basis is not orthonormal (Gram residual {err:.3g})")
        if fix_gauge:
            V = canonical_gauge(V)
        V.setflags(write=False)
        self._V = V

    @property
    def matrix(self):
        """Unitary whose k-th column is the k-th basis vector."""
        return self._V

    @property
    def dim(self):
        return self._V.shape[0]

    def __len__(self):
        return self.dim

    def __getitem__(self, k):
        return self._V[:, k]

    def projector(self, k):
        v = self._V[:, k]
        return np.outer(v, v.conj())

    def matrix_elements(self, A):
        """Matrix of ``<k|A|l>`` in this basis."""
        return self._V.conj().T @ np.asarray(A) @ self._V

    def populations(self, rho):
        """Diagonal ``<k|rho|k>`` as a real vector."""
        return np.real(np.einsum("ik,ij,jk->k", self._V.conj(), np.asarray(rho), self._V))

    def diagonal_operator(self, p):
        """Operator ``sum_k p_k |k><k|``."""
        return (self._V * np.asarray(p)) @ self._V.conj().T

    def aligned_to(self, other):
        """Copy with each vector re-phased to maximize Re<other_k|self_k>."""
        ov = np.einsum("ik,ik->k", other.matrix.conj(), self._V)
        mag = np.abs(ov)
        phase = np.ones_like(ov)
        phase[mag > 0] = np.conj(ov[mag > 0]) / mag[mag > 0]
        return OrthonormalBasis(self._V * phase, fix_gauge=False)

    @classmethod
    def computational(cls, d):
        return cls(np.eye(d))

    def __repr__(self):
        return f"OrthonormalBasis(dim={self.dim})"


def canonical_gauge(V):
    V = np.array(V, dtype=complex)
    idx = np.argmax(np.abs(V), axis=0)
    lead = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(lead) / lead)


def eigenbasis(H, gap_tol=1e-10, time=None):
    """Eigenvalues (ascending) and eigenbasis of a Hermitian matrix.

    Raises :class:`ValidationError` when two eigenvalues are closer than
    ``gap_tol`` since the basis is then not unique.
    """
    H = _as_square(np.asarray(H, dtype=complex), "Hamiltonian")
    w, V = np.linalg.eigh(0.5 * (H + H.conj().T))
    if w.size > 1 and np.min(np.diff(w)) < gap_tol:
        where = "" if time is None else f" at t={time!r}"
        raise ValidationError(f"degenerate eigenbasis{where}: eigenvalue gap {abs(np.min(np.diff(w))):.3g}")
    return w, OrthonormalBasis(V, fix_gauge=True)


# -- matrix functions --------------------------------------------------------

def matrix_exp(M):
    """Matrix exponential.

    Hermitian and anti-Hermitian inputs go through an eigendecomposition;
    everything else through scipy's Pade scaling-and-squaring.
    """
    M = _as_square(np.asarray(M), "matrix")
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix_exp: non-finite entries")
    atol = 1e-14 * max(1.0, float(np.max(np.abs(M))))
    if np.allclose(M, M.conj().T, rtol=0, atol=atol):
        w, V = np.linalg.eigh(M)
        out = (V * np.exp(w)) @ V.conj().T
        return out.real if np.isrealobj(M) else out
    if np.allclose(M, -M.conj().T, rtol=0, atol=atol):
        w, V = np.linalg.eigh(1j * M)
        return (V * np.exp(-1j * w)) @ V.conj().T
    return linalg.expm(M)


def principal_log(M, cut_tol=1e-12):
    """Principal matrix logarithm.

    Raises :class:`BranchCutError` if an eigenvalue lies on the closed
    negative real axis (within ``cut_tol``).
    """
    M = _as_square(np.asarray(M), "matrix")
    if not np.all(np.isfinite(M)):
        raise ValidationError("principal_log: non-finite entries")
    lam = np.linalg.eigvals(M)
    scale = max(np.max(np.abs(lam)), 1.0)
    for z in lam:
        if z.real <= cut_tol * scale and abs(z.imag) <= cut_tol * scale:
            raise BranchCutError(f"eigenvalue {z:.6g} lies on the branch cut (-inf, 0]", z)
    L = linalg.logm(M)
    if np.isrealobj(M):
        L = np.real_if_close(L, tol=1e6)
        if np.iscomplexobj(L) and np.max(np.abs(L.imag)) < 1e-10 * max(1.0, np.max(np.abs(L))):
            L = L.real
    return L


# -- channel structure -------------------------------------------------------

def choi_matrix(S):
    """Choi matrix ``sum_ij |i><j| (x) S[|i><j|]`` (input factor first)."""
    S = np.asarray(S)
    d = superop_dim(S)
    # C[(i,a),(j,b)] = S[|i><j|]_{ab} = S[a + d b, i + d j]
    T = S.reshape(d, d, d, d, order="F")  # T[a, b, i, j]
    return T.transpose(2, 0, 3, 1).reshape(d * d, d * d)


def choi_min_eigenvalue(S):
    C = choi_matrix(S)
    return float(np.linalg.eigvalsh(0.5 * (C + C.conj().T)).min())


def partial_trace_output(C, d):
    """Trace out the output factor of a Choi matrix."""
    return np.einsum("iaja->ij", np.asarray(C).reshape(d, d, d, d))


def is_completely_positive(S, tol=CHOI_PSD_TOL):
    return choi_min_eigenvalue(S) >= -tol


def is_trace_preserving(S, tol=1e-10):
    d = superop_dim(S)
    return bool(np.max(np.abs(partial_trace_output(choi_matrix(S), d) - np.eye(d))) <= tol)


def trace_residual(S):
    """max |tr S[X]| over matrix units; zero for trace-annihilating maps."""
    d = superop_dim(S)
    return float(np.max(np.abs(vec(np.eye(d)).conj() @ np.asarray(S)), initial=0.0))


def hermiticity_residual(S):
    """Deviation of S from Hermiticity preservation, S[X^dagger] = S[X]^dagger."""
    S = np.asarray(S)
    d = superop_dim(S)
    # X -> X^dagger is antilinear: vec(X^dag) = P conj(vec X) with P the swap
    P = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            P[j + d * i, i + d * j] = 1.0
    return float(np.max(np.abs(P @ S.conj() @ P - S), initial=0.0))


def trace_norm(X):
    return float(np.sum(np.linalg.svd(np.asarray(X), compute_uv=False)))


def _random_unit(rng, d):
    z = rng.normal(size=d) + 1j * rng.normal(size=d)
    return z / np.linalg.norm(z)


def induced_trace_norm(S, samples=1000, seed=0, refine=3):
    """Lower-bound estimate of the induced trace norm of a superoperator.

    The trace-norm unit ball is the convex hull of dyads ``|psi><phi|``, so
    the norm equals the maximum of ``||S[|psi><phi|]||_1`` over unit vectors.
    We sample random dyads, then locally maximize from the ``refine`` best.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    S = np.asarray(S)
    d = superop_dim(S)
    rng = np.random.default_rng(seed)

    def value(psi, phi):
        return trace_norm(apply(S, np.outer(psi, phi.conj())))

    cands = []
    eye = np.eye(d)
    # matrix units first: exact for many structured maps
    for i in range(d):
        for j in range(d):
            cands.append((value(eye[i], eye[j]), eye[i].astype(complex), eye[j].astype(complex)))
    for _ in range(samples):
        psi, phi = _random_unit(rng, d), _random_unit(rng, d)
        cands.append((value(psi, phi), psi, phi))
    cands.sort(key=lambda c: -c[0])
    best = cands[0][0]

    def unpack(x):
        z = x[: 2 * d] + 0j
        psi = z[:d] + 1j * x[2 * d: 3 * d]
        phi = z[d: 2 * d] + 1j * x[3 * d:]
        return psi, phi

    def neg(x):
        psi, phi = unpack(x)
        npsi, nphi = np.linalg.norm(psi), np.linalg.norm(phi)
        if npsi == 0 or nphi == 0:
            return 0.0
        return -value(psi / npsi, phi / nphi)

    for _, psi, phi in cands[:max(refine, 0)]:
        x0 = np.concatenate([psi.real, phi.real, psi.imag, phi.imag])
        res = optimize.minimize(neg, x0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000 * d})
        best = max(best, -res.fun)
    return float(best)
