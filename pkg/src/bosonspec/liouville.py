"""Vectorized Liouvillians for Lindblad master equations.

Density matrices are vectorized by column stacking: element (m, n) of a D x D
matrix sits at index m + n*D.  Under that convention rho -> A rho B has the
matrix kron(B^T, A), which fixes every superoperator built here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateSteadyStateError
from .linalg import EigenSystem, eig_general, null_vector

ZERO_FACTOR = 1e-8


def vec_index(m, n, D):
    return m + n * D


def vectorize(rho):
    rho = np.asarray(rho)
    return rho.reshape(-1, order="F")


def devectorize(v, D=None):
    v = np.asarray(v)
    if D is None:
        D = round(len(v) ** 0.5)
    if D * D != len(v):
        raise ValueError(f"length {len(v)} is not a perfect square")
    return v.reshape((D, D), order="F")


@dataclass
class SuperOperator:
    """Dense matrix of a superoperator on column-stacked density matrices."""

    matrix: np.ndarray
    D: int

    @property
    def dim(self):
        return self.D * self.D


def _as_sparse(op):
    return op if sp.issparse(op) else sp.csr_matrix(op)


def build_superoperator(H, jumps) -> SuperOperator:
    """Matrix of L(rho) = -i[H, rho] + sum_nu D[L_nu](rho)."""
    H = _as_sparse(H)
    D = H.shape[0]
    eye = sp.identity(D, dtype=np.complex128, format="csr")
    s = -1j * (sp.kron(eye, H) - sp.kron(H.T, eye))
    for L in jumps:
        L = _as_sparse(L)
        LdL = (L.conj().T @ L).tocsr()
        s = s + sp.kron(L.conj(), L) \
            - 0.5 * sp.kron(eye, LdL) - 0.5 * sp.kron(LdL.T, eye)
    return SuperOperator(matrix=np.asarray(s.todense()), D=D)


def adjoint_superoperator(H, jumps) -> SuperOperator:
    """Matrix of the adjoint L^dag(a) = -i[a, H] + sum(L^dag a L - {L^dag L, a}/2).

    Built from its own defining formula, not by transposing
    build_superoperator, so the two can cross-check each other.
    """
    H = _as_sparse(H)
    D = H.shape[0]
    eye = sp.identity(D, dtype=np.complex128, format="csr")
    # a -> aH has matrix kron(H^T, I); a -> Ha has kron(I, H)
    s = -1j * (sp.kron(H.T, eye) - sp.kron(eye, H))
    for L in jumps:
        L = _as_sparse(L)
        Ld = L.conj().T.tocsr()
        LdL = (Ld @ L).tocsr()
        s = s + sp.kron(L.T, Ld) \
            - 0.5 * sp.kron(eye, LdL) - 0.5 * sp.kron(LdL.T, eye)
    return SuperOperator(matrix=np.asarray(s.todense()), D=D)


class LindbladAction:
    """Matrix-free application of a Liouvillian and its adjoint.

    Operators are densified once; repeated applications are plain GEMMs,
    which is what the integrators want.
    """

    def __init__(self, H, jumps):
        self.H = np.asarray(_as_sparse(H).todense())
        self.jumps = [np.asarray(_as_sparse(L).todense()) for L in jumps]
        self.jumps_dag = [L.conj().T.copy() for L in self.jumps]
        self.grams = [Ld @ L for L, Ld in zip(self.jumps, self.jumps_dag)]

    def apply(self, rho):
        out = -1j * (self.H @ rho - rho @ self.H)
        for L, Ld, G in zip(self.jumps, self.jumps_dag, self.grams):
            out += L @ rho @ Ld - 0.5 * (G @ rho + rho @ G)
        return out

    def apply_adjoint(self, a):
        out = -1j * (a @ self.H - self.H @ a)
        for L, Ld, G in zip(self.jumps, self.jumps_dag, self.grams):
            out += Ld @ a @ L - 0.5 * (G @ a + a @ G)
        return out


def apply_liouvillian(H, jumps, rho):
    return LindbladAction(H, jumps).apply(rho)


def steady_state(s: SuperOperator, tol=None):
    """Unique steady density matrix of the superoperator.

    The null vector is Hermitized and trace-normalized.  tol defaults to
    1e-8 times the spectral radius; more than one eigenvalue inside tol
    raises, because the steady state would not be unique.
    """
    es = eig_general(s.matrix, want_vectors=True)
    if tol is None:
        tol = ZERO_FACTOR * max(es.spectral_radius(), 1e-300)
    hits = np.flatnonzero(np.abs(es.eigenvalues) < tol)
    if len(hits) == 0:
        raise DegenerateSteadyStateError(
            f"no eigenvalue within {tol:g} of zero")
    if len(hits) > 1:
        raise DegenerateSteadyStateError(
            f"{len(hits)} eigenvalues within {tol:g} of zero")
    rho = devectorize(es.right[:, hits[0]], s.D)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        raise DegenerateSteadyStateError("null vector is traceless")
    return rho / tr


def mode_expansion(es: EigenSystem, rho):
    """Coefficients of rho over the right eigenmatrices.

    c_alpha = tr(rho'_alpha^dag rho) / tr(rho'_alpha^dag rho_alpha) with
    rho'_alpha the left eigenmatrix; raises when a normalizer vanishes
    (defective pair, expansion ill-defined there).
    """
    if es.right is None or es.left is None:
        raise ValueError("mode_expansion needs left and right vectors")
    v = vectorize(rho)
    # tr(A^dag B) is the Frobenius inner product = vec(A)^H vec(B)
    overlaps = es.left.conj().T @ v
    normalizers = np.einsum("ij,ij->j", es.left.conj(), es.right)
    scale = np.max(np.abs(es.left), axis=0) * np.max(np.abs(es.right), axis=0)
    bad = np.abs(normalizers) < 1e-12 * np.maximum(scale, 1e-300)
    if np.any(bad):
        raise DegenerateSteadyStateError(
            f"vanishing left/right normalizer on {int(bad.sum())} mode(s)")
    return overlaps / normalizers


def reconstruct(es: EigenSystem, coeffs, D):
    """Sum of coefficients times right eigenmatrices."""
    return devectorize(es.right @ coeffs, D)
