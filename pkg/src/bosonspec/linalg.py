"""Dense non-Hermitian eigendecompositions with deterministic ordering.

Everything funnels through LAPACK's general eigensolver; this module adds the
canonical eigenvalue ordering (descending real part, then ascending imaginary
part, then original index), residual tracking, and null-vector extraction.
Left eigenvectors come from the same LAPACK call as the right ones, so the
pairing is by index and cannot mismatch near degeneracies; accuracy loss near
exceptional points is reported through `vectors_reliable` instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateSteadyStateError, EigenComputationError

RESIDUAL_FACTOR = 1e-8


def _canonical_order(eigs):
    idx = np.arange(len(eigs))
    return np.lexsort((idx, eigs.imag, -eigs.real))


@dataclass
class EigenSystem:
    """Eigenvalues in canonical order, optionally with aligned vectors.

    right[:, k] is the right eigenvector of eigenvalues[k]; left[:, k]
    satisfies left[:, k]^H A = eigenvalues[k] left[:, k]^H.  residual_max is
    max_k ||A v_k - lambda_k v_k||_2 over unit right vectors; min_overlap is
    the smallest normalized |left^H right| diagonal overlap.  The vectors are
    flagged unreliable when the residual exceeds 1e-8 times the spectral
    radius or the overlap drops below 1e-8 (near-defective input).
    """

    eigenvalues: np.ndarray
    right: np.ndarray | None = None
    left: np.ndarray | None = None
    residual_max: float | None = None
    min_overlap: float | None = None
    vectors_reliable: bool = True

    @property
    def dim(self):
        return len(self.eigenvalues)

    def spectral_radius(self):
        return float(np.max(np.abs(self.eigenvalues))) if self.dim else 0.0


def eig_general(a, want_vectors=False) -> EigenSystem:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eig_general needs a square matrix")
    try:
        if want_vectors:
            eigs, vl, vr = sla.eig(a, left=True, right=True)
        else:
            eigs = sla.eigvals(a)
    except sla.LinAlgError as exc:
        raise EigenComputationError(f"eigensolver failed: {exc}") from exc
    order = _canonical_order(eigs)
    eigs = eigs[order]
    if not want_vectors:
        return EigenSystem(eigenvalues=eigs)
    vr = vr[:, order]
    vl = vl[:, order]
    resid = np.linalg.norm(a @ vr - vr * eigs[None, :], axis=0)
    norms = np.linalg.norm(vr, axis=0)
    residual_max = float(np.max(resid / norms))
    radius = float(np.max(np.abs(eigs))) if len(eigs) else 0.0
    # backward-stable solvers keep residuals tiny even for defective input;
    # the left/right overlap collapsing is what signals unreliable vectors
    overlaps = np.abs(np.einsum("ij,ij->j", vl.conj(), vr))
    overlaps /= norms * np.linalg.norm(vl, axis=0)
    min_overlap = float(np.min(overlaps)) if len(eigs) else 1.0
    reliable = (residual_max <= RESIDUAL_FACTOR * max(radius, 1e-300)
                and min_overlap >= RESIDUAL_FACTOR)
    return EigenSystem(eigenvalues=eigs, right=vr, left=vl,
                       residual_max=residual_max, min_overlap=min_overlap,
                       vectors_reliable=reliable)


def null_vector(a, tol):
    """Unit-norm right vector for the single eigenvalue inside |lambda| < tol.

    Raises if no eigenvalue lies within tol, or if more than one does (the
    near-null space would be degenerate and the vector ambiguous).
    """
    a = np.asarray(a, dtype=np.complex128)
    es = eig_general(a, want_vectors=True)
    hits = np.flatnonzero(np.abs(es.eigenvalues) < tol)
    if len(hits) == 0:
        raise EigenComputationError(
            f"no eigenvalue within {tol:g} of zero "
            f"(closest {np.min(np.abs(es.eigenvalues)):g})")
    if len(hits) > 1:
        raise DegenerateSteadyStateError(
            f"{len(hits)} eigenvalues within {tol:g} of zero")
    v = es.right[:, hits[0]]
    v = v / np.linalg.norm(v)
    resid = np.linalg.norm(a @ v)
    scale = np.linalg.norm(a)
    if resid > tol * max(scale, 1e-300):
        raise EigenComputationError(
            f"null vector residual {resid:g} exceeds {tol * scale:g}")
    return v


def spectral_match_distance(a, b):
    """Largest pairing distance between two eigenvalue multisets.

    Uses an optimal assignment, so it is robust to ordering differences
    between two independently computed spectra.  Quadratic memory; intended
    for cross-checks on moderate sizes.
    """
    a = np.asarray(a, dtype=np.complex128).ravel()
    b = np.asarray(b, dtype=np.complex128).ravel()
    if a.shape != b.shape:
        raise ValueError("multisets must have equal size")
    if len(a) == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def conjugation_defect(eigs):
    """Max distance from each conjugated eigenvalue to the nearest member.

    Zero (to roundoff) for any spectrum closed under complex conjugation.
    """
    eigs = np.asarray(eigs, dtype=np.complex128).ravel()
    if len(eigs) == 0:
        return 0.0
    conj = eigs.conj()
    worst = 0.0
    chunk = 2048
    for k in range(0, len(eigs), chunk):
        d = np.abs(conj[k:k + chunk, None] - eigs[None, :]).min(axis=1)
        worst = max(worst, float(d.max()))
    return worst
