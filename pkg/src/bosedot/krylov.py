"""Action of exp(scale * H) on a vector for Hermitian H.

Below a dimension cutoff the action goes through a full eigendecomposition
(exact up to rounding, and reusable).  Above it a segmented Lanczos iteration
is used: the scale is split into segments, each segment is approximated in a
small Krylov space with full reorthogonalization, and the whole computation
is verified by halving the segment length until two successive refinements
agree to the requested tolerance.  The scale may be complex, so the same
routine serves thermal weights (negative real scale) and unitary evolution
(imaginary scale).
"""

import numpy as np
from scipy import sparse
from scipy.linalg import eigh, eigh_tridiagonal

from .fock import SolverConvergenceError

DENSE_CUTOFF = 2000


class HermitianExp:
    """Cached eigendecomposition of a Hermitian operator for repeated use."""

    def __init__(self, matrix):
        m = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
        self.evals, self.evecs = eigh(m)

    def apply(self, v, scale):
        c = self.evecs.conj().T @ v
        return self.evecs @ (np.exp(scale * self.evals) * c)


def _lanczos_segment(matvec, v, scale, tol, m_max):
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return v.copy()
    basis = [v / beta0]
    alphas, betas = [], []
    for j in range(m_max):
        w = matvec(basis[j])
        a = float(np.real(np.vdot(basis[j], w)))
        alphas.append(a)
        w = w - a * basis[j]
        if j > 0:
            w = w - betas[-1] * basis[j - 1]
        for u in basis:
            w = w - np.vdot(u, w) * u
        b = np.linalg.norm(w)
        evals, q = eigh_tridiagonal(np.array(alphas), np.array(betas))
        small = q @ (np.exp(scale * evals) * q[0])
        if b < 1e-14 or abs(b * small[-1]) * abs(scale) < 0.1 * tol:
            coeff = beta0 * small
            out = np.zeros_like(v)
            for c, u in zip(coeff, basis):
                out = out + c * u
            return out
        betas.append(b)
        basis.append(w / b)
    coeff = beta0 * small
    out = np.zeros_like(v)
    for c, u in zip(coeff, basis[:len(coeff)]):
        out = out + c * u
    return out


def _segmented(matvec, v, scale, tol, m_max, nseg):
    u = v
    for _ in range(nseg):
        u = _lanczos_segment(matvec, u, scale / nseg, tol, m_max)
    return u


def expm_action(matrix, v, scale, tol=1e-10, dense_cutoff=DENSE_CUTOFF,
                m_max=80, max_refine=12):
    """exp(scale * matrix) v for Hermitian matrix, scale real or complex.

    The Lanczos path verifies itself by segment halving: the result is
    accepted once two successive segment counts agree within tol relative to
    the larger norm.
    """
    v = np.asarray(v, dtype=complex)
    n = matrix.shape[0]
    if n <= dense_cutoff:
        return HermitianExp(matrix).apply(v, scale)

    matvec = (matrix.dot if sparse.issparse(matrix) else
              np.asarray(matrix).dot)
    nseg = 1
    prev = _segmented(matvec, v, scale, tol, m_max, nseg)
    for _ in range(max_refine):
        nseg *= 2
        cur = _segmented(matvec, v, scale, tol, m_max, nseg)
        scale_norm = max(np.linalg.norm(cur), np.linalg.norm(prev), 1e-300)
        if np.linalg.norm(cur - prev) <= tol * scale_norm:
            return cur
        prev = cur
    raise SolverConvergenceError(
        "matrix exponential action did not stabilize under segment halving")
