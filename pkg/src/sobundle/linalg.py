"""Dense symmetric-matrix utilities: PD modification, spectral norm, metric solves."""

import numpy as np

EPS_PD = 1e-8


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix required to be SPD fails its Cholesky factorization."""


def sym(a):
    """Symmetrize a square matrix: (A + A^T)/2."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def spectral_norm(a):
    """Largest absolute eigenvalue of a symmetric matrix."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(a))))


def pd_modification(a, eps_pd=EPS_PD):
    """Positive definite modification of a symmetric matrix.

    Eigenvalues are floored at ``eps_pd * max(1, |A|)`` where ``|A|`` is the
    spectral norm; eigenvectors are preserved.  A matrix that already meets
    the floor is returned unchanged, which makes the operation idempotent.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    w, v = np.linalg.eigh(a)
    floor = eps_pd * max(1.0, float(np.max(np.abs(w))) if w.size else 0.0)
    if w.size and w[0] >= floor:
        return a
    w_mod = np.maximum(w, floor)
    return sym((v * w_mod) @ v.T)


def cap_norm(a, cap):
    """Rescale a symmetric matrix so its spectral norm does not exceed ``cap``.

    Uses the Frobenius norm as a cheap upper bound before computing the
    spectral norm, so the common case (cap = 1e50) costs O(n^2).
    """
    a = np.asarray(a, dtype=float)
    fro = float(np.linalg.norm(a))
    if fro <= cap:
        return a
    nrm = spectral_norm(a)
    if nrm <= cap:
        return a
    return a * (cap / nrm)


def damping_factor(a, cap):
    """min(1, cap/|A|) with the convention |A| = 0 -> 1."""
    a = np.asarray(a, dtype=float)
    fro = float(np.linalg.norm(a))
    if fro == 0.0 or fro <= cap:
        return 1.0
    nrm = spectral_norm(a)
    if nrm == 0.0 or nrm <= cap:
        return 1.0
    return cap / nrm


def metric_solve(m, v):
    """Solve M x = v for SPD M and return (x, v^T M^{-1} v).

    The quadratic form is accumulated from the Cholesky forward solve, so it
    is nonnegative by construction.
    """
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "metric matrix is not positive definite"
        ) from exc
    y = np.linalg.solve(chol, v)
    x = np.linalg.solve(chol.T, y)
    return x, float(y @ y)
