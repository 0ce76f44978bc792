"""Dense symmetric linear algebra and deterministic randomness.

Everything here is small-matrix, float64 work: the matrices are at most a
few hundred rows (covariances of learned representations, dissimilarity
matrices over domain-class pairs), so a cyclic Jacobi eigensolver is both
sufficient and easy to trust.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericalError, ValidationError

MAX_EIG_DIM = 512
_MAX_SWEEPS = 64


def _as_square_float(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix contains non-finite entries")
    return m


def check_symmetric(m, tol: float = 1e-8) -> np.ndarray:
    """Validate symmetry within ``tol`` and return the symmetrized matrix."""
    m = _as_square_float(m)
    scale = 1.0 + float(np.abs(m).max(initial=0.0))
    if float(np.abs(m - m.T).max(initial=0.0)) > tol * scale:
        raise ValidationError("matrix is not symmetric within tolerance")
    return 0.5 * (m + m.T)


def sym_eig(m, tol: float = 1e-8):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    m : (n, n) array_like
        Symmetric matrix, n <= 512.
    tol : float
        Symmetry validation tolerance (relative to the largest entry).

    Returns
    -------
    eigenvalues : (n,) ndarray
        Sorted in descending order.
    eigenvectors : (n, n) ndarray
        Orthonormal, column k pairs with eigenvalue k.
    """
    a = check_symmetric(m, tol).copy()
    n = a.shape[0]
    if n > MAX_EIG_DIM:
        raise ValidationError(f"matrix dimension {n} exceeds {MAX_EIG_DIM}")
    v = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), v

    off_tol = 1e-13 * (1.0 + float(np.abs(a).max()))
    converged = False
    off_diag = np.ones((n, n), dtype=bool)
    np.fill_diagonal(off_diag, False)
    for _ in range(_MAX_SWEEPS):
        off = float(np.sqrt((a[off_diag] ** 2).sum()))
        if off <= off_tol:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-36 * abs(diff):
                    t = apq / diff  # tiny angle; avoids overflow in theta**2
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (
                        abs(theta) + math.sqrt(theta * theta + 1.0)
                    )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # a <- G a G^T, rows first then columns.
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if not converged:
        raise NumericalError("Jacobi sweeps did not converge")

    evals = np.diag(a).copy()
    order = np.argsort(-evals, kind="stable")
    return evals[order], v[:, order]


def inverse_shrunk(sigma, eps_rel: float = 1e-3) -> np.ndarray:
    """Inverse of a covariance after diagonal shrinkage.

    Returns ``(sigma + eps * I)^-1`` with ``eps = eps_rel * trace / dim
    + 1e-9``, which is symmetric positive definite even for rank-deficient
    input (minority pairs often have fewer samples than dimensions).
    """
    sigma = check_symmetric(sigma, 1e-8)
    if eps_rel < 0:
        raise ValidationError("eps_rel must be nonnegative")
    dim = sigma.shape[0]
    eps = eps_rel * float(np.trace(sigma)) / dim + 1e-9
    shrunk = sigma + eps * np.eye(dim)
    inv = np.linalg.inv(shrunk)
    return 0.5 * (inv + inv.T)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic counter-based generator.

    The Philox bit generator produces the same stream for the same
    ``(seed, stream)`` key on every platform; distinct streams are
    statistically independent, so parallel workers can each own one.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.Philox(key=[seed, int(stream)]))


def next_gaussian(rng: np.random.Generator) -> float:
    """One standard-normal draw from ``rng``."""
    return float(rng.standard_normal())
