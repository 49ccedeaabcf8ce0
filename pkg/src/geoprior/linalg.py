"""Dense symmetric linear algebra: covariance estimation and eigensolver.

The eigensolver is a cyclic Jacobi iteration with a round-robin rotation
ordering, which lets every round of disjoint rotations be applied as
vectorized numpy updates. It is deterministic: the same input bytes always
produce the same output bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NoConvergence, NonFinite

# Convergence: off-diagonal Frobenius norm below this fraction of ||S||_F.
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (descending) and orthonormal eigenvectors (columns).

    Eigenvector signs are canonical: the largest-magnitude component of each
    column is positive, ties broken by lowest index.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"{what} contains NaN or Inf")


def covariance(x: np.ndarray, centered: bool = False) -> np.ndarray:
    """Sample covariance (1/n) X X^T of column-sample data X of shape (P, n).

    With centered=True the column mean is removed first; the default keeps
    the raw second-moment form. Result is exactly symmetric.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={x.ndim}")
    p, n = x.shape
    if n == 0 or p == 0:
        raise EmptyInput(f"covariance of an empty matrix (shape {p}x{n})")
    _check_finite(x, "input matrix")
    if centered:
        x = x - x.mean(axis=1, keepdims=True)
    s = x @ x.T / n
    return (s + s.T) / 2.0


def _round_robin_rounds(p: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint index-pair rounds covering every (i, j) pair exactly once."""
    m = p if p % 2 == 0 else p + 1
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        left = np.array([idx[i] for i in range(m // 2)])
        right = np.array([idx[m - 1 - i] for i in range(m // 2)])
        keep = (left < p) & (right < p)
        rounds.append((left[keep], right[keep]))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def _apply_canonical_sign(vectors: np.ndarray) -> np.ndarray:
    # argmax on |column| returns the lowest index on ties.
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigen(s: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.

    Returns eigenvalues in descending order with canonically signed
    orthonormal eigenvectors. Raises NoConvergence if the sweep budget is
    exhausted before the off-diagonal norm falls below tolerance.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {s.shape}")
    _check_finite(s, "matrix")
    p = s.shape[0]
    if not np.allclose(s, s.T, rtol=1e-10, atol=1e-10 * max(1.0, float(np.abs(s).max()))):
        raise DimensionMismatch("matrix is not symmetric")

    a = (s + s.T) / 2.0
    v = np.eye(p)
    if p == 1:
        return EigenDecomposition(a.diagonal().copy(), v)

    norm = float(np.linalg.norm(a))
    tol = OFFDIAG_TOL * norm
    rounds = _round_robin_rounds(p)
    off = _offdiag_norm(a)
    sweeps = 0
    while off > tol and norm > 0.0:
        if sweeps >= MAX_SWEEPS:
            raise NoConvergence(
                f"Jacobi iteration did not converge: dim={p}, "
                f"off-diagonal residual={off:.3e}, tolerance={tol:.3e}"
            )
        for ii, jj in rounds:
            apq = a[ii, jj]
            active = np.abs(apq) > 0.0
            if not np.any(active):
                continue
            ii, jj, apq = ii[active], jj[active], apq[active]
            theta = (a[jj, jj] - a[ii, ii]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            sn = t * c
            # A <- J^T A J for the commuting disjoint rotations of this round.
            ai, aj = a[:, ii].copy(), a[:, jj].copy()
            a[:, ii] = c * ai - sn * aj
            a[:, jj] = sn * ai + c * aj
            ai, aj = a[ii, :].copy(), a[jj, :].copy()
            a[ii, :] = c[:, None] * ai - sn[:, None] * aj
            a[jj, :] = sn[:, None] * ai + c[:, None] * aj
            a[ii, jj] = 0.0
            a[jj, ii] = 0.0
            vi, vj = v[:, ii].copy(), v[:, jj].copy()
            v[:, ii] = c * vi - sn * vj
            v[:, jj] = sn * vi + c * vj
        off = _offdiag_norm(a)
        sweeps += 1

    order = np.argsort(-a.diagonal(), kind="stable")
    eigenvalues = a.diagonal()[order].copy()
    eigenvectors = _apply_canonical_sign(v[:, order])
    return EigenDecomposition(eigenvalues, eigenvectors)


def _offdiag_norm(a: np.ndarray) -> float:
    d = np.diag(a.diagonal())
    return float(np.linalg.norm(a - d))


def clamp_small_eigenvalues(eigenvalues: np.ndarray, reference_trace: float) -> np.ndarray:
    """Zero out eigenvalues within 1e-9 * trace of 0 (rank-deficient covariances)."""
    eps = 1e-9 * abs(reference_trace)
    out = eigenvalues.copy()
    out[np.abs(out) <= eps] = 0.0
    return out
