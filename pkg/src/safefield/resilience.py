"""Observability Grammians, attack amplification and the resilience margin,
plus two constructive linear-algebra utilities used to reason about
perturbed positive definite dynamics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

EIG_TOL = 1e-9
OBSERVABILITY_TOL = 1e-9
VERTEX_LIMIT = 20
_DENSE_LIMIT = 3000


class AnalysisError(ValueError):
    pass


def grammian(rows, streams=None) -> sp.csr_matrix:
    """Sum of h_p h_p^T over the selected rows of the stacked measurement matrix."""
    H = sp.csr_matrix(rows)
    if streams is not None:
        H = H[np.asarray(streams, dtype=np.int64)]
    return sp.csr_matrix(H.T @ H)


def min_eigenvalue(G) -> float:
    """Smallest eigenvalue of a symmetric PSD matrix (dense or sparse)."""
    if sp.issparse(G):
        G = sp.csr_matrix(G)
        if G.shape[0] == 0:
            raise AnalysisError("empty matrix")
        G.eliminate_zeros()
        diag = G.diagonal()
        if G.nnz == np.count_nonzero(diag):
            return float(diag.min())
        if G.shape[0] <= _DENSE_LIMIT:
            G = G.toarray()
        else:
            return _blockwise_min_eig(G)
    G = np.asarray(G, dtype=np.float64)
    return float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])


def _blockwise_min_eig(G: sp.csr_matrix) -> float:
    """Minimum over the irreducible diagonal blocks of G."""
    n_blocks, label = csgraph.connected_components(G, directed=False)
    order = np.argsort(label, kind="stable")
    bounds = np.concatenate(([0], np.cumsum(np.bincount(label, minlength=n_blocks))))
    best = np.inf
    for b in range(n_blocks):
        idx = order[bounds[b]:bounds[b + 1]]
        block = G[idx][:, idx]
        if idx.size <= _DENSE_LIMIT:
            lam = float(np.linalg.eigvalsh(block.toarray())[0])
        else:
            lam = _shift_invert_min_eig(sp.csc_matrix(block))
        best = min(best, lam)
    return best


def _shift_invert_min_eig(G: sp.csc_matrix) -> float:
    # G is PSD, so G + delta I is positive definite and the eigenvalue
    # nearest -delta is the smallest one
    delta = 1e-3 * max(float(np.abs(G.diagonal()).max()), 1.0)
    lam = spla.eigsh(G, k=1, sigma=-delta, which="LM", ncv=min(G.shape[0], 40),
                     return_eigenvectors=False)[0]
    return float(lam)


@dataclass
class ObservabilityReport:
    observable: bool
    lambda_min: float


def check_global_observability(rows, tol: float = OBSERVABILITY_TOL) -> ObservabilityReport:
    lam = min_eigenvalue(grammian(rows))
    return ObservabilityReport(lam > tol, lam)


@dataclass
class Amplification:
    value: float
    method: str  # "exact_vertex", "exact_nonnegative" or "upper_bound"


def attack_amplification(H_A, vertex_limit: int = VERTEX_LIMIT, chunk: int = 1 << 14) -> Amplification:
    """max over ||v||_inf <= 1 of ||H_A^T v||_2 for the compromised rows ``H_A``.

    The maximum of this convex function over the box sits at a vertex.
    Exact by vertex enumeration when there are at most ``vertex_limit``
    rows; exact in closed form (all-ones vertex) when every entry of
    H_A H_A^T is nonnegative; otherwise the bound |A| (valid for unit rows)
    is returned.
    """
    H_A = sp.csr_matrix(H_A, dtype=np.float64)
    k = H_A.shape[0]
    if k == 0:
        return Amplification(0.0, "exact_vertex")
    if k <= vertex_limit:
        return Amplification(_enumerate_vertices((H_A @ H_A.T).toarray(), chunk), "exact_vertex")
    W_sp = sp.csr_matrix(H_A @ H_A.T)
    if W_sp.nnz == 0 or W_sp.data.min() >= 0:
        ones = np.ones(k)
        return Amplification(float(np.sqrt(max(ones @ (W_sp @ ones), 0.0))), "exact_nonnegative")
    return Amplification(float(k), "upper_bound")


def _enumerate_vertices(W: np.ndarray, chunk: int) -> float:
    k = W.shape[0]
    if k == 1:
        return float(np.sqrt(max(W[0, 0], 0.0)))
    # v and -v give the same value, so fix the first sign to +1
    free = k - 1
    best = 0.0
    bits = np.arange(free)
    for start in range(0, 1 << free, chunk):
        codes = np.arange(start, min(start + chunk, 1 << free))
        V = np.ones((codes.size, k))
        V[:, 1:] = 1.0 - 2.0 * ((codes[:, None] >> bits) & 1)
        q = np.einsum("ij,jk,ik->i", V, W, V)
        best = max(best, float(q.max()))
    return float(np.sqrt(max(best, 0.0)))


@dataclass
class ResilienceReport:
    lambda_min_GN: float
    delta_A: float
    method: str
    kappa: float
    passed: bool
    n_compromised: int


def check_resilience(rows, compromised, vertex_limit: int = VERTEX_LIMIT) -> ResilienceReport:
    """Margin lambda_min(G_N) - Delta_A between the uncompromised Grammian and
    the attack amplification; a positive margin is sufficient for resilience.
    With an upper-bound amplification the verdict is conservative."""
    H = sp.csr_matrix(rows)
    P = H.shape[0]
    A = np.unique(np.asarray(compromised, dtype=np.int64))
    if A.size and (A.min() < 0 or A.max() >= P):
        raise AnalysisError("compromised stream outside 0..P-1")
    if A.size >= P:
        raise AnalysisError("every measurement stream is compromised")
    keep = np.ones(P, dtype=bool)
    keep[A] = False
    lam = min_eigenvalue(grammian(H, np.flatnonzero(keep)))
    amp = attack_amplification(H[A], vertex_limit)
    kappa = lam - amp.value
    return ResilienceReport(lam, amp.value, amp.method, kappa, bool(kappa > 0), int(A.size))


def perturbed_pd_matrix(A1, x, y) -> np.ndarray:
    """Symmetric A2 with A2 @ x == A1 @ x + y and
    lambda_min(A2) >= lambda_min(A1) - ||y|| / ||x||.

    Requires A1 symmetric positive definite, x != 0 and
    ||y|| < lambda_min(A1) ||x||. A reflection V maps x to ||x|| e_1; the
    perturbation is absorbed by a symmetric block matrix that sends
    ||x|| e_1 to V y, with the lower-right block set to
    (||y|| / ||x||) I, the smallest value that keeps the bound.
    """
    A1 = np.atleast_2d(np.asarray(A1, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    k = A1.shape[0]
    if A1.shape != (k, k) or x.shape != (k,) or y.shape != (k,):
        raise ValueError("dimension mismatch")
    if np.max(np.abs(A1 - A1.T)) > EIG_TOL * max(1.0, np.abs(A1).max()):
        raise ValueError("A1 must be symmetric")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    lam1 = float(np.linalg.eigvalsh(A1)[0])
    if nx == 0 or not ny < lam1 * nx:
        raise AnalysisError("need x != 0 and ||y|| < lambda_min(A1) ||x||")
    if k == 1:
        return A1 + y[0] / x[0]
    Q, R = np.linalg.qr(x.reshape(-1, 1), mode="complete")
    if R[0, 0] < 0:
        Q[:, 0] = -Q[:, 0]
    V = Q.T  # V @ x == ||x|| e_1
    y_hat = V @ y
    delta = ny / nx
    A3 = np.empty((k, k))
    A3[0, 0] = y_hat[0] / nx
    A3[0, 1:] = A3[1:, 0] = y_hat[1:] / nx
    A3[1:, 1:] = delta * np.eye(k - 1)
    A2 = A1 + V.T @ A3 @ V
    return 0.5 * (A2 + A2.T)


def schur_psd(A, B, C, tol: float = EIG_TOL) -> bool:
    """PSD verdict for [[A, B^T], [B, C]] through the Schur complement of C.

    C must be positive definite.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if B.shape != (C.shape[0], A.shape[0]):
        raise ValueError("B must have shape (rows of C, rows of A)")
    try:
        L = np.linalg.cholesky(0.5 * (C + C.T))
    except np.linalg.LinAlgError as exc:
        raise AnalysisError("C is not positive definite") from exc
    Z = np.linalg.solve(L, B)  # C^{-1} = L^{-T} L^{-1}
    S = A - Z.T @ Z
    return bool(np.linalg.eigvalsh(0.5 * (S + S.T))[0] >= -tol)

