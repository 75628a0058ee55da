"""Small deterministic linear-algebra helpers shared by several modules."""

from __future__ import annotations

import numpy as np


def fix_sign(v: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Flip ``v`` so its first component above ``atol`` (relative) is positive."""
    scale = np.max(np.abs(v)) if v.size else 0.0
    for x in v:
        if abs(x) > atol * max(scale, 1.0):
            return v if x > 0 else -v
    return v


def group_eigenvalues(values: np.ndarray, rtol: float = 1e-9) -> list[np.ndarray]:
    """Split sorted eigenvalues into clusters of numerically equal values.

    Returns index arrays into ``values``; clusters preserve input order.
    """
    if values.size == 0:
        return []
    scale = max(np.max(np.abs(values)), 1.0)
    groups = [[0]]
    for i in range(1, values.size):
        if abs(values[i] - values[groups[-1][0]]) <= rtol * scale:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.asarray(g) for g in groups]


def span_basis_in_index_order(
    subspace: np.ndarray, exclude: list[np.ndarray] | None = None, atol: float = 1e-8
) -> list[np.ndarray]:
    """Orthonormal basis of ``span(subspace)`` built from projected unit vectors.

    Standard basis vectors e_0, e_1, ... are projected onto the column space of
    ``subspace`` (orthonormal columns), stripped of components along ``exclude``
    and along previously accepted vectors, and kept when the remainder is not
    negligible. Each kept vector gets the first-nonzero-positive sign.
    """
    n, k = subspace.shape
    chosen: list[np.ndarray] = []
    prior = list(exclude or [])
    for j in range(n):
        if len(chosen) == k:
            break
        v = subspace @ subspace[j, :].conj()
        for w in prior + chosen:
            v = v - w * (w.conj() @ v)
        norm = np.linalg.norm(v)
        if norm > atol:
            chosen.append(fix_sign(v / norm))
    return chosen


def canonical_eigh(m: np.ndarray, descending: bool = True, rtol: float = 1e-9):
    """Eigen-decomposition of a real symmetric matrix with reproducible vectors.

    Degenerate eigenspaces are re-based by Gram-Schmidt over projected standard
    basis vectors, so the output does not depend on LAPACK's arbitrary choice.
    """
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    if descending:
        vals, vecs = vals[::-1], vecs[:, ::-1]
    out_vals = np.empty_like(vals)
    out_vecs = np.empty_like(vecs)
    col = 0
    for g in group_eigenvalues(vals, rtol):
        basis = span_basis_in_index_order(vecs[:, g])
        for v in basis:
            out_vecs[:, col] = v
            out_vals[col] = np.mean(vals[g])
            col += 1
    return out_vals, out_vecs


def skew_error(m: np.ndarray) -> float:
    """Relative Frobenius asymmetry ||M + M^T|| / ||M|| (0 for the zero matrix)."""
    norm = np.linalg.norm(m)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(m + m.T) / norm)


def gram_schmidt(vectors: list[np.ndarray], inner) -> list[np.ndarray]:
    """Orthonormalise complex vectors under a Hermitian ``inner(a, b)``."""
    out: list[np.ndarray] = []
    for v in vectors:
        w = v.astype(complex)
        for u in out:
            w = w - u * inner(u, w)
        nrm = np.sqrt(inner(w, w).real)
        if nrm > 1e-12:
            out.append(w / nrm)
    return out
