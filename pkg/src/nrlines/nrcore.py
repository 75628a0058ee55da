"""Ideal lossless nonreciprocal elements: S/Y/Z conversions and canonical forms.

Conventions: the constitutive relation at the ports is

    (1 - S) dPhi_0/dt = R (1 + S) dQ_0/dt,

so the admittance is ``Y = R^-1 (1 + S)^-1 (1 - S)`` and the impedance is
``Z = R (1 - S)^-1 (1 + S)``. Both are real skew-symmetric for a real
orthogonal (lossless, nonreciprocal) S.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._linalg import fix_sign, group_eigenvalues, skew_error, span_basis_in_index_order
from .errors import (
    DegenerateMinusOne,
    DegeneratePlusOne,
    NoImmittance,
    NotDegenerate,
    NotSkew,
    NotUnitary,
)

TOL_UNITARY = 1e-10
TOL_SKEW = 1e-10
TOL_EIGEN = 1e-8


def unitarity_error(S: np.ndarray) -> float:
    S = np.asarray(S)
    return float(np.linalg.norm(S.conj().T @ S - np.eye(S.shape[0])))


def check_unitary(S: np.ndarray, tol: float = TOL_UNITARY) -> None:
    err = unitarity_error(S)
    if err > tol * max(1.0, np.sqrt(S.shape[0])):
        raise NotUnitary(f"||S^H S - 1|| = {err:.3e} exceeds tolerance {tol:g}")


def check_skew(M: np.ndarray, tol: float = TOL_SKEW) -> None:
    err = skew_error(np.asarray(M))
    if err > tol:
        raise NotSkew(f"||M + M^T|| / ||M|| = {err:.3e} exceeds tolerance {tol:g}")


def _min_singular(A: np.ndarray) -> float:
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def _real_if_close(M: np.ndarray, what: str) -> np.ndarray:
    scale = max(np.linalg.norm(M), 1.0)
    if np.linalg.norm(np.imag(M)) > TOL_SKEW * scale:
        raise NotSkew(f"{what} is not real; the element is not real-representable")
    return np.real(M).astype(float)


def scattering_to_admittance(S, R: float = 1.0, tol: float = TOL_UNITARY) -> np.ndarray:
    """Return ``Y = R^-1 (1 + S)^-1 (1 - S)`` for a lossless S.

    Raises :class:`DegenerateMinusOne` when ``1 + S`` is numerically singular;
    such elements need :func:`degenerate_reduction`.
    """
    S = np.atleast_2d(np.asarray(S))
    check_unitary(S, tol)
    n = S.shape[0]
    eye = np.eye(n)
    if _min_singular(eye + S) < TOL_EIGEN * max(np.linalg.norm(S, 2), 1.0):
        raise DegenerateMinusOne("S has eigenvalue -1; use degenerate_reduction")
    Y = np.linalg.solve(eye + S, eye - S) / R
    Y = _real_if_close(Y, "admittance")
    check_skew(Y, tol=max(TOL_SKEW, 10 * tol))
    return 0.5 * (Y - Y.T)


def scattering_to_impedance(S, R: float = 1.0, tol: float = TOL_UNITARY) -> np.ndarray:
    """Return ``Z = R (1 - S)^-1 (1 + S)``; raises :class:`DegeneratePlusOne`."""
    S = np.atleast_2d(np.asarray(S))
    check_unitary(S, tol)
    n = S.shape[0]
    eye = np.eye(n)
    if _min_singular(eye - S) < TOL_EIGEN * max(np.linalg.norm(S, 2), 1.0):
        raise DegeneratePlusOne("S has eigenvalue +1; no impedance presentation")
    Z = R * np.linalg.solve(eye - S, eye + S)
    Z = _real_if_close(Z, "impedance")
    check_skew(Z, tol=max(TOL_SKEW, 10 * tol))
    return 0.5 * (Z - Z.T)


def admittance_to_scattering(Y, R: float = 1.0) -> np.ndarray:
    """Inverse Cayley map ``S = (1 - R Y)(1 + R Y)^-1``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    eye = np.eye(Y.shape[0])
    # (1 + RY) is invertible for skew Y: its eigenvalues are 1 + i*real.
    return np.linalg.solve((eye + R * Y).T, (eye - R * Y).T).T


def impedance_to_scattering(Z, R: float = 1.0) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    eye = np.eye(Z.shape[0])
    return (Z / R - eye) @ np.linalg.inv(Z / R + eye)


def degenerate_reduction(S, R: float = 1.0, tol: float = TOL_UNITARY):
    """Project out the eigenvalue -1 subspace of S.

    Returns ``(P1, Y_reduced, basis)`` where ``P1`` is the orthogonal projector
    onto ker(1 + S), ``basis`` holds orthonormal columns spanning range(1 - P1)
    (chosen in index order), and ``Y_reduced`` is the admittance acting on those
    coordinates. The constraint left on the ports is ``P1 dPhi_0/dt = 0``.
    """
    S = np.atleast_2d(np.asarray(S))
    check_unitary(S, tol)
    n = S.shape[0]
    eye = np.eye(n)
    _, sv, vh = np.linalg.svd(eye + S)
    thresh = TOL_EIGEN * max(np.linalg.norm(S, 2), 1.0)
    null = vh[sv < thresh].conj().T
    if null.shape[1] == 0:
        raise NotDegenerate("-1 is not an eigenvalue of S; use scattering_to_admittance")
    P1 = null @ null.conj().T
    if np.allclose(P1.imag, 0, atol=1e-12):
        P1 = P1.real
    P1 = 0.5 * (P1 + P1.conj().T)
    Q1 = eye - P1
    k = null.shape[1]
    if k == n:
        return P1, np.zeros((0, 0)), np.zeros((n, 0))
    # orthonormal basis of range(Q1): eigenvectors of Q1 with eigenvalue 1
    w, v = np.linalg.eigh(Q1)
    comp = v[:, w > 0.5]
    cols = span_basis_in_index_order(comp)
    B = np.column_stack(cols)
    A = B.conj().T @ (eye + S) @ B
    C = B.conj().T @ (eye - S) @ B
    Yr = np.linalg.solve(A, C) / R
    Yr = _real_if_close(Yr, "reduced admittance")
    if np.allclose(B.imag, 0):
        B = B.real
    return P1, 0.5 * (Yr - Yr.T), B


def skew_canonical_form(Y, tol: float = TOL_SKEW):
    """Real orthogonal ``O`` with ``O^T Y O = J`` block diagonal.

    ``J`` carries blocks ``[[0, y_i], [-y_i, 0]]`` with ``y_i > 0`` sorted
    descending, followed by a zero block. Built from the eigenspaces of the
    symmetric matrix ``-Y @ Y``; each block pairs a vector ``a`` with
    ``-Y a / y``.

    Returns ``(O, J, y_values)``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    check_skew(Y, tol)
    Y = 0.5 * (Y - Y.T)
    n = Y.shape[0]
    if n == 0 or not np.any(Y):
        return np.eye(n), np.zeros((n, n)), np.zeros(0)
    A = -(Y @ Y)
    A = 0.5 * (A + A.T)
    vals, vecs = np.linalg.eigh(A)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    scale = max(vals[0], 1e-300)
    cols: list[np.ndarray] = []
    yvals: list[float] = []
    zero_idx: list[int] = []
    for g in group_eigenvalues(vals, rtol=1e-9):
        mu = float(np.mean(vals[g]))
        if mu <= 1e-10 * scale:
            zero_idx.extend(g.tolist())
            continue
        y = np.sqrt(mu)
        space = vecs[:, g]
        placed: list[np.ndarray] = []
        for j in range(n):
            if len(placed) >= len(g):
                break
            v = space @ space[j, :]
            for w in cols + placed:
                v = v - w * (w @ v)
            nv = np.linalg.norm(v)
            if nv <= 1e-8:
                continue
            a = fix_sign(v / nv)
            b = -(Y @ a) / y
            b = b - a * (a @ b)
            b /= np.linalg.norm(b)
            placed.extend([a, b])
            yvals.append(y)
        cols.extend(placed)
    if zero_idx:
        cols.extend(span_basis_in_index_order(vecs[:, zero_idx], exclude=cols))
    O = np.column_stack(cols)
    J = np.zeros((n, n))
    for i, y in enumerate(yvals):
        J[2 * i, 2 * i + 1] = y
        J[2 * i + 1, 2 * i] = -y
    return O, J, np.asarray(yvals)


@dataclass
class NRElement:
    """An ideal lossless nonreciprocal multiport.

    At least one of ``S``, ``Y_bar``, ``Z_bar`` is given; the others are
    derived lazily where they exist. ``R`` is the reference resistance used by
    the scattering presentation.
    """

    S: np.ndarray | None = None
    Y_bar: np.ndarray | None = None
    Z_bar: np.ndarray | None = None
    R: float = 1.0
    projector_P1: np.ndarray | None = field(default=None, init=False)
    reduced_Y: np.ndarray | None = field(default=None, init=False)
    reduced_basis: np.ndarray | None = field(default=None, init=False)

    def __post_init__(self):
        if self.S is None and self.Y_bar is None and self.Z_bar is None:
            raise ValueError("NRElement needs at least one of S, Y_bar, Z_bar")
        if self.R <= 0:
            raise ValueError("reference resistance R must be positive")
        if self.S is not None:
            self.S = np.atleast_2d(np.asarray(self.S))
            check_unitary(self.S)
        if self.Y_bar is not None:
            self.Y_bar = np.atleast_2d(np.asarray(self.Y_bar, dtype=float))
            check_skew(self.Y_bar)
        if self.Z_bar is not None:
            self.Z_bar = np.atleast_2d(np.asarray(self.Z_bar, dtype=float))
            check_skew(self.Z_bar)
        if self.S is not None:
            n = self.S.shape[0]
            eye = np.eye(n)
            if _min_singular(eye + self.S) < TOL_EIGEN * max(np.linalg.norm(self.S, 2), 1.0):
                self.projector_P1, self.reduced_Y, self.reduced_basis = degenerate_reduction(
                    self.S, self.R
                )
            else:
                self.projector_P1 = np.zeros((n, n))

    @property
    def n_ports(self) -> int:
        for m in (self.S, self.Y_bar, self.Z_bar):
            if m is not None:
                return m.shape[0]
        raise AssertionError

    def admittance(self) -> np.ndarray:
        """Physical admittance matrix; raises :class:`NoImmittance` if none exists."""
        if self.Y_bar is not None:
            return self.Y_bar
        if self.S is not None:
            try:
                return scattering_to_admittance(self.S, self.R)
            except DegenerateMinusOne as exc:
                raise NoImmittance(
                    "scattering matrix has eigenvalue -1; only the projected "
                    "reduction is available (NRElement.reduced_Y)"
                ) from exc
        Z = self.Z_bar
        if np.linalg.matrix_rank(Z) < Z.shape[0]:
            raise NoImmittance("impedance matrix is singular; no admittance form")
        Y = np.linalg.inv(Z)
        return 0.5 * (Y - Y.T)

    def impedance(self) -> np.ndarray:
        if self.Z_bar is not None:
            return self.Z_bar
        if self.S is not None:
            return scattering_to_impedance(self.S, self.R)
        Y = self.Y_bar
        if np.linalg.matrix_rank(Y) < Y.shape[0]:
            raise NoImmittance("admittance matrix is singular; no impedance form")
        Z = np.linalg.inv(Y)
        return 0.5 * (Z - Z.T)

    def scattering(self) -> np.ndarray:
        if self.S is not None:
            return self.S
        if self.Y_bar is not None:
            return admittance_to_scattering(self.Y_bar, self.R)
        return impedance_to_scattering(self.Z_bar, self.R)
