"""Doubled-space eigenbasis for semi-infinite lines with a nonreciprocal end.

Every function handled here is a *doublet* ``W(x) = (U(x); V(x))`` on ``x >= 0``
with components of the form

    W_j(x) = p_j cos(k_j x) + q_j sin(k_j x),    k_j = omega / sqrt(delta_i),

where ``i`` is the line carrying component ``j`` (flux and charge halves share
the wave numbers). Storing only ``(p, q)`` makes derivatives, the duality
operator and generalized inner products exact algebra.

The inner product is ``<W1, W2> = int (U1^T U2 + V1^T Delta^-1 V2) dx``. Between
doublets of frequencies ``omega`` and ``omega'`` it splits into a Dirac part
``D delta(omega - omega')`` and a principal-value part ``P(omega, omega')``;
see :func:`pair_kernel`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._linalg import canonical_eigh, skew_error
from .errors import InvariantViolation, NoImmittance, NonReciprocal, NotSkew
from .netlist import RescaledSpec

TOL_BOUNDARY = 1e-10
TOL_ORTHO = 1e-10


@dataclass(frozen=True)
class Doublet:
    """Real or complex doublet with cos/sin coefficients (length 2N each)."""

    omega: float
    delta: np.ndarray
    cos_coef: np.ndarray
    sin_coef: np.ndarray

    @property
    def n_lines(self) -> int:
        return int(self.delta.size)

    def wave_numbers(self) -> np.ndarray:
        k = self.omega / np.sqrt(self.delta)
        return np.concatenate([k, k])

    def __call__(self, x) -> np.ndarray:
        """Values at ``x``; shape (2N,) for scalar x, (len(x), 2N) otherwise."""
        xs = np.asarray(x, dtype=float)
        kx = np.multiply.outer(xs, self.wave_numbers())
        return np.cos(kx) * self.cos_coef + np.sin(kx) * self.sin_coef

    def derivative(self) -> Doublet:
        k = self.wave_numbers()
        return Doublet(self.omega, self.delta, k * self.sin_coef, -k * self.cos_coef)

    def U(self, x) -> np.ndarray:
        return self(x)[..., : self.n_lines]

    def V(self, x) -> np.ndarray:
        return self(x)[..., self.n_lines :]


@dataclass(frozen=True)
class ModeFunction(Doublet):
    """Basis element ``W_{omega, (branch, lam)}``; branch is ``"u"`` or ``"v"``."""

    branch: str = "u"
    lam: int = 0


@dataclass(frozen=True)
class ModeBasis:
    """Orthonormal doubled eigenbasis on a frequency grid.

    ``e_vectors`` holds the eigenvectors of ``M`` as columns, in the order of
    ``m_values`` (descending). For reduced bases ``kind`` is
    ``"reduced_flux"`` or ``"reduced_charge"`` and only one branch exists.
    """

    frequencies: np.ndarray
    m_values: np.ndarray
    e_vectors: np.ndarray
    Y_tilde: np.ndarray
    Delta: np.ndarray
    kind: str = "semi_infinite"
    Y: np.ndarray | None = field(default=None)

    @property
    def n_lines(self) -> int:
        return int(self.Delta.size)

    @property
    def branches(self) -> tuple[str, ...]:
        if self.kind == "reduced_flux":
            return ("u",)
        if self.kind == "reduced_charge":
            return ("v",)
        return ("u", "v")

    def mode(self, omega: float, branch: str, lam: int) -> ModeFunction:
        if branch not in self.branches:
            raise ValueError(f"branch {branch!r} not available for kind {self.kind!r}")
        d = self.Delta
        n = self.n_lines
        zeros = np.zeros(2 * n)
        if self.kind == "semi_infinite":
            e = self.e_vectors[:, lam]
            norm = np.sqrt(2.0 / (np.pi * self.m_values[lam]))
            if branch == "u":
                p = norm * np.concatenate([e / np.sqrt(d), np.sqrt(d) * (self.Y_tilde @ e)])
                return ModeFunction(omega, d, p, zeros, branch, lam)
            q = norm * np.concatenate([self.Y_tilde @ e, e])
            return ModeFunction(omega, d, zeros, q, branch, lam)
        unit = np.zeros(n)
        unit[lam] = 1.0
        if self.kind == "reduced_flux":
            p = np.sqrt(2.0 / np.pi) * np.concatenate([d[lam] ** -0.25 * unit, np.zeros(n)])
            return ModeFunction(omega, d, p, zeros, branch, lam)
        q = np.sqrt(2.0 / np.pi) * np.concatenate([np.zeros(n), d[lam] ** 0.25 * unit])
        return ModeFunction(omega, d, zeros, q, branch, lam)

    def modes(self, omega: float) -> list[ModeFunction]:
        """All basis elements at ``omega`` in (u_1..u_N, v_1..v_N) order."""
        return [self.mode(omega, b, lam) for b in self.branches for lam in range(self.n_lines)]


def build_m_matrix(Delta, Y):
    """Return ``(M, m_values, e_vectors)`` with ``M = Delta^-1/2 + Yt^T Delta^1/2 Yt``.

    ``Yt = Delta^-1/2 Y Delta^-1/2``. Eigenpairs come sorted by ``m``
    descending, with reproducible vectors inside degenerate eigenspaces.
    """
    d = np.asarray(Delta, dtype=float)
    if d.ndim == 2:
        d = np.diag(d)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if skew_error(Y) > 1e-10:
        raise NotSkew("rescaled admittance is not skew-symmetric")
    Yt = Y / np.sqrt(np.outer(d, d))
    M = np.diag(d**-0.5) + Yt.T @ np.diag(d**0.5) @ Yt
    M = 0.5 * (M + M.T)
    m, e = canonical_eigh(M, descending=True)
    if np.any(m <= 0):
        raise InvariantViolation("M is not positive definite")
    return M, m, e


def boundary_residuals(f: Doublet, Y: np.ndarray) -> tuple[float, float]:
    """``(|V(0) - Y U(0)|, |Delta U'(0) - Y V'(0)|)`` for a doublet."""
    n = f.n_lines
    w0 = f(0.0)
    dw0 = f.derivative()(0.0)
    r1 = np.linalg.norm(w0[n:] - Y @ w0[:n])
    r2 = np.linalg.norm(f.delta * dw0[:n] - Y @ dw0[n:])
    return float(r1), float(r2)


def semi_infinite_basis(spec: RescaledSpec, omega_grid) -> ModeBasis:
    """Orthonormal doubled basis for semi-infinite lines on ``omega_grid``.

    Every mode is checked against both boundary conditions at x = 0 on every
    grid frequency; a residual above ``TOL_BOUNDARY`` raises
    :class:`InvariantViolation`.
    """
    if np.isfinite(spec.length):
        raise ValueError("semi_infinite_basis needs semi-infinite lines")
    n = spec.n_lines
    if spec.has_nr:
        if spec.Y is None:
            raise NoImmittance("NR element has no admittance form; reduce it with nrcore first")
        Y = spec.Y
    else:
        Y = np.zeros((n, n))
    _, m, e = build_m_matrix(spec.delta, Y)
    Yt = Y / np.sqrt(np.outer(spec.delta, spec.delta))
    basis = ModeBasis(
        frequencies=np.asarray(omega_grid, dtype=float),
        m_values=m,
        e_vectors=e,
        Y_tilde=Yt,
        Delta=np.asarray(spec.delta, dtype=float),
        kind="semi_infinite",
        Y=Y,
    )
    worst = max_boundary_residual(basis)
    if worst > TOL_BOUNDARY:
        raise InvariantViolation(f"boundary residual {worst:.3e} exceeds {TOL_BOUNDARY:g}")
    return basis


def max_boundary_residual(basis: ModeBasis) -> float:
    Y = basis.Y if basis.Y is not None else np.zeros((basis.n_lines,) * 2)
    worst = 0.0
    for w in basis.frequencies:
        for f in basis.modes(w):
            worst = max(worst, *boundary_residuals(f, Y))
    return worst


def reduced_basis(spec: RescaledSpec, omega_grid, presentation: str = "flux") -> ModeBasis:
    """Half-line flux (cosine) or charge (sine) basis of a reciprocal circuit."""
    if spec.has_nr and spec.Y is not None and np.any(spec.Y):
        raise NonReciprocal("a reduced single-field basis is invalid with a nonreciprocal element")
    if spec.has_nr and spec.Y is None:
        raise NonReciprocal("a reduced single-field basis is invalid with a nonreciprocal element")
    if presentation not in ("flux", "charge"):
        raise ValueError("presentation must be 'flux' or 'charge'")
    n = spec.n_lines
    d = np.asarray(spec.delta, dtype=float)
    return ModeBasis(
        frequencies=np.asarray(omega_grid, dtype=float),
        m_values=d**-0.5,
        e_vectors=np.eye(n),
        Y_tilde=np.zeros((n, n)),
        Delta=d,
        kind=f"reduced_{presentation}",
        Y=np.zeros((n, n)),
    )


def _weights(delta: np.ndarray) -> np.ndarray:
    """Dirac weights ``diag(Delta^1/2, Delta^-1/2)`` of the inner product."""
    return np.concatenate([np.sqrt(delta), 1.0 / np.sqrt(delta)])


def pair_kernel(f: Doublet, g: Doublet) -> tuple[complex, complex]:
    """Generalized inner product ``<f, g>`` of two doublets.

    Returns ``(D, P)`` with ``<f, g> = D delta(omega_f - omega_g) + P`` where
    ``P`` is the principal-value part evaluated at ``omega_f != omega_g``
    (and defined as 0 at equal frequencies). ``f`` is conjugated.
    """
    w = _weights(f.delta)
    pf, qf = np.conj(f.cos_coef), np.conj(f.sin_coef)
    D = 0.5 * np.pi * (pf @ (w * g.cos_coef) + qf @ (w * g.sin_coef))
    a, b = f.omega, g.omega
    if a == b:
        return complex(D), 0j
    # int cos(k_a x) sin(k_b x) dx = PV k_b / (k_b^2 - k_a^2), times sqrt(delta)
    P = (pf @ (w * g.sin_coef)) * b / (b * b - a * a) + (qf @ (w * g.cos_coef)) * a / (a * a - b * b)
    return complex(D), complex(P)


def quadrature_inner(f: Doublet, g: Doublet, x: np.ndarray) -> complex:
    """Trapezoid inner product over a finite sample ``x`` (diagnostics only)."""
    n = f.n_lines
    wv = np.concatenate([np.ones(n), 1.0 / f.delta])
    integrand = np.sum(np.conj(f(x)) * g(x) * wv, axis=1)
    return complex(np.trapezoid(integrand, x))


def algebraic_orthonormality(basis: ModeBasis, omega: float | None = None) -> float:
    """Max deviation of the Dirac coefficients from the identity.

    Generalized orthonormality ``<W_e, W_e'> = delta(omega - omega') delta_ee'``
    is checked through the exact Dirac coefficient of :func:`pair_kernel`,
    which reduces to ``(pi/2) N_e N_e' (e, r)_e^T M (e, r)_e'``.
    """
    w = float(basis.frequencies[0]) if omega is None else float(omega)
    modes = basis.modes(w)
    G = np.array([[pair_kernel(a, b)[0] for b in modes] for a in modes])
    return float(np.max(np.abs(G - np.eye(len(modes)))))


def telegrapher_apply(f: Doublet) -> Doublet:
    """Duality operator ``T W = -i (V'; Delta U')``."""
    n = f.n_lines
    df = f.derivative()
    d = f.delta
    cos = -1j * np.concatenate([df.cos_coef[n:], d * df.cos_coef[:n]])
    sin = -1j * np.concatenate([df.sin_coef[n:], d * df.sin_coef[:n]])
    return Doublet(f.omega, d, cos, sin)


@dataclass(frozen=True)
class TelegrapherMatrix:
    """Representation of the duality operator on one degeneracy space.

    ``representation[e, e'] = <W_e, T W_e'> / omega`` in (u_1..u_N, v_1..v_N)
    order, so that ``T W_e' = omega * sum_e representation[e, e'] W_e``.
    ``t`` is its transpose, the matrix entering the mode Lagrangian as
    ``T W_e = omega * sum_e' t[e, e'] W_e'``. ``sign`` is +1 when
    ``representation = sigma_y (x) 1`` and -1 when it is the negative.
    """

    representation: np.ndarray
    t: np.ndarray
    sign: int
    spread: float


def sigma_y_block(n: int) -> np.ndarray:
    return np.kron(np.array([[0, -1j], [1j, 0]]), np.eye(n))


def telegrapher_matrix(basis: ModeBasis, omegas=None) -> TelegrapherMatrix:
    """Compute ``<W_e, T W_e'> / omega`` on the grid and identify its sign.

    Raises :class:`InvariantViolation` if the representation varies across
    the grid by more than 1e-10 or is not ``+-sigma_y (x) 1``.
    """
    if basis.kind != "semi_infinite":
        raise ValueError("the duality operator mixes branches; a doubled basis is required")
    grid = basis.frequencies if omegas is None else np.asarray(omegas, dtype=float)
    reps = []
    for w in grid:
        modes = basis.modes(w)
        tm = [telegrapher_apply(f) for f in modes]
        reps.append(np.array([[pair_kernel(a, b)[0] / w for b in tm] for a in modes]))
    reps = np.array(reps)
    spread = float(np.max(np.abs(reps - reps[0]))) if len(reps) > 1 else 0.0
    if spread > 1e-10:
        raise InvariantViolation(f"duality representation depends on omega (spread {spread:.2e})")
    R = reps[0]
    sy = sigma_y_block(basis.n_lines)
    if np.max(np.abs(R - sy)) < 1e-10:
        sign = 1
    elif np.max(np.abs(R + sy)) < 1e-10:
        sign = -1
    else:
        raise InvariantViolation("duality representation is not +-sigma_y (x) 1")
    return TelegrapherMatrix(representation=R, t=R.T.copy(), sign=sign, spread=spread)


def mode_table_csv(basis: ModeBasis, x_samples, omegas=None) -> str:
    """CSV with columns omega, branch, lambda, x, U_1..U_N, V_1..V_N.

    Values are continuum-normalized (Dirac delta in omega); multiply by
    ``sqrt(d_omega)`` for a grid of spacing ``d_omega``.
    """
    n = basis.n_lines
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["omega", "branch", "lambda", "x"] + [f"U_{i + 1}" for i in range(n)]
               + [f"V_{i + 1}" for i in range(n)])
    xs = np.asarray(x_samples, dtype=float)
    grid = basis.frequencies if omegas is None else omegas
    for om in grid:
        for f in basis.modes(om):
            vals = f(xs)
            for x, row in zip(xs, vals):
                w.writerow([repr(float(om)), f.branch, f.lam + 1, repr(float(x))]
                           + [f"{v:.17g}" for v in row])
    return buf.getvalue()
