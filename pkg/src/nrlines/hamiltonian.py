"""Mode-space reduction, quantized Hamiltonian data, Lamb shift and time reversal.

Each degeneracy space of frequency ``omega`` carries the mode Lagrangian

    L = 1/2 Xdot^T Xdot + 1/2 Xdot^T A X,    A = -i omega R,

where ``R`` is the stored duality representation (``+-sigma_y (x) 1``). For
``R = sigma_y (x) 1`` this is ``1/2 [Fdot^2 + Gdot^2 + omega (Gdot F - Fdot G)]``.
The canonical transformation of :func:`elimination_transform` separates a
dynamical pair ``(Ft, Pit)`` with ``H = (Pit^2 + omega^2 Ft^2)/2`` from a
nondynamical pair ``(Gt, Pt)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TooFewModes, UnexpectedT, WrongAlpha
from .finite import SpectrumTable, tail_fit, tail_sum
from .netlist import CircuitSpec
from .spectral import Doublet, ModeBasis, TelegrapherMatrix, pair_kernel, sigma_y_block

TOL_T = 1e-10


# ---------------------------------------------------------------- mode space

def _representation(t) -> np.ndarray:
    if isinstance(t, TelegrapherMatrix):
        return t.representation
    return np.asarray(t)


def representation_sign(R: np.ndarray) -> int:
    """+1 if ``R = sigma_y (x) 1``, -1 if ``R = -sigma_y (x) 1``; else raise."""
    n2 = R.shape[0]
    if n2 % 2 or R.shape != (n2, n2):
        raise UnexpectedT("representation must be a square matrix of even size")
    sy = sigma_y_block(n2 // 2)
    if np.max(np.abs(R - sy)) <= TOL_T:
        return 1
    if np.max(np.abs(R + sy)) <= TOL_T:
        return -1
    raise UnexpectedT("duality representation deviates from +-sigma_y (x) 1")


def elimination_transform(omega: float, sign: int = 1) -> np.ndarray:
    """4x4 map ``(F, G, Pi, P) -> (Ft, Gt, Pit, Pt)`` for one (omega, lambda).

    For ``sign = +1``: ``Ft = F/2 - P/omega``, ``Gt = G/2 - Pi/omega``,
    ``Pit = Pi + omega G/2``, ``Pt = P + omega F/2``; ``sign = -1`` flips the
    orientation of the gyroscopic term.
    """
    s, w = sign, omega
    return np.array([
        [0.5, 0.0, 0.0, -s / w],
        [0.0, 0.5, -s / w, 0.0],
        [0.0, s * w / 2, 1.0, 0.0],
        [s * w / 2, 0.0, 0.0, 1.0],
    ])


def symplectic_form(n: int = 2) -> np.ndarray:
    I, Z = np.eye(n), np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def legendre_hamiltonian(A: np.ndarray) -> np.ndarray:
    """Quadratic form ``K`` of ``H = 1/2 z^T K z``, ``z = (X, Pi)``, for
    ``L = 1/2 Xdot^2 + 1/2 Xdot^T A X`` (momenta ``Pi = Xdot + A X / 2``)."""
    n = A.shape[0]
    M = np.hstack([-0.5 * A, np.eye(n)])
    return M.T @ M


@dataclass
class ModeSpaceModel:
    """Per-frequency reduction data.

    ``T[i]`` is the 4x4 elimination transform at ``frequencies[i]``;
    ``K_original[i]`` and ``K_reduced[i]`` are the quadratic forms in the
    orderings ``(F, G, Pi, P)`` and ``(Ft, Gt, Pit, Pt)``.
    """

    frequencies: np.ndarray
    representation: np.ndarray
    sign: int
    T: np.ndarray
    K_original: np.ndarray
    K_reduced: np.ndarray
    n_lambda: int

    @property
    def dynamical_pairs_per_frequency(self) -> int:
        return self.n_lambda

    def hamiltonian_matrix(self, i: int) -> np.ndarray:
        """Reduced form in ``(Pit, Ft, Pt, Gt)`` ordering."""
        K = self.K_reduced[i]
        perm = [2, 0, 3, 1]
        return K[np.ix_(perm, perm)]

    def symplectic_error(self) -> float:
        J = symplectic_form()
        return float(max(np.max(np.abs(T @ J @ T.T - J)) for T in self.T))

    def nondynamical_rates(self, i: int) -> np.ndarray:
        """Rows of ``J K`` generating the motion of ``(Gt, Pt)``; zero when the
        pair is nondynamical."""
        JK = symplectic_form() @ self.K_reduced[i]
        return JK[[1, 3]]


def mode_space_reduction(t_matrix, frequencies) -> ModeSpaceModel:
    """Eliminate the nondynamical half of each degeneracy space.

    ``t_matrix`` is the stored duality representation (or a
    :class:`TelegrapherMatrix`); its sign fixes the orientation of the
    transform instead of a hard-coded convention.
    """
    R = _representation(t_matrix)
    sign = representation_sign(R)
    n = R.shape[0] // 2
    freqs = np.asarray(frequencies, dtype=float)
    if np.any(freqs <= 0):
        raise ValueError("mode-space reduction needs positive frequencies")
    Ts, K0s, K1s = [], [], []
    for w in freqs:
        A = np.real_if_close(-1j * w * R)
        if np.iscomplexobj(A):
            raise UnexpectedT("gyroscopic matrix is not real")
        K_full = legendre_hamiltonian(A)
        # restrict to lambda = 0: coordinates (F, G) = (X_0, X_n)
        idx = [0, n, 2 * n, 3 * n]
        K0 = K_full[np.ix_(idx, idx)]
        T = elimination_transform(w, sign)
        Ti = np.linalg.inv(T)
        K1 = Ti.T @ K0 @ Ti
        K1[np.abs(K1) < 1e-13 * max(1.0, w * w)] = 0.0
        Ts.append(T)
        K0s.append(K0)
        K1s.append(K1)
    return ModeSpaceModel(
        frequencies=freqs,
        representation=R,
        sign=sign,
        T=np.array(Ts),
        K_original=np.array(K0s),
        K_reduced=np.array(K1s),
        n_lambda=n,
    )


# ---------------------------------------------------------------- junction model

@dataclass
class HamiltonianModel:
    """Quantized linear sector plus junction data (rescaled field units).

    ``couplings[n] = sqrt(hbar omega_n / 2) (u_nu + i u_nv)``. Static modes
    (omega = 0) carry no oscillator; their contribution to the Lamb-shift sum
    is the limit ``hbar u^2 / 2`` and is kept in ``static_chi``.
    """

    omegas: np.ndarray
    lam: np.ndarray
    couplings: np.ndarray
    xi: float
    C_J: float
    E_J: float
    hbar: float
    alpha: float | None
    K: int
    static_u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    metadata: dict = field(default_factory=dict)

    @property
    def charging_scale(self) -> float:
        return 1.0 / (2.0 * self.C_J) if self.C_J else 0.0

    @property
    def static_chi(self) -> float:
        return 0.5 * self.hbar * float(np.sum(self.static_u**2))


def kinetic_matrix(u: np.ndarray, alpha: float, alpha_c: float, alpha_J: float) -> np.ndarray:
    """Kinetic matrix of the junction plus modes, coordinates ``(Phi_J, X)``."""
    a_sigma = alpha_c + alpha_J
    gamma = alpha_c / math.sqrt(a_sigma)
    a_minus = alpha_c - alpha
    n = u.size
    C = np.empty((n + 1, n + 1))
    C[0, 0] = 1.0
    C[0, 1:] = C[1:, 0] = -gamma * u
    C[1:, 1:] = np.eye(n) + a_minus * np.outer(u, u)
    return C


def assemble_hamiltonian(spectrum: SpectrumTable, spec: CircuitSpec, K: int | None = None,
                         alpha_rtol: float = 1e-12) -> HamiltonianModel:
    """Build the quantized model from a spectrum computed at ``alpha_s``.

    With a junction, asserts that the mode-mode block of the inverse kinetic
    matrix is the identity (no bilinear mode couplings).
    """
    K = spectrum.n_modes if K is None else int(K)
    if K > spectrum.n_modes:
        raise TooFewModes(f"spectrum has {spectrum.n_modes} modes, {K} requested")
    table = spectrum.truncate(K)
    hbar = spec.hbar
    j = spec.junction
    if j is None:
        return HamiltonianModel(
            omegas=table.omegas, lam=table.lam, couplings=np.zeros(0, complex), xi=0.0,
            C_J=0.0, E_J=0.0, hbar=hbar, alpha=None, K=K,
            metadata={"junction": False},
        )
    a_s = spec.alpha_s
    a = table.problem.alpha
    if not math.isclose(a, a_s, rel_tol=alpha_rtol, abs_tol=0.0):
        raise WrongAlpha(f"spectrum computed with alpha={a!r}, series value is {a_s!r}")
    u = table.u_vector
    r = np.sqrt(hbar * table.omegas / 2.0) * (u[:, 0] + 1j * u[:, 1])
    c = spec.c_delta[j.line_index]
    alpha_c, alpha_J = j.C_c / c, j.C_J / c
    uu = np.concatenate([table.static_u, u.reshape(-1)])
    Cinv = np.linalg.inv(kinetic_matrix(uu, a, alpha_c, alpha_J))
    mode_block_dev = float(np.max(np.abs(Cinv[1:, 1:] - np.eye(uu.size))))
    if mode_block_dev > 1e-9:
        raise WrongAlpha(f"mode-mode couplings survive (deviation {mode_block_dev:.2e})")
    return HamiltonianModel(
        omegas=table.omegas,
        lam=table.lam,
        couplings=r,
        xi=spec.xi,
        C_J=j.C_J,
        E_J=j.E_J,
        hbar=hbar,
        alpha=a,
        K=K,
        static_u=table.static_u,
        metadata={
            "junction": True,
            "junction_line": j.line_index + 1,
            "mode_block_deviation": mode_block_dev,
            "junction_inverse_kinetic": float(Cinv[0, 0]),
            "junction_inverse_kinetic_limit": (alpha_c + alpha_J) / alpha_J,
            "w_sign": table.problem.w_sign,
            "charge_closure": table.problem.closure,
        },
    )


@dataclass
class LambShift:
    partial: np.ndarray
    extrapolated: float
    tail: float
    limit: float | None
    static: float

    @property
    def relative_error(self) -> float | None:
        if self.limit is None:
            return None
        return abs(self.extrapolated - self.limit) / self.limit


def lamb_shift(model: HamiltonianModel, min_modes: int = 50) -> LambShift:
    """Partial sums of ``sum |r_n|^2 / omega_n`` and a tail-corrected value.

    The tail assumes ``u_n ~ 1/n``: terms are fit as ``C / omega^2`` over the
    last decade and summed in closed form along the linear frequency
    asymptote.
    """
    if model.K < min_modes:
        raise TooFewModes(f"need at least {min_modes} modes, got {model.K}")
    if model.couplings.size == 0:
        raise TooFewModes("model has no junction couplings")
    terms = np.abs(model.couplings) ** 2 / model.omegas
    partial = model.static_chi + np.cumsum(terms)
    C, A, B = tail_fit(model.omegas, terms)
    tail = tail_sum(C, A, B, terms.size)
    limit = model.hbar / (2 * model.alpha) if model.alpha else None
    return LambShift(partial, float(partial[-1] + tail), tail, limit, model.static_chi)


def hamiltonian_json(model: HamiltonianModel, chi: LambShift | None = None) -> str:
    couplings = [
        {"n": int(i + 1), "lambda": int(model.lam[i]) + 1,
         "re": float(r.real), "im": float(r.imag)}
        for i, r in enumerate(model.couplings)
    ]
    doc = {
        "omegas": [float(w) for w in model.omegas],
        "couplings": couplings,
        "xi": model.xi,
        "C_J": model.C_J,
        "E_J": model.E_J,
        "charging_scale": model.charging_scale,
        "hbar": model.hbar,
        "chi": chi.extrapolated if chi else None,
        "chi_partial": float(chi.partial[-1]) if chi else None,
        "chi_limit": chi.limit if chi else None,
        "chi_static": model.static_chi,
        "static_u": [float(x) for x in model.static_u],
        "alpha": model.alpha,
        "K": model.K,
        "metadata": model.metadata,
    }
    return json.dumps(doc, indent=1, sort_keys=True)


# ---------------------------------------------------------------- time reversal

def _flip_charge(f: Doublet) -> Doublet:
    n = f.n_lines
    sz = np.concatenate([np.ones(n), -np.ones(n)])
    return Doublet(f.omega, f.delta, sz * f.cos_coef, sz * f.sin_coef)


@dataclass
class SigmaMatrix:
    """Time-reversal matrix ``<W_we, sigma_z W_w'e'>`` on a grid.

    ``delta_block`` is the coefficient of ``delta(omega - omega')`` (the same
    for every frequency); ``pv[i, j]`` holds the principal-value part between
    grid points ``i != j`` (zero on the diagonal by convention). Index order
    inside a block is (u_1..u_N, v_1..v_N).
    """

    omegas: np.ndarray
    delta_block: np.ndarray
    pv: np.ndarray
    principal_value: bool = True

    @property
    def block_size(self) -> int:
        return self.delta_block.shape[0]

    def discrete(self, spacing: float | None = None) -> np.ndarray:
        """Dense matrix on the grid: Dirac part -> identity in omega,
        principal value part weighted by the grid spacing."""
        h = spacing if spacing is not None else _grid_spacing(self.omegas)
        m = self.omegas.size
        b = self.block_size
        S = h * self.pv.transpose(0, 2, 1, 3).reshape(m * b, m * b)
        return S + np.kron(np.eye(m), self.delta_block)

    def orthogonality_deviation(self, spacing: float | None = None) -> float:
        S = self.discrete(spacing)
        return float(np.max(np.abs(S @ S.T - np.eye(S.shape[0]))))


def _grid_spacing(omegas: np.ndarray) -> float:
    if omegas.size < 2:
        return 1.0
    return float(np.mean(np.diff(omegas)))


def trs_sigma(basis: ModeBasis, omega_grid=None) -> SigmaMatrix:
    """Assemble the time-reversal matrix from exact pair integrals."""
    grid = basis.frequencies if omega_grid is None else np.asarray(omega_grid, dtype=float)
    modes = [basis.modes(w) for w in grid]
    flipped = [[_flip_charge(f) for f in ms] for ms in modes]
    b = len(modes[0])
    delta = np.array([[pair_kernel(a, c)[0] for c in flipped[0]] for a in modes[0]]).real
    m = grid.size
    pv = np.zeros((m, m, b, b))
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            pv[i, j] = np.array([[pair_kernel(a, c)[1] for c in flipped[j]]
                                 for a in modes[i]]).real
    return SigmaMatrix(grid, delta, pv)


def trs_sigma_closed_form(basis: ModeBasis, omega_grid=None) -> SigmaMatrix:
    """Closed-form time-reversal matrix in terms of ``m``, ``e``, ``Yt``.

    Dirac part: ``delta_ll' sigma_z + (2/sqrt(m m')) e^T Yt D^1/2 Yt e' sigma_z``.
    Principal part: ``-(4/(pi sqrt(m m'))) [[0, w'], [w, 0]] e^T Yt e' /
    (w^2 - w'^2)``.
    """
    grid = basis.frequencies if omega_grid is None else np.asarray(omega_grid, dtype=float)
    n = basis.n_lines
    e, m, Yt = basis.e_vectors, basis.m_values, basis.Y_tilde
    sq = np.sqrt(np.outer(m, m))
    B = e.T @ Yt @ np.diag(np.sqrt(basis.Delta)) @ Yt @ e
    C = e.T @ Yt @ e
    sz = np.diag([1.0, -1.0])
    delta = np.kron(sz, np.eye(n) + 2.0 * B / sq)
    M = grid.size
    pv = np.zeros((M, M, 2 * n, 2 * n))
    for i, w in enumerate(grid):
        for j, w2 in enumerate(grid):
            if i == j:
                continue
            k = -4.0 / (np.pi * sq) * C / (w * w - w2 * w2)
            pv[i, j] = np.block([[np.zeros((n, n)), w2 * k], [w * k, np.zeros((n, n))]])
    return SigmaMatrix(grid, delta, pv)


@dataclass
class TRSReport:
    reciprocal: bool
    diagonal_anticommutator: float
    offdiagonal_anticommutator: float
    sigma_z_deviation: float
    orthogonality_deviation: float

    @property
    def max_anticommutator(self) -> float:
        return max(self.diagonal_anticommutator, self.offdiagonal_anticommutator)

    @property
    def trs_broken(self) -> bool:
        return self.max_anticommutator > 1e-12

    def as_dict(self) -> dict:
        return {
            "reciprocal": self.reciprocal,
            "diagonal_anticommutator": self.diagonal_anticommutator,
            "offdiagonal_anticommutator": self.offdiagonal_anticommutator,
            "max_anticommutator": self.max_anticommutator,
            "sigma_z_deviation": self.sigma_z_deviation,
            "orthogonality_deviation": self.orthogonality_deviation,
            "trs_broken": self.trs_broken,
        }


def trs_check(model: ModeSpaceModel, sigma: SigmaMatrix) -> TRSReport:
    """Anticommutator ``Sigma_{ww'} (w' R) + (w R) Sigma_{ww'}`` per block.

    ``R`` is the stored duality representation. A vanishing anticommutator
    means the mode momenta transform consistently and the Hamiltonian is
    time-reversal invariant; a nonzero value certifies the breaking.
    """
    R = model.representation
    grid = sigma.omegas
    diag = max(float(np.max(np.abs(sigma.delta_block @ (w * R) + (w * R) @ sigma.delta_block)))
               for w in grid)
    off = 0.0
    for i, w in enumerate(grid):
        for j, w2 in enumerate(grid):
            if i != j:
                blk = sigma.pv[i, j]
                off = max(off, float(np.max(np.abs(blk @ (w2 * R) + (w * R) @ blk))))
    n = sigma.block_size // 2
    sz = np.kron(np.diag([1.0, -1.0]), np.eye(n))
    dev = max(float(np.max(np.abs(sigma.delta_block - sz))), float(np.max(np.abs(sigma.pv), initial=0.0)))
    return TRSReport(
        reciprocal=dev < 1e-12,
        diagonal_anticommutator=diag,
        offdiagonal_anticommutator=off,
        sigma_z_deviation=dev,
        orthogonality_deviation=sigma.orthogonality_deviation(),
    )
