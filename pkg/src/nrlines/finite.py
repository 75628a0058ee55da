"""Discrete spectra of finite lines: NR element at x = 0, junction at x = d.

State vectors are ``(U, V, w)`` with ``w = alpha * n.U(d)`` and inner product

    <W1, W2> = int_0^d (U1^T U2 + V1^T Delta^-1 V2) dx + w1 w2 / alpha.

Domain conditions: ``V(0) = Y U(0)`` and ``Delta U'(0) = Y V'(0)`` at the NR
element; ``(Delta U'(d))_perp = 0 = V(d)_perp`` on lines without the junction.
On the junction line the boundary component of the operator is
``w_sign * n.Delta U'(d)`` and the charge closure is either the Robin form
``n.V(d) + alpha n.V'(d) = 0`` (default) or ``n.V(d) = 0``.

Root finding works on the duality sector. An eigenfunction with duality
eigenvalue ``+omega`` has the form ``(U, i Vt)`` with ``Vt' = omega U`` and
``Delta U' = -omega Vt``, which reduces the 4N conditions to an N x N complex
matrix ``D(omega)`` whose determinant is real with simple sign-changing zeros.
The full 4N x 4N real system is kept for multiplicities and residuals.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import polygamma

from .errors import (
    InvariantViolation,
    NoImmittance,
    ScanTooCoarse,
    UnsupportedConfig,
)
from .netlist import RescaledSpec
from .spectral import Doublet, telegrapher_apply

NULL_RTOL = 1e-8
TOL_SELFADJOINT = 1e-9


@dataclass(frozen=True)
class SecularProblem:
    """Boundary-value problem on ``[0, d]``.

    ``alpha`` of 0 means no junction. ``w_sign`` is the sign of the boundary
    component of the operator (+1 is the self-adjoint choice, see
    :func:`resolve_closure`); ``closure`` is ``"robin"`` or ``"dirichlet"``.
    """

    Delta: np.ndarray
    Y: np.ndarray
    d: float
    alpha: float = 0.0
    n_index: int = 0
    w_sign: int = 1
    closure: str = "robin"

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("length d must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.closure not in ("robin", "dirichlet"):
            raise ValueError("closure must be 'robin' or 'dirichlet'")
        if self.w_sign not in (1, -1):
            raise ValueError("w_sign must be +1 or -1")

    @property
    def n_lines(self) -> int:
        return int(self.Delta.size)

    @property
    def has_junction(self) -> bool:
        return self.alpha > 0

    @property
    def n_vector(self) -> np.ndarray:
        e = np.zeros(self.n_lines)
        e[self.n_index] = 1.0
        return e

    @property
    def H(self) -> np.ndarray:
        return -1j * self.Y

    def closure_conditions(self, omega: float) -> np.ndarray:
        return condition_matrix(self, omega)


def problem_from_spec(spec: RescaledSpec, alpha: float | None = None, **kw) -> SecularProblem:
    """Build the finite-line problem; ``alpha`` defaults to the series value."""
    if not math.isfinite(spec.length):
        raise UnsupportedConfig("finite-line problem needs finite lines")
    n = spec.n_lines
    if spec.has_nr:
        if spec.Y is None:
            raise NoImmittance("degenerate NR element at a finite-line boundary is not supported")
        Y = spec.Y
    else:
        Y = np.zeros((n, n))
    if alpha is None:
        alpha = spec.alpha or 0.0
    n_index = spec.spec.junction.line_index if spec.spec.junction is not None else 0
    return SecularProblem(
        Delta=np.asarray(spec.delta, dtype=float), Y=np.asarray(Y, dtype=float),
        d=spec.length, alpha=float(alpha), n_index=n_index, **kw,
    )


# ---------------------------------------------------------------- conditions

def condition_matrix(problem: SecularProblem, omega: float) -> np.ndarray:
    """Real 4N x 4N homogeneous system for ``(a, b, c, g)``.

    ``U = a cos(kx) + b sin(kx)``, ``V = c cos(kx) + g sin(kx)``, with
    ``k_i = omega / sqrt(delta_i)``. Rows are scaled to unit norm.
    """
    N = problem.n_lines
    r = np.sqrt(problem.Delta)
    Y = problem.Y
    kd = omega * problem.d / r
    cs, sn = np.cos(kd), np.sin(kd)
    I = np.eye(N)
    Z = np.zeros((N, N))
    top = np.block([[-Y, Z, I, Z], [Z, np.diag(r), Z, -Y / r[None, :]]])
    rows_u = np.hstack([np.diag(-r * sn), np.diag(r * cs), Z, Z])
    rows_v = np.hstack([Z, Z, np.diag(cs), np.diag(sn)])
    if problem.has_junction:
        j = problem.n_index
        a = problem.alpha
        rows_u[j] = 0.0
        rows_u[j, j] = problem.w_sign * (-r[j] * sn[j]) - omega * a * cs[j]
        rows_u[j, N + j] = problem.w_sign * (r[j] * cs[j]) - omega * a * sn[j]
        if problem.closure == "robin":
            k = omega / r[j]
            rows_v[j, 2 * N + j] = cs[j] - a * k * sn[j]
            rows_v[j, 3 * N + j] = sn[j] + a * k * cs[j]
    A = np.vstack([top, rows_u, rows_v])
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def _require_sector(problem: SecularProblem) -> None:
    if problem.has_junction and (problem.closure != "robin" or problem.w_sign != 1):
        raise UnsupportedConfig(
            "the duality-sector reduction needs the self-adjoint closure "
            "(w_sign=+1, Robin charge condition)"
        )


def sector_matrix(problem: SecularProblem, omegas) -> np.ndarray:
    """``D(omega)`` for an array of frequencies, shape (len, N, N), rows scaled
    by omega-continuous positive factors."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    N = problem.n_lines
    r = np.sqrt(problem.Delta)
    H = problem.H
    kd = w[:, None] * problem.d / r[None, :]
    c, s = np.cos(kd), np.sin(kd)
    D = (r * s)[:, :, None] * np.eye(N)[None] + c[:, :, None] * H[None]
    scale = np.tile(r + np.abs(H).sum(axis=1), (w.size, 1))
    if problem.has_junction:
        j, a = problem.n_index, problem.alpha
        row = c[:, j, None] * np.eye(N)[j][None, :] - (s[:, j] / r[j])[:, None] * H[j][None, :]
        D[:, j, :] += (w * a)[:, None] * row
        scale[:, j] += w * a * (1.0 + np.abs(H[j]).sum() / r[j])
    return D / scale[:, :, None]


def secular_determinant(problem: SecularProblem, omega) -> float | np.ndarray:
    """Real secular function of the duality sector; zero at eigenfrequencies.

    Vectorized over ``omega``. Its zeros coincide with those of the full
    4N x 4N condition determinant, but unlike the latter (a perfect square
    for real coefficients) it changes sign at every simple root.
    """
    _require_sector(problem)
    D = sector_matrix(problem, omega)
    det = np.linalg.det(D)
    if np.max(np.abs(det.imag)) > 1e-8:
        raise InvariantViolation("sector determinant is not real")
    out = det.real
    return float(out[0]) if np.ndim(omega) == 0 else out


def full_log_determinant(problem: SecularProblem, omega: float) -> tuple[float, float]:
    """``(sign, log|det|)`` of the row-scaled 4N x 4N condition matrix."""
    return tuple(float(v) for v in np.linalg.slogdet(condition_matrix(problem, omega)))


def _nullity(A: np.ndarray, rtol: float = NULL_RTOL) -> tuple[int, np.ndarray]:
    _, sv, vh = np.linalg.svd(A)
    k = int(np.sum(sv < rtol * max(sv[0], 1.0)))
    return k, vh[A.shape[1] - k :].conj().T


# ---------------------------------------------------------------- root scan

def default_resolution(problem: SecularProblem) -> float:
    return float(np.min(np.pi * np.sqrt(problem.Delta) / problem.d)) / 20.0


def weyl_count(problem: SecularProblem, omega_max: float) -> float:
    """Asymptotic count of eigenvalues in (0, omega_max], with multiplicity."""
    return 2.0 * omega_max * problem.d * float(np.sum(1.0 / (np.pi * np.sqrt(problem.Delta))))


def _sigma_min(problem, w):
    return float(np.linalg.svd(sector_matrix(problem, w)[0], compute_uv=False)[-1])


def find_roots(problem: SecularProblem, omega_max: float, resolution: float | None = None):
    """Distinct eigenfrequencies in (0, omega_max] with their sector nullities."""
    _require_sector(problem)
    h = resolution or default_resolution(problem)
    grid = np.arange(0.5 * h, omega_max + 1.5 * h, h)
    f = secular_determinant(problem, grid)
    sm = np.linalg.svd(sector_matrix(problem, grid), compute_uv=False)[:, -1]
    roots: list[float] = []

    def func(w):
        return secular_determinant(problem, w)

    for i in range(grid.size - 1):
        a, b = grid[i], grid[i + 1]
        if f[i] == 0.0:
            roots.append(a)
        elif f[i] * f[i + 1] < 0:
            roots.append(brentq(func, a, b, xtol=1e-15 * b, rtol=1e-15, maxiter=200))
    # roots without a sign change: even-order zeros or unresolved pairs
    for i in range(1, grid.size - 1):
        if not (sm[i] <= sm[i - 1] and sm[i] <= sm[i + 1]):
            continue
        if f[i - 1] * f[i] < 0 or f[i] * f[i + 1] < 0:
            continue
        res = minimize_scalar(
            lambda w: _sigma_min(problem, w),
            bracket=(grid[i - 1], grid[i], grid[i + 1]),
            method="golden",
            tol=1e-15,
        )
        w0 = float(res.x)
        if _sigma_min(problem, w0) > 1e-9:
            continue
        k, _ = _nullity(sector_matrix(problem, w0)[0])
        if k % 2 == 1:
            raise ScanTooCoarse(
                f"two roots near omega={w0:.6g} share one scan cell; reduce the resolution"
            )
        roots.append(w0)
    roots = np.array(sorted(r for r in roots if 0.0 < r <= omega_max))
    mult = []
    for w0 in roots:
        k, _ = _nullity(sector_matrix(problem, w0)[0])
        if k == 0:
            raise InvariantViolation(f"no null vector at bracketed root {w0:.15g}")
        mult.append(k)
    if roots.size > 1 and np.min(np.diff(roots)) < 1e-12 * roots[-1]:
        raise ScanTooCoarse("duplicate root detected")
    return roots, np.asarray(mult, dtype=int)


# ---------------------------------------------------------------- eigenfunctions

def _segment_integrals(k: np.ndarray, d: float):
    """int_0^d cos^2, sin^2, cos*sin of (k x), per component."""
    kd = k * d
    with np.errstate(divide="ignore", invalid="ignore"):
        cc = np.where(k > 0, d / 2 + np.sin(2 * kd) / (4 * k), d)
        ss = np.where(k > 0, d / 2 - np.sin(2 * kd) / (4 * k), 0.0)
        csn = np.where(k > 0, np.sin(kd) ** 2 / (2 * k), 0.0)
    return cc, ss, csn


def inner_same_frequency(problem: SecularProblem, f: Doublet, g: Doublet,
                         include_w: bool = True) -> complex:
    """Exact inner product of two doublets sharing one frequency."""
    k = f.wave_numbers()
    cc, ss, csn = _segment_integrals(k, problem.d)
    wt = np.concatenate([np.ones(problem.n_lines), 1.0 / problem.Delta])
    p1, q1 = np.conj(f.cos_coef), np.conj(f.sin_coef)
    p2, q2 = g.cos_coef, g.sin_coef
    val = np.sum(wt * (p1 * p2 * cc + q1 * q2 * ss + (p1 * q2 + q1 * p2) * csn))
    if include_w and problem.has_junction:
        j = problem.n_index
        val += problem.alpha * np.conj(f.U(problem.d)[j]) * g.U(problem.d)[j]
    return complex(val)


def _psi_from_sector(problem: SecularProblem, omega: float, U0: np.ndarray) -> Doublet:
    r = np.sqrt(problem.Delta)
    HU = problem.H @ U0
    cos = np.concatenate([U0, 1j * HU])
    sin = np.concatenate([-HU / r, 1j * r * U0])
    return Doublet(omega, problem.Delta, cos.astype(complex), sin.astype(complex))


def _fix_phase(v: np.ndarray) -> np.ndarray:
    mags = np.abs(v)
    idx = int(np.argmax(mags >= (1 - 1e-9) * mags.max()))
    return v * (np.conj(v[idx]) / mags[idx])


def _sector_modes(problem: SecularProblem, omega: float, k: int) -> list[np.ndarray]:
    """Orthonormal (in the full inner product) sector vectors at a root."""
    _, null = _nullity(sector_matrix(problem, omega)[0])
    null = null[:, -k:] if null.shape[1] >= k else null
    q, _ = np.linalg.qr(null)
    N = problem.n_lines
    picked: list[np.ndarray] = []
    for j in range(N):
        if len(picked) == q.shape[1]:
            break
        v = q @ np.conj(q[j, :])
        for w in picked:
            v = v - w * (np.conj(w) @ v)
        if np.linalg.norm(v) > 1e-6:
            picked.append(v / np.linalg.norm(v))
    out: list[np.ndarray] = []
    psis: list[Doublet] = []
    for v in picked:
        psi = _psi_from_sector(problem, omega, v)
        for prev, pv in zip(psis, out):
            c = inner_same_frequency(problem, prev, psi)
            v = v - c * pv
            psi = _psi_from_sector(problem, omega, v)
        nrm = math.sqrt(inner_same_frequency(problem, psi, psi).real)
        v = _fix_phase(v / nrm)
        out.append(v)
        psis.append(_psi_from_sector(problem, omega, v))
    return out


def static_modes(problem: SecularProblem) -> list[Doublet]:
    """Normalized zero-frequency eigenfunctions (U const on ker Y, V = 0)."""
    N = problem.n_lines
    Y = problem.Y
    d = problem.d
    # unknowns U = a + b x, V = p + q x
    I, Z = np.eye(N), np.zeros((N, N))
    rows = [
        np.hstack([-Y, Z, I, Z]),
        np.hstack([Z, np.diag(problem.Delta), Z, -Y]),
        np.hstack([Z, I, Z, Z]),
    ]
    vd = np.hstack([Z, Z, I, d * I])
    if problem.has_junction:
        j = problem.n_index
        vd[j, 3 * N + j] = d + (problem.alpha if problem.closure == "robin" else 0.0)
    rows.append(vd)
    A = np.vstack(rows)
    k, null = _nullity(A, rtol=1e-10)
    if k == 0:
        return []
    null = np.real_if_close(null)
    out = []
    for col in _orthonormal_static(problem, np.real(null)):
        a, b, p, q = np.split(col, 4)
        if np.linalg.norm(b) > 1e-10 or np.linalg.norm(q) > 1e-10:
            raise InvariantViolation("static mode with linear profile")
        z = np.zeros(2 * N)
        out.append(Doublet(0.0, problem.Delta, np.concatenate([a, p]), z))
    return out


def _orthonormal_static(problem: SecularProblem, null: np.ndarray) -> list[np.ndarray]:
    N = problem.n_lines
    d = problem.d
    wt = np.concatenate([np.ones(N), 1.0 / problem.Delta])

    def ip(x, y):
        ax, px = x[:N], x[2 * N : 3 * N]
        ay, py = y[:N], y[2 * N : 3 * N]
        val = d * np.sum(wt * np.concatenate([ax * ay, px * py]))
        if problem.has_junction:
            j = problem.n_index
            val += problem.alpha * ax[j] * ay[j]
        return val

    cols: list[np.ndarray] = []
    for j in range(null.shape[0]):
        if len(cols) == null.shape[1]:
            break
        v = null @ null[j, :]
        for w in cols:
            v = v - w * ip(w, v)
        nv = ip(v, v)
        if nv > 1e-12:
            v = v / math.sqrt(nv)
            s = v[np.argmax(np.abs(v) > 1e-9)]
            cols.append(v if s > 0 else -v)
    return cols


# ---------------------------------------------------------------- table

@dataclass
class SpectrumTable:
    """Normalized discrete spectrum.

    One row per duality-sector eigenvector: ``omegas[n]``, the index ``lam``
    within its degenerate root, and real coefficient sets for the ``u`` and
    ``v`` branches (``coefficients[n, branch]`` = ``(a, b, c, g)``
    concatenated). ``roots``/``multiplicities`` list distinct frequencies with
    the full (u/v-doubled) multiplicity. Zero-frequency modes are kept in
    ``static``.
    """

    problem: SecularProblem
    omegas: np.ndarray
    lam: np.ndarray
    coefficients: np.ndarray
    u_vector: np.ndarray
    roots: np.ndarray
    multiplicities: np.ndarray
    static: list = field(default_factory=list)
    static_u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    omega_max: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return int(self.omegas.size)

    def mode(self, n: int, branch: str) -> Doublet:
        N = self.problem.n_lines
        c = self.coefficients[n, 0 if branch == "u" else 1]
        a, b, cc, g = np.split(c, 4)
        return Doublet(float(self.omegas[n]), self.problem.Delta,
                       np.concatenate([a, cc]), np.concatenate([b, g]))

    def all_modes(self, include_static: bool = True) -> list[tuple[float, str, Doublet]]:
        out = [(0.0, "s", m) for m in self.static] if include_static else []
        for n in range(self.n_modes):
            for br in ("u", "v"):
                out.append((float(self.omegas[n]), br, self.mode(n, br)))
        return out

    def truncate(self, K: int) -> SpectrumTable:
        return replace(self, omegas=self.omegas[:K], lam=self.lam[:K],
                       coefficients=self.coefficients[:K], u_vector=self.u_vector[:K])


def eigenfrequencies(problem: SecularProblem, omega_max: float,
                     scan_resolution: float | None = None) -> SpectrumTable:
    """All eigenpairs with 0 < omega <= omega_max, normalized, plus static modes."""
    if omega_max <= 0:
        raise ValueError("omega_max must be positive")
    _require_sector(problem)
    roots, sect_mult = find_roots(problem, omega_max, scan_resolution)
    N = problem.n_lines
    omegas, lams, coefs, us, full_mult = [], [], [], [], []
    for w0, k in zip(roots, sect_mult):
        kf, _ = _nullity(condition_matrix(problem, w0))
        if kf != 2 * k:
            raise InvariantViolation(
                f"full nullity {kf} at omega={w0:.12g} is not twice the sector nullity {k}"
            )
        full_mult.append(kf)
        for lam, v in enumerate(_sector_modes(problem, w0, k)):
            psi = _psi_from_sector(problem, w0, v)
            cu = math.sqrt(2) * np.concatenate([psi.cos_coef[:N], psi.sin_coef[:N],
                                                psi.cos_coef[N:], psi.sin_coef[N:]])
            omegas.append(w0)
            lams.append(lam)
            coefs.append(np.stack([cu.real, cu.imag]))
            ud = math.sqrt(2) * psi.U(problem.d)[problem.n_index]
            us.append([ud.real, ud.imag])
    stat = static_modes(problem)
    su = np.array([m.U(problem.d)[problem.n_index] for m in stat]).real
    count = sum(full_mult)
    expect = weyl_count(problem, omega_max)
    if abs(count - expect) > 2 * N + 1:
        raise ScanTooCoarse(
            f"found {count} eigenvalues below {omega_max:g}, asymptotic count {expect:.1f}"
        )
    table = SpectrumTable(
        problem=problem,
        omegas=np.asarray(omegas),
        lam=np.asarray(lams, dtype=int),
        coefficients=np.asarray(coefs).reshape(len(omegas), 2, 4 * N),
        u_vector=np.asarray(us).reshape(len(omegas), 2),
        roots=roots,
        multiplicities=np.asarray(full_mult, dtype=int),
        static=stat,
        static_u=su,
        omega_max=float(omega_max),
        metadata={
            "alpha": problem.alpha,
            "junction_line": problem.n_index + 1 if problem.has_junction else None,
            "w_sign": problem.w_sign,
            "charge_closure": problem.closure,
            "count_with_multiplicity": int(count),
            "asymptotic_count": expect,
            "scan_resolution": scan_resolution or default_resolution(problem),
        },
    )
    return table


def lowest_modes(problem: SecularProblem, K: int, scan_resolution: float | None = None) -> SpectrumTable:
    """Table holding at least the first ``K`` nonzero-frequency sector modes."""
    density = problem.d * float(np.sum(1.0 / (np.pi * np.sqrt(problem.Delta))))
    omega_max = (K + 2 * problem.n_lines + 2) / density
    while True:
        table = eigenfrequencies(problem, omega_max, scan_resolution)
        if table.n_modes >= K:
            return table.truncate(K)
        omega_max *= 1.25


def coupling_vector(table: SpectrumTable) -> np.ndarray:
    """``u[n, e] = n.U_{n e}(d)`` for e in (u, v); shape (n_modes, 2)."""
    return table.u_vector.copy()


def mode_residuals(problem: SecularProblem, f: Doublet) -> float:
    """Max violation of the boundary conditions and the eigen-relation.

    Each condition is measured in wave-number units: terms carrying one
    derivative are divided by ``max(1, omega)`` and the eigen-relation
    ``Delta U'(d) = omega^2 alpha U(d)`` by ``max(1, omega)^2``, so the bound
    does not grow with mode index.
    """
    N = problem.n_lines
    d = problem.d
    s = max(1.0, abs(f.omega))
    df = f.derivative()
    w0, dw0 = f(0.0), df(0.0)
    wd, dwd = f(d), df(d)
    Y = problem.Y
    res = [
        np.abs(w0[N:] - Y @ w0[:N]),
        np.abs(problem.Delta * dw0[:N] - Y @ dw0[N:]) / s,
    ]
    mask = np.ones(N, bool)
    if problem.has_junction:
        j = problem.n_index
        mask[j] = False
        rel = problem.w_sign * problem.Delta[j] * dwd[j] - f.omega**2 * problem.alpha * wd[j]
        if problem.closure == "robin":
            clo = (wd[N + j] + problem.alpha * dwd[N + j]) / s
        else:
            clo = wd[N + j]
        res.append(np.abs([rel / s**2, clo]))
    res.append(np.abs(problem.Delta[mask] * dwd[:N][mask]) / s)
    res.append(np.abs(wd[N:][mask]))
    return float(max(np.max(r) if np.size(r) else 0.0 for r in res))


def duality_residual(table: SpectrumTable, count: int | None = None, samples: int = 33) -> dict:
    """Check ``T W_u = i omega W_v`` and ``T W_v = -i omega W_u`` pointwise.

    Also checks ``T^2 W = omega^2 W``. Residuals are divided by ``omega``
    (``omega^2`` for the square).
    """
    x = np.linspace(0.0, table.problem.d, samples)
    count = table.n_modes if count is None else min(count, table.n_modes)
    first = second = 0.0
    for n in range(count):
        om = float(table.omegas[n])
        wu, wv = table.mode(n, "u"), table.mode(n, "v")
        tu, tv = telegrapher_apply(wu), telegrapher_apply(wv)
        first = max(first, float(np.max(np.abs(tu(x) - 1j * om * wv(x)))) / om,
                    float(np.max(np.abs(tv(x) + 1j * om * wu(x)))) / om)
        ttu = telegrapher_apply(tu)(x)
        second = max(second, float(np.max(np.abs(ttu - om**2 * wu(x)))) / om**2)
    return {"first_order": first, "square": second, "sign": 1}


def gram_matrix(table: SpectrumTable, count: int = 20, include_w: bool = True,
                nodes: int | None = None) -> np.ndarray:
    """Gauss-Legendre Gram matrix of the first ``count`` eigenfunctions."""
    problem = table.problem
    modes = [m for _, _, m in table.all_modes()][:count]
    kmax = max((np.max(m.wave_numbers()) for m in modes), default=1.0)
    n = nodes or int(max(200, 2 * kmax * problem.d + 200))
    x, wq = np.polynomial.legendre.leggauss(n)
    x = 0.5 * problem.d * (x + 1)
    wq = 0.5 * problem.d * wq
    N = problem.n_lines
    wt = np.concatenate([np.ones(N), 1.0 / problem.Delta])
    vals = np.array([m(x) for m in modes])  # (count, nx, 2N)
    G = np.einsum("aij,bij,i,j->ab", vals, vals, wq, wt)
    if include_w and problem.has_junction:
        ud = np.array([m.U(problem.d)[problem.n_index] for m in modes])
        G = G + problem.alpha * np.outer(ud, ud)
    return G


# ---------------------------------------------------------------- self-adjointness

def _legendre_trial(problem: SecularProblem, rng: np.random.Generator, degree: int) -> np.ndarray:
    """Random polynomial coefficients satisfying every domain condition.

    Returns coefficients of shape (2N, degree+1) for the Legendre basis on
    [0, d], obtained by projecting a random vector onto the constraint null
    space.
    """
    N = problem.n_lines
    nb = degree + 1
    L = np.polynomial.legendre
    d = problem.d
    # values and derivatives of each basis polynomial at x = 0 and x = d
    def basis_vals(t, der):
        out = np.empty(nb)
        for j in range(nb):
            c = np.zeros(nb)
            c[j] = 1.0
            if der:
                c = L.legder(c) * (2.0 / d)
            out[j] = L.legval(t, c)
        return out

    P0, D0 = basis_vals(-1.0, False), basis_vals(-1.0, True)
    Pd, Dd = basis_vals(1.0, False), basis_vals(1.0, True)
    nvar = 2 * N * nb

    def sel(field_idx, line, vec):
        row = np.zeros(nvar)
        off = (field_idx * N + line) * nb
        row[off : off + nb] = vec
        return row

    rows = []
    Y = problem.Y
    for i in range(N):
        r = sel(1, i, P0)
        for j in range(N):
            r = r - Y[i, j] * sel(0, j, P0)
        rows.append(r)
        r = problem.Delta[i] * sel(0, i, D0)
        for j in range(N):
            r = r - Y[i, j] * sel(1, j, D0)
        rows.append(r)
        if problem.has_junction and i == problem.n_index:
            if problem.closure == "robin":
                rows.append(sel(1, i, Pd) + problem.alpha * sel(1, i, Dd))
            else:
                rows.append(sel(1, i, Pd))
        else:
            rows.append(sel(0, i, Dd))
            rows.append(sel(1, i, Pd))
    A = np.array(rows)
    _, sv, vh = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-12 * sv[0]))
    null = vh[rank:].T
    coef = null @ rng.standard_normal(null.shape[1])
    return coef.reshape(2 * N, nb)


def _apply_and_integrate(problem, c1, c2, w_sign, include_w, nodes):
    """<L W1, W2> for Legendre-coefficient trial functions."""
    L = np.polynomial.legendre
    N = problem.n_lines
    d = problem.d
    t, wq = L.leggauss(nodes)
    wq = 0.5 * d * wq
    delta2 = np.concatenate([problem.Delta, problem.Delta])
    wt = np.concatenate([np.ones(N), 1.0 / problem.Delta])
    f1 = np.array([L.legval(t, c) for c in c1])
    lf1 = -delta2[:, None] * np.array([L.legval(t, L.legder(c, 2) * (2.0 / d) ** 2) for c in c1])
    f2 = np.array([L.legval(t, c) for c in c2])
    val = np.sum(wt[:, None] * lf1 * f2 * wq[None, :])
    if include_w and problem.has_junction:
        j = problem.n_index
        du1 = L.legval(1.0, L.legder(c1[j]) * (2.0 / d))
        u2 = L.legval(1.0, c2[j])
        # w-component of L W1 is w_sign * Delta U1'(d); w2 = alpha U2(d); weight 1/alpha
        val += w_sign * problem.Delta[j] * du1 * u2
    return val


def _norm(problem, c, nodes):
    L = np.polynomial.legendre
    N = problem.n_lines
    t, wq = L.leggauss(nodes)
    wq = 0.5 * problem.d * wq
    wt = np.concatenate([np.ones(N), 1.0 / problem.Delta])
    f = np.array([L.legval(t, cc) for cc in c])
    val = np.sum(wt[:, None] * f * f * wq[None, :])
    if problem.has_junction:
        val += problem.alpha * L.legval(1.0, c[problem.n_index]) ** 2
    return math.sqrt(val)


def selfadjointness_residual(problem: SecularProblem, trial_pairs: int = 100, seed: int = 0,
                             degree: int = 9, include_w: bool = True) -> float:
    """Max ``|<L W1, W2> - <W1, L W2>|`` over random unit-norm domain functions.

    ``include_w=False`` drops the boundary component from the inner product
    (a deliberately wrong closure used as a negative control).
    """
    rng = np.random.default_rng(seed)
    nodes = degree + 4
    worst = 0.0
    for _ in range(trial_pairs):
        c1 = _legendre_trial(problem, rng, degree)
        c2 = _legendre_trial(problem, rng, degree)
        c1 /= _norm(problem, c1, nodes)
        c2 /= _norm(problem, c2, nodes)
        a = _apply_and_integrate(problem, c1, c2, problem.w_sign, include_w, nodes)
        b = _apply_and_integrate(problem, c2, c1, problem.w_sign, include_w, nodes)
        worst = max(worst, abs(a - b))
    return float(worst)


def resolve_closure(problem: SecularProblem, trial_pairs: int = 100, seed: int = 0):
    """Pick the boundary-action sign that makes the operator self-adjoint.

    The sign ``-1`` is tried first; if its residual exceeds
    ``TOL_SELFADJOINT`` the sign is flipped and re-verified. Returns the
    accepted problem and a record for output metadata.
    """
    record = {"charge_closure": problem.closure}
    if not problem.has_junction:
        res = selfadjointness_residual(problem, trial_pairs, seed)
        record.update(w_sign=problem.w_sign, residual=res, flipped=False)
        if res > TOL_SELFADJOINT:
            raise InvariantViolation(f"operator is not self-adjoint (residual {res:.2e})")
        return problem, record
    first = replace(problem, w_sign=-1)
    r1 = selfadjointness_residual(first, trial_pairs, seed)
    record["residual_w_sign_minus"] = r1
    if r1 <= TOL_SELFADJOINT:
        record.update(w_sign=-1, residual=r1, flipped=False)
        return first, record
    second = replace(problem, w_sign=1)
    r2 = selfadjointness_residual(second, trial_pairs, seed)
    record.update(w_sign=1, residual=r2, flipped=True)
    if r2 > TOL_SELFADJOINT:
        raise InvariantViolation(f"no boundary sign gives a self-adjoint operator ({r2:.2e})")
    return second, record


# ---------------------------------------------------------------- sums

def tail_fit(omegas: np.ndarray, terms: np.ndarray, fraction: float = 0.1):
    """Fit ``terms ~ C / omega^2`` and ``omega ~ A n + B`` over the last part
    of the sequence; return ``(C, A, B)``."""
    K = terms.size
    lo = max(0, int(K * (1 - fraction)))
    w, t = omegas[lo:], terms[lo:]
    C = float(np.sum(t) / np.sum(1.0 / w**2))
    n = np.arange(lo + 1, K + 1, dtype=float)
    A, B = np.polyfit(n, w, 1)
    return C, float(A), float(B)


def tail_sum(C: float, A: float, B: float, K: int) -> float:
    """``sum_{n>K} C / (A n + B)^2`` in closed form (trigamma)."""
    return float(C / A**2 * polygamma(1, K + 1 + B / A))


def sum_rule(table: SpectrumTable) -> dict:
    """Partial sums of ``sum u^2`` (static modes first) and a tail estimate."""
    terms = np.sum(table.u_vector**2, axis=1)
    static = float(np.sum(table.static_u**2))
    partial = static + np.cumsum(terms)
    C, A, B = tail_fit(table.omegas, terms)
    tail = tail_sum(C, A, B, terms.size)
    limit = 1.0 / table.problem.alpha if table.problem.has_junction else None
    return {
        "partial": partial,
        "static": static,
        "tail": tail,
        "extrapolated": float(partial[-1] + tail),
        "limit": limit,
    }


def decay_exponent(table: SpectrumTable, fraction: float = 0.1) -> float:
    """Slope of log|u_n| vs log n over the last part of the table."""
    mag = np.sqrt(np.sum(table.u_vector**2, axis=1))
    K = mag.size
    lo = max(1, int(K * (1 - fraction)))
    n = np.arange(1, K + 1)[lo:]
    # coupling magnitudes oscillate between mode families; fit the envelope
    # through the mean square over the window
    slope, _ = np.polyfit(np.log(n), np.log(mag[lo:]), 1)
    return float(slope)


# ---------------------------------------------------------------- export

def spectrum_csv(table: SpectrumTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["omega", "multiplicity", "lambda", "u_u", "u_v"])
    for u in table.static_u:
        w.writerow(["0.0", 1, 1, f"{u:.17g}", "0.0"])
    mult = dict(zip(table.roots.tolist(), table.multiplicities.tolist()))
    for n in range(table.n_modes):
        om = float(table.omegas[n])
        w.writerow([f"{om:.17g}", mult.get(om, 0), int(table.lam[n]) + 1,
                    f"{table.u_vector[n, 0]:.17g}", f"{table.u_vector[n, 1]:.17g}"])
    return buf.getvalue()


def spectrum_json(table: SpectrumTable) -> str:
    N = table.problem.n_lines
    modes = []
    for n in range(table.n_modes):
        entry = {"n": n + 1, "omega": float(table.omegas[n]), "lambda": int(table.lam[n]) + 1}
        for b, name in enumerate(("u", "v")):
            a, bb, c, g = np.split(table.coefficients[n, b], 4)
            entry[name] = {"a": a.tolist(), "b": bb.tolist(), "c": c.tolist(), "g": g.tolist(),
                           "u": float(table.u_vector[n, b])}
        modes.append(entry)
    static = [{"U": m.cos_coef[:N].tolist(), "V": m.cos_coef[N:].tolist(), "u": float(u)}
              for m, u in zip(table.static, table.static_u)]
    doc = {
        "convention": "U = a cos(kx) + b sin(kx), V = c cos(kx) + g sin(kx), k = omega/sqrt(delta)",
        "Delta": table.problem.Delta.tolist(),
        "d": table.problem.d,
        "metadata": table.metadata,
        "static_modes": static,
        "modes": modes,
    }
    return json.dumps(doc, indent=1, sort_keys=True)
