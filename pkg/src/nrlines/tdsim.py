"""Leapfrog integrator for the rescaled telegrapher equations.

    dPhi/dt = Q',    dQ/dt = Delta Phi',    Q(0) = Y Phi(0).

Flux lives on nodes ``x_k = k dx`` (k = 0..M), charge on half nodes and half
time steps. The end nodes carry half-cell weights. The NR boundary enters the
node-0 update through an implicit midpoint step, a Cayley map for the skew Y,
so the scheme conserves the discrete quadratic form

    E = 1/2 Phi^T W Phi + 1/2 Q^{n-1/2} Lambda Q^{n+1/2}

exactly (Lambda = dx Delta^-1). The physical energy
``1/2 int (Phi_t^2 + Q_t Delta^-1 Q_t)`` is the same form evaluated on the
discrete time derivatives and is conserved as well. The far end is either
open (``Q(L) = 0``) or an absorbing layer with matched damping of both
fields.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BlowUp,
    CFLViolation,
    GeometryMismatch,
    NoImmittance,
    PulseOverlap,
    UnsupportedConfig,
)
from .netlist import RescaledSpec

LAYER_CELLS = 20


@dataclass(frozen=True)
class Pulse:
    """Gaussian ``A exp(-(x - center)^2 / (2 width^2))`` travelling on one line.

    ``line`` is 0-based; ``direction`` is ``"left"`` (towards x = 0) or
    ``"right"``.
    """

    line: int
    center: float
    width: float
    amplitude: float = 1.0
    direction: str = "left"

    def profile(self, x):
        return self.amplitude * np.exp(-((np.asarray(x) - self.center) ** 2) / (2 * self.width**2))

    def energy(self, delta: float) -> float:
        """Analytic physical energy ``delta int G'^2 dx`` of the travelling pulse."""
        return delta * self.amplitude**2 * math.sqrt(math.pi) / (2 * self.width)


@dataclass
class FieldState:
    """Discrete fields. ``phi`` has shape (N, M+1) at time ``t``; ``q`` has
    shape (N, M) at half nodes and time ``t - dt/2``."""

    phi: np.ndarray
    q: np.ndarray
    t: float
    dt: float
    dx: float
    delta: np.ndarray
    Y: np.ndarray
    far_end: str = "open"
    damp_phi: np.ndarray | None = None
    damp_q: np.ndarray | None = None
    steps: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_lines(self) -> int:
        return int(self.phi.shape[0])

    @property
    def M(self) -> int:
        return int(self.q.shape[1])

    @property
    def length(self) -> float:
        return self.M * self.dx

    @property
    def x_nodes(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dx

    @property
    def x_half(self) -> np.ndarray:
        return (np.arange(self.M) + 0.5) * self.dx

    def copy(self) -> FieldState:
        return replace(self, phi=self.phi.copy(), q=self.q.copy(), meta=dict(self.meta))


def _layer_profile(M: int, cells: int, strength: float, where: np.ndarray, dx: float) -> np.ndarray:
    start = (M - cells) * dx
    s = np.clip((where - start) / (cells * dx), 0.0, None)
    return strength * s**3


def init_state(spec: RescaledSpec, M: int, pulses=(), *, length: float | None = None,
               dt: float | None = None, courant: float = 0.5, far_end: str = "open",
               layer_strength: float | None = None) -> FieldState:
    """Discretize the circuit and load travelling Gaussian pulses.

    Semi-infinite circuits need ``length`` (the truncated domain). With
    ``far_end="absorbing"`` the last 20 cells form a graded damping layer.
    """
    if M < 16:
        raise ValueError("M must be at least 16")
    if spec.spec.junction is not None:
        raise UnsupportedConfig("time-domain junction dynamics are not modelled")
    N = spec.n_lines
    if spec.has_nr:
        if spec.Y is None:
            raise NoImmittance("time-domain boundary needs an admittance presentation")
        Y = np.asarray(spec.Y, dtype=float)
    else:
        Y = np.zeros((N, N))
    if math.isfinite(spec.length):
        L = spec.length if length is None else length
        if length is not None and not math.isclose(length, spec.length):
            raise GeometryMismatch("length differs from the netlist line length")
    else:
        if length is None:
            raise ValueError("semi-infinite lines need a truncation length")
        L = float(length)
    if far_end not in ("open", "absorbing"):
        raise ValueError("far_end must be 'open' or 'absorbing'")
    delta = np.asarray(spec.delta, dtype=float)
    dx = L / M
    vmax = float(np.sqrt(delta.max()))
    if dt is None:
        dt = courant * dx / vmax
    if dt > dx / vmax * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:g} exceeds the CFL bound dx/v_max={dx / vmax:g}")
    xn = np.arange(M + 1) * dx
    xh = (np.arange(M) + 0.5) * dx
    phi = np.zeros((N, M + 1))
    q = np.zeros((N, M))
    usable = L - (LAYER_CELLS * dx if far_end == "absorbing" else 0.0)
    t_q = -0.5 * dt
    for p in pulses:
        if not 0 <= p.line < N:
            raise ValueError(f"pulse line {p.line} out of range")
        if p.center - 3 * p.width < 0 or p.center + 3 * p.width > usable:
            raise PulseOverlap("pulse must sit at least 3 widths away from both ends")
        v = math.sqrt(delta[p.line])
        if p.direction == "left":
            phi[p.line] += p.profile(xn)
            q[p.line] += v * p.profile(xh + v * t_q)
        elif p.direction == "right":
            phi[p.line] += p.profile(xn)
            q[p.line] += -v * p.profile(xh - v * t_q)
        else:
            raise ValueError("direction must be 'left' or 'right'")
    damp_phi = damp_q = None
    if far_end == "absorbing":
        strength = layer_strength if layer_strength is not None else 32.0 * vmax / (LAYER_CELLS * dx)
        damp_phi = _layer_profile(M, LAYER_CELLS, strength, xn, dx)
        damp_q = _layer_profile(M, LAYER_CELLS, strength, xh, dx)
    return FieldState(phi=phi, q=q, t=0.0, dt=float(dt), dx=dx, delta=delta, Y=Y,
                      far_end=far_end, damp_phi=damp_phi, damp_q=damp_q)


class _Stepper:
    """Precomputed update for one state geometry; advances arrays in place."""

    def __init__(self, s: FieldState):
        self.s = s
        N = s.n_lines
        r = s.dt / s.dx
        I = np.eye(N)
        self.node0 = np.linalg.solve(I + r * s.Y, I - r * s.Y)
        self.node0_q = np.linalg.solve(I + r * s.Y, 2 * r * I)
        self.cq = (s.dt / s.dx) * s.delta[:, None]
        if s.damp_q is not None:
            self.aq = (1 - 0.5 * s.dt * s.damp_q) / (1 + 0.5 * s.dt * s.damp_q)
            self.bq = 1.0 / (1 + 0.5 * s.dt * s.damp_q)
            self.ap = (1 - 0.5 * s.dt * s.damp_phi) / (1 + 0.5 * s.dt * s.damp_phi)
            self.bp = 1.0 / (1 + 0.5 * s.dt * s.damp_phi)
        else:
            self.aq = None

    def advance(self, phi: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(phi^{n+1}, q^{n+1/2})`` from ``(phi^n, q^{n-1/2})``."""
        s = self.s
        r = s.dt / s.dx
        dq = self.cq * (phi[:, 1:] - phi[:, :-1])
        if self.aq is None:
            qn = q + dq
        else:
            qn = self.aq * q + self.bq * dq
        rhs = np.empty_like(phi)
        rhs[:, 1:-1] = r * (qn[:, 1:] - qn[:, :-1])
        rhs[:, -1] = -2 * r * qn[:, -1]
        if self.aq is None:
            pn = phi + rhs
        else:
            pn = self.ap * phi + self.bp * rhs
        pn[:, 0] = self.node0 @ phi[:, 0] + self.node0_q @ qn[:, 0]
        return pn, qn


def _weights(s: FieldState) -> np.ndarray:
    w = np.full(s.M + 1, s.dx)
    w[0] = w[-1] = 0.5 * s.dx
    return w


def modified_energy(s: FieldState, q_next: np.ndarray) -> float:
    """Exactly conserved form ``1/2 Phi W Phi + 1/2 Q^- Lambda Q^+``."""
    w = _weights(s)
    lam = s.dx / s.delta[:, None]
    return float(0.5 * np.sum(w * s.phi**2) + 0.5 * np.sum(lam * s.q * q_next))


def line_energies(s: FieldState) -> np.ndarray:
    """Physical energy per line, from the discrete time derivatives.

    Uses ``v = (Phi^{n+1} - Phi^n)/dt`` and the charge rates at steps n and
    n+1, so it needs one trial step (the state is not modified).
    """
    st = _Stepper(s)
    p1, q1 = st.advance(s.phi, s.q)
    p2, q2 = st.advance(p1, q1)
    v = (p1 - s.phi) / s.dt
    i0 = (q1 - s.q) / s.dt
    i1 = (q2 - q1) / s.dt
    w = _weights(s)
    lam = s.dx / s.delta[:, None]
    return 0.5 * np.sum(w * v**2, axis=1) + 0.5 * np.sum(lam * i0 * i1, axis=1)


def energy(s: FieldState) -> float:
    return float(np.sum(line_energies(s)))


def step(state: FieldState) -> FieldState:
    """One leapfrog step; returns a new state."""
    pn, qn = _Stepper(state).advance(state.phi, state.q)
    return replace(state, phi=pn, q=qn, t=state.t + state.dt, steps=state.steps + 1,
                   meta=dict(state.meta))


@dataclass
class RunResult:
    state: FieldState
    energy_trace: np.ndarray
    times: np.ndarray
    snapshots: list = field(default_factory=list)


def run(state: FieldState, n_steps: int, *, energy_stride: int = 1,
        snapshot_stride: int | None = None, growth_tol: float = 1e-6) -> RunResult:
    """Advance ``n_steps``; abort with :class:`BlowUp` if the conserved form
    grows by more than ``growth_tol`` (relative) in one step."""
    st = _Stepper(state)
    phi, q = state.phi.copy(), state.q.copy()
    w = _weights(state)
    lam = state.dx / state.delta[:, None]
    trace, times, snaps = [], [], []
    prev = None
    t = state.t
    for n in range(n_steps):
        pn, qn = st.advance(phi, q)
        e = 0.5 * np.sum(w * phi**2) + 0.5 * np.sum(lam * q * qn)
        if prev is not None and prev > 0 and e > prev * (1 + growth_tol):
            raise BlowUp(f"discrete energy grew from {prev:.6e} to {e:.6e} at step {n}")
        if not np.isfinite(e):
            raise BlowUp(f"non-finite field at step {n}")
        prev = e
        if n % energy_stride == 0:
            trace.append(e)
            times.append(t)
        if snapshot_stride and n % snapshot_stride == 0:
            snaps.append(replace(state, phi=phi.copy(), q=q.copy(), t=t, steps=state.steps + n))
        phi, q = pn, qn
        t += state.dt
    final = replace(state, phi=phi, q=q, t=state.t + n_steps * state.dt,
                    steps=state.steps + n_steps, meta=dict(state.meta))
    return RunResult(final, np.asarray(trace), np.asarray(times), snaps)


def run_until(state: FieldState, t_end: float, **kw) -> RunResult:
    n = int(round((t_end - state.t) / state.dt))
    return run(state, max(n, 0), **kw)


# ---------------------------------------------------------------- references

def _is_unit_gyrator(Y: np.ndarray) -> bool:
    return Y.shape == (2, 2) and np.allclose(Y, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-12)


def dalembert_reference(pulses, Y, t: float, x, delta=None):
    """Exact fields of two unit-velocity lines joined by the unit gyrator.

    ``Phi = (f(t-x) + g(t+x), g(t-x) - f(t+x))`` and
    ``Q = (-f(t-x) + g(t+x), -g(t-x) - f(t+x))``, with ``f``, ``g`` built from
    the initial pulses. Returns ``(Phi, Q)`` with shape (2, len(x)).
    """
    Y = np.asarray(Y, dtype=float)
    if delta is not None and not np.allclose(delta, 1.0):
        raise UnsupportedConfig("reference requires unit velocities")
    if not _is_unit_gyrator(Y):
        raise UnsupportedConfig("reference requires the 2-line unit gyrator [[0,1],[-1,0]]")
    x = np.asarray(x, dtype=float)
    pulses = list(pulses)

    def f(s):
        out = np.zeros_like(s, dtype=float)
        for p in pulses:
            if p.line == 0 and p.direction == "right":
                out += p.profile(-s)
            elif p.line == 1 and p.direction == "left":
                out -= p.profile(s)
        return out

    def g(s):
        out = np.zeros_like(s, dtype=float)
        for p in pulses:
            if p.line == 0 and p.direction == "left":
                out += p.profile(s)
            elif p.line == 1 and p.direction == "right":
                out += p.profile(-s)
        return out

    phi = np.array([f(t - x) + g(t + x), g(t - x) - f(t + x)])
    q = np.array([-f(t - x) + g(t + x), -g(t - x) - f(t + x)])
    return phi, q


# ---------------------------------------------------------------- projections

def _node_charge(s: FieldState) -> np.ndarray:
    """Charge at nodes and integer time (averaged in time and space)."""
    st = _Stepper(s)
    _, q1 = st.advance(s.phi, s.q)
    qm = 0.5 * (s.q + q1)
    out = np.empty_like(s.phi)
    out[:, 1:-1] = 0.5 * (qm[:, 1:] + qm[:, :-1])
    out[:, 0] = s.Y @ s.phi[:, 0]
    out[:, -1] = 0.0 if s.far_end == "open" else qm[:, -1]
    return out


@dataclass
class ModeProjection:
    omegas: np.ndarray
    branches: list
    X: np.ndarray
    energies: np.ndarray
    field_energy: float


def mode_energy_spectrum(state: FieldState, basis) -> ModeProjection:
    """Project the fields onto eigenfunctions and return per-mode energies.

    ``basis`` is a :class:`~nrlines.finite.SpectrumTable` (finite lines) or a
    :class:`~nrlines.spectral.ModeBasis` (semi-infinite; continuum amplitudes
    on its grid). Energies are ``omega^2 (X_u^2 + X_v^2) / 2`` per mode.
    """
    from .finite import SpectrumTable

    x = state.x_nodes
    w = _weights(state)
    Qn = _node_charge(state)
    N = state.n_lines
    inv = 1.0 / state.delta[:, None]
    field_e = energy(state)
    if isinstance(basis, SpectrumTable):
        prob = basis.problem
        if prob.n_lines != N or not math.isclose(prob.d, state.length, rel_tol=1e-12):
            raise GeometryMismatch("state and spectrum describe different geometries")
        if not np.allclose(prob.Delta, state.delta) or not np.allclose(prob.Y, state.Y):
            raise GeometryMismatch("state and spectrum have different line or element data")
        if prob.has_junction:
            raise UnsupportedConfig("junction modes have no time-domain counterpart here")
        omegas, X = [], []
        for n in range(basis.n_modes):
            xs = []
            for br in ("u", "v"):
                vals = basis.mode(n, br)(x)
                U, V = vals[:, :N].T, vals[:, N:].T
                xs.append(float(np.sum(w * (U * state.phi + V * inv * Qn))))
            omegas.append(float(basis.omegas[n]))
            X.append(xs)
        X = np.asarray(X).reshape(-1, 2)
        om = np.asarray(omegas)
        return ModeProjection(om, ["u", "v"], X, 0.5 * om**2 * np.sum(X**2, axis=1), field_e)
    # semi-infinite basis: continuum amplitudes on the grid
    if basis.n_lines != N:
        raise GeometryMismatch("state and basis have different numbers of lines")
    om = np.asarray(basis.frequencies)
    X = np.zeros((om.size, len(basis.branches) * N))
    for i, wv in enumerate(om):
        for j, f in enumerate(basis.modes(wv)):
            vals = f(x)
            U, V = vals[:, :N].T, vals[:, N:].T
            X[i, j] = float(np.sum(w * (U * state.phi + V * inv * Qn)))
    return ModeProjection(om, list(basis.branches), X, 0.5 * om**2 * np.sum(X**2, axis=1), field_e)


def snapshot_csv(state: FieldState) -> str:
    """CSV with columns x, Phi_1..Phi_N, Q_1..Q_N at the nodes."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    N = state.n_lines
    wr.writerow(["x"] + [f"Phi_{i + 1}" for i in range(N)] + [f"Q_{i + 1}" for i in range(N)])
    Qn = _node_charge(state)
    for k, xv in enumerate(state.x_nodes):
        wr.writerow([f"{xv:.17g}"] + [f"{v:.17g}" for v in state.phi[:, k]]
                    + [f"{v:.17g}" for v in Qn[:, k]])
    return buf.getvalue()
