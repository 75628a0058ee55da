"""Acceptance criteria 1-11.

Each test records one ``CRITERION k: PASS|FAIL`` line. The lines are printed
immediately and again in the pytest terminal summary; running this file as
a script prints them without pytest.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import oracles  # noqa: E402
from conftest import CIRCULATOR_Y, GYRATOR, NETLISTS, make, unit_lines  # noqa: E402
from nrlines import finite, hamiltonian, nrcore, spectral, tdsim  # noqa: E402
from nrlines.netlist import load_netlist, rescale  # noqa: E402

RESULTS: dict[int, str] = {}
GRID = np.linspace(0.2, 6.0, 16)


def report(k: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[k] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def transmon():
    spec = load_netlist(NETLISTS / "circulator_transmon.json")
    prob = finite.problem_from_spec(rescale(spec))
    return spec, prob, finite.lowest_modes(prob, 500)


def semi(kind):
    if kind == "gyrator":
        return make({"lines": unit_lines(2, "inf"), "nr_element": {"kind": "Y", "matrix": GYRATOR}})
    if kind == "circulator":
        return make({"lines": unit_lines(3, "inf"),
                     "nr_element": {"kind": "S", "matrix": oracles.circulator_matrix(3).tolist()}})
    return make({"lines": [{"length": "inf", "c_delta": 1.0, "l_delta": 1.0},
                           {"length": "inf", "c_delta": 2.0, "l_delta": 0.5}]})


def test_criterion_01_reciprocal_spectrum():
    rs = make({"lines": [{"length": 1.5, "c_delta": 0.5, "l_delta": 0.5}]})
    t = finite.eigenfrequencies(finite.problem_from_spec(rs), 180.0)
    expect = oracles.open_line_roots(20, delta=4.0, d=1.5)
    err = float(np.max(np.abs(t.omegas[:20] - expect) / expect))
    report(1, t.n_modes >= 20 and err < 1e-10, f"max rel. error n<=20: {err:.2e} (tol 1e-10)")


def test_criterion_02_gyrator_spectrum():
    rs = make({"lines": unit_lines(2), "nr_element": {"kind": "Y", "matrix": GYRATOR}})
    t = finite.eigenfrequencies(finite.problem_from_spec(rs), 9.0 * math.pi)
    expect = oracles.gyrator_roots(10)
    err = float(np.max(np.abs(t.omegas[:11] - expect) / expect))
    mult = bool(np.all(t.multiplicities[:11] == 2))
    ladder = oracles.ladder_frequencies([1.0, 1.0], GYRATOR, 1.0, 400, count=11)
    lerr = float(np.max(np.abs(ladder - t.omegas[:11]) / t.omegas[:11]))
    report(2, err < 1e-9 and mult and lerr < 1e-4,
           f"root rel. error {err:.2e} (tol 1e-9), multiplicity 2: {mult}, "
           f"ladder M=400 rel. error {lerr:.2e} (tol 1e-4)")


def test_criterion_03_boundary_residuals(transmon):
    worst_semi = max(spectral.max_boundary_residual(spectral.semi_infinite_basis(semi(k), GRID))
                     for k in ("gyrator", "circulator", "reciprocal"))
    _, prob, table = transmon
    worst_fin = max(finite.mode_residuals(prob, m) for _, _, m in table.all_modes())
    g = make({"lines": unit_lines(2), "nr_element": {"kind": "Y", "matrix": GYRATOR}})
    gp = finite.problem_from_spec(g)
    gt = finite.eigenfrequencies(gp, 100.0)
    worst_fin = max(worst_fin, max(finite.mode_residuals(gp, m) for _, _, m in gt.all_modes()))
    report(3, worst_semi < 1e-10 and worst_fin < 1e-10,
           f"semi-infinite {worst_semi:.2e}, finite {worst_fin:.2e} (tol 1e-10)")


def test_criterion_04_orthonormality(transmon):
    dev = max(spectral.algebraic_orthonormality(spectral.semi_infinite_basis(semi(k), GRID), w)
              for k in ("gyrator", "circulator", "reciprocal") for w in GRID)
    G = finite.gram_matrix(transmon[2], 20)
    gdev = float(np.max(np.abs(G - np.eye(20))))
    report(4, dev < 1e-10 and gdev < 1e-8,
           f"algebraic deviation {dev:.2e} (tol 1e-10), finite Gram(20) {gdev:.2e} (tol 1e-8)")


def test_criterion_05_telegrapher_matrix():
    dev = t2 = sq = 0.0
    for k in ("gyrator", "circulator", "reciprocal"):
        b = spectral.semi_infinite_basis(semi(k), GRID)
        tm = spectral.telegrapher_matrix(b)
        n = b.n_lines
        dev = max(dev, float(np.max(np.abs(tm.representation - tm.sign * spectral.sigma_y_block(n)))))
        t2 = max(t2, float(np.max(np.abs(tm.t @ tm.t - np.eye(2 * n)))))
        x = np.linspace(0, 5, 21)
        for w in GRID:
            for f in b.modes(w):
                g = spectral.telegrapher_apply(spectral.telegrapher_apply(f))
                sq = max(sq, float(np.max(np.abs(g(x) - w**2 * f(x)))) / w**2)
    report(5, dev < 1e-10 and t2 < 1e-10 and sq < 1e-10,
           f"|R - omega sigma_y (x) 1|/omega {dev:.2e}, |t^2 - 1| {t2:.2e}, "
           f"|T^2 - omega^2|/omega^2 {sq:.2e} (tol 1e-10)")


def test_criterion_06_sum_rule(transmon):
    _, prob, table = transmon
    sr = finite.sum_rule(table)
    p = sr["partial"]
    mono = bool(np.all(np.diff(p) >= 0))
    bounded = bool(p[-1] <= sr["limit"])
    rel = abs(sr["extrapolated"] - sr["limit"]) / sr["limit"]
    report(6, mono and bounded and rel < 0.01,
           f"partial(500) {p[-1]:.6f}, tail-corrected {sr['extrapolated']:.6f} vs 1/alpha "
           f"{sr['limit']:.6f} (rel. {rel:.1e}, tol 1e-2), monotone {mono}, bounded {bounded}")


def test_criterion_07_lamb_shift(transmon):
    spec, _, table = transmon
    model = hamiltonian.assemble_hamiltonian(table, spec, 500)
    chi = hamiltonian.lamb_shift(model)
    slope = finite.decay_exponent(table)
    report(7, chi.relative_error < 5e-3 and abs(slope + 1) < 0.05,
           f"chi {chi.extrapolated:.6f} vs hbar/(2 alpha) {chi.limit:.6f} "
           f"(rel. {chi.relative_error:.1e}, tol 5e-3), decay exponent {slope:.3f} (-1 +- 0.05)")


def test_criterion_08_time_domain():
    rs = semi("gyrator")
    P = tdsim.Pulse(0, 8.0, 1.0)
    errs = []
    for M in (128, 256, 512):
        s = tdsim.init_state(rs, M, [P], length=20.0)
        st = tdsim.run_until(s, 12.0).state
        ref, _ = tdsim.dalembert_reference([P], rs.Y, st.t, st.x_nodes)
        errs.append(float(np.max(np.abs(st.phi - ref))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    s = tdsim.init_state(rs, 1024, [P], length=24.0)
    e = tdsim.line_energies(tdsim.run_until(s, 16.0).state)
    back = float(e[0] / e.sum())
    s = tdsim.init_state(rs, 512, [P], length=20.0)
    e0 = tdsim.energy(s)
    drift = abs(tdsim.energy(tdsim.run(s, 10_000).state) - e0) / e0
    ok = bool(np.all(np.abs(orders - 2) < 0.2)) and back < 1e-4 and drift < 1e-6
    report(8, ok, f"orders {np.round(orders, 3).tolist()} (2 +- 0.2), back-reflected energy "
                  f"{back:.1e} (tol 1e-4), drift over 1e4 steps {drift:.1e} (tol 1e-6)")


def test_criterion_09_trs_dichotomy():
    out = {}
    for k in ("reciprocal", "gyrator"):
        b = spectral.semi_infinite_basis(semi(k), GRID)
        model = hamiltonian.mode_space_reduction(spectral.telegrapher_matrix(b), GRID)
        out[k] = hamiltonian.trs_check(model, hamiltonian.trs_sigma(b))
    r, g = out["reciprocal"], out["gyrator"]
    ok = (r.sigma_z_deviation < 1e-12 and r.max_anticommutator < 1e-12
          and g.offdiagonal_anticommutator > 1e-6)
    report(9, ok, f"reciprocal: |Sigma - sigma_z| {r.sigma_z_deviation:.1e}, anticommutator "
                  f"{r.max_anticommutator:.1e} (tol 1e-12); gyrator off-pattern "
                  f"{g.offdiagonal_anticommutator:.3f} (> 1e-6)")


def test_criterion_10_selfadjointness(transmon):
    _, prob, _ = transmon
    res = finite.selfadjointness_residual(prob, trial_pairs=100, seed=0)
    neg = finite.selfadjointness_residual(prob, trial_pairs=100, seed=0, include_w=False)
    report(10, res < 1e-9 and neg > 1e-3,
           f"residual {res:.2e} (tol 1e-9), dropped-w control {neg:.2e} (> 1e-3)")


def test_criterion_11_nr_algebra():
    S = oracles.circulator_matrix(3)
    Y = nrcore.scattering_to_admittance(S)
    err = float(np.max(np.abs(Y - oracles.cayley_admittance(S))))
    closed = float(np.max(np.abs(Y - np.array(CIRCULATOR_Y))))
    rt = float(np.max(np.abs(nrcore.scattering_to_admittance(nrcore.admittance_to_scattering(Y)) - Y)))
    rt = max(rt, float(np.max(np.abs(nrcore.admittance_to_scattering(Y) - S))))
    P1, _, _ = nrcore.degenerate_reduction(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    idem = float(np.max(np.abs(P1 @ P1 - P1)))
    report(11, err < 1e-12 and closed < 1e-12 and rt < 1e-10 and idem < 1e-12,
           f"S->Y vs direct {err:.1e} (tol 1e-12), round trip {rt:.1e} (tol 1e-10), "
           f"|P1^2 - P1| {idem:.1e} (tol 1e-12)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
