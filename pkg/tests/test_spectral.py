from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrlines import spectral
from nrlines.errors import InvariantViolation, NonReciprocal, NoImmittance, NotSkew
from conftest import CIRCULATOR_Y, make, unit_lines

GRID = np.linspace(0.3, 6.0, 12)


def test_m_matrix_reciprocal_unequal_velocities():
    M, m, e = spectral.build_m_matrix([1.0, 4.0], np.zeros((2, 2)))
    assert np.allclose(M, np.diag([1.0, 0.5]))
    assert np.allclose(m, [1.0, 0.5])


def test_m_matrix_rejects_non_skew():
    with pytest.raises(NotSkew):
        spectral.build_m_matrix([1.0, 1.0], [[0.0, 1.0], [1.0, 0.0]])


def test_gyrator_flux_mode_values(gyrator_semi):
    b = spectral.semi_infinite_basis(gyrator_semi, [1.0])
    W = b.mode(1.0, "u", 0)(0.0)
    # (U, V)(0) proportional to (1, 0, 0, -1) with norm sqrt(2/(pi m)), m = 2
    assert np.allclose(np.abs(W * math.sqrt(math.pi)), [1, 0, 0, 1], atol=1e-12)
    assert math.isclose(W[0] * W[3], -1.0 / math.pi)


@pytest.mark.parametrize("which", ["gyrator", "circulator", "reciprocal", "mixed"])
def test_boundary_and_orthonormality(which):
    if which == "gyrator":
        doc = {"lines": unit_lines(2, "inf"), "nr_element": {"kind": "Y", "matrix": [[0, 1], [-1, 0]]}}
    elif which == "circulator":
        doc = {"lines": unit_lines(3, "inf"), "nr_element": {"kind": "Y", "matrix": CIRCULATOR_Y}}
    elif which == "reciprocal":
        doc = {"lines": unit_lines(2, "inf")}
    else:
        doc = {"lines": [{"length": "inf", "c_delta": 1.0, "l_delta": 0.5},
                         {"length": "inf", "c_delta": 2.0, "l_delta": 1.0},
                         {"length": "inf", "c_delta": 0.5, "l_delta": 3.0}],
               "nr_element": {"kind": "S", "matrix": [[0, 0, 1], [1, 0, 0], [0, 1, 0]], "R": 1.3}}
    basis = spectral.semi_infinite_basis(make(doc), GRID)
    assert spectral.max_boundary_residual(basis) < 1e-10
    for w in GRID:
        assert spectral.algebraic_orthonormality(basis, w) < 1e-10


def test_same_branch_has_no_principal_part(gyrator_semi):
    # cos-cos and sin-sin products carry only the Dirac part
    b = spectral.semi_infinite_basis(gyrator_semi, GRID)
    for lam, lam2 in ((0, 0), (0, 1)):
        _, P = spectral.pair_kernel(b.mode(1.0, "u", lam), b.mode(2.0, "u", lam2))
        assert abs(P) < 1e-15


def test_principal_part_matches_quadrature(gyrator_semi):
    b = spectral.semi_infinite_basis(gyrator_semi, GRID)
    f, g = b.mode(1.0, "u", 0), b.mode(2.5, "v", 1)
    _, P = spectral.pair_kernel(f, g)
    # Abel-regularized integral: damp by exp(-eps x) and let eps -> 0
    x = np.linspace(0, 4000, 2_000_001)
    n = f.n_lines
    wt = np.concatenate([np.ones(n), 1.0 / f.delta])
    vals = []
    for eps in (0.02, 0.01):
        integrand = np.sum(f(x) * g(x) * wt, axis=1) * np.exp(-eps * x)
        vals.append(np.trapezoid(integrand, x))
    est = 2 * vals[1] - vals[0]
    assert abs(est - P.real) < 1e-4


def test_quadrature_agrees_with_dirac_coefficient(gyrator_semi):
    # |W|^2 averages to D / pi per unit length when <W, W'> = D delta(w - w')
    b = spectral.semi_infinite_basis(gyrator_semi, [2.0])
    f = b.mode(2.0, "u", 0)
    x = np.linspace(0, 400 * math.pi, 400001)
    q = spectral.quadrature_inner(f, f, x)
    D, _ = spectral.pair_kernel(f, f)
    assert abs(q.real / x[-1] - D.real / math.pi) < 1e-3


def test_perturbed_basis_detected(gyrator_semi):
    b = spectral.semi_infinite_basis(gyrator_semi, GRID)
    bad = replace(b, e_vectors=b.e_vectors + 0.01)
    assert spectral.algebraic_orthonormality(bad) > 1e-3


def test_telegrapher_matrix_sign_and_square(gyrator_semi, reciprocal_semi):
    for rs in (gyrator_semi, reciprocal_semi):
        b = spectral.semi_infinite_basis(rs, GRID)
        tm = spectral.telegrapher_matrix(b)
        n = rs.n_lines
        assert tm.sign == 1
        assert np.max(np.abs(tm.representation - spectral.sigma_y_block(n))) < 1e-10
        assert np.max(np.abs(tm.t @ tm.t - np.eye(2 * n))) < 1e-10
        assert tm.spread < 1e-10


def test_telegrapher_square_is_omega_squared(gyrator_semi):
    b = spectral.semi_infinite_basis(gyrator_semi, GRID)
    x = np.linspace(0, 5, 11)
    for w in GRID:
        for f in b.modes(w):
            g = spectral.telegrapher_apply(spectral.telegrapher_apply(f))
            assert np.max(np.abs(g(x) - w**2 * f(x))) < 1e-10 * w**2


def test_telegrapher_matrix_rejects_perturbed(gyrator_semi):
    b = spectral.semi_infinite_basis(gyrator_semi, GRID)
    bad = replace(b, e_vectors=b.e_vectors @ np.array([[1.0, 0.05], [0.0, 1.0]]))
    with pytest.raises(InvariantViolation):
        spectral.telegrapher_matrix(bad)


def test_reduced_basis_requires_reciprocity(gyrator_semi, reciprocal_semi):
    with pytest.raises(NonReciprocal):
        spectral.reduced_basis(gyrator_semi, GRID)
    rb = spectral.reduced_basis(reciprocal_semi, GRID, "flux")
    assert rb.branches == ("u",)
    assert spectral.algebraic_orthonormality(rb) < 1e-12
    rc = spectral.reduced_basis(reciprocal_semi, GRID, "charge")
    assert spectral.algebraic_orthonormality(rc) < 1e-12


def test_degenerate_element_needs_reduction():
    rs = make({"lines": unit_lines(2, "inf"), "nr_element": {"kind": "S", "matrix": [[0, -1], [-1, 0]]}})
    with pytest.raises(NoImmittance):
        spectral.semi_infinite_basis(rs, GRID)


def test_mode_table_csv(gyrator_semi):
    b = spectral.semi_infinite_basis(gyrator_semi, [1.0])
    text = spectral.mode_table_csv(b, [0.0, 1.0])
    lines = text.strip().splitlines()
    assert lines[0].startswith("omega,branch,lambda,x,U_1,U_2,V_1,V_2")
    assert len(lines) == 1 + 4 * 2


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2**31 - 1))
def test_random_networks_orthonormal(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    lines = [{"length": "inf", "c_delta": float(c), "l_delta": float(l)}
             for c, l in zip(rng.uniform(0.5, 2, n), rng.uniform(0.5, 2, n))]
    doc = {"lines": lines}
    if n > 1:
        doc["nr_element"] = {"kind": "Y", "matrix": (A - A.T).tolist()}
    basis = spectral.semi_infinite_basis(make(doc), [0.7, 2.9])
    assert spectral.max_boundary_residual(basis) < 1e-10
    assert spectral.algebraic_orthonormality(basis) < 1e-10
    assert spectral.telegrapher_matrix(basis).sign == 1
