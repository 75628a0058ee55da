from __future__ import annotations

import json
import math

import numpy as np
import pytest

from nrlines import finite, hamiltonian, spectral
from nrlines.errors import TooFewModes, UnexpectedT, WrongAlpha
from nrlines.netlist import load_netlist, rescale
from conftest import NETLISTS, make, unit_lines

GRID = np.linspace(0.2, 4.0, 20)


@pytest.fixture(scope="module")
def transmon():
    spec = load_netlist(NETLISTS / "circulator_transmon.json")
    table = finite.lowest_modes(finite.problem_from_spec(rescale(spec)), 500)
    return spec, table


def test_representation_sign():
    sy = spectral.sigma_y_block(2)
    assert hamiltonian.representation_sign(sy) == 1
    assert hamiltonian.representation_sign(-sy) == -1
    with pytest.raises(UnexpectedT):
        hamiltonian.representation_sign(np.eye(4))


@pytest.mark.parametrize("sign", [1, -1])
def test_elimination_transform_is_symplectic(sign):
    J = hamiltonian.symplectic_form()
    for w in (0.3, 1.0, 7.5):
        T = hamiltonian.elimination_transform(w, sign)
        assert np.max(np.abs(T @ J @ T.T - J)) < 1e-14


@pytest.mark.parametrize("sign", [1, -1])
def test_reduced_hamiltonian_is_single_oscillator(sign):
    R = sign * spectral.sigma_y_block(1)
    model = hamiltonian.mode_space_reduction(R, GRID)
    assert model.sign == sign
    assert model.symplectic_error() < 1e-12
    for i, w in enumerate(GRID):
        # 1/2 (Pit^2 + omega^2 Ft^2), nothing for (Pt, Gt)
        assert np.allclose(model.hamiltonian_matrix(i), np.diag([1.0, w * w, 0.0, 0.0]), atol=1e-12)
        assert not np.any(model.nondynamical_rates(i))


def test_reduction_from_computed_basis(gyrator_semi):
    tm = spectral.telegrapher_matrix(spectral.semi_infinite_basis(gyrator_semi, GRID))
    model = hamiltonian.mode_space_reduction(tm, GRID)
    assert model.n_lambda == 2
    assert model.symplectic_error() < 1e-12


def test_kinetic_matrix_decouples_modes_at_series_value(rng):
    u = rng.standard_normal(30) * 0.1
    a_c, a_j = 1.0, 1.0
    a_s = a_c * a_j / (a_c + a_j)
    Ci = np.linalg.inv(hamiltonian.kinetic_matrix(u, a_s, a_c, a_j))
    assert np.max(np.abs(Ci[1:, 1:] - np.eye(30))) < 1e-12
    Cbad = np.linalg.inv(hamiltonian.kinetic_matrix(u, 0.4, a_c, a_j))
    assert np.max(np.abs(Cbad[1:, 1:] - np.eye(30))) > 1e-4


def test_assemble_and_lamb_shift(transmon):
    spec, table = transmon
    model = hamiltonian.assemble_hamiltonian(table, spec, 500)
    assert model.K == 500 and model.couplings.size == 500
    assert model.xi == pytest.approx(0.5)
    assert model.metadata["mode_block_deviation"] < 1e-9
    chi = hamiltonian.lamb_shift(model)
    assert chi.limit == pytest.approx(1.0)
    assert chi.relative_error < 5e-3
    assert np.all(np.diff(chi.partial) > 0) and chi.partial[-1] < chi.limit
    doc = json.loads(hamiltonian.hamiltonian_json(model, chi))
    assert len(doc["couplings"]) == 500
    assert doc["couplings"][0]["n"] == 1
    assert doc["chi_limit"] == pytest.approx(1.0)


def test_coupling_magnitudes(transmon):
    spec, table = transmon
    model = hamiltonian.assemble_hamiltonian(table, spec, 50)
    r = model.couplings
    u2 = np.sum(table.u_vector[:50] ** 2, axis=1)
    assert np.allclose(np.abs(r) ** 2, 0.5 * spec.hbar * table.omegas[:50] * u2)


def test_too_few_modes(transmon):
    spec, table = transmon
    model = hamiltonian.assemble_hamiltonian(table, spec, 10)
    with pytest.raises(TooFewModes):
        hamiltonian.lamb_shift(model)
    with pytest.raises(TooFewModes):
        hamiltonian.assemble_hamiltonian(table, spec, 1000)


def test_wrong_alpha_rejected(transmon):
    spec, _ = transmon
    p = finite.problem_from_spec(rescale(spec), alpha=0.4)
    table = finite.lowest_modes(p, 20)
    with pytest.raises(WrongAlpha):
        hamiltonian.assemble_hamiltonian(table, spec)


def test_no_junction_model(gyrator_finite):
    table = finite.lowest_modes(finite.problem_from_spec(gyrator_finite), 20)
    model = hamiltonian.assemble_hamiltonian(table, gyrator_finite.spec)
    assert model.couplings.size == 0 and model.xi == 0.0
    doc = json.loads(hamiltonian.hamiltonian_json(model))
    assert doc["couplings"] == [] and doc["xi"] == 0.0


@pytest.mark.parametrize("fixture", ["gyrator_semi", "reciprocal_semi"])
def test_sigma_generic_equals_closed_form(fixture, request):
    rs = request.getfixturevalue(fixture)
    b = spectral.semi_infinite_basis(rs, GRID)
    s1, s2 = hamiltonian.trs_sigma(b), hamiltonian.trs_sigma_closed_form(b)
    assert np.max(np.abs(s1.delta_block - s2.delta_block)) < 1e-13
    assert np.max(np.abs(s1.pv - s2.pv)) < 1e-13


def test_trs_reciprocal(reciprocal_semi):
    b = spectral.semi_infinite_basis(reciprocal_semi, GRID)
    tm = spectral.telegrapher_matrix(b)
    rep = hamiltonian.trs_check(hamiltonian.mode_space_reduction(tm, GRID), hamiltonian.trs_sigma(b))
    assert rep.reciprocal
    assert rep.max_anticommutator < 1e-12
    assert rep.sigma_z_deviation < 1e-12


def test_trs_gyrator_mixes_modes(gyrator_semi):
    b = spectral.semi_infinite_basis(gyrator_semi, GRID)
    tm = spectral.telegrapher_matrix(b)
    rep = hamiltonian.trs_check(hamiltonian.mode_space_reduction(tm, GRID), hamiltonian.trs_sigma(b))
    assert not rep.reciprocal
    assert rep.offdiagonal_anticommutator > 1e-6
    assert rep.trs_broken


def test_sigma_is_an_involution_in_the_reciprocal_case(reciprocal_semi):
    b = spectral.semi_infinite_basis(reciprocal_semi, GRID)
    assert hamiltonian.trs_sigma(b).orthogonality_deviation() < 1e-12
