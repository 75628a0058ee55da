from __future__ import annotations

import math

import numpy as np
import pytest

import oracles
from nrlines import finite, tdsim
from nrlines.errors import BlowUp, CFLViolation, GeometryMismatch, PulseOverlap, UnsupportedConfig
from conftest import CIRCULATOR_Y, GYRATOR, make, unit_lines

PULSE = tdsim.Pulse(line=0, center=8.0, width=1.0)


def gyrator_error(rs, M):
    s = tdsim.init_state(rs, M, [PULSE], length=20.0)
    st = tdsim.run_until(s, 12.0).state
    ref, _ = tdsim.dalembert_reference([PULSE], rs.Y, st.t, st.x_nodes)
    return float(np.max(np.abs(st.phi - ref)))


def test_zero_state(gyrator_semi):
    s = tdsim.init_state(gyrator_semi, 64, [], length=10.0)
    assert tdsim.energy(s) == 0.0
    st = tdsim.run(s, 20).state
    assert not st.phi.any() and not st.q.any()


@pytest.mark.parametrize("c, l", [(1.0, 1.0), (0.5, 0.5)])
@pytest.mark.parametrize("direction", ["left", "right"])
def test_pulse_energy(c, l, direction):
    rs = make({"lines": [{"length": "inf", "c_delta": c, "l_delta": l}]})
    delta = 1.0 / (c * l)
    s = tdsim.init_state(rs, 2048, [tdsim.Pulse(0, 10.0, 1.0, direction=direction)], length=20.0)
    assert tdsim.energy(s) == pytest.approx(oracles.gaussian_pulse_energy(delta, 1.0, 1.0), rel=1e-4)


def test_pulse_energy_converges_second_order(gyrator_semi):
    exact = oracles.gaussian_pulse_energy(1.0, 1.0, 1.0)
    errs = []
    for M in (256, 512, 1024):
        s = tdsim.init_state(gyrator_semi, M, [PULSE], length=20.0)
        errs.append(abs(tdsim.energy(s) - exact))
    order = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(order - 2) < 0.2)


def test_guards(gyrator_semi, single_line):
    with pytest.raises(PulseOverlap):
        tdsim.init_state(gyrator_semi, 128, [tdsim.Pulse(0, 2.0, 1.0)], length=20.0)
    with pytest.raises(CFLViolation):
        tdsim.init_state(gyrator_semi, 128, [], length=20.0, dt=1.0)
    with pytest.raises(ValueError):
        tdsim.init_state(gyrator_semi, 128, [])
    with pytest.raises(GeometryMismatch):
        tdsim.init_state(single_line, 128, [], length=3.0)


def test_junction_not_simulated(netlist_dir):
    from nrlines.netlist import load_netlist, rescale
    rs = rescale(load_netlist(netlist_dir / "circulator_transmon.json"))
    with pytest.raises(UnsupportedConfig):
        tdsim.init_state(rs, 64, [])


def test_dalembert_reference_properties():
    Y = np.array(GYRATOR)
    x = np.linspace(0, 20, 201)
    phi, q = tdsim.dalembert_reference([], Y, 3.0, x)
    assert not phi.any() and not q.any()
    phi0, _ = tdsim.dalembert_reference([PULSE], Y, 0.0, x)
    assert np.allclose(phi0[0], PULSE.profile(x), atol=1e-12)
    t = 14.0
    phi, q = tdsim.dalembert_reference([PULSE], Y, t, x)
    assert np.allclose(phi[1], PULSE.profile(t - x))
    # boundary condition Q(0) = Y Phi(0) at all times
    for t in np.linspace(0, 16, 9):
        phi, q = tdsim.dalembert_reference([PULSE], Y, t, np.array([0.0]))
        assert np.allclose(q[:, 0], Y @ phi[:, 0])
    with pytest.raises(UnsupportedConfig):
        tdsim.dalembert_reference([PULSE], -Y.T @ np.diag([1, 2]), 0.0, x)
    with pytest.raises(UnsupportedConfig):
        tdsim.dalembert_reference([PULSE], Y, 0.0, x, delta=[1.0, 2.0])


def test_gyrator_circulation(gyrator_semi):
    # after the pulse has passed x = 0, line 1 holds only the O(dx^2) wake
    s = tdsim.init_state(gyrator_semi, 8192, [PULSE], length=24.0)
    st = tdsim.run_until(s, 16.0).state
    assert np.max(np.abs(st.phi[0])) < 1e-6 * PULSE.amplitude
    e = tdsim.line_energies(st)
    assert e[0] / e.sum() < 1e-4


def test_gyrator_exact_at_unit_courant(gyrator_semi):
    # unit velocity and dt = dx make leapfrog exact on the grid
    s = tdsim.init_state(gyrator_semi, 512, [PULSE], length=24.0, courant=1.0)
    st = tdsim.run_until(s, 16.0).state
    ref, _ = tdsim.dalembert_reference([PULSE], gyrator_semi.Y, st.t, st.x_nodes)
    assert np.max(np.abs(st.phi - ref)) < 1e-12


def test_convergence_order(gyrator_semi):
    errs = [gyrator_error(gyrator_semi, M) for M in (128, 256, 512)]
    order = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(order - 2) < 0.2)


def test_energy_drift(gyrator_semi):
    s = tdsim.init_state(gyrator_semi, 512, [PULSE], length=20.0)
    e0 = tdsim.energy(s)
    res = tdsim.run(s, 10_000)
    assert abs(tdsim.energy(res.state) - e0) / e0 < 1e-6
    tr = res.energy_trace
    assert np.max(np.abs(tr - tr[0])) / tr[0] < 1e-12


def test_open_end_reflection_keeps_sign(single_line):
    rs = make({"lines": [{"length": 20.0, "c_delta": 1.0, "l_delta": 1.0}]})
    s = tdsim.init_state(rs, 1024, [tdsim.Pulse(0, 8.0, 1.0)])
    st = tdsim.run_until(s, 12.0).state
    k = int(np.argmax(np.abs(st.phi[0])))
    assert st.phi[0, k] > 0.99
    assert abs(st.x_nodes[k] - 4.0) < 0.05


@pytest.mark.parametrize("port", [0, 1, 2])
def test_circulator_routing(port):
    rs = make({"lines": unit_lines(3, "inf"),
               "nr_element": {"kind": "S", "matrix": oracles.circulator_matrix(3).tolist()}})
    assert np.allclose(rs.Y, CIRCULATOR_Y)
    s = tdsim.init_state(rs, 1024, [tdsim.Pulse(port, 8.0, 1.0)], length=30.0, far_end="absorbing")
    e0 = tdsim.energy(s)
    e = tdsim.line_energies(tdsim.run_until(s, 14.0).state)
    assert e[(port + 1) % 3] / e0 > 0.999
    assert e[port] / e0 < 1e-4


def test_absorbing_layer(gyrator_semi):
    s = tdsim.init_state(gyrator_semi, 256, [tdsim.Pulse(0, 15.0, 30 / 256 * 8, direction="right")],
                         length=30.0, far_end="absorbing")
    e0 = tdsim.energy(s)
    assert tdsim.energy(tdsim.run_until(s, 40.0).state) / e0 < 1e-4


def test_blow_up_detected(gyrator_semi):
    s = tdsim.init_state(gyrator_semi, 64, [tdsim.Pulse(0, 10.0, 1.0)], length=20.0)
    s.dt = 2.0 * s.dx  # bypass the guard to force an unstable run
    with pytest.raises(BlowUp):
        tdsim.run(s, 500)


def test_mode_projection_single_line(single_line):
    table = finite.eigenfrequencies(finite.problem_from_spec(single_line), 60.0)
    s = tdsim.init_state(single_line, 400, [])
    s.phi[0] = np.cos(math.pi * s.x_nodes)
    s.q[0] = -np.sin(math.pi * s.x_half) * math.sin(-math.pi * s.dt / 2)
    pr = tdsim.mode_energy_spectrum(s, table)
    assert pr.energies[0] / pr.field_energy > 0.999
    assert pr.energies.sum() == pytest.approx(pr.field_energy, rel=1e-3)


def test_mode_projection_zero_field(single_line):
    table = finite.eigenfrequencies(finite.problem_from_spec(single_line), 20.0)
    pr = tdsim.mode_energy_spectrum(tdsim.init_state(single_line, 128, []), table)
    assert not pr.energies.any()


def test_mode_energies_constant_for_gyrator(gyrator_finite):
    table = finite.eigenfrequencies(finite.problem_from_spec(gyrator_finite), 80.0)
    s = tdsim.init_state(gyrator_finite, 800, [tdsim.Pulse(0, 0.5, 0.08)])
    p0 = tdsim.mode_energy_spectrum(s, table)
    p1 = tdsim.mode_energy_spectrum(tdsim.run_until(s, 2.0).state, table)
    assert abs(p0.energies.sum() / p0.field_energy - 1) < 1e-4
    assert np.max(np.abs(p1.energies - p0.energies)) / p0.energies.max() < 1e-4


def test_mode_projection_geometry_mismatch(gyrator_finite, single_line):
    table = finite.eigenfrequencies(finite.problem_from_spec(single_line), 20.0)
    with pytest.raises(GeometryMismatch):
        tdsim.mode_energy_spectrum(tdsim.init_state(gyrator_finite, 64, []), table)


def test_snapshot_csv(gyrator_semi):
    s = tdsim.init_state(gyrator_semi, 32, [tdsim.Pulse(0, 10.0, 1.0)], length=20.0)
    rows = tdsim.snapshot_csv(s).strip().splitlines()
    assert rows[0] == "x,Phi_1,Phi_2,Q_1,Q_2"
    assert len(rows) == 34
