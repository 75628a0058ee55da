"""Command-line front end.

Subcommands ``spectrum``, ``quantize``, ``simulate``, ``validate`` and
``modes`` read a JSON netlist and write CSV/JSON artifacts plus a
``manifest.json`` into ``--out``. Exit status is 0 on success, 2 on invalid
input and 3 on numerical failure (including failed validation checks).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, finite, hamiltonian, nrcore, spectral, tdsim
from .errors import InvariantViolation, NumericalError, ValidationError
from .netlist import load_netlist, rescale

log = logging.getLogger("nrlines")

DEFAULT_TOLERANCES = {
    "boundary": 1e-10,
    "ortho": 1e-10,
    "gram": 1e-8,
    "t": 1e-10,
    "selfadjoint": 1e-9,
    "negative_control": 1e-3,
    "trs": 1e-12,
    "energy": 1e-6,
}


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


class Run:
    """Output directory, file registry and manifest for one invocation."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.conventions: dict = {"t_sign": 1, "junction_line_base": 1}
        self.parameters: dict = {}

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files.append(name)

    def manifest(self, status: str, exit_code: int, error: str | None = None) -> None:
        a = self.args
        src = Path(a.netlist)
        digest = hashlib.sha256(src.read_bytes()).hexdigest() if src.is_file() else None
        doc = {
            "command": a.command,
            "input": str(src),
            "input_sha256": digest,
            "parameters": self.parameters,
            "tolerances": tolerances(a),
            "conventions": self.conventions,
            "versions": {
                "nrlines": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "outputs": sorted(self.files),
            "status": status,
            "exit_code": exit_code,
        }
        if error is not None:
            doc["error"] = error
        (self.out / "manifest.json").write_text(_dump(doc))


def tolerances(args) -> dict:
    tol = dict(DEFAULT_TOLERANCES)
    for key in tol:
        val = getattr(args, f"tol_{key}", None)
        if val is not None:
            tol[key] = val
    return tol


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _grid(args) -> np.ndarray:
    """Semi-infinite frequency grid from ``--grid lo:hi:n``."""
    text = args.grid or "0.5:5:10"
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError("--grid must be lo:hi:n for semi-infinite lines")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if not (0 < lo <= hi) or n < 1:
        raise ValidationError("--grid needs 0 < lo <= hi and n >= 1")
    return np.linspace(lo, hi, n)


def _scan_resolution(args) -> float | None:
    if args.grid is None:
        return None
    try:
        v = float(args.grid)
    except ValueError:
        raise ValidationError("--grid must be a scan resolution (number) for finite lines") from None
    if v <= 0:
        raise ValidationError("scan resolution must be positive")
    return v


def _finite_problem(run: Run, rs, resolve: bool = True):
    prob = finite.problem_from_spec(rs)
    if resolve and prob.has_junction:
        prob, record = finite.resolve_closure(prob, seed=run.args.seed)
        run.conventions.update(closure_resolution=record)
    run.conventions.update(w_sign=prob.w_sign, charge_closure=prob.closure)
    return prob


# ---------------------------------------------------------------- commands

def cmd_spectrum(run: Run, spec) -> None:
    rs = rescale(spec)
    a = run.args
    if spec.semi_infinite:
        grid = _grid(a)
        basis = spectral.semi_infinite_basis(rs, grid)
        tm = spectral.telegrapher_matrix(basis)
        run.conventions.update(t_sign=tm.sign)
        doc = {
            "kind": "semi_infinite",
            "Delta": rs.delta,
            "Y": rs.Y if rs.Y is not None else np.zeros((rs.n_lines,) * 2),
            "frequencies": grid,
            "m_values": basis.m_values,
            "e_vectors": basis.e_vectors,
            "boundary_residual": spectral.max_boundary_residual(basis),
        }
        run.parameters.update(grid=grid.tolist())
        run.write("spectrum.json", _dump(doc))
        return
    prob = _finite_problem(run, rs)
    omega_max = a.omega_max or 50.0
    res = _scan_resolution(a)
    table = finite.eigenfrequencies(prob, omega_max, res)
    run.parameters.update(omega_max=omega_max, scan_resolution=table.metadata["scan_resolution"])
    run.write("spectrum.csv", finite.spectrum_csv(table))
    run.write("spectrum.json", finite.spectrum_json(table) + "\n")
    print(f"{table.n_modes} modes (with {len(table.static)} static) up to omega = {omega_max:g}")


def cmd_quantize(run: Run, spec) -> None:
    rs = rescale(spec)
    a = run.args
    K = a.trunc_K or 500
    prob = _finite_problem(run, rs)
    table = finite.lowest_modes(prob, K, _scan_resolution(a))
    model = hamiltonian.assemble_hamiltonian(table, spec, K)
    run.parameters.update(K=K)
    chi = None
    if model.couplings.size:
        chi = hamiltonian.lamb_shift(model)
        rule = finite.sum_rule(table)
        slope = finite.decay_exponent(table)
        rows = ["K,chi_partial,chi_limit"]
        marks = sorted({k for k in (10, 20, 50, 100, 200, 500, 1000, 2000) if k < K} | {K})
        for k in marks:
            rows.append(f"{k},{chi.partial[k - 1]:.17g},{chi.limit:.17g}")
        run.write("chi_partial.csv", "\n".join(rows) + "\n")
        report = {
            "chi_extrapolated": chi.extrapolated,
            "chi_partial": float(chi.partial[-1]),
            "chi_tail": chi.tail,
            "chi_limit": chi.limit,
            "chi_relative_error": chi.relative_error,
            "sum_rule_partial": float(rule["partial"][-1]),
            "sum_rule_extrapolated": rule["extrapolated"],
            "sum_rule_limit": rule["limit"],
            "coupling_decay_exponent": slope,
        }
        run.write("quantize_report.json", _dump(report))
        print(f"{'K':>6} {'chi partial':>16} {'hbar/(2 alpha)':>16}")
        for k in marks:
            print(f"{k:>6} {chi.partial[k - 1]:>16.10f} {chi.limit:>16.10f}")
        print(f"{'tail':>6} {chi.extrapolated:>16.10f} {chi.limit:>16.10f}"
              f"   rel. err {chi.relative_error:.2e}")
    run.write("hamiltonian.json", hamiltonian.hamiltonian_json(model, chi) + "\n")


def _parse_pulse(text: str) -> tdsim.Pulse:
    parts = [p.strip() for p in text.split(",")]
    if not 3 <= len(parts) <= 5:
        raise ValidationError("--pulse takes line,center,width[,amplitude[,direction]]")
    line = int(parts[0])
    if line < 1:
        raise ValidationError("pulse line numbers start at 1")
    amp = float(parts[3]) if len(parts) > 3 else 1.0
    direction = parts[4] if len(parts) > 4 else "left"
    return tdsim.Pulse(line - 1, float(parts[1]), float(parts[2]), amp, direction)


def _sim_config(a) -> dict:
    cfg = {"cells": 400, "t_end": None, "dt": None, "courant": 0.5, "far_end": "open",
           "length": None, "pulses": [], "snapshot_stride": None}
    if a.config:
        try:
            doc = json.loads(Path(a.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read simulation config: {exc}") from exc
        unknown = set(doc) - set(cfg)
        if unknown:
            raise ValidationError(f"unknown simulation config keys {sorted(unknown)}")
        cfg.update(doc)
        cfg["pulses"] = [
            tdsim.Pulse(int(p["line"]) - 1, float(p["center"]), float(p["width"]),
                        float(p.get("amplitude", 1.0)), p.get("direction", "left"))
            for p in doc.get("pulses", [])
        ]
    for key in ("cells", "t_end", "dt", "courant", "far_end", "length", "snapshot_stride"):
        val = getattr(a, key, None)
        if val is not None:
            cfg[key] = val
    if a.pulse:
        cfg["pulses"] = [_parse_pulse(p) for p in a.pulse]
    return cfg


def cmd_simulate(run: Run, spec) -> None:
    rs = rescale(spec)
    cfg = _sim_config(run.args)
    if rs.length == float("inf") and cfg["length"] is None:
        cfg["length"] = 20.0
    state = tdsim.init_state(rs, int(cfg["cells"]), cfg["pulses"], length=cfg["length"],
                             dt=cfg["dt"], courant=cfg["courant"], far_end=cfg["far_end"])
    t_end = cfg["t_end"] if cfg["t_end"] is not None else state.length
    e0 = tdsim.energy(state)
    lines0 = tdsim.line_energies(state)
    stride = cfg["snapshot_stride"]
    result = tdsim.run_until(state, t_end, snapshot_stride=stride,
                             growth_tol=tolerances(run.args)["energy"])
    final = result.state
    e1 = tdsim.energy(final)
    lines1 = tdsim.line_energies(final)
    for i, snap in enumerate(result.snapshots):
        run.write(f"snapshot_{i:04d}.csv", tdsim.snapshot_csv(snap))
    run.write("final_fields.csv", tdsim.snapshot_csv(final))
    trace = result.energy_trace
    step = max(1, trace.size // 200)
    report = {
        "cells": final.M,
        "dx": final.dx,
        "dt": final.dt,
        "steps": final.steps,
        "t_end": final.t,
        "far_end": final.far_end,
        "pulses": [p.__dict__ | {"line": p.line + 1} for p in cfg["pulses"]],
        "energy_initial": e0,
        "energy_final": e1,
        "relative_drift": abs(e1 - e0) / e0 if e0 else 0.0,
        "line_energy_initial": lines0,
        "line_energy_final": lines1,
        "line_fraction_of_initial": lines1 / e0 if e0 else np.zeros_like(lines1),
        "conserved_form_trace": {"t": result.times[::step], "value": trace[::step]},
    }
    run.parameters.update({k: v for k, v in cfg.items() if k != "pulses"})
    run.write("simulation_report.json", _dump(report))
    fr = report["line_fraction_of_initial"]
    print("line energy fractions: " + ", ".join(f"{i + 1}: {f:.6f}" for i, f in enumerate(fr)))
    print(f"relative energy drift: {report['relative_drift']:.3e}")


def _check(items: list, name: str, value: float, tol: float, expect_below: bool = True) -> None:
    ok = value < tol if expect_below else value > tol
    items.append({"name": name, "value": float(value),
                  "threshold": tol, "expect": "below" if expect_below else "above",
                  "status": "PASS" if ok else "FAIL"})


def _perturb(arr: np.ndarray, eps: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return arr + eps * rng.standard_normal(arr.shape)


def cmd_validate(run: Run, spec) -> None:
    a = run.args
    tol = tolerances(a)
    items: list = []
    nr = spec.nr_element
    if nr is not None:
        if nr.S is not None:
            _check(items, "nr_unitarity", nrcore.unitarity_error(nr.S), tol["ortho"])
        Yb = nr.Y_bar
        if Yb is not None:
            _check(items, "nr_skew", float(np.max(np.abs(Yb + Yb.T))), tol["ortho"])
            S = nrcore.admittance_to_scattering(Yb, nr.R)
            back = nrcore.scattering_to_admittance(S, nr.R)
            _check(items, "nr_roundtrip", float(np.max(np.abs(back - Yb))), tol["ortho"])
    rs = rescale(spec)
    eps = a.perturb or 0.0
    if spec.semi_infinite:
        grid = _grid(a)
        run.parameters.update(grid=grid.tolist())
        basis = spectral.semi_infinite_basis(rs, grid)
        if eps:
            basis = replace(basis, e_vectors=_perturb(basis.e_vectors, eps, a.seed))
        _check(items, "boundary_residual", spectral.max_boundary_residual(basis), tol["boundary"])
        ortho = max(spectral.algebraic_orthonormality(basis, w) for w in grid)
        _check(items, "orthonormality", ortho, tol["ortho"])
        try:
            tm = spectral.telegrapher_matrix(basis)
        except InvariantViolation as exc:
            items.append({"name": "telegrapher_matrix", "status": "FAIL", "detail": str(exc)})
        else:
            run.conventions.update(t_sign=tm.sign)
            sy = spectral.sigma_y_block(rs.n_lines)
            _check(items, "telegrapher_matrix", float(np.max(np.abs(tm.representation - tm.sign * sy))),
                   tol["t"])
            t2 = float(np.max(np.abs(tm.t @ tm.t - np.eye(tm.t.shape[0]))))
            _check(items, "t_squared_identity", t2, tol["t"])
            sq = 0.0
            for w in grid:
                for f in basis.modes(w):
                    g = spectral.telegrapher_apply(spectral.telegrapher_apply(f))
                    sq = max(sq, float(np.max(np.abs(np.concatenate([g.cos_coef, g.sin_coef])
                                                      - w**2 * np.concatenate([f.cos_coef, f.sin_coef])))) / w**2)
            _check(items, "T_squared_omega_squared", sq, tol["t"])
            model = hamiltonian.mode_space_reduction(tm.t, grid)
            _check(items, "symplectic_reduction", model.symplectic_error(), tol["t"])
            report = hamiltonian.trs_check(model, hamiltonian.trs_sigma(basis))
            reciprocal = rs.Y is None or not np.any(rs.Y)
            if reciprocal:
                _check(items, "trs_anticommutator", report.max_anticommutator, tol["trs"])
            else:
                _check(items, "trs_broken", report.max_anticommutator, 1e-6, expect_below=False)
            items[-1]["detail"] = report.as_dict()
    else:
        prob = _finite_problem(run, rs)
        omega_max = a.omega_max or 50.0
        run.parameters.update(omega_max=omega_max)
        table = finite.eigenfrequencies(prob, omega_max, _scan_resolution(a))
        if eps:
            table = replace(table, omegas=table.omegas * (1 + eps))
        res = max([finite.mode_residuals(prob, m) for _, _, m in table.all_modes()], default=0.0)
        _check(items, "mode_residuals", res, tol["boundary"])
        G = finite.gram_matrix(table, count=20)
        _check(items, "gram_identity", float(np.max(np.abs(G - np.eye(G.shape[0])))), tol["gram"])
        dual = finite.duality_residual(table)
        _check(items, "duality_first_order", dual["first_order"], tol["t"])
        _check(items, "duality_square", dual["square"], tol["t"])
        sa = finite.selfadjointness_residual(prob, seed=a.seed)
        _check(items, "selfadjointness", sa, tol["selfadjoint"])
        if prob.has_junction:
            neg = finite.selfadjointness_residual(prob, seed=a.seed, include_w=False)
            _check(items, "negative_control_dropped_w", neg, tol["negative_control"],
                   expect_below=False)
    failed = [c["name"] for c in items if c["status"] == "FAIL"]
    run.write("validation.json", _dump({"checks": items, "passed": not failed}))
    for c in items:
        print(f"{c['status']}  {c['name']}" + (f"  {c['value']:.3e}" if "value" in c else ""))
    if failed:
        raise InvariantViolation(f"failed checks: {', '.join(failed)}")


def cmd_modes(run: Run, spec) -> None:
    a = run.args
    rs = rescale(spec)
    samples = a.samples
    if spec.semi_infinite:
        grid = _grid(a)
        basis = spectral.semi_infinite_basis(rs, grid)
        x = np.linspace(0.0, a.x_max, samples)
        run.parameters.update(grid=grid.tolist(), x_max=a.x_max, samples=samples)
        run.write("modes.csv", spectral.mode_table_csv(basis, x))
        return
    prob = _finite_problem(run, rs)
    K = a.trunc_K or 20
    table = finite.lowest_modes(prob, K, _scan_resolution(a))
    x = np.linspace(0.0, prob.d, samples)
    N = prob.n_lines
    rows = [",".join(["n", "omega", "branch", "lambda", "x"] + [f"U_{i + 1}" for i in range(N)]
                     + [f"V_{i + 1}" for i in range(N)])]
    for k, m in enumerate(table.static):
        for xv, v in zip(x, m(x)):
            rows.append(",".join([f"s{k + 1}", "0.0", "s", "1", f"{xv:.17g}"]
                                 + [f"{c:.17g}" for c in v]))
    for n in range(table.n_modes):
        for br in ("u", "v"):
            vals = table.mode(n, br)(x)
            for xv, v in zip(x, vals):
                rows.append(",".join([str(n + 1), f"{table.omegas[n]:.17g}", br,
                                      str(int(table.lam[n]) + 1), f"{xv:.17g}"]
                                     + [f"{c:.17g}" for c in v]))
    run.parameters.update(K=K, samples=samples)
    run.write("modes.csv", "\n".join(rows) + "\n")


COMMANDS = {
    "spectrum": cmd_spectrum,
    "quantize": cmd_quantize,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "modes": cmd_modes,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("netlist", help="JSON netlist")
    common.add_argument("--out", default="nrlines_out", help="output directory")
    common.add_argument("--omega-max", type=_positive, help="largest frequency for finite lines")
    common.add_argument("--grid", help="lo:hi:n frequency grid (semi-infinite) "
                                       "or root-scan resolution (finite)")
    common.add_argument("--trunc-K", type=_positive_int, help="number of modes kept")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("-v", "--verbose", action="store_true")
    for key, val in DEFAULT_TOLERANCES.items():
        common.add_argument(f"--tol-{key.replace('_', '-')}", dest=f"tol_{key}", type=_positive,
                            help=f"tolerance override (default {val:g})")

    p = argparse.ArgumentParser(prog="nrlines", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nrlines {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="eigenfrequencies and coupling vectors")
    sub.add_parser("quantize", parents=[common], help="Hamiltonian coefficients and Lamb shift")
    sim = sub.add_parser("simulate", parents=[common], help="time-domain leapfrog run")
    sim.add_argument("--config", help="simulation config JSON")
    sim.add_argument("--cells", type=_positive_int)
    sim.add_argument("--t-end", type=_positive)
    sim.add_argument("--dt", type=_positive)
    sim.add_argument("--courant", type=_positive)
    sim.add_argument("--far-end", choices=("open", "absorbing"))
    sim.add_argument("--length", type=_positive, help="domain length for semi-infinite lines")
    sim.add_argument("--pulse", action="append",
                     help="line,center,width[,amplitude[,direction]] (line numbers from 1)")
    sim.add_argument("--snapshot-stride", type=_positive_int)
    val = sub.add_parser("validate", parents=[common], help="invariant suite")
    val.add_argument("--perturb", type=_positive, help="debug: perturb the basis (negative control)")
    modes = sub.add_parser("modes", parents=[common], help="sampled mode functions")
    modes.add_argument("--samples", type=_positive_int, default=101)
    modes.add_argument("--x-max", type=_positive, default=10.0,
                       help="sampling range for semi-infinite lines")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        run = Run(args)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 2
    try:
        spec = load_netlist(args.netlist)
        COMMANDS[args.command](run, spec)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        run.manifest("invalid input", 2, f"{type(exc).__name__}: {exc}")
        return 2
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        run.manifest("numerical failure", 3, f"{type(exc).__name__}: {exc}")
        return 3
    run.manifest("ok", 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
