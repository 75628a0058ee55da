"""Netlist parsing, validation and field rescaling.

A netlist is a JSON document::

    {
      "lines": [{"length": 1.0, "c_delta": 1e-10, "l_delta": 4e-7}, ...],
      "nr_element": {"kind": "S", "matrix": [[...], ...], "R": 50.0},
      "junction": {"line": 1, "C_c": 1e-14, "C_J": 5e-14, "E_J": 1e-23},
      "hbar": 1.0
    }

``length`` is a number (meters) or ``"inf"`` for a semi-infinite line. The
``matrix`` may be nested rows or a flat row-major list. ``junction.line`` is
1-based, the way lines are numbered in circuit drawings; internally
:attr:`JunctionSpec.line_index` is 0-based.

Internally all fields are rescaled, ``sqrt(c) Phi -> Phi`` and
``Q / sqrt(c) -> Q``; :func:`rescale` produces the matrices in those units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NetlistError, NoImmittance, NotSkew, NotUnitary
from .nrcore import NRElement

SEMI_INFINITE = "semi_infinite"


@dataclass(frozen=True)
class JunctionSpec:
    line_index: int
    C_c: float
    C_J: float
    E_J: float = 0.0

    @property
    def C_sigma(self) -> float:
        return self.C_c + self.C_J

    @property
    def C_series(self) -> float:
        return self.C_c * self.C_J / (self.C_c + self.C_J)


@dataclass(frozen=True)
class CircuitSpec:
    """Validated circuit: N lines sharing one length, an optional NR element at
    x = 0 and an optional junction at x = d on one line."""

    c_delta: np.ndarray
    l_delta: np.ndarray
    length: float | str
    nr_element: NRElement | None = None
    junction: JunctionSpec | None = None
    hbar: float = 1.0

    @property
    def n_lines(self) -> int:
        return int(self.c_delta.size)

    @property
    def semi_infinite(self) -> bool:
        return self.length == SEMI_INFINITE

    @property
    def delta(self) -> np.ndarray:
        """Diagonal of the velocity matrix c^-1/2 l^-1 c^-1/2 = 1/(l c)."""
        return 1.0 / (self.l_delta * self.c_delta)

    @property
    def z0(self) -> np.ndarray:
        """Characteristic impedance per line, sqrt(l/c)."""
        return np.sqrt(self.l_delta / self.c_delta)

    @property
    def alpha_s(self) -> float | None:
        """Boundary parameter C_c C_J / [c (C_c + C_J)] that removes the
        mode-mode terms, using the junction line's capacitance."""
        if self.junction is None:
            return None
        c = self.c_delta[self.junction.line_index]
        return self.junction.C_series / c

    @property
    def xi(self) -> float:
        if self.junction is None:
            return 0.0
        c = self.c_delta[self.junction.line_index]
        return self.junction.C_c / (self.junction.C_sigma * math.sqrt(c))


@dataclass(frozen=True)
class RescaledSpec:
    """Circuit data in rescaled field units.

    ``Y`` and ``Z`` are ``c^-1/2 Ybar c^-1/2`` and ``c^1/2 Zbar c^1/2``;
    either may be ``None`` when that presentation does not exist.
    ``scale`` holds sqrt(c) per line for mapping results back.
    """

    spec: CircuitSpec
    delta: np.ndarray
    Y: np.ndarray | None
    Z: np.ndarray | None
    scale: np.ndarray
    alpha: float | None
    xi: float
    hbar: float
    length: float
    n_vector: np.ndarray | None = field(default=None)

    @property
    def n_lines(self) -> int:
        return int(self.delta.size)

    @property
    def has_nr(self) -> bool:
        return self.spec.nr_element is not None


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NetlistError("schema", f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise NetlistError("schema", "number must be finite", path)
    return float(value)


def _positive(value, path: str) -> float:
    x = _num(value, path)
    if x <= 0:
        raise NetlistError("physical", f"must be positive, got {x!r}", path)
    return x


def _matrix(raw, n: int, path: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise NetlistError("schema", "matrix must be a non-empty array", path)
    if all(isinstance(r, list) for r in raw):
        rows = raw
    else:
        side = math.isqrt(len(raw))
        if side * side != len(raw):
            raise NetlistError("dimension", f"flat matrix of length {len(raw)} is not square", path)
        rows = [raw[i * side : (i + 1) * side] for i in range(side)]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise NetlistError("dimension", f"matrix must be {n}x{n} to match the number of lines", path)
    out = np.empty((n, n), dtype=complex)
    for i, row in enumerate(rows):
        for j, x in enumerate(row):
            if isinstance(x, dict) and set(x) <= {"re", "im"}:
                out[i, j] = complex(_num(x.get("re", 0.0), path), _num(x.get("im", 0.0), path))
            else:
                out[i, j] = _num(x, f"{path}[{i}][{j}]")
    if np.allclose(out.imag, 0):
        return out.real
    return out


def parse_netlist(text: str) -> CircuitSpec:
    """Parse and validate a JSON netlist document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetlistError("schema", f"invalid JSON: {exc}") from exc
    return spec_from_dict(doc)


def load_netlist(path: str | Path) -> CircuitSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise NetlistError("io", f"cannot read netlist: {exc}", str(path)) from exc
    return parse_netlist(text)


def spec_from_dict(doc) -> CircuitSpec:
    if not isinstance(doc, dict):
        raise NetlistError("schema", "top level must be an object")
    unknown = set(doc) - {"lines", "nr_element", "junction", "hbar", "name", "description"}
    if unknown:
        raise NetlistError("schema", f"unknown keys {sorted(unknown)}")
    lines = doc.get("lines")
    if not isinstance(lines, list) or not lines:
        raise NetlistError("schema", "'lines' must be a non-empty array", "lines")

    c_delta, l_delta, lengths = [], [], []
    for i, line in enumerate(lines):
        p = f"lines[{i}]"
        if not isinstance(line, dict):
            raise NetlistError("schema", "line entry must be an object", p)
        for key in ("length", "c_delta", "l_delta"):
            if key not in line:
                raise NetlistError("schema", f"missing '{key}'", p)
        extra = set(line) - {"length", "c_delta", "l_delta"}
        if extra:
            raise NetlistError("schema", f"unknown keys {sorted(extra)}", p)
        c_delta.append(_positive(line["c_delta"], f"{p}.c_delta"))
        l_delta.append(_positive(line["l_delta"], f"{p}.l_delta"))
        length = line["length"]
        if isinstance(length, str):
            if length.lower() not in ("inf", "infinity", SEMI_INFINITE):
                raise NetlistError("schema", f"length string must be 'inf', got {length!r}", p)
            lengths.append(SEMI_INFINITE)
        else:
            lengths.append(_positive(length, f"{p}.length"))

    if any(x == SEMI_INFINITE for x in lengths) and any(x != SEMI_INFINITE for x in lengths):
        raise NetlistError("physical", "lines mix finite and semi-infinite lengths", "lines")
    if lengths[0] != SEMI_INFINITE and any(x != lengths[0] for x in lengths):
        raise NetlistError(
            "physical", "per-line distinct lengths are reserved and not supported", "lines"
        )
    n = len(lines)

    nr = None
    raw_nr = doc.get("nr_element")
    if raw_nr is not None:
        if not isinstance(raw_nr, dict):
            raise NetlistError("schema", "nr_element must be an object", "nr_element")
        kind = raw_nr.get("kind")
        if kind not in ("S", "Y", "Z"):
            raise NetlistError("schema", "kind must be one of 'S', 'Y', 'Z'", "nr_element.kind")
        if "matrix" not in raw_nr:
            raise NetlistError("schema", "missing 'matrix'", "nr_element")
        M = _matrix(raw_nr["matrix"], n, "nr_element.matrix")
        R = _positive(raw_nr.get("R", 1.0), "nr_element.R")
        try:
            if kind == "S":
                nr = NRElement(S=M, R=R)
            elif kind == "Y":
                nr = NRElement(Y_bar=np.real(M), R=R)
            else:
                nr = NRElement(Z_bar=np.real(M), R=R)
        except (NotUnitary, NotSkew) as exc:
            raise NetlistError("physical", str(exc), "nr_element.matrix") from exc
        if kind != "S" and np.iscomplexobj(M):
            raise NetlistError("physical", "immittance matrices must be real", "nr_element.matrix")

    junction = None
    raw_j = doc.get("junction")
    if raw_j is not None:
        if not isinstance(raw_j, dict):
            raise NetlistError("schema", "junction must be an object", "junction")
        for key in ("line", "C_c", "C_J"):
            if key not in raw_j:
                raise NetlistError("schema", f"missing '{key}'", "junction")
        line_no = raw_j["line"]
        if isinstance(line_no, bool) or not isinstance(line_no, int):
            raise NetlistError("schema", "junction.line must be an integer", "junction.line")
        if not 1 <= line_no <= n:
            raise NetlistError("dimension", f"junction.line must be in 1..{n}", "junction.line")
        E_J = _num(raw_j.get("E_J", 0.0), "junction.E_J")
        if E_J < 0:
            raise NetlistError("physical", "E_J must be non-negative", "junction.E_J")
        junction = JunctionSpec(
            line_index=line_no - 1,
            C_c=_positive(raw_j["C_c"], "junction.C_c"),
            C_J=_positive(raw_j["C_J"], "junction.C_J"),
            E_J=E_J,
        )
        if lengths[0] == SEMI_INFINITE:
            raise NetlistError("physical", "a junction requires finite lines", "junction")

    hbar = _positive(doc.get("hbar", 1.0), "hbar")
    return CircuitSpec(
        c_delta=np.asarray(c_delta),
        l_delta=np.asarray(l_delta),
        length=lengths[0],
        nr_element=nr,
        junction=junction,
        hbar=hbar,
    )


def spec_to_dict(spec: CircuitSpec) -> dict:
    """Inverse of :func:`spec_from_dict` (NR element written in its first
    available presentation)."""
    length = "inf" if spec.semi_infinite else float(spec.length)
    doc: dict = {
        "lines": [
            {"length": length, "c_delta": float(c), "l_delta": float(l)}
            for c, l in zip(spec.c_delta, spec.l_delta)
        ],
        "hbar": spec.hbar,
    }
    nr = spec.nr_element
    if nr is not None:
        for kind, M in (("S", nr.S), ("Y", nr.Y_bar), ("Z", nr.Z_bar)):
            if M is not None:
                doc["nr_element"] = {"kind": kind, "matrix": np.real(M).tolist(), "R": nr.R}
                break
    if spec.junction is not None:
        j = spec.junction
        doc["junction"] = {"line": j.line_index + 1, "C_c": j.C_c, "C_J": j.C_J, "E_J": j.E_J}
    return doc


def rescale_admittance(Y_bar: np.ndarray, c_delta: np.ndarray) -> np.ndarray:
    s = 1.0 / np.sqrt(c_delta)
    return s[:, None] * Y_bar * s[None, :]


def unscale_admittance(Y: np.ndarray, c_delta: np.ndarray) -> np.ndarray:
    s = np.sqrt(c_delta)
    return s[:, None] * Y * s[None, :]


def rescale_impedance(Z_bar: np.ndarray, c_delta: np.ndarray) -> np.ndarray:
    return unscale_admittance(Z_bar, c_delta)


def unscale_impedance(Z: np.ndarray, c_delta: np.ndarray) -> np.ndarray:
    return rescale_admittance(Z, c_delta)


def rescale(spec: CircuitSpec) -> RescaledSpec:
    """Express the circuit in rescaled field units."""
    c = spec.c_delta
    Y = Z = None
    nr = spec.nr_element
    if nr is not None:
        try:
            Y = rescale_admittance(nr.admittance(), c)
        except NoImmittance:
            Y = None
        try:
            Z = rescale_impedance(nr.impedance(), c)
        except Exception:
            Z = None
    n_vec = None
    if spec.junction is not None:
        n_vec = np.zeros(spec.n_lines)
        n_vec[spec.junction.line_index] = 1.0
    return RescaledSpec(
        spec=spec,
        delta=spec.delta,
        Y=Y,
        Z=Z,
        scale=np.sqrt(c),
        alpha=spec.alpha_s,
        xi=spec.xi,
        hbar=spec.hbar,
        length=math.inf if spec.semi_infinite else float(spec.length),
        n_vector=n_vec,
    )
