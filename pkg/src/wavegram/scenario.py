"""Scenario files: YAML documents validated against a JSON schema.

Example::

    manifold: {kind: torus, dims: 1, periods: [6.283185307179586]}
    system: {N: 1, K: 1, order: first}
    omega: {center: [0.0], r_in: 0.3927, r_out: 0.7854}
    symbols:
      d0: [[omega]]
    run: {T: 6.0, T_max: 6.283185307179586, n_x: 64, n_dir: 2, n_steps: 512}

Scalar field grammar (any matrix entry, ``cascade.alpha`` / ``cascade.beta``):

* a number, or ``{const: x}`` / ``{const: [re, im]}``
* ``{trig: [[k1, (k2,) re, im], ...]}`` on tori
* ``{poly: [[e1, e2, e3, re, im], ...]}`` on the sphere
* ``{bump: {center: [...], r_in: r, r_out: R}}`` or the string ``omega``
* optional ``time: [[w, re, im], ...]`` and ``scale: x`` alongside any mapping
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import jsonschema
import yaml

from .errors import BadRadii, BadScenario, DimensionMismatch, NotSubdiagonal, NotSupported
from .phase_flow import ManifoldModel
from .symbols import (
    AmbientPoly,
    Bump,
    Constant,
    MatrixSymbol,
    ScalarField,
    TimeTrig,
    TrigPoly,
    ZeroOrderCoupling,
    bump_indicator,
)

_NUM = {"type": "number"}
_FIELD = {
    "oneOf": [
        _NUM,
        {"type": "string", "enum": ["omega"]},
        {
            "type": "object",
            "properties": {
                "const": {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]},
                "trig": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 3}},
                "poly": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 5, "maxItems": 5}},
                "bump": {
                    "type": "object",
                    "properties": {
                        "center": {"type": "array", "items": _NUM},
                        "r_in": _NUM,
                        "r_out": _NUM,
                    },
                    "required": ["center", "r_in", "r_out"],
                    "additionalProperties": False,
                },
                "omega": {"type": "boolean"},
                "xi": {},
                "time": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}},
                "scale": {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]},
            },
            "additionalProperties": False,
        },
    ]
}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _FIELD}}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "properties": {
        "manifold": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["torus", "sphere"]},
                "dims": {"type": "integer"},
                "periods": {"type": "array", "items": _NUM},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "system": {
            "type": "object",
            "properties": {"N": _POS_INT, "K": _POS_INT, "order": {"enum": ["first", "zero"]}},
            "required": ["N", "K", "order"],
            "additionalProperties": False,
        },
        "symbols": {
            "type": "object",
            "properties": {
                "a0": _MATRIX,
                "a1": _MATRIX,
                "d0": _MATRIX,
                "d1": _MATRIX,
                "A": _MATRIX,
                "B": _MATRIX,
                "block_sizes": {"type": "array", "items": _POS_INT},
            },
            "additionalProperties": False,
        },
        "omega": {
            "type": "object",
            "properties": {"center": {"type": "array", "items": _NUM}, "r_in": _NUM, "r_out": _NUM},
            "required": ["center", "r_in", "r_out"],
            "additionalProperties": False,
        },
        "cascade": {
            "type": "object",
            "properties": {"alpha": _FIELD, "beta": _FIELD},
            "required": ["alpha", "beta"],
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "properties": {
                "T": _NUM,
                "T_max": _NUM,
                "n_x": _POS_INT,
                "n_dir": _POS_INT,
                "n_steps": _POS_INT,
                "tol": _NUM,
                "seed": {"type": "integer"},
                "validate": {
                    "type": "object",
                    "properties": {
                        "k": {"type": "array", "items": _NUM},
                        "dt": _NUM,
                        "M": _POS_INT,
                        "ucp_M": _POS_INT,
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
    },
    "required": ["manifold", "system", "symbols"],
    "additionalProperties": False,
}

RUN_DEFAULTS = {"n_x": 32, "n_dir": 2, "n_steps": 512, "tol": 1e-3, "seed": 0}


@dataclass
class Scenario:
    """A parsed scenario; ``document`` keeps the validated source mapping."""

    document: dict
    manifold: ManifoldModel
    N: int
    K: int
    order: str
    coupling: Optional[MatrixSymbol] = None
    observation: Optional[MatrixSymbol] = None
    order_zero: Optional[ZeroOrderCoupling] = None
    omega: Optional[ScalarField] = None
    alpha: Optional[ScalarField] = None
    beta: Optional[ScalarField] = None
    run: dict = field(default_factory=dict)
    sha256: str = ""

    def to_dict(self) -> dict:
        return to_dict(self)

    def observability(self, threads: int = 1):
        from .observability import ObservabilityScenario

        T_max = float(self.run.get("T_max", self.run.get("T", 2 * math.pi)))
        return ObservabilityScenario(
            self.manifold, self.N, self.K, self.coupling, self.observation, self.order_zero,
            T_max=T_max, n_x=int(self.run["n_x"]), n_dir=int(self.run["n_dir"]),
            n_steps=int(self.run["n_steps"]), threads=threads,
        )


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def _manifold(doc: dict) -> ManifoldModel:
    kind = doc["kind"]
    if kind == "sphere":
        if doc.get("periods"):
            raise BadScenario("the sphere takes no periods")
        return ManifoldModel("sphere")
    dims = int(doc.get("dims", len(doc.get("periods", [])) or 1))
    periods = doc.get("periods", [2 * math.pi] * dims)
    if len(periods) != dims:
        raise BadScenario(f"torus of dimension {dims} needs {dims} periods")
    try:
        return ManifoldModel("torus", tuple(float(p) for p in periods))
    except ValueError as exc:
        raise BadScenario(str(exc)) from exc


def parse_field(spec: Any, m: ManifoldModel, omega: Optional[ScalarField]) -> ScalarField:
    """Build a :class:`ScalarField` from the scenario grammar."""
    if isinstance(spec, bool):
        raise BadScenario("boolean is not a field")
    if isinstance(spec, (int, float)):
        return ScalarField(Constant(complex(float(spec))))
    if spec == "omega":
        if omega is None:
            raise BadScenario("field refers to omega but no omega section is given")
        return omega
    if not isinstance(spec, dict):
        raise BadScenario(f"cannot parse field {spec!r}")
    if "xi" in spec:
        raise NotSupported("direction-dependent symbols are not supported")
    kinds = [k for k in ("const", "trig", "poly", "bump", "omega") if k in spec]
    if len(kinds) != 1:
        raise BadScenario(f"field needs exactly one of const/trig/poly/bump/omega, got {sorted(spec)}")
    kind = kinds[0]
    if kind == "const":
        spatial = Constant(_complex(spec["const"]))
    elif kind == "trig":
        if m.kind != "torus":
            raise BadScenario("trig fields need a torus")
        terms = []
        for row in spec["trig"]:
            if len(row) != m.dim + 2:
                raise BadScenario(f"trig term {row} needs {m.dim} frequencies plus re, im")
            ks = row[: m.dim]
            if any(float(v) != int(v) for v in ks):
                raise BadScenario(f"trig frequencies must be integers, got {ks}")
            terms.append((tuple(int(v) for v in ks), complex(row[-2], row[-1])))
        spatial = TrigPoly(tuple(terms))
    elif kind == "poly":
        if m.kind != "sphere":
            raise BadScenario("poly fields need the sphere")
        spatial = AmbientPoly(tuple((tuple(int(v) for v in r[:3]), complex(r[3], r[4])) for r in spec["poly"]))
    elif kind == "omega":
        if omega is None:
            raise BadScenario("field refers to omega but no omega section is given")
        spatial = omega.spatial
    else:
        b = spec["bump"]
        spatial = _bump(b, m).spatial
    tf = None
    if "time" in spec:
        tf = TimeTrig(tuple((float(w), complex(re, im)) for w, re, im in spec["time"]))
    return ScalarField(spatial, tf, _complex(spec.get("scale", 1.0)))


def _bump(b: dict, m: ManifoldModel) -> ScalarField:
    center = [float(v) for v in b["center"]]
    if len(center) != m.coord_dim:
        raise BadScenario(f"bump center needs {m.coord_dim} coordinates")
    try:
        return bump_indicator(center, float(b["r_in"]), float(b["r_out"]), m)
    except BadRadii as exc:
        raise BadScenario(str(exc)) from exc


def _matrix(rows, n_rows: int, n_cols: int, m, omega, name: str):
    if rows is None:
        return None
    if len(rows) != n_rows or any(len(r) != n_cols for r in rows):
        raise BadScenario(f"{name} must be a {n_rows}x{n_cols} table")
    return tuple(tuple(parse_field(e, m, omega) for e in r) for r in rows)


def from_dict(doc: dict, sha256: str = "") -> Scenario:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise BadScenario(f"schema: {exc.message} at {list(exc.absolute_path)}") from exc
    try:
        return _build(doc, sha256)
    except (NotSupported, DimensionMismatch, NotSubdiagonal, ValueError) as exc:
        if isinstance(exc, BadScenario):
            raise
        raise BadScenario(str(exc)) from exc


def _build(doc: dict, sha256: str) -> Scenario:
    m = _manifold(doc["manifold"])
    sysd = doc["system"]
    N, K, order = int(sysd["N"]), int(sysd["K"]), sysd["order"]
    omega = _bump(doc["omega"], m) if "omega" in doc else None
    sym = doc["symbols"]
    sc = Scenario(doc, m, N, K, order, omega=omega, sha256=sha256)
    if order == "first":
        if any(k in sym for k in ("A", "B", "block_sizes")):
            raise BadScenario("first-order scenarios take a0, a1, d0, d1")

        def build(o0, o1, rows, cols):
            t0 = _matrix(sym.get(o0), rows, cols, m, omega, o0)
            t1 = _matrix(sym.get(o1), rows, cols, m, omega, o1)
            return MatrixSymbol(rows, cols, t0, t1)

        sc.coupling = build("a0", "a1", N, N)
        sc.observation = build("d0", "d1", K, N)
    else:
        if any(k in sym for k in ("a0", "a1", "d0", "d1")):
            raise BadScenario("zero-order scenarios take A, B, block_sizes")
        if "A" not in sym or "B" not in sym:
            raise BadScenario("zero-order scenarios need A and B")
        A = _matrix(sym["A"], N, N, m, omega, "A")
        B = _matrix(sym["B"], N, K, m, omega, "B")
        blocks = tuple(sym.get("block_sizes", [N]))
        z = ZeroOrderCoupling(A, B, blocks)
        z.check_structure()
        sc.order_zero = z
    if "cascade" in doc:
        sc.alpha = parse_field(doc["cascade"]["alpha"], m, omega)
        sc.beta = parse_field(doc["cascade"]["beta"], m, omega)
        if not (sc.alpha.is_real and sc.beta.is_real):
            raise BadScenario("cascade weights must be real-valued")
    run = dict(RUN_DEFAULTS)
    run.update(doc.get("run", {}))
    if "T" in run and not run["T"] > 0:
        raise BadScenario("run.T must be positive")
    sc.run = run
    return sc


def load(path: str) -> Scenario:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise BadScenario(f"cannot read scenario: {exc}") from exc
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise BadScenario(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise BadScenario("scenario must be a mapping")
    return from_dict(doc, hashlib.sha256(raw).hexdigest())


# ---------------------------------------------------------------- serialisation


def _num(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def field_to_spec(f: ScalarField, omega: Optional[ScalarField] = None) -> Any:
    if omega is not None and f == omega:
        return "omega"
    s = f.spatial
    if isinstance(s, Constant) and f.time_factor is None and f.scale == 1:
        z = complex(s.value)
        return z.real if z.imag == 0 else {"const": [z.real, z.imag]}
    out: dict = {}
    if isinstance(s, Constant):
        out["const"] = _num(s.value)
    elif isinstance(s, TrigPoly):
        out["trig"] = [list(k) + [complex(c).real, complex(c).imag] for k, c in s.terms]
    elif isinstance(s, AmbientPoly):
        out["poly"] = [list(e) + [complex(c).real, complex(c).imag] for e, c in s.terms]
    elif isinstance(s, Bump):
        if omega is not None and s == omega.spatial:
            out["omega"] = True
        else:
            out["bump"] = {"center": list(s.center), "r_in": s.r_in, "r_out": s.r_out}
    if f.time_factor is not None:
        out["time"] = [[w, complex(c).real, complex(c).imag] for w, c in f.time_factor.terms]
    if f.scale != 1:
        out["scale"] = _num(f.scale)
    return out


def _table(entries, omega) -> Optional[list]:
    if entries is None:
        return None
    return [[field_to_spec(f, omega) for f in row] for row in entries]


def to_dict(sc: Scenario) -> dict:
    """Serialise back to the scenario grammar (an equivalent, not byte-identical, document)."""
    m = sc.manifold
    doc: dict = {"manifold": {"kind": m.kind}}
    if m.kind == "torus":
        doc["manifold"].update(dims=m.dim, periods=list(m.periods))
    doc["system"] = {"N": sc.N, "K": sc.K, "order": sc.order}
    sym: dict = {}
    if sc.order == "first":
        for name, table in (("a0", sc.coupling.order0), ("a1", sc.coupling.order1),
                            ("d0", sc.observation.order0), ("d1", sc.observation.order1)):
            t = _table(table, sc.omega)
            if t is not None:
                sym[name] = t
    else:
        z = sc.order_zero
        sym["A"] = _table(z.A_field, sc.omega)
        sym["B"] = _table(z.B_field, sc.omega)
        sym["block_sizes"] = list(z.block_sizes)
    doc["symbols"] = sym
    if sc.omega is not None:
        b = sc.omega.spatial
        doc["omega"] = {"center": list(b.center), "r_in": b.r_in, "r_out": b.r_out}
    if sc.alpha is not None:
        doc["cascade"] = {"alpha": field_to_spec(sc.alpha, sc.omega), "beta": field_to_spec(sc.beta, sc.omega)}
    doc["run"] = dict(sc.run)
    return doc


def dump(sc: Scenario) -> str:
    return yaml.safe_dump(to_dict(sc), sort_keys=True)
