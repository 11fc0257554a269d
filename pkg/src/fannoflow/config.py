"""Run configuration: JSON parsing, validation and boundary-field entry.

A boundary field is given either as a number, as a sum of trig terms
such as ``"1e-3*cos(x1) - 2e-4*sin(2*x1)*cos(3*x2)"``, or as a table
``{"coefficients": [[i, m1, m2, value], ...]}`` in the 4-parity basis
(i = 1..4 for cos cos, sin cos, cos sin, sin sin, weighted by lambda_m).
"""
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import FannoError
from .gas import GasModel
from .spectral import DuctSpec, basis_mask, synthesize

SCHEMA = "fannoflow/1"
MODES = ("background", "supersonic", "shock", "s-condition", "solve", "residual", "sweep")
BOUNDARY_KEYS = ("E0", "A0", "s0", "u1", "u2", "p1")


class ConfigError(FannoError):
    """Malformed or incomplete run configuration."""


_FACTOR = re.compile(r"(cos|sin)\(\s*(?:(\d+)\s*\*?\s*)?x([12])\s*\)")
_NUMBER = re.compile(r"[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?")


def _parse_term(term, X1, X2):
    s = term.replace(" ", "")
    value = np.ones_like(X1)
    coef = 1.0
    m = _NUMBER.match(s)
    if m and not s.startswith(("cos", "sin")):
        coef = float(m.group(0))
        s = s[m.end():]
        if s.startswith("*"):
            s = s[1:]
            if not s:
                raise ConfigError(f"dangling '*' in boundary term {term!r}")
    while s:
        f = _FACTOR.match(s)
        if not f:
            raise ConfigError(f"cannot parse boundary term {term!r}")
        k = int(f.group(2)) if f.group(2) else 1
        x = X1 if f.group(3) == "1" else X2
        value = value * (np.cos(k * x) if f.group(1) == "cos" else np.sin(k * x))
        s = s[f.end():]
        if s.startswith("*"):
            s = s[1:]
            if not s:
                raise ConfigError(f"dangling '*' in boundary term {term!r}")
    return coef * value


def parse_trig_expression(text, spec):
    """Evaluate a sum of ``c*trig(m1*x1)*trig(m2*x2)`` terms on the cross-section."""
    X1, X2 = spec.cross_section()
    text = text.strip()
    if not text:
        raise ConfigError("empty boundary expression")
    # split on + or - that are not part of an exponent
    pieces = re.split(r"(?<![eE])([+-])", text)
    total = np.zeros_like(X1)
    sign = 1.0
    for piece in pieces:
        if piece in ("+", "-"):
            sign = sign if piece == "+" else -sign
            continue
        if not piece.strip():
            continue
        total = total + sign * _parse_term(piece, X1, X2)
        sign = 1.0
    return total


def coefficient_table_field(rows, spec):
    """Synthesize a cross-section field from rows (i, m1, m2, value)."""
    N = spec.mode_cut
    coef = np.zeros((4, N + 1, N + 1))
    mask = basis_mask(N)
    for row in rows:
        if len(row) != 4:
            raise ConfigError(f"coefficient row {row!r} must be [i, m1, m2, value]")
        i, m1, m2, value = int(row[0]), int(row[1]), int(row[2]), float(row[3])
        if not (1 <= i <= 4 and 0 <= m1 <= N and 0 <= m2 <= N):
            raise ConfigError(f"coefficient index {(i, m1, m2)} outside the mode box of mode_cut={N}")
        if not mask[i - 1, m1, m2]:
            raise ConfigError(f"basis function {(i, m1, m2)} vanishes identically")
        coef[i - 1, m1, m2] += value
    return synthesize(coef, spec)


def boundary_field(entry, spec):
    if isinstance(entry, bool):
        raise ConfigError("boundary entries must be numbers, expressions or coefficient tables")
    if isinstance(entry, (int, float)):
        return np.full((spec.n_t, spec.n_t), float(entry))
    if isinstance(entry, str):
        return parse_trig_expression(entry, spec)
    if isinstance(entry, dict) and "coefficients" in entry:
        return coefficient_table_field(entry["coefficients"], spec)
    raise ConfigError(f"unsupported boundary entry {entry!r}")


def _number(section, key, default=None, positive=False, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required field {key!r}")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field {key!r} must be a number")
    v = float(v)
    if not np.isfinite(v) or (positive and not v > 0):
        raise ConfigError(f"field {key!r} must be {'positive' if positive else 'finite'}")
    return v


@dataclass
class RunConfig:
    gas: GasModel
    length: float
    M0: float
    p_exit: float = None
    p_entry: float = None
    s0: float = 0.0
    n_steps: int = 500
    n_t: int = 32
    mode_cut: int = 8
    tol_update: float = None
    max_iters: int = 50
    contraction_window: int = 3
    threshold: float = None
    shock_position: float = None
    boundary: dict = field(default_factory=dict)
    eps_scales: list = field(default_factory=list)
    mu_values: list = field(default_factory=list)
    raw: dict = field(default_factory=dict, repr=False)

    def spec(self):
        return DuctSpec.from_steps(self.length, self.n_steps, self.n_t, self.mode_cut)

    def anchors(self):
        if self.p_exit is None and self.p_entry is None:
            return {"p_exit": 1.0} if self.M0 < 1.0 else {"p_entry": 1.0}
        return {"p_exit": self.p_exit} if self.p_exit is not None else {"p_entry": self.p_entry}

    def require(self, mode):
        """Mode-specific checks, run before any computation."""
        if mode == "shock" and self.shock_position is None:
            raise ConfigError("mode 'shock' needs shock.position")
        if mode == "sweep" and not (self.eps_scales or self.mu_values):
            raise ConfigError("mode 'sweep' needs sweep.eps or sweep.mu")


def _ints(section, key, default, minimum):
    if key not in section:
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"field {key!r} must be an integer >= {minimum}")
    return v


def config_from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    if d.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported or missing schema {d.get('schema')!r}; expected {SCHEMA!r}")
    sections = {}
    for name in ("gas", "duct", "numerics", "boundary", "shock", "sweep"):
        s = d.get(name, {})
        if not isinstance(s, dict):
            raise ConfigError(f"section {name!r} must be an object")
        sections[name] = s
    g, duct, num = sections["gas"], sections["duct"], sections["numerics"]
    try:
        gas = GasModel(
            gamma=_number(g, "gamma", 1.4),
            mu=_number(g, "mu", 0.01),
            c_v=_number(g, "c_v", 2.5),
            k0=_number(g, "k0", 1.0),
            R=_number(g, "R", 1.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig(
        gas=gas,
        length=_number(duct, "length", required=True, positive=True),
        M0=_number(duct, "M0", required=True, positive=True),
        p_exit=_number(duct, "p_exit", positive=True),
        p_entry=_number(duct, "p_entry", positive=True),
        s0=_number(duct, "s0", 0.0),
        n_steps=_ints(num, "n_steps", 500, 2),
        n_t=_ints(num, "n_t", 32, 4),
        mode_cut=_ints(num, "mode_cut", 8, 0),
        tol_update=_number(num, "tol_update", positive=True),
        max_iters=_ints(num, "max_iters", 50, 2),
        contraction_window=_ints(num, "contraction_window", 3, 1),
        threshold=_number(num, "threshold", positive=True),
        shock_position=_number(sections["shock"], "position", positive=True),
        raw=d,
    )
    if cfg.p_exit is not None and cfg.p_entry is not None:
        raise ConfigError("give at most one of duct.p_exit and duct.p_entry")
    try:
        spec = cfg.spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for key, entry in sections["boundary"].items():
        if key not in BOUNDARY_KEYS:
            raise ConfigError(f"unknown boundary field {key!r}; expected one of {BOUNDARY_KEYS}")
        cfg.boundary[key] = boundary_field(entry, spec)
    if "A0" in cfg.boundary and "s0" in cfg.boundary:
        raise ConfigError("give the inlet entropy deviation as A0 or s0, not both")
    sweep = sections["sweep"]
    for key, target in (("eps", "eps_scales"), ("mu", "mu_values")):
        vals = sweep.get(key, [])
        if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ConfigError(f"sweep.{key} must be a list of numbers")
        setattr(cfg, target, [float(v) for v in vals])
    if any(v < 0 for v in cfg.mu_values) or any(v <= 0 for v in cfg.eps_scales):
        raise ConfigError("sweep values must be positive (mu may be 0)")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(d)
