"""Run configuration: a small key=value format plus object builders.

A config file holds one `key = value` pair per line; `#` starts a comment and
`dirichlet` / `neumann` may repeat.  Values follow per-key grammars:

    domain    = rect X0 X1 Y0 Y1
              | lshape X0 X1 Y0 Y1 NX NY       (notch corner at (NX, NY))
    mesh      = generate N SEED [LLOYD]
              | load PATH
    dirichlet = x=0            (boundary faces with midpoint on the line)
    neumann   = x=10 in 0 4    (optionally restricted to a span)
    traction  = [EXPR, EXPR]   expressions in x, y; I[a,b](y) is the
                               indicator of a <= y <= b
    phi0      = uniform V
              | hole CX CY R   (+1 outside the circle, -1 inside)

Remaining keys are scalars (E0, nu0, gamma, alpha, tau, dt, kstart, kcut,
kmax, ctol, sigma0_mu, sigma0_lambda, sigma0_tau, p1, p2, dump_every,
output_dir).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import sympy as sp

from .dg_space import DGField, l2_project
from .errors import ConfigError
from .polymesh import (
    BoundaryPredicate,
    LShapeDomain,
    PolyMesh,
    RectDomain,
    classify_boundary,
    generate_voronoi_mesh,
    load_mesh,
)

_FLOAT_KEYS = (
    "E0",
    "nu0",
    "gamma",
    "alpha",
    "tau",
    "dt",
    "ctol",
    "sigma0_mu",
    "sigma0_lambda",
    "sigma0_tau",
    "p1",
    "p2",
)
_INT_KEYS = ("kstart", "kcut", "kmax", "dump_every")
_REQUIRED = ("domain", "mesh", "traction", "E0", "nu0", "alpha", "tau", "dt")


@dataclass
class OptConfig:
    """All parameters of one optimization run."""

    domain: tuple
    mesh: tuple
    traction: str
    dirichlet: tuple = ()
    neumann: tuple = ()
    phi0: tuple = ("uniform", 1.0)
    E0: float = 1.0
    nu0: float = 0.3
    gamma: float = 1e-3
    alpha: float = 0.5
    tau: float = 1.0
    dt: float = 0.05
    kstart: int = 0
    kcut: int = 1
    kmax: int = 300
    ctol: float = 1e-4
    sigma0_mu: float = 10.0
    sigma0_lambda: float = 10.0
    sigma0_tau: float = 10.0
    p1: float = 4.0
    p2: float = -0.02
    output_dir: str = "out"
    dump_every: int = 0

    def validated(self) -> "OptConfig":
        """Range-check every numeric field; raises ConfigError naming the key."""
        checks = (
            ("E0", self.E0 > 0.0, "must be positive"),
            ("nu0", 0.0 < self.nu0 < 0.5, "must lie in (0, 0.5)"),
            ("gamma", 0.0 < self.gamma < 1.0, "must lie in (0, 1)"),
            ("alpha", 0.0 < self.alpha < 1.0, "must lie in (0, 1)"),
            ("tau", self.tau > 0.0, "must be positive"),
            ("dt", self.dt > 0.0, "must be positive"),
            ("ctol", self.ctol > 0.0, "must be positive"),
            ("kmax", self.kmax >= 1, "must be at least 1"),
            ("kcut", self.kcut >= 1, "must be at least 1"),
            ("kstart", self.kstart >= 0, "must be nonnegative"),
            ("sigma0_mu", self.sigma0_mu > 0.0, "must be positive"),
            ("sigma0_lambda", self.sigma0_lambda > 0.0, "must be positive"),
            ("sigma0_tau", self.sigma0_tau > 0.0, "must be positive"),
            ("dump_every", self.dump_every >= 0, "must be nonnegative"),
        )
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(msg, key=key)
        if self.mesh[0] == "generate" and self.mesh[1] < 1:
            raise ConfigError("element count must be at least 1", key="mesh")
        build_traction(self)  # surfaces expression errors early
        return self


def _parse_domain(value: str) -> tuple:
    t = value.split()
    if t and t[0] == "rect" and len(t) == 5:
        return ("rect",) + tuple(float(v) for v in t[1:])
    if t and t[0] == "lshape" and len(t) == 7:
        return ("lshape",) + tuple(float(v) for v in t[1:])
    raise ConfigError(f"bad domain spec {value!r}", key="domain")


def _parse_mesh(value: str) -> tuple:
    t = value.split()
    if t and t[0] == "generate" and len(t) in (3, 4):
        n, seed = int(t[1]), int(t[2])
        lloyd = int(t[3]) if len(t) == 4 else 100
        return ("generate", n, seed, lloyd)
    if t and t[0] == "load" and len(t) == 2:
        return ("load", t[1])
    raise ConfigError(f"bad mesh spec {value!r}", key="mesh")


def _parse_predicate(value: str, key: str) -> tuple:
    m = re.fullmatch(r"\s*([xy])\s*=\s*(\S+)(?:\s+in\s+(\S+)\s+(\S+))?\s*", value)
    if not m:
        raise ConfigError(f"bad boundary predicate {value!r}", key=key)
    axis, v = m.group(1), float(m.group(2))
    span = (float(m.group(3)), float(m.group(4))) if m.group(3) else None
    return (axis, v, span)


def _parse_phi0(value: str) -> tuple:
    t = value.split()
    if t and t[0] == "uniform" and len(t) == 2:
        return ("uniform", float(t[1]))
    if t and t[0] == "hole" and len(t) == 4:
        return ("hole", float(t[1]), float(t[2]), float(t[3]))
    raise ConfigError(f"bad phi0 spec {value!r}", key="phi0")


def config_from_text(text: str) -> OptConfig:
    data: dict = {"dirichlet": [], "neumann": []}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "domain":
            data["domain"] = _parse_domain(value)
        elif key == "mesh":
            data["mesh"] = _parse_mesh(value)
        elif key in ("dirichlet", "neumann"):
            data[key].append(_parse_predicate(value, key))
        elif key == "phi0":
            data["phi0"] = _parse_phi0(value)
        elif key in ("traction", "output_dir"):
            data[key] = value
        elif key in _FLOAT_KEYS:
            try:
                data[key] = float(value)
            except ValueError:
                raise ConfigError(f"not a number: {value!r}", key=key) from None
        elif key in _INT_KEYS:
            try:
                data[key] = int(value)
            except ValueError:
                raise ConfigError(f"not an integer: {value!r}", key=key) from None
        else:
            raise ConfigError(f"unknown key {key!r}", key=key)
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError("required key missing", key=key)
    data["dirichlet"] = tuple(data["dirichlet"])
    data["neumann"] = tuple(data["neumann"])
    return OptConfig(**data).validated()


def parse_config(path) -> OptConfig:
    with open(path) as fh:
        return config_from_text(fh.read())


def config_to_text(cfg: OptConfig) -> str:
    """Serialize a config in the same key=value grammar parse_config reads."""
    lines = []
    lines.append("domain = " + " ".join(str(v) for v in cfg.domain))
    lines.append("mesh = " + " ".join(str(v) for v in cfg.mesh))
    for key in ("dirichlet", "neumann"):
        for axis, v, span in getattr(cfg, key):
            s = f"{key} = {axis}={v!r}"
            if span is not None:
                s += f" in {span[0]!r} {span[1]!r}"
            lines.append(s)
    lines.append(f"traction = {cfg.traction}")
    lines.append("phi0 = " + " ".join(str(v) for v in cfg.phi0))
    for key in _FLOAT_KEYS:
        lines.append(f"{key} = {getattr(cfg, key)!r}")
    for key in _INT_KEYS:
        lines.append(f"{key} = {getattr(cfg, key)}")
    lines.append(f"output_dir = {cfg.output_dir}")
    return "\n".join(lines) + "\n"


# -- object builders ---------------------------------------------------------


def build_domain(cfg: OptConfig):
    if cfg.domain[0] == "rect":
        return RectDomain(*cfg.domain[1:])
    return LShapeDomain(*cfg.domain[1:])


def build_predicates(cfg: OptConfig) -> list:
    preds = []
    for marker, key in (("D", "dirichlet"), ("N", "neumann")):
        for axis, v, span in getattr(cfg, key):
            preds.append(BoundaryPredicate(marker, axis, v, span))
    return preds


def build_mesh(cfg: OptConfig) -> PolyMesh:
    """Generate or load the level-set mesh and classify its boundary."""
    if cfg.mesh[0] == "generate":
        _, n, seed, lloyd = cfg.mesh
        mesh = generate_voronoi_mesh(
            build_domain(cfg), n, lloyd_iters=lloyd, rng_seed=seed
        )
    else:
        mesh = load_mesh(cfg.mesh[1])
    preds = build_predicates(cfg)
    if preds:
        mesh = classify_boundary(mesh, preds)
    return mesh


_IND_RE = re.compile(r"I\[([^,\]]+),([^,\]]+)\]\(\s*([xy])\s*\)")


def _split_components(s: str) -> list:
    """Split on commas that are not nested inside brackets."""
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch in "[(":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def build_traction(cfg: OptConfig):
    return traction_from_string(cfg.traction)


def traction_from_string(expr: str):
    """Compile the traction expression into pts(N, 2) -> (N, 2)."""
    spec = expr.strip()
    if not (spec.startswith("[") and spec.endswith("]")):
        raise ConfigError("traction must be of the form [gx, gy]", key="traction")
    parts = _split_components(spec[1:-1])
    if len(parts) != 2:
        raise ConfigError("traction needs exactly two components", key="traction")
    x, y = sp.symbols("x y")
    ind = sp.Function("Ind")
    comps = []
    for part in parts:
        expr_text = _IND_RE.sub(r"Ind(\3, (\1), (\2))", part.strip())
        try:
            expr = sp.sympify(expr_text, locals={"x": x, "y": y, "Ind": ind})
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigError(
                f"cannot parse component {part.strip()!r}: {exc}", key="traction"
            ) from None
        comps.append(expr)

    def indicator(v, a, b):
        return ((v >= a) & (v <= b)).astype(float)

    fns = [
        sp.lambdify((x, y), c, modules=[{"Ind": indicator}, "numpy"]) for c in comps
    ]

    def traction(pts):
        pts = np.asarray(pts, dtype=float)
        out = np.empty((len(pts), 2))
        for i, fn in enumerate(fns):
            out[:, i] = np.broadcast_to(fn(pts[:, 0], pts[:, 1]), (len(pts),))
        return out

    traction(np.zeros((2, 2)))  # fail fast on malformed expressions
    return traction


def build_phi0(cfg: OptConfig, mesh: PolyMesh) -> DGField:
    if cfg.phi0[0] == "uniform":
        f = DGField.zeros(mesh, ncomp=1)
        f.coeffs[:, 0, 0] = cfg.phi0[1]
        return f
    _, cx, cy, r = cfg.phi0
    return l2_project(
        lambda p: np.where(np.hypot(p[:, 0] - cx, p[:, 1] - cy) < r, -1.0, 1.0)[:, None],
        mesh,
        ncomp=1,
    )
