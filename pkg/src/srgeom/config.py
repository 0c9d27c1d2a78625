"""Loading manifolds and hypersurfaces from config files.

Manifold files (JSON or TOML) describe a chart::

    dim = 3
    rank = 2
    vars = ["x", "y", "t"]
    frame = [["1", "0", "2*y"], ["0", "1", "-2*x"], ["0", "0", "1"]]
    domain = [[-5, 5], [-5, 5], [-5, 5]]
    # optional:
    name = "my-manifold"
    eta = ["-y/2", "x/2", "0.25"]     # contact form components
    carnot = false

Carnot files describe a graded algebra (0-based basis indices)::

    grading = [2, 1]
    brackets = [[0, 1, 2, -4.0]]      # [e_0, e_1] = -4 e_2

Hypersurface files attach a level function to a manifold chart::

    phi = "(x1^2+y1^2)^2 + t^2 - 1"

Built-in manifold names bypass files: ``heisenberg:<n>`` and
``carnot:<file>``.  Built-in surface names: ``gauge-sphere[:r]`` (on a
Heisenberg manifold) and ``plane:<var>[=level]``.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError
from .hypersurface import Hypersurface, coordinate_hyperplane, gauge_sphere
from .manifold import Manifold, VectorField, make_carnot, make_heisenberg

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python < 3.11
    import tomli as _toml

__all__ = ["load_manifold", "load_hypersurface", "read_config"]


def read_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    data = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            return _toml.loads(data.decode("utf-8"))
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"bad TOML in {path}: {exc}") from exc
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}") from exc


def load_manifold(spec):
    """Load a manifold from ``heisenberg:n``, ``carnot:<file>`` or a
    manifold config file path."""
    spec = str(spec)
    if spec.startswith("heisenberg:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad heisenberg spec {spec!r}") from exc
        return make_heisenberg(n)
    if spec.startswith("carnot:"):
        return _carnot_from_file(spec.split(":", 1)[1])
    return _manifold_from_file(spec)


def _carnot_from_file(path):
    raw = read_config(path)
    try:
        grading = [int(d) for d in raw["grading"]]
        brackets = [tuple(b) for b in raw.get("brackets", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad carnot config {path}: {exc}") from exc
    name = raw.get("name", Path(path).stem)
    try:
        return make_carnot(brackets, grading, name=name,
                           box_half=float(raw.get("box_half", 5.0)))
    except Exception as exc:
        raise ConfigError(f"carnot construction failed for {path}: {exc}") from exc


def _manifold_from_file(path):
    raw = read_config(path)
    for key in ("dim", "rank", "vars", "frame", "domain"):
        if key not in raw:
            raise ConfigError(f"manifold config {path} is missing {key!r}")
    dim = int(raw["dim"])
    rank = int(raw["rank"])
    variables = [str(v) for v in raw["vars"]]
    if len(variables) != dim:
        raise ConfigError(f"{path}: vars must list {dim} names")
    frame_rows = raw["frame"]
    if len(frame_rows) != dim:
        raise ConfigError(f"{path}: frame must list {dim} fields")
    try:
        frame = tuple(VectorField.from_strings([str(c) for c in row], variables)
                      for row in frame_rows)
    except Exception as exc:
        raise ConfigError(f"{path}: bad frame coefficient: {exc}") from exc
    domain = raw["domain"]
    if len(domain) != dim or any(len(iv) != 2 for iv in domain):
        raise ConfigError(f"{path}: domain must list {dim} [lo, hi] pairs")
    eta = None
    if "eta" in raw:
        from . import expr as ex
        try:
            eta = tuple(ex.parse(str(c), variables) for c in raw["eta"])
        except Exception as exc:
            raise ConfigError(f"{path}: bad eta component: {exc}") from exc
        if len(eta) != dim:
            raise ConfigError(f"{path}: eta must list {dim} components")
    try:
        return Manifold(
            name=str(raw.get("name", Path(path).stem)),
            dim=dim,
            rank=rank,
            variables=tuple(variables),
            frame=frame,
            domain=tuple((float(lo), float(hi)) for lo, hi in domain),
            contact_form=eta,
            carnot=bool(raw.get("carnot", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_hypersurface(spec, manifold):
    """Load a hypersurface from a builtin name or a config file path."""
    spec = str(spec)
    if spec.startswith("gauge-sphere"):
        radius = 1.0
        if ":" in spec:
            radius = float(spec.split(":", 1)[1])
        try:
            return gauge_sphere(manifold, radius=radius)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if spec.startswith("plane:"):
        body = spec.split(":", 1)[1]
        level = 0.0
        if "=" in body:
            body, level_src = body.split("=", 1)
            level = float(level_src)
        if body not in manifold.variables:
            raise ConfigError(f"unknown chart variable {body!r}")
        return coordinate_hyperplane(manifold, body, level=level)
    raw = read_config(spec)
    if "phi" not in raw:
        raise ConfigError(f"hypersurface config {spec} is missing 'phi'")
    try:
        return Hypersurface.from_string(str(raw["phi"]), manifold,
                                        name=str(raw.get("name", Path(spec).stem)))
    except Exception as exc:
        raise ConfigError(f"{spec}: bad phi: {exc}") from exc
