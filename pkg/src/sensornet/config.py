"""JSON run configuration: schema, validation and conversion to library objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import jsonschema

from .applications import FunctionSpec
from .field_model import (
    ExplicitLinear,
    FieldModel,
    Gaussian,
    InverseDistance,
    LinearBasis,
    Monomial,
    PointSources,
    monomials,
)
from .protocol_sim import ShotPlan

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "load_config", "build_model", "model_family", "build_function"]


class ConfigError(ValueError):
    """Malformed or schema-violating configuration."""


_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_points = {"type": "array", "minItems": 1, "items": {"oneOf": [_num, _vec]}}
_matrix = {"type": "array", "minItems": 1, "items": _vec}

_basis_item = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "monomial"}, "powers": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}},
            "required": ["type", "powers"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "gaussian"}, "center": _vec, "width": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["type", "center", "width"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "inverse_distance"}, "center": _vec},
            "required": ["type", "center"],
            "additionalProperties": False,
        },
    ]
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "sensornet run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {"kind": {"const": "ExplicitLinear"}, "G": _matrix, "c": _vec},
                    "required": ["kind", "G"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": "LinearBasis"},
                        "positions": _points,
                        "basis": {
                            "oneOf": [
                                {"type": "array", "items": _basis_item, "minItems": 1},
                                {
                                    "type": "object",
                                    "properties": {
                                        "monomial_degree": {"type": "integer", "minimum": 0},
                                        "dim": {"type": "integer", "minimum": 1},
                                    },
                                    "required": ["monomial_degree"],
                                    "additionalProperties": False,
                                },
                            ]
                        },
                    },
                    "required": ["kind", "positions", "basis"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": "PointSources"},
                        "positions": _points,
                        "sources": _points,
                        "mode": {"enum": ["amplitude", "position"]},
                        "charges": _vec,
                        "directions": _points,
                        "initial_guess": _vec,
                    },
                    "required": ["kind", "positions", "sources"],
                    "additionalProperties": False,
                },
            ]
        },
        "function": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["linear_combination", "field_at_point", "kernel_functional"]},
                "alpha": _vec,
                "x0": {"oneOf": [_num, _vec]},
                "kernel": {"enum": ["constant", "gaussian", "delta"]},
                "center": {"oneOf": [_num, _vec]},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "region": {"type": "array", "minItems": 1, "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                "order": {"type": "integer", "minimum": 2},
                "panels": {"type": "integer", "minimum": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "theta": _vec,
        "solver": {
            "type": "object",
            "properties": {"canonical": {"type": "boolean"}},
            "additionalProperties": False,
        },
        "simulation": {
            "type": "object",
            "properties": {
                "protocol": {"enum": ["ghz", "unentangled", "both"]},
                "t": {"type": "number", "exclusiveMinimum": 0},
                "shots": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "quadrature_split": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "phase_bound": {"type": "number", "minimum": 0},
                "repetitions": {"type": "integer", "minimum": 1},
                "p": {"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1},
                "t_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 1}, "minItems": 1},
                "shots_per_round": {"type": "integer", "minimum": 2},
                "max_rounds": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "placement": {
            "type": "object",
            "properties": {
                "bounds": {"type": "array", "minItems": 1, "maxItems": 3, "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                "sensors": {"type": "integer", "minimum": 1},
                "budget": {"type": "integer", "minimum": 0},
                "restarts": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["bounds", "sensors"],
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
}

_validator = jsonschema.Draft202012Validator(SCHEMA)


def _path(error: jsonschema.ValidationError) -> str:
    out = ""
    for part in error.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def validate(data: Any) -> None:
    errors = sorted(_validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            # oneOf failures are more useful reported through their closest branch.
            best = jsonschema.exceptions.best_match([e]) if not e.context else jsonschema.exceptions.best_match(e.context)
            lines.append(f"{_path(best)}: {best.message}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))


@dataclass
class RunConfig:
    """Validated configuration document; section contents stay plain JSON."""

    model: dict
    function: dict | None = None
    theta: list | None = None
    solver: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    placement: dict | None = None
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        validate(data)
        data = json.loads(json.dumps(data))
        return cls(
            model=data["model"],
            function=data.get("function"),
            theta=data.get("theta"),
            solver=data.get("solver", {}),
            simulation=data.get("simulation", {}),
            placement=data.get("placement"),
            output=data.get("output", {}),
        )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"model": self.model}
        for key in ("function", "theta", "solver", "simulation", "placement", "output"):
            value = getattr(self, key)
            if value is not None and value != {}:
                out[key] = value
        return json.loads(json.dumps(out))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def shot_plan(self, seed: int | None = None) -> ShotPlan:
        sim = self.simulation
        return ShotPlan(
            t=float(sim.get("t", 1.0)),
            shots=int(sim.get("shots", 1000)),
            seed=int(sim.get("seed", 0) if seed is None else seed),
            quadrature_split=float(sim.get("quadrature_split", 0.5)),
            phase_bound=sim.get("phase_bound"),
        )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(data)


def _basis(spec) -> list:
    if isinstance(spec, dict):
        return monomials(spec["monomial_degree"], spec.get("dim", 1))
    out = []
    for item in spec:
        if item["type"] == "monomial":
            out.append(Monomial(tuple(item["powers"])))
        elif item["type"] == "gaussian":
            out.append(Gaussian(tuple(item["center"]), item["width"]))
        else:
            out.append(InverseDistance(tuple(item["center"])))
    return out


def build_model(spec: dict, positions=None) -> FieldModel:
    kind = spec["kind"]
    if kind == "ExplicitLinear":
        return ExplicitLinear(spec["G"], spec.get("c"))
    pos = spec["positions"] if positions is None else positions
    if kind == "LinearBasis":
        return LinearBasis(pos, _basis(spec["basis"]))
    return PointSources(
        pos,
        spec["sources"],
        mode=spec.get("mode", "amplitude"),
        charges=spec.get("charges"),
        directions=spec.get("directions"),
        initial_guess=spec.get("initial_guess"),
    )


def model_family(spec: dict):
    """Callable mapping sensor positions to a model of the configured kind."""
    if spec["kind"] == "ExplicitLinear":
        raise ConfigError("placement needs a spatial model (LinearBasis or PointSources)")
    return lambda positions: build_model(spec, positions)


def build_function(spec: dict | None, param_dim: int) -> FunctionSpec:
    if spec is None:
        raise ConfigError("function: section is required for this command")
    kind = spec["kind"]
    if kind == "linear_combination":
        if "alpha" not in spec:
            raise ConfigError("function.alpha: required for linear_combination")
        if len(spec["alpha"]) != param_dim:
            raise ConfigError(f"function.alpha: expected {param_dim} entries, got {len(spec['alpha'])}")
        return FunctionSpec.linear(spec["alpha"])
    if kind == "field_at_point":
        if "x0" not in spec:
            raise ConfigError("function.x0: required for field_at_point")
        return FunctionSpec.field_at(spec["x0"])
    return FunctionSpec.functional(
        spec.get("kernel"),
        region=spec.get("region"),
        order=spec.get("order", 8),
        panels=spec.get("panels", 1),
        center=spec.get("center"),
        width=spec.get("width"),
        x0=spec.get("x0"),
    )
