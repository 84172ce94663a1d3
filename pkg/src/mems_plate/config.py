"""Flat ``key = value`` run configuration with ``#`` comments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import ModelParams
from .errors import ParameterError

# config key -> ModelParams field
PARAM_KEYS = {f.name: f.name for f in fields(ModelParams)}
PARAM_KEYS["lambda"] = PARAM_KEYS.pop("lam")


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


EXTRA_KEYS = {
    "gamma_list": _floats,
    "lambda_lo": float,
    "lambda_hi": float,
    "horizon": float,
    "output_dir": str,
    "seed": int,
    "stride": int,
    "ledger_stride": int,
    "potential_stride": int,
    "initial_condition": str,
    "initial_velocity": str,
    "lambda_start": float,
    "lambda_step": float,
    "lambda_max": float,
    "arclength": _bool,
    "max_points": int,
    "gap_stop": float,
    "eps_compare": _bool,
    "pull_in": _bool,
    "bisection_tol": float,
    "n_samples": int,
    "lipschitz_pairs": int,
}

DEFAULTS = {
    "output_dir": "out",
    "seed": 0,
    "stride": 1,
    "ledger_stride": 10,
    "potential_stride": 10,
    "initial_condition": "zero",
    "initial_velocity": "zero",
    "lambda_start": 0.1,
    "lambda_step": 0.5,
    "arclength": True,
    "max_points": 150,
    "gap_stop": 0.1,
    "eps_compare": False,
    "pull_in": False,
    "bisection_tol": 0.05,
    "n_samples": 200,
    "lipschitz_pairs": 20,
    "horizon": 1.0,
}


@dataclass
class RunConfig:
    params: ModelParams
    extras: dict = field(default_factory=dict)

    def get(self, key, default=None):
        if key in self.extras:
            return self.extras[key]
        return DEFAULTS.get(key, default)

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> RunConfig:
        raw_params, extras, seen = {}, {}, set()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in seen:
                raise ParameterError(f"{source}:{lineno}: duplicate key {key!r}")
            seen.add(key)
            try:
                if key in PARAM_KEYS:
                    name = PARAM_KEYS[key]
                    kind = int if name in ("n_x", "n_eta") else float
                    raw_params[name] = kind(value)
                elif key in EXTRA_KEYS:
                    extras[key] = EXTRA_KEYS[key](value)
                else:
                    raise ParameterError(f"{source}:{lineno}: unknown key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ParameterError):
                    raise
                raise ParameterError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
        try:
            params = ModelParams(**raw_params)
        except ParameterError as exc:
            raise ParameterError(f"{source}: {exc}") from exc
        cfg = cls(params, extras)
        for key in ("initial_condition", "initial_velocity"):
            parse_profile_spec(cfg.get(key))
        gl = extras.get("gamma_list")
        if gl is not None and (any(g <= 0 for g in gl) or any(a <= b for a, b in zip(gl, gl[1:]))):
            raise ParameterError(f"{source}: gamma_list must be positive and strictly descending")
        return cfg

    @classmethod
    def from_file(cls, path) -> RunConfig:
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), str(path))

    def to_text(self) -> str:
        lines = []
        for key, name in PARAM_KEYS.items():
            val = getattr(self.params, name)
            lines.append(f"{key} = {val if isinstance(val, int) else format(val, '.17g')}")
        for key, val in self.extras.items():
            if isinstance(val, list):
                val = ", ".join(format(v, ".17g") for v in val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"


PROFILE_KINDS = ("zero", "scaled_eigenmode", "polynomial_bump", "file")


def parse_profile_spec(spec: str) -> tuple[str, str | None]:
    parts = spec.split(None, 1)
    if not parts or parts[0] not in PROFILE_KINDS:
        raise ParameterError(f"initial profile must be one of {PROFILE_KINDS}, got {spec!r}")
    kind, arg = parts[0], (parts[1] if len(parts) > 1 else None)
    if kind == "zero" and arg is not None:
        raise ParameterError(f"'zero' takes no argument: {spec!r}")
    if kind in ("scaled_eigenmode", "polynomial_bump"):
        try:
            float(arg)
        except (TypeError, ValueError):
            raise ParameterError(f"{kind} needs a numeric amplitude: {spec!r}") from None
    if kind == "file" and not arg:
        raise ParameterError(f"'file' needs a path: {spec!r}")
    return kind, arg


def build_profile(spec: str, params: ModelParams, ctx=None, base_dir: Path | None = None) -> np.ndarray:
    """Interior samples of an initial profile spec."""
    kind, arg = parse_profile_spec(spec)
    grid = params.grid
    if kind == "zero":
        return np.zeros(grid.n_interior)
    if kind == "polynomial_bump":
        return float(arg) * (1 - grid.x**2) ** 2
    if kind == "scaled_eigenmode":
        if ctx is None:
            from .plate import assemble_plate_operator, principal_eigenpair

            _, e1 = principal_eigenpair(assemble_plate_operator(grid, params.beta, params.tau))
        else:
            e1 = ctx.eigenfunction(0)
        return float(arg) * e1
    path = Path(arg)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    values = np.array(_floats(path.read_text(encoding="utf-8")))
    if values.size != grid.n_interior:
        raise ParameterError(f"{path}: expected {grid.n_interior} values, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise ParameterError(f"{path}: non-finite values")
    return values


def fmt(x) -> str:
    """17 significant digits, '.' decimal separator."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")
