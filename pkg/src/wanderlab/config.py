"""Strict ``key = value`` experiment configs with ``[section]`` headers.

Blank lines and ``#`` comments are ignored.  Keys before the first header
belong to the top-level run block.  Every key is checked against a schema
before anything is computed; errors name the offending line.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .blaschke import FactorSchedule
from .errors import WanderlabError
from .surgery import MuRule, SurgerySchedule
from .wander import ChainModel, EpsilonRule, Perturbation, RadiiRule

COMMANDS = ("classify", "ufield", "criterion", "landau", "surgery", "qhd", "audit")


class ConfigError(WanderlabError, ValueError):
    pass


def _complex(s: str) -> complex:
    return complex(s.replace(" ", ""))


def _float_list(s: str) -> list[float]:
    vals = json.loads(s)
    if not isinstance(vals, list):
        raise ValueError("expected a list")
    return [float(v) for v in vals]


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _precision(s: str):
    if s in ("none", "double"):
        return None
    if s == "auto":
        return "auto"
    return int(s)


_TOP = {
    "command": str,
    "seed": int,
    "horizon": int,
    "z0": _complex,
    "w": _complex,
    "pairs": int,
    "mode": str,
    "precision": _precision,
    "eps_contract": float,
    "eps_flat": float,
    "window": int,
    "grid_size": int,
    "grid_radius": float,
    "grid_resolution": int,
    "a_values": _float_list,
    "bloch_constant": float,
    "r": float,
    "r_prime": float,
    "start_index": int,
    "N_max": int,
    "tail_tol": float,
    "theta_samples": int,
    "eta": float,
    "samples": int,
    "omega_samples": int,
    "omega_c": float,
    "translation_step": float,
    "perturbed": _bool,
    "radial_samples": int,
    "angular_samples": int,
}

_SECTIONS = {
    "factor": {
        "family": str, "q": str, "value": str, "values": str,
        "tail": str, "rotation_from": str, "rotation_angle": str,
    },
    "radii": {"family": str, "scale": float, "r0": float, "R0": float, "rate": float},
    "epsilon": {"family": str, "scale": float, "q": float},
    "perturbation": {"degree": int, "seed": int},
    "mu": {"family": str, "scale": float, "base": float},
    "domain": {"kind": str, "inner_radius": float},
}


@dataclass
class ExperimentConfig:
    command: str | None = None
    seed: int = 0
    knobs: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.knobs.get(key, default)

    # builders -------------------------------------------------------------
    def factor_schedule(self, default: FactorSchedule | None = None) -> FactorSchedule:
        block = self.sections.get("factor")
        if not block:
            return default or FactorSchedule.geometric(0.25)
        return FactorSchedule.from_config(block)

    def radii(self) -> RadiiRule:
        return RadiiRule(**self.sections.get("radii", {}))

    def epsilon(self) -> EpsilonRule:
        return EpsilonRule(**self.sections.get("epsilon", {}))

    def chain_model(self, default: FactorSchedule | None = None) -> ChainModel:
        pert = None
        if self.get("perturbed", "perturbation" in self.sections):
            p = self.sections.get("perturbation", {})
            pert = Perturbation(p.get("degree", 3), p.get("seed", self.seed), self.epsilon())
        return ChainModel(
            self.factor_schedule(default),
            translation_step=self.get("translation_step", 4.0),
            radii=self.radii(),
            perturbation=pert,
        )

    def surgery_schedule(self, default: FactorSchedule | None = None) -> SurgerySchedule:
        return SurgerySchedule(
            self.factor_schedule(default),
            mu_rule=MuRule(**self.sections.get("mu", {})),
            r=self.get("r", 0.1),
            r_prime=self.get("r_prime", 0.2),
            epsilon=self.epsilon(),
            start_index=self.get("start_index", 5),
            eta=self.get("eta", 0.0),
            radii=self.radii(),
            perturbation_degree=self.sections.get("perturbation", {}).get("degree", 3),
            seed=self.sections.get("perturbation", {}).get("seed", self.seed),
        )


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    section = None
    seen: dict[tuple, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            cfg.sections.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        schema = _TOP if section is None else _SECTIONS[section]
        where = "top level" if section is None else f"[{section}]"
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r} at {where}")
        if (section, key) in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[section, key]})")
        seen[section, key] = lineno
        try:
            parsed = schema[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        if section is None:
            if key == "command":
                if parsed not in COMMANDS:
                    raise ConfigError(f"line {lineno}: unknown command {parsed!r}")
                cfg.command = parsed
            elif key == "seed":
                cfg.seed = parsed
            else:
                cfg.knobs[key] = parsed
        else:
            cfg.sections[section][key] = parsed
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
