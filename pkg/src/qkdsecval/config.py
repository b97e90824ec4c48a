"""Run configuration files.

A config is a JSON document with a top-level ``"version": 1`` and optional
blocks (``system``, ``rate``, ``finite_key``, ``epsilon``, ``attack``,
``tha``, ``output``). Dimensioned keys carry their SI unit as a suffix
(``power_w``-style). Unknown keys are rejected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import jsonschema

from .attacks import BlindingParams
from .errors import DomainError
from .keyrate import DEFAULT_EPS, EpsilonBudget
from .scw import SystemParams


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("qkdsecval").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc: Any, schema_name: str) -> None:
    """Raise ``DomainError`` if ``doc`` does not match the named shipped schema."""
    try:
        jsonschema.validate(doc, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DomainError(f"{schema_name}: {where}: {exc.message}") from None


@dataclass
class RunConfig:
    system: Optional[dict] = None
    rate: dict = field(default_factory=dict)
    finite_key: Optional[dict] = None
    epsilon: dict = field(default_factory=dict)
    attack: dict = field(default_factory=dict)
    tha: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        validate(doc, "config")
        cfg = cls(
            system=doc.get("system"),
            rate=doc.get("rate", {}),
            finite_key=doc.get("finite_key"),
            epsilon=doc.get("epsilon", {}),
            attack=doc.get("attack", {}),
            tha=doc.get("tha", {}),
            output=doc.get("output", {}),
        )
        # type invariants are checked eagerly so bad configs fail before dispatch
        if cfg.system is not None:
            cfg.system_params()
        cfg.epsilon_budget()
        return cfg

    @classmethod
    def load(cls, path: Union[str, Path, None]) -> "RunConfig":
        if path is None:
            return cls()
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path}: not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def system_params(self) -> SystemParams:
        if self.system is None:
            raise DomainError("config has no 'system' block")
        s = self.system
        kwargs = dict(mu0=s["mu0"], m=s["m"], S=s["S"], beta=s["beta_rad"])
        for key, name in (("eta_line", "eta_line"), ("eta_bob", "eta_bob"), ("rep_rate_hz", "rep_rate"),
                          ("wavelength_m", "wavelength"), ("sift_factor", "sift_factor")):
            if key in s:
                kwargs[name] = s[key]
        return SystemParams(**kwargs)

    def epsilon_budget(self) -> EpsilonBudget:
        e = self.epsilon
        return EpsilonBudget(e.get("eps_s", DEFAULT_EPS), e.get("eps_EC", DEFAULT_EPS),
                             e.get("eps_PA", DEFAULT_EPS))

    def blinding_params(self) -> BlindingParams:
        a = self.attack
        missing = [k for k in ("P_blind_w", "P_th_w", "P_never_w", "P_always_w") if k not in a]
        if missing:
            raise DomainError(f"attack block is missing {', '.join(missing)}")
        return BlindingParams(a["P_blind_w"], a["P_th_w"], a["P_never_w"], a["P_always_w"])

    def require_attack(self, key: str) -> Any:
        if key not in self.attack:
            raise DomainError(f"attack block is missing {key}")
        return self.attack[key]
