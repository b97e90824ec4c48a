"""Optical loss accounting along component chains.

A chain lists components from the channel entry inward. Trojan-horse light
enters, travels to a reflecting component, bounces back with that
component's return loss, and leaves again. The same chains support a
laser-damage what-if where an attenuator loses part of its attenuation.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .errors import DomainError, UnknownComponentError
from .scw import SystemParams, alice_sideband_mean, photons_to_cw_power

BUILTIN_CHAINS = ("alice_scw", "bob_scw")


@dataclass(frozen=True)
class ComponentSpec:
    """One optical element.

    ``insertion_loss_dB`` of ``None`` means the value is not known; any
    budget whose path crosses such a component is refused.
    ``backward_loss_dB`` defaults to the forward insertion loss.
    """

    id: str
    insertion_loss_dB: Optional[float]
    return_loss_dB: Optional[float] = None
    backward_loss_dB: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("insertion_loss_dB", "return_loss_dB", "backward_loss_dB"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{self.id}: {name} must be >= 0, got {v}")

    @property
    def backward_dB(self) -> Optional[float]:
        return self.insertion_loss_dB if self.backward_loss_dB is None else self.backward_loss_dB


@dataclass(frozen=True)
class ComponentChain:
    components: tuple[ComponentSpec, ...]
    connector_loss_dB: float = 0.0
    connector_count_one_way: int = 0
    description: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise DomainError("a chain needs at least one component")
        if self.connector_loss_dB < 0 or self.connector_count_one_way < 0:
            raise DomainError("connector loss and count must be >= 0")
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise DomainError("component ids must be unique")

    def index(self, component_id: str) -> int:
        for i, c in enumerate(self.components):
            if c.id == component_id:
                return i
        raise UnknownComponentError(component_id)

    def __getitem__(self, component_id: str) -> ComponentSpec:
        return self.components[self.index(component_id)]

    def replace(self, component: ComponentSpec) -> "ComponentChain":
        i = self.index(component.id)
        comps = list(self.components)
        comps[i] = component
        return ComponentChain(
            tuple(comps), self.connector_loss_dB, self.connector_count_one_way, self.description
        )

    def without(self, component_id: str) -> "ComponentChain":
        i = self.index(component_id)
        comps = self.components[:i] + self.components[i + 1:]
        return ComponentChain(comps, self.connector_loss_dB, self.connector_count_one_way, self.description)

    @classmethod
    def from_dict(cls, doc: dict) -> "ComponentChain":
        comps = []
        for c in doc["components"]:
            rl = c.get("return_loss_dB")
            comps.append(
                ComponentSpec(
                    id=c["id"],
                    insertion_loss_dB=c.get("insertion_loss_dB"),
                    return_loss_dB=None if rl in (None, "none") else float(rl),
                    backward_loss_dB=c.get("backward_loss_dB"),
                )
            )
        return cls(
            tuple(comps),
            connector_loss_dB=float(doc.get("connector_loss_dB", 0.0)),
            connector_count_one_way=int(doc.get("connector_count_one_way", 0)),
            description=doc.get("description", ""),
        )

    def to_dict(self) -> dict:
        comps = []
        for c in self.components:
            d = {"id": c.id, "insertion_loss_dB": c.insertion_loss_dB, "return_loss_dB": c.return_loss_dB}
            if c.backward_loss_dB is not None:
                d["backward_loss_dB"] = c.backward_loss_dB
            comps.append(d)
        doc = {
            "components": comps,
            "connector_loss_dB": self.connector_loss_dB,
            "connector_count_one_way": self.connector_count_one_way,
        }
        if self.description:
            doc["description"] = self.description
        return doc


def load_chain(source: Union[str, Path]) -> ComponentChain:
    """Load a chain from a JSON file, or a built-in fixture by name."""
    name = str(source)
    if name in BUILTIN_CHAINS:
        text = resources.files("qkdsecval").joinpath("data", f"{name}.json").read_text()
    else:
        text = Path(source).read_text()
    return ComponentChain.from_dict(json.loads(text))


def db_to_linear(db: float) -> float:
    """Attenuation in dB to a power ratio (>= 1 for a loss)."""
    return 10.0 ** (db / 10.0)


def linear_to_db(ratio: float) -> float:
    if not ratio > 0:
        raise DomainError("power ratio must be positive")
    return 10.0 * math.log10(ratio)


def _path_loss(chain: ComponentChain, up_to: str, backward: bool) -> float:
    i = chain.index(up_to)
    losses = []
    for c in chain.components[:i]:
        v = c.backward_dB if backward else c.insertion_loss_dB
        if v is None:
            raise DomainError(f"insertion loss of {c.id} is unknown; cannot budget a path through it")
        losses.append(v)
    losses.append(chain.connector_loss_dB * chain.connector_count_one_way)
    return math.fsum(losses)


def one_way_loss(chain: ComponentChain, up_to: str) -> float:
    """Loss (dB) from the channel entry to component ``up_to``, exclusive.

    Connector losses are added ``connector_count_one_way`` times: the count
    describes the connectors on the path to the chain's reflector.
    """
    return _path_loss(chain, up_to, backward=False)


def tha_round_trip_loss(chain: ComponentChain, reflector: str) -> float:
    """Attenuation (dB) of a Trojan photon reflected by ``reflector``."""
    rl = chain[reflector].return_loss_dB
    if rl is None:
        raise DomainError(f"{reflector} has no characterised return loss")
    return _path_loss(chain, reflector, False) + _path_loss(chain, reflector, True) + rl


def tha_required_photons(round_trip_dB: float, mu_out_target: float) -> float:
    """Photons per pulse Eve must inject to get ``mu_out_target`` back out."""
    if round_trip_dB < 0:
        raise DomainError("round-trip loss must be >= 0")
    if not mu_out_target > 0:
        raise DomainError("mu_out_target must be positive")
    return mu_out_target * db_to_linear(round_trip_dB)


def tha_required_power(
    round_trip_dB: float, mu_out_target: float, rep_rate: float = 100e6, wavelength: float = 1550e-9
) -> float:
    """C.w. power (W) Eve must inject to read back ``mu_out_target`` photons per pulse."""
    photons = tha_required_photons(round_trip_dB, mu_out_target)
    return photons_to_cw_power(photons, rep_rate, wavelength)


@dataclass
class DamageReport:
    component: str
    delta_dB_requested: float
    delta_dB_applied: float
    clamped: bool
    mu_sb: float
    mu_sb_after: float
    mu_max: float
    verdict_before: str
    verdict: str
    round_trips: dict[str, tuple[float, float]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def laser_damage_whatif(
    chain: ComponentChain,
    component: str,
    delta_dB: float,
    params: SystemParams,
    mu_max: float,
    mu_sb: Optional[float] = None,
) -> DamageReport:
    """Effect of a laser-damage attack that lowers one component's attenuation.

    The source output ``mu_sb`` (default: sideband mean leaving Alice from
    ``params``) grows by ``delta_dB``. A reduction larger than the component's
    insertion loss is clamped at full transparency with a warning. Round-trip
    Trojan-horse losses are recomputed for every reflector behind the damaged
    component.

    Returns:
        A ``DamageReport``; ``verdict`` is ``"insecure"`` when the new mean
        photon number exceeds ``mu_max``, else ``"secure"``.
    """
    if delta_dB < 0:
        raise DomainError("delta_dB must be >= 0")
    if not mu_max > 0:
        raise DomainError("mu_max must be positive")
    target = chain[component]
    notes = []
    applied = float(delta_dB)
    clamped = False
    if target.insertion_loss_dB is not None and delta_dB > target.insertion_loss_dB:
        applied = target.insertion_loss_dB
        clamped = True
        msg = (f"{component}: reduction of {delta_dB} dB exceeds its {target.insertion_loss_dB} dB "
               "insertion loss; clamped at full transparency")
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)

    base = alice_sideband_mean(params) if mu_sb is None else float(mu_sb)
    after = base * db_to_linear(applied)

    damaged = chain
    if target.insertion_loss_dB is not None:
        bwd = None if target.backward_loss_dB is None else max(target.backward_loss_dB - applied, 0.0)
        damaged = chain.replace(
            ComponentSpec(target.id, target.insertion_loss_dB - applied, target.return_loss_dB, bwd)
        )
    round_trips = {}
    pos = chain.index(component)
    for i, c in enumerate(chain.components):
        if i > pos and c.return_loss_dB is not None:
            try:
                round_trips[c.id] = (tha_round_trip_loss(chain, c.id), tha_round_trip_loss(damaged, c.id))
            except DomainError as exc:
                notes.append(str(exc))

    return DamageReport(
        component=component,
        delta_dB_requested=float(delta_dB),
        delta_dB_applied=applied,
        clamped=clamped,
        mu_sb=base,
        mu_sb_after=after,
        mu_max=mu_max,
        verdict_before="insecure" if base > mu_max else "secure",
        verdict="insecure" if after > mu_max else "secure",
        round_trips=round_trips,
        warnings=notes,
    )
