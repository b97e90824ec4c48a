"""Vulnerability registry with implementation layers and hardness levels.

Records carry an append-only hardness history. A record may track several
components (for instance Alice's and Bob's optics for one attack); each
history entry can be tagged with the component it applies to, and the
record's overall hardness is the weakest component's latest level.

The store is a single JSON document written atomically under a file lock.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import os
import re
import tempfile
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

from filelock import FileLock

from .errors import ConflictError, DomainError, RecordNotFoundError

SCHEMA_VERSION = 1
STORE_ENV = "QKDSECVAL_STORE"
CSV_COLUMNS = ("id", "title", "layers", "risk", "hardness_current", "hardness_initial",
               "requires_lab_testing", "status")

_ID_RE = re.compile(r"^[a-z0-9][a-z0-9-]*$")


class Layer(enum.Enum):
    Q1 = "Optics"
    Q2 = "Analog electronics interface"
    Q3 = "Driver and calibration algorithms"
    Q4 = "Operation cycle"
    Q5 = "Post-processing"
    Q6 = "Application interface"
    Q7 = "Installation and maintenance"

    @property
    def number(self) -> int:
        return int(self.name[1:])


class Hardness(enum.Enum):
    CX = "Not tested"
    C0 = "Insecure"
    C1 = "Solution only partially effective"
    C2 = "Solution robust"
    C3 = "Solution secure"

    @property
    def rank(self) -> int:
        return _HARDNESS_ORDER.index(self)

    def __lt__(self, other: "Hardness") -> bool:
        if not isinstance(other, Hardness):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other: "Hardness") -> bool:
        if not isinstance(other, Hardness):
            return NotImplemented
        return self.rank <= other.rank


_HARDNESS_ORDER = [Hardness.CX, Hardness.C0, Hardness.C1, Hardness.C2, Hardness.C3]
ADEQUATE = frozenset({Hardness.C2, Hardness.C3})


class Risk(enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def rank(self) -> int:
        return ("low", "medium", "high").index(self.value)


def _layer(name: str) -> Layer:
    try:
        return Layer[name]
    except KeyError:
        raise DomainError(f"unknown layer {name!r}") from None


def parse_layers(spec: Union[str, Iterable]) -> frozenset[Layer]:
    """Parse ``"Q1-5,7"``, ``"Q1,Q3"`` or an iterable of names into layers."""
    if not isinstance(spec, str):
        return frozenset(x if isinstance(x, Layer) else _layer(x) for x in spec)
    out = set()
    for part in spec.replace(" ", "").split(","):
        if not part:
            continue
        lo, _, hi = part.lstrip("Qq").partition("-")
        hi = hi.lstrip("Qq")
        if not (lo.isdigit() and (hi.isdigit() or not hi)):
            raise DomainError(f"bad layer range {part!r}")
        for n in range(int(lo), int(hi or lo) + 1):
            out.add(_layer(f"Q{n}"))
    return frozenset(out)


def format_layers(layers: Iterable[Layer]) -> str:
    """Compact form, e.g. ``Q1-5,7``."""
    nums = sorted(layer.number for layer in layers)
    runs: list[list[int]] = []
    for n in nums:
        if runs and n == runs[-1][-1] + 1:
            runs[-1].append(n)
        else:
            runs.append([n])
    parts = [f"{r[0]}-{r[-1]}" if len(r) > 1 else f"{r[0]}" for r in runs]
    return "Q" + ",".join(parts) if parts else ""


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class HardnessEntry:
    timestamp: str
    level: Hardness
    note: str = ""
    component: Optional[str] = None

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "level": self.level.name, "note": self.note,
                "component": self.component}

    @classmethod
    def from_dict(cls, d: dict) -> "HardnessEntry":
        return cls(d["timestamp"], Hardness[d["level"]], d.get("note", ""), d.get("component"))


@dataclass(frozen=True)
class VulnRecord:
    """One security issue.

    ``risk`` is the initial risk evaluation; ``component_risk`` optionally
    refines it per component.
    """

    id: str
    title: str
    layers: frozenset[Layer]
    target_component: str
    risk: Risk
    hardness_history: tuple[HardnessEntry, ...]
    status: str = ""
    requires_lab_testing: bool = False
    component_risk: dict[str, Risk] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", frozenset(self.layers))
        object.__setattr__(self, "hardness_history", tuple(self.hardness_history))
        if not _ID_RE.match(self.id):
            raise DomainError(f"invalid record id {self.id!r}")
        if not self.layers:
            raise DomainError(f"{self.id}: at least one layer is required")
        if not self.hardness_history:
            raise DomainError(f"{self.id}: hardness history must not be empty")

    def _by_component(self, first: bool) -> dict[Optional[str], Hardness]:
        out: dict[Optional[str], Hardness] = {}
        for e in self.hardness_history:
            if first and e.component in out:
                continue
            out[e.component] = e.level
        return out

    @property
    def initial_by_component(self) -> dict[Optional[str], Hardness]:
        return self._by_component(first=True)

    @property
    def current_by_component(self) -> dict[Optional[str], Hardness]:
        return self._by_component(first=False)

    @property
    def initial(self) -> Hardness:
        return min(self.initial_by_component.values())

    @property
    def current(self) -> Hardness:
        return min(self.current_by_component.values())

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "layers": sorted(layer.name for layer in self.layers),
            "target_component": self.target_component,
            "risk": self.risk.value,
            "component_risk": {k: v.value for k, v in sorted(self.component_risk.items())},
            "hardness_history": [e.to_dict() for e in self.hardness_history],
            "status": self.status,
            "requires_lab_testing": self.requires_lab_testing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VulnRecord":
        return cls(
            id=d["id"],
            title=d["title"],
            layers=parse_layers(d["layers"]),
            target_component=d.get("target_component", ""),
            risk=Risk(d["risk"]),
            hardness_history=tuple(HardnessEntry.from_dict(e) for e in d["hardness_history"]),
            status=d.get("status", ""),
            requires_lab_testing=bool(d.get("requires_lab_testing", False)),
            component_risk={k: Risk(v) for k, v in d.get("component_risk", {}).items()},
        )


def _fmt_hardness(levels: dict[Optional[str], Hardness]) -> str:
    if list(levels) == [None]:
        return levels[None].name
    return ";".join(f"{k}={v.name}" if k else v.name for k, v in levels.items())


# Initial (2017) and current (early 2020) hardness of the evaluated SCW system.
_T_INIT = "2017-12-31T00:00:00+00:00"
_T_CURR = "2020-03-01T00:00:00+00:00"

# id, title, layers, target, lab testing, risk, [(component, C_init, C_curr)], status
SUMMARY_TABLE = [
    ("controllable-detectors", "Controllable detectors", "Q1-5,7", "SPDs", True, "high",
     [(None, "CX", "C2")],
     "Loophole confirmed in the lab; countermeasures implemented in the current version."),
    ("laser-damage", "Laser damage", "Q1,3", "Alice's & Bob's optics", True, "high",
     [(None, "CX", "C2")],
     "Loophole confirmed in Alice; countermeasures implemented in the current version."),
    ("trojan-horse", "Trojan horse", "Q1", "Alice's & Bob's optics", True, "high",
     [("alice", "C2", "C2"), ("bob", "C0", "C2")],
     "Countermeasures developed; to be implemented in the next modification and re-analysed."),
    ("lack-of-general-security-proof", "Lack of general security proof", "Q1,5", "QKD protocol",
     False, "high", [(None, "C0", "C3")],
     "Covered by a published security proof; privacy amplification updated in software."),
    ("manipulation-of-reference-pulse", "Manipulation of reference pulse", "Q1,5", "QKD protocol",
     False, "high", [(None, "CX", "C3")],
     "Covered by a published analysis; reference monitoring implemented."),
    ("time-shift-attack", "Time-shift attack", "Q1-3,5", "PSMs", True, "medium",
     [(None, "CX", "CX")], "Lower priority; left for future work."),
    ("privacy-amplification", "Privacy amplification", "Q5", "Post-processing", False, "high",
     [(None, "C0", "C3")], "Hash-based privacy amplification adopted in software."),
    ("finite-key-size-effects", "Finite key size effects", "Q5", "QKD protocol", False, "low",
     [(None, "C0", "C3")], "Finite-key analysis included in the system software."),
    ("non-quantum-rng", "Non-quantum RNG", "Q5", "RNG", False, "low",
     [(None, "C0", "C3")], "Physical RNG selected for the next version."),
    ("intersymbol-interference", "Intersymbol interference", "Q1-3", "PSM's drivers", True, "low",
     [(None, "CX", "CX")], "Lower priority; left for future work."),
]

_COMPONENT_RISK = {"trojan-horse": {"alice": Risk.LOW, "bob": Risk.HIGH}}


def summary_records() -> list[VulnRecord]:
    """The ten issues of the evaluated SCW system with initial and current hardness."""
    records = []
    for rid, title, layers, target, lab, risk, levels, status in SUMMARY_TABLE:
        history = [HardnessEntry(_T_INIT, Hardness[init], "initial evaluation", comp)
                   for comp, init, _ in levels]
        history += [HardnessEntry(_T_CURR, Hardness[curr], "follow-up", comp)
                    for comp, init, curr in levels if curr != init]
        records.append(VulnRecord(
            id=rid, title=title, layers=parse_layers(layers), target_component=target,
            risk=Risk(risk), hardness_history=tuple(history), status=status,
            requires_lab_testing=lab, component_risk=dict(_COMPONENT_RISK.get(rid, {})),
        ))
    return records


class Registry:
    """In-memory registry; all mutations go through ``create`` and ``set_hardness``."""

    def __init__(self, records: Iterable[VulnRecord] = ()) -> None:
        self._lock = threading.RLock()
        self._records: dict[str, VulnRecord] = {}
        for r in records:
            self.create(r)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, rid: str) -> bool:
        return rid in self._records

    def get(self, rid: str) -> VulnRecord:
        try:
            return self._records[rid]
        except KeyError:
            raise RecordNotFoundError(rid) from None

    def records(self) -> list[VulnRecord]:
        with self._lock:
            return [self._records[k] for k in sorted(self._records)]

    def create(self, record: VulnRecord) -> str:
        with self._lock:
            if record.id in self._records:
                raise ConflictError(f"record {record.id!r} already exists")
            self._records[record.id] = record
            return record.id

    def set_hardness(self, rid: str, level: Union[Hardness, str], note: str = "",
                     timestamp: Optional[str] = None, component: Optional[str] = None) -> VulnRecord:
        """Append a hardness assessment; any transition is allowed."""
        level = level if isinstance(level, Hardness) else Hardness[level]
        with self._lock:
            rec = self.get(rid)
            known = {e.component for e in rec.hardness_history}
            if component not in known:
                raise DomainError(f"{rid}: unknown component {component!r}; known: {sorted(map(str, known))}")
            entry = HardnessEntry(timestamp or now_iso(), level, note, component)
            rec = replace(rec, hardness_history=rec.hardness_history + (entry,))
            self._records[rid] = rec
            return rec

    def seed_paper_table(self, overwrite: bool = False) -> list[VulnRecord]:
        with self._lock:
            if self._records and not overwrite:
                raise ConflictError("store is not empty; reseed with overwrite (CLI: --overwrite)")
            self._records.clear()
            for r in summary_records():
                self.create(r)
            return self.records()

    def select(self, layer: Optional[Layer] = None, hardness: Optional[Hardness] = None,
               risk: Optional[Risk] = None) -> list[VulnRecord]:
        """Filter by layer, current hardness and risk; ordered by risk (high first), then id."""
        rows = [r for r in self.records()
                if (layer is None or layer in r.layers)
                and (hardness is None or r.current == hardness)
                and (risk is None or r.risk == risk)]
        return sorted(rows, key=lambda r: (-r.risk.rank, r.id))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "records": [r.to_dict() for r in self.records()]}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Registry":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise DomainError(f"unsupported store schema version {doc.get('schema_version')!r}")
        return cls(VulnRecord.from_dict(d) for d in doc["records"])


def verdict(records: list[VulnRecord]) -> str:
    """Certification verdict: C2 and C3 are adequate, anything lower is not."""
    if not records:
        return "no records"
    if all(r.current == Hardness.C3 for r in records):
        return "adequate (all proof-backed)"
    if all(r.current in ADEQUATE for r in records):
        n = sum(r.current == Hardness.C3 for r in records)
        return f"adequate ({n} of {len(records)} proof-backed)"
    return "inadequate"


def hardness_counts(records: list[VulnRecord]) -> dict[str, int]:
    counts = {h.name: 0 for h in _HARDNESS_ORDER}
    for r in records:
        counts[r.current.name] += 1
    return counts


def _row(r: VulnRecord) -> dict:
    return {
        "id": r.id,
        "title": r.title,
        "layers": format_layers(r.layers),
        "risk": r.risk.value,
        "hardness_current": _fmt_hardness(r.current_by_component),
        "hardness_initial": _fmt_hardness(r.initial_by_component),
        "requires_lab_testing": "yes" if r.requires_lab_testing else "no",
        "status": r.status,
    }


def report(registry: Registry, fmt: str = "text", layer: Optional[Layer] = None,
           hardness: Optional[Hardness] = None, risk: Optional[Risk] = None) -> str:
    """Render the (filtered) registry as a text table, JSON or CSV."""
    rows = registry.select(layer, hardness, risk)
    counts = hardness_counts(rows)
    v = verdict(rows)
    if fmt == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "filter": {"layer": layer.name if layer else None,
                       "hardness": hardness.name if hardness else None,
                       "risk": risk.value if risk else None},
            "records": [_row(r) for r in rows],
            "counts": counts,
            "verdict": v,
        }
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(_row(r))
        return buf.getvalue()
    if fmt != "text":
        raise DomainError(f"unknown report format {fmt!r}")
    cols = ("id", "layers", "risk", "hardness_initial", "hardness_current", "requires_lab_testing")
    heads = ("ID", "Q", "RISK", "C_INIT", "C_CURR", "LAB")
    table = [heads] + [tuple(_row(r)[c] for c in cols) for r in rows]
    widths = [max(len(t[i]) for t in table) for i in range(len(heads))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(t, widths)).rstrip() for t in table]
    lines.append("")
    lines.append("counts: " + ", ".join(f"{k}={n}" for k, n in counts.items()))
    lines.append(f"verdict: {v}")
    return "\n".join(lines) + "\n"


def default_store_path() -> Path:
    return Path(os.environ.get(STORE_ENV, "qkdsecval-registry.json"))


class Store:
    """File-backed registry: one writer at a time, readers see whole files."""

    def __init__(self, path: Union[str, Path, None] = None) -> None:
        self.path = Path(path) if path is not None else default_store_path()
        self._lock = FileLock(str(self.path) + ".lock")

    def read(self) -> Registry:
        if not self.path.exists():
            return Registry()
        return Registry.loads(self.path.read_text(encoding="utf-8"))

    def write(self, registry: Registry) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(registry.dumps())
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @contextmanager
    def transaction(self) -> Iterator[Registry]:
        """Load, yield for mutation, and save under the store lock."""
        with self._lock:
            reg = self.read()
            yield reg
            self.write(reg)
