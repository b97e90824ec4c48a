"""Quantitative models of eavesdropping attacks on an SCW QKD link.

Each Monte-Carlo routine is paired with a closed-form or exact-enumeration
companion so that estimates can be checked against it. Random streams are
drawn per fixed-size chunk from ``SeedSequence(seed).spawn``, so results do
not depend on how chunks are scheduled across workers.

Phases are coded as integers 0..3 (multiples of pi/2); the basis of a
phase is its parity.
"""
from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError
from .scw import SystemParams, detection_prob, occupancies, sideband_fraction

CHUNK = 1 << 16

# Relative power reaching a sideband detector for a phase offset of k * pi/2:
# matched phases give full power, the other basis half, opposite phases none.
PHASE_WEIGHT = np.array([1.0, 0.5, 0.0, 0.5])


class RevealVerdict(str, enum.Enum):
    REVEALED = "revealed"
    HIDDEN = "hidden"


@dataclass(frozen=True)
class BlindingParams:
    """Characterisation of a blinded single-photon detector (powers in W).

    A blinded detector behaves as a classical threshold detector: it never
    clicks at or below ``P_never``, always clicks at or above ``P_always`` and,
    in between, clicks iff the incident power reaches ``P_th``.
    """

    P_blind: float
    P_th: float
    P_never: float
    P_always: float

    def __post_init__(self) -> None:
        if not self.P_blind > 0:
            raise DomainError("P_blind must be positive")
        if not self.P_th > 0:
            raise DomainError("P_th must be positive")
        if not 0 < self.P_never <= self.P_always:
            raise DomainError("need 0 < P_never <= P_always")

    def clicks(self, power):
        """Deterministic click decision for incident power (scalar or array)."""
        p = np.asarray(power, dtype=float)
        out = (p >= self.P_always) | ((p > self.P_never) & (p >= self.P_th))
        return bool(out) if out.ndim == 0 else out

    @property
    def min_click_power(self) -> float:
        if self.P_th > self.P_never:
            return min(self.P_th, self.P_always)
        return self.P_always


@dataclass
class AttackOutcome:
    """Result of an attack evaluation.

    ``analytic`` holds the companion-model values for the same quantities and
    ``stderr`` the Monte-Carlo standard errors; both are empty for purely
    analytic evaluations.
    """

    detection_rate: float
    qber: float
    leak_fraction: float
    feasible: bool
    notes: str = ""
    analytic: dict[str, float] = field(default_factory=dict)
    stderr: dict[str, float] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    seed: Optional[int] = None
    n_rounds: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "detection_rate": self.detection_rate,
            "qber": self.qber,
            "leak_fraction": self.leak_fraction,
            "feasible": self.feasible,
            "notes": self.notes,
            "analytic": dict(self.analytic),
            "stderr": dict(self.stderr),
            "extra": dict(self.extra),
            "seed": self.seed,
            "n_rounds": self.n_rounds,
        }


def usd_filter_success(m: float) -> float:
    """Success probability ``2 m^2 / (1 + m^2)`` of Eve's filtering operation."""
    if not 0 <= m <= 1:
        raise DomainError(f"modulation index must lie in [0, 1], got {m}")
    return 2.0 * m * m / (1.0 + m * m)


def usd_reveal_check(P_det: float, P_USD: float) -> RevealVerdict:
    """An USD attack is revealed iff the expected detection probability exceeds P_USD.

    Ties count as hidden.
    """
    for name, v in (("P_det", P_det), ("P_USD", P_USD)):
        if not 0 <= v <= 1:
            raise DomainError(f"{name} must lie in [0, 1], got {v}")
    return RevealVerdict.REVEALED if P_det > P_USD else RevealVerdict.HIDDEN


def blinding_trigger_window(b: BlindingParams) -> Optional[tuple[float, float]]:
    """Trigger powers with a click at matched phase and none in the other basis.

    Returns ``(P_always, 2 * P_never)``, or ``None`` when that interval is empty.
    """
    lo, hi = b.P_always, 2.0 * b.P_never
    return (lo, hi) if lo <= hi else None


def required_reference_power(P_tr: float, m: float) -> float:
    """Reference power Eve must inject so Bob's modulation yields trigger power ``P_tr``."""
    if not P_tr > 0:
        raise DomainError("P_tr must be positive")
    if not 0 < m <= 1:
        raise DomainError(f"modulation index must lie in (0, 1], got {m}")
    return P_tr / m


def _run_chunks(seed: int, n_rounds: int, fn: Callable[[np.random.Generator, int], np.ndarray],
                workers: int = 1) -> np.ndarray:
    """Apply ``fn(rng, size)`` to every chunk and sum the returned count vectors."""
    if n_rounds < 1:
        raise DomainError("n_rounds must be >= 1")
    n_chunks = -(-n_rounds // CHUNK)
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [CHUNK] * (n_chunks - 1) + [n_rounds - CHUNK * (n_chunks - 1)]
    jobs = [(np.random.default_rng(s), size) for s, size in zip(seqs, sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    return np.sum(parts, axis=0)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _binomial_se(p: float, n: float) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n > 0 else 0.0


def _photon_click_probs(params: SystemParams) -> np.ndarray:
    """Per-photon click probability at Bob for each relative phase offset 0..3."""
    return params.eta_bob * np.array([sideband_fraction(params, k * math.pi / 2) for k in range(4)])


def splitting_attack_leak(
    params: SystemParams,
    line_loss_dB: float,
    n_rounds: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
) -> AttackOutcome:
    """QND splitting attack with a quantum memory and a lossless channel.

    Eve removes the line loss and, in its place, splits the signal in
    infinitesimal steps, stopping at the first photon found, until her split
    fraction equals the line loss. A captured photon is filtered with success
    probability ``usd_filter_success(m)``; after basis reconciliation a
    successful filter yields Alice's bit. Bob receives exactly the photons the
    lossy line would have delivered, so his statistics are unchanged.

    Per window, Alice sends Poisson(``mu0``) photons; each would be lost in the
    line with probability ``1 - 10^(-line_loss_dB/10)``. Surviving photons are
    detected by Bob with probability ``eta_bob`` times the sideband fraction
    set by the Alice-Bob phase offset.

    Returns:
        ``leak_fraction`` = P(Eve captured a photon and filtered it
        successfully | Bob accepted a bit). The analytic companion is
        ``(1 - exp(-mu0 (1 - eta))) * P_success``.
    """
    if line_loss_dB < 0:
        raise DomainError("line_loss_dB must be >= 0")
    eta = 10.0 ** (-line_loss_dB / 10.0)
    p_split = 1.0 - eta
    p_success = usd_filter_success(params.m)
    p_photon_click = _photon_click_probs(params)

    def chunk(rng: np.random.Generator, size: int) -> np.ndarray:
        phi_a = rng.integers(0, 4, size)
        phi_b = rng.integers(0, 4, size)
        n = rng.poisson(params.mu0, size)
        lost = rng.binomial(n, p_split)
        captured = lost > 0
        learned = captured & (rng.random(size) < p_success)
        rel = (phi_b - phi_a) % 4
        clicks = rng.binomial(n - lost, p_photon_click[rel]) > 0
        accepted = clicks & (rel % 2 == 0)
        errors = accepted & (rel != 0)
        return np.array([clicks.sum(), accepted.sum(), errors.sum(), (accepted & learned).sum()],
                        dtype=np.int64)

    clicks, accepted, errors, leaked = _run_chunks(seed, n_rounds, chunk, workers)

    p_capture = -math.expm1(-params.mu0 * p_split)
    leak_a = p_capture * p_success
    p_click = [float(detection_prob(params.mu0 * eta * f)) for f in p_photon_click]
    det_a = float(np.mean(p_click))
    acc_a = 0.25 * (p_click[0] + p_click[2])
    qber_a = _ratio(0.25 * p_click[2], acc_a)

    leak = _ratio(leaked, accepted)
    det = clicks / n_rounds
    qber = _ratio(errors, accepted)
    return AttackOutcome(
        detection_rate=float(det),
        qber=float(qber),
        leak_fraction=float(leak),
        feasible=bool(leaked > 0),
        notes="Eve needs a quantum memory and a lossless channel; Bob's detection statistics are unchanged.",
        analytic={"detection_rate": det_a, "qber": qber_a, "leak_fraction": leak_a,
                  "accepted_rate": acc_a},
        stderr={"detection_rate": _binomial_se(det, n_rounds),
                "leak_fraction": _binomial_se(leak, accepted),
                "qber": _binomial_se(qber, accepted)},
        extra={"accepted_rate": float(accepted / n_rounds), "line_loss_dB": line_loss_dB,
               "p_success": p_success, "p_capture": p_capture},
        seed=seed,
        n_rounds=n_rounds,
    )


def _faked_state_model(params: SystemParams, b: BlindingParams, P_tr: float, monitoring: bool,
                       p_conclusive: float, fill_power: float):
    """Per-offset click decisions shared by the simulation and its analytic companion."""
    eve_clicks = b.clicks(P_tr * PHASE_WEIGHT)  # indexed by (phi_B - phi_E) % 4
    fill_sb_click = bool(monitoring and b.clicks(params.m * fill_power))
    ref_click_resend = bool(b.clicks(required_reference_power(P_tr, params.m) * (1.0 - params.m)))
    ref_click_fill = bool(monitoring and b.clicks(fill_power * (1.0 - params.m)))
    p_photon = -math.expm1(-params.mu0)
    p_eve = p_photon * p_conclusive * PHASE_WEIGHT  # indexed by (phi_E - phi_A) % 4
    return eve_clicks, fill_sb_click, ref_click_resend, ref_click_fill, p_eve


def faked_state_analytic(
    params: SystemParams,
    b: BlindingParams,
    P_tr: float,
    with_reference_monitoring: bool = False,
    p_conclusive: Optional[float] = None,
    fill_power: Optional[float] = None,
) -> dict[str, float]:
    """Exact per-window probabilities of the faked-state model.

    Enumerates the 64 equally likely (Alice, Eve, Bob) phase triples and sums
    the Bernoulli probabilities of each branch.
    """
    p_conc = usd_filter_success(params.m) if p_conclusive is None else p_conclusive
    fill = _default_fill_power(params, b) if fill_power is None else fill_power
    eve_clicks, fill_sb, ref_resend, ref_fill, p_eve = _faked_state_model(
        params, b, P_tr, with_reference_monitoring, p_conc, fill)
    det = acc = err = known = ref = 0.0
    w = 1.0 / 64
    for a, e, bb in itertools.product(range(4), repeat=3):
        pe = p_eve[(e - a) % 4]
        click_resend = bool(eve_clicks[(bb - e) % 4])
        p_click = pe * click_resend + (1.0 - pe) * fill_sb
        det += w * p_click
        ref += w * (pe * ref_resend + (1.0 - pe) * ref_fill)
        if a % 2 == bb % 2:
            acc += w * p_click
            if a != bb:
                err += w * p_click
            if e == a:
                known += w * pe * click_resend
    return {
        "detection_rate": float(det),
        "accepted_rate": float(acc),
        "qber": float(_ratio(err, acc)),
        "leak_fraction": float(_ratio(known, acc)),
        "ref_click_rate": float(ref),
    }


def _default_fill_power(params: SystemParams, b: BlindingParams) -> float:
    # weakest reference pulse that still clicks the blinded reference detector
    return b.min_click_power / (1.0 - params.m) if params.m < 1 else b.min_click_power


def expected_ref_detection(params: SystemParams) -> float:
    """Reference detection probability without attack, averaged over the four phase offsets."""
    return float(np.mean([detection_prob(occupancies(params, 1.0, k * math.pi / 2).n_ref)
                          for k in range(4)]))


def faked_state_simulate(
    params: SystemParams,
    b: BlindingParams,
    P_tr: float,
    with_reference_monitoring: bool = False,
    n_rounds: int = 100_000,
    seed: int = 0,
    p_conclusive: Optional[float] = None,
    fill_power: Optional[float] = None,
    ref_acceptance: float = 0.9,
    max_qber: float = 0.11,
    workers: int = 1,
) -> AttackOutcome:
    """Monte-Carlo of the detector-blinding faked-state attack.

    Eve, next to Alice, measures each window with a random phase. She gets a
    conclusive result with probability ``(1 - exp(-mu0)) * p_conclusive``
    scaled by the relative power at her detector (1, 1/2, 0 for matched,
    other-basis and opposite phases). ``p_conclusive`` defaults to
    ``usd_filter_success(m)``. On success she resends her phase as a bright
    reference/sideband pair into Bob's blinded detectors; the sideband power
    at Bob is ``P_tr``, ``P_tr/2`` or 0 depending on the Bob-Eve phase offset,
    and a click follows the threshold model of ``b``.

    Without reference monitoring Eve stays silent on inconclusive windows.
    With monitoring she sends a reference-only pulse of ``fill_power`` (default:
    the weakest power clicking the reference detector); a fraction ``m`` of
    it lands on the sideband detector. The attack passes the monitor when the
    reference click rate is at least ``ref_acceptance`` times the rate
    expected without attack.

    The outcome is feasible when Bob accepts bits, QBER stays at or below
    ``max_qber`` and, if monitored, the reference check passes.
    """
    if not P_tr > 0:
        raise DomainError("P_tr must be positive")
    if not 0 < params.m < 1:
        raise DomainError("faked-state attack needs 0 < m < 1")
    p_conc = usd_filter_success(params.m) if p_conclusive is None else float(p_conclusive)
    if not 0 <= p_conc <= 1:
        raise DomainError("p_conclusive must lie in [0, 1]")
    fill = _default_fill_power(params, b) if fill_power is None else float(fill_power)
    eve_clicks, fill_sb, ref_resend, ref_fill, _ = _faked_state_model(
        params, b, P_tr, with_reference_monitoring, p_conc, fill)
    eve_weight = p_conc * PHASE_WEIGHT

    def chunk(rng: np.random.Generator, size: int) -> np.ndarray:
        phi_a = rng.integers(0, 4, size)
        phi_e = rng.integers(0, 4, size)
        phi_b = rng.integers(0, 4, size)
        photon = rng.poisson(params.mu0, size) > 0
        eve = photon & (rng.random(size) < eve_weight[(phi_e - phi_a) % 4])
        bob_click = np.where(eve, eve_clicks[(phi_b - phi_e) % 4], fill_sb)
        ref_click = np.where(eve, ref_resend, ref_fill)
        accepted = bob_click & (phi_a % 2 == phi_b % 2)
        errors = accepted & (phi_a != phi_b)
        known = accepted & eve & (phi_e == phi_a)
        return np.array([bob_click.sum(), accepted.sum(), errors.sum(), known.sum(), ref_click.sum()],
                        dtype=np.int64)

    clicks, accepted, errors, known, ref_clicks = _run_chunks(seed, n_rounds, chunk, workers)
    analytic = faked_state_analytic(params, b, P_tr, with_reference_monitoring, p_conc, fill)

    det = clicks / n_rounds
    qber = _ratio(errors, accepted)
    leak = _ratio(known, accepted)
    window = blinding_trigger_window(b)
    in_window = window is not None and window[0] <= P_tr <= window[1]
    extra = {
        "accepted_rate": float(accepted / n_rounds),
        "trigger_window": list(window) if window else None,
        "P_tr_in_window": in_window,
        "P_ref_required": required_reference_power(P_tr, params.m),
        "p_conclusive": p_conc,
        "with_reference_monitoring": with_reference_monitoring,
    }
    feasible = accepted > 0 and qber <= max_qber
    notes = []
    if not in_window:
        notes.append("trigger power outside the deterministic-control window")
    if with_reference_monitoring:
        ref_rate = ref_clicks / n_rounds
        expected = expected_ref_detection(params)
        passes = ref_rate >= ref_acceptance * expected
        extra.update(ref_click_rate=float(ref_rate), expected_ref_rate=expected,
                     ref_acceptance=ref_acceptance, ref_monitor_passed=bool(passes),
                     fill_power=fill)
        feasible = feasible and passes
        notes.append("reference monitor " + ("passed" if passes else "raised an alarm"))
    return AttackOutcome(
        detection_rate=float(det),
        qber=float(qber),
        leak_fraction=float(leak),
        feasible=bool(feasible),
        notes="; ".join(notes),
        analytic=analytic,
        stderr={"detection_rate": _binomial_se(det, n_rounds),
                "qber": _binomial_se(qber, accepted),
                "leak_fraction": _binomial_se(leak, accepted)},
        extra=extra,
        seed=seed,
        n_rounds=n_rounds,
    )


@dataclass
class ScanRow:
    alpha: float
    p_sb: float
    p_ref: float
    sb_ratio: float
    ref_ratio: float


@dataclass
class ScanReport:
    rows: list[ScanRow]
    tolerance: float
    alpha_frontier: Optional[float]
    suppression_ratio: Optional[float]
    ref_drop: Optional[float]
    p_sb_nominal: float
    p_ref_nominal: float

    def to_dict(self) -> dict:
        return {
            "rows": [vars(r) for r in self.rows],
            "tolerance": self.tolerance,
            "alpha_frontier": self.alpha_frontier,
            "suppression_ratio": self.suppression_ratio,
            "ref_drop": self.ref_drop,
            "p_sb_nominal": self.p_sb_nominal,
            "p_ref_nominal": self.p_ref_nominal,
        }


def reference_manipulation_scan(
    params: SystemParams,
    alpha_grid: Sequence[float],
    ref_drop_tolerance: float,
    delta_phi: float = 0.0,
) -> ScanReport:
    """How far Eve can attenuate before the reference detection rate visibly drops.

    For each extra transmittance ``alpha`` the sideband and reference detection
    probabilities are computed. The frontier is the smallest ``alpha`` whose
    reference detection stays within ``ref_drop_tolerance`` of the nominal
    (``alpha = 1``) value; the sideband suppression ratio there tells how much
    of the signal Eve can hide.
    """
    grid = sorted(float(a) for a in alpha_grid)
    if not grid:
        raise DomainError("alpha grid is empty")
    if not 0 < ref_drop_tolerance < 1:
        raise DomainError("tolerance must lie in (0, 1)")
    nominal = occupancies(params, 1.0, delta_phi)
    p_sb1, p_ref1 = detection_prob(nominal.n_sb), detection_prob(nominal.n_ref)
    rows = []
    for a in grid:
        occ = occupancies(params, a, delta_phi)
        p_sb, p_ref = detection_prob(occ.n_sb), detection_prob(occ.n_ref)
        rows.append(ScanRow(a, p_sb, p_ref, _ratio(p_sb, p_sb1), _ratio(p_ref, p_ref1)))
    frontier = next((r for r in rows if r.p_ref >= (1.0 - ref_drop_tolerance) * p_ref1), None)
    return ScanReport(
        rows=rows,
        tolerance=ref_drop_tolerance,
        alpha_frontier=frontier.alpha if frontier else None,
        suppression_ratio=frontier.sb_ratio if frontier else None,
        ref_drop=1.0 - frontier.ref_ratio if frontier else None,
        p_sb_nominal=p_sb1,
        p_ref_nominal=p_ref1,
    )
