import math

import pytest

from qkdsecval.attacks import (
    BlindingParams,
    RevealVerdict,
    blinding_trigger_window,
    faked_state_analytic,
    faked_state_simulate,
    reference_manipulation_scan,
    required_reference_power,
    splitting_attack_leak,
    usd_filter_success,
    usd_reveal_check,
)
from qkdsecval.errors import DomainError
from qkdsecval.scw import SystemParams

BLIND = BlindingParams(P_blind=0.3e-3, P_th=0.15e-3, P_never=0.15e-3, P_always=0.15e-3)
FS_PARAMS = SystemParams(mu0=4.0, m=0.05, S=2, beta=0.05)
SPLIT_PARAMS = SystemParams(mu0=0.2, m=0.3, S=2, beta=0.3, eta_bob=0.8)


def test_usd_hand_values():
    assert usd_filter_success(0.0) == 0.0
    assert usd_filter_success(0.05) == pytest.approx(4.98753117e-3, rel=1e-8)
    assert usd_filter_success(1.0) == 1.0
    with pytest.raises(DomainError):
        usd_filter_success(1.1)


def test_usd_reveal_check():
    assert usd_reveal_check(0.3, 0.2) is RevealVerdict.REVEALED
    assert usd_reveal_check(0.2, 0.3) is RevealVerdict.HIDDEN
    assert usd_reveal_check(0.2, 0.2) is RevealVerdict.HIDDEN
    with pytest.raises(DomainError):
        usd_reveal_check(1.2, 0.2)


def test_blinding_window():
    assert blinding_trigger_window(BlindingParams(1.0, 1.0, 1.0, 1.5)) == (1.5, 2.0)
    assert blinding_trigger_window(BlindingParams(1.0, 1.0, 1.0, 2.0)) == (2.0, 2.0)
    assert blinding_trigger_window(BlindingParams(1.0, 1.0, 1.0, 2.5)) is None


def test_blinding_params_validation():
    with pytest.raises(DomainError):
        BlindingParams(1.0, 1.0, 2.0, 1.0)
    with pytest.raises(DomainError):
        BlindingParams(0.0, 1.0, 1.0, 1.0)


def test_threshold_click_model():
    b = BlindingParams(1.0, 1.2, 1.0, 1.5)
    assert not b.clicks(1.0)
    assert not b.clicks(1.1)
    assert b.clicks(1.2)
    assert b.clicks(1.5)


def test_required_reference_power():
    assert required_reference_power(0.15e-3, 0.05) == pytest.approx(3e-3, rel=1e-15)
    assert required_reference_power(1.0, 1.0) == 1.0
    with pytest.raises(DomainError):
        required_reference_power(1.0, 0.0)


def test_splitting_matches_analytic():
    out = splitting_attack_leak(SPLIT_PARAMS, 10.0, n_rounds=200_000, seed=3)
    for key in ("detection_rate", "leak_fraction"):
        assert abs(getattr(out, key) - out.analytic[key]) <= 4 * out.stderr[key]
    assert out.qber == 0.0
    assert out.seed == 3


def test_splitting_zero_loss_leaks_nothing():
    out = splitting_attack_leak(SPLIT_PARAMS, 0.0, n_rounds=20_000, seed=1)
    assert out.leak_fraction == 0.0 and out.analytic["leak_fraction"] == 0.0


def test_splitting_deterministic_and_worker_independent():
    a = splitting_attack_leak(SPLIT_PARAMS, 10.0, n_rounds=150_000, seed=9)
    b = splitting_attack_leak(SPLIT_PARAMS, 10.0, n_rounds=150_000, seed=9, workers=3)
    assert a.to_dict() == b.to_dict()
    c = splitting_attack_leak(SPLIT_PARAMS, 10.0, n_rounds=150_000, seed=10)
    assert c.to_dict() != a.to_dict()


def test_faked_state_in_window_is_perfect():
    out = faked_state_simulate(FS_PARAMS, BLIND, 0.2e-3, n_rounds=200_000, seed=5)
    assert out.qber == 0.0
    assert out.leak_fraction == 1.0
    assert out.feasible
    assert abs(out.detection_rate - out.analytic["detection_rate"]) <= 4 * out.stderr["detection_rate"]


def test_faked_state_out_of_window_raises_qber():
    out = faked_state_simulate(FS_PARAMS, BLIND, 0.4e-3, n_rounds=200_000, seed=5)
    assert out.analytic["qber"] == pytest.approx(1 / 3)
    assert not out.feasible
    assert not out.extra["P_tr_in_window"]


def test_faked_state_with_reference_monitoring():
    out = faked_state_simulate(FS_PARAMS, BLIND, 0.2e-3, with_reference_monitoring=True,
                               n_rounds=100_000, seed=2)
    assert out.extra["ref_monitor_passed"]
    assert "ref_click_rate" in out.analytic
    weak = faked_state_simulate(FS_PARAMS, BLIND, 0.2e-3, with_reference_monitoring=True,
                                n_rounds=100_000, seed=2, fill_power=1e-6)
    assert not weak.extra["ref_monitor_passed"]
    assert not weak.feasible


def test_faked_state_analytic_probabilities():
    a = faked_state_analytic(FS_PARAMS, BLIND, 0.2e-3)
    p_eve = (1 - math.exp(-4.0)) * usd_filter_success(0.05)
    # Eve's conclusive rate averaged over offsets is p_eve/2; Bob clicks on 1 of 4 phases
    assert a["detection_rate"] == pytest.approx(p_eve / 2 / 4)
    assert a["accepted_rate"] == pytest.approx(a["detection_rate"] / 2)


def test_faked_state_deterministic():
    a = faked_state_simulate(FS_PARAMS, BLIND, 0.2e-3, n_rounds=100_000, seed=11)
    b = faked_state_simulate(FS_PARAMS, BLIND, 0.2e-3, n_rounds=100_000, seed=11, workers=4)
    assert a.to_dict() == b.to_dict()


def test_faked_state_rejects_bad_inputs():
    with pytest.raises(DomainError):
        faked_state_simulate(FS_PARAMS, BLIND, 0.0)
    with pytest.raises(DomainError):
        faked_state_simulate(SystemParams(mu0=4.0, m=1.0, S=2, beta=0.05), BLIND, 1e-4)


def test_reference_scan_frontier():
    p = SystemParams(mu0=1.0, m=0.05, S=1, beta=math.acos(math.sqrt(0.99)) / 2)
    rep = reference_manipulation_scan(p, [0.1 * i for i in range(1, 11)], 0.01)
    assert rep.p_ref_nominal == pytest.approx(1 - math.exp(-0.99))
    # analytic frontier is about 0.983, so only alpha = 1 passes on this grid
    assert rep.alpha_frontier == pytest.approx(1.0)
    fine = reference_manipulation_scan(p, [0.98, 0.985, 0.99, 1.0], 0.01)
    assert fine.alpha_frontier == pytest.approx(0.985)
    assert fine.suppression_ratio < 1.0


def test_reference_scan_validation():
    p = SystemParams(mu0=1.0, m=0.05, S=1, beta=0.1)
    with pytest.raises(DomainError):
        reference_manipulation_scan(p, [], 0.01)
    with pytest.raises(DomainError):
        reference_manipulation_scan(p, [0.5], 1.5)
