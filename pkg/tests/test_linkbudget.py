import json
import math
import warnings

import pytest

from qkdsecval.errors import DomainError, UnknownComponentError
from qkdsecval.linkbudget import (
    ComponentChain,
    ComponentSpec,
    db_to_linear,
    laser_damage_whatif,
    linear_to_db,
    load_chain,
    one_way_loss,
    tha_required_photons,
    tha_required_power,
    tha_round_trip_loss,
)
from qkdsecval.scw import SystemParams, photon_energy


def zero_chain():
    return ComponentChain([ComponentSpec("A", 0.0), ComponentSpec("R", 0.0, return_loss_dB=45.0)], 0.0, 0)


def test_builtin_fixtures():
    alice = load_chain("alice_scw")
    assert [c.id for c in alice.components][:3] == ["VOA", "PSM1", "LP"]
    assert tha_round_trip_loss(alice, "LP") == pytest.approx(193.4, abs=1e-9)
    bob = load_chain("bob_scw")
    assert one_way_loss(bob, "PBC") == pytest.approx(3.38, abs=1e-12)
    assert tha_round_trip_loss(bob, "PBC") == pytest.approx(56.76, abs=1e-9)


def test_zero_chain():
    ch = zero_chain()
    assert one_way_loss(ch, "R") == 0.0
    assert tha_round_trip_loss(ch, "R") == 45.0


def test_single_component_with_connectors():
    ch = ComponentChain([ComponentSpec("X", 3.0), ComponentSpec("R", 0.0, 20.0)], 0.3, 2)
    assert one_way_loss(ch, "R") == pytest.approx(3.6)


def test_unknown_component():
    with pytest.raises(UnknownComponentError):
        one_way_loss(zero_chain(), "nope")


def test_reflector_without_return_loss():
    with pytest.raises(DomainError):
        tha_round_trip_loss(load_chain("alice_scw"), "FOA")


def test_removing_voa_drops_140_db():
    alice = load_chain("alice_scw")
    drop = tha_round_trip_loss(alice, "LP") - tha_round_trip_loss(alice.without("VOA"), "LP")
    assert drop == pytest.approx(140.0, abs=1e-9)


def test_backward_loss_for_isolators():
    ch = ComponentChain([ComponentSpec("OI", 0.5, None, 30.0), ComponentSpec("R", 0.0, 40.0)], 0.0, 0)
    assert tha_round_trip_loss(ch, "R") == pytest.approx(0.5 + 30.0 + 40.0)


def test_db_round_trip():
    for db in (-30.0, 0.0, 3.0, 56.76, 193.4):
        assert linear_to_db(db_to_linear(db)) == pytest.approx(db, rel=1e-10, abs=1e-12)


def test_required_power_values():
    assert tha_required_photons(193.4, 1e-6) == pytest.approx(2.2e13, rel=0.01)
    assert tha_required_power(193.4, 1e-6) == pytest.approx(280.0, rel=0.02)
    assert tha_required_power(56.8, 1.0) == pytest.approx(6e-6, rel=0.05)
    assert tha_required_power(0.0, 1.0, 1e8, 1550e-9) == pytest.approx(1e8 * photon_energy(1550e-9))


def test_required_power_monotone():
    assert tha_required_power(50.0, 1.0) < tha_required_power(50.1, 1.0)
    assert tha_required_power(50.0, 1.0) < tha_required_power(50.0, 1.1)
    with pytest.raises(DomainError):
        tha_required_power(-1.0, 1.0)
    with pytest.raises(DomainError):
        tha_required_power(10.0, 0.0)


def test_chain_json_roundtrip(tmp_path):
    alice = load_chain("alice_scw")
    path = tmp_path / "chain.json"
    path.write_text(json.dumps(alice.to_dict()))
    again = load_chain(path)
    assert again.to_dict() == alice.to_dict()
    assert tha_round_trip_loss(again, "LP") == tha_round_trip_loss(alice, "LP")


def test_chain_validation():
    with pytest.raises(DomainError):
        ComponentChain([], 0.3, 4)
    with pytest.raises(DomainError):
        ComponentSpec("X", -1.0)
    with pytest.raises(DomainError):
        ComponentChain([ComponentSpec("X", 1.0)], 0.3, -1)


def test_laser_damage_no_change():
    p = SystemParams(mu0=4.0, m=0.05, S=2, beta=0.05)
    rep = laser_damage_whatif(load_chain("alice_scw"), "VOA", 0.0, p, mu_max=1.0, mu_sb=0.1)
    assert rep.mu_sb_after == rep.mu_sb == 0.1
    assert rep.verdict == rep.verdict_before == "secure"


def test_laser_damage_ten_db():
    p = SystemParams(mu0=4.0, m=0.05, S=2, beta=0.05)
    rep = laser_damage_whatif(load_chain("alice_scw"), "VOA", 10.0, p, mu_max=0.5, mu_sb=0.1)
    assert rep.mu_sb_after == pytest.approx(1.0)
    assert rep.verdict == "insecure"
    before, after = rep.round_trips["LP"]
    assert before - after == pytest.approx(20.0)


def test_laser_damage_clamps_with_warning():
    p = SystemParams(mu0=4.0, m=0.05, S=2, beta=0.05)
    with pytest.warns(UserWarning, match="clamped"):
        rep = laser_damage_whatif(load_chain("alice_scw"), "PSM1", 5.0, p, mu_max=1.0, mu_sb=0.1)
    assert rep.clamped and rep.delta_dB_applied == 3.0
    assert rep.mu_sb_after == pytest.approx(0.1 * 10 ** 0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        laser_damage_whatif(load_chain("alice_scw"), "PSM1", 3.0, p, mu_max=1.0, mu_sb=0.1)


def test_laser_damage_rejects_negative():
    p = SystemParams(mu0=4.0, m=0.05, S=2, beta=0.05)
    with pytest.raises(DomainError):
        laser_damage_whatif(load_chain("alice_scw"), "VOA", -1.0, p, mu_max=1.0)
    assert math.isfinite(laser_damage_whatif(load_chain("alice_scw"), "VOA", 1.0, p, mu_max=1.0).mu_sb)
