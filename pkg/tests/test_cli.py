import csv
import io
import json
from pathlib import Path

import pytest

from qkdsecval.cli import main
from qkdsecval.config import validate
from qkdsecval.keyrate import binary_entropy

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--format", "json")
    assert code == 0, err
    return json.loads(out)


def write_config(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"version": 1, **doc}))
    return str(path)


def test_keyrate_worked_config(capsys):
    doc = run_json(capsys, "keyrate", "--config", str(CONFIGS / "keyrate.json"))
    validate(doc, "keyrate")
    assert doc["K"] == pytest.approx(doc["nu_S"] * doc["P_B"] * (1 - 1.15 * binary_entropy(0.02) - doc["chi"]))
    assert not doc["abort"]


def test_keyrate_without_photons(capsys, tmp_path):
    cfg = write_config(tmp_path, {"system": {"mu0": 0.0, "m": 0.05, "S": 2, "beta_rad": 0.05},
                                  "rate": {"Q": 0.01, "P_B": 0.1}})
    doc = run_json(capsys, "keyrate", "--config", cfg)
    assert doc["chi"] == 0.0
    assert doc["K"] == pytest.approx(1e8 * 0.1 * (1 - 1.15 * binary_entropy(0.01)))


def test_keyrate_abort_exits_zero(capsys, tmp_path):
    cfg = write_config(tmp_path, {"system": {"mu0": 1.0, "m": 0.05, "S": 2, "beta_rad": 0.05},
                                  "rate": {"Q": 0.5}})
    doc = run_json(capsys, "keyrate", "--config", cfg)
    assert doc["abort"] and doc["K"] == 0.0


def test_finite_key_defaults_echoed(capsys):
    doc = run_json(capsys, "finite-key", "--config", str(CONFIGS / "finite_key_20kbit.json"))
    validate(doc, "finite_key")
    assert doc["epsilon"] == {"eps_s": 1e-9, "eps_EC": 1e-9, "eps_PA": 1e-9}
    assert doc["abort"]
    assert sum(doc["terms"].values()) == pytest.approx(doc["l"], abs=1)


def test_finite_key_grows_with_n(capsys, tmp_path):
    fracs = []
    for n in (10**5, 10**6, 10**7):
        cfg = write_config(tmp_path, {"finite_key": {"n": n, "k": 1000, "Q": 0.02, "chi": 0.1}})
        fracs.append(run_json(capsys, "finite-key", "--config", cfg)["l"] / n)
    assert fracs == sorted(fracs)


def test_finite_key_chi_from_system(capsys, tmp_path):
    cfg = write_config(tmp_path, {"system": {"mu0": 0.0, "m": 0.05, "S": 2, "beta_rad": 0.05},
                                  "finite_key": {"n": 10**6, "k": 1000, "Q": 0.02}})
    assert run_json(capsys, "finite-key", "--config", cfg)["chi"] == 0.0


def test_tha_alice_and_bob(capsys):
    alice = run_json(capsys, "tha", "--chain", "alice_scw", "--reflector", "LP", "--mu-out", "1e-6")
    validate(alice, "tha")
    assert alice["round_trip_dB"] == pytest.approx(193.4)
    assert alice["photons_per_pulse"] == pytest.approx(2.2e13, rel=0.02)
    assert alice["watts"] == pytest.approx(282.0, rel=0.02)
    bob = run_json(capsys, "tha", "--chain", "bob_scw", "--reflector", "PBC", "--mu-out", "1")
    assert bob["round_trip_dB"] == pytest.approx(56.8, abs=0.1)
    assert bob["photons_per_pulse"] == pytest.approx(4.8e5, rel=0.02)
    assert bob["watts"] == pytest.approx(6e-6, rel=0.05)


def test_tha_synthetic_chain(capsys, tmp_path):
    path = tmp_path / "chain.json"
    path.write_text(json.dumps({"components": [{"id": "A", "insertion_loss_dB": 0.0},
                                               {"id": "R", "insertion_loss_dB": 0.0, "return_loss_dB": 45.0}],
                                "connector_loss_dB": 0.0, "connector_count_one_way": 0}))
    doc = run_json(capsys, "tha", "--chain", str(path), "--reflector", "R", "--mu-out", "1")
    assert doc["round_trip_dB"] == 45.0


def test_tha_from_config_block(capsys, tmp_path):
    cfg = write_config(tmp_path, {"tha": {"chain": "alice_scw", "reflector": "LP", "mu_out": 1e-6}})
    assert run_json(capsys, "tha", "--config", cfg)["round_trip_dB"] == pytest.approx(193.4)


def test_attack_usd(capsys):
    doc = run_json(capsys, "attack", "usd", "--m", "0.05")
    validate(doc, "attack")
    assert doc["P_success"] == pytest.approx(4.9875e-3, rel=1e-4)
    doc = run_json(capsys, "attack", "usd", "--config", str(CONFIGS / "usd.json"))
    assert doc["reveal"]["verdict"] in ("revealed", "hidden")


def test_attack_blinding(capsys):
    doc = run_json(capsys, "attack", "blinding", "--config", str(CONFIGS / "blinding.json"))
    validate(doc, "attack")
    assert doc["P_ref_required_w"] == pytest.approx(3e-3)
    assert doc["window_w"] == pytest.approx([0.15e-3, 0.3e-3])
    assert doc["clicks_matched_phase"] and not doc["clicks_other_basis"]


def test_attack_faked_state_deterministic(capsys, tmp_path):
    cfg = json.loads((CONFIGS / "faked_state.json").read_text())
    cfg["attack"]["n_rounds"] = 50_000
    path = write_config(tmp_path, {k: v for k, v in cfg.items() if k != "version"})
    _, first, _ = run(capsys, "attack", "faked-state", "--config", path, "--format", "json")
    _, second, _ = run(capsys, "attack", "faked-state", "--config", path, "--format", "json")
    assert first == second
    doc = json.loads(first)
    validate(doc, "attack")
    assert doc["seed"] == 42


def test_seed_flag_overrides_config(capsys, tmp_path):
    cfg = json.loads((CONFIGS / "splitting.json").read_text())
    cfg["attack"]["n_rounds"] = 20_000
    path = write_config(tmp_path, {k: v for k, v in cfg.items() if k != "version"})
    doc = run_json(capsys, "attack", "splitting", "--config", path, "--seed", "7")
    assert doc["seed"] == 7 and doc["outcome"]["seed"] == 7


def test_attack_ref_scan_csv(capsys):
    code, out, _ = run(capsys, "attack", "ref-scan", "--config", str(CONFIGS / "ref_scan.json"), "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 10 and set(rows[0]) == {"alpha", "p_sb", "p_ref", "sb_ratio", "ref_ratio"}


def test_registry_flow(capsys, store_path):
    assert run(capsys, "registry", "seed")[0] == 0
    code, out, _ = run(capsys, "registry", "report", "--format", "csv")
    assert code == 0 and len(out.strip().splitlines()) == 11
    doc = run_json(capsys, "registry", "report", "--hardness", "CX")
    validate(doc, "registry_report")
    assert [r["id"] for r in doc["records"]] == ["time-shift-attack", "intersymbol-interference"]
    doc = run_json(capsys, "registry", "set", "time-shift-attack", "C0", "--note", "checked",
                   "--timestamp", "2021-01-01T00:00:00+00:00")
    assert doc["count"] == 2
    code, _, err = run(capsys, "registry", "seed")
    assert code == 2 and "overwrite" in err


def test_store_flag_beats_env(capsys, store_path, tmp_path):
    other = tmp_path / "other.json"
    assert run(capsys, "registry", "seed", "--store", str(other))[0] == 0
    assert other.exists() and not store_path.exists()


@pytest.mark.parametrize("doc", [
    {"version": 1, "unknown": 1},
    {"version": 2},
    {"version": 1, "system": {"mu0": 1.0, "m": 0.05, "S": 2}},
    {"version": 1, "system": {"mu0": 1.0, "m": 0.05, "S": 2, "beta_rad": 0.1, "eta_line": 0.0}},
    {"version": 1, "epsilon": {"eps_s": 0.0}},
])
def test_invalid_config_exits_2(capsys, tmp_path, doc):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, out, err = run(capsys, "keyrate", "--config", str(path))
    assert code == 2 and out == "" and "error" in err


def test_missing_config_exits_1(capsys, tmp_path):
    code, _, err = run(capsys, "keyrate", "--config", str(tmp_path / "missing.json"))
    assert code == 1 and err


def test_text_format_everywhere(capsys):
    code, out, _ = run(capsys, "tha", "--chain", "bob_scw", "--reflector", "PBC", "--mu-out", "1", "--format", "text")
    assert code == 0 and "round_trip_dB" in out


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("keyrate", "finite-key", "tha", "attack", "registry"):
        assert cmd in out
