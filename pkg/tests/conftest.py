import pytest

from qkdsecval.scw import SystemParams


@pytest.fixture
def scw_params():
    return SystemParams(mu0=4.0, m=0.05, S=2, beta=0.05, eta_line=0.1, eta_bob=0.5)


@pytest.fixture
def store_path(tmp_path, monkeypatch):
    path = tmp_path / "registry.json"
    monkeypatch.setenv("QKDSECVAL_STORE", str(path))
    return path
