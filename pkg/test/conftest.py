# test/conftest.py
import numpy as np
import pytest

from roa_invariance.powersys import bundled_case_path, case_from_dict, load_case


def three_bus_data(**overrides) -> dict:
    """Two machines feeding one load through a meshed triangle."""
    data = {
        "name": "three_bus",
        "base_mva": 100.0,
        "frequency_hz": 60.0,
        "buses": [
            {"id": 1, "type": "slack", "vm": 1.0},
            {"id": 2, "type": "PV", "vm": 1.0},
            {"id": 3, "type": "PQ", "p_load": 0.8, "q_load": 0.2},
        ],
        "branches": [
            {"from": 1, "to": 2, "r": 0.01, "x": 0.1, "b": 0.02},
            {"from": 1, "to": 3, "r": 0.01, "x": 0.1, "b": 0.02},
            {"from": 2, "to": 3, "r": 0.01, "x": 0.1, "b": 0.02},
        ],
        "machines": [
            {"bus": 1, "h": 5.0, "d": 0.5, "xd_prime": 0.2},
            {"bus": 2, "h": 3.0, "d": 0.3, "xd_prime": 0.25, "p_mech": 0.5},
        ],
    }
    data.update(overrides)
    return data


@pytest.fixture
def three_bus_dict():
    return three_bus_data()


@pytest.fixture
def three_bus(three_bus_dict):
    return case_from_dict(three_bus_dict)


def remote_bus_data() -> dict:
    """The three-bus case plus bus 4 hanging off bus 3 on two weak parallel lines."""
    data = three_bus_data(name="remote_bus")
    data["buses"] = data["buses"] + [{"id": 4, "type": "PQ"}]
    data["branches"] = data["branches"] + [
        {"from": 3, "to": 4, "r": 0.0, "x": 50.0},
        {"from": 3, "to": 4, "r": 0.0, "x": 50.0},
    ]
    return data


@pytest.fixture
def remote_bus_case():
    return case_from_dict(remote_bus_data())


@pytest.fixture(scope="session")
def wscc9():
    return load_case(bundled_case_path("wscc9"))


@pytest.fixture(scope="session")
def ieee39():
    return load_case(bundled_case_path("ieee39"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
