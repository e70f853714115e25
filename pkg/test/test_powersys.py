# test/test_powersys.py
import json

import numpy as np
import pytest

from conftest import three_bus_data
from roa_invariance.errors import (
    CaseSchemaError,
    ContingencyError,
    DisconnectedNetworkError,
    MissingSlackError,
    PowerFlowDiverged,
)
from roa_invariance.powersys import (
    BusType,
    Contingency,
    ReductionKind,
    ReductionVariant,
    bus_admittance,
    case_from_dict,
    is_connected,
    kron_reduce,
    load_case,
    power_flow,
    reduce_all,
    with_damping,
    without_transfer_conductances,
)
from roa_invariance.swing import electrical_power


# --- case data ---
def test_bundled_wscc9(wscc9):
    assert wscc9.n_bus == 9
    assert len(wscc9.branches) == 9
    assert [m.h for m in wscc9.machines] == [23.64, 6.4, 3.01]
    assert wscc9.slack.id == 1
    assert wscc9.frequency_hz == 50.0


def test_bundled_ieee39(ieee39):
    assert ieee39.n_bus == 39
    assert len(ieee39.machines) == 10
    assert ieee39.slack.id == 31
    assert sum(1 for bus in ieee39.buses if bus.type is BusType.PV) == 9


def test_two_slack_buses_are_rejected():
    data = three_bus_data()
    data["buses"][1]["type"] = "slack"
    with pytest.raises(CaseSchemaError):
        case_from_dict(data)


def test_missing_slack():
    data = three_bus_data()
    data["buses"][0]["type"] = "PV"
    with pytest.raises(MissingSlackError):
        case_from_dict(data)


@pytest.mark.parametrize("mutate", [
    lambda d: d["branches"].append({"from": 1, "to": 7, "r": 0.0, "x": 0.1}),
    lambda d: d["branches"].append({"from": 2, "to": 2, "r": 0.0, "x": 0.1}),
    lambda d: d["branches"].append({"from": 1, "to": 2, "r": 0.0, "x": 0.0}),
    lambda d: d["machines"][0].update(h=0.0),
    lambda d: d["machines"][1].update(bus=1),
    lambda d: d["machines"][1].update(h="heavy"),
    lambda d: d["buses"][2].pop("id"),
    lambda d: d.pop("machines"),
    lambda d: d.update(base_mva=-1.0),
])
def test_schema_violations(mutate):
    data = three_bus_data()
    mutate(data)
    with pytest.raises(CaseSchemaError):
        case_from_dict(data)


def test_disconnected_network():
    data = three_bus_data()
    data["buses"].append({"id": 4, "type": "PQ", "p_load": 0.1})
    with pytest.raises(DisconnectedNetworkError):
        case_from_dict(data)


def test_load_case_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(CaseSchemaError):
        load_case(path)


def test_load_case_round_trip(tmp_path, three_bus_dict):
    path = tmp_path / "mine.json"
    path.write_text(json.dumps(three_bus_dict))
    case = load_case(path)
    assert case.name == "three_bus"
    assert case.machines[1].p_mech == 0.5


def test_connectivity_without_a_branch(three_bus, remote_bus_case):
    assert is_connected(three_bus, without=three_bus.find_branch(1, 3))
    assert is_connected(remote_bus_case, without=remote_bus_case.find_branch(3, 4))


# --- network and power flow ---
def test_lossless_network_rows_sum_to_zero():
    data = three_bus_data()
    for branch in data["branches"]:
        branch["b"] = 0.0
    y_bus = bus_admittance(case_from_dict(data))
    np.testing.assert_allclose(y_bus.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y_bus, y_bus.T)


def test_tap_enters_on_the_from_side():
    data = three_bus_data()
    data["branches"][0].update(r=0.0, x=0.1, b=0.0, tap=1.1)
    y_bus = bus_admittance(case_from_dict(data))
    y = 1.0 / 0.1j
    assert y_bus[0, 1] == pytest.approx(-y / 1.1)


def test_power_flow_three_bus(three_bus):
    solution = power_flow(three_bus)
    assert solution.mismatch <= 1e-8
    np.testing.assert_allclose(np.abs(solution.voltages[:2]), [1.0, 1.0])
    assert solution.injections[1].real == pytest.approx(0.5)
    assert solution.injections[2] == pytest.approx(-(0.8 + 0.2j))
    losses = solution.injections.real.sum()
    assert 0.0 <= losses < 0.05


def test_power_flow_wscc9(wscc9):
    solution = power_flow(wscc9)
    assert solution.iterations <= 10
    assert solution.voltages[0] == pytest.approx(1.05)
    assert 0.6 < solution.injections[0].real < 0.8
    assert np.all(np.abs(solution.voltages) > 0.95)


def test_power_flow_ieee39(ieee39):
    solution = power_flow(ieee39)
    assert solution.mismatch <= 1e-8
    assert np.all((np.abs(solution.voltages) > 0.9) & (np.abs(solution.voltages) < 1.1))


def test_power_flow_diverges_on_impossible_load():
    data = three_bus_data()
    data["buses"][2].update(p_load=50.0, q_load=20.0)
    with pytest.raises(PowerFlowDiverged) as info:
        power_flow(case_from_dict(data), max_iter=20)
    assert not info.value.mismatch <= 1e-8


# --- contingencies ---
def test_contingency_parse():
    c = Contingency.parse("bus:8,line:8-9")
    assert c == Contingency(8, (8, 9))
    assert str(c) == "bus:8,line:8-9"
    assert c.line_label == "8-9"
    assert Contingency.parse(" bus:4 , line:6-4 ").tripped_branch == (6, 4)


@pytest.mark.parametrize("spec", ["bus:8", "line:8-9", "bus:8,line:8", "bus:x,line:8-9", "bus:7,line:8-9"])
def test_contingency_parse_errors(spec):
    with pytest.raises(ContingencyError):
        Contingency.parse(spec)


def test_contingency_must_name_an_existing_branch(wscc9):
    assert Contingency.parse("bus:8,line:9-8").branch(wscc9).ends == frozenset((8, 9))
    with pytest.raises(ContingencyError):
        Contingency.parse("bus:8,line:8-5").branch(wscc9)


def test_variant_needs_consistent_contingency():
    with pytest.raises(ContingencyError):
        ReductionVariant(ReductionKind.FAULT_ON)
    with pytest.raises(ContingencyError):
        ReductionVariant(ReductionKind.PRE_FAULT, Contingency(3, (1, 3)))


# --- Kron reduction ---
def test_prefault_reduction_reproduces_the_operating_point(wscc9):
    solution = power_flow(wscc9)
    pre = kron_reduce(wscc9, solution)
    assert pre.y_reduced.shape == (3, 3)
    assert pre.symmetry_residual() == 0.0
    np.testing.assert_allclose(electrical_power(pre, pre.initial_angles), pre.p_mech, atol=1e-8)
    np.testing.assert_allclose(pre.p_mech[1:], [1.63, 0.85], atol=1e-8)
    np.testing.assert_allclose(pre.m_inertia, 2.0 * np.array([23.64, 6.4, 3.01]) / (2 * np.pi * 50.0))


def test_internal_voltages_lead_terminal_voltages(wscc9):
    solution = power_flow(wscc9)
    pre = kron_reduce(wscc9, solution)
    terminal = solution.voltages[[0, 1, 2]]
    assert np.all(np.angle(pre.e_internal) > np.angle(terminal))
    assert np.all(pre.e_magnitude > 0.98)


def test_fault_weakens_transfer(wscc9):
    pre, fault, post = reduce_all(wscc9, Contingency.parse("bus:8,line:8-9"))
    off_diagonal = ~np.eye(3, dtype=bool)
    assert np.abs(fault.y_reduced[off_diagonal]).sum() < np.abs(pre.y_reduced[off_diagonal]).sum()
    assert not np.allclose(post.y_reduced, pre.y_reduced)
    assert pre.variant == "pre_fault"
    assert fault.variant == "fault_on(bus:8,line:8-9)"
    assert post.variant == "post_fault(bus:8,line:8-9)"
    np.testing.assert_array_equal(post.e_internal, pre.e_internal)


def test_lossless_switch_drops_conductances(three_bus):
    solution = power_flow(three_bus)
    lossless = kron_reduce(three_bus, solution, lossless=True)
    lossy = kron_reduce(three_bus, solution)
    assert np.all(lossless.y_reduced.real == 0.0)
    np.testing.assert_allclose(lossless.y_reduced.imag, lossy.y_reduced.imag)
    assert np.any(lossy.y_reduced.real != 0.0)


def test_with_damping_copies(three_bus):
    pre = kron_reduce(three_bus, power_flow(three_bus))
    undamped = with_damping(pre, 0.0)
    np.testing.assert_array_equal(undamped.d_damp, [0.0, 0.0])
    np.testing.assert_allclose(pre.d_damp, np.array([0.5, 0.3]) / (2 * np.pi * 60.0))


def test_damping_is_per_unit_speed(ieee39):
    pre = kron_reduce(ieee39, power_flow(ieee39))
    np.testing.assert_allclose(pre.d_damp * ieee39.omega_s, [m.d for m in ieee39.machines])
    np.testing.assert_allclose(pre.d_damp / pre.m_inertia, 0.05)


def test_without_transfer_conductances(three_bus):
    lossy = kron_reduce(three_bus, power_flow(three_bus))
    dropped = without_transfer_conductances(lossy)
    off_diagonal = ~np.eye(2, dtype=bool)
    assert np.all(dropped.y_reduced.real[off_diagonal] == 0.0)
    np.testing.assert_array_equal(np.diag(dropped.y_reduced), np.diag(lossy.y_reduced))
    np.testing.assert_array_equal(dropped.y_reduced.imag, lossy.y_reduced.imag)
    assert np.any(lossy.y_reduced.real[off_diagonal] != 0.0)
