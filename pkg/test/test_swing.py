# test/test_swing.py
import numpy as np
import pytest

from roa_invariance.dynsys import IntegratorConfig, integrate
from roa_invariance.errors import DimensionMismatch
from roa_invariance.powersys import (
    Contingency,
    kron_reduce,
    power_flow,
    reduce_all,
    with_damping,
    without_transfer_conductances,
)
from roa_invariance.swing import (
    angle_potential,
    coi_kinetic_energy,
    electrical_power,
    energy,
    net_injection,
    reduced_angle_field,
    relative_injection,
    swing_field,
    swing_system,
    synchronous_equilibrium,
)


@pytest.fixture(scope="module")
def wscc9_post(wscc9):
    _, _, post = reduce_all(wscc9, Contingency.parse("bus:8,line:8-9"))
    return post


@pytest.fixture(scope="module")
def wscc9_pre(wscc9):
    return kron_reduce(wscc9, power_flow(wscc9))


def _states(n_mach, count=40, seed=0):
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.uniform(-np.pi, np.pi, (count, n_mach)), rng.normal(0.0, 2.0, (count, n_mach))], axis=1)


def test_parts_sum_to_the_monolithic_field(wscc9_post):
    x = _states(3)
    field = swing_field(wscc9_post)
    assert len(field) == 1 + 3
    assert [p.name for p in field.parts] == ["linear", "pair12", "pair13", "pair23"]
    np.testing.assert_allclose(field(x), swing_system(wscc9_post)(x), rtol=1e-12, atol=1e-12)


def test_parts_sum_exactly_in_declaration_order(wscc9_post):
    x = _states(3, seed=1)
    field = swing_field(wscc9_post)
    total = field.parts[0](x)
    for part in field.parts[1:]:
        total = total + part(x)
    assert np.array_equal(field(x), total)


def test_pair_parts_touch_only_their_machines(wscc9_post):
    x = _states(3, count=5)
    pair13 = swing_field(wscc9_post).parts[2](x)
    assert np.all(pair13[:, :3] == 0.0)
    assert np.all(pair13[:, 4] == 0.0)


def test_prefault_point_is_an_equilibrium(wscc9_pre):
    state = np.r_[wscc9_pre.initial_angles, np.zeros(3)]
    np.testing.assert_allclose(swing_system(wscc9_pre)(state), 0.0, atol=1e-6)


def test_electrical_power_shape_check(wscc9_pre):
    assert electrical_power(wscc9_pre, np.zeros((4, 3))).shape == (4, 3)
    with pytest.raises(DimensionMismatch):
        electrical_power(wscc9_pre, np.zeros(2))


def test_energy_is_conserved_without_losses_or_damping(wscc9):
    _, _, post = reduce_all(wscc9, Contingency.parse("bus:8,line:8-9"), lossless=True)
    post = with_damping(post, 0.0)
    x0 = np.r_[post.initial_angles + np.array([0.0, 0.3, -0.2]), np.zeros(3)]
    traj = integrate(swing_system(post), x0, 5.0, IntegratorConfig(step=1e-3))
    assert traj.final_time == pytest.approx(5.0)
    e = energy(post, traj.states)
    assert np.ptp(e) <= 1e-6 * max(1.0, abs(e[0]))


def test_energy_decays_with_damping(three_bus):
    pre = kron_reduce(three_bus, power_flow(three_bus), lossless=True)
    x0 = np.r_[pre.initial_angles + np.array([0.0, 0.4]), np.zeros(2)]
    traj = integrate(swing_system(pre), x0, 3.0, IntegratorConfig(step=1e-3))
    e = energy(pre, traj.states)
    assert e[-1] < e[0]


def test_synchronous_equilibrium_balances_power(wscc9_post, wscc9_pre):
    sep = synchronous_equilibrium(wscc9_post, wscc9_pre.initial_angles)
    assert sep.delta[0] == 0.0
    residual = net_injection(wscc9_post) - (electrical_power(wscc9_post, sep.delta)
                                            - np.real(np.diag(wscc9_post.y_reduced)) * wscc9_post.e_magnitude ** 2)
    np.testing.assert_allclose(residual, wscc9_post.d_damp * sep.slip, atol=1e-8)
    np.testing.assert_allclose(sep.relative, sep.delta[1:])


def test_prefault_equilibrium_has_no_slip(wscc9_pre):
    sep = synchronous_equilibrium(wscc9_pre)
    assert abs(sep.slip) < 1e-8
    np.testing.assert_allclose(sep.relative, wscc9_pre.initial_angles[1:] - wscc9_pre.initial_angles[0], atol=1e-8)


def test_undamped_equilibrium_drops_the_slip(wscc9):
    pre = with_damping(kron_reduce(wscc9, power_flow(wscc9), lossless=True), 0.0)
    sep = synchronous_equilibrium(pre)
    assert sep.slip == 0.0
    assert sep.delta.shape == (3,)


def test_reduced_angle_field(wscc9_pre):
    field = reduced_angle_field(wscc9_pre)
    assert field.dim == 2
    y = wscc9_pre.initial_angles[1:] - wscc9_pre.initial_angles[0]
    np.testing.assert_allclose(field(y), 0.0, atol=1e-6)
    delta = np.r_[0.0, y + 0.1]
    p_net = net_injection(wscc9_pre)
    p_e = electrical_power(wscc9_pre, delta) - np.real(np.diag(wscc9_pre.y_reduced)) * wscc9_pre.e_magnitude ** 2
    np.testing.assert_allclose(field(y + 0.1), (p_net - p_e)[1:], atol=1e-12)


# --- centre-of-inertia energy ---
def test_angle_potential_gradient_is_the_reduced_field(wscc9_post):
    view = without_transfer_conductances(wscc9_post)
    field = reduced_angle_field(view, centre_of_inertia=True)
    y = np.random.default_rng(2).uniform(-2.0, 2.0, size=(10, 2))
    h = 1e-6
    for k in range(2):
        step = np.zeros(2)
        step[k] = h
        slope = (angle_potential(view, y + step) - angle_potential(view, y - step)) / (2 * h)
        np.testing.assert_allclose(-slope, field(y)[:, k], atol=1e-6)


def test_angle_potential_shape_check(wscc9_post):
    with pytest.raises(DimensionMismatch):
        angle_potential(wscc9_post, np.zeros(3))


def test_relative_injection_sums_to_zero(wscc9_post):
    assert relative_injection(wscc9_post).sum() == pytest.approx(0.0, abs=1e-12)


def test_coi_kinetic_energy_ignores_common_speed(wscc9_post):
    omega = np.random.default_rng(4).normal(size=(6, 3))
    np.testing.assert_allclose(coi_kinetic_energy(wscc9_post, omega + 2.5), coi_kinetic_energy(wscc9_post, omega))
    assert coi_kinetic_energy(wscc9_post, np.full(3, 7.0)) == pytest.approx(0.0, abs=1e-12)


def test_undamped_equilibrium_shares_one_acceleration(wscc9):
    pre = with_damping(kron_reduce(wscc9, power_flow(wscc9), lossless=True), 0.0)
    sep = synchronous_equilibrium(pre)
    mismatch = net_injection(pre) - electrical_power(pre, sep.delta)
    np.testing.assert_allclose(mismatch / pre.m_inertia, mismatch.sum() / pre.m_inertia.sum(), atol=1e-8)
