# test/test_invariance.py
import numpy as np
import pytest

from roa_invariance.dynsys import DecomposedField, IntegratorConfig, Method, VectorField, linear_field, zero_field
from roa_invariance.errors import DimensionMismatch, EmptyIntersection, EquilibriumOutside
from roa_invariance.invariance import (
    AffineLimit,
    GraphLimit,
    IndividualInvariantSet,
    PointLimit,
    build_candidate,
    check_boundary_flow,
    check_trajectory_invariance,
)
from roa_invariance.polytope import HalfspacePolytope


def _box_candidate(radius=1.0, dim=2):
    box = IndividualInvariantSet(HalfspacePolytope.symmetric_box(dim, radius), PointLimit(np.zeros(dim)), "box")
    return build_candidate([box], np.zeros(dim))


def test_candidate_is_the_intersection():
    left = IndividualInvariantSet(HalfspacePolytope([[1.0, 0.0]], [1.0]), AffineLimit([[1.0, 0.0]], [0.0]))
    lower = IndividualInvariantSet(HalfspacePolytope([[0.0, -1.0]], [0.0]), PointLimit([0.0, 0.0]))
    roa = build_candidate([left, lower], [0.0, 0.0])
    assert roa.omega_e.n_rows == 2
    assert roa.sources == (left, lower)
    assert roa.omega_e.contains(roa.equilibrium)


def test_disjoint_halfplanes_are_rejected():
    a = IndividualInvariantSet(HalfspacePolytope([[1.0]], [0.0]), PointLimit([0.0]))
    b = IndividualInvariantSet(HalfspacePolytope([[-1.0]], [-1.0]), PointLimit([1.0]))
    with pytest.raises(EmptyIntersection):
        build_candidate([a, b], [0.0])
    with pytest.raises(EmptyIntersection):
        build_candidate([], [0.0])


def test_equilibrium_outside_is_rejected():
    a = IndividualInvariantSet(HalfspacePolytope([[1.0]], [0.0]), PointLimit([0.0]))
    with pytest.raises(EquilibriumOutside):
        build_candidate([a], [0.5])
    with pytest.raises(DimensionMismatch):
        build_candidate([a], [0.0, 0.0])


def test_affine_limit_samples_lie_on_the_subspace(rng):
    limit = AffineLimit([[1.0, -1.0, 0.0]], [0.5])
    points = limit.sample(rng, 50)
    np.testing.assert_allclose(points @ limit.c_matrix.T, 0.5, atol=1e-12)
    assert np.ptp(points[:, 2]) > 0.1
    np.testing.assert_allclose(limit.distance(np.array([0.5, 0.0, 3.0])), 0.0, atol=1e-12)
    assert limit.distance(np.array([0.0, 0.0, 0.0])) == pytest.approx(0.5 / np.sqrt(2.0))


def test_affine_limit_shape_check():
    with pytest.raises(DimensionMismatch):
        AffineLimit([[1.0, 0.0]], [0.0, 1.0])


def test_point_and_graph_limits(rng):
    point = PointLimit([1.0, 2.0])
    np.testing.assert_array_equal(point.sample(rng, 3), [[1.0, 2.0]] * 3)
    assert point.distance([4.0, 6.0]) == pytest.approx(5.0)
    graph = GraphLimit(2, 1, lambda x: np.cos(x[..., 0]))
    samples = graph.sample(rng, 20)
    np.testing.assert_allclose(samples[:, 1], np.cos(samples[:, 0]))
    assert graph.distance(np.array([0.0, 3.0])) == pytest.approx(2.0)


def test_limit_residual_of_an_equilibrium_line(rng):
    part = VectorField(2, lambda x: np.stack([-np.sin(x[..., 0]), np.zeros(x.shape[:-1])], axis=-1))
    line = IndividualInvariantSet(HalfspacePolytope.whole_space(2), AffineLimit([[1.0, 0.0]], [0.0]))
    assert line.limit_residual(part, rng) <= 1e-12
    off_line = IndividualInvariantSet(HalfspacePolytope.whole_space(2), AffineLimit([[1.0, 0.0]], [1.0]))
    assert off_line.limit_residual(part, rng) == pytest.approx(np.sin(1.0))


def test_zero_field_has_zero_facet_flow(rng):
    roa = _box_candidate()
    report = check_boundary_flow(DecomposedField((zero_field(2), zero_field(2))), roa, 20, rng)
    assert report.passed
    for flow in report.facets:
        assert flow.samples == 20
        assert flow.part_maxima == (0.0, 0.0)
        assert flow.composite_max == 0.0


def test_outward_field_is_flagged(rng):
    roa = _box_candidate()
    field = DecomposedField((linear_field(-np.eye(2)), linear_field(2.0 * np.eye(2))))
    report = check_boundary_flow(field, roa, 30, rng)
    assert not report.passed
    parts = {part for _, part, _ in report.violations}
    assert parts == {"f2", "f"}
    for flow in report.facets:
        assert flow.composite_max <= sum(flow.part_maxima) + 1e-12


def test_facet_flow_dimension_check(rng):
    with pytest.raises(DimensionMismatch):
        check_boundary_flow(DecomposedField((zero_field(3),)), _box_candidate(), 5, rng)


def test_stable_linear_system_is_invariant(rng):
    roa = _box_candidate()
    field = linear_field([[-1.0, 0.0], [0.0, -2.0]])
    report = check_trajectory_invariance(field, roa, 50, 20.0, rng)
    assert report.invariant
    assert report.converged
    assert report.passed
    assert report.n_samples == 50


def test_start_at_equilibrium():
    report = check_trajectory_invariance(linear_field(-np.eye(2)), _box_candidate(), 1, 1.0,
                                         initial_states=[[0.0, 0.0]])
    assert report.passed
    assert report.max_distance == 0.0


def test_rotation_leaves_the_box(rng):
    roa = _box_candidate()
    rotation = linear_field([[0.0, 1.0], [-1.0, 0.0]])
    cfg = IntegratorConfig(step=0.01, method=Method.RK4)
    report = check_trajectory_invariance(rotation, roa, 1, 10.0, cfg=cfg, initial_states=[[0.9, 0.9]])
    assert not report.invariant
    (exit_record,) = report.exits
    assert exit_record.sample == 0
    assert 0.0 < exit_record.time < np.pi / 2
    assert not roa.omega_e.contains(exit_record.state)


def test_invariance_checks_horizon_and_dimension(rng):
    with pytest.raises(ValueError):
        check_trajectory_invariance(zero_field(2), _box_candidate(), 0, 1.0, rng)
    with pytest.raises(DimensionMismatch):
        check_trajectory_invariance(zero_field(3), _box_candidate(), 5, 1.0, rng)


def test_unstable_direction_is_reported_not_raised(rng):
    roa = _box_candidate()
    saddle = linear_field([[1.0, 0.0], [0.0, -1.0]])
    report = check_trajectory_invariance(saddle, roa, 20, 30.0, rng)
    assert len(report.exits) == 20
    assert not report.passed
    for record in report.exits:
        assert 0.0 < record.time < 30.0
        assert abs(record.state[0]) > 1.0
    assert np.all(np.isfinite(report.terminal_distances))


def test_sample_diverging_inside_counts_as_an_exit():
    roa = _box_candidate()
    field = VectorField(2, lambda x: np.where(x[..., :1] > 0, np.nan, -x), "half_broken")
    cfg = IntegratorConfig(step=0.01, method=Method.RK4)
    report = check_trajectory_invariance(field, roa, 2, 10.0, cfg=cfg, initial_states=[[0.5, 0.0], [-0.5, 0.2]])
    (record,) = report.exits
    assert record.sample == 0
    assert record.time == pytest.approx(0.01)
    assert record.state == (0.5, 0.0)
    assert report.terminal_distances[1] < 1e-3
