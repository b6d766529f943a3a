import numpy as np
import pytest

from regmor.femesh import annulus_mesh, partition_mesh, square_mesh
from regmor.geometry import PolarChart
from regmor.optimize import bfgs
from regmor.registration import (RegistrationConfig, RegistrationError, RegistrationProblem,
                                 Template, TemplateSpace, greedy_registration, register_one)
from regmor.sensor import SensorGrid, sensor_from_function
from regmor.spaces import build_dd_space, build_polar_space, build_rect_space


def gaussian(center, width=20.0):
    return lambda q, X: np.exp(-width * ((X[:, 0] - center[0]) ** 2 + (X[:, 1] - center[1]) ** 2))


@pytest.fixture(scope="module")
def rect_problem():
    mesh = square_mesh(4, 3)
    space = build_rect_space(3)
    grid = SensorGrid(1, 10, 3)
    tmpl = sensor_from_function(grid, gaussian((0.5, 0.5)))
    target = sensor_from_function(grid, gaussian((0.56, 0.46)))
    pb = RegistrationProblem(space, mesh, RegistrationConfig(quad_order=10),
                             TemplateSpace([Template(tmpl)]))
    return pb, tmpl, target


def fd_check(pb, sensor, a, h=1e-6):
    f, g = pb.objective(a, sensor)
    fd = np.array([(pb.objective(a + h * e, sensor)[0] - pb.objective(a - h * e, sensor)[0])
                   / (2 * h) for e in np.eye(a.size)])
    return np.linalg.norm(fd - g) / np.linalg.norm(g)


def test_config_validation():
    assert RegistrationConfig().c_exp == pytest.approx(0.0025)
    with pytest.raises(ValueError):
        RegistrationConfig(eps=1.5)
    with pytest.raises(ValueError):
        RegistrationConfig(xi=0.0)


def test_constraint_and_mesh_penalty_at_identity(rect_problem, four_partition):
    pb, _, _ = rect_problem
    zero = np.zeros(pb.space.raw_size)
    assert abs(pb.constraint(zero) + 1.0) <= 1e-8
    assert pb.mesh_penalty(zero) == pytest.approx(np.exp(-9.0), rel=1e-10)
    sp = build_dd_space(four_partition, 2)
    pm = partition_mesh(four_partition, 2, 2)
    pbd = RegistrationProblem(sp, pm, RegistrationConfig())
    zero = np.zeros(sp.raw_size)
    assert abs(pbd.constraint(zero) + 4.0) <= 1e-8
    assert pbd.mesh_penalty(zero) == pytest.approx(four_partition.area() * np.exp(-9.0),
                                                   rel=1e-10)


def test_constraint_grows_with_compression(rect_problem):
    pb, _, _ = rect_problem
    a = np.zeros(pb.space.dim)
    values = []
    for scale in (0.0, 1.0, 3.0):
        a[0] = scale
        values.append(pb.constraint(pb.space.raw(a)))
    assert values[0] <= values[1] <= values[2]


def test_objective_gradient_rect(rect_problem, rng):
    pb, _, target = rect_problem
    for _ in range(3):
        a = rng.normal(size=pb.space.dim)
        a *= 0.05 / np.linalg.norm(a)
        assert fd_check(pb, target, a) < 1e-5


def test_objective_gradient_polar(rng):
    ch = PolarChart(0.2, 1.0)
    space = build_polar_space(3, 2, ch)
    mesh = annulus_mesh(ch, 2, 12, 3)
    grid = SensorGrid(1, 10, 3, periodic=True)
    f = lambda c: (lambda q, X: np.exp(-5 * (X[:, 0] - 0.5) ** 2) * (1 + np.cos(2 * np.pi * (X[:, 1] - c))))
    pb = RegistrationProblem(space, mesh, RegistrationConfig(quad_order=10),
                             TemplateSpace([Template(sensor_from_function(grid, f(0.0)))]))
    tgt = sensor_from_function(grid, f(0.1))
    a = rng.normal(size=space.dim)
    a *= 0.05 / np.linalg.norm(a)
    assert fd_check(pb, tgt, a) < 1e-5


def test_objective_gradient_dd(rng, four_partition):
    space = build_dd_space(four_partition, 2)
    mesh = partition_mesh(four_partition, 2, 2)
    grid = SensorGrid(4, 6, 3)
    pb = RegistrationProblem(space, mesh, RegistrationConfig(quad_order=8),
                             TemplateSpace([Template(sensor_from_function(grid, gaussian((0.5, 0.4))))]))
    tgt = sensor_from_function(grid, gaussian((0.55, 0.5)))
    a = rng.normal(size=space.dim)
    a *= 0.05 / np.linalg.norm(a)
    assert fd_check(pb, tgt, a) < 1e-5


def test_register_template_itself_is_exact(rect_problem):
    pb, tmpl, _ = rect_problem
    r = register_one(pb, tmpl)
    assert r.success and r.f <= 1e-10
    np.testing.assert_allclose(r.a, 0.0, atol=1e-8)


def test_register_shifted_target(rect_problem):
    pb, tmpl, target = rect_problem
    f0 = pb.proximity(np.zeros(pb.space.raw_size), target)
    r = register_one(pb, target)
    assert r.success and r.constraint <= 0 and r.min_det > 0
    assert r.f < 0.05 * f0
    # the template peak should be carried toward the target peak
    moved = np.array([0.5, 0.5]) + pb.space.displacement(r.a, 0, np.array([[0.5, 0.5]]))[0]
    assert np.linalg.norm(moved - [0.56, 0.46]) < 0.03


def test_infeasible_start_and_dependent_templates(rect_problem):
    pb, tmpl, _ = rect_problem
    a = np.zeros(pb.space.dim)
    a[0] = 50.0
    with pytest.raises(RegistrationError):
        register_one(pb, tmpl, a)
    with pytest.raises(RegistrationError):
        pb.set_templates(TemplateSpace([Template(tmpl), Template(tmpl)]))
    pb.set_templates(TemplateSpace([Template(tmpl)]))


def test_greedy_single_snapshot(rect_problem):
    pb, tmpl, _ = rect_problem
    g = greedy_registration(pb, [tmpl], TemplateSpace([Template(tmpl)]))
    assert len(g.f_history) == 1 and g.max_f[0] <= 1e-10
    assert len(g.templates) == 1


def test_greedy_enriches_and_reduces_error(rect_problem):
    pb, tmpl, _ = rect_problem
    grid = tmpl.grid
    targets = [sensor_from_function(grid, gaussian(c)) for c in
               [(0.5, 0.5), (0.56, 0.46), (0.44, 0.53), (0.52, 0.58)]]
    pb.cfg.n_max = 3
    try:
        g = greedy_registration(pb, targets, TemplateSpace([Template(targets[0])]))
    finally:
        pb.cfg.n_max = 5
        pb.set_templates(TemplateSpace([Template(tmpl)]))
    assert len(g.f_history) == 2 and len(g.templates) == 3
    assert g.max_f[1] <= g.max_f[0]
    assert g.coefficients.shape == (4, g.basis.shape[1])


def test_bfgs_rosenbrock_and_infeasible_points():
    def rosen(x):
        f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
        g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2),
                      200 * (x[1] - x[0] ** 2)])
        return f, g
    r = bfgs(rosen, [-1.2, 1.0], max_iter=1000, max_step=10.0)
    assert r.status == "converged"
    np.testing.assert_allclose(r.x, [1.0, 1.0], atol=1e-6)

    def barrier(x):
        if x[0] <= 0:
            return np.inf, np.zeros(1)
        return x[0] - np.log(x[0]), np.array([1 - 1 / x[0]])
    r = bfgs(barrier, [0.1], max_step=5.0)
    assert r.x[0] == pytest.approx(1.0, abs=1e-6)
    assert bfgs(barrier, [-1.0]).status == "infeasible start"
