"""End-to-end acceptance checks; each prints one PASS/FAIL line.

The expensive offline runs are module-scoped fixtures shared between checks.
"""
import time

import numpy as np
import pytest

from regmor.femesh import MappingError, annulus_mesh, partition_mesh, square_mesh
from regmor.geometry import (PolarChart, facet_points, partition_from_elements,
                             straight_element)
from regmor.pipeline import OfflineSettings, evaluate, nearest_index, offline
from regmor.reduction import CoefficientRegressor, loo_r2, pod_cardinality
from regmor.registration import RegistrationConfig, RegistrationProblem, Template, TemplateSpace
from regmor.sensor import SensorGrid, sensor_from_function
from regmor.spaces import (build_dd_space, build_polar_space, build_rect_space, constraint_rank,
                           dd_dimension_formula, rect_dimension_formula)
from regmor.synthetic import ManifoldSpec, four_element_partition, generate

# desk-scale settings per manifold (sensor smoothing matched to feature width)
FRONT = dict(n_train=30, design="grid", n_test=20, seed=1, mesh_cells=8, J=6, xi=1e-3, xi_s=1.0,
             quad_order=20, max_iter=150, n_max=3)
SQUARE = dict(n_train=20, n_test=20, seed=1, mesh_cells=12, J=6, xi=1e-4, xi_s=1.0,
              quad_order=12, max_iter=150, n_max=3)
ANNULUS = dict(n_train=20, seed=1, mesh_cells=6, J_r=8, J_f=6, xi=1e-4, xi_s=100.0,
               quad_order=12, max_iter=150, n_max=3)
N_COMPARE = (2, 4, 6)


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def settings_for(cfg, pod_n=0):
    reg = RegistrationConfig(xi=cfg["xi"], quad_order=cfg["quad_order"],
                             max_iter=cfg["max_iter"], n_max=cfg["n_max"])
    return OfflineSettings(xi_s=cfg["xi_s"], pod_n=pod_n, reg=reg)


def run_manifold(kind, cfg, space_fn, pod_n=0, with_unregistered=True):
    spec = ManifoldSpec(kind, n_train=cfg["n_train"], n_test=cfg.get("n_test", 20),
                        seed=cfg["seed"], mesh_cells=cfg["mesh_cells"],
                        design=cfg.get("design", "random"))
    prob, mtr, U, mte, _ = generate(spec)
    space = space_fn(prob)
    st = settings_for(cfg, pod_n)
    t0 = time.perf_counter()
    reg = offline(prob.mesh, space, U, mtr, st, template_index=nearest_index(mtr, spec.center),
                  field=prob.field)
    unreg = offline(prob.mesh, space, U, mtr, st, registered=False) if with_unregistered else None
    return dict(spec=spec, prob=prob, space=space, mtr=mtr, mte=mte, reg=reg, unreg=unreg,
                settings=st, wall=time.perf_counter() - t0)


@pytest.fixture(scope="module")
def front():
    # fixed POD size for comparisons at equal N; the full spectrum is kept regardless
    return run_manifold("partitioned_front", FRONT, lambda p: p.default_space(J=FRONT["J"]),
                        pod_n=max(N_COMPARE))


@pytest.fixture(scope="module")
def square():
    return run_manifold("square_front", SQUARE, lambda p: p.default_space(J=SQUARE["J"]),
                        pod_n=max(N_COMPARE))


def trained_and_predicted_bijective(run, n_oos, seed):
    """Failure counts over training maps and out-of-sample predictions.

    Returns (non-bijective training maps, failed registrations, inverted
    elements over predictions, predictions moving a node out of the domain).
    """
    prob, space, g, model = run["prob"], run["space"], run["reg"].greedy, run["reg"].model
    pb = RegistrationProblem(space, prob.mesh, run["settings"].reg)
    bad_train = 0
    for c in g.maps:
        try:
            bad_train += not pb.bijectivity(c).passed
        except MappingError:
            bad_train += 1
    failed = sum(len(f) for f in g.failures[-1:])
    lo, hi = np.asarray(run["spec"].lo), np.asarray(run["spec"].hi)
    mus = lo + (hi - lo) * np.random.default_rng(seed).random((n_oos, lo.size))
    inverted = outside = 0
    for mu in mus:
        try:
            _, rep = model.predict_map(mu)
        except MappingError:
            outside += 1
            continue
        inverted += len(rep.offending)
    return bad_train, failed, inverted, outside


# ---------------------------------------------------------------------------

def test_criterion_1_bijectivity_suite(front, capsys):
    t0 = time.perf_counter()
    ann = run_manifold("annulus_gaussian", ANNULUS,
                       lambda p: p.default_space(J_r=ANNULUS["J_r"], J_f=ANNULUS["J_f"]),
                       with_unregistered=False)
    results = {"annulus": trained_and_predicted_bijective(ann, 100, 11),
               "front": trained_and_predicted_bijective(front, 100, 12)}
    wall = time.perf_counter() - t0
    active = int(ann["reg"].model.mapping.active.sum())
    ok = all(not any(r) for r in results.values()) and wall <= 300
    detail = ", ".join(f"{k}: {b} bad training maps, {f} failed registrations, "
                       f"{i} inverted elements and {o} out-of-domain maps over 100 predictions"
                       for k, (b, f, i, o) in results.items())
    verdict(capsys, 1, ok, f"{detail}; annulus active mapping modes {active}; {wall:.0f}s "
            f"(partitioned-front training excluded, timed under criterion 2)")


def test_criterion_2_registration_effectiveness(front, capsys):
    reg, unreg = front["reg"].model, front["unreg"].model
    lr = reg.eigenvalues / reg.eigenvalues[0]
    lu = unreg.eigenvalues / unreg.eigenvalues[0]
    n_reg = pod_cardinality(reg.eigenvalues, 1e-3)
    n_unreg = pod_cardinality(unreg.eigenvalues, 1e-3)
    ok = n_reg <= n_unreg / 2 and lr[4] <= 1e-2 * lu[4] and front["wall"] <= 900
    verdict(capsys, 2, ok, f"POD size {n_reg} vs {n_unreg}; lambda5/lambda1 {lr[4]:.3e} vs "
            f"{lu[4]:.3e} (ratio {lr[4] / lu[4]:.3e}); {front['wall']:.0f}s")


def test_criterion_3_prediction_improvement(front, square, capsys):
    lines, ok = [], True
    for name, run in (("square", square), ("partitioned", front)):
        truth = lambda mu, nodes, p=run["prob"]: p.field(mu, nodes)
        er, _ = evaluate(run["reg"].model, run["mte"], truth, N_COMPARE)
        eu, _ = evaluate(run["unreg"].model, run["mte"], truth, N_COMPARE)
        ok &= all(er[n] < eu[n] for n in N_COMPARE)
        lines.append(name + " " + " ".join(f"N={n}: {er[n]:.3e}<{eu[n]:.3e}" for n in N_COMPARE))
    verdict(capsys, 3, ok, "; ".join(lines))


def _fd_error(pb, sensor, a, h=1e-6):
    _, g = pb.objective(a, sensor)
    fd = np.array([(pb.objective(a + h * e, sensor)[0] - pb.objective(a - h * e, sensor)[0])
                   / (2 * h) for e in np.eye(a.size)])
    return np.linalg.norm(fd - g) / np.linalg.norm(g)


def _bump(cx, cy, w=15.0):
    return lambda q, X: np.exp(-w * ((X[:, 0] - cx) ** 2 + (X[:, 1] - cy) ** 2))


def _gradient_problems():
    chart = PolarChart(0.2, 1.0)
    part = four_element_partition()
    wave = lambda c: (lambda q, X: np.exp(-5 * (X[:, 0] - 0.5) ** 2)
                      * (1 + np.cos(2 * np.pi * (X[:, 1] - c))))
    cases = {
        "rect": (build_rect_space(4), square_mesh(4, 3), SensorGrid(1, 10, 3),
                 _bump(0.5, 0.5), _bump(0.55, 0.45)),
        "polar": (build_polar_space(4, 3, chart), annulus_mesh(chart, 2, 12, 3),
                  SensorGrid(1, 10, 3, periodic=True), wave(0.0), wave(0.08)),
        "dd": (build_dd_space(part, 3), partition_mesh(part, 2, 3), SensorGrid(4, 6, 3),
               _bump(0.5, 0.4), _bump(0.55, 0.5)),
    }
    for name, (space, mesh, grid, f0, f1) in cases.items():
        pb = RegistrationProblem(space, mesh, RegistrationConfig(quad_order=8),
                                 TemplateSpace([Template(sensor_from_function(grid, f0))]))
        yield name, pb, sensor_from_function(grid, f1)


def test_criterion_4_gradient_correctness(capsys):
    rng = np.random.default_rng(4)
    worst = {}
    for name, pb, tgt in _gradient_problems():
        errs = []
        while len(errs) < 20:
            a = rng.normal(size=pb.space.dim)
            a *= 0.01 / np.linalg.norm(a)
            if pb.constraint(pb.space.raw(a)) > 0 or not np.isfinite(pb.objective(a, tgt)[0]):
                continue
            errs.append(_fd_error(pb, tgt, a))
        worst[name] = max(errs)
    ok = all(v < 1e-5 for v in worst.values())
    verdict(capsys, 4, ok, "worst relative FD mismatch over 20 points: "
            + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_5_constraint_calibration(capsys):
    cfg = RegistrationConfig()
    assert (cfg.eps, cfg.c_exp, cfg.delta, cfg.f_msh_max) == pytest.approx((0.1, 0.0025, 1.0, 10.0))
    part = four_element_partition()
    x, y = np.array([(0, -2), (3.5, -2), (4.5, 0), (3.5, 2), (0, 2)], dtype=float).T
    area = 0.5 * abs(x @ np.roll(y, -1) - y @ np.roll(x, -1))
    cases = [("rect", build_rect_space(3), square_mesh(4, 3), 1.0),
             ("dd", build_dd_space(part, 3), partition_mesh(part, 3, 3), area)]
    lines, ok = [], True
    for name, space, mesh, omega in cases:
        pb = RegistrationProblem(space, mesh, cfg, quad_order=8)
        c0 = np.zeros(space.raw_size)
        cv, m = pb.constraint(c0), pb.mesh_penalty(c0)
        target = omega * np.exp(-9.0)
        ok &= abs(cv + space.n_elements) <= 1e-8 and abs(m - target) <= 1e-10 * target
        lines.append(f"{name}: c(0)={cv:.12f}, Nmsh(0)/(|Omega|e^-9)-1={m / target - 1:.1e}")
    verdict(capsys, 5, ok, "; ".join(lines))


def test_criterion_6_space_dimensions(capsys):
    rect = {J: build_rect_space(J).dim for J in range(2, 9)}
    ok = all(rect[J] == 2 * (J + 1) ** 2 - 4 * (J + 1) for J in rect)
    strip = partition_from_elements([straight_element((0, 0), (1, 0), (1, 1), (0, 1)),
                                     straight_element((1, 0), (2.5, 0), (2.5, 1), (1, 1))])
    parts = [four_element_partition(), four_element_partition(rotation=0.15), strip]
    dd = []
    for p in parts:
        sp = build_dd_space(p, 4)
        dd.append((sp.dim, sp.raw_size - constraint_rank(sp.C)))
    ok &= all(a == b for a, b in dd)
    part = parts[0]
    counts = {J: (build_dd_space(part, J).dim,
                  build_dd_space(part, J, continuity="vector").dim,
                  dd_dimension_formula(J, part.n_elements, part.n_int)) for J in (6, 10)}
    note = ", ".join(f"J={J}: tangential {t}, full-vector {v}, closed form {f}"
                     for J, (t, v, f) in counts.items())
    verdict(capsys, 6, ok, f"rect J=2..8 {list(rect.values())} match "
            f"{[rect_dimension_formula(J) for J in rect]}; dd vs rank oracle {dd}; "
            f"reported (not asserted): reference count 608 vs {note}")


def test_criterion_7_convex_combination_norm(capsys):
    chart = PolarChart(0.2, 1.0)
    space = build_polar_space(6, 4, chart)
    rng = np.random.default_rng(7)
    worst = 0.0
    theta = rng.uniform(-0.5, 0.5, 100)
    X = np.column_stack([np.ones(100), theta])
    ts = np.linspace(0.0, 1.0, 11)
    for _ in range(5):
        P = [chart.forward(X + space.displacement(0.3 * rng.normal(size=space.dim), 0, X))
             for _ in range(2)]
        d2 = np.sum((P[1] - P[0]) ** 2, axis=1)
        for t in ts:
            Pt = (1 - t) * P[0] + t * P[1]
            worst = max(worst, np.abs(np.sum(Pt ** 2, axis=1) - (1 + (t * t - t) * d2)).max())
    verdict(capsys, 7, worst <= 1e-12, f"max deviation {worst:.1e} on 100 outer-circle points "
            f"x 11 t values x 5 map pairs")


def test_criterion_8_pod_truncation(capsys):
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(50):
        lam = np.sort(rng.exponential(size=rng.integers(2, 40)) ** rng.uniform(1, 6))[::-1]
        tol = 10.0 ** rng.uniform(-6, -1)
        c = np.cumsum(lam)
        oracle = int(np.argmax(c >= (1 - tol) * c[-1])) + 1
        mismatches += pod_cardinality(lam, tol) != oracle
    verdict(capsys, 8, mismatches == 0, f"{mismatches} mismatches on 50 spectra")


def test_criterion_9_geometry_round_trips(capsys):
    rng = np.random.default_rng(9)
    part = four_element_partition(rotation=0.1)
    chart = PolarChart(0.2, 1.0)
    worst_el = 0.0
    for q in range(part.n_elements):
        X = rng.random((100, 2))
        worst_el = max(worst_el, np.abs(part.inverse(q, part.forward(q, X)) - X).max())
    P = chart.forward(np.column_stack([rng.random(100), rng.uniform(-0.5, 0.5, 100)]))
    worst_pol = np.abs(chart.forward(chart.inverse(P)) - P).max()
    sp = build_dd_space(part, 4)
    t = rng.random(50)
    worst_if = 0.0
    for _ in range(5):
        c = sp.raw(0.02 * rng.normal(size=sp.dim))
        for q, ell, qq, ll, o in part.interfaces():
            X, Y = facet_points(ell, t), facet_points(ll, t if o else 1.0 - t)
            a = part.forward(q, X + sp.eval_raw(c, q, X))
            b = part.forward(qq, Y + sp.eval_raw(c, qq, Y))
            worst_if = max(worst_if, np.abs(a - b).max())
    ok = max(worst_el, worst_pol, worst_if) <= 1e-9
    verdict(capsys, 9, ok, f"element round trip {worst_el:.1e}, polar round trip "
            f"{worst_pol:.1e}, interface mismatch {worst_if:.1e}")


def test_criterion_10_regression_gating(capsys):
    rng = np.random.default_rng(10)
    mu = rng.random((40, 2))
    Y = np.column_stack([0.3 + 2 * mu[:, 0] - mu[:, 1], -mu[:, 1], rng.normal(size=40),
                         rng.normal(size=40)])
    r2 = loo_r2(mu, Y)
    reg = CoefficientRegressor(mu, Y, 0.75, "zero")
    ok = (r2[:2] >= 0.999).all() and (r2[2:] <= 0.75).all() \
        and reg.active.tolist() == [True, True, False, False]
    verdict(capsys, 10, ok, f"LOO R^2 {np.round(r2, 4).tolist()}, active "
            f"{reg.active.tolist()}")
