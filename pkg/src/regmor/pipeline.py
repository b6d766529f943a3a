"""Offline (sensor, registration, POD, regression) and online stages."""
import time
from dataclasses import dataclass, field

import numpy as np

from .femesh import MeshLocator, assemble_inner_product, map_mesh
from .reduction import CoefficientRegressor, ReducedModel, error_metrics, pod
from .registration import (RegistrationConfig, RegistrationProblem, Template, TemplateSpace,
                           greedy_registration)
from .sensor import SensorGrid, build_sensor


@dataclass
class OfflineSettings:
    sensor_approach: str = "grid_fit"
    xi_s: float = 1e-4
    sensor_cells: int = 19
    sensor_degree: int = 3
    norm: str = "H1"
    pod_tol: float = 1e-3
    pod_n: int = 0                 # fixed size when > 0
    r2_threshold: float = 0.75
    reg: RegistrationConfig = field(default_factory=RegistrationConfig)


@dataclass
class OfflineResult:
    model: ReducedModel
    greedy: object = None
    registered: np.ndarray = None
    timings: dict = field(default_factory=dict)


def nearest_index(mus, target):
    mus = np.atleast_2d(mus)
    d = np.linalg.norm(mus - np.asarray(target, dtype=float), axis=1)
    return int(np.argmin(d))


def build_sensors(mesh, geometry, U, settings):
    grid = SensorGrid(geometry.n_elements, settings.sensor_cells, settings.sensor_degree,
                      periodic=bool(getattr(geometry, "periodic", False)))
    locator = MeshLocator(mesh) if settings.sensor_approach == "physical_smoothing" else None
    return [build_sensor(settings.sensor_approach, grid, mesh, U[:, k], settings.xi_s,
                         geometry, locator=locator) for k in range(U.shape[1])]


def transfer(mesh, u, points, field=None, mu=None, locator=None):
    """Snapshot values at new physical points: analytic or interpolated."""
    if field is not None:
        return field(mu, points)
    locator = MeshLocator(mesh) if locator is None else locator
    return locator.interpolate(u, points)


def register_manifold(mesh, space, U, mus, settings, template_index, workers=1, log=None):
    """Greedy registration of all training snapshots; returns (greedy, sensors)."""
    sensors = build_sensors(mesh, space.geometry, U, settings)
    problem = RegistrationProblem(space, mesh, settings.reg)
    templates = TemplateSpace([Template(sensors[template_index])])
    greedy = greedy_registration(problem, sensors, templates, workers=workers, log=log)
    return greedy, sensors


def fit_reduced_model(mesh, geometry, space, U, mus, settings, greedy=None, field=None,
                      fingerprint="", meta=None):
    """POD of (registered) snapshots and coefficient regressors."""
    mus = np.atleast_2d(mus)
    if greedy is not None and greedy.basis.shape[1] > 0:
        red_space = space.with_basis(greedy.basis)
        mapping = CoefficientRegressor(mus, greedy.coefficients, settings.r2_threshold, "zero")
        # registered snapshots on the maps the online stage will reproduce
        a_hat = mapping.predict(mus)
        locator = None if field is not None else MeshLocator(mesh)
        cols = []
        for k, mu in enumerate(mus):
            nodes = map_mesh(mesh, geometry, red_space.displacement_field(a_hat[k]))
            cols.append(transfer(mesh, U[:, k], nodes, field, mu, locator))
        R = np.column_stack(cols)
    else:
        red_space, mapping, R = None, None, U
    X = assemble_inner_product(mesh, settings.norm).matrix
    P = pod(R, X, tol=None if settings.pod_n else settings.pod_tol,
            n=settings.pod_n or None)
    solution = CoefficientRegressor(mus, P.coefficients.T, settings.r2_threshold, "mean")
    model = ReducedModel(mesh, geometry, red_space, mapping, P.basis, P.eigenvalues, solution,
                         settings.norm, fingerprint, meta)
    return model, R


def offline(mesh, space, U, mus, settings, template_index=None, registered=True, field=None,
            workers=1, log=None, fingerprint="", meta=None):
    t0 = time.perf_counter()
    geometry = space.geometry if space is not None else None
    greedy = None
    if registered:
        if template_index is None:
            template_index = 0
        greedy, _ = register_manifold(mesh, space, U, mus, settings, template_index,
                                      workers, log)
    t1 = time.perf_counter()
    model, R = fit_reduced_model(mesh, geometry, space, U, mus, settings, greedy, field,
                                 fingerprint, meta)
    t2 = time.perf_counter()
    return OfflineResult(model, greedy, R, {"register": t1 - t0, "reduce": t2 - t1})


def truncated_prediction(model, mu, n, target=None):
    """Prediction using only the first n solution modes."""
    nodes, rep = model.predict_map(mu, target)
    alpha = model.solution.predict(mu)[0][:n]
    return nodes, model.Z[:, :n] @ alpha, rep


def evaluate(model, mus, truth_fn, n_list=None, target=None):
    """E_avg per N on test parameters; truth_fn(mu, nodes) gives exact values."""
    mus = np.atleast_2d(mus)
    n_list = list(n_list) if n_list is not None else [model.n]
    preds = {n: [] for n in n_list}
    truths, mats, reports = [], [], []
    for mu in mus:
        nodes, rep = model.predict_map(mu, target)
        alpha = model.solution.predict(mu)[0]
        truths.append(truth_fn(mu, nodes))
        mats.append(assemble_inner_product(model.mesh, model.norm, nodes).matrix)
        reports.append(rep)
        for n in n_list:
            preds[n].append(model.Z[:, :n] @ alpha[:n])
    T = np.column_stack(truths)
    out = {}
    for n in n_list:
        out[n] = error_metrics(T, np.column_stack(preds[n]), mats)[0]
    return out, reports
