"""Analytic snapshot manifolds standing in for PDE solutions.

Three families: a sharp front moving across the unit square, a Gaussian
bump travelling around an annulus, and a rotating/shifting front crossing a
four-element partition.
"""
from dataclasses import dataclass, field

import numpy as np

from .femesh import annulus_mesh, partition_mesh
from .geometry import PolarChart, PolarGeometry, partition_from_elements, straight_element, \
    unit_square_partition
from .spaces import build_dd_space, build_polar_space, build_rect_space

KINDS = ("square_front", "annulus_gaussian", "partitioned_front")
DESIGNS = ("random", "grid")

# four-element partition: corner points and elements (corners 00, 10, 11, 01)
FOUR_ELEMENT_POINTS = {1: (0.0, -2.0), 2: (1.6, 0.3), 3: (1.6, 2.0), 4: (0.0, 2.0),
                       5: (2.8, 0.0), 6: (3.5, 2.0), 7: (3.5, -2.0), 8: (4.5, 0.0)}
FOUR_ELEMENT_CORNERS = [(1, 2, 3, 4), (2, 5, 6, 3), (1, 7, 5, 2), (5, 7, 8, 6)]


def four_element_partition(rotation=0.0, center=(2.2, 0.15)):
    """Four curved-free quadrilaterals with two interior vertices.

    `rotation` (radians) turns the two interior vertices about `center`,
    mimicking a rotating inner body.
    """
    pts = {k: np.array(v) for k, v in FOUR_ELEMENT_POINTS.items()}
    if rotation:
        c, s = np.cos(rotation), np.sin(rotation)
        R = np.array([[c, -s], [s, c]])
        ctr = np.asarray(center)
        for k in (2, 5):
            pts[k] = ctr + R @ (pts[k] - ctr)
    els = [straight_element(*[pts[i] for i in e]) for e in FOUR_ELEMENT_CORNERS]
    return partition_from_elements(els)


@dataclass
class ManifoldSpec:
    kind: str
    lo: tuple = None
    hi: tuple = None
    n_train: int = 20
    n_test: int = 20
    seed: int = 0
    sharpness: float = None
    mesh_cells: int = None
    degree: int = 3
    design: str = "random"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        d = DEFAULTS[self.kind]
        self.lo = tuple(d["lo"] if self.lo is None else self.lo)
        self.hi = tuple(d["hi"] if self.hi is None else self.hi)
        if self.sharpness is None:
            self.sharpness = d["sharpness"]
        if self.mesh_cells is None:
            self.mesh_cells = d["mesh_cells"]
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")
        if self.design not in DESIGNS:
            raise ValueError(f"unknown training design {self.design!r}")
        if len(self.lo) != len(self.hi) or not np.all(np.asarray(self.hi) > np.asarray(self.lo)):
            raise ValueError("degenerate parameter box")

    @property
    def n_params(self):
        return len(self.lo)

    @property
    def center(self):
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))


DEFAULTS = {
    "square_front": {"lo": (0.0,), "hi": (1.0,), "sharpness": 50.0, "mesh_cells": 12},
    "annulus_gaussian": {"lo": (0.0, 0.0), "hi": (1.0, 1.0), "sharpness": 10.0, "mesh_cells": 6},
    "partitioned_front": {"lo": (-0.15, -0.3), "hi": (0.15, 0.3), "sharpness": 40.0,
                          "mesh_cells": 12},
}


def grid_counts(n, p):
    """Most balanced factorization of n into p factors, each >= 2 (n itself if p == 1)."""
    if p == 1:
        return (n,)
    best = None
    for d in range(2, n // 2 + 1):
        if n % d:
            continue
        try:
            rest = grid_counts(n // d, p - 1)
        except ValueError:
            continue
        cand = (d,) + rest
        if min(cand) >= 2 and (best is None or max(cand) / min(cand) < max(best) / min(best)):
            best = cand
    if best is None:
        raise ValueError(f"n_train={n} has no grid factorization over {p} parameters")
    return best


def sample_parameters(spec):
    """Training and test parameters in the box.

    Test parameters are seeded uniform draws. Training parameters are uniform
    draws too, or, with design="grid", an equispaced tensor grid that includes
    the box corners (so regression never extrapolates inside the box).
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = np.asarray(spec.lo), np.asarray(spec.hi)
    if spec.design == "grid":
        counts = grid_counts(spec.n_train, spec.n_params)
        axes = [np.linspace(a, b, c) for a, b, c in zip(lo, hi, counts)]
        train = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    else:
        train = lo + (hi - lo) * rng.random((spec.n_train, spec.n_params))
    test = lo + (hi - lo) * rng.random((spec.n_test, spec.n_params))
    return train, test


# ---------------------------------------------------------------------------
# field formulas

def square_front_field(mu, x, kappa=50.0):
    c = 0.3 + 0.4 * mu[0]
    return np.tanh(kappa * (x[:, 0] - c))


def annulus_center(mu):
    rad = 0.5 + 0.1 * mu[1]
    return rad * np.array([np.cos(2 * np.pi * mu[0]), np.sin(2 * np.pi * mu[0])])


def annulus_gaussian_field(mu, x, kappa=10.0):
    xc = annulus_center(mu)
    return np.exp(-kappa * np.sum((x - xc) ** 2, axis=1))


def front_line(mu, x1, y0=1.0, x_mid=2.25):
    """Height of the front line: rotation angle mu[0], vertical shift mu[1]."""
    return y0 + mu[1] + np.tan(mu[0]) * (x1 - x_mid)


def partitioned_front_field(mu, x, kappa=40.0):
    return 0.5 * (1.0 + np.tanh(kappa * (x[:, 1] - front_line(mu, x[:, 0]))))


FIELDS = {"square_front": square_front_field,
          "annulus_gaussian": annulus_gaussian_field,
          "partitioned_front": partitioned_front_field}


class SyntheticProblem:
    """Geometry, mesh and analytic field for one manifold family."""

    def __init__(self, spec):
        self.spec = spec
        k = spec.kind
        if k == "square_front":
            self.geometry = unit_square_partition()
            self.mesh = partition_mesh(self.geometry, spec.mesh_cells, spec.degree)
        elif k == "annulus_gaussian":
            self.chart = PolarChart(0.2, 1.0)
            self.geometry = PolarGeometry(self.chart)
            n = spec.mesh_cells
            self.mesh = annulus_mesh(self.chart, n, 8 * n, spec.degree)
        else:
            self.geometry = four_element_partition()
            self.mesh = partition_mesh(self.geometry, spec.mesh_cells, spec.degree)

    def field(self, mu, x):
        return FIELDS[self.spec.kind](np.asarray(mu, dtype=float), np.atleast_2d(x),
                                      self.spec.sharpness)

    def snapshots(self, mus, nodes=None):
        """Snapshot matrix (N_hf, n) at the mesh nodes (or given node sets)."""
        mus = np.atleast_2d(mus)
        if nodes is None:
            return np.column_stack([self.field(mu, self.mesh.nodes) for mu in mus])
        return np.column_stack([self.field(mu, nd) for mu, nd in zip(mus, nodes)])

    def default_space(self, J=6, J_r=8, J_f=6):
        k = self.spec.kind
        if k == "square_front":
            return build_rect_space(J)
        if k == "annulus_gaussian":
            return build_polar_space(J_r, J_f, self.chart)
        return build_dd_space(self.geometry, J)


def gen_square_front(spec):
    prob = SyntheticProblem(spec)
    train, test = sample_parameters(spec)
    return prob, train, prob.snapshots(train), test, prob.snapshots(test)


def gen_annulus_gaussian(spec):
    prob = SyntheticProblem(spec)
    train, test = sample_parameters(spec)
    return prob, train, prob.snapshots(train), test, prob.snapshots(test)


def gen_partitioned_front(spec):
    prob = SyntheticProblem(spec)
    train, test = sample_parameters(spec)
    return prob, train, prob.snapshots(train), test, prob.snapshots(test)


GENERATORS = {"square_front": gen_square_front,
              "annulus_gaussian": gen_annulus_gaussian,
              "partitioned_front": gen_partitioned_front}


def generate(spec):
    return GENERATORS[spec.kind](spec)
