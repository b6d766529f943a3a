"""Registration sensors on structured reference grids.

A sensor stores, for every partition element, nodal values of a degree-p
tensor FE field on a uniform grid over the reference square (periodic in
the second coordinate for annular problems).
"""
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import Lagrange1D, gauss_legendre
from .femesh import MeshLocator


class SensorDomainError(ValueError):
    """Evaluation point outside the reference square."""


def wrap_periodic(x2):
    """Map the second coordinate onto [-1/2, 1/2)."""
    return np.mod(np.asarray(x2, dtype=float) + 0.5, 1.0) - 0.5


class SensorGrid:
    """Uniform tensor grid of degree-p cells on [0,1]^2 or [0,1]x[-1/2,1/2)."""

    def __init__(self, n_elements=1, n_cells=19, degree=3, periodic=False):
        self.n_elements = int(n_elements)
        self.n_cells = int(n_cells)
        self.degree = int(degree)
        self.periodic = bool(periodic)
        m = self.degree * self.n_cells
        self.n1 = m + 1
        self.n2 = m if self.periodic else m + 1
        self.x1 = np.arange(self.n1) / m
        self.x2 = (-0.5 + np.arange(self.n2) / m) if self.periodic else np.arange(self.n2) / m
        self.local = Lagrange1D(np.linspace(0.0, 1.0, self.degree + 1))

    @property
    def n_nodes(self):
        return self.n1 * self.n2

    @property
    def shape(self):
        return (self.n_elements, self.n1, self.n2)

    def node_points(self):
        """Reference nodes (n1*n2, 2), first coordinate slowest."""
        A, B = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.column_stack([A.ravel(), B.ravel()])

    def _cells(self, x, periodic):
        """Cell index, local coordinate and global node indices along an axis."""
        nc, p = self.n_cells, self.degree
        if periodic:
            s = (wrap_periodic(x) + 0.5) * nc
        else:
            s = x * nc
        c = np.clip(np.floor(s).astype(int), 0, nc - 1)
        xi = s - c
        idx = c[:, None] * p + np.arange(p + 1)[None, :]
        if periodic:
            idx = idx % self.n2
        return xi, idx

    def locate(self, X, tol=1e-12):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        x1 = X[:, 0]
        bad = (x1 < -tol) | (x1 > 1 + tol)
        x2 = X[:, 1]
        if not self.periodic:
            bad |= (x2 < -tol) | (x2 > 1 + tol)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise SensorDomainError(f"point {X[i]} outside the reference square")
        x1 = np.clip(x1, 0.0, 1.0)
        if not self.periodic:
            x2 = np.clip(x2, 0.0, 1.0)
        xi1, i1 = self._cells(x1, False)
        xi2, i2 = self._cells(x2, self.periodic)
        return xi1, i1, xi2, i2

    # 1D FE matrices on the grid lines
    def _fe_1d(self, periodic):
        nc, p = self.n_cells, self.degree
        n = nc * p if periodic else nc * p + 1
        xg, wg = gauss_legendre(p + 1)
        N = self.local(xg)
        dN = self.local(xg, 1) * nc  # d/dx with cell width 1/nc
        Me = (N * wg[:, None]).T @ N / nc
        Ke = (dN * wg[:, None]).T @ dN / nc
        M = np.zeros((n, n))
        K = np.zeros((n, n))
        for c in range(nc):
            idx = (c * p + np.arange(p + 1)) % n if periodic else c * p + np.arange(p + 1)
            M[np.ix_(idx, idx)] += Me
            K[np.ix_(idx, idx)] += Ke
        return sp.csr_matrix(M), sp.csr_matrix(K)

    def stiffness(self):
        """Grid stiffness matrix in node_points() ordering."""
        M1, K1 = self._fe_1d(False)
        M2, K2 = self._fe_1d(self.periodic)
        return (sp.kron(K1, M2) + sp.kron(M1, K2)).tocsr()

    def mass(self):
        M1, _ = self._fe_1d(False)
        M2, _ = self._fe_1d(self.periodic)
        return sp.kron(M1, M2).tocsr()

    def evaluation_matrix(self, X):
        """Sparse point-evaluation matrix (n_pts, n1*n2) of the grid field."""
        xi1, i1, xi2, i2 = self.locate(X)
        L1 = self.local(xi1)
        L2 = self.local(xi2)
        vals = (L1[:, :, None] * L2[:, None, :]).reshape(len(xi1), -1)
        cols = (i1[:, :, None] * self.n2 + i2[:, None, :]).reshape(len(xi1), -1)
        rows = np.repeat(np.arange(len(xi1)), cols.shape[1])
        return sp.csr_matrix((vals.ravel(), (rows, cols.ravel())),
                             shape=(len(xi1), self.n_nodes))


class SensorField:
    """Per-element grid values with point and gradient evaluation."""

    def __init__(self, grid, values, rescale_record=None):
        self.grid = grid
        self.values = np.asarray(values, dtype=float).reshape(grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sensor values must be finite")
        self.rescale_record = rescale_record

    @property
    def periodic(self):
        return self.grid.periodic

    @property
    def n_elements(self):
        return self.grid.n_elements

    def rescaled(self):
        """Affine rescaling to global min 0 and max 1."""
        lo, hi = float(self.values.min()), float(self.values.max())
        if hi - lo <= 0.0:
            warnings.warn("constant sensor cannot be rescaled; returned as zeros")
            return SensorField(self.grid, np.zeros_like(self.values), (lo, hi))
        return SensorField(self.grid, (self.values - lo) / (hi - lo), (lo, hi))

    def _gather(self, q, i1, i2):
        q = np.broadcast_to(np.asarray(q), (i1.shape[0],))
        return self.values[q[:, None, None], i1[:, :, None], i2[:, None, :]]

    def eval(self, q, X):
        xi1, i1, xi2, i2 = self.grid.locate(X)
        V = self._gather(q, i1, i2)
        return np.einsum("na,nb,nab->n", self.grid.local(xi1), self.grid.local(xi2), V)

    def eval_grad(self, q, X):
        """Values (n,) and gradients (n, 2) at reference points."""
        xi1, i1, xi2, i2 = self.grid.locate(X)
        V = self._gather(q, i1, i2)
        nc = self.grid.n_cells
        L1, D1 = self.grid.local(xi1), self.grid.local(xi1, 1) * nc
        L2, D2 = self.grid.local(xi2), self.grid.local(xi2, 1) * nc
        T = np.einsum("nab,nb->na", V, L2)
        val = np.einsum("na,na->n", L1, T)
        g1 = np.einsum("na,na->n", D1, T)
        g2 = np.einsum("na,nab,nb->n", L1, V, D2)
        return val, np.column_stack([g1, g2])

    def grad(self, q, X):
        return self.eval_grad(q, X)[1]

    def periodic_extend(self, X):
        """Evaluate an annular sensor at a wrapped second coordinate."""
        X = np.atleast_2d(np.asarray(X, dtype=float)).copy()
        X[:, 1] = wrap_periodic(X[:, 1])
        return self.eval(0, X)


# ---------------------------------------------------------------------------
# builders

def sensor_from_function(grid, f, rescale=False):
    """Sample f(q, X) -> values at the grid nodes of every element."""
    pts = grid.node_points()
    vals = np.stack([np.asarray(f(q, pts), dtype=float).reshape(grid.n1, grid.n2)
                     for q in range(grid.n_elements)])
    s = SensorField(grid, vals)
    return s.rescaled() if rescale else s


def sensor_from_grid_fit(grid, labels, refs, u, xi_s, rescale=True):
    """Regularized least-squares fit of nodal data on each element grid."""
    if xi_s <= 0:
        raise ValueError("xi_s must be positive")
    u = np.asarray(u, dtype=float)
    K = grid.stiffness()
    vals = np.empty(grid.shape)
    for q in range(grid.n_elements):
        m = labels == q
        if not np.any(m):
            # no data: the constant mode is pinned to the snapshot mean
            vals[q] = u.mean()
            continue
        P = grid.evaluation_matrix(refs[m])
        A = (xi_s * K + P.T @ P).tocsc()
        c = spla.spsolve(A, P.T @ u[m])
        vals[q] = c.reshape(grid.n1, grid.n2)
    s = SensorField(grid, vals)
    return s.rescaled() if rescale else s


def p1_matrices(nodes, tris):
    """P1 stiffness and mass matrices on straight triangles."""
    x = nodes[tris]
    G = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=-1)
    det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]
    area = 0.5 * np.abs(det)
    Ginv = np.linalg.inv(G)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("id,kde->kie", ref, Ginv)
    Ke = area[:, None, None] * np.einsum("kie,kje->kij", grads, grads)
    Me = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    n = nodes.shape[0]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def boundary_nodes(tris):
    """Nodes on edges that belong to exactly one triangle."""
    e = np.sort(np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, cnt = np.unique(e, axis=0, return_counts=True)
    return np.unique(uniq[cnt == 1])


def physical_smoothing(mesh, u, xi_s):
    """H1 smoothing on the P1 sub-mesh with Dirichlet data from u."""
    if xi_s < 0:
        raise ValueError("xi_s must be nonnegative")
    u = np.asarray(u, dtype=float)
    tris = mesh.linear_submesh()
    K, M = p1_matrices(mesh.nodes, tris)
    bnd = boundary_nodes(tris)
    inner = np.setdiff1d(np.arange(mesh.n_nodes), bnd)
    A = (xi_s * K + M).tocsr()
    rhs = M @ u
    out = u.copy()
    Aii = A[inner][:, inner].tocsc()
    b = rhs[inner] - A[inner][:, bnd] @ u[bnd]
    out[inner] = spla.spsolve(Aii, b)
    return out


def sensor_from_physical_smoothing(grid, mesh, u, xi_s, geometry, rescale=True,
                                   locator=None):
    """Smooth u on the mesh, then sample it at the mapped grid nodes."""
    smooth = physical_smoothing(mesh, u, xi_s)
    locator = MeshLocator(mesh) if locator is None else locator
    pts = grid.node_points()
    vals = np.empty(grid.shape)
    for q in range(grid.n_elements):
        phys = geometry.forward(np.full(pts.shape[0], q), pts)
        vals[q] = locator.interpolate(smooth, phys, linear=True).reshape(grid.n1, grid.n2)
    s = SensorField(grid, vals)
    return s.rescaled() if rescale else s


def build_sensor(approach, grid, mesh, u, xi_s, geometry, rescale=True, locator=None):
    if approach == "grid_fit":
        return sensor_from_grid_fit(grid, mesh.labels, mesh.refs, u, xi_s, rescale)
    if approach == "physical_smoothing":
        return sensor_from_physical_smoothing(grid, mesh, u, xi_s, geometry, rescale, locator)
    raise ValueError(f"unknown sensor approach {approach!r}")
