"""High-order triangular FE meshes, mapped meshes and quality indicators."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .basis import triangle_rule


class MeshError(ValueError):
    pass


class MappingError(ValueError):
    """A displacement pushed a node reference outside the reference square."""


class InterpolationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# reference Lagrange triangle

def lattice_indices(p):
    """Lattice coordinates (a, b), a+b <= p, in local node order.

    Vertices (0,0), (p,0), (0,p); then edge nodes along v0->v1, v1->v2,
    v2->v0; then interior nodes row by row.
    """
    idx = [(0, 0), (p, 0), (0, p)]
    idx += [(i, 0) for i in range(1, p)]
    idx += [(p - i, i) for i in range(1, p)]
    idx += [(0, p - i) for i in range(1, p)]
    idx += [(i, j) for j in range(1, p) for i in range(1, p - j)]
    return np.array(idx, dtype=int)


class TriangleLagrange:
    """Degree-p Lagrange basis on the unit triangle with equispaced nodes."""

    def __init__(self, p):
        if p < 1:
            raise MeshError("degree must be >= 1")
        self.p = p
        self.lattice = lattice_indices(p)
        self.nodes = self.lattice / float(p)
        self.n = self.nodes.shape[0]
        self.exps = np.array([(a, b) for s in range(p + 1) for b in range(s + 1)
                              for a in [s - b]], dtype=int)
        V = self._monomials(self.nodes)
        self._C = np.linalg.inv(V)

    def _monomials(self, X, dx=0, dy=0):
        X = np.atleast_2d(X)
        a = self.exps[:, 0] - dx
        b = self.exps[:, 1] - dy
        coef = np.ones(len(self.exps))
        for k in range(dx):
            coef = coef * (self.exps[:, 0] - k)
        for k in range(dy):
            coef = coef * (self.exps[:, 1] - k)
        ok = (a >= 0) & (b >= 0)
        out = np.zeros((X.shape[0], len(self.exps)))
        out[:, ok] = coef[ok] * X[:, 0:1] ** a[ok] * X[:, 1:2] ** b[ok]
        return out

    def eval(self, X):
        return self._monomials(X) @ self._C

    def grad(self, X):
        gx = self._monomials(X, 1, 0) @ self._C
        gy = self._monomials(X, 0, 1) @ self._C
        return np.stack([gx, gy], axis=2)

    def sub_triangles(self):
        """Local node triples of the p^2 straight sub-triangles."""
        pos = {tuple(ab): i for i, ab in enumerate(self.lattice)}
        p = self.p
        tris = []
        for b in range(p):
            for a in range(p - b):
                tris.append((pos[(a, b)], pos[(a + 1, b)], pos[(a, b + 1)]))
                if a + b <= p - 2:
                    tris.append((pos[(a + 1, b)], pos[(a + 1, b + 1)], pos[(a, b + 1)]))
        return np.array(tris, dtype=int)


_BASES = {}


def lagrange_basis(p):
    if p not in _BASES:
        _BASES[p] = TriangleLagrange(p)
    return _BASES[p]


# ---------------------------------------------------------------------------
# mesh

class FEMesh:
    """High-order triangular mesh.

    Connectivity is stored 0-based as an (N_e, n_lp) array. Optional per-node
    partition labels and reference coordinates enable fast node deformation.
    """

    def __init__(self, nodes, conn, degree, labels=None, refs=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.conn = np.ascontiguousarray(conn, dtype=int)
        self.degree = int(degree)
        self.basis = lagrange_basis(self.degree)
        n_lp = (self.degree + 1) * (self.degree + 2) // 2
        if self.conn.ndim != 2 or self.conn.shape[1] != n_lp:
            raise MeshError(f"connectivity must have {n_lp} columns for degree {degree}")
        if self.conn.min() < 0 or self.conn.max() >= self.n_nodes:
            raise MeshError("connectivity entry out of range")
        if np.unique(self.conn).size != self.n_nodes:
            raise MeshError("some nodes are not referenced by any element")
        self.labels = None if labels is None else np.asarray(labels, dtype=int)
        self.refs = None if refs is None else np.asarray(refs, dtype=float)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.conn.shape[0]

    @property
    def n_lp(self):
        return self.conn.shape[1]

    def element_nodes(self, nodes=None):
        nodes = self.nodes if nodes is None else nodes
        return nodes[self.conn]

    def vertex_triangles(self, nodes=None):
        nodes = self.nodes if nodes is None else nodes
        return nodes[self.conn[:, :3]]

    def eval_map(self, k, X, nodes=None):
        """Elemental map of element k at reference points X."""
        X = np.atleast_2d(X)
        xk = self.element_nodes(nodes)[k]
        return self.basis.eval(X) @ xk

    def jacobians(self, X, nodes=None, elements=None):
        """Jacobians (N_e, n_pts, 2, 2) of the elemental maps at points X."""
        en = self.element_nodes(nodes)
        if elements is not None:
            en = en[elements]
        dN = self.basis.grad(np.atleast_2d(X))
        return np.einsum("kic,qid->kqcd", en, dN)

    def areas(self, nodes=None):
        pts, w = triangle_rule(2 * self.degree)
        J = self.jacobians(pts, nodes)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        return np.abs(det) @ w

    def is_straight(self, nodes=None, tol=1e-12):
        en = self.element_nodes(nodes)
        lin = lagrange_basis(1).eval(self.basis.nodes)
        approx = np.einsum("ij,kjd->kid", lin, en[:, :3])
        return bool(np.abs(approx - en).max() <= tol * max(1.0, np.abs(en).max()))

    def linear_submesh(self):
        """P1 triangles (N_e p^2, 3) through all Lagrange nodes."""
        sub = self.basis.sub_triangles()
        return self.conn[:, sub].reshape(-1, 3)


# ---------------------------------------------------------------------------
# mapped meshes

def map_mesh(mesh, geometry, displacement=None, target=None, tol=1e-8):
    """Deform mesh nodes through x -> Psi(x_ref + phi(x_ref)).

    `displacement(labels, refs)` returns the reference displacement at each
    node; `target` optionally replaces the geometry (parameterized geometry).
    """
    if mesh.labels is None or mesh.refs is None:
        raise MappingError("mesh has no node labels/reference coordinates")
    d = None if displacement is None else np.asarray(displacement(mesh.labels, mesh.refs))
    if target is None and (d is None or not np.any(d)):
        return mesh.nodes.copy()
    refs = mesh.refs if d is None else mesh.refs + d
    x1 = refs[:, 0]
    bad = (x1 < -tol) | (x1 > 1.0 + tol)
    if not getattr(geometry, "periodic", False):
        x2 = refs[:, 1]
        bad |= (x2 < -tol) | (x2 > 1.0 + tol)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise MappingError(f"node {j} mapped outside the reference square: {refs[j]}")
    refs = refs.copy()
    refs[:, 0] = np.clip(refs[:, 0], 0.0, 1.0)
    if not getattr(geometry, "periodic", False):
        refs[:, 1] = np.clip(refs[:, 1], 0.0, 1.0)
    geo = geometry if target is None else target
    return geo.forward(mesh.labels, refs)


@dataclass
class BijectivityReport:
    passed: bool
    min_det: float
    offending: list = field(default_factory=list)


def check_points(p):
    pts, _ = triangle_rule(2 * p)
    return np.vstack([pts, lagrange_basis(p).nodes])


def discrete_bijectivity_check(mesh, nodes=None):
    """Positivity of elemental Jacobians at order-2p Gauss points and nodes."""
    J = mesh.jacobians(check_points(mesh.degree), nodes)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    emin = det.min(axis=1)
    bad = np.flatnonzero(~(emin > 0.0))
    return BijectivityReport(passed=bad.size == 0, min_det=float(emin.min()),
                             offending=bad.tolist())


def _edge_matrix(tri):
    """Columns v1 - v0, v2 - v0 of vertex triangles (..., 3, 2)."""
    return np.stack([tri[..., 1, :] - tri[..., 0, :], tri[..., 2, :] - tri[..., 0, :]], axis=-1)


def distortion_from_gradient(F):
    """1/2 |F|_F^2 / |det F| for (..., 2, 2) arrays; +inf when degenerate."""
    F = np.asarray(F, dtype=float)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    fro = np.sum(F * F, axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * fro / np.abs(det)
    return np.where(np.abs(det) < 1e-14, np.inf, out)


def relative_gradients(orig_tri, mapped_tri):
    """Gradient of the mapped P1 map composed with the inverse original one."""
    Go = _edge_matrix(orig_tri)
    Gm = _edge_matrix(mapped_tri)
    return Gm @ np.linalg.inv(Go)


def mesh_distortion(mesh, mapped_nodes):
    """Per-element distortion of the mapped mesh relative to the original."""
    F = relative_gradients(mesh.vertex_triangles(), mesh.vertex_triangles(mapped_nodes))
    return distortion_from_gradient(F)


def radius_ratio(tri):
    """2 r_in / R_circ for vertex triangles (..., 3, 2); 0 when degenerate."""
    tri = np.asarray(tri, dtype=float)
    a = np.linalg.norm(tri[..., 1, :] - tri[..., 2, :], axis=-1)
    b = np.linalg.norm(tri[..., 2, :] - tri[..., 0, :], axis=-1)
    c = np.linalg.norm(tri[..., 0, :] - tri[..., 1, :], axis=-1)
    G = _edge_matrix(tri)
    area = 0.5 * np.abs(G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0])
    denom = (a + b + c) * a * b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 16.0 * area ** 2 / denom
    out = np.where(denom > 0, out, 0.0)
    return np.clip(out, 0.0, 1.0)


def mesh_radius_ratios(mesh, nodes=None):
    return radius_ratio(mesh.vertex_triangles(nodes))


# ---------------------------------------------------------------------------
# inner-product matrices

@dataclass
class InnerProductMatrix:
    matrix: sp.csr_matrix
    kind: str

    def inner(self, u, v):
        return v.T @ (self.matrix @ u)

    def norm(self, u):
        return np.sqrt(np.maximum(np.einsum("i...,i...->...", u, self.matrix @ u), 0.0))


def assemble_inner_product(mesh, kind="H1", nodes=None):
    """Sparse L2 or H1 Gramian of the nodal FE space."""
    kind = kind.upper()
    if kind not in ("L2", "H1", "H1SEMI"):
        raise ValueError(f"unknown norm kind {kind}")
    p = mesh.degree
    straight = mesh.is_straight(nodes)
    deg = 2 * p if straight else 2 * p + 2
    pts, w = triangle_rule(deg)
    N = mesh.basis.eval(pts)
    dN = mesh.basis.grad(pts)
    en = mesh.element_nodes(nodes)
    J = np.einsum("kic,qid->kqcd", en, dN)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    wd = w[None, :] * np.abs(det)
    loc = np.zeros((mesh.n_elements, mesh.n_lp, mesh.n_lp))
    if kind in ("L2", "H1"):
        loc += np.einsum("kq,qi,qj->kij", wd, N, N)
    if kind in ("H1", "H1SEMI"):
        Jinv = np.linalg.inv(J)
        # physical gradients: dN/dx = dN/dX J^{-1}
        G = np.einsum("qid,kqde->kqie", dN, Jinv)
        loc += np.einsum("kq,kqie,kqje->kij", wd, G, G)
    rows = np.repeat(mesh.conn, mesh.n_lp, axis=1).ravel()
    cols = np.tile(mesh.conn, (1, mesh.n_lp)).ravel()
    M = sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    M = 0.5 * (M + M.T)
    return InnerProductMatrix(M.tocsr(), kind)


# ---------------------------------------------------------------------------
# point location and interpolation

class MeshLocator:
    """Locate physical points in (curved) mesh elements.

    A KD-tree over straight sub-triangle centroids proposes candidates; the
    reference coordinates are refined by Newton on the elemental map.
    """

    def __init__(self, mesh, nodes=None, k=12):
        self.mesh = mesh
        self.nodes = mesh.nodes if nodes is None else nodes
        self.sub_local = mesh.basis.sub_triangles()
        nsub = self.sub_local.shape[0]
        tris = self.nodes[mesh.conn[:, self.sub_local]]  # (N_e, nsub, 3, 2)
        self.tris = tris.reshape(-1, 3, 2)
        self.sub_elem = np.repeat(np.arange(mesh.n_elements), nsub)
        self.sub_ref = np.tile(mesh.basis.nodes[self.sub_local], (mesh.n_elements, 1, 1))
        self.tree = cKDTree(self.tris.mean(axis=1))
        self.k = min(k, self.tris.shape[0])

    @staticmethod
    def _bary(tris, P):
        G = _edge_matrix(tris)
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
        r = P - tris[..., 0, :]
        l1 = (G[..., 1, 1] * r[..., 0] - G[..., 0, 1] * r[..., 1]) / det
        l2 = (-G[..., 1, 0] * r[..., 0] + G[..., 0, 0] * r[..., 1]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)

    def _newton(self, elems, X, P, iters=20):
        en = self.mesh.element_nodes(self.nodes)[elems]
        for _ in range(iters):
            N = self.mesh.basis.eval(X)
            dN = self.mesh.basis.grad(X)
            x = np.einsum("ni,nic->nc", N, en)
            J = np.einsum("nic,nid->ncd", en, dN)
            r = x - P
            if np.abs(r).max(initial=0.0) < 1e-14:
                break
            X = X - np.linalg.solve(J, r[..., None])[..., 0]
        return X

    def locate(self, points, tol=1e-6):
        """Element indices and reference coordinates of points."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        _, cand = self.tree.query(P, k=self.k)
        cand = cand.reshape(P.shape[0], -1)
        lam = self._bary(self.tris[cand], P[:, None, :])
        score = lam.min(axis=2)  # >= 0 inside
        best = np.argmax(score, axis=1)
        sub = cand[np.arange(P.shape[0]), best]
        sscore = score[np.arange(P.shape[0]), best]
        miss = np.flatnonzero(sscore < -1e-10)
        for i in miss:
            # brute force over all sub-triangles for stragglers
            l = self._bary(self.tris, P[i][None, :])
            s = l.min(axis=1)
            j = int(np.argmax(s))
            if s[j] > sscore[i]:
                sub[i], sscore[i] = j, s[j]
        lam = self._bary(self.tris[sub], P)
        X = np.einsum("nj,njd->nd", lam, self.sub_ref[sub])
        elems = self.sub_elem[sub]
        out = np.maximum(-X.min(axis=1), X.sum(axis=1) - 1.0)
        if self.mesh.degree > 1:
            X = self._newton(elems, X, P)
            out = np.maximum(-X.min(axis=1), X.sum(axis=1) - 1.0)
            # curved edges: the straight sub-triangle may belong to a neighbour
            for i in np.flatnonzero(out > 1e-12):
                for c in cand[i]:
                    e = self.sub_elem[c]
                    if e == elems[i]:
                        continue
                    lam_c = self._bary(self.tris[c], P[i])
                    X0 = np.clip(lam_c, 0.0, None)
                    X0 = (X0 / X0.sum()) @ self.sub_ref[c]
                    Xc = self._newton(np.array([e]), X0[None, :], P[i][None, :])[0]
                    oc = max(-Xc.min(), Xc.sum() - 1.0)
                    if oc < out[i]:
                        elems[i], X[i], out[i] = e, Xc, oc
                    if oc <= 1e-12:
                        break
        bad = np.flatnonzero(~(out <= tol))
        if bad.size:
            i = int(bad[0])
            raise InterpolationError(f"point {P[i]} lies outside the mesh "
                                     f"(reference overshoot {out[i]:.3e})")
        return elems, X

    def interpolate(self, values, points, linear=False, tol=1e-6):
        """Interpolate nodal values (N_hf,) or (N_hf, m) at physical points.

        With `linear=True` the field is read as piecewise linear on the
        sub-triangles through all Lagrange nodes.
        """
        values = np.asarray(values, dtype=float)
        elems, X = self.locate(points, tol)
        if not linear:
            N = self.mesh.basis.eval(X)
            loc = values[self.mesh.conn[elems]]
            return np.einsum("ni,ni...->n...", N, loc)
        p = self.mesh.degree
        # sub-triangle of the reference lattice containing X
        ref_tris = self.mesh.basis.nodes[self.sub_local]
        lam = self._bary(ref_tris[None, :, :, :], X[:, None, :])
        j = np.argmax(lam.min(axis=2), axis=1)
        lj = lam[np.arange(X.shape[0]), j]
        nodes = self.mesh.conn[elems[:, None], self.sub_local[j]]
        del p
        return np.einsum("nj,nj...->n...", lj, values[nodes])


# ---------------------------------------------------------------------------
# structured mesh generators

def _lattice_triangles(nx, ny, p, index, periodic_y=False):
    """Triangles of a structured lattice with cells of p x p lattice steps.

    index(i, j) returns the global node of lattice point (i, j).
    """
    loc = lattice_indices(p)
    conn = []
    for cj in range(ny):
        for ci in range(nx):
            i0, j0 = ci * p, cj * p
            # triangle A: (i,j), (i+p,j), (i,j+p); triangle B: opposite corner
            for v0, e1, e2 in (((i0, j0), (1, 0), (0, 1)),
                               ((i0 + p, j0 + p), (-1, 0), (0, -1))):
                row = []
                for a, b in loc:
                    i = v0[0] + a * e1[0] + b * e2[0]
                    j = v0[1] + a * e1[1] + b * e2[1]
                    row.append(index(i, j))
                conn.append(row)
    return np.array(conn, dtype=int)


def partition_mesh(partition, n, p=3):
    """Structured mesh of each partition element, shared nodes merged.

    Each element carries an n x n cell grid split into triangles.
    """
    m = p * n + 1
    t = np.linspace(0.0, 1.0, m)
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    ref = np.column_stack([T1.ravel(), T2.ravel()])  # index i*m + j
    all_nodes, all_labels, all_refs, all_conn = [], [], [], []
    offset = 0
    for q in range(partition.n_elements):
        x = partition.forward(q, ref)
        conn = _lattice_triangles(n, n, p, lambda i, j: i * m + j) + offset
        all_nodes.append(x)
        all_labels.append(np.full(ref.shape[0], q))
        all_refs.append(ref)
        all_conn.append(conn)
        offset += ref.shape[0]
    nodes = np.vstack(all_nodes)
    labels = np.concatenate(all_labels)
    refs = np.vstack(all_refs)
    conn = np.vstack(all_conn)
    # merge coincident nodes, keeping the lowest element label
    scale = max(1.0, np.abs(nodes).max())
    tree = cKDTree(nodes)
    pairs = tree.query_pairs(1e-9 * scale, output_type="ndarray")
    rep = np.arange(nodes.shape[0])
    if pairs.size:
        for a, b in sorted(map(tuple, np.sort(pairs, axis=1))):
            ra, rb = rep[a], rep[b]
            while rep[ra] != ra:
                ra = rep[ra]
            while rep[rb] != rb:
                rb = rep[rb]
            lo, hi = min(ra, rb), max(ra, rb)
            rep[hi] = lo
        for i in range(rep.size):
            r = i
            while rep[r] != r:
                r = rep[r]
            rep[i] = r
    keep = np.flatnonzero(rep == np.arange(rep.size))
    new_index = -np.ones(rep.size, dtype=int)
    new_index[keep] = np.arange(keep.size)
    conn = new_index[rep[conn]]
    labels, refs = labels[keep], refs[keep]
    nodes = partition.forward(labels, refs)
    return FEMesh(nodes, conn, p, labels=labels, refs=refs)


def annulus_mesh(chart, n_r, n_t, p=3):
    """Periodic structured mesh of an annulus through the polar chart."""
    mr = p * n_r + 1
    mt = p * n_t
    rho = np.linspace(0.0, 1.0, mr)
    theta = np.arange(mt) / mt
    theta = np.mod(theta + 0.5, 1.0) - 0.5
    theta[theta == -0.5] = 0.5
    R, T = np.meshgrid(rho, theta, indexing="ij")
    refs = np.column_stack([R.ravel(), T.ravel()])  # index i*mt + j
    conn = _lattice_triangles(n_r, n_t, p, lambda i, j: i * mt + (j % mt))
    nodes = chart.forward(refs)
    labels = np.zeros(refs.shape[0], dtype=int)
    return FEMesh(nodes, conn, p, labels=labels, refs=refs)


def square_mesh(n, p=3):
    from .geometry import unit_square_partition
    return partition_mesh(unit_square_partition(), n, p)
