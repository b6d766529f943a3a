"""Displacement spaces on the reference square(s).

A space holds a raw tensor-product coefficient layout (two components per
element, component-major), the linear constraints that make the induced
global map well defined, and a basis B of the constrained subspace that is
orthonormal in the mapping inner product.

Raw layout: index(i, j, q, d) = i + n1*j + nloc*q + nloc*N_dd*d, where i
runs over the first-coordinate factor and j over the second.
"""
import numpy as np
import scipy.linalg as sla

from .basis import (Fourier1D, Lagrange1D, gauss_legendre, gauss_lobatto,
                    tensor_rule, trapezoid_periodic)
from .geometry import (FACET_NORMAL, FACET_TANGENT, PolarGeometry,
                       facet_points, unit_square_partition)


class SpaceError(ValueError):
    pass


# derivative orders (d/dx1, d/dx2) used throughout
DERIVS = {"v": (0, 0), "x": (1, 0), "y": (0, 1), "xx": (2, 0), "xy": (1, 1), "yy": (0, 2)}


class TensorBasis:
    """Scalar tensor basis f1_i(x1) * f2_j(x2), flattened as i + n1*j."""

    def __init__(self, f1, f2, periodic=False):
        self.f1 = f1
        self.f2 = f2
        self.n1 = f1.n
        self.n2 = f2.n
        self.size = self.n1 * self.n2
        self.periodic = periodic

    def eval(self, X, dx=0, dy=0):
        X = np.atleast_2d(X)
        A = self.f1(X[:, 0], dx)
        B = self.f2(X[:, 1], dy)
        return (B[:, :, None] * A[:, None, :]).reshape(X.shape[0], self.size)

    def eval_all(self, X, which=("v", "x", "y")):
        return {k: self.eval(X, *DERIVS[k]) for k in which}

    def quadrature(self, n=None):
        """Tensor rule exact for products of two basis functions."""
        n1 = self.n1 + 1 if n is None else n
        x1, w1 = gauss_legendre(n1)
        if self.periodic:
            x2, w2 = trapezoid_periodic(2 * self.n2 + 2 if n is None else n)
        else:
            x2, w2 = gauss_legendre(self.n2 + 1 if n is None else n)
        return tensor_rule(x1, w1, x2, w2)


def lagrange_tensor(J):
    f = Lagrange1D(gauss_lobatto(J + 1))
    return TensorBasis(f, f)


def polar_tensor(J_r, J_f):
    return TensorBasis(Lagrange1D(gauss_lobatto(J_r + 1)), Fourier1D(J_f), periodic=True)


def scalar_grams(basis, n_quad=None):
    """Reference-square Gram matrices: L2, H1 seminorm, H2 seminorm."""
    pts, w = basis.quadrature(n_quad)
    E = basis.eval_all(pts, DERIVS.keys())
    g = lambda a, b: (E[a] * w[:, None]).T @ E[b]
    L2 = g("v", "v")
    H1 = g("x", "x") + g("y", "y")
    H2 = g("xx", "xx") + g("xy", "xy") + g("yy", "yy")
    return L2, H1, H2


def _transformed_gram(basis, A, n_quad=None):
    """Full H2 Gram of e_k(A^{-1}(y - b)) over the affine image of the square."""
    pts, w = basis.quadrature(n_quad)
    E = basis.eval_all(pts, DERIVS.keys())
    Ai = np.linalg.inv(A)
    # first derivatives in physical coordinates
    D1 = [Ai[0, m] * E["x"] + Ai[1, m] * E["y"] for m in range(2)]
    H = {(0, 0): E["xx"], (0, 1): E["xy"], (1, 0): E["xy"], (1, 1): E["yy"]}

    def second(m, l):
        return sum(Ai[n, m] * Ai[o, l] * H[(n, o)] for n in range(2) for o in range(2))

    D2 = [second(0, 0), second(0, 1), second(1, 1)]
    g = lambda a: (a * w[:, None]).T @ a
    K = g(E["v"]) + sum(g(d) for d in D1) + sum(g(d) for d in D2)
    return abs(np.linalg.det(A)) * K


class DisplacementSpace:
    """Constrained piecewise tensor-product displacement space."""

    def __init__(self, kind, geometry, basis, constraints, weights, norm="standard",
                 params=None, basis_matrix=None):
        self.kind = kind
        self.geometry = geometry
        self.basis = basis
        self.n_elements = geometry.n_elements
        self.nloc = basis.size
        self.raw_size = 2 * self.n_elements * self.nloc
        self.weights = np.asarray(weights, dtype=float)
        self.norm_kind = norm
        self.params = dict(params or {})
        self.C = np.asarray(constraints, dtype=float).reshape(-1, self.raw_size)
        L2, H1, H2 = scalar_grams(basis)
        self._H2semi = H2
        self.G = self._assemble_gram(L2 + H1 + H2, norm)
        self.S = np.zeros((self.raw_size, self.raw_size))
        for q in range(self.n_elements):
            for d in range(2):
                s = self.block(q, d)
                self.S[s, s] = H2
        if basis_matrix is None:
            basis_matrix = self._orthonormal_nullspace()
        self.set_basis(basis_matrix)

    # -- layout ------------------------------------------------------------
    def block(self, q, d):
        start = self.nloc * (q + self.n_elements * d)
        return slice(start, start + self.nloc)

    def split(self, c):
        """Raw vector(s) (raw_size, ...) -> array (2, N_dd, nloc, ...)."""
        c = np.asarray(c)
        return c.reshape((2, self.n_elements, self.nloc) + c.shape[1:])

    # -- construction ------------------------------------------------------
    def _assemble_gram(self, K, norm):
        G = np.zeros((self.raw_size, self.raw_size))
        for q in range(self.n_elements):
            if norm == "modified":
                A, _ = self.geometry.elements[q].affine_fit()
                Kq = _transformed_gram(self.basis, A)
                AtA = A.T @ A
            else:
                Kq, AtA = K, np.eye(2)
            for d in range(2):
                for e in range(2):
                    G[self.block(q, d), self.block(q, e)] = self.weights[q] * AtA[d, e] * Kq
        return 0.5 * (G + G.T)

    def _orthonormal_nullspace(self):
        if self.C.shape[0]:
            N = sla.null_space(self.C, rcond=1e-10)
        else:
            N = np.eye(self.raw_size)
        if N.shape[1] == 0:
            raise SpaceError("constraint null space is empty")
        Gn = N.T @ self.G @ N
        Sn = N.T @ self.S @ N
        # G-orthonormal, ordered from smoothest (lowest H2 seminorm) upward
        _, V = sla.eigh(0.5 * (Sn + Sn.T), 0.5 * (Gn + Gn.T))
        B = N @ V
        # one refinement pass against rounding in the generalized solve
        L = np.linalg.cholesky(B.T @ self.G @ B)
        B = sla.solve_triangular(L, B.T, lower=True).T
        return fix_signs(B)

    def set_basis(self, B):
        self.B = np.asarray(B, dtype=float).reshape(self.raw_size, -1)
        A = self.B.T @ self.S @ self.B
        self.A_stab = 0.5 * (A + A.T)

    def with_basis(self, B):
        """Same ambient layout, different (reduced) basis."""
        new = object.__new__(DisplacementSpace)
        new.__dict__.update(self.__dict__)
        new.set_basis(B)
        return new

    @property
    def dim(self):
        return self.B.shape[1]

    # -- evaluation --------------------------------------------------------
    def raw(self, a):
        a = np.asarray(a, dtype=float)
        if self.dim == 0:
            return np.zeros(self.raw_size)
        return self.B @ a

    def eval_raw(self, c, q, X, dx=0, dy=0):
        """Displacement (or derivative) of raw vector c on element q, (n, 2)."""
        E = self.basis.eval(X, dx, dy)
        cs = self.split(c)
        return np.column_stack([E @ cs[0, q], E @ cs[1, q]])

    def displacement(self, a, q, X):
        return self.eval_raw(self.raw(a), q, X)

    def gradient(self, a, q, X):
        """(n, 2, 2) array, entry [:, d, k] = d phi_d / d x_k."""
        c = self.raw(a)
        gx = self.eval_raw(c, q, X, 1, 0)
        gy = self.eval_raw(c, q, X, 0, 1)
        return np.stack([gx, gy], axis=2)

    def jacobian_det(self, a, q, X):
        g = self.gradient(a, q, X)
        return (1 + g[:, 0, 0]) * (1 + g[:, 1, 1]) - g[:, 0, 1] * g[:, 1, 0]

    def displacement_at(self, c, labels, refs):
        """Raw-vector displacement at points with per-point element labels."""
        out = np.zeros_like(refs, dtype=float)
        for q in np.unique(labels):
            m = labels == q
            out[m] = self.eval_raw(c, q, refs[m])
        return out

    def displacement_field(self, a):
        """Callable (labels, refs) -> displacement, for femesh.map_mesh."""
        c = self.raw(a)
        return lambda labels, refs: self.displacement_at(c, labels, refs)

    # -- inner products ----------------------------------------------------
    def inner(self, c1, c2):
        return float(np.asarray(c1) @ self.G @ np.asarray(c2))

    def norm(self, c):
        return float(np.sqrt(max(self.inner(c, c), 0.0)))

    def h2_seminorm_sq(self, c):
        return float(np.asarray(c) @ self.S @ np.asarray(c))

    def constraint_residual(self, c):
        return np.abs(self.C @ c).max(initial=0.0)


def fix_signs(B):
    """Make each column's largest-magnitude entry positive."""
    B = np.array(B, dtype=float)
    if B.size == 0:
        return B
    idx = np.argmax(np.abs(B), axis=0)
    s = np.sign(B[idx, np.arange(B.shape[1])])
    s[s == 0] = 1.0
    return B * s


# ---------------------------------------------------------------------------
# constraint assembly

def _facet_rows(basis, n_el, q, ell, t, vec, nloc):
    """Rows sum_d vec[d] * phi_{q,d}(gamma_ell(t)) on the raw layout."""
    E = basis.eval(facet_points(ell, t))
    rows = np.zeros((t.size, 2 * n_el * nloc))
    for d in range(2):
        if vec[d] != 0.0:
            start = nloc * (q + n_el * d)
            rows[:, start:start + nloc] += vec[d] * E
    return rows


def dd_constraints(partition, basis, continuity="tangential"):
    """Normal-component and interface constraints at edge Gauss-Lobatto points."""
    n_el = partition.n_elements
    nloc = basis.size
    t = gauss_lobatto(basis.n1)
    rows = []
    for q in range(n_el):
        for ell in range(4):
            rows.append(_facet_rows(basis, n_el, q, ell, t, FACET_NORMAL[ell], nloc))
    for q, ell, qq, ll, o in partition.interfaces():
        s = 1.0 if o else -1.0
        tt = t if o else 1.0 - t
        if continuity == "tangential":
            r = (_facet_rows(basis, n_el, q, ell, t, FACET_TANGENT[ell], nloc)
                 - s * _facet_rows(basis, n_el, qq, ll, tt, FACET_TANGENT[ll], nloc))
            rows.append(r)
        elif continuity == "vector":
            for d in range(2):
                e = np.eye(2)[d]
                rows.append(_facet_rows(basis, n_el, q, ell, t, e, nloc)
                            - s * _facet_rows(basis, n_el, qq, ll, tt, e, nloc))
        else:
            raise SpaceError(f"unknown continuity form {continuity!r}")
    return np.vstack(rows)


def polar_constraints(basis):
    """Radial component vanishing on the inner and outer circles."""
    nloc = basis.size
    x2 = -0.5 + np.arange(basis.n2) / basis.n2
    rows = []
    for x1 in (0.0, 1.0):
        X = np.column_stack([np.full_like(x2, x1), x2])
        r = np.zeros((x2.size, 2 * nloc))
        r[:, :nloc] = basis.eval(X)
        rows.append(r)
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# builders

def build_rect_space(J, geometry=None):
    """[Q_J]^2 on the unit square with vanishing normal component."""
    if J < 2:
        raise SpaceError("rectangular space needs J >= 2 (J < 2 leaves it empty)")
    geometry = unit_square_partition() if geometry is None else geometry
    basis = lagrange_tensor(J)
    C = dd_constraints(geometry, basis)
    return DisplacementSpace("rect", geometry, basis, C, geometry.areas,
                             params={"J": J})


def build_polar_space(J_r, J_f, chart=None):
    """Polynomial x Fourier space with radial component zero at x1 in {0, 1}."""
    if J_r < 2:
        raise SpaceError("polar space needs J_r >= 2")
    if J_f < 0:
        raise SpaceError("polar space needs J_f >= 0")
    basis = polar_tensor(J_r, J_f)
    geometry = _UnitPolar() if chart is None else PolarGeometry(chart)
    C = polar_constraints(basis)
    return DisplacementSpace("polar", geometry, basis, C, geometry.areas,
                             params={"J_r": J_r, "J_f": J_f})


def build_dd_space(partition, J, norm="standard", continuity="tangential"):
    """Spectral-element space on a partition, continuous across facets."""
    if J < 2:
        raise SpaceError("spectral-element space needs J >= 2")
    basis = lagrange_tensor(J)
    C = dd_constraints(partition, basis, continuity)
    return DisplacementSpace("dd", partition, basis, C, partition.areas, norm=norm,
                             params={"J": J, "continuity": continuity})


class _UnitPolar:
    """Placeholder geometry for a polar space built without a chart."""

    periodic = True
    kind = "polar"
    n_elements = 1
    areas = np.array([1.0])


def rect_dimension_formula(J):
    return 2 * (J + 1) ** 2 - 4 * (J + 1)


def dd_dimension_formula(J, n_dd, n_int):
    return rect_dimension_formula(J) * n_dd - (J - 1) * n_int


def constraint_rank(C, rtol=1e-10):
    """Rank by QR with column pivoting (independent of the SVD path)."""
    if C.shape[0] == 0:
        return 0
    R = sla.qr(C, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(R))
    return int(np.count_nonzero(d > rtol * d.max())) if d.size else 0
