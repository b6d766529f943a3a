"""Reference-domain transformations.

Polar chart for annuli, Gordon-Hall (transfinite) element maps built from
four boundary curves, their Newton inverses, and quadrilateral partitions
with facet connectivity tables.

Facet convention on the reference square [0,1]^2 (0-based facet index):
    0: X1 = 0, parameterized as (0, t)
    1: X1 = 1, parameterized as (1, t)
    2: X2 = 0, parameterized as (t, 0)
    3: X2 = 1, parameterized as (t, 1)
so that a Gordon-Hall element takes its edges in exactly this order.
"""
import numpy as np

from .basis import gauss_legendre, tensor_rule


class GeometryError(ValueError):
    """Invalid geometric input (bad corners, bad tables, out of domain)."""


class InversionError(RuntimeError):
    """Newton inversion of an element map did not converge."""


# reference facet data, indexed by facet
FACET_TANGENT = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
FACET_NORMAL = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])


def facet_points(ell, t):
    """Reference points gamma_ell(t) on facet ell of the unit square."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    z, o = np.zeros_like(t), np.ones_like(t)
    return np.column_stack({0: (z, t), 1: (o, t), 2: (t, z), 3: (t, o)}[ell])


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


# ---------------------------------------------------------------------------
# polar chart

class PolarChart:
    """Polar map from [0,1] x (-1/2, 1/2] onto the annulus r <= |x| <= R."""

    def __init__(self, r, R):
        if not (0.0 < r < R):
            raise GeometryError(f"need 0 < r < R, got r={r}, R={R}")
        self.r = float(r)
        self.R = float(R)

    def radius(self, rho):
        return self.r + (self.R - self.r) * rho

    def forward(self, x, tol=1e-12):
        X, single = _as_points(x)
        rho = X[:, 0]
        if np.any(rho < -tol) or np.any(rho > 1.0 + tol):
            raise GeometryError("radial coordinate outside [0, 1]")
        rad = self.radius(rho)
        ang = 2.0 * np.pi * X[:, 1]
        out = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        return out[0] if single else out

    def inverse(self, p, tol=1e-10):
        P, single = _as_points(p)
        nrm = np.hypot(P[:, 0], P[:, 1])
        if np.any(nrm < self.r - tol) or np.any(nrm > self.R + tol):
            raise GeometryError("point outside the annulus")
        rho = (nrm - self.r) / (self.R - self.r)
        theta = np.arctan2(P[:, 1], P[:, 0]) / (2.0 * np.pi)
        # arctan2 returns (-pi, pi]; so theta lies in (-1/2, 1/2] already
        out = np.column_stack([np.clip(rho, 0.0, 1.0), theta])
        return out[0] if single else out

    def jacobian(self, x):
        X, _ = _as_points(x)
        rad = self.radius(X[:, 0])
        ang = 2.0 * np.pi * X[:, 1]
        c, s = np.cos(ang), np.sin(ang)
        J = np.empty((X.shape[0], 2, 2))
        J[:, 0, 0] = (self.R - self.r) * c
        J[:, 1, 0] = (self.R - self.r) * s
        J[:, 0, 1] = -2.0 * np.pi * rad * s
        J[:, 1, 1] = 2.0 * np.pi * rad * c
        return J

    def jacobian_det(self, x):
        X, _ = _as_points(x)
        return 2.0 * np.pi * (self.R - self.r) * self.radius(X[:, 0])

    def area(self):
        return np.pi * (self.R ** 2 - self.r ** 2)


# ---------------------------------------------------------------------------
# boundary curves

class Curve:
    """Base class: a map t in [0,1] -> R^2 with derivative."""

    kind = "curve"

    def __call__(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    @property
    def start(self):
        return self(np.array([0.0]))[0]

    @property
    def end(self):
        return self(np.array([1.0]))[0]

    def reversed(self):
        return _Reversed(self)

    def transformed(self, A, b):
        return _Affine(self, A, b)


class LineCurve(Curve):
    kind = "line"

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        return (1.0 - t) * self.a + t * self.b

    def deriv(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.tile(self.b - self.a, (t.size, 1))

    def to_dict(self):
        return {"type": "line", "start": self.a.tolist(), "end": self.b.tolist()}


class ArcCurve(Curve):
    """Circular arc center + radius*(cos a, sin a), a from angle0 to angle1 (radians)."""

    kind = "arc"

    def __init__(self, center, radius, angle0, angle1):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.angle0 = float(angle0)
        self.angle1 = float(angle1)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a = self.angle0 + (self.angle1 - self.angle0) * t
        return self.center + self.radius * np.column_stack([np.cos(a), np.sin(a)])

    def deriv(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        a = self.angle0 + (self.angle1 - self.angle0) * t
        da = self.angle1 - self.angle0
        return self.radius * da * np.column_stack([-np.sin(a), np.cos(a)])

    def to_dict(self):
        return {"type": "arc", "center": self.center.tolist(), "radius": self.radius,
                "angle0": self.angle0, "angle1": self.angle1}


class PolyCurve(Curve):
    """Degree-J polynomial curve through values at Chebyshev-Lobatto samples.

    Evaluated by the barycentric formula; also extrapolates smoothly, which
    keeps Newton iterates that leave [0,1] well defined.
    """

    kind = "poly"

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)
        n = self.points.shape[0]
        if n < 2:
            raise GeometryError("polynomial curve needs at least two samples")
        J = n - 1
        self.nodes = 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / J))
        w = np.ones(n)
        w[1::2] = -1.0
        w[0] *= 0.5
        w[-1] *= 0.5
        self.weights = w
        # derivative matrix for exact derivative evaluation
        D = np.zeros((n, n))
        x = self.nodes
        for i in range(n):
            for j in range(n):
                if i != j:
                    D[i, j] = (w[j] / w[i]) / (x[i] - x[j])
            D[i, i] = -D[i].sum()
        self._dpoints = D @ self.points

    @classmethod
    def from_function(cls, f, degree=10):
        n = degree + 1
        t = 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / degree))
        return cls(np.asarray(f(t), dtype=float))

    def _bary(self, vals, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        diff = t[:, None] - self.nodes[None, :]
        exact = np.isclose(diff, 0.0, rtol=0.0, atol=1e-15)
        diff[exact] = 1.0
        c = self.weights / diff
        out = (c @ vals) / c.sum(axis=1)[:, None]
        rows, cols = np.nonzero(exact)
        out[rows] = vals[cols]
        return out

    def __call__(self, t):
        return self._bary(self.points, t)

    def deriv(self, t):
        return self._bary(self._dpoints, t)

    def to_dict(self):
        return {"type": "poly", "points": self.points.tolist()}


class TableCurve(Curve):
    """Piecewise-linear curve through a point table at uniform parameters."""

    kind = "table"

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)
        if self.points.shape[0] < 2:
            raise GeometryError("point table needs at least two rows")
        self.nseg = self.points.shape[0] - 1

    def _seg(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        i = np.clip(np.floor(t * self.nseg).astype(int), 0, self.nseg - 1)
        return t, i

    def __call__(self, t):
        t, i = self._seg(t)
        s = (t * self.nseg - i)[:, None]
        return (1.0 - s) * self.points[i] + s * self.points[i + 1]

    def deriv(self, t):
        t, i = self._seg(t)
        return (self.points[i + 1] - self.points[i]) * self.nseg

    def to_dict(self):
        return {"type": "table", "points": self.points.tolist()}


class _Reversed(Curve):
    def __init__(self, base):
        self.base = base
        self.kind = base.kind

    def __call__(self, t):
        return self.base(1.0 - np.atleast_1d(np.asarray(t, dtype=float)))

    def deriv(self, t):
        return -self.base.deriv(1.0 - np.atleast_1d(np.asarray(t, dtype=float)))

    def to_dict(self):
        d = self.base.to_dict()
        d["reversed"] = not d.get("reversed", False)
        return d


class _Affine(Curve):
    def __init__(self, base, A, b):
        self.base = base
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.kind = base.kind

    def __call__(self, t):
        return self.base(t) @ self.A.T + self.b

    def deriv(self, t):
        return self.base.deriv(t) @ self.A.T

    def to_dict(self):
        d = self.base.to_dict()
        d["affine"] = {"A": self.A.tolist(), "b": self.b.tolist()}
        return d


def curve_from_dict(d):
    kind = d["type"]
    if kind == "line":
        c = LineCurve(d["start"], d["end"])
    elif kind == "arc":
        c = ArcCurve(d["center"], d["radius"], d["angle0"], d["angle1"])
    elif kind == "poly":
        c = PolyCurve(d["points"])
    elif kind in ("table", "sampled"):
        c = TableCurve(d["points"])
    else:
        raise GeometryError(f"unknown curve type {kind!r}")
    if "affine" in d:
        c = _Affine(c, d["affine"]["A"], d["affine"]["b"])
    if d.get("reversed", False):
        c = _Reversed(c)
    return c


# ---------------------------------------------------------------------------
# Gordon-Hall element

class GordonHallElement:
    """Transfinite map of the unit square onto a curved quadrilateral.

    `edges` are four curves following the facet convention of this module:
    edges[0](t) = Psi(0, t), edges[1](t) = Psi(1, t),
    edges[2](t) = Psi(t, 0), edges[3](t) = Psi(t, 1).
    """

    def __init__(self, edges, tol=1e-12):
        if len(edges) != 4:
            raise GeometryError("a Gordon-Hall element needs four edges")
        self.edges = list(edges)
        e0, e1, e2, e3 = self.edges
        self.c00 = e2.start
        self.c10 = e2.end
        self.c01 = e3.start
        self.c11 = e3.end
        scale = max(1.0, np.abs(np.array([self.c00, self.c10, self.c01, self.c11])).max())
        checks = [(e0.start, self.c00), (e0.end, self.c01),
                  (e1.start, self.c10), (e1.end, self.c11)]
        for got, want in checks:
            if np.linalg.norm(got - want) > tol * scale:
                raise GeometryError(
                    f"inconsistent element corners: {got} vs {want}")
        corners = np.array([self.c00, self.c10, self.c11, self.c01])
        self.bbox = (corners.min(axis=0), corners.max(axis=0))
        self.scale = float(np.ptp(corners, axis=0).max())
        # refine bounding box with boundary samples (curved edges bulge)
        t = np.linspace(0.0, 1.0, 33)
        pts = np.vstack([e(t) for e in self.edges])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 1e-8 * max(self.scale, 1.0)
        self.bbox = (lo - pad, hi + pad)

    @property
    def corners(self):
        """Corners in counterclockwise reference order (0,0),(1,0),(1,1),(0,1)."""
        return np.array([self.c00, self.c10, self.c11, self.c01])

    def forward(self, X):
        X, single = _as_points(X)
        s = X[:, 0:1]
        t = X[:, 1:2]
        e0, e1, e2, e3 = self.edges
        out = ((1 - s) * e0(t[:, 0]) + s * e1(t[:, 0])
               + (1 - t) * e2(s[:, 0]) + t * e3(s[:, 0])
               - ((1 - s) * (1 - t) * self.c00 + s * (1 - t) * self.c10
                  + (1 - s) * t * self.c01 + s * t * self.c11))
        return out[0] if single else out

    def jacobian(self, X):
        X, _ = _as_points(X)
        s = X[:, 0:1]
        t = X[:, 1:2]
        e0, e1, e2, e3 = self.edges
        ds = (-e0(t[:, 0]) + e1(t[:, 0]) + (1 - t) * e2.deriv(s[:, 0]) + t * e3.deriv(s[:, 0])
              - (-(1 - t) * self.c00 + (1 - t) * self.c10 - t * self.c01 + t * self.c11))
        dt = ((1 - s) * e0.deriv(t[:, 0]) + s * e1.deriv(t[:, 0]) - e2(s[:, 0]) + e3(s[:, 0])
              - (-(1 - s) * self.c00 - s * self.c10 + (1 - s) * self.c01 + s * self.c11))
        return np.stack([ds, dt], axis=2)

    def jacobian_det(self, X):
        J = self.jacobian(X)
        return J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]

    def _newton(self, P, X0, maxit, restol):
        X = X0.copy()
        res = self.forward(X) - P
        for _ in range(maxit):
            r = np.linalg.norm(res, axis=1)
            act = r > restol
            if not act.any():
                break
            J = self.jacobian(X[act])
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            det = np.where(np.abs(det) < 1e-300, 1e-300, det)
            rx, ry = res[act, 0], res[act, 1]
            dx = (J[:, 1, 1] * rx - J[:, 0, 1] * ry) / det
            dy = (-J[:, 1, 0] * rx + J[:, 0, 0] * ry) / det
            Xa = X[act] - np.column_stack([dx, dy])
            # keep iterates in a generous neighbourhood of the square
            X[act] = np.clip(Xa, -0.5, 1.5)
            res[act] = self.forward(X[act]) - P[act]
        return X, np.linalg.norm(res, axis=1)

    def solve(self, p, maxit=50, restol=1e-10):
        """Newton inverse without clamping; returns (X, residual)."""
        P, single = _as_points(p)
        # iterate slightly past the acceptance tolerance for accuracy
        tight = min(restol, 1e-13 * max(self.scale, 1.0))
        seeds = [(0.5, 0.5), (0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)]
        X = np.full_like(P, 0.5)
        res = np.full(P.shape[0], np.inf)
        todo = np.arange(P.shape[0])
        for seed in seeds:
            if todo.size == 0:
                break
            X0 = np.tile(np.asarray(seed, dtype=float), (todo.size, 1))
            Xs, rs = self._newton(P[todo], X0, maxit, tight)
            better = rs < res[todo]
            X[todo[better]] = Xs[better]
            res[todo[better]] = rs[better]
            todo = todo[res[todo] > restol]
        if single:
            return X[0], res[0]
        return X, res

    def inverse(self, p, maxit=50, restol=1e-10, clamp_tol=1e-8):
        """Reference coordinates of p; raises InversionError on failure."""
        P, single = _as_points(p)
        X, res = self.solve(P, maxit, restol)
        if np.any(res > restol):
            bad = np.flatnonzero(res > restol)[0]
            raise InversionError(f"Newton inversion failed at point {P[bad]} "
                                 f"(residual {res[bad]:.3e})")
        outside = (X < -clamp_tol) | (X > 1.0 + clamp_tol)
        if np.any(outside):
            bad = np.flatnonzero(outside.any(axis=1))[0]
            raise GeometryError(f"point {P[bad]} lies outside the element")
        X = np.clip(X, 0.0, 1.0)
        return X[0] if single else X

    def area(self, n=12):
        x, w = gauss_legendre(n)
        pts, wts = tensor_rule(x, w, x, w)
        return float(wts @ np.abs(self.jacobian_det(pts)))

    def affine_fit(self):
        """Least-squares affine map X -> A X + b through the four corners."""
        ref = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        V = np.column_stack([ref, np.ones(4)])
        coef, *_ = np.linalg.lstsq(V, self.corners, rcond=None)
        return coef[:2].T, coef[2]

    def to_dict(self):
        return {"corners": self.corners.tolist(),
                "edges": [e.to_dict() for e in self.edges]}


def straight_element(c00, c10, c11, c01):
    """Element with straight edges through corners given counterclockwise."""
    c00, c10, c11, c01 = (np.asarray(c, dtype=float) for c in (c00, c10, c11, c01))
    return GordonHallElement([LineCurve(c00, c01), LineCurve(c10, c11),
                              LineCurve(c00, c10), LineCurve(c01, c11)])


# ---------------------------------------------------------------------------
# partitions

class Partition:
    """Quadrilateral partition with Gordon-Hall elements and facet tables.

    Tables are stored 0-based internally: qext[l, q] is the neighbouring
    element across facet l of element q (-1 on the boundary), ell_ext[l, q]
    the facet index on that neighbour, orif[l, q] the orientation flag
    (1 when parameters agree, 0 when reversed).
    """

    periodic = False
    kind = "dd"

    def __init__(self, elements, qext, ell_ext, orif, check_tol=1e-10):
        self.elements = list(elements)
        self.n_elements = len(self.elements)
        self.qext = np.asarray(qext, dtype=int)
        self.ell_ext = np.asarray(ell_ext, dtype=int)
        self.orif = np.asarray(orif, dtype=int)
        shape = (4, self.n_elements)
        for name in ("qext", "ell_ext", "orif"):
            if getattr(self, name).shape != shape:
                raise GeometryError(f"table {name} must have shape {shape}")
        self._check_tables()
        self._check_interfaces(check_tol)
        self.areas = np.array([el.area() for el in self.elements])

    @property
    def n_int(self):
        return int(np.count_nonzero(self.qext >= 0) // 2)

    def interfaces(self):
        """Interior facets as tuples (q, l, q', l', orif), each listed once."""
        out = []
        for q in range(self.n_elements):
            for ell in range(4):
                qq = self.qext[ell, q]
                if qq < 0:
                    continue
                ll = self.ell_ext[ell, q]
                if (q, ell) < (qq, ll):
                    out.append((q, ell, int(qq), int(ll), int(self.orif[ell, q])))
        return out

    def _check_tables(self):
        for q in range(self.n_elements):
            for ell in range(4):
                qq = self.qext[ell, q]
                if qq < 0:
                    if self.ell_ext[ell, q] >= 0:
                        raise GeometryError(f"facet {ell} of element {q}: boundary "
                                            "facet with a neighbour facet index")
                    continue
                ll = self.ell_ext[ell, q]
                if not (0 <= qq < self.n_elements and 0 <= ll < 4):
                    raise GeometryError(f"facet {ell} of element {q}: index out of range")
                if self.qext[ll, qq] != q or self.ell_ext[ll, qq] != ell:
                    raise GeometryError(f"connectivity tables not symmetric at "
                                        f"facet {ell} of element {q}")
                if self.orif[ll, qq] != self.orif[ell, q]:
                    raise GeometryError(f"orientation table not symmetric at "
                                        f"facet {ell} of element {q}")

    def _check_interfaces(self, tol):
        t = np.linspace(0.0, 1.0, 20)
        for q, ell, qq, ll, o in self.interfaces():
            a = self.elements[q].forward(facet_points(ell, t))
            b = self.elements[qq].forward(facet_points(ll, t if o else 1.0 - t))
            scale = max(1.0, self.elements[q].scale)
            if np.abs(a - b).max() > tol * scale:
                raise GeometryError(f"facet {ell} of element {q} does not match "
                                    f"facet {ll} of element {qq}")

    # mapping-geometry interface shared with PolarGeometry
    def forward(self, q, X):
        """Psi_q(X); q may be an int or an array of element labels."""
        X, single = _as_points(X)
        q = np.broadcast_to(np.asarray(q), (X.shape[0],))
        out = np.empty_like(X)
        for e in np.unique(q):
            m = q == e
            out[m] = self.elements[e].forward(X[m])
        return out[0] if single else out

    def jacobian(self, q, X):
        X, _ = _as_points(X)
        q = np.broadcast_to(np.asarray(q), (X.shape[0],))
        out = np.empty((X.shape[0], 2, 2))
        for e in np.unique(q):
            m = q == e
            out[m] = self.elements[e].jacobian(X[m])
        return out

    def jacobian_det(self, q, X):
        J = self.jacobian(q, X)
        return J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]

    def inverse(self, q, p):
        return self.elements[q].inverse(p)

    def locate(self, points, clamp_tol=1e-8, restol=1e-10):
        """Element labels and reference coordinates for physical points.

        Ties on shared facets go to the lowest element index.
        """
        P, single = _as_points(points)
        labels = np.full(P.shape[0], -1)
        refs = np.zeros_like(P)
        for q, el in enumerate(self.elements):
            todo = np.flatnonzero(labels < 0)
            if todo.size == 0:
                break
            lo, hi = el.bbox
            inbox = np.all((P[todo] >= lo) & (P[todo] <= hi), axis=1)
            cand = todo[inbox]
            if cand.size == 0:
                continue
            X, res = el.solve(P[cand], restol=restol)
            ok = (res <= restol) & np.all((X >= -clamp_tol) & (X <= 1.0 + clamp_tol), axis=1)
            labels[cand[ok]] = q
            refs[cand[ok]] = np.clip(X[ok], 0.0, 1.0)
        if np.any(labels < 0):
            bad = np.flatnonzero(labels < 0)[0]
            raise GeometryError(f"point {P[bad]} is not inside any partition element")
        if single:
            return labels[0], refs[0]
        return labels, refs

    def geometric_map(self, target, points):
        """Map points of this partition onto `target` (same topology)."""
        labels, refs = self.locate(points)
        return target.forward(labels, refs)

    def area(self):
        return float(self.areas.sum())

    def to_dict(self):
        return {"n_elements": self.n_elements,
                "elements": [el.to_dict() for el in self.elements],
                "qext": _one_based(self.qext).tolist(),
                "ell_ext": _one_based(self.ell_ext).tolist(),
                "orif": self.orif.tolist()}

    @classmethod
    def from_dict(cls, d):
        elements = [GordonHallElement([curve_from_dict(c) for c in el["edges"]])
                    for el in d["elements"]]
        return cls(elements, _zero_based(np.array(d["qext"])),
                   _zero_based(np.array(d["ell_ext"])), np.array(d["orif"]))


def _one_based(table):
    t = np.asarray(table).copy()
    t[t >= 0] += 1
    return t


def _zero_based(table):
    t = np.asarray(table).copy()
    t[t > 0] -= 1
    return t


def infer_connectivity(elements, n_samples=7, tol=1e-9):
    """Derive qext/ell_ext/orif tables by matching facet curves."""
    n = len(elements)
    qext = -np.ones((4, n), dtype=int)
    ell_ext = -np.ones((4, n), dtype=int)
    orif = np.ones((4, n), dtype=int)
    t = np.linspace(0.0, 1.0, n_samples)
    samples = [[el.forward(facet_points(ell, t)) for ell in range(4)] for el in elements]
    for q in range(n):
        for ell in range(4):
            a = samples[q][ell]
            for qq in range(n):
                if qq == q:
                    continue
                for ll in range(4):
                    b = samples[qq][ll]
                    scale = max(1.0, elements[q].scale)
                    if np.abs(a - b).max() <= tol * scale:
                        qext[ell, q], ell_ext[ell, q], orif[ell, q] = qq, ll, 1
                    elif np.abs(a - b[::-1]).max() <= tol * scale:
                        qext[ell, q], ell_ext[ell, q], orif[ell, q] = qq, ll, 0
    return qext, ell_ext, orif


def partition_from_elements(elements):
    qext, ell_ext, orif = infer_connectivity(elements)
    return Partition(elements, qext, ell_ext, orif)


def unit_square_partition():
    """Single identity element on the unit square."""
    return partition_from_elements([straight_element((0, 0), (1, 0), (1, 1), (0, 1))])


class PolarGeometry:
    """Single-element periodic mapping geometry backed by a PolarChart."""

    periodic = True
    kind = "polar"
    n_elements = 1

    def __init__(self, chart):
        self.chart = chart
        self.areas = np.array([chart.area()])

    def forward(self, q, X):
        return self.chart.forward(X)

    def jacobian(self, q, X):
        return self.chart.jacobian(X)

    def jacobian_det(self, q, X):
        return self.chart.jacobian_det(X)

    def inverse(self, q, p):
        return self.chart.inverse(p)

    def locate(self, points):
        P, single = _as_points(points)
        refs = self.chart.inverse(P)
        labels = np.zeros(P.shape[0], dtype=int)
        if single:
            return labels[0], refs[0]
        return labels, refs

    def geometric_map(self, target, points):
        labels, refs = self.locate(points)
        return target.forward(labels, refs)

    def area(self):
        return float(self.areas.sum())
