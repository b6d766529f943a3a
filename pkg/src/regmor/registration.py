"""Registration objective, single-target registration and greedy enrichment."""
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import gauss_legendre, tensor_rule, trapezoid_periodic
from .femesh import MappingError, discrete_bijectivity_check, map_mesh
from .optimize import bfgs
from .reduction import pod
from .sensor import SensorDomainError, wrap_periodic

BIG = 1e30
EXP_CLAMP = 700.0


class RegistrationError(RuntimeError):
    pass


@dataclass
class RegistrationConfig:
    xi: float = 1e-4
    xi_msh: float = 1e-6
    eps: float = 0.1
    c_exp_factor: float = 0.025
    delta: float = 1.0
    f_msh_max: float = 10.0
    tol: float = 1e-6
    tol_pod: float = 1e-3
    n_max: int = 5
    quad_order: int = 0          # points per direction; 0 means J + 3
    max_iter: int = 500
    grad_tol: float = 1e-7
    rho_c: float = 1.0
    max_escalations: int = 5
    max_step: float = 0.5

    def __post_init__(self):
        for name in ("xi", "xi_msh", "c_exp_factor", "delta", "rho_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")

    @property
    def c_exp(self):
        return self.c_exp_factor * self.eps


# ---------------------------------------------------------------------------
# templates

class Template:
    """A sensor, optionally composed with a reference-square map id + phi."""

    def __init__(self, sensor, space=None, raw=None):
        self.sensor = sensor
        self.space = space
        self.raw = None if raw is None else np.asarray(raw, dtype=float)

    def values(self, q, X):
        if self.raw is not None:
            X = X + self.space.eval_raw(self.raw, q, X)
        return self.sensor.eval(q, X)


class TemplateSpace:
    """Span of templates evaluated on demand at quadrature points."""

    def __init__(self, templates=()):
        self.templates = list(templates)

    def __len__(self):
        return len(self.templates)

    def added(self, template):
        return TemplateSpace(self.templates + [template])

    def matrix(self, points, n_elements):
        """Values (N_dd * n_pts, N), element-major rows."""
        cols = []
        for t in self.templates:
            cols.append(np.concatenate([t.values(q, points) for q in range(n_elements)]))
        return np.column_stack(cols) if cols else np.zeros((n_elements * len(points), 0))


def gram_independent(T, w, tol=1e-12):
    """Templates independent: normalized weighted Gram determinant > tol."""
    G = T.T @ (w[:, None] * T)
    d = np.sqrt(np.clip(np.diag(G), 1e-300, None))
    return bool(np.linalg.det(G / np.outer(d, d)) > tol)


# ---------------------------------------------------------------------------
# registration problem

def quadrature_for(space, n):
    x1, w1 = gauss_legendre(n)
    if space.basis.periodic:
        x2, w2 = trapezoid_periodic(n)
    else:
        x2, w2 = gauss_legendre(n)
    return tensor_rule(x1, w1, x2, w2)


class RegistrationProblem:
    """Precomputed data shared by all registrations for one space and mesh."""

    def __init__(self, space, mesh, config, templates=None, quad_order=None):
        self.space = space
        self.mesh = mesh
        self.cfg = config
        self.geometry = space.geometry
        self.periodic = bool(space.basis.periodic)
        n_el = space.n_elements
        n = quad_order or config.quad_order or (space.basis.n1 - 1) + 3
        self.quad_order = n
        self.X, self.w = quadrature_for(space, n)
        ev = space.basis.eval_all(self.X, ("v", "x", "y"))
        self.Ev, self.Ex, self.Ey = ev["v"], ev["x"], ev["y"]
        # proximity weights: quadrature weight times geometric Jacobian
        if hasattr(self.geometry, "jacobian_det"):
            gdet = np.concatenate([np.abs(self.geometry.jacobian_det(q, self.X))
                                   for q in range(n_el)])
        else:
            gdet = np.ones(n_el * len(self.w))
        self.wf = np.tile(self.w, n_el) * gdet
        self._setup_mesh()
        self.templates = None
        self.T = None
        if templates is not None:
            self.set_templates(templates)

    # -- setup -------------------------------------------------------------
    def _setup_mesh(self):
        mesh = self.mesh
        vtx = np.unique(mesh.conn[:, :3])
        self.vtx = vtx
        self.vlabels = mesh.labels[vtx]
        self.vrefs = mesh.refs[vtx]
        self.Evtx = self.space.basis.eval(self.vrefs)
        pos = -np.ones(mesh.n_nodes, dtype=int)
        pos[vtx] = np.arange(vtx.size)
        self.tri = pos[mesh.conn[:, :3]]
        orig = mesh.nodes[vtx][self.tri]
        Go = np.stack([orig[:, 1] - orig[:, 0], orig[:, 2] - orig[:, 0]], axis=-1)
        self.Go_inv = np.linalg.inv(Go)
        self.Go_inv_T = np.ascontiguousarray(np.transpose(self.Go_inv, (0, 2, 1)))
        self.orient = np.sign(np.linalg.det(Go))
        self.elem_area = mesh.areas()
        self._label_masks = [np.flatnonzero(self.vlabels == q)
                             for q in range(self.space.n_elements)]

    def set_templates(self, templates):
        self.templates = templates
        self.T = templates.matrix(self.X, self.space.n_elements)
        if self.T.shape[1] == 0:
            raise RegistrationError("template space is empty")
        if not gram_independent(self.T, self.wf):
            raise RegistrationError("templates are linearly dependent")
        TW = self.T.T * self.wf
        self._TWT = TW @ self.T

    # -- pieces ------------------------------------------------------------
    def _split(self, c):
        return self.space.split(c)

    def mapped_points(self, c):
        """Reference quadrature points moved by the displacement, per element."""
        cs = self._split(c)
        return [self.X + np.column_stack([self.Ev @ cs[0, q], self.Ev @ cs[1, q]])
                for q in range(self.space.n_elements)]

    def mapped_sensor(self, c, sensor, with_grad=False):
        vals, grads = [], []
        for q, Y in enumerate(self.mapped_points(c)):
            if with_grad:
                v, g = sensor.eval_grad(q, Y)
                grads.append(g)
            else:
                v = sensor.eval(q, Y)
            vals.append(v)
        S = np.concatenate(vals)
        return (S, np.vstack(grads)) if with_grad else S

    def _project(self, S):
        coef = np.linalg.solve(self._TWT, self.T.T @ (self.wf * S))
        r = S - self.T @ coef
        return r, coef

    def proximity(self, c, sensor):
        S = self.mapped_sensor(c, sensor)
        r, _ = self._project(S)
        return float(r @ (self.wf * r))

    def proximity_grad(self, c, sensor):
        S, dS = self.mapped_sensor(c, sensor, with_grad=True)
        r, _ = self._project(S)
        f = float(r @ (self.wf * r))
        wr = 2.0 * self.wf * r
        ng = len(self.w)
        g = np.zeros((2, self.space.n_elements, self.space.nloc))
        for q in range(self.space.n_elements):
            sl = slice(q * ng, (q + 1) * ng)
            for d in range(2):
                g[d, q] = self.Ev.T @ (wr[sl] * dS[sl, d])
        return f, g.ravel()

    def _det_parts(self, c):
        cs = self._split(c)
        out = []
        for q in range(self.space.n_elements):
            a11 = self.Ex @ cs[0, q]
            a12 = self.Ey @ cs[0, q]
            a21 = self.Ex @ cs[1, q]
            a22 = self.Ey @ cs[1, q]
            out.append((a11, a12, a21, a22))
        return out

    def constraint(self, c, with_grad=False):
        cfg = self.cfg
        C = cfg.c_exp
        total = 0.0
        g = np.zeros((2, self.space.n_elements, self.space.nloc)) if with_grad else None
        for q, (a11, a12, a21, a22) in enumerate(self._det_parts(c)):
            det = (1 + a11) * (1 + a22) - a12 * a21
            e1 = np.exp(np.minimum((cfg.eps - det) / C, EXP_CLAMP))
            e2 = np.exp(np.minimum((det - 1.0 / cfg.eps) / C, EXP_CLAMP))
            total += self.w @ (e1 + e2)
            if with_grad:
                dd = self.w * (-e1 * ((cfg.eps - det) / C < EXP_CLAMP)
                               + e2 * ((det - 1.0 / cfg.eps) / C < EXP_CLAMP)) / C
                g[0, q] = self.Ex.T @ (dd * (1 + a22)) - self.Ey.T @ (dd * a21)
                g[1, q] = self.Ey.T @ (dd * (1 + a11)) - self.Ex.T @ (dd * a12)
        val = total - cfg.delta * self.space.n_elements
        return (val, g.ravel()) if with_grad else val

    def min_det(self, c):
        return min(float(((1 + a11) * (1 + a22) - a12 * a21).min())
                   for a11, a12, a21, a22 in self._det_parts(c))

    def vertex_displacement(self, c):
        cs = self._split(c)
        out = np.empty((self.vtx.size, 2))
        for q, m in enumerate(self._label_masks):
            E = self.Evtx[m]
            out[m, 0] = E @ cs[0, q]
            out[m, 1] = E @ cs[1, q]
        return out

    def _vertex_positions(self, c):
        refs = self.vrefs + self.vertex_displacement(c)
        tol = 1e-8
        bad = (refs[:, 0] < -tol) | (refs[:, 0] > 1 + tol)
        if not self.periodic:
            bad |= (refs[:, 1] < -tol) | (refs[:, 1] > 1 + tol)
        if np.any(bad):
            return None, None
        refs[:, 0] = np.clip(refs[:, 0], 0.0, 1.0)
        if not self.periodic:
            refs[:, 1] = np.clip(refs[:, 1], 0.0, 1.0)
        return refs, self.geometry.forward(self.vlabels, refs)

    def mesh_penalty(self, c, with_grad=False):
        """Sum_k |D_k| exp(f_k - f_max) with relative distortion f_k."""
        refs, x = self._vertex_positions(c)
        if refs is None:
            return (BIG, np.zeros(self.space.raw_size)) if with_grad else BIG
        tri = x[self.tri]
        Gm = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=-1)
        F = Gm @ self.Go_inv
        det = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
        if np.any(det <= 1e-14):
            return (BIG, np.zeros(self.space.raw_size)) if with_grad else BIG
        fro = np.sum(F * F, axis=(1, 2))
        f = 0.5 * fro / det
        e = self.elem_area * np.exp(np.minimum(f - self.cfg.f_msh_max, EXP_CLAMP))
        val = float(e.sum())
        if not with_grad:
            return val
        # inverse transpose of 2x2 blocks in closed form
        Finv_T = np.empty_like(F)
        Finv_T[:, 0, 0] = F[:, 1, 1] / det
        Finv_T[:, 0, 1] = -F[:, 1, 0] / det
        Finv_T[:, 1, 0] = -F[:, 0, 1] / det
        Finv_T[:, 1, 1] = F[:, 0, 0] / det
        dF = e[:, None, None] * (F / det[:, None, None] - f[:, None, None] * Finv_T)
        dG = dF @ self.Go_inv_T
        nv = x.shape[0]
        gx = np.empty_like(x)
        for d in range(2):
            g1, g2 = dG[:, d, 0], dG[:, d, 1]
            gx[:, d] = (np.bincount(self.tri[:, 1], g1, nv) + np.bincount(self.tri[:, 2], g2, nv)
                        - np.bincount(self.tri[:, 0], g1 + g2, nv))
        J = self.geometry.jacobian(self.vlabels, refs)
        gphi = np.einsum("ncd,nc->nd", J, gx)
        g = np.zeros((2, self.space.n_elements, self.space.nloc))
        for q, m in enumerate(self._label_masks):
            E = self.Evtx[m]
            g[0, q] = E.T @ gphi[m, 0]
            g[1, q] = E.T @ gphi[m, 1]
        return val, g.ravel()

    # -- full objective ----------------------------------------------------
    def objective(self, a, sensor, rho_c=None, space=None):
        """Penalized objective and gradient in coefficient coordinates."""
        space = self.space if space is None else space
        rho_c = self.cfg.rho_c if rho_c is None else rho_c
        a = np.asarray(a, dtype=float)
        c = space.raw(a)
        try:
            f, gf = self.proximity_grad(c, sensor)
        except SensorDomainError:
            return np.inf, np.zeros_like(a)
        m, gm = self.mesh_penalty(c, with_grad=True)
        if m >= BIG:
            return np.inf, np.zeros_like(a)
        cv, gc = self.constraint(c, with_grad=True)
        Aa = space.A_stab @ a
        xi_m = self.cfg.xi_msh
        pen = max(cv, 0.0)
        val = f + self.cfg.xi * (a @ Aa) + xi_m * m + rho_c * pen ** 2
        graw = gf + xi_m * gm + 2.0 * rho_c * pen * gc
        grad = space.B.T @ graw + 2.0 * self.cfg.xi * Aa
        return float(val), grad

    def bijectivity(self, c):
        field_ = lambda labels, refs: self.space.displacement_at(c, labels, refs)
        nodes = map_mesh(self.mesh, self.geometry, field_)
        return discrete_bijectivity_check(self.mesh, nodes)


@dataclass
class RegistrationResult:
    a: np.ndarray
    f: float
    objective: float
    constraint: float
    success: bool
    status: str
    nit: int
    min_det: float = np.nan
    escalations: int = 0


def _bijective(problem, c):
    """Discrete check; a node pushed outside the reference domain counts as a failure."""
    try:
        return problem.bijectivity(c)
    except MappingError:
        return None


def _feasible(problem, space, a):
    c = space.raw(a)
    if problem.constraint(c) > 0:
        return False
    rep = _bijective(problem, c)
    return rep is not None and rep.passed


def backtrack_to_feasible(problem, space, a_good, a_bad, n_bisect=30):
    """Largest t in [0, 1] (bisection) with a_good + t (a_bad - a_good) feasible."""
    lo, hi = 0.0, 1.0
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if _feasible(problem, space, a_good + mid * (a_bad - a_good)):
            lo = mid
        else:
            hi = mid
    return a_good + lo * (a_bad - a_good), lo


def register_one(problem, sensor, a_init=None, space=None):
    """Minimize the penalized objective from an admissible starting point.

    The constraint penalty grows tenfold while the constraint is violated.
    If the minimizer satisfies the constraint but inverts a high-order mesh
    element, the coefficients are pulled back toward the starting point
    until the discrete check passes.
    """
    cfg = problem.cfg
    space = problem.space if space is None else space
    a = np.zeros(space.dim) if a_init is None else np.array(a_init, dtype=float)
    if problem.constraint(space.raw(a)) > 0:
        raise RegistrationError("initial coefficients violate the bijectivity constraint")
    a_start = a.copy()
    rho = cfg.rho_c
    total_it = 0
    status = "not run"
    for esc in range(cfg.max_escalations + 1):
        fun = lambda x: problem.objective(x, sensor, rho, space)
        res = bfgs(fun, a, max_iter=cfg.max_iter, grad_tol=cfg.grad_tol,
                   max_step=cfg.max_step)
        total_it += res.nit
        status = res.status
        if np.isfinite(res.fun):
            a = res.x
        c = space.raw(a)
        cv = problem.constraint(c)
        if cv > 0:
            rho *= 10.0
            continue
        rep = _bijective(problem, c)
        if rep is None or not rep.passed:
            if not _feasible(problem, space, a_start):
                a_start = np.zeros(space.dim)
            a, t = backtrack_to_feasible(problem, space, a_start, a)
            c = space.raw(a)
            cv = problem.constraint(c)
            rep = problem.bijectivity(c)
            status = f"{status}; pulled back (t={t:.3f})"
        return RegistrationResult(a, problem.proximity(c, sensor),
                                  problem.objective(a, sensor, rho, space)[0], cv,
                                  rep.passed, status, total_it, rep.min_det, esc)
    c = space.raw(a)
    rep = _bijective(problem, c)
    return RegistrationResult(a, problem.proximity(c, sensor), np.nan, problem.constraint(c),
                              False, "infeasible after escalation: " + status, total_it,
                              np.nan if rep is None else rep.min_det, cfg.max_escalations)


# ---------------------------------------------------------------------------
# greedy registration

@dataclass
class GreedyResult:
    templates: TemplateSpace
    basis: np.ndarray            # raw mapping basis W_M (raw_size x M)
    coefficients: np.ndarray     # (n_train, M)
    maps: np.ndarray             # (n_train, raw_size) last registered raw maps
    eigenvalues: np.ndarray
    f_history: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    results: list = field(default_factory=list)

    @property
    def max_f(self):
        return [float(np.max(f)) for f in self.f_history]


def _register_task(args):
    problem, sensor, a0, space = args
    return register_one(problem, sensor, a0, space)


def parallel_map(fn, items, workers=1):
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def greedy_registration(problem, sensors, templates0, workers=1, log=None):
    """Alternate registration of all snapshots, mapping POD and enrichment.

    Every pass registers in the full displacement space, warm-started from
    the previous pass's optimum; POD of the maps follows each pass.
    """
    cfg = problem.cfg
    ambient = problem.space
    n = len(sensors)
    if n < 1:
        raise RegistrationError("need at least one training snapshot")
    templates = templates0
    problem.set_templates(templates)
    space = ambient
    a = np.zeros((n, ambient.dim))
    maps = np.zeros((n, ambient.raw_size))
    out = GreedyResult(templates, np.zeros((ambient.raw_size, 0)), np.zeros((n, 0)),
                       maps, np.zeros(0))
    N0 = len(templates0)
    for N in range(N0, max(cfg.n_max, N0 + 1)):
        t0 = time.perf_counter()
        starts = [a[k] if problem.constraint(space.raw(a[k])) <= 0 else np.zeros(space.dim)
                  for k in range(n)]
        results = parallel_map(_register_task,
                               [(problem, s, starts[k], space) for k, s in enumerate(sensors)],
                               workers)
        ok = [k for k, r in enumerate(results) if r.success]
        failed = [k for k, r in enumerate(results) if not r.success]
        if not ok:
            raise RegistrationError("all registrations failed")
        for k in failed:
            warnings.warn(f"registration of snapshot {k} failed: {results[k].status}")
        for k in ok:
            a[k] = results[k].a
            maps[k] = space.raw(a[k])
        f = np.array([r.f for r in results])
        out.f_history.append(f)
        out.failures.append(failed)
        out.results = results
        P = pod(maps[ok].T, ambient.G, tol=cfg.tol_pod)
        out.basis = P.basis
        out.eigenvalues = P.eigenvalues
        out.coefficients = (P.basis.T @ ambient.G @ maps.T).T
        out.maps = maps.copy()
        out.timings.append(time.perf_counter() - t0)
        fmax = np.max(f[ok])
        if log:
            log(f"N={N}: max f*={fmax:.3e}, M={P.n}, failed={len(failed)}, "
                f"{out.timings[-1]:.1f}s")
        if fmax < cfg.tol or P.n == 0:
            break
        # enrich with the worst registered snapshot, ties to the lowest index
        kstar = ok[int(np.argmax(f[ok]))]
        cand = templates.added(Template(sensors[kstar], ambient, maps[kstar].copy()))
        try:
            problem.set_templates(cand)
        except RegistrationError:
            warnings.warn("enrichment candidate is linearly dependent; stopping")
            problem.set_templates(templates)
            break
        templates = cand
        out.templates = templates
    return out
