"""POD compression, RBF regression of coefficients and online prediction."""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .femesh import assemble_inner_product, discrete_bijectivity_check, map_mesh, mesh_radius_ratios


class ReductionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# POD

def pod_cardinality(eigenvalues, tol):
    """Smallest M with sum_{m<=M} lambda_m >= (1 - tol) * sum lambda.

    Eigenvalues are taken in the given (nonincreasing) order and summed
    sequentially.
    """
    lam = [float(v) for v in eigenvalues]
    total = 0.0
    for v in lam:
        total += v
    if total <= 0.0:
        return 0
    threshold = (1.0 - tol) * total
    acc = 0.0
    for i, v in enumerate(lam):
        acc += v
        if acc >= threshold:
            return i + 1
    return len(lam)


@dataclass
class PODBasis:
    basis: np.ndarray        # (n_dof, N)
    eigenvalues: np.ndarray  # all eigenvalues, nonincreasing
    coefficients: np.ndarray # (N, n_snapshots)
    X: object = None

    @property
    def n(self):
        return self.basis.shape[1]


def _apply(X, v):
    return v if X is None else X @ v


def pod(snapshots, X=None, tol=None, n=None):
    """Method of snapshots in the inner product v^T X u.

    Either `tol` (energy criterion) or a fixed size `n` selects the basis.
    """
    S = np.asarray(snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[1] < 1:
        raise ReductionError("POD needs at least one snapshot")
    if not np.all(np.isfinite(S)):
        raise ReductionError("snapshots contain non-finite entries")
    XS = _apply(X, S)
    C = S.T @ XS
    C = 0.5 * (C + C.T)
    lam, V = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, V = np.clip(lam[order], 0.0, None), V[:, order]
    eligible = int(np.count_nonzero(lam > 1e-13 * max(lam[0], 1e-300))) if lam[0] > 0 else 0
    if n is None:
        N = pod_cardinality(lam, 0.0 if tol is None else tol)
    else:
        N = int(n)
    N = min(N, eligible)
    if N == 0:
        return PODBasis(np.zeros((S.shape[0], 0)), lam, np.zeros((0, S.shape[1])), X)
    Z = S @ (V[:, :N] / np.sqrt(lam[:N]))
    # re-orthonormalize against rounding (small eigenvalues amplify it)
    L = np.linalg.cholesky(Z.T @ _apply(X, Z))
    Z = sla.solve_triangular(L, Z.T, lower=True).T
    coeffs = Z.T @ XS
    return PODBasis(Z, lam, coeffs, X)


# ---------------------------------------------------------------------------
# RBF regression

def tps(r):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r * r * np.log(r)
    return np.where(r > 0, out, 0.0)


class TPSInterpolant:
    """Thin-plate spline with linear tail on min-max normalized parameters."""

    def __init__(self, centers, values, lo=None, hi=None):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        n, P = centers.shape
        if n < P + 2:
            raise ReductionError(f"need at least {P + 2} training points, got {n}")
        self.lo = centers.min(axis=0) if lo is None else np.asarray(lo, dtype=float)
        self.hi = centers.max(axis=0) if hi is None else np.asarray(hi, dtype=float)
        span = self.hi - self.lo
        self.span = np.where(span > 0, span, 1.0)
        self.centers = self._normalize(centers)
        D = cdist(self.centers, self.centers)
        if np.any(D[np.triu_indices(n, 1)] == 0.0):
            raise ReductionError("duplicate training parameters")
        A = self._system(self.centers)
        rhs = np.vstack([values, np.zeros((P + 1, values.shape[1]))])
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise ReductionError("singular interpolation system") from exc
        self.weights = sol[:n]
        self.tail = sol[n:]

    def _normalize(self, mu):
        return (np.atleast_2d(np.asarray(mu, dtype=float)) - self.lo) / self.span

    @staticmethod
    def _system(c):
        n, P = c.shape
        Pm = np.column_stack([np.ones(n), c])
        A = np.zeros((n + P + 1, n + P + 1))
        A[:n, :n] = tps(cdist(c, c))
        A[:n, n:] = Pm
        A[n:, :n] = Pm.T
        return A

    def __call__(self, mu):
        x = self._normalize(mu)
        K = tps(cdist(x, self.centers))
        return K @ self.weights + np.column_stack([np.ones(x.shape[0]), x]) @ self.tail


def loo_r2(centers, values):
    """Leave-one-out R^2 per output column (1 for constant columns)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n = centers.shape[0]
    lo, hi = centers.min(axis=0), centers.max(axis=0)
    pred = np.empty_like(values)
    for k in range(n):
        keep = np.arange(n) != k
        f = TPSInterpolant(centers[keep], values[keep], lo, hi)
        pred[k] = f(centers[k:k + 1])[0]
    ss_res = np.sum((values - pred) ** 2, axis=0)
    ss_tot = np.sum((values - values.mean(axis=0)) ** 2, axis=0)
    scale = np.maximum(np.abs(values).max(axis=0), 1e-300)
    const = ss_tot <= (1e-14 * scale) ** 2 * n
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = 1.0 - ss_res / ss_tot
    return np.where(const, 1.0, r2)


class CoefficientRegressor:
    """Per-coordinate TPS regressors with leave-one-out R^2 gating.

    Inactive coordinates predict 0 (inactive='zero') or the training mean
    (inactive='mean').
    """

    def __init__(self, mu, Y, threshold=0.75, inactive="zero"):
        mu = np.atleast_2d(np.asarray(mu, dtype=float))
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if mu.shape[0] != Y.shape[0]:
            raise ReductionError("parameter and target counts differ")
        if inactive not in ("zero", "mean"):
            raise ValueError("inactive must be 'zero' or 'mean'")
        self.threshold = float(threshold)
        self.inactive = inactive
        self.n_out = Y.shape[1]
        self.mean = Y.mean(axis=0) if Y.shape[0] else np.zeros(self.n_out)
        if self.n_out == 0:
            self.interp = None
            self.r2 = np.zeros(0)
            self.active = np.zeros(0, dtype=bool)
            self.lo = mu.min(axis=0)
            self.hi = mu.max(axis=0)
            return
        self.interp = TPSInterpolant(mu, Y)
        self.lo, self.hi = self.interp.lo, self.interp.hi
        self.r2 = loo_r2(mu, Y)
        self.active = self.r2 > self.threshold

    @classmethod
    def from_arrays(cls, state):
        obj = object.__new__(cls)
        obj.__dict__.update(state)
        return obj

    def predict(self, mu):
        mu = np.atleast_2d(np.asarray(mu, dtype=float))
        if self.n_out == 0:
            return np.zeros((mu.shape[0], 0))
        raw = self.interp(mu)
        fill = np.zeros(self.n_out) if self.inactive == "zero" else self.mean
        return np.where(self.active[None, :], raw, fill[None, :])

    def in_box(self, mu, tol=1e-12):
        mu = np.atleast_2d(np.asarray(mu, dtype=float))
        return np.all((mu >= self.lo - tol) & (mu <= self.hi + tol), axis=1)


# ---------------------------------------------------------------------------
# errors

def relative_errors(truth, pred, X):
    """Per-sample ||u - u_hat||_X / ||u||_X; X may be a list (one per sample)."""
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.ndim == 1:
        truth, pred = truth[:, None], pred[:, None]
    n = truth.shape[1]
    mats = X if isinstance(X, (list, tuple)) else [X] * n
    out = np.full(n, np.nan)
    for k in range(n):
        M = getattr(mats[k], "matrix", mats[k])
        u, e = truth[:, k], truth[:, k] - pred[:, k]
        nu = np.sqrt(max(u @ (M @ u), 0.0))
        if nu == 0.0:
            warnings.warn(f"sample {k} has zero norm; excluded")
            continue
        out[k] = np.sqrt(max(e @ (M @ e), 0.0)) / nu
    return out


def error_metrics(truth, pred, X):
    """(E_avg, per-sample errors) excluding zero-norm samples."""
    err = relative_errors(truth, pred, X)
    valid = err[np.isfinite(err)]
    return (float(valid.mean()) if valid.size else np.nan), err


# ---------------------------------------------------------------------------
# reduced model

class ReducedModel:
    """Mapping + solution reduced model with online prediction.

    `space` carries the mapping basis W_M; `mapping` regresses a, `solution`
    regresses alpha; `Z` is the POD basis of registered snapshots.
    """

    def __init__(self, mesh, geometry, space, mapping, Z, eigenvalues, solution,
                 norm="H1", fingerprint="", meta=None):
        self.mesh = mesh
        self.geometry = geometry
        self.space = space
        self.mapping = mapping
        self.Z = np.asarray(Z, dtype=float)
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.solution = solution
        self.norm = norm
        self.fingerprint = fingerprint
        self.meta = dict(meta or {})

    @property
    def n(self):
        return self.Z.shape[1]

    @property
    def m(self):
        return 0 if self.space is None else self.space.dim

    def predict_coefficients(self, mu):
        if self.mapping is None or self.m == 0:
            return np.zeros((np.atleast_2d(mu).shape[0], 0))
        return self.mapping.predict(mu)

    def predict_map(self, mu, target=None):
        """Deformed mesh nodes for one parameter plus a quality report."""
        a = self.predict_coefficients(mu)[0]
        field_ = None if self.m == 0 else self.space.displacement_field(a)
        nodes = map_mesh(self.mesh, self.geometry, field_, target=target)
        rep = discrete_bijectivity_check(self.mesh, nodes)
        rep.min_radius_ratio = float(mesh_radius_ratios(self.mesh, nodes).min())
        rep.in_box = bool(self.solution.in_box(mu)[0])
        return nodes, rep

    def predict_field(self, mu, target=None):
        if self.n == 0:
            raise ReductionError("reduced model has no solution modes")
        nodes, rep = self.predict_map(mu, target)
        alpha = self.solution.predict(mu)[0]
        return nodes, self.Z @ alpha, rep


def inner_product_on(mesh, nodes, kind="H1"):
    return assemble_inner_product(mesh, kind, nodes)
