"""One-dimensional polynomial/trigonometric bases and quadrature rules.

Everything here lives on the unit interval [0, 1] (or the periodic
interval (-1/2, 1/2) for the Fourier basis) and is vectorized over points.
"""
import numpy as np
from numpy.polynomial import legendre as npleg


def gauss_legendre(n, a=0.0, b=1.0):
    """n-point Gauss-Legendre rule on [a, b]."""
    x, w = npleg.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gauss_lobatto(n):
    """n Gauss-Lobatto-Legendre nodes on [0, 1] (n >= 2), sorted."""
    if n < 2:
        raise ValueError("Gauss-Lobatto rule needs at least two points")
    J = n - 1
    # interior nodes are the roots of P_J'
    c = np.zeros(J + 1)
    c[-1] = 1.0
    inner = np.sort(np.real(npleg.legroots(npleg.legder(c)))) if J > 1 else np.array([])
    x = np.concatenate([[-1.0], inner, [1.0]])
    return 0.5 * (x + 1.0)


def trapezoid_periodic(n, a=-0.5):
    """Equispaced periodic rule on [a, a+1); exact for trig degree < n."""
    x = a + (np.arange(n) + 0.5) / n
    return x, np.full(n, 1.0 / n)


class Lagrange1D:
    """Lagrange basis on given nodes in [0, 1], derivatives up to order 2.

    Evaluation goes through a Legendre Vandermonde matrix, which stays well
    conditioned for Gauss-Lobatto nodes.
    """

    def __init__(self, nodes):
        self.nodes = np.asarray(nodes, dtype=float)
        self.n = self.nodes.size
        V = npleg.legvander(2.0 * self.nodes - 1.0, self.n - 1)
        Vinv = np.linalg.inv(V)
        # coefficient maps for derivatives 0..2 (chain rule factor 2 per order)
        deg = self.n - 1
        D = np.zeros((deg + 1, deg + 1))
        for k in range(deg + 1):
            c = np.zeros(deg + 1)
            c[k] = 1.0
            d = npleg.legder(c)
            D[:d.size, k] = 2.0 * d
        self._maps = [Vinv, D @ Vinv, D @ D @ Vinv]

    def __call__(self, x, deriv=0):
        """Matrix (len(x), n) of basis values (or derivatives) at x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if deriv > 2:
            raise ValueError("derivatives above order 2 are not supported")
        return npleg.legvander(2.0 * x - 1.0, self.n - 1) @ self._maps[deriv]


class Fourier1D:
    """Trigonometric basis {1, cos 2pi k x (k=1..J), sin 2pi k x (k=1..J)}."""

    def __init__(self, order):
        if order < 0:
            raise ValueError("Fourier order must be nonnegative")
        self.order = order
        self.n = 2 * order + 1

    def __call__(self, x, deriv=0):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = 2.0 * np.pi * np.arange(1, self.order + 1)
        arg = np.outer(x, k)
        out = np.zeros((x.size, self.n))
        if deriv == 0:
            out[:, 0] = 1.0
        c, s = np.cos(arg), np.sin(arg)
        # d^m/dx^m cos(kx) and sin(kx) cycle with period 4
        m = deriv % 4
        fac = k ** deriv
        cos_part = [c, -s, -c, s][m]
        sin_part = [s, c, -s, -c][m]
        out[:, 1:self.order + 1] = cos_part * fac
        out[:, self.order + 1:] = sin_part * fac
        return out


def triangle_rule(degree):
    """Collapsed (Duffy) Gauss rule on the unit triangle, exact to `degree`.

    Returns points (n, 2) and weights summing to 1/2.
    """
    n = max(1, (degree + 2) // 2 + 1)
    x, wx = gauss_legendre(n)
    # the collapse adds one polynomial degree in the first direction
    y, wy = npleg.leggauss(n)
    y = 0.5 * (y + 1.0)
    wy = 0.5 * wy
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = np.outer(wx, wy)
    pts = np.column_stack([X.ravel(), (Y * (1.0 - X)).ravel()])
    wts = (W * (1.0 - X)).ravel()
    return pts, wts


def tensor_rule(x1, w1, x2, w2):
    """Tensor rule; first coordinate runs fastest."""
    X2, X1 = np.meshgrid(x2, x1, indexing="ij")
    W = np.outer(w2, w1)
    return np.column_stack([X1.ravel(), X2.ravel()]), W.ravel()
