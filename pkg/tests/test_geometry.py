import numpy as np
import pytest

from regmor.geometry import (ArcCurve, GeometryError, GordonHallElement, InversionError,
                             LineCurve, Partition, PolarChart, PolarGeometry, PolyCurve,
                             TableCurve, curve_from_dict, facet_points, infer_connectivity,
                             straight_element, unit_square_partition)


# connectivity tables of the four-element partition, 1-based as printed in the
# reference description (rows: facets, columns: elements)
QEXT_1B = [[-1, 1, 1, 2], [2, 4, 4, -1], [3, 3, -1, 3], [-1, -1, 2, -1]]
ELL_EXT_1B = [[-1, 2, 3, 2], [1, 1, 3, -1], [1, 4, -1, 2], [-1, -1, 3, -1]]
ORIF = [[1, 1, 1, 1], [1, 1, 0, 1], [1, 1, 1, 0], [1, 1, 1, 1]]


def curved_element():
    """Quarter of an annulus-like element with one arc and one polynomial edge."""
    arc = ArcCurve((0.0, 0.0), 2.0, 0.0, np.pi / 2)          # (2,0) -> (0,2)
    inner = PolyCurve.from_function(lambda t: np.column_stack(
        [np.cos(t * np.pi / 2), np.sin(t * np.pi / 2)]), degree=12)
    e2 = LineCurve(inner(0.0)[0], arc(0.0)[0])
    e3 = LineCurve(inner(1.0)[0], arc(1.0)[0])
    return GordonHallElement([inner, arc, e2, e3])


class TestPolarChart:
    def test_forward_norm_in_annulus(self, rng):
        ch = PolarChart(0.3, 1.5)
        X = np.column_stack([rng.random(200), rng.random(200) - 0.5])
        nrm = np.linalg.norm(ch.forward(X), axis=1)
        assert nrm.min() >= 0.3 - 1e-14 and nrm.max() <= 1.5 + 1e-14

    def test_round_trip(self, rng):
        ch = PolarChart(0.2, 1.0)
        X = np.column_stack([rng.random(100), rng.uniform(-0.5, 0.5, 100)])
        np.testing.assert_allclose(ch.inverse(ch.forward(X)), X, atol=1e-12)

    def test_angle_wraps_into_half_open_interval(self):
        ch = PolarChart(0.2, 1.0)
        x = ch.inverse(np.array([-0.5, 0.0]))
        assert x[1] == pytest.approx(0.5)

    def test_jacobian_matches_finite_differences(self, rng):
        ch = PolarChart(0.2, 1.0)
        X = np.column_stack([rng.random(5), rng.uniform(-0.5, 0.5, 5)])
        J = ch.jacobian(X)
        h = 1e-6
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd = (ch.forward(X + e) - ch.forward(X - e)) / (2 * h)
            np.testing.assert_allclose(J[:, :, k], fd, atol=1e-8)
        np.testing.assert_allclose(ch.jacobian_det(X), np.linalg.det(J), rtol=1e-12)

    def test_domain_errors(self):
        ch = PolarChart(0.2, 1.0)
        with pytest.raises(GeometryError):
            ch.forward(np.array([1.2, 0.0]))
        with pytest.raises(GeometryError):
            ch.inverse(np.array([0.05, 0.0]))
        with pytest.raises(GeometryError):
            PolarChart(1.0, 0.5)

    def test_area(self):
        assert PolarChart(0.2, 1.0).area() == pytest.approx(np.pi * 0.96)


class TestCurves:
    def test_derivatives(self):
        curves = [LineCurve((0, 0), (1, 2)), ArcCurve((0, 0), 1.0, 0.3, 1.2),
                  PolyCurve.from_function(lambda t: np.column_stack([t, t ** 3]), 5),
                  ArcCurve((1, 0), 2.0, 0.0, 1.0).reversed(),
                  LineCurve((0, 0), (1, 0)).transformed([[0, -1], [1, 0]], [1, 1])]
        t = np.array([0.2, 0.55, 0.9])
        h = 1e-6
        for c in curves:
            fd = (c(t + h) - c(t - h)) / (2 * h)
            np.testing.assert_allclose(c.deriv(t), fd, atol=1e-7)

    def test_dict_round_trip(self):
        curves = [LineCurve((0, 0), (1, 2)), ArcCurve((0, 0), 1.0, 0.3, 1.2),
                  PolyCurve([[0, 0], [0.5, 1], [1, 0]]), TableCurve([[0, 0], [1, 1], [2, 0]]),
                  ArcCurve((1, 0), 2.0, 0.0, 1.0).reversed()]
        t = np.linspace(0, 1, 7)
        for c in curves:
            np.testing.assert_allclose(curve_from_dict(c.to_dict())(t), c(t), atol=1e-15)

    def test_poly_curve_reproduces_polynomials(self):
        c = PolyCurve.from_function(lambda t: np.column_stack([t ** 2, 1 - t ** 4]), 4)
        t = np.linspace(0, 1, 9)
        np.testing.assert_allclose(c(t), np.column_stack([t ** 2, 1 - t ** 4]), atol=1e-14)


class TestGordonHall:
    def test_straight_element_is_bilinear(self, rng):
        el = straight_element((0, 0), (2, 0), (3, 1), (0, 2))
        X = rng.random((20, 2))
        s, t = X[:, :1], X[:, 1:]
        c = np.array([[0, 0], [2, 0], [3, 1], [0, 2]], float)
        bil = (1 - s) * (1 - t) * c[0] + s * (1 - t) * c[1] + s * t * c[2] + (1 - s) * t * c[3]
        np.testing.assert_allclose(el.forward(X), bil, atol=1e-14)

    def test_boundary_interpolation(self):
        el = curved_element()
        t = np.linspace(0, 1, 9)
        for ell, edge in enumerate(el.edges):
            np.testing.assert_allclose(el.forward(facet_points(ell, t)), edge(t), atol=1e-13)

    def test_jacobian_and_area(self, rng):
        el = curved_element()
        X = rng.uniform(0.05, 0.95, (6, 2))
        J = el.jacobian(X)
        h = 1e-6
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            np.testing.assert_allclose(J[:, :, k],
                                       (el.forward(X + e) - el.forward(X - e)) / (2 * h),
                                       atol=1e-7)
        assert el.area() == pytest.approx(np.pi * 3 / 4, rel=1e-9)

    def test_inverse_round_trip(self, rng):
        el = curved_element()
        X = rng.random((100, 2))
        assert np.abs(el.inverse(el.forward(X)) - X).max() <= 1e-9

    def test_inverse_rejects_outside_points(self):
        el = straight_element((0, 0), (1, 0), (1, 1), (0, 1))
        with pytest.raises((GeometryError, InversionError)):
            el.inverse(np.array([1.5, 0.5]))

    def test_inconsistent_corners(self):
        with pytest.raises(GeometryError):
            GordonHallElement([LineCurve((0, 0), (0, 1)), LineCurve((1, 0), (1, 1)),
                               LineCurve((0, 0), (1, 0)), LineCurve((0, 1.1), (1, 1))])


class TestPartition:
    def test_four_element_tables(self, four_partition):
        p = four_partition
        np.testing.assert_array_equal(np.where(p.qext >= 0, p.qext + 1, -1), QEXT_1B)
        np.testing.assert_array_equal(np.where(p.ell_ext >= 0, p.ell_ext + 1, -1), ELL_EXT_1B)
        np.testing.assert_array_equal(p.orif, ORIF)
        assert p.n_int == 5
        assert len(p.interfaces()) == 5

    def test_round_trip_per_element(self, four_partition, rng):
        X = rng.random((100, 2))
        for q, el in enumerate(four_partition.elements):
            assert np.abs(el.inverse(four_partition.forward(q, X)) - X).max() <= 1e-9

    def test_locate_assigns_lowest_index_on_shared_facets(self, four_partition):
        p = four_partition
        # point on the facet shared by elements 0 and 1
        x = p.forward(0, np.array([1.0, 0.4]))
        q, X = p.locate(x)
        assert q == 0
        np.testing.assert_allclose(X, [1.0, 0.4], atol=1e-10)
        with pytest.raises(GeometryError):
            p.locate(np.array([10.0, 10.0]))

    def test_asymmetric_tables_rejected(self, four_partition):
        p = four_partition
        qext = p.qext.copy()
        qext[1, 0] = 2
        with pytest.raises(GeometryError):
            Partition(p.elements, qext, p.ell_ext, p.orif)

    def test_mismatched_interface_rejected(self, four_partition):
        p = four_partition
        orif = p.orif.copy()
        orif[1, 0] = 0
        orif[0, 1] = 0
        with pytest.raises(GeometryError):
            Partition(p.elements, p.qext, p.ell_ext, orif)

    def test_dict_round_trip_and_area(self, four_partition, rng):
        p = Partition.from_dict(four_partition.to_dict())
        X = rng.random((10, 2))
        for q in range(4):
            np.testing.assert_array_equal(p.forward(q, X), four_partition.forward(q, X))
        np.testing.assert_array_equal(p.qext, four_partition.qext)
        # shoelace area of the outer boundary polygon
        poly = np.array([(0, -2), (3.5, -2), (4.5, 0), (3.5, 2), (0, 2)], float)
        x, y = poly[:, 0], poly[:, 1]
        shoelace = 0.5 * abs(x @ np.roll(y, -1) - y @ np.roll(x, -1))
        assert p.area() == pytest.approx(shoelace, rel=1e-12)

    def test_infer_connectivity_unit_square(self):
        q, l, o = infer_connectivity(unit_square_partition().elements)
        assert (q == -1).all() and (l == -1).all()


def test_polar_geometry_interface():
    g = PolarGeometry(PolarChart(0.2, 1.0))
    pts = np.array([[0.5, 0.0], [0.0, -0.7]])
    labels, refs = g.locate(pts)
    assert (labels == 0).all()
    np.testing.assert_allclose(g.forward(labels, refs), pts, atol=1e-14)
