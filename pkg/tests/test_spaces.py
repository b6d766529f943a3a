import numpy as np
import pytest

from regmor.geometry import FACET_NORMAL, PolarChart, facet_points, partition_from_elements, \
    straight_element
from regmor.spaces import (SpaceError, build_dd_space, build_polar_space, build_rect_space,
                           constraint_rank, dd_dimension_formula, fix_signs,
                           rect_dimension_formula)
from regmor.synthetic import four_element_partition


def two_strip_partition():
    return partition_from_elements([straight_element((0, 0), (1, 0), (1, 1), (0, 1)),
                                    straight_element((1, 0), (2.5, 0), (2.5, 1), (1, 1))])


@pytest.mark.parametrize("J", range(2, 9))
def test_rect_dimension(J):
    assert build_rect_space(J).dim == rect_dimension_formula(J) == 2 * (J + 1) ** 2 - 4 * (J + 1)


@pytest.mark.parametrize("make", [four_element_partition, two_strip_partition,
                                  lambda: four_element_partition(rotation=0.2)])
@pytest.mark.parametrize("J", [2, 4])
def test_dd_dimension_matches_rank_oracle(make, J):
    p = make()
    sp = build_dd_space(p, J)
    assert sp.dim == sp.raw_size - constraint_rank(sp.C)
    assert sp.dim == dd_dimension_formula(J, p.n_elements, p.n_int)


def test_vector_continuity_is_smaller(four_partition):
    t = build_dd_space(four_partition, 4).dim
    v = build_dd_space(four_partition, 4, continuity="vector").dim
    assert (t, v) == (105, 99)
    with pytest.raises(SpaceError):
        build_dd_space(four_partition, 4, continuity="normal")


def test_basis_is_orthonormal_and_satisfies_constraints(four_partition):
    for sp in (build_rect_space(4), build_polar_space(4, 3, PolarChart(0.2, 1.0)),
               build_dd_space(four_partition, 3), build_dd_space(four_partition, 3, "modified")):
        np.testing.assert_allclose(sp.B.T @ sp.G @ sp.B, np.eye(sp.dim), atol=1e-10)
        assert np.abs(sp.C @ sp.B).max() < 1e-10
        # ordered from smoothest upward
        h2 = np.diag(sp.A_stab)
        assert np.all(np.diff(h2) >= -1e-8 * max(1.0, h2.max()))


def test_normal_component_vanishes_on_boundary(rng):
    sp = build_rect_space(5)
    a = rng.normal(size=sp.dim)
    t = np.linspace(0, 1, 13)
    for ell in range(4):
        d = sp.displacement(a, 0, facet_points(ell, t))
        assert np.abs(d @ FACET_NORMAL[ell]).max() < 1e-12


def test_polar_space_radial_component_and_periodicity(rng):
    sp = build_polar_space(4, 3)
    a = rng.normal(size=sp.dim)
    x2 = np.linspace(-0.5, 0.5, 17)
    for x1 in (0.0, 1.0):
        d = sp.displacement(a, 0, np.column_stack([np.full_like(x2, x1), x2]))
        assert np.abs(d[:, 0]).max() < 1e-11
    lo = sp.displacement(a, 0, np.array([[0.3, -0.5]]))
    hi = sp.displacement(a, 0, np.array([[0.3, 0.5]]))
    np.testing.assert_allclose(lo, hi, atol=1e-12)


def test_gradient_matches_finite_differences(rng, four_partition):
    sp = build_dd_space(four_partition, 3)
    a = rng.normal(size=sp.dim) * 0.1
    X = rng.uniform(0.1, 0.9, (5, 2))
    h = 1e-6
    g = sp.gradient(a, 2, X)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (sp.displacement(a, 2, X + e) - sp.displacement(a, 2, X - e)) / (2 * h)
        np.testing.assert_allclose(g[:, :, k], fd, atol=1e-8)
    det = sp.jacobian_det(a, 2, X)
    np.testing.assert_allclose(det, np.linalg.det(np.eye(2) + g), atol=1e-13)


def test_physical_map_continuous_across_interfaces(rng, four_partition):
    sp = build_dd_space(four_partition, 4)
    t = np.linspace(0.0, 1.0, 25)
    for _ in range(5):
        c = sp.raw(0.02 * rng.normal(size=sp.dim))
        for q, ell, qq, ll, o in four_partition.interfaces():
            X = facet_points(ell, t)
            Y = facet_points(ll, t if o else 1.0 - t)
            a = four_partition.forward(q, X + sp.eval_raw(c, q, X))
            b = four_partition.forward(qq, Y + sp.eval_raw(c, qq, Y))
            assert np.abs(a - b).max() <= 1e-9


def test_with_basis_and_layout(four_partition, rng):
    sp = build_dd_space(four_partition, 2)
    red = sp.with_basis(sp.B[:, :3])
    assert red.dim == 3 and sp.dim == 19
    a = rng.normal(size=3)
    np.testing.assert_allclose(red.raw(a), sp.B[:, :3] @ a)
    cs = sp.split(np.arange(sp.raw_size))
    assert cs[1, 2, 0] == sp.block(2, 1).start


def test_fix_signs_and_small_J_errors():
    B = fix_signs(np.array([[1.0, -3.0], [-2.0, 1.0]]))
    np.testing.assert_array_equal(B, [[-1.0, 3.0], [2.0, -1.0]])
    with pytest.raises(SpaceError):
        build_rect_space(1)
    with pytest.raises(SpaceError):
        build_polar_space(1, 2)
