import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from varcert.domain import (BoxDomain, Grid, GridFunction, discrete_gradient, make_bubble,
                            quadrature, sample)
from varcert.expr import DomainError

UNIT = BoxDomain([[-1.0, 2.0]], [[0.0, 1.0]])
UNIT2 = BoxDomain([[-1.0, 2.0], [-1.0, 2.0]], [[0.0, 1.0], [0.0, 1.0]])


def test_strict_inclusion():
    with pytest.raises(ValueError, match="axis 2"):
        BoxDomain([[0, 1], [0, 1]], [[0.1, 0.9], [0.0, 0.9]])
    with pytest.raises(ValueError):
        BoxDomain([[0, 1]], [[0.5, 0.5]])
    with pytest.raises(ValueError):
        BoxDomain([[0, 1]], [[0.2, 0.3], [0.2, 0.3]])


def test_grid_nodes_cover_faces():
    g = Grid(UNIT2, (5, 9))
    assert g.shape == (5, 9)
    assert g.spacing == (0.25, 0.125)
    assert g.axes[0][0] == 0.0 and g.axes[0][-1] == 1.0
    assert g.axes[1][-1] == 1.0
    assert g.points.shape == (45, 2)
    assert Grid(UNIT2, 5, on_b0=True).axes[0][-1] == 2.0
    with pytest.raises(ValueError):
        Grid(UNIT, 2)


def test_sample_examples():
    assert sample(Grid(UNIT, 3), "x1").values[0].tolist() == [0.0, 0.5, 1.0]
    z = sample(Grid(UNIT2, 7), "0")
    assert z.values.shape == (1, 7, 7) and not z.values.any()
    g = Grid(UNIT2, 5)
    assert sample(g, "x1*x2").values[0][-1, -1] == 1.0


def test_sample_domain_error_names_node():
    g = Grid(UNIT, 5)
    with pytest.raises(DomainError, match=r"node \(0,\)"):
        sample(g, "log(x1)")


def test_grid_function_is_read_only():
    u = sample(Grid(UNIT, 5), "x1")
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        GridFunction(Grid(UNIT, 5), np.zeros((1, 4)))


def test_gradient_exact_on_quadratics():
    g = Grid(UNIT, 5)
    d = discrete_gradient(sample(g, "x1^2"))
    assert d[0, 0, 2] == 1.0
    np.testing.assert_allclose(d[0, 0], 2 * g.axes[0], atol=1e-13)
    assert not discrete_gradient(sample(g, "3.5")).any()


def test_gradient_second_order():
    errs = []
    for m in (33, 65):
        g = Grid(UNIT, m)
        d = discrete_gradient(sample(g, "sin(x1)"))[0, 0]
        errs.append(np.max(np.abs(d - np.cos(g.axes[0]))))
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_quadrature_examples():
    g = Grid(UNIT2, 9)
    assert quadrature(np.ones(g.shape), g) == 1.0
    assert quadrature(sample(g, "x1*x2").values[0], g) == pytest.approx(0.25, abs=1e-15)
    g1 = Grid(UNIT, 65)
    assert abs(quadrature(sample(g1, "sin(pi*x1)").values[0], g1) - 2 / math.pi) <= 1e-3


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.integers(3, 12),
       st.integers(3, 12))
def test_quadrature_exact_on_affine_products(c, m1, m2):
    dom = BoxDomain([[-1, 3], [-2, 2]], [[0.0, 1.5], [-0.5, 1.0]])
    g = Grid(dom, (m1, m2))
    x1, x2 = g.coords
    u = (c[0] + c[1] * x1) * (c[2] + c[3] * x2)
    exact = (c[0] * 1.5 + c[1] * 1.5 ** 2 / 2) * (c[2] * 1.5 + c[3] * (1.0 - 0.25) / 2)
    assert abs(quadrature(u, g) - exact) <= 1e-13 * max(1.0, abs(exact)) + 1e-13


def test_summation_by_parts():
    # int u_x v = -int u v_x for v vanishing on the boundary, up to O(h^2)
    errs = []
    for m in (17, 33, 65):
        g = Grid(UNIT2, m)
        u = sample(g, "exp(x1)*cos(x2)")
        v = sample(g, "sin(pi*x1)*sin(pi*x2)*(1 + x1*x2)")
        du, dv = discrete_gradient(u)[0, 0], discrete_gradient(v)[0, 0]
        errs.append(abs(quadrature(du * v.values[0], g) + quadrature(u.values[0] * dv, g)))
    assert errs[2] < errs[1] < errs[0]
    assert math.log2(errs[1] / errs[2]) >= 1.5


def test_bubble_examples():
    g = Grid(UNIT, 65)
    b = make_bubble(g, (1,), 1.0)
    assert b.values[0, 32] == pytest.approx(1.0, abs=1e-15)
    assert b.values[0, 0] == 0.0 and b.values[0, -1] == 0.0


@given(st.integers(1, 6), st.integers(1, 6), st.floats(-2, 2).filter(lambda a: abs(a) > 1e-3),
       st.sampled_from([5, 9, 17]))
def test_bubble_boundary_and_sup_norm(k1, k2, amp, m):
    g = Grid(UNIT2, m)
    b = make_bubble(g, (k1, k2), [amp, -0.5 * amp])
    assert b.N == 2
    assert np.all(b.values[:, g.boundary_mask] == 0.0)
    # peaks of sin(k pi t) sit on nodes when m - 1 is a multiple of 2k
    g1 = Grid(UNIT, 2 * 4 * k1 + 1)
    b1 = make_bubble(g1, (k1,), amp)
    assert abs(b1.sup_norm() - abs(amp)) <= 1e-12
