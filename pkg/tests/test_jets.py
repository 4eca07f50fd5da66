import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraherm import jets
from paraherm.jets import Jet


def fd_grad(f, p, h=1e-5):
    p = np.asarray(p, float)
    out = []
    for i in range(len(p)):
        e = np.zeros_like(p)
        e[i] = h
        out.append((f(p + e) - f(p - e)) / (2 * h))
    return np.array(out)


def fd_hessian(f, p, h=1e-4):
    p = np.asarray(p, float)
    n = len(p)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.zeros(n); ei[i] = h
            ej = np.zeros(n); ej[j] = h
            H[i, j] = (f(p + ei + ej) - f(p + ei - ej) - f(p - ei + ej) + f(p - ei - ej)) / (4 * h * h)
    return H


class TestScalarDerivatives:
    def test_sin_exp_against_finite_differences(self):
        p = np.array([0.3, 0.1])

        def f_np(q):
            return np.sin(q[0]) * np.exp(q[1])

        x = Jet.variables(p, 2)
        f = jets.sin(x[0]) * jets.exp(x[1])
        assert np.allclose(f.partials(1), fd_grad(f_np, p), atol=1e-6)
        assert np.allclose(f.partials(2), fd_hessian(f_np, p), atol=1e-6)

    def test_third_order_exact_polynomial(self):
        p = np.array([0.7, -1.2, 0.4])
        x = Jet.variables(p, 3)
        f = x[0] ** 2 * x[1] * x[2]
        # d^3/dx0^2 dx1 = 2 x2
        assert np.isclose(f.derivative((2, 1, 0)), 2 * p[2])
        assert np.isclose(f.derivative((1, 1, 1)), 2 * p[0])
        assert np.isclose(f.derivative((3, 0, 0)), 0.0)

    @pytest.mark.parametrize("fn,np_fn", [
        (jets.log, np.log), (jets.sqrt, np.sqrt), (jets.reciprocal, lambda t: 1 / t),
        (jets.cos, np.cos), (lambda u: jets.power(u, -1.5), lambda t: t ** -1.5),
    ])
    def test_elementary_functions(self, fn, np_fn):
        p = np.array([1.3, 0.6])
        x = Jet.variables(p, 2)
        f = fn(x[0] * x[1] + 0.2)

        def g(q):
            return np_fn(q[0] * q[1] + 0.2)
        assert np.allclose(f.partials(1), fd_grad(g, p), atol=1e-6)
        assert np.allclose(f.partials(2), fd_hessian(g, p), atol=1e-5)

    def test_division_and_rpow(self):
        x = Jet.variables(np.array([2.0]), 3)
        f = 1.0 / x[0]
        assert np.allclose([f.derivative((k,)) for k in range(4)],
                           [0.5, -0.25, 2 / 8, -6 / 16])
        g = 2.0 ** x[0]
        assert np.isclose(g.derivative((2,)), 4 * np.log(2) ** 2)


class TestStructure:
    def test_derivative_lowers_order(self):
        x = Jet.variables(np.array([0.5, 0.2]), 3)
        f = jets.exp(x[0] * x[1])
        d = f.d(0)
        assert d.order == 2
        assert np.isclose(d.derivative((0, 1)), f.derivative((1, 1)))
        with pytest.raises(jets.OrderError):
            Jet.variables(np.zeros(2), 0)[0].d(0)

    def test_check_order(self):
        jets.check_order(jets.MAX_ORDER)
        with pytest.raises(jets.OrderError):
            jets.check_order(jets.MAX_ORDER + 1)

    def test_batch_matches_single_points(self):
        pts = np.array([[0.1, 0.2], [0.4, -0.3], [1.0, 0.5]])
        x = Jet.variables(pts, 2)
        f = jets.sin(x[..., 0]) * x[..., 1] ** 2
        for k, p in enumerate(pts):
            y = Jet.variables(p, 2)
            g = jets.sin(y[0]) * y[1] ** 2
            assert np.allclose(f.c[k], g.c)

    def test_as_jet_nesting(self):
        x = Jet.variables(np.array([[0.1, 0.2], [0.3, 0.4]]), 1)
        m = jets.as_jet([[x[..., 0], 1.0], [0.0, x[..., 1]]], 2, 1)
        assert m.shape == (2, 2, 2)
        assert np.allclose(m.value[1], [[0.3, 1.0], [0.0, 0.4]])

    def test_compose_chain_rule(self):
        # f(x, y) = x*y^2 composed with x = u^2, y = sin(u)
        u = Jet.variables(np.array([0.8]), 3)
        inner = jets.as_jet([u[0] ** 2, jets.sin(u[0])], 1, 3)
        f = Jet.variables(inner.value, 3)
        outer = f[0] * f[1] ** 2
        h = outer.compose(inner)
        direct = u[0] ** 2 * jets.sin(u[0]) ** 2
        assert np.allclose(h.c, direct.c)


class TestLinearAlgebra:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
    def test_inverse_is_inverse(self, vals):
        p = np.array(vals[:2])
        x = Jet.variables(p, 3)
        a = jets.as_jet([[2 + jets.sin(x[0]), x[1] * vals[2]],
                         [x[0] * x[1], 3 + vals[3] * x[0] ** 2]], 2, 3)
        prod = a @ jets.inv(a)
        assert np.allclose(prod.c, jets.eye(2, 2, 3).c, atol=1e-10)

    def test_det_matches_numpy_derivative(self):
        p = np.array([0.3, -0.2])

        def mat(q, lib):
            return [[1 + q[0] ** 2, lib.sin(q[1])], [q[0] * q[1], 2 + lib.exp(q[0])]]
        x = Jet.variables(p, 2)
        d = jets.det(jets.as_jet(mat([x[0], x[1]], jets), 2, 2))
        g = lambda q: np.linalg.det(np.array(mat(q, np)))
        assert np.isclose(d.value, g(p))
        assert np.allclose(d.partials(1), fd_grad(g, p), atol=1e-6)
        assert np.allclose(d.partials(2), fd_hessian(g, p), atol=1e-5)

    def test_singular_detection(self):
        a = Jet.constant(np.array([[1.0, 2.0], [2.0, 4.0]]), 2, 1)
        with pytest.raises(jets.DegenerateError):
            jets.inv(a)
        assert not jets.is_singular(np.array([[1e-6, 0], [0, 1e-6]]))

    def test_contract_and_matvec(self):
        x = Jet.variables(np.array([0.4, 0.9]), 2)
        a = jets.as_jet([[x[0], x[1]], [1.0, x[0] * x[1]]], 2, 2)
        v = jets.as_jet([x[1], 2.0], 2, 2)
        r1 = jets.matvec(a, v)
        r2 = jets.contract("...ij,...j->...i", a, v)
        assert np.allclose(r1.c, r2.c)
        # first row is x*y + 2*y
        assert np.isclose(r1[0].derivative((1, 1)), 1.0)
