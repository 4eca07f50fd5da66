import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraherm import chartcalc as cc
from paraherm import jets
from paraherm.jets import Jet


@pytest.fixture
def plane():
    return cc.Chart(2, ["x", "y"])


@pytest.fixture
def r4():
    return cc.Chart(4, ["x1", "x2", "x3", "x4"])


def random_poly_vector(chart, rng, deg=2):
    """Random polynomial vector field with coefficients of total degree <= deg."""
    n = chart.dim
    coefs = rng.normal(size=(n, n, n)) * 0.5
    lin = rng.normal(size=(n, n))
    const = rng.normal(size=n)

    def fn(x):
        return [const[i] + sum(lin[i, j] * x[j] for j in range(n))
                + sum(coefs[i, j, k] * x[j] * x[k] for j in range(n) for k in range(j, n))
                for i in range(n)]
    return cc.vector_field(chart, fn)


def random_poly_form(chart, rng, degree):
    n = chart.dim
    raw = [cc.TensorField.from_function(
        chart, (0, 1), lambda x, c=rng.normal(size=(n, n)), b=rng.normal(size=n):
        [b[i] + sum(c[i, j] * x[j] ** 2 for j in range(n)) for i in range(n)])
        for _ in range(degree)]
    out = raw[0]
    for r in raw[1:]:
        out = cc.wedge(out, r)
    return out


class TestEval:
    def test_product_gradient(self, plane):
        f = cc.scalar_field(plane, lambda x: x[0] * x[1])
        j = f.eval(np.array([2.0, 3.0]), 1)
        assert j.value == pytest.approx(6.0)
        assert np.allclose(j.partials(1), [3.0, 2.0])

    def test_square_second_derivative(self, plane):
        f = cc.scalar_field(plane, lambda x: x[0] ** 2)
        assert f.eval(np.array([1.0, 0.0]), 2).derivative((2, 0)) == pytest.approx(2.0)

    def test_finite_difference_oracle(self, plane):
        f = cc.scalar_field(plane, lambda x: jets.sin(x[0]) * jets.exp(x[1]))
        p = np.array([0.3, 0.1])
        j = f.eval(p, 2)
        h = 1e-5
        g = lambda q: np.sin(q[0]) * np.exp(q[1])
        fd = [(g(p + h * e) - g(p - h * e)) / (2 * h) for e in np.eye(2)]
        assert np.allclose(j.partials(1), fd, atol=1e-6)
        hh = np.array([[(g(p + h * a + h * b) - g(p + h * a - h * b) - g(p - h * a + h * b)
                         + g(p - h * a - h * b)) / (4 * h * h) for b in np.eye(2)] for a in np.eye(2)])
        assert np.allclose(j.partials(2), hh, atol=1e-4)
        # Schwarz symmetry of the exact partials
        assert np.allclose(j.partials(2), j.partials(2).T, atol=0)

    def test_domain_and_order_errors(self):
        ch = cc.Chart(2, lower=[0, -1], upper=[1, 1])
        f = cc.scalar_field(ch, lambda x: x[0])
        with pytest.raises(cc.DomainError):
            f.eval(np.array([2.0, 0.0]))
        with pytest.raises(jets.OrderError):
            f.eval(np.array([0.5, 0.0]), jets.MAX_ORDER + 1)

    def test_odd_dimension_rejected(self):
        with pytest.raises(ValueError):
            cc.Chart(3)

    def test_cache_serves_lower_orders(self, plane):
        calls = []

        def fn(x):
            calls.append(1)
            return x[0] * x[1]
        f = cc.scalar_field(plane, fn)
        p = np.array([0.2, 0.4])
        f.eval(p, 2)
        f.eval(p, 1)
        f.eval(p, 0)
        assert len(calls) == 1


class TestLieBracket:
    def test_coordinate_fields_commute(self, plane):
        b = cc.lie_bracket(cc.coordinate_field(plane, 0), cc.coordinate_field(plane, 1))
        assert np.allclose(b.values(np.array([0.3, 0.4])), 0)

    def test_hand_computed(self, plane):
        X = cc.vector_field(plane, lambda x: [x[0] ** 2, 0.0])
        b = cc.lie_bracket(X, cc.coordinate_field(plane, 0))
        p = np.array([0.7, -0.2])
        assert np.allclose(b.values(p), [-2 * 0.7, 0.0])

    def test_chart_mismatch(self, plane):
        other = cc.Chart(2)
        with pytest.raises(cc.ChartError):
            cc.lie_bracket(cc.coordinate_field(plane, 0), cc.coordinate_field(other, 0))

    def test_jacobi_and_antisymmetry(self, r4):
        rng = np.random.default_rng(1)
        X, Y, Z = (random_poly_vector(r4, rng) for _ in range(3))
        pts = rng.uniform(-1, 1, size=(10, 4))
        br = cc.lie_bracket
        jac = br(X, br(Y, Z)) + br(Y, br(Z, X)) + br(Z, br(X, Y))
        assert np.max(np.abs(jac.values(pts))) < 1e-12
        assert np.max(np.abs((br(X, Y) + br(Y, X)).values(pts))) < 1e-12


class TestForms:
    def test_d_of_x_dy(self, plane):
        eta = cc.TensorField.from_function(plane, (0, 1), lambda x: [0.0, x[0]])
        d = cc.exterior_derivative(eta).values(np.array([0.4, 0.1]))
        assert np.allclose(d, [[0, 1], [-1, 0]])

    def test_d_squared_zero(self, r4):
        rng = np.random.default_rng(2)
        w = random_poly_form(r4, rng, 2)
        dd = cc.exterior_derivative(cc.exterior_derivative(w))
        assert np.max(np.abs(dd.values(rng.uniform(-1, 1, (10, 4))))) < 1e-10

    def test_almost_symplectic_example(self, r4):
        # omega = x1 dx2^dx3 + x2 dx1^dx4
        d = [cc.coordinate_differential(r4, i) for i in range(4)]
        x1 = cc.scalar_field(r4, lambda x: x[0])
        x2 = cc.scalar_field(r4, lambda x: x[1])
        omega = x1 * cc.wedge(d[1], d[2]) + x2 * cc.wedge(d[0], d[3])
        dw = cc.exterior_derivative(omega).values(np.array([0.5, 0.7, 0.1, 0.2]))
        expected = (cc.wedge(cc.wedge(d[0], d[1]), d[2])
                    + cc.wedge(cc.wedge(d[1], d[0]), d[3])).values(np.array([0.5, 0.7, 0.1, 0.2]))
        assert np.allclose(dw, expected)
        assert np.max(np.abs(dw)) > 0.5

    def test_lie_derivative_constant_form(self, plane):
        vol = cc.wedge(cc.coordinate_differential(plane, 0), cc.coordinate_differential(plane, 1))
        L = cc.lie_derivative(cc.coordinate_field(plane, 0), vol)
        assert np.allclose(L.values(np.array([0.1, 0.2])), 0)

    def test_lie_derivative_scalar(self, plane):
        X = cc.vector_field(plane, lambda x: [x[1], x[0] * x[0]])
        f = cc.scalar_field(plane, lambda x: jets.sin(x[0] * x[1]))
        p = np.array([0.3, 0.8])
        assert np.allclose(cc.lie_derivative(X, f).values(p),
                           cc.directional_derivative(X, f).values(p))

    def test_cartan_identity(self, r4):
        rng = np.random.default_rng(3)
        X = random_poly_vector(r4, rng)
        w = random_poly_form(r4, rng, 2)
        lhs = cc.lie_derivative(X, w)
        rhs = (cc.interior_product(X, cc.exterior_derivative(w))
               + cc.exterior_derivative(cc.interior_product(X, w)))
        pts = rng.uniform(-1, 1, (20, 4))
        assert np.max(np.abs((lhs - rhs).values(pts))) < 1e-10

    def test_interior_product(self, plane):
        vol = cc.wedge(cc.coordinate_differential(plane, 0), cc.coordinate_differential(plane, 1))
        i1 = cc.interior_product(cc.coordinate_field(plane, 0), vol)
        assert np.allclose(i1.values(np.array([0.0, 0.0])), [0, 1])
        with pytest.raises(ValueError):
            cc.interior_product(cc.coordinate_field(plane, 0), cc.scalar_field(plane, lambda x: x[0]))

    def test_interior_twice_and_commutation(self, r4):
        rng = np.random.default_rng(4)
        X, Y = random_poly_vector(r4, rng), random_poly_vector(r4, rng)
        w = random_poly_form(r4, rng, 3)
        pts = rng.uniform(-1, 1, (10, 4))
        ii = cc.interior_product(X, cc.interior_product(X, w))
        assert np.max(np.abs(ii.values(pts))) < 1e-12
        # i([X,Y]) = L_X i(Y) - i(Y) L_X
        lhs = cc.interior_product(cc.lie_bracket(X, Y), w)
        rhs = (cc.lie_derivative(X, cc.interior_product(Y, w))
               - cc.interior_product(Y, cc.lie_derivative(X, w)))
        assert np.max(np.abs((lhs - rhs).values(pts))) < 1e-10


class TestMusical:
    def test_euclidean_flat(self, plane):
        m = cc.TensorField.constant(plane, (0, 2), np.eye(2), "symmetric")
        assert np.allclose(cc.musical_flat(m, cc.coordinate_field(plane, 0)).values(np.zeros(2)), [1, 0])

    def test_neutral_round_trip(self, r4):
        rng = np.random.default_rng(5)
        g = np.block([[np.zeros((2, 2)), np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
        m = cc.TensorField.constant(r4, (0, 2), g, "symmetric")
        X = random_poly_vector(r4, rng)
        back = cc.musical_sharp(m, cc.musical_flat(m, X))
        pts = rng.uniform(-1, 1, (10, 4))
        assert np.max(np.abs((back - X).values(pts))) < 1e-10

    def test_flat_of_dx_is_dy(self, plane):
        # gamma = dx (.) dy, symmetric reading gamma(d_x, d_y) = 1
        m = cc.TensorField.constant(plane, (0, 2), [[0, 1], [1, 0]], "symmetric")
        assert np.allclose(cc.musical_flat(m, cc.coordinate_field(plane, 0)).values(np.zeros(2)), [0, 1])

    def test_degenerate_metric(self, plane):
        m = cc.TensorField.constant(plane, (0, 2), [[1, 1], [1, 1]], "symmetric")
        alpha = cc.coordinate_differential(plane, 0)
        with pytest.raises(jets.DegenerateError):
            cc.musical_sharp(m, alpha).values(np.zeros(2))


class TestMetricApply:
    def test_argument_order_for_antisymmetric_form(self, r4):
        w = np.zeros((4, 4))
        w[0, 1], w[1, 0] = 2.0, -2.0
        m = cc.TensorField.constant(r4, (0, 2), w)
        X = cc.coordinate_field(r4, 0)
        Y = cc.coordinate_field(r4, 1)
        p = np.zeros(4)
        assert cc.metric_apply(m, X, Y).values(p) == pytest.approx(2.0)
        assert cc.metric_apply(m, Y, X).values(p) == pytest.approx(-2.0)

    def test_matches_interior_products(self, r4):
        rng = np.random.default_rng(5)
        w = random_poly_form(r4, rng, 1)
        a = random_poly_form(r4, rng, 1)
        m = cc.wedge(w, a)
        X, Y = random_poly_vector(r4, rng), random_poly_vector(r4, rng)
        p = rng.uniform(-1, 1, (4, 4))
        lhs = cc.metric_apply(m, X, Y).values(p)
        rhs = cc.pair(cc.interior_product(X, m), Y).values(p)
        assert np.allclose(lhs, rhs, atol=1e-12)
