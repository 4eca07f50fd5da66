import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraherm import curvature as cv
from paraherm.affine import levi_civita
from paraherm.connections import canonical_connection

from conftest import get_model


def fd_riemann(christoffel, p, h=1e-4):
    """R^k_{lij} from central differences of Gamma^k_{ij} values."""
    p = np.asarray(p, float)
    dim = p.shape[-1]
    G = christoffel(p)
    dG = np.empty(G.shape + (dim,))
    for c in range(dim):
        e = np.zeros(dim)
        e[c] = h
        dG[..., c] = (christoffel(p + e) - christoffel(p - e)) / (2 * h)
    R = np.einsum("kjli->klij", dG) + np.einsum("kim,mjl->klij", G, G)
    return R - np.swapaxes(R, -1, -2)


class TestRiemann:
    def test_levi_civita_of_projective_gamma(self):
        m = get_model("projective3")
        lc = levi_civita(m.structure.gamma)
        p = m.sample(1, seed=20)[0]
        ref = fd_riemann(lambda q: lc.christoffel(q).value, p)
        assert np.max(np.abs(cv.riemann(lc).values(p) - ref)) < 1e-5

    def test_canonical_on_heisenberg(self):
        m = get_model("heisenberg")
        conn = canonical_connection(m.field)
        p = m.sample(1, seed=21)[0]
        ref = fd_riemann(lambda q: conn.christoffel(q).value, p)
        assert np.max(np.abs(cv.riemann(conn).values(p) - ref)) < 1e-5

    def test_flat_vanishes(self):
        m = get_model("flat")
        R = cv.riemann(canonical_connection(m.field)).values(m.sample(3))
        assert np.max(np.abs(R)) == 0.0


class TestModifiedCurvature:
    @pytest.mark.parametrize("key", ["heisenberg", "projective3", "affine", "sasaki", "abelian"])
    def test_checks(self, key):
        m = get_model(key)
        rep = cv.curvature_checks(m.field, canonical_connection(m.field), m.sample(5, seed=22))
        assert rep.passed, rep.text()

    @pytest.mark.parametrize("key, value", [("heisenberg", 5 / 12), ("projective3", -2.0),
                                            ("affine", 2.0), ("flat", 0.0)])
    def test_scalar_values(self, key, value):
        m = get_model(key)
        st_ = cv.modified_scalar(m.field, canonical_connection(m.field)).values(m.sample(4, seed=23))
        assert np.allclose(st_, value, atol=1e-10)

    def test_report_matches_scalar(self):
        m = get_model("heisenberg")
        conn = canonical_connection(m.field)
        p = m.sample(1, seed=24)[0]
        rep = cv.curvature_report(m.field, conn, p)
        assert rep.inertia == (3, 0)
        assert abs(rep.scalar - 5 / 12) < 1e-10
        assert np.allclose(rep.ricci, rep.ricci.T, atol=1e-10)


class TestQuadrature:
    @given(st.integers(0, 5), st.integers(0, 5), st.floats(-1, 1), st.floats(0.1, 2))
    @settings(max_examples=30, deadline=None)
    def test_polynomial_exactness(self, a, b, lo, width):
        box = [(lo, lo + width), (0.0, 1.0)]
        x, w = cv.gauss_legendre_box(box, 3)
        got = np.sum(w * x[:, 0] ** a * x[:, 1] ** b)
        hi = lo + width
        exact = (hi ** (a + 1) - lo ** (a + 1)) / (a + 1) / (b + 1)
        assert abs(got - exact) < 1e-10 * max(1.0, abs(exact))

    def test_weights_sum_to_volume(self):
        _, w = cv.gauss_legendre_box([(0, 2), (-1, 1), (0, 0.5)], 4)
        assert abs(w.sum() - 2.0) < 1e-14


class TestAction:
    def test_flat_action_zero(self):
        m = get_model("flat")
        res = cv.action(m.field, cv.ActionConfig(nodes=3))
        assert abs(res.value) < 1e-10

    def test_projective_volume(self):
        m = get_model("projective3")
        box = [(-0.3, 0.3)] * 4
        res = cv.action(m.field, cv.ActionConfig(box=box, nodes=3, convergence_check=False))
        x, w = cv.gauss_legendre_box(box, 3)
        vol = np.sum(w * np.sqrt(np.abs(np.linalg.det(m.field.g.values(x)))))
        assert abs(res.value + 2.0 * vol) < 1e-10

    @pytest.mark.parametrize("c", [0.3, -0.7])
    def test_dilation_scaling(self, c):
        m = get_model("projective3")
        box = [(-0.3, 0.3)] * 4
        base = cv.action(m.field, cv.ActionConfig(box=box, nodes=3, convergence_check=False))
        scaled = cv.action(m.field, cv.ActionConfig(box=box, nodes=3, phi=c,
                                                    convergence_check=False))
        assert abs(scaled.value - np.exp(-2 * c) * base.value) < 1e-8 * abs(base.value)

    def test_monte_carlo_small(self):
        m = get_model("projective3")
        box = [(-0.3, 0.3)] * 4
        mc = cv.action(m.field, cv.ActionConfig(box=box, rule="monte-carlo", samples=400))
        gl = cv.action(m.field, cv.ActionConfig(box=box, nodes=3, convergence_check=False))
        assert mc.stderr > 0
        assert abs(mc.value - gl.value) < 4 * mc.stderr + 1e-3 * abs(gl.value)

    def test_bad_config(self):
        m = get_model("flat")
        with pytest.raises(ValueError):
            cv.action(m.field, cv.ActionConfig(rule="simpson"))
        with pytest.raises(ValueError):
            cv.action(m.field, cv.ActionConfig(box=[(0, 1)]))
