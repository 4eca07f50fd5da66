import numpy as np
import pytest

from paraherm import chartcalc as cc
from paraherm import connections as cn
from paraherm.affine import levi_civita

from conftest import get_model, poly_fields


@pytest.fixture(scope="module")
def pipelines():
    return {key: cn.canonical_pipeline(get_model(key).field)
            for key in ("flat", "heisenberg", "projective", "affine", "sasaki")}


class TestCanonicalConnection:
    @pytest.mark.parametrize("key", ["heisenberg", "projective", "affine", "sasaki", "abelian"])
    def test_verify_canonical(self, key):
        m = get_model(key)
        rep = cn.verify_canonical(m.field, m.sample(10, seed=11))
        assert rep.passed, rep.text()

    def test_flat_coefficients_vanish(self, pipelines):
        m = get_model("flat")
        G = pipelines["flat"].canonical.christoffel(m.sample(20, seed=12), 1)
        assert np.max(np.abs(G.c)) < 1e-12

    @pytest.mark.parametrize("key", ["heisenberg", "projective"])
    def test_cyclic_identity(self, key, pipelines):
        m = get_model(key)
        X, Y, Z = poly_fields(m, 13, 3)
        res = cn.cyclic_identity_residual(pipelines[key].canonical, m.structure.gamma, X, Y, Z,
                                          m.sample(5, seed=13))
        assert res < 1e-7

    def test_initial_torsion_is_skew_but_nonzero(self, pipelines):
        m = get_model("heisenberg")
        tau = cn.gamma_torsion(pipelines["heisenberg"].initial, m.structure.gamma).values(
            m.sample(4, seed=14))
        assert cn.skew_residual(tau) < 1e-9
        assert np.max(np.abs(tau)) > 1e-3

    def test_differs_from_levi_civita_of_gamma(self, pipelines):
        # the canonical connection preserves g as well, so on a non-Kahler model it is not LC
        m = get_model("heisenberg")
        p = m.sample(3, seed=15)
        lc = levi_civita(m.structure.gamma)
        gap = pipelines["heisenberg"].canonical.christoffel(p).value - lc.christoffel(p).value
        assert np.max(np.abs(gap)) > 1e-3
        assert np.max(np.abs(lc.covariant_derivative(m.field.g).values(p))) > 1e-3


class TestPipelineStages:
    @pytest.mark.parametrize("key", ["heisenberg", "projective", "sasaki"])
    def test_L_connections_are_metric(self, key, pipelines):
        m = get_model(key)
        pipe = pipelines[key]
        p = m.sample(5, seed=16)
        for D in (pipe.D_metric, pipe.D_plus, pipe.D_minus):
            assert np.max(np.abs(D.metricity(pipe.k, p))) < 1e-9

    def test_base_connection_torsion_free_on_L(self, pipelines):
        m = get_model("heisenberg")
        S = m.structure
        X, Y = poly_fields(m, 17, 2)
        tau = cn.torsion_tauD(pipelines["heisenberg"].D, X, Y)
        assert np.max(np.abs(tau.values(m.sample(4, seed=17)))) < 1e-9

    def test_pair_round_trip(self, pipelines):
        m = get_model("heisenberg")
        pipe = pipelines["heisenberg"]
        Dp, Dm = cn.pair_from_double_metric(m.field, pipe.initial)
        p = m.sample(4, seed=18)
        assert np.allclose(Dp.coefficients(p).value, pipe.D_plus.coefficients(p).value, atol=1e-10)
        assert np.allclose(Dm.coefficients(p).value, pipe.D_minus.coefficients(p).value, atol=1e-10)

    def test_removal_changes_connection(self, pipelines):
        m = get_model("heisenberg")
        pipe = pipelines["heisenberg"]
        p = m.sample(2, seed=19)
        diff = pipe.canonical.christoffel(p).value - pipe.initial.christoffel(p).value
        assert np.max(np.abs(diff)) > 1e-3


class TestKernelDimension:
    @pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
    def test_formula(self, m):
        assert cn.deformation_kernel_dimension(m) == m * (m * m - 1) // 3

    def test_four(self):
        assert cn.deformation_kernel_dimension(4) == 20
