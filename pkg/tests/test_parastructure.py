import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraherm import chartcalc as cc
from paraherm import models
from paraherm.parastructure import (ParaHermitianStructure, StructureError, check_integrability,
                                    d_omega, eigen_projectors, para_kahler_residual, require_valid,
                                    signature, verify_structure)
from paraherm.reduction import AlmostSymplecticManifold

from conftest import get_model


class TestBuiltins:
    def test_structure_axioms(self, builtin):
        pts = builtin.sample(20, seed=1)
        rep = verify_structure(builtin.structure, pts)
        assert rep.passed, rep.text()

    @pytest.mark.parametrize("key, expected", [
        ("flat", True), ("abelian", True), ("projective", True), ("projective3", True),
        ("sasaki", True), ("heisenberg", False), ("affine", False)])
    def test_para_kahler_flags(self, key, expected):
        m = get_model(key)
        res = para_kahler_residual(m.structure, m.sample(10, seed=2))
        assert (res < 1e-9) is expected
        assert m.para_kahler is expected

    def test_foliations_integrable(self, builtin):
        assert check_integrability(builtin.structure, builtin.sample(5, seed=0)) == (True, True)

    def test_flat_omega_components(self, flat):
        w = flat.structure.omega.values(np.zeros(4))
        expected = np.zeros((4, 4))
        expected[0, 2] = expected[1, 3] = -1.0
        expected[2, 0] = expected[3, 1] = 1.0
        assert np.allclose(w, expected)

    def test_eigen_projectors(self, builtin):
        pts = builtin.sample(5, seed=3)
        prL, prLb = (P.values(pts) for P in eigen_projectors(builtin.structure))
        F = builtin.structure.F.values(pts)
        I = np.eye(builtin.structure.dim)
        assert np.allclose(prL + prLb, I, atol=1e-12)
        assert np.allclose(prL - prLb, F, atol=1e-12)
        assert np.allclose(prL @ prL, prL, atol=1e-12)


class TestExample52Form:
    def test_d_omega_hand_value(self):
        M = models.example52_manifold()
        p = M.sample(3, seed=0)
        dw = cc.exterior_derivative(M.omega).values(p)
        expected = np.zeros((4, 4, 4))
        for (i, j, k), s in (((0, 1, 2), 1.0), ((1, 0, 3), 1.0)):
            for perm, sign in (((i, j, k), 1), ((j, k, i), 1), ((k, i, j), 1),
                               ((j, i, k), -1), ((i, k, j), -1), ((k, j, i), -1)):
                expected[perm] = sign * s
        assert np.allclose(dw, expected)

    def test_dd_omega_vanishes(self, heisenberg):
        p = heisenberg.sample(4, seed=0)
        assert np.abs(cc.exterior_derivative(d_omega(heisenberg.structure)).values(p)).max() < 1e-12


class TestNegativeControls:
    def test_scaled_F_fails(self, flat):
        S = flat.structure
        bad = ParaHermitianStructure(S.chart, 1.1 * S.F, S.gamma, S.L_frame, S.Lbar_frame)
        rep = verify_structure(bad, flat.sample(5))
        assert not rep["F_squared"].passed
        with pytest.raises(StructureError):
            require_valid(bad, flat.sample(5))

    def test_definite_gamma_fails_neutrality(self, flat):
        S = flat.structure
        gamma = cc.TensorField.constant(S.chart, (0, 2), np.eye(4), "symmetric")
        bad = ParaHermitianStructure(S.chart, S.F, gamma, S.L_frame, S.Lbar_frame)
        rep = verify_structure(bad, flat.sample(5))
        assert not rep["neutral_signature"].passed
        assert not rep["compatibility"].passed


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.45, 0.45), min_size=6, max_size=6))
def test_heisenberg_axioms_anywhere(coords):
    m = get_model("heisenberg")
    p = np.array(coords)
    S = m.structure
    F, g, w = S.F.values(p), S.gamma.values(p), S.omega.values(p)
    assert np.allclose(F @ F, np.eye(6), atol=1e-10)
    assert np.allclose(F.T @ g + g @ F, 0, atol=1e-10)
    assert np.allclose(w, g @ F, atol=1e-10)
    assert signature(g) == (3, 3)
