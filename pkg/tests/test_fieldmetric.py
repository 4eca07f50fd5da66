import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paraherm import chartcalc as cc
from paraherm import models
from paraherm.fieldmetric import (CompatibilityError, CompatibleField, FieldComponents,
                                  change_double_basis, check_strong_compatibility,
                                  double_basis_residual, double_orthonormal_basis,
                                  extract_components, matrix_field, random_opq, reconstruct_g,
                                  verify_field)

from conftest import get_model


def random_k_beta(n, rng):
    A = rng.normal(size=(n, n))
    k = A @ A.T + n * np.eye(n)
    if rng.random() < 0.5:
        k = k - 2.5 * n * np.outer(np.eye(n)[0], np.eye(n)[0])  # indefinite k
    B = rng.normal(size=(n, n))
    return k, 0.5 * (B - B.T)


class TestBuiltinFields:
    def test_field_axioms(self, builtin):
        rep = verify_field(builtin.field, builtin.sample(20, seed=4))
        assert rep.passed, rep.text()

    def test_strong_compatibility_flags(self):
        for key in ("flat", "heisenberg", "sasaki"):
            m = get_model(key)
            assert check_strong_compatibility(m.field, m.sample(5)) is m.strongly_compatible

    def test_flat_field_hand_blocks(self):
        # k = 2 Id, beta = 0 gives g = diag(k/2, 2 k^{-1}) = Id on R^4
        m = get_model("flat")
        assert np.allclose(m.field.g.values(np.zeros(4)), np.eye(4))


class TestComponentBijection:
    @pytest.mark.parametrize("n", [2, 3])
    def test_extract_after_reconstruct(self, n):
        rng = np.random.default_rng(n)
        for _ in range(5):
            k, beta = random_k_beta(n, rng)
            m = models.flat_para_kahler(n, k=k, beta=beta)
            p = m.sample(4, seed=1)
            comps = extract_components(m.field)
            assert np.allclose(comps.k.values(p), k, atol=1e-10)
            assert np.allclose(comps.beta.values(p), beta, atol=1e-10)

    def test_reconstruct_after_extract_heisenberg(self, heisenberg):
        comps = extract_components(heisenberg.field)
        again = reconstruct_g(heisenberg.structure, comps)
        p = heisenberg.sample(6, seed=2)
        assert np.allclose(again.g.values(p), heisenberg.field.g.values(p), atol=1e-10)

    def test_beta_forms_agree(self, heisenberg):
        p = heisenberg.sample(5, seed=3)
        f = heisenberg.field
        assert np.allclose(f.beta(p).value, f.beta_direct(p).value, atol=1e-12)

    def test_nonconstant_components(self):
        k = lambda x: [[2.0 + x[0] * x[0], x[2]], [x[2], -1.0 - x[1] * x[1]]]
        beta = lambda x: [[0.0 * x[0], x[3]], [-x[3], 0.0 * x[0]]]
        m = models.flat_para_kahler(2, k=k, beta=beta)
        p = m.sample(5, seed=7)
        comps = extract_components(m.field)
        x = p.T
        assert np.allclose(comps.k.values(p)[:, 0, 0], 2.0 + x[0] ** 2)
        assert np.allclose(comps.beta.values(p)[:, 0, 1], x[3])
        assert verify_field(m.field, p, tol=1e-9).passed


class TestPullback:
    def test_pullback_identity_random_vectors(self, builtin):
        rng = np.random.default_rng(11)
        p = builtin.sample(10, seed=5)
        f = builtin.field
        n = f.n
        k = f.k(p).value
        g = f.g.values(p)
        for sign in (+1, -1):
            V = f.V_frame(sign).values(p)
            z1, z2 = rng.normal(size=(2, len(p), n))
            Z1 = np.einsum("pia,pa->pi", V, z1)
            Z2 = np.einsum("pia,pa->pi", V, z2)
            lhs = np.einsum("pi,pij,pj->p", Z1, g, Z2)
            rhs = np.einsum("pa,pab,pb->p", z1, k, z2)
            assert np.allclose(lhs, rhs, atol=1e-10)


class TestDoubleBasis:
    def test_sign_relations(self, builtin):
        p = builtin.sample(1, seed=6)[0]
        basis = double_orthonormal_basis(builtin.field, p)
        assert double_basis_residual(builtin.field, basis, p) < 1e-10

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([(1, 1), (2, 1), (0, 2), (3, 0)]))
    def test_random_opq_preserves_eta(self, seed, pq):
        p, q = pq
        M = random_opq(p, q, np.random.default_rng(seed))
        eta = np.diag([1.0] * p + [-1.0] * q)
        assert np.allclose(M.T @ eta @ M, eta, atol=1e-9)

    def test_changed_basis_is_double_orthonormal(self, heisenberg):
        rng = np.random.default_rng(0)
        p = heisenberg.sample(1, seed=8)[0]
        basis = double_orthonormal_basis(heisenberg.field, p)
        A, B = random_opq(basis.p, basis.q, rng), random_opq(basis.p, basis.q, rng)
        moved = change_double_basis(basis, A, B)
        assert double_basis_residual(heisenberg.field, moved, p) < 1e-9


class TestErrors:
    def test_incompatible_metric_rejected(self, flat):
        g = cc.TensorField.constant(flat.chart, (0, 2), np.diag([1.0, 2.0, 3.0, 4.0]), "symmetric")
        with pytest.raises(CompatibilityError):
            CompatibleField(flat.structure, g)

    def test_asymmetric_k_rejected(self):
        with pytest.raises(ValueError):
            models.flat_para_kahler(2, k=[[1.0, 2.0], [0.0, 1.0]])
