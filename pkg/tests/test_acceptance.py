"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Criteria 4 and 8 contain parts that do not hold for this implementation; they
are computed as stated and marked as expected failures (see the README).
Criterion 8 runs the full 8^6 Gauss-Legendre action and takes several minutes.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from paraherm import brackets as br
from paraherm import chartcalc as cc
from paraherm import connections as cn
from paraherm import curvature as cv
from paraherm import jets
from paraherm import models
from paraherm import reduction as rd
from paraherm.fieldmetric import (extract_components, matrix_field, reconstruct_from_minus,
                                  reconstruct_g, verify_field)
from paraherm.parastructure import verify_structure

from conftest import get_model, poly_fields

FIVE = ["flat", "abelian", "heisenberg", "projective", "sasaki"]
WITH_FIELD = FIVE + ["affine", "projective3"]


def announce(capsys, number, ok, text):
    with capsys.disabled():
        print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}  {text}")


def _max(a):
    return float(np.max(np.abs(a)))


def test_01_structure_axioms(capsys):
    tol, limit = 1e-10, 10.0
    product = ("product_1", "product_2", "product_3", "product_4")
    worst = 0.0
    t0 = time.perf_counter()
    for key in FIVE:
        m = get_model(key)
        pts = m.sample(100, seed=101)
        rep = verify_structure(m.structure, pts, tol)
        worst = max(worst, max(c.residual for c in rep.checks
                               if c.kind == "max" and c.name != "neutral_signature"))
        assert not rep.failures(), rep.text()
        frep = verify_field(m.field, pts, tol)
        worst = max(worst, max(frep[name].residual for name in product))
    elapsed = time.perf_counter() - t0
    ok = worst < tol and elapsed < limit
    announce(capsys, 1, ok, f"structure axioms: max residual {worst:.2e} (tol {tol:g}), "
             f"{elapsed:.1f} s (limit {limit:g} s)")
    assert ok


def _random_k_beta(n, rng):
    A = rng.normal(size=(n, n))
    k = A @ A.T + n * np.eye(n)
    B = rng.normal(size=(n, n))
    return k, 0.5 * (B - B.T)


def test_02_component_bijection(capsys):
    tol = 1e-10
    worst_er = worst_re = 0.0
    for n in (2, 3):
        rng = np.random.default_rng(200 + n)
        for _ in range(20):
            k, beta = _random_k_beta(n, rng)
            m = models.flat_para_kahler(n, k=k, beta=beta)
            p = m.sample(5, seed=202)
            comps = extract_components(m.field)
            worst_er = max(worst_er, _max(comps.k.values(p) - k), _max(comps.beta.values(p) - beta))
            # reconstruct(extract(g)) for a g built from (g_-, beta_-) instead of (k, beta)
            gm, bm = _random_k_beta(n, rng)
            S = m.structure
            fld = reconstruct_from_minus(S, matrix_field(S, gm, "symmetric"),
                                         matrix_field(S, bm, "antisymmetric"))
            again = reconstruct_g(S, extract_components(fld))
            worst_re = max(worst_re, _max(again.g.values(p) - fld.g.values(p)))
    ok = max(worst_er, worst_re) < tol
    announce(capsys, 2, ok, f"component bijection: extract.reconstruct {worst_er:.2e}, "
             f"reconstruct.extract {worst_re:.2e} (tol {tol:g}), 20 pairs on n=2,3")
    assert ok


def test_03_pullback_identity(capsys):
    tol = 1e-10
    worst = 0.0
    rng = np.random.default_rng(300)
    for key in WITH_FIELD:
        f = get_model(key).field
        p = get_model(key).sample(100, seed=301)
        k = f.k(p).value
        g = f.g.values(p)
        for sign in (+1, -1):
            V = f.V_frame(sign).values(p)
            z1, z2 = rng.normal(size=(2, len(p), f.n))
            lhs = np.einsum("pia,pa,pij,pjb,pb->p", V, z1, g, V, z2)
            rhs = np.einsum("pa,pab,pb->p", z1, k, z2)
            worst = max(worst, _max(lhs - rhs))
    ok = worst < tol
    announce(capsys, 3, ok, f"pullback identity: max |g(iota Z1, iota Z2) - k(Z1, Z2)| "
             f"{worst:.2e} (tol {tol:g}) on {len(WITH_FIELD)} models")
    assert ok


@pytest.mark.xfail(strict=True, reason="the stated gamma/omega relation fails on mixed-type "
                   "pairs when d omega != 0; the F-twisted form holds")
def test_04_bracket_coincidence(capsys):
    tol, witness_min = 1e-8, 1e-3
    coincide = 0.0
    for key in ("flat", "abelian", "projective", "projective3"):
        m = get_model(key)
        p = m.sample(5, seed=400)
        for s in range(20):
            X, Y = poly_fields(m, 400 + s, 2)
            gap = br.gamma_bracket(m.structure.gamma, X, Y) - br.omega_bracket(m.structure, X, Y)
            coincide = max(coincide, _max(gap.values(p)))
    h = get_model("heisenberg")
    S = h.structure
    p = h.sample(5, seed=401)
    stated = twisted = witness = 0.0
    for s in range(20):
        X, Y = poly_fields(h, 450 + s, 2)
        stated = max(stated, _max(br.bracket_relation_residual(S, X, Y).values(p)))
        twisted = max(twisted, _max(br.bracket_relation_residual(S, X, Y, twisted=True).values(p)))
        gap = br.gamma_bracket(S.gamma, X, Y) - br.omega_bracket(S, X, Y)
        witness = max(witness, _max(gap.values(p)))
    ok = coincide < tol and stated < tol and witness > witness_min
    announce(capsys, 4, ok, f"bracket coincidence {coincide:.2e} (tol {tol:g}); stated relation "
             f"on Heisenberg {stated:.2e} (tol {tol:g}; F-twisted form {twisted:.2e}); "
             f"witness gap {witness:.2e} (> {witness_min:g})")
    assert ok


def test_05_metric_algebroid_axioms(capsys):
    tol, witness_min = 1e-9, 1e-3
    ax12 = ax3 = 0.0
    for key in ("flat", "heisenberg", "projective3", "affine"):
        m = get_model(key)
        S = m.structure
        p = m.sample(10, seed=500)
        e, e1, e2 = poly_fields(m, 500, 3)
        for sign in (+1, -1):
            A = br.foliation_layer(S, sign)
            ax12 = max(ax12, _max(A.axiom1(e, e1, e2).values(p)), _max(A.axiom2(e).values(p)))
            ax3 = max(ax3, _max(A.axiom3(e, e1, e2).values(p)))
        A = br.omega_layer(S)
        ax12 = max(ax12, _max(A.axiom1(e, e1, e2).values(p)), _max(A.axiom2(e).values(p)))
    flat = get_model("flat")
    e, e1, e2 = poly_fields(flat, 8, 3)
    witness = _max(br.omega_layer(flat.structure).axiom3(e, e1, e2).values(flat.sample(5, seed=8)))
    ok = ax12 < tol and ax3 < tol and witness > witness_min
    announce(capsys, 5, ok, f"metric algebroid: axioms 1-2 {ax12:.2e}, foliation axiom 3 "
             f"{ax3:.2e} (tol {tol:g}); omega-product Leibniz witness {witness:.2e} "
             f"(> {witness_min:g})")
    assert ok


def test_06_canonical_connection(capsys):
    tol, flat_tol = 1e-7, 1e-12
    worst = cyc = 0.0
    for key in ("heisenberg", "projective"):
        m = get_model(key)
        p = m.sample(20, seed=600)
        rep = cn.verify_canonical(m.field, p, tol)
        worst = max(worst, *(rep[name].residual for name in
                             ("nabla_gamma", "nabla_g", "nabla_H", "gamma_torsion")))
        X, Y, Z = poly_fields(m, 601, 3)
        cyc = max(cyc, cn.cyclic_identity_residual(cn.canonical_connection(m.field),
                                                   m.structure.gamma, X, Y, Z, p))
    flat = get_model("flat")
    coeff = _max(cn.canonical_connection(flat.field).christoffel(flat.sample(20, seed=602), 1).c)
    ok = worst < tol and cyc < tol and coeff < flat_tol
    announce(capsys, 6, ok, f"canonical connection: nabla gamma/g/H and torsion {worst:.2e}, "
             f"cyclic {cyc:.2e} (tol {tol:g}); flat coefficients {coeff:.2e} (tol {flat_tol:g})")
    assert ok


def test_07_curvature_invariants(capsys):
    tol = 1e-6
    worst = 0.0
    names = set()
    for key in ("heisenberg", "projective3", "affine", "sasaki"):
        m = get_model(key)
        rep = cv.curvature_checks(m.field, cn.canonical_connection(m.field),
                                  m.sample(10, seed=700), tol, trials=10, seed=701)
        worst = max(worst, max(c.residual for c in rep.checks))
        names |= {c.name for c in rep.checks}
    assert {"Rt_mixed", "ricci_symmetric", "ricci_mixed", "curbpm", "scalar_invariance"} <= names
    ok = worst < tol
    announce(capsys, 7, ok, f"curvature invariants: max residual {worst:.2e} (tol {tol:g}) "
             f"incl. 10 O(p,q) x O(p,q) frame changes")
    assert ok


@pytest.mark.xfail(strict=True, reason="an 8^6-node action evaluation takes minutes, "
                   "not under 60 s, on the reference machine")
def test_08_action(capsys):
    flat_tol, scale_tol, limit, oracle_rtol = 1e-10, 1e-8, 60.0, 1e-5
    flat = get_model("flat")
    flat_value = cv.action(flat.field, cv.ActionConfig(nodes=8)).value

    proj = get_model("projective3")
    box = [(-0.3, 0.3)] * 4
    cfg = dict(box=box, nodes=4, convergence_check=False)
    base = cv.action(proj.field, cv.ActionConfig(**cfg)).value
    scale_err = 0.0
    for c in (0.2, -0.5, 1.0):
        scaled = cv.action(proj.field, cv.ActionConfig(phi=c, **cfg)).value
        scale_err = max(scale_err, abs(scaled / base - np.exp(-2 * c)))

    heis = get_model("heisenberg")
    conn = cn.canonical_connection(heis.field)
    t0 = time.perf_counter()
    gauss = cv.action(heis.field, cv.ActionConfig(nodes=8), conn)
    t_gauss = time.perf_counter() - t0
    t0 = time.perf_counter()
    mc = cv.action(heis.field, cv.ActionConfig(rule="monte-carlo", samples=20_000, seed=3), conn)
    t_mc = time.perf_counter() - t0
    # the integrand is constant here, so the sampled spread is pure roundoff
    sigma = max(mc.stderr, 1e-12 * abs(gauss.value))
    agree = abs(gauss.value - mc.value) <= 3 * sigma
    oracle = abs(gauss.value - 5 / 12) <= oracle_rtol * 5 / 12

    ok = (abs(flat_value) < flat_tol and scale_err < scale_tol and agree and oracle
          and t_gauss < limit and t_mc < limit)
    announce(capsys, 8, ok, f"action: flat {flat_value:.1e} (tol {flat_tol:g}); e^-2c scaling "
             f"{scale_err:.1e} (tol {scale_tol:g}); Heisenberg Gauss {gauss.value:.12f} vs MC "
             f"{mc.value:.12f} ({'within' if agree else 'outside'} 3 sigma), oracle 5/12 "
             f"{'ok' if oracle else 'off'}; time Gauss {t_gauss:.0f} s, MC {t_mc:.0f} s "
             f"(limit {limit:g} s each)")
    assert ok


def test_09_reduction(capsys):
    tol, lc_tol = 1e-10, 1e-6
    M = models.example52_manifold()
    pts = M.sample(20, seed=900)
    t = pts[:, 0] * pts[:, 1]
    funcs = [
        (lambda x: (x[0] * x[1]) ** 3 / 3, lambda t: t ** 2),
        (lambda x: jets.sin(x[0] * x[1]), np.cos),
        (lambda x: jets.exp(x[0] * x[1] * 0.5), lambda t: 0.5 * np.exp(0.5 * t)),
    ]
    xf = poisson = 0.0
    fields = []
    for fn, deriv in funcs:
        f = cc.scalar_field(M.chart, fn)
        fields.append(f)
        X = rd.hamiltonian_vector_field(M, f, pts).field.values(pts)
        expected = np.zeros_like(pts)
        expected[:, 2] = expected[:, 3] = -deriv(t)
        xf = max(xf, _max(X - expected))
    for i, f in enumerate(fields):
        for h in fields[i + 1:]:
            rep = rd.poisson_checks(M, f, h, pts, tol)
            poisson = max(poisson, rep.values["bracket_max"],
                          *(c.residual for c in rep.checks))

    inst = models.circle_reduction(0.5)
    u = inst.submanifold.sample(10, seed=901)
    hyp = rd.verify_reduction_hypotheses(inst.manifold, inst.submanifold, u)
    red = rd.reduced_tensors(inst.manifold, inst.submanifold, u, lc_tol=lc_tol)
    dvarpi = red.report["d_varpi"].residual
    compat = red.report["mu_compatible"].residual
    lc = red.report["levi_civita_projection"].residual
    ok = (xf < tol and poisson < tol and hyp.passed and red.report.passed and dvarpi < 1e-8
          and compat < 1e-8 and lc < lc_tol)
    announce(capsys, 9, ok, f"reduction: X_f {xf:.2e}, Poisson {poisson:.2e} (tol {tol:g}); "
             f"circle hypotheses {'pass' if hyp.passed else 'fail'}, d varpi {dvarpi:.2e}, "
             f"mu compatibility {compat:.2e} (tol 1e-8), Levi-Civita projection {lc:.2e} "
             f"(tol {lc_tol:g})")
    assert ok


def test_10_kernel_dimension(capsys):
    dim = cn.deformation_kernel_dimension(4)
    ok = dim == 20 == 4 * (16 - 1) // 3
    announce(capsys, 10, ok, f"kernel dimension on m=4: {dim} (expected 20)")
    assert ok


def test_11_determinism(capsys):
    argv = [sys.executable, "-m", "paraherm", "verify", "group-double", "--algebra",
            "heisenberg", "--samples", "5", "--seed", "1234"]
    outs = [subprocess.run(argv, capture_output=True, timeout=600).stdout for _ in range(2)]
    ok = outs[0] == outs[1] and json.loads(outs[0])["passed"]
    announce(capsys, 11, ok, f"determinism: two verify runs, {len(outs[0])} bytes each, "
             f"{'byte-identical' if outs[0] == outs[1] else 'different'}")
    assert ok
