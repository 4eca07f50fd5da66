"""Bracket layers on the tangent bundle of a para-Hermitian manifold.

* Foliation layers ``(L, Lbar)`` and ``(Lbar, L)``: Courant algebroids with
  pairing ``(1/2) gamma``, anchors ``pr_L`` / ``pr_Lbar`` and
  ``del f = sharp_omega pr_annLbar df`` / ``-sharp_omega pr_annL df``.
* omega layer: the sum of the two foliation layers (pairing gamma, anchor Id).
* gamma layer: the metric bracket ``[X,Y]_gamma = [X,Y] - X ^_{nabla0} Y``
  built from the Levi-Civita connection of gamma (pairing gamma, anchor Id).

Classes modulo annihilators are realized with the projection
``pr_annLbar alpha = alpha o pr_L`` (and ``pr_annL alpha = alpha o pr_Lbar``).
``grad`` means ``sharp_gamma o d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import chartcalc as cc
from . import jets
from .affine import ConnectionExpr, levi_civita
from .chartcalc import TensorField
from .parastructure import ParaHermitianStructure, eigen_projectors
from .report import Report, max_abs

__all__ = [
    "levi_civita", "MetricAlgebroidData", "courant_bracket_L", "dorfman_product_L",
    "courant_bracket_Lbar", "dorfman_product_Lbar", "omega_product", "omega_bracket",
    "gamma_bracket", "gamma_product", "foliation_layer", "omega_layer", "gamma_layer",
    "ANCHORS", "verify_brackets",
]

ANCHORS = {
    "axiom1": "(rho e) g(e1,e2) = g(e*e1, e2) + g(e1, e*e2)",
    "axiom2": "e*e = del g(e,e)",
    "axiom3": "e*(e1*e2) = (e*e1)*e2 + e1*(e*e2)",
    "coincide": "[X,Y]_gamma = [X,Y]_omega on para-Kähler manifolds",
    "paraHcr": "[X,Y]_gamma = [X,Y]_omega + 1/2 sharp_omega(i(Y) i(X) d omega)",
    "paraHcrF": "[X,Y]_gamma = [X,Y]_omega + 1/2 sharp_omega(i(FY) i(FX) d omega)",
    "antisym": "[X,Y] = -[Y,X]",
}


# -- small field helpers -----------------------------------------------------------
def _endo(A: TensorField, X: TensorField) -> TensorField:
    return cc.apply_endomorphism(A, X)


def _covector_through(A: TensorField, alpha: TensorField) -> TensorField:
    """alpha o A, components alpha_j A^j_i."""
    def evaluator(p, order):
        return jets.matvec(A.eval(p, order).T, alpha.eval(p, order))
    return TensorField(alpha.chart, (0, 1), evaluator)


def sharp(m: TensorField, alpha: TensorField) -> TensorField:
    return cc.musical_sharp(m, alpha)


def grad(gamma: TensorField, f: TensorField) -> TensorField:
    return cc.musical_sharp(gamma, cc.differential(f))


# -- foliation Courant algebroids ------------------------------------------------
class _Foliation:
    """Operations of the (A, B) foliation layer; A = L for sign=+1, A = Lbar for sign=-1."""

    def __init__(self, S: ParaHermitianStructure, sign: int):
        self.S = S
        self.sign = sign
        prL, prLb = eigen_projectors(S)
        self.prA, self.prB = (prL, prLb) if sign > 0 else (prLb, prL)
        self.omega = S.omega

    def A(self, X):
        return _endo(self.prA, X)

    def B(self, X):
        return _endo(self.prB, X)

    def proj_annB(self, alpha):
        """Projection onto ann B along ann A: alpha o pr_A."""
        return _covector_through(self.prA, alpha)

    def sharp_annB(self, alpha):
        return sharp(self.omega, self.proj_annB(alpha))

    def delta(self, f):
        out = self.sharp_annB(cc.differential(f))
        return out if self.sign > 0 else -out

    def _core(self, X, Y):
        w = self.omega
        return (cc.lie_derivative(self.A(X), cc.interior_product(self.B(Y), w))
                - cc.lie_derivative(self.A(Y), cc.interior_product(self.B(X), w)))

    def bracket(self, X, Y):
        w = self.omega
        form = self._core(X, Y) + 0.5 * cc.differential(cc.metric_apply(w, X, Y))
        return cc.lie_bracket(self.A(X), self.A(Y)) + self.sharp_annB(form)

    def product(self, X, Y):
        w = self.omega
        # the -omega of the (Lbar, L) layer cancels against sharp_{-omega}
        pairing = cc.metric_apply(w, self.B(X), self.A(Y))
        form = self._core(X, Y) + cc.differential(pairing)
        return cc.lie_bracket(self.A(X), self.A(Y)) + self.sharp_annB(form)

    # cross-check forms obtained with i([X,Y]) = L_X i(Y) - i(Y) L_X
    def _core_alt(self, X, Y):
        w = self.omega
        return (cc.interior_product(self.B(Y), cc.lie_derivative(self.A(X), w))
                - cc.interior_product(self.B(X), cc.lie_derivative(self.A(Y), w)))

    def _mixed(self, X, Y):
        return self.B(cc.lie_bracket(self.A(X), self.B(Y)) + cc.lie_bracket(self.B(X), self.A(Y)))

    def bracket_alt(self, X, Y):
        w = self.omega
        form = self._core_alt(X, Y) + 0.5 * cc.differential(cc.metric_apply(w, X, Y))
        return cc.lie_bracket(self.A(X), self.A(Y)) + self._mixed(X, Y) + self.sharp_annB(form)

    def product_alt(self, X, Y):
        w = self.omega
        # the -omega of the (Lbar, L) layer cancels against sharp_{-omega}
        pairing = cc.metric_apply(w, self.B(X), self.A(Y))
        form = self._core_alt(X, Y) + cc.differential(pairing)
        return cc.lie_bracket(self.A(X), self.A(Y)) + self._mixed(X, Y) + self.sharp_annB(form)


def courant_bracket_L(S, X, Y):
    return _Foliation(S, +1).bracket(X, Y)


def dorfman_product_L(S, X, Y):
    return _Foliation(S, +1).product(X, Y)


def courant_bracket_Lbar(S, X, Y):
    return _Foliation(S, -1).bracket(X, Y)


def dorfman_product_Lbar(S, X, Y):
    return _Foliation(S, -1).product(X, Y)


def omega_product(S, X, Y):
    """X *_omega Y = X *_(L,Lbar) Y + X *_(Lbar,L) Y."""
    return dorfman_product_L(S, X, Y) + dorfman_product_Lbar(S, X, Y)


def omega_bracket(S, X, Y):
    """[X,Y]_omega = [X,Y]_(L,Lbar) + [X,Y]_(Lbar,L)."""
    return courant_bracket_L(S, X, Y) + courant_bracket_Lbar(S, X, Y)


def omega_bracket_expanded(S: ParaHermitianStructure, X, Y):
    """Single-formula form of [X,Y]_omega (sum written out, no layer split)."""
    prL, prLb = eigen_projectors(S)
    w = S.omega
    XL, XB, YL, YB = _endo(prL, X), _endo(prLb, X), _endo(prL, Y), _endo(prLb, Y)
    to_annLb = lambda a: _covector_through(prL, a)
    to_annL = lambda a: _covector_through(prLb, a)
    t1 = (cc.interior_product(YB, cc.lie_derivative(XL, w))
          - cc.interior_product(XB, cc.lie_derivative(YL, w)))
    t2 = (cc.interior_product(YL, cc.lie_derivative(XB, w))
          - cc.interior_product(XL, cc.lie_derivative(YB, w)))
    return (cc.lie_bracket(X, Y)
            + 0.5 * sharp(w, cc.differential(cc.metric_apply(w, X, Y)))
            + sharp(w, to_annLb(t1)) + sharp(w, to_annL(t2)))


def omega_bracket_closed_form(S: ParaHermitianStructure, X, Y, twisted: bool = True):
    """[X,Y]_omega via F and sharp_omega, without the L/Lbar split.

    1/2 [X,Y] + 1/2 F sharp_w [i(X) d i(FY) w - i(Y) d i(FX) w] - 1/2 sharp_w [i(FY) i(FX) dw]

    ``twisted=False`` uses i(Y) i(X) dw in the last term instead, which only
    matches the layer sum when dw = 0.
    """
    w = S.omega
    FX, FY = _endo(S.F, X), _endo(S.F, Y)
    inner = (cc.interior_product(X, cc.exterior_derivative(cc.interior_product(FY, w)))
             - cc.interior_product(Y, cc.exterior_derivative(cc.interior_product(FX, w))))
    return (0.5 * cc.lie_bracket(X, Y) + 0.5 * _endo(S.F, sharp(w, inner))
            - 0.5 * _dw_term(S, X, Y, twisted))


# -- gamma layer --------------------------------------------------------------------
def wedge_nabla0(gamma: TensorField, X, Y, nabla0: ConnectionExpr = None):
    """X ^_{nabla0} Y with gamma(Z, X^Y) = 1/2 [gamma(X, nabla0_Z Y) - gamma(Y, nabla0_Z X)]."""
    nabla0 = nabla0 or levi_civita(gamma)
    DX = nabla0.covariant_derivative(X)  # (k, z)
    DY = nabla0.covariant_derivative(Y)

    def evaluator(p, order):
        g = gamma.eval(p, order)
        x, y = X.eval(p, order), Y.eval(p, order)
        a = jets.contract("...a,...az->...z", jets.matvec(g.T, x), DY.eval(p, order))
        b = jets.contract("...a,...az->...z", jets.matvec(g.T, y), DX.eval(p, order))
        alpha = (a - b) * 0.5
        return jets.matvec(jets.inv(g.T, "gamma"), alpha)
    return TensorField(gamma.chart, (1, 0), evaluator)


def gamma_bracket(gamma: TensorField, X, Y, nabla0: ConnectionExpr = None):
    return cc.lie_bracket(X, Y) - wedge_nabla0(gamma, X, Y, nabla0)


def gamma_product(gamma: TensorField, X, Y, nabla0: ConnectionExpr = None):
    return gamma_bracket(gamma, X, Y, nabla0) + 0.5 * grad(gamma, cc.metric_apply(gamma, X, Y))


def _flat(gamma, X):
    return cc.musical_flat(gamma, X)


def gamma_bracket_form1(gamma, X, Y):
    """1/2 {[X,Y] + sharp(L_X flat Y - L_Y flat X)}."""
    return 0.5 * (cc.lie_bracket(X, Y)
                  + sharp(gamma, cc.lie_derivative(X, _flat(gamma, Y))
                          - cc.lie_derivative(Y, _flat(gamma, X))))


def _flat_through(m: TensorField, Y: TensorField) -> TensorField:
    return cc.musical_flat(m, Y)


def gamma_bracket_form2(gamma, X, Y, factor: float = 0.5):
    """3/2 [X,Y] + factor * sharp(flat_{L_X gamma} Y - flat_{L_Y gamma} X).

    The consistent coefficient is 1/2 (it follows from form 1 and
    L_X(flat Y) = flat_{L_X gamma} Y + flat [X,Y]).
    """
    LXg = cc.lie_derivative(X, gamma)
    LYg = cc.lie_derivative(Y, gamma)
    return 1.5 * cc.lie_bracket(X, Y) + factor * sharp(
        gamma, _flat_through(LXg, Y) - _flat_through(LYg, X))


def gamma_bracket_form3(gamma, X, Y):
    """1/2 {[X,Y] + sharp(i(X) d flat Y - i(Y) d flat X)}."""
    return 0.5 * (cc.lie_bracket(X, Y)
                  + sharp(gamma, cc.interior_product(X, cc.exterior_derivative(_flat(gamma, Y)))
                          - cc.interior_product(Y, cc.exterior_derivative(_flat(gamma, X)))))


def _dw_term(S: ParaHermitianStructure, X, Y, twisted: bool) -> TensorField:
    """sharp_omega(i(Y) i(X) d omega), or with X, Y replaced by FX, FY when twisted."""
    w = S.omega
    if twisted:
        X, Y = _endo(S.F, X), _endo(S.F, Y)
    return sharp(w, cc.interior_product(Y, cc.interior_product(X, cc.exterior_derivative(w))))


def bracket_relation_residual(S: ParaHermitianStructure, X, Y, twisted: bool = False) -> TensorField:
    """[X,Y]_gamma - [X,Y]_omega - 1/2 sharp_omega(i(Y) i(X) d omega).

    With ``twisted=True`` the last term uses i(FY) i(FX) d omega, which is the
    form that holds when d omega has mixed components; both agree if d omega = 0.
    """
    return gamma_bracket(S.gamma, X, Y) - omega_bracket(S, X, Y) - 0.5 * _dw_term(S, X, Y, twisted)


def check_bracket_relation(S: ParaHermitianStructure, fields, points, twisted: bool = False) -> float:
    """Max residual of the gamma/omega bracket relation over all field pairs."""
    worst = 0.0
    for i, X in enumerate(fields):
        for Y in fields[i + 1:]:
            res = bracket_relation_residual(S, X, Y, twisted)
            worst = max(worst, max_abs(res.values(points)))
    return worst


# -- metric algebroid bookkeeping -------------------------------------------------
@dataclass
class MetricAlgebroidData:
    """A metric algebroid on TM: pairing, anchor, del and its product/bracket.

    ``metric(X, Y)`` returns the scalar field of the algebroid pairing
    (``(1/2) gamma`` for foliation layers, ``gamma`` otherwise).
    """

    name: str
    metric: Callable[[TensorField, TensorField], TensorField]
    anchor: Callable[[TensorField], TensorField]
    delta: Callable[[TensorField], TensorField]
    product: Callable[[TensorField, TensorField], TensorField]
    bracket: Callable[[TensorField, TensorField], TensorField]
    courant: bool

    def axiom1(self, e, e1, e2) -> TensorField:
        """(rho e) g(e1,e2) - g(e*e1, e2) - g(e1, e*e2)."""
        lhs = cc.directional_derivative(self.anchor(e), self.metric(e1, e2))
        return lhs - self.metric(self.product(e, e1), e2) - self.metric(e1, self.product(e, e2))

    def axiom2(self, e) -> TensorField:
        """e*e - del g(e,e)."""
        return self.product(e, e) - self.delta(self.metric(e, e))

    def axiom3(self, e, e1, e2) -> TensorField:
        """e*(e1*e2) - (e*e1)*e2 - e1*(e*e2)."""
        P = self.product
        return P(e, P(e1, e2)) - P(P(e, e1), e2) - P(e1, P(e, e2))

    def delta_consistency(self, f, e) -> TensorField:
        """g(del f, e) - 1/2 (rho e) f."""
        return self.metric(self.delta(f), e) - 0.5 * cc.directional_derivative(self.anchor(e), f)

    def interconversion(self, e1, e2) -> TensorField:
        """[e1,e2] - (e1*e2 - del g(e1,e2))."""
        return self.bracket(e1, e2) - (self.product(e1, e2) - self.delta(self.metric(e1, e2)))

    def linearity(self, e1, e2, f) -> TensorField:
        """[e1, f e2] - f[e1,e2] - (rho e1)(f) e2 + g(e1,e2) del f."""
        return (self.bracket(e1, f * e2) - f * self.bracket(e1, e2)
                - cc.directional_derivative(self.anchor(e1), f) * e2
                + self.metric(e1, e2) * self.delta(f))

    def property_a(self, e1, e2, f) -> TensorField:
        """e1*(f e2) - f(e1*e2) - ((rho e1) f) e2."""
        return (self.product(e1, f * e2) - f * self.product(e1, e2)
                - cc.directional_derivative(self.anchor(e1), f) * e2)

    def property_b(self, e1, e2, f) -> TensorField:
        """(f e1)*e2 - f(e1*e2) + ((rho e2) f) e1 - 2 g(e1,e2) del f."""
        return (self.product(f * e1, e2) - f * self.product(e1, e2)
                + cc.directional_derivative(self.anchor(e2), f) * e1
                - 2.0 * (self.metric(e1, e2) * self.delta(f)))

    def jacobi_defect(self, X, Y, Z) -> TensorField:
        """sum_cycl [[X,Y],Z] - 1/3 del sum_cycl g([X,Y],Z)."""
        B = self.bracket
        cyc = B(B(X, Y), Z) + B(B(Y, Z), X) + B(B(Z, X), Y)
        s = (self.metric(B(X, Y), Z) + self.metric(B(Y, Z), X) + self.metric(B(Z, X), Y))
        return cyc - (1.0 / 3.0) * self.delta(s)


def foliation_layer(S: ParaHermitianStructure, sign: int = +1) -> MetricAlgebroidData:
    fol = _Foliation(S, sign)
    half_gamma = lambda X, Y: 0.5 * cc.metric_apply(S.gamma, X, Y)
    return MetricAlgebroidData(
        "(L,Lbar)" if sign > 0 else "(Lbar,L)", half_gamma, fol.A, fol.delta,
        fol.product, fol.bracket, courant=True)


def omega_layer(S: ParaHermitianStructure) -> MetricAlgebroidData:
    gam = S.gamma
    return MetricAlgebroidData(
        "omega", lambda X, Y: cc.metric_apply(gam, X, Y), lambda X: X,
        lambda f: 0.5 * grad(gam, f),
        lambda X, Y: omega_product(S, X, Y), lambda X, Y: omega_bracket(S, X, Y), courant=False)


def gamma_layer(gamma: TensorField) -> MetricAlgebroidData:
    nabla0 = levi_civita(gamma)
    return MetricAlgebroidData(
        "gamma", lambda X, Y: cc.metric_apply(gamma, X, Y), lambda X: X,
        lambda f: 0.5 * grad(gamma, f),
        lambda X, Y: gamma_product(gamma, X, Y, nabla0),
        lambda X, Y: gamma_bracket(gamma, X, Y, nabla0), courant=False)


def partial_gauge_transform(S: ParaHermitianStructure, direction: str, X: TensorField,
                            T: TensorField) -> TensorField:
    """T^L_X T = X *_(L,Lbar) T, T^Lbar_X T = X *_(Lbar,L) T (vector fields T)."""
    if T.valence != (1, 0):
        raise NotImplementedError("partial gauge transformations act on vector fields only")
    if direction in ("L", "+", "plus"):
        return dorfman_product_L(S, X, T)
    if direction in ("Lbar", "-", "minus"):
        return dorfman_product_Lbar(S, X, T)
    raise ValueError(f"direction must be 'L' or 'Lbar', got {direction!r}")


def gauge_commutator_defect(S, direction: str, X, Y, Z) -> TensorField:
    """T_X T_Y Z - T_Y T_X Z - T_{X*Y} Z."""
    T = lambda A, B: partial_gauge_transform(S, direction, A, B)
    return T(X, T(Y, Z)) - T(Y, T(X, Z)) - T(T(X, Y), Z)


def max_residual(field: TensorField, points) -> float:
    return max_abs(field.values(np.asarray(points, float)))


def verify_brackets(S: ParaHermitianStructure, fields, points, tol: float = 1e-8,
                    para_kahler: bool = None) -> Report:
    """Metric-algebroid axioms of the bracket layers and the gamma/omega relation.

    ``fields`` are at least three vector fields.  Axiom 3 is checked on the
    two foliation layers only; for the omega layer its defect is reported as a
    value since it fails in general.
    """
    pts = np.asarray(points, float)
    if len(fields) < 3:
        raise ValueError("verify_brackets needs at least three vector fields")
    e, e1, e2 = fields[:3]
    rep = Report(f"brackets on {S.name}")
    layers = [foliation_layer(S, +1), foliation_layer(S, -1), omega_layer(S), gamma_layer(S.gamma)]
    for layer in layers:
        rep.add(f"{layer.name}.axiom1", ANCHORS["axiom1"],
                max_residual(layer.axiom1(e, e1, e2), pts), tol)
        rep.add(f"{layer.name}.axiom2", ANCHORS["axiom2"],
                max(max_residual(layer.axiom2(X), pts) for X in fields[:2]), tol)
        if layer.courant:
            rep.add(f"{layer.name}.axiom3", ANCHORS["axiom3"],
                    max_residual(layer.axiom3(e, e1, e2), pts), tol)
        rep.add(f"{layer.name}.antisymmetry", ANCHORS["antisym"],
                max_residual(layer.bracket(e, e1) + layer.bracket(e1, e), pts), tol)
    gap = max(max_residual(gamma_bracket(S.gamma, X, Y) - omega_bracket(S, X, Y), pts)
              for i, X in enumerate(fields) for Y in fields[i + 1:])
    rep.values["bracket_gap"] = gap
    if para_kahler is None:
        from .parastructure import para_kahler_residual
        para_kahler = para_kahler_residual(S, pts) < tol
    if para_kahler:
        rep.add("gamma_equals_omega", ANCHORS["coincide"], gap, tol)
    rep.add("bracket_relation", ANCHORS["paraHcrF"],
            check_bracket_relation(S, fields, pts, twisted=True), tol)
    rep.values["untwisted_relation_residual"] = check_bracket_relation(S, fields, pts)
    return rep
