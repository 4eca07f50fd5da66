"""Para-Hermitian structures (F, gamma) with analytic frames of L and Lbar."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import chartcalc as cc
from . import jets
from .chartcalc import Chart, Frame, TensorField
from .report import Report, max_abs


class StructureError(ValueError):
    """The supplied data do not define a valid para-Hermitian structure."""


ANCHORS = {
    "F2": "F^2 = Id",
    "compat": "gamma(FX,Y) = -gamma(X,FY)",
    "neutral": "gamma has signature (n,n)",
    "sym": "gamma(X,Y) = gamma(Y,X)",
    "iso_gamma": "gamma(L,L) = gamma(Lbar,Lbar) = 0",
    "iso_omega": "omega(L,L) = omega(Lbar,Lbar) = 0",
    "eig": "F e_a = e_a, F ebar_a = -ebar_a",
    "indep": "[e | ebar] has full rank",
    "omega": "omega(X,Y) = gamma(X,FY)",
    "omegaFF": "omega(FX,FY) = -omega(X,Y)",
    "dw": "d omega = 0",
    "invol": "pr_Lbar [e_a, e_b] = 0, pr_L [ebar_a, ebar_b] = 0",
}


@dataclass
class ParaHermitianStructure:
    """(F, gamma) on a chart, with frames ``L_frame`` (+1) and ``Lbar_frame`` (-1)."""

    chart: Chart
    F: TensorField
    gamma: TensorField
    L_frame: Frame
    Lbar_frame: Frame
    name: str = "structure"
    _omega: Optional[TensorField] = field(default=None, init=False, repr=False)

    @property
    def n(self) -> int:
        return self.chart.dim // 2

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def omega(self) -> TensorField:
        if self._omega is None:
            self._omega = fundamental_form(self)
        return self._omega

    # -- frame helpers ----------------------------------------------------------
    def frame(self, p, order: int = 0) -> jets.Jet:
        """P = [e_1..e_n | ebar_1..ebar_n] as a (dim, dim) jet."""
        return jets.concatenate([self.L_frame.eval(p, order), self.Lbar_frame.eval(p, order)], axis=-1)

    def coframe(self, p, order: int = 0) -> jets.Jet:
        """Q = P^{-1}: rows are the dual coframe."""
        return jets.inv(self.frame(p, order), "L/Lbar frame")

    def pairing(self, p, order: int = 0) -> jets.Jet:
        """G_ab = gamma(e_a, ebar_b)."""
        E = self.L_frame.eval(p, order)
        Eb = self.Lbar_frame.eval(p, order)
        return jets.matmul(jets.matmul(E.T, self.gamma.eval(p, order)), Eb)


def fundamental_form(S: ParaHermitianStructure) -> TensorField:
    """omega(X,Y) = gamma(X,FY), components (gamma F)_ij."""
    def evaluator(p, order):
        return jets.matmul(S.gamma.eval(p, order), S.F.eval(p, order))
    return TensorField(S.chart, (0, 2), evaluator, "antisymmetric", name="omega")


def eigen_projectors(S: ParaHermitianStructure) -> tuple[TensorField, TensorField]:
    """(pr_L, pr_Lbar) = ((Id + F)/2, (Id - F)/2)."""
    dim = S.dim

    def plus(p, order):
        return (jets.eye(dim, dim, order) + S.F.eval(p, order)) * 0.5

    def minus(p, order):
        return (jets.eye(dim, dim, order) - S.F.eval(p, order)) * 0.5
    return (TensorField(S.chart, (1, 1), plus, name="pr_L"),
            TensorField(S.chart, (1, 1), minus, name="pr_Lbar"))


def _signature(mat: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ev = np.linalg.eigvalsh(0.5 * (mat + np.swapaxes(mat, -1, -2)))
    scale = np.max(np.abs(ev), axis=-1, keepdims=True)
    pos = np.sum(ev > tol * scale, axis=-1)
    neg = np.sum(ev < -tol * scale, axis=-1)
    return pos, neg, ev


def signature(mat: np.ndarray, tol: float = 1e-10) -> tuple[int, int]:
    pos, neg, _ = _signature(np.asarray(mat, float), tol)
    return int(pos), int(neg)


def verify_structure(S: ParaHermitianStructure, points, tol: float = 1e-10) -> Report:
    pts = np.asarray(points, float)
    n, dim = S.n, S.dim
    F = S.F.values(pts)
    g = S.gamma.values(pts)
    E = S.L_frame.values(pts)
    Eb = S.Lbar_frame.values(pts)
    w = S.omega.values(pts)
    I = np.eye(dim)
    FT = np.swapaxes(F, -1, -2)
    r = Report(S.name)
    r.add("F_squared", ANCHORS["F2"], max_abs(F @ F - I), tol)
    r.add("compatibility", ANCHORS["compat"], max_abs(FT @ g + g @ F), tol)
    r.add("gamma_symmetric", ANCHORS["sym"], max_abs(g - np.swapaxes(g, -1, -2)), tol)
    pos, neg, _ = _signature(g)
    r.add("neutral_signature", ANCHORS["neutral"], float(np.max(np.abs(pos - n) + np.abs(neg - n))), 0.5)
    ET, EbT = np.swapaxes(E, -1, -2), np.swapaxes(Eb, -1, -2)
    r.add("isotropy_gamma", ANCHORS["iso_gamma"], max(max_abs(ET @ g @ E), max_abs(EbT @ g @ Eb)), tol)
    r.add("isotropy_omega", ANCHORS["iso_omega"], max(max_abs(ET @ w @ E), max_abs(EbT @ w @ Eb)), tol)
    r.add("frame_eigenvectors", ANCHORS["eig"], max(max_abs(F @ E - E), max_abs(F @ Eb + Eb)), tol)
    P = np.concatenate([E, Eb], axis=-1)
    sv = np.linalg.svd(P, compute_uv=False)
    r.add("frame_independence", ANCHORS["indep"], float(np.min(sv[..., -1])), 1e-8, kind="min")
    r.add("omega_definition", ANCHORS["omega"], max_abs(w - g @ F), tol)
    r.add("omega_FF", ANCHORS["omegaFF"], max_abs(FT @ w @ F + w), tol)
    return r


def check_integrability(S: ParaHermitianStructure, points, tol: float = 1e-9) -> tuple[bool, bool]:
    res_L, res_Lb = integrability_residuals(S, points)
    return res_L < tol, res_Lb < tol


def integrability_residuals(S: ParaHermitianStructure, points) -> tuple[float, float]:
    """Max |pr_Lbar [e_a, e_b]| and max |pr_L [ebar_a, ebar_b]|."""
    pts = np.asarray(points, float)
    prL, prLb = eigen_projectors(S)
    out = []
    for frame, proj in ((S.L_frame, prLb), (S.Lbar_frame, prL)):
        vecs = frame.vectors()
        worst = 0.0
        P = proj.values(pts)
        for a in range(len(vecs)):
            for b in range(a + 1, len(vecs)):
                br = cc.lie_bracket(vecs[a], vecs[b]).values(pts)
                worst = max(worst, max_abs(np.einsum("...ij,...j->...i", P, br)))
        out.append(worst)
    return out[0], out[1]


def d_omega(S: ParaHermitianStructure) -> TensorField:
    return cc.exterior_derivative(S.omega)


def check_para_kahler(S: ParaHermitianStructure, points, tol: float = 1e-9) -> bool:
    return para_kahler_residual(S, points) < tol


def para_kahler_residual(S: ParaHermitianStructure, points) -> float:
    return max_abs(d_omega(S).values(np.asarray(points, float)))


def structure_from_matrices(chart: Chart, F, gamma, L_frame, Lbar_frame, name="structure"):
    """Structure from callables of the coordinate list returning nested lists."""
    n = chart.dim // 2
    return ParaHermitianStructure(
        chart,
        TensorField.from_function(chart, (1, 1), F, name="F"),
        TensorField.from_function(chart, (0, 2), gamma, "symmetric", name="gamma"),
        Frame.from_function(chart, n, L_frame, name="L"),
        Frame.from_function(chart, n, Lbar_frame, name="Lbar"),
        name,
    )


def require_valid(S: ParaHermitianStructure, points, tol: float = 1e-9) -> None:
    rep = verify_structure(S, points, tol)
    if not rep.passed:
        bad = ", ".join(c.name for c in rep.failures())
        raise StructureError(f"invalid para-Hermitian structure ({bad})")
