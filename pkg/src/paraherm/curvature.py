"""Curvature of double metric connections, modified invariants and the action.

Index conventions: ``R[k, l, i, j] = R^k_{lij}`` with
``R(d_i, d_j) d_l = R^k_{lij} d_k``.  The modified curvature keeps only the
V+ x V+ and V- x V- argument blocks,

    Rt(X, Y) = R(pr+ X, pr+ Y) + R(pr- X, pr- Y).

The modified Ricci tensor is the symmetrized g-trace
``rt(X, Y) = 1/2 sum_a eps_a [g(b_a, Rt(X, b_a) Y) + g(b_a, Rt(Y, b_a) X)]``
over a double orthonormal basis with signs eps = g(b_a, b_a), and the
modified scalar is ``st = sum_a eps_a rt(b_a, b_a)``.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import jets
from .affine import ConnectionExpr, riemann_from_christoffel
from .chartcalc import TensorField
from .fieldmetric import (CompatibleField, DoubleBasis, change_double_basis,
                          double_orthonormal_basis, random_opq)
from .jets import Jet
from .report import Report, max_abs

__all__ = [
    "riemann", "riemann_apply", "modified_curvature", "modified_ricci", "modified_ricci_basis",
    "modified_scalar", "modified_scalar_basis", "scalar_frame_invariance", "CurvatureReport",
    "curvature_report", "curvature_checks",
    "ActionConfig", "ActionResult", "action", "monte_carlo_action", "gauss_legendre_box",
]

ANCHORS = {
    "mixed": "Rt(X+, Y-) = 0",
    "curbpm": "Rt(X,Y)(iota+- U) = iota+-(R^{D+-}(X,Y) U), X,Y in V+-",
    "ric_sym": "rt(X,Y) = rt(Y,X)",
    "ric_mixed": "rt(X+, Y-) = 0",
    "scalar_inv": "st invariant under O(p,q) x O(p,q)",
    "scalar_trace": "sum_a eps_a rt(b_a, b_a) = g^{il} rt_il",
}


# -- curvature tensors ------------------------------------------------------------------
def riemann(conn: ConnectionExpr) -> TensorField:
    """Curvature tensor R^k_{lij} of a connection (consumes one jet order)."""
    def evaluator(p, order):
        return riemann_from_christoffel(conn.christoffel(p, order + 1))
    return TensorField(conn.chart, (1, 3), evaluator, name=f"R({conn.name})")


def riemann_apply(conn: ConnectionExpr, X: TensorField, Y: TensorField, Z: TensorField) -> TensorField:
    """R(X, Y) Z as a vector field."""
    R = riemann(conn)

    def evaluator(p, order):
        return _apply3(R.eval(p, order), X.eval(p, order), Y.eval(p, order), Z.eval(p, order))
    return TensorField(conn.chart, (1, 0), evaluator, name="R(X,Y)Z")


def _apply3(R: Jet, x: Jet, y: Jet, z: Jet) -> Jet:
    t = jets.contract("...klij,...l->...kij", R, z)
    t = jets.contract("...kij,...j->...ki", t, y)
    return jets.matvec(t, x)


def _projectors(field: CompatibleField, p, order) -> tuple[Jet, Jet]:
    n = field.n
    B = jets.concatenate([field.V_frame(+1).eval(p, order), field.V_frame(-1).eval(p, order)], -1)
    Binv = jets.inv(B, "V+/V- frame")
    return (jets.matmul(B[..., :, :n], Binv[..., :n, :]),
            jets.matmul(B[..., :, n:], Binv[..., n:, :]))


def modified_curvature(field: CompatibleField, conn: ConnectionExpr) -> TensorField:
    """Rt^k_{lij} = R^k_{lab} (P+^a_i P+^b_j + P-^a_i P-^b_j)."""
    R = riemann(conn)

    def evaluator(p, order):
        Rj = R.eval(p, order)
        Pp, Pm = _projectors(field, p, order)
        out = None
        for P in (Pp, Pm):
            t = jets.contract("...klab,...ai->...klib", Rj, P)
            t = jets.contract("...klib,...bj->...klij", t, P)
            out = t if out is None else out + t
        return out
    return TensorField(field.chart, (1, 3), evaluator, name="Rt")


def modified_ricci(field: CompatibleField, conn: ConnectionExpr) -> TensorField:
    """rt_{il} = 1/2 (Rt^k_{lik} + Rt^k_{ilk}) as a symmetric (0,2) field.

    This is the double-basis formula written as a trace, which does not need
    a basis (the signs eps_a are g(b_a, b_a)).
    """
    Rt = modified_curvature(field, conn)

    def evaluator(p, order):
        Rj = Rt.eval(p, order)
        t = Rj.with_c(np.einsum("...klikz->...ilz", Rj.c))  # Rt^k_{lik}, jet axis z last
        return (t + t.swapaxes(-1, -2)) * 0.5
    return TensorField(field.chart, (0, 2), evaluator, "symmetric", name="rt")


def modified_scalar(field: CompatibleField, conn: ConnectionExpr) -> TensorField:
    """st = g^{il} rt_il as a scalar field."""
    ric = modified_ricci(field, conn)

    def evaluator(p, order):
        ginv = jets.inv(field.g.eval(p, order), "g")
        return jets.contract("...il,...il->...", ginv, ric.eval(p, order))
    return TensorField(field.chart, (0, 0), evaluator, name="st")


def _signs(basis: DoubleBasis) -> np.ndarray:
    pp, qq = basis.p, basis.q
    return np.array([1.0] * pp + [-1.0] * qq + [1.0] * pp + [-1.0] * qq)


def modified_ricci_basis(Rt: np.ndarray, g: np.ndarray, basis: DoubleBasis,
                         X: np.ndarray, Y: np.ndarray) -> float:
    """rt(X, Y) at one point, summed term by term over a double orthonormal basis.

    ``Rt`` and ``g`` are the component arrays at that point.
    """
    B = basis.matrix()
    eps = _signs(basis)
    total = 0.0
    for a in range(B.shape[1]):
        b = B[:, a]
        RXbY = np.einsum("klij,i,j,l->k", Rt, X, b, Y)
        RYbX = np.einsum("klij,i,j,l->k", Rt, Y, b, X)
        total += eps[a] * (b @ g @ RXbY + b @ g @ RYbX)
    return 0.5 * total


def modified_scalar_basis(Rt: np.ndarray, g: np.ndarray, basis: DoubleBasis) -> float:
    B = basis.matrix()
    eps = _signs(basis)
    return float(sum(eps[a] * modified_ricci_basis(Rt, g, basis, B[:, a], B[:, a])
                     for a in range(B.shape[1])))


def scalar_frame_invariance(field: CompatibleField, conn: ConnectionExpr, points,
                            trials: int = 10, seed: int = 0) -> tuple[float, float]:
    """Max change of the basis-summed st under random O(p,q) x O(p,q) basis changes.

    Returns (invariance residual, max |basis sum - basis-free trace|).
    """
    pts = np.atleast_2d(np.asarray(points, float))
    rng = np.random.default_rng(seed)
    Rt_all = modified_curvature(field, conn).values(pts)
    g_all = field.g.values(pts)
    st_all = modified_scalar(field, conn).values(pts)
    drift = trace_gap = 0.0
    for Rt, g, st, p in zip(Rt_all, g_all, st_all, pts):
        basis = double_orthonormal_basis(field, p)
        ref = modified_scalar_basis(Rt, g, basis)
        trace_gap = max(trace_gap, abs(ref - float(st)))
        for _ in range(trials):
            A = random_opq(basis.p, basis.q, rng)
            B = random_opq(basis.p, basis.q, rng)
            moved = modified_scalar_basis(Rt, g, change_double_basis(basis, A, B))
            drift = max(drift, abs(moved - ref))
    return drift, trace_gap


# -- reports ---------------------------------------------------------------------------
@dataclass
class CurvatureReport:
    point: np.ndarray
    R: np.ndarray          # R in the double basis: R[a, b, c, d] = basis coefficient a of R(b_c, b_d) b_b
    ricci: np.ndarray      # rt(b_a, b_b)
    scalar: float
    inertia: tuple[int, int]

    def to_dict(self) -> dict:
        return {"point": self.point.tolist(), "ricci": self.ricci.tolist(),
                "scalar": float(self.scalar), "inertia": list(self.inertia)}


def curvature_report(field: CompatibleField, conn: ConnectionExpr, p,
                     basis: Optional[DoubleBasis] = None) -> CurvatureReport:
    p = np.asarray(p, float)
    if basis is None:
        basis = double_orthonormal_basis(field, p)
    B = basis.matrix()
    Binv = np.linalg.inv(B)
    R = riemann(conn).values(p)
    Rt = modified_curvature(field, conn).values(p)
    g = field.g.values(p)
    Rb = np.einsum("ak,klij,lb,ic,jd->abcd", Binv, R, B, B, B)
    m = B.shape[1]
    ric = np.array([[modified_ricci_basis(Rt, g, basis, B[:, a], B[:, b]) for b in range(m)]
                    for a in range(m)])
    return CurvatureReport(p, Rb, ric, modified_scalar_basis(Rt, g, basis), (basis.p, basis.q))


def curvature_checks(field: CompatibleField, conn: ConnectionExpr, points,
                     tol: float = 1e-6, trials: int = 10, seed: int = 0) -> Report:
    """Mixed-block vanishing of Rt and rt, symmetry of rt, curbpm and st invariance."""
    pts = np.asarray(points, float)
    n = field.n
    r = Report(f"curvature of {field.name}")
    B = np.concatenate([field.V_frame(+1).values(pts), field.V_frame(-1).values(pts)], -1)
    Rt = modified_curvature(field, conn).values(pts)
    mixed = np.einsum("...klij,...ia,...jb->...klab", Rt, B[..., :n], B[..., n:])
    r.add("Rt_mixed", ANCHORS["mixed"], max_abs(mixed), tol)
    ric = modified_ricci(field, conn).values(pts)
    r.add("ricci_symmetric", ANCHORS["ric_sym"], max_abs(ric - np.swapaxes(ric, -1, -2)), tol)
    rm = np.einsum("...il,...ia,...lb->...ab", ric, B[..., :n], B[..., n:])
    r.add("ricci_mixed", ANCHORS["ric_mixed"], max_abs(rm), tol)
    r.add("curbpm", ANCHORS["curbpm"], curbpm_residual(field, conn, pts), tol)
    if trials > 0:
        drift, gap = scalar_frame_invariance(field, conn, pts, trials, seed)
        r.add("scalar_invariance", ANCHORS["scalar_inv"], drift, tol)
        r.add("scalar_trace", ANCHORS["scalar_trace"], gap, tol)
    return r


def l_curvature(D, p, order: int = 0) -> Jet:
    """Curvature of an L connection: Rl[i, j, a, b] = (R^D(d_i, d_j))^a_b."""
    A1 = D.coefficients(p, order + 1)
    dA = A1.grad()  # (i, a, b, j) = d_j A_i
    A = A1.truncate(order)
    nb = dA.ndim - 4
    batch = tuple(range(nb))
    # d_i A_j: source (j, a, b, i) -> (i, j, a, b)
    d1 = dA.with_c(np.transpose(dA.c, batch + tuple(nb + t for t in (3, 0, 1, 2)) + (nb + 4,)))
    quad = jets.contract("...iac,...jcb->...ijab", A, A)
    out = d1 + quad
    return out - out.transpose(*(batch + (nb + 1, nb, nb + 2, nb + 3)))


def curbpm_residual(field: CompatibleField, conn: ConnectionExpr, points) -> float:
    """max |Rt(X,Y) iota+- e_b - iota+-(R^{D+-}(X,Y) e_b)| over V+- frame arguments.

    (D+, D-) is the pair of the double metric connection ``conn``.
    """
    from .connections import pair_from_double_metric
    pts = np.asarray(points, float)
    Rt = modified_curvature(field, conn).values(pts)
    worst = 0.0
    for sign, D in zip((+1, -1), pair_from_double_metric(field, conn)):
        V = field.V_frame(sign).values(pts)   # columns iota e_b
        RD = l_curvature(D, pts, 0).value     # (i, j, a, b)
        lhs = np.einsum("...klij,...lb,...ic,...jd->...kcdb", Rt, V, V, V)
        rhs = np.einsum("...ka,...ijab,...ic,...jd->...kcdb", V, RD, V, V)
        worst = max(worst, max_abs(lhs - rhs))
    return worst


# -- action ----------------------------------------------------------------------------
PhiLike = Union[None, float, Callable, TensorField]


@dataclass
class ActionConfig:
    """Quadrature setup for the action over a coordinate box.

    ``phi`` (the dilation scalar) may be a constant, a scalar TensorField or
    a callable of the coordinate jet list.
    """

    box: Optional[Sequence[tuple[float, float]]] = None
    nodes: int = 8
    rule: str = "gauss-legendre"
    phi: PhiLike = None
    samples: int = 100_000
    seed: int = 0
    chunk: int = 4096
    convergence_check: bool = True
    convergence_max_points: int = 2 ** 20
    rtol: float = 1e-4

    def validate(self, dim: int) -> list[tuple[float, float]]:
        if self.rule not in ("gauss-legendre", "monte-carlo"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.nodes < 2:
            raise ValueError("need at least 2 nodes per axis")
        box = [(0.0, 1.0)] * dim if self.box is None else [tuple(map(float, b)) for b in self.box]
        if len(box) != dim:
            raise ValueError(f"box has {len(box)} sides, chart dimension is {dim}")
        for lo, hi in box:
            if not hi > lo:
                raise ValueError(f"empty box side ({lo}, {hi})")
        return box


@dataclass
class ActionResult:
    value: float
    rule: str
    evaluations: int
    stderr: Optional[float] = None
    refined: Optional[float] = None
    converged: Optional[bool] = None
    notes: list[str] = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {"value": self.value, "rule": self.rule, "evaluations": self.evaluations,
                "stderr": self.stderr, "refined": self.refined, "converged": self.converged,
                "notes": list(self.notes)}


def gauss_legendre_box(box, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss-Legendre nodes (N, dim) and weights (N,) on a box."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    axes, weights = [], []
    for lo, hi in box:
        half = 0.5 * (hi - lo)
        axes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))
    W = weights[0]
    for wk in weights[1:]:
        W = np.multiply.outer(W, wk).ravel()
    return grid, W


def _phi_values(phi: PhiLike, chart, pts: np.ndarray) -> np.ndarray:
    if phi is None:
        return np.zeros(pts.shape[:-1])
    if isinstance(phi, (int, float)):
        return np.full(pts.shape[:-1], float(phi))
    if isinstance(phi, TensorField):
        return phi.values(pts)
    return TensorField.from_function(chart, (0, 0), phi).values(pts)


def action_integrand(field: CompatibleField, conn: ConnectionExpr, phi: PhiLike = None) -> Callable:
    """Returns f(points) = exp(-2 phi) st sqrt|det g|."""
    def f(pts):
        st = modified_scalar(field, conn).values(pts)
        detg = np.linalg.det(field.g.values(pts))
        vals = np.exp(-2.0 * _phi_values(phi, field.chart, pts)) * st * np.sqrt(np.abs(detg))
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite action integrand sample")
        return vals
    return f


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PARAHERM_THREADS", "1")))
    except ValueError:
        return 1


def _chunked(f: Callable, pts: np.ndarray, chunk: int) -> np.ndarray:
    parts = [pts[i:i + chunk] for i in range(0, len(pts), chunk)]
    nt = _threads()
    if nt > 1 and len(parts) > 1:
        with ThreadPoolExecutor(nt) as ex:
            vals = list(ex.map(f, parts))
    else:
        vals = [f(c) for c in parts]
    return np.concatenate(vals)


def _gauss(f, box, nodes, chunk) -> tuple[float, int]:
    grid, W = gauss_legendre_box(box, nodes)
    vals = _chunked(f, grid, chunk)
    return float(np.sum(vals * W)), len(grid)


def action(field: CompatibleField, cfg: Optional[ActionConfig] = None,
           conn: Optional[ConnectionExpr] = None) -> ActionResult:
    """Integral of exp(-2 phi) st sqrt|det g| dx over the configured box."""
    from .connections import canonical_connection
    cfg = cfg or ActionConfig()
    box = cfg.validate(field.S.dim)
    conn = conn or canonical_connection(field)
    f = action_integrand(field, conn, cfg.phi)
    if cfg.rule == "monte-carlo":
        return monte_carlo_action(field, cfg, conn, f)
    value, count = _gauss(f, box, cfg.nodes, cfg.chunk)
    res = ActionResult(value, "gauss-legendre", count)
    if cfg.convergence_check:
        fine = (2 * cfg.nodes) ** len(box)
        if fine <= cfg.convergence_max_points:
            refined, extra = _gauss(f, box, 2 * cfg.nodes, cfg.chunk)
            res.refined = refined
            res.evaluations += extra
            scale = max(abs(refined), 1e-12)
            res.converged = abs(refined - value) <= cfg.rtol * scale or abs(refined - value) < 1e-12
            if not res.converged:
                warnings.warn(f"action quadrature not converged: {value} vs {refined} with doubled nodes")
        else:
            res.notes.append(f"convergence check skipped: {fine} points exceed the limit")
    return res


def monte_carlo_action(field: CompatibleField, cfg: ActionConfig, conn: ConnectionExpr = None,
                       integrand: Callable = None) -> ActionResult:
    """Plain Monte-Carlo estimate with its standard error."""
    box = cfg.validate(field.S.dim)
    if integrand is None:
        from .connections import canonical_connection
        integrand = action_integrand(field, conn or canonical_connection(field), cfg.phi)
    rng = np.random.default_rng(cfg.seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts = lo + (hi - lo) * rng.random((cfg.samples, len(box)))
    vals = _chunked(integrand, pts, cfg.chunk)
    vol = float(np.prod(hi - lo))
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("inf")
    return ActionResult(vol * mean, "monte-carlo", len(vals), stderr=vol * se)
