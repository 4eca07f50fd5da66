"""Double metric connections of a field and the canonical connection.

Connections on the bundle L are stored by their coefficients in the L frame
``e_1..e_n`` of the structure: ``A[i, a, b]`` with
``D_{d_i} e_b = A[i, a, b] e_a``.  The pipeline is

    base D  ->  beta-modified pair  ->  metrized pair  ->  assembled D+-
            ->  lift to TM (double metric)  ->  gamma-torsion removal.

* base D: ``D_X Y = pr_L [X, Y]`` for X in Lbar; leafwise Koszul formula of k
  for X, Y in L.
* metrization: ``D'_X Y = D_X Y + 1/2 sharp_k flat_{D_X k} Y``.
* beta modification: ``D_X Y +- sharp_k i(Y) i(X) d_L beta`` for X, Y in L.
* assembly: ``D+-_Z Y = bD+-_{pr_V+- Z} Y + pr_L pr_V+- [pr_V-+ Z, iota+- Y]_gamma``.
* lift: ``nabla_X (iota+- Y) = iota+-(D+-_X Y)``.
* torsion removal: ``nabla = nabla' + Phi`` with ``gamma(Phi(X,Y), Z) = -tau(X,Y,Z)/3``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import chartcalc as cc
from . import jets
from .affine import ConnectionExpr, levi_civita_christoffel
from .chartcalc import TensorField
from .fieldmetric import CompatibleField, _Memo
from .jets import Jet
from .parastructure import ParaHermitianStructure
from .report import Report, max_abs

__all__ = [
    "LConnectionExpr", "MixedTorsionError", "base_connection", "metrize", "beta_modified",
    "assemble_pair", "double_metric_from_pair", "gamma_torsion", "gamma_torsion_tensor",
    "remove_gamma_torsion", "canonical_connection", "pair_from_double_metric", "CanonicalPipeline",
    "deformation_kernel_dimension", "leafwise_d_beta", "torsion_tauD",
]

ANCHORS = {
    "metric_k": "D_X k = 0",
    "leaf_k": "Z k(X,Y) = k(D_Z X, Y) + k(X, D_Z Y), Z in L",
    "tauD": "tau^D(X,Y) = D_X pr_L Y - D_Y pr_L X - pr_L[X,Y] = 0",
    "mixt": "D+_{iota- X} Y = pr_L pr_V+ [iota- X, iota+ Y]_gamma",
    "gamma": "nabla gamma = 0",
    "g": "nabla g = 0",
    "H": "nabla H = 0",
    "Vpres": "pr_V-+ nabla_X (V+- frame) = 0",
    "torsC": "T_gamma = nabla_X Y - nabla_Y X - X ^_nabla Y - [X,Y]_gamma = 0",
    "skew": "tau_gamma totally skew-symmetric",
    "cyclic": "sum_cycl gamma(nabla_X Y, Z) = 1/2 sum_cycl {Z gamma(X,Y) + gamma([X,Y],Z)}",
    "PsiH2": "Psi(X, S, U) = 0 for S in V+, U in V-",
    "kernel": "dim ker = m(m^2-1)/3",
}


class MixedTorsionError(ValueError):
    """The connection has nonzero mixed gamma-torsion; torsion removal is not possible."""


# -- L connections ---------------------------------------------------------------------
class LConnectionExpr:
    """Connection on L given by coefficients ``A[i, a, b]`` in the L frame."""

    def __init__(self, S: ParaHermitianStructure, coeffs: Callable[[np.ndarray, int], Jet],
                 name: str = "D"):
        self.S = S
        self.name = name
        self._coeffs = _Memo(coeffs)

    def __repr__(self) -> str:
        return f"LConnectionExpr({self.name})"

    @property
    def chart(self):
        return self.S.chart

    def coefficients(self, p, order: int = 0) -> Jet:
        jets.check_order(order)
        return self._coeffs(np.asarray(p, float), order)

    def frame_coefficients(self, p, order: int = 0) -> Jet:
        """A[m, a, b] for the directions m of the full frame [e | ebar]."""
        P = self.S.frame(p, order)
        return jets.contract("...im,...iab->...mab", P, self.coefficients(p, order))

    def apply(self, X: TensorField, Y: TensorField, tol: float = 1e-9) -> TensorField:
        """D_X Y for a vector field X and a section Y of L (returned as a vector field)."""
        n = self.S.n

        def evaluator(p, order):
            Q = self.S.coframe(p, order + 1)
            yfull = jets.matvec(Q, Y.eval(p, order + 1))
            if max_abs(yfull.value[..., n:]) > tol * max(1.0, max_abs(yfull.value)):
                raise ValueError("D acts on sections of L only")
            y = yfull[..., :n]
            x = X.eval(p, order)
            dy = jets.matvec(y.grad(), x)
            A = jets.contract("...i,...iab->...ab", x, self.coefficients(p, order))
            coef = dy + jets.matvec(A, y.truncate(order))
            return jets.matvec(self.S.L_frame.eval(p, order), coef)
        return TensorField(self.chart, (1, 0), evaluator, name=f"{self.name}_X Y")

    def metricity(self, k: TensorField, p) -> np.ndarray:
        """(D_{d_i} k)_{bc} = d_i k_bc - A_i^d_b k_dc - k_bd A_i^d_c."""
        return _metric_defect(self.coefficients(p, 0), k.eval(p, 1)).value


def _metric_defect(A: Jet, k1: Jet) -> Jet:
    dk = k1.grad()  # (b, c, i)
    k = k1.truncate(dk.order)
    A = A.truncate(dk.order)
    Ak = jets.contract("...idb,...dc->...ibc", A, k)
    return _move_last_first(dk) - Ak - Ak.swapaxes(-1, -2)


def _move_last_first(a: Jet) -> Jet:
    """(…, b, c, i) -> (…, i, b, c) on the tensor axes."""
    nb = a.ndim - 3
    axes = tuple(range(nb)) + (nb + 2, nb, nb + 1, nb + 3)
    return a.with_c(np.transpose(a.c, axes))


def _frame_brackets(P1: Jet) -> Jet:
    """W[k, m, l] = [P_m, P_l]^k for the columns of a frame given at order >= 1."""
    dP = P1.grad()  # (k, l, j) = d_j P^k_l
    P = P1.truncate(dP.order)
    t = jets.contract("...jm,...klj->...kml", P, dP)
    return t - t.swapaxes(-1, -2)


def _to_coordinates(Q: Jet, Afr: Jet) -> Jet:
    """Coordinate-direction coefficients A[i] = sum_m Q[m, i] Afr[m]."""
    return jets.contract("...mi,...mab->...iab", Q, Afr)


def _attached_memo(owner, attr: str, fn) -> _Memo:
    """A _Memo stored on ``owner`` so that all stages built from it share results."""
    memo = getattr(owner, attr, None)
    if memo is None:
        memo = _Memo(fn)
        object.__setattr__(owner, attr, memo)
    return memo


def gamma_levi_civita(S: ParaHermitianStructure, p, order: int) -> Jet:
    """Christoffel symbols of the Levi-Civita connection of gamma (memoized per structure)."""
    memo = _attached_memo(S, "_lc_memo",
                          lambda p, o: levi_civita_christoffel(S.gamma.eval(p, o + 1)))
    return memo(p, order)


class _BracketEntry:
    def __init__(self, P, Q, C, order):
        self.P, self.Q, self.C, self.order = P, Q, C, order

    def truncate(self, order):
        return _BracketEntry(self.P.truncate(order), self.Q.truncate(order),
                             self.C.truncate(order), order)


def structure_brackets(S: ParaHermitianStructure, p, order: int):
    """(P, Q, C) with C[r, m, l] the frame coefficients of [P_m, P_l] (memoized per structure)."""
    def compute(p, order):
        P1 = S.frame(p, order + 1)
        P = P1.truncate(order)
        Q = jets.inv(P, "L/Lbar frame")
        C = jets.contract("...rk,...kml->...rml", Q, _frame_brackets(P1))
        return _BracketEntry(P, Q, C, order)
    e = _attached_memo(S, "_bracket_memo", compute)(p, order)
    return e.P, e.Q, e.C


def _frame_data(S: ParaHermitianStructure, k: TensorField, p, order):
    n = S.n
    P, Q, C = structure_brackets(S, p, order)
    k1 = k.eval(p, order + 1)
    kk = k1.truncate(order)
    E = P[..., :, :n]
    ek = jets.contract("...bcj,...ja->...abc", k1.grad(), E)  # e_a k_bc
    return P, Q, C, kk, ek


def base_connection(S: ParaHermitianStructure, k: TensorField, name: str = "D") -> LConnectionExpr:
    """Torsion-free connection on L with D_Z k = 0 for Z in L (leafwise Koszul formula)."""
    n = S.n

    def coeffs(p, order):
        P, Q, C, kk, ek = _frame_data(S, k, p, order)
        CL = C[..., :n, :n, :n]  # [e_a, e_b] has no Lbar part
        kC = jets.contract("...dab,...dc->...abc", CL, kk)  # k([e_a, e_b], e_c)
        lam = (ek + ek.transpose(*_perm(ek, (1, 0, 2))) - ek.transpose(*_perm(ek, (2, 0, 1)))
               + kC - kC.transpose(*_perm(kC, (0, 2, 1))) - kC.transpose(*_perm(kC, (1, 2, 0))))
        kinv = jets.inv(kk, "k")
        AL = jets.contract("...dc,...abc->...adb", kinv, lam) * 0.5
        ALb = C[..., :n, n:, :n].transpose(*_perm(C[..., :n, n:, :n], (1, 0, 2)))
        Afr = jets.concatenate([AL, ALb], axis=-3)
        return _to_coordinates(Q, Afr)
    return LConnectionExpr(S, coeffs, name)


def _perm(a: Jet, tail: tuple) -> tuple:
    """Axes tuple applying ``tail`` to the last len(tail) tensor axes, for Jet.transpose.

    ``out[..., x0, x1, x2] = a[..., src]`` where tail[j] is the output
    position of source axis j.
    """
    nb = a.ndim - len(tail)
    inv = [0] * len(tail)
    for src, dst in enumerate(tail):
        inv[dst] = src
    return tuple(range(nb)) + tuple(nb + s for s in inv)


def leafwise_d_beta(S: ParaHermitianStructure, beta: TensorField, p, order: int = 0) -> Jet:
    """(d_L beta)(e_a, e_b, e_c) in the L frame."""
    n = S.n
    P, Q, C, bb, eb = _frame_data(S, beta, p, order)
    CL = C[..., :n, :n, :n]
    bC = jets.contract("...dab,...dc->...abc", CL, bb)  # beta([e_a, e_b], e_c)
    return (eb - eb.transpose(*_perm(eb, (1, 0, 2))) + eb.transpose(*_perm(eb, (2, 0, 1)))
            - bC + bC.transpose(*_perm(bC, (0, 2, 1))) - bC.transpose(*_perm(bC, (1, 2, 0))))


def metrize(D: LConnectionExpr, k: TensorField, name: Optional[str] = None) -> LConnectionExpr:
    """D'_X Y = D_X Y + 1/2 sharp_k flat_{D_X k} Y, a k-metric connection."""
    def coeffs(p, order):
        A = D.coefficients(p, order)
        k1 = k.eval(p, order + 1)
        M = _metric_defect(A, k1)  # (i, b, c)
        kinv = jets.inv(k1.truncate(order), "k")
        return A + jets.contract("...ad,...idb->...iab", kinv, M) * 0.5
    return LConnectionExpr(D.S, coeffs, name or f"{D.name}'")


def beta_modified(D: LConnectionExpr, k: TensorField, beta: TensorField,
                  metrized: bool = True) -> tuple[LConnectionExpr, LConnectionExpr]:
    """(bD+, bD-): add +- sharp_k i(Y) i(X) d_L beta on L x L, then metrize."""
    S = D.S
    n = S.n
    out = []
    for sign in (+1, -1):
        def coeffs(p, order, sign=sign):
            A = D.coefficients(p, order)
            if not np.any(beta.eval(p, order + 1).c):
                return A  # beta vanishes identically near the points
            Q = structure_brackets(S, p, order)[1]
            dbeta = leafwise_d_beta(S, beta, p, order)
            kinv = jets.inv(k.eval(p, order), "k")
            mod = jets.contract("...dc,...abc->...adb", kinv, dbeta) * float(sign)
            return A + jets.contract("...ai,...adb->...idb", Q[..., :n, :], mod)
        Db = LConnectionExpr(S, coeffs, f"beta{D.name}{'+' if sign > 0 else '-'}")
        out.append(metrize(Db, k, Db.name) if metrized else Db)
    return out[0], out[1]


def torsion_tauD(D: LConnectionExpr, X: TensorField, Y: TensorField) -> TensorField:
    """tau^D(X,Y) = D_X(pr_L Y) - D_Y(pr_L X) - pr_L[X,Y]."""
    from .parastructure import eigen_projectors
    prL, _ = eigen_projectors(D.S)
    XL, YL = cc.apply_endomorphism(prL, X), cc.apply_endomorphism(prL, Y)
    return D.apply(X, YL) - D.apply(Y, XL) - cc.apply_endomorphism(prL, cc.lie_bracket(X, Y))


# -- gamma brackets of frames ------------------------------------------------------------
def frame_gamma_brackets(gamma1: Jet, B1: Jet, G0: Jet = None) -> Jet:
    """[B_m, B_l]_gamma^k for frame columns, from gamma and B given at order >= 1.

    ``G0`` are the Levi-Civita symbols of gamma at the lower order, if known.
    """
    dB = B1.grad()  # (k, l, j)
    o = dB.order
    B = B1.truncate(o)
    g = gamma1.truncate(o)
    if G0 is None:
        G0 = levi_civita_christoffel(gamma1)  # (k, j, r)
    nabB = dB + jets.contract("...kjr,...rl->...klj", G0, B)
    lie = jets.contract("...jm,...klj->...kml", B, dB)
    lie = lie - lie.swapaxes(-1, -2)
    flatB = jets.matmul(g, B)  # (a, m): gamma(B_m, d_a)
    half = jets.contract("...km,...klj->...mlj", flatB, nabB)
    alpha = (half - half.transpose(*_perm(half, (1, 0, 2)))) * 0.5
    wedge = jets.contract("...kj,...mlj->...kml", jets.inv(g, "gamma"), alpha)
    return lie - wedge


@dataclass
class _Split:
    B: Jet
    Binv: Jet
    dB: Jet
    Cg: Jet


def _split_data(field: CompatibleField, p, order) -> _Split:
    """V+/V- frame B, its inverse and derivative, and gamma-brackets of its columns."""
    def compute(p, order):
        S = field.S
        B1 = jets.concatenate([field.V_frame(+1).eval(p, order + 1),
                               field.V_frame(-1).eval(p, order + 1)], axis=-1)
        W = frame_gamma_brackets(S.gamma.eval(p, order + 1), B1, gamma_levi_civita(S, p, order))
        B = B1.truncate(order)
        Binv = jets.inv(B, "V+/V- frame")
        data = _Split(B, Binv, B1.grad(), jets.contract("...rk,...kml->...rml", Binv, W))
        return _SplitEntry(data, order)
    return _attached_memo(field, "_split_memo", compute)(p, order).data


def assemble_pair(field: CompatibleField, bDp: LConnectionExpr, bDm: LConnectionExpr,
                  variant: str = "matched") -> tuple[LConnectionExpr, LConnectionExpr]:
    """(D+, D-) with vanishing mixed gamma-torsion.

    ``variant="matched"`` uses bD+- in the V+- directions of D+-;
    ``"plus_only"`` uses bD+ for both.
    """
    if variant not in ("matched", "plus_only"):
        raise ValueError("variant must be 'matched' or 'plus_only'")
    n = field.n
    S = field.S
    def plus(p, order):
        sp = _split_data(field, p, order)
        Pi = jets.matmul(sp.B[..., :, :n], sp.Binv[..., :n, :])
        A = jets.contract("...ji,...jab->...iab", Pi, bDp.coefficients(p, order))
        mixed = jets.contract("...ci,...acb->...iab", sp.Binv[..., n:, :], sp.Cg[..., :n, n:, :n])
        return A + mixed

    def minus(p, order):
        sp = _split_data(field, p, order)
        Pi = jets.matmul(sp.B[..., :, n:], sp.Binv[..., n:, :])
        src = bDp if variant == "plus_only" else bDm
        A = jets.contract("...ji,...jab->...iab", Pi, src.coefficients(p, order))
        mixed = jets.contract("...ci,...acb->...iab", sp.Binv[..., :n, :], sp.Cg[..., n:, :n, n:])
        return A + mixed
    return LConnectionExpr(S, plus, "D+"), LConnectionExpr(S, minus, "D-")


class _SplitEntry:
    def __init__(self, data: _Split, order: int):
        self.data = data
        self.order = order

    def truncate(self, order):
        d = self.data
        return _SplitEntry(_Split(d.B.truncate(order), d.Binv.truncate(order),
                                  d.dB.truncate(order), d.Cg.truncate(order)), order)


def double_metric_from_pair(field: CompatibleField, Dp: LConnectionExpr, Dm: LConnectionExpr,
                            name: str = "nabla") -> ConnectionExpr:
    """nabla_X(iota+- Y) = iota+-(D+-_X Y) as Christoffel symbols on the chart."""
    n = field.n

    def christoffel(p, order):
        sp = _split_data(field, p, order)
        B, Binv, dB = sp.B, sp.Binv, sp.dB  # dB[k, m, i] = d_i B^k_m
        Ap, Am = Dp.coefficients(p, order), Dm.coefficients(p, order)
        Z = Jet.zeros(Ap.shape, Ap.dim, order)
        Om = jets.concatenate([jets.concatenate([Ap, Z], -1), jets.concatenate([Z, Am], -1)], -2)
        t1 = jets.contract("...kmi,...mj->...kij", dB, Binv)
        BOm = jets.contract("...kl,...ilm->...kim", B, Om)
        t2 = jets.contract("...kim,...mj->...kij", BOm, Binv)
        return t2 - t1
    conn = ConnectionExpr(field.chart, christoffel, name)
    conn.preserves = ("gamma", "g", "H")
    return conn


def pair_from_double_metric(field: CompatibleField, conn: ConnectionExpr
                            ) -> tuple[LConnectionExpr, LConnectionExpr]:
    """Inverse of the lift: D+-_X Y = iota+-^{-1} pr_V+- nabla_X(iota+- Y)."""
    n = field.n

    def omega(p, order):
        B1 = jets.concatenate([field.V_frame(+1).eval(p, order + 1),
                               field.V_frame(-1).eval(p, order + 1)], axis=-1)
        dB = B1.grad()  # (k, m, i)
        B = B1.truncate(order)
        Binv = jets.inv(B, "V+/V- frame")
        nab = dB + jets.contract("...kir,...rm->...kmi", conn.christoffel(p, order), B)
        return jets.contract("...ak,...kmi->...iam", Binv, nab)

    om = _Memo(omega)
    Dp = LConnectionExpr(field.S, lambda p, o: om(p, o)[..., :n, :n], f"{conn.name}+")
    Dm = LConnectionExpr(field.S, lambda p, o: om(p, o)[..., n:, n:], f"{conn.name}-")
    return Dp, Dm


# -- gamma torsion -----------------------------------------------------------------------
def _lower(gamma: Jet, G: Jet) -> Jet:
    """G_{l,ij} = gamma_lk G^k_ij."""
    return jets.contract("...lk,...kij->...lij", gamma, G)


def gamma_torsion_tensor(G: Jet, gamma1: Jet, G0: Jet = None) -> Jet:
    """Covariant gamma-torsion tau_{ijl} = gamma(T_gamma(d_i, d_j), d_l).

    ``G`` are the connection's Christoffel symbols at order o and ``gamma1``
    the metric at order o + 1 (the Levi-Civita symbols ``G0`` enter).
    """
    o = G.order
    g = gamma1.truncate(o)
    if G0 is None:
        G0 = levi_civita_christoffel(gamma1).truncate(o)
    Gl = _lower(g, G)   # (l, i, j)
    G0l = _lower(g, G0)
    t1 = Gl.transpose(*_perm(Gl, (2, 0, 1)))                   # [i, j, l] = Gl[l, i, j]
    t2 = Gl.transpose(*_perm(Gl, (2, 1, 0)))                   # [i, j, l] = Gl[l, j, i]
    D = Gl - G0l
    w1 = D.transpose(*_perm(D, (0, 2, 1)))                     # [i, j, l] = D[i, l, j]
    w2 = D.transpose(*_perm(D, (1, 2, 0)))                     # [i, j, l] = D[j, l, i]
    return t1 - t2 - (w1 - w2) * 0.5


def gamma_torsion(conn: ConnectionExpr, gamma: TensorField) -> TensorField:
    """tau_gamma as a (0,3) field."""
    def evaluator(p, order):
        return gamma_torsion_tensor(conn.christoffel(p, order), gamma.eval(p, order + 1))
    return TensorField(conn.chart, (0, 3), evaluator, name="tau_gamma")


def gamma_torsion_vector(conn: ConnectionExpr, gamma: TensorField) -> TensorField:
    """T_gamma as a (1,2) field: T^k_ij = gamma^{kl} tau_ijl."""
    tau = gamma_torsion(conn, gamma)

    def evaluator(p, order):
        return jets.contract("...kl,...ijl->...kij", jets.inv(gamma.eval(p, order), "gamma"),
                             tau.eval(p, order))
    return TensorField(conn.chart, (1, 2), evaluator, name="T_gamma")


def mixed_gamma_torsion(tau: np.ndarray, B: np.ndarray, n: int) -> float:
    """Max |tau| over triples mixing V+ and V- (frame columns B = [V+ | V-])."""
    tB = np.einsum("...ijl,...ia,...jb,...lc->...abc", tau, B, B, B, optimize=True)
    sign = np.array([0] * n + [1] * n)
    mixed = (sign[:, None, None] + sign[None, :, None] + sign[None, None, :]) % 3 != 0
    return max_abs(tB[..., mixed])


def remove_gamma_torsion(conn: ConnectionExpr, field: CompatibleField,
                         tol: float = 1e-8, name: str = "nabla_c") -> ConnectionExpr:
    """nabla = nabla' + Phi with gamma(Phi(X,Y), Z) = -tau'(X,Y,Z)/3.

    Refuses (MixedTorsionError) when the mixed gamma-torsion of nabla' is nonzero.
    """
    gamma = field.S.gamma
    n = field.n

    def christoffel(p, order):
        G = conn.christoffel(p, order)
        g1 = gamma.eval(p, order + 1)
        tau = gamma_torsion_tensor(G, g1, gamma_levi_civita(field.S, p, order))
        B = np.concatenate([field.V_frame(+1).values(p), field.V_frame(-1).values(p)], axis=-1)
        mixed = mixed_gamma_torsion(tau.value, B, n)
        if mixed > tol * max(1.0, max_abs(tau.value)):
            raise MixedTorsionError(f"mixed gamma-torsion {mixed:.3e} is nonzero")
        ginv = jets.inv(g1.truncate(order), "gamma")
        Phi = jets.contract("...kl,...ijl->...kij", ginv, tau) * (-1.0 / 3.0)
        return G + Phi
    out = ConnectionExpr(field.chart, christoffel, name)
    out.preserves = ("gamma", "g", "H")
    return out


# -- full pipeline -----------------------------------------------------------------------
@dataclass
class CanonicalPipeline:
    """All stages of the canonical connection of a field."""

    field: CompatibleField
    k: TensorField
    beta: TensorField
    D: LConnectionExpr
    D_metric: LConnectionExpr
    bD_plus: LConnectionExpr
    bD_minus: LConnectionExpr
    D_plus: LConnectionExpr
    D_minus: LConnectionExpr
    initial: ConnectionExpr
    canonical: ConnectionExpr


def canonical_pipeline(field: CompatibleField, variant: str = "matched") -> CanonicalPipeline:
    from .fieldmetric import extract_components
    S = field.S
    comps = extract_components(field)
    D = base_connection(S, comps.k)
    Dm = metrize(D, comps.k)
    bDp, bDm = beta_modified(D, comps.k, comps.beta)
    Dp, Dmn = assemble_pair(field, bDp, bDm, variant)
    initial = double_metric_from_pair(field, Dp, Dmn, name="beta_nabla_gamma")
    canonical = remove_gamma_torsion(initial, field)
    return CanonicalPipeline(field, comps.k, comps.beta, D, Dm, bDp, bDm, Dp, Dmn, initial,
                             canonical)


def canonical_connection(field: CompatibleField, variant: str = "matched") -> ConnectionExpr:
    """The canonical double metric connection nabla^c of a field."""
    return canonical_pipeline(field, variant).canonical


# -- checks --------------------------------------------------------------------------------
def covariant_residuals(conn: ConnectionExpr, field: CompatibleField, points) -> dict[str, float]:
    """Max |nabla gamma|, |nabla g|, |nabla H| at points."""
    S = field.S
    return {name: max_abs(conn.covariant_derivative(T).values(points))
            for name, T in (("gamma", S.gamma), ("g", field.g), ("H", field.H))}


def V_preservation_residual(conn: ConnectionExpr, field: CompatibleField, points) -> float:
    """Max |pr_V-+ nabla_{d_i} (V+- frame)|."""
    pts = np.asarray(points, float)
    n = field.n
    worst = 0.0
    for sign in (+1, -1):
        V = field.V_frame(sign)
        V1 = V.eval(pts, 1)
        G = conn.christoffel(pts, 0).value
        dV = V1.grad().value  # (k, a, i)
        Vv = V1.value
        nab = dV + np.einsum("...kir,...ra->...kai", G, Vv)
        B = np.concatenate([field.V_frame(+1).values(pts), field.V_frame(-1).values(pts)], -1)
        coef = np.einsum("...mk,...kai->...mai", np.linalg.inv(B), nab)
        other = coef[..., n:, :, :] if sign > 0 else coef[..., :n, :, :]
        worst = max(worst, max_abs(other))
    return worst


def cyclic_identity_residual(conn: ConnectionExpr, gamma: TensorField, X, Y, Z, points) -> float:
    """sum_cycl gamma(nabla_X Y, Z) - 1/2 sum_cycl {Z gamma(X,Y) + gamma([X,Y],Z)}."""
    pts = np.asarray(points, float)
    lhs = None
    rhs = None
    for a, b, c in ((X, Y, Z), (Y, Z, X), (Z, X, Y)):
        t = cc.metric_apply(gamma, conn.apply(a, b), c)
        lhs = t if lhs is None else lhs + t
        u = (cc.directional_derivative(c, cc.metric_apply(gamma, a, b))
             + cc.metric_apply(gamma, cc.lie_bracket(a, b), c))
        rhs = u if rhs is None else rhs + u
    return max_abs(lhs.values(pts) - 0.5 * rhs.values(pts))


def skew_residual(tau: np.ndarray) -> float:
    sw = lambda a, b: np.swapaxes(tau, a, b)
    return max(max_abs(tau + sw(-1, -2)), max_abs(tau + sw(-2, -3)), max_abs(tau + sw(-1, -3)))


def verify_canonical(field: CompatibleField, points, tol: float = 1e-7,
                     variant: str = "matched") -> Report:
    pts = np.asarray(points, float)
    pipe = canonical_pipeline(field, variant)
    nab = pipe.canonical
    r = Report(f"canonical connection of {field.name}")
    res = covariant_residuals(nab, field, pts)
    r.add("nabla_gamma", ANCHORS["gamma"], res["gamma"], tol)
    r.add("nabla_g", ANCHORS["g"], res["g"], tol)
    r.add("nabla_H", ANCHORS["H"], res["H"], tol)
    r.add("V_preserved", ANCHORS["Vpres"], V_preservation_residual(nab, field, pts), tol)
    tau = gamma_torsion(nab, field.S.gamma).values(pts)
    r.add("gamma_torsion", ANCHORS["torsC"], max_abs(tau), tol)
    tau0 = gamma_torsion(pipe.initial, field.S.gamma).values(pts)
    r.add("initial_torsion_skew", ANCHORS["skew"], skew_residual(tau0), tol)
    r.add("D_plus_metric", ANCHORS["metric_k"], max_abs(pipe.D_plus.metricity(pipe.k, pts)), tol)
    r.add("D_minus_metric", ANCHORS["metric_k"], max_abs(pipe.D_minus.metricity(pipe.k, pts)), tol)
    return r


def deformation_kernel_dimension(m: int, tol: float = 1e-10) -> int:
    """Dimension of {Xi : Xi(X,Y,Z) = -Xi(X,Z,Y), sum_cycl Xi = 0} on an m-dim space."""
    size = m ** 3
    idx = lambda a, b, c: (a * m + b) * m + c
    rows = []
    for a in range(m):
        for b in range(m):
            for c in range(m):
                r = np.zeros(size)
                r[idx(a, b, c)] += 1.0
                r[idx(a, c, b)] += 1.0
                rows.append(r)
                r = np.zeros(size)
                r[idx(a, b, c)] += 1.0
                r[idx(b, c, a)] += 1.0
                r[idx(c, a, b)] += 1.0
                rows.append(r)
    rank = np.linalg.matrix_rank(np.array(rows), tol=tol)
    return size - int(rank)
