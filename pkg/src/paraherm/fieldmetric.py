"""Compatible metrics on a para-Hermitian manifold and their L-components.

Frame conventions: ``P = [e | ebar]`` is the L/Lbar frame of the structure,
``Q = P^{-1}`` and ``G_ab = gamma(e_a, ebar_b)``.  Endomorphisms restricted to
L, Lbar are ``n x n`` matrices acting on frame coefficients, and the hatted
matrix ``Hhat = Q H P = [[psi_+, theta~], [theta, psi_-]]``.

In these coordinates
    k      = 2 G theta~^{-1}                      (metric on L)
    beta_- = (theta~ psi_-)^T G                   (2-form on Lbar)
    beta   = 2 theta~^{-T} beta_- theta~^{-1}     (2-form on L)
and conversely theta~ = 2 k^{-1} G, psi_- = -theta~^{-1} G^{-T} beta_-,
psi_+ = -theta~ psi_- theta~^{-1}, theta = (Id - psi_-^2) theta~^{-1}.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from . import jets
from .chartcalc import Frame, TensorField
from .jets import DegenerateError, Jet
from .parastructure import ParaHermitianStructure, signature
from .report import Report, max_abs


class CompatibilityError(ValueError):
    """g is not compatible with gamma (H^2 != Id)."""


class InconsistencyError(RuntimeError):
    """Equivalent criteria disagree beyond tolerance."""


class SignatureError(ValueError):
    """Gram-Schmidt met a numerically null subspace."""


ANCHORS = {
    "H2": "H^2 = Id, H = sharp_g o flat_gamma",
    "gH": "g(X,Y) = gamma(HX,Y)",
    "gHH": "g(HX,HY) = g(X,Y)",
    "gamHH": "gamma(HX,HY) = gamma(X,Y)",
    "prod1": "psi_+^2 + theta~ theta = Id",
    "prod2": "psi_-^2 + theta theta~ = Id",
    "prod3": "psi_+ theta~ + theta~ psi_- = 0",
    "prod4": "psi_- theta + theta psi_+ = 0",
    "transp": "gamma(psi_+ X+, Y-) = gamma(X+, psi_- Y-)",
    "ggamma": "g|V+ = gamma|V+, g|V- = -gamma|V-",
    "perp": "V+ perp_g V-, V+ perp_gamma V-",
    "eigV": "H iota_(+-) Z = +- iota_(+-) Z",
    "pull": "g(iota Z1, iota Z2) = k(Z1, Z2)",
    "ksym": "k symmetric, beta antisymmetric",
    "Lcap": "Lbar cap V+- = 0",
}


def _sym(a: Jet) -> Jet:
    return (a + a.T) * 0.5


def _antisym(a: Jet) -> Jet:
    return (a - a.T) * 0.5


@dataclass
class Blocks:
    """Frame matrices of H and derived L-data at a batch of points."""

    P: Jet
    Q: Jet
    G: Jet
    Hhat: Jet
    psi_plus: Jet
    theta_t: Jet
    theta: Jet
    psi_minus: Jet
    theta_t_inv: Jet

    def truncate(self, order: int) -> "Blocks":
        return Blocks(*(getattr(self, f).truncate(order) for f in self.__dataclass_fields__))


class _Memo:
    """Per-instance memo keyed by point batch; higher orders serve lower ones."""

    def __init__(self, fn, size: int = 4):
        self.fn = fn
        self.size = size
        self.cache: OrderedDict = OrderedDict()
        self.lock = threading.Lock()

    def __call__(self, p, order):
        p = np.asarray(p, float)
        key = (p.shape, p.tobytes())
        with self.lock:
            hit = self.cache.get(key)
            if hit is not None and hit.order >= order:
                return hit.truncate(order) if hit.order > order else hit
        out = self.fn(p, order)
        with self.lock:
            self.cache[key] = out
            if len(self.cache) > self.size:
                self.cache.popitem(last=False)
        return out


class _BlockEntry:
    def __init__(self, blocks: Blocks, order: int):
        self.blocks = blocks
        self.order = order

    def truncate(self, order):
        return _BlockEntry(self.blocks.truncate(order), order)


def endomorphism_H(g: TensorField, S: ParaHermitianStructure) -> TensorField:
    """H = sharp_g o flat_gamma, i.e. H = g^{-1} gamma."""
    def evaluator(p, order):
        return jets.matmul(jets.inv(g.eval(p, order), "metric g"), S.gamma.eval(p, order))
    return TensorField(S.chart, (1, 1), evaluator, name="H")


class CompatibleField:
    """A gamma-compatible metric g ("field") on a para-Hermitian manifold."""

    def __init__(self, S: ParaHermitianStructure, g: TensorField, name: str = "field",
                 validate: bool = True, tol: float = 1e-8):
        if g.chart is not S.chart:
            raise ValueError("metric and structure live on different charts")
        self.S = S
        self.g = g
        self.name = name
        self.H = endomorphism_H(g, S)
        self._blocks = _Memo(lambda p, o: _BlockEntry(self._compute_blocks(p, o), o))
        self._V_frames: dict[int, Frame] = {}
        if validate:
            pts = S.chart.sample(np.random.default_rng(0), 4)
            validate_compatible(self, pts, tol)

    @property
    def chart(self):
        return self.S.chart

    @property
    def n(self) -> int:
        return self.S.n

    def _compute_blocks(self, p, order) -> Blocks:
        n = self.n
        P = self.S.frame(p, order)
        Q = jets.inv(P, "L/Lbar frame")
        H = self.H.eval(p, order)
        Hhat = jets.matmul(jets.matmul(Q, H), P)
        tt = Hhat[..., :n, n:]
        return Blocks(P, Q, self.S.pairing(p, order), Hhat, Hhat[..., :n, :n], tt,
                      Hhat[..., n:, :n], Hhat[..., n:, n:],
                      jets.inv(tt, "theta~ (g restricted to Lbar)"))

    def blocks(self, p, order: int = 0) -> Blocks:
        return self._blocks(p, order).blocks

    # -- L-components -----------------------------------------------------------
    def k(self, p, order: int = 0) -> Jet:
        b = self.blocks(p, order)
        return jets.matmul(b.G, b.theta_t_inv) * 2.0

    def beta_minus(self, p, order: int = 0) -> Jet:
        b = self.blocks(p, order)
        return jets.matmul(jets.matmul(b.theta_t, b.psi_minus).T, b.G)

    def g_minus(self, p, order: int = 0) -> Jet:
        """g restricted to Lbar in the ebar frame: theta~^T G."""
        b = self.blocks(p, order)
        return jets.matmul(b.theta_t.T, b.G)

    def beta(self, p, order: int = 0) -> Jet:
        b = self.blocks(p, order)
        bm = self.beta_minus(p, order)
        return jets.matmul(jets.matmul(b.theta_t_inv.T, bm), b.theta_t_inv) * 2.0

    def beta_direct(self, p, order: int = 0) -> Jet:
        """Independent form beta(X,Y) = 2 gamma(psi_- theta~^{-1} X, Y) = 2 (G psi_- theta~^{-1})^T."""
        b = self.blocks(p, order)
        return jets.matmul(jets.matmul(b.G, b.psi_minus), b.theta_t_inv).T * 2.0

    # -- V+- frames -------------------------------------------------------------
    def iota_matrix(self, sign: int, p, order: int = 0) -> Jet:
        """Frame coordinates of iota_(+-): (2n, n) matrix [[Id], [-theta~^{-1}(psi_+ -+ Id)]]."""
        b = self.blocks(p, order)
        n = self.n
        low = -jets.matmul(b.theta_t_inv, b.psi_plus - jets.eye(n, self.S.dim, order) * float(sign))
        top = jets.eye(n, self.S.dim, order).broadcast_to(low.shape)
        return jets.concatenate([top, low], axis=-2)

    def V_frame(self, sign: int) -> Frame:
        """Frame of V_(+-): iota_(+-) applied to the L frame (cached per sign)."""
        sign = 1 if sign > 0 else -1
        frame = self._V_frames.get(sign)
        if frame is None:
            def evaluator(p, order):
                b = self.blocks(p, order)
                return jets.matmul(b.P, self.iota_matrix(sign, p, order))
            frame = Frame(self.chart, self.n, evaluator, name="V+" if sign > 0 else "V-")
            self._V_frames[sign] = frame
        return frame

    def iota(self, sign: int, Z: TensorField, tol: float = 1e-9) -> TensorField:
        """iota_(+-) Z for a vector field Z tangent to L."""
        n = self.n

        def evaluator(p, order):
            b = self.blocks(p, order)
            z = jets.matvec(b.Q, Z.eval(p, order))
            if max_abs(z.value[..., n:]) > tol * max(1.0, max_abs(z.value)):
                raise ValueError("iota expects a vector in L (nonzero Lbar component)")
            return jets.matvec(jets.matmul(b.P, self.iota_matrix(sign, p, order)), z[..., :n])
        return TensorField(self.chart, (1, 0), evaluator, name="iota")

    def inertia(self, p) -> tuple[int, int]:
        """Inertia (p, q) of gamma restricted to V+ at one point."""
        V = self.V_frame(+1).values(p)
        gam = self.S.gamma.values(p)
        return signature(V.T @ gam @ V)


def validate_compatible(field: CompatibleField, points, tol: float = 1e-8) -> None:
    pts = np.asarray(points, float)
    H = field.H.values(pts)
    dim = field.S.dim
    if max_abs(H @ H - np.eye(dim)) > tol:
        raise CompatibilityError("H^2 != Id: g is not compatible with gamma")
    Eb = field.S.Lbar_frame.values(pts)
    gm = np.swapaxes(Eb, -1, -2) @ field.g.values(pts) @ Eb
    if np.any(jets.is_singular(gm)):
        raise DegenerateError("g restricted to Lbar is degenerate")


# -- components <-> field ---------------------------------------------------------
def block_decompose(field: CompatibleField, p, order: int = 0):
    b = field.blocks(p, order)
    return b.psi_plus, b.psi_minus, b.theta, b.theta_t


@dataclass
class FieldComponents:
    """(k, beta) as n x n matrix fields in the L frame."""

    k: TensorField
    beta: TensorField


def extract_components(field: CompatibleField) -> FieldComponents:
    n = field.n
    return FieldComponents(
        TensorField(field.chart, (0, 2), field.k, "symmetric", name="k", shape=(n, n)),
        TensorField(field.chart, (0, 2), field.beta, "antisymmetric", name="beta", shape=(n, n)),
    )


def metric_from_blocks(S: ParaHermitianStructure, p, order, theta_t: Jet, psi_minus: Jet) -> Jet:
    """g = H^T gamma with H = P Hhat Q built from (psi_-, theta~)."""
    n = S.n
    dim = S.dim
    tt_inv = jets.inv(theta_t, "theta~")
    psi_plus = -jets.matmul(jets.matmul(theta_t, psi_minus), tt_inv)
    theta = jets.matmul(jets.eye(n, dim, order) - jets.matmul(psi_minus, psi_minus), tt_inv)
    top = jets.concatenate([psi_plus, theta_t], axis=-1)
    bot = jets.concatenate([theta, psi_minus], axis=-1)
    Hhat = jets.concatenate([top, bot], axis=-2)
    P = S.frame(p, order)
    H = jets.matmul(jets.matmul(P, Hhat), jets.inv(P, "L/Lbar frame"))
    return _sym(jets.matmul(H.T, S.gamma.eval(p, order)))


def reconstruct_g(S: ParaHermitianStructure, components: FieldComponents,
                  name: str = "field", validate: bool = True) -> CompatibleField:
    """Field g from L-components (k, beta) given as (n, n) matrix fields."""
    def evaluator(p, order):
        G = S.pairing(p, order)
        k = components.k.eval(p, order)
        beta = components.beta.eval(p, order)
        theta_t = jets.matmul(jets.inv(k, "k"), G) * 2.0
        beta_m = jets.matmul(jets.matmul(theta_t.T, beta), theta_t) * 0.5
        psi_m = -jets.matmul(jets.matmul(jets.inv(theta_t, "theta~"), jets.inv(G.T, "G")), beta_m)
        return metric_from_blocks(S, p, order, theta_t, psi_m)
    g = TensorField(S.chart, (0, 2), evaluator, "symmetric", name="g")
    return CompatibleField(S, g, name, validate)


def reconstruct_from_minus(S: ParaHermitianStructure, g_minus: TensorField,
                           beta_minus: TensorField, name: str = "field",
                           validate: bool = True) -> CompatibleField:
    """Field g from (g_-, beta_-) on Lbar (ebar frame): theta~ = G^{-T} g_-."""
    def evaluator(p, order):
        G = S.pairing(p, order)
        GT_inv = jets.inv(G.T, "G")
        theta_t = jets.matmul(GT_inv, g_minus.eval(p, order))
        psi_m = -jets.matmul(jets.matmul(jets.inv(theta_t, "theta~"), GT_inv),
                             beta_minus.eval(p, order))
        return metric_from_blocks(S, p, order, theta_t, psi_m)
    g = TensorField(S.chart, (0, 2), evaluator, "symmetric", name="g")
    return CompatibleField(S, g, name, validate)


def matrix_field(S: ParaHermitianStructure, fn, symmetry=None, name=None) -> TensorField:
    """(n, n) matrix field on the chart from ``fn(x)`` (nested lists) or a constant."""
    n = S.n
    chart = S.chart
    if callable(fn):
        def evaluator(p, order):
            x = Jet.variables(p, order)
            return jets.as_jet(fn([x[..., i] for i in range(chart.dim)]), chart.dim, order)
    else:
        arr = np.asarray(fn, float)

        def evaluator(p, order):
            return Jet.constant(np.broadcast_to(arr, p.shape[:-1] + arr.shape), chart.dim, order)
    return TensorField(chart, (0, 2), evaluator, symmetry, name=name, shape=(n, n))


# -- checks -------------------------------------------------------------------------
def check_strong_compatibility(field: CompatibleField, points, tol: float = 1e-9) -> bool:
    crit = strong_compatibility_criteria(field, points)
    verdicts = {name: val < tol for name, val in crit.items()}
    if len(set(verdicts.values())) > 1:
        raise InconsistencyError(f"strong compatibility criteria disagree: {crit}")
    return next(iter(verdicts.values()))


def strong_compatibility_criteria(field: CompatibleField, points) -> dict[str, float]:
    pts = np.asarray(points, float)
    b = field.blocks(pts, 0)
    E = field.S.L_frame.values(pts)
    Eb = field.S.Lbar_frame.values(pts)
    g = field.g.values(pts)
    F = field.S.F.values(pts)
    H = field.H.values(pts)
    return {
        "g(L,Lbar)": max_abs(np.swapaxes(E, -1, -2) @ g @ Eb),
        "psi_plus": max_abs(b.psi_plus.value),
        "psi_minus": max_abs(b.psi_minus.value),
        "FH+HF": max_abs(F @ H + H @ F),
    }


def verify_field(field: CompatibleField, points, tol: float = 1e-10, seed: int = 0) -> Report:
    pts = np.asarray(points, float)
    S = field.S
    n, dim = S.n, S.dim
    I = np.eye(dim)
    In = np.eye(n)
    H = field.H.values(pts)
    g = field.g.values(pts)
    gam = S.gamma.values(pts)
    HT = np.swapaxes(H, -1, -2)
    r = Report(field.name)
    r.add("H_squared", ANCHORS["H2"], max_abs(H @ H - I), tol)
    r.add("g_from_H", ANCHORS["gH"], max_abs(g - HT @ gam), tol)
    r.add("g_H_invariant", ANCHORS["gHH"], max_abs(HT @ g @ H - g), tol)
    r.add("gamma_H_invariant", ANCHORS["gamHH"], max_abs(HT @ gam @ H - gam), tol)
    b = field.blocks(pts, 0)
    pp, pm, th, tt, G = (b.psi_plus.value, b.psi_minus.value, b.theta.value,
                         b.theta_t.value, b.G.value)
    r.add("product_1", ANCHORS["prod1"], max_abs(pp @ pp + tt @ th - In), tol)
    r.add("product_2", ANCHORS["prod2"], max_abs(pm @ pm + th @ tt - In), tol)
    r.add("product_3", ANCHORS["prod3"], max_abs(pp @ tt + tt @ pm), tol)
    r.add("product_4", ANCHORS["prod4"], max_abs(pm @ th + th @ pp), tol)
    r.add("psi_transposed", ANCHORS["transp"], max_abs(np.swapaxes(pp, -1, -2) @ G - G @ pm), tol)
    Vp = field.V_frame(+1).values(pts)
    Vm = field.V_frame(-1).values(pts)
    VpT, VmT = np.swapaxes(Vp, -1, -2), np.swapaxes(Vm, -1, -2)
    r.add("g_on_V", ANCHORS["ggamma"],
          max(max_abs(VpT @ (g - gam) @ Vp), max_abs(VmT @ (g + gam) @ Vm)), tol)
    r.add("V_orthogonal", ANCHORS["perp"], max(max_abs(VpT @ g @ Vm), max_abs(VpT @ gam @ Vm)), tol)
    r.add("V_eigen", ANCHORS["eigV"], max(max_abs(H @ Vp - Vp), max_abs(H @ Vm + Vm)), tol)
    k = field.k(pts).value
    beta = field.beta(pts).value
    r.add("k_beta_symmetry", ANCHORS["ksym"],
          max(max_abs(k - np.swapaxes(k, -1, -2)), max_abs(beta + np.swapaxes(beta, -1, -2))), tol)
    r.add("pullback_plus", ANCHORS["pull"], max_abs(VpT @ g @ Vp - k), tol)
    r.add("pullback_minus", ANCHORS["pull"], max_abs(VmT @ g @ Vm - k), tol)
    Eb = S.Lbar_frame.values(pts)
    smin = min(float(np.min(np.linalg.svd(np.concatenate([Eb, V], -1), compute_uv=False)[..., -1]))
               for V in (Vp, Vm))
    r.add("Lbar_cap_V_zero", ANCHORS["Lcap"], smin, 1e-8, kind="min")
    return r


# -- double orthonormal basis -------------------------------------------------------
@dataclass
class DoubleBasis:
    """Columns: e_i (p), e_u (q) spanning V+, f_i (p), f_u (q) spanning V-."""

    e_i: np.ndarray
    e_u: np.ndarray
    f_i: np.ndarray
    f_u: np.ndarray

    @property
    def p(self) -> int:
        return self.e_i.shape[1]

    @property
    def q(self) -> int:
        return self.e_u.shape[1]

    def matrix(self) -> np.ndarray:
        return np.concatenate([self.e_i, self.e_u, self.f_i, self.f_u], axis=1)


def gram_schmidt(vectors: np.ndarray, gram: np.ndarray, tol: float = 1e-10):
    """Signature-aware Gram-Schmidt for a nondegenerate symmetric form.

    ``vectors`` are columns.  Each step pivots on the largest |form(v,v)|; if
    every remaining vector is numerically null, two of them are combined.
    Returns (positive columns, negative columns).
    """
    vs = [vectors[:, i].astype(float) for i in range(vectors.shape[1])]
    scale = max(1.0, float(np.max(np.abs(gram))) * max(float(np.max(np.abs(vectors))), 1.0) ** 2)
    pos, neg = [], []
    while vs:
        norms = [float(v @ gram @ v) for v in vs]
        i = int(np.argmax(np.abs(norms)))
        if abs(norms[i]) < tol * scale:
            best, pair = 0.0, None
            for a in range(len(vs)):
                for c in range(a + 1, len(vs)):
                    val = abs(float(vs[a] @ gram @ vs[c]))
                    if val > best:
                        best, pair = val, (a, c)
            if pair is None or best < tol * scale:
                raise SignatureError("numerically null subspace in Gram-Schmidt")
            a, c = pair
            sgn = np.sign(float(vs[a] @ gram @ vs[c]))
            vs[a] = vs[a] + sgn * vs[c]
            continue
        v = vs.pop(i)
        s = np.sign(norms[i])
        e = v / np.sqrt(abs(norms[i]))
        vs = [w - s * float(w @ gram @ e) * e for w in vs]
        (pos if s > 0 else neg).append(e)
    dim = vectors.shape[0]
    return (np.array(pos).T.reshape(dim, len(pos)), np.array(neg).T.reshape(dim, len(neg)))


def double_orthonormal_basis(field: CompatibleField, p, tol: float = 1e-10) -> DoubleBasis:
    p = np.asarray(p, float)
    gam = field.S.gamma.values(p)
    e_i, e_u = gram_schmidt(field.V_frame(+1).values(p), gam, tol)
    f_u, f_i = gram_schmidt(field.V_frame(-1).values(p), gam, tol)
    return DoubleBasis(e_i, e_u, f_i, f_u)


def double_basis_residual(field: CompatibleField, basis: DoubleBasis, p) -> float:
    """Max deviation from the sign relations of a double orthonormal basis."""
    p = np.asarray(p, float)
    gam = field.S.gamma.values(p)
    g = field.g.values(p)
    B = basis.matrix()
    pp, qq = basis.p, basis.q
    target_g = np.diag([1.0] * pp + [-1.0] * qq + [1.0] * pp + [-1.0] * qq)
    target_gamma = np.diag([1.0] * pp + [-1.0] * qq + [-1.0] * pp + [1.0] * qq)
    return max(max_abs(B.T @ g @ B - target_g), max_abs(B.T @ gam @ B - target_gamma))


def random_opq(p: int, q: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """Random element of O(p,q) preserving diag(I_p, -I_q), via the exponential map."""
    eta = np.diag([1.0] * p + [-1.0] * q)
    A = rng.normal(scale=scale, size=(p + q, p + q))
    A = A - A.T
    M = scipy.linalg.expm(eta @ A)
    if rng.random() < 0.5 and p > 0:
        M = M @ np.diag([-1.0] + [1.0] * (p + q - 1))
    return M


def change_double_basis(basis: DoubleBasis, A: np.ndarray, B: np.ndarray) -> DoubleBasis:
    """Apply (A, B) in O(p,q) x O(p,q): A mixes (e_i, e_u), B mixes (f_i, f_u).

    B is taken in O(p,q) with respect to diag(I_p, -I_q) for the g-signature
    of (f_i, f_u), which matches the g-signature of V+.
    """
    pp = basis.p
    E = np.concatenate([basis.e_i, basis.e_u], axis=1) @ A
    F = np.concatenate([basis.f_i, basis.f_u], axis=1) @ B
    return DoubleBasis(E[:, :pp], E[:, pp:], F[:, :pp], F[:, pp:])
