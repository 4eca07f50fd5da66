"""Hamiltonian fields, Poisson brackets and reduction via a submanifold.

Conventions: ``flat_omega(X) = i(X) omega`` has components ``omega^T X`` and
``sharp_omega`` is its inverse, so ``i(X_f) omega = df`` reads
``X_f = omega^{-T} df``; the Poisson bracket is ``{f,h} = omega(X_h, X_f)``.

A submanifold ``N`` is given by a parameterization ``iota: U -> M`` on its
own (possibly odd-dimensional) chart, optionally with a projection
``p: N -> Q`` to a chart of the reduced space, a local section
``sigma: Q -> N`` and vector fields on ``U`` spanning ``K = ann(iota* omega)``
(the orbit frame).  Reduced tensors on ``Q`` are read off the horizontal lift
``H`` of the coordinate frame of ``Q`` into ``K' = K^{perp}``, which solves
``[dp; K^T m_N] H = [Id; 0]`` for the pulled-back metric ``m_N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from . import jets
from .affine import levi_civita, levi_civita_christoffel
from .chartcalc import (Chart, TensorField, d_components, interior_product, lie_bracket,
                        lie_derivative, metric_apply)
from .jets import Jet
from .report import Report, max_abs

__all__ = [
    "ANCHORS", "NotHamiltonianError", "RankJumpError", "NotProjectableError",
    "AlmostSymplecticManifold", "EmbeddedSubmanifold", "HamiltonianField",
    "hamiltonian_vector_field", "poisson_bracket", "poisson_checks", "KernelData",
    "reduction_kernel", "verify_reduction_hypotheses", "ReducedTensors", "reduced_tensors",
    "principal_angle_residual",
]

ANCHORS = {
    "ham": "i(X_f) omega = df",
    "ham_lie": "L_(X_f) omega = 0",
    "leibniz": "X_(fh) = f X_h + h X_f",
    "poisson_anti": "{f,h} = -{h,f}",
    "poisson_field": "i([X_f,X_h]) omega = d{f,h}",
    "rank": "rank(iota* omega) = 2r constant on N",
    "kernel": "K = TN cap T^(perp omega) N = ann(iota* omega)",
    "invol": "[K, K] subset K",
    "autom": "L_X iota* omega = 0 for X in K",
    "kpk": "sharp_omega o flat_gamma = -+ sharp_gamma o flat_omega",
    "kprime": "K'^(perp gamma) = K'^(perp omega)",
    "Finv": "F K' = K'",
    "nondeg": "g_N, g_K nondegenerate",
    "normal": "K^(perp g) cap TN = K'",
    "dpK": "dp(K) = 0",
    "submersion": "rank dp = 2r",
    "pullback": "iota* omega = p* varpi",
    "projectable": "varpi, lambda, mu agree on preimages of one point of Q",
    "lc": "nabla^lambda_[X] [Y] = [pr_K' nabla_X Y]",
    "dvarpi": "d varpi = 0",
    "compat": "(sharp_mu o flat_lambda)^2 = Id",
    "reducedF": "(sharp_varpi o flat_lambda)^2 = Id",
    "immersion": "rank d iota = dim N",
    "lam_sym": "lambda(X,Y) = lambda(Y,X)",
    "mu_sym": "mu(X,Y) = mu(Y,X)",
}


class NotHamiltonianError(ValueError):
    """i(X) omega = df is solvable but L_X omega != 0."""


class RankJumpError(ValueError):
    """The pulled-back form does not have constant rank on the samples."""


class NotProjectableError(ValueError):
    """Reduced tensors differ between preimages of the same point of Q."""


def _rank(mat: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    s = np.linalg.svd(mat, compute_uv=False)
    scale = np.maximum(s[..., :1], 1.0)
    return np.sum(s > rtol * scale, axis=-1)


def _nullspace(mat: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis (columns) of the ``dim`` smallest right singular directions."""
    _, _, vt = np.linalg.svd(mat)
    return vt[mat.shape[-1] - dim:].T if dim else np.zeros((mat.shape[-1], 0))


def principal_angle_residual(A: np.ndarray, B: np.ndarray) -> float:
    """Largest sine of the principal angles between span(A) and span(B)."""
    if A.shape[1] != B.shape[1]:
        return 1.0
    if A.shape[1] == 0:
        return 0.0
    return float(np.max(np.sin(scipy.linalg.subspace_angles(A, B))))


def _rel_min_sv(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 1.0
    s = np.linalg.svd(mat, compute_uv=False)
    return float(s[-1] / max(s[0], 1.0))


# -- manifolds -------------------------------------------------------------------------
@dataclass
class AlmostSymplecticManifold:
    """A chart with a 2-form omega and optional metrics gamma (structure) and g (field)."""

    chart: Chart
    omega: TensorField
    gamma: Optional[TensorField] = None
    g: Optional[TensorField] = None
    rank: Optional[int] = None
    name: str = "M"

    def __post_init__(self):
        if self.omega.valence != (0, 2):
            raise ValueError("omega must be a (0,2) field")
        if self.rank is None:
            self.rank = self.chart.dim

    @classmethod
    def from_model(cls, model) -> "AlmostSymplecticManifold":
        S = model.structure
        g = model.field.g if model.field is not None else None
        return cls(S.chart, S.omega, S.gamma, g, name=model.name)

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        return self.chart.sample(np.random.default_rng(seed), n)

    @property
    def nondegenerate(self) -> bool:
        return self.rank == self.chart.dim

    def check(self, points, tol: float = 1e-10) -> Report:
        w = self.omega.values(points)
        rep = Report(self.name)
        rep.add("omega_antisymmetric", "omega(X,Y) = -omega(Y,X)", max_abs(w + np.swapaxes(w, -1, -2)), tol)
        ranks = _rank(w)
        rep.add("declared_rank", ANCHORS["rank"], max_abs(ranks - self.rank), 0.5)
        return rep


def _coordinate_map(fn: Callable, dim: int) -> Callable[[np.ndarray, int], Jet]:
    def evaluate(p, order):
        x = Jet.variables(np.asarray(p, float), order)
        return jets.as_jet(fn([x[..., i] for i in range(dim)]), dim, order)
    return evaluate


class EmbeddedSubmanifold:
    """Parameterized submanifold ``iota: U -> M`` with optional reduction data.

    ``embedding``, ``projection`` and ``section`` take the list of coordinate
    jets of their source chart and return nested lists of component
    expressions.  ``orbit_frame`` lists vector fields on ``U`` spanning K.
    """

    def __init__(self, chart: Chart, ambient: Chart, embedding: Callable,
                 projection: Optional[Callable] = None, quotient: Optional[Chart] = None,
                 section: Optional[Callable] = None,
                 orbit_frame: Optional[Sequence[TensorField]] = None, name: str = "N"):
        self.chart = chart
        self.ambient = ambient
        self.name = name
        self._embed = _coordinate_map(embedding, chart.dim)
        self._project = _coordinate_map(projection, chart.dim) if projection else None
        if section is not None and quotient is None:
            raise ValueError("a section needs the quotient chart")
        self._section = _coordinate_map(section, quotient.dim) if section else None
        self.quotient = quotient
        self.orbit_frame = list(orbit_frame) if orbit_frame is not None else None
        for X in self.orbit_frame or []:
            if X.chart is not chart or X.valence != (1, 0):
                raise ValueError("orbit frame fields must be vector fields on the parameter chart")

    def __repr__(self) -> str:
        return f"EmbeddedSubmanifold({self.name}, dim={self.dim} in {self.ambient.name})"

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def has_projection(self) -> bool:
        return self._project is not None

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        return self.chart.sample(np.random.default_rng(seed), n)

    # -- maps ---------------------------------------------------------------------------
    def embed(self, u, order: int = 0) -> Jet:
        return self._embed(self.chart.check(u), order)

    def points(self, u) -> np.ndarray:
        return self.embed(u, 0).value

    def jacobian(self, u, order: int = 0) -> Jet:
        """d iota as a (..., dim M, dim N) jet."""
        return self.embed(u, order + 1).grad()

    def project(self, u, order: int = 0) -> Jet:
        if self._project is None:
            raise ValueError(f"{self.name} has no projection")
        return self._project(self.chart.check(u), order)

    def dp(self, u, order: int = 0) -> Jet:
        return self.project(u, order + 1).grad()

    def section(self, q, order: int = 0) -> Jet:
        if self._section is None:
            raise ValueError(f"{self.name} has no section")
        return self._section(self.quotient.check(q), order)

    def orbit_matrix(self, u, order: int = 0) -> Optional[Jet]:
        """Orbit frame as a (..., dim N, k) jet, or None when not supplied."""
        if self.orbit_frame is None:
            return None
        if not self.orbit_frame:
            u = np.asarray(u, float)
            return Jet.zeros(u.shape[:-1] + (self.dim, 0), self.dim, order)
        return jets.stack([X.eval(u, order) for X in self.orbit_frame], axis=-1)

    # -- pullbacks -------------------------------------------------------------------------
    def ambient_jet(self, T: TensorField, u, order: int = 0) -> Jet:
        """Components of an ambient field at iota(u) as a jet in the parameters."""
        inner = self.embed(u, order)
        return T.eval(inner.value, order).compose(inner)

    def pullback_jet(self, T: TensorField, u, order: int = 0) -> Jet:
        r, s = T.valence
        if r:
            raise ValueError("only covariant tensors pull back")
        out = self.ambient_jet(T, u, order)
        J = self.jacobian(u, order)
        for _ in range(s):
            # contract the first remaining ambient slot, append the N slot
            out = jets.contract("...a" + "bcd"[:s - 1] + ",...az->..." + "bcd"[:s - 1] + "z", out, J)
        return out

    def pullback(self, T: TensorField) -> TensorField:
        s = T.valence[1]
        return TensorField(self.chart, (0, s), lambda u, order: self.pullback_jet(T, u, order),
                           T.symmetry, name=f"iota*{T.name or 'T'}")

    def push(self, X: TensorField) -> TensorField:
        """Ambient components d iota(X) as a field on the parameter chart."""
        def evaluator(u, order):
            return jets.matvec(self.jacobian(u, order), X.eval(u, order))
        return TensorField(self.chart, (1, 0), evaluator, shape=(self.ambient.dim,))

    def flow(self, u0, t: float, weights=None, rtol: float = 1e-12) -> np.ndarray:
        """Follow the orbit frame combination sum_a w_a X_a for time ``t``."""
        if not self.orbit_frame:
            return np.array(u0, float)
        w = np.ones(len(self.orbit_frame)) if weights is None else np.asarray(weights, float)

        def rhs(_, y):
            return sum(wa * X.values(y) for wa, X in zip(w, self.orbit_frame))
        sol = solve_ivp(rhs, (0.0, t), np.asarray(u0, float), method="DOP853",
                        rtol=rtol, atol=rtol)
        if not sol.success:
            raise RuntimeError(f"orbit flow failed: {sol.message}")
        return sol.y[:, -1]

    def immersion_residual(self, points) -> float:
        """Smallest relative singular value of d iota over the samples."""
        J = self.jacobian(points).value
        return min(_rel_min_sv(j) for j in J.reshape((-1,) + J.shape[-2:]))


# -- Hamiltonian vector fields ------------------------------------------------------------
@dataclass
class HamiltonianField:
    field: TensorField
    residual: float
    lie_residual: float
    tol: float

    @property
    def hamiltonian(self) -> bool:
        return self.residual <= self.tol and self.lie_residual <= self.tol


def _default_points(M: AlmostSymplecticManifold, points):
    return M.sample(16) if points is None else np.asarray(points, float)


def _sharp_omega_field(M: AlmostSymplecticManifold, alpha: TensorField) -> TensorField:
    def evaluator(p, order):
        w = M.omega.eval(p, order)
        return jets.matvec(jets.inv(w.T, "omega"), alpha.eval(p, order))
    return TensorField(M.chart, (1, 0), evaluator)


def hamiltonian_vector_field(M: AlmostSymplecticManifold, f: TensorField, points=None,
                             tol: float = 1e-9, strict: bool = True) -> HamiltonianField:
    """Solve i(X) omega = df and verify L_X omega = 0 at the sample points.

    Raises :class:`jets.DegenerateError` when omega is singular and, with
    ``strict``, :class:`NotHamiltonianError` when the Lie derivative does not
    vanish (f is then not a Hamiltonian function of the almost symplectic form).
    """
    if f.valence != (0, 0):
        raise ValueError("a Hamiltonian function is a scalar field")
    pts = _default_points(M, points)
    df = TensorField(M.chart, (0, 1), lambda p, order: f.eval(p, order + 1).grad(), name="df")
    X = _sharp_omega_field(M, df).renamed(f"X_{f.name or 'f'}")
    res = max_abs(interior_product(X, M.omega).values(pts) - df.values(pts))
    lie = max_abs(lie_derivative(X, M.omega).values(pts))
    out = HamiltonianField(X, res, lie, tol)
    if strict and not out.hamiltonian:
        raise NotHamiltonianError(
            f"not Hamiltonian in the almost symplectic sense: |L_X omega| = {lie:.3e}")
    return out


def poisson_bracket(M: AlmostSymplecticManifold, f: TensorField, h: TensorField,
                    points=None, tol: float = 1e-9) -> TensorField:
    """{f,h} = omega(X_h, X_f) for Hamiltonian functions f, h."""
    Xf = hamiltonian_vector_field(M, f, points, tol).field
    Xh = hamiltonian_vector_field(M, h, points, tol).field
    return metric_apply(M.omega, Xh, Xf).renamed("{f,h}")


def poisson_checks(M: AlmostSymplecticManifold, f: TensorField, h: TensorField, points,
                   tol: float = 1e-9) -> Report:
    """Antisymmetry, the Hamiltonian field of {f,h} and the Leibniz rule for X_(fh)."""
    pts = np.asarray(points, float)
    Xf = hamiltonian_vector_field(M, f, pts, tol).field
    Xh = hamiltonian_vector_field(M, h, pts, tol).field
    fh = poisson_bracket(M, f, h, pts, tol)
    hf = poisson_bracket(M, h, f, pts, tol)
    rep = Report(M.name)
    rep.add("poisson_antisymmetry", ANCHORS["poisson_anti"], max_abs(fh.values(pts) + hf.values(pts)), tol)
    lhs = interior_product(lie_bracket(Xf, Xh), M.omega).values(pts)
    rhs = fh.eval(pts, 1).grad().value
    rep.add("poisson_hamiltonian_field", ANCHORS["poisson_field"], max_abs(lhs - rhs), tol)
    prod = f * h
    Xfh = hamiltonian_vector_field(M, prod, pts, tol, strict=False).field
    lhs = Xfh.values(pts)
    rhs = f.values(pts)[..., None] * Xh.values(pts) + h.values(pts)[..., None] * Xf.values(pts)
    rep.add("hamiltonian_leibniz", ANCHORS["leibniz"], max_abs(lhs - rhs), tol)
    rep.values["bracket_max"] = max_abs(fh.values(pts))
    return rep


# -- reduction kernel -----------------------------------------------------------------------
@dataclass
class KernelData:
    """Pointwise K = ann(iota* omega) and K' = K^(perp m_N) as column bases in U coordinates."""

    points: np.ndarray
    rank: int
    K: np.ndarray
    Kprime: Optional[np.ndarray]

    @property
    def dim_K(self) -> int:
        return self.K.shape[-1]


def _metric(M: AlmostSymplecticManifold, which: str) -> TensorField:
    m = getattr(M, which)
    if m is None:
        raise ValueError(f"{M.name} carries no metric {which!r}")
    return m


def reduction_kernel(M: AlmostSymplecticManifold, N: EmbeddedSubmanifold, points,
                     metric: Optional[str] = "gamma", rtol: float = 1e-9) -> KernelData:
    """K as the nullspace of the pulled-back form and K' as its metric complement in TN."""
    pts = np.atleast_2d(np.asarray(points, float))
    wN = N.pullback_jet(M.omega, pts).value
    ranks = _rank(wN, rtol)
    if np.any(ranks != ranks[0]):
        raise RankJumpError(f"not constant rank: iota* omega has ranks {sorted(set(ranks.tolist()))}")
    r2 = int(ranks[0])
    kdim = N.dim - r2
    K = np.stack([_nullspace(w, kdim) for w in wN])
    Kp = None
    if metric is not None and getattr(M, metric) is not None:
        mN = N.pullback_jet(_metric(M, metric), pts).value
        Kp = np.stack([_nullspace((m @ k).T, N.dim - kdim) if kdim else np.eye(N.dim)
                       for m, k in zip(mN, K)])
    return KernelData(pts, r2, K, Kp)


# -- hypotheses ---------------------------------------------------------------------------------
def _kpk_matrices(M: AlmostSymplecticManifold, x: np.ndarray):
    w = M.omega.values(x)
    gam = _metric(M, "gamma").values(x)
    A = np.linalg.solve(np.swapaxes(w, -1, -2), gam)   # sharp_omega o flat_gamma
    B = np.linalg.solve(gam, np.swapaxes(w, -1, -2))   # sharp_gamma o flat_omega
    return A, B


def _kprime_lift(N: EmbeddedSubmanifold, mN: Jet, Kj: Jet, dp: Jet) -> Jet:
    """Horizontal lift H (dim N x 2r) with dp H = Id and K^T m_N H = 0."""
    r2 = dp.shape[-2]
    rows = jets.concatenate([dp, jets.matmul(Kj.swapaxes(-1, -2), mN)], axis=-2)
    rhs = np.zeros(rows.shape[:-2] + (N.dim, r2))
    rhs[..., :r2, :] = np.eye(r2)
    return jets.solve(rows, Jet.constant(rhs, rows.dim, rows.order), "lift system [dp; K^T m_N]")


def _lie_bracket_residual(N: EmbeddedSubmanifold, u: np.ndarray) -> float:
    frame = N.orbit_frame or []
    K = N.orbit_matrix(u).value if frame else None
    worst = 0.0
    for a in range(len(frame)):
        for b in range(a + 1, len(frame)):
            br = lie_bracket(frame[a], frame[b]).values(u)
            for Ki, v in zip(K, br):
                coef, *_ = np.linalg.lstsq(Ki, v, rcond=None)
                worst = max(worst, float(np.max(np.abs(Ki @ coef - v))))
    return worst


def verify_reduction_hypotheses(M: AlmostSymplecticManifold, N: EmbeddedSubmanifold, points,
                                tol: float = 1e-8) -> Report:
    """Pointwise reduction hypotheses on the supplied K frame; never raises on failure."""
    pts = np.atleast_2d(np.asarray(points, float))
    rep = Report(f"{M.name} via {N.name}")
    wN = N.pullback_jet(M.omega, pts).value
    ranks = _rank(wN)
    rep.add("constant_rank", ANCHORS["rank"], float(ranks.max() - ranks.min()), 0.5)
    r2 = int(np.bincount(ranks).argmax())
    kdim = N.dim - r2
    rep.values["rank"] = r2
    rep.values["dim_K"] = kdim
    if N.quotient is not None:
        rep.add("declared_rank", ANCHORS["rank"], abs(r2 - N.quotient.dim), 0.5)
    rep.add("immersion", ANCHORS["immersion"], N.immersion_residual(pts), tol, kind="min")

    if N.orbit_frame is None:
        K = np.stack([_nullspace(w, kdim) for w in wN])
    else:
        K = N.orbit_matrix(pts).value
        span = max(principal_angle_residual(k, _nullspace(w, kdim)) for k, w in zip(K, wN))
        rep.add("orbit_frame_spans_K", ANCHORS["kernel"], span, tol)
        Xs = N.orbit_frame
        wfield = N.pullback(M.omega)
        rep.add("K_involutive", ANCHORS["invol"], _lie_bracket_residual(N, pts), tol)
        lie = max((max_abs(lie_derivative(X, wfield).values(pts)) for X in Xs), default=0.0)
        rep.add("K_automorphisms", ANCHORS["autom"], lie, tol)
    rep.add("K_annihilates", ANCHORS["kernel"], max_abs(np.einsum("...ia,...ij->...aj", K, wN)), tol)

    J = N.jacobian(pts).value
    x = N.points(pts)
    # with omega nondegenerate, T^(perp omega) N subset TN iff dim K = codim N
    rep.values["coisotropic"] = bool(M.nondegenerate and kdim == M.chart.dim - N.dim)
    if M.gamma is not None:
        A, B = _kpk_matrices(M, x)
        r_minus = max_abs(A + B)
        r_plus = max_abs(A - B)
        rep.values["kpk_case"] = "para-Hermitian" if r_plus <= r_minus else "Hermitian"
        rep.add("condKpK", ANCHORS["kpk"], min(r_plus, r_minus), tol)
        gN = N.pullback_jet(M.gamma, pts).value
        rep.add("gamma_N_nondegenerate", ANCHORS["nondeg"], min(_rel_min_sv(m) for m in gN), tol, "min")
        gK = np.einsum("...ia,...ij,...jb->...ab", K, gN, K)
        rep.add("gamma_K_nondegenerate", ANCHORS["nondeg"], min(_rel_min_sv(m) for m in gK), tol, "min")
        Kp = np.stack([_nullspace((m @ k).T, N.dim - kdim) if kdim else np.eye(N.dim)
                       for m, k in zip(gN, K)])
        V = J @ Kp                                   # K' inside TM
        gam = M.gamma.values(x)
        w = M.omega.values(x)
        angle_kp = 0.0
        angle_f = 0.0
        for Vi, gi, wi, Ai in zip(V, gam, w, A):
            perp_g = scipy.linalg.null_space(Vi.T @ gi)
            perp_w = scipy.linalg.null_space(Vi.T @ wi)
            angle_kp = max(angle_kp, principal_angle_residual(perp_g, perp_w))
            angle_f = max(angle_f, principal_angle_residual(Vi, Ai @ Vi))
        rep.add("condKprime", ANCHORS["kprime"], angle_kp, tol)
        rep.add("F_invariant_Kprime", ANCHORS["Finv"], angle_f, tol)
        if M.g is not None:
            gg = N.pullback_jet(M.g, pts).value
            rep.add("g_N_nondegenerate", ANCHORS["nondeg"], min(_rel_min_sv(m) for m in gg), tol, "min")
            ggK = np.einsum("...ia,...ij,...jb->...ab", K, gg, K)
            rep.add("g_K_nondegenerate", ANCHORS["nondeg"], min(_rel_min_sv(m) for m in ggK), tol, "min")
            Kpg = np.stack([_nullspace((m @ k).T, N.dim - kdim) if kdim else np.eye(N.dim)
                            for m, k in zip(gg, K)])
            rep.add("same_normal_bundle", ANCHORS["normal"],
                    max(principal_angle_residual(a, b) for a, b in zip(Kp, Kpg)), tol)

    if N.has_projection:
        dp = N.dp(pts).value
        rep.add("dp_K", ANCHORS["dpK"], max_abs(dp @ K), tol)
        rep.add("submersion", ANCHORS["submersion"], min(_rel_min_sv(d) for d in dp), tol, "min")
    return rep


# -- reduced tensors ------------------------------------------------------------------------------
@dataclass
class ReducedTensors:
    """varpi, lambda, mu in the coordinates of Q at the projections ``q`` of the samples."""

    points: np.ndarray
    q: np.ndarray
    varpi: np.ndarray
    lam: Optional[np.ndarray]
    mu: Optional[np.ndarray]
    report: Report = dc_field(repr=False)


def _sandwich(H: Jet, m: Jet) -> Jet:
    return jets.matmul(jets.matmul(H.swapaxes(-1, -2), m), H)


def _require_frame(N: EmbeddedSubmanifold) -> None:
    if N.orbit_frame is None:
        raise ValueError(f"{N.name} needs an orbit frame spanning K for reduction")
    if not N.has_projection:
        raise ValueError(f"{N.name} needs a projection to the quotient chart")


def _lift(M, N, which: str, u, order: int) -> tuple[Jet, Jet]:
    mN = N.pullback_jet(_metric(M, which), u, order)
    H = _kprime_lift(N, mN, N.orbit_matrix(u, order), N.dp(u, order))
    return H, mN


def _reduced_jets(M, N, u, order: int) -> dict[str, Jet]:
    """Reduced tensors as jets in the parameters of N."""
    wN = N.pullback_jet(M.omega, u, order)
    out = {}
    if M.gamma is not None:
        H, gN = _lift(M, N, "gamma", u, order)
        out["lam"] = _sandwich(H, gN)
    else:
        # without a metric any complement works for varpi; take the Euclidean one
        Kj = N.orbit_matrix(u, order)
        eye = Jet.constant(np.broadcast_to(np.eye(N.dim), wN.shape), N.dim, order)
        H = _kprime_lift(N, eye, Kj, N.dp(u, order))
    out["varpi"] = _sandwich(H, wN)
    if M.g is not None:
        Hg, gg = _lift(M, N, "g", u, order)
        out["mu"] = _sandwich(Hg, gg)
    return out


def _downstairs(M, N, q, order: int) -> dict[str, Jet]:
    """Reduced tensors as jets in the coordinates of Q, through the section."""
    s = N.section(q, order)
    up = _reduced_jets(M, N, s.value, order)
    return {k: v.compose(s) for k, v in up.items()}


def _lc_residual(M, N, which: str, u: np.ndarray) -> tuple[float, float]:
    """Compare Gamma of the reduced metric with the projected ambient/intrinsic connections.

    Returns (ambient, intrinsic) maxima of |c^c_ab - Gamma^c_ab| where
    c^c_ab are the K'-components of nabla_(H_a) H_b.
    """
    metric = _metric(M, which)
    H, mN = _lift(M, N, which, u, 1)
    red = _sandwich(H, mN).truncate(0).value
    red_inv = np.linalg.inv(red)
    # downstairs Christoffels of the reduced metric at q = p(u)
    q = N.project(u).value
    red_q = _downstairs(M, N, q, 1)["lam" if which == "gamma" else "mu"]
    G_down = levi_civita_christoffel(red_q).value          # [c, a, b]

    # ambient: V_a = d iota H_a, W_ab = H_a(V_b) + Gamma(V_a, V_b)
    J = N.jacobian(u, 1)
    V = jets.matmul(J, H)                                    # (..., dim M, 2r) order 1
    dV = V.grad().value                                      # [k, b, i] = d_i V^k_b
    V0 = V.value
    H0 = H.truncate(0).value
    x = N.points(u)
    G_amb = levi_civita(metric).christoffel(x, 0).value      # [k, i, j]
    W = (np.einsum("...kbi,...ia->...kab", dV, H0)
         + np.einsum("...kij,...ia,...jb->...kab", G_amb, V0, V0))
    m_amb = metric.values(x)
    c_amb = np.einsum("...cd,...id,...ij,...jab->...cab", red_inv, V0, m_amb, W)

    # intrinsic: nabla^{m_N} on the parameter chart
    G_N = levi_civita_christoffel(mN).value                  # mN at order 1
    dH = H.grad().value                                      # [k, b, i]
    Wn = (np.einsum("...kbi,...ia->...kab", dH, H0)
          + np.einsum("...kij,...ia,...jb->...kab", G_N, H0, H0))
    c_int = np.einsum("...cd,...kd,...kl,...lab->...cab", red_inv, H0, mN.truncate(0).value, Wn)
    return max_abs(c_amb - G_down), max_abs(c_int - G_down)


def reduced_tensors(M: AlmostSymplecticManifold, N: EmbeddedSubmanifold, points,
                    tol: float = 1e-8, lc_tol: float = 1e-6, flow_time: float = 0.7,
                    strict: bool = True) -> ReducedTensors:
    """Push iota* omega, gamma and g restricted to K' down to Q and verify the reduction.

    Raises ``ValueError`` when dp does not kill K and, with ``strict``,
    :class:`NotProjectableError` when preimages of one point disagree.
    """
    _require_frame(N)
    pts = np.atleast_2d(np.asarray(points, float))
    rep = Report(f"reduce {M.name} via {N.name}")
    K = N.orbit_matrix(pts).value
    dp = N.dp(pts).value
    dpk = max_abs(dp @ K)
    if dpk > tol:
        raise ValueError(f"p is not constant on the K-leaves: |dp(K)| = {dpk:.3e}")
    rep.add("dp_K", ANCHORS["dpK"], dpk, tol)

    red = {k: v.value for k, v in _reduced_jets(M, N, pts, 0).items()}
    q = N.project(pts).value
    wN = N.pullback_jet(M.omega, pts).value
    back = np.einsum("...ai,...ab,...bj->...ij", dp, red["varpi"], dp)
    rep.add("pullback_varpi", ANCHORS["pullback"], max_abs(wN - back), tol)

    # agreement across preimages: the orbit flow and the section
    worst = 0.0
    for k, u in enumerate(pts):
        others = []
        if N.orbit_frame:
            others.append(N.flow(u, flow_time * (1 + 0.3 * (k % 3))))
        if N._section is not None:
            others.append(N.section(q[k]).value)
        for v in others:
            worst = max(worst, max_abs(N.project(v).value - q[k]))
            other = _reduced_jets(M, N, v, 0)
            for name, val in other.items():
                worst = max(worst, max_abs(val.value - red[name][k]))
    rep.add("projectable", ANCHORS["projectable"], worst, tol)
    if strict and worst > tol:
        raise NotProjectableError(f"not projectable: preimages disagree by {worst:.3e}")

    varpi = red["varpi"]
    rep.add("varpi_nondegenerate", ANCHORS["pullback"],
            min(_rel_min_sv(w) for w in varpi.reshape((-1,) + varpi.shape[-2:])), tol, "min")
    lam = red.get("lam")
    mu = red.get("mu")
    if lam is not None:
        Fq = np.linalg.solve(np.swapaxes(varpi, -1, -2), lam)
        eye = np.eye(lam.shape[-1])
        rep.add("reduced_F", ANCHORS["reducedF"], max_abs(Fq @ Fq - eye), tol)
        rep.add("lambda_symmetric", ANCHORS["lam_sym"], max_abs(lam - np.swapaxes(lam, -1, -2)), tol)
    if mu is not None and lam is not None:
        C = np.linalg.solve(mu, lam)
        rep.add("mu_compatible", ANCHORS["compat"], max_abs(C @ C - np.eye(mu.shape[-1])), tol)
        rep.add("mu_symmetric", ANCHORS["mu_sym"], max_abs(mu - np.swapaxes(mu, -1, -2)), tol)

    if N._section is not None:
        down = _downstairs(M, N, q, 1)
        dv = d_components(down["varpi"], 2).value
        rep.add("d_varpi", ANCHORS["dvarpi"], max_abs(dv), tol)
        if M.gamma is not None:
            amb, intr = _lc_residual(M, N, "gamma", pts)
            rep.add("levi_civita_projection", ANCHORS["lc"], amb, lc_tol)
            rep.add("levi_civita_projection_intrinsic", ANCHORS["lc"], intr, lc_tol)
    return ReducedTensors(pts, q, varpi, lam, mu, rep)
