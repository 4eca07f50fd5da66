"""Built-in para-Hermitian models and their compatible fields.

Every constructor returns a :class:`Model` holding the structure, the field
(when the model carries one) and the flags the construction is expected to
produce (para-Kähler or not, strongly compatible or not).

* ``flat_para_kahler``: W + W* with gamma = dx^i (.) dy_i, omega = -dx^i ^ dy_i.
* ``group_double``: G x G for a Lie algebra realized by left-invariant frames.
* ``tangent_sasaki``: TN with horizontal/vertical splitting and the Sasaki metric.
* ``projective_model``: the quotient S/R+ of the slice x.y = 1, on an explicit
  chart fixed by the gauge s(x, x) = 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets
from .affine import levi_civita_christoffel, riemann_from_christoffel
from .chartcalc import Chart, Frame, TensorField
from .fieldmetric import (CompatibleField, FieldComponents, matrix_field, reconstruct_from_minus,
                          reconstruct_g)
from .jets import Jet
from .parastructure import ParaHermitianStructure
from .reduction import AlmostSymplecticManifold, EmbeddedSubmanifold

__all__ = [
    "Model", "LieAlgebraData", "abelian_algebra", "heisenberg_algebra", "affine_algebra",
    "flat_para_kahler", "group_double", "tangent_sasaki", "projective_model",
    "projective_slice_metric", "example52_manifold", "ReductionInstance", "circle_reduction",
    "MODELS", "build_model",
]


@dataclass
class Model:
    name: str
    structure: ParaHermitianStructure
    field: Optional[CompatibleField] = None
    para_kahler: Optional[bool] = None
    strongly_compatible: Optional[bool] = None
    params: dict = dc_field(default_factory=dict)
    extras: dict = dc_field(default_factory=dict)

    @property
    def chart(self) -> Chart:
        return self.structure.chart

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        return self.chart.sample(np.random.default_rng(seed), n)


# -- jet helpers ---------------------------------------------------------------------
def _block(a: Jet, b: Jet, c: Jet, d: Jet) -> Jet:
    return jets.concatenate([jets.concatenate([a, b], axis=-1),
                             jets.concatenate([c, d], axis=-1)], axis=-2)


def _zeros(batch, shape, dim, order) -> Jet:
    return Jet.zeros(tuple(batch) + tuple(shape), dim, order)


def _const(batch, arr, dim, order) -> Jet:
    arr = np.asarray(arr, float)
    return Jet.constant(np.broadcast_to(arr, tuple(batch) + arr.shape), dim, order)


class _PointMemo:
    """Small per-point cache for shared intermediate jets of a model."""

    def __init__(self, fn, size: int = 4):
        from .fieldmetric import _Memo
        self._memo = _Memo(lambda p, o: _Entry(fn(p, o), o), size)

    def __call__(self, p, order):
        return self._memo(p, order).data


class _Entry:
    def __init__(self, data: dict, order: int):
        self.data = data
        self.order = order

    def truncate(self, order):
        return _Entry({k: v.truncate(order) for k, v in self.data.items()}, order)


# -- flat model ----------------------------------------------------------------------
def _flat_structure(n: int, name: str = "flat") -> ParaHermitianStructure:
    dim = 2 * n
    names = [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
    chart = Chart(dim, names, name=name)
    I, Z = np.eye(n), np.zeros((n, n))
    F = np.block([[I, Z], [Z, -I]])
    gamma = np.block([[Z, I], [I, Z]])
    E = np.vstack([I, Z])
    Eb = np.vstack([Z, I])
    return ParaHermitianStructure(
        chart,
        TensorField.constant(chart, (1, 1), F, name="F"),
        TensorField.constant(chart, (0, 2), gamma, "symmetric", name="gamma"),
        Frame(chart, n, lambda p, o: _const(p.shape[:-1], E, dim, o), name="L"),
        Frame(chart, n, lambda p, o: _const(p.shape[:-1], Eb, dim, o), name="Lbar"),
        name,
    )


def flat_para_kahler(n: int = 2, k=None, beta=None) -> Model:
    """Flat para-Kähler space R^{2n} with a field of L-components (k, beta).

    ``k`` and ``beta`` are constant (n, n) arrays or callables of the
    coordinate list returning nested lists; defaults are k = 2 Id, beta = 0.
    """
    S = _flat_structure(n, f"flat_para_kahler(n={n})")
    k = 2.0 * np.eye(n) if k is None else k
    beta = np.zeros((n, n)) if beta is None else beta
    if not callable(k):
        k = np.asarray(k, float)
        if np.any(np.abs(k - k.T) > 1e-12):
            raise ValueError("k must be symmetric")
        if abs(np.linalg.det(k)) < 1e-12:
            raise jets.DegenerateError("k is degenerate")
    if not callable(beta):
        beta = np.asarray(beta, float)
        if np.any(np.abs(beta + beta.T) > 1e-12):
            raise ValueError("beta must be antisymmetric")
    comps = FieldComponents(matrix_field(S, k, "symmetric", "k"),
                            matrix_field(S, beta, "antisymmetric", "beta"))
    fld = reconstruct_g(S, comps, name="field")
    strong = None
    if not callable(beta):
        strong = bool(np.all(beta == 0))
    return Model(S.name, S, fld, para_kahler=True, strongly_compatible=strong,
                 params={"n": n})


# -- Lie group doubles ---------------------------------------------------------------
@dataclass
class LieAlgebraData:
    """Structure constants c[i, j, k] = c^i_jk with [X_j, X_k] = c^i_jk X_i.

    ``frame(u)`` realizes the left-invariant fields X_1..X_n in coordinates
    ``u`` of the group: it returns a list of n vectors, each a list of n
    component expressions.
    """

    name: str
    c: np.ndarray
    mu: np.ndarray
    frame: Callable[[Sequence], list]

    def __post_init__(self):
        self.c = np.asarray(self.c, float)
        self.mu = np.asarray(self.mu, float)
        n = self.n
        if self.c.shape != (n, n, n) or self.mu.shape != (n, n):
            raise ValueError("structure constants must be (n,n,n) and mu (n,n)")
        if np.max(np.abs(self.c + np.swapaxes(self.c, 1, 2))) > 1e-12:
            raise ValueError("structure constants must be antisymmetric in the lower indices")
        if self.jacobi_residual() > 1e-12:
            raise ValueError("structure constants violate the Jacobi identity")
        if np.max(np.abs(self.mu - self.mu.T)) > 1e-12 or abs(np.linalg.det(self.mu)) < 1e-12:
            raise ValueError("mu must be symmetric and nondegenerate")

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def abelian(self) -> bool:
        return bool(np.all(self.c == 0))

    def jacobi_residual(self) -> float:
        c = self.c
        # sum over cyclic (i, j, k) of [[X_i, X_j], X_k]
        t = np.einsum("mij,lmk->lijk", c, c)
        cyc = t + np.transpose(t, (0, 2, 3, 1)) + np.transpose(t, (0, 3, 1, 2))
        return float(np.max(np.abs(cyc))) if c.size else 0.0

    def frame_jet(self, u: Sequence[Jet], dim: int, order: int) -> Jet:
        """(n, n) jet whose columns are the X_a in group coordinates."""
        out = jets.as_jet(self.frame(list(u)), dim, order).T
        return out.broadcast_to(u[0].shape + (self.n, self.n))


def abelian_algebra(n: int = 2, mu=None) -> LieAlgebraData:
    mu = np.eye(n) if mu is None else mu
    return LieAlgebraData(f"abelian{n}", np.zeros((n, n, n)), mu,
                          lambda u: [[1.0 if i == a else 0.0 for i in range(n)] for a in range(n)])


def heisenberg_algebra(mu=None) -> LieAlgebraData:
    """X1 = d_a, X2 = d_b + a d_c, X3 = d_c, so [X1, X2] = X3."""
    c = np.zeros((3, 3, 3))
    c[2, 0, 1], c[2, 1, 0] = 1.0, -1.0
    mu = np.eye(3) if mu is None else mu
    return LieAlgebraData("heisenberg", c, mu,
                          lambda u: [[1.0, 0.0, 0.0], [0.0, 1.0, u[0]], [0.0, 0.0, 1.0]])


def affine_algebra(mu=None) -> LieAlgebraData:
    """X1 = d_a, X2 = exp(a) d_b, so [X1, X2] = X2."""
    c = np.zeros((2, 2, 2))
    c[1, 0, 1], c[1, 1, 0] = 1.0, -1.0
    mu = np.eye(2) if mu is None else mu
    return LieAlgebraData("affine", c, mu, lambda u: [[1.0, 0.0], [0.0, jets.exp(u[0])]])


ALGEBRAS = {"abelian": abelian_algebra, "heisenberg": heisenberg_algebra, "affine": affine_algebra}


def group_double(alg: LieAlgebraData) -> Model:
    """M = G x G with F = +-1 on the two factors and the left-invariant metrics.

    gamma = mu_ij (w1^i w2^j + w2^i w1^j), g = mu_ij (w1^i w1^j + w2^i w2^j);
    the fundamental form gamma(X, FY) equals -mu_ij w1^i ^ w2^j.
    """
    n = alg.n
    dim = 2 * n
    names = [f"u{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)]
    chart = Chart(dim, names, name=f"double({alg.name})")
    mu = alg.mu

    def data(p, order):
        x = Jet.variables(p, order)
        E1 = alg.frame_jet([x[..., i] for i in range(n)], dim, order)
        E2 = alg.frame_jet([x[..., n + i] for i in range(n)], dim, order)
        T1, T2 = jets.inv(E1, "group frame"), jets.inv(E2, "group frame")
        M = _const(p.shape[:-1], mu, dim, order)
        return {"E1": E1, "E2": E2, "T1": T1, "T2": T2, "mu": M}
    memo = _PointMemo(data)
    batch0 = lambda p: p.shape[:-1]

    def gamma(p, order):
        d = memo(p, order)
        off = jets.matmul(jets.matmul(d["T1"].T, d["mu"]), d["T2"])
        Z = _zeros(batch0(p), (n, n), dim, order)
        return _block(Z, off, off.T, Z)

    def metric(p, order):
        d = memo(p, order)
        a = jets.matmul(jets.matmul(d["T1"].T, d["mu"]), d["T1"])
        b = jets.matmul(jets.matmul(d["T2"].T, d["mu"]), d["T2"])
        Z = _zeros(batch0(p), (n, n), dim, order)
        return _block(a, Z, Z, b)

    def L(p, order):
        return jets.concatenate([memo(p, order)["E1"], _zeros(batch0(p), (n, n), dim, order)], -2)

    def Lbar(p, order):
        return jets.concatenate([_zeros(batch0(p), (n, n), dim, order), memo(p, order)["E2"]], -2)

    F = np.diag([1.0] * n + [-1.0] * n)
    S = ParaHermitianStructure(
        chart, TensorField.constant(chart, (1, 1), F, name="F"),
        TensorField(chart, (0, 2), gamma, "symmetric", name="gamma"),
        Frame(chart, n, L, name="L"), Frame(chart, n, Lbar, name="Lbar"),
        name=f"group_double({alg.name})")

    def paper_omega(p, order):
        # mu_ij w1^i ^ w2^j as a full antisymmetric array
        d = memo(p, order)
        off = jets.matmul(jets.matmul(d["T1"].T, d["mu"]), d["T2"])
        Z = _zeros(batch0(p), (n, n), dim, order)
        return _block(Z, off, -off.T, Z)

    fld = CompatibleField(S, TensorField(chart, (0, 2), metric, "symmetric", name="g"),
                          name="field")
    extras = {"algebra": alg,
              "omega_expected": -TensorField(chart, (0, 2), paper_omega, "antisymmetric")}
    return Model(S.name, S, fld, para_kahler=alg.abelian, strongly_compatible=True,
                 params={"algebra": alg.name}, extras=extras)


# -- tangent bundle with the Sasaki metric -------------------------------------------
def _metric_jet(mu, xs, dim, order, batch):
    if callable(mu):
        return jets.as_jet(mu(xs), dim, order)
    return _const(batch, mu, dim, order)


def tangent_sasaki(base_dim: int = 2, mu=None, polar: bool = False,
                   check_flat: bool = True) -> Model:
    """TN with L = horizontal lifts, Lbar = vertical vectors, Sasaki field g.

    ``mu`` is a constant matrix or a callable of the base coordinates
    returning nested lists.  ``polar=True`` uses the flat metric
    dr^2 + r^2 dphi^2 on r > 0 (base_dim 2).  A non-flat mu only gives an
    almost para-Hermitian structure; a warning is emitted.
    """
    n = base_dim
    if polar:
        if n != 2:
            raise ValueError("polar coordinates need base_dim = 2")
        mu = lambda x: [[1.0, 0.0], [0.0, x[0] * x[0]]]
    mu = np.eye(n) if mu is None else mu
    dim = 2 * n
    names = [f"x{i + 1}" for i in range(n)] + [f"xd{i + 1}" for i in range(n)]
    lower = upper = slo = None
    if polar:
        lower = np.array([0.0] + [-np.inf] * (dim - 1))
        slo = np.array([0.5, -1.0, -1.0, -1.0])
    chart = Chart(dim, names, lower, upper, sample_lower=slo, name=f"TN(n={n})")

    def base_metric(p, order):
        x = Jet.variables(p, order)
        return _metric_jet(mu, [x[..., i] for i in range(n)], dim, order, p.shape[:-1])

    def data(p, order):
        Gam = levi_civita_christoffel(base_metric(p, order + 1), slice(0, n))
        x = Jet.variables(p, order)
        xd = x[..., n:]
        low = -jets.contract("...kij,...j->...ki", Gam, xd)
        I = _const(p.shape[:-1], np.eye(n), dim, order)
        Z = _zeros(p.shape[:-1], (n, n), dim, order)
        P = _block(I, Z, low, I)
        Q = jets.inv(P, "horizontal/vertical frame")
        M = base_metric(p, order)
        return {"P": P, "Q": Q, "mu": M, "Z": Z}
    memo = _PointMemo(data)

    def gamma(p, order):
        d = memo(p, order)
        inner = _block(d["Z"], d["mu"], d["mu"], d["Z"])
        return jets.matmul(jets.matmul(d["Q"].T, inner), d["Q"])

    def metric(p, order):
        d = memo(p, order)
        inner = _block(d["mu"], d["Z"], d["Z"], d["mu"])
        return jets.matmul(jets.matmul(d["Q"].T, inner), d["Q"])

    def F(p, order):
        d = memo(p, order)
        D = _const(p.shape[:-1], np.diag([1.0] * n + [-1.0] * n), dim, order)
        return jets.matmul(jets.matmul(d["P"], D), d["Q"])

    S = ParaHermitianStructure(
        chart, TensorField(chart, (1, 1), F, name="F"),
        TensorField(chart, (0, 2), gamma, "symmetric", name="gamma"),
        Frame(chart, n, lambda p, o: memo(p, o)["P"][..., :, :n], name="L"),
        Frame(chart, n, lambda p, o: memo(p, o)["P"][..., :, n:], name="Lbar"),
        name=f"tangent_sasaki(n={n})")
    fld = CompatibleField(S, TensorField(chart, (0, 2), metric, "symmetric", name="g"),
                          name="sasaki")
    flat = True
    if check_flat:
        pts = chart.sample(np.random.default_rng(0), 8)
        R = riemann_from_christoffel(levi_civita_christoffel(base_metric(pts, 2), slice(0, n)),
                                     slice(0, n))
        if np.max(np.abs(R.value)) > 1e-8:
            flat = False
            warnings.warn("base metric is not flat: the structure is only almost para-Hermitian",
                          stacklevel=2)
    return Model(S.name, S, fld, para_kahler=flat if flat else None, strongly_compatible=True,
                 params={"base_dim": n, "polar": polar}, extras={"base_flat": flat})


# -- projective model ----------------------------------------------------------------
def _projective_section(m: int, s: np.ndarray, x: Jet):
    """Point (X, Y) of the slice x.y = 1 with s(X, X) = 1 from chart (u, v)."""
    n = m + 1
    dim = 2 * m
    batch = x.shape[:-1]
    u, v = x[..., :m], x[..., m:]
    one = Jet.constant(np.ones(batch + (1,)), dim, x.order)
    xhat = jets.concatenate([u, one], axis=-1)
    norm = jets.sqrt(jets.contract("...i,...i->...", xhat, jets.matvec(
        _const(batch, s, dim, x.order), xhat)))
    X = xhat * jets.reciprocal(norm)[..., None]
    yn = (1.0 - jets.contract("...i,...i->...", X[..., :m], v)) / X[..., n - 1]
    Y = jets.concatenate([v, yn[..., None]], axis=-1)
    return X, Y


def projective_model(n: int = 2, s=None) -> Model:
    """Para-Kähler quotient P of the slice x.y = 1 by R+, dimension 2(n-1).

    Chart (u, v) in R^{n-1} x R^{n-1}: X = (u, 1)/|(u, 1)|_s, Y = (v, y_n) with
    y_n fixed by X.Y = 1.  Tangent vectors of P are represented by their
    gamma~-horizontal lifts (gamma~-orthogonal to both scaling generators
    (x, 0), (0, y)), which is how gamma~ = gamma/(x.y) and F descend.  The field
    is built from (g_-, beta_-) = (s(x,x) s^{-1} on Lbar, 0).
    """
    if n < 2:
        raise ValueError("projective model needs n >= 2")
    s = np.eye(n) if s is None else np.asarray(s, float)
    if np.any(np.linalg.eigvalsh(0.5 * (s + s.T)) <= 0):
        raise ValueError("s must be positive definite")
    m = n - 1
    dim = 2 * m
    sinv = np.linalg.inv(s)
    names = [f"u{i + 1}" for i in range(m)] + [f"v{i + 1}" for i in range(m)]

    def in_domain(p):
        X, Y = _projective_section(m, s, Jet.variables(np.asarray(p, float), 0))
        return (X.value[..., -1] * Y.value[..., -1]) > 0

    chart = Chart(dim, names, predicate=in_domain, sample_lower=np.full(dim, -0.5),
                  sample_upper=np.full(dim, 0.5), name=f"P(n={n})")

    def data(p, order):
        batch = p.shape[:-1]
        X1, Y1 = _projective_section(m, s, Jet.variables(p, order + 1))
        J = jets.concatenate([X1, Y1], axis=-1).grad()  # (2n, 2m)
        X, Y = X1.truncate(order), Y1.truncate(order)
        xi = jets.contract("...i,...i->...", X, Y)
        zn = _zeros(batch, (n,), dim, order)
        z1 = jets.concatenate([X, zn], -1)
        z2 = jets.concatenate([zn, Y], -1)
        r1 = jets.concatenate([Y, zn], -1)
        r2 = jets.concatenate([zn, X], -1)
        inv_xi = jets.reciprocal(xi)[..., None, None]
        Hm = (_const(batch, np.eye(2 * n), dim, order)
              - (jets.outer(z1, r1) + jets.outer(z2, r2)) * inv_xi)
        M = jets.matmul(Hm, J)
        I, Z = np.eye(n), np.zeros((n, n))
        gam0 = _const(batch, np.block([[Z, I], [I, Z]]), dim, order) * inv_xi
        F0 = _const(batch, np.block([[I, Z], [Z, -I]]), dim, order)
        gP = jets.matmul(jets.matmul(M.T, gam0), M)
        gP = (gP + gP.T) * 0.5
        FP = jets.matmul(jets.inv(gP, "projected gamma"),
                         jets.matmul(jets.matmul(M.T, gam0), jets.matmul(F0, M)))
        Id = _const(batch, np.eye(dim), dim, order)
        E = ((Id + FP) * 0.5)[..., :, :m]
        Eb = ((Id - FP) * 0.5)[..., :, m:]
        W = jets.matmul(M, Eb)[..., n:, :]  # y-components of the lifted Lbar frame
        sxx = jets.contract("...i,...i->...", X, jets.matvec(_const(batch, s, dim, order), X))
        gminus = jets.matmul(jets.matmul(W.T, _const(batch, sinv, dim, order)), W) * sxx[..., None, None]
        return {"gamma": gP, "F": FP, "E": E, "Eb": Eb, "gminus": gminus, "M": M}
    memo = _PointMemo(data)

    S = ParaHermitianStructure(
        chart, TensorField(chart, (1, 1), lambda p, o: memo(p, o)["F"], name="F"),
        TensorField(chart, (0, 2), lambda p, o: memo(p, o)["gamma"], "symmetric", name="gamma"),
        Frame(chart, m, lambda p, o: memo(p, o)["E"], name="L"),
        Frame(chart, m, lambda p, o: memo(p, o)["Eb"], name="Lbar"),
        name=f"projective_model(n={n})")
    gm = TensorField(chart, (0, 2), lambda p, o: memo(p, o)["gminus"], "symmetric",
                     name="g_minus", shape=(m, m))
    bm = TensorField(chart, (0, 2), lambda p, o: _zeros(p.shape[:-1], (m, m), dim, o),
                     "antisymmetric", name="beta_minus", shape=(m, m))
    fld = reconstruct_from_minus(S, gm, bm, name="field")
    lift = TensorField(chart, (1, 1), lambda p, o: memo(p, o)["M"], name="horizontal_lift",
                       shape=(2 * n, dim))
    return Model(S.name, S, fld, para_kahler=True, strongly_compatible=True,
                 params={"n": n}, extras={"lift": lift, "s": s})


def projective_slice_metric(n: int = 2, s=None):
    """Pullback to the slice x.y = 1 of g = s(dx,dx)/s(x,x) + s(x,x) s^{-1}(dy,dy).

    Chart (x_1..x_n, y_1..y_{n-1}) with y_n solved from x.y = 1.  Returns
    (chart, g_S, zeta) where zeta = (x, -y) generates the R+ action on the slice.
    """
    s = np.eye(n) if s is None else np.asarray(s, float)
    sinv = np.linalg.inv(s)
    dim = 2 * n - 1

    def yn_of(x):
        return (1.0 - jets.contract("...i,...i->...", x[..., : n - 1], x[..., n:])) / x[..., n - 1]

    def in_domain(p):
        x = Jet.variables(np.asarray(p, float), 0)
        return (p[..., n - 1] > 0) & (yn_of(x).value > 0)

    names = [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n - 1)]
    lo = np.concatenate([np.full(n - 1, -0.5), [0.5], np.full(n - 1, -0.5)])
    hi = np.concatenate([np.full(n - 1, 0.5), [1.5], np.full(n - 1, 0.5)])
    chart = Chart(dim, names, predicate=in_domain, sample_lower=lo, sample_upper=hi,
                  name=f"slice(n={n})", even=False)

    def metric(p, order):
        batch = p.shape[:-1]
        x1 = Jet.variables(p, order + 1)
        X1 = x1[..., :n]
        Y1 = jets.concatenate([x1[..., n:], yn_of(x1)[..., None]], -1)
        J = jets.concatenate([X1, Y1], -1).grad()  # (2n, dim)
        X = X1.truncate(order)
        sxx = jets.contract("...i,...i->...", X, jets.matvec(_const(batch, s, dim, order), X))
        a = _const(batch, s, dim, order) * jets.reciprocal(sxx)[..., None, None]
        b = _const(batch, sinv, dim, order) * sxx[..., None, None]
        Z = _zeros(batch, (n, n), dim, order)
        gM = _block(a, Z, Z, b)
        return jets.matmul(jets.matmul(J.T, gM), J)

    def zeta(p, order):
        x = Jet.variables(p, order)
        return jets.concatenate([x[..., :n], -x[..., n:]], -1)

    return (chart, TensorField(chart, (0, 2), metric, "symmetric", name="g_S"),
            TensorField(chart, (1, 0), zeta, name="zeta"))


# -- reduction instances ---------------------------------------------------------------
def example52_manifold() -> AlmostSymplecticManifold:
    """omega = x1 dx2^dx3 + x2 dx1^dx4 on {x1 > 0, x2 > 0}; not closed.

    Its Hamiltonian functions are exactly the functions of t = x1 x2, with
    X_f = -f'(t) (d3 + d4).
    """
    chart = Chart(4, ["x1", "x2", "x3", "x4"], lower=[0.0, 0.0, -np.inf, -np.inf],
                  sample_lower=[0.5, 0.5, -1.0, -1.0], sample_upper=[2.0, 2.0, 1.0, 1.0],
                  name="example52")

    def omega(p, order):
        x = Jet.variables(p, order)
        z = Jet.zeros(p.shape[:-1], 4, order)
        x1, x2 = x[..., 0], x[..., 1]
        return jets.as_jet([[z, z, z, x2],
                            [z, z, x1, z],
                            [z, -x1, z, z],
                            [-x2, z, z, z]], 4, order)
    w = TensorField(chart, (0, 2), omega, "antisymmetric", name="omega")
    return AlmostSymplecticManifold(chart, w, name="example52")


def _circle_field_k(c):
    """k = 2 B^{-1}, B = (eps x)(eps x)^T / (x.y) + y y^T / |y|^2 (so g_yy = B)."""
    x1, x2, y1, y2 = c
    b = x1 * y1 + x2 * y2
    yy = y1 * y1 + y2 * y2
    u, y = [-x2, x1], [y1, y2]
    B = jets.as_jet([[u[i] * u[j] / b + y[i] * y[j] / yy for j in range(2)] for i in range(2)],
                    x1.dim, x1.order)
    return jets.inv(B, "B") * 2.0


@dataclass
class ReductionInstance:
    model: Model
    manifold: AlmostSymplecticManifold
    submanifold: EmbeddedSubmanifold
    params: dict = dc_field(default_factory=dict)


def circle_reduction(theta: float = 0.5) -> ReductionInstance:
    """Level set J = theta of the rotation x -> Rx, y -> Ry on flat para-Kähler R^4.

    J = x2 y1 - x1 y2 is the momentum map (i(xi) omega = dJ).  N is
    parameterized by (x1, x2, y1) on x1 > 0, Q by a = |x|^2/2, b = x.y with
    section (a, b) -> (sqrt(2a), 0, b/sqrt(2a)).  The field is rotation
    invariant, strongly compatible, and keeps K' as the g-normal of the orbits.
    """
    model = flat_para_kahler(2, k=_circle_field_k)
    model.name = "flat_para_kahler(n=2, circle-invariant k)"
    M = AlmostSymplecticManifold.from_model(model)
    M.name = "flat R^4"

    def y2_of(x1, x2, y1):
        return (x2 * y1 - theta) / x1

    def in_domain(u):
        x1, x2, y1 = u[..., 0], u[..., 1], u[..., 2]
        y2 = y2_of(x1, x2, y1)
        return x1 * y1 + x2 * y2 > 0.1

    chart = Chart(3, ["x1", "x2", "y1"], lower=[0.0, -np.inf, -np.inf], predicate=in_domain,
                  sample_lower=[0.6, -0.5, 0.5], sample_upper=[1.5, 0.5, 1.5],
                  name=f"J^-1({theta})", even=False)
    quotient = Chart(2, ["a", "b"], lower=[0.0, 0.1], name="Q")

    def embedding(u):
        x1, x2, y1 = u
        return [x1, x2, y1, y2_of(x1, x2, y1)]

    def projection(u):
        x1, x2, y1 = u
        return [(x1 * x1 + x2 * x2) * 0.5, x1 * y1 + x2 * y2_of(x1, x2, y1)]

    def section(q):
        a, b = q
        r = jets.sqrt(a * 2.0)
        return [r, a * 0.0, b / r]

    xi = TensorField.from_function(chart, (1, 0), lambda u: [-u[1], u[0], -y2_of(*u)], name="xi")
    N = EmbeddedSubmanifold(chart, M.chart, embedding, projection, quotient, section, [xi],
                            name=f"J^-1({theta})")
    return ReductionInstance(model, M, N, {"theta": theta})


# -- registry ------------------------------------------------------------------------
def _group_double_by_name(algebra: str = "heisenberg", n: int = 2) -> Model:
    if algebra not in ALGEBRAS:
        raise ValueError(f"unknown algebra {algebra!r}; choose from {sorted(ALGEBRAS)}")
    alg = abelian_algebra(n) if algebra == "abelian" else ALGEBRAS[algebra]()
    return group_double(alg)


MODELS = {
    "flat-para-kahler": flat_para_kahler,
    "group-double": _group_double_by_name,
    "tangent-sasaki": tangent_sasaki,
    "projective": projective_model,
}


def build_model(name: str, **params) -> Model:
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    return MODELS[name](**params)
