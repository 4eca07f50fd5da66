"""Linear connections on a chart described by Christoffel jets.

A :class:`ConnectionExpr` produces ``Gamma[k, i, j]`` with
``nabla_{d_i} d_j = Gamma^k_ij d_k`` as a jet, so covariant derivatives of
fields are again AD-evaluable fields (nested differentiation works).
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from typing import Callable

import numpy as np

from . import jets
from .chartcalc import Chart, TensorField, _letters
from .jets import Jet


class ConnectionExpr:
    """Connection given by its Christoffel symbols as an order-aware evaluator."""

    def __init__(self, chart: Chart, christoffel: Callable[[np.ndarray, int], Jet], name: str = "nabla"):
        self.chart = chart
        self._christoffel = christoffel
        self.name = name
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"ConnectionExpr({self.name}, chart={self.chart.name})"

    @property
    def dim(self) -> int:
        return self.chart.dim

    def christoffel(self, p, order: int = 0) -> Jet:
        jets.check_order(order)
        p = np.asarray(p, float)
        key = (p.shape, p.tobytes())
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None and hit.order >= order:
                return hit.truncate(order)
        out = self._christoffel(p, order)
        if out.order > order:
            out = out.truncate(order)
        with self._lock:
            self._cache[key] = out
            if len(self._cache) > 4:
                self._cache.popitem(last=False)
        return out

    def christoffel_field(self) -> TensorField:
        return TensorField(self.chart, (1, 2), self.christoffel, name=f"Gamma({self.name})")

    # -- derived fields ---------------------------------------------------------
    def apply(self, X: TensorField, Y: TensorField) -> TensorField:
        """nabla_X Y."""
        def evaluator(p, order):
            x = X.eval(p, order)
            y = Y.eval(p, order + 1)
            G = self.christoffel(p, order)
            dy = y.grad()  # (..., k, i)
            y = y.truncate(order)
            inner = dy + jets.contract("...kij,...j->...ki", G, y)
            return jets.matvec(inner, x)
        return TensorField(self.chart, (1, 0), evaluator, name=f"{self.name}_X Y")

    def covariant_derivative(self, T: TensorField) -> TensorField:
        """nabla T as an (r, s+1) field; the derivative index is the last slot."""
        r, s = T.valence
        n = r + s

        def evaluator(p, order):
            t = T.eval(p, order + 1)
            G = self.christoffel(p, order)
            out = t.grad()
            t = t.truncate(order)
            idx = _letters(n)
            for k in range(n):
                src = idx[:k] + "z" + idx[k + 1:]
                if k < r:
                    out = out + jets.contract(f"...{idx[k]}yz,...{src}->...{idx}y", G, t)
                else:
                    out = out - jets.contract(f"...zy{idx[k]},...{src}->...{idx}y", G, t)
            return out
        return TensorField(self.chart, (r, s + 1), evaluator, name=f"{self.name} T")

    def along(self, X: TensorField, T: TensorField) -> TensorField:
        """nabla_X T for a tensor field T."""
        DT = self.covariant_derivative(T)
        r, s = T.valence
        idx = _letters(r + s)

        def evaluator(p, order):
            return jets.contract(f"...{idx}y,...y->...{idx}", DT.eval(p, order), X.eval(p, order))
        return TensorField(self.chart, T.valence, evaluator)

    def torsion(self) -> TensorField:
        """T^k_ij = Gamma^k_ij - Gamma^k_ji, so T(X,Y) = nabla_X Y - nabla_Y X - [X,Y]."""
        def evaluator(p, order):
            G = self.christoffel(p, order)
            return G - G.swapaxes(-1, -2)
        return TensorField(self.chart, (1, 2), evaluator, name="torsion")

    def plus(self, Phi: TensorField, name: str = None) -> "ConnectionExpr":
        """nabla + Phi for a (1,2) field with Phi^k_ij = (Phi(d_i) d_j)^k."""
        def christoffel(p, order):
            return self.christoffel(p, order) + Phi.eval(p, order)
        return ConnectionExpr(self.chart, christoffel, name or f"{self.name}+Phi")


def difference_tensor(a: ConnectionExpr, b: ConnectionExpr) -> TensorField:
    def evaluator(p, order):
        return a.christoffel(p, order) - b.christoffel(p, order)
    return TensorField(a.chart, (1, 2), evaluator)


def levi_civita_christoffel(gamma_jet: Jet, coords: slice = None) -> Jet:
    """Gamma^k_ij from metric components given at order >= 1.

    ``coords`` selects the jet variables that are the metric's coordinates
    (for a metric on a factor of the chart, e.g. the base of a bundle).
    """
    dg = gamma_jet.grad()  # dg[a, b, c] = d_c g_ab
    if coords is not None:
        dg = dg[..., coords]
    ginv = jets.inv(gamma_jet.truncate(dg.order), "metric")
    nb = dg.ndim - 3
    batch = tuple(range(nb))

    def perm(*tail):
        return dg.with_c(np.transpose(dg.c, batch + tuple(nb + t for t in tail) + (nb + 3,)))
    # lowered Gamma_{l,ij} = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
    lowered = (perm(0, 2, 1) + dg - perm(2, 0, 1)) * 0.5
    return jets.contract("...kl,...lij->...kij", ginv, lowered)


def levi_civita(gamma: TensorField) -> ConnectionExpr:
    """Levi-Civita connection of a (pseudo-)Riemannian metric field."""
    def christoffel(p, order):
        return levi_civita_christoffel(gamma.eval(p, order + 1))
    return ConnectionExpr(gamma.chart, christoffel, name=f"LC({gamma.name or 'metric'})")


def flat_connection(chart: Chart) -> ConnectionExpr:
    def christoffel(p, order):
        return Jet.zeros(p.shape[:-1] + (chart.dim,) * 3, chart.dim, order)
    return ConnectionExpr(chart, christoffel, name="flat")


def riemann_from_christoffel(gam: Jet, coords: slice = None) -> Jet:
    """R[k, l, i, j] = R^k_{lij} with R(d_i, d_j) d_l = R^k_{lij} d_k (input order >= 1).

    R^k_{lij} = d_i G^k_jl - d_j G^k_il + G^k_im G^m_jl - G^k_jm G^m_il.
    """
    dG = gam.grad()  # dG[k, a, b, c] = d_c G^k_ab
    if coords is not None:
        dG = dG[..., coords]
    G = gam.truncate(dG.order)
    nb = dG.ndim - 4
    batch = tuple(range(nb))

    def perm(*tail):
        return dG.with_c(np.transpose(dG.c, batch + tuple(nb + t for t in tail) + (nb + 4,)))
    # term[k, l, i, j] = d_i G^k_jl  -> source axes (k, j, l, i) map to (k, l, i, j)
    d1 = perm(0, 2, 3, 1)
    quad = jets.contract("...kim,...mjl->...klij", G, G)
    R = d1 + quad
    return R - R.swapaxes(-1, -2)
