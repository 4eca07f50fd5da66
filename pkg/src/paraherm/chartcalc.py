"""Charts, tensor fields evaluated as jets, and classical calculus on a chart.

Index conventions
-----------------
A field of valence ``(r, s)`` evaluates to a jet whose tensor axes are
``r`` contravariant indices followed by ``s`` covariant ones.  Leading axes
are the batch axes of the evaluation points.  An endomorphism field
``F[i, j] = F^i_j`` therefore acts on vector components as a matrix.

Forms are stored as full antisymmetric arrays with the determinant
convention ``(dx^1 ^ dx^2)(d_1, d_2) = 1``, so that
``(d eta)_{i0..ip} = sum_k (-1)^k d_{ik} eta_{i0..^ik..ip}`` and interior
products contract the first slot.
"""

from __future__ import annotations

import itertools
import math
import threading
from collections import OrderedDict
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets
from .jets import Jet, as_jet, check_order


class DomainError(ValueError):
    """Evaluation point lies outside the chart domain."""


class ChartError(ValueError):
    """Fields from different charts were combined."""


class Chart:
    """A coordinate domain: an open box optionally cut down by a predicate.

    ``sample_lower``/``sample_upper`` bound the region used for random
    sampling; they default to the domain box clipped to [-1, 1].
    """

    def __init__(self, dim: int, names: Optional[Sequence[str]] = None,
                 lower=None, upper=None,
                 predicate: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 sample_lower=None, sample_upper=None, name: str = "chart",
                 even: bool = True):
        if dim < 1 or (even and (dim % 2 or dim < 2)):
            raise ValueError(f"chart dimension must be even and >= 2, got {dim}")
        self.dim = dim
        self.name = name
        self.names = list(names) if names is not None else [f"x{i + 1}" for i in range(dim)]
        if len(self.names) != dim:
            raise ValueError("coordinate_names length must equal dim")
        self.lower = np.full(dim, -np.inf) if lower is None else np.asarray(lower, float)
        self.upper = np.full(dim, np.inf) if upper is None else np.asarray(upper, float)
        if np.any(self.lower >= self.upper):
            raise ValueError("empty chart domain")
        self.predicate = predicate
        self.sample_lower = (np.maximum(self.lower, -1.0) if sample_lower is None
                             else np.asarray(sample_lower, float))
        self.sample_upper = (np.minimum(self.upper, 1.0) if sample_upper is None
                             else np.asarray(sample_upper, float))

    def __repr__(self) -> str:
        return f"Chart({self.name!r}, dim={self.dim})"

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        ok = np.all((p > self.lower) & (p < self.upper), axis=-1)
        if self.predicate is not None:
            ok = ok & np.asarray(self.predicate(p), bool)
        return ok & np.all(np.isfinite(p), axis=-1)

    def check(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        if p.shape[-1] != self.dim:
            raise DomainError(f"point has {p.shape[-1]} coordinates, chart needs {self.dim}")
        if not np.all(self.contains(p)):
            raise DomainError(f"point outside the domain of {self.name}")
        return p

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` random points of the sampling box that lie in the domain."""
        out = []
        got = 0
        for _ in range(1000):
            cand = rng.uniform(self.sample_lower, self.sample_upper, size=(max(2 * n, 8), self.dim))
            cand = cand[self.contains(cand)]
            out.append(cand)
            got += len(cand)
            if got >= n:
                break
        pts = np.concatenate(out)[:n]
        if len(pts) < n:
            raise DomainError(f"could not sample {n} points in {self.name}")
        return pts


Evaluator = Callable[[np.ndarray, int], Jet]


class TensorField:
    """A tensor field of valence (r, s) on a chart, evaluable as jets.

    ``evaluator(p, order)`` receives points of shape (..., dim) and returns a
    jet with tensor shape (dim,)*(r+s) after the batch axes.  Results are
    memoized per point batch; a cached higher-order jet serves lower orders.
    """

    _cache_size = 4

    def __init__(self, chart: Chart, valence: tuple[int, int], evaluator: Evaluator,
                 symmetry: Optional[str] = None, name: Optional[str] = None,
                 shape: Optional[tuple[int, ...]] = None):
        if symmetry not in (None, "symmetric", "antisymmetric"):
            raise ValueError(f"unknown symmetry tag {symmetry!r}")
        self.chart = chart
        self.valence = (int(valence[0]), int(valence[1]))
        self._evaluator = evaluator
        self.symmetry = symmetry
        self.name = name
        self.shape = tuple(shape) if shape is not None else (chart.dim,) * self.rank
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    @property
    def rank(self) -> int:
        return self.valence[0] + self.valence[1]

    @property
    def dim(self) -> int:
        return self.chart.dim

    def __repr__(self) -> str:
        label = self.name or "field"
        return f"TensorField({label}, valence={self.valence}, chart={self.chart.name})"

    # -- evaluation -------------------------------------------------------------
    def eval(self, p, order: int = 0) -> Jet:
        check_order(order)
        p = np.asarray(p, float)
        key = (p.shape, p.tobytes())
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None and hit.order >= order:
                self._cache.move_to_end(key)
                return hit.truncate(order)
        self.chart.check(p)
        out = self._evaluator(p, order)
        if not isinstance(out, Jet):
            out = as_jet(out, self.dim, order)
        batch = p.shape[:-1]
        want = batch + self.shape
        if out.shape != want:
            out = out.broadcast_to(want)
        if out.order > order:
            out = out.truncate(order)
        with self._lock:
            self._cache[key] = out
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return out

    def values(self, p) -> np.ndarray:
        return self.eval(p, 0).value

    # -- construction helpers ---------------------------------------------------
    @classmethod
    def from_function(cls, chart: Chart, valence, fn: Callable, symmetry=None, name=None):
        """Build from ``fn(x)`` where ``x`` is the list of coordinate jets.

        ``fn`` returns nested lists (or a Jet) of component expressions.
        """
        dim = chart.dim

        def evaluator(p, order):
            x = Jet.variables(p, order)
            xs = [x[..., i] for i in range(dim)]
            return as_jet(fn(xs), dim, order)
        return cls(chart, valence, evaluator, symmetry, name)

    @classmethod
    def constant(cls, chart: Chart, valence, array, symmetry=None, name=None):
        array = np.asarray(array, float)

        def evaluator(p, order):
            return Jet.constant(np.broadcast_to(array, p.shape[:-1] + array.shape),
                                chart.dim, order)
        return cls(chart, valence, evaluator, symmetry, name)

    def renamed(self, name: str) -> "TensorField":
        self.name = name
        return self

    # -- arithmetic -------------------------------------------------------------
    def _same_chart(self, other: "TensorField") -> None:
        if other.chart is not self.chart:
            raise ChartError(f"fields live on different charts: {self.chart} vs {other.chart}")

    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        self._same_chart(other)
        if other.valence != self.valence:
            raise ValueError("cannot add fields of different valence")
        sym = self.symmetry if self.symmetry == other.symmetry else None
        return pointwise(lambda a, b: a + b, [self, other], self.valence, sym)

    __radd__ = __add__

    def __neg__(self):
        return pointwise(lambda a: -a, [self], self.valence, self.symmetry)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, TensorField):
            self._same_chart(other)
            if other.rank == 0:
                return pointwise(lambda a, f: a * _expand(f, a.ndim - f.ndim),
                                 [self, other], self.valence, self.symmetry)
            if self.rank == 0:
                return other * self
            raise ValueError("use tensor_product for two non-scalar fields")
        c = float(other)
        return pointwise(lambda a: a * c, [self], self.valence, self.symmetry)

    __rmul__ = __mul__


def _expand(f: Jet, k: int) -> Jet:
    """Append ``k`` singleton tensor axes to a scalar jet."""
    return f.with_c(f.c.reshape(f.c.shape[:-1] + (1,) * k + f.c.shape[-1:]))


def pointwise(fn: Callable[..., Jet], fields: Sequence[TensorField], valence,
              symmetry=None, name=None, order_shift: int = 0) -> TensorField:
    """Field whose components are ``fn`` of the input components at each point.

    ``order_shift`` extra derivative orders are requested from the inputs
    (use it when ``fn`` itself differentiates its arguments).
    """
    chart = fields[0].chart
    for f in fields[1:]:
        if f.chart is not chart:
            raise ChartError("fields live on different charts")

    def evaluator(p, order):
        return fn(*[f.eval(p, order + order_shift) for f in fields])
    return TensorField(chart, valence, evaluator, symmetry, name)


class Frame(TensorField):
    """``n`` vector fields evaluated together as a (dim, n) matrix of columns."""

    def __init__(self, chart: Chart, n: int, evaluator: Evaluator, name: Optional[str] = None):
        super().__init__(chart, (1, 0), evaluator, name=name, shape=(chart.dim, n))
        self.n = n

    @classmethod
    def from_function(cls, chart: Chart, n: int, fn: Callable, name=None):
        """``fn(x)`` returns a list of ``n`` vectors (each a list of components)."""
        dim = chart.dim

        def evaluator(p, order):
            x = Jet.variables(p, order)
            cols = as_jet(fn([x[..., i] for i in range(dim)]), dim, order)  # (..., n, dim)
            return cols.T
        return cls(chart, n, evaluator, name)

    @classmethod
    def from_vectors(cls, vectors: Sequence[TensorField], name=None):
        chart = vectors[0].chart

        def evaluator(p, order):
            return jets.stack([v.eval(p, order) for v in vectors], axis=-1)
        return cls(chart, len(vectors), evaluator, name)

    def __len__(self) -> int:
        return self.n

    def vector(self, a: int) -> TensorField:
        def evaluator(p, order):
            return self.eval(p, order)[..., a]
        return TensorField(self.chart, (1, 0), evaluator, name=f"{self.name}[{a}]")

    def vectors(self) -> list[TensorField]:
        return [self.vector(a) for a in range(self.n)]

    def combination(self, coeffs: TensorField) -> TensorField:
        """Vector field sum_a c^a E_a for a field ``coeffs`` of shape (n,)."""
        def evaluator(p, order):
            return jets.matvec(self.eval(p, order), coeffs.eval(p, order))
        return TensorField(self.chart, (1, 0), evaluator)


def scalar_field(chart: Chart, fn: Callable, name=None) -> TensorField:
    return TensorField.from_function(chart, (0, 0), fn, name=name)


def vector_field(chart: Chart, fn: Callable, name=None) -> TensorField:
    return TensorField.from_function(chart, (1, 0), fn, name=name)


def random_polynomial_field(chart: Chart, rng: np.random.Generator, degree: int = 2,
                            scale: float = 0.5, name=None) -> TensorField:
    """Vector field with random coefficients, polynomial of total degree <= degree (<= 2)."""
    n = chart.dim
    const = rng.normal(size=n)
    lin = rng.normal(scale=scale, size=(n, n)) if degree >= 1 else np.zeros((n, n))
    quad = rng.normal(scale=scale * 0.5, size=(n, n, n)) if degree >= 2 else np.zeros((n, n, n))

    def evaluator(p, order):
        x = Jet.variables(p, order)
        out = x.with_c(np.zeros(x.c.shape)) + const
        out = out + jets.matvec(Jet.constant(lin, n, order), x)
        xx = jets.outer(x, x)
        return out + jets.contract("...ijk,...jk->...i", Jet.constant(quad, n, order), xx)
    return TensorField(chart, (1, 0), evaluator, name=name or "random")


def coordinate_field(chart: Chart, i: int) -> TensorField:
    e = np.zeros(chart.dim)
    e[i] = 1.0
    return TensorField.constant(chart, (1, 0), e, name=f"d/d{chart.names[i]}")


def coordinate_differential(chart: Chart, i: int) -> TensorField:
    e = np.zeros(chart.dim)
    e[i] = 1.0
    return TensorField.constant(chart, (0, 1), e, name=f"d{chart.names[i]}")


# -- classical operations -------------------------------------------------------
def _require(field: TensorField, valence, what: str) -> None:
    if field.valence != valence:
        raise ValueError(f"{what} expects valence {valence}, got {field.valence}")


def _form_degree(eta: TensorField) -> int:
    if eta.valence[0] != 0:
        raise ValueError("expected a differential form (covariant field)")
    return eta.valence[1]


def directional_derivative(X: TensorField, f: TensorField) -> TensorField:
    """X(f) = X^i d_i f for a scalar field f."""
    _require(X, (1, 0), "directional_derivative")
    _require(f, (0, 0), "directional_derivative")
    X._same_chart(f)

    def evaluator(p, order):
        x = X.eval(p, order)
        g = f.eval(p, order + 1).grad()
        return jets.contract("...i,...i->...", x, g)
    return TensorField(X.chart, (0, 0), evaluator)


def lie_bracket(X: TensorField, Y: TensorField) -> TensorField:
    """[X,Y]^i = X^j d_j Y^i - Y^j d_j X^i."""
    _require(X, (1, 0), "lie_bracket")
    _require(Y, (1, 0), "lie_bracket")
    X._same_chart(Y)

    def evaluator(p, order):
        x = X.eval(p, order + 1)
        y = Y.eval(p, order + 1)
        return (jets.contract("...j,...ij->...i", x, y.grad())
                - jets.contract("...j,...ij->...i", y, x.grad()))
    return TensorField(X.chart, (1, 0), evaluator, name="bracket")


def d_components(a: Jet, degree: int) -> Jet:
    """Exterior derivative of form components given at order >= 1."""
    g = a.grad()  # (..., i1..ip, j)
    nb = g.ndim - degree - 1
    t = g.with_c(np.moveaxis(g.c, nb + degree, nb))  # (..., j, i1..ip)
    out = None
    for k in range(degree + 1):
        term = t.with_c(np.moveaxis(t.c, nb, nb + k))
        term = term if k % 2 == 0 else -term
        out = term if out is None else out + term
    return out


def exterior_derivative(eta: TensorField) -> TensorField:
    p_deg = _form_degree(eta)

    def evaluator(p, order):
        return d_components(eta.eval(p, order + 1), p_deg)
    return TensorField(eta.chart, (0, p_deg + 1), evaluator,
                       symmetry="antisymmetric" if p_deg >= 1 else None, name="d")


def interior_product(X: TensorField, eta: TensorField) -> TensorField:
    """i(X) eta, contracting the first slot."""
    _require(X, (1, 0), "interior_product")
    p_deg = _form_degree(eta)
    if p_deg == 0:
        raise ValueError("interior product of a 0-form is undefined")
    X._same_chart(eta)

    def evaluator(p, order):
        x = X.eval(p, order)
        e = eta.eval(p, order)
        # contract X^i with the first covariant slot
        return jets.contract("...i,...i" + _letters(p_deg - 1) + "->..." + _letters(p_deg - 1),
                             x, e)
    return TensorField(X.chart, (0, p_deg - 1), evaluator,
                       symmetry="antisymmetric" if p_deg > 2 else None)


def _letters(n: int, start: int = 0) -> str:
    return "abcdefghklmnopqrstuvw"[start:start + n]


def lie_derivative(X: TensorField, T: TensorField) -> TensorField:
    """Lie derivative of an arbitrary (r, s) tensor field along X."""
    _require(X, (1, 0), "lie_derivative")
    X._same_chart(T)
    r, s = T.valence

    def evaluator(p, order):
        x = X.eval(p, order + 1)
        t = T.eval(p, order + 1)
        dx = x.grad()  # (..., i, m) = d_m X^i
        x = x.truncate(order)
        n = r + s
        idx = _letters(n)
        out = jets.contract(f"...m,...{idx}m->...{idx}", x, t.grad())
        t = t.truncate(order)
        for k in range(n):
            src = idx[:k] + "z" + idx[k + 1:]
            if k < r:
                # - T^{..m..} d_m X^{i_k}
                out = out - jets.contract(f"...{src},...{idx[k]}z->...{idx}", t, dx)
            else:
                # + T_{..m..} d_{j_k} X^m
                out = out + jets.contract(f"...{src},...z{idx[k]}->...{idx}", t, dx)
        return out
    return TensorField(X.chart, T.valence, evaluator, T.symmetry, name="lie")


def alternate(a: Jet, nb: int, k: int) -> Jet:
    """Full antisymmetrization (average over permutations) of the last k axes."""
    if k <= 1:
        return a
    out = None
    for perm in itertools.permutations(range(k)):
        sign = _perm_sign(perm)
        axes = tuple(range(nb)) + tuple(nb + q for q in perm) + (nb + k,)
        term = a.with_c(np.transpose(a.c, axes))
        term = term if sign > 0 else -term
        out = term if out is None else out + term
    return out * (1.0 / math.factorial(k))


def _perm_sign(perm) -> int:
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def wedge(alpha: TensorField, beta: TensorField) -> TensorField:
    """alpha ^ beta with (dx ^ dy)(d_x, d_y) = 1."""
    p_deg, q_deg = _form_degree(alpha), _form_degree(beta)
    alpha._same_chart(beta)
    factor = math.factorial(p_deg + q_deg) / (math.factorial(p_deg) * math.factorial(q_deg))

    def evaluator(p, order):
        a = alpha.eval(p, order)
        b = beta.eval(p, order)
        ia, ib = _letters(p_deg), _letters(q_deg, p_deg)
        prod = jets.contract(f"...{ia},...{ib}->...{ia}{ib}", a, b)
        return alternate(prod, a.ndim - p_deg, p_deg + q_deg) * factor
    return TensorField(alpha.chart, (0, p_deg + q_deg), evaluator, "antisymmetric")


def tensor_product(a: TensorField, b: TensorField) -> TensorField:
    """Tensor product; contravariant axes of both inputs come first."""
    a._same_chart(b)
    ra, sa = a.valence
    rb, sb = b.valence

    def evaluator(p, order):
        x = a.eval(p, order)
        y = b.eval(p, order)
        ia, ib = _letters(ra + sa), _letters(rb + sb, ra + sa)
        out = ia[:ra] + ib[:rb] + ia[ra:] + ib[rb:]
        return jets.contract(f"...{ia},...{ib}->...{out}", x, y)
    return TensorField(a.chart, (ra + rb, sa + sb), evaluator)


def metric_apply(m: TensorField, X: TensorField, Y: TensorField) -> TensorField:
    """Scalar field m(X, Y) for a (0,2) field m."""
    _require(m, (0, 2), "metric_apply")

    def evaluator(p, order):
        return jets.contract("...i,...i->...", X.eval(p, order),
                             jets.matvec(m.eval(p, order), Y.eval(p, order)))
    return TensorField(m.chart, (0, 0), evaluator)


def apply_endomorphism(A: TensorField, X: TensorField) -> TensorField:
    _require(A, (1, 1), "apply_endomorphism")

    def evaluator(p, order):
        return jets.matvec(A.eval(p, order), X.eval(p, order))
    return TensorField(A.chart, (1, 0), evaluator)


def pair(alpha: TensorField, X: TensorField) -> TensorField:
    """alpha(X) for a 1-form alpha."""
    def evaluator(p, order):
        return jets.contract("...i,...i->...", alpha.eval(p, order), X.eval(p, order))
    return TensorField(X.chart, (0, 0), evaluator)


def differential(f: TensorField) -> TensorField:
    """df as a 1-form."""
    _require(f, (0, 0), "differential")

    def evaluator(p, order):
        return f.eval(p, order + 1).grad()
    return TensorField(f.chart, (0, 1), evaluator, name="d")


def musical_flat(m: TensorField, X: TensorField) -> TensorField:
    """flat_m X = m(X, .), components X^i m_{ij}."""
    _require(m, (0, 2), "musical_flat")
    _require(X, (1, 0), "musical_flat")

    def evaluator(p, order):
        return jets.matvec(m.eval(p, order).T, X.eval(p, order))
    return TensorField(m.chart, (0, 1), evaluator)


def musical_sharp(m: TensorField, alpha: TensorField) -> TensorField:
    """Inverse of musical_flat: solves m(X, .) = alpha."""
    _require(m, (0, 2), "musical_sharp")
    _require(alpha, (0, 1), "musical_sharp")

    def evaluator(p, order):
        minv_t = jets.inv(m.eval(p, order).T, "metric")
        return jets.matvec(minv_t, alpha.eval(p, order))
    return TensorField(m.chart, (1, 0), evaluator)


def check_symmetry(field: TensorField, points) -> float:
    """Max violation of the declared symmetry tag over the first two slots."""
    if field.symmetry is None or field.rank < 2:
        return 0.0
    v = field.values(points)
    sw = np.swapaxes(v, -1, -2)
    if field.symmetry == "symmetric":
        return float(np.max(np.abs(v - sw)))
    return float(np.max(np.abs(v + sw)))
