"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` stores the Taylor coefficients of one or more smooth functions
around an expansion point, in ``dim`` variables, up to total degree ``order``.
Arithmetic propagates all partial derivatives exactly (forward-mode AD); taking
a partial derivative lowers the order by one, which is how nested
differentiation (brackets of brackets, curvature of a connection built from
brackets) stays exact.

Coefficients live on the last axis in a *graded* monomial layout: all degree-0
monomials, then degree 1, then degree 2, ...  Truncating to a lower order is
therefore a prefix slice.  Leading axes are free: they hold batch dimensions
(many expansion points at once) followed by tensor indices.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 3


class OrderError(ValueError):
    """Requested derivative order exceeds the configured nesting depth."""


class DegenerateError(ValueError):
    """A matrix that must be invertible is numerically singular."""


def check_order(order: int) -> None:
    if order < 0:
        raise OrderError(f"negative jet order {order}")
    if order > MAX_ORDER:
        raise OrderError(
            f"order {order} exceeds configured nesting depth {MAX_ORDER}"
        )


class JetSpace:
    """Monomial bookkeeping for ``dim`` variables up to total degree ``order``."""

    def __init__(self, dim: int, order: int):
        self.dim = dim
        self.order = order
        monos: list[tuple[int, ...]] = []
        self.sizes = []
        for deg in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(dim), deg):
                e = [0] * dim
                for j in combo:
                    e[j] += 1
                monos.append(tuple(e))
            self.sizes.append(len(monos))
        self.monomials = monos
        self.size = len(monos)
        self.index = {m: i for i, m in enumerate(monos)}
        self.degree = np.array([sum(m) for m in monos])
        self.factorial = np.array(
            [math.prod(math.factorial(k) for k in m) for m in monos], dtype=float
        )

        ia, ib, ic = [], [], []
        for i, a in enumerate(monos):
            for j, b in enumerate(monos):
                if self.degree[i] + self.degree[j] > order:
                    continue
                ia.append(i)
                ib.append(j)
                ic.append(self.index[tuple(x + y for x, y in zip(a, b))])
        # pairs sorted by target monomial
        perm = np.argsort(ic, kind="stable")
        self.ia = np.array(ia)[perm]
        self.ib = np.array(ib)[perm]
        self.ic = np.array(ic)[perm]
        self._plans: dict = {}

        # d/dx_j maps the order-K layout onto the order-(K-1) layout.
        lower = self.sizes[order - 1] if order > 0 else 0
        self.dsrc = np.zeros((dim, lower), dtype=int)
        self.dfac = np.zeros((dim, lower))
        for t in range(lower):
            beta = monos[t]
            for j in range(dim):
                up = list(beta)
                up[j] += 1
                self.dsrc[j, t] = self.index[tuple(up)]
                self.dfac[j, t] = beta[j] + 1


    def plan(self, mask_a: np.ndarray, mask_b: np.ndarray) -> "_Plan":
        """Product plan restricted to coefficient pairs that are not identically zero."""
        key = (mask_a.tobytes(), mask_b.tobytes())
        plan = self._plans.get(key)
        if plan is None:
            keep = mask_a[self.ia] & mask_b[self.ib]
            plan = _Plan(self.ia[keep], self.ib[keep], self.ic[keep])
            if len(self._plans) < 4096:
                self._plans[key] = plan
        return plan


class _Plan:
    """Pairs (ia, ib) -> ic; ``gather`` sums pair products into their targets."""

    def __init__(self, ia, ib, ic):
        self.ia, self.ib = ia, ib
        self.targets, counts = np.unique(ic, return_counts=True)
        self.direct = bool(np.all(counts == 1))
        if not self.direct:
            width = int(counts.max())
            pad = len(ic)  # index of an appended zero column
            gather = np.full((len(self.targets), width), pad)
            start = 0
            for t, c in enumerate(counts):
                gather[t, :c] = np.arange(start, start + c)
                start += c
            self.gather = gather

    def reduce(self, prod: np.ndarray, size: int) -> np.ndarray:
        """prod[..., pairs] -> coefficients[..., size]."""
        out = np.zeros(prod.shape[:-1] + (size,))
        if len(self.targets) == 0:
            return out
        if self.direct:
            out[..., self.targets] = prod
        else:
            padded = np.concatenate([prod, np.zeros(prod.shape[:-1] + (1,))], axis=-1)
            out[..., self.targets] = padded[..., self.gather].sum(axis=-1)
        return out


def _support(c: np.ndarray) -> np.ndarray:
    """Coefficient slots that are nonzero somewhere in the array."""
    return np.any(c.reshape(-1, c.shape[-1]) != 0, axis=0)


@lru_cache(maxsize=None)
def space(dim: int, order: int) -> JetSpace:
    return JetSpace(dim, order)


def _mul_coeffs(a: np.ndarray, b: np.ndarray, sp: JetSpace) -> np.ndarray:
    if sp.order == 0:
        return a * b
    pl = sp.plan(_support(a), _support(b))
    return pl.reduce(a[..., pl.ia] * b[..., pl.ib], sp.size)


class Jet:
    """Array of truncated Taylor polynomials sharing one monomial layout."""

    __slots__ = ("c", "dim", "order")
    __array_priority__ = 100

    def __init__(self, c: np.ndarray, dim: int, order: int):
        self.c = c
        self.dim = dim
        self.order = order

    # -- construction ---------------------------------------------------------
    @classmethod
    def variables(cls, point: np.ndarray, order: int) -> "Jet":
        """Coordinate functions x_i = p_i + t_i; shape ``point.shape``."""
        point = np.asarray(point, dtype=float)
        dim = point.shape[-1]
        sp = space(dim, order)
        c = np.zeros(point.shape + (sp.size,))
        c[..., 0] = point
        if order > 0:
            c[..., np.arange(dim), 1 + np.arange(dim)] = 1.0
        return cls(c, dim, order)

    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        sp = space(dim, order)
        c = np.zeros(value.shape + (sp.size,))
        c[..., 0] = value
        return cls(c, dim, order)

    @classmethod
    def zeros(cls, shape, dim: int, order: int) -> "Jet":
        return cls(np.zeros(tuple(shape) + (space(dim, order).size,)), dim, order)

    # -- basic properties -----------------------------------------------------
    @property
    def space(self) -> JetSpace:
        return space(self.dim, self.order)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.c.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, dim={self.dim}, order={self.order})"

    def __len__(self) -> int:
        return self.shape[0]

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if not any(i is Ellipsis for i in idx):
            idx = idx + (Ellipsis,)
        return Jet(self.c[idx + (slice(None),)], self.dim, self.order)

    def __iter__(self):
        for i in range(self.shape[0]):
            yield self[i]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderError(f"cannot raise jet order {self.order} -> {order}")
        if order == self.order:
            return self
        return Jet(self.c[..., : space(self.dim, order).size], self.dim, order)

    def with_c(self, c: np.ndarray) -> "Jet":
        return Jet(c, self.dim, self.order)

    # tensor-axis helpers (axes refer to the non-jet axes)
    def transpose(self, *axes) -> "Jet":
        n = self.ndim
        if not axes:
            axes = tuple(reversed(range(n)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return self.with_c(np.transpose(self.c, tuple(axes) + (n,)))

    def swapaxes(self, a: int, b: int) -> "Jet":
        a = a % self.ndim
        b = b % self.ndim
        return self.with_c(np.swapaxes(self.c, a, b))

    @property
    def T(self) -> "Jet":
        """Swap the last two tensor axes (batched matrix transpose)."""
        return self.swapaxes(-1, -2)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.with_c(self.c.reshape(tuple(shape) + (self.c.shape[-1],)))

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(self.ndim))
        if isinstance(axis, int):
            axis = axis % self.ndim
        else:
            axis = tuple(a % self.ndim for a in axis)
        return self.with_c(self.c.sum(axis=axis))

    def expand_dims(self, axis: int) -> "Jet":
        axis = axis % (self.ndim + 1)
        return self.with_c(np.expand_dims(self.c, axis))

    def broadcast_to(self, shape) -> "Jet":
        return self.with_c(np.broadcast_to(self.c, tuple(shape) + (self.c.shape[-1],)))

    # -- derivatives ------------------------------------------------------------
    def d(self, j: int) -> "Jet":
        """Partial derivative along variable ``j`` (order drops by one)."""
        if self.order == 0:
            raise OrderError("cannot differentiate an order-0 jet")
        sp = self.space
        return Jet(self.c[..., sp.dsrc[j]] * sp.dfac[j], self.dim, self.order - 1)

    def grad(self) -> "Jet":
        """All first partials, appended as a trailing tensor axis."""
        if self.order == 0:
            raise OrderError("cannot differentiate an order-0 jet")
        sp = self.space
        g = self.c[..., sp.dsrc] * sp.dfac  # (..., dim, M_lower)
        return Jet(g, self.dim, self.order - 1)

    def derivative(self, multi_index: Sequence[int]) -> np.ndarray:
        """Value of the partial derivative with the given exponent vector."""
        alpha = tuple(int(a) for a in multi_index)
        if sum(alpha) > self.order:
            raise OrderError(f"derivative {alpha} needs order {sum(alpha)}")
        sp = self.space
        i = sp.index[alpha]
        return self.c[..., i] * sp.factorial[i]

    def partials(self, k: int) -> np.ndarray:
        """Full (symmetric) tensor of k-th partial derivatives at the expansion point."""
        if k > self.order:
            raise OrderError(f"order-{k} partials need a jet of order >= {k}")
        out = np.zeros(self.shape + (self.dim,) * k)
        for idx in itertools.product(range(self.dim), repeat=k):
            e = [0] * self.dim
            for j in idx:
                e[j] += 1
            out[(Ellipsis,) + idx] = self.derivative(e)
        return out

    # -- arithmetic -------------------------------------------------------------
    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.dim, self.order)

    def _align(self, other: "Jet") -> tuple[np.ndarray, np.ndarray, int]:
        if other.dim != self.dim:
            raise ValueError(f"jet dimension mismatch {self.dim} != {other.dim}")
        order = min(self.order, other.order)
        return self.truncate(order).c, other.truncate(order).c, order

    def __add__(self, other):
        if not isinstance(other, Jet):
            c = self.c.copy() if np.ndim(other) == 0 else np.broadcast_to(
                self.c, np.broadcast_shapes(self.shape, np.shape(other)) + self.c.shape[-1:]).copy()
            c[..., 0] += other
            return Jet(c, self.dim, self.order)
        a, b, o = self._align(other)
        return Jet(a + b, self.dim, o)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.dim, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * np.asarray(other, dtype=float)[..., None], self.dim, self.order)
        a, b, o = self._align(other)
        return Jet(_mul_coeffs(a, b, space(self.dim, o)), self.dim, o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / np.asarray(other, dtype=float)[..., None], self.dim, self.order)
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, exponent):
        if isinstance(exponent, Jet):
            return exp(log(self) * exponent)
        if float(exponent).is_integer() and exponent >= 0:
            e = int(exponent)
            result = Jet.constant(np.ones(self.shape), self.dim, self.order)
            base = self
            while e:
                if e & 1:
                    result = result * base
                e >>= 1
                if e:
                    base = base * base
            return result
        return power(self, float(exponent))

    def __rpow__(self, base):
        return exp(self * math.log(base))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(Jet.constant(other, self.dim, self.order), self)

    # -- composition ------------------------------------------------------------
    def compose(self, inner: "Jet") -> "Jet":
        """Substitute the variables by ``inner`` (shape (..., dim)).

        ``self`` is read as a polynomial in the offsets ``t = x - x0``; the
        constant part of ``inner`` must equal the expansion point x0 that was
        used for ``self``.  The result is a jet in ``inner``'s variables.
        """
        if inner.shape[-1] != self.dim:
            raise ValueError("composition arity mismatch")
        order = min(self.order, inner.order)
        sp = space(self.dim, order)
        inner = inner.truncate(order)
        delta = inner.c.copy()
        delta[..., 0] = 0.0
        usp = space(inner.dim, order)
        batch = delta.shape[:-2]
        powers = np.zeros(batch + (sp.size, usp.size))
        powers[..., 0, 0] = 1.0
        for i in range(1, sp.size):
            alpha = sp.monomials[i]
            j = next(k for k, a in enumerate(alpha) if a)
            prev = list(alpha)
            prev[j] -= 1
            powers[..., i, :] = _mul_coeffs(powers[..., sp.index[tuple(prev)], :],
                                            delta[..., j, :], usp)
        coeffs = self.truncate(order).c
        tshape = coeffs.shape[len(batch):-1]
        flat = coeffs.reshape(batch + (-1, sp.size))
        out = np.einsum("...ta,...au->...tu", flat, powers)
        return Jet(out.reshape(batch + tshape + (usp.size,)), inner.dim, order)


# -- stacking -------------------------------------------------------------------
def as_jet(obj, dim: int, order: int) -> Jet:
    """Convert nested sequences of scalar jets / numbers into one Jet.

    Leaves may carry batch axes; nesting levels become trailing tensor axes.
    """
    return _as_jet(obj, dim, order)[0]


def _as_jet(obj, dim: int, order: int) -> tuple[Jet, int]:
    if isinstance(obj, Jet):
        return obj, 0
    if isinstance(obj, (int, float, np.floating, np.integer)):
        return Jet.constant(float(obj), dim, order), 0
    if isinstance(obj, np.ndarray) and obj.dtype != object:
        return Jet.constant(obj, dim, order), obj.ndim
    parts = [_as_jet(o, dim, order) for o in obj]
    depth = parts[0][1]
    o = min(p.order for p, _ in parts)
    cs = [p.truncate(o).c for p, _ in parts]
    shape = np.broadcast_shapes(*(c.shape for c in cs))
    cs = [np.broadcast_to(c, shape) for c in cs]
    return Jet(np.stack(cs, axis=len(shape) - 1 - depth), dim, o), depth + 1


def stack(items: Sequence[Jet], axis: int = -1) -> Jet:
    """Stack jets along a new tensor axis (negative axes count tensor axes)."""
    o = min(it.order for it in items)
    items = [it.truncate(o) for it in items]
    shape = np.broadcast_shapes(*(it.c.shape for it in items))
    arrs = [np.broadcast_to(it.c, shape) for it in items]
    nd = len(shape) - 1
    ax = axis if axis >= 0 else nd + 1 + axis
    return Jet(np.stack(arrs, axis=ax), items[0].dim, o)


def concatenate(items: Sequence[Jet], axis: int = -1) -> Jet:
    o = min(it.order for it in items)
    items = [it.truncate(o) for it in items]
    nd = items[0].ndim
    ax = axis if axis >= 0 else nd + axis
    return Jet(np.concatenate([it.c for it in items], axis=ax), items[0].dim, o)


# -- products -------------------------------------------------------------------
def _pair(a, b) -> tuple[Jet, Jet]:
    if not isinstance(a, Jet):
        a = Jet.constant(a, b.dim, b.order)
    if not isinstance(b, Jet):
        b = Jet.constant(b, a.dim, a.order)
    o = min(a.order, b.order)
    return a.truncate(o), b.truncate(o)


def contract(subscripts: str, a, b) -> Jet:
    """Two-operand einsum over tensor axes with jet multiplication.

    Subscripts refer to tensor axes only (use ``...`` for batch axes), e.g.
    ``"...ij,...j->...i"``.
    """
    a, b = _pair(a, b)
    sp = a.space
    lhs, out = subscripts.split("->")
    s1, s2 = lhs.split(",")
    if sp.order == 0:
        return Jet(np.einsum(f"{s1}Z,{s2}Z->{out}Z", a.c, b.c), a.dim, 0)
    pl = sp.plan(_support(a.c), _support(b.c))
    r = np.einsum(f"{s1}Z,{s2}Z->{out}Z", a.c[..., pl.ia], b.c[..., pl.ib])
    return Jet(pl.reduce(r, sp.size), a.dim, sp.order)


def matmul(a, b) -> Jet:
    """Batched matrix product over the last two tensor axes (or matrix-vector)."""
    a, b = _pair(a, b)
    sp = a.space
    if sp.order == 0:
        return Jet(np.matmul(a.c[..., 0], b.c[..., 0])[..., None], a.dim, 0)
    pl = sp.plan(_support(a.c), _support(b.c))
    ag = np.moveaxis(a.c[..., pl.ia], -1, -3)
    bg = np.moveaxis(b.c[..., pl.ib], -1, -3)
    r = np.moveaxis(np.matmul(ag, bg), -3, -1)  # (..., i, k, pairs)
    return Jet(pl.reduce(r, sp.size), a.dim, sp.order)


def matvec(a: Jet, v) -> Jet:
    """(..., i, j) x (..., j) -> (..., i)."""
    a, v = _pair(a, v)
    r = matmul(a, v.with_c(v.c[..., None, :]))
    return r.with_c(r.c[..., 0, :])


def outer(a: Jet, b: Jet) -> Jet:
    return contract("...i,...j->...ij", a, b)


def trace(a: Jet) -> Jet:
    return a.with_c(np.trace(a.c, axis1=-3, axis2=-2))


def eye(n: int, dim: int, order: int) -> Jet:
    return Jet.constant(np.eye(n), dim, order)


# -- elementary functions -------------------------------------------------------
def _taylor(u: Jet, coeffs: Callable[[np.ndarray, int], list]) -> Jet:
    a0 = u.c[..., 0]
    ks = coeffs(a0, u.order)
    out = np.zeros_like(u.c)
    out[..., 0] = ks[0]
    if u.order == 0:
        return Jet(out, u.dim, 0)
    h = u.c.copy()
    h[..., 0] = 0.0
    sp = u.space
    p = h
    out = out + ks[1][..., None] * h
    for k in range(2, u.order + 1):
        p = _mul_coeffs(p, h, sp)
        out = out + ks[k][..., None] * p
    return Jet(out, u.dim, u.order)


def _is_jet(x) -> bool:
    return isinstance(x, Jet)


def exp(u):
    if not _is_jet(u):
        return np.exp(u)
    return _taylor(u, lambda a, K: [np.exp(a) / math.factorial(k) for k in range(K + 1)])


def log(u):
    if not _is_jet(u):
        return np.log(u)

    def co(a, K):
        return [np.log(a)] + [(-1.0) ** (k + 1) / (k * a ** k) for k in range(1, K + 1)]
    return _taylor(u, co)


def sin(u):
    if not _is_jet(u):
        return np.sin(u)
    return _taylor(u, lambda a, K: [np.sin(a + k * np.pi / 2) / math.factorial(k)
                                    for k in range(K + 1)])


def cos(u):
    if not _is_jet(u):
        return np.cos(u)
    return _taylor(u, lambda a, K: [np.cos(a + k * np.pi / 2) / math.factorial(k)
                                    for k in range(K + 1)])


def power(u, r: float):
    if not _is_jet(u):
        return np.power(u, r)

    def co(a, K):
        out = []
        binom = 1.0
        for k in range(K + 1):
            out.append(binom * np.power(a, r - k))
            binom *= (r - k) / (k + 1)
        return out
    return _taylor(u, co)


def sqrt(u):
    return power(u, 0.5) if _is_jet(u) else np.sqrt(u)


def reciprocal(u):
    if not _is_jet(u):
        return 1.0 / u
    return _taylor(u, lambda a, K: [(-1.0) ** k / a ** (k + 1) for k in range(K + 1)])


def tan(u):
    return sin(u) / cos(u) if _is_jet(u) else np.tan(u)


# -- linear algebra -------------------------------------------------------------
def is_singular(a0: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Scale-aware singularity test: |det| < rtol * (max row norm)^n."""
    n = a0.shape[-1]
    rows = np.linalg.norm(a0, axis=-1).max(axis=-1)
    return np.abs(np.linalg.det(a0)) < rtol * np.maximum(rows, 1e-300) ** n


def check_nondegenerate(a0: np.ndarray, what: str = "matrix") -> None:
    if np.any(is_singular(a0)):
        raise DegenerateError(f"{what} is degenerate at an evaluation point")


def inv(a: Jet, what: str = "matrix") -> Jet:
    """Inverse of a batch of jet matrices via the nilpotent Neumann series."""
    a0 = a.c[..., 0]
    check_nondegenerate(a0, what)
    a0inv = np.linalg.inv(a0)
    res = Jet.constant(a0inv, a.dim, a.order)
    if a.order == 0:
        return res
    n = a.with_c(a.c.copy())
    n.c[..., 0] = 0.0
    x = -matmul(res, n)
    term = res
    for _ in range(a.order):
        term = matmul(x, term)
        res = res + term
    return res


def det(a: Jet) -> Jet:
    a0 = a.c[..., 0]
    d0 = np.linalg.det(a0)
    if a.order == 0:
        return Jet(d0[..., None], a.dim, 0)
    a0inv = np.linalg.inv(a0)
    n = a.with_c(a.c.copy())
    n.c[..., 0] = 0.0
    y = matmul(Jet.constant(a0inv, a.dim, a.order), n)
    # log det(I + Y) = tr(Y - Y^2/2 + Y^3/3 - ...), Y nilpotent
    acc = trace(y)
    p = y
    for k in range(2, a.order + 1):
        p = matmul(p, y)
        acc = acc + trace(p) * ((-1.0) ** (k + 1) / k)
    return exp(acc) * d0


def solve(a: Jet, b: Jet, what: str = "matrix") -> Jet:
    return matmul(inv(a, what), b)


def values(x) -> np.ndarray:
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)
