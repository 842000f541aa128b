"""Jet-evaluable fields on a ball of R^n and Levi-Civita calculus for them.

Index conventions
-----------------
* ``dg[..., i, j, k]`` is the partial derivative of ``g_ij`` along ``x^k``;
  derivative indices are always appended on the right.
* ``gamma[..., i, j, k]`` is the Christoffel symbol with upper index ``i``.
* Covariant derivatives of a 1-form keep the same layout: ``b_{i;j}`` is
  ``cov[..., i, j]`` and ``b_{i;j;k}`` is ``cov2[..., i, j, k]``.
* Curvature: ``R^i_{jkl} = d_k G^i_{lj} - d_l G^i_{kj} + G^i_{km} G^m_{lj} - G^i_{lm} G^m_{kj}``,
  i.e. the components of ``R(d_k, d_l) d_j``.  With this sign, the fully
  covariant ``R_{ijkl} = g_{im} R^m_{jkl}`` of a space of constant sectional
  curvature ``mu`` equals ``mu (g_ik g_jl - g_il g_jk)``, and the sectional
  curvature of the plane ``u ^ v`` is ``R_{ijkl} u^i v^j u^k v^l / |u ^ v|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .jets import Jet3, NotPositiveDefiniteError, dot, spd_inverse


@dataclass(frozen=True)
class Domain:
    """Ball of given radius about the origin plus an optional pointwise constraint."""

    radius: float = 0.5
    constraint: Optional[Callable[[np.ndarray], np.ndarray]] = None
    description: str = ""

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = np.sum(x * x, axis=-1) <= self.radius**2 * (1 + 1e-12)
        if self.constraint is not None:
            ok = ok & np.asarray(self.constraint(x), dtype=bool)
        return ok

    def intersect(self, other: "Domain") -> "Domain":
        fs = [d.constraint for d in (self, other) if d.constraint is not None]
        if not fs:
            cons = None
        elif len(fs) == 1:
            cons = fs[0]
        else:
            cons = lambda x, f=fs[0], g=fs[1]: f(x) & g(x)  # noqa: E731
        desc = "; ".join(d for d in (self.description, other.description) if d)
        return Domain(min(self.radius, other.radius), cons, desc)


def curvature_chart(mu: float, floor: float = 0.25) -> Domain:
    """Chart of the constant curvature models: ``1 + mu |x|^2 >= floor``."""
    def cons(x, mu=mu, floor=floor):
        return 1 + mu * np.sum(np.asarray(x) ** 2, axis=-1) >= floor
    return Domain(np.inf, cons, f"1+({mu:g})|x|^2 >= {floor:g}")


@dataclass(frozen=True)
class TensorJet:
    """Stacked derivatives of a tensor-valued field at a batch of points.

    ``val`` has shape ``(*B, *S)``; ``d1``, ``d2``, ``d3`` append one, two and
    three derivative axes of length ``n``.
    """

    val: np.ndarray
    d1: Optional[np.ndarray]
    d2: Optional[np.ndarray]
    d3: Optional[np.ndarray]
    order: int


def _to_jet(leaf, like: Jet3) -> Jet3:
    if isinstance(leaf, Jet3):
        return leaf
    return Jet3.constant(np.broadcast_to(np.asarray(leaf, dtype=float), like.shape), like.n, like.order)


def _stack(obj, like: Jet3, order: int) -> TensorJet:
    # component axes follow the batch axes in nesting order; derivative axes stay last
    nb = len(like.shape)

    def collect(o, attr):
        if isinstance(o, (list, tuple)):
            return np.stack([collect(e, attr) for e in o], axis=nb)
        j = _to_jet(o, like)
        arr = getattr(j, attr)
        return np.broadcast_to(arr, like.shape + arr.shape[len(j.shape):])

    blocks = [collect(obj, attr) if k <= order else None
              for k, attr in enumerate(("grad", "hess", "third"), start=1)]
    return TensorJet(collect(obj, "value"), *blocks, order=order)


class Field:
    """Smooth coordinate expression ``x -> value`` on a domain of R^n.

    ``fn`` receives a list of ``n`` coordinates, each a numpy array or a
    :class:`Jet3`, and returns a nested list structure of the field's
    components.  It must only use operations that jets support.
    """

    rank_shape: tuple = ()

    def __init__(self, n: int, fn: Callable, *, name: str = "", domain: Domain | None = None):
        self.n = n
        self.fn = fn
        self.name = name or type(self).__name__
        self.domain = domain if domain is not None else Domain(np.inf)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, n={self.n})"

    def _coords(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"{self.name}: expected points of dimension {self.n}, got {x.shape[-1]}")
        return x

    def __call__(self, x) -> np.ndarray:
        """Plain numeric evaluation at points ``x`` of shape ``(n,)`` or ``(*B, n)``."""
        x = self._coords(x)
        out = self.fn([x[..., i] for i in range(self.n)])
        return self._assemble(out, x.shape[:-1])

    def _assemble(self, out, batch) -> np.ndarray:
        def rec(o):
            if isinstance(o, (list, tuple)):
                return np.stack([rec(e) for e in o], axis=len(batch))
            return np.broadcast_to(np.asarray(o, dtype=float), batch)
        return rec(out)

    def jet(self, x, order: int = 2) -> TensorJet:
        x = self._coords(x)
        xs = Jet3.variables(x, order=max(order, 1))
        out = self.fn(xs)
        return _stack(out, xs[0], order)


class ScalarField(Field):
    rank_shape = ()


class OneFormField(Field):
    """Components ``b_i(x)`` of a 1-form ``b_i y^i``."""

    rank_shape = ("n",)

    def contract(self, x, y) -> np.ndarray:
        return np.einsum("...i,...i->...", self(x), np.asarray(y, dtype=float))


class VectorField(Field):
    """Components ``V^i(x)``."""

    rank_shape = ("n",)


class MetricField(Field):
    """Riemannian metric ``a_ij(x)``; ``fn`` returns an ``n x n`` nested list."""

    rank_shape = ("n", "n")

    def norm_sq(self, x, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.einsum("...ij,...i,...j->...", self(x), y, y)

    def norm(self, x, y) -> np.ndarray:
        return np.sqrt(self.norm_sq(x, y))


def euclidean_metric(n: int) -> MetricField:
    return MetricField(n, lambda x: [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)],
                       name="euclidean")


def constant_oneform(b) -> OneFormField:
    b = [float(v) for v in b]
    return OneFormField(len(b), lambda x: list(b), name="constant")


def lower(V: VectorField, a: MetricField) -> OneFormField:
    """The 1-form ``V_i = a_ij V^j``, itself jet-evaluable."""
    def fn(x):
        g = a.fn(x)
        v = V.fn(x)
        return [dot(g[i], v) for i in range(len(v))]
    return OneFormField(V.n, fn, name=f"flat({V.name})", domain=V.domain.intersect(a.domain))


def gradient_form(c: ScalarField) -> OneFormField:
    """``dc`` as a 1-form field.  Jets of ``dc`` to order k use jets of ``c`` to order k+1."""
    def fn(x):
        if isinstance(x[0], Jet3):
            if x[0].order >= 3:
                raise ValueError("gradient_form supports jets up to order 2")
            pts = np.stack([xi.value for xi in x], axis=-1)
            j = c.fn(Jet3.variables(pts, order=x[0].order + 1))
            return [Jet3(j.n, j.grad[..., i], j.hess[..., i, :],
                         j.third[..., i, :, :] if j.order >= 3 else None, order=j.order - 1)
                    for i in range(j.n)]
        pts = np.stack(np.broadcast_arrays(*x), axis=-1)
        j = c.fn(Jet3.variables(pts, order=1))
        return [j.grad[..., i] for i in range(len(x))]
    return OneFormField(c.n, fn, name=f"d({c.name})", domain=c.domain)


# connection -----------------------------------------------------------------------

class Connection:
    """Levi-Civita data of a metric at a batch of points.

    ``order`` is the jet order used for the metric; curvature and second
    covariant derivatives need ``order >= 2``.
    """

    def __init__(self, metric: MetricField, x, order: int = 2):
        self.metric = metric
        self.x = np.asarray(x, dtype=float)
        self.n = metric.n
        self.order = order
        tj = metric.jet(self.x, order=max(order, 1))
        self.g = tj.val
        self.dg = tj.d1
        self.d2g = tj.d2
        self.ginv = spd_inverse(self.g)
        dg = self.dg
        self._gl = 0.5 * (np.einsum("...lkj->...ljk", dg) + dg - np.einsum("...jkl->...ljk", dg))
        self.gamma = np.einsum("...il,...ljk->...ijk", self.ginv, self._gl)
        self._dgamma = None

    @property
    def dgamma(self) -> np.ndarray:
        """``dgamma[..., i, j, k, m]`` is the derivative of ``G^i_jk`` along ``x^m``."""
        if self._dgamma is None:
            if self.d2g is None:
                raise ValueError("connection built with order < 2; derivatives of Christoffel symbols unavailable")
            d2g = self.d2g
            dgl = 0.5 * (np.einsum("...lkjm->...ljkm", d2g) + d2g - np.einsum("...jklm->...ljkm", d2g))
            dginv = -np.einsum("...ip,...pqm,...ql->...ilm", self.ginv, self.dg, self.ginv)
            self._dgamma = (np.einsum("...ilm,...ljk->...ijkm", dginv, self._gl)
                            + np.einsum("...il,...ljkm->...ijkm", self.ginv, dgl))
        return self._dgamma

    # curvature
    def riemann_up(self) -> np.ndarray:
        """``R^i_{jkl}`` as ``[..., i, j, k, l]``."""
        dG, G = self.dgamma, self.gamma
        return (np.einsum("...iljk->...ijkl", dG) - np.einsum("...ikjl->...ijkl", dG)
                + np.einsum("...ikm,...mlj->...ijkl", G, G) - np.einsum("...ilm,...mkj->...ijkl", G, G))

    def riemann_down(self) -> np.ndarray:
        return np.einsum("...im,...mjkl->...ijkl", self.g, self.riemann_up())

    def ricci(self) -> np.ndarray:
        return np.einsum("...ijil->...jl", self.riemann_up())

    def sectional(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        R = self.riemann_down()
        num = np.einsum("...ijkl,...i,...j,...k,...l->...", R, u, v, u, v)
        guu = np.einsum("...ij,...i,...j->...", self.g, u, u)
        gvv = np.einsum("...ij,...i,...j->...", self.g, v, v)
        guv = np.einsum("...ij,...i,...j->...", self.g, u, v)
        return num / (guu * gvv - guv**2)

    # covariant derivatives
    def raise_index(self, b) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.ginv, b)

    def cov1(self, b: TensorJet) -> np.ndarray:
        """``b_{i;j}`` for a 1-form jet."""
        return b.d1 - np.einsum("...kij,...k->...ij", self.gamma, b.val)

    def cov2(self, b: TensorJet) -> np.ndarray:
        """``b_{i;j;k}`` for a 1-form jet of order >= 2."""
        if b.d2 is None:
            raise ValueError("second covariant derivative needs a 1-form jet of order >= 2")
        G = self.gamma
        c1 = self.cov1(b)
        dc1 = (b.d2 - np.einsum("...mijk,...m->...ijk", self.dgamma, b.val)
               - np.einsum("...mij,...mk->...ijk", G, b.d1))
        return dc1 - np.einsum("...mik,...mj->...ijk", G, c1) - np.einsum("...mjk,...im->...ijk", G, c1)

    def hessian(self, c: TensorJet) -> np.ndarray:
        """``c_{i;j}`` of a scalar jet."""
        return c.d2 - np.einsum("...kij,...k->...ij", self.gamma, c.d1)

    def metric_derivative(self) -> np.ndarray:
        """``a_{ij;k}``; vanishes identically for the Levi-Civita connection."""
        G = self.gamma
        return (self.dg - np.einsum("...mik,...mj->...ijk", G, self.g)
                - np.einsum("...mjk,...im->...ijk", G, self.g))

    def grad_norm_sq(self, c: TensorJet) -> np.ndarray:
        return np.einsum("...ij,...i,...j->...", self.ginv, c.d1, c.d1)


def _conn(a: MetricField, x, order: int) -> Connection:
    return Connection(a, x, order=order)


def christoffel(a: MetricField, x) -> np.ndarray:
    """Christoffel symbols ``G^i_jk`` of ``a`` at ``x`` (shape ``(..., n, n, n)``)."""
    return _conn(a, x, 1).gamma


def covariant_d1_oneform(b: OneFormField, a: MetricField, x) -> np.ndarray:
    return _conn(a, x, 1).cov1(b.jet(x, order=1))


def covariant_d2_oneform(b: OneFormField, a: MetricField, x) -> np.ndarray:
    return _conn(a, x, 2).cov2(b.jet(x, order=2))


def riemann(a: MetricField, x) -> tuple[np.ndarray, np.ndarray]:
    """``(R_{ijkl}, R^i_{jkl})`` at ``x``."""
    c = _conn(a, x, 2)
    up = c.riemann_up()
    return np.einsum("...im,...mjkl->...ijkl", c.g, up), up


def sectional_curvature(a: MetricField, x, u, v) -> np.ndarray:
    return _conn(a, x, 2).sectional(u, v)


def grad_norm_sq(c: ScalarField, a: MetricField, x) -> np.ndarray:
    """``a^{ij} c_i c_j``."""
    return _conn(a, x, 1).grad_norm_sq(c.jet(x, order=1))


def closedness_residual(b: OneFormField, x) -> np.ndarray:
    """``max_{i<j} |d_j b_i - d_i b_j|`` at each point."""
    d = b.jet(x, order=1).d1
    return np.max(np.abs(d - np.swapaxes(d, -1, -2)), axis=(-1, -2))


__all__ = [
    "Domain", "curvature_chart", "TensorJet", "Field", "ScalarField", "OneFormField", "VectorField",
    "MetricField", "euclidean_metric", "constant_oneform", "lower", "gradient_form", "Connection",
    "christoffel", "covariant_d1_oneform", "covariant_d2_oneform", "riemann", "sectional_curvature",
    "grad_norm_sq", "closedness_residual", "NotPositiveDefiniteError",
]
