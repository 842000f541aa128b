"""Truncated multivariate Taylor arithmetic (order <= 3) and small SPD algebra.

A :class:`Jet3` carries a value together with its gradient, Hessian and third
derivative tensor with respect to ``n`` coordinates.  Every block may carry a
leading batch shape, so one jet can describe the same expression at many
sample points at once::

    value  (*B,)
    grad   (*B, n)
    hess   (*B, n, n)
    third  (*B, n, n, n)

Expressions written with the module level :func:`sqrt`, :func:`exp` and
:func:`log` work unchanged on floats, numpy arrays and jets.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

MAX_DIM = 8


class DomainError(ValueError):
    """Raised when an elementary function leaves its domain."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    def __init__(self, smallest_pivot: float):
        self.smallest_pivot = smallest_pivot
        super().__init__(f"matrix is not positive definite (smallest pivot {smallest_pivot:.6g})")


@lru_cache(maxsize=None)
def _canonical_index(n: int, rank: int) -> np.ndarray:
    # flat index of the sorted representative of every multi-index
    shape = (n,) * rank
    idx = np.empty(n**rank, dtype=np.intp)
    for flat, multi in enumerate(np.ndindex(*shape)):
        idx[flat] = np.ravel_multi_index(tuple(sorted(multi)), shape)
    return idx


def _symmetrize(t: np.ndarray, rank: int) -> np.ndarray:
    n = t.shape[-1]
    lead = t.shape[:-rank]
    flat = t.reshape(lead + (n**rank,))
    return flat[..., _canonical_index(n, rank)].reshape(t.shape)


def _sym3(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """h_ij g_k + h_ik g_j + h_jk g_i."""
    return (h[..., :, :, None] * g[..., None, None, :]
            + h[..., :, None, :] * g[..., None, :, None]
            + h[..., None, :, :] * g[..., :, None, None])


def _first_offender(mask: np.ndarray) -> str:
    if np.ndim(mask) == 0:
        return ""
    return f" at sample {tuple(int(i) for i in np.argwhere(mask)[0])}"


class Jet3:
    """Value and partial derivatives up to ``order`` of a scalar in ``n`` variables.

    Instances are immutable.  Blocks above ``order`` are ``None``.
    """

    __slots__ = ("n", "order", "value", "grad", "hess", "third")
    __array_ufunc__ = None  # make numpy arrays defer to the reflected jet operators

    def __init__(self, n: int, value, grad=None, hess=None, third=None, order: int | None = None):
        if order is None:
            order = 3 if third is not None else 2 if hess is not None else 1 if grad is not None else 0
        if not 0 <= order <= 3:
            raise ValueError(f"jet order must be in 0..3, got {order}")
        if not 1 <= n <= MAX_DIM:
            raise ValueError(f"jet dimension must be in 1..{MAX_DIM}, got {n}")
        value = np.asarray(value, dtype=float)
        shape = value.shape
        if order >= 1:
            grad = np.broadcast_to(np.asarray(grad, dtype=float), shape + (n,))
        if order >= 2:
            hess = _symmetrize(np.broadcast_to(np.asarray(hess, dtype=float), shape + (n, n)), 2)
        if order >= 3:
            third = _symmetrize(np.broadcast_to(np.asarray(third, dtype=float), shape + (n, n, n)), 3)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "grad", grad if order >= 1 else None)
        object.__setattr__(self, "hess", hess if order >= 2 else None)
        object.__setattr__(self, "third", third if order >= 3 else None)

    def __setattr__(self, name, value):
        raise AttributeError("Jet3 is immutable")

    # construction -----------------------------------------------------------

    @classmethod
    def constant(cls, value, n: int, order: int = 3) -> "Jet3":
        value = np.asarray(value, dtype=float)
        z = np.zeros(value.shape + (n,) * 3)
        return cls(n, value, z[..., 0, 0], z[..., 0], z, order=order)

    @classmethod
    def variables(cls, x, order: int = 3) -> list["Jet3"]:
        """Coordinate jets ``x^0 .. x^{n-1}`` seeded at the point(s) ``x``.

        ``x`` has shape ``(n,)`` or ``(*B, n)``.
        """
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        eye = np.eye(n)
        zero2 = np.zeros(x.shape[:-1] + (n, n))
        zero3 = np.zeros(x.shape[:-1] + (n, n, n))
        return [cls(n, x[..., i], np.broadcast_to(eye[i], x.shape), zero2, zero3, order=order)
                for i in range(n)]

    def _lift(self, other) -> "Jet3":
        if isinstance(other, Jet3):
            if other.n != self.n:
                raise ValueError(f"jet dimension mismatch: {self.n} vs {other.n}")
            return other
        return Jet3.constant(other, self.n, self.order)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def truncate(self, order: int) -> "Jet3":
        order = min(order, self.order)
        return Jet3(self.n, self.value, self.grad, self.hess, self.third, order=order)

    def __getitem__(self, index) -> "Jet3":
        """Select batch entries."""
        blocks = [b[index] if b is not None else None for b in (self.grad, self.hess, self.third)]
        return Jet3(self.n, self.value[index], *blocks, order=self.order)

    def __repr__(self) -> str:
        return f"Jet3(n={self.n}, order={self.order}, value={self.value!r})"

    # arithmetic ---------------------------------------------------------------

    def __neg__(self) -> "Jet3":
        blocks = [-b if b is not None else None for b in (self.grad, self.hess, self.third)]
        return Jet3(self.n, -self.value, *blocks, order=self.order)

    def __pos__(self) -> "Jet3":
        return self

    def __add__(self, other) -> "Jet3":
        if not isinstance(other, Jet3):
            return Jet3(self.n, self.value + np.asarray(other, dtype=float),
                        self.grad, self.hess, self.third, order=self.order)
        other = self._lift(other)
        order = min(self.order, other.order)
        blocks = [a + b if k < order else None
                  for k, (a, b) in enumerate(zip((self.grad, self.hess, self.third),
                                                  (other.grad, other.hess, other.third)))]
        return Jet3(self.n, self.value + other.value, *blocks, order=order)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet3":
        return self + (-other)

    def __rsub__(self, other) -> "Jet3":
        return (-self) + other

    def __mul__(self, other) -> "Jet3":
        if not isinstance(other, Jet3):
            s = np.asarray(other, dtype=float)
            return Jet3(self.n, self.value * s,
                        *[b * s.reshape(s.shape + (1,) * (k + 1)) if b is not None else None
                          for k, b in enumerate((self.grad, self.hess, self.third))],
                        order=self.order)
        other = self._lift(other)
        f, g = self, other
        order = min(f.order, g.order)
        f0, g0 = f.value, g.value
        grad = hess = third = None
        if order >= 1:
            grad = f0[..., None] * g.grad + g0[..., None] * f.grad
        if order >= 2:
            cross = f.grad[..., :, None] * g.grad[..., None, :]
            hess = (f0[..., None, None] * g.hess + g0[..., None, None] * f.hess
                    + cross + np.swapaxes(cross, -1, -2))
        if order >= 3:
            third = (f0[..., None, None, None] * g.third + g0[..., None, None, None] * f.third
                     + _sym3(f.hess, g.grad) + _sym3(g.hess, f.grad))
        return Jet3(self.n, f0 * g0, grad, hess, third, order=order)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet3":
        if not isinstance(other, Jet3):
            s = np.asarray(other, dtype=float)
            if np.any(s == 0):
                raise DomainError("division by zero constant")
            return self * (1.0 / s)
        return self * reciprocal(other)

    def __rtruediv__(self, other) -> "Jet3":
        return reciprocal(self) * other

    def __pow__(self, p) -> "Jet3":
        if isinstance(p, (int, np.integer)):
            if p == 0:
                return Jet3.constant(np.ones_like(self.value), self.n, self.order)
            if p < 0:
                return reciprocal(self ** (-p))
            out = self
            for _ in range(p - 1):
                out = out * self
            return out
        p = float(p)
        v = self.value
        bad = v <= 0
        if np.any(bad):
            raise DomainError(f"power {p}: nonpositive base {v[bad].min() if np.ndim(v) else float(v)}"
                              f"{_first_offender(bad)}")
        return compose(self, v**p, p * v**(p - 1), p * (p - 1) * v**(p - 2),
                       p * (p - 1) * (p - 2) * v**(p - 3))


def compose(g: Jet3, f0, f1, f2, f3) -> Jet3:
    """Jet of ``f(g)`` from the derivatives ``f, f', f'', f'''`` evaluated at ``g.value``."""
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    grad = hess = third = None
    if g.order >= 1:
        grad = f1[..., None] * g.grad
    if g.order >= 2:
        f2 = np.asarray(f2, dtype=float)
        gg = g.grad[..., :, None] * g.grad[..., None, :]
        hess = f2[..., None, None] * gg + f1[..., None, None] * g.hess
    if g.order >= 3:
        f3 = np.asarray(f3, dtype=float)
        ggg = gg[..., :, :, None] * g.grad[..., None, None, :]
        third = (f3[..., None, None, None] * ggg + f2[..., None, None, None] * _sym3(g.hess, g.grad)
                 + f1[..., None, None, None] * g.third)
    return Jet3(g.n, f0, grad, hess, third, order=g.order)


def reciprocal(g):
    if not isinstance(g, Jet3):
        g = np.asarray(g, dtype=float)
        if np.any(g == 0):
            raise DomainError("division by zero")
        return 1.0 / g
    v = g.value
    bad = v == 0
    if np.any(bad):
        raise DomainError(f"division by zero denominator{_first_offender(bad)}")
    r = 1.0 / v
    return compose(g, r, -r * r, 2 * r**3, -6 * r**4)


def sqrt(x, label: str = "sqrt"):
    """Square root of a float, array or jet; the radicand must be positive."""
    v = x.value if isinstance(x, Jet3) else np.asarray(x, dtype=float)
    bad = v <= 0 if isinstance(x, Jet3) else v < 0
    if np.any(bad):
        worst = float(np.min(v))
        raise DomainError(f"{label}: nonpositive radicand {worst:.6g}{_first_offender(bad)}")
    if not isinstance(x, Jet3):
        return np.sqrt(v)
    s = np.sqrt(v)
    return compose(x, s, 0.5 / s, -0.25 / (s * v), 0.375 / (s * v * v))


def exp(x):
    if not isinstance(x, Jet3):
        return np.exp(x)
    e = np.exp(x.value)
    return compose(x, e, e, e, e)


def log(x, label: str = "log"):
    v = x.value if isinstance(x, Jet3) else np.asarray(x, dtype=float)
    bad = v <= 0
    if np.any(bad):
        raise DomainError(f"{label}: nonpositive argument {float(np.min(v)):.6g}{_first_offender(bad)}")
    if not isinstance(x, Jet3):
        return np.log(v)
    r = 1.0 / v
    return compose(x, np.log(v), r, -r * r, 2 * r**3)


def dot(u: Sequence, v: Sequence):
    """Euclidean inner product of two coordinate lists (floats, arrays or jets)."""
    out = 0.0
    for a, b in zip(u, v):
        out = a * b + out
    return out


def taylor_eval(f: Callable, x, order: int = 3) -> Jet3:
    """Exact derivatives of ``f`` at ``x`` up to ``order``.

    ``f`` receives a list of ``n`` coordinate jets and must return a scalar
    expression built from jet arithmetic.  Constant results are promoted.

    >>> j = taylor_eval(lambda x: x[0] * x[0] + x[1] * x[1], [1.0, 2.0], order=2)
    >>> float(j.value), j.grad.tolist()
    (5.0, [2.0, 4.0])
    """
    if not 0 <= order <= 3:
        raise ValueError(f"order must be in 0..3, got {order}")
    xs = Jet3.variables(x, order=max(order, 1))
    out = f(xs)
    if not isinstance(out, Jet3):
        out = Jet3.constant(np.broadcast_to(np.asarray(out, dtype=float), xs[0].shape), xs[0].n)
    return out.truncate(order)


# small dense SPD algebra --------------------------------------------------------

def _pivots(m: np.ndarray) -> np.ndarray:
    """Diagonal pivots of unpivoted symmetric elimination (LDL^T)."""
    a = np.array(m, dtype=float)
    n = a.shape[-1]
    piv = np.empty(a.shape[:-1])
    for k in range(n):
        piv[..., k] = a[..., k, k]
        if k + 1 < n:
            with np.errstate(divide="ignore", invalid="ignore"):
                col = a[..., k + 1:, k] / a[..., k, k][..., None]
            a[..., k + 1:, k + 1:] -= col[..., :, None] * a[..., k, k + 1:][..., None, :]
    return piv


def spd_inverse(m) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix (or a stack of them).

    Raises :class:`NotPositiveDefiniteError` carrying the smallest pivot.
    """
    m = np.asarray(m, dtype=float)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(float(np.nanmin(_pivots(m)))) from None
    eye = np.broadcast_to(np.eye(m.shape[-1]), m.shape)
    linv = np.linalg.solve(chol, eye)
    inv = np.swapaxes(linv, -1, -2) @ linv
    return 0.5 * (inv + np.swapaxes(inv, -1, -2))


def is_spd(m, rel_tol: float = 1e-12) -> np.ndarray:
    """Per-matrix test: all eigenvalues above ``rel_tol`` times the largest."""
    w = np.linalg.eigvalsh(np.asarray(m, dtype=float))
    return (w[..., 0] > rel_tol * w[..., -1]) & (w[..., -1] > 0)


def jet_inverse(m: Sequence[Sequence]) -> list[list]:
    """Inverse of a symmetric positive definite matrix of jets (Gauss-Jordan, no pivoting)."""
    n = len(m)
    a = [list(row) + [1.0 if i == j else 0.0 for j in range(n)] for i, row in enumerate(m)]
    for k in range(n):
        inv_piv = reciprocal(a[k][k])
        a[k] = [v * inv_piv for v in a[k]]
        for i in range(n):
            if i != k:
                f = a[i][k]
                a[i] = [vi - f * vk for vi, vk in zip(a[i], a[k])]
    return [row[n:] for row in a]


__all__ = [
    "Jet3", "DomainError", "NotPositiveDefiniteError", "MAX_DIM", "compose", "reciprocal",
    "sqrt", "exp", "log", "dot", "taylor_eval", "spd_inverse", "is_spd", "jet_inverse",
]

