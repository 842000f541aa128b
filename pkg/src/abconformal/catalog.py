"""Concrete metrics, 1-forms, generators phi(s) and conformal field families.

Every constructor returns jet-evaluable field objects from
:mod:`abconformal.geometry`.  Coordinate helpers below accept lists whose
entries are floats, numpy arrays or :class:`~abconformal.jets.Jet3`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import (Domain, MetricField, OneFormField, ScalarField, VectorField,
                       curvature_chart, euclidean_metric)
from .jets import DomainError, Jet3, dot, log, sqrt

CONSTRAINT_TOL = 1e-12


class ConstraintError(ValueError):
    """A model parameter set violates one of its defining linear constraints."""

    def __init__(self, constraint: str, residual: float):
        self.constraint = constraint
        self.residual = residual
        super().__init__(f"constraint {constraint} violated (residual {residual:.3g})")


class RegularityError(DomainError):
    """``s = beta/alpha`` left the range where ``F = alpha phi(s)`` is regular."""


# coordinate helpers -----------------------------------------------------------------

def _r2(x):
    return dot(x, x)


def _vdot(v, x):
    """``<v, x>`` for a constant vector ``v``; zero entries are skipped."""
    out = 0.0
    for vi, xi in zip(v, x):
        if vi != 0.0:
            out = xi * float(vi) + out
    return out


def _matvec(Q, x):
    return [_vdot(row, x) for row in np.asarray(Q, dtype=float)]


# parameters ----------------------------------------------------------------------

@dataclass
class ModelParams:
    """Constants lambda, mu, e, tau, gamma, eta, d, Q, k1, k2, k3 of the model families.

    Vector and matrix entries left as ``None`` are read as zero.
    """

    lam: float = 0.0
    mu: float = 0.0
    e: Optional[Sequence[float]] = None
    tau: float = 0.0
    gamma: Optional[Sequence[float]] = None
    eta: Optional[Sequence[float]] = None
    d: Optional[Sequence[float]] = None
    Q: Optional[Sequence[Sequence[float]]] = None
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0

    def vec(self, name: str, n: int) -> np.ndarray:
        v = getattr(self, name)
        if v is None:
            return np.zeros(n)
        v = np.asarray(v, dtype=float)
        if v.shape != (n,):
            raise ValueError(f"parameter {name} must have length {n}, got shape {v.shape}")
        return v

    def mat(self, n: int) -> np.ndarray:
        if self.Q is None:
            return np.zeros((n, n))
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (n, n):
            raise ValueError(f"parameter Q must be {n}x{n}, got shape {Q.shape}")
        return Q

    def check_skew(self, n: int) -> None:
        Q = self.mat(n)
        r = float(np.max(np.abs(Q + Q.T), initial=0.0))
        if r >= CONSTRAINT_TOL:
            raise ConstraintError("Q+Q^T=0", r)

    def check_thm2_i(self, n: int) -> None:
        self.check_skew(n)
        r = float(np.max(np.abs(self.mat(n) @ self.vec("e", n)), initial=0.0))
        if r >= CONSTRAINT_TOL:
            raise ConstraintError("Qe=0", r)

    def check_thm2_ii(self, n: int) -> None:
        self.check_skew(n)
        e, g = self.vec("e", n), self.vec("gamma", n)
        r = abs(float(e @ g))
        if r >= CONSTRAINT_TOL:
            raise ConstraintError("<gamma,e>=0", r)
        r = float(np.max(np.abs(self.mat(n) @ e + 2 * self.lam * g), initial=0.0))
        if r >= CONSTRAINT_TOL:
            raise ConstraintError("Qe=-2*lambda*gamma", r)

    def check_lemma42(self) -> None:
        gap = abs(self.k2 - self.k1 * self.k3)
        if gap == 0.0:
            raise ConstraintError("k2!=k1*k3", 0.0)


# generators phi(s) ------------------------------------------------------------------

PHI_KINDS = ("randers", "randers_type", "quadratic", "sqrt_quad", "power_series")


@dataclass(frozen=True)
class PhiFunction:
    """Generator ``phi`` of an (alpha, beta)-metric with ``phi(0) = 1``.

    ``kind`` selects the closed form; parameters are ``k``/``eps`` for
    ``randers_type`` and ``sqrt_quad``, ``kappa``/``eps`` for ``quadratic``
    and ``coeffs`` for ``power_series``.  ``s_max`` bounds the admissible
    ``|s|`` (``None`` means unbounded).
    """

    kind: str
    k: float = 0.0
    eps: float = 0.0
    kappa: float = 0.0
    coeffs: tuple = ()
    s_max: Optional[float] = None

    def __post_init__(self):
        if self.kind not in PHI_KINDS:
            raise ValueError(f"unknown phi kind {self.kind!r}; expected one of {PHI_KINDS}")
        if self.kind == "power_series":
            if len(self.coeffs) < 3:
                raise ValueError("power_series phi needs at least a_0, a_1, a_2")
            if self.coeffs[0] != 1.0:
                raise ValueError("power_series phi needs a_0 = 1")

    @classmethod
    def randers(cls, **kw) -> "PhiFunction":
        return cls("randers", **kw)

    @classmethod
    def square(cls, **kw) -> "PhiFunction":
        """``(1+s)^2``, the square metric."""
        return cls("quadratic", kappa=2.0, eps=1.0, **kw)

    def __call__(self, s):
        if self.kind == "randers":
            return 1.0 + s
        if self.kind == "randers_type":
            return sqrt(1.0 + self.k * s * s, label="1+k s^2") + self.eps * s
        if self.kind == "quadratic":
            return 1.0 + self.kappa * s + self.eps * s * s
        if self.kind == "sqrt_quad":
            return sqrt(1.0 + self.k * s * s, label="1+k s^2")
        out = 0.0
        for a in reversed(self.coeffs):
            out = out * s + a
        return out

    def d1(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "randers":
            return np.ones_like(s)
        if self.kind in ("randers_type", "sqrt_quad"):
            eps = self.eps if self.kind == "randers_type" else 0.0
            return self.k * s / np.sqrt(1 + self.k * s * s) + eps
        if self.kind == "quadratic":
            return self.kappa + 2 * self.eps * s
        return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coeffs))

    def d2(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "randers":
            return np.zeros_like(s)
        if self.kind in ("randers_type", "sqrt_quad"):
            return self.k / (1 + self.k * s * s) ** 1.5
        if self.kind == "quadratic":
            return np.full_like(s, 2 * self.eps)
        return np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coeffs, 2))

    def coefficients(self, K: int = 12) -> np.ndarray:
        """Taylor coefficients ``a_0 .. a_K`` at ``s = 0``."""
        a = np.zeros(K + 1)
        if self.kind == "randers":
            a[:2] = 1.0
        elif self.kind == "quadratic":
            a[:3] = [1.0, self.kappa, self.eps][: K + 1]
        elif self.kind in ("randers_type", "sqrt_quad"):
            for m in range(0, K // 2 + 1):
                a[2 * m] = _binom_half(m) * self.k**m
            if self.kind == "randers_type" and K >= 1:
                a[1] += self.eps
        else:
            c = np.asarray(self.coeffs, dtype=float)[: K + 1]
            a[: len(c)] = c
        return a

    def regularity_margin(self, s) -> np.ndarray:
        """``min(phi(s), phi(s) - s phi'(s))``; positive where ``F`` is regular."""
        s = np.asarray(s, dtype=float)
        p = np.asarray(self(s), dtype=float)
        return np.minimum(p, p - s * self.d1(s))

    @property
    def is_riemannian_type(self) -> bool:
        """True for ``sqrt(1+k s^2)``, which only rescales alpha."""
        return self.kind == "sqrt_quad"


def _binom_half(m: int) -> float:
    """Generalized binomial coefficient C(1/2, m)."""
    out = 1.0
    for j in range(m):
        out *= (0.5 - j) / (j + 1)
    return out


def phi_ode_residual(phi: PhiFunction, k1: float, k2: float, k3: float, s) -> np.ndarray:
    """Left minus right side of the phi equation for projectively flat (alpha,beta)-metrics."""
    s = np.asarray(s, dtype=float)
    lhs = (1 + (k1 + k3) * s**2 + k2 * s**4) * phi.d2(s)
    rhs = (k1 + k2 * s**2) * (np.asarray(phi(s), dtype=float) - s * phi.d1(s))
    return lhs - rhs


# Finsler metric ------------------------------------------------------------------

class FinslerMetric:
    """``F = alpha phi(beta/alpha)``."""

    def __init__(self, alpha: MetricField, beta: OneFormField, phi: PhiFunction, *, name: str = ""):
        if alpha.n != beta.n:
            raise ValueError("alpha and beta live in different dimensions")
        self.alpha = alpha
        self.beta = beta
        self.phi = phi
        self.n = alpha.n
        self.name = name or f"{phi.kind}({alpha.name},{beta.name})"
        self.domain = alpha.domain.intersect(beta.domain)

    def __repr__(self) -> str:
        return f"FinslerMetric({self.name!r}, n={self.n})"

    def expr(self, xs, ys, check: bool = True):
        """``F`` with coordinates ``xs`` and direction ``ys`` (lists of arrays or jets)."""
        a = self.alpha.fn(xs)
        b = self.beta.fn(xs)
        n = len(ys)
        a2 = 0.0
        for i in range(n):
            for j in range(n):
                aij = a[i][j]
                if not (isinstance(aij, float) and aij == 0.0):
                    a2 = aij * ys[i] * ys[j] + a2
        alpha = sqrt(a2, label="alpha^2")
        s = dot(b, ys) / alpha
        if check:
            self._check_s(s.value if isinstance(s, Jet3) else s)
        return alpha * self.phi(s)

    def _check_s(self, s) -> None:
        s = np.asarray(s, dtype=float)
        if self.phi.s_max is not None and np.any(np.abs(s) > self.phi.s_max):
            raise RegularityError(f"|s| = {float(np.max(np.abs(s))):.6g} exceeds s_max = {self.phi.s_max}")
        margin = self.phi.regularity_margin(s)
        if np.any(margin <= 0):
            raise RegularityError(f"phi(s) - s phi'(s) <= 0 at s = {float(np.ravel(s)[np.argmin(np.ravel(margin))]):.6g}")

    def s(self, x, y) -> np.ndarray:
        return self.beta.contract(x, y) / self.alpha.norm(x, y)

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = self.expr([x[..., i] for i in range(self.n)], [y[..., i] for i in range(self.n)])
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast_shapes(x.shape, y.shape)[:-1])


def ab_metric(alpha: MetricField, beta: OneFormField, phi: PhiFunction) -> FinslerMetric:
    return FinslerMetric(alpha, beta, phi)


# metrics and forms ----------------------------------------------------------------

def constant_curvature_metric(mu: float, form: str, n: int) -> MetricField:
    """Metric of constant sectional curvature ``mu`` in projective or conformal coordinates.

    projective: ``a_ij = ((1+mu|x|^2) delta_ij - mu x_i x_j) / (1+mu|x|^2)^2``
    conformal:  ``a_ij = 4 delta_ij / (1+mu|x|^2)^2``
    """
    mu = float(mu)
    if n < 2:
        raise ValueError("constant curvature models need n >= 2")
    dom = curvature_chart(mu) if mu != 0 else Domain(np.inf)
    if form == "projective":
        if mu == 0:
            m = euclidean_metric(n)
            return MetricField(n, m.fn, name="cc_projective(mu=0)", domain=dom)

        def fn(x):
            q = 1.0 + mu * _r2(x)
            inv2 = 1.0 / (q * q)
            return [[(q - mu * x[i] * x[i]) * inv2 if i == j else (-mu) * x[i] * x[j] * inv2
                     for j in range(n)] for i in range(n)]
        return MetricField(n, fn, name=f"cc_projective(mu={mu:g})", domain=dom)
    if form == "conformal":
        def fn(x):
            q = 1.0 + mu * _r2(x)
            f = 4.0 / (q * q)
            return [[f if i == j else 0.0 for j in range(n)] for i in range(n)]
        return MetricField(n, fn, name=f"cc_conformal(mu={mu:g})", domain=dom)
    raise ValueError(f"unknown form {form!r}; expected 'projective' or 'conformal'")


def conformal_exponent(mu: float, n: int) -> ScalarField:
    """``sigma = ln(4 / (1+mu|x|^2)^2)`` with ``a_ij = e^sigma delta_ij``."""
    mu = float(mu)

    def fn(x):
        q = 1.0 + mu * _r2(x)
        return log(4.0 / (q * q), label="4/(1+mu|x|^2)^2")
    return ScalarField(n, fn, name="sigma", domain=curvature_chart(mu) if mu else None)


def projective_pair(lam: float, mu: float, e, n: int) -> tuple[MetricField, OneFormField]:
    """Standard form ``(h, rho)``: conformal metric of curvature ``mu`` and its closed conformal 1-form."""
    lam, mu = float(lam), float(mu)
    e = np.asarray(e if e is not None else np.zeros(n), dtype=float)
    h = constant_curvature_metric(mu, "conformal", n)

    def fn(x):
        q = 1.0 + mu * _r2(x)
        f = 4.0 / (q * q)
        lin = lam + mu * _vdot(e, x)
        return [f * (-2.0 * lin * x[i] + q * float(e[i])) for i in range(n)]
    return h, OneFormField(n, fn, name="rho", domain=h.domain)


# conformal field families -------------------------------------------------------

FAMILIES = ("lemma22_cc", "lemma22_cf", "closed_i", "closed_ii", "thm2_i", "thm2_ii")


def family_metric(family: str, params: ModelParams, n: int) -> MetricField:
    """The metric each conformal family is conformal for."""
    if family in ("lemma22_cc", "closed_i"):
        return constant_curvature_metric(params.mu, "projective", n)
    if family in ("lemma22_cf", "closed_ii", "thm2_ii"):
        return constant_curvature_metric(params.mu, "conformal", n)
    if family == "thm2_i":
        return euclidean_metric(n)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def conformal_field(family: str, params: ModelParams, n: int) -> tuple[VectorField, ScalarField]:
    """Vector field ``V`` and conformal factor ``c`` of a catalog family.

    Raises :class:`ConstraintError` when the parameters break the family's
    constraints (skew ``Q``; ``Qe = 0`` for ``thm2_i``; ``<gamma,e> = 0`` and
    ``Qe = -2 lambda gamma`` for ``thm2_ii``).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    lam, mu, tau = float(params.lam), float(params.mu), float(params.tau)
    e, d, eta, gamma = (params.vec(k, n) for k in ("e", "d", "eta", "gamma"))
    Q = params.mat(n)
    if family == "thm2_i":
        params.check_thm2_i(n)
    elif family == "thm2_ii":
        params.check_thm2_ii(n)
    else:
        params.check_skew(n)
    dom = family_metric(family, params, n).domain

    if family == "lemma22_cc":
        def V(x):
            w = sqrt(1.0 + mu * _r2(x), label="1+mu|x|^2")
            r2, dx, ex, qx = _r2(x), _vdot(d, x), _vdot(eta, x), _matvec(Q, x)
            lin = -2.0 * (lam * w + dx) + mu * ex
            return [lin * x[i] + 2.0 * r2 * float(d[i]) / (1.0 + w) + qx[i] + float(eta[i])
                    for i in range(n)]

        def c(x):
            return (lam + _vdot(d, x)) / sqrt(1.0 + mu * _r2(x), label="1+mu|x|^2")
    elif family == "lemma22_cf":
        def V(x):
            r2, qx = _r2(x), _matvec(Q, x)
            lin = -2.0 * (lam + _vdot(d, x))
            return [lin * x[i] + r2 * float(d[i]) + qx[i] + float(eta[i]) for i in range(n)]

        def c(x):
            q = 1.0 + mu * _r2(x)
            return (lam * (1.0 - mu * _r2(x)) + _vdot(mu * eta + d, x)) / q
    elif family == "closed_i":
        def V(x):
            w = sqrt(1.0 + mu * _r2(x), label="1+mu|x|^2")
            return [w * (lam * x[i] + float(e[i])) for i in range(n)]

        def c(x):
            w = sqrt(1.0 + mu * _r2(x), label="1+mu|x|^2")
            return (-lam + mu * _vdot(e, x)) / (2.0 * w)
    elif family == "closed_ii":
        def V(x):
            q = 1.0 + mu * _r2(x)
            lin = -2.0 * (lam + mu * _vdot(e, x))
            return [lin * x[i] + q * float(e[i]) for i in range(n)]

        def c(x):
            q = 1.0 + mu * _r2(x)
            return (lam * (1.0 - mu * _r2(x)) + 2.0 * mu * _vdot(e, x)) / q
    elif family == "thm2_i":
        def V(x):
            qx = _matvec(Q, x)
            return [-2.0 * tau * x[i] + qx[i] + float(gamma[i]) for i in range(n)]

        def c(x):
            return tau
    else:  # thm2_ii
        def V(x):
            r2, gx, qx = _r2(x), _vdot(gamma, x), _matvec(Q, x)
            return [2.0 * mu * gx * x[i] + (1.0 - mu * r2) * float(gamma[i]) + qx[i] for i in range(n)]

        def c(x):
            return 0.0
    return (VectorField(n, V, name=family, domain=dom),
            ScalarField(n, c, name=f"c[{family}]", domain=dom))


# projectively flat Randers data -------------------------------------------------

def _prop52_parts(lam, mu, e, x):
    r2 = _r2(x)
    ex = _vdot(e, x)
    e2 = float(np.dot(e, e))
    rad = (lam * lam + (1.0 + e2) * mu) * r2 + (2.0 * lam - mu * ex) * ex + e2 + 1.0
    xi = sqrt(rad, label="xi^2")
    return r2, ex, xi


def prop52_fields(lam: float, mu: float, e, n: int):
    """``(alpha, beta, xi, tau)`` of the projectively flat Randers family of isotropic S-curvature."""
    lam, mu = float(lam), float(mu)
    e = np.asarray(e if e is not None else np.zeros(n), dtype=float)
    alpha = constant_curvature_metric(mu, "projective", n)

    def beta(x):
        r2, ex, xi = _prop52_parts(lam, mu, e, x)
        f = (lam - mu * ex) / (1.0 + mu * r2)
        inv = 1.0 / xi
        return [(f * x[i] + float(e[i])) * inv for i in range(n)]

    def xi(x):
        return _prop52_parts(lam, mu, e, x)[2]

    def tau(x):
        _, ex, xi_ = _prop52_parts(lam, mu, e, x)
        return (lam - mu * ex) / (2.0 * xi_)
    dom = alpha.domain
    return (alpha, OneFormField(n, beta, name="beta[prop52]", domain=dom),
            ScalarField(n, xi, name="xi", domain=dom), ScalarField(n, tau, name="tau", domain=dom))


def randers_beta_prop52(lam: float, mu: float, e, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(beta(x, y), xi(x), tau(x))`` of the projectively flat Randers family."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1]
    _, b, xi, tau = prop52_fields(lam, mu, e, n)
    return b.contract(x, y), xi(x), tau(x)


# identifier table -----------------------------------------------------------------

CATALOG: dict[str, tuple[str, str]] = {
    "euclidean": ("metric", "n"),
    "cc_projective": ("metric", "n, mu"),
    "cc_conformal": ("metric", "n, mu"),
    "projective_pair": ("metric+one_form", "n, lambda, mu, e"),
    "prop52_randers": ("metric+one_form", "n, lambda, mu, e"),
    "constant": ("one_form", "n, b"),
    "zero": ("one_form", "n"),
    "lemma22_cc": ("vector_field", "lambda, mu, d, eta, Q"),
    "lemma22_cf": ("vector_field", "lambda, mu, d, eta, Q"),
    "closed_i": ("vector_field", "lambda, mu, e"),
    "closed_ii": ("vector_field", "lambda, mu, e"),
    "thm2_i": ("vector_field", "tau, gamma, Q, e  [Qe=0]"),
    "thm2_ii": ("vector_field", "mu, lambda, gamma, Q, e  [<gamma,e>=0, Qe=-2*lambda*gamma]"),
    "prop52": ("model", "lambda, mu, e"),
    "randers": ("phi", "-"),
    "randers_type": ("phi", "k, eps"),
    "quadratic": ("phi", "kappa, eps"),
    "sqrt_quad": ("phi", "k"),
    "power_series": ("phi", "coeffs"),
    "closed_form": ("triple", "k1, k2, k3"),
    "ode": ("triple", "k1, k2, k3, u0, v0, w0"),
    "navigation": ("triple", "-"),
    "randers_projective": ("triple", "-"),
}
