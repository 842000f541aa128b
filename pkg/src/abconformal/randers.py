"""Projectively flat Randers metrics ``F = alpha + beta`` of isotropic S-curvature.

``alpha`` is the constant curvature metric in projective coordinates and
``beta`` is determined by ``(lam, mu, e)``.  Flag curvature is available in
closed form and from covariant derivatives of ``beta`` alone; the two must
agree.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import _r2, _vdot, constant_curvature_metric, prop52_fields
from .geometry import Connection, MetricField, OneFormField, ScalarField
from .jets import DomainError, sqrt


class RandersModel:
    """Model data for parameters ``(lam, mu, e)`` in dimension ``n``."""

    def __init__(self, lam: float, mu: float, e=None, n: int = 3):
        self.lam = float(lam)
        self.mu = float(mu)
        self.n = int(n)
        self.e = np.zeros(n) if e is None else np.asarray(e, dtype=float)
        if self.e.shape != (n,):
            raise ValueError(f"e must have length {n}")
        self.alpha, self.beta, self.xi, self.tau = prop52_fields(self.lam, self.mu, self.e, n)
        self.domain = self.alpha.domain
        lam_, mu_, e_ = self.lam, self.mu, self.e

        def c(x):
            return (-lam_ + mu_ * _vdot(e_, x)) / (2.0 * sqrt(1.0 + mu_ * _r2(x), label="1+mu|x|^2"))

        def rho(x):
            q = 1.0 + mu_ * _r2(x)
            lin = lam_ - mu_ * _vdot(e_, x)
            den = q * sqrt(q, label="1+mu|x|^2")
            return [(lin * x[i] + q * float(e_[i])) / den for i in range(n)]
        self.c = ScalarField(n, c, name="c", domain=self.domain)
        self.rho = OneFormField(n, rho, name="rho", domain=self.domain)

    def __repr__(self) -> str:
        return f"RandersModel(lam={self.lam:g}, mu={self.mu:g}, e={self.e.tolist()})"

    @property
    def critical(self) -> float:
        """``lam^2 + (1 + |e|^2) mu``; zero exactly when ``mu + 4 tau^2`` vanishes."""
        return self.lam**2 + (1 + self.e @ self.e) * self.mu

    def p_squared(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        ex = x @ self.e
        return self.e @ self.e + (self.lam**2 * r2 + 2 * self.lam * ex - self.mu * ex**2) / (1 + self.mu * r2)

    def b_squared(self, x) -> np.ndarray:
        p2 = self.p_squared(x)
        return p2 / (1 + p2)

    def c_from_tau(self, x) -> np.ndarray:
        """``-tau / sqrt(1 - b^2)``; should equal :attr:`c`."""
        return -self.tau(x) / np.sqrt(1 - self.b_squared(x))

    def delta_squared(self, x) -> np.ndarray:
        """``|grad c|^2 + mu c^2``, a constant of the model (negative is possible when mu < 0)."""
        x = np.asarray(x, dtype=float)
        conn = Connection(self.alpha, x, order=1)
        cj = self.c.jet(x, order=1)
        return conn.grad_norm_sq(cj) + self.mu * cj.val**2

    def delta_variation(self, x) -> np.ndarray:
        """``|delta^2(x) - delta^2(0)| / max(|delta^2(0)|, 1e-12)``."""
        d2 = self.delta_squared(x)
        d0 = float(self.delta_squared(np.zeros((1, self.n)))[0])
        return np.abs(d2 - d0) / max(abs(d0), 1e-12)

    def delta(self, x) -> np.ndarray:
        """``sqrt(|grad c|^2 + mu c^2)``; raises where the radicand is negative."""
        d2 = self.delta_squared(x)
        if np.any(d2 < -1e-12):
            raise DomainError(f"delta^2 < 0 (min {float(np.min(d2)):.6g})")
        return np.sqrt(np.clip(d2, 0.0, None))

    def F(self, x, y) -> np.ndarray:
        return self.alpha.norm(x, y) + self.beta.contract(x, y)


def randers_model(lam: float, mu: float, e=None, n: int = 3) -> RandersModel:
    return RandersModel(lam, mu, e, n)


def s_curvature_residual(a: MetricField, b: OneFormField, tau: ScalarField, x) -> np.ndarray:
    """Sup-norm of ``b_{i;j} - 2 tau (a_ij - b_i b_j)`` per point."""
    x = np.asarray(x, dtype=float)
    conn = Connection(a, x, order=1)
    bj = b.jet(x, order=1)
    t = np.broadcast_to(tau(x), x.shape[:-1])
    r = conn.cov1(bj) - 2 * t[..., None, None] * (conn.g - bj.val[..., :, None] * bj.val[..., None, :])
    return np.max(np.abs(r), axis=(-1, -2))


def _positive_F(alpha, beta):
    F = alpha + beta
    if np.any(F <= 0):
        raise DomainError(f"alpha + beta <= 0 (min {float(np.min(F)):.6g})")
    return F


def flag_curvature_closed_form(model: RandersModel, x, y) -> np.ndarray:
    """``K = (3/4)(mu + 4 tau^2)(alpha - beta)/(alpha + beta) + mu/4``."""
    al = model.alpha.norm(x, y)
    be = model.beta.contract(x, y)
    _positive_F(al, be)
    t = model.tau(x)
    return 0.75 * (model.mu + 4 * t * t) * (al - be) / (al + be) + model.mu / 4


def flag_curvature_projective(a: MetricField, b: OneFormField, x, y) -> np.ndarray:
    """Flag curvature of ``F = alpha + beta`` from covariant derivatives of ``b`` only.

    ``K F^2 = mu alpha^2 + 3 (Phi/2F)^2 - Psi/(2F)`` with ``Phi = b_{i;j} y^i y^j``
    and ``Psi = b_{i;j;k} y^i y^j y^k``.  The term ``mu alpha^2`` is taken as
    ``Ric(y, y)/(n - 1)``, which equals it for a metric of constant curvature.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = a.n
    if n < 2:
        raise ValueError("flag curvature needs n >= 2")
    conn = Connection(a, x, order=2)
    bj = b.jet(x, order=2)
    al = np.sqrt(np.einsum("...ij,...i,...j->...", conn.g, y, y))
    F = _positive_F(al, np.einsum("...i,...i->...", bj.val, y))
    Phi = np.einsum("...ij,...i,...j->...", conn.cov1(bj), y, y)
    Psi = np.einsum("...ijk,...i,...j,...k->...", conn.cov2(bj), y, y, y)
    ric = np.einsum("...jk,...j,...k->...", conn.ricci(), y, y) / (n - 1)
    return (ric + 3 * (Phi / (2 * F)) ** 2 - Psi / (2 * F)) / F**2


def tau0_identity_residual(model: RandersModel, x, y) -> np.ndarray:
    """``|tau_0 + (mu + 4 tau^2) beta / 2|`` with ``tau_0 = tau_{x^i} y^i``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tj = model.tau.jet(x, order=1)
    tau0 = np.einsum("...i,...i->...", tj.d1, y)
    return np.abs(tau0 + 0.5 * (model.mu + 4 * tj.val**2) * model.beta.contract(x, y))


@dataclass
class CompactCaseQuantities:
    """Local quantities of the positive curvature case at sample points."""

    delta: np.ndarray
    c: np.ndarray
    beta: np.ndarray            # 2 c_0 / sqrt(4 delta^2 + mu^2 - 4 mu c^2)
    K: np.ndarray               # flag curvature in terms of c, c_0, delta
    tau_sq: np.ndarray          # mu^2 c^2 / (4 delta^2 + mu^2 - 4 mu c^2)
    A: np.ndarray
    A_sup: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    K_lower: np.ndarray
    K_upper: np.ndarray

    def bound_slack(self) -> np.ndarray:
        """Smallest slack of ``K_lower <= K1 <= K <= K2 <= K_upper``; negative means violated."""
        return np.minimum.reduce([self.K1 - self.K_lower, self.K - self.K1,
                                  self.K2 - self.K, self.K_upper - self.K2])

    def bounds_hold(self, slack: float = -1e-9) -> bool:
        return bool(np.all(self.bound_slack() >= slack) and np.all(1 - 2 * self.A > 0))


def compact_case_quantities(model: RandersModel, x, y) -> CompactCaseQuantities:
    """Evaluate the positive curvature expressions for ``beta``, ``K``, ``tau^2`` and the bounds on ``K``."""
    if not model.mu > 0:
        raise DomainError("compact case quantities need mu > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mu = model.mu
    conn = Connection(model.alpha, x, order=1)
    cj = model.c.jet(x, order=1)
    c = cj.val
    grad2 = conn.grad_norm_sq(cj)
    d2 = grad2 + mu * c * c
    delta = np.sqrt(d2)
    S2 = 4 * d2 + mu * mu - 4 * mu * c * c
    if np.any(S2 <= 0):
        raise DomainError(f"4 delta^2 + mu^2 - 4 mu c^2 <= 0 (min {float(np.min(S2)):.6g})")
    S = np.sqrt(S2)
    R = np.sqrt(np.clip(d2 - mu * c * c, 0.0, None))
    c0 = np.einsum("...i,...i->...", cj.d1, y)
    al = np.sqrt(np.einsum("...ij,...i,...j->...", conn.g, y, y))
    W = 4 * d2 + mu * mu
    K = 0.75 * mu * W * (al * S - 2 * c0) / (S2 * (al * S + 2 * c0)) + mu / 4
    A = R / S
    K1 = 3 * W / (4 * mu) * (1 - 2 * A) ** 2 + mu / 4
    K2 = 3 * W / (4 * mu) * (1 + 2 * A) ** 2 + mu / 4
    root = np.sqrt(W)
    return CompactCaseQuantities(
        delta=delta, c=c, beta=2 * c0 / S, K=K, tau_sq=mu * mu * c * c / S2, A=A, A_sup=delta / root,
        K1=K1, K2=K2, K_lower=(6 * d2 + mu * mu - 3 * delta * root) / mu,
        K_upper=(6 * d2 + mu * mu + 3 * delta * root) / mu)


def bound_pair_k1k2(model: RandersModel, x):
    """``(K1, K2)`` from the square-root form (no ``A`` substitution); cross-checks :func:`compact_case_quantities`."""
    x = np.asarray(x, dtype=float)
    mu = model.mu
    conn = Connection(model.alpha, x, order=1)
    cj = model.c.jet(x, order=1)
    c = cj.val
    d2 = conn.grad_norm_sq(cj) + mu * c * c
    S = np.sqrt(4 * d2 + mu * mu - 4 * mu * c * c)
    R = np.sqrt(np.clip(d2 - mu * c * c, 0.0, None))
    W = 4 * d2 + mu * mu
    K1 = 3 * mu * W * (S - 2 * R) / (4 * S * S * (S + 2 * R)) + mu / 4
    K2 = 3 * mu * W * (S + 2 * R) / (4 * S * S * (S - 2 * R)) + mu / 4
    return K1, K2


def delta_bar(model: RandersModel, x) -> np.ndarray:
    """``sqrt(|grad f|^2 + mu f^2)`` with ``f = 2 tau / sqrt(mu + 4 tau^2)``.

    Points where ``mu + 4 tau^2`` vanishes are returned as NaN.
    """
    x = np.asarray(x, dtype=float)
    mu = model.mu
    tau = model.tau

    def f(xs):
        t = tau.fn(xs)
        return 2.0 * t / sqrt(mu + 4.0 * t * t, label="mu+4 tau^2")
    fs = ScalarField(model.n, f, name="f", domain=model.domain)
    guard = mu + 4 * tau(x) ** 2
    out = np.full(x.shape[:-1], np.nan)
    ok = guard > 0
    if np.any(ok):
        xo = x[ok]
        conn = Connection(model.alpha, xo, order=1)
        fj = fs.jet(xo, order=1)
        out[ok] = np.sqrt(conn.grad_norm_sq(fj) + mu * fj.val**2)
    return out


def delta_bar_conversion_residual(model: RandersModel, x) -> np.ndarray:
    """``|delta - sqrt(4 delta^2 + mu^2) / (2 sqrt(mu)) * delta_bar|`` at each point."""
    if not model.mu > 0:
        raise DomainError("delta_bar needs mu > 0")
    d = model.delta(x)
    return np.abs(d - np.sqrt(4 * d * d + model.mu**2) / (2 * np.sqrt(model.mu)) * delta_bar(model, x))


__all__ = [
    "RandersModel", "randers_model", "s_curvature_residual", "flag_curvature_closed_form",
    "flag_curvature_projective", "tau0_identity_residual", "CompactCaseQuantities",
    "compact_case_quantities", "bound_pair_k1k2", "delta_bar", "delta_bar_conversion_residual",
    "constant_curvature_metric",
]
