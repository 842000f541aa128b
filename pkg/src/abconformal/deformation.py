"""Deformations ``h^2 = u(b^2) alpha^2 + v(b^2) beta^2``, ``rho = w(b^2) beta``.

A :class:`UVWTriple` bundles ``u, v, w`` as functions of ``t = b^2``.  Every
kind can be evaluated on jets, so deformed metrics stay differentiable to
third order and feed straight into :class:`~abconformal.geometry.Connection`.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from .checks import CheckReport, Samples, check_ab_system
from .geometry import Connection, MetricField, OneFormField, ScalarField, VectorField
from .jets import DomainError, Jet3, compose, dot, exp, jet_inverse, sqrt

TRIPLE_KINDS = ("closed_form", "ode", "navigation", "randers_projective", "custom")
DEFAULT_T_MAX = 0.81
QUAD_TOL = 1e-11
ODE_RTOL = 1e-12
ODE_ATOL = 1e-14


def _denominator(k1, k2, k3, t):
    return 1.0 + (k1 + k3) * t + k2 * t * t


def denominator_root(k1: float, k2: float, k3: float, t: float) -> Optional[float]:
    """Smallest root of ``1 + (k1+k3) s + k2 s^2`` in ``[0, t]``, if any."""
    roots = np.roots([k2, k1 + k3, 1.0]) if k2 != 0 else (
        np.array([-1.0 / (k1 + k3)]) if k1 + k3 != 0 else np.array([]))
    real = sorted(float(r.real) for r in np.atleast_1d(roots) if abs(r.imag) < 1e-14 and 0 <= r.real <= t)
    return real[0] if real else None


def _check_denominator(k1, k2, k3, t_hi):
    r = denominator_root(k1, k2, k3, t_hi)
    if r is not None:
        raise DomainError(f"1+(k1+k3)t+k2 t^2 vanishes at t = {r:.12g} inside [0, {t_hi:g}]")


def _t1(t, order: int = 3) -> Jet3:
    t = np.asarray(t, dtype=float)
    return Jet3.variables(t[..., None], order=order)[0]


def _scalar_jet(value, d1, d2, d3) -> Jet3:
    value = np.asarray(value, dtype=float)
    return Jet3(1, value, np.asarray(d1)[..., None], np.asarray(d2)[..., None, None],
                np.asarray(d3)[..., None, None, None], order=3)


def _derivs(j) -> tuple:
    if not isinstance(j, Jet3):
        z = np.zeros_like(np.asarray(j, dtype=float))
        return np.asarray(j, dtype=float), z, z, z
    return j.value, j.grad[..., 0], j.hess[..., 0, 0], j.third[..., 0, 0, 0]


# closed form -----------------------------------------------------------------------

def chi(k1: float, k2: float, k3: float, t) -> np.ndarray:
    """``chi(t) = (1/2) int_0^t (k2 s + k3) / (1 + (k1+k3) s + k2 s^2) ds`` by adaptive quadrature."""
    t = np.asarray(t, dtype=float)
    if t.size:
        _check_denominator(k1, k2, k3, float(t.max()))
    if k2 == 0 and k3 == 0:
        return np.zeros_like(t)

    def integrand(s):
        return (k2 * s + k3) / _denominator(k1, k2, k3, s)
    flat = np.array([0.5 * quad(integrand, 0.0, float(ti), epsabs=QUAD_TOL, epsrel=1e-13, limit=200)[0]
                     for ti in t.ravel()])
    return flat.reshape(t.shape)


def _closed_form_jets(k1, k2, k3, t):
    T = _t1(t, 3)
    q = (k2 * _t1(t, 2) + k3) / _denominator(k1, k2, k3, _t1(t, 2))
    X = _scalar_jet(chi(k1, k2, k3, t), 0.5 * q.value, 0.5 * q.grad[..., 0], 0.5 * q.hess[..., 0, 0])
    u = exp(2.0 * X)
    v = (k1 + k3 + k2 * T) * u
    w = sqrt(_denominator(k1, k2, k3, T), label="1+(k1+k3)t+k2t^2") * exp(X)
    return u, v, w


def uvw_closed_form(k1: float, k2: float, k3: float, t):
    """``u = e^{2chi}``, ``v = (k1+k3+k2 t) u``, ``w = sqrt(1+(k1+k3)t+k2t^2) e^chi``."""
    t = np.asarray(t, dtype=float)
    c = chi(k1, k2, k3, t)
    u = np.exp(2 * c)
    return u, (k1 + k3 + k2 * t) * u, np.sqrt(_denominator(k1, k2, k3, t)) * np.exp(c)


# ODE ---------------------------------------------------------------------------

def uvw_rhs(k1: float, k2: float, k3: float, t, u, v, w):
    """Right-hand side of the ``(u, v, w)`` system; works on arrays and jets."""
    D = _denominator(k1, k2, k3, t)
    du = (v - k1 * u) / D
    dv = (u * (k2 * u - k3 * v - 2 * k1 * v) + 2 * v * v) / (u * D)
    dw = w * (3 * v - k3 * u - 2 * k1 * u) / (2 * u * D)
    return du, dv, dw


def _solve(k1, k2, k3, initial, t_end, t_eval=None, dense=False):
    _check_denominator(k1, k2, k3, t_end)
    if not float(initial[0]) > 0:
        raise DomainError(f"initial u must be > 0, got {float(initial[0]):.6g}")

    def f(t, z):
        return list(uvw_rhs(k1, k2, k3, t, *z))

    def u_vanishes(t, z):
        return z[0] - 1e-10
    u_vanishes.terminal = True
    sol = solve_ivp(f, (0.0, t_end), list(initial), method="RK45", rtol=ODE_RTOL, atol=ODE_ATOL,
                    t_eval=t_eval, dense_output=dense, events=u_vanishes)
    if sol.status == 1:
        raise DomainError(f"u reached 0 at t = {float(sol.t_events[0][0]):.6g}; integration halted")
    if sol.status < 0:
        raise RuntimeError(f"uvw integration failed: {sol.message}")
    return sol


def uvw_ode_solve(k1: float, k2: float, k3: float, initial, t):
    """Integrate the ``(u, v, w)`` system from ``t = 0`` to each requested ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    flat = t.ravel()
    if not flat.size or float(flat.max()) == 0.0:
        u0, v0, w0 = (np.full(t.shape, float(x)) for x in initial)
        return u0, v0, w0
    grid = np.unique(flat)
    sol = _solve(k1, k2, k3, initial, float(grid[-1]), t_eval=grid)
    idx = np.searchsorted(grid, flat)
    return tuple(sol.y[k][idx].reshape(t.shape) for k in range(3))


def _ode_jets(k1, k2, k3, t, state):
    """Third-order Taylor jets of the solution at ``t`` from the state there (Picard on jets)."""
    u0, v0, w0 = (np.asarray(s, dtype=float) for s in state)
    z = np.zeros_like(u0)
    U, V, W = (_scalar_jet(s, z, z, z) for s in (u0, v0, w0))
    T = _t1(t, 3)
    for _ in range(3):
        du, dv, dw = uvw_rhs(k1, k2, k3, T, U, V, W)
        U, V, W = (_scalar_jet(s, d.value, d.grad[..., 0], d.hess[..., 0, 0])
                   for s, d in ((u0, du), (v0, dv), (w0, dw)))
    return U, V, W


# triple -------------------------------------------------------------------------

class UVWTriple:
    """Functions ``u, v, w`` of ``t = b^2`` on ``[0, t_max]``.

    Use the constructors :meth:`closed_form`, :meth:`ode`, :meth:`navigation`,
    :meth:`randers_projective` and :meth:`custom`.
    """

    def __init__(self, kind: str, jets: Callable, t_max: float = DEFAULT_T_MAX, params: dict | None = None):
        if kind not in TRIPLE_KINDS:
            raise ValueError(f"unknown triple kind {kind!r}; expected one of {TRIPLE_KINDS}")
        self.kind = kind
        self._jets = jets
        self.t_max = float(t_max)
        self.params = dict(params or {})
        self._validate()

    def __repr__(self) -> str:
        return f"UVWTriple({self.kind!r}, t_max={self.t_max:g}, {self.params})"

    def _validate(self):
        grid = np.linspace(0.0, self.t_max, 201)
        u, _, w = self(grid)
        if np.any(u <= 0):
            raise DomainError(f"u <= 0 at t = {grid[np.argmax(u <= 0)]:.6g} for {self.kind} triple")
        if np.any(w == 0):
            raise DomainError(f"w = 0 at t = {grid[np.argmax(w == 0)]:.6g} for {self.kind} triple")

    def _range(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-14) or np.any(t > self.t_max):
            raise DomainError(f"b^2 = {float(np.max(t)):.6g} outside the triple range [0, {self.t_max:g}]")
        return np.clip(t, 0.0, None)

    def __call__(self, t):
        """Plain values ``(u, v, w)`` at ``t``."""
        u, v, w = self._jets(self._range(t))
        return tuple(_derivs(j)[0] for j in (u, v, w))

    def derivatives(self, t) -> np.ndarray:
        """Array ``[f, f', f'', f''']`` for ``f = u, v, w``; shape ``(3, 4) + t.shape``."""
        return np.array([np.array(_derivs(j)) for j in self._jets(self._range(t))])

    def evaluate(self, t):
        """``(u(t), v(t), w(t))`` where ``t`` may be an array or a jet."""
        if not isinstance(t, Jet3):
            return self(t)
        d = self.derivatives(t.value)
        return tuple(compose(t, *d[k]) for k in range(3))

    @classmethod
    def closed_form(cls, k1: float, k2: float, k3: float, t_max: float = DEFAULT_T_MAX) -> "UVWTriple":
        _check_denominator(k1, k2, k3, t_max)
        return cls("closed_form", lambda t: _closed_form_jets(k1, k2, k3, t), t_max,
                   {"k1": k1, "k2": k2, "k3": k3})

    @classmethod
    def ode(cls, k1: float, k2: float, k3: float, initial=None, t_max: float = DEFAULT_T_MAX) -> "UVWTriple":
        """Numerical solution of the ``(u, v, w)`` system; ``initial`` defaults to ``(1, k1+k3, 1)``."""
        initial = tuple(float(s) for s in (initial if initial is not None else (1.0, k1 + k3, 1.0)))
        if initial[0] <= 0:
            raise DomainError("ode triple needs u(0) > 0")
        sol = _solve(k1, k2, k3, initial, t_max, dense=True)

        def jets(t):
            t = np.asarray(t, dtype=float)
            state = sol.sol(t.ravel()).reshape((3,) + t.shape)
            return _ode_jets(k1, k2, k3, t, state)
        return cls("ode", jets, t_max, {"k1": k1, "k2": k2, "k3": k3, "initial": list(initial)})

    @classmethod
    def navigation(cls, t_max: float = DEFAULT_T_MAX) -> "UVWTriple":
        """``(1 - t, t - 1, t - 1)``."""
        def jets(t):
            T = _t1(t)
            return 1.0 - T, T - 1.0, T - 1.0
        return cls("navigation", jets, t_max)

    @classmethod
    def randers_projective(cls, t_max: float = DEFAULT_T_MAX) -> "UVWTriple":
        """``(1, 0, 1/sqrt(1 - t))``."""
        def jets(t):
            T = _t1(t)
            z = np.zeros_like(np.asarray(t, dtype=float))
            return (_scalar_jet(z + 1.0, z, z, z), _scalar_jet(z, z, z, z),
                    1.0 / sqrt(1.0 - T, label="1-b^2"))
        return cls("randers_projective", jets, t_max)

    @classmethod
    def custom(cls, u: Callable, v: Callable, w: Callable, t_max: float = DEFAULT_T_MAX) -> "UVWTriple":
        """User functions of one jet-or-array argument."""
        def jets(t):
            T = _t1(t)
            return tuple(_lift(f(T), t) for f in (u, v, w))
        return cls("custom", jets, t_max)


def _lift(j, t):
    if isinstance(j, Jet3):
        return j
    z = np.zeros_like(np.asarray(t, dtype=float))
    return _scalar_jet(z + np.asarray(j, dtype=float), z, z, z)


# deforming (alpha, beta) -------------------------------------------------------------

def _b_squared(a, b):
    ainv = jet_inverse(a)
    return dot(b, [dot(row, b) for row in ainv])


def b_squared(alpha: MetricField, beta: OneFormField, x) -> np.ndarray:
    """``a^{ij} b_i b_j`` at ``x``."""
    x = np.asarray(x, dtype=float)
    b = beta(x)
    return np.einsum("...i,...ij,...j->...", b, np.linalg.inv(alpha(x)), b)


def deformed_fields(alpha: MetricField, beta: OneFormField, triple: UVWTriple) -> tuple[MetricField, OneFormField]:
    """``h_ij = u a_ij + v b_i b_j`` and ``p_i = w b_i`` as jet-evaluable fields."""
    n = alpha.n
    dom = alpha.domain.intersect(beta.domain)

    def parts(x):
        a, b = alpha.fn(x), beta.fn(x)
        return a, b, triple.evaluate(_b_squared(a, b))

    def h(x):
        a, b, (u, v, _) = parts(x)
        return [[u * a[i][j] + v * b[i] * b[j] for j in range(n)] for i in range(n)]

    def p(x):
        _, b, (_, _, w) = parts(x)
        return [w * b[i] for i in range(n)]
    return (MetricField(n, h, name=f"h[{triple.kind}]", domain=dom),
            OneFormField(n, p, name=f"rho[{triple.kind}]", domain=dom))


def deform(alpha: MetricField, beta: OneFormField, triple: UVWTriple, x, y):
    """Values ``(h^2, rho, b^2)`` at ``(x, y)``; raises when ``h^2 <= 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = b_squared(alpha, beta, x)
    u, v, w = triple(t)
    bet = beta.contract(x, y)
    h2 = u * alpha.norm_sq(x, y) + v * bet**2
    if np.any(h2 <= 0):
        raise DomainError(f"deformed metric not positive: h^2 = {float(np.min(h2)):.6g}")
    return h2, w * bet, t


def randers_b2_from_p2(p2):
    """``b^2 = p^2 / (1 + p^2)``."""
    p2 = np.asarray(p2, dtype=float)
    if np.any(p2 < 0):
        raise ValueError("p^2 must be >= 0")
    return p2 / (1.0 + p2)


def randers_p2_from_b2(b2):
    """``p^2 = b^2 / (1 - b^2)``."""
    b2 = np.asarray(b2, dtype=float)
    if np.any((b2 < 0) | (b2 >= 1)):
        raise ValueError("b^2 must lie in [0, 1)")
    return b2 / (1.0 - b2)


def xv_b_squared(alpha: MetricField, beta: OneFormField, V: VectorField, x) -> np.ndarray:
    """``X_V(b^2) = 2 V^j b^i b_{i;j}``."""
    x = np.asarray(x, dtype=float)
    conn = Connection(alpha, x, order=1)
    bj = beta.jet(x, order=1)
    bup = conn.raise_index(bj.val)
    return 2 * np.einsum("...j,...i,...ij->...", V(x), bup, conn.cov1(bj))


def check_lemma41(alpha: MetricField, beta: OneFormField, V: VectorField, c: ScalarField,
                  triple: UVWTriple, samples: Samples,
                  tolerances: tuple[float, float] = (1e-9, 1e-8)) -> tuple[CheckReport, CheckReport]:
    """Conformal system for ``(alpha, beta)`` next to the same system for the deformed ``(h, rho)``."""
    h, rho = deformed_fields(alpha, beta, triple)
    before = check_ab_system(alpha, beta, V, c, samples, tolerances[0], name="ab_system[alpha,beta]")
    after = check_ab_system(h, rho, V, c, samples, tolerances[1], name=f"ab_system[h,rho;{triple.kind}]")
    return before, after
