"""Residual checks for conformal vector fields of Riemannian and (alpha,beta)-metrics.

Each ``check_*`` function evaluates one characterization at a batch of
sampled ``(x, y)`` and returns a :class:`CheckReport`.  Residuals are
normalized by the natural positive scale of the equation (``alpha^2``, ``F``
or ``phi alpha^2``) so that one tolerance is meaningful across models.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .catalog import FinslerMetric, PhiFunction
from .geometry import (Connection, Domain, MetricField, OneFormField, ScalarField, VectorField,
                       lower)
from .jets import Jet3, dot, is_spd

log = logging.getLogger(__name__)

MAX_CONDITION = 1e6


# reports -------------------------------------------------------------------------

@dataclass
class CheckReport:
    """Per-sample residuals of one check together with their aggregates."""

    name: str
    sample_count: int
    seed: Optional[int]
    tolerance: float
    residuals: list
    max_residual: float
    mean_residual: float
    passed: bool
    details: dict = field(default_factory=dict)

    @classmethod
    def from_residuals(cls, name: str, residuals, tolerance: float, seed: Optional[int] = None,
                       details: Optional[dict] = None) -> "CheckReport":
        r = np.abs(np.asarray(residuals, dtype=float)).ravel()
        mx = float(np.max(r)) if r.size else 0.0
        mean = float(np.mean(r)) if r.size else 0.0
        return cls(name, int(r.size), seed, float(tolerance), r.tolist(), mx, mean,
                   bool(r.size and mx < tolerance), _plain(details or {}))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CheckReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "CheckReport":
        return cls.from_dict(json.loads(s))

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: max {self.max_residual:.3e} (tol {self.tolerance:.1e}, n={self.sample_count})"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# sampling ------------------------------------------------------------------------

@dataclass
class Samples:
    """Points ``x`` (uniform in a ball) and unit directions ``y``."""

    x: np.ndarray
    y: np.ndarray
    seed: Optional[int] = None
    radius: float = 0.5

    def __len__(self) -> int:
        return len(self.x)

    def subset(self, mask) -> "Samples":
        return Samples(self.x[mask], self.y[mask], self.seed, self.radius)


def draw_samples(n: int, count: int, seed: int, radius: float = 0.5, domain: Domain | None = None,
                 metric: MetricField | None = None,
                 accept: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None) -> Samples:
    """Seeded uniform samples in the ball of ``radius`` with rejection.

    Rejected are points outside ``domain``, points where ``metric`` has
    condition number above 1e6, and pairs refused by ``accept``.
    """
    if count < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    xs, ys, have = [], [], 0
    for _ in range(1000):
        m = max(2 * (count - have), 16)
        d = rng.normal(size=(m, n))
        x = d / np.linalg.norm(d, axis=1)[:, None] * radius * rng.uniform(size=(m, 1)) ** (1.0 / n)
        y = rng.normal(size=(m, n))
        y /= np.linalg.norm(y, axis=1)[:, None]
        ok = np.ones(m, dtype=bool)
        if domain is not None:
            ok &= domain.contains(x)
        if metric is not None and ok.any():
            g = metric(x[ok])
            w = np.linalg.eigvalsh(g)
            good = is_spd(g) & (w[:, -1] <= MAX_CONDITION * np.abs(w[:, 0]))
            ok[np.flatnonzero(ok)[~good]] = False
        if accept is not None and ok.any():
            acc = np.asarray(accept(x[ok], y[ok]), dtype=bool)
            ok[np.flatnonzero(ok)[~acc]] = False
        xs.append(x[ok])
        ys.append(y[ok])
        have += int(ok.sum())
        if have >= count:
            break
    else:
        raise RuntimeError(f"could not draw {count} admissible samples (got {have})")
    return Samples(np.concatenate(xs)[:count], np.concatenate(ys)[:count], seed, radius)


# the operator X_V ------------------------------------------------------------------

def xv_apply(V: VectorField, G: Callable, x, y) -> np.ndarray:
    """``X_V G = V^i dG/dx^i + y^i (dV^j/dx^i) dG/dy^j`` at ``(x, y)``.

    ``G(xs, ys)`` takes coordinate and direction lists (arrays or jets).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1]
    xs = [x[..., i] for i in range(n)]
    ys = [y[..., i] for i in range(n)]
    gx = _grad(G(Jet3.variables(x, order=1), ys), x.shape[:-1], n)
    gy = _grad(G(xs, Jet3.variables(y, order=1)), x.shape[:-1], n)
    vj = V.jet(x, order=1)
    return (np.einsum("...i,...i->...", vj.val, gx)
            + np.einsum("...i,...ji,...j->...", y, vj.d1, gy))


def _grad(j, batch, n) -> np.ndarray:
    if isinstance(j, Jet3):
        return np.broadcast_to(j.grad, batch + (n,))
    return np.zeros(batch + (n,))


def alpha_squared(a: MetricField) -> Callable:
    def G(xs, ys):
        g = a.fn(xs)
        out = 0.0
        for i in range(len(ys)):
            for j in range(len(ys)):
                out = g[i][j] * ys[i] * ys[j] + out
        return out
    return G


def one_form_value(b: OneFormField) -> Callable:
    return lambda xs, ys: dot(b.fn(xs), ys)


# pointwise tensors shared by the checks ----------------------------------------------------

@dataclass
class _PairData:
    conn: Connection
    V: np.ndarray           # V^i
    Vcov: np.ndarray        # V_{i;j}
    c: np.ndarray
    b: Optional[np.ndarray] = None
    bcov: Optional[np.ndarray] = None


def _pair(a: MetricField, V: VectorField, c: ScalarField, x, b: OneFormField | None = None) -> _PairData:
    conn = Connection(a, x, order=1)
    Vcov = conn.cov1(lower(V, a).jet(x, order=1))
    out = _PairData(conn, V(x), Vcov, np.broadcast_to(c(x), x.shape[:-1]))
    if b is not None:
        bj = b.jet(x, order=1)
        out.b = bj.val
        out.bcov = conn.cov1(bj)
    return out


def ab_system_residuals(a: MetricField, b: OneFormField, V: VectorField, c: ScalarField, x):
    """Sup-norm residuals of ``V_{i;j}+V_{j;i}+4c a_ij`` and ``V^j b_{i;j} + b^j V_{j;i} + 2c b_i``."""
    p = _pair(a, V, c, np.asarray(x, dtype=float), b)
    r1 = p.Vcov + np.swapaxes(p.Vcov, -1, -2) + 4 * p.c[..., None, None] * p.conn.g
    bup = p.conn.raise_index(p.b)
    r2 = (np.einsum("...j,...ij->...i", p.V, p.bcov) + np.einsum("...j,...ji->...i", bup, p.Vcov)
          + 2 * p.c[..., None] * p.b)
    return np.max(np.abs(r1), axis=(-1, -2)), np.max(np.abs(r2), axis=-1)


# checks ----------------------------------------------------------------------

def check_conformal_riemann(a: MetricField, V: VectorField, c: ScalarField, samples: Samples,
                            tolerance: float = 1e-9, name: str = "riemann") -> CheckReport:
    """``|V_{0;0} + 2 c alpha^2| / alpha^2``."""
    x, y = samples.x, samples.y
    p = _pair(a, V, c, x)
    a2 = np.einsum("...ij,...i,...j->...", p.conn.g, y, y)
    v00 = np.einsum("...ij,...i,...j->...", p.Vcov, y, y)
    return CheckReport.from_residuals(name, (v00 + 2 * p.c * a2) / a2, tolerance, samples.seed)


def check_ab_system(a: MetricField, b: OneFormField, V: VectorField, c: ScalarField, samples: Samples,
                    tolerance: float = 1e-9, name: str = "ab_system") -> CheckReport:
    """Both equations of the (alpha,beta) conformal system; the report holds the larger residual.

    The two streams are kept in ``details`` as ``metric_equation`` and
    ``form_equation``.
    """
    r1, r2 = ab_system_residuals(a, b, V, c, samples.x)
    det = {"metric_equation": r1, "form_equation": r2,
           "metric_equation_max": float(r1.max()), "form_equation_max": float(r2.max())}
    return CheckReport.from_residuals(name, np.maximum(r1, r2), tolerance, samples.seed, det)


def _finsler_admissible(F: FinslerMetric, x, y) -> np.ndarray:
    s = F.s(x, y)
    ok = F.phi.regularity_margin(s) > 0
    if F.phi.s_max is not None:
        ok &= np.abs(s) <= F.phi.s_max
    return ok


def check_conformal_finsler(F: FinslerMetric, V: VectorField, c: ScalarField, samples: Samples,
                            tolerance: float = 1e-9, name: str = "finsler") -> CheckReport:
    """``|X_V(F) + 2cF| / F``; degenerate samples are replaced by fresh draws."""
    ok = _finsler_admissible(F, samples.x, samples.y)
    dropped = int((~ok).sum())
    if dropped:
        log.warning("%s: %d samples with F <= 0 or outside the phi range were resampled", name, dropped)
        more = draw_samples(F.n, dropped, (samples.seed or 0) + 1, samples.radius, F.domain,
                            accept=lambda x, y: _finsler_admissible(F, x, y))
        samples = Samples(np.concatenate([samples.x[ok], more.x]), np.concatenate([samples.y[ok], more.y]),
                          samples.seed, samples.radius)
    x, y = samples.x, samples.y
    Fv = F(x, y)
    xv = xv_apply(V, F.expr, x, y)
    res = (xv + 2 * np.broadcast_to(c(x), Fv.shape) * Fv) / Fv
    return CheckReport.from_residuals(name, res, tolerance, samples.seed, {"resampled": dropped})


def kang_residual(a: MetricField, b: OneFormField, phi: PhiFunction, V: VectorField, c: ScalarField,
                  x, y) -> np.ndarray:
    """Normalized residual of
    ``(phi - s phi') V_{0;0} + alpha phi' (V^i b_{j;i} + b^i V_{i;j}) y^j + 2 c phi alpha^2``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = _pair(a, V, c, x, b)
    a2 = np.einsum("...ij,...i,...j->...", p.conn.g, y, y)
    alpha = np.sqrt(a2)
    s = np.einsum("...i,...i->...", p.b, y) / alpha
    f, f1 = np.asarray(phi(s), dtype=float), phi.d1(s)
    bup = p.conn.raise_index(p.b)
    v00 = np.einsum("...ij,...i,...j->...", p.Vcov, y, y)
    lb = (np.einsum("...i,...ji,...j->...", p.V, p.bcov, y) + np.einsum("...i,...ij,...j->...", bup, p.Vcov, y))
    lhs = (f - s * f1) * v00 + alpha * f1 * lb
    return np.abs(lhs + 2 * p.c * f * a2) / (f * a2)


def check_kang(a, b, phi, V, c, samples: Samples, tolerance: float = 5e-9, name: str = "kang") -> CheckReport:
    return CheckReport.from_residuals(name, kang_residual(a, b, phi, V, c, samples.x, samples.y),
                                      tolerance, samples.seed)


def check_closedness(b: OneFormField, samples: Samples, tolerance: float = 1e-10,
                     name: str = "closedness") -> CheckReport:
    from .geometry import closedness_residual
    return CheckReport.from_residuals(name, closedness_residual(b, samples.x), tolerance, samples.seed)


# adapted frame and series coefficients ---------------------------------------------------

@dataclass(frozen=True)
class AdaptedFrameData:
    """Scalars of an orthonormal frame with ``beta = b y^1`` at one point.

    ``V10 = V_{1;a} y^a``, ``V01 = V_{a;1} y^a``, ``V11 = V_{1;1}``,
    ``Vbbar = V^i b_{a;i} y^a``, ``Vb1 = V^i b_{1;i}`` (``a`` runs over 2..n).
    """

    b: float
    V10: float
    V01: float
    V11: float
    Vbbar: float
    Vb1: float
    c: float

    def __post_init__(self):
        vals = np.array([self.b, self.V10, self.V01, self.V11, self.Vbbar, self.Vb1, self.c])
        if not np.all(np.isfinite(vals)):
            raise ValueError("adapted frame data must be finite")
        if not self.b > 0:
            raise ValueError("adapted frame data needs b > 0")

    def conditions(self) -> dict:
        """Residuals of the four frame conditions forcing every coefficient to vanish."""
        return {
            "bV10+Vbbar=0": self.b * self.V10 + self.Vbbar,
            "V10+V01=0": self.V10 + self.V01,
            "V11=-2c": self.V11 + 2 * self.c,
            "Vb1=0": self.Vb1,
        }


def series_coefficients(branch: str, coeffs: Sequence[float], frame: AdaptedFrameData) -> np.ndarray:
    """Coefficients ``p_0 .. p_K`` of the power series obtained by inserting
    ``phi = sum a_k s^k`` into the split conformal equations.

    Branch ``"A"`` uses ``V10 + V01`` and ``b V10 + Vbbar``; branch ``"B"``
    uses ``-2c - V11`` and ``-2bc - b V11 - Vb1``.  ``a_k`` is zero outside
    the stored range.
    """
    a = np.asarray(coeffs, dtype=float)
    K = len(a) - 1
    if branch == "A":
        first = frame.V10 + frame.V01
        second = frame.b * frame.V10 + frame.Vbbar
    elif branch == "B":
        first = -2 * frame.c - frame.V11
        second = -2 * frame.b * frame.c - frame.b * frame.V11 - frame.Vb1
    else:
        raise ValueError(f"branch must be 'A' or 'B', got {branch!r}")

    def coef(i):
        return a[i] if 0 <= i <= K else 0.0
    return np.array([(k - 2) * coef(k - 1) * first - (k + 1) * coef(k + 1) * frame.b * second
                     for k in range(K + 1)])


def adapted_frame_data(a: MetricField, b: OneFormField, V: VectorField, c: ScalarField, x,
                       ybar) -> AdaptedFrameData:
    """Frame scalars at a single point ``x`` for a direction ``ybar`` orthogonal to ``b``.

    The frame is ``a``-orthonormal with first vector along ``b^#``;
    ``ybar`` gives the components ``y^2 .. y^n`` in that frame.
    """
    x = np.asarray(x, dtype=float)
    p = _pair(a, V, c, x[None], b)
    g, bl, bup = p.conn.g[0], p.b[0], p.conn.raise_index(p.b)[0]
    bnorm = float(np.sqrt(bl @ bup))
    n = len(x)
    basis = [bup / bnorm]
    for v in np.eye(n):
        w = v - sum((u @ g @ v) * u for u in basis)
        nw = np.sqrt(w @ g @ w)
        if nw > 1e-8:
            basis.append(w / nw)
        if len(basis) == n:
            break
    E = np.array(basis).T                   # columns are frame vectors
    Vc = E.T @ p.Vcov[0] @ E                # V_{i;j} in the frame
    Bc = E.T @ p.bcov[0] @ E
    Vf = np.linalg.solve(E, p.V[0])         # V^i in the frame
    yb = np.asarray(ybar, dtype=float)
    return AdaptedFrameData(
        b=bnorm, V10=float(Vc[0, 1:] @ yb), V01=float(Vc[1:, 0] @ yb), V11=float(Vc[0, 0]),
        Vbbar=float(Vf @ (Bc[1:, :].T @ yb)), Vb1=float(Vf @ Bc[0, :]), c=float(p.c[0]))


# Lemma-2.4 type quantities ------------------------------------------------------------

def c_invariant(c: ScalarField, mu: float, a: MetricField, x) -> np.ndarray:
    """``|grad c|_a^2 + mu c^2`` at ``x``."""
    x = np.asarray(x, dtype=float)
    conn = Connection(a, x, order=1)
    cj = c.jet(x, order=1)
    return conn.grad_norm_sq(cj) + mu * cj.val**2


def c_invariant_report(V: VectorField, c: ScalarField, mu: float, a: MetricField, samples: Samples,
                       tolerance: float = 1e-8, name: str = "c_invariant", x0=None) -> CheckReport:
    """Relative deviation ``|C(x) - C(x0)| / (1 + |C(x0)|)`` with ``x0`` the origin by default."""
    x0 = np.zeros(a.n) if x0 is None else np.asarray(x0, dtype=float)
    C0 = float(c_invariant(c, mu, a, x0[None])[0])
    C = c_invariant(c, mu, a, samples.x)
    pair = check_conformal_riemann(a, V, c, samples, tolerance=1e-9)
    return CheckReport.from_residuals(name, (C - C0) / (1 + abs(C0)), tolerance, samples.seed,
                                      {"C_ref": C0, "pair_residual_max": pair.max_residual})


def closed_conformal_residual(c: ScalarField, mu: float, a: MetricField, samples: Samples,
                              tolerance: float = 1e-9, name: str = "closed_conformal") -> CheckReport:
    """Sup-norm of ``c_{i;j} + mu c a_ij``."""
    conn = Connection(a, samples.x, order=2)
    cj = c.jet(samples.x, order=2)
    r = conn.hessian(cj) + mu * cj.val[..., None, None] * conn.g
    return CheckReport.from_residuals(name, np.max(np.abs(r), axis=(-1, -2)), tolerance, samples.seed)


# finite flows -------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowState:
    t: float
    x: np.ndarray
    J: np.ndarray


def integrate_flow(V: VectorField, x0, t_grid, domain: Domain | None = None,
                   rtol: float = 1e-10, atol: float = 1e-12) -> tuple[list[FlowState], bool]:
    """Integrate ``x' = V(x)``, ``J' = DV(x) J`` from ``(x0, I)`` over ``t_grid``.

    Returns the states on the grid and a flag telling whether the trajectory
    left ``domain`` (the grid is then truncated at the last interior point).
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    t_grid = np.asarray(t_grid, dtype=float)

    def rhs(t, z):
        vj = V.jet(z[:n], order=1)
        J = z[n:].reshape(n, n)
        return np.concatenate([vj.val, (vj.d1 @ J).ravel()])

    z0 = np.concatenate([x0, np.eye(n).ravel()])
    events = None
    if domain is not None:
        def leave(t, z):
            return 1.0 if domain.contains(z[:n]) else -1.0
        leave.terminal = True
        events = leave
    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), z0, method="RK45", t_eval=t_grid,
                    rtol=rtol, atol=atol, events=events)
    if sol.status < 0:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    states = [FlowState(float(t), sol.y[:n, k].copy(), sol.y[n:, k].reshape(n, n).copy())
              for k, t in enumerate(sol.t)]
    truncated = len(states) < len(t_grid)
    for s in states:
        if np.linalg.det(s.J) <= 0:
            raise RuntimeError("flow Jacobian lost orientation")
    return states, truncated


def flow_check(F: FinslerMetric, V: VectorField, c: ScalarField, x, y, t_grid,
               tolerance: float = 1e-6, name: str = "flow") -> CheckReport:
    """``|F(x(t), J(t) y) - exp(-2ct) F(x, y)| / F(x, y)`` along the flow of ``V``.

    Only homothetic fields (constant ``c``) satisfy the finite-time law, so a
    non-constant ``c`` along the trajectory is rejected.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    states, truncated = integrate_flow(V, x, t_grid, F.domain)
    xs = np.array([s.x for s in states])
    cs = np.broadcast_to(c(xs), (len(states),))
    c0 = float(cs[0])
    if np.max(np.abs(cs - c0)) > 1e-12:
        raise ValueError("flow_check needs a constant conformal factor (homothetic field)")
    F0 = float(F(x, y))
    Ft = np.array([float(F(s.x, s.J @ y)) for s in states])
    ts = np.array([s.t for s in states])
    dev = np.abs(Ft - np.exp(-2 * c0 * ts) * F0) / F0
    if truncated:
        log.warning("%s: trajectory left the domain at t=%.4g; grid truncated", name, ts[-1])
    return CheckReport.from_residuals(name, dev, tolerance, None,
                                      {"truncated": truncated, "t_reached": float(ts[-1]), "c": c0})
