"""Seeded parameter builders and finite-difference oracles shared by the tests."""
import numpy as np

from abconformal import ModelParams


def skew(rng, n, scale=0.3):
    a = rng.uniform(-scale, scale, size=(n, n))
    return a - a.T


def orth_projector(e):
    e = np.asarray(e, dtype=float)
    return np.eye(len(e)) - np.outer(e, e) / (e @ e)


def random_unit(rng, n):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def homothetic_params(rng, n, e):
    """tau, gamma and a rotation Q with Q e = 0."""
    P = orth_projector(e)
    Q = P @ skew(rng, n) @ P
    Q = 0.5 * (Q - Q.T)
    return ModelParams(tau=float(rng.uniform(-0.3, 0.3)), gamma=rng.uniform(-0.2, 0.2, n), e=e, Q=Q)


def flat_e(rng, n, max_norm=0.5):
    return random_unit(rng, n) * rng.uniform(0.1, max_norm)


def killing_params(rng, n, mu):
    """lambda, e, gamma with <gamma, e> = 0 and Q e = -2 lambda gamma."""
    lam = float(rng.uniform(-0.3, 0.3))
    e = random_unit(rng, n) * rng.uniform(0.05, 0.15)
    P = orth_projector(e)
    gamma = P @ rng.uniform(-0.1, 0.1, n)
    Q = (2 * lam / (e @ e)) * (np.outer(e, gamma) - np.outer(gamma, e))
    extra = P @ skew(rng, n, 0.2) @ P
    Q = Q + 0.5 * (extra - extra.T)
    return ModelParams(lam=lam, mu=mu, e=e, gamma=gamma, Q=Q)


def general_params(rng, n, mu):
    return ModelParams(lam=float(rng.uniform(-1, 1)), mu=mu, d=rng.uniform(-0.3, 0.3, n),
                       eta=rng.uniform(-0.3, 0.3, n), Q=skew(rng, n), e=rng.uniform(-0.3, 0.3, n))


def fd_grad(f, x, h=1e-5):
    """Central differences of an array-valued ``f`` at a single point ``x``; derivative axis last."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        d = np.zeros_like(x)
        d[i] = h
        cols.append((np.asarray(f(x + d)) - np.asarray(f(x - d))) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_hess(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    n = len(x)
    f0 = np.asarray(f(x))
    out = np.zeros(f0.shape + (n, n))
    for i in range(n):
        for j in range(n):
            di = np.zeros(n)
            dj = np.zeros(n)
            di[i] = h
            dj[j] = h
            out[..., i, j] = (np.asarray(f(x + di + dj)) - np.asarray(f(x + di - dj))
                              - np.asarray(f(x - di + dj)) + np.asarray(f(x - di - dj))) / (4 * h * h)
    return out
