"""Collision-aware versions of the attack elements.

Each function takes a :class:`CollisionProbe` whose ``query`` returns the
endpoint's answer or ``None`` for a refused query. Refused queries carry no
information about the model and are simply left out of the estimate.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..attacks.decision import bisect_boundary, sign_estimate, unit
from ..attacks.nes import nes_step
from ..attacks.square import paint_squares
from ..core import PerturbationBudget, project
from .adapt import CollisionProbe, resample_queries


def antithetic_sampler(rng: np.random.Generator, shape):
    """Endless ``u, -u, u', -u', ...`` with one Gaussian draw per pair.

    The draws match :func:`antithetic_directions` element for element.
    """
    while True:
        u = rng.standard_normal(shape)
        yield u
        yield -u


def oars_nes_gradient(x_t, value: Callable, sigma: float, n: int, retries: int, probe: CollisionProbe,
                      rng: np.random.Generator):
    """NES estimate from the accepted antithetic samples only.

    ``value(answer)`` maps an answer to the objective. When all of the
    first ``n`` draws are answered the plain antithetic formula is used,
    so nothing changes against an undefended model. Otherwise a mean
    baseline is subtracted, which keeps the estimate unbiased once pairs
    are broken. Returns None if nothing was answered.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    dirs = antithetic_sampler(rng, x_t.shape)
    drawn = []

    def draw():
        u = next(dirs)
        drawn.append(u)
        return np.clip(x_t + sigma * u, 0.0, 1.0), len(drawn) - 1

    accepted = resample_queries(draw, n, retries, probe)
    if not accepted:
        return None
    values = np.array([value(out) for _, out in accepted])
    if len(drawn) == n and len(accepted) == n:
        grad = np.zeros_like(x_t)
        for (i, _), v in zip(accepted, values):
            grad += v * drawn[i]
        return grad / (sigma * n)
    values = values - values.mean()
    grad = np.zeros_like(x_t)
    for (i, _), v in zip(accepted, values):
        grad += v * drawn[i]
    return grad / (sigma * len(accepted))


def oars_sign_gradient(x_t, phi: Callable, zeta: float, n: int, retries: int, probe: CollisionProbe,
                       directions: Callable):
    """HSJA-style sign estimate over the answered probes.

    ``directions(k)`` returns a batch of ``k`` unit directions; a fresh
    batch is requested whenever the current one runs out.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    batch: list = []

    def draw():
        if not batch:
            batch.extend(directions(n))
        u = batch.pop(0)
        point = np.clip(x_t + zeta * u, 0.0, 1.0)
        return point, (point - x_t) / zeta

    accepted = resample_queries(draw, n, retries, probe)
    if not accepted:
        return None
    values = np.array([1.0 if phi(out) else -1.0 for _, out in accepted])
    used = np.array([u for u, _ in accepted])
    return sign_estimate(values, used, zeta)


def oars_nes_step(x_t, grad, lam: float, x_vic, budget: PerturbationBudget, probe: CollisionProbe,
                  rng: np.random.Generator, tries: int):
    """Signed step that dodges collisions.

    The first candidate is the plain signed step. If it is refused, the
    signs of the coordinates with the weakest gradient are redrawn at
    random, a larger share on every retry. Returns ``(x_new, answer)`` or
    None when every candidate was refused.
    """
    cand = nes_step(x_t, grad, lam, x_vic, budget)
    out = probe.query(cand)
    if out is not None:
        return cand, out
    sign = np.sign(grad).ravel()
    order = np.argsort(np.abs(np.ravel(grad)), kind="stable")
    for k in range(1, tries + 1):
        share = k / tries
        weak = order[:max(1, int(round(share * order.size)))]
        s = sign.copy()
        s[weak] = rng.choice([-1.0, 1.0], size=weak.size)
        cand = project(x_t + lam * s.reshape(np.shape(x_t)), x_vic, budget)
        out = probe.query(cand)
        if out is not None:
            return cand, out
    return None


def oars_locate_boundary(x_adv, x_vic, phi: Callable, r: float):
    """Bisection that ends at termination distance ``r``.

    ``phi`` returns True, False, or None for a refused query; on a refusal
    the last adversarial bracket (the point queried before the collision,
    or ``x_adv`` itself) is returned. A point already within ``r`` comes
    back untouched without any query.
    """
    point, _ = bisect_boundary(x_adv, x_vic, phi, r)
    return point


def oars_square_step(x, best: float, x_vic, eps: float, side: int, m: int, value: Callable,
                     probe: CollisionProbe, rng: np.random.Generator, tries: int):
    """One square-attack step with ``m`` squares, resampled on refusal.

    Returns ``(x, best)`` (updated only when the objective improved), or
    None when ``1 + tries`` candidates in a row were refused.
    """
    for _ in range(1 + tries):
        cand = paint_squares(x, x_vic, eps, side, m, rng)
        out = probe.query(cand)
        if out is None:
            continue
        v = value(out)
        return (cand, v) if v > best else (x, best)
    return None
