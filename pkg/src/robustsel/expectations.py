"""Per-observation expectations of functions of standardized residuals.

Everything here computes ``E g((Y_i - mu_i) / s_i)`` for each observation
``i`` under the family's response distribution. Poisson and Bernoulli use
exact sums over the support (Poisson truncated where both tails are below
1e-12); Gaussian and gamma use composite 64-point Gauss-Legendre rules
split at the kinks of ``g``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import ExpectationError
from .glm_core import GlmFamily

TAIL = 1e-12
MAX_SUPPORT = 50_000
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)

Func = Callable[[np.ndarray], np.ndarray]


def _poisson_support(mean: np.ndarray):
    sd = np.sqrt(mean)
    lo = np.maximum(0.0, np.floor(mean - 12.0 * sd - 12.0))
    hi = np.ceil(mean + 12.0 * sd + 12.0)
    width = int(np.max(hi - lo)) + 1
    if width > MAX_SUPPORT:
        i = int(np.argmax(hi - lo))
        raise ExpectationError(f"Poisson mean {mean[i]:.6g} at observation {i} too large to enumerate")
    k = lo[:, None] + np.arange(width)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = special.xlogy(k, mean[:, None]) - mean[:, None] - special.gammaln(k + 1.0)
    prob = np.where(k <= hi[:, None], np.exp(logp), 0.0)
    mass = prob.sum(axis=1)
    bad = np.abs(mass - 1.0) > TAIL
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ExpectationError(f"Poisson support sum {mass[i]!r} at observation {i}")
    return k, prob


def _composite_points(lo: np.ndarray, hi: np.ndarray, cuts: np.ndarray, pieces: int = 1):
    """Gauss-Legendre nodes/weights on [lo, hi] split at ``cuts`` (n x k)."""
    pts = np.sort(np.column_stack([lo, np.clip(cuts, lo[:, None], hi[:, None]), hi]), axis=1)
    if pieces > 1:
        fr = np.linspace(0.0, 1.0, pieces + 1)
        a, b = pts[:, :-1, None], pts[:, 1:, None]
        pts = np.concatenate([(a + (b - a) * fr[None, None, :-1]).reshape(len(lo), -1), hi[:, None]], axis=1)
    a, b = pts[:, :-1], pts[:, 1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, :, None] + half[:, :, None] * _GL_NODES[None, None, :]
    weights = half[:, :, None] * _GL_WEIGHTS[None, None, :]
    n = len(lo)
    return nodes.reshape(n, -1), weights.reshape(n, -1)


def expect_standardized(
    family: GlmFamily,
    mean,
    scale,
    funcs: Sequence[Func],
    *,
    dispersion: float = 1.0,
    kinks: Sequence[float] = (),
) -> np.ndarray:
    """Expectations of ``g((Y - mean) / scale)`` for each ``g`` in ``funcs``.

    Parameters
    ----------
    family : GlmFamily
        Supplies the response distribution.
    mean, scale : array_like, shape (n,)
        Per-observation mean of ``Y`` and standardizing divisor.
    funcs : sequence of callables
        Each maps an array of standardized residuals to values of the same
        shape.
    dispersion : float
        ``sigma`` of the family (ignored for Poisson and Bernoulli).
    kinks : sequence of float
        Standardized points where some ``g`` is not smooth; quadrature
        segments are split there. Unused for discrete families.

    Returns
    -------
    ndarray, shape (len(funcs), n)
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    scale = np.broadcast_to(np.asarray(scale, dtype=float), mean.shape)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(scale)) and np.all(scale > 0)):
        bad = ~(np.isfinite(mean) & np.isfinite(scale) & (scale > 0))
        raise ExpectationError(f"invalid mean/scale at observation {int(np.flatnonzero(bad)[0])}")

    kind = family.kind
    if kind == "bernoulli":
        if np.any((mean < 0) | (mean > 1)):
            raise ExpectationError(f"Bernoulli mean outside [0, 1] at observation {int(np.flatnonzero((mean < 0) | (mean > 1))[0])}")
        support = np.stack([np.zeros_like(mean), np.ones_like(mean)], axis=1)
        prob = np.stack([1.0 - mean, mean], axis=1)
    elif kind == "poisson":
        support, prob = _poisson_support(mean)
    elif kind == "gaussian":
        zmax = 8.5
        n = len(mean)
        cuts = np.outer(scale / dispersion, np.asarray(kinks, dtype=float)) if len(kinks) else np.empty((n, 0))
        z, w = _composite_points(np.full(n, -zmax), np.full(n, zmax), cuts)
        dens = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        support = mean[:, None] + dispersion * z
        prob = w * dens
    elif kind == "gamma":
        shape = 1.0 / dispersion**2
        theta = mean / shape
        lo = special.gammaincinv(shape, 1e-14) * theta
        hi = special.gammainccinv(shape, 1e-14) * theta
        n = len(mean)
        cuts = [mean]
        cuts += [mean + k * scale for k in kinks]
        cuts = np.column_stack(cuts)
        y, w = _composite_points(lo, hi, cuts, pieces=4)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            logf = (shape - 1.0) * np.log(y / theta[:, None]) - y / theta[:, None] - special.gammaln(shape) - np.log(theta[:, None])
        support = y
        prob = w * np.exp(logf)
        mass = prob.sum(axis=1)
        bad = np.abs(mass - 1.0) > 1e-6
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ExpectationError(f"gamma quadrature mass {mass[i]!r} at observation {i}")
    else:  # pragma: no cover - families are closed
        raise ExpectationError(f"no expectation rule for {family.name}")

    z = (support - mean[:, None]) / scale[:, None]
    out = np.empty((len(funcs), len(mean)))
    for j, g in enumerate(funcs):
        vals = np.asarray(g(z), dtype=float)
        out[j] = np.sum(prob * vals, axis=1)
    if not np.all(np.isfinite(out)):
        i = int(np.flatnonzero(~np.all(np.isfinite(out), axis=0))[0])
        raise ExpectationError(f"non-finite expectation at observation {i}")
    return out


def _pois_cdf(k, mean):
    k = np.asarray(k, dtype=float)
    return np.where(k < 0, 0.0, special.pdtr(np.maximum(k, 0.0), mean))


def huber_moments(family: GlmFamily, mean, scale, c: float, *, dispersion: float = 1.0) -> np.ndarray:
    """``E psi_c(r)``, ``E r psi_c(r)`` and ``E psi_c(r)**2`` for ``r = (Y - mean) / scale``.

    Poisson uses the truncated-moment identities
    ``E[Y; a <= Y <= b] = mu P(a-1 <= Y <= b-1)`` (and the analogue for
    ``Y**2``), which are exact; other families go through
    :func:`expect_standardized`.

    Returns
    -------
    ndarray, shape (3, n)
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    scale = np.broadcast_to(np.asarray(scale, dtype=float), mean.shape)
    if family.kind != "poisson":
        clip = lambda z: np.clip(z, -c, c)  # noqa: E731
        return expect_standardized(
            family, mean, scale,
            [clip, lambda z: z * clip(z), lambda z: clip(z) ** 2],
            dispersion=dispersion, kinks=(-c, c),
        )
    ok = np.isfinite(mean) & (mean >= 0) & np.isfinite(scale) & (scale > 0)
    if not ok.all():
        raise ExpectationError(f"invalid mean/scale at observation {int(np.flatnonzero(~ok)[0])}")
    mu = mean
    j1 = np.floor(mu - c * scale)
    j2 = np.floor(mu + c * scale)
    F = lambda k: _pois_cdf(k, mu)  # noqa: E731
    p_lo = F(j1)
    p_hi = 1.0 - F(j2)
    p_mid = F(j2) - p_lo
    ey_mid = mu * (F(j2 - 1) - F(j1 - 1))
    ey2_mid = mu * mu * (F(j2 - 2) - F(j1 - 2)) + ey_mid
    ey_lo = mu * F(j1 - 1)
    ey_hi = mu * (1.0 - F(j2 - 1))
    r_mid = (ey_mid - mu * p_mid) / scale
    r2_mid = (ey2_mid - 2.0 * mu * ey_mid + mu * mu * p_mid) / (scale * scale)
    e_psi = c * (p_hi - p_lo) + r_mid
    e_rpsi = c * ((ey_hi - mu * p_hi) - (ey_lo - mu * p_lo)) / scale + r2_mid
    e_psi2 = c * c * (p_lo + p_hi) + r2_mid
    out = np.vstack([e_psi, e_rpsi, e_psi2])
    if not np.all(np.isfinite(out)):
        raise ExpectationError(f"non-finite Huber moment at observation {int(np.flatnonzero(~np.all(np.isfinite(out), axis=0))[0])}")
    return out
