"""Scalar denoisers used by the iterative solvers and their state evolutions.

Four families live here:

* hard threshold ``eta_ht`` (sets small entries to exactly zero),
* its smoothed relative ``eta_aspo`` (erfc-based sigmoid gate),
* soft threshold ``eta_soft``,
* the Gauss-Bernoulli posterior mean ``eta_bayes``.

The replica inner free entropy and its derivatives are in
:mod:`l0amp.phi1rsb`; the convenience wrappers ``phi1rsb_in`` and
``phi1rsb_derivs`` are re-exported here so callers that think in terms of
"denoisers and their generating functionals" find everything in one place.

All functions are elementwise and accept scalars or ndarrays.
"""

import math
from dataclasses import dataclass

import numpy as np

from .numerics import NumericalDomainError
from .phi1rsb import Phi1rsbParams, phi1rsb_in, phi1rsb_derivs  # noqa: F401

__all__ = [
    "eta_ht", "eta_ht_prime", "eta_aspo", "eta_aspo_prime",
    "eta_soft", "eta_soft_prime", "eta_bayes", "eta_bayes_prime",
    "HtDenoiser", "AspoDenoiser", "SoftDenoiser", "BayesDenoiser",
    "Phi1rsbParams", "phi1rsb_in", "phi1rsb_derivs",
]

_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def eta_ht(u, lam):
    """Hard threshold: keep u where u^2/2 > lam, zero elsewhere.

    The keep region is |u| > sqrt(2*lam); the boundary |u| = sqrt(2*lam)
    maps to 0 so the output stays sparse on ties.

    Parameters
    ----------
    u : array_like
        Input value(s).
    lam : float
        Nonnegative effective regularization.

    Returns
    -------
    ndarray or scalar
        Same shape as ``u``; zeroed entries are exact zeros.
    """
    if lam < 0:
        raise NumericalDomainError("eta_ht: lam must be >= 0, got %r" % (lam,))
    u = np.asarray(u, dtype=float)
    thr = math.sqrt(2.0 * lam)
    out = np.where(np.abs(u) > thr, u, 0.0)
    return out if out.ndim else float(out)


def eta_ht_prime(u, lam):
    """Derivative of ``eta_ht``: indicator of the keep region (0 on ties)."""
    if lam < 0:
        raise NumericalDomainError("eta_ht_prime: lam must be >= 0")
    u = np.asarray(u, dtype=float)
    out = (np.abs(u) > math.sqrt(2.0 * lam)).astype(float)
    return out if out.ndim else float(out)


def _aspo_gate(u, lam, xi):
    # S(u) = 1 - erfc((u-a)/b)/2 + erfc((u+a)/b)/2 with a = sqrt(2 lam) and
    # b = xi*sqrt(lam), so the gate is a fixed-shape family: b/a = xi/sqrt(2)
    # at every lam and the smoothing survives the lam -> 0 anneal instead of
    # collapsing faster than the keep edge. Written via ndtr to keep both
    # tails accurate: erfc(x)/2 = ndtr(-x*sqrt2).
    from scipy.special import ndtr
    a = math.sqrt(2.0 * lam)
    b = xi * math.sqrt(lam)
    sq2 = math.sqrt(2.0)
    return 1.0 - ndtr(-(u - a) * sq2 / b) + ndtr(-(u + a) * sq2 / b), a, b


def eta_aspo(u, lam, xi):
    """Smoothed hard threshold u * S(u) with an erfc gate of width xi*sqrt(lam).

    ``xi = 0`` falls back to the hard threshold exactly; ``xi = inf`` is the
    identity. For finite positive ``xi`` the gate is
    ``S(u) = 1 - erfc((u-a)/b)/2 + erfc((u+a)/b)/2`` with ``a = sqrt(2 lam)``
    and ``b = xi*sqrt(lam)``, so the gate width stays a fixed fraction
    ``xi/sqrt(2)`` of the keep edge, the output is smooth in ``u`` and never
    exactly zero except at ``u = 0``.

    Raises
    ------
    NumericalDomainError
        If ``xi > 0`` is finite and ``lam == 0`` (gate width degenerates).
    """
    if lam < 0 or xi < 0:
        raise NumericalDomainError("eta_aspo: lam and xi must be >= 0")
    if xi == 0.0:
        return eta_ht(u, lam)
    if math.isinf(xi):
        u = np.asarray(u, dtype=float)
        return u if u.ndim else float(u)
    if lam == 0.0:
        raise NumericalDomainError("eta_aspo: lam must be > 0 when xi > 0")
    u = np.asarray(u, dtype=float)
    s, _, _ = _aspo_gate(u, lam, xi)
    out = u * s
    return out if out.ndim else float(out)


def eta_aspo_prime(u, lam, xi):
    """Analytic u-derivative of ``eta_aspo`` (gate plus its Gaussian bumps)."""
    if lam < 0 or xi < 0:
        raise NumericalDomainError("eta_aspo_prime: lam and xi must be >= 0")
    if xi == 0.0:
        return eta_ht_prime(u, lam)
    if math.isinf(xi):
        u = np.asarray(u, dtype=float)
        out = np.ones_like(u)
        return out if out.ndim else float(out)
    if lam == 0.0:
        raise NumericalDomainError("eta_aspo_prime: lam must be > 0 when xi > 0")
    u = np.asarray(u, dtype=float)
    s, a, b = _aspo_gate(u, lam, xi)
    lo = np.exp(-((u - a) / b) ** 2)
    hi = np.exp(-((u + a) / b) ** 2)
    out = s + u * _INV_SQRT_PI / b * (lo - hi)
    return out if out.ndim else float(out)


def eta_soft(u, lam):
    """Soft threshold sign(u) * max(|u| - lam, 0)."""
    if lam < 0:
        raise NumericalDomainError("eta_soft: lam must be >= 0")
    u = np.asarray(u, dtype=float)
    out = np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)
    return out if out.ndim else float(out)


def eta_soft_prime(u, lam):
    """Derivative of the soft threshold: indicator of |u| > lam."""
    if lam < 0:
        raise NumericalDomainError("eta_soft_prime: lam must be >= 0")
    u = np.asarray(u, dtype=float)
    out = (np.abs(u) > lam).astype(float)
    return out if out.ndim else float(out)


def _bayes_slab_weight(u, rho_o, noise_variance):
    # Posterior probability of the unit-variance slab given u = x + noise.
    # Log-odds of slab vs spike, then a logistic; exact at rho_o in {0,1}.
    v = noise_variance
    if rho_o <= 0.0:
        return np.zeros_like(u)
    if rho_o >= 1.0:
        return np.ones_like(u)
    g = (math.log(rho_o) - math.log1p(-rho_o)
         + 0.5 * math.log(v / (1.0 + v))
         + u * u / (2.0 * v * (1.0 + v)))
    # logistic in a stable split form
    out = np.empty_like(g)
    pos = g >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-g[pos]))
    eg = np.exp(g[~pos])
    out[~pos] = eg / (1.0 + eg)
    return out


def eta_bayes(u, rho_o, noise_variance):
    """Posterior mean of a Gauss-Bernoulli signal observed in Gaussian noise.

    Prior ``(1-rho_o) delta_0 + rho_o N(0,1)``, observation
    ``u = x + sqrt(noise_variance) * z``. Odd in ``u`` and a pure shrinkage:
    ``|output| <= |u|``.
    """
    if noise_variance <= 0:
        raise NumericalDomainError("eta_bayes: noise_variance must be > 0")
    if not 0.0 <= rho_o <= 1.0:
        raise NumericalDomainError("eta_bayes: rho_o must lie in [0, 1]")
    u = np.asarray(u, dtype=float)
    w = _bayes_slab_weight(u, rho_o, noise_variance)
    out = w * u / (1.0 + noise_variance)
    return out if out.ndim else float(out)


def eta_bayes_prime(u, rho_o, noise_variance):
    """u-derivative of ``eta_bayes`` (slab weight plus its logistic response)."""
    if noise_variance <= 0:
        raise NumericalDomainError("eta_bayes_prime: noise_variance must be > 0")
    if not 0.0 <= rho_o <= 1.0:
        raise NumericalDomainError("eta_bayes_prime: rho_o must lie in [0, 1]")
    u = np.asarray(u, dtype=float)
    v = noise_variance
    w = _bayes_slab_weight(u, rho_o, v)
    out = w / (1.0 + v) + w * (1.0 - w) * u * u / (v * (1.0 + v) ** 2)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Thin parameter holders. Solvers keep the raw functions on their hot paths;
# these exist so configuration can be passed around as one object.

@dataclass(frozen=True)
class HtDenoiser:
    """Hard-threshold denoiser with effective regularization ``lam``."""
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise NumericalDomainError("HtDenoiser: lam must be >= 0")

    @property
    def threshold(self):
        return math.sqrt(2.0 * self.lam)

    def __call__(self, u):
        return eta_ht(u, self.lam)

    def prime(self, u):
        return eta_ht_prime(u, self.lam)


@dataclass(frozen=True)
class AspoDenoiser:
    """Smoothed threshold with regularization ``lam`` and gate width ``xi``."""
    lam: float
    xi: float

    def __post_init__(self):
        if self.lam < 0 or self.xi < 0:
            raise NumericalDomainError("AspoDenoiser: lam and xi must be >= 0")
        if self.xi > 0 and not math.isinf(self.xi) and self.lam == 0:
            raise NumericalDomainError("AspoDenoiser: lam must be > 0 when xi > 0")

    def __call__(self, u):
        return eta_aspo(u, self.lam, self.xi)

    def prime(self, u):
        return eta_aspo_prime(u, self.lam, self.xi)


@dataclass(frozen=True)
class SoftDenoiser:
    """Soft-threshold denoiser with shift ``lam``."""
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise NumericalDomainError("SoftDenoiser: lam must be >= 0")

    def __call__(self, u):
        return eta_soft(u, self.lam)

    def prime(self, u):
        return eta_soft_prime(u, self.lam)


@dataclass(frozen=True)
class BayesDenoiser:
    """Gauss-Bernoulli posterior mean at sparsity ``rho_o`` and given noise."""
    rho_o: float
    noise_variance: float

    def __post_init__(self):
        if not 0.0 <= self.rho_o <= 1.0:
            raise NumericalDomainError("BayesDenoiser: rho_o must lie in [0, 1]")
        if self.noise_variance <= 0:
            raise NumericalDomainError("BayesDenoiser: noise_variance must be > 0")

    def __call__(self, u):
        return eta_bayes(u, self.rho_o, self.noise_variance)

    def prime(self, u):
        return eta_bayes_prime(u, self.rho_o, self.noise_variance)
