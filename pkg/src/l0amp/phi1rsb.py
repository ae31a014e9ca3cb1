"""Inner replica free entropy of the clustered (1RSB) measure and its derivatives.

The central object is

    phi(B, A1, A0, lam; s) = (1/s) * log E_z[ exp(s * M(B + sqrt(A0) z)) ],
    M(u) = max(u^2/(2*A1) - lam, 0),

evaluated in closed form. The Gaussian average splits into three branches: the
"inactive" mid segment |u| < t* = sqrt(2*lam*A1) where M = 0, and two tilted
tails where completing the square turns the average into truncated-Gaussian
masses of a tilted Gaussian with mean B*A1/D and variance A0*A1/D, D = A1 - s*A0.
All weights are handled in log space so the formulas survive the large-s regime
reached while annealing lam to zero.

Derivatives are expectations under the reweighted (tilted, branch-decomposed)
measure and reduce to first and second truncated moments per branch, plus a
boundary-density term in the second B-derivative coming from the kink of M.
They are validated against finite differences and a Monte-Carlo oracle of the
defining integral in the test suite.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .numerics import (NumericalDomainError, log_gauss_interval_prob,
                       truncated_gauss_lower_moments)

_LOG_2PI = math.log(2.0 * math.pi)


def _validate(A1, A0, lam, s):
    if not (A1 > 0.0 and np.isfinite(A1)):
        raise NumericalDomainError(f"A1 must be positive, got {A1}")
    if not (A0 >= 0.0 and np.isfinite(A0)):
        raise NumericalDomainError(f"A0 must be nonnegative, got {A0}")
    if not (lam >= 0.0 and np.isfinite(lam)):
        raise NumericalDomainError(f"lambda must be nonnegative, got {lam}")
    if not (s > 0.0 and np.isfinite(s)):
        raise NumericalDomainError(f"s must be positive, got {s}")
    D = A1 - s * A0
    if not D > 0.0:
        raise NumericalDomainError(
            f"need A1 - s*A0 > 0, got A1={A1}, s={s}, A0={A0} (D={D})")
    return D


def phi1rsb_eval(B, A1, A0, lam, s):
    """Closed-form phi and all needed derivatives, vectorized over the field B.

    Returns a dict of arrays with keys:
      phi   : the free entropy value
      dB    : d phi / dB            (the estimator x*)
      d2B   : d^2 phi / dB^2        (smooth part + boundary density + s Var)
      dA1   : d phi / dA1
      dA0   : d phi / dA0
      ds    : d phi / ds
      theta : reweighted activity mass <Theta(|u| > t*)>
      x2    : <x*^2>, var_x : <x*^2> - <x*>^2  (per-site cluster variance)
      dens  : boundary density [N(t*;B,A0) + N(-t*;B,A0)] / Z (0 when A0=0)

    At A0=0 the measure is a point mass: phi = max(B^2/(2*A1) - lam, 0) exactly,
    ds = 0, and d2B carries only the smooth part (the kink contributes a delta
    in B that outer integrators must handle themselves if they need it).
    """
    D = _validate(A1, A0, lam, s)
    B = np.asarray(B, dtype=float)
    t = math.sqrt(2.0 * lam * A1)

    if A0 == 0.0:
        theta = (B * B > 2.0 * lam * A1).astype(float)
        phi = theta * (B * B / (2.0 * A1) - lam)
        dB = B * theta / A1
        x2 = B * B * theta / (A1 * A1)
        zeros = np.zeros_like(B)
        return {
            "phi": phi,
            "dB": dB,
            "d2B": theta / A1,
            "dA1": -0.5 * x2,
            "dA0": 0.5 * (s * x2 + theta / A1),
            "ds": zeros,
            "theta": theta,
            "x2": x2,
            "var_x": zeros,
            "dens": zeros,
        }

    sa = math.sqrt(A0)
    mu_t = B * A1 / D
    var_t = A0 * A1 / D
    sig_t = math.sqrt(var_t)

    log_pref = -s * lam + s * B * B / (2.0 * D) + 0.5 * math.log(A1 / D)
    beta_up = (t - mu_t) / sig_t
    beta_dn = (t + mu_t) / sig_t
    log_w_up = log_pref + sp.log_ndtr(-beta_up)
    log_w_dn = log_pref + sp.log_ndtr(-beta_dn)
    log_w_mid = log_gauss_interval_prob((-t - B) / sa, (t - B) / sa)

    stacked = np.stack([log_w_mid, log_w_up, log_w_dn])
    logZ = sp.logsumexp(stacked, axis=0)
    phi = logZ / s

    with np.errstate(invalid="ignore", over="ignore"):
        r_up = np.exp(log_w_up - logZ)
        r_dn = np.exp(log_w_dn - logZ)
        m1_up, m2_up = truncated_gauss_lower_moments(mu_t, sig_t, t)
        m1_dn_r, m2_dn_r = truncated_gauss_lower_moments(-mu_t, sig_t, t)
        u_theta = np.where(r_up > 0.0, r_up * m1_up, 0.0) \
            - np.where(r_dn > 0.0, r_dn * m1_dn_r, 0.0)
        u2_theta = np.where(r_up > 0.0, r_up * m2_up, 0.0) \
            + np.where(r_dn > 0.0, r_dn * m2_dn_r, 0.0)
    theta = r_up + r_dn

    dB = u_theta / A1
    x2 = u2_theta / (A1 * A1)
    var_x = np.maximum(x2 - dB * dB, 0.0)

    log_n_p = -(t - B) ** 2 / (2.0 * A0) - 0.5 * (_LOG_2PI + math.log(A0))
    log_n_m = -(t + B) ** 2 / (2.0 * A0) - 0.5 * (_LOG_2PI + math.log(A0))
    dens = np.exp(log_n_p - logZ) + np.exp(log_n_m - logZ)

    mpp = theta / A1 + (t / A1) * dens
    d2B = mpp + s * var_x
    m_avg = u2_theta / (2.0 * A1) - lam * theta
    ds = (m_avg - phi) / s
    dA0 = 0.5 * (s * x2 + mpp)

    return {
        "phi": phi,
        "dB": dB,
        "d2B": d2B,
        "dA1": -0.5 * x2,
        "dA0": dA0,
        "ds": ds,
        "theta": theta,
        "x2": x2,
        "var_x": var_x,
        "dens": dens,
    }


def phi_layers(A1, A0, lam, s):
    """Boundary-layer hints (center, halfwidth) for integrating phi-derivatives over B.

    The integrands switch between the inactive and the tilted-tail branches near
    |B| in [sqrt(2*lam*D), sqrt(2*lam*A1)]; the switch width is set by the tilt
    slope (D/(s*B)) and the Gaussian smoothing sqrt(A0). Returns an empty list at
    lam = 0 where the active branch covers everything and the integrand is smooth.
    """
    D = _validate(A1, A0, lam, s)
    if lam == 0.0:
        return []
    t_hi = math.sqrt(2.0 * lam * A1)
    t_lo = math.sqrt(2.0 * lam * D)
    delta_a = 1.5 * math.sqrt(A0)
    delta_t = D / (s * t_lo) if t_lo > 0.0 else np.inf
    half = 8.0 * (min(delta_t, 4.0 * t_hi) + delta_a) + 1e-12 * t_hi
    mid = 0.5 * (t_lo + t_hi)
    return [(t_lo, half), (mid, half), (t_hi, half)]


@dataclass(frozen=True)
class Phi1rsbParams:
    """Scalar parameter bundle for the inner 1RSB free entropy."""

    B: float
    A0: float
    A1: float
    s: float
    lam: float

    def __post_init__(self):
        _validate(self.A1, self.A0, self.lam, self.s)


def phi1rsb_in(p):
    """phi(B, A1, A0, lam; s) for a scalar parameter bundle."""
    out = phi1rsb_eval(p.B, p.A1, p.A0, p.lam, p.s)
    return float(out["phi"])


def phi1rsb_derivs(p):
    """Analytic derivatives of phi for a scalar parameter bundle.

    Keys: dB, d2B, dA1, dA0, ds (plus theta and var_x, which the solvers read).
    """
    out = phi1rsb_eval(p.B, p.A1, p.A0, p.lam, p.s)
    return {k: float(out[k]) for k in ("dB", "d2B", "dA1", "dA0", "ds", "theta", "var_x")}
