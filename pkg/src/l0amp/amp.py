"""Finite-size AMP solvers and the proximal-gradient variant.

The main iteration is AMP with the hard-threshold denoiser:

    u      = F^T z / alpha + x_hat
    x_hat' = eta_ht(u, lam / A)
    z'     = y - F x_hat' + (z / alpha) * div
    A'     = alpha / (1 + div / A)

where ``div`` is the mean denoiser derivative (the Onsager coefficient).
Two ways of computing ``div`` are supported: the empirical mean over
coordinates, and a stabilized variant that substitutes the closed-form
expectation at the current empirical squared error; the latter is the default
because the empirical estimate makes the hard-threshold iteration unstable.

Soft-threshold (LASSO) and Gauss-Bernoulli posterior-mean (Bayes) variants
share the same skeleton. Proximal gradient descent with the hard threshold is
provided to demonstrate fixed-point sharing with AMP at matched lam.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .denoisers import (eta_ht, eta_ht_prime, eta_soft, eta_soft_prime,
                        eta_bayes, eta_bayes_prime)
from .instance import Observables, observables

__all__ = ["AmpState", "AmpConfig", "PgdConfig", "AmpResult",
           "amp_step", "pgd_step", "run", "run_pgd",
           "lasso_amp_step", "bayes_amp_step"]

_DIVERGE_LIMIT = 1e6


@dataclass
class AmpState:
    """Iterate of the AMP recursion; ``aux`` carries denoiser-specific extras
    (the Bayes variant keeps its field variance there)."""
    x_hat: np.ndarray
    z: np.ndarray
    A: float
    t: int = 0
    aux: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AmpConfig:
    """Knobs for :func:`run`.

    denoiser is one of "ht", "soft", "bayes". variance_mode picks how the
    Onsager divergence is computed: "empirical" (mean derivative over
    coordinates) or "se_stabilized" (closed-form expectation at the empirical
    squared error; requires the planted signal, which synthetic instances
    carry). init is "informed" (x_hat = x_o, z = 0) or "uninformed"
    (x_hat = 0, z = y); pass a ready-made AmpState to :func:`run` for custom
    starts.
    """
    lam: float
    denoiser: str = "ht"
    max_iters: int = 1000
    tol: float = 1e-8
    damping: float = 0.0
    variance_mode: str = "se_stabilized"
    init: str = "uninformed"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("AmpConfig: lam must be >= 0")
        if self.denoiser not in ("ht", "soft", "bayes"):
            raise ValueError("AmpConfig: unknown denoiser %r" % (self.denoiser,))
        if self.max_iters < 1 or self.tol <= 0:
            raise ValueError("AmpConfig: need max_iters >= 1 and tol > 0")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("AmpConfig: damping must lie in [0, 1)")
        if self.variance_mode not in ("empirical", "se_stabilized"):
            raise ValueError("AmpConfig: unknown variance_mode %r"
                             % (self.variance_mode,))
        if self.init not in ("informed", "uninformed"):
            raise ValueError("AmpConfig: init must be informed or uninformed")


@dataclass
class AmpResult:
    state: AmpState
    trace: List[Observables]
    status: str  # converged | max_iters | diverged


def _diverged(x_hat, A):
    return (not np.all(np.isfinite(x_hat)) or A <= 0
            or not math.isfinite(A)
            or np.max(np.abs(x_hat)) > _DIVERGE_LIMIT)


def _ht_divergence(u, thr_lam, E_emp, alpha, rho_o, mode):
    if mode == "empirical":
        return float(np.mean(eta_ht_prime(u, thr_lam)))
    from .state_evolution import ht_expected_activity
    return ht_expected_activity(E_emp, alpha, rho_o, thr_lam)


def amp_step(state, inst, cfg):
    """One AMP sweep with the hard-threshold denoiser.

    Returns a new AmpState; sets ``aux["diverged"]`` instead of propagating
    NaNs when the iterate leaves the trust region.
    """
    alpha = inst.alpha
    u = inst.F.T @ state.z / alpha + state.x_hat
    thr_lam = cfg.lam / state.A
    x_new = eta_ht(u, thr_lam)
    if cfg.variance_mode == "se_stabilized":
        d = x_new - inst.x_o
        E_emp = float(d @ d) / inst.N
        div = _ht_divergence(u, thr_lam, E_emp, alpha, inst.rho_o,
                             "se_stabilized")
    else:
        div = _ht_divergence(u, thr_lam, None, alpha, inst.rho_o, "empirical")
    if cfg.damping > 0:
        x_new = (1.0 - cfg.damping) * x_new + cfg.damping * state.x_hat
    z_new = inst.y - inst.F @ x_new + state.z / alpha * div
    A_new = alpha / (1.0 + div / state.A)
    out = AmpState(x_hat=x_new, z=z_new, A=A_new, t=state.t + 1)
    if _diverged(x_new, A_new):
        out.aux["diverged"] = True
    return out


def lasso_amp_step(state, inst, cfg):
    """AMP sweep with the soft-threshold denoiser (LASSO baseline)."""
    alpha = inst.alpha
    u = inst.F.T @ state.z / alpha + state.x_hat
    thr = cfg.lam / state.A
    x_new = eta_soft(u, thr)
    div = float(np.mean(eta_soft_prime(u, thr)))
    if cfg.damping > 0:
        x_new = (1.0 - cfg.damping) * x_new + cfg.damping * state.x_hat
    z_new = inst.y - inst.F @ x_new + state.z / alpha * div
    A_new = alpha / (1.0 + div / state.A)
    out = AmpState(x_hat=x_new, z=z_new, A=A_new, t=state.t + 1)
    if _diverged(x_new, A_new):
        out.aux["diverged"] = True
    return out


def bayes_amp_step(state, inst, cfg):
    """AMP sweep with the Gauss-Bernoulli posterior mean.

    The field variance lives in ``state.aux["sigma2"]``; empirical mode
    updates it through the standard recursion sigma2' = sigma2 * mean f' /
    alpha, se_stabilized mode pins it to the empirical error E/alpha. The
    reported A is 1/sigma2 for trace compatibility.
    """
    alpha = inst.alpha
    sigma2 = state.aux.get("sigma2")
    if sigma2 is None:
        d0 = state.x_hat - inst.x_o
        sigma2 = max(float(d0 @ d0) / inst.N, 1e-12) / alpha
    u = inst.F.T @ state.z / alpha + state.x_hat
    x_new = eta_bayes(u, inst.rho_o, sigma2)
    div = float(np.mean(eta_bayes_prime(u, inst.rho_o, sigma2)))
    if cfg.damping > 0:
        x_new = (1.0 - cfg.damping) * x_new + cfg.damping * state.x_hat
    z_new = inst.y - inst.F @ x_new + state.z / alpha * div
    if cfg.variance_mode == "se_stabilized":
        d = x_new - inst.x_o
        sigma2_new = max(float(d @ d) / inst.N, 1e-14) / alpha
    else:
        sigma2_new = max(sigma2 * div / alpha, 1e-14)
    out = AmpState(x_hat=x_new, z=z_new, A=1.0 / sigma2_new, t=state.t + 1,
                   aux={"sigma2": sigma2_new})
    if _diverged(x_new, out.A):
        out.aux["diverged"] = True
    return out


_STEPPERS = {"ht": amp_step, "soft": lasso_amp_step, "bayes": bayes_amp_step}


def _init_state(inst, cfg):
    if cfg.init == "informed":
        st = AmpState(x_hat=inst.x_o.copy(), z=np.zeros(inst.M),
                      A=inst.alpha, t=0)
        if cfg.denoiser == "bayes":
            st.aux["sigma2"] = 1e-12 / inst.alpha
        return st
    st = AmpState(x_hat=np.zeros(inst.N), z=inst.y.copy(), A=inst.alpha, t=0)
    if cfg.denoiser == "bayes":
        # uninformed field variance starts at the prior second moment / alpha
        st.aux["sigma2"] = max(inst.rho_o, 1e-12) / inst.alpha
    return st


def run(inst, cfg, state=None):
    """Iterate AMP to a fixed point, recording observables each sweep.

    Convergence is per-coordinate RMS change of x_hat below cfg.tol. Returns
    an AmpResult with status converged / max_iters / diverged.
    """
    step = _STEPPERS[cfg.denoiser]
    if state is None:
        state = _init_state(inst, cfg)
    trace = []
    status = "max_iters"
    for _ in range(cfg.max_iters):
        new = step(state, inst, cfg)
        if new.aux.get("diverged"):
            state = new
            status = "diverged"
            break
        trace.append(observables(inst, new.x_hat, cfg.lam))
        dx = new.x_hat - state.x_hat
        rms = math.sqrt(float(dx @ dx) / inst.N)
        state = new
        if rms < cfg.tol:
            status = "converged"
            break
    return AmpResult(state=state, trace=trace, status=status)


@dataclass(frozen=True)
class PgdConfig:
    """Proximal gradient descent: learning rate delta_star and threshold lam."""
    lam: float
    delta_star: float = 0.6
    max_iters: int = 100000
    tol: float = 1e-8

    def __post_init__(self):
        if self.delta_star <= 0:
            raise ValueError("PgdConfig: delta_star must be > 0")
        if self.lam < 0 or self.tol <= 0 or self.max_iters < 1:
            raise ValueError("PgdConfig: bad lam/tol/max_iters")


def pgd_step(x_hat, inst, cfg):
    """One proximal gradient step x' = eta_ht(delta*F^T(y-Fx) + x, lam*delta)."""
    grad = inst.F.T @ (inst.y - inst.F @ x_hat)
    return eta_ht(cfg.delta_star * grad + x_hat, cfg.lam * cfg.delta_star)


def run_pgd(inst, cfg, x0=None):
    """Iterate PGD from x0 (default 0) with the AMP convergence metric."""
    x = np.zeros(inst.N) if x0 is None else np.asarray(x0, dtype=float).copy()
    trace = []
    status = "max_iters"
    for t in range(cfg.max_iters):
        x_new = pgd_step(x, inst, cfg)
        if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new)) > _DIVERGE_LIMIT:
            x = x_new
            status = "diverged"
            break
        trace.append(observables(inst, x_new, cfg.lam))
        dx = x_new - x
        rms = math.sqrt(float(dx @ dx) / inst.N)
        x = x_new
        if rms < cfg.tol:
            status = "converged"
            break
    return x, trace, status
