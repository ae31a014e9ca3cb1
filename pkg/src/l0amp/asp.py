"""Survey-style message passing with an adaptive replica weight, plus the
cheap one-track variant, and the annealing driver shared by both.

The full solver (ASP) sweeps a replicated posterior: each site carries a
cluster of near-degenerate minimizers summarized by a within-cluster variance
V0 and a between-cluster response V1, coupled to the measurement channel
through matched Onsager coefficients (A0, A1). The replica weight s is not a
fixed knob. After every sweep it is re-solved so that the log-count of the
targeted clusters (the complexity) vanishes, which keeps the iteration locked
onto the dominant cluster family at the current penalty. The simplified
solver (ASP_o) collapses the two-level structure into a single AMP-like track
whose denoiser is the smoothed hard threshold ``eta_aspo``; it reproduces the
full solver's combined variance V = V1 + s*V0 at a fraction of the cost.

Annealing lowers lam geometrically with warm starts. The trace holds one row
per lam with the standard observables, the combined variance and the replica
weight in force, so both solvers share a column layout.
"""

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.optimize import brentq

from .denoisers import eta_aspo, eta_aspo_prime, eta_ht
from .instance import observables
from .numerics import NumericalDomainError
from .phi1rsb import phi1rsb_eval
from .state_evolution import S_MAX, S_MIN, _V0_ACTIVATE, _track_sign_change

__all__ = ["AspState", "AspoState", "AnnealSchedule", "AnnealRow",
           "AnnealResult", "TRACE_FIELDS", "asp_init", "aspo_init",
           "asp_step", "aspo_step", "solve_zero_complexity_s", "anneal"]

_DIVERGE_LIMIT = 1e6

# replica-weight relaxation inside the anneal: fraction of the log-distance
# to the solved root applied per sweep, and the cap on one sweep's move
_S_RELAX = 0.15
_S_CLAMP = 0.2
# a root found on a cleanly converged iterate is applied exactly; the block
# is considered jointly settled once it moves log s by less than this
_S_SETTLED = 0.02
# log-s search range for the cold first block (the entry point has to find
# the zero-complexity manifold from scratch). Warm blocks get a much tighter
# range tied to the schedule: the root of a geometric anneal grows by a fixed
# modest factor per block, so movement beyond twice that rate is the
# signature of root-tracking gone off-manifold (the stalled-sweep roots are
# biased upward, and chasing them unboundedly manufactures an artificial
# V0 -> 0 collapse)
_S_COLD_RANGE = 2.5
_S_WARM_RANGE_FACTOR = 2.0
# solve cadence while the sweep is stalled: every sweep is overkill when the
# applied movement is clamped anyway
_S_STALL_EVERY = 5

# column order of the per-lam trace rows (mirrored by the CSV writer)
TRACE_FIELDS = ("lam", "t_converged", "e", "rho", "m", "q", "E", "V", "s",
                "status")


@dataclass
class AspState:
    """Iterate of the replicated sweep.

    x_hat is the cluster-averaged estimate, g the channel messages and w the
    Onsager-corrected prediction cached from the last sweep. (V0, V1) split
    the response into within-cluster and between-cluster parts; (A0, A1) are
    the matching field curvatures; s is the replica weight currently in
    force. ``aux`` carries the posterior activity mass and solver flags.
    """
    x_hat: np.ndarray
    g: np.ndarray
    w: np.ndarray
    V0: float
    V1: float
    A0: float
    A1: float
    s: float
    t: int = 0
    aux: dict = field(default_factory=dict)


@dataclass
class AspoState:
    """Iterate of the one-track variant: AMP skeleton with A = alpha/(1+V)
    and the smoothed hard threshold. ``aux`` keeps the last field u for the
    end-of-anneal support count."""
    x_hat: np.ndarray
    z: np.ndarray
    A: float
    V: float
    t: int = 0
    aux: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric penalty schedule with a per-lam iteration budget."""
    lambda_start: float = 0.5
    lambda_end: float = 1e-4
    factor: float = 0.8
    tol: float = 1e-8
    max_iters: int = 2000

    def __post_init__(self):
        if not 0.0 < self.lambda_end < self.lambda_start:
            raise ValueError(
                "AnnealSchedule: need 0 < lambda_end < lambda_start")
        if not 0.0 < self.factor < 1.0:
            raise ValueError("AnnealSchedule: factor must lie in (0, 1)")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("AnnealSchedule: need tol > 0 and max_iters >= 1")

    def lambdas(self):
        """Geometric grid from lambda_start down to (and including)
        lambda_end."""
        lams = []
        lam = self.lambda_start
        while lam > self.lambda_end:
            lams.append(lam)
            lam *= self.factor
        lams.append(self.lambda_end)
        return lams


@dataclass(frozen=True)
class AnnealRow:
    """One trace line, recorded after the sweep loop at each lam finishes.

    V is the combined variance (V1 + s*V0 for the full solver, V for the
    one-track variant, which carries no s of its own: that column is NaN).
    rho is the posterior activity mass for ASP and the post-threshold support
    fraction for ASP_o; both target the same limit, unlike the raw nonzero
    count of the never-exactly-zero ASP estimate.
    """
    lam: float
    t_converged: int
    e: float
    rho: float
    m: float
    q: float
    E: float
    V: float
    s: float
    status: str


@dataclass
class AnnealResult:
    rows: List[AnnealRow]
    state: object
    status: str  # converged | max_iters | diverged


def asp_init(inst, v0_seed=1e-2, s_init=1.0):
    """Uninformed start for the replicated solver.

    V0 must start positive: zero within-cluster variance reproduces itself
    exactly under the sweep (the A0 = 0 inner measure is a point mass with
    vanishing variance), so the two-level structure can only activate from a
    seeded value. v0_seed = 0 recovers the strictly one-level start.
    """
    if v0_seed < 0 or s_init <= 0:
        raise ValueError("asp_init: need v0_seed >= 0 and s_init > 0")
    T0 = 1.0 + s_init * v0_seed
    return AspState(x_hat=np.zeros(inst.N), g=np.zeros(inst.M),
                    w=np.zeros(inst.M), V0=v0_seed, V1=0.0,
                    A0=inst.alpha * v0_seed / T0, A1=inst.alpha,
                    s=s_init, t=0)


def aspo_init(inst):
    """Uninformed start for the one-track variant."""
    return AspoState(x_hat=np.zeros(inst.N), z=np.zeros(inst.M),
                     A=inst.alpha, V=0.0, t=0)


def asp_step(state, inst, lam, quad=None):
    """One full replicated sweep at fixed s.

    The update order is: Onsager-corrected prediction w, channel messages g,
    field curvatures (A0, A1), local field B, then the site-wise estimate and
    the two response scalars from the replicated free entropy. quad is
    accepted for interface uniformity with the other solvers and ignored:
    every site-wise quantity here is closed form.

    Raises
    ------
    NumericalDomainError
        If 1 + V1 + s*V0 or A1 - s*A0 fails to stay positive; the message
        carries the offending scalars. Divergence of the iterate itself is
        reported through ``aux["diverged"]``, as in the AMP solvers.
    """
    alpha = inst.alpha
    s, V0, V1 = state.s, state.V0, state.V1
    T = 1.0 + V1 + s * V0
    if not math.isfinite(T) or T <= 0.0:
        raise NumericalDomainError(
            "asp_step: 1 + V1 + s*V0 = %g must be positive "
            "(V0=%g, V1=%g, s=%g)" % (T, V0, V1, s))
    w = inst.F @ state.x_hat - state.g * (T - 1.0)
    g_new = (inst.y - w) / T
    A1_new = alpha / (1.0 + V1)
    A0_new = alpha * V0 / ((1.0 + V1) * T)
    D = A1_new - s * A0_new  # algebraically alpha / T
    if not math.isfinite(D) or D <= 0.0:
        raise NumericalDomainError(
            "asp_step: A1 - s*A0 = %g must be positive "
            "(A1=%g, A0=%g, s=%g)" % (D, A1_new, A0_new, s))
    B = inst.F.T @ g_new + state.x_hat * D
    out = phi1rsb_eval(B, A1_new, A0_new, lam, s)
    x_new = out["dB"]
    V0_new = float(np.mean(out["var_x"]))
    V1_new = float(np.mean(out["d2B"])) - s * V0_new
    new = AspState(x_hat=x_new, g=g_new, w=w, V0=V0_new, V1=V1_new,
                   A0=A0_new, A1=A1_new, s=s, t=state.t + 1)
    new.aux["rho_theta"] = float(np.mean(out["theta"]))
    if (not np.all(np.isfinite(x_new))
            or not (math.isfinite(V0_new) and math.isfinite(V1_new))
            or np.max(np.abs(x_new)) > _DIVERGE_LIMIT):
        new.aux["diverged"] = True
    return new


def aspo_step(state, inst, lam, xi):
    """One sweep of the one-track variant.

    A tracks alpha/(1+V); the residual message z keeps the memory term that
    makes its fixed point z = (y - F x_hat)/A; the estimate comes from the
    smoothed hard threshold at gate width xi. V is the mean denoiser slope
    over coordinates divided by A. Divergence is reported via
    ``aux["diverged"]``.
    """
    alpha = inst.alpha
    A_new = alpha / (1.0 + state.V)
    z_new = ((inst.y - inst.F @ state.x_hat) / alpha
             + state.z * (state.A / alpha) * (alpha / A_new - 1.0))
    u = inst.F.T @ z_new + state.x_hat
    thr = lam / A_new
    x_new = eta_aspo(u, thr, xi)
    V_new = float(np.mean(eta_aspo_prime(u, thr, xi))) / A_new
    new = AspoState(x_hat=x_new, z=z_new, A=A_new, V=V_new, t=state.t + 1,
                    aux={"u": u})
    if (not np.all(np.isfinite(x_new)) or not math.isfinite(V_new)
            or np.max(np.abs(x_new)) > _DIVERGE_LIMIT):
        new.aux["diverged"] = True
    return new


def solve_zero_complexity_s(state, inst, lam, s_min=S_MIN, s_max=S_MAX):
    """Replica weight solving the zero-complexity condition at the frozen
    iterate.

    Freezes (x_hat, g, V0, V1) and scans s: the field B = F^T g + x_hat *
    (A1 - s*A0) and the curvatures re-close at each candidate s, and the
    cluster log-count per site is evaluated in its /s^2 normalization (the
    raw count has a structural double root at s = 0, so the root-finder
    works on the normalized profile, whose zero set for s > 0 is the same).
    The sign change nearest log(state.s) is bracketed by an expanding window
    and polished by a bracketed solve tight enough that the raw count at the
    returned s sits below 1e-8 across the whole box.

    Returns (s, status): "ok" for an interior root, "cap"/"floor" when the
    profile keeps one sign over the whole box (s pinned to the edge toward
    which the count decreases, the boundary minimizer of |count|), "none"
    when the profile is flat at noise level (s kept), "degenerate" when V0
    is too small to carry any s-dependence (s kept). The count value at the
    returned s is stashed in ``state.aux["sigma_at_s"]`` when it was
    evaluated. Raises NumericalDomainError on a non-finite evaluation.
    """
    alpha = inst.alpha
    V0, V1 = state.V0, state.V1
    if V0 < _V0_ACTIVATE:
        return state.s, "degenerate"
    Ft_g = inst.F.T @ state.g
    x_hat, A1 = state.x_hat, alpha / (1.0 + V1)

    def profile(ls):
        s = math.exp(ls)
        T = 1.0 + V1 + s * V0
        A0 = alpha * V0 / ((1.0 + V1) * T)
        out = phi1rsb_eval(Ft_g + x_hat * (alpha / T), A1, A0, lam, s)
        q0 = float(np.mean(out["dB"] ** 2))
        val = ((alpha / (2.0 * s * s)) * math.log((1.0 + V1) / T)
               + (alpha / (2.0 * s)) * V0 / T
               + 0.5 * A0 * (V0 + q0)
               - float(np.mean(out["ds"])))
        if not math.isfinite(val):
            raise NumericalDomainError(
                "solve_zero_complexity_s: non-finite complexity at s=%g "
                "(lam=%g, V0=%g, V1=%g)" % (s, lam, V0, V1))
        return val

    lo = math.log(s_min)
    hi = math.log(s_max)
    c = min(max(math.log(state.s), lo), hi)
    bracket, vals = _track_sign_change(profile, c)
    if bracket is not None:
        bl, bh = bracket
        r = bl if bl == bh else brentq(profile, bl, bh, xtol=1e-14)
        s_root = min(max(math.exp(r), s_min), s_max)
        state.aux["sigma_at_s"] = s_root * s_root * profile(math.log(s_root))
        return s_root, "ok"
    if not vals or max(abs(v) for v in vals) < 1e-13:
        return state.s, "none"
    if all(v > 0.0 for v in vals):
        state.aux["sigma_at_s"] = s_max * s_max * profile(hi)
        return s_max, "cap"
    state.aux["sigma_at_s"] = s_min * s_min * profile(lo)
    return s_min, "floor"


def _trace_row(solver, state, inst, lam, t_used, status):
    obs = observables(inst, state.x_hat, lam)
    if solver == "asp":
        rho = state.aux.get("rho_theta", obs.rho)
        V = state.V1 + state.s * state.V0
        s = state.s
    else:
        u = state.aux.get("u")
        if u is None:
            rho = obs.rho
        else:
            # support fraction after one hard-threshold pass at the current
            # gain; the smoothed estimate itself has no exact zeros
            rho = np.count_nonzero(eta_ht(u, lam / state.A)) / inst.N
        V = state.V
        s = float("nan")
    return AnnealRow(lam=lam, t_converged=t_used, e=obs.e, rho=rho, m=obs.m,
                     q=obs.q, E=obs.E, V=V, s=s, status=status)


def anneal(solver, inst, schedule=None, xi=0.7, damping=0.0, state=None,
           s_min=S_MIN, s_max=S_MAX):
    """Lower lam geometrically with warm starts; one trace row per lam.

    solver is "asp" or "aspo". For "asp" the replica weight is re-solved
    along the sweep loop, but a solved root is never trusted on an early
    transient: applying roots computed from transient iterates makes the
    coupled (messages, s) iteration run away, with s compounding toward an
    artificial degeneracy. Instead the root is consulted once the sweep is
    quasi-stationary (its update norm has stopped shrinking) and s relaxes
    toward it in log space with a per-sweep step clamp; when a sweep
    converges cleanly the root is applied exactly and the sweep re-entered,
    so block convergence means the joint (messages, s) fixed point. The last
    search status lands in ``state.aux["s_status"]``.

    Damping, when positive, blends the estimate, the channel messages and
    the response scalars between sweeps; it is the standard cure for the
    bounded sweep-to-sweep wander the replicated phase shows at finite N. A
    diverged sweep ends the anneal early and the row carrying the failing
    lam closes the trace; a lam that merely exhausts max_iters is recorded
    and the anneal continues from its iterate.

    Returns an AnnealResult whose status is "diverged" for an aborted run,
    "converged" when every lam converged, "max_iters" otherwise.
    """
    if solver not in ("asp", "aspo"):
        raise ValueError("anneal: solver must be 'asp' or 'aspo'")
    if not 0.0 <= damping < 1.0:
        raise ValueError("anneal: damping must lie in [0, 1)")
    if schedule is None:
        schedule = AnnealSchedule()
    if state is None:
        state = asp_init(inst) if solver == "asp" else aspo_init(inst)
    rows = []
    any_max = False
    cold = state.t == 0
    warm_range = _S_WARM_RANGE_FACTOR * abs(math.log(schedule.factor))
    for bi, lam in enumerate(schedule.lambdas()):
        status = "max_iters"
        t_used = schedule.max_iters
        rms_hist = []
        ls_entry = math.log(state.s) if solver == "asp" else 0.0
        ls_range = _S_COLD_RANGE if (cold and bi == 0) else warm_range
        for it in range(schedule.max_iters):
            try:
                if solver == "asp":
                    new = asp_step(state, inst, lam)
                else:
                    new = aspo_step(state, inst, lam, xi)
            except NumericalDomainError as err:
                raise NumericalDomainError(
                    "anneal: failure at lam=%g: %s" % (lam, err)) from err
            if new.aux.get("diverged"):
                state, status, t_used = new, "diverged", it + 1
                break
            if damping > 0.0:
                new.x_hat = ((1.0 - damping) * new.x_hat
                             + damping * state.x_hat)
                if solver == "asp":
                    new.g = (1.0 - damping) * new.g + damping * state.g
                    new.V0 = (1.0 - damping) * new.V0 + damping * state.V0
                    new.V1 = (1.0 - damping) * new.V1 + damping * state.V1
                else:
                    new.V = (1.0 - damping) * new.V + damping * state.V
            dx = new.x_hat - state.x_hat
            rms = math.sqrt(float(dx @ dx) / inst.N)
            rms_hist.append(rms)
            state = new
            if rms < schedule.tol:
                if solver == "asp":
                    s_star, s_st = solve_zero_complexity_s(
                        state, inst, lam, s_min=s_min, s_max=s_max)
                    state.aux["s_status"] = s_st
                    if s_st == "ok":
                        ls = min(max(math.log(s_star), ls_entry - ls_range),
                                 ls_entry + ls_range)
                        if abs(ls - math.log(state.s)) > _S_SETTLED:
                            state.s = math.exp(ls)
                            rms_hist = []
                            continue
                status, t_used = "converged", it + 1
                break
            if (solver == "asp" and len(rms_hist) > 8
                    and rms > 0.9 * rms_hist[-9]
                    and it % _S_STALL_EVERY == 0):
                # stalled sweep: the iterate is as stationary as it gets,
                # so the root is meaningful; relax toward it
                s_star, s_st = solve_zero_complexity_s(
                    state, inst, lam, s_min=s_min, s_max=s_max)
                state.aux["s_status"] = s_st
                if s_st in ("ok", "cap", "floor"):
                    ls = math.log(state.s)
                    move = _S_RELAX * (math.log(s_star) - ls)
                    move = max(-_S_CLAMP, min(_S_CLAMP, move))
                    ls = min(max(ls + move, ls_entry - ls_range),
                             ls_entry + ls_range)
                    state.s = math.exp(ls)
        rows.append(_trace_row(solver, state, inst, lam, t_used, status))
        if status == "diverged":
            break
        if status == "max_iters":
            any_max = True
    if status == "diverged":
        overall = "diverged"
    elif any_max:
        overall = "max_iters"
    else:
        overall = "converged"
    return AnnealResult(rows=rows, state=state, status=overall)
