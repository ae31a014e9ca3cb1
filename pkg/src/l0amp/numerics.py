"""Deterministic numerical kernels shared by every other module.

Contents: Gauss-Hermite quadrature in the probabilists' normalization (so that
weights are probabilities under N(0,1)), Gauss-Bernoulli expectation operators,
stable erfc / log-erfc / Mills-ratio helpers, a panel-based Gaussian integrator
for integrands with boundary layers, and counter-based seeded random streams.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import special as sp

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG2 = math.log(2.0)


class NumericalDomainError(ValueError):
    """A numeric operation left its validity domain (non-finite value, bad invariant)."""


# --- special functions -------------------------------------------------------

def erfc_stable(u):
    """Complementary error function, elementwise.

    Thin wrapper over the scipy implementation; kept as a named operation so the
    accuracy contract (relative error <= 1e-13 on the normal float64 range) is
    tested in one place.
    """
    return sp.erfc(u)


def log_erfc(u):
    """log(erfc(u)) without underflow, valid for u up to ~1e6 and beyond.

    Uses log(erfc(u)) = log(2) + log(ndtr(-sqrt(2) u)); scipy's log_ndtr switches
    to an asymptotic expansion in the far tail.
    """
    return _LOG2 + sp.log_ndtr(-_SQRT2 * np.asarray(u, dtype=float))


def gaussian_pdf(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def gaussian_cdf(u):
    return sp.ndtr(u)


def mills_ratio(beta):
    """pdf(beta)/P(Z > beta) for standard normal Z, elementwise and overflow-safe.

    For beta -> +inf this grows like beta (handled through erfcx); for very
    negative beta the denominator is 1 up to ~1e-150 and the ratio is just the pdf.
    """
    beta = np.asarray(beta, dtype=float)
    safe = beta > -26.0
    out = np.empty_like(beta)
    b = np.where(safe, beta, 0.0)
    out_safe = math.sqrt(2.0 / math.pi) / sp.erfcx(b / _SQRT2)
    out = np.where(safe, out_safe, gaussian_pdf(beta))
    return out


def log_gauss_interval_prob(lo, hi):
    """log P(lo < Z < hi) for standard normal Z, stable when both bounds sit in a far tail.

    lo and hi are standardized bounds; broadcasting applies. Empty intervals give -inf.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    # fold onto the lower half line where log_ndtr is the accurate representation
    flip = (lo + hi) > 0.0
    lo_f = np.where(flip, -hi, lo)
    hi_f = np.where(flip, -lo, hi)
    l_hi = sp.log_ndtr(hi_f)
    l_lo = sp.log_ndtr(lo_f)
    diff = l_lo - l_hi
    with np.errstate(divide="ignore", invalid="ignore"):
        out = l_hi + np.log(-np.expm1(diff))
    out = np.where(hi <= lo, -np.inf, out)
    # diff == 0 can only happen for an interval of zero measure
    out = np.where(np.isnan(out), -np.inf, out)
    return out


def truncated_gauss_lower_moments(mu, sigma, c):
    """First and second moments of N(mu, sigma^2) conditioned on exceeding c.

    Returns (E[X], E[X^2]); elementwise. The conditioning weight is up to the
    caller; deep truncations (weight ~ 0) return finite but meaningless values
    and must be masked by that weight.
    """
    mu = np.asarray(mu, dtype=float)
    beta = (c - mu) / sigma
    h = mills_ratio(beta)
    m1 = mu + sigma * h
    m2 = mu * mu + sigma * sigma + sigma * (mu + c) * h
    return m1, m2


# --- quadrature --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Quadrature:
    """Gauss-Hermite rule normalized for expectations under the standard normal."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def expect(self, values):
        """Weighted sum of values sampled on the nodes (last axis)."""
        return np.asarray(values) @ self.weights


def gauss_hermite(order):
    """Probabilists' Gauss-Hermite rule with weights summing to one.

    Exact for polynomials of degree <= 2*order-1 under N(0,1). Rejects order < 2.
    """
    order = int(order)
    if order < 2:
        raise ValueError(f"quadrature order must be >= 2, got {order}")
    nodes, weights = hermegauss(order)
    weights = weights / _SQRT_2PI
    return Quadrature(nodes=nodes, weights=weights, order=order)


@dataclass(frozen=True)
class SignalPrior:
    """Gauss-Bernoulli prior: point mass 1-rho_o at zero, N(0,1) slab with weight rho_o."""

    rho_o: float

    def __post_init__(self):
        if not 0.0 <= self.rho_o <= 1.0:
            raise ValueError(f"rho_o must lie in [0,1], got {self.rho_o}")

    @property
    def second_moment(self):
        return self.rho_o


def expect_signal_z(f, prior, quad):
    """E[f(x_o, z)] with x_o Gauss-Bernoulli and z standard normal, independent.

    The zero atom is split off analytically (weight 1-rho_o); the slab and the
    z-average use a tensor-product Gauss-Hermite rule. f must accept and
    broadcast numpy arrays. Non-finite integrand values raise
    NumericalDomainError naming the offending node.
    """
    z = quad.nodes
    w = quad.weights
    atom_vals = np.asarray(f(np.zeros_like(z), z), dtype=float)
    xg = quad.nodes[:, None]
    zg = z[None, :]
    slab_vals = np.asarray(f(np.broadcast_to(xg, (quad.order, quad.order)), zg), dtype=float)
    for vals, where in ((atom_vals, "x_o=0"), (slab_vals, "slab")):
        if not np.all(np.isfinite(vals)):
            idx = np.unravel_index(np.argmax(~np.isfinite(vals)), vals.shape)
            if vals.ndim == 1:
                node = f"{where}, z={z[idx[0]]:.6g}"
            else:
                node = f"x_o={quad.nodes[idx[0]]:.6g}, z={z[idx[1]]:.6g}"
            raise NumericalDomainError(f"non-finite integrand at node ({node})")
    atom = atom_vals @ w
    slab = w @ slab_vals @ w
    return float((1.0 - prior.rho_o) * atom + prior.rho_o * slab)


# --- panel integrator for layered integrands ---------------------------------

_GL_CACHE = {}


def _gl_rule(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = leggauss(n)
    return _GL_CACHE[n]


def even_gauss_nodes(sigma, layers=(), n_per_panel=20, tail_sigmas=12.0, max_panel_sigmas=1.25):
    """Nodes and weights for E[f(B)], B ~ N(0, sigma^2), f even in B.

    Returns (b, w) with b > 0 (plus possibly 0) such that sum(w * f(b)) approximates
    the expectation for even f; the Gaussian density and the factor 2 from folding
    the negative half-line are baked into w.

    layers is an iterable of (center, halfwidth) pairs marking locations where the
    integrand varies on a scale much shorter than sigma (thresholds, tilted-weight
    crossovers); each layer gets its own refinement panels. Degenerate sigma
    returns the point mass at zero.
    """
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0.0:
        return np.array([0.0]), np.array([1.0])
    hi = tail_sigmas * sigma
    cuts = {0.0, hi}
    for center, half in layers:
        center = abs(float(center))
        half = float(half)
        if not np.isfinite(center) or not np.isfinite(half) or half <= 0.0:
            continue
        a = max(center - half, 0.0)
        b = min(center + half, hi)
        if b <= a:
            continue
        for k in range(5):
            cuts.add(a + (b - a) * k / 4.0)
    cuts = sorted(cuts)
    edges = []
    max_len = max_panel_sigmas * sigma
    for p, q in zip(cuts[:-1], cuts[1:]):
        gap = q - p
        if gap <= 0.0:
            continue
        nsplit = max(1, int(math.ceil(gap / max_len)))
        step = gap / nsplit
        for k in range(nsplit):
            edges.append((p + k * step, p + (k + 1) * step))
    gx, gw = _gl_rule(n_per_panel)
    bs = []
    ws = []
    for p, q in edges:
        half = 0.5 * (q - p)
        mid = 0.5 * (q + p)
        bs.append(mid + half * gx)
        ws.append(half * gw)
    b = np.concatenate(bs)
    w = np.concatenate(ws)
    w = w * 2.0 * gaussian_pdf(b / sigma) / sigma
    return b, w


# --- seeded random streams ---------------------------------------------------

_PURPOSE_IDS = {"matrix": 0, "signal": 1, "init": 2, "misc": 3}


@dataclass(frozen=True)
class SeededRng:
    """Counter-based random source with named, independent substreams.

    Substreams are keyed by (instance_id, purpose); identical seeds give
    bit-identical streams, and distinct (instance, purpose) pairs are
    statistically independent (Philox under numpy's SeedSequence spawning).
    """

    seed: int
    algorithm_id: str = field(default="philox", compare=False)

    def stream(self, instance_id=0, purpose="matrix"):
        if purpose not in _PURPOSE_IDS:
            raise ValueError(
                f"unknown rng purpose {purpose!r}; valid: {sorted(_PURPOSE_IDS)}")
        ss = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF,
                                    spawn_key=(int(instance_id), _PURPOSE_IDS[purpose]))
        return np.random.Generator(np.random.Philox(ss))
