"""Synthetic problem instances y = F x_o and the observables reported on them.

The measurement matrix has i.i.d. N(0, 1/N) entries and the planted signal is
Gauss-Bernoulli: each coordinate is zero with probability 1-rho_o and standard
normal otherwise. Measurements are noiseless, so y = F x_o holds to round-off.

Instances can be written to / read from a small binary container so that runs
on the same instance are reproducible across processes without re-generating.
"""

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import SeededRng

__all__ = ["ProblemInstance", "Observables", "generate", "observables",
           "save_instance", "load_instance"]

_MAGIC = b"L0CS"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQddQ")  # magic, version, N, M, alpha, rho_o, seed


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable compressed-sensing instance (arrays are write-locked)."""
    N: int
    M: int
    alpha: float
    F: np.ndarray
    x_o: np.ndarray
    y: np.ndarray
    rho_o: float
    seed: int

    def __post_init__(self):
        if self.F.shape != (self.M, self.N):
            raise ValueError("F must be M x N")
        if self.x_o.shape != (self.N,) or self.y.shape != (self.M,):
            raise ValueError("x_o / y shape mismatch")
        for a in (self.F, self.x_o, self.y):
            a.setflags(write=False)


@dataclass(frozen=True)
class Observables:
    """Per-coordinate scalars measured on an estimate x_hat.

    e is the data loss ||y - F x_hat||^2 / N, rho the exact-nonzero density,
    m and q the overlaps with the truth and with itself, E the squared error
    per coordinate, and rescaled_cost = e/lam + rho (None when lam = 0).
    """
    e: float
    rho: float
    m: float
    q: float
    E: float
    rescaled_cost: Optional[float]


def generate(N, alpha, rho_o, seed):
    """Draw a ProblemInstance reproducibly from a 64-bit seed.

    Parameters
    ----------
    N : int
        Signal dimension, at least 1.
    alpha : float
        Undersampling ratio in (0, 1]; the number of rows is M = round(alpha*N).
    rho_o : float
        Prior nonzero fraction in [0, 1].
    seed : int
        Master seed; matrix and signal use independent derived streams, so the
        same seed always yields bit-identical (F, x_o, y).
    """
    if N < 1:
        raise ValueError("generate: N must be >= 1")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("generate: alpha must lie in (0, 1]")
    if not 0.0 <= rho_o <= 1.0:
        raise ValueError("generate: rho_o must lie in [0, 1]")
    if alpha * N < 1.0:
        raise ValueError("generate: alpha*N < 1 leaves no measurements")
    M = int(round(alpha * N))
    rng = SeededRng(seed)
    g_mat = rng.stream(0, "matrix")
    g_sig = rng.stream(0, "signal")
    F = g_mat.standard_normal((M, N)) / np.sqrt(N)
    support = g_sig.random(N) < rho_o
    values = g_sig.standard_normal(N)
    x_o = np.where(support, values, 0.0)
    y = F @ x_o
    return ProblemInstance(N=N, M=M, alpha=float(alpha), F=F, x_o=x_o, y=y,
                           rho_o=float(rho_o), seed=int(seed))


def observables(inst, x_hat, lam):
    """Measure an estimate against the instance.

    Density counts exactly-nonzero entries, which is meaningful because the
    thresholding denoisers emit exact zeros. rescaled_cost is e/lam + rho;
    pass lam = 0 to omit it.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != (inst.N,):
        raise ValueError("observables: x_hat must have length N")
    if lam < 0:
        raise ValueError("observables: lam must be >= 0")
    r = inst.y - inst.F @ x_hat
    e = float(r @ r) / inst.N
    rho = np.count_nonzero(x_hat) / inst.N
    m = float(x_hat @ inst.x_o) / inst.N
    q = float(x_hat @ x_hat) / inst.N
    d = x_hat - inst.x_o
    E = float(d @ d) / inst.N
    rc = e / lam + rho if lam > 0 else None
    return Observables(e=e, rho=rho, m=m, q=q, E=E, rescaled_cost=rc)


def save_instance(inst, path):
    """Write the instance to ``path`` in the bit-exact binary container."""
    head = _HEADER.pack(_MAGIC, _VERSION, inst.N, inst.M,
                        inst.alpha, inst.rho_o, inst.seed)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(inst.F, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(inst.x_o, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(inst.y, dtype="<f8").tobytes())


def load_instance(path):
    """Read an instance written by :func:`save_instance`, bit-exactly."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("load_instance: truncated header")
        magic, version, N, M, alpha, rho_o, seed = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError("load_instance: bad magic %r" % (magic,))
        if version != _VERSION:
            raise ValueError("load_instance: unsupported version %d" % version)
        body = np.frombuffer(fh.read(), dtype="<f8")
    want = M * N + N + M
    if body.size != want:
        raise ValueError("load_instance: expected %d floats, got %d"
                         % (want, body.size))
    F = body[:M * N].reshape(M, N).copy()
    x_o = body[M * N:M * N + N].copy()
    y = body[M * N + N:].copy()
    return ProblemInstance(N=N, M=M, alpha=alpha, F=F, x_o=x_o, y=y,
                           rho_o=rho_o, seed=seed)
