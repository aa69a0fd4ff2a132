"""Orthonormal bases with a constant first column, and sparse localization.

Three families are supported:

* ``dct``      -- DCT-II, any ``p >= 2``;
* ``dht``      -- Sylvester-ordered Hadamard, ``p`` a power of two;
* ``dwt_haar`` -- discrete Haar wavelets (scaling function first, then
  wavelets from coarse to fine), ``p`` a power of two.

Matrices are dense; columns are the basis vectors so that ``f = D @ theta``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import hadamard

from .errors import ConfigurationError

KINDS = ("dct", "dht", "dwt_haar")


def _is_pow2(p):
    return p >= 1 and (p & (p - 1)) == 0


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """A p x p orthonormal matrix whose first column is ``p**-0.5 * ones``."""

    kind: str
    p: int
    columns: np.ndarray = field(repr=False)

    @property
    def dbar(self):
        """Columns 2..p (the part orthogonal to the constant vector)."""
        return self.columns[:, 1:]

    @property
    def d1(self):
        return self.columns[:, 0]

    def synthesize(self, theta):
        return synthesize(self, theta)

    def analyze(self, f):
        return analyze(self, f)


def _dct_matrix(p):
    i = np.arange(p)[:, None]
    j = np.arange(p)[None, :]
    D = math.sqrt(2.0 / p) * np.cos(np.pi * (2 * i + 1) * j / (2 * p))
    D[:, 0] = 1.0 / math.sqrt(p)
    return D


def _haar_matrix(p):
    D = np.zeros((p, p))
    D[:, 0] = 1.0 / math.sqrt(p)
    col = 1
    levels = int(round(math.log2(p)))
    for j in range(levels):
        width = p >> j
        half = width // 2
        amp = 2.0 ** (j / 2.0) / math.sqrt(p)
        for k in range(1 << j):
            start = k * width
            D[start:start + half, col] = amp
            D[start + half:start + width, col] = -amp
            col += 1
    return D


def build_basis(kind, p):
    """Construct the orthonormal basis ``kind`` of dimension ``p``.

    Raises
    ------
    ConfigurationError
        If ``kind`` is unknown, ``p < 2``, or ``p`` is not a power of two
        for ``dht``/``dwt_haar``.
    """
    if kind not in KINDS:
        raise ConfigurationError(f"unknown basis kind {kind!r}; expected one of {KINDS}")
    p = int(p)
    if p < 2:
        raise ConfigurationError(f"basis dimension must be >= 2, got {p}")
    if kind != "dct" and not _is_pow2(p):
        raise ConfigurationError(f"{kind} requires p to be a power of two, got {p}")

    if kind == "dct":
        D = _dct_matrix(p)
    elif kind == "dht":
        D = hadamard(p).astype(float) / math.sqrt(p)
    else:
        D = _haar_matrix(p)
    # exact constant column, independent of cos() rounding
    D[:, 0] = 1.0 / math.sqrt(p)
    D.setflags(write=False)
    return OrthonormalBasis(kind=kind, p=p, columns=D)


def _matrix(D):
    return D.columns if isinstance(D, OrthonormalBasis) else np.asarray(D, dtype=float)


def synthesize(D, theta):
    """Return ``f = D theta``."""
    M = _matrix(D)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (M.shape[1],):
        raise ConfigurationError(f"theta has shape {theta.shape}, expected ({M.shape[1]},)")
    return M @ theta


def analyze(D, f):
    """Return ``theta = D^T f``."""
    M = _matrix(D)
    f = np.asarray(f, dtype=float)
    if f.shape != (M.shape[0],):
        raise ConfigurationError(f"f has shape {f.shape}, expected ({M.shape[0]},)")
    return M.T @ f


def localization_exact(X, s):
    """s-sparse localization quantity of ``X``.

    The maximum of ``||X v||_inf`` over ``v in {-1, 0, 1}^r`` with exactly
    ``s`` nonzeros.  Each row can pick its own best signs, so the value is
    the largest row-wise sum of the ``s`` biggest absolute entries.
    """
    X = np.abs(_matrix(X))
    if X.ndim != 2:
        raise ConfigurationError("X must be a 2-d matrix")
    r = X.shape[1]
    s = int(s)
    if not 1 <= s <= r:
        raise ConfigurationError(f"s must lie in [1, {r}], got {s}")
    top = -np.partition(-X, s - 1, axis=1)[:, :s]
    return float(top.sum(axis=1).max())


def localization_bound(kind, k, p):
    """Tabulated localization values used inside the rate formulas.

    ``sqrt(2) k / sqrt(p)`` for DCT and DHT, ``1 / (sqrt(2) - 1)`` for Haar.
    These upper-bound (not equal) the exact quantity of ``D.dbar``.
    """
    if kind not in KINDS:
        raise ConfigurationError(f"unknown basis kind {kind!r}")
    if kind == "dwt_haar":
        return 1.0 / (math.sqrt(2.0) - 1.0)
    return math.sqrt(2.0) * k / math.sqrt(p)
