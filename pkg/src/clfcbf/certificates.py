"""Quadratic Lyapunov and barrier certificates with linear class-K margins.

A certificate evaluates to ``(x - center)^T shape (x - center) + offset``;
its gradient and Hessian are exact.  A CLF has positive-definite shape and
zero offset (so V >= 0 with V = 0 only at the center).  A barrier is any
symmetric quadric; the bundled scenarios use positive-definite shapes with
offset -1, i.e. ellipsoidal obstacles where ``h < 0`` inside.

CBFs are numbered 1..N throughout the package: active sets are subsets of
{0, 1, .., N} with 0 denoting the CLF row, matching the trajectory-log
bitmask (bit 0 = CLF row, bit i = CBF i).
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError

__all__ = ["ClassKappa", "QuadraticCertificate", "CertificateSet"]

MAX_BARRIERS = 8


@dataclass(frozen=True)
class ClassKappa:
    """Linear class-K function ``s -> gain * s`` with gain > 0."""

    gain: float

    def __post_init__(self):
        if not (float(self.gain) > 0.0):
            raise InvalidParameterError(f"class-K gain must be > 0, got {self.gain}")
        object.__setattr__(self, "gain", float(self.gain))

    def value(self, s):
        return self.gain * float(s)

    def slope(self, s):
        return self.gain


@dataclass(frozen=True)
class QuadraticCertificate:
    """Quadric ``(x - center)^T shape (x - center) + offset``."""

    kind: str  # "clf" | "cbf"
    shape: np.ndarray
    center: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.shape, dtype=float))
        c = np.asarray(self.center, dtype=float).ravel()
        if S.shape[0] != S.shape[1]:
            raise DimensionMismatchError(f"shape must be square, got {S.shape}")
        if c.shape[0] != S.shape[0]:
            raise DimensionMismatchError(
                f"center has dim {c.shape[0]}, shape is {S.shape}")
        if not np.allclose(S, S.T, rtol=0.0, atol=1e-12):
            raise InvalidParameterError("certificate shape matrix must be symmetric")
        if self.kind == "clf":
            if float(self.offset) != 0.0:
                raise InvalidParameterError("CLF offset must be 0")
            if np.any(np.linalg.eigvalsh(S) <= 0.0):
                raise InvalidParameterError("CLF shape matrix must be positive definite")
        elif self.kind != "cbf":
            raise InvalidParameterError(f"unknown certificate kind {self.kind!r}")
        object.__setattr__(self, "shape", S)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def clf(cls, shape, center):
        return cls(kind="clf", shape=shape, center=center, offset=0.0)

    @classmethod
    def barrier(cls, shape, center, offset=-1.0):
        return cls(kind="cbf", shape=shape, center=center, offset=offset)

    @property
    def n(self):
        return self.center.shape[0]

    def value(self, x):
        d = np.asarray(x, dtype=float).ravel() - self.center
        return float(d @ self.shape @ d) + self.offset

    def gradient(self, x):
        d = np.asarray(x, dtype=float).ravel() - self.center
        return 2.0 * (self.shape @ d)

    def hessian(self, x=None):
        return 2.0 * self.shape


def _check_indices(indices, n_barriers):
    idx = tuple(int(i) for i in indices)
    for i in idx:
        if not 1 <= i <= n_barriers:
            raise InvalidParameterError(
                f"CBF index {i} out of range 1..{n_barriers}")
    if len(set(idx)) != len(idx):
        raise InvalidParameterError(f"repeated CBF index in {idx}")
    return idx


@dataclass(frozen=True)
class CertificateSet:
    """A CLF (optional, absent exactly in safety-filter mode) plus N >= 1 CBFs.

    ``gamma`` is the CLF's class-K margin, ``alphas[i]`` the margin of CBF
    i+1.  When the CLF is absent, V, its gradient and Hessian evaluate to
    zero and gamma evaluates to the zero function — exactly the
    safety-filter substitution V = 0.
    """

    cbfs: Tuple[QuadraticCertificate, ...]
    alphas: Tuple[ClassKappa, ...]
    clf: Optional[QuadraticCertificate] = None
    gamma: Optional[ClassKappa] = None

    def __post_init__(self):
        cbfs = tuple(self.cbfs)
        alphas = tuple(self.alphas)
        if len(cbfs) < 1:
            raise InvalidParameterError("at least one CBF is required")
        if len(cbfs) > MAX_BARRIERS:
            raise InvalidParameterError(
                f"N={len(cbfs)} CBFs exceeds the supported cap {MAX_BARRIERS}")
        if len(alphas) != len(cbfs):
            raise DimensionMismatchError(
                f"{len(alphas)} class-K margins for {len(cbfs)} CBFs")
        n = cbfs[0].n
        for b in cbfs:
            if b.kind != "cbf":
                raise InvalidParameterError("cbfs must all have kind 'cbf'")
            if b.n != n:
                raise DimensionMismatchError("CBFs live in different dimensions")
        if (self.clf is None) != (self.gamma is None):
            raise InvalidParameterError("clf and gamma must be present together")
        if self.clf is not None:
            if self.clf.kind != "clf":
                raise InvalidParameterError("clf must have kind 'clf'")
            if self.clf.n != n:
                raise DimensionMismatchError("CLF dimension differs from CBFs")
        object.__setattr__(self, "cbfs", cbfs)
        object.__setattr__(self, "alphas", alphas)

    @property
    def n(self):
        return self.cbfs[0].n

    @property
    def n_barriers(self):
        return len(self.cbfs)

    @property
    def has_clf(self):
        return self.clf is not None

    # -- CLF side (zero substitution when absent) ---------------------------

    def clf_value(self, x):
        return self.clf.value(x) if self.clf is not None else 0.0

    def clf_gradient(self, x):
        if self.clf is not None:
            return self.clf.gradient(x)
        return np.zeros(self.n)

    def clf_hessian(self):
        if self.clf is not None:
            return self.clf.hessian()
        return np.zeros((self.n, self.n))

    def gamma_value(self, s):
        return self.gamma.value(s) if self.gamma is not None else 0.0

    def gamma_slope(self, s):
        return self.gamma.slope(s) if self.gamma is not None else 0.0

    # -- CBF side ------------------------------------------------------------

    def barrier(self, i):
        """CBF number i (1-based)."""
        (i,) = _check_indices((i,), self.n_barriers)
        return self.cbfs[i - 1]

    def barrier_values(self, x):
        return np.array([b.value(x) for b in self.cbfs])

    def stacked_gradients(self, x, indices=None):
        """Gradient columns [grad h_{a_1} .. grad h_{a_r}] as an (n, r) matrix.

        ``indices`` is an ordered sequence of 1-based CBF indices; all N in
        natural order when omitted.  Column order follows ``indices``.
        """
        if indices is None:
            indices = range(1, self.n_barriers + 1)
        idx = _check_indices(indices, self.n_barriers)
        if not idx:
            return np.zeros((self.n, 0))
        return np.column_stack([self.cbfs[i - 1].gradient(x) for i in idx])

    def alpha_vector(self, x, indices=None):
        """Stacked margins (alpha_{a_i}(h_{a_i}(x)))_i for the given indices."""
        if indices is None:
            indices = range(1, self.n_barriers + 1)
        idx = _check_indices(indices, self.n_barriers)
        return np.array(
            [self.alphas[i - 1].value(self.cbfs[i - 1].value(x)) for i in idx])

    def alpha_slopes(self, x, indices=None):
        """Stacked derivatives alpha'_{a_i}(h_{a_i}(x)); all positive."""
        if indices is None:
            indices = range(1, self.n_barriers + 1)
        idx = _check_indices(indices, self.n_barriers)
        return np.array(
            [self.alphas[i - 1].slope(self.cbfs[i - 1].value(x)) for i in idx])
