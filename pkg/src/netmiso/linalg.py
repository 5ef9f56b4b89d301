"""Small dense complex linear algebra used by the precoders.

Every routine accepts stacked matrices: the last two axes are the matrix,
leading axes are a batch (typically Monte Carlo trials).  Results for one
batch item never depend on the other items, which keeps trials
reproducible regardless of how they are grouped.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DEFAULT_COND_CAP",
    "SingularInputError",
    "RngStream",
    "hermitian",
    "matmul",
    "pinv",
    "orth_complement_projector",
    "sample_cgauss",
]

DEFAULT_COND_CAP = 1e10


class SingularInputError(np.linalg.LinAlgError):
    """Raised when a matrix is rank deficient or too ill-conditioned.

    ``index`` holds the flat batch indices of the offending matrices so a
    caller can resample just those trials.
    """

    def __init__(self, message, index=()):
        super().__init__(message)
        self.index = np.asarray(index, dtype=np.int64)


class RngStream:
    """Random stream keyed by ``(seed, stream_id, substream)``.

    The same key always yields the same sequence, independent of any other
    stream, so trial ``t`` draws identical numbers whether it runs alone,
    in a batch, or in a worker process.
    """

    def __init__(self, seed: int, stream_id: int = 0, substream: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.substream = int(substream)
        if min(self.seed, self.stream_id, self.substream) < 0:
            raise ValueError("seed and stream ids must be non-negative")
        ss = np.random.SeedSequence([self.seed, self.stream_id, self.substream])
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return (f"RngStream(seed={self.seed}, stream_id={self.stream_id}, "
                f"substream={self.substream})")


def hermitian(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def matmul(a, b):
    """Complex matrix product with a dimension check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def _cond1(g, g_inv):
    return (np.abs(g).sum(axis=-2).max(axis=-1)
            * np.abs(g_inv).sum(axis=-2).max(axis=-1))


def _gram_inverse(g, cond_cap):
    n = g.shape[-1]
    eye = np.broadcast_to(np.eye(n, dtype=g.dtype), g.shape)
    try:
        g_inv = np.linalg.solve(g, eye)
    except np.linalg.LinAlgError:
        # An exactly singular item aborts the whole stacked solve; redo it
        # item by item to find which ones failed.
        flat = g.reshape(-1, n, n)
        bad = []
        for k, gk in enumerate(flat):
            try:
                np.linalg.solve(gk, np.eye(n))
            except np.linalg.LinAlgError:
                bad.append(k)
        raise SingularInputError("singular Gram matrix", bad) from None
    # cond(A)^2 == cond(A A^H); the 1-norm estimate is within a factor n.
    cond = np.sqrt(_cond1(g, g_inv))
    bad = ~np.isfinite(cond) | (cond > cond_cap)
    if np.any(bad):
        raise SingularInputError(
            f"condition estimate above cap {cond_cap:g}",
            np.flatnonzero(bad.reshape(-1)))
    return g_inv


def pinv(a, cond_cap=DEFAULT_COND_CAP):
    """Moore-Penrose pseudo-inverse of a full-rank matrix.

    Uses the normal equations, ``A^H (A A^H)^-1`` for wide inputs and
    ``(A^H A)^-1 A^H`` for tall ones.  Rank-deficient or ill-conditioned
    inputs raise :class:`SingularInputError` instead of being regularized.
    """
    a = np.asarray(a, dtype=np.complex128)
    rows, cols = a.shape[-2:]
    if rows == 0 or cols == 0:
        return np.zeros(a.shape[:-2] + (cols, rows), dtype=np.complex128)
    ah = hermitian(a)
    if rows <= cols:
        out = ah @ _gram_inverse(a @ ah, cond_cap)
    else:
        out = _gram_inverse(ah @ a, cond_cap) @ ah
    return out


def orth_complement_projector(a, cond_cap=DEFAULT_COND_CAP):
    """Projector onto the null space of the rows of ``a``.

    ``a`` must be full row-rank with ``rows <= cols``.  An empty ``0 x N``
    input gives the identity.
    """
    a = np.asarray(a, dtype=np.complex128)
    rows, cols = a.shape[-2:]
    if rows > cols:
        raise ValueError(f"need rows <= cols, got {rows}x{cols}")
    eye = np.eye(cols, dtype=np.complex128)
    if rows == 0:
        return np.broadcast_to(eye, a.shape[:-2] + (cols, cols)).copy()
    return eye - pinv(a, cond_cap) @ a


def sample_cgauss(rng: RngStream, rows: int, cols: int, variance: float = 1.0):
    """Draw a ``rows x cols`` matrix of i.i.d. CN(0, variance) entries.

    Real and imaginary parts are interleaved per entry in row-major order.
    """
    if not variance > 0:
        raise ValueError("variance must be positive")
    x = rng.generator.standard_normal((rows, cols, 2))
    x *= np.sqrt(variance / 2.0)
    return x[..., 0] + 1j * x[..., 1]
