"""
Small dense complex linear algebra used by the interference alignment engine.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. The handful of
loop-heavy kernels (Gaussian elimination and power iteration) are compiled
with numba, since the simulator calls them on tiny (at most 7x7) matrices
hundreds of thousands of times per sweep.

All functions are pure and return new arrays.
"""

import numba
import numpy as np

# Tolerances. Kept together so tests and callers agree on them.
PIVOT_TOL = 1e-12
POWER_TOL = 1e-10
POWER_MAX_ITER = 500
PHASE_TOL = 1e-10
NULL_EIGEN_MIN = 0.5


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a pivot falls below ``PIVOT_TOL`` during elimination."""


class DegenerateChannelError(np.linalg.LinAlgError):
    """Raised when a channel matrix has no usable null space."""


def cmatrix(entries):
    """Build a 2-D complex matrix, rejecting non-finite entries.

    Parameters
    ----------
    entries : array_like
        Nested sequence (or array) of complex scalars.

    Returns
    -------
    numpy.ndarray
        C-contiguous ``complex128`` array with ``ndim == 2``.
    """
    a = np.array(entries, dtype=np.complex128, ndmin=2)
    if a.ndim != 2:
        raise ValueError("a matrix must be two-dimensional, got shape %s" % (a.shape,))
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return np.ascontiguousarray(a)


def cvector(entries):
    """Build a 1-D complex vector, rejecting non-finite entries."""
    v = np.array(entries, dtype=np.complex128).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def matmul(a, b):
    """Complex matrix product ``a @ b`` with an explicit shape check."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError("cannot multiply shapes %s and %s" % (a.shape, b.shape))
    return a @ b


def hermitian(a):
    """Conjugate transpose."""
    return np.ascontiguousarray(np.asarray(a, dtype=np.complex128).conj().T)


@numba.njit(cache=True)
def _gauss_jordan(a, tol):
    n = a.shape[0]
    m = a.copy()
    inv = np.eye(n, dtype=np.complex128)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            if abs(m[i, j]) > scale:
                scale = abs(m[i, j])
    if scale == 0.0:
        return inv, False
    thresh = tol * scale
    for col in range(n):
        piv = col
        best = abs(m[col, col])
        for r in range(col + 1, n):
            if abs(m[r, col]) > best:
                best = abs(m[r, col])
                piv = r
        if best < thresh:
            return inv, False
        if piv != col:
            for j in range(n):
                t = m[col, j]
                m[col, j] = m[piv, j]
                m[piv, j] = t
                t = inv[col, j]
                inv[col, j] = inv[piv, j]
                inv[piv, j] = t
        p = 1.0 / m[col, col]
        for j in range(n):
            m[col, j] *= p
            inv[col, j] *= p
        for r in range(n):
            if r != col:
                f = m[r, col]
                if f != 0:
                    for j in range(n):
                        m[r, j] -= f * m[col, j]
                        inv[r, j] -= f * inv[col, j]
    return inv, True


def invert(a):
    """Inverse of a square complex matrix by Gauss-Jordan elimination.

    Partial pivoting is used. A pivot whose magnitude is below
    ``PIVOT_TOL`` times the largest entry of ``a`` raises
    :class:`SingularMatrixError`.
    """
    a = np.ascontiguousarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("invert needs a square matrix, got shape %s" % (a.shape,))
    inv, ok = _gauss_jordan(a, PIVOT_TOL)
    if not ok:
        raise SingularMatrixError("matrix is singular to working precision")
    return inv


@numba.njit(cache=True)
def _fix_phase(x, tol):
    for j in range(x.shape[0]):
        mag = abs(x[j])
        if mag > tol:
            rot = np.conj(x[j]) / mag
            for i in range(x.shape[0]):
                x[i] *= rot
            x[j] = mag
            return x
    return x


@numba.njit(cache=True)
def _power_iteration(a, tol, max_iter, phase_tol):
    n = a.shape[0]
    # Fixed generic start vector; deterministic and never structured.
    x = np.empty(n, dtype=np.complex128)
    nrm = 0.0
    for j in range(n):
        x[j] = (1.0 + 0.37 * j) * np.exp(1j * (0.61 + 1.3 * j))
        nrm += abs(x[j]) ** 2
    x /= np.sqrt(nrm)
    y = np.empty(n, dtype=np.complex128)
    for _ in range(max_iter):
        for i in range(n):
            s = 0j
            for j in range(n):
                s += a[i, j] * x[j]
            y[i] = s
        nrm = 0.0
        for i in range(n):
            nrm += y[i].real ** 2 + y[i].imag ** 2
        nrm = np.sqrt(nrm)
        if nrm == 0.0:
            break
        c = 0j
        for i in range(n):
            c += np.conj(x[i]) * y[i]
        rot = 1.0 / nrm
        if abs(c) > 0.0:
            rot = np.conj(c) / abs(c) / nrm
        diff = 0.0
        for i in range(n):
            y[i] *= rot
            d = y[i] - x[i]
            diff += d.real ** 2 + d.imag ** 2
        x, y = y, x
        if np.sqrt(diff) < tol:
            break
    lam = 0.0
    for i in range(n):
        s = 0j
        for j in range(n):
            s += a[i, j] * x[j]
        lam += (np.conj(x[i]) * s).real
    return _fix_phase(x, phase_tol), lam


@numba.njit(cache=True)
def _max_eig_kernel(a):
    # Hermitian part, then power iteration; callable from other kernels.
    sym = 0.5 * (a + a.conj().T)
    return _power_iteration(np.ascontiguousarray(sym), POWER_TOL, POWER_MAX_ITER, PHASE_TOL)


def max_eigenvector(a):
    """Dominant eigenpair of a Hermitian positive semi-definite matrix.

    The input is symmetrised as ``(a + a^H) / 2`` before power iteration.
    Iteration stops when consecutive phase-aligned iterates differ by less
    than ``POWER_TOL`` or after ``POWER_MAX_ITER`` steps. The returned
    vector has unit norm and its first non-negligible entry is real and
    positive.

    Returns
    -------
    vector : numpy.ndarray
    eigenvalue : float
        Rayleigh quotient of ``vector``.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("max_eigenvector needs a square matrix, got shape %s" % (a.shape,))
    return _max_eig_kernel(np.ascontiguousarray(a))


def null_vector(a):
    """Unit vector orthogonal to the column space of a tall matrix.

    ``a`` has shape ``(J+1, J)`` and full column rank. The result is the
    dominant eigenvector of the projector ``I - a (a^H a)^{-1} a^H``, so
    ``u^H a`` vanishes to working precision.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] + 1:
        raise ValueError("null_vector needs a (J+1) x J matrix, got shape %s" % (a.shape,))
    ah = a.conj().T
    try:
        gram_inv = invert(ah @ a)
    except SingularMatrixError as exc:
        raise DegenerateChannelError("channel matrix is rank deficient") from exc
    proj = np.eye(a.shape[0], dtype=np.complex128) - a @ gram_inv @ ah
    u, lam = max_eigenvector(proj)
    if lam < NULL_EIGEN_MIN:
        raise DegenerateChannelError("projector has no unit eigenvalue (lambda=%g)" % lam)
    return u
