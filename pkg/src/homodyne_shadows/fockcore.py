"""Special-function kernel for the truncated Fock space.

Provides physicists' Hermite polynomials, the harmonic-oscillator
(Fock-state) wavefunctions psi_n, and the normalized Gaussian-Hermite
bin integrals

    bin_overlap(m, n, a, b) = integral_a^b psi_m(x) psi_n(x) dx,

which are the real building blocks of every discretized-homodyne POVM
matrix element.  Integration uses adaptive Gauss-Legendre panels with an
absolute tolerance of 1e-12; infinite edges are truncated at a point far
beyond the classically allowed region, where the integrand has decayed
below any level that could affect the result.
"""

import math
from functools import lru_cache

import numpy as np

from .errors import QuadratureConvergenceError

__all__ = [
    "hermite_eval",
    "wavefunction",
    "bin_overlap",
    "numeric_support",
    "DEFAULT_TOL",
]

# Absolute tolerance for all bin integrals.
DEFAULT_TOL = 1e-12

# Fixed 24-node Gauss-Legendre rule used for each adaptive panel.  24 nodes
# integrate polynomials up to degree 47 exactly, so a single panel already
# nails low-order Hermite products over moderate intervals.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)

# Hard cap on bisection depth; at tolerance 1e-12 convergence happens within
# a handful of levels, so hitting this indicates a genuinely bad integrand.
_MAX_DEPTH = 48


def hermite_eval(n, x):
    """Physicists' Hermite polynomial H_n(x) by the three-term recurrence.

    Uses H_{j+1}(x) = 2x H_j(x) - 2j H_{j-1}(x) starting from H_0 = 1,
    H_1 = 2x.  Accepts scalar or array ``x``.  Intended for n <= 64; the
    raw recurrence overflows for much larger orders.
    """
    if n < 0:
        raise ValueError("Hermite order must be non-negative, got %r" % (n,))
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = 2.0 * x
    for j in range(1, n):
        h, h_prev = 2.0 * x * h - 2.0 * j * h_prev, h
    return h if h.ndim else float(h)


def wavefunction(n, x):
    """Harmonic-oscillator eigenfunction psi_n(x) = (2^n n! sqrt(pi))^{-1/2} H_n(x) e^{-x^2/2}.

    Evaluated with the normalized recurrence

        psi_{j+1} = x sqrt(2/(j+1)) psi_j - sqrt(j/(j+1)) psi_{j-1},

    which keeps intermediate magnitudes O(1) and stays accurate for all
    supported orders (n <= 64), unlike forming 2^n n! explicitly.
    Accepts scalar or array ``x``.
    """
    if n < 0:
        raise ValueError("Fock index must be non-negative, got %r" % (n,))
    x = np.asarray(x, dtype=float)
    psi_prev = math.pi ** (-0.25) * np.exp(-0.5 * x * x)
    if n == 0:
        return psi_prev if psi_prev.ndim else float(psi_prev)
    psi = x * math.sqrt(2.0) * psi_prev
    for j in range(1, n):
        psi, psi_prev = (
            x * math.sqrt(2.0 / (j + 1)) * psi - math.sqrt(j / (j + 1)) * psi_prev,
            psi,
        )
    return psi if psi.ndim else float(psi)


def numeric_support(m, n):
    """Truncation point substituting for infinite integration limits.

    The Hermite function psi_n has essentially all its mass inside the
    classically allowed region |x| < sqrt(2n+1); ten extra units of
    quadrature put the integrand magnitude far below 1e-12 resolution
    for every order up to 64.
    """
    return math.sqrt(2.0 * max(m, n) + 1.0) + 10.0


def _pair_values(m, n, x):
    """psi_m(x) * psi_n(x) for an array x, from one upward recurrence."""
    hi = max(m, n)
    psi_prev = math.pi ** (-0.25) * np.exp(-0.5 * x * x)
    psi = x * math.sqrt(2.0) * psi_prev if hi >= 1 else psi_prev
    kept = {}
    if m == 0 or n == 0:
        kept[0] = psi_prev
    if hi >= 1 and (m == 1 or n == 1):
        kept[1] = psi
    for j in range(1, hi):
        psi, psi_prev = (
            x * math.sqrt(2.0 / (j + 1)) * psi - math.sqrt(j / (j + 1)) * psi_prev,
            psi,
        )
        if j + 1 == m or j + 1 == n:
            kept[j + 1] = psi
    return kept[m] * kept[n]


def _panel(m, n, a, b):
    """24-node Gauss-Legendre estimate of the pair integral over [a, b]."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid + half * _GL_NODES
    return half * float(np.dot(_GL_WEIGHTS, _pair_values(m, n, x)))


def _adaptive(m, n, a, b, tol, depth):
    """Recursive panel bisection: accept when whole vs. split agree within tol."""
    whole = _panel(m, n, a, b)
    mid = 0.5 * (a + b)
    left = _panel(m, n, a, mid)
    right = _panel(m, n, mid, b)
    refined = left + right
    err = abs(whole - refined)
    if err <= tol:
        return refined
    if depth >= _MAX_DEPTH:
        raise QuadratureConvergenceError(
            "bin integral (%d,%d) over [%g, %g] did not converge: "
            "achieved error %.3e > tolerance %.3e" % (m, n, a, b, err, tol),
            achieved_error=err,
        )
    return _adaptive(m, n, a, mid, 0.5 * tol, depth + 1) + _adaptive(
        m, n, mid, b, 0.5 * tol, depth + 1
    )


@lru_cache(maxsize=None)
def _bin_overlap_cached(m, n, a, b, tol):
    lo = max(a, -numeric_support(m, n))
    hi = min(b, numeric_support(m, n))
    if hi <= lo:
        # The requested interval lies entirely beyond the numeric support;
        # the integrand is zero to working precision there.
        return 0.0
    return _adaptive(m, n, lo, hi, tol, 0)


def bin_overlap(m, n, a, b, tol=DEFAULT_TOL):
    """Normalized Hermite-pair integral of psi_m psi_n over the bin [a, b].

    Parameters
    ----------
    m, n : int
        Fock indices (non-negative, <= 64).
    a, b : float
        Bin edges; ``-inf``/``+inf`` are allowed and are truncated at the
        numeric support of the integrand.  Requires a <= b.
    tol : float
        Absolute integration tolerance (default 1e-12).

    Returns
    -------
    float
        The integral, symmetric in (m, n).

    Raises
    ------
    QuadratureConvergenceError
        If the adaptive scheme cannot reach ``tol``; the error carries the
        achieved estimate.
    """
    if m < 0 or n < 0:
        raise ValueError("Fock indices must be non-negative, got (%r, %r)" % (m, n))
    a = float(a)
    b = float(b)
    if a > b:
        raise ValueError("bin edges must satisfy a <= b, got a=%g > b=%g" % (a, b))
    if a == b:
        return 0.0
    if m > n:
        m, n = n, m  # the integrand is symmetric; normalize the cache key
    return _bin_overlap_cached(m, n, a, b, float(tol))
