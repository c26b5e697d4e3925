"""Discretized-homodyne POVM over a truncated Fock space.

A measurement setting is a uniform grid of ``N`` local-oscillator phases
theta_k = 2*pi*k/N together with ``M`` quadrature bins.  The POVM element
for outcome "bin i at phase k" has Fock matrix elements

    Pi_{i,k}[m, n] = (1/N) * exp(1j*(m - n)*theta_k) * G_i[m, n],

where G_i[m, n] is the Gaussian-Hermite overlap of the bin (``fockcore``).
The 1/N factor is the probability of selecting phase k, so that summing an
element over bins gives identity/N per phase and the full set resolves the
identity on the truncated space (exactly so in extend-tails mode).

This module builds the elements, assembles the measurement matrix whose
numerical rank certifies informational completeness, designs bin edges that
achieve completeness, and (de)serializes POVMs through a versioned JSON
cache.
"""

import hashlib
import json
import math
import warnings

import numpy as np

from . import fockcore
from .errors import BinDesignError, CacheKeyMismatchError

__all__ = [
    "TAIL_EXTEND",
    "TAIL_STRICT",
    "PhaseGrid",
    "BinningScheme",
    "PovmElement",
    "PovmSet",
    "MeasurementMatrix",
    "build_povm",
    "measurement_matrix",
    "numerical_rank",
    "is_informationally_complete",
    "ICReport",
    "sufficient_condition",
    "necessary_condition",
    "default_half_width",
    "design_bins",
    "normalization_residual",
    "vectorize",
    "devectorize",
    "save_povm",
    "load_povm",
    "povm_cache_key",
]

TAIL_EXTEND = "extend-tails"
TAIL_STRICT = "strict-finite"
_TAIL_MODES = (TAIL_EXTEND, TAIL_STRICT)

DEFAULT_RANK_RTOL = 1e-10
CACHE_VERSION = 1

# Fractional offset applied to the right end of equal-spaced bin intervals.
# An exactly mirror-symmetric grid makes whole families of POVM columns
# linearly dependent (the parity x -> -x maps the bin set onto itself), which
# caps the measurement-matrix rank below (n_max+1)^2 whenever M < 2*n_max+1.
# Stretching the interval to [-L, L + offset*(2L/M)] breaks the symmetry
# deterministically while keeping the bins equal-spaced and covering [-L, L].
EDGE_OFFSET_FRACTION = (math.sqrt(5.0) - 1.0) / 2.0


class PhaseGrid:
    """Uniform local-oscillator phase grid theta_k = 2*pi*k/N, k = 0..N-1."""

    def __init__(self, N):
        N = int(N)
        if N < 1:
            raise ValueError("phase count N must be >= 1, got %d" % N)
        self.N = N

    def theta(self, k):
        """Phase angle of grid point k (radians)."""
        if not 0 <= k < self.N:
            raise ValueError("phase index %r outside 0..%d" % (k, self.N - 1))
        return 2.0 * math.pi * k / self.N

    @property
    def thetas(self):
        """All phases as an array of length N."""
        return 2.0 * math.pi * np.arange(self.N) / self.N

    def __repr__(self):
        return "PhaseGrid(N=%d)" % self.N

    def __eq__(self, other):
        return isinstance(other, PhaseGrid) and other.N == self.N


class BinningScheme:
    """Quadrature bins: edges x_1 < ... < x_{M+1}, tail policy, and weights.

    Parameters
    ----------
    edges : array_like
        M+1 strictly increasing finite bin edges.  Bin i spans the
        right-open interval [x_i, x_{i+1}).
    tail_mode : str
        ``"extend-tails"`` (default): for integration purposes the first bin
        absorbs (-inf, x_2) and the last [x_M, +inf), so the POVM resolves
        identity/N per phase exactly.  ``"strict-finite"``: bins are taken
        literally, leaving Gaussian tail mass unmeasured.
    weights : array_like, optional
        M positive estimator weights; defaults to the nominal (finite) bin
        widths regardless of tail mode.
    """

    def __init__(self, edges, tail_mode=TAIL_EXTEND, weights=None):
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("need at least two bin edges, got shape %r" % (edges.shape,))
        if not np.all(np.isfinite(edges)):
            raise ValueError("bin edges must be finite; tail handling is set by tail_mode")
        if not np.all(np.diff(edges) > 0):
            raise ValueError("bin edges must be strictly increasing")
        if tail_mode not in _TAIL_MODES:
            raise ValueError("tail_mode must be one of %r, got %r" % (_TAIL_MODES, tail_mode))
        if weights is None:
            weights = np.diff(edges)
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (edges.size - 1,):
                raise ValueError(
                    "expected %d weights, got shape %r" % (edges.size - 1, weights.shape)
                )
            if not np.all(weights > 0):
                raise ValueError("estimator weights must be strictly positive")
        self.edges = edges.copy()
        self.edges.setflags(write=False)
        self.tail_mode = tail_mode
        self.weights = np.array(weights, dtype=float)
        self.weights.setflags(write=False)

    @property
    def M(self):
        """Number of bins."""
        return self.edges.size - 1

    @property
    def widths(self):
        """Nominal finite bin widths x_{i+1} - x_i."""
        return np.diff(self.edges)

    @property
    def total_length(self):
        """Sum of estimator weights (total nominal length)."""
        return float(np.sum(self.weights))

    def integration_edges(self):
        """Edges actually used for the overlap integrals.

        In extend-tails mode the outer edges are pushed to +-infinity so the
        edge bins absorb the Gaussian tails.
        """
        eff = np.array(self.edges, dtype=float)
        if self.tail_mode == TAIL_EXTEND:
            eff[0] = -np.inf
            eff[-1] = np.inf
        return eff

    @classmethod
    def equal_spaced(cls, M, half_width, tail_mode=TAIL_EXTEND, weights=None):
        """Equal-spaced bins covering [-L, L] with a deterministic stretch.

        The M+1 edges run from -L to L + c*(2L/M) with c irrational
        (c = (sqrt(5)-1)/2), i.e. the grid is shifted off exact mirror
        symmetry by a fixed fraction of one bin width.  Exactly centered
        grids suffer a parity-induced rank degeneracy that blocks
        informational completeness at small M; the stretched grid keeps
        equal spacing and full coverage of [-L, L] while avoiding it.
        """
        M = int(M)
        if M < 1:
            raise ValueError("bin count M must be >= 1, got %d" % M)
        L = float(half_width)
        if L <= 0:
            raise ValueError("half_width must be positive, got %g" % L)
        hi = L + EDGE_OFFSET_FRACTION * (2.0 * L / M)
        edges = np.linspace(-L, hi, M + 1)
        return cls(edges, tail_mode=tail_mode, weights=weights)

    def __repr__(self):
        return "BinningScheme(M=%d, range=[%g, %g], tail_mode=%r)" % (
            self.M,
            self.edges[0],
            self.edges[-1],
            self.tail_mode,
        )

    def __eq__(self, other):
        return (
            isinstance(other, BinningScheme)
            and other.tail_mode == self.tail_mode
            and np.array_equal(other.edges, self.edges)
            and np.array_equal(other.weights, self.weights)
        )


class PovmElement:
    """Single POVM element: outcome (bin i, phase k) with its Fock matrix."""

    def __init__(self, i, k, matrix):
        self.i = int(i)
        self.k = int(k)
        self.matrix = matrix

    def __repr__(self):
        return "PovmElement(i=%d, k=%d, dim=%d)" % (self.i, self.k, self.matrix.shape[0])


class PovmSet:
    """All M*N POVM elements for one (grid, binning, n_max) configuration.

    The elements are stored as one complex array ``mats`` of shape
    (M, N, n_max+1, n_max+1) with ``mats[i, k]`` the matrix of outcome
    (i, k); ``element(i, k)`` wraps a single entry.
    """

    def __init__(self, grid, binning, n_max, mats):
        self.grid = grid
        self.binning = binning
        self.n_max = int(n_max)
        self.mats = mats
        self.mats.setflags(write=False)

    @property
    def dim(self):
        """Truncated Fock-space dimension n_max + 1."""
        return self.n_max + 1

    @property
    def n_outcomes(self):
        """Total outcome count M*N."""
        return self.binning.M * self.grid.N

    def element(self, i, k):
        """The PovmElement for outcome (bin i, phase k)."""
        if not 0 <= i < self.binning.M:
            raise ValueError("bin index %r outside 0..%d" % (i, self.binning.M - 1))
        if not 0 <= k < self.grid.N:
            raise ValueError("phase index %r outside 0..%d" % (k, self.grid.N - 1))
        return PovmElement(i, k, self.mats[i, k])

    def elements(self):
        """Iterate over all elements in column order (k outer, i inner)."""
        for k in range(self.grid.N):
            for i in range(self.binning.M):
                yield self.element(i, k)

    @property
    def cache_key(self):
        """Content hash identifying this POVM's defining parameters."""
        return povm_cache_key(
            self.n_max, self.grid.N, self.binning.edges, self.binning.tail_mode
        )

    def validate_elements(self, atol=1e-10):
        """Check Hermiticity, positivity, and the operator bound <= identity/N.

        Raises ``ValueError`` naming the first failed check; intended as a
        diagnostic, not part of the construction hot path.
        """
        upper = np.eye(self.dim) / self.grid.N
        for el in self.elements():
            A = el.matrix
            if np.max(np.abs(A - A.conj().T)) > 1e-12:
                raise ValueError("element (%d,%d) is not Hermitian" % (el.i, el.k))
            lo = np.linalg.eigvalsh(A)[0]
            if lo < -atol:
                raise ValueError(
                    "element (%d,%d) has negative eigenvalue %g" % (el.i, el.k, lo)
                )
            hi = np.linalg.eigvalsh(upper - A)[0]
            if hi < -atol:
                raise ValueError(
                    "element (%d,%d) exceeds identity/N by %g" % (el.i, el.k, -hi)
                )

    def __repr__(self):
        return "PovmSet(n_max=%d, N=%d, M=%d, tail_mode=%r)" % (
            self.n_max,
            self.grid.N,
            self.binning.M,
            self.binning.tail_mode,
        )


class MeasurementMatrix:
    """Column-stacked vectorizations of all POVM elements, with spectrum."""

    def __init__(self, matrix, singular_values, rank):
        self.matrix = matrix
        self.singular_values = singular_values
        self.rank = int(rank)

    @property
    def shape(self):
        return self.matrix.shape

    def __repr__(self):
        return "MeasurementMatrix(shape=%r, rank=%d)" % (self.matrix.shape, self.rank)


def build_povm(grid, binning, n_max, tol=fockcore.DEFAULT_TOL):
    """Construct the POVM set for a phase grid and binning at cutoff n_max.

    Element (i, k) has matrix entries
    (1/N) * exp(1j*(m-n)*theta_k) * bin_overlap(m, n, x_i, x_{i+1}); in
    extend-tails mode the first/last bins integrate from -inf/to +inf while
    the estimator weights keep their nominal finite values.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise ValueError("n_max must be >= 0, got %d" % n_max)
    if n_max > 64:
        raise ValueError("n_max above 64 is outside the supported envelope")
    d = n_max + 1
    M = binning.M
    N = grid.N
    eff = binning.integration_edges()

    # Real symmetric overlap blocks G_i[m, n]; one integral per (i, m<=n).
    G = np.empty((M, d, d), dtype=float)
    for i in range(M):
        lo, hi = eff[i], eff[i + 1]
        for m in range(d):
            for n in range(m, d):
                val = fockcore.bin_overlap(m, n, lo, hi, tol=tol)
                G[i, m, n] = val
                G[i, n, m] = val

    # Phase factors exp(1j*(m-n)*theta_k), one d x d block per phase.
    mn = np.arange(d)
    diff = mn[:, None] - mn[None, :]
    phase = np.exp(1j * diff[None, :, :] * grid.thetas[:, None, None])

    mats = G[:, None, :, :] * phase[None, :, :, :] / N
    return PovmSet(grid, binning, n_max, mats)


def vectorize(A):
    """Column-stacking vectorization of a square matrix."""
    return np.asarray(A).reshape(-1, order="F")


def devectorize(v, d):
    """Inverse of :func:`vectorize` for a d x d matrix."""
    return np.asarray(v).reshape((d, d), order="F")


def measurement_matrix(povm, rtol=DEFAULT_RANK_RTOL):
    """Assemble E with column (k*M + i) = vectorize(Pi_{i,k}) and its SVD.

    The numerical rank of E decides informational completeness: the POVM
    spans the operator space iff rank(E) = (n_max+1)^2.
    """
    d = povm.dim
    M = povm.binning.M
    N = povm.grid.N
    # Row r of this (N*M, d*d) block is vectorize(mats[i, k]) at r = k*M + i.
    rows = np.transpose(povm.mats, (1, 0, 3, 2)).reshape(N * M, d * d)
    E = rows.T.copy()
    rank, spectrum = numerical_rank(E, rtol=rtol)
    return MeasurementMatrix(E, spectrum, rank)


def numerical_rank(E, rtol=DEFAULT_RANK_RTOL):
    """Numerical rank: singular values above rtol * sigma_max * max(shape).

    Accepts a plain array or a :class:`MeasurementMatrix`.  Returns
    ``(rank, singular_values)`` with the spectrum in descending order.
    """
    if rtol <= 0:
        raise ValueError("rtol must be positive, got %g" % rtol)
    A = E.matrix if isinstance(E, MeasurementMatrix) else np.asarray(E)
    if A.size == 0:
        return 0, np.zeros(0)
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    cutoff = rtol * s[0] * max(A.shape)
    return int(np.count_nonzero(s > cutoff)), s


class ICReport:
    """Verdict and diagnostics of an informational-completeness check."""

    def __init__(self, complete, rank, required, singular_values, lambda_min):
        self.complete = bool(complete)
        self.rank = int(rank)
        self.required = int(required)
        self.singular_values = singular_values
        self.lambda_min = float(lambda_min)

    def __bool__(self):
        return self.complete

    def __repr__(self):
        return "ICReport(complete=%r, rank=%d/%d, lambda_min=%.3e)" % (
            self.complete,
            self.rank,
            self.required,
            self.lambda_min,
        )


def is_informationally_complete(povm, rtol=DEFAULT_RANK_RTOL):
    """Certify completeness by the measurement-matrix rank.

    Returns an :class:`ICReport` (truthy iff complete) carrying the rank,
    the required dimension (n_max+1)^2, the singular-value spectrum, and
    the minimum eigenvalue of the weighted frame operator as a conditioning
    diagnostic.
    """
    mm = measurement_matrix(povm, rtol=rtol)
    required = povm.dim * povm.dim
    w_flat = np.tile(povm.binning.weights, povm.grid.N)
    C = (mm.matrix / w_flat) @ mm.matrix.conj().T
    lam_min = float(np.linalg.eigvalsh(0.5 * (C + C.conj().T))[0])
    return ICReport(mm.rank == required, mm.rank, required, mm.singular_values, lam_min)


def sufficient_condition(N, M, n_max):
    """Existence guarantee for complete binnings: N >= 2*n_max+1 and M >= n_max+1.

    When both hold, some equal-spaced binning achieves completeness; the
    predicate says nothing about any particular edge placement.
    """
    return N >= 2 * n_max + 1 and M >= n_max + 1


def necessary_condition(N, n_max):
    """Phase-count test that completeness cannot bypass.

    A binned-phase POVM can only be informationally complete when
    N >= 2*n_max + 1, or n_max < N <= 2*n_max with N odd.  ``False`` means
    provably incomplete for every binning (explicit indistinguishable state
    pairs exist; see ``sim.indistinguishability_experiment``).
    """
    if N >= 2 * n_max + 1:
        return True
    return n_max < N <= 2 * n_max and N % 2 == 1


def default_half_width(n_max):
    """Default initial half-width: covers the classically allowed region.

    The highest retained Fock state has turning points at sqrt(2*n_max+1);
    one extra unit of quadrature comfortably covers its evanescent tail.
    """
    return math.sqrt(2.0 * n_max + 1.0) + 1.0


def design_bins(
    n_max,
    N,
    M,
    L0=None,
    dL=0.5,
    max_iter=100,
    tail_mode=TAIL_EXTEND,
    rtol=DEFAULT_RANK_RTOL,
):
    """Search for equal-spaced bins that make the POVM informationally complete.

    Starting from half-width L0 (default :func:`default_half_width`), build
    the equal-spaced scheme over [-L, L] (with the deterministic stretch of
    :meth:`BinningScheme.equal_spaced`), test the measurement-matrix rank,
    and grow L by dL until rank (n_max+1)^2 is reached or ``max_iter``
    growth steps are exhausted.

    Returns the first complete :class:`BinningScheme`.  Raises
    :class:`~homodyne_shadows.errors.BinDesignError` carrying the best rank
    achieved and the final half-width when the search fails — which it
    provably must when ``necessary_condition(N, n_max)`` is false.
    """
    if L0 is None:
        L0 = default_half_width(n_max)
    L0 = float(L0)
    dL = float(dL)
    if L0 <= 0 or dL <= 0:
        raise ValueError("L0 and dL must be positive, got L0=%g, dL=%g" % (L0, dL))
    if max_iter < 0:
        raise ValueError("max_iter must be >= 0, got %r" % (max_iter,))
    if not sufficient_condition(N, M, n_max):
        warnings.warn(
            "N=%d, M=%d below the sufficiency threshold (N >= %d, M >= %d) for "
            "n_max=%d; searching anyway" % (N, M, 2 * n_max + 1, n_max + 1, n_max),
            stacklevel=2,
        )
    grid = PhaseGrid(N)
    required = (n_max + 1) ** 2
    best_rank = -1
    L = L0
    for t in range(int(max_iter) + 1):
        L = L0 + t * dL
        scheme = BinningScheme.equal_spaced(M, L, tail_mode=tail_mode)
        povm = build_povm(grid, scheme, n_max)
        rank, _ = numerical_rank(measurement_matrix(povm, rtol=rtol), rtol=rtol)
        if rank > best_rank:
            best_rank = rank
        if rank == required:
            return scheme
    raise BinDesignError(
        "no informationally complete binning found for n_max=%d, N=%d, M=%d "
        "within %d growth steps (best rank %d of %d at final half-width %g)"
        % (n_max, N, M, max_iter, best_rank, required, L),
        best_rank=best_rank,
        final_half_width=L,
    )


def normalization_residual(povm):
    """Per-phase Frobenius residual of the bin sum against identity/N.

    Returns an array of length N with entries
    || sum_i Pi_{i,k} - identity/N ||_F.  Extend-tails schemes should sit at
    roundoff; strict-finite schemes report their unmeasured tail mass.
    """
    d = povm.dim
    target = np.eye(d) / povm.grid.N
    sums = povm.mats.sum(axis=0)
    return np.linalg.norm(sums - target[None, :, :], axis=(1, 2))


def povm_cache_key(n_max, N, edges, tail_mode):
    """Deterministic content hash of the POVM-defining parameters."""
    payload = json.dumps(
        {
            "n_max": int(n_max),
            "N": int(N),
            "edges": [float(e) for e in np.asarray(edges, dtype=float)],
            "tail_mode": str(tail_mode),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _matrix_to_json(A):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(A)]


def _matrix_from_json(rows):
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def save_povm(povm, path):
    """Write a versioned JSON cache of the POVM (bit-exact round trip)."""
    doc = {
        "version": CACHE_VERSION,
        "n_max": povm.n_max,
        "N": povm.grid.N,
        "tail_mode": povm.binning.tail_mode,
        "edges": [float(e) for e in povm.binning.edges],
        "weights": [float(w) for w in povm.binning.weights],
        "cache_key": povm.cache_key,
        "elements": [
            {"i": el.i, "k": el.k, "matrix": _matrix_to_json(el.matrix)}
            for el in povm.elements()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_povm(path, expected_key=None):
    """Load a cached POVM, verifying its stored content hash.

    A stored key that disagrees with the hash recomputed from the cached
    parameters (or with ``expected_key``, when given) raises
    :class:`~homodyne_shadows.errors.CacheKeyMismatchError`.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != CACHE_VERSION:
        raise CacheKeyMismatchError(
            "unsupported cache version %r in %s" % (doc.get("version"), path)
        )
    try:
        n_max = int(doc["n_max"])
        N = int(doc["N"])
        tail_mode = doc["tail_mode"]
        edges = np.array(doc["edges"], dtype=float)
        weights = np.array(doc["weights"], dtype=float)
        entries = doc["elements"]
        stored_key = doc["cache_key"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CacheKeyMismatchError("malformed POVM cache %s: %s" % (path, exc)) from exc
    recomputed = povm_cache_key(n_max, N, edges, tail_mode)
    if stored_key != recomputed:
        raise CacheKeyMismatchError(
            "cache key mismatch in %s: stored %s, recomputed %s"
            % (path, stored_key, recomputed)
        )
    if expected_key is not None and recomputed != expected_key:
        raise CacheKeyMismatchError(
            "cache %s holds key %s but %s was requested" % (path, recomputed, expected_key)
        )
    grid = PhaseGrid(N)
    binning = BinningScheme(edges, tail_mode=tail_mode, weights=weights)
    d = n_max + 1
    M = binning.M
    if len(entries) != M * N:
        raise CacheKeyMismatchError(
            "cache %s holds %d elements, expected %d" % (path, len(entries), M * N)
        )
    mats = np.zeros((M, N, d, d), dtype=complex)
    seen = np.zeros((M, N), dtype=bool)
    for entry in entries:
        try:
            i = int(entry["i"])
            k = int(entry["k"])
            A = _matrix_from_json(entry["matrix"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CacheKeyMismatchError(
                "malformed element entry in %s: %s" % (path, exc)
            ) from exc
        if not (0 <= i < M and 0 <= k < N) or A.shape != (d, d):
            raise CacheKeyMismatchError(
                "element (%r, %r) with shape %r does not fit cache %s"
                % (i, k, A.shape, path)
            )
        mats[i, k] = A
        seen[i, k] = True
    if not seen.all():
        raise CacheKeyMismatchError("cache %s is missing POVM elements" % path)
    return PovmSet(grid, binning, n_max, mats)
