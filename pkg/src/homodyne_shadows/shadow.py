"""Frame inversion and classical-shadow estimation.

The measurement frame of a POVM set is the positive self-adjoint map

    C(rho) = sum_{i,k} Tr(rho Pi_{i,k}) Pi_{i,k} / w_i,

represented here as a (n_max+1)^2 x (n_max+1)^2 Hermitian matrix acting on
column-stacked vectorizations.  Inverting it (exactly when informationally
complete, via Moore-Penrose pseudoinverse otherwise) turns each outcome
(i, k) into a snapshot matrix rho_hat_{i,k} = C^{-1}(Pi_{i,k}/w_i) whose
average over measurement records is an unbiased estimator of the state.
The module also provides the exact single-shot variance of an observable
estimate, the state-independent shadow norm that bounds it, the closed-form
parameter-count bound, and the Bernstein shot-count calculator.
"""

import math
import warnings

import numpy as np

from .errors import MalformedRecordError, StrictModeSingularError
from .povm import devectorize
from .states import Observable, expectation

__all__ = [
    "FrameOperator",
    "InverseFrame",
    "SnapshotTable",
    "EstimateReport",
    "frame_operator",
    "invert_frame",
    "snapshots",
    "snapshot_values",
    "outcome_probabilities",
    "estimate_observable",
    "exact_average_snapshot",
    "exact_variance",
    "shadow_norm",
    "variance_bound",
    "bernstein_samples",
    "reconstruct_state",
    "MODE_STRICT",
    "MODE_PSEUDO",
    "DEFAULT_THRESHOLD",
]

MODE_STRICT = "strict"
MODE_PSEUDO = "pseudo"
DEFAULT_THRESHOLD = 1e-12
DEFAULT_BATCHES = 10


def _flat_weights(povm):
    """Per-column estimator weights matching measurement-matrix ordering."""
    return np.tile(povm.binning.weights, povm.grid.N)


def _stacked_columns(povm):
    """(d^2, M*N) array with column k*M+i = vectorize(Pi_{i,k})."""
    d = povm.dim
    rows = np.transpose(povm.mats, (1, 0, 3, 2)).reshape(povm.n_outcomes, d * d)
    return rows.T


class FrameOperator:
    """Weighted frame operator of a POVM set, with its eigendecomposition."""

    def __init__(self, matrix, eigenvalues, eigenvectors, povm):
        self.matrix = matrix
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
        self.povm = povm

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])

    @property
    def condition_number(self):
        if self.lambda_min <= 0:
            return math.inf
        return self.lambda_max / self.lambda_min

    def __repr__(self):
        return "FrameOperator(dim=%d, lambda_min=%.3e, cond=%.3e)" % (
            self.matrix.shape[0],
            self.lambda_min,
            self.condition_number,
        )


class InverseFrame:
    """Strict inverse or Moore-Penrose pseudoinverse of a frame operator."""

    def __init__(self, mode, matrix, threshold, frame):
        self.mode = mode
        self.matrix = matrix
        self.threshold = float(threshold)
        self.frame = frame

    def __repr__(self):
        return "InverseFrame(mode=%r, threshold=%g)" % (self.mode, self.threshold)


class SnapshotTable:
    """Precomputed snapshot matrices rho_hat_{i,k}, indexed like the POVM."""

    def __init__(self, snapshots, mode, threshold):
        self.snapshots = snapshots
        self.snapshots.setflags(write=False)
        self.mode = mode
        self.threshold = float(threshold)

    @property
    def M(self):
        return self.snapshots.shape[0]

    @property
    def N(self):
        return self.snapshots.shape[1]

    @property
    def dim(self):
        return self.snapshots.shape[2]

    @property
    def n_max(self):
        return self.dim - 1

    def snapshot(self, i, k):
        """Snapshot matrix assigned to outcome (bin i, phase k)."""
        if not 0 <= i < self.M:
            raise ValueError("bin index %r outside 0..%d" % (i, self.M - 1))
        if not 0 <= k < self.N:
            raise ValueError("phase index %r outside 0..%d" % (k, self.N - 1))
        return self.snapshots[i, k]

    def __repr__(self):
        return "SnapshotTable(M=%d, N=%d, dim=%d, mode=%r)" % (
            self.M,
            self.N,
            self.dim,
            self.mode,
        )


class EstimateReport:
    """Result of an observable estimation over a record stream."""

    def __init__(
        self,
        mean,
        stderr,
        shots,
        variant,
        observable_label="X",
        values=None,
        seed=None,
        povm_cache_key=None,
    ):
        if shots < 1:
            raise ValueError("shot count must be >= 1, got %r" % (shots,))
        if stderr < 0:
            raise ValueError("standard error must be >= 0, got %g" % stderr)
        self.mean = float(mean)
        self.stderr = float(stderr)
        self.shots = int(shots)
        self.variant = variant
        self.observable_label = observable_label
        self.values = values
        self.seed = seed
        self.povm_cache_key = povm_cache_key

    def to_json(self):
        """JSON-ready dict (per-shot values are not serialized)."""
        return {
            "observable_label": self.observable_label,
            "mean": self.mean,
            "stderr": self.stderr,
            "T": self.shots,
            "variant": self.variant,
            "seed": self.seed,
            "povm_cache_key": self.povm_cache_key,
        }

    def __repr__(self):
        return "EstimateReport(mean=%.6g, stderr=%.3g, T=%d, variant=%r)" % (
            self.mean,
            self.stderr,
            self.shots,
            self.variant,
        )


def frame_operator(povm):
    """Build the weighted frame operator and its eigendecomposition.

    The matrix is sum_{i,k} vec(Pi_{i,k}) vec(Pi_{i,k})^dagger / w_i,
    Hermitized to scrub roundoff; eigenvalues are returned ascending.
    Doubling all weights halves the operator (it is linear in 1/w_i).
    """
    E = _stacked_columns(povm)
    w = _flat_weights(povm)
    C = (E / w) @ E.conj().T
    C = 0.5 * (C + C.conj().T)
    eigenvalues, eigenvectors = np.linalg.eigh(C)
    return FrameOperator(C, eigenvalues, eigenvectors, povm)


def invert_frame(frame, mode=MODE_STRICT, threshold=DEFAULT_THRESHOLD):
    """Invert a frame operator strictly or by Moore-Penrose pseudoinverse.

    Strict mode demands lambda_min > threshold and inverts every eigenvalue;
    pseudo mode inverts only eigenvalues above the threshold and zeroes the
    rest, projecting onto the frame's range.
    """
    if mode not in (MODE_STRICT, MODE_PSEUDO):
        raise ValueError("mode must be 'strict' or 'pseudo', got %r" % (mode,))
    lam = frame.eigenvalues
    V = frame.eigenvectors
    if mode == MODE_STRICT:
        if frame.lambda_min <= threshold:
            raise StrictModeSingularError(
                "frame operator is singular at the working threshold "
                "(lambda_min = %.3e <= %.3e); use pseudo mode to project onto "
                "the measurable subspace" % (frame.lambda_min, threshold),
                lambda_min=frame.lambda_min,
            )
        inv_lam = 1.0 / lam
    else:
        inv_lam = np.where(lam > threshold, 1.0 / np.where(lam > threshold, lam, 1.0), 0.0)
    Cinv = (V * inv_lam) @ V.conj().T
    Cinv = 0.5 * (Cinv + Cinv.conj().T)
    return InverseFrame(mode, Cinv, threshold, frame)


def snapshots(povm, inv):
    """Apply the inverse frame to every weighted POVM element.

    Returns the table of snapshot matrices C^{-1}(Pi_{i,k}/w_i),
    devectorized and Hermitized ((A + A^dagger)/2) to scrub roundoff.
    """
    d = povm.dim
    if inv.matrix.shape != (d * d, d * d):
        raise ValueError(
            "inverse frame of shape %r does not match POVM dimension %d"
            % (inv.matrix.shape, d)
        )
    E = _stacked_columns(povm)
    w = _flat_weights(povm)
    cols = inv.matrix @ (E / w)
    M = povm.binning.M
    N = povm.grid.N
    snaps = np.empty((M, N, d, d), dtype=complex)
    for k in range(N):
        for i in range(M):
            A = devectorize(cols[:, k * M + i], d)
            snaps[i, k] = 0.5 * (A + A.conj().T)
    return SnapshotTable(snaps, inv.mode, inv.threshold)


def snapshot_values(table, X):
    """Per-outcome estimator values Tr(X rho_hat_{i,k}) as a real (M, N) array."""
    A = X.matrix if hasattr(X, "matrix") else np.asarray(X)
    if A.shape != (table.dim, table.dim):
        raise ValueError(
            "observable of shape %r does not match snapshot dimension %d"
            % (A.shape, table.dim)
        )
    return np.real(np.einsum("mn,iknm->ik", A, table.snapshots))


def outcome_probabilities(rho, povm):
    """Exact outcome probabilities Tr(rho Pi_{i,k}) as a real (M, N) array."""
    R = rho.matrix if hasattr(rho, "matrix") else np.asarray(rho)
    if R.shape != (povm.dim, povm.dim):
        raise ValueError(
            "state of shape %r does not match POVM dimension %d" % (R.shape, povm.dim)
        )
    return np.real(np.einsum("mn,iknm->ik", R, povm.mats))


def _parse_variant(variant, batches):
    if variant == "plain-mean":
        return "plain-mean", None
    if variant == "median-of-means":
        return "median-of-means", int(batches)
    if isinstance(variant, str) and variant.startswith("median-of-means:"):
        b = int(variant.split(":", 1)[1])
        if b < 1:
            raise ValueError("batch count must be >= 1, got %d" % b)
        return "median-of-means", b
    raise ValueError(
        "variant must be 'plain-mean' or 'median-of-means[:batches]', got %r" % (variant,)
    )


def estimate_observable(
    records,
    table,
    X,
    variant="plain-mean",
    batches=DEFAULT_BATCHES,
    keep_values=False,
):
    """Fold a record stream into an observable estimate.

    Each record contributes the per-shot value Tr(X rho_hat_{i,k}) of its
    outcome.  ``variant`` selects plain averaging or median-of-means over
    ``batches`` contiguous batches (also accepted inline as
    ``"median-of-means:B"``).  The standard error is the sample standard
    deviation divided by sqrt(T) in either variant.

    Records referencing outcomes outside the table raise
    :class:`~homodyne_shadows.errors.MalformedRecordError` with the record's
    position in the stream.
    """
    kind, B = _parse_variant(variant, batches)
    vals_table = snapshot_values(table, X)
    M, N = vals_table.shape
    idx_i = []
    idx_k = []
    for ordinal, rec in enumerate(records):
        try:
            i = int(rec.i)
            k = int(rec.k)
        except (AttributeError, TypeError, ValueError) as exc:
            raise MalformedRecordError(
                "record %d is not a measurement record: %s" % (ordinal, exc),
                ordinal=ordinal,
            ) from exc
        if not (0 <= i < M and 0 <= k < N):
            raise MalformedRecordError(
                "record %d references outcome (i=%d, k=%d) outside the "
                "%d x %d outcome grid" % (ordinal, i, k, M, N),
                ordinal=ordinal,
            )
        idx_i.append(i)
        idx_k.append(k)
    T = len(idx_i)
    if T == 0:
        raise ValueError("record stream is empty")
    values = vals_table[np.array(idx_i), np.array(idx_k)]
    if kind == "plain-mean":
        mean = float(np.mean(values))
        variant_str = "plain-mean"
    else:
        B_eff = min(B, T)
        mean = float(np.median([np.mean(chunk) for chunk in np.array_split(values, B_eff)]))
        variant_str = "median-of-means:%d" % B
    stderr = float(np.std(values, ddof=1) / math.sqrt(T)) if T > 1 else 0.0
    label = X.label if hasattr(X, "label") else "X"
    return EstimateReport(
        mean,
        stderr,
        T,
        variant_str,
        observable_label=label,
        values=values if keep_values else None,
    )


def exact_average_snapshot(probabilities, table):
    """Infinite-data average sum_{i,k} P(i,k) rho_hat_{i,k}.

    With strict-mode snapshots and P(i,k) = Tr(rho Pi_{i,k}) this reproduces
    rho itself — the unbiasedness identity.
    """
    P = np.asarray(probabilities)
    if P.shape != (table.M, table.N):
        raise ValueError(
            "probability table of shape %r does not match the %d x %d outcome grid"
            % (P.shape, table.M, table.N)
        )
    return np.einsum("ik,ikmn->mn", P, table.snapshots)


def exact_variance(rho, X, table, povm):
    """Exact single-shot variance of the estimator of Tr(rho X).

    Evaluates sum_{i,k} P(i,k) Tr(X rho_hat_{i,k})^2 - Tr(rho X)^2 by brute
    force over all M*N outcomes.  A pseudo-mode table is accepted with a
    warning: its estimator is generally biased, so the value is the exact
    second-moment spread around the *true* expectation, not around the
    estimator's own limit.
    """
    if table.mode != MODE_STRICT:
        warnings.warn(
            "exact_variance on a pseudo-mode snapshot table: the estimator "
            "may be biased and the reported spread is taken around Tr(rho X)",
            stacklevel=2,
        )
    P = outcome_probabilities(rho, povm)
    vals = snapshot_values(table, X)
    mean = expectation(rho, X)
    return float(np.sum(P * vals**2) - mean**2)


def shadow_norm(X, table, povm):
    """State-independent variance bound lambda_max of sum |Tr(X rho_hat)|^2 Pi.

    For every density matrix rho, exact_variance(rho, X) <= shadow_norm(X):
    the variance's first term is the expectation of the operator built here,
    which its top eigenvalue bounds uniformly over states.
    """
    vals = snapshot_values(table, X)
    Xt = np.einsum("ik,ikmn->mn", vals**2, povm.mats)
    Xt = 0.5 * (Xt + Xt.conj().T)
    return float(np.linalg.eigvalsh(Xt)[-1])


def variance_bound(N, M, n_max, X):
    """Closed-form worst-case bound N * (n_max+1) * M^2 * ||X||_inf^2."""
    if N < 1 or M < 1 or n_max < 0:
        raise ValueError(
            "need N >= 1, M >= 1, n_max >= 0; got N=%r, M=%r, n_max=%r" % (N, M, n_max)
        )
    norm = X.operator_norm if hasattr(X, "operator_norm") else float(X)
    return float(N * (n_max + 1) * M**2 * norm**2)


def bernstein_samples(shadow_norm_value, eps, delta):
    """Smallest shot count T guaranteeing |X_hat - E[X_hat]| <= eps w.p. 1-delta.

    Solves 2*exp(-T*eps^2/2 / (v + 2*eps/3)) <= delta for the Bernstein
    variance proxy v (the shadow norm):
    T = ceil(2*(v + 2*eps/3)*ln(2/delta)/eps^2).
    """
    if eps <= 0:
        raise ValueError("accuracy eps must be positive, got %g" % eps)
    if not 0.0 < delta < 1.0:
        raise ValueError("failure probability delta must lie in (0, 1), got %g" % delta)
    if shadow_norm_value < 0:
        raise ValueError("shadow norm must be >= 0, got %g" % shadow_norm_value)
    T = math.ceil(2.0 * (shadow_norm_value + 2.0 * eps / 3.0) * math.log(2.0 / delta) / eps**2)
    return max(1, int(T))


def _project_simplex(lam):
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(lam)[::-1]
    css = np.cumsum(u)
    rho_idx = np.nonzero(u * np.arange(1, lam.size + 1) > (css - 1.0))[0][-1]
    theta = (css[rho_idx] - 1.0) / (rho_idx + 1.0)
    return np.maximum(lam - theta, 0.0)


def reconstruct_state(records, table, project=False):
    """Average the snapshots of a record stream into a state estimate.

    The plain average is the unbiased estimator; with ``project=True`` the
    result is additionally projected (in Frobenius norm) onto the set of
    positive semidefinite trace-one matrices, which is a biased
    post-processing step and therefore off by default.
    """
    counts = np.zeros((table.M, table.N))
    total = 0
    for ordinal, rec in enumerate(records):
        try:
            i = int(rec.i)
            k = int(rec.k)
        except (AttributeError, TypeError, ValueError) as exc:
            raise MalformedRecordError(
                "record %d is not a measurement record: %s" % (ordinal, exc),
                ordinal=ordinal,
            ) from exc
        if not (0 <= i < table.M and 0 <= k < table.N):
            raise MalformedRecordError(
                "record %d references outcome (i=%d, k=%d) outside the "
                "%d x %d outcome grid" % (ordinal, i, k, table.M, table.N),
                ordinal=ordinal,
            )
        counts[i, k] += 1.0
        total += 1
    if total == 0:
        raise ValueError("record stream is empty")
    avg = np.einsum("ik,ikmn->mn", counts / total, table.snapshots)
    if project:
        lam, V = np.linalg.eigh(avg)
        lam = _project_simplex(lam)
        avg = (V * lam) @ V.conj().T
    return avg
