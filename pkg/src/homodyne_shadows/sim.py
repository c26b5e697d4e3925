"""Measurement simulation and record handling.

Outcome probabilities are computed exactly from the trace pairing
P(i,k) = Tr(rho Pi_{i,k}); sampling then draws directly from this discrete
distribution by inverse CDF, with per-shot randomness derived from
(seed, shot index) through a counter-based 64-bit mixer so that record
streams are reproducible bit-for-bit and independent of execution order.

The module also houses the indistinguishability experiment that exhibits
state pairs with identical statistics when the phase count is too small,
tensor-product multi-mode distributions and local-observable estimation,
and CSV ingestion of externally produced (or raw quadrature) records.
"""

import csv
import math
from typing import NamedTuple

import numpy as np

from . import shadow as shadow_mod
from .errors import (
    InvariantViolationError,
    MalformedRecordError,
    UnsupportedConfigurationError,
)
from .povm import BinningScheme, PhaseGrid, PovmSet, build_povm, default_half_width
from .shadow import EstimateReport, outcome_probabilities, snapshot_values
from .states import superposition_pair, trace_distance

__all__ = [
    "MeasurementRecord",
    "OutcomeDistribution",
    "outcome_distribution",
    "sample",
    "IndistinguishabilityReport",
    "indistinguishability_experiment",
    "MultiModeConfig",
    "MultiOutcomeDistribution",
    "joint_distribution",
    "sample_multi",
    "estimate_local",
    "multi_shadow_norm",
    "ingest_records",
    "bin_raw",
    "write_records",
    "RECORD_HEADER",
    "RAW_HEADER",
]

RECORD_HEADER = ("t", "mode", "k", "i")
RAW_HEADER = ("t", "mode", "k", "x")

_NEGATIVE_CLAMP = -1e-12


class MeasurementRecord(NamedTuple):
    """One shot: ordinal t, mode index, phase index k, bin index i."""

    t: int
    mode: int
    k: int
    i: int


class OutcomeDistribution:
    """Exact outcome probabilities with a cumulative table for sampling.

    ``probabilities[i, k]`` is P(i, k); the flat cumulative table runs over
    outcomes in column order (index k*M + i).  ``deficit`` is the
    probability mass missing from 1 (nonzero in strict-finite mode, where
    the Gaussian tails are unmeasured).
    """

    def __init__(self, probabilities, deficit):
        self.probabilities = probabilities
        self.probabilities.setflags(write=False)
        flat = probabilities.ravel(order="F")
        self.cumulative = np.cumsum(flat)
        self.deficit = float(deficit)

    @property
    def M(self):
        return self.probabilities.shape[0]

    @property
    def N(self):
        return self.probabilities.shape[1]

    @property
    def total(self):
        return float(self.cumulative[-1]) if self.cumulative.size else 0.0

    def __repr__(self):
        return "OutcomeDistribution(M=%d, N=%d, deficit=%.3e)" % (
            self.M,
            self.N,
            self.deficit,
        )


def outcome_distribution(rho, povm):
    """Exact P(i, k) = Tr(rho Pi_{i,k}) for every outcome.

    Tiny negative values in [-1e-12, 0) are clamped to zero (trace-pairing
    roundoff); anything more negative indicates a construction bug and
    raises.  In extend-tails mode the probabilities must sum to 1 within
    1e-10; in strict-finite mode the shortfall is recorded as the deficit.
    """
    P = outcome_probabilities(rho, povm)
    lowest = float(P.min())
    if lowest < _NEGATIVE_CLAMP:
        raise InvariantViolationError(
            "outcome probability %.3e is negative beyond roundoff" % lowest,
            check="probability-positivity",
        )
    P = np.maximum(P, 0.0)
    total = float(P.sum())
    if total > 1.0 + 1e-10:
        raise InvariantViolationError(
            "outcome probabilities sum to %.12f > 1" % total, check="probability-sum"
        )
    if povm.binning.tail_mode == "extend-tails" and abs(total - 1.0) > 1e-10:
        raise InvariantViolationError(
            "extend-tails probabilities sum to %.12f, expected 1 within 1e-10" % total,
            check="probability-sum",
        )
    return OutcomeDistribution(P, deficit=1.0 - total)


# Counter-based uniform generator (splitmix64 output function): shot t of
# stream `seed` is mixed independently of every other shot, so parallel or
# out-of-order generation yields identical streams.
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _SM_MIX1
    z = (z ^ (z >> np.uint64(27))) * _SM_MIX2
    return z ^ (z >> np.uint64(31))


def _uniforms(seed, count, start=0):
    """``count`` uniforms in [0, 1) for shots start..start+count-1."""
    seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    t = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix64(seed + t * _SM_GAMMA)
    # Top 53 bits -> double-precision uniform.
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _derive_seed(seed, salt):
    """Independent 64-bit substream seed for (seed, salt)."""
    seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    salt = np.uint64((int(salt) + 0x5851F42D) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        return int(_mix64(seed ^ (salt * _SM_GAMMA)))


def _draw_flat(cumulative, uniforms):
    """Inverse-CDF lookup of flat outcome indices for given uniforms."""
    total = cumulative[-1]
    return np.searchsorted(cumulative, uniforms * total, side="right")


def sample(dist, T, seed, mode=0):
    """Draw T i.i.d. records from an outcome distribution.

    Deterministic for fixed (dist, T, seed): shot t consumes the t-th value
    of the counter-based stream, independent of batching or worker count.
    """
    if T < 1:
        raise ValueError("shot count T must be >= 1, got %r" % (T,))
    if dist.total <= 0.0:
        raise ValueError("cannot sample from an all-zero outcome distribution")
    u = _uniforms(seed, T)
    flat = _draw_flat(dist.cumulative, u)
    M = dist.M
    return [
        MeasurementRecord(t=t, mode=mode, k=int(o) // M, i=int(o) % M)
        for t, o in enumerate(flat)
    ]


class IndistinguishabilityReport(NamedTuple):
    """Outcome of a state-pair distinguishability probe."""

    gap: float
    trace_distance: float
    level: int
    n_max: int
    N: int
    M: int


def indistinguishability_experiment(n_max, N, M, binning=None, fock_level=None):
    """Probe whether the POVM separates the canonical conjugate state pair.

    Builds the pair (|0> + 1j|level>)/sqrt(2) versus its complex-conjugate
    partner and reports the largest outcome-probability difference together
    with the pair's trace distance.  The level is N when N <= n_max, and
    N/2 when n_max < N <= 2*n_max with N even — the two regimes in which the
    pair provably yields identical statistics for every binning, so the gap
    sits at roundoff while the trace distance is large.  Outside those
    regimes pass ``fock_level`` explicitly to run the same construction as a
    control (an informationally complete POVM then shows a finite gap).
    """
    if fock_level is not None:
        level = int(fock_level)
    elif N <= n_max:
        level = N
    elif n_max < N <= 2 * n_max and N % 2 == 0:
        level = N // 2
    else:
        raise ValueError(
            "N=%d at n_max=%d is outside the provably indistinguishable regimes "
            "(N <= n_max, or even N <= 2*n_max); pass fock_level to run the "
            "construction as a control" % (N, n_max)
        )
    rho_a, rho_b = superposition_pair(1.0, 1j, level, n_max)
    if binning is None:
        binning = BinningScheme.equal_spaced(M, default_half_width(n_max))
    if binning.M != M:
        raise ValueError("binning has M=%d bins but M=%d was requested" % (binning.M, M))
    povm = build_povm(PhaseGrid(N), binning, n_max)
    Pa = outcome_distribution(rho_a, povm).probabilities
    Pb = outcome_distribution(rho_b, povm).probabilities
    gap = float(np.max(np.abs(Pa - Pb)))
    dist = trace_distance(rho_a, rho_b)
    return IndistinguishabilityReport(gap, dist, level, n_max, N, M)


class MultiModeConfig:
    """Mode-by-mode measurement configuration for tensor-product POVMs.

    Each mode gets its own cutoff, phase grid, and binning (passed as
    ``(n_max, PhaseGrid, BinningScheme)`` triples, or as prebuilt
    :class:`~homodyne_shadows.povm.PovmSet` objects).
    """

    def __init__(self, modes):
        povms = []
        for spec in modes:
            if isinstance(spec, PovmSet):
                povms.append(spec)
            else:
                n_max, grid, binning = spec
                povms.append(build_povm(grid, binning, n_max))
        if not povms:
            raise ValueError("at least one mode is required")
        self.povms = povms

    @property
    def S(self):
        """Number of modes."""
        return len(self.povms)

    def outcome_counts(self):
        """Per-mode flat outcome counts M_j * N_j."""
        return [p.n_outcomes for p in self.povms]

    def __repr__(self):
        return "MultiModeConfig(S=%d, dims=%r)" % (
            self.S,
            [p.dim for p in self.povms],
        )


class MultiOutcomeDistribution:
    """Joint outcome distribution over all modes.

    Product states are kept factorized (one single-mode distribution per
    mode, any S); dense joint states store the full probability tensor with
    one axis per mode, flat per-mode outcome index o_j = k_j * M_j + i_j.
    """

    def __init__(self, config, factors=None, joint=None):
        if (factors is None) == (joint is None):
            raise ValueError("exactly one of factors/joint must be given")
        self.config = config
        self.factors = factors
        self.joint = joint

    @property
    def S(self):
        return self.config.S

    def dense(self):
        """Full joint probability tensor (S <= 3 only)."""
        if self.joint is not None:
            return self.joint
        if self.S > 3:
            raise UnsupportedConfigurationError(
                "dense joint tensor over %d modes exceeds the S <= 3 envelope" % self.S
            )
        out = np.array([1.0])
        shape = []
        for f in self.factors:
            flat = f.probabilities.ravel(order="F")
            out = np.multiply.outer(out, flat)
            shape.append(flat.size)
        return out.reshape(shape)


def _mode_flat_probs(rho, povm):
    return outcome_distribution(rho, povm)


def joint_distribution(rho_multi, config):
    """Joint outcome distribution of a multi-mode state.

    ``rho_multi`` may be a sequence of per-mode density matrices (product
    state; factorized fast path for any S) or a single dense joint density
    matrix over the tensor-product space with mode 0 the slowest index
    (supported for S <= 3).
    """
    if isinstance(rho_multi, (list, tuple)):
        if len(rho_multi) != config.S:
            raise ValueError(
                "got %d mode states for %d modes" % (len(rho_multi), config.S)
            )
        factors = [
            _mode_flat_probs(r, p) for r, p in zip(rho_multi, config.povms)
        ]
        return MultiOutcomeDistribution(config, factors=factors)
    if config.S > 3:
        raise UnsupportedConfigurationError(
            "dense joint states are supported for at most 3 modes; "
            "factorize product states instead (got S=%d)" % config.S
        )
    R = rho_multi.matrix if hasattr(rho_multi, "matrix") else np.asarray(rho_multi)
    dims = [p.dim for p in config.povms]
    D = int(np.prod(dims))
    if R.shape != (D, D):
        raise ValueError(
            "joint state of shape %r does not match total dimension %d" % (R.shape, D)
        )
    # Flattened per-mode element stacks with outcome index o = k*M + i.
    stacks = [
        p.mats.transpose(1, 0, 2, 3).reshape(p.n_outcomes, p.dim, p.dim)
        for p in config.povms
    ]
    S = config.S
    if S == 1:
        P = np.real(np.einsum("mn,anm->a", R, stacks[0]))
    elif S == 2:
        Rt = R.reshape(dims[0], dims[1], dims[0], dims[1])
        P = np.real(np.einsum("mqnr,anm,brq->ab", Rt, stacks[0], stacks[1]))
    else:
        Rt = R.reshape(dims[0], dims[1], dims[2], dims[0], dims[1], dims[2])
        P = np.real(
            np.einsum("mqsnrt,anm,brq,cts->abc", Rt, stacks[0], stacks[1], stacks[2])
        )
    lowest = float(P.min())
    if lowest < _NEGATIVE_CLAMP:
        raise InvariantViolationError(
            "joint outcome probability %.3e is negative beyond roundoff" % lowest,
            check="probability-positivity",
        )
    P = np.maximum(P, 0.0)
    return MultiOutcomeDistribution(config, joint=P)


def sample_multi(dist, T, seed):
    """Draw T joint shots; each shot emits one record per mode.

    Product states are sampled mode-by-mode from independent substreams
    derived from (seed, mode); dense joint states are sampled on the flat
    joint index.  Deterministic either way.
    """
    if T < 1:
        raise ValueError("shot count T must be >= 1, got %r" % (T,))
    config = dist.config
    records = []
    if dist.factors is not None:
        per_mode = []
        for j, f in enumerate(dist.factors):
            if f.total <= 0.0:
                raise ValueError("mode %d has an all-zero outcome distribution" % j)
            u = _uniforms(_derive_seed(seed, j), T)
            per_mode.append(_draw_flat(f.cumulative, u))
        for t in range(T):
            for j, flat in enumerate(per_mode):
                o = int(flat[t])
                M = config.povms[j].binning.M
                records.append(MeasurementRecord(t=t, mode=j, k=o // M, i=o % M))
        return records
    joint = dist.joint
    flat_joint = joint.ravel(order="F")
    cum = np.cumsum(flat_joint)
    if cum.size == 0 or cum[-1] <= 0.0:
        raise ValueError("cannot sample from an all-zero outcome distribution")
    u = _uniforms(seed, T)
    flat = np.searchsorted(cum, u * cum[-1], side="right")
    per_mode_idx = np.unravel_index(flat, joint.shape, order="F")
    for t in range(T):
        for j in range(config.S):
            o = int(per_mode_idx[j][t])
            M = config.povms[j].binning.M
            records.append(MeasurementRecord(t=t, mode=j, k=o // M, i=o % M))
    return records


def _strict_table(povm):
    frame = shadow_mod.frame_operator(povm)
    inv = shadow_mod.invert_frame(frame, mode=shadow_mod.MODE_STRICT)
    return shadow_mod.snapshots(povm, inv)


def estimate_local(records, config, tables, observables, variant="plain-mean", batches=10):
    """Estimate a tensor-product local observable from multi-mode records.

    ``observables`` maps mode index -> Observable for the non-trivially
    measured modes V; every other mode carries the identity.  The per-shot
    value is the product over V of the per-mode snapshot values, so V = {}
    makes every shot contribute exactly 1.  ``tables`` maps mode index ->
    strict-mode SnapshotTable (only modes in V are required).
    """
    V = sorted(observables)
    for j in V:
        if not 0 <= j < config.S:
            raise ValueError("observable mode %d outside 0..%d" % (j, config.S - 1))
        if j not in tables:
            raise ValueError("no snapshot table supplied for mode %d" % j)
    value_tables = {}
    for j in V:
        table = tables[j]
        if table.mode != shadow_mod.MODE_STRICT:
            raise ValueError(
                "mode %d snapshot table is %r; local estimation requires "
                "strict-mode tables" % (j, table.mode)
            )
        value_tables[j] = snapshot_values(table, observables[j])
    by_shot = {}
    for ordinal, rec in enumerate(records):
        try:
            t = int(rec.t)
            j = int(rec.mode)
            i = int(rec.i)
            k = int(rec.k)
        except (AttributeError, TypeError, ValueError) as exc:
            raise MalformedRecordError(
                "record %d is not a measurement record: %s" % (ordinal, exc),
                ordinal=ordinal,
            ) from exc
        if not 0 <= j < config.S:
            raise MalformedRecordError(
                "record %d references mode %d outside 0..%d" % (ordinal, j, config.S - 1),
                ordinal=ordinal,
            )
        M = config.povms[j].binning.M
        N = config.povms[j].grid.N
        if not (0 <= i < M and 0 <= k < N):
            raise MalformedRecordError(
                "record %d references outcome (i=%d, k=%d) outside mode %d's "
                "%d x %d grid" % (ordinal, i, k, j, M, N),
                ordinal=ordinal,
            )
        by_shot.setdefault(t, {})[j] = (i, k)
    if not by_shot:
        raise ValueError("record stream is empty")
    values = []
    for t in sorted(by_shot):
        outcome = by_shot[t]
        v = 1.0
        for j in V:
            if j not in outcome:
                raise MalformedRecordError(
                    "shot %d has no record for mode %d" % (t, j), ordinal=t
                )
            i, k = outcome[j]
            v *= value_tables[j][i, k]
        values.append(v)
    values = np.asarray(values)
    T = values.size
    kind, B = shadow_mod._parse_variant(variant, batches)
    if kind == "plain-mean":
        mean = float(np.mean(values))
        variant_str = "plain-mean"
    else:
        B_eff = min(B, T)
        mean = float(np.median([np.mean(c) for c in np.array_split(values, B_eff)]))
        variant_str = "median-of-means:%d" % B
    stderr = float(np.std(values, ddof=1) / math.sqrt(T)) if T > 1 else 0.0
    label = " * ".join(
        getattr(observables[j], "label", "X") for j in V
    ) if V else "identity"
    return EstimateReport(mean, stderr, T, variant_str, observable_label=label)


def multi_shadow_norm(config, observables, tables=None):
    """Product over measured modes of the single-mode shadow norms.

    Builds strict-mode snapshot tables from the configuration when none are
    supplied.  The product bounds the variance of the tensor-product
    estimator just as the single-mode norm does in one mode.
    """
    out = 1.0
    for j in sorted(observables):
        if not 0 <= j < config.S:
            raise ValueError("observable mode %d outside 0..%d" % (j, config.S - 1))
        povm = config.povms[j]
        if tables is not None:
            if j not in tables:
                raise ValueError("no snapshot table supplied for mode %d" % j)
            table = tables[j]
        else:
            table = _strict_table(povm)
        out *= shadow_mod.shadow_norm(observables[j], table, povm)
    return float(out)


def write_records(path, records):
    """Write records as CSV with header ``t,mode,k,i`` (LF line endings)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_HEADER)
        for rec in records:
            writer.writerow([rec.t, rec.mode, rec.k, rec.i])


def ingest_records(path):
    """Read a record CSV back into a list of measurement records.

    Empty files yield an empty stream; malformed rows raise with their
    1-based line number.
    """
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1:
                if tuple(c.strip() for c in row) != RECORD_HEADER:
                    raise MalformedRecordError(
                        "line 1: expected header %s, got %r"
                        % (",".join(RECORD_HEADER), ",".join(row)),
                        ordinal=1,
                    )
                continue
            if len(row) != 4:
                raise MalformedRecordError(
                    "line %d: expected 4 fields, got %d" % (lineno, len(row)),
                    ordinal=lineno,
                )
            try:
                t, mode, k, i = (int(c) for c in row)
            except ValueError as exc:
                raise MalformedRecordError(
                    "line %d: %s" % (lineno, exc), ordinal=lineno
                ) from exc
            if t < 0 or mode < 0 or k < 0 or i < 0:
                raise MalformedRecordError(
                    "line %d: negative index in %r" % (lineno, row), ordinal=lineno
                )
            records.append(MeasurementRecord(t=t, mode=mode, k=k, i=i))
    return records


def bin_raw(path, grid, binning):
    """Bin raw quadrature rows ``t,mode,k,x`` into measurement records.

    Bins are right-open ([x_i, x_{i+1})), so a value exactly on an interior
    edge belongs to the bin on its right.  Out-of-range values follow the
    binning's tail policy: extend-tails clamps them into the adjacent edge
    bin, strict-finite drops them.  Returns ``(records, dropped_fraction)``.
    """
    records = []
    total = 0
    dropped = 0
    edges = binning.edges
    M = binning.M
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1:
                if tuple(c.strip() for c in row) != RAW_HEADER:
                    raise MalformedRecordError(
                        "line 1: expected header %s, got %r"
                        % (",".join(RAW_HEADER), ",".join(row)),
                        ordinal=1,
                    )
                continue
            if len(row) != 4:
                raise MalformedRecordError(
                    "line %d: expected 4 fields, got %d" % (lineno, len(row)),
                    ordinal=lineno,
                )
            try:
                t = int(row[0])
                mode = int(row[1])
                k = int(row[2])
                x = float(row[3])
            except ValueError as exc:
                raise MalformedRecordError(
                    "line %d: %s" % (lineno, exc), ordinal=lineno
                ) from exc
            if not 0 <= k < grid.N:
                raise MalformedRecordError(
                    "line %d: phase index %d outside 0..%d" % (lineno, k, grid.N - 1),
                    ordinal=lineno,
                )
            if not math.isfinite(x):
                raise MalformedRecordError(
                    "line %d: non-finite quadrature value %r" % (lineno, row[3]),
                    ordinal=lineno,
                )
            total += 1
            idx = int(np.searchsorted(edges, x, side="right")) - 1
            if idx < 0 or idx >= M or x >= edges[-1]:
                if binning.tail_mode == "extend-tails":
                    idx = 0 if x < edges[0] else M - 1
                else:
                    dropped += 1
                    continue
            records.append(MeasurementRecord(t=t, mode=mode, k=k, i=idx))
    fraction = dropped / total if total else 0.0
    return records, fraction
