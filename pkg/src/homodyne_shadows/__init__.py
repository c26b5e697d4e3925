"""Classical-shadow estimation for discretized homodyne detection.

Measure a continuous-variable state at N uniformly spaced local-oscillator
phases, record which of M quadrature bins each outcome lands in, and invert
the resulting binned-phase POVM's measurement frame to turn every outcome
into an unbiased snapshot of the truncated-Fock-space density matrix.  The
package covers the full pipeline: POVM construction and informational-
completeness certification (``povm``), bin design, frame inversion and
observable estimation with exact variance and shot-count accounting
(``shadow``), input states and observables (``states``), exact measurement
simulation and record handling (``sim``), and a CLI (``hshadow``).
"""

from . import cli, errors, fockcore, povm, shadow, sim, states
from .errors import (
    BinDesignError,
    CacheKeyMismatchError,
    HomodyneShadowsError,
    InvariantViolationError,
    MalformedRecordError,
    QuadratureConvergenceError,
    StrictModeSingularError,
    UnsupportedConfigurationError,
)
from .fockcore import bin_overlap, hermite_eval, wavefunction
from .povm import (
    BinningScheme,
    MeasurementMatrix,
    PhaseGrid,
    PovmSet,
    build_povm,
    design_bins,
    is_informationally_complete,
    load_povm,
    measurement_matrix,
    necessary_condition,
    normalization_residual,
    numerical_rank,
    save_povm,
    sufficient_condition,
)
from .shadow import (
    EstimateReport,
    FrameOperator,
    InverseFrame,
    SnapshotTable,
    bernstein_samples,
    estimate_observable,
    exact_variance,
    frame_operator,
    invert_frame,
    reconstruct_state,
    shadow_norm,
    snapshots,
    variance_bound,
)
from .sim import (
    MeasurementRecord,
    MultiModeConfig,
    OutcomeDistribution,
    bin_raw,
    estimate_local,
    indistinguishability_experiment,
    ingest_records,
    joint_distribution,
    multi_shadow_norm,
    outcome_distribution,
    sample,
    sample_multi,
    write_records,
)
from .states import (
    DensityMatrix,
    Observable,
    cat,
    coherent,
    expectation,
    fock,
    from_file,
    number_operator,
    observable_from_file,
    superposition_pair,
    thermal,
    trace_distance,
)

__version__ = "0.1.0"
