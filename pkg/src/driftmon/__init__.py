"""Label-efficient monitoring of a deployed classifier's drifting accuracy."""

from .bounds import (
    LabelSample,
    RiskCertificate,
    certify_risk,
    confidence_interval,
    hoeffding_biased_tail,
    psi,
    tolerance_constants,
)
from .detector import (
    Detector,
    DetectorState,
    QuantileMap,
    SignalHistory,
    embedding_distance_signal,
    ks_signal,
    mean_shift_signal,
    modulation_factor,
    quantile_normalize,
)
from .errors import (
    ConfigurationError,
    DriftmonError,
    LipschitzViolationError,
    ParseError,
    ValidationError,
)
from .harness import (
    DetectorConfig,
    ExperimentConfig,
    PolicyConfig,
    Trajectory,
    load_config,
    run_deployment,
    run_sweep,
)
from .policy import (
    MldemonState,
    PolicyAction,
    PqState,
    RrState,
    mldemon_from_tolerance,
    mldemon_step,
    pq_from_budget,
    pq_from_tolerance,
    pq_step,
    rr_step,
)
from .risk import (
    FrontierPoint,
    RiskReport,
    amortize,
    build_frontier,
    min_loss_over_frontier,
    normalized_auc,
    r_bin,
    r_hinge,
    r_mae,
)
from .stream import (
    DriftSpec,
    StreamEvent,
    block_bootstrap,
    gen_adversarial_rr,
    gen_piecewise,
    gen_random_walk,
    gen_rotating_clusters,
    generate,
    moving_average_truth,
    replay_csv,
    write_csv,
)

__version__ = "0.1.0"
