"""Per-layer likelihood modulation classification and subspace detection for
spatial-multiplexing MIMO, with a seeded Monte-Carlo experiment harness."""

from .channel import (
    ChannelRealization,
    Frame,
    FrameSpec,
    Observation,
    draw_frame,
    generate_channel,
    snr_db_to_linear,
    snr_to_sigma2,
    substream,
)
from .classifiers import (
    CLASSIFIER_NAMES,
    DistanceResult,
    HypothesisScore,
    JointDecision,
    classify_log_map,
    classify_lord_log_map,
    classify_lord_max_log_map,
    classify_max_log_map,
    classify_subspace_log_map,
    classify_subspace_max_log_map,
    classify_zf_alrt,
    subspace_distance,
)
from .constellation import Constellation, ModulationType, build_constellation
from .decomposition import (
    PuncturedDecomposition,
    decompose_for_layer,
    permute_layer,
    puncture,
    qrd,
    standard_pattern,
    transform_observation,
)
from .detection import (
    DetectionResult,
    DistanceCache,
    JointDetectionResult,
    LlrVector,
    assumed_mt_detect,
    joint_classify_detect,
    mt_aware_detect,
    subspace_llrs,
)
from .harness import (
    ExperimentConfig,
    MetricRow,
    count_ops_report,
    run_ccr_experiment,
    run_ser_experiment,
)
from .opcount import OpCounter, table_bound

__version__ = "0.1.0"
