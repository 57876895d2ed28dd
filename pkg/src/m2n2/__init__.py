"""Training-free interactive point-prompt image segmentation."""

__version__ = "0.1.0"

from .aggregation import Stochasticity, TransitionMatrix, aggregate
from .errors import (
    ContractError,
    ConvergenceError,
    CorruptionError,
    FormatError,
    M2N2Error,
    NumericError,
    StateError,
    ValidationError,
)
from .evaluation import (
    BaselineKind,
    EvalConfig,
    InstanceRecord,
    baseline_map,
    build_baseline_session,
    build_method_session,
    import_davis,
    iou,
    next_click,
    run_benchmark,
    session_callback,
    simulate_instance,
)
from .floodfill import flood_fill_minimax
from .jbu import GuideImage, guide_from_array, jbu_upsample
from .markov import (
    MarkovGrid,
    MarkovParams,
    apply_temperature,
    chain_states,
    ipf_normalize,
    markov_map,
)
from .rle import decode_mask, encode_mask
from .segmenter import (
    Label,
    PromptPoint,
    ScoreCurve,
    Segmentation,
    SessionContext,
    ThresholdScore,
    add_point,
    build_m2n2_session,
    compute_point_map,
    evaluate_scores,
    remove_last_point,
    score_curve,
    segment,
    select_lambda,
)
from .tensor_io import (
    AttentionBlock,
    AttentionStack,
    SyntheticSpec,
    generate_synthetic_stack,
    guillotine_partition,
    read_attention_file,
    region_mask,
    serialize_stack,
    synthetic_guide_image,
    write_attention_file,
)

__all__ = [
    "AttentionBlock",
    "AttentionStack",
    "BaselineKind",
    "ContractError",
    "ConvergenceError",
    "CorruptionError",
    "EvalConfig",
    "FormatError",
    "GuideImage",
    "InstanceRecord",
    "Label",
    "M2N2Error",
    "MarkovGrid",
    "MarkovParams",
    "NumericError",
    "PromptPoint",
    "ScoreCurve",
    "Segmentation",
    "SessionContext",
    "StateError",
    "Stochasticity",
    "SyntheticSpec",
    "ThresholdScore",
    "TransitionMatrix",
    "ValidationError",
    "add_point",
    "aggregate",
    "apply_temperature",
    "baseline_map",
    "build_baseline_session",
    "build_m2n2_session",
    "build_method_session",
    "chain_states",
    "compute_point_map",
    "decode_mask",
    "encode_mask",
    "evaluate_scores",
    "flood_fill_minimax",
    "generate_synthetic_stack",
    "guide_from_array",
    "guillotine_partition",
    "import_davis",
    "iou",
    "ipf_normalize",
    "jbu_upsample",
    "markov_map",
    "next_click",
    "read_attention_file",
    "region_mask",
    "remove_last_point",
    "run_benchmark",
    "score_curve",
    "segment",
    "select_lambda",
    "serialize_stack",
    "session_callback",
    "simulate_instance",
    "synthetic_guide_image",
    "write_attention_file",
]
