from .absolute import (
    AbsKind,
    PositionTable,
    anisotropy,
    build_learned_ape,
    build_table,
    build_tape,
    build_vanilla_ape,
    inject_absolute,
    monotonicity_violations,
    sign_changes,
    similarity_curve,
    write_curve_csv,
)
from .complexity import METHODS, complexity_report, live_parameter_count
from .relative import (
    RelativeBias,
    ShawBias,
    VectorBias,
    clip_index,
    erpe_cache_indices,
    erpe_materialize,
    erpe_new,
    relative_index,
    shaw_attention_scores,
    shaw_values_mix,
    vector_relative_logits,
    vector_skew,
)
