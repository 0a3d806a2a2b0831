"""Quantum channels, superchannels and their convex decompositions into gen-extreme terms."""

from .channels import (
    ChoiState,
    GenExtremeQubitAnsatz,
    KrausChannel,
    choi_from_kraus,
    choi_to_isometry,
    gen_extreme_channel,
    is_extreme,
    is_gen_extreme,
    is_quasi_extreme,
    is_unital,
    kraus_from_choi,
    random_channel,
    rsw_decompose,
)
from .decompose import (
    DecompositionResult,
    DecompositionTask,
    decompose_channel,
    decompose_superchannel,
    multistart_minimize,
    objective,
    run_table_tasks,
)
from .linalg import csd, haar_unitary, partial_trace, tolerance, trace_distance
from .superchannels import (
    GenExtremeSuperCircuit,
    Superchannel,
    SuperChoi,
    comb_validity,
    parameter_count,
    random_superchannel,
    super_choi,
    super_kraus,
    unital_class_check,
)

__version__ = "0.1.0"
