"""Edge-device collaborative multi-view classification simulator.

Six inference protocols (centralized, ensemble, and their selective
variants) over a discrete-time network of camera nodes and an edge
controller, with byte-exact communication accounting, a parametric 5G
latency model, and reproducible desk-scale experiments.
"""

__version__ = "0.1.0"

from .descriptors import (
    KERNEL_BACKEND,
    average_histograms,
    cosine,
    hist,
    nhi,
    rgb_to_lab,
)
from .harness import ExperimentConfig, MetricsRow, emit_csv, run_experiment, sweep_threshold
from .models import (
    PrecomputedBackbone,
    ToyBackbone,
    ToyHead,
    ToyModelParams,
    classify_multi,
    classify_single,
    extract,
    toy_models,
    view_pool,
)
from .network import (
    ComputeCostModel,
    MessageCatalogue,
    ProcessingProfile,
    RadioConfig,
    TransportModel,
    node_throughput,
    round_flops,
    round_latency,
    round_overhead,
    transmission_gain,
    wire_bytes,
)
from .schemes import (
    DEFAULT_GAMMA,
    RoundOutcome,
    SchemeConfig,
    SchemeId,
    consensus,
    nominal_trace,
    quality_gate,
    run_ci,
    run_ei,
    run_round,
    run_sci_ch,
    run_sci_e,
    run_sei_ch,
    run_sei_e,
)
from .types import (
    CONTROLLER,
    Context,
    EMPTY_CONTEXT,
    Message,
    MessageKind,
    MessageTrace,
    MultiViewInstance,
    Phase,
    ScenarioParams,
    View,
    validate_instance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
