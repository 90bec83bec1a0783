"""Communication-overhead accounting and the parametric 5G latency model.

Payload sizes follow the application-layer message catalogue (views and
intermediate tensors serialized as float32, predictions as one byte); the
transport model adds static TCP/IP headers and delayed ACKs. Throughput
is a capped-Shannon abstraction over an evenly shared resource-block
slice. Absolute latency is a calibration exercise; the defaults are
loosely fitted so that prediction-only schemes sit near 20 ms and
view-shipping schemes grow with the node count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import InvalidCounts
from .types import CONTROLLER, Message, MessageTrace, NodeId, ScenarioParams

_TAG_RADIO_SNR = 201

SPECTRAL_EFFICIENCY_CAP = 7.4  # b/s/Hz
PROTOCOL_OVERHEAD_FACTOR = 0.75
SUBCARRIERS_PER_RB = 12


@dataclass(frozen=True)
class MessageCatalogue:
    """Application-layer payload sizes in bytes for one scenario."""

    view_bytes: int = 224 * 224 * 3 * 4
    embedding_bytes: int = 25088 * 4
    histogram_bytes: int = 32 * 32 * 4
    prediction_bytes: int = 1

    @classmethod
    def from_params(cls, params: ScenarioParams) -> "MessageCatalogue":
        return cls(
            view_bytes=params.width * params.height * 3 * 4,
            embedding_bytes=params.embedding_dim * 4,
            histogram_bytes=params.bins * params.bins * 4,
            prediction_bytes=1,
        )


@dataclass(frozen=True)
class TransportModel:
    """Static TCP/IP accounting: per-segment headers plus delayed ACKs."""

    mss: int = 1460
    header_per_segment: int = 40
    ack_every: int = 2
    ack_size: int = 40
    per_connection_setup: int = 0

    def __post_init__(self) -> None:
        if self.mss < 1:
            raise ValueError("mss must be >= 1")
        if min(self.header_per_segment, self.ack_every, self.ack_size,
               self.per_connection_setup) < 0:
            raise ValueError("transport fields must be non-negative")


DEFAULT_TRANSPORT = TransportModel()


def wire_bytes(msg: Union[Message, int], tm: TransportModel = DEFAULT_TRANSPORT) -> int:
    """Total bytes on the wire for one message, headers and ACKs included."""
    payload = msg.payload_bytes if isinstance(msg, Message) else int(msg)
    if payload < 0:
        raise ValueError("payload must be non-negative")
    segments = -(-payload // tm.mss)  # ceil
    acks = segments // tm.ack_every if tm.ack_every > 0 else 0
    return (
        payload
        + segments * tm.header_per_segment
        + acks * tm.ack_size
        + tm.per_connection_setup
    )


def round_overhead(trace: MessageTrace, tm: TransportModel = DEFAULT_TRANSPORT) -> int:
    """Wire bytes of an entire round, both directions."""
    return sum(wire_bytes(m, tm) for m in trace.messages)


def transmission_gain(baseline_views: int, transmitted_views: int) -> float:
    """Percentage reduction in transmitted views against a baseline."""
    if baseline_views < 1 or not 0 <= transmitted_views <= baseline_views:
        raise InvalidCounts(
            f"invalid counts: baseline={baseline_views}, transmitted={transmitted_views}"
        )
    return 100.0 * (1.0 - transmitted_views / baseline_views)


@dataclass(frozen=True)
class RadioConfig:
    """5G slice parameters; resource blocks are split evenly across nodes.

    ``snr_db`` may be a scalar (all nodes), a per-node mapping, or None;
    when None, per-node values are drawn uniformly in [0, 20] dB via
    ``with_sampled_snrs`` before latency is computed.
    """

    carrier_hz: float = 3.5e9
    bandwidth_hz: float = 50e6
    scs_hz: float = 15e3
    mimo_layers: int = 2
    total_rbs: int = 50
    snr_db: Union[float, Mapping[NodeId, float], None] = None

    def snr_for(self, node: NodeId) -> float:
        if self.snr_db is None:
            raise ValueError(
                "per-node SNR not set; call with_sampled_snrs() or set snr_db"
            )
        if isinstance(self.snr_db, (int, float)):
            return float(self.snr_db)
        return float(self.snr_db[node])

    def with_sampled_snrs(self, seed: int, nodes: Sequence[NodeId]) -> "RadioConfig":
        """Draw per-node SNR uniformly in [0, 20] dB.

        Each node gets its own seed-derived stream, so the draw for node i
        does not depend on how many other nodes exist (nested node sets
        see consistent channels).
        """
        snrs = {}
        for node in nodes:
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence((seed, _TAG_RADIO_SNR, node)))
            )
            snrs[node] = float(rng.uniform(0.0, 20.0))
        return replace(self, snr_db=snrs)


def node_throughput(radio: RadioConfig, node: NodeId, active_nodes: int) -> float:
    """Bits per second available to one node's link.

    Evenly split resource blocks times subcarriers, SCS and MIMO layers,
    scaled by capped-Shannon spectral efficiency and a protocol overhead
    factor.
    """
    if active_nodes < 1:
        raise ValueError("active_nodes must be >= 1")
    snr_linear = 10.0 ** (radio.snr_for(node) / 10.0)
    efficiency = (
        min(math.log2(1.0 + snr_linear), SPECTRAL_EFFICIENCY_CAP)
        * PROTOCOL_OVERHEAD_FACTOR
    )
    rbs = radio.total_rbs / active_nodes
    return rbs * SUBCARRIERS_PER_RB * radio.scs_hz * radio.mimo_layers * efficiency


@dataclass(frozen=True)
class StageTimes:
    """Wall-clock milliseconds per compute stage for one node class."""

    extract_ms: float = 0.0
    head_ms: float = 0.0
    pool_ms: float = 0.0
    hist_ms: float = 0.0
    consensus_ms: float = 0.0

    def for_stage(self, stage: str) -> float:
        # histogram averaging ("havg") is costed like the pooling stage
        table = {
            "extract": self.extract_ms,
            "head": self.head_ms,
            "pool": self.pool_ms,
            "havg": self.pool_ms,
            "hist": self.hist_ms,
            "consensus": self.consensus_ms,
        }
        return table[stage]


@dataclass(frozen=True)
class ProcessingProfile:
    """Per-stage processing times for source nodes and the controller.

    Defaults are fitted so that a local-inference round (extract + head at
    the source, consensus at the controller) lands near 20.5 ms.
    """

    source: StageTimes = field(
        default_factory=lambda: StageTimes(
            extract_ms=18.3, head_ms=2.0, hist_ms=0.5
        )
    )
    controller: StageTimes = field(
        default_factory=lambda: StageTimes(
            extract_ms=10.0, head_ms=1.0, pool_ms=0.1, consensus_ms=0.15
        )
    )


DEFAULT_PROFILE = ProcessingProfile()


def round_latency(
    trace: MessageTrace,
    radio: RadioConfig,
    profile: ProcessingProfile = DEFAULT_PROFILE,
    tm: TransportModel = DEFAULT_TRANSPORT,
) -> float:
    """Milliseconds for one round: sequential phases, parallel nodes.

    Each phase costs the controller's processing (it coordinates, so its
    stages serialize before the radio activity) plus the maximum over
    source nodes of per-node processing and transfer time. A message's
    transfer uses the link of its non-controller endpoint; wire bytes
    include transport headers.
    """
    sources = sorted(
        {op.node for op in trace.ops if op.node != CONTROLLER}
        | {
            e.message.sender if e.message.sender != CONTROLLER else e.message.receiver
            for e in trace.entries
        }
    )
    if not sources:
        return 0.0
    throughput = {
        n: node_throughput(radio, n, len(sources)) for n in sources
    }
    phases = sorted(
        {e.phase_index for e in trace.entries} | {op.phase_index for op in trace.ops}
    )
    total_ms = 0.0
    for phase in phases:
        controller_ms = 0.0
        node_ms = {n: 0.0 for n in sources}
        for op in trace.ops:
            if op.phase_index != phase:
                continue
            if op.node == CONTROLLER:
                controller_ms += profile.controller.for_stage(op.stage)
            else:
                node_ms[op.node] += profile.source.for_stage(op.stage)
        for entry in trace.entries:
            if entry.phase_index != phase:
                continue
            msg = entry.message
            link = msg.sender if msg.sender != CONTROLLER else msg.receiver
            node_ms[link] += wire_bytes(msg, tm) * 8.0 / throughput[link] * 1000.0
        total_ms += controller_ms + max(node_ms.values())
    return total_ms


@dataclass(frozen=True)
class ComputeCostModel:
    """FLOPs per pipeline stage (backbone per view; pool/head per inference)."""

    backbone_flops: float = 30.7e9
    view_pool_flops: float = 0.3e6
    head_flops: float = 239.4e6

    def for_stage(self, stage: str) -> float:
        if stage == "extract":
            return self.backbone_flops
        if stage == "pool":
            return self.view_pool_flops
        if stage == "head":
            return self.head_flops
        return 0.0  # hist / havg / consensus are not modeled


DEFAULT_COST = ComputeCostModel()


def round_flops(
    outcome_or_trace: object, cost: ComputeCostModel = DEFAULT_COST
) -> tuple[dict[NodeId, float], float]:
    """Tally FLOPs by where each stage executed.

    Returns (per-source-node totals, controller total). Accepts either a
    RoundOutcome or its MessageTrace.
    """
    trace: MessageTrace = getattr(outcome_or_trace, "trace", outcome_or_trace)
    per_source: dict[NodeId, float] = {}
    controller = 0.0
    for op in trace.ops:
        flops = cost.for_stage(op.stage)
        if op.node == CONTROLLER:
            controller += flops
        else:
            per_source[op.node] = per_source.get(op.node, 0.0) + flops
    return per_source, controller
