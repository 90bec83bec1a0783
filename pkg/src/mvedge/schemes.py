"""The six collaborative inference protocols over one time period.

Each ``run_*`` function is pure: given an instance, a configuration and
(for the embedding-based selective schemes) the previous-period context,
it replays the protocol's step sequence and returns the prediction, the
full message trace with compute-op placement, and the context to carry
into the next period.

Scheme taxonomy:

* CI      - nodes ship raw views; controller runs the multi-view pipeline.
* SCI-E   - nodes ship embeddings gated by cosine similarity against the
            previous period's pooled embedding.
* SCI-CH  - nodes ship chroma histograms, then gated raw views, using the
            current period's average histogram as context.
* EI      - nodes classify locally; controller takes a majority vote.
* SEI-E   - embeddings always shipped; the gate decides which nodes run
            their local head and vote.
* SEI-CH  - histogram context as SCI-CH; gated nodes classify locally.

Gating is strictly ``similarity < gamma``; boundary equality discards.
The histogram-based schemes never drop a round: when gating would discard
every view, the node with the lowest similarity transmits anyway (which
also covers the single-node case, where a view's similarity to the
average context is always 1).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .descriptors import average_histograms, cosine, hist, nhi
from .errors import ConfigError, EmptyInput, NoAvailableNodes
from .models import Backbone, Head, classify_multi, classify_single, extract, view_pool
from .network import MessageCatalogue
from .types import (
    CONTROLLER,
    Context,
    ContextKind,
    EMPTY_CONTEXT,
    Message,
    MessageKind,
    MessageTrace,
    MultiViewInstance,
    NodeId,
    Phase,
    TimePeriod,
    View,
)


class SchemeId(Enum):
    CI = "CI"
    SCI_E = "SCI-E"
    SCI_CH = "SCI-CH"
    EI = "EI"
    SEI_E = "SEI-E"
    SEI_CH = "SEI-CH"


SELECTIVE_SCHEMES = frozenset({SchemeId.SCI_E, SchemeId.SCI_CH, SchemeId.SEI_E, SchemeId.SEI_CH})

#: Best accuracy/transmission trade-off thresholds for the selective schemes.
DEFAULT_GAMMA = {
    SchemeId.SCI_E: 0.4,
    SchemeId.SEI_E: 0.4,
    SchemeId.SCI_CH: 0.7,
    SchemeId.SEI_CH: 0.7,
}


@dataclass(frozen=True)
class SchemeConfig:
    """Per-round configuration: scheme, threshold, models, availability."""

    scheme: SchemeId
    backbone: Backbone
    head: Head
    gamma: Optional[float] = None
    bins: int = 32
    node_availability: Optional[Sequence[bool]] = None

    def __post_init__(self) -> None:
        if self.scheme in SELECTIVE_SCHEMES:
            gamma = self.gamma if self.gamma is not None else DEFAULT_GAMMA[self.scheme]
            if not 0.0 <= gamma <= 1.0:
                raise ConfigError(f"gamma must be in [0, 1], got {gamma}")
            object.__setattr__(self, "gamma", gamma)
        elif self.gamma is not None:
            raise ConfigError(f"{self.scheme.value} takes no similarity threshold")
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")


@dataclass(frozen=True)
class RoundOutcome:
    """Result of one inference round.

    ``prediction`` is None when the round was dropped (every view gated
    out in a selective scheme).
    """

    prediction: Optional[int]
    trace: MessageTrace
    transmitted_views: int
    available_views: int
    next_context: Context

    @property
    def dropped(self) -> bool:
        return self.prediction is None

    @property
    def per_node_ops(self) -> list[tuple[NodeId, str]]:
        return [(op.node, op.stage) for op in self.trace.ops]


def quality_gate(similarity: float, gamma: float) -> bool:
    """True (keep) iff similarity is strictly below the threshold."""
    return similarity < gamma


def consensus(predictions: Sequence[int]) -> int:
    """Most frequent label; ties resolved toward the lowest class index."""
    if len(predictions) == 0:
        raise EmptyInput("consensus over zero predictions")
    counts = Counter(predictions)
    return min(counts, key=lambda label: (-counts[label], label))


def _available_views(
    instance: MultiViewInstance, config: SchemeConfig
) -> list[tuple[NodeId, View]]:
    mask = config.node_availability
    avail = [
        (node, view)
        for node, view in instance.views
        if mask is None or (node < len(mask) and mask[node])
    ]
    if not avail:
        raise NoAvailableNodes(f"no node available for instance {instance.instance_id}")
    return avail


@dataclass
class _Round:
    """Trace-building helper shared by the scheme implementations."""

    config: SchemeConfig
    period: TimePeriod
    catalogue: MessageCatalogue
    trace: MessageTrace = field(default_factory=MessageTrace)
    phase: int = 0

    def next_phase(self) -> int:
        self.phase += 1
        return self.phase

    def up(self, node: NodeId, kind: MessageKind, payload: int) -> None:
        self.trace.add(
            Message(node, CONTROLLER, kind, payload, self.period),
            Phase.UPSTREAM,
            self.phase,
        )

    def down(self, nodes: Sequence[NodeId], kind: MessageKind, payload: int,
             phase: Phase = Phase.DOWNSTREAM) -> None:
        for node in nodes:
            self.trace.add(
                Message(CONTROLLER, node, kind, payload, self.period),
                phase,
                self.phase,
            )

    def op(self, node: NodeId, stage: str) -> None:
        self.trace.add_op(node, stage, self.phase)


def _catalogue_for(instance: MultiViewInstance, config: SchemeConfig) -> MessageCatalogue:
    first = instance.views[0][1]
    return MessageCatalogue(
        view_bytes=first.width * first.height * 3 * 4,
        embedding_bytes=config.backbone.dim * 4,
        histogram_bytes=config.bins * config.bins * 4,
        prediction_bytes=1,
    )


def run_ci(
    instance: MultiViewInstance,
    config: SchemeConfig,
    prev_context: Context = EMPTY_CONTEXT,
    period: TimePeriod = 0,
) -> RoundOutcome:
    """Non-selective centralized inference: ship everything, classify once."""
    avail = _available_views(instance, config)
    r = _Round(config, period, _catalogue_for(instance, config))

    for node, _ in avail:
        r.up(node, MessageKind.VIEW, r.catalogue.view_bytes)

    r.next_phase()
    embeddings = []
    for _, view in avail:
        r.op(CONTROLLER, "extract")
        embeddings.append(extract(config.backbone, view))
    r.op(CONTROLLER, "pool")
    r.op(CONTROLLER, "head")
    prediction = classify_multi(config.head, embeddings)

    r.next_phase()
    r.down([n for n, _ in avail], MessageKind.FINAL_PREDICTION, r.catalogue.prediction_bytes)
    return RoundOutcome(prediction, r.trace, len(avail), len(avail), EMPTY_CONTEXT)


def run_sci_e(
    instance: MultiViewInstance,
    config: SchemeConfig,
    prev_context: Context = EMPTY_CONTEXT,
    period: TimePeriod = 0,
) -> RoundOutcome:
    """Selective centralized inference gated on the previous pooled embedding."""
    avail = _available_views(instance, config)
    nodes = [n for n, _ in avail]
    r = _Round(config, period, _catalogue_for(instance, config))

    if not prev_context.is_empty:
        r.down(nodes, MessageKind.CONTEXT, r.catalogue.embedding_bytes, Phase.CONTEXT)

    r.next_phase()
    kept: list[np.ndarray] = []
    for node, view in avail:
        r.op(node, "extract")
        embedding = extract(config.backbone, view)
        keep = prev_context.is_empty or quality_gate(
            cosine(prev_context.data, embedding), config.gamma
        )
        if keep:
            r.up(node, MessageKind.EMBEDDING, r.catalogue.embedding_bytes)
            kept.append(embedding)

    if not kept:
        return RoundOutcome(None, r.trace, 0, len(avail), prev_context)

    r.next_phase()
    r.op(CONTROLLER, "pool")
    pooled = view_pool(kept)
    r.op(CONTROLLER, "head")
    prediction = classify_single(config.head, pooled)

    r.next_phase()
    r.down(nodes, MessageKind.FINAL_PREDICTION, r.catalogue.prediction_bytes)
    return RoundOutcome(
        prediction, r.trace, len(kept), len(avail), Context.of_embedding(pooled)
    )


def _histogram_gate(
    avail: Sequence[tuple[NodeId, View]], gamma: float, bins: int
) -> tuple[list[np.ndarray], np.ndarray, list[int]]:
    """Shared phase-1 logic of the histogram schemes.

    Returns per-node histograms, the average-histogram context, and the
    indices (into ``avail``) that pass the gate. When nobody passes, the
    node with the lowest similarity (ties: lowest node id) is forced
    through so the round is never dropped.
    """
    histograms = [hist(view, bins) for _, view in avail]
    h_avg = average_histograms(histograms)
    similarities = [nhi(h, h_avg) for h in histograms]
    kept = [i for i, s in enumerate(similarities) if quality_gate(s, gamma)]
    if not kept:
        kept = [int(np.argmin(similarities))]
    return histograms, h_avg, kept


def run_sci_ch(
    instance: MultiViewInstance,
    config: SchemeConfig,
    period: TimePeriod = 0,
) -> RoundOutcome:
    """Selective centralized inference gated on the average chroma histogram."""
    avail = _available_views(instance, config)
    nodes = [n for n, _ in avail]
    r = _Round(config, period, _catalogue_for(instance, config))

    for node, _ in avail:
        r.op(node, "hist")
        r.up(node, MessageKind.HISTOGRAM, r.catalogue.histogram_bytes)

    r.next_phase()
    r.op(CONTROLLER, "havg")
    _, h_avg, kept = _histogram_gate(avail, config.gamma, config.bins)
    r.down(nodes, MessageKind.CONTEXT, r.catalogue.histogram_bytes, Phase.CONTEXT)

    r.next_phase()
    for i in kept:
        r.up(avail[i][0], MessageKind.VIEW, r.catalogue.view_bytes)

    r.next_phase()
    embeddings = []
    for i in kept:
        r.op(CONTROLLER, "extract")
        embeddings.append(extract(config.backbone, avail[i][1]))
    r.op(CONTROLLER, "pool")
    r.op(CONTROLLER, "head")
    prediction = classify_multi(config.head, embeddings)

    r.next_phase()
    r.down(nodes, MessageKind.FINAL_PREDICTION, r.catalogue.prediction_bytes)
    return RoundOutcome(prediction, r.trace, len(kept), len(avail), EMPTY_CONTEXT)


def run_ei(
    instance: MultiViewInstance,
    config: SchemeConfig,
    period: TimePeriod = 0,
) -> RoundOutcome:
    """Non-selective ensemble inference: local predictions, majority vote."""
    avail = _available_views(instance, config)
    nodes = [n for n, _ in avail]
    r = _Round(config, period, _catalogue_for(instance, config))

    local = []
    for node, view in avail:
        r.op(node, "extract")
        r.op(node, "head")
        local.append(classify_single(config.head, extract(config.backbone, view)))
        r.up(node, MessageKind.LOCAL_PREDICTION, r.catalogue.prediction_bytes)

    r.next_phase()
    r.op(CONTROLLER, "consensus")
    prediction = consensus(local)

    r.next_phase()
    r.down(nodes, MessageKind.FINAL_PREDICTION, r.catalogue.prediction_bytes)
    return RoundOutcome(prediction, r.trace, len(avail), len(avail), EMPTY_CONTEXT)


def run_sei_e(
    instance: MultiViewInstance,
    config: SchemeConfig,
    prev_context: Context = EMPTY_CONTEXT,
    period: TimePeriod = 0,
) -> RoundOutcome:
    """Selective ensemble inference gated on the previous pooled embedding.

    Embeddings are always shipped (they feed the next-period context);
    the gate only decides which nodes run their local head and vote.
    """
    avail = _available_views(instance, config)
    nodes = [n for n, _ in avail]
    r = _Round(config, period, _catalogue_for(instance, config))

    embeddings = []
    for node, view in avail:
        r.op(node, "extract")
        embeddings.append(extract(config.backbone, view))
        r.up(node, MessageKind.EMBEDDING, r.catalogue.embedding_bytes)

    r.next_phase()
    if not prev_context.is_empty:
        r.down(nodes, MessageKind.CONTEXT, r.catalogue.embedding_bytes, Phase.CONTEXT)

    r.next_phase()
    local = []
    kept = 0
    for (node, _), embedding in zip(avail, embeddings):
        keep = prev_context.is_empty or quality_gate(
            cosine(prev_context.data, embedding), config.gamma
        )
        if keep:
            kept += 1
            r.op(node, "head")
            local.append(classify_single(config.head, embedding))
            r.up(node, MessageKind.LOCAL_PREDICTION, r.catalogue.prediction_bytes)

    r.next_phase()
    r.op(CONTROLLER, "pool")
    next_context = Context.of_embedding(view_pool(embeddings))
    if not local:
        return RoundOutcome(None, r.trace, 0, len(avail), next_context)
    r.op(CONTROLLER, "consensus")
    prediction = consensus(local)

    r.next_phase()
    r.down(nodes, MessageKind.FINAL_PREDICTION, r.catalogue.prediction_bytes)
    return RoundOutcome(prediction, r.trace, kept, len(avail), next_context)


def run_sei_ch(
    instance: MultiViewInstance,
    config: SchemeConfig,
    period: TimePeriod = 0,
) -> RoundOutcome:
    """Selective ensemble inference gated on the average chroma histogram."""
    avail = _available_views(instance, config)
    nodes = [n for n, _ in avail]
    r = _Round(config, period, _catalogue_for(instance, config))

    for node, _ in avail:
        r.op(node, "hist")
        r.up(node, MessageKind.HISTOGRAM, r.catalogue.histogram_bytes)

    r.next_phase()
    r.op(CONTROLLER, "havg")
    _, h_avg, kept = _histogram_gate(avail, config.gamma, config.bins)
    r.down(nodes, MessageKind.CONTEXT, r.catalogue.histogram_bytes, Phase.CONTEXT)

    r.next_phase()
    local = []
    for i in kept:
        node, view = avail[i]
        r.op(node, "extract")
        r.op(node, "head")
        local.append(classify_single(config.head, extract(config.backbone, view)))
        r.up(node, MessageKind.LOCAL_PREDICTION, r.catalogue.prediction_bytes)

    r.next_phase()
    r.op(CONTROLLER, "consensus")
    prediction = consensus(local)

    r.next_phase()
    r.down(nodes, MessageKind.FINAL_PREDICTION, r.catalogue.prediction_bytes)
    return RoundOutcome(prediction, r.trace, len(kept), len(avail), EMPTY_CONTEXT)


def run_round(
    instance: MultiViewInstance,
    config: SchemeConfig,
    prev_context: Context = EMPTY_CONTEXT,
    period: TimePeriod = 0,
) -> RoundOutcome:
    """Dispatch one round to the configured scheme."""
    scheme = config.scheme
    if scheme is SchemeId.CI:
        return run_ci(instance, config, prev_context, period)
    if scheme is SchemeId.SCI_E:
        return run_sci_e(instance, config, prev_context, period)
    if scheme is SchemeId.SCI_CH:
        return run_sci_ch(instance, config, period)
    if scheme is SchemeId.EI:
        return run_ei(instance, config, period)
    if scheme is SchemeId.SEI_E:
        return run_sei_e(instance, config, prev_context, period)
    if scheme is SchemeId.SEI_CH:
        return run_sei_ch(instance, config, period)
    raise ConfigError(f"unknown scheme {scheme}")


def nominal_trace(
    scheme: SchemeId,
    n_nodes: int,
    catalogue: MessageCatalogue,
    transmitted: Optional[int] = None,
    period: TimePeriod = 0,
) -> MessageTrace:
    """Accounting-only trace for a round in which ``transmitted`` of the
    ``n_nodes`` available views pass the gate (all of them by default).

    Builds the same message sequence and compute-op placement as the
    corresponding ``run_*`` function without touching any pixels; used for
    closed-form overhead/latency analysis at reference scale.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    v = n_nodes if transmitted is None else transmitted
    if not 0 <= v <= n_nodes:
        raise ValueError("transmitted must be in [0, n_nodes]")
    if scheme in (SchemeId.CI, SchemeId.EI) and v != n_nodes:
        raise ValueError(f"{scheme.value} transmits every available view")
    if scheme in (SchemeId.SCI_CH, SchemeId.SEI_CH):
        v = max(v, 1)  # histogram schemes never drop the round

    nodes = list(range(n_nodes))
    senders = nodes[:v]
    trace = MessageTrace()
    phase = 0

    def up(node: NodeId, kind: MessageKind, payload: int) -> None:
        trace.add(Message(node, CONTROLLER, kind, payload, period), Phase.UPSTREAM, phase)

    def down(kind: MessageKind, payload: int, tag: Phase = Phase.DOWNSTREAM) -> None:
        for node in nodes:
            trace.add(Message(CONTROLLER, node, kind, payload, period), tag, phase)

    if scheme is SchemeId.CI:
        for node in nodes:
            up(node, MessageKind.VIEW, catalogue.view_bytes)
        phase += 1
        for _ in nodes:
            trace.add_op(CONTROLLER, "extract", phase)
        trace.add_op(CONTROLLER, "pool", phase)
        trace.add_op(CONTROLLER, "head", phase)
        phase += 1
        down(MessageKind.FINAL_PREDICTION, catalogue.prediction_bytes)
    elif scheme is SchemeId.SCI_E:
        down(MessageKind.CONTEXT, catalogue.embedding_bytes, Phase.CONTEXT)
        phase += 1
        for node in nodes:
            trace.add_op(node, "extract", phase)
        for node in senders:
            up(node, MessageKind.EMBEDDING, catalogue.embedding_bytes)
        if v:
            phase += 1
            trace.add_op(CONTROLLER, "pool", phase)
            trace.add_op(CONTROLLER, "head", phase)
            phase += 1
            down(MessageKind.FINAL_PREDICTION, catalogue.prediction_bytes)
    elif scheme is SchemeId.SCI_CH:
        for node in nodes:
            trace.add_op(node, "hist", phase)
            up(node, MessageKind.HISTOGRAM, catalogue.histogram_bytes)
        phase += 1
        trace.add_op(CONTROLLER, "havg", phase)
        down(MessageKind.CONTEXT, catalogue.histogram_bytes, Phase.CONTEXT)
        phase += 1
        for node in senders:
            up(node, MessageKind.VIEW, catalogue.view_bytes)
        phase += 1
        for _ in senders:
            trace.add_op(CONTROLLER, "extract", phase)
        trace.add_op(CONTROLLER, "pool", phase)
        trace.add_op(CONTROLLER, "head", phase)
        phase += 1
        down(MessageKind.FINAL_PREDICTION, catalogue.prediction_bytes)
    elif scheme is SchemeId.EI:
        for node in nodes:
            trace.add_op(node, "extract", phase)
            trace.add_op(node, "head", phase)
            up(node, MessageKind.LOCAL_PREDICTION, catalogue.prediction_bytes)
        phase += 1
        trace.add_op(CONTROLLER, "consensus", phase)
        phase += 1
        down(MessageKind.FINAL_PREDICTION, catalogue.prediction_bytes)
    elif scheme is SchemeId.SEI_E:
        for node in nodes:
            trace.add_op(node, "extract", phase)
            up(node, MessageKind.EMBEDDING, catalogue.embedding_bytes)
        phase += 1
        down(MessageKind.CONTEXT, catalogue.embedding_bytes, Phase.CONTEXT)
        phase += 1
        for node in senders:
            trace.add_op(node, "head", phase)
            up(node, MessageKind.LOCAL_PREDICTION, catalogue.prediction_bytes)
        phase += 1
        trace.add_op(CONTROLLER, "pool", phase)
        if v:
            trace.add_op(CONTROLLER, "consensus", phase)
            phase += 1
            down(MessageKind.FINAL_PREDICTION, catalogue.prediction_bytes)
    elif scheme is SchemeId.SEI_CH:
        for node in nodes:
            trace.add_op(node, "hist", phase)
            up(node, MessageKind.HISTOGRAM, catalogue.histogram_bytes)
        phase += 1
        trace.add_op(CONTROLLER, "havg", phase)
        down(MessageKind.CONTEXT, catalogue.histogram_bytes, Phase.CONTEXT)
        phase += 1
        for node in senders:
            trace.add_op(node, "extract", phase)
            trace.add_op(node, "head", phase)
            up(node, MessageKind.LOCAL_PREDICTION, catalogue.prediction_bytes)
        phase += 1
        trace.add_op(CONTROLLER, "consensus", phase)
        phase += 1
        down(MessageKind.FINAL_PREDICTION, catalogue.prediction_bytes)
    else:
        raise ValueError(f"unknown scheme {scheme}")
    return trace
