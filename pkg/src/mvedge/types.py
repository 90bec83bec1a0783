"""Shared domain vocabulary: nodes, time periods, views, contexts, messages.

Everything here is an immutable value object; scheme logic and accounting
live in the other modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import numpy as np

from .errors import DimensionMismatch, DuplicateNode, EmptyCollection

# Source nodes are indexed 0..V-1; the central controller uses a sentinel
# outside that range.
NodeId = int
TimePeriod = int
CONTROLLER: NodeId = -1

# Intermediate representations are plain float64 arrays: a 1-D vector for
# embeddings, a (B, B) matrix for color histograms.
Embedding = np.ndarray
ColorHistogram = np.ndarray


@dataclass(frozen=True)
class ScenarioParams:
    """Wire-level scenario parameters.

    Defaults reproduce the reference deployment: 224x224 RGB views, a
    25,088-dimensional embedding, 32x32-bin chroma histograms and 40
    classes. Transmitted tensors are serialized as float32, predictions
    as a single byte (hence the 256-class ceiling).
    """

    width: int = 224
    height: int = 224
    embedding_dim: int = 25088
    bins: int = 32
    classes: int = 40

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("view dimensions must be positive")
        if self.embedding_dim < 1 or self.bins < 1:
            raise ValueError("embedding_dim and bins must be positive")
        if not 2 <= self.classes <= 256:
            raise ValueError("classes must be in [2, 256] for 1-byte predictions")


@dataclass(frozen=True)
class View:
    """One RGB raster captured by a source node in one time period.

    ``tag`` optionally records (instance_id, view_index) provenance so the
    precomputed-embedding backend can resolve stored vectors.
    """

    pixels: np.ndarray  # (height, width, 3) uint8, row-major
    node: NodeId = 0
    period: TimePeriod = 0
    tag: Optional[tuple[str, int]] = None

    def __post_init__(self) -> None:
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.ndim != 3 or px.shape[2] != 3:
            raise DimensionMismatch("view pixels must be a (H, W, 3) array")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DimensionMismatch("view must contain at least one pixel")
        if px.dtype != np.uint8:
            raise DimensionMismatch("view pixels must be 8-bit per channel")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


class ContextKind(Enum):
    EMPTY = "empty"
    EMBEDDING = "embedding"
    HISTOGRAM = "histogram"


@dataclass(frozen=True)
class Context:
    """Per-period broadcast summary: a pooled embedding, an average
    histogram, or nothing (bootstrap)."""

    kind: ContextKind
    data: Optional[np.ndarray] = None

    @staticmethod
    def of_embedding(e: Embedding) -> "Context":
        return Context(ContextKind.EMBEDDING, np.asarray(e, dtype=np.float64))

    @staticmethod
    def of_histogram(h: ColorHistogram) -> "Context":
        return Context(ContextKind.HISTOGRAM, np.asarray(h, dtype=np.float64))

    @property
    def is_empty(self) -> bool:
        return self.kind is ContextKind.EMPTY


EMPTY_CONTEXT = Context(ContextKind.EMPTY)


class MessageKind(Enum):
    VIEW = "view"
    EMBEDDING = "embedding"
    HISTOGRAM = "histogram"
    CONTEXT = "context"
    LOCAL_PREDICTION = "local_prediction"
    FINAL_PREDICTION = "final_prediction"


class Phase(Enum):
    CONTEXT = "context-dissemination"
    UPSTREAM = "upstream"
    DOWNSTREAM = "downstream"


@dataclass(frozen=True)
class Message:
    """One application-layer message with its payload size in bytes."""

    sender: NodeId
    receiver: NodeId
    kind: MessageKind
    payload_bytes: int
    period: TimePeriod = 0


@dataclass(frozen=True)
class TraceEntry:
    message: Message
    phase: Phase
    phase_index: int


@dataclass(frozen=True)
class ComputeOp:
    """A compute stage executed at a node during one phase of a round.

    Stage tags: "extract", "head", "pool", "hist", "havg", "consensus".
    """

    node: NodeId
    stage: str
    phase_index: int


@dataclass
class MessageTrace:
    """Ordered, append-only record of one inference round.

    Messages carry a phase tag plus an explicit phase index; compute ops
    are recorded with the phase they execute in so the latency and FLOP
    models can replay the round.
    """

    entries: list[TraceEntry] = field(default_factory=list)
    ops: list[ComputeOp] = field(default_factory=list)

    def add(self, message: Message, phase: Phase, phase_index: int) -> None:
        self.entries.append(TraceEntry(message, phase, phase_index))

    def add_op(self, node: NodeId, stage: str, phase_index: int) -> None:
        self.ops.append(ComputeOp(node, stage, phase_index))

    @property
    def messages(self) -> list[Message]:
        return [e.message for e in self.entries]

    def kinds(self) -> set[MessageKind]:
        return {e.message.kind for e in self.entries}

    def payload_total(self, kind: Optional[MessageKind] = None) -> int:
        return sum(
            e.message.payload_bytes
            for e in self.entries
            if kind is None or e.message.kind is kind
        )

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TraceEntry]:
        return iter(self.entries)


@dataclass(frozen=True)
class MultiViewInstance:
    """Views of one object captured across nodes in one time period.

    ``context_views`` holds the held-out views used to derive the
    previous-period context for the embedding-based selective schemes.
    """

    instance_id: str
    true_label: int
    views: tuple[tuple[NodeId, View], ...]
    context_views: tuple[View, ...] = ()


def validate_instance(
    instance: MultiViewInstance, params: ScenarioParams
) -> MultiViewInstance:
    """Check instance invariants against the scenario; return it unchanged.

    Raises EmptyCollection, DuplicateNode, or DimensionMismatch.
    """
    if not instance.views:
        raise EmptyCollection(f"instance {instance.instance_id} has no views")
    seen: set[NodeId] = set()
    for node, view in instance.views:
        if node in seen:
            raise DuplicateNode(f"node {node} appears twice")
        seen.add(node)
        if (view.height, view.width) != (params.height, params.width):
            raise DimensionMismatch(
                f"view is {view.width}x{view.height}, "
                f"scenario expects {params.width}x{params.height}"
            )
    if not 0 <= instance.true_label < params.classes:
        raise DimensionMismatch(
            f"label {instance.true_label} out of range for {params.classes} classes"
        )
    return instance


def encode_prediction(label: int, classes: int) -> bytes:
    """Serialize a class label as the single byte sent on the wire."""
    if not 2 <= classes <= 256:
        raise ValueError("classes must be in [2, 256]")
    if not 0 <= label < classes:
        raise ValueError(f"label {label} out of range [0, {classes})")
    return bytes([label])


def decode_prediction(data: bytes) -> int:
    if len(data) != 1:
        raise ValueError("prediction messages are exactly one byte")
    return data[0]
