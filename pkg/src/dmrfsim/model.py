"""Shared domain vocabulary: node/packet/state types, legal state
transitions, and packet lifetime arithmetic.

All types are plain values; mutation happens only inside the single-threaded
engine loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

NodeId = int


class NodeState(Enum):
    NORMAL = "NORMAL"
    FAULTY = "FAULTY"
    JFAULTY = "JFAULTY"
    CONG = "CONG"
    JCONG = "JCONG"
    VOID = "VOID"


class RateClass(Enum):
    LOW = "LOW"
    MEDIUM = "MEDIUM"
    HIGH = "HIGH"


class PacketMode(Enum):
    HOP_BY_HOP = "HOP_BY_HOP"
    JUMP = "JUMP"


class FeedbackKind(Enum):
    FAULT = "FAULT"
    CONG = "CONG"
    RECOVER = "RECOVER"
    VOID = "VOID"
    JUMP_FAIL = "JUMP_FAIL"


@dataclass
class Packet:
    """The unit of delivery.

    Times are absolute simulation milliseconds; deadline is absolute, not a
    remaining budget.
    """

    id: int
    source: NodeId
    size_bits: int
    created_at: float
    deadline: float
    rate_class: RateClass = RateClass.LOW
    hop_trace: list[NodeId] = field(default_factory=list)
    mode: PacketMode = PacketMode.HOP_BY_HOP


@dataclass
class Confidence:
    """Per-candidate reliability counter.

    c only ever moves down in steps (missed probe / failed transmission)
    until an explicit reset on any successful reply.
    """

    c: int = 100
    threshold: int = 50

    def penalize(self, step: int) -> None:
        self.c = max(0, self.c - step)

    def reset(self) -> None:
        self.c = 100

    @property
    def faulty(self) -> bool:
        # strict comparison: 100 -> 75 -> 50 is still trusted at f=50
        return self.c < self.threshold


@dataclass
class CandidateEntry:
    """Per-candidate routing statistics kept by the owning node."""

    candidate: NodeId
    attempts: int = 0
    successes: int = 0
    suc: float = 1.0  # optimistic prior: fresh candidates get probability mass
    jump_p: float = 0.0
    delay_est: float = 0.0
    cached_state: NodeState = NodeState.NORMAL
    tx_count: int = 0
    confidence: Confidence = field(default_factory=Confidence)


@dataclass
class FeedbackMessage:
    """Typed upstream control message; counted as a control packet."""

    kind: FeedbackKind
    origin: NodeId
    subject: NodeId
    hop_limit: int = 64


def make_packet(
    source: NodeId,
    size_bits: int,
    now: float,
    lifetime: float,
    packet_id: int = 0,
) -> Packet:
    """Create a packet with an absolute deadline of now + lifetime."""
    if lifetime <= 0:
        raise ValueError(f"packet lifetime must be positive, got {lifetime}")
    return Packet(
        id=packet_id,
        source=source,
        size_bits=size_bits,
        created_at=now,
        deadline=now + lifetime,
        rate_class=RateClass.LOW,
        hop_trace=[source],
        mode=PacketMode.HOP_BY_HOP,
    )


def remaining_time(packet: Packet, now: float) -> float:
    """Remaining lifetime L; negative means the packet has expired."""
    return packet.deadline - now


_DEAD_STATES = (NodeState.FAULTY, NodeState.JFAULTY)
_CONG_STATES = (NodeState.CONG, NodeState.JCONG)


def legal_transition(
    from_state: NodeState,
    to_state: NodeState,
    fcs_states: list[NodeState],
) -> bool:
    """Whether a node may move from one state to another given the cached
    states of its forwarding candidates.

    Propagated states (JFAULTY / JCONG / VOID) are reachable only when the
    whole candidate set justifies them, and are left only when it no longer
    does. FAULTY models a crashed node: reachable from anywhere, terminal.
    """
    if to_state is from_state:
        return True
    if to_state is NodeState.FAULTY:
        return True
    if from_state is NodeState.FAULTY:
        return False
    if to_state is NodeState.JFAULTY:
        return bool(fcs_states) and all(s in _DEAD_STATES for s in fcs_states)
    if to_state is NodeState.JCONG:
        return bool(fcs_states) and all(s in _CONG_STATES for s in fcs_states)
    if to_state is NodeState.VOID:
        return not fcs_states or all(s is NodeState.VOID for s in fcs_states)
    if to_state is NodeState.CONG:
        return from_state in (NodeState.NORMAL, NodeState.JCONG)
    if to_state is NodeState.NORMAL:
        if from_state is NodeState.CONG:
            return True
        if from_state is NodeState.JCONG:
            return not all(s in _CONG_STATES for s in fcs_states)
        if from_state is NodeState.JFAULTY:
            return not all(s in _DEAD_STATES for s in fcs_states)
        if from_state is NodeState.VOID:
            return bool(fcs_states) and not all(
                s is NodeState.VOID for s in fcs_states
            )
    return False
