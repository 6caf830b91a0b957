"""Per-node DMRF decision logic.

Covers the detection pipeline (faulty / congested / void), the slack-ratio
thresholds and rate bands, next-hop selection, jump-target sampling from
learned success ratios, and feedback-driven table adjustment.

Each node's state lives in a RoutingTable owned by exactly one simulation
run; the engine serializes all calls.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .model import (
    CandidateEntry,
    Confidence,
    FeedbackKind,
    FeedbackMessage,
    NodeId,
    NodeState,
    Packet,
    RateClass,
    legal_transition,
    remaining_time,
)
from .topology import FCS, Topology, UNREACHABLE, build_fcs, shortest_delay_map

#: omega is clamped into (OMEGA_FLOOR, 1] so the band ordering never inverts
OMEGA_FLOOR = 1e-3

_DEAD = (NodeState.FAULTY, NodeState.JFAULTY)
_CONGESTED = (NodeState.CONG, NodeState.JCONG)
#: cached states that disqualify a candidate from receiving traffic
KNOWN_BAD = (
    NodeState.FAULTY,
    NodeState.JFAULTY,
    NodeState.CONG,
    NodeState.JCONG,
    NodeState.VOID,
)

#: states in which a node stops hop-by-hop forwarding entirely
JUMP_STATES = (NodeState.JFAULTY, NodeState.VOID, NodeState.JCONG)


class NoRouteError(Exception):
    """Raised when thresholds are requested for an unreachable sink."""


class DropReason(Enum):
    EXPIRED = "EXPIRED"
    NO_ROUTE = "NO_ROUTE"


@dataclass
class Forward:
    next: NodeId
    rate: RateClass


@dataclass
class Jump:
    next: NodeId


@dataclass
class Drop:
    reason: DropReason


Decision = Forward | Jump | Drop


@dataclass
class Thresholds:
    theta_low: float
    theta_high: float
    theta_jump: float
    omega: float


@dataclass
class RoutingTable:
    """A node's routing memory: candidate entries, cached peer states,
    learned jump statistics, and its own detection state."""

    owner: NodeId
    fcs: FCS
    entries: dict[NodeId, CandidateEntry]
    theta_jump: float
    needed_time: float
    sink_in_range: bool
    state: NodeState = NodeState.NORMAL
    own_congested: bool = False
    upstream: NodeId | None = None
    jump_ids: list[NodeId] | None = None  # materialized on first jump
    last_feedback_seen: dict[NodeId, tuple[FeedbackKind, float]] = field(
        default_factory=dict
    )
    transition_log: list[tuple[float, NodeState, NodeState]] = field(
        default_factory=list
    )


def compute_lambda(remaining: float, needed: float) -> float:
    """Slack ratio: remaining lifetime over estimated time still needed.

    Expired packets clamp to 0, which lands in the jump/drop band.
    """
    if needed <= 0:
        raise ValueError(f"estimated needed time must be positive, got {needed}")
    if remaining <= 0:
        return 0.0
    return remaining / needed


def compute_thresholds(
    theta_jump: float,
    needed_time: float,
    max_fcs_delay: float,
    max_next_hop_delay: float,
    mu: float,
    remaining: float,
) -> Thresholds:
    """Band boundaries for the slack ratio.

    omega shrinks as the packet's remaining lifetime approaches the next-hop
    delay, widening the urgent bands; it is clamped into (OMEGA_FLOOR, 1] so
    theta_low > theta_high always holds.
    """
    if needed_time == UNREACHABLE:
        raise NoRouteError("sink unreachable, thresholds undefined")
    if needed_time <= 0:
        raise ValueError("needed_time must be positive")
    omega = (remaining - max_next_hop_delay) / needed_time
    omega = min(1.0, max(OMEGA_FLOOR, omega))
    theta_high = theta_jump + max_fcs_delay / needed_time
    theta_low = theta_high / omega + mu / needed_time
    return Thresholds(
        theta_low=theta_low,
        theta_high=theta_high,
        theta_jump=theta_jump,
        omega=omega,
    )


def classify_rate(lam: float, thresholds: Thresholds) -> RateClass:
    """Rate band for a slack ratio already known to exceed theta_jump."""
    if lam >= thresholds.theta_low:
        return RateClass.LOW
    if lam >= thresholds.theta_high:
        return RateClass.MEDIUM
    return RateClass.HIGH


def pin_rate_continuity(previous: RateClass, computed: RateClass) -> RateClass:
    """A packet never swings LOW<->HIGH in a single hop."""
    swing = {previous, computed} == {RateClass.LOW, RateClass.HIGH}
    return RateClass.MEDIUM if swing else computed


def jump_probabilities(entries: list[CandidateEntry]) -> list[CandidateEntry]:
    """Normalize success ratios into jump probabilities; uniform when no
    candidate has any recorded success mass."""
    total = sum(e.suc for e in entries)
    if total <= 0.0:
        uniform = 1.0 / len(entries)
        for e in entries:
            e.jump_p = uniform
    else:
        for e in entries:
            e.jump_p = e.suc / total
    return entries


def choose_jump_target(
    entries: list[CandidateEntry],
    rng: random.Random,
    sink: NodeId,
    sink_in_range: bool,
) -> NodeId | None:
    """Sample a jump target proportional to jump probability.

    Candidates cached in any known-bad state are excluded and the remaining
    probabilities renormalized. With nothing left, fall back to direct
    transmission to the sink when it is inside the maximum range.
    """
    viable = [e for e in entries if e.cached_state not in KNOWN_BAD]
    if not viable:
        return sink if sink_in_range else None
    jump_probabilities(viable)
    r = rng.random()
    acc = 0.0
    for e in viable:
        acc += e.jump_p
        if r < acc:
            return e.candidate
    return viable[-1].candidate  # guard against float shortfall


class DmrfProtocol:
    """The protocol brain: pure decision logic over RoutingTables.

    Bound to one (full) topology per run; the engine owns event timing,
    buffers, and feedback transport.
    """

    def __init__(
        self,
        topo: Topology,
        mu: float,
        theta_jump: float = 0.2,
        theta_cong: float = 0.8,
        cong_horizon_ms: float = 5.0,
        cong_hysteresis: float = 0.1,
        confidence_step: int = 25,
        confidence_threshold: int = 50,
        packet_bytes: int = 32,
    ) -> None:
        self.topo = topo
        self.mu = mu
        self.theta_jump = theta_jump
        self.theta_cong = theta_cong
        self.cong_horizon_ms = cong_horizon_ms
        self.cong_hysteresis = cong_hysteresis
        self.confidence_step = confidence_step
        self.confidence_threshold = confidence_threshold
        self.packet_bytes = packet_bytes

    # ------------------------------------------------------------------
    # setup

    def build_tables(self) -> dict[NodeId, RoutingTable]:
        """Initialize every non-sink node's routing memory on the deployed
        topology. Later void carving and fault onsets are deliberately not
        reflected here: staleness is discovered at runtime."""
        topo = self.topo
        needed = shortest_delay_map(topo, self.mu)
        tables: dict[NodeId, RoutingTable] = {}
        for node in topo.ids():
            if node == topo.sink:
                continue
            fcs = build_fcs(topo, node)
            entries: dict[NodeId, CandidateEntry] = {}
            for e in fcs.members:
                e.delay_est = self.mu
                e.confidence = Confidence(threshold=self.confidence_threshold)
                entries[e.candidate] = e
            table = RoutingTable(
                owner=node,
                fcs=fcs,
                entries=entries,
                theta_jump=self.theta_jump,
                needed_time=needed[node],
                sink_in_range=topo.distance(node, topo.sink)
                <= topo.max_tx_distance,
            )
            if not fcs.members:
                # a node born without forward candidates is void from the start
                table.state = NodeState.VOID
                table.transition_log.append((0.0, NodeState.NORMAL, NodeState.VOID))
            tables[node] = table
        return tables

    def ensure_jump_entries(self, table: RoutingTable) -> None:
        """Materialize the long-range candidate pool on first use.

        Built from the initialization-time topology, so it may contain nodes
        that have since failed or been carved out; those are weeded out by
        the success statistics, never by oracle knowledge.
        """
        if table.jump_ids is not None:
            return
        topo = self.topo
        owner = table.owner
        d_self = topo.distance(owner, topo.sink)
        ids = []
        for other in topo.ids():
            if other == owner:
                continue
            if topo.distance(owner, other) > topo.max_tx_distance:
                continue
            if topo.distance(other, topo.sink) >= d_self:
                continue
            ids.append(other)
            if other not in table.entries:
                table.entries[other] = CandidateEntry(
                    candidate=other,
                    delay_est=self.mu,
                    confidence=Confidence(threshold=self.confidence_threshold),
                )
        table.jump_ids = ids
        if ids:
            jump_probabilities([table.entries[i] for i in ids])

    # ------------------------------------------------------------------
    # detection pipeline

    def detect_faulty(
        self,
        table: RoutingTable,
        probe_results: dict[NodeId, bool],
        now: float,
        delay_samples: dict[NodeId, float] | None = None,
        state_reports: dict[NodeId, NodeState] | None = None,
    ) -> list[FeedbackMessage]:
        """Account one probe round: silent candidates lose confidence and
        eventually get cached FAULTY; responders reset to full trust and
        refresh their delay estimate.

        A probe reply carries the replier's own state, so the cached state
        of a responder is whatever it reported rather than a guess.
        """
        for cand in sorted(probe_results):
            entry = table.entries.get(cand)
            if entry is None:
                continue
            if probe_results[cand]:
                entry.confidence.reset()
                if state_reports and cand in state_reports:
                    entry.cached_state = state_reports[cand]
                elif entry.cached_state is NodeState.FAULTY:
                    entry.cached_state = NodeState.NORMAL
                if delay_samples and cand in delay_samples:
                    entry.delay_est = 0.7 * entry.delay_est + 0.3 * delay_samples[cand]
            else:
                entry.confidence.penalize(self.confidence_step)
                if entry.confidence.faulty:
                    entry.cached_state = NodeState.FAULTY
        return self._reevaluate(table, now)

    def detect_congestion(
        self,
        table: RoutingTable,
        buffer_used: float,
        buffer_capacity: float,
        arrival_rate_ewma: float,
        now: float,
    ) -> list[FeedbackMessage]:
        """Predictive occupancy check with hysteresis on the way down."""
        if buffer_capacity <= 0:
            raise ValueError("buffer_capacity must be positive")
        occupancy = buffer_used / buffer_capacity
        predicted = occupancy + (
            arrival_rate_ewma * self.cong_horizon_ms * self.packet_bytes
        ) / buffer_capacity
        if not table.own_congested and predicted >= self.theta_cong:
            table.own_congested = True
        elif table.own_congested and predicted < self.theta_cong - self.cong_hysteresis:
            table.own_congested = False
        return self._reevaluate(table, now)

    def detect_void(self, table: RoutingTable, now: float) -> list[FeedbackMessage]:
        return self._reevaluate(table, now)

    def _reevaluate(self, table: RoutingTable, now: float) -> list[FeedbackMessage]:
        """Derive the node's state from its own buffer flag and the cached
        candidate states, emitting feedback on every transition."""
        states = [e.cached_state for e in table.fcs.members]
        if not states or all(s is NodeState.VOID for s in states):
            target = NodeState.VOID
        elif all(s in _DEAD for s in states):
            target = NodeState.JFAULTY
        elif all(s in _CONGESTED for s in states):
            target = NodeState.JCONG
        elif table.own_congested:
            target = NodeState.CONG
        else:
            target = NodeState.NORMAL
        if target is table.state:
            return []
        # entering CONG is only legal from NORMAL or JCONG; a node whose
        # candidates just healed while its own buffer is hot recovers first
        if target is NodeState.CONG and table.state not in (
            NodeState.NORMAL,
            NodeState.JCONG,
        ):
            steps = [NodeState.NORMAL, NodeState.CONG]
        else:
            steps = [target]
        kinds = {
            NodeState.JFAULTY: FeedbackKind.FAULT,
            NodeState.VOID: FeedbackKind.VOID,
            NodeState.JCONG: FeedbackKind.CONG,
            NodeState.CONG: FeedbackKind.CONG,
            NodeState.NORMAL: FeedbackKind.RECOVER,
        }
        messages = []
        for nxt in steps:
            if nxt is table.state:
                continue
            assert legal_transition(table.state, nxt, states), (
                f"illegal transition {table.state} -> {nxt} at node {table.owner}"
            )
            table.transition_log.append((now, table.state, nxt))
            table.state = nxt
            messages.append(
                FeedbackMessage(
                    kind=kinds[nxt], origin=table.owner, subject=table.owner
                )
            )
        return messages

    # ------------------------------------------------------------------
    # forwarding decisions

    def select_next_hop(
        self,
        table: RoutingTable,
        packet: Packet,
        now: float,
        rng: random.Random,
    ) -> Decision:
        remaining = remaining_time(packet, now)
        if remaining <= 0:
            return Drop(DropReason.EXPIRED)
        if table.state in JUMP_STATES:
            return self._jump(table, rng)
        if table.needed_time == UNREACHABLE:
            return self._jump(table, rng)
        members = table.fcs.members
        if not members:
            return self._jump(table, rng)
        lam = compute_lambda(remaining, table.needed_time)
        max_fcs_delay = max(e.delay_est for e in members)
        thresholds = compute_thresholds(
            table.theta_jump,
            table.needed_time,
            max_fcs_delay,
            max_fcs_delay,
            self.mu,
            remaining,
        )
        if lam <= thresholds.theta_jump:
            return self._jump(table, rng)
        rate = pin_rate_continuity(packet.rate_class, classify_rate(lam, thresholds))
        eligible = [
            e
            for e in members
            if e.cached_state is NodeState.NORMAL and e.delay_est <= remaining
        ]
        if not eligible:
            return self._jump(table, rng)
        # least-used first, then the slowest feasible link: fast links are
        # held in reserve for packets that will actually need them
        best = min(eligible, key=lambda e: (e.tx_count, -e.delay_est, e.candidate))
        return Forward(next=best.candidate, rate=rate)

    def _jump(self, table: RoutingTable, rng: random.Random) -> Decision:
        self.ensure_jump_entries(table)
        entries = [table.entries[i] for i in table.jump_ids]
        target = choose_jump_target(
            entries, rng, sink=self.topo.sink, sink_in_range=table.sink_in_range
        )
        if target is None:
            return Drop(DropReason.NO_ROUTE)
        return Jump(next=target)

    # ------------------------------------------------------------------
    # transmission outcomes and feedback

    def on_forward_result(
        self, table: RoutingTable, target: NodeId, success: bool, now: float
    ) -> list[FeedbackMessage]:
        """Data-transmission acknowledgment outcome for a hop-by-hop hop.

        Failures erode confidence exactly like missed probes; the candidate
        in active use is usually found FAULTY well before the prober is.
        """
        entry = table.entries[target]
        if success:
            entry.confidence.reset()
            if entry.cached_state is NodeState.FAULTY:
                entry.cached_state = NodeState.NORMAL
            return []
        entry.confidence.penalize(self.confidence_step)
        if entry.confidence.faulty:
            entry.cached_state = NodeState.FAULTY
        return self._reevaluate(table, now)

    def on_jump_result(
        self, table: RoutingTable, target: NodeId, success: bool, now: float
    ) -> list[FeedbackMessage]:
        """Update jump statistics after an acknowledged (or timed-out) jump.

        The failed attempt is counted before the penalty ratio is taken, so
        successes never exceed attempts.
        """
        entry = table.entries[target]
        entry.attempts += 1
        feedbacks: list[FeedbackMessage] = []
        if success:
            entry.successes += 1
            entry.suc = entry.successes / entry.attempts
            entry.confidence.reset()
            if entry.cached_state is NodeState.FAULTY:
                entry.cached_state = NodeState.NORMAL
        else:
            entry.suc = max(0, entry.successes - 1) / entry.attempts
            entry.confidence.penalize(self.confidence_step)
            if entry.confidence.faulty:
                entry.cached_state = NodeState.FAULTY
            feedbacks.append(
                FeedbackMessage(
                    kind=FeedbackKind.JUMP_FAIL, origin=table.owner, subject=target
                )
            )
            feedbacks.extend(self._reevaluate(table, now))
        if table.jump_ids is not None:
            jump_probabilities([table.entries[i] for i in table.jump_ids])
        return feedbacks

    def on_feedback(
        self,
        table: RoutingTable,
        msg: FeedbackMessage,
        from_node: NodeId,
        now: float,
        rng: random.Random,
    ) -> tuple[FeedbackMessage | None, list[FeedbackMessage]]:
        """Apply an upstream control message.

        Returns (message to re-forward upstream or None, fresh feedback from
        any state change the update triggered).
        """
        table.last_feedback_seen[msg.subject] = (msg.kind, now)
        if msg.kind is FeedbackKind.JUMP_FAIL:
            # distrust the direction the bad news came from
            entry = table.entries.get(from_node)
            if entry is not None:
                entry.suc *= rng.random()
                pool = (
                    [table.entries[i] for i in table.jump_ids]
                    if table.jump_ids is not None
                    else [e for e in table.fcs.members]
                )
                if pool:
                    jump_probabilities(pool)
            if msg.hop_limit > 1:
                return (
                    FeedbackMessage(
                        kind=msg.kind,
                        origin=msg.origin,
                        subject=msg.subject,
                        hop_limit=msg.hop_limit - 1,
                    ),
                    [],
                )
            return None, []
        entry = table.entries.get(msg.subject)
        if entry is not None:
            # every non-jump kind is self-reported by the subject, which is
            # proof of life; latest report wins
            entry.cached_state = {
                FeedbackKind.FAULT: NodeState.FAULTY,
                FeedbackKind.CONG: NodeState.CONG,
                FeedbackKind.RECOVER: NodeState.NORMAL,
                FeedbackKind.VOID: NodeState.VOID,
            }[msg.kind]
        return None, self._reevaluate(table, now)
