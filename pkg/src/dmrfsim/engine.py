"""Deterministic discrete-event simulation core.

One heap, one RNG, seven event kinds. Data transmissions occupy a node's
single radio server; control traffic (probes, acknowledgments, feedback) is
modeled as instantaneous on the data plane but is fully charged for energy
and counted. All per-run randomness flows through a single seeded generator
and every iteration order is fixed, so equal seeds give equal runs bit for
bit.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from heapq import heappop, heappush

from . import baselines
from .config import CONTROL_FRAME_BITS, DMRF, ScenarioConfig
from .model import (
    FeedbackKind,
    FeedbackMessage,
    NodeId,
    NodeState,
    Packet,
    PacketMode,
    RateClass,
    make_packet,
)
from .protocol import (
    Decision,
    DmrfProtocol,
    Drop,
    DropReason,
    Forward,
    Jump,
    RoutingTable,
)
from .topology import Topology, build_fcs, carve_void

PACKET_ARRIVAL = 0
PACKET_INJECT = 1
PROBE = 2
PROBE_TIMEOUT = 3
FEEDBACK_DELIVERY = 4
FAULT_ONSET = 5
DEADLINE_CHECK = 6

EVENT_KINDS = (
    "PACKET_ARRIVAL",
    "PACKET_INJECT",
    "PROBE",
    "PROBE_TIMEOUT",
    "FEEDBACK_DELIVERY",
    "FAULT_ONSET",
    "DEADLINE_CHECK",
)

DELIVERED = "DELIVERED"
EXPIRED = "EXPIRED"
DROPPED_NO_ROUTE = "DROPPED_NO_ROUTE"
BUFFER_DROP = "BUFFER_DROP"


@dataclass(frozen=True)
class Event:
    """A dispatched event, as exposed in traces."""

    time: float
    seq: int
    kind: str
    node: NodeId | None = None
    packet: int | None = None


@dataclass
class RadioModel:
    """First-order radio: service time is a truncated normal around the
    packet serialization delay, energy follows the classic distance-squared
    amplifier model."""

    bandwidth_bits_per_ms: float
    mu: float
    sigma: float
    max_tx_distance: float
    e_elec_j_per_bit: float
    e_amp_j_per_bit_m2: float


def radio_from_config(cfg: ScenarioConfig) -> RadioModel:
    mu = cfg.mean_hop_delay_ms
    return RadioModel(
        bandwidth_bits_per_ms=cfg.bandwidth_kbps,
        mu=mu,
        sigma=cfg.sigma_factor * mu,
        max_tx_distance=cfg.max_tx_distance,
        e_elec_j_per_bit=cfg.energy_elec_j_per_bit,
        e_amp_j_per_bit_m2=cfg.energy_amp_j_per_bit_m2,
    )


def sample_delay(radio: RadioModel, rng: random.Random) -> float:
    """One transmission delay; resamples the far-left normal tail so the
    delay can never be non-positive or absurdly small."""
    floor = radio.mu / 10.0
    while True:
        value = rng.normalvariate(radio.mu, radio.sigma)
        if value >= floor:
            return value


def energy_cost(radio: RadioModel, distance: float, bits: float) -> float:
    """Joules to push `bits` over `distance` meters."""
    if distance > radio.max_tx_distance:
        raise ValueError(
            f"distance {distance} exceeds maximum range {radio.max_tx_distance}"
        )
    return bits * (radio.e_elec_j_per_bit + radio.e_amp_j_per_bit_m2 * distance**2)


def inject_faults(
    topo: Topology, fault_ratio: float, rng: random.Random
) -> list[tuple[NodeId, float]]:
    """Pick floor(ratio * (N – 2)) victims uniformly among the relay nodes.

    Source and sink are never faulted. All onsets are at time zero and the
    victims fail silently: nothing in the network is told.
    """
    if not 0.0 <= fault_ratio <= 1.0:
        raise ValueError(f"fault_ratio must be in [0, 1], got {fault_ratio}")
    candidates = [n for n in topo.ids() if n not in (topo.source, topo.sink)]
    count = math.floor(fault_ratio * len(candidates))
    return [(node, 0.0) for node in sorted(rng.sample(candidates, count))]


def preload_buffers(
    topo: Topology, fill_ratio: float, buffer_bytes: int
) -> dict[NodeId, float]:
    """Standing background occupancy for every relay buffer.

    The preload represents competing traffic held by other flows; it never
    drains during the run.
    """
    if not 0.0 <= fill_ratio <= 1.0:
        raise ValueError(f"fill_ratio must be in [0, 1], got {fill_ratio}")
    return {
        n: fill_ratio * buffer_bytes
        for n in topo.ids()
        if n not in (topo.source, topo.sink)
    }


@dataclass
class MetricsRecord:
    """End-of-run counters. Every injected packet lands in exactly one of
    the four outcome buckets."""

    injected: int = 0
    delivered: int = 0
    expired: int = 0
    dropped_no_route: int = 0
    buffer_drops: int = 0
    control_packets: int = 0
    mean_delay_ms: float = 0.0
    p95_delay_ms: float = 0.0
    energy_total_j: float = 0.0
    per_node_tx: dict[NodeId, int] = field(default_factory=dict)

    @property
    def terminal_total(self) -> int:
        return self.delivered + self.expired + self.dropped_no_route + self.buffer_drops


@dataclass
class PacketOutcome:
    packet_id: int
    outcome: str
    created_at: float
    finished_at: float
    hop_trace: list[NodeId]

    @property
    def delay_ms(self) -> float:
        return self.finished_at - self.created_at


@dataclass
class RunResult:
    metrics: MetricsRecord
    packets: list[PacketOutcome]
    transitions: list[tuple[float, NodeId, NodeState, NodeState]]
    trace: list[Event] | None = None


class _NodeRuntime:
    __slots__ = (
        "id",
        "alive",
        "is_source",
        "is_sink",
        "table",
        "static_candidates",
        "relay_queue",
        "app_queue",
        "buffer_used",
        "busy",
        "pending",
        "upstream",
        "arrival_ewma",
        "last_arrival",
        "cong_notified",
    )

    def __init__(self, node_id: NodeId, is_source: bool, is_sink: bool) -> None:
        self.id = node_id
        self.alive = True
        self.is_source = is_source
        self.is_sink = is_sink
        self.table: RoutingTable | None = None
        self.static_candidates: list[tuple[NodeId, float]] = []
        self.relay_queue: deque[Packet] = deque()
        self.app_queue: deque[Packet] = deque()
        self.buffer_used = 0.0
        self.busy = False
        self.pending: tuple[Packet, NodeId, bool] | None = None
        self.upstream: NodeId | None = None
        self.arrival_ewma = 0.0
        self.last_arrival: float | None = None
        self.cong_notified: set[NodeId] = set()


class Simulation:
    """One seeded run of one protocol over one topology."""

    def __init__(
        self,
        topo: Topology,
        protocol: str,
        scenario: ScenarioConfig,
        seed: int,
        collect_trace: bool = False,
    ) -> None:
        self.topo = topo
        self.protocol_name = protocol
        self.cfg = scenario
        self.rng = random.Random(seed)
        self.radio = radio_from_config(scenario)
        self.collect_trace = collect_trace
        self.trace: list[Event] | None = [] if collect_trace else None

        self._heap: list[tuple[float, int, int, object, object]] = []
        self._seq = 0
        self.now = 0.0

        self.rate_mult = {
            RateClass.LOW: scenario.rate_multipliers["low"],
            RateClass.MEDIUM: scenario.rate_multipliers["medium"],
            RateClass.HIGH: scenario.rate_multipliers["high"],
        }

        self.metrics = MetricsRecord()
        self.outcomes: list[PacketOutcome] = []
        self.transitions: list[tuple[float, NodeId, NodeState, NodeState]] = []
        self._delays: list[float] = []
        self._tx: dict[NodeId, int] = {}
        # packet id -> ("APP"|"QUEUED"|"FLIGHT"|"DONE", node id)
        self._status: dict[int, tuple[str, NodeId]] = {}
        self._terminal = 0

        self.dmrf: DmrfProtocol | None = None
        if protocol == DMRF:
            self.dmrf = DmrfProtocol(
                topo,
                mu=self.radio.mu,
                theta_jump=scenario.theta_jump,
                theta_cong=scenario.theta_cong,
                cong_horizon_ms=scenario.cong_horizon_ms,
                cong_hysteresis=scenario.cong_hysteresis,
                confidence_step=scenario.confidence_step,
                confidence_threshold=scenario.confidence_threshold,
                packet_bytes=scenario.packet_bytes,
            )

        self.nodes: dict[NodeId, _NodeRuntime] = {}
        for nid in topo.ids():
            self.nodes[nid] = _NodeRuntime(
                nid, is_source=nid == topo.source, is_sink=nid == topo.sink
            )
        self._live: set[NodeId] = set(self.nodes)

        # routing memory is built on the full deployment; the void carved and
        # the faults injected below are discovered at runtime, not here
        if self.dmrf is not None:
            for nid, table in self.dmrf.build_tables().items():
                self.nodes[nid].table = table
                for t, old, new in table.transition_log:
                    self.transitions.append((t, nid, old, new))
        else:
            for nid in topo.ids():
                if nid == topo.sink:
                    continue
                fcs = build_fcs(topo, nid)
                self.nodes[nid].static_candidates = [
                    (e.candidate, self.radio.mu) for e in fcs.members
                ]

        preload = preload_buffers(topo, scenario.buffer_fill, scenario.buffer_bytes)
        for nid, used in preload.items():
            self.nodes[nid].buffer_used = used

        dead: set[NodeId] = set()
        if scenario.void_radius > 0:
            carved = carve_void(topo, scenario.void_center, scenario.void_radius)
            dead.update(set(topo.ids()) - set(carved.ids()))
            fault_pool = carved
        else:
            fault_pool = topo
        for nid, _onset in inject_faults(fault_pool, scenario.fault_ratio, self.rng):
            dead.add(nid)
        if dead:
            self._schedule(0.0, FAULT_ONSET, sorted(dead), None)

        if self.dmrf is not None:
            for nid in topo.ids():
                node = self.nodes[nid]
                if node.is_sink or node.table is None:
                    continue
                if node.table.fcs.members:
                    self._schedule(0.0, PROBE, nid, None)

        for i in range(scenario.packet_count):
            self._schedule(i * scenario.injection_period_ms, PACKET_INJECT, i, None)
        self._injected_target = scenario.packet_count

    # ------------------------------------------------------------------
    # plumbing

    def _schedule(self, time: float, kind: int, a: object, b: object) -> None:
        heappush(self._heap, (time, self._seq, kind, a, b))
        self._seq += 1

    def _trace_event(self, time: float, seq: int, kind: int, a: object) -> None:
        node = None
        packet = None
        if kind == PACKET_ARRIVAL:
            node = a
            runtime = self.nodes[a]
            if runtime.pending is not None:
                packet = runtime.pending[0].id
        elif kind == PACKET_INJECT:
            node = self.topo.source
            packet = a
        elif kind in (PROBE, PROBE_TIMEOUT):
            node = a
        elif kind == FEEDBACK_DELIVERY:
            node = a[2]
        elif kind == DEADLINE_CHECK:
            packet = a.id
        self.trace.append(
            Event(time=time, seq=seq, kind=EVENT_KINDS[kind], node=node, packet=packet)
        )

    def _finalize(self, packet: Packet, outcome: str, now: float) -> None:
        self._status[packet.id] = ("DONE", -1)
        self._terminal += 1
        if outcome == DELIVERED:
            self.metrics.delivered += 1
            self._delays.append(now - packet.created_at)
        elif outcome == EXPIRED:
            self.metrics.expired += 1
        elif outcome == DROPPED_NO_ROUTE:
            self.metrics.dropped_no_route += 1
        else:
            self.metrics.buffer_drops += 1
        self.outcomes.append(
            PacketOutcome(
                packet_id=packet.id,
                outcome=outcome,
                created_at=packet.created_at,
                finished_at=now,
                hop_trace=list(packet.hop_trace),
            )
        )

    def _charge_control(self, sender: NodeId, receiver: NodeId) -> None:
        distance = self.topo.distance(sender, receiver)
        self.metrics.energy_total_j += energy_cost(
            self.radio, distance, CONTROL_FRAME_BITS
        )

    def _send_feedbacks(
        self, node: _NodeRuntime, feedbacks: list[FeedbackMessage], now: float
    ) -> None:
        """Queue state-change/jump feedback to the node's upstream hop.

        Recovery is fanned out to every sender that was warned during the
        congestion episode, so nobody is left avoiding a healthy node.
        """
        table = node.table
        for fb in feedbacks:
            upstream = table.upstream if table is not None else None
            if fb.kind is FeedbackKind.RECOVER:
                dests = set(node.cong_notified)
                if upstream is not None:
                    dests.add(upstream)
                node.cong_notified.clear()
            else:
                dests = {upstream} if upstream is not None else set()
            for dest in sorted(dests):
                if not self.nodes[dest].alive:
                    continue
                self._schedule(
                    now + self.cfg.feedback_delay_ms,
                    FEEDBACK_DELIVERY,
                    (fb, node.id, dest),
                    None,
                )
                self._charge_control(node.id, dest)
                if fb.kind is FeedbackKind.CONG:
                    node.cong_notified.add(dest)

    def _record_transitions(self, table: RoutingTable, mark: int) -> int:
        for t, old, new in table.transition_log[mark:]:
            self.transitions.append((t, table.owner, old, new))
        return len(table.transition_log)

    # ------------------------------------------------------------------
    # decisions and service

    def _decide(self, node: _NodeRuntime, packet: Packet, now: float) -> Decision:
        name = self.protocol_name
        if self.dmrf is not None:
            mark = len(node.table.transition_log)
            decision = self.dmrf.select_next_hop(node.table, packet, now, self.rng)
            self._record_transitions(node.table, mark)
            return decision
        if name == baselines.GREEDY_MIN_DELAY:
            return baselines.greedy_min_delay(
                self.topo, node.id, node.static_candidates, packet, now
            )
        if name == baselines.GREEDY_MAX_RATE:
            return baselines.greedy_max_rate(
                self.topo, node.id, node.static_candidates, packet, now
            )
        return baselines.bypass_next_hop(
            self.topo, node.id, node.static_candidates, packet, now, self._live
        )

    def _try_start(self, node: _NodeRuntime, now: float, stall: float = 0.0) -> None:
        while not node.busy:
            if node.relay_queue:
                queue = node.relay_queue
            elif node.app_queue:
                queue = node.app_queue
            else:
                return
            packet = queue[0]
            decision = self._decide(node, packet, now)
            if isinstance(decision, Drop):
                queue.popleft()
                if queue is node.relay_queue:
                    node.buffer_used -= packet.size_bits / 8
                outcome = (
                    EXPIRED
                    if decision.reason is DropReason.EXPIRED
                    else DROPPED_NO_ROUTE
                )
                self._finalize(packet, outcome, now)
                stall = 0.0
                continue
            if isinstance(decision, Forward):
                target = decision.next
                is_jump = False
                packet.rate_class = decision.rate
                packet.mode = PacketMode.HOP_BY_HOP
                multiplier = self.rate_mult[decision.rate]
                if node.table is not None:
                    node.table.entries[target].tx_count += 1
            else:
                target = decision.next
                is_jump = True
                packet.mode = PacketMode.JUMP
                multiplier = 1.0
            service = stall + sample_delay(self.radio, self.rng) * multiplier
            self.metrics.energy_total_j += energy_cost(
                self.radio, self.topo.distance(node.id, target), packet.size_bits
            )
            self._tx[node.id] = self._tx.get(node.id, 0) + 1
            node.busy = True
            node.pending = (packet, target, is_jump)
            self._status[packet.id] = ("FLIGHT", node.id)
            self._schedule(now + service, PACKET_ARRIVAL, node.id, None)
            return

    # ------------------------------------------------------------------
    # event handlers

    def _on_inject(self, index: int, now: float) -> None:
        packet = make_packet(
            source=self.topo.source,
            size_bits=self.cfg.packet_bits,
            now=now,
            lifetime=self.cfg.packet_lifetime_ms,
            packet_id=index,
        )
        self.metrics.injected += 1
        self._status[packet.id] = ("APP", self.topo.source)
        source = self.nodes[self.topo.source]
        source.app_queue.append(packet)
        self._schedule(packet.deadline, DEADLINE_CHECK, packet, None)
        self._try_start(source, now)

    def _pop_in_service(self, sender: _NodeRuntime, packet: Packet) -> None:
        if sender.relay_queue and sender.relay_queue[0] is packet:
            sender.relay_queue.popleft()
            sender.buffer_used -= packet.size_bits / 8
        else:
            sender.app_queue.popleft()

    def _on_arrival(self, sender_id: NodeId, now: float) -> None:
        """Resolve an in-flight transmission.

        A receiver that is dead, or whose buffer cannot take the packet,
        never acknowledges. The sender keeps the packet in that case and
        retries after the acknowledgment timeout; only the blind baselines
        lose it outright.
        """
        sender = self.nodes[sender_id]
        packet, target, is_jump = sender.pending
        sender.pending = None
        sender.busy = False
        receiver = self.nodes[target]

        accepted = False
        if receiver.alive:
            if receiver.is_sink:
                accepted = True
            else:
                if self.dmrf is not None:
                    # the offered arrival counts toward the rate estimate
                    # whether or not the packet fits
                    if receiver.last_arrival is not None:
                        gap = now - receiver.last_arrival
                        if gap > 0:
                            receiver.arrival_ewma = (
                                0.5 * receiver.arrival_ewma + 0.5 / gap
                            )
                    receiver.last_arrival = now
                    mark = len(receiver.table.transition_log)
                    fbs = self.dmrf.detect_congestion(
                        receiver.table,
                        receiver.buffer_used,
                        float(self.cfg.buffer_bytes),
                        receiver.arrival_ewma,
                        now,
                    )
                    self._record_transitions(receiver.table, mark)
                    self._send_feedbacks(receiver, fbs, now)
                size_bytes = packet.size_bits / 8
                accepted = (
                    receiver.buffer_used + size_bytes <= self.cfg.buffer_bytes
                )

        if not accepted:
            if receiver.alive:
                self._notify_congestion(receiver, sender_id, now)
            if sender.table is not None:
                mark = len(sender.table.transition_log)
                if is_jump:
                    fbs = self.dmrf.on_jump_result(sender.table, target, False, now)
                else:
                    fbs = self.dmrf.on_forward_result(sender.table, target, False, now)
                self._record_transitions(sender.table, mark)
                self._send_feedbacks(sender, fbs, now)
                # the packet stays at the head of the queue; the retry's
                # service time absorbs the acknowledgment timeout
                self._try_start(sender, now, stall=self.cfg.ack_timeout_ms)
            else:
                self._pop_in_service(sender, packet)
                outcome = BUFFER_DROP if receiver.alive else DROPPED_NO_ROUTE
                self._finalize(packet, outcome, now)
                self._try_start(sender, now)
            return

        if sender.table is not None:
            mark = len(sender.table.transition_log)
            if is_jump:
                fbs = self.dmrf.on_jump_result(sender.table, target, True, now)
            else:
                fbs = self.dmrf.on_forward_result(sender.table, target, True, now)
            self._record_transitions(sender.table, mark)
            self._send_feedbacks(sender, fbs, now)

        self._pop_in_service(sender, packet)

        if receiver.is_sink:
            packet.hop_trace.append(receiver.id)
            self._finalize(packet, DELIVERED if now <= packet.deadline else EXPIRED, now)
            self._try_start(sender, now)
            return

        if receiver.table is not None:
            receiver.table.upstream = sender_id
        receiver.upstream = sender_id

        if now > packet.deadline:
            # arrived past its deadline at a relay: dead on arrival
            self._finalize(packet, EXPIRED, now)
        else:
            receiver.buffer_used += packet.size_bits / 8
            packet.hop_trace.append(receiver.id)
            receiver.relay_queue.append(packet)
            self._status[packet.id] = ("QUEUED", receiver.id)
            if (
                self.dmrf is not None
                and receiver.table.state in (NodeState.CONG, NodeState.JCONG)
            ):
                self._notify_congestion(receiver, sender_id, now)
            self._try_start(receiver, now)
        self._try_start(sender, now)

    def _notify_congestion(
        self, node: _NodeRuntime, sender_id: NodeId, now: float
    ) -> None:
        """Tell a data sender it is pushing into a congested buffer; at most
        once per sender per congestion episode."""
        if self.dmrf is None or sender_id in node.cong_notified:
            return
        if not self.nodes[sender_id].alive:
            return
        node.cong_notified.add(sender_id)
        fb = FeedbackMessage(
            kind=FeedbackKind.CONG, origin=node.id, subject=node.id
        )
        self._schedule(
            now + self.cfg.feedback_delay_ms, FEEDBACK_DELIVERY, (fb, node.id, sender_id), None
        )
        self._charge_control(node.id, sender_id)

    def _on_probe(self, node_id: NodeId, now: float) -> None:
        node = self.nodes[node_id]
        if not node.alive:
            return
        members = node.table.fcs.members
        if not members:
            return
        results: dict[NodeId, bool] = {}
        samples: dict[NodeId, float] = {}
        states: dict[NodeId, NodeState] = {}
        for entry in members:
            target = entry.candidate
            if self.cfg.count_probes_as_control:
                self.metrics.control_packets += 1
            self._charge_control(node_id, target)
            peer = self.nodes[target]
            results[target] = peer.alive
            if peer.alive:
                samples[target] = sample_delay(self.radio, self.rng)
                # the reply reports the replier's own current state
                states[target] = (
                    peer.table.state if peer.table is not None else NodeState.NORMAL
                )
        self._schedule(
            now + self.cfg.probe_timeout_ms,
            PROBE_TIMEOUT,
            node_id,
            (results, samples, states),
        )
        self._schedule(now + self.cfg.probe_period_ms, PROBE, node_id, None)

    def _on_probe_timeout(
        self, node_id: NodeId, payload: tuple[dict, dict, dict], now: float
    ) -> None:
        node = self.nodes[node_id]
        if not node.alive:
            return
        results, samples, states = payload
        table = node.table
        mark = len(table.transition_log)
        fbs = self.dmrf.detect_faulty(table, results, now, samples, states)
        if node.last_arrival is None or now - node.last_arrival >= self.cfg.probe_period_ms:
            node.arrival_ewma *= 0.5
        fbs += self.dmrf.detect_congestion(
            table,
            node.buffer_used,
            float(self.cfg.buffer_bytes),
            node.arrival_ewma,
            now,
        )
        self._record_transitions(table, mark)
        self._send_feedbacks(node, fbs, now)

    def _on_feedback(
        self, payload: tuple[FeedbackMessage, NodeId, NodeId], now: float
    ) -> None:
        msg, sender_id, receiver_id = payload
        self.metrics.control_packets += 1
        receiver = self.nodes[receiver_id]
        if not receiver.alive or receiver.table is None:
            return
        table = receiver.table
        mark = len(table.transition_log)
        reforward, fbs = self.dmrf.on_feedback(table, msg, sender_id, now, self.rng)
        self._record_transitions(table, mark)
        if reforward is not None and table.upstream is not None:
            dest = table.upstream
            if self.nodes[dest].alive:
                self._schedule(
                    now + self.cfg.feedback_delay_ms,
                    FEEDBACK_DELIVERY,
                    (reforward, receiver_id, dest),
                    None,
                )
                self._charge_control(receiver_id, dest)
        self._send_feedbacks(receiver, fbs, now)

    def _on_fault_onset(self, node_ids: list[NodeId], now: float) -> None:
        for nid in node_ids:
            node = self.nodes[nid]
            node.alive = False
            self._live.discard(nid)
            table = node.table
            if table is not None and table.state is not NodeState.FAULTY:
                self.transitions.append((now, nid, table.state, NodeState.FAULTY))
                table.state = NodeState.FAULTY

    def _on_deadline(self, packet: Packet, now: float) -> None:
        status, where = self._status[packet.id]
        if status == "DONE" or status == "FLIGHT":
            # in-flight packets are judged when the transmission resolves
            return
        node = self.nodes[where]
        if status == "APP":
            node.app_queue.remove(packet)
        else:
            node.relay_queue.remove(packet)
            node.buffer_used -= packet.size_bits / 8
        self._finalize(packet, EXPIRED, now)

    # ------------------------------------------------------------------

    def run(self) -> RunResult:
        handlers = {
            PACKET_ARRIVAL: lambda a, b, t: self._on_arrival(a, t),
            PACKET_INJECT: lambda a, b, t: self._on_inject(a, t),
            PROBE: lambda a, b, t: self._on_probe(a, t),
            PROBE_TIMEOUT: lambda a, b, t: self._on_probe_timeout(a, b, t),
            FEEDBACK_DELIVERY: lambda a, b, t: self._on_feedback(a, t),
            FAULT_ONSET: lambda a, b, t: self._on_fault_onset(a, t),
            DEADLINE_CHECK: lambda a, b, t: self._on_deadline(a, t),
        }
        heap = self._heap
        horizon = self.cfg.horizon_ms
        while heap:
            if (
                self._terminal == self._injected_target
                and self.metrics.injected == self._injected_target
            ):
                break
            time, seq, kind, a, b = heappop(heap)
            if time > horizon:
                break
            self.now = time
            if self.collect_trace:
                self._trace_event(time, seq, kind, a)
            handlers[kind](a, b, time)

        # horizon cut: anything still alive in the network expires
        for node in self.nodes.values():
            for queue in (node.relay_queue, node.app_queue):
                while queue:
                    leftover = queue.popleft()
                    if self._status[leftover.id][0] != "DONE":
                        self._finalize(leftover, EXPIRED, self.now)
            if node.pending is not None:
                leftover = node.pending[0]
                if self._status[leftover.id][0] != "DONE":
                    self._finalize(leftover, EXPIRED, self.now)
                node.pending = None

        if self._delays:
            ordered = sorted(self._delays)
            self.metrics.mean_delay_ms = sum(ordered) / len(ordered)
            rank = max(0, math.ceil(0.95 * len(ordered)) - 1)
            self.metrics.p95_delay_ms = ordered[rank]
        self.metrics.per_node_tx = dict(sorted(self._tx.items()))
        assert self.metrics.terminal_total == self.metrics.injected, (
            "packet conservation violated: "
            f"{self.metrics.terminal_total} terminal vs {self.metrics.injected} injected"
        )
        self.outcomes.sort(key=lambda o: o.packet_id)
        return RunResult(
            metrics=self.metrics,
            packets=self.outcomes,
            transitions=self.transitions,
            trace=self.trace,
        )


def run(
    topo: Topology,
    protocol: str,
    scenario: ScenarioConfig,
    seed: int,
    collect_trace: bool = False,
) -> RunResult:
    """Simulate one scenario to completion and return its results."""
    return Simulation(topo, protocol, scenario, seed, collect_trace).run()
