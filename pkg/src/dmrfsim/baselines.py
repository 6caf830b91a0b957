"""Reference forwarding strategies the protocol is measured against.

All three are stateless geographic greedy variants: no probing, no feedback,
no learned statistics. They act on the initialization-time candidate sets and
pay for their staleness in lost packets, which is the point of the
comparison. The void-bypass variant additionally walks the void perimeter
with the classic right-hand-style detour when greedy progress stalls.
"""

from __future__ import annotations

import math

from .model import NodeId, Packet, RateClass, remaining_time
from .protocol import Decision, Drop, DropReason, Forward
from .topology import Topology

GREEDY_MIN_DELAY = "GREEDY_MIN_DELAY"
GREEDY_MAX_RATE = "GREEDY_MAX_RATE"
BYPASS = "BYPASS"

BASELINES = (GREEDY_MIN_DELAY, GREEDY_MAX_RATE, BYPASS)


def _progress(topo: Topology, node: NodeId, candidate: NodeId) -> float:
    return topo.distance(node, topo.sink) - topo.distance(candidate, topo.sink)


def greedy_min_delay(
    topo: Topology,
    node: NodeId,
    candidates: list[tuple[NodeId, float]],
    packet: Packet,
    now: float,
) -> Decision:
    """Forward to the candidate with the smallest delay estimate.

    Ties break toward the candidate making the most geographic progress,
    then the lowest id. candidates is a list of (id, delay_estimate).
    """
    if remaining_time(packet, now) <= 0:
        return Drop(DropReason.EXPIRED)
    if not candidates:
        return Drop(DropReason.NO_ROUTE)
    best = min(
        candidates, key=lambda c: (c[1], -_progress(topo, node, c[0]), c[0])
    )
    return Forward(next=best[0], rate=RateClass.MEDIUM)


def greedy_max_rate(
    topo: Topology,
    node: NodeId,
    candidates: list[tuple[NodeId, float]],
    packet: Packet,
    now: float,
) -> Decision:
    """Forward to the candidate maximizing progress per unit of estimated
    delay; ties break toward the lowest id."""
    if remaining_time(packet, now) <= 0:
        return Drop(DropReason.EXPIRED)
    if not candidates:
        return Drop(DropReason.NO_ROUTE)
    best = max(
        candidates,
        key=lambda c: (_progress(topo, node, c[0]) / c[1], -c[0]),
    )
    return Forward(next=best[0], rate=RateClass.MEDIUM)


def bypass_next_hop(
    topo: Topology,
    node: NodeId,
    candidates: list[tuple[NodeId, float]],
    packet: Packet,
    now: float,
    live: set[NodeId],
) -> Decision:
    """Greedy forwarding with perimeter routing around voids.

    Unlike the blind greedy variants this one knows which of its neighbors
    are alive (perimeter routing requires local void awareness). When no
    live candidate makes progress, it sidesteps to the live neighbor whose
    bearing deviates least clockwise from the sink bearing, refusing nodes
    already on the packet's trace to avoid orbiting the void forever.
    """
    if remaining_time(packet, now) <= 0:
        return Drop(DropReason.EXPIRED)
    alive = [(c, d) for c, d in candidates if c in live]
    if alive:
        best = min(alive, key=lambda c: (c[1], -_progress(topo, node, c[0]), c[0]))
        return Forward(next=best[0], rate=RateClass.MEDIUM)
    x, y = topo.position(node)
    sx, sy = topo.position(topo.sink)
    alpha = math.atan2(sy - y, sx - x)
    visited = set(packet.hop_trace)
    best_id = None
    best_dev = math.inf
    for nb in topo.neighbors(node):
        if nb not in live or nb in visited:
            continue
        nx, ny = topo.position(nb)
        beta = math.atan2(ny - y, nx - x)
        deviation = (alpha - beta) % (2.0 * math.pi)
        if deviation < best_dev or (deviation == best_dev and nb < best_id):
            best_dev = deviation
            best_id = nb
    if best_id is None:
        return Drop(DropReason.NO_ROUTE)
    return Forward(next=best_id, rate=RateClass.MEDIUM)
