"""Unit tests for the per-node decision logic.

The numeric examples here were computed by hand from the defining formulas
and are frozen: a change in any of them is a behavior change, not a
refactoring artifact.
"""

import random

import pytest

from dmrfsim.model import (
    CandidateEntry,
    FeedbackKind,
    FeedbackMessage,
    NodeState,
    RateClass,
    make_packet,
)
from dmrfsim.protocol import (
    Drop,
    DropReason,
    DmrfProtocol,
    Forward,
    Jump,
    NoRouteError,
    Thresholds,
    choose_jump_target,
    classify_rate,
    compute_lambda,
    compute_thresholds,
    jump_probabilities,
    pin_rate_continuity,
)
from dmrfsim.topology import Topology, UNREACHABLE

N = NodeState
MU = 1.28


class FixedRng:
    """random.Random stand-in returning scripted values."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def grid_protocol(positions, comm_radius=1.5, max_tx=30.0, sink=None, **kwargs):
    nodes = [(i, pos) for i, pos in enumerate(positions)]
    topo = Topology(
        nodes=nodes,
        region=(
            max(p[0] for p in positions) or 1.0,
            max(p[1] for p in positions) or 1.0,
        ),
        comm_radius=comm_radius,
        max_tx_distance=max_tx,
        source=0,
        sink=len(positions) - 1 if sink is None else sink,
    )
    return DmrfProtocol(topo, mu=MU, **kwargs), topo


# ----------------------------------------------------------------------
# slack ratio and thresholds


def test_lambda_is_remaining_over_needed():
    assert compute_lambda(12.0, 10.0) == pytest.approx(1.2)
    assert compute_lambda(5.0, 10.0) == pytest.approx(0.5)


def test_lambda_clamps_expired_packets_to_zero():
    assert compute_lambda(0.0, 10.0) == 0.0
    assert compute_lambda(-3.0, 10.0) == 0.0


def test_lambda_rejects_non_positive_needed_time():
    with pytest.raises(ValueError):
        compute_lambda(5.0, 0.0)
    with pytest.raises(ValueError):
        compute_lambda(5.0, -1.0)


def test_threshold_worked_example():
    # theta_jump 0.2, needed 10, both delay bounds 2, mu 1.28, remaining 12:
    #   omega      = min(1, (12 - 2) / 10)    = 1.0
    #   theta_high = 0.2 + 2 / 10             = 0.4
    #   theta_low  = 0.4 / 1.0 + 1.28 / 10    = 0.528
    th = compute_thresholds(0.2, 10.0, 2.0, 2.0, 1.28, 12.0)
    assert th.omega == pytest.approx(1.0)
    assert th.theta_high == pytest.approx(0.4)
    assert th.theta_low == pytest.approx(0.528)
    assert th.theta_jump == 0.2


def test_omega_shrinks_when_lifetime_gets_tight():
    # remaining barely above the next-hop delay: omega = 1/10, which pushes
    # theta_low up by a factor of ten
    th = compute_thresholds(0.2, 10.0, 2.0, 2.0, 1.28, 3.0)
    assert th.omega == pytest.approx(0.1)
    assert th.theta_low == pytest.approx(0.4 / 0.1 + 0.128)


def test_omega_clamps_into_unit_interval():
    high = compute_thresholds(0.2, 10.0, 2.0, 2.0, 1.28, 500.0)
    assert high.omega == 1.0
    low = compute_thresholds(0.2, 10.0, 2.0, 2.0, 1.28, 1.0)
    assert low.omega == pytest.approx(1e-3)
    assert low.theta_low > low.theta_high > low.theta_jump


def test_thresholds_unreachable_sink_raises():
    with pytest.raises(NoRouteError):
        compute_thresholds(0.2, UNREACHABLE, 2.0, 2.0, 1.28, 12.0)


def test_rate_bands():
    th = Thresholds(theta_low=0.528, theta_high=0.4, theta_jump=0.2, omega=1.0)
    assert classify_rate(0.6, th) is RateClass.LOW
    assert classify_rate(0.528, th) is RateClass.LOW  # boundary belongs up
    assert classify_rate(0.45, th) is RateClass.MEDIUM
    assert classify_rate(0.4, th) is RateClass.MEDIUM
    assert classify_rate(0.25, th) is RateClass.HIGH


def test_rate_continuity_pins_low_high_swings_to_medium():
    assert pin_rate_continuity(RateClass.LOW, RateClass.HIGH) is RateClass.MEDIUM
    assert pin_rate_continuity(RateClass.HIGH, RateClass.LOW) is RateClass.MEDIUM
    assert pin_rate_continuity(RateClass.LOW, RateClass.MEDIUM) is RateClass.MEDIUM
    assert pin_rate_continuity(RateClass.MEDIUM, RateClass.HIGH) is RateClass.HIGH
    assert pin_rate_continuity(RateClass.LOW, RateClass.LOW) is RateClass.LOW


# ----------------------------------------------------------------------
# jump probabilities


def test_jump_probabilities_normalize_success_ratios():
    a = CandidateEntry(candidate=1, suc=0.75)
    b = CandidateEntry(candidate=2, suc=0.5)
    jump_probabilities([a, b])
    assert a.jump_p == pytest.approx(0.6)
    assert b.jump_p == pytest.approx(0.4)


def test_jump_probabilities_uniform_when_all_zero():
    entries = [CandidateEntry(candidate=i, suc=0.0) for i in range(4)]
    jump_probabilities(entries)
    assert all(e.jump_p == pytest.approx(0.25) for e in entries)


def test_choose_jump_target_samples_cumulatively():
    a = CandidateEntry(candidate=1, suc=0.75)
    b = CandidateEntry(candidate=2, suc=0.5)
    # p = (0.6, 0.4): draws below 0.6 pick 1, above pick 2
    assert choose_jump_target([a, b], FixedRng([0.59]), sink=9, sink_in_range=True) == 1
    assert choose_jump_target([a, b], FixedRng([0.61]), sink=9, sink_in_range=True) == 2


def test_choose_jump_target_excludes_known_bad_and_renormalizes():
    a = CandidateEntry(candidate=1, suc=0.75, cached_state=N.CONG)
    b = CandidateEntry(candidate=2, suc=0.5)
    # only b is viable, so any draw picks it
    assert choose_jump_target([a, b], FixedRng([0.99]), sink=9, sink_in_range=True) == 2


def test_choose_jump_target_falls_back_to_sink_in_range():
    a = CandidateEntry(candidate=1, cached_state=N.FAULTY)
    assert choose_jump_target([a], FixedRng([0.5]), sink=9, sink_in_range=True) == 9
    assert choose_jump_target([a], FixedRng([0.5]), sink=9, sink_in_range=False) is None
    assert choose_jump_target([], FixedRng([0.5]), sink=9, sink_in_range=True) == 9


# ----------------------------------------------------------------------
# table construction


def test_build_tables_initializes_fcs_entries():
    proto, topo = grid_protocol([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    tables = proto.build_tables()
    assert set(tables) == {0, 1}  # the sink keeps no table
    t0 = tables[0]
    assert [e.candidate for e in t0.fcs.members] == [1]
    assert t0.entries[1].delay_est == MU
    assert t0.needed_time == pytest.approx(2 * MU)
    assert t0.sink_in_range  # 2 m < 30 m
    assert t0.state is N.NORMAL


def test_build_tables_marks_born_void_nodes():
    # node 1's only neighbor is behind it
    proto, _ = grid_protocol(
        [(-1.0, 0.0), (0.0, 0.0), (5.0, 0.0)], comm_radius=1.2, sink=2
    )
    tables = proto.build_tables()
    assert tables[1].state is N.VOID
    assert tables[1].transition_log == [(0.0, N.NORMAL, N.VOID)]


def test_jump_entries_take_strictly_closer_nodes_in_tx_range():
    positions = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (40.0, 0.0)]
    proto, _ = grid_protocol(positions, comm_radius=1.5, max_tx=30.0, sink=3)
    table = proto.build_tables()[0]
    proto.ensure_jump_entries(table)
    # 4 is out of the jump question twice over: beyond max_tx and farther
    # from the sink than the owner
    assert table.jump_ids == [1, 2, 3]
    assert all(i in table.entries for i in table.jump_ids)
    # materialization is idempotent
    proto.ensure_jump_entries(table)
    assert table.jump_ids == [1, 2, 3]


# ----------------------------------------------------------------------
# detection pipeline


def probe_all(proto, table, replies, now=0.0, states=None):
    results = {e.candidate: (e.candidate in replies) for e in table.fcs.members}
    return proto.detect_faulty(table, results, now, state_reports=states)


def test_three_missed_probes_mark_faulty():
    proto, _ = grid_protocol([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    table = proto.build_tables()[0]
    entry = table.entries[1]
    probe_all(proto, table, replies=set())
    probe_all(proto, table, replies=set())
    assert entry.cached_state is N.NORMAL
    probe_all(proto, table, replies=set())
    assert entry.cached_state is N.FAULTY


def test_reply_resets_confidence_and_heals_faulty_cache():
    proto, _ = grid_protocol([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    table = proto.build_tables()[0]
    entry = table.entries[1]
    for _ in range(3):
        probe_all(proto, table, replies=set())
    assert entry.cached_state is N.FAULTY
    probe_all(proto, table, replies={1})
    assert entry.cached_state is N.NORMAL
    assert entry.confidence.c == 100


def test_probe_reply_state_report_overrides_cache():
    proto, _ = grid_protocol([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    table = proto.build_tables()[0]
    probe_all(proto, table, replies={1}, states={1: N.CONG})
    assert table.entries[1].cached_state is N.CONG
    probe_all(proto, table, replies={1}, states={1: N.NORMAL})
    assert table.entries[1].cached_state is N.NORMAL


def test_probe_delay_samples_blend_into_estimate():
    proto, _ = grid_protocol([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    table = proto.build_tables()[0]
    proto.detect_faulty(table, {1: True}, 0.0, delay_samples={1: 2.0})
    assert table.entries[1].delay_est == pytest.approx(0.7 * MU + 0.3 * 2.0)


def test_congestion_predictor_and_hysteresis():
    proto, _ = grid_protocol([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    table = proto.build_tables()[0]
    # occupancy 0.5 + 0.1/ms * 5 ms * 32 B / 100 B = 0.5 + 0.16 = 0.66 < 0.8
    proto.detect_congestion(table, 50.0, 100.0, 0.1, now=1.0)
    assert table.state is N.NORMAL
    # occupancy 0.72 + 0.16 = 0.88 >= 0.8: congested
    fbs = proto.detect_congestion(table, 72.0, 100.0, 0.1, now=2.0)
    assert table.state is N.CONG
    assert [f.kind for f in fbs] == [FeedbackKind.CONG]
    # back under theta but inside the hysteresis band: still congested
    proto.detect_congestion(table, 72.0, 100.0, 0.0, now=3.0)
    assert table.state is N.CONG
    # predicted 0.66 < 0.8 - 0.1: recovered
    fbs = proto.detect_congestion(table, 66.0, 100.0, 0.0, now=4.0)
    assert table.state is N.NORMAL
    assert [f.kind for f in fbs] == [FeedbackKind.RECOVER]


def test_congestion_requires_positive_capacity():
    proto, _ = grid_protocol([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])
    table = proto.build_tables()[0]
    with pytest.raises(ValueError):
        proto.detect_congestion(table, 0.0, 0.0, 0.0, now=0.0)


def two_candidate_table(**kwargs):
    positions = [(0.0, 0.0), (1.0, 0.3), (1.0, -0.3), (2.0, 0.0)]
    proto, topo = grid_protocol(positions, comm_radius=1.5, sink=3, **kwargs)
    return proto, proto.build_tables()[0]


def test_state_derivation_cascades():
    proto, table = two_candidate_table()
    table.entries[1].cached_state = N.FAULTY
    table.entries[2].cached_state = N.JFAULTY
    fbs = proto.detect_void(table, now=1.0)
    assert table.state is N.JFAULTY
    assert [f.kind for f in fbs] == [FeedbackKind.FAULT]

    # one candidate heals: back to NORMAL
    table.entries[1].cached_state = N.NORMAL
    fbs = proto.detect_void(table, now=2.0)
    assert table.state is N.NORMAL
    assert [f.kind for f in fbs] == [FeedbackKind.RECOVER]

    table.entries[1].cached_state = N.CONG
    table.entries[2].cached_state = N.JCONG
    proto.detect_void(table, now=3.0)
    assert table.state is N.JCONG

    table.entries[1].cached_state = N.VOID
    table.entries[2].cached_state = N.VOID
    proto.detect_void(table, now=4.0)
    assert table.state is N.VOID


def test_void_outranks_other_derivations():
    proto, table = two_candidate_table()
    table.entries[1].cached_state = N.VOID
    table.entries[2].cached_state = N.VOID
    table.own_congested = True
    proto.detect_void(table, now=1.0)
    assert table.state is N.VOID


def test_own_congestion_yields_to_whole_set_conditions():
    proto, table = two_candidate_table()
    table.own_congested = True
    proto.detect_void(table, now=1.0)
    assert table.state is N.CONG
    table.entries[1].cached_state = N.FAULTY
    table.entries[2].cached_state = N.FAULTY
    proto.detect_void(table, now=2.0)
    assert table.state is N.JFAULTY


def test_illegal_direct_cong_entry_decomposes_through_normal():
    proto, table = two_candidate_table()
    # drive to JFAULTY
    table.entries[1].cached_state = N.FAULTY
    table.entries[2].cached_state = N.FAULTY
    proto.detect_void(table, now=1.0)
    assert table.state is N.JFAULTY
    # candidates heal while the node's own buffer is hot: the path to CONG
    # passes through NORMAL, emitting RECOVER then CONG
    table.entries[1].cached_state = N.NORMAL
    table.entries[2].cached_state = N.NORMAL
    table.own_congested = True
    fbs = proto.detect_void(table, now=2.0)
    assert table.state is N.CONG
    assert [f.kind for f in fbs] == [FeedbackKind.RECOVER, FeedbackKind.CONG]
    assert table.transition_log[-2:] == [
        (2.0, N.JFAULTY, N.NORMAL),
        (2.0, N.NORMAL, N.CONG),
    ]


# ----------------------------------------------------------------------
# next-hop selection


def test_select_drops_expired_packets():
    proto, table = two_candidate_table()
    packet = make_packet(0, 256, now=0.0, lifetime=10.0)
    decision = proto.select_next_hop(table, packet, now=20.0, rng=random.Random(1))
    assert isinstance(decision, Drop)
    assert decision.reason is DropReason.EXPIRED


def test_select_forwards_least_used_then_slowest():
    proto, table = two_candidate_table()
    packet = make_packet(0, 256, now=0.0, lifetime=100.0)
    d1 = proto.select_next_hop(table, packet, now=0.0, rng=random.Random(1))
    assert isinstance(d1, Forward)
    first = d1.next
    table.entries[first].tx_count += 1
    d2 = proto.select_next_hop(table, packet, now=0.0, rng=random.Random(1))
    assert isinstance(d2, Forward)
    # rotation: the other candidate is now the least used
    assert d2.next != first


def test_select_skips_candidates_cached_bad():
    proto, table = two_candidate_table()
    packet = make_packet(0, 256, now=0.0, lifetime=100.0)
    table.entries[1].cached_state = N.CONG
    for _ in range(4):
        d = proto.select_next_hop(table, packet, now=0.0, rng=random.Random(1))
        assert isinstance(d, Forward)
        assert d.next == 2
        table.entries[2].tx_count += 1


def test_select_jumps_when_all_candidates_are_bad():
    proto, table = two_candidate_table()
    packet = make_packet(0, 256, now=0.0, lifetime=100.0)
    table.entries[1].cached_state = N.CONG
    table.entries[2].cached_state = N.FAULTY
    d = proto.select_next_hop(table, packet, now=0.0, rng=random.Random(1))
    assert isinstance(d, Jump)


def test_select_jumps_in_propagated_states():
    proto, table = two_candidate_table()
    packet = make_packet(0, 256, now=0.0, lifetime=100.0)
    for state in (N.JFAULTY, N.JCONG, N.VOID):
        table.state = state
        d = proto.select_next_hop(table, packet, now=0.0, rng=random.Random(1))
        assert isinstance(d, Jump)


def test_select_jumps_on_exhausted_slack():
    proto, table = two_candidate_table()
    # lifetime so short that lambda <= theta_jump: needed 2*mu = 2.56,
    # remaining 0.5 -> lambda 0.195 < 0.2
    packet = make_packet(0, 256, now=0.0, lifetime=0.5)
    d = proto.select_next_hop(table, packet, now=0.0, rng=random.Random(1))
    assert isinstance(d, Jump)


def test_low_slack_packets_get_high_rate():
    proto, table = two_candidate_table()
    packet = make_packet(0, 256, now=0.0, lifetime=100.0)
    d = proto.select_next_hop(table, packet, now=0.0, rng=random.Random(1))
    assert d.rate is RateClass.LOW  # lambda = 100 / 2.56 >> theta_low
    tight = make_packet(0, 256, now=0.0, lifetime=1.5)
    # lambda = 1.5 / 2.56 = 0.59, theta_high = 0.2 + 1.28 / 2.56 = 0.7:
    # the HIGH band, and the 1.28 ms hop still fits the remaining 1.5 ms
    d = proto.select_next_hop(table, tight, now=0.0, rng=random.Random(1))
    assert isinstance(d, Forward)
    # LOW -> HIGH in one hop is pinned to MEDIUM
    assert d.rate is RateClass.MEDIUM
    tight.rate_class = RateClass.MEDIUM
    d = proto.select_next_hop(table, tight, now=0.0, rng=random.Random(1))
    assert d.rate is RateClass.HIGH


# ----------------------------------------------------------------------
# transmission outcomes


def test_forward_failures_erode_confidence():
    proto, table = two_candidate_table()
    assert proto.on_forward_result(table, 1, False, now=1.0) == []
    assert proto.on_forward_result(table, 1, False, now=2.0) == []
    assert table.entries[1].cached_state is N.NORMAL
    proto.on_forward_result(table, 1, False, now=3.0)
    assert table.entries[1].cached_state is N.FAULTY
    proto.on_forward_result(table, 1, True, now=4.0)
    assert table.entries[1].cached_state is N.NORMAL
    assert table.entries[1].confidence.c == 100


def test_jump_success_ratio_arithmetic():
    proto, table = two_candidate_table()
    proto.ensure_jump_entries(table)
    entry = table.entries[1]
    for i in range(3):
        proto.on_jump_result(table, 1, True, now=float(i))
    assert (entry.successes, entry.attempts) == (3, 3)
    assert entry.suc == pytest.approx(1.0)
    # 3 successes, then a failure: suc = (3 - 1) / 4 = 0.5
    fbs = proto.on_jump_result(table, 1, False, now=4.0)
    assert (entry.successes, entry.attempts) == (3, 4)
    assert entry.suc == pytest.approx(0.5)
    assert fbs[0].kind is FeedbackKind.JUMP_FAIL
    assert fbs[0].subject == 1


def test_first_jump_failure_zeroes_the_candidate():
    proto, table = two_candidate_table()
    proto.ensure_jump_entries(table)
    proto.on_jump_result(table, 1, False, now=0.0)
    assert table.entries[1].suc == 0.0
    # and the pool is renormalized away from it
    others = [table.entries[i] for i in table.jump_ids if i != 1]
    assert table.entries[1].jump_p == 0.0
    assert sum(e.jump_p for e in others) == pytest.approx(1.0)


# ----------------------------------------------------------------------
# feedback handling


def test_feedback_caches_subject_state_by_kind():
    proto, table = two_candidate_table()
    cases = [
        (FeedbackKind.FAULT, N.FAULTY),
        (FeedbackKind.CONG, N.CONG),
        (FeedbackKind.VOID, N.VOID),
        (FeedbackKind.RECOVER, N.NORMAL),
    ]
    for kind, expected in cases:
        msg = FeedbackMessage(kind=kind, origin=1, subject=1)
        reforward, _ = proto.on_feedback(table, msg, from_node=1, now=1.0,
                                         rng=random.Random(1))
        assert reforward is None
        assert table.entries[1].cached_state is expected


def test_feedback_drives_derived_state():
    proto, table = two_candidate_table()
    for subject in (1, 2):
        msg = FeedbackMessage(kind=FeedbackKind.CONG, origin=subject, subject=subject)
        _, fbs = proto.on_feedback(table, msg, from_node=subject, now=1.0,
                                   rng=random.Random(1))
    assert table.state is N.JCONG
    assert [f.kind for f in fbs] == [FeedbackKind.CONG]


def test_jump_fail_feedback_scales_suc_and_reforwards():
    proto, table = two_candidate_table()
    proto.ensure_jump_entries(table)
    entry = table.entries[1]
    entry.suc = 0.8
    msg = FeedbackMessage(kind=FeedbackKind.JUMP_FAIL, origin=5, subject=5,
                          hop_limit=3)
    reforward, fbs = proto.on_feedback(table, msg, from_node=1, now=1.0,
                                       rng=FixedRng([0.25]))
    assert entry.suc == pytest.approx(0.8 * 0.25)
    assert fbs == []
    assert reforward is not None
    assert reforward.hop_limit == 2
    assert reforward.subject == 5


def test_jump_fail_feedback_stops_at_hop_limit():
    proto, table = two_candidate_table()
    msg = FeedbackMessage(kind=FeedbackKind.JUMP_FAIL, origin=5, subject=5,
                          hop_limit=1)
    reforward, _ = proto.on_feedback(table, msg, from_node=1, now=1.0,
                                     rng=FixedRng([0.25]))
    assert reforward is None
