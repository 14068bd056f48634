import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnpsim.config import RunConfig
from cnpsim.protocol import (
    Bid,
    BidSpecification,
    ChangeOutcome,
    ContractRecord,
    ContractState,
    ProtocolError,
    ProtocolVariant,
    TaskChange,
    TaskSpec,
    apply_change,
    eligible,
    rank_bids,
    select_award,
    validate_transition,
)
from cnpsim.pursuit import ChangeInjection, ChangeSchedule, Prey
from cnpsim.simulation import Scenario, Simulation

from conftest import far_scenario

S = ContractState
UPD, CONV = ProtocolVariant.UPDATED, ProtocolVariant.CONVENTIONAL


def bid_spec_of(caps=(), max_cost=None):
    return BidSpecification(frozenset(caps), max_cost)


def bid(cid, cost, t=0, task="T1"):
    return Bid(task, cid, cost, t)


def task(target="prey-1"):
    return TaskSpec("T1", "capture", "chase it", bid_spec_of({"chase"}), 5, target)


def record(state):
    return ContractRecord(task=task(), state=state, awarded_to="p1")


# eligible -------------------------------------------------------------------


@pytest.mark.parametrize(
    "bid_spec, caps, cost, expected",
    [
        (bid_spec_of({"chase"}, 10), {"chase", "scout"}, 7, True),
        (bid_spec_of({"chase"}), {"scout"}, 0, False),
        (bid_spec_of((), 5), set(), 5, True),
        (bid_spec_of((), 5), set(), 5.0001, False),
    ],
)
def test_eligible_examples(bid_spec, caps, cost, expected):
    assert eligible(bid_spec, caps, cost) is expected


def test_negative_max_cost_rejected():
    with pytest.raises(ValueError):
        bid_spec_of((), -1)


# rank_bids / select_award ---------------------------------------------------


def test_rank_ascending_cost():
    ranked = rank_bids([bid("c1", 4), bid("c2", 2), bid("c3", 9)])
    assert ranked.contractor_ids == ["c2", "c1", "c3"]
    assert [r for _, r in ranked] == [1, 2, 3]


def test_rank_tie_break_on_submission_time():
    assert rank_bids([bid("c1", 3, 5), bid("c2", 3, 4)]).contractor_ids == ["c2", "c1"]


def test_rank_empty():
    assert len(rank_bids([])) == 0
    assert select_award(rank_bids([])) is None


def test_rank_mixed_tasks_is_caller_bug():
    with pytest.raises(ProtocolError):
        rank_bids([bid("c1", 1), bid("c2", 1, task="T2")])


def _oracle_better(a: Bid, b: Bid) -> bool:
    """Pairwise 'a ranks above b' written out case by case."""
    if a.cost != b.cost:
        return a.cost < b.cost
    if a.submitted_at != b.submitted_at:
        return a.submitted_at < b.submitted_at
    return a.contractor_id < b.contractor_id


POOL = [bid("c1", 3, 5), bid("c2", 3, 4), bid("c3", 1, 9), bid("c4", 3, 4)]


@pytest.mark.parametrize("size", [1, 2, 3, 4])
def test_rank_matches_pairwise_oracle_over_all_permutations(size):
    for subset in itertools.combinations(POOL, size):
        outputs = set()
        for perm in itertools.permutations(subset):
            order = rank_bids(perm).bids
            outputs.add(tuple(b.contractor_id for b in order))
            for i, j in itertools.combinations(range(len(order)), 2):
                assert _oracle_better(order[i], order[j])
        assert len(outputs) == 1


bids_strategy = st.lists(
    st.builds(
        Bid,
        st.just("T1"),
        st.sampled_from(["a", "b", "c", "d", "e"]),
        st.integers(0, 5).map(float),
        st.integers(0, 5),
    ),
    max_size=6,
)


@given(bids_strategy, st.randoms(use_true_random=False))
def test_rank_is_permutation_invariant(bids, rnd):
    shuffled = list(bids)
    rnd.shuffle(shuffled)
    assert rank_bids(bids) == rank_bids(shuffled)
    assert rank_bids(bids) == rank_bids(bids)


@pytest.mark.parametrize(
    "bids, winner",
    [([bid("c2", 1), bid("c1", 2), bid("c3", 3)], "c2"), ([bid("c7", 0)], "c7")],
)
def test_select_award_takes_head(bids, winner):
    assert select_award(rank_bids(bids)) == winner


# validate_transition --------------------------------------------------------


@pytest.mark.parametrize(
    "src, dst, variant, expected",
    [
        (S.AWARDED, S.IN_PROGRESS, UPD, True),
        (S.AWARDED, S.IN_PROGRESS, CONV, True),
        (S.IN_PROGRESS, S.ANNOUNCED, UPD, False),
        (S.IN_PROGRESS, S.ANNOUNCED, CONV, True),
        (S.IN_PROGRESS, S.IN_PROGRESS, UPD, True),
        (S.IN_PROGRESS, S.IN_PROGRESS, CONV, False),
        (S.COMPLETED, S.IN_PROGRESS, UPD, False),
        (S.ANNOUNCED, S.AWARDED, UPD, False),
    ],
)
def test_transition_examples(src, dst, variant, expected):
    assert validate_transition(src, dst, variant) is expected


@given(st.sampled_from(list(S)), st.sampled_from(list(S)), st.sampled_from(list(ProtocolVariant)))
def test_terminal_states_have_no_exit(src, dst, variant):
    if src.terminal:
        assert not validate_transition(src, dst, variant)


# apply_change -----------------------------------------------------------------


def change(target="prey-3"):
    return TaskChange("T1", target, 7)


def test_updated_change_absorbed():
    before = record(S.IN_PROGRESS)
    after = apply_change(before, change(), UPD, 7)
    assert after.state is S.IN_PROGRESS
    assert (before.task.revision, after.task.revision) == (0, 1)
    assert after.task.target == "prey-3"
    assert after.change_log[-1].outcome is ChangeOutcome.ABSORBED
    assert after.repetitions == 0
    assert before.change_log == []  # input untouched


def test_conventional_change_forces_restart():
    before = record(S.IN_PROGRESS)
    before.bids_received.append(bid("p1", 2))
    after = apply_change(before, change(), CONV, 7)
    assert after.state is S.ANNOUNCED
    assert (before.repetitions, after.repetitions) == (0, 1)
    assert after.change_log[-1].outcome is ChangeOutcome.FORCED_RESTART
    assert after.bids_received == []
    assert after.awarded_to is None


@pytest.mark.parametrize("variant", list(ProtocolVariant))
def test_completed_change_rejected_too_late(variant):
    before = record(S.COMPLETED)
    after = apply_change(before, change(), variant, 9)
    assert after.change_log[-1].outcome is ChangeOutcome.REJECTED_TOO_LATE
    after.change_log.pop()
    assert after == before


def test_change_for_other_task_is_error():
    with pytest.raises(ProtocolError):
        apply_change(record(S.IN_PROGRESS), TaskChange("T9", "x", 1), UPD, 1)


@given(st.integers(1, 4), st.sampled_from(["prey-2", "prey-3"]))
def test_updated_never_touches_bid_history(n, target):
    r = record(S.IN_PROGRESS)
    r.bids_received.extend(bid(f"c{i}", i) for i in range(n))
    out = r
    for k in range(n):
        out = apply_change(out, TaskChange("T1", target, k), UPD, k)
    assert out.bids_received == r.bids_received
    assert out.task.revision == n
    assert out.repetitions == 0


@pytest.mark.parametrize("variant", list(ProtocolVariant))
def test_change_after_final_report_via_simulator(variant):
    # oracle: run once without changes to learn when T1 finishes, then inject
    # a change after that tick and check the terminal record is unchanged
    config = RunConfig(variant=variant, tasks=1, changes=0, contractors=2)
    base = far_scenario(2)
    plain = Simulation(config, base).run()
    done = plain.contracts[0]
    assert done.state is S.COMPLETED
    late = Scenario(
        layout=base.layout,
        tasks=base.tasks,
        schedule=ChangeSchedule((ChangeInjection(plain.final_clock + 1, "T1", "danger-1"),)),
        spawns={"danger-1": Prey((5, 5), dangerous=True)},
    )
    result = Simulation(config, late).run()
    after = result.contracts[0]
    assert [c.outcome for c in after.change_log] == [ChangeOutcome.REJECTED_TOO_LATE]
    assert result.trace == plain.trace
    after.change_log.clear()
    assert after == done
