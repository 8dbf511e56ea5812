import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activest.ensemble import EnsembleSummary
from activest.labels import (Annotation, LabelState, append_journal,
                             generate_pseudo, merge_annotations, propagate,
                             read_journal, replay_journal, state_from_dict,
                             state_to_dict, tau_schedule, with_pseudo)
from activest.supervoxel import Partition


def make_partition(sizes):
    assignment = np.concatenate([np.full(s, i) for i, s in enumerate(sizes)])
    return Partition(assignment)


def summary_with_confidence(conf, top=None):
    conf = np.asarray(conf, dtype=np.float64)
    n = conf.size
    top = np.zeros(n, np.int64) if top is None else np.asarray(top, np.int64)
    mean = np.zeros((n, 3))
    mean[np.arange(n), top] = conf
    return EnsembleSummary(mean, top, np.zeros(n), conf, 1, (0,))


class TestPropagate:
    def test_single_annotation_covers_supervoxel(self):
        part = make_partition([10, 5])
        t = propagate([Annotation("s", 3, 2, 1)], {"s": part})
        idx, cls = t["s"]
        assert idx.size == 10
        assert np.all(cls == 2)

    def test_no_annotations_empty(self):
        assert propagate([], {"s": make_partition([4])}) == {}

    def test_sizes_sum(self):
        part = make_partition([4, 5, 6])
        anns = [Annotation("s", 0, 1, 1), Annotation("s", 4, 0, 1),
                Annotation("s", 9, 2, 1)]
        t = propagate(anns, {"s": part})
        assert t["s"][0].size == 15

    def test_two_annotations_one_supervoxel_rejected(self):
        part = make_partition([6])
        with pytest.raises(ValueError, match="super-voxel 0"):
            propagate([Annotation("s", 0, 1, 1), Annotation("s", 3, 1, 1)],
                      {"s": part})

    def test_idempotent(self):
        part = make_partition([3, 3])
        anns = [Annotation("s", 0, 1, 1)]
        a = propagate(anns, {"s": part})
        b = propagate(anns, {"s": part})
        np.testing.assert_array_equal(a["s"][0], b["s"][0])
        np.testing.assert_array_equal(a["s"][1], b["s"][1])


class TestGeneratePseudo:
    def test_strict_threshold(self):
        summary = summary_with_confidence([0.995, 0.98, 0.999])
        idx, cls = generate_pseudo(summary, 0.99, np.empty(0, np.int64))
        assert idx.tolist() == [0, 2]

    def test_at_threshold_excluded(self):
        summary = summary_with_confidence([0.99])
        idx, _ = generate_pseudo(summary, 0.99, np.empty(0, np.int64))
        assert idx.size == 0

    def test_tau_above_max_gives_empty(self):
        summary = summary_with_confidence([0.7, 0.8])
        idx, _ = generate_pseudo(summary, 0.9, np.empty(0, np.int64))
        assert idx.size == 0

    def test_true_points_excluded_even_at_full_confidence(self):
        summary = summary_with_confidence([1.0, 1.0])
        idx, _ = generate_pseudo(summary, 0.5, np.array([0]))
        assert idx.tolist() == [1]

    @given(tau_lo=st.floats(0.5, 0.98), delta=st.floats(0.001, 0.4))
    @settings(max_examples=30, deadline=None)
    def test_pseudo_count_monotone_in_tau(self, tau_lo, delta):
        rng = np.random.default_rng(0)
        summary = summary_with_confidence(rng.random(60))
        lo, _ = generate_pseudo(summary, tau_lo, np.empty(0, np.int64))
        hi, _ = generate_pseudo(summary, min(tau_lo + delta, 0.999),
                                np.empty(0, np.int64))
        assert hi.size <= lo.size


class TestTauSchedule:
    def test_paper_schedule_values(self):
        assert tau_schedule(1, 6) == 0.99
        assert tau_schedule(4, 6) == 0.99
        assert tau_schedule(5, 6) == 0.95
        assert tau_schedule(6, 6) == 0.95
        assert tau_schedule(3, 5) == 0.99

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            tau_schedule(0, 5)
        with pytest.raises(ValueError):
            tau_schedule(7, 6)


class TestMergeAnnotations:
    def test_budget_accumulates(self):
        part = make_partition([2] * 30)
        state = LabelState()
        for it in range(1, 6):
            base = (it - 1) * 4
            batch = [Annotation("s", 2 * (base + j), 0, it) for j in range(4)]
            state = merge_annotations(state, batch, {"s": part})
        assert state.n_annotations == 20
        assert state.n_true == 40

    def test_resubmitting_supervoxel_rejected(self):
        part = make_partition([3, 3])
        state = merge_annotations(LabelState(), [Annotation("s", 0, 1, 1)], {"s": part})
        with pytest.raises(ValueError, match="already annotated"):
            merge_annotations(state, [Annotation("s", 1, 1, 2)], {"s": part})

    def test_empty_batch_is_identity(self):
        state = LabelState()
        assert merge_annotations(state, [], {}) is state

    def test_class_out_of_range_rejected(self):
        part = make_partition([3])
        with pytest.raises(ValueError, match="class id"):
            merge_annotations(LabelState(), [Annotation("s", 0, 9, 1)],
                              {"s": part}, n_classes=4)

    def test_true_restricted_to_annotated_points_matches_raw(self):
        part = make_partition([4, 4, 4])
        anns = [Annotation("s", 0, 2, 1), Annotation("s", 5, 1, 1)]
        state = merge_annotations(LabelState(), anns, {"s": part})
        idx, cls = state.true_labels["s"]
        lookup = dict(zip(idx.tolist(), cls.tolist()))
        for ann in anns:
            assert lookup[ann.point_index] == ann.class_id

    def test_pseudo_untouched_by_merge(self):
        part = make_partition([4, 4])
        pseudo = {"s": (np.array([6]), np.array([1]))}
        state = with_pseudo(LabelState(), pseudo)
        state = merge_annotations(state, [Annotation("s", 0, 1, 1)], {"s": part})
        assert state.pseudo_labels["s"][0].tolist() == [6]

    def test_instance_history_recorded(self):
        part = make_partition([2, 2])
        inst = np.array([5, 5, 9, 9])
        state = merge_annotations(LabelState(), [Annotation("s", 0, 1, 1)],
                                  {"s": part}, instances_by_scene={"s": inst})
        assert state.annotated_instances["s"] == {5}


class TestJournal:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "journal.jsonl"
        anns = [Annotation("a", 1, 2, 1, "human"), Annotation("a", 3, 0, 1, "human")]
        append_journal(path, anns)
        append_journal(path, [Annotation("a", 7, 1, 2, "human")])
        back = read_journal(path)
        assert back == anns + [Annotation("a", 7, 1, 2, "human")]

    def test_replay_deduplicates(self, tmp_path):
        path = tmp_path / "journal.jsonl"
        ann = Annotation("s", 0, 1, 1, "human")
        append_journal(path, [ann])
        append_journal(path, [ann])  # crash-retry wrote it twice
        part = make_partition([3, 3])
        state = replay_journal(path, {"s": part})
        assert state.n_annotations == 1
        assert state.n_true == 3

    def test_replay_matches_incremental_merges(self, tmp_path):
        part = make_partition([3, 3, 3])
        path = tmp_path / "journal.jsonl"
        state = LabelState()
        for it, point in enumerate([0, 3, 6], start=1):
            batch = [Annotation("s", point, it % 3, it, "human")]
            append_journal(path, batch)
            state = merge_annotations(state, batch, {"s": part})
        replayed = replay_journal(path, {"s": part})
        assert replayed.annotations == state.annotations
        np.testing.assert_array_equal(replayed.true_labels["s"][0],
                                      state.true_labels["s"][0])
        assert replayed.annotated_supervoxels == state.annotated_supervoxels

    def test_missing_journal_is_empty(self, tmp_path):
        assert read_journal(tmp_path / "none.jsonl") == []


def test_state_dict_roundtrip():
    part = make_partition([3, 3])
    state = merge_annotations(LabelState(), [Annotation("s", 0, 1, 1)], {"s": part},
                              instances_by_scene={"s": np.array([4, 4, 4, 8, 8, 8])})
    state = with_pseudo(state, {"s": (np.array([4, 5]), np.array([0, 2]))})
    back = state_from_dict(state_to_dict(state))
    assert back.annotations == state.annotations
    np.testing.assert_array_equal(back.true_labels["s"][0], state.true_labels["s"][0])
    np.testing.assert_array_equal(back.pseudo_labels["s"][1], state.pseudo_labels["s"][1])
    assert back.annotated_supervoxels == state.annotated_supervoxels
    assert back.annotated_instances == state.annotated_instances


def test_annotation_validation():
    with pytest.raises(ValueError, match="source"):
        Annotation("s", 0, 0, 1, source="guess")
    with pytest.raises(ValueError):
        Annotation("s", -1, 0, 1)
