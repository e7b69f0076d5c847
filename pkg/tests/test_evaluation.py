import random

import numpy as np
import pytest

from treenc.dom import DomNode, DomTree
from treenc.errors import TooFewInterestsError, VersionError
from treenc.evaluation import (
    EvalReport,
    SplitSpec,
    depth_report,
    format_results_table,
    prf1,
    split_by_interest,
    tree_depth,
)


def trees_with_interests(names):
    out = []
    for i, name in enumerate(names):
        out.append(DomTree(
            interest=name,
            nodes=(DomNode(0, None, "div", f"t{i}", 0),
                   DomNode(1, 0, "p", "a", 1),
                   DomNode(2, 0, "p", "b", 0)),
        ))
    return out


class TestPrf1:
    def test_perfect(self):
        assert prf1([1, 0, 1], [1, 0, 1]) == (1.0, 1.0, 1.0)

    def test_balanced_errors(self):
        # TP=1, FP=1, FN=1
        assert prf1([1, 1, 0], [1, 0, 1]) == (0.5, 0.5, 0.5)

    def test_matches_counting_oracle(self):
        npr = np.random.default_rng(4)
        for _ in range(30):
            n = int(npr.integers(1, 200))
            pred = npr.integers(0, 2, size=n)
            gold = npr.integers(0, 2, size=n)
            tp = sum(1 for p, g in zip(pred, gold) if p == 1 and g == 1)
            fp = sum(1 for p, g in zip(pred, gold) if p == 1 and g == 0)
            fn = sum(1 for p, g in zip(pred, gold) if p == 0 and g == 1)
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            f = 2 * p * r / (p + r) if p + r else 0.0
            got = prf1(pred, gold)
            assert got == pytest.approx((p, r, f))

    def test_permutation_invariant(self):
        npr = np.random.default_rng(1)
        pred = npr.integers(0, 2, size=50)
        gold = npr.integers(0, 2, size=50)
        perm = npr.permutation(50)
        assert prf1(pred, gold) == prf1(pred[perm], gold[perm])

    def test_unlabeled_entries_excluded(self):
        assert prf1([1, 1, 1], [1, -1, -1]) == (1.0, 1.0, 1.0)

    def test_empty_denominators_are_zero(self):
        assert prf1([0, 0], [0, 0]) == (0.0, 0.0, 0.0)


class TestSplitByInterest:
    def test_95_interests_give_71_10_14(self):
        trees = trees_with_interests([f"si{i:02d}" for i in range(95)])
        spec = split_by_interest(trees, seed=42)
        for table in spec.assignments:
            counts = {p: 0 for p in ("train", "val", "test")}
            for part in table.values():
                counts[part] += 1
            assert counts == {"train": 71, "val": 10, "test": 14}

    def test_same_seed_identical(self):
        trees = trees_with_interests([f"si{i}" for i in range(20)])
        a = split_by_interest(trees, seed=7)
        b = split_by_interest(trees, seed=7)
        assert a == b

    def test_no_interest_in_two_partitions(self):
        trees = trees_with_interests([f"si{i}" for i in range(20)])
        spec = split_by_interest(trees, seed=3)
        for table in spec.assignments:
            assert set(table) == {t.interest for t in trees}
            for replicate in range(1, spec.replicates + 1):
                parts = [
                    {t.interest for t in spec.partition(trees, replicate, name)}
                    for name in ("train", "val", "test")
                ]
                assert parts[0] | parts[1] | parts[2] == set(table)
                assert not (parts[0] & parts[1] or parts[0] & parts[2]
                            or parts[1] & parts[2])

    def test_minimum_three_interests(self):
        trees = trees_with_interests(["a", "b"])
        with pytest.raises(TooFewInterestsError):
            split_by_interest(trees, seed=0)
        tiny = split_by_interest(trees_with_interests(["a", "b", "c"]), seed=0)
        for table in tiny.assignments:
            assert sorted(table.values()) == ["test", "train", "val"]

    def test_trees_follow_their_interest(self):
        names = [f"si{i}" for i in range(10)]
        trees = trees_with_interests(names * 3)
        spec = split_by_interest(trees, seed=5)
        for replicate in range(1, 6):
            for name in ("train", "val", "test"):
                part = spec.partition(trees, replicate, name)
                for t in part:
                    assert spec.assignments[replicate - 1][t.interest] == name

    def test_save_load_round_trip(self, tmp_path):
        trees = trees_with_interests([f"si{i}" for i in range(12)])
        spec = split_by_interest(trees, seed=9)
        path = tmp_path / "splits.json"
        spec.save(path)
        assert SplitSpec.load(path) == spec

    def test_load_rejects_unknown_version(self, tmp_path):
        path = tmp_path / "splits.json"
        path.write_text('{"version": 3, "seed": 0, "ratios": [], "assignments": []}')
        with pytest.raises(VersionError):
            SplitSpec.load(path)


class TestDepthReport:
    def test_degenerate_range_single_level(self):
        levels = depth_report([(2.0, 0.4), (2.0, 0.8)])
        assert levels[0]["n_trees"] == 2
        assert levels[0]["mean_f1"] == pytest.approx(0.6)
        assert all(lv["n_trees"] == 0 and lv["mean_f1"] is None
                   for lv in levels[1:])

    def test_uniform_f1_uniform_levels(self):
        pairs = [(float(d), 0.5) for d in range(1, 11)]
        levels = depth_report(pairs)
        for lv in levels:
            assert lv["mean_f1"] == pytest.approx(0.5)

    def test_matches_bucketing_oracle(self):
        rng = random.Random(3)
        for _ in range(20):
            pairs = [(rng.uniform(1, 9), rng.random())
                     for _ in range(rng.randint(1, 60))]
            levels = depth_report(pairs)
            lo = min(d for d, _ in pairs)
            hi = max(d for d, _ in pairs)
            width = (hi - lo) / 5
            buckets = [[] for _ in range(5)]
            for d, f in pairs:
                if width == 0.0:
                    j = 0
                else:
                    j = min(int((d - lo) / width), 4)
                buckets[j].append(f)
            for j, lv in enumerate(levels):
                assert lv["n_trees"] == len(buckets[j])
                if buckets[j]:
                    assert lv["mean_f1"] == pytest.approx(
                        sum(buckets[j]) / len(buckets[j])
                    )

    def test_tree_depth_is_mean_level(self):
        assert tree_depth([0, 1, 2, 2, 1]) == pytest.approx(1.2)


class TestEvalReport:
    def test_macro_is_mean_of_split_f1(self):
        report = EvalReport(model="demo")
        values = [0.5, 0.6, 0.7, 0.8, 0.9]
        for i, f1 in enumerate(values, start=1):
            report.splits.append({
                "replicate": i, "precision": f1, "recall": f1, "f1": f1,
            })
        report.finalize()
        assert abs(report.macro["f1"] - np.mean(values)) < 1e-12

    def test_round_trip_and_table(self, tmp_path):
        report = EvalReport(model="rules")
        report.splits.append(
            {"replicate": 1, "precision": 0.5, "recall": 1.0, "f1": 2 / 3}
        )
        report.per_tree.append(
            {"replicate": 1, "tree_id": 0, "interest": "x", "depth": 2.0,
             "f1": 0.5}
        )
        report.finalize()
        path = tmp_path / "report.json"
        report.save(path)
        table = format_results_table([report])
        assert "rules" in table and "66.67" in table
