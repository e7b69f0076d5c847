import numpy as np

from treenc.dom import children_map, simplify_tree, validate_tree
from treenc.indexing import compute_positional_indices
from treenc.synthetic import (
    GENERIC_TOKENS,
    INTERESTS,
    PRODUCT_TOKENS,
    generate_synthetic_corpus,
    interest_lexicon,
)


def label_rule(tree):
    """Oracle: positive iff an li leaf in a sibling group of >= 3 leaves
    under a ul parent."""
    children = children_map(tree)
    expected = np.zeros(len(tree.nodes), dtype=int)
    for node in tree.nodes:
        if node.tag != "li" or children[node.id]:
            continue
        parent = tree.nodes[node.parent_id]
        if parent.tag != "ul":
            continue
        leaf_sibs = [s for s in children[parent.id]
                     if not children[s] and tree.nodes[s].tag == "li"]
        if len(leaf_sibs) >= 3:
            expected[node.id] = 1
    return expected


class TestLexicons:
    def test_product_tokens_unique_and_disjoint_from_pool(self):
        assert len(set(PRODUCT_TOKENS)) == len(PRODUCT_TOKENS)
        assert not set(PRODUCT_TOKENS) & set(GENERIC_TOKENS)
        assert len(PRODUCT_TOKENS) == 6 * len(INTERESTS)

    def test_lexicon_partition(self):
        lex = interest_lexicon()
        seen = set()
        for si in INTERESTS:
            assert len(lex[si]) == 6
            assert not seen & set(lex[si])
            seen |= set(lex[si])


class TestGeneratorContracts:
    def test_same_seed_identical_corpus(self):
        a, la = generate_synthetic_corpus(15, seed=3, task="structure_task")
        b, lb = generate_synthetic_corpus(15, seed=3, task="structure_task")
        assert a == b and la == lb

    def test_trees_are_fixed_points_of_simplification(self):
        for task in ("text_task", "structure_task"):
            trees, _ = generate_synthetic_corpus(20, seed=11, task=task)
            for tree in trees:
                validate_tree(tree)
                assert simplify_tree(tree) == tree

    def test_size_and_depth_bounds(self):
        trees, _ = generate_synthetic_corpus(60, seed=5, task="structure_task")
        for tree in trees:
            assert 30 <= len(tree) <= 120
            _, levels, _ = compute_positional_indices(tree)
            assert 3 <= levels.max() <= 8

    def test_labels_follow_sibling_group_rule(self):
        for task in ("text_task", "structure_task"):
            trees, _ = generate_synthetic_corpus(25, seed=7, task=task)
            for tree in trees:
                got = np.array([n.label for n in tree.nodes])
                assert np.array_equal(got, label_rule(tree))


class TestStructureTask:
    def test_all_texts_from_shared_pool(self):
        trees, _ = generate_synthetic_corpus(25, seed=1, task="structure_task")
        pool = set(GENERIC_TOKENS)
        for tree in trees:
            for node in tree.nodes:
                for token in node.text.split():
                    assert token in pool

    def test_text_only_bayes_bound(self):
        # labels are independent of text by construction, so the best
        # text-measurable classifier cannot beat predict-all-positive:
        # F1 = 2 pi / (1 + pi) <= 0.67 whenever prevalence pi <= 0.5
        trees, _ = generate_synthetic_corpus(100, seed=2, task="structure_task")
        labels = np.array([n.label for t in trees for n in t.nodes])
        pi = labels.mean()
        assert pi <= 0.5
        assert 2 * pi / (1 + pi) <= 0.67

    def test_empirical_text_classifier_stays_weak(self):
        # strongest per-text-key classifier on the realized corpus, an
        # optimistic overfit bound, still falls well under the target band
        trees, _ = generate_synthetic_corpus(100, seed=3, task="structure_task")
        stats = {}
        for tree in trees:
            for node in tree.nodes:
                pos, tot = stats.get(node.text, (0, 0))
                stats[node.text] = (pos + (node.label == 1), tot + 1)
        ordered = sorted(stats.items(), key=lambda kv: kv[1][0] / kv[1][1],
                         reverse=True)
        total_pos = sum(p for p, _ in stats.values())
        best, tp, pred = 0.0, 0, 0
        for _, (pos, tot) in ordered:
            tp += pos
            pred += tot
            prec = tp / pred
            rec = tp / total_pos
            if prec + rec:
                best = max(best, 2 * prec * rec / (prec + rec))
        assert best <= 0.72

    def test_positive_rate_among_list_items_balanced(self):
        trees, _ = generate_synthetic_corpus(100, seed=4, task="structure_task")
        li = [n.label for t in trees for n in t.nodes if n.tag == "li"]
        assert 0.40 <= np.mean(li) <= 0.60


class TestTextTask:
    def test_positive_text_from_interest_lexicon_only(self):
        trees, lexicon = generate_synthetic_corpus(30, seed=9, task="text_task")
        pool = set(GENERIC_TOKENS)
        for tree in trees:
            pt = set(lexicon[tree.interest])
            for node in tree.nodes:
                tokens = set(node.text.split())
                if node.label == 1:
                    assert tokens and tokens <= pt
                else:
                    assert tokens <= pool

    def test_interest_rotation_covers_requested_count(self):
        trees, lexicon = generate_synthetic_corpus(40, seed=0, task="text_task",
                                                   n_interests=8)
        assert {t.interest for t in trees} == set(INTERESTS[:8])
        assert set(lexicon) == set(INTERESTS[:8])
