import json
import random

import pytest

from treenc.dom import (
    DomNode,
    DomTree,
    load_dataset,
    parse_html,
    save_dataset,
    simplify_tree,
    split_tree,
    validate_tree,
)
from treenc.errors import (
    EmptyDocumentError,
    FormatError,
    SplitImpossibleError,
    VersionError,
)

from conftest import random_tree


def tags(tree):
    return [n.tag for n in tree.nodes]


class TestParseHtml:
    def test_plain_document(self):
        tree = parse_html("<html><body><p>Tent</p></body></html>")
        assert [(n.id, n.parent_id, n.tag, n.text) for n in tree.nodes] == [
            (0, None, "html", ""),
            (1, 0, "body", ""),
            (2, 1, "p", "Tent"),
        ]

    def test_dfs_enumeration_of_list(self):
        # hand-derived depth-first order: ul, li(a), li(b)
        tree = parse_html("<ul><li>a</li><li>b</li></ul>")
        assert [(n.id, n.parent_id, n.tag, n.text) for n in tree.nodes] == [
            (0, None, "ul", ""),
            (1, 0, "li", "a"),
            (2, 0, "li", "b"),
        ]

    def test_script_content_excluded(self):
        tree = parse_html("<div><script>x=1</script>Rod</div>")
        assert [(n.tag, n.text) for n in tree.nodes] == [("div", "Rod")]

    def test_never_emits_script_style_comment_nodes(self):
        html = """<div><p>keep</p><script>var x;</script>
        <style>p {color:red}</style><!-- note --></div>"""
        tree = parse_html(html)
        assert set(tags(tree)) == {"div", "p"}

    def test_whitespace_normalized(self):
        tree = parse_html("<p>  Rod \n\t tip  </p>")
        assert tree.nodes[0].text == "Rod tip"

    def test_unclosed_li_recovered_as_siblings(self):
        tree = parse_html("<ul><li>a<li>b</ul>")
        assert [(n.parent_id, n.tag, n.text) for n in tree.nodes] == [
            (None, "ul", ""), (0, "li", "a"), (0, "li", "b"),
        ]

    def test_unclosed_p_closed_by_block(self):
        tree = parse_html("<div><p>one<div>two</div></div>")
        # the inner div is a sibling of p, not its child
        p_node = next(n for n in tree.nodes if n.tag == "p")
        inner = next(n for n in tree.nodes if n.text == "two")
        assert p_node.text == "one"
        assert inner.parent_id == p_node.parent_id == 0

    def test_multiple_top_level_elements_get_wrapped(self):
        tree = parse_html("<div>a</div><div>b</div>")
        assert tree.nodes[0].tag == "html"
        assert [n.text for n in tree.nodes[1:]] == ["a", "b"]

    def test_empty_document_raises(self):
        with pytest.raises(EmptyDocumentError):
            parse_html("")
        with pytest.raises(EmptyDocumentError):
            parse_html("<div><span></span></div>")

    def test_tags_lowercased_and_valid(self):
        tree = parse_html("<DIV><P>x</P></DIV>")
        assert tags(tree) == ["div", "p"]
        validate_tree(tree)


class TestSimplifyTree:
    def test_single_child_chain_collapses_to_leaf(self):
        tree = parse_html("<html><body><div><p>Tent</p></div></body></html>")
        out = simplify_tree(tree)
        assert [(n.tag, n.text, n.parent_id) for n in out.nodes] == [("p", "Tent", None)]

    def test_empty_leaf_removed(self):
        # div keeps two textual children after the empty leaf goes away
        tree = parse_html("<div><p></p><p>Tent</p><p>Rod</p></div>")
        out = simplify_tree(tree)
        assert [(n.tag, n.text) for n in out.nodes] == [
            ("div", ""), ("p", "Tent"), ("p", "Rod"),
        ]

    def test_empty_leaf_removal_then_root_collapse(self):
        # after the empty leaf goes, div has one child and is deleted too
        tree = parse_html("<div><p></p><p>Tent</p></div>")
        out = simplify_tree(tree)
        assert [(n.tag, n.text) for n in out.nodes] == [("p", "Tent")]

    def test_header_subtree_removed(self):
        tree = parse_html(
            "<body><header><h1>site</h1></header><ul><li>a</li><li>b</li></ul></body>"
        )
        out = simplify_tree(tree)
        assert [(n.tag, n.text) for n in out.nodes] == [
            ("ul", ""), ("li", "a"), ("li", "b"),
        ]

    def test_removed_tag_list(self):
        html = (
            "<body><nav>x</nav><form>y</form><button>z</button>"
            "<noscript>w</noscript><iframe>v</iframe><footer>u</footer>"
            "<ul><li>a</li><li>b</li></ul></body>"
        )
        out = simplify_tree(parse_html(html))
        assert set(tags(out)) == {"ul", "li"}

    def test_everything_removed_raises(self):
        tree = parse_html("<body><footer>bye</footer><div>x</div></body>")
        stripped = DomTree(
            interest="",
            nodes=(DomNode(0, None, "div", ""), DomNode(1, 0, "footer", "bye")),
        )
        with pytest.raises(EmptyDocumentError):
            simplify_tree(stripped)

    def test_idempotent_on_random_trees(self, rng):
        for _ in range(25):
            tree = random_tree(rng, rng.randint(2, 80))
            once = simplify_tree(tree)
            twice = simplify_tree(once)
            assert once == twice
            validate_tree(once)

    def test_preserves_interest_and_url(self):
        tree = parse_html("<div><p>a</p><p>b</p></div>", interest="camping",
                          source_url="http://example.com")
        out = simplify_tree(tree)
        assert out.interest == "camping"
        assert out.source_url == "http://example.com"


def star_subtree_nodes(root_id, parent_id, n_extra, start_id):
    """A root plus n_extra leaf children, for building sized trees."""
    nodes = [DomNode(root_id, parent_id, "section", f"s{root_id}", 0)]
    for k in range(n_extra):
        nid = start_id + k
        nodes.append(DomNode(nid, root_id, "p", f"t{nid}", 0))
    return nodes


class TestSplitTree:
    def build_wide_tree(self, n_subtrees, subtree_size):
        nodes = [DomNode(0, None, "div", "root", 0)]
        nid = 1
        for _ in range(n_subtrees):
            root_id = nid
            nodes.extend(star_subtree_nodes(root_id, 0, subtree_size - 1, nid + 1))
            nid += subtree_size
        tree = DomTree(interest="camping", nodes=tuple(nodes))
        validate_tree(tree)
        return tree

    def test_under_limit_passthrough(self, rng):
        tree = random_tree(rng, 300)
        assert split_tree(tree, 512, 64) == [tree]

    def test_hand_derived_grouping(self):
        # 10 subtrees of 60 nodes each + root = 601; greedy packing puts 8
        # subtrees with the root (481) and the last two in a second piece (121)
        tree = self.build_wide_tree(10, 60)
        parts = split_tree(tree, 512, 64)
        assert [len(p) for p in parts] == [481, 121]
        for part in parts:
            validate_tree(part)

    def test_size_bounds_on_random_trees(self, rng):
        for _ in range(50):
            n = rng.randint(600, 3000)
            tree = random_tree(rng, n)
            parts = split_tree(tree, 512, 64)
            assert len(parts) >= 2
            for part in parts:
                validate_tree(part)
                assert len(part) <= 512
                assert len(part) >= 64

    def test_labels_kept_exactly_once(self, rng):
        for _ in range(10):
            tree = random_tree(rng, rng.randint(600, 1500))
            parts = split_tree(tree, 512, 64)
            labeled = [n.text for p in parts for n in p.nodes if n.label is not None]
            assert sorted(labeled) == sorted(n.text for n in tree.nodes)
            label_of = {n.text: n.label for n in tree.nodes}
            for p in parts:
                for n in p.nodes:
                    if n.label is not None:
                        assert n.label == label_of[n.text]

    def test_replicas_are_unlabeled_copies(self, rng):
        tree = random_tree(rng, 900)
        parts = split_tree(tree, 512, 64)
        texts = {n.text for n in tree.nodes}
        for p in parts:
            for n in p.nodes:
                assert n.text in texts

    def test_chain_too_deep_is_impossible(self):
        nodes = [DomNode(0, None, "div", "r", 0)]
        for i in range(1, 10):
            nodes.append(DomNode(i, i - 1, "div", f"c{i}", 0))
        tree = DomTree(interest="x", nodes=tuple(nodes))
        with pytest.raises(SplitImpossibleError):
            split_tree(tree, max_nodes=5, min_nodes=1)

    def test_interest_propagates(self):
        tree = self.build_wide_tree(10, 60)
        for part in split_tree(tree, 512, 64):
            assert part.interest == "camping"


class TestDatasetIO:
    def test_round_trip_identity(self, tmp_path, rng):
        trees = [random_tree(rng, rng.randint(2, 60), all_labeled=False)
                 for _ in range(12)]
        path = tmp_path / "data.jsonl"
        save_dataset(trees, path)
        assert load_dataset(path) == trees

    def test_three_node_round_trip(self, tmp_path):
        tree = parse_html("<ul><li>a</li><li>b</li></ul>", interest="camping")
        path = tmp_path / "one.jsonl"
        save_dataset([tree], path)
        assert load_dataset(path) == [tree]

    def test_parent_after_child_rejected(self, tmp_path):
        doc = {
            "version": 1, "interest": "x", "source_url": None,
            "nodes": [
                {"id": 0, "parent": None, "tag": "div", "text": "", "label": None},
                {"id": 1, "parent": 2, "tag": "p", "text": "a", "label": 0},
                {"id": 2, "parent": 0, "tag": "p", "text": "b", "label": 0},
            ],
        }
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(doc) + "\n")
        with pytest.raises(FormatError, match="line 1"):
            load_dataset(path)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "v9.jsonl"
        path.write_text('{"version": 9, "interest": "x", "nodes": []}\n')
        with pytest.raises(VersionError):
            load_dataset(path)

    def test_malformed_json_diagnostics(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text('{"version": 1, "interest": "x", "nodes": []}\n{oops\n')
        with pytest.raises(FormatError, match="line 1|line 2"):
            load_dataset(path)

    def test_non_dfs_ids_rejected(self, tmp_path):
        # topologically sorted but not in preorder position
        doc = {
            "version": 1, "interest": "x", "source_url": None,
            "nodes": [
                {"id": 0, "parent": None, "tag": "div", "text": "", "label": None},
                {"id": 1, "parent": 0, "tag": "ul", "text": "", "label": None},
                {"id": 2, "parent": 0, "tag": "p", "text": "a", "label": 0},
                {"id": 3, "parent": 1, "tag": "li", "text": "b", "label": 0},
            ],
        }
        path = tmp_path / "order.jsonl"
        path.write_text(json.dumps(doc) + "\n")
        with pytest.raises(FormatError, match="depth-first"):
            load_dataset(path)

    def test_unicode_round_trip(self, tmp_path):
        tree = DomTree(
            interest="café",
            nodes=(DomNode(0, None, "p", "señal → ok", 1),),
        )
        path = tmp_path / "uni.jsonl"
        save_dataset([tree], path)
        assert load_dataset(path) == [tree]


def test_webpt_corpus_statistics_if_present():
    import os

    path = os.environ.get("TREENC_WEBPT_PATH")
    if not path or not os.path.exists(path):
        pytest.skip("released corpus not available")
    trees = load_dataset(path)
    n_nodes = sum(len(t) for t in trees)
    n_pos = sum(1 for t in trees for n in t.nodes if n.label == 1)
    assert len(trees) == 453
    assert n_nodes == 94167
    assert n_pos == 12548
