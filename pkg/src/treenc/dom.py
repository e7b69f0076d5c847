"""Simplified DOM trees: parsing, pruning, splitting, and dataset files.

A tree is stored flat: one node per depth-first position, each node pointing
at its parent. Label ``None`` marks nodes excluded from supervision (for
example ancestor replicas created by :func:`split_tree`).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser

from .errors import (
    EmptyDocumentError,
    FormatError,
    SplitImpossibleError,
    VersionError,
)

DATASET_VERSION = 1

# Tags whose subtrees never carry product-type content.
REMOVED_TAGS = frozenset(
    {"header", "footer", "nav", "script", "style", "noscript", "iframe", "form", "button"}
)

# Elements that cannot have children (HTML void elements).
VOID_TAGS = frozenset(
    {"area", "base", "br", "col", "embed", "hr", "img", "input", "link",
     "meta", "param", "source", "track", "wbr"}
)

# Block-level tags that implicitly terminate an open <p>, as browsers do.
_P_CLOSERS = frozenset(
    {"address", "article", "aside", "blockquote", "div", "dl", "fieldset",
     "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header",
     "hr", "main", "nav", "ol", "p", "pre", "section", "table", "ul"}
)

# start tag -> open tags it implicitly closes when found on top of the stack
_IMPLIED_CLOSES = {
    "li": frozenset({"li"}),
    "dt": frozenset({"dt", "dd"}),
    "dd": frozenset({"dt", "dd"}),
    "tr": frozenset({"tr", "td", "th"}),
    "td": frozenset({"td", "th"}),
    "th": frozenset({"td", "th"}),
    "option": frozenset({"option"}),
}

_WS_RUN = re.compile(r"\s+")


def normalize_text(raw: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return _WS_RUN.sub(" ", raw).strip()


@dataclass(frozen=True)
class DomNode:
    id: int
    parent_id: int | None
    tag: str
    text: str
    label: int | None = None


@dataclass(frozen=True)
class DomTree:
    interest: str
    nodes: tuple[DomNode, ...]
    source_url: str | None = None

    def __len__(self) -> int:
        return len(self.nodes)


def children_map(tree: DomTree) -> list[list[int]]:
    """Child id lists per node, in document (id) order."""
    children: list[list[int]] = [[] for _ in tree.nodes]
    for node in tree.nodes:
        if node.parent_id is not None:
            children[node.parent_id].append(node.id)
    return children


def validate_tree(tree: DomTree) -> None:
    """Raise FormatError unless the tree satisfies every structural invariant."""
    nodes = tree.nodes
    if not nodes:
        raise FormatError("tree has no nodes")
    roots = 0
    for i, node in enumerate(nodes):
        if node.id != i:
            raise FormatError(f"node {i}: id field is {node.id}, expected {i}")
        if node.parent_id is None:
            roots += 1
        elif not 0 <= node.parent_id < node.id:
            raise FormatError(f"node {i}: parent {node.parent_id} does not precede it")
        if node.tag != node.tag.lower():
            raise FormatError(f"node {i}: tag {node.tag!r} is not lowercase")
        if node.label not in (0, 1, None):
            raise FormatError(f"node {i}: label {node.label!r} not in {{0, 1, null}}")
    if roots != 1:
        raise FormatError(f"tree has {roots} roots, expected exactly 1")
    # ids must equal depth-first positions, not merely be topologically sorted
    children = children_map(tree)
    order: list[int] = []
    stack = [0]
    while stack:
        nid = stack.pop()
        order.append(nid)
        stack.extend(reversed(children[nid]))
    for pos, nid in enumerate(order):
        if pos != nid:
            raise FormatError(f"node {nid}: not at its depth-first position {pos}")


class _ParsedElement:
    __slots__ = ("tag", "chunks", "children")

    def __init__(self, tag: str):
        self.tag = tag
        self.chunks: list[str] = []
        self.children: list[_ParsedElement] = []


class _TolerantParser(HTMLParser):
    """Builds an element tree, recovering unclosed tags the way browsers do."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.top: list[_ParsedElement] = []
        self.orphan_chunks: list[str] = []
        self.stack: list[_ParsedElement] = []
        self._skip_depth = 0  # inside script/style

    def _open(self, tag: str) -> None:
        if self.stack:
            closers = _IMPLIED_CLOSES.get(tag, frozenset())
            while self.stack and (
                self.stack[-1].tag in closers
                or (self.stack[-1].tag == "p" and tag in _P_CLOSERS)
            ):
                self.stack.pop()
        node = _ParsedElement(tag)
        if self.stack:
            self.stack[-1].children.append(node)
        else:
            self.top.append(node)
        if tag not in VOID_TAGS:
            self.stack.append(node)

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        if self._skip_depth:
            if tag in ("script", "style"):
                self._skip_depth += 1
            return
        if tag in ("script", "style"):
            self._skip_depth = 1
            return
        self._open(tag)

    def handle_startendtag(self, tag, attrs):
        tag = tag.lower()
        if self._skip_depth:
            return
        if tag in ("script", "style"):
            return
        node = _ParsedElement(tag)
        if self.stack:
            self.stack[-1].children.append(node)
        else:
            self.top.append(node)

    def handle_endtag(self, tag):
        tag = tag.lower()
        if self._skip_depth:
            if tag in ("script", "style"):
                self._skip_depth -= 1
            return
        if tag in VOID_TAGS:
            return
        if any(el.tag == tag for el in self.stack):
            while self.stack:
                if self.stack.pop().tag == tag:
                    break
        # stray end tag: ignored

    def handle_data(self, data):
        if self._skip_depth or not data:
            return
        if self.stack:
            self.stack[-1].chunks.append(data)
        else:
            self.orphan_chunks.append(data)

    # comments, doctype, processing instructions: dropped
    def handle_comment(self, data):
        pass

    def handle_decl(self, decl):
        pass

    def handle_pi(self, data):
        pass


def parse_html(html: str, interest: str = "", source_url: str | None = None) -> DomTree:
    """Parse a raw HTML document into an unlabeled DomTree.

    Element text is the whitespace-normalized concatenation of the element's
    direct text children. Script/style content and comments never produce
    nodes or text. Raises EmptyDocumentError when no element or no text
    content survives parsing.
    """
    parser = _TolerantParser()
    parser.feed(html)
    parser.close()

    if not parser.top:
        raise EmptyDocumentError("document contains no elements")
    if len(parser.top) == 1:
        root = parser.top[0]
        root.chunks.extend(parser.orphan_chunks)
    else:
        root = _ParsedElement("html")
        root.children = parser.top
        root.chunks = parser.orphan_chunks

    nodes: list[DomNode] = []
    stack: list[tuple[_ParsedElement, int | None]] = [(root, None)]
    while stack:
        el, parent_id = stack.pop()
        nid = len(nodes)
        nodes.append(DomNode(id=nid, parent_id=parent_id, tag=el.tag,
                             text=normalize_text("".join(el.chunks))))
        for child in reversed(el.children):
            stack.append((child, nid))

    if not any(n.text for n in nodes):
        raise EmptyDocumentError("document has no text content")
    return DomTree(interest=interest, nodes=tuple(nodes), source_url=source_url)


class _MutableNode:
    __slots__ = ("tag", "text", "label", "children")

    def __init__(self, tag, text, label):
        self.tag = tag
        self.text = text
        self.label = label
        self.children: list[_MutableNode] = []


def _to_mutable(tree: DomTree) -> _MutableNode:
    mnodes = [_MutableNode(n.tag, n.text, n.label) for n in tree.nodes]
    for n in tree.nodes:
        if n.parent_id is not None:
            mnodes[n.parent_id].children.append(mnodes[n.id])
    return mnodes[0]


def _from_mutable(root: _MutableNode, interest: str, source_url: str | None) -> DomTree:
    nodes: list[DomNode] = []
    stack: list[tuple[_MutableNode, int | None]] = [(root, None)]
    while stack:
        mn, parent_id = stack.pop()
        nid = len(nodes)
        nodes.append(DomNode(id=nid, parent_id=parent_id, tag=mn.tag,
                             text=mn.text, label=mn.label))
        for child in reversed(mn.children):
            stack.append((child, nid))
    return DomTree(interest=interest, nodes=tuple(nodes), source_url=source_url)


def simplify_tree(tree: DomTree) -> DomTree:
    """Prune boilerplate and collapse trivial structure.

    In order: (1) drop subtrees rooted at REMOVED_TAGS; (2) drop empty-text
    leaves until none remain; (3) delete every node that has exactly one
    child, attaching the child to the grandparent (a single-child root is
    replaced by its child), until none remain. Depth-first ids are
    reassigned. Raises EmptyDocumentError if nothing survives.
    """
    root = _to_mutable(tree)
    if root.tag in REMOVED_TAGS:
        raise EmptyDocumentError("root subtree removed by tag filter")

    def prune_tags(node: _MutableNode) -> None:
        stack = [node]
        while stack:
            cur = stack.pop()
            cur.children = [c for c in cur.children if c.tag not in REMOVED_TAGS]
            stack.extend(cur.children)

    prune_tags(root)

    # empty-text leaf removal to fixpoint; parents that become empty leaves go too
    changed = True
    while changed:
        changed = False
        stack = [root]
        while stack:
            cur = stack.pop()
            kept = [c for c in cur.children if c.children or c.text]
            if len(kept) != len(cur.children):
                cur.children = kept
                changed = True
            stack.extend(cur.children)
        if not root.children and not root.text:
            raise EmptyDocumentError("simplification removed every node")

    # single-child collapse to fixpoint
    while len(root.children) == 1:
        root = root.children[0]
    stack = [root]
    while stack:
        cur = stack.pop()
        new_children = []
        for child in cur.children:
            while len(child.children) == 1:
                child = child.children[0]
            new_children.append(child)
        cur.children = new_children
        stack.extend(cur.children)

    return _from_mutable(root, tree.interest, tree.source_url)


@dataclass
class _Piece:
    """One output tree under construction: replica spine + whole subtrees."""

    spine: list[int] = field(default_factory=list)
    units: list[int] = field(default_factory=list)
    size: int = 0


def _spine_extension(piece: _Piece, unit: int, parent_of) -> list[int]:
    """Replica nodes needed so the unit's parent chain reaches the piece."""
    have = set(piece.spine)
    ext = []
    cur = parent_of[unit]
    while cur is not None and cur not in have:
        ext.append(cur)
        cur = parent_of[cur]
    ext.reverse()
    return ext


def _absorb(target: _Piece, source: _Piece, sizes, parent_of) -> None:
    have = set(target.spine)
    for nid in source.spine:
        if nid not in have:
            target.spine.append(nid)
            have.add(nid)
            target.size += 1
    for unit in source.units:
        target.units.append(unit)
        target.size += sizes[unit]


def _merged_size(target: _Piece, source: _Piece, sizes) -> int:
    extra = sum(1 for nid in source.spine if nid not in target.spine)
    return target.size + extra + sum(sizes[u] for u in source.units)


def _move_units(piece: _Piece, donor: _Piece, sizes, parent_of,
                max_nodes: int, min_nodes: int) -> bool:
    """Pull donor subtrees into an under-minimum piece where budgets allow."""
    changed = False
    for unit in reversed(list(donor.units)):
        if piece.size >= min_nodes:
            break
        ext = _spine_extension(piece, unit, parent_of)
        new_size = piece.size + len(ext) + sizes[unit]
        if new_size > max_nodes or donor.size - sizes[unit] < min_nodes:
            continue
        donor.units.remove(unit)
        donor.size -= sizes[unit]
        piece.spine.extend(ext)
        piece.units.append(unit)
        piece.size = new_size
        changed = True
    return changed


def _decompose_largest(donor: _Piece, sizes, children) -> bool:
    """Replace the donor's largest non-leaf unit by a replica plus its child
    subtrees; size-neutral, but transfers become finer grained."""
    decomposable = [u for u in donor.units if children[u]]
    if not decomposable:
        return False
    big = max(decomposable, key=lambda u: sizes[u])
    donor.units.remove(big)
    donor.spine.append(big)
    donor.units.extend(children[big])
    return True


def _repair_pieces(pieces: list[_Piece], sizes, parent_of, children,
                   max_nodes: int, min_nodes: int) -> list[_Piece]:
    """Eliminate under-minimum pieces: merge whole pieces into a neighbor
    when the budget allows, otherwise pull subtrees over one at a time,
    extending the replica spine as needed. All pieces share the original
    root, so any adjacent transfer stays structurally valid."""
    rounds = 0
    while len(pieces) > 1 and rounds < 10 * len(pieces):
        rounds += 1
        stuck = next((i for i, p in enumerate(pieces) if p.size < min_nodes), None)
        if stuck is None:
            break
        piece = pieces[stuck]
        neighbors = [j for j in (stuck - 1, stuck + 1) if 0 <= j < len(pieces)]
        merged = False
        for j in neighbors:
            if _merged_size(pieces[j], piece, sizes) <= max_nodes:
                _absorb(pieces[j], piece, sizes, parent_of)
                pieces.pop(stuck)
                merged = True
                break
        if merged:
            continue
        fixed = False
        for j in neighbors:
            donor = pieces[j]
            while piece.size < min_nodes:
                moved = _move_units(piece, donor, sizes, parent_of,
                                    max_nodes, min_nodes)
                if piece.size >= min_nodes:
                    break
                if not moved and not _decompose_largest(donor, sizes, children):
                    break
            if piece.size >= min_nodes:
                fixed = True
                break
        if not fixed:
            break
    return pieces


def split_tree(tree: DomTree, max_nodes: int = 512, min_nodes: int = 64) -> list[DomTree]:
    """Split an oversized tree into pieces of at most ``max_nodes`` nodes.

    Child subtrees are grouped greedily in depth-first order; each piece
    replicates the ancestor path from the original root so every node keeps
    its structural context. A subtree too large for one piece is split
    recursively on its own children. A trailing piece smaller than
    ``min_nodes`` is merged into the previously emitted piece when the node
    budget allows, otherwise trailing subtrees are rebalanced into it. Each
    original node keeps its label in exactly one piece; other replicas are
    unlabeled.
    """
    if max_nodes < min_nodes or min_nodes < 1:
        raise ValueError("require max_nodes >= min_nodes >= 1")
    n = len(tree.nodes)
    if n <= max_nodes:
        return [tree]

    children = children_map(tree)
    sizes = [1] * n
    for nid in range(n - 1, 0, -1):
        sizes[tree.nodes[nid].parent_id] += sizes[nid]

    pieces: list[_Piece] = []

    def walk(spine: list[int], child_ids: list[int]) -> None:
        if len(spine) >= max_nodes:
            raise SplitImpossibleError(
                f"ancestor path of {len(spine)} nodes leaves no budget under {max_nodes}"
            )
        budget = max_nodes - len(spine)
        group: list[int] = []
        group_size = 0

        def flush() -> None:
            nonlocal group, group_size
            if group:
                pieces.append(_Piece(list(spine), group, len(spine) + group_size))
                group, group_size = [], 0

        for cid in child_ids:
            if sizes[cid] > budget - 1 and children[cid]:
                flush()
                walk(spine + [cid], children[cid])
            elif sizes[cid] > budget:
                raise SplitImpossibleError(
                    f"leaf group member of size {sizes[cid]} exceeds budget {budget}"
                )
            elif group_size + sizes[cid] > budget:
                flush()
                group, group_size = [cid], sizes[cid]
            else:
                group.append(cid)
                group_size += sizes[cid]
        flush()

    walk([0], children[0])
    parent_of = [tree.nodes[i].parent_id for i in range(n)]
    pieces = _repair_pieces(pieces, sizes, parent_of, children, max_nodes, min_nodes)

    labeled_once: set[int] = set()

    def materialize(piece: _Piece) -> DomTree:
        spine_set = set(piece.spine)
        unit_set = set(piece.units)
        sub_children: dict[int, list[int]] = {
            nid: [c for c in children[nid] if c in spine_set or c in unit_set]
            for nid in piece.spine
        }
        nodes: list[DomNode] = []
        id_map: dict[int, int] = {}
        stack: list[tuple[int, bool]] = [(0, False)]  # (original id, full subtree)
        while stack:
            oid, full = stack.pop()
            node = tree.nodes[oid]
            nid = len(nodes)
            id_map[oid] = nid
            parent = None if node.parent_id is None else id_map[node.parent_id]
            label = node.label if oid not in labeled_once else None
            labeled_once.add(oid)
            nodes.append(replace(node, id=nid, parent_id=parent, label=label))
            kids = children[oid] if full else sub_children[oid]
            for c in reversed(kids):
                stack.append((c, full or c in unit_set))
        return DomTree(interest=tree.interest, nodes=tuple(nodes),
                       source_url=tree.source_url)

    return [materialize(p) for p in pieces]


def _node_to_json(node: DomNode) -> dict:
    return {"id": node.id, "parent": node.parent_id, "tag": node.tag,
            "text": node.text, "label": node.label}


def save_dataset(trees: list[DomTree], path) -> None:
    """Write trees as newline-delimited JSON, one document per tree."""
    with open(path, "w", encoding="utf-8") as fh:
        for tree in trees:
            doc = {
                "version": DATASET_VERSION,
                "interest": tree.interest,
                "source_url": tree.source_url,
                "nodes": [_node_to_json(n) for n in tree.nodes],
            }
            fh.write(json.dumps(doc, ensure_ascii=False) + "\n")


def load_dataset(path) -> list[DomTree]:
    """Read a dataset file, validating schema and tree invariants per line."""
    trees: list[DomTree] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise FormatError(f"line {lineno}: expected a JSON object")
            version = doc.get("version")
            if version != DATASET_VERSION:
                raise VersionError(f"line {lineno}: unknown schema version {version!r}")
            try:
                raw_nodes = doc["nodes"]
                nodes = tuple(
                    DomNode(id=rn["id"], parent_id=rn["parent"], tag=rn["tag"],
                            text=rn["text"], label=rn["label"])
                    for rn in raw_nodes
                )
                tree = DomTree(interest=doc["interest"], nodes=nodes,
                               source_url=doc.get("source_url"))
            except (KeyError, TypeError) as exc:
                raise FormatError(f"line {lineno}: missing or malformed field: {exc}") from exc
            try:
                validate_tree(tree)
            except FormatError as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
            trees.append(tree)
    return trees
